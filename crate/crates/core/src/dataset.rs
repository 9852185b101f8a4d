//! In-memory snapshot of a scene manifest for synthesis.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ImageDims;
use crate::panorama::{read_depth_pfm_expect, read_rgb_png, CaptureFrame, SceneManifest};
use crate::synthesis::SynthesisFrame;

/// Which depth maps of the manifest drive synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSource {
    #[default]
    Refined,
    Dense,
    /// Ground truth of synthetic fixtures.
    Truth,
}

impl DepthSource {
    fn path<'a>(&self, f: &'a CaptureFrame) -> Option<&'a std::path::Path> {
        match self {
            DepthSource::Refined => f.refined_depth_path.as_deref(),
            DepthSource::Dense => f.dense_depth_path.as_deref(),
            DepthSource::Truth => f.truth_depth_path.as_deref(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DepthSource::Refined => "refined",
            DepthSource::Dense => "dense",
            DepthSource::Truth => "truth",
        }
    }
}

impl FromStr for DepthSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "refined" => Ok(DepthSource::Refined),
            "dense" => Ok(DepthSource::Dense),
            "truth" => Ok(DepthSource::Truth),
            other => Err(Error::Config(format!(
                "unknown depth source '{other}' (expected refined, dense or truth)"
            ))),
        }
    }
}

/// Immutable synthesis inputs loaded from a manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub frames: Vec<SynthesisFrame>,
    pub world_unit: f64,
    pub source: DepthSource,
}

impl Dataset {
    /// Loads every frame not marked as held out, with the chosen depth.
    pub fn load(manifest: &SceneManifest, source: DepthSource) -> Result<Self> {
        let mut ids = Vec::new();
        let mut frames = Vec::new();
        for f in manifest.frames.iter().filter(|f| !f.held_out) {
            let depth_path = source.path(f).ok_or_else(|| {
                Error::MissingDepth(format!("frame '{}' has no {} depth", f.id, source.name()))
            })?;
            let rgb = read_rgb_png(manifest.resolve(&f.rgb_path))?;
            let depth = read_depth_pfm_expect(manifest.resolve(depth_path), rgb.dims())?;
            ids.push(f.id.clone());
            frames.push(SynthesisFrame {
                rgb,
                depth,
                pose: f.pose,
            });
        }
        if frames.is_empty() {
            return Err(Error::Manifest("every frame is held out".into()));
        }
        Ok(Self {
            ids,
            frames,
            world_unit: manifest.world_unit,
            source,
        })
    }

    /// Resolution of the first frame.
    pub fn dims(&self) -> ImageDims {
        self.frames[0].rgb.dims()
    }

    /// Approximate bytes held by the rasters.
    pub fn memory_bytes(&self) -> usize {
        self.frames
            .iter()
            .map(|f| f.rgb.dims().pixel_count() * (3 * 4 + 4))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::panorama::{save_manifest, write_depth_pfm, write_rgb_png, DepthPanorama, RgbPanorama};

    #[test]
    fn loads_inputs_and_skips_held_out_frames() {
        let dir = tempfile::tempdir().unwrap();
        let dims = ImageDims::new(16, 8).unwrap();
        write_rgb_png(&RgbPanorama::filled(dims, [0.2, 0.4, 0.6]), dir.path().join("a.png")).unwrap();
        write_depth_pfm(&DepthPanorama::filled(dims, 2.0), dir.path().join("a.pfm")).unwrap();
        let mut a = CaptureFrame::new("a", "a.png", Pose::default());
        a.refined_depth_path = Some("a.pfm".into());
        let mut b = CaptureFrame::new("b", "b.png", Pose::default());
        b.held_out = true;
        let path = dir.path().join("manifest.json");
        save_manifest(&SceneManifest::new(vec![a, b], 1.0).unwrap(), &path).unwrap();
        let m = crate::panorama::load_manifest(&path).unwrap();
        let ds = Dataset::load(&m, DepthSource::Refined).unwrap();
        assert_eq!(ds.ids, ["a"]);
        assert_eq!(ds.dims(), dims);
        assert_eq!(ds.frames[0].depth.get(3, 3), Some(2.0));
        assert!(matches!(
            Dataset::load(&m, DepthSource::Truth),
            Err(Error::MissingDepth(_))
        ));
    }

    #[test]
    fn parses_source_names() {
        for s in [DepthSource::Refined, DepthSource::Dense, DepthSource::Truth] {
            assert_eq!(s.name().parse::<DepthSource>().unwrap(), s);
        }
        assert!("sparse".parse::<DepthSource>().is_err());
    }
}
