//! JSON scene manifest.
//!
//! ```json
//! {
//!   "world_unit": 1.0,
//!   "frames": [
//!     {
//!       "id": "f00",
//!       "rgb": "rgb/f00.png",
//!       "sparse_depth": "sparse/f00.pfm",
//!       "dense_depth": "dense/f00.pfm",
//!       "refined_depth": "refined/f00.pfm",
//!       "position": [0.0, 0.0, 0.0],
//!       "rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1]
//!     }
//!   ]
//! }
//! ```
//!
//! Depth entries, `rotation` (identity), `world_unit` (1.0), `blur_score`,
//! `truth_depth` and `held_out` (false) are optional. Relative paths resolve
//! against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

const IDENTITY: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureFrame {
    pub id: String,
    pub rgb_path: PathBuf,
    pub sparse_depth_path: Option<PathBuf>,
    pub dense_depth_path: Option<PathBuf>,
    pub refined_depth_path: Option<PathBuf>,
    /// Ground-truth depth, only present for synthetic fixtures.
    pub truth_depth_path: Option<PathBuf>,
    pub pose: Pose,
    pub blur_score: Option<f64>,
    /// Frame reserved for evaluation rather than used as a synthesis input.
    pub held_out: bool,
}

impl CaptureFrame {
    pub fn new(id: impl Into<String>, rgb_path: impl Into<PathBuf>, pose: Pose) -> Self {
        Self {
            id: id.into(),
            rgb_path: rgb_path.into(),
            sparse_depth_path: None,
            dense_depth_path: None,
            refined_depth_path: None,
            truth_depth_path: None,
            pose,
            blur_score: None,
            held_out: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneManifest {
    pub frames: Vec<CaptureFrame>,
    pub world_unit: f64,
    base_dir: PathBuf,
}

impl SceneManifest {
    pub fn new(frames: Vec<CaptureFrame>, world_unit: f64) -> Result<Self> {
        let m = Self {
            frames,
            world_unit,
            base_dir: PathBuf::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Resolves a manifest-relative path.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn frame_index(&self, id: &str) -> Option<usize> {
        self.frames.iter().position(|f| f.id == id)
    }

    /// Manifest restricted to the frames not flagged as held out.
    pub fn inputs_only(&self) -> SceneManifest {
        SceneManifest {
            frames: self.frames.iter().filter(|f| !f.held_out).cloned().collect(),
            world_unit: self.world_unit,
            base_dir: self.base_dir.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Manifest("manifest contains no frames".into()));
        }
        if !(self.world_unit.is_finite() && self.world_unit > 0.0) {
            return Err(Error::Manifest(format!(
                "world_unit must be positive, got {}",
                self.world_unit
            )));
        }
        let mut seen = HashSet::new();
        for f in &self.frames {
            if !seen.insert(f.id.as_str()) {
                return Err(Error::DuplicateFrameId(f.id.clone()));
            }
            if f.rgb_path.as_os_str().is_empty() {
                return Err(Error::Manifest(format!("frame '{}' has no rgb path", f.id)));
            }
            if let Some(b) = f.blur_score {
                if !(b.is_finite() && b >= 0.0) {
                    return Err(Error::Manifest(format!(
                        "frame '{}' has invalid blur_score {b}",
                        f.id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRecord {
    frames: Vec<FrameRecord>,
    #[serde(default = "default_world_unit")]
    world_unit: f64,
}

fn default_world_unit() -> f64 {
    1.0
}

fn default_rotation() -> [f64; 9] {
    IDENTITY
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    id: String,
    rgb: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sparse_depth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dense_depth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    refined_depth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth_depth: Option<PathBuf>,
    position: [f64; 3],
    #[serde(default = "default_rotation")]
    rotation: [f64; 9],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blur_score: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    held_out: bool,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<SceneManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let record: ManifestRecord =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let frames = record
        .frames
        .into_iter()
        .map(|f| {
            let pose = Pose::from_row_major(f.position, f.rotation).map_err(|e| {
                Error::Manifest(format!("{}: frame '{}': {e}", path.display(), f.id))
            })?;
            Ok(CaptureFrame {
                id: f.id,
                rgb_path: f.rgb,
                sparse_depth_path: f.sparse_depth,
                dense_depth_path: f.dense_depth,
                refined_depth_path: f.refined_depth,
                truth_depth_path: f.truth_depth,
                pose,
                blur_score: f.blur_score,
                held_out: f.held_out,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(SceneManifest::new(frames, record.world_unit)?.with_base_dir(base))
}

/// Serializes the manifest to canonical pretty-printed JSON.
pub fn manifest_to_json(m: &SceneManifest) -> String {
    let record = ManifestRecord {
        world_unit: m.world_unit,
        frames: m
            .frames
            .iter()
            .map(|f| FrameRecord {
                id: f.id.clone(),
                rgb: f.rgb_path.clone(),
                sparse_depth: f.sparse_depth_path.clone(),
                dense_depth: f.dense_depth_path.clone(),
                refined_depth: f.refined_depth_path.clone(),
                truth_depth: f.truth_depth_path.clone(),
                position: [f.pose.position().x, f.pose.position().y, f.pose.position().z],
                rotation: f.pose.rotation_row_major(),
                blur_score: f.blur_score,
                held_out: f.held_out,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&record).expect("manifest is always serializable");
    s.push('\n');
    s
}

pub fn save_manifest(m: &SceneManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    m.validate()?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, manifest_to_json(m)).map_err(|e| Error::io(path, e))
}
