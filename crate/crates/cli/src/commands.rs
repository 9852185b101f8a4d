//! Drivers behind the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use omniview::dataset::{Dataset, DepthSource};
use omniview::geometry::{ImageDims, Pose};
use omniview::metrics::{evaluate as evaluate_metrics, MetricReport};
use omniview::panorama::{
    load_manifest, quantile, read_depth_pfm_expect, read_rgb_png, save_manifest, write_depth_pfm,
    write_rgb_png, PixelMask, RgbPanorama, SceneManifest,
};
use omniview::refine::{refine_all, RefineInput, RefinementConfig};
use omniview::scene::{preset, render_grid, GridSpec};
use omniview::stereo::{estimate_dense_depth, AdCensusParams, DepthHypotheses, StereoView};
use omniview::synthesis::SynthesisConfig;
use serde::Serialize;

use crate::protocol::PoseRequest;
use crate::render::{Rendered, Renderer};

/// A required input file does not exist.
#[derive(Debug, thiserror::Error)]
#[error("{}: no such file", .0.display())]
pub struct MissingInput(pub PathBuf);

/// Loads a manifest, reporting a missing file as [`MissingInput`].
pub fn open_manifest(path: &Path) -> Result<SceneManifest> {
    if !path.exists() {
        return Err(MissingInput(path.to_path_buf()).into());
    }
    load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))
}

/// Parses `x,y,z[,yaw,pitch,roll]` (meters, radians).
pub fn parse_pose(s: &str) -> Result<PoseRequest> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| anyhow!("invalid pose component '{p}': {e}")))
        .collect::<Result<_>>()?;
    if v.len() != 3 && v.len() != 6 {
        bail!("pose needs 3 or 6 comma-separated numbers, got {}", v.len());
    }
    let mut req = PoseRequest::at([v[0], v[1], v[2]]);
    if v.len() == 6 {
        req.yaw = v[3];
        req.pitch = v[4];
        req.roll = v[5];
    }
    Ok(req)
}

pub fn make_fixture(scene: &str, out: &Path, width: usize, seed: u64, hold_out: bool) -> Result<SceneManifest> {
    let spec = preset(scene).ok_or_else(|| anyhow!("unknown scene '{scene}' (available: room)"))?;
    let mut grid = GridSpec::new(ImageDims::from_width(width)?);
    grid.seed = seed;
    grid.hold_out_center = hold_out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(render_grid(&spec, &grid, out)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct DenseSidecar {
    pub frame: String,
    pub hypotheses: usize,
    pub min_depth: f64,
    pub max_depth: f64,
    pub neighbors: usize,
    pub census_width: usize,
    pub census_height: usize,
    pub lambda_ad: f32,
    pub lambda_census: f32,
    pub guided_radius: usize,
    pub guided_epsilon: f64,
}

/// Hypothesis range from the sparse depth of the input frames: the 1st and
/// 99th percentiles widened by 25%.
pub fn range_from_sparse(manifest: &SceneManifest) -> Result<(f64, f64)> {
    let mut values = Vec::new();
    for f in manifest.frames.iter().filter(|f| !f.held_out) {
        if let Some(p) = &f.sparse_depth_path {
            let d = omniview::panorama::read_depth_pfm(manifest.resolve(p))?;
            values.extend(d.depths().iter().filter(|v| v.is_finite()).map(|v| *v as f64));
        }
    }
    let (Some(lo), Some(hi)) = (quantile(&values, 0.01), quantile(&values, 0.99)) else {
        bail!("no sparse depth to derive a hypothesis range from; pass --min-depth and --max-depth");
    };
    Ok((lo / 1.25, hi * 1.25))
}

/// Sweep-stereo dense depth for every input frame; updates the manifest.
pub fn estimate_depth(
    manifest_path: &Path,
    hypotheses: usize,
    range: Option<(f64, f64)>,
    neighbors: usize,
) -> Result<SceneManifest> {
    let mut manifest = open_manifest(manifest_path)?;
    let (dmin, dmax) = match range {
        Some(r) => r,
        None => range_from_sparse(&manifest)?,
    };
    let hyp = DepthHypotheses::uniform_inverse(dmin, dmax, hypotheses)?;
    let params = AdCensusParams::default();
    let inputs: Vec<usize> = (0..manifest.frames.len()).filter(|&k| !manifest.frames[k].held_out).collect();
    let images = inputs
        .iter()
        .map(|&k| read_rgb_png(manifest.resolve(&manifest.frames[k].rgb_path)))
        .collect::<omniview::Result<Vec<RgbPanorama>>>()?;
    let poses: Vec<Pose> = inputs.iter().map(|&k| manifest.frames[k].pose).collect();
    let views: Vec<StereoView> = images
        .iter()
        .zip(&poses)
        .map(|(rgb, pose)| StereoView { rgb, pose })
        .collect();
    for (v, &k) in inputs.iter().enumerate() {
        let id = manifest.frames[k].id.clone();
        log::info!("estimating dense depth for {id}");
        let depth = estimate_dense_depth(&views, v, neighbors, &hyp, &params)?;
        let rel = PathBuf::from(format!("dense/{id}.pfm"));
        write_depth_pfm(&depth, manifest.resolve(&rel))?;
        let sidecar = DenseSidecar {
            frame: id.clone(),
            hypotheses,
            min_depth: dmin,
            max_depth: dmax,
            neighbors,
            census_width: params.census_width,
            census_height: params.census_height,
            lambda_ad: params.lambda_ad,
            lambda_census: params.lambda_census,
            guided_radius: params.guided_radius,
            guided_epsilon: params.guided_epsilon,
        };
        let side = manifest.resolve(Path::new(&format!("dense/{id}.json")));
        fs::write(&side, serde_json::to_string_pretty(&sidecar)? + "\n")
            .with_context(|| format!("writing {}", side.display()))?;
        manifest.frames[k].dense_depth_path = Some(rel);
    }
    save_manifest(&manifest, manifest_path)?;
    Ok(manifest)
}

#[derive(Debug, Serialize)]
struct RefineReport<'a> {
    config: &'a RefinementConfig,
    frames: Vec<&'a str>,
    iterations: &'a [omniview::refine::IterationReport],
}

/// Multi-view refinement of the input frames; writes `refined/<id>.pfm` and
/// `refined/report.json` and updates the manifest.
pub fn refine(manifest_path: &Path, cfg: &RefinementConfig) -> Result<SceneManifest> {
    let mut manifest = open_manifest(manifest_path)?;
    let inputs: Vec<usize> = (0..manifest.frames.len()).filter(|&k| !manifest.frames[k].held_out).collect();
    let mut rin = Vec::with_capacity(inputs.len());
    for &k in &inputs {
        let f = &manifest.frames[k];
        let dims = read_rgb_png(manifest.resolve(&f.rgb_path))?.dims();
        let load = |p: &Option<PathBuf>| -> Result<_> {
            Ok(match p {
                Some(p) => Some(read_depth_pfm_expect(manifest.resolve(p), dims)?),
                None => None,
            })
        };
        rin.push(RefineInput {
            pose: f.pose,
            sparse: load(&f.sparse_depth_path)?,
            dense: load(&f.dense_depth_path)?,
        });
    }
    let out = refine_all(&rin, cfg)?;
    let mut ids = Vec::new();
    for (depth, &k) in out.depths.iter().zip(&inputs) {
        let id = manifest.frames[k].id.clone();
        let rel = PathBuf::from(format!("refined/{id}.pfm"));
        write_depth_pfm(depth, manifest.resolve(&rel))?;
        manifest.frames[k].refined_depth_path = Some(rel);
        ids.push(id);
    }
    let report = RefineReport {
        config: cfg,
        frames: ids.iter().map(String::as_str).collect(),
        iterations: &out.iterations,
    };
    let path = manifest.resolve(Path::new("refined/report.json"));
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    save_manifest(&manifest, manifest_path)?;
    Ok(manifest)
}

pub fn load_renderer(
    manifest_path: &Path,
    source: DepthSource,
    cfg: SynthesisConfig,
    max_width: usize,
) -> Result<Renderer> {
    let manifest = open_manifest(manifest_path)?;
    let dataset = Dataset::load(&manifest, source)?;
    Ok(Renderer::new(dataset, cfg, max_width))
}

/// Writes a mask as a black and white PNG (white = selected).
pub fn write_mask_png(mask: &PixelMask, path: &Path) -> Result<()> {
    let dims = mask.dims();
    let img = RgbPanorama::new(
        dims,
        mask.bits().iter().map(|b| if *b { [1.0; 3] } else { [0.0; 3] }).collect(),
    )?;
    Ok(write_rgb_png(&img, path)?)
}

pub fn read_mask_png(path: &Path) -> Result<PixelMask> {
    let img = read_rgb_png(path)?;
    let bits = img.pixels().iter().map(|p| omniview::panorama::luma(p) > 0.5).collect();
    Ok(PixelMask::new(img.dims(), bits)?)
}

pub struct SynthesizeOutputs<'a> {
    pub image: &'a Path,
    pub depth: Option<&'a Path>,
    /// Valid-pixel mask (white where the output is not a hole).
    pub mask: Option<&'a Path>,
}

pub fn synthesize(renderer: &Renderer, req: &PoseRequest, out: &SynthesizeOutputs<'_>) -> Result<Rendered> {
    let r = renderer.render(req)?;
    if let Some(parent) = out.image.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out.image, &r.png).with_context(|| format!("writing {}", out.image.display()))?;
    if let Some(p) = out.depth {
        write_depth_pfm(&r.output.depth, p)?;
    }
    if let Some(p) = out.mask {
        write_mask_png(&r.output.holes.not(), p)?;
    }
    Ok(r)
}

pub fn evaluate(pred: &Path, truth: &Path, mask: Option<&Path>, max_latitude_deg: f64) -> Result<MetricReport> {
    for p in [Some(pred), Some(truth), mask].into_iter().flatten() {
        if !p.exists() {
            return Err(MissingInput(p.to_path_buf()).into());
        }
    }
    let a = read_rgb_png(pred)?;
    let b = read_rgb_png(truth)?;
    let mut m = PixelMask::latitude_band(a.dims(), max_latitude_deg.to_radians());
    let mut description = format!("|latitude| <= {max_latitude_deg} deg");
    if let Some(p) = mask {
        let user = read_mask_png(p)?;
        if user.dims() != a.dims() {
            bail!("mask is {}, images are {}", user.dims(), a.dims());
        }
        m = m.and(&user);
        description.push_str(&format!(" and {}", p.display()));
    }
    Ok(evaluate_metrics(&a, &b, Some(&m), description)?)
}
