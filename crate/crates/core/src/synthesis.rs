//! Novel-view synthesis by backwards warping and weighted blending.
//!
//! A depth panorama is first built at the target position (forward
//! projection of nearby depth maps, hole-filling closing, raymarch
//! correction). Each target pixel is then lifted to a 3D point with that
//! depth and looked up in the nearest captures. The per-capture colors are
//! blended with the weight `W = w_d * w_cam * w_ang`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImageDims, Pose, RayGrid, Transfer, Vec3};
use crate::panorama::{k_nearest, DepthPanorama, PixelMask, Rgb, RgbPanorama};
use crate::refine::{close_depth, forward_project, raymarch_correct, DepthView};

/// Distance below which the camera weight saturates.
pub const CAMERA_EPSILON: f64 = 1e-6;

/// Which factors of the blend weight are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// Plain average of all gathered samples.
    Uniform,
    DepthOnly,
    DepthCamera,
    #[default]
    Full,
}

impl WeightingMode {
    pub fn uses_depth(self) -> bool {
        !matches!(self, WeightingMode::Uniform)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Number of nearest captures blended per pixel.
    pub k: usize,
    /// Camera weight scale.
    pub s: f64,
    /// Largest relative depth disagreement for a sample to count as suitable.
    pub suitability_tau: f64,
    /// Extra captures searched when none of the `k` nearest is suitable;
    /// `None` searches all of them.
    pub fallback_max: Option<usize>,
    pub closing_radius: usize,
    /// Relative raymarch step for the target depth correction.
    pub r: f64,
    pub k_rm: usize,
    pub k_fp: usize,
    pub max_march_steps: usize,
    pub hole_color: Rgb,
    pub weighting: WeightingMode,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            k: 4,
            s: 10.0,
            suitability_tau: 0.05,
            fallback_max: None,
            closing_radius: 2,
            r: 0.005,
            k_rm: 4,
            k_fp: 6,
            max_march_steps: 2000,
            hole_color: [0.0; 3],
            weighting: WeightingMode::Full,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k_fp == 0 {
            return Err(Error::Config("k and k_fp must be at least 1".into()));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::Config(format!("s must be positive, got {}", self.s)));
        }
        if !(self.suitability_tau > 0.0 && self.suitability_tau.is_finite()) {
            return Err(Error::Config(format!(
                "suitability_tau must be positive, got {}",
                self.suitability_tau
            )));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::Config(format!("r must be positive, got {}", self.r)));
        }
        Ok(())
    }
}

/// `(|d_rep - d| + 1)^-1`.
#[inline]
pub fn weight_depth(d_rep: f64, d: f64) -> f64 {
    1.0 / ((d_rep - d).abs() + 1.0)
}

/// `s / |t|`, saturating at `s / CAMERA_EPSILON`.
#[inline]
pub fn weight_camera(t: &Vec3, s: f64) -> f64 {
    s / t.norm().max(CAMERA_EPSILON)
}

/// `pi - angle(t, v)`; `pi` when `t` is zero.
#[inline]
pub fn weight_angle(t: &Vec3, v: &Vec3) -> f64 {
    let denom = t.norm() * v.norm();
    if denom == 0.0 {
        return PI;
    }
    PI - (t.dot(v) / denom).clamp(-1.0, 1.0).acos()
}

/// A posed capture with its depth, as used by synthesis.
#[derive(Debug, Clone)]
pub struct SynthesisFrame {
    pub rgb: RgbPanorama,
    pub depth: DepthPanorama,
    pub pose: Pose,
}

/// One capture's contribution to a target pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendSample {
    pub color: Rgb,
    pub w_d: f64,
    pub w_cam: f64,
    pub w_ang: f64,
    /// Blend weight under the active weighting mode.
    pub w: f64,
    pub frame: usize,
    pub suitable: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gathered {
    pub samples: Vec<BlendSample>,
    /// Every permitted capture was tried without finding a suitable sample.
    pub exhausted: bool,
}

/// Weighted mean of the sample colors, restricted to suitable samples when
/// any exist. `None` when the total weight is zero.
pub fn blend(samples: &[BlendSample]) -> Option<Rgb> {
    let any_suitable = samples.iter().any(|s| s.suitable);
    let mut acc = [0.0f64; 3];
    let mut total = 0.0;
    for s in samples.iter().filter(|s| s.suitable || !any_suitable) {
        total += s.w;
        for c in 0..3 {
            acc[c] += s.w * s.color[c] as f64;
        }
    }
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    Some(acc.map(|v| (v / total) as f32))
}

struct Source<'a> {
    frame: &'a SynthesisFrame,
    index: usize,
    transfer: Transfer,
    /// Target position minus capture position, in world units.
    t: Vec3,
    w_cam: f64,
}

/// Per-target state shared by every pixel.
struct Context<'a> {
    target: Pose,
    world_unit: f64,
    cfg: SynthesisConfig,
    /// Captures in ascending distance from the target.
    sources: Vec<Source<'a>>,
}

impl<'a> Context<'a> {
    fn new(target: &Pose, frames: &'a [SynthesisFrame], world_unit: f64, cfg: &SynthesisConfig) -> Self {
        let positions: Vec<Vec3> = frames.iter().map(|f| *f.pose.position()).collect();
        let sources = k_nearest(&positions, target.position(), frames.len())
            .into_iter()
            .map(|n| {
                let frame = &frames[n.index];
                let t = target.position() - frame.pose.position();
                Source {
                    frame,
                    index: n.index,
                    transfer: Transfer::between(target, &frame.pose),
                    t,
                    w_cam: weight_camera(&(t * world_unit), cfg.s),
                }
            })
            .collect();
        Self {
            target: *target,
            world_unit,
            cfg: *cfg,
            sources,
        }
    }

    fn sample(&self, src: &Source<'_>, dir: &Vec3, depth: f64) -> Option<BlendSample> {
        let dims = src.frame.rgb.dims();
        let p = src.transfer.project(dir, depth, dims)?;
        let color = src.frame.rgb.sample_bilinear(p.x, p.y);
        let observed = src.frame.depth.sample_nearest(p.x, p.y).map(f64::from);
        let (w_d, suitable) = match observed {
            Some(d) => (
                weight_depth(p.depth * self.world_unit, d * self.world_unit),
                (p.depth - d).abs() <= self.cfg.suitability_tau * d,
            ),
            None => (0.0, false),
        };
        let point = self.target.local_to_world(&(dir * depth));
        let v = point - src.frame.pose.position();
        let w_ang = weight_angle(&src.t, &v);
        let w = match self.cfg.weighting {
            WeightingMode::Uniform => 1.0,
            WeightingMode::DepthOnly => w_d,
            WeightingMode::DepthCamera => w_d * src.w_cam,
            WeightingMode::Full => w_d * src.w_cam * w_ang,
        };
        Some(BlendSample {
            color,
            w_d,
            w_cam: src.w_cam,
            w_ang,
            w,
            frame: src.index,
            suitable: suitable || !self.cfg.weighting.uses_depth(),
        })
    }

    fn gather(&self, dir: &Vec3, depth: f64) -> Gathered {
        let k = self.cfg.k.min(self.sources.len());
        let mut samples: Vec<BlendSample> = self.sources[..k]
            .iter()
            .filter_map(|s| self.sample(s, dir, depth))
            .collect();
        if samples.iter().any(|s| s.suitable) {
            return Gathered {
                samples,
                exhausted: false,
            };
        }
        let extra = self.cfg.fallback_max.unwrap_or(self.sources.len());
        for src in self.sources[k..].iter().take(extra) {
            if let Some(s) = self.sample(src, dir, depth) {
                let found = s.suitable;
                samples.push(s);
                if found {
                    return Gathered {
                        samples,
                        exhausted: false,
                    };
                }
            }
        }
        Gathered {
            samples,
            exhausted: true,
        }
    }
}

/// Samples for target pixel `(i, j)` of a `dims` raster at depth `depth`.
pub fn gather_samples(
    (i, j): (usize, usize),
    depth: f64,
    target: &Pose,
    dims: ImageDims,
    frames: &[SynthesisFrame],
    world_unit: f64,
    cfg: &SynthesisConfig,
) -> Gathered {
    let ctx = Context::new(target, frames, world_unit, cfg);
    ctx.gather(&RayGrid::new(dims).direction(i, j), depth)
}

#[derive(Debug, Clone)]
pub struct TargetDepth {
    pub depth: DepthPanorama,
    /// Pixels no capture covered; they hold the largest observed depth.
    pub filled: PixelMask,
}

/// Depth panorama at `target`: forward projection of the `k_fp` nearest
/// captures, closing, and raymarch correction against the same captures.
pub fn synthesize_target_depth(
    target: &Pose,
    dims: ImageDims,
    frames: &[SynthesisFrame],
    cfg: &SynthesisConfig,
) -> Result<TargetDepth> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::MissingDepth("no captures with depth to synthesize from".into()));
    }
    let positions: Vec<Vec3> = frames.iter().map(|f| *f.pose.position()).collect();
    let views: Vec<DepthView> = k_nearest(&positions, target.position(), cfg.k_fp)
        .into_iter()
        .map(|n| DepthView {
            depth: &frames[n.index].depth,
            pose: &frames[n.index].pose,
        })
        .collect();
    let splat = forward_project(target, dims, &views, views.len());
    let closed = close_depth(&splat, cfg.closing_radius);
    let corrected = raymarch_correct(
        &closed,
        target,
        &views,
        cfg.k_rm.min(views.len()),
        cfg.r,
        cfg.max_march_steps,
    );
    let fallback = views
        .iter()
        .filter_map(|v| v.depth.max_depth())
        .reduce(f32::max)
        .ok_or_else(|| Error::MissingDepth("captures near the target have no depth".into()))?;
    let mut depth = corrected.depth;
    let mut filled = vec![false; dims.pixel_count()];
    for (d, f) in depth.depths_mut().iter_mut().zip(&mut filled) {
        if !d.is_finite() {
            *d = fallback;
            *f = true;
        }
    }
    Ok(TargetDepth {
        depth,
        filled: PixelMask::new(dims, filled)?,
    })
}

#[derive(Debug, Clone)]
pub struct SynthesisOutput {
    pub rgb: RgbPanorama,
    pub depth: DepthPanorama,
    /// Pixels without any usable sample (holding the hole color) plus the
    /// uncovered pixels of `filled`, which keep their blended color.
    pub holes: PixelMask,
    /// Pixels whose depth came from the uncovered-region fill.
    pub filled: PixelMask,
    /// Pixels where no suitable sample was found in any permitted capture.
    pub exhausted: usize,
}

impl SynthesisOutput {
    pub fn hole_fraction(&self) -> f64 {
        self.holes.fraction()
    }
}

/// Synthesizes a `dims` panorama at `target`. Rows are processed in
/// parallel; each pixel depends only on shared immutable inputs, so the
/// result does not depend on the thread count.
pub fn synthesize_view(
    target: &Pose,
    dims: ImageDims,
    frames: &[SynthesisFrame],
    world_unit: f64,
    cfg: &SynthesisConfig,
) -> Result<SynthesisOutput> {
    let target_depth = synthesize_target_depth(target, dims, frames, cfg)?;
    let ctx = Context::new(target, frames, world_unit, cfg);
    let grid = RayGrid::new(dims);
    let depth = &target_depth.depth;
    let rows: Vec<(Vec<Rgb>, Vec<bool>, usize)> = (0..dims.height())
        .into_par_iter()
        .map(|j| {
            let mut colors = Vec::with_capacity(dims.width());
            let mut holes = Vec::with_capacity(dims.width());
            let mut exhausted = 0;
            for i in 0..dims.width() {
                let d = depth.depths()[dims.index(i, j)];
                let g = ctx.gather(&grid.direction(i, j), d as f64);
                exhausted += g.exhausted as usize;
                match blend(&g.samples) {
                    Some(c) => {
                        colors.push(c);
                        holes.push(false);
                    }
                    None => {
                        colors.push(cfg.hole_color);
                        holes.push(true);
                    }
                }
            }
            (colors, holes, exhausted)
        })
        .collect();
    let mut pixels = Vec::with_capacity(dims.pixel_count());
    let mut holes = Vec::with_capacity(dims.pixel_count());
    let mut exhausted = 0;
    for (c, h, e) in rows {
        pixels.extend(c);
        holes.extend(h);
        exhausted += e;
    }
    let holes = PixelMask::new(dims, holes)?.or(&target_depth.filled);
    Ok(SynthesisOutput {
        rgb: RgbPanorama::new(dims, pixels)?,
        depth: target_depth.depth,
        holes,
        filled: target_depth.filled,
        exhausted,
    })
}
