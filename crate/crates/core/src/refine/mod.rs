//! Iterative multi-view depth refinement.
//!
//! Each iteration fuses sparse and dense depth, corrects floating samples by
//! raymarching against neighboring views and re-synthesizes every dense map
//! by forward projection from its neighbors. A final fusion yields the
//! refined depth.

mod morphology;
mod warp;

pub use morphology::{close_depth, open_depth};
pub use warp::{forward_project, raymarch_correct, DepthView, RaymarchOutput};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::panorama::DepthPanorama;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    /// Relative depth increase per raymarch step.
    pub r: f64,
    pub k_rm: usize,
    pub k_fp: usize,
    pub iterations: usize,
    /// Growth of `k_rm` (and `k_fp`) after each iteration.
    pub k_increment: usize,
    pub max_march_steps: usize,
    pub closing_radius: usize,
    pub opening_radius: usize,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            r: 0.005,
            k_rm: 4,
            k_fp: 6,
            iterations: 3,
            k_increment: 2,
            max_march_steps: 2000,
            closing_radius: 2,
            opening_radius: 1,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::Config(format!("r must be positive, got {}", self.r)));
        }
        if self.k_rm == 0 || self.k_fp < self.k_rm {
            return Err(Error::Config(format!(
                "need 1 <= k_rm <= k_fp, got k_rm={} k_fp={}",
                self.k_rm, self.k_fp
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("at least one iteration is required".into()));
        }
        Ok(())
    }
}

/// Sparse depth where present, dense depth elsewhere, followed by an opening
/// that removes small near speckles.
pub fn fuse_depths(
    sparse: &DepthPanorama,
    dense: &DepthPanorama,
    opening_radius: usize,
) -> Result<DepthPanorama> {
    if sparse.dims() != dense.dims() {
        return Err(Error::Dimensions(format!(
            "sparse depth is {}, dense depth is {}",
            sparse.dims(),
            dense.dims()
        )));
    }
    let combined = sparse
        .depths()
        .iter()
        .zip(dense.depths())
        .map(|(s, d)| if s.is_finite() { *s } else { *d })
        .collect();
    let combined = DepthPanorama::new(sparse.dims(), combined)?;
    Ok(open_depth(&combined, opening_radius))
}

/// Depth inputs of one capture.
#[derive(Debug, Clone)]
pub struct RefineInput {
    pub pose: Pose,
    pub sparse: Option<DepthPanorama>,
    pub dense: Option<DepthPanorama>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub k_rm: usize,
    pub k_fp: usize,
    /// Pixels pushed outward by raymarching, summed over frames.
    pub marched: usize,
    /// Pixels that hit the raymarch step limit, summed over frames.
    pub flagged: usize,
}

#[derive(Debug, Clone)]
pub struct RefineOutput {
    pub depths: Vec<DepthPanorama>,
    pub iterations: Vec<IterationReport>,
}

/// Runs the full refinement schedule over every capture.
///
/// Raymarching checks each frame against its nearest *other* frames; the
/// forward projection that rebuilds a frame's dense map includes the frame's
/// own corrected map. With a single frame only fusion and morphology apply.
pub fn refine_all(inputs: &[RefineInput], cfg: &RefinementConfig) -> Result<RefineOutput> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::Config("no frames to refine".into()));
    }
    let mut sparse = Vec::with_capacity(inputs.len());
    let mut dense = Vec::with_capacity(inputs.len());
    for (k, f) in inputs.iter().enumerate() {
        let dims = match (&f.sparse, &f.dense) {
            (Some(s), _) => s.dims(),
            (None, Some(d)) => d.dims(),
            (None, None) => {
                return Err(Error::MissingDepth(format!(
                    "frame {k} has neither sparse nor dense depth"
                )))
            }
        };
        sparse.push(f.sparse.clone().unwrap_or_else(|| DepthPanorama::missing(dims)));
        dense.push(f.dense.clone().unwrap_or_else(|| DepthPanorama::missing(dims)));
    }
    let n = inputs.len();
    let mut k_rm = cfg.k_rm.min(n.saturating_sub(1));
    let mut k_fp = cfg.k_fp.min(n);
    let mut reports = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let fused = (0..n)
            .into_par_iter()
            .map(|f| fuse_depths(&sparse[f], &dense[f], cfg.opening_radius))
            .collect::<Result<Vec<_>>>()?;
        let corrected: Vec<RaymarchOutput> = (0..n)
            .into_par_iter()
            .map(|f| {
                let others: Vec<DepthView> = (0..n)
                    .filter(|&o| o != f)
                    .map(|o| DepthView {
                        depth: &fused[o],
                        pose: &inputs[o].pose,
                    })
                    .collect();
                raymarch_correct(
                    &fused[f],
                    &inputs[f].pose,
                    &others,
                    k_rm,
                    cfg.r,
                    cfg.max_march_steps,
                )
            })
            .collect();
        reports.push(IterationReport {
            iteration,
            k_rm,
            k_fp,
            marched: corrected.iter().map(|c| c.marched).sum(),
            flagged: corrected.iter().map(|c| c.flagged.count()).sum(),
        });
        log::debug!("refinement {:?}", reports[iteration]);
        let views: Vec<DepthView> = corrected
            .iter()
            .zip(inputs)
            .map(|(c, f)| DepthView {
                depth: &c.depth,
                pose: &f.pose,
            })
            .collect();
        dense = (0..n)
            .into_par_iter()
            .map(|f| forward_project(&inputs[f].pose, sparse[f].dims(), &views, k_fp))
            .collect();
        k_rm = (k_rm + cfg.k_increment).min(n.saturating_sub(1));
        k_fp = (k_rm + 2).min(n);
    }
    let depths = (0..n)
        .into_par_iter()
        .map(|f| fuse_depths(&sparse[f], &dense[f], cfg.opening_radius))
        .collect::<Result<Vec<_>>>()?;
    Ok(RefineOutput {
        depths,
        iterations: reports,
    })
}
