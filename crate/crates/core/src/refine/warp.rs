//! Multi-view depth consistency: raymarching correction and forward depth
//! projection.

use std::sync::atomic::{AtomicU32, Ordering};

use rayon::prelude::*;

use crate::geometry::{ImageDims, Pose, RayGrid, Transfer};
use crate::panorama::{k_nearest, present, DepthPanorama, PixelMask, MISSING};

/// A posed depth panorama.
#[derive(Debug, Clone, Copy)]
pub struct DepthView<'a> {
    pub depth: &'a DepthPanorama,
    pub pose: &'a Pose,
}

/// Indices of the `k` views nearest to `pose`.
pub(crate) fn nearest_views(views: &[DepthView<'_>], pose: &Pose, k: usize) -> Vec<usize> {
    let positions: Vec<_> = views.iter().map(|v| *v.pose.position()).collect();
    k_nearest(&positions, pose.position(), k)
        .into_iter()
        .map(|n| n.index)
        .collect()
}

/// Relative slack on the trigger comparison so that a point lying exactly on
/// a neighbor's recorded surface never counts as floating in front of it.
const AGREEMENT_TOLERANCE: f32 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RaymarchOutput {
    pub depth: DepthPanorama,
    /// Pixels whose depth was pushed outward.
    pub marched: usize,
    /// Pixels that hit the step limit and kept their input depth.
    pub flagged: PixelMask,
}

struct Probe<'a> {
    depth: &'a DepthPanorama,
    transfer: Transfer,
}

/// Pushes every depth sample outward by factors of `1 + r` while any of the
/// `k_rm` views nearest to `pose` records a surface behind the reprojected
/// point. The neighbor check restarts after every push. A missing neighbor
/// lookup never triggers a push. Samples that need more than `max_steps`
/// pushes keep their input depth and are flagged.
pub fn raymarch_correct(
    depth: &DepthPanorama,
    pose: &Pose,
    neighbors: &[DepthView<'_>],
    k_rm: usize,
    r: f64,
    max_steps: usize,
) -> RaymarchOutput {
    let dims = depth.dims();
    let probes: Vec<Probe> = nearest_views(neighbors, pose, k_rm)
        .into_iter()
        .map(|k| Probe {
            depth: neighbors[k].depth,
            transfer: Transfer::between(pose, neighbors[k].pose),
        })
        .collect();
    let grid = RayGrid::new(dims);
    let growth = 1.0 + r;
    let rows: Vec<(Vec<f32>, Vec<bool>, usize)> = (0..dims.height())
        .into_par_iter()
        .map(|j| {
            let mut out = Vec::with_capacity(dims.width());
            let mut flags = Vec::with_capacity(dims.width());
            let mut marched = 0;
            for i in 0..dims.width() {
                let Some(d0) = depth.get(i, j) else {
                    out.push(MISSING);
                    flags.push(false);
                    continue;
                };
                let dir = grid.direction(i, j);
                let mut d = d0 as f64;
                let mut steps = 0usize;
                let mut k = 0;
                let mut flagged = false;
                while k < probes.len() {
                    let p = &probes[k];
                    let pushed = p
                        .transfer
                        .project(&dir, d, p.depth.dims())
                        .and_then(|proj| {
                            p.depth
                                .footprint_min(proj.x, proj.y)
                                .map(|dk| (proj.depth as f32) < dk * (1.0 - AGREEMENT_TOLERANCE))
                        })
                        .unwrap_or(false);
                    if !pushed {
                        k += 1;
                        continue;
                    }
                    if steps == max_steps {
                        flagged = true;
                        break;
                    }
                    d *= growth;
                    steps += 1;
                    k = 0;
                }
                if flagged {
                    out.push(d0);
                } else {
                    if steps > 0 {
                        marched += 1;
                    }
                    out.push(d as f32);
                }
                flags.push(flagged);
            }
            (out, flags, marched)
        })
        .collect();
    let mut values = Vec::with_capacity(dims.pixel_count());
    let mut bits = Vec::with_capacity(dims.pixel_count());
    let mut marched = 0;
    for (v, f, m) in rows {
        values.extend(v);
        bits.extend(f);
        marched += m;
    }
    RaymarchOutput {
        depth: DepthPanorama::new(dims, values).expect("same dimensions as the input"),
        marched,
        flagged: PixelMask::new(dims, bits).expect("same dimensions as the input"),
    }
}

/// Splats every sample of the `k_fp` views nearest to `target` into a
/// `dims` raster at `target`, keeping the nearest depth per pixel.
/// Positions round to the nearest pixel; pixels nobody writes are missing.
pub fn forward_project(
    target: &Pose,
    dims: ImageDims,
    neighbors: &[DepthView<'_>],
    k_fp: usize,
) -> DepthPanorama {
    // positive floats order like their bit patterns
    let cells: Vec<AtomicU32> = (0..dims.pixel_count())
        .map(|_| AtomicU32::new(f32::INFINITY.to_bits()))
        .collect();
    for k in nearest_views(neighbors, target, k_fp) {
        let src = neighbors[k];
        let sd = src.depth.dims();
        let grid = RayGrid::new(sd);
        let transfer = Transfer::between(src.pose, target);
        (0..sd.height()).into_par_iter().for_each(|j| {
            for i in 0..sd.width() {
                let Some(d) = present(src.depth.depths()[sd.index(i, j)]) else {
                    continue;
                };
                let Some(p) = transfer.project(&grid.direction(i, j), d as f64, dims) else {
                    continue;
                };
                let (ti, tj) = dims.nearest_pixel(p.x, p.y);
                let value = p.depth as f32;
                if value > 0.0 && value.is_finite() {
                    cells[dims.index(ti, tj)].fetch_min(value.to_bits(), Ordering::Relaxed);
                }
            }
        });
    }
    let depths = cells
        .into_iter()
        .map(|c| {
            let v = f32::from_bits(c.into_inner());
            if v.is_finite() {
                v
            } else {
                MISSING
            }
        })
        .collect();
    DepthPanorama::new(dims, depths).expect("dimensions are fixed")
}
