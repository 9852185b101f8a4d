//! Grayscale morphology on depth panoramas.
//!
//! Operations are named for depth values: `min` pulls surfaces nearer,
//! `max` pushes them farther. The structuring element is a disk
//! (`dx^2 + dy^2 <= r^2`); columns wrap and rows outside the raster are
//! ignored.

use rayon::prelude::*;

use crate::geometry::ImageDims;
use crate::panorama::{present, DepthPanorama, MISSING};

fn disk(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// How a missing sample inside the window is treated.
#[derive(Clone, Copy)]
enum Missing {
    Skip,
    /// Acts as +infinity, so a `max` over it is missing.
    Infinite,
}

fn filter(
    src: &DepthPanorama,
    radius: usize,
    take_max: bool,
    missing: Missing,
) -> DepthPanorama {
    let dims: ImageDims = src.dims();
    let offsets = disk(radius);
    let data = src.depths();
    let mut out = vec![MISSING; dims.pixel_count()];
    out.par_chunks_mut(dims.width())
        .enumerate()
        .for_each(|(j, row)| {
            for (i, o) in row.iter_mut().enumerate() {
                let mut acc: Option<f32> = None;
                let mut poisoned = false;
                for &(dx, dy) in &offsets {
                    let jj = j as i64 + dy;
                    if jj < 0 || jj >= dims.height() as i64 {
                        continue;
                    }
                    let v = data[dims.index(dims.wrap_column(i as i64 + dx), jj as usize)];
                    match present(v) {
                        Some(v) => {
                            acc = Some(match acc {
                                None => v,
                                Some(a) if take_max => a.max(v),
                                Some(a) => a.min(v),
                            })
                        }
                        None => {
                            if let Missing::Infinite = missing {
                                poisoned = true;
                            }
                        }
                    }
                }
                *o = match acc {
                    Some(v) if !poisoned => v,
                    _ => MISSING,
                };
            }
        });
    DepthPanorama::new(dims, out).expect("same dimensions as the source")
}

/// Hole-filling closing: a `min` filter skipping missing samples followed by
/// a `max` filter in which missing samples count as +infinity.
///
/// Holes narrower than the disk fill with the farther of their surrounding
/// depths; larger holes keep their extent.
pub fn close_depth(depth: &DepthPanorama, radius: usize) -> DepthPanorama {
    if radius == 0 {
        return depth.clone();
    }
    filter(&filter(depth, radius, false, Missing::Skip), radius, true, Missing::Infinite)
}

/// Speckle-removing opening: a `max` filter followed by a `min` filter,
/// both skipping missing samples. Near blobs smaller than the disk vanish;
/// missing pixels stay missing.
pub fn open_depth(depth: &DepthPanorama, radius: usize) -> DepthPanorama {
    if radius == 0 {
        return depth.clone();
    }
    let mut out = filter(&filter(depth, radius, true, Missing::Skip), radius, false, Missing::Skip);
    for (o, s) in out.depths_mut().iter_mut().zip(depth.depths()) {
        if !s.is_finite() {
            *o = MISSING;
        }
    }
    out
}
