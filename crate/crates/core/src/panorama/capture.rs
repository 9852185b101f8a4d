use std::cmp::Ordering;

use nalgebra::Matrix3;

use super::{RgbPanorama, SceneManifest};
use crate::error::{Error, Result};
use crate::geometry::{project_local, RayGrid, Vec3};

/// Variance of the 3x3 Laplacian response over the luma channel.
///
/// Columns wrap around the seam; rows are clamped at the poles.
pub fn blur_score(pano: &RgbPanorama) -> f64 {
    let dims = pano.dims();
    let luma: Vec<f64> = pano.luma().into_iter().map(f64::from).collect();
    let (w, h) = (dims.width() as i64, dims.height() as i64);
    let at = |i: i64, j: i64| luma[dims.index(dims.wrap_column(i), dims.clamp_row(j))];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for j in 0..h {
        for i in 0..w {
            let r = at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4.0 * at(i, j);
            sum += r;
            sum_sq += r * r;
        }
    }
    let n = (w * h) as f64;
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0)
}

/// Linearly interpolated quantile of `values` (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * t)
}

/// Sharpness threshold used by [`select_frames`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurPolicy {
    /// Quantile of the capture's score distribution below which a frame is
    /// considered blurred.
    pub quantile: f64,
    /// Scores at or below this value are always blurred.
    pub min_score: f64,
}

impl Default for BlurPolicy {
    fn default() -> Self {
        Self {
            quantile: 0.1,
            min_score: 0.0,
        }
    }
}

/// Picks every `stride`-th frame, replacing blurred picks by the nearest sharp
/// frame (the later one on ties). Returns frame indices in capture order.
pub fn select_frames(blur_scores: &[f64], stride: usize, policy: &BlurPolicy) -> Result<Vec<usize>> {
    if blur_scores.is_empty() {
        return Err(Error::Config("no frames to select from".into()));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let threshold = quantile(blur_scores, policy.quantile).unwrap_or(0.0);
    let sharp: Vec<bool> = blur_scores
        .iter()
        .map(|&s| s >= threshold && s > policy.min_score)
        .collect();
    if !sharp.iter().any(|s| *s) {
        return Err(Error::NoSharpFrame);
    }
    let n = blur_scores.len();
    let mut selected: Vec<usize> = Vec::new();
    for pick in (0..n).step_by(stride) {
        let chosen = if sharp[pick] {
            pick
        } else {
            (1..n)
                .find_map(|off| {
                    let after = pick + off;
                    if after < n && sharp[after] {
                        return Some(after);
                    }
                    pick.checked_sub(off).filter(|&b| sharp[b])
                })
                .expect("at least one sharp frame exists")
        };
        if !selected.contains(&chosen) {
            selected.push(chosen);
        }
    }
    Ok(selected)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// The `k` positions closest to `target`, by ascending distance then index.
pub fn k_nearest(positions: &[Vec3], target: &Vec3, k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = positions
        .iter()
        .enumerate()
        .map(|(index, p)| Neighbor {
            index,
            distance: (p - target).norm(),
        })
        .collect();
    all.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap_or(Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    all.truncate(k);
    all
}

impl SceneManifest {
    pub fn k_nearest(&self, target: &Vec3, k: usize) -> Vec<Neighbor> {
        let positions: Vec<Vec3> = self.frames.iter().map(|f| *f.pose.position()).collect();
        k_nearest(&positions, target, k)
    }
}

/// Resamples a panorama captured with world-from-local `rotation` so that its
/// axes align with the world frame.
pub fn align_orientation(pano: &RgbPanorama, rotation: &Matrix3<f64>) -> RgbPanorama {
    let dims = pano.dims();
    let grid = RayGrid::new(dims);
    let to_local = rotation.transpose();
    RgbPanorama::from_fn(dims, |i, j| {
        let local = to_local * grid.direction(i, j);
        let p = project_local(&local, dims).expect("unit direction");
        pano.sample_bilinear(p.x, p.y)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ImageDims, Pose};

    fn checkerboard(dims: ImageDims, cell: usize) -> RgbPanorama {
        RgbPanorama::from_fn(dims, |i, j| {
            if (i / cell + j / cell) % 2 == 0 {
                [1.0; 3]
            } else {
                [0.0; 3]
            }
        })
    }

    fn box_blur(p: &RgbPanorama) -> RgbPanorama {
        let dims = p.dims();
        RgbPanorama::from_fn(dims, |i, j| {
            let mut acc = [0.0f32; 3];
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let c = p.get(
                        dims.wrap_column(i as i64 + di),
                        dims.clamp_row(j as i64 + dj),
                    );
                    for k in 0..3 {
                        acc[k] += c[k] / 9.0;
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn constant_image_scores_zero() {
        let p = RgbPanorama::filled(ImageDims::new(16, 8).unwrap(), [0.3, 0.6, 0.1]);
        assert!(blur_score(&p) < 1e-24);
    }

    #[test]
    fn blur_lowers_the_score() {
        let sharp = checkerboard(ImageDims::new(32, 16).unwrap(), 2);
        let blurred = box_blur(&sharp);
        assert!(blur_score(&sharp) > blur_score(&blurred));
    }

    #[test]
    fn matches_direct_double_loop() {
        let dims = ImageDims::new(8, 4).unwrap();
        let values: Vec<f64> = (0..32).map(|k| ((k * 37 + 11) % 17) as f64 / 16.0).collect();
        let p = RgbPanorama::from_fn(dims, |i, j| {
            let v = values[j * 8 + i] as f32;
            [v, v, v]
        });
        // independent evaluation: explicit stencil, two-pass variance
        let lum: Vec<f64> = p.pixels().iter().map(|c| f64::from(super::super::luma(c))).collect();
        let mut resp = Vec::new();
        for j in 0..4i64 {
            for i in 0..8i64 {
                let g = |ii: i64, jj: i64| {
                    let ii = ((ii % 8) + 8) % 8;
                    let jj = jj.max(0).min(3);
                    lum[(jj * 8 + ii) as usize]
                };
                resp.push(g(i - 1, j) + g(i + 1, j) + g(i, j - 1) + g(i, j + 1) - 4.0 * g(i, j));
            }
        }
        let mean = resp.iter().sum::<f64>() / resp.len() as f64;
        let var = resp.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / resp.len() as f64;
        assert!((blur_score(&p) - var).abs() < 1e-12, "{} vs {var}", blur_score(&p));
    }

    #[test]
    fn stride_selection_of_sharp_frames() {
        let scores = vec![100.0; 50];
        assert_eq!(
            select_frames(&scores, 10, &BlurPolicy::default()).unwrap(),
            vec![0, 10, 20, 30, 40]
        );
    }

    #[test]
    fn blurred_pick_is_substituted() {
        let mut scores = vec![100.0; 50];
        scores[10] = 1.0;
        assert_eq!(
            select_frames(&scores, 10, &BlurPolicy::default()).unwrap(),
            vec![0, 11, 20, 30, 40]
        );
        // only an earlier sharp neighbor
        scores[11] = 1.0;
        scores[12] = 1.0;
        scores[13] = 1.0;
        scores[14] = 1.0;
        let sel = select_frames(
            &scores,
            10,
            &BlurPolicy {
                quantile: 0.0,
                min_score: 50.0,
            },
        )
        .unwrap();
        assert_eq!(sel, vec![0, 9, 20, 30, 40]);
    }

    #[test]
    fn all_blurred_is_an_error() {
        let scores = vec![0.0; 20];
        assert!(matches!(
            select_frames(&scores, 10, &BlurPolicy::default()),
            Err(Error::NoSharpFrame)
        ));
        let scores = vec![3.0; 20];
        let strict = BlurPolicy {
            quantile: 0.1,
            min_score: 5.0,
        };
        assert!(matches!(select_frames(&scores, 10, &strict), Err(Error::NoSharpFrame)));
    }

    #[test]
    fn selection_is_deterministic() {
        let scores: Vec<f64> = (0..73).map(|k| ((k * 31) % 13) as f64).collect();
        let a = select_frames(&scores, 7, &BlurPolicy::default()).unwrap();
        let b = select_frames(&scores, 7, &BlurPolicy::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nearest_neighbors_order_and_ties() {
        let positions = vec![
            Vec3::new(5.0, 0.0, 0.0),
            Vec3::new(3.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(9.0, 0.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
        ];
        let n = k_nearest(&positions, &Vec3::zeros(), 3);
        assert_eq!(n[0], Neighbor { index: 3, distance: 0.0 });
        assert_eq!((n[1].index, n[2].index), (2, 5));
        let all = k_nearest(&positions, &Vec3::zeros(), 100);
        assert_eq!(all.len(), 6);
        assert!(all.windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn alignment_undoes_a_yaw() {
        let dims = ImageDims::new(64, 32).unwrap();
        // a panorama captured with a yaw of exactly 8 columns
        let yaw = 8.0 * std::f64::consts::TAU / 64.0;
        let world = RgbPanorama::from_fn(dims, |i, j| [i as f32 / 64.0, j as f32 / 32.0, 0.5]);
        let pose = Pose::from_yaw_pitch_roll(Vec3::zeros(), yaw, 0.0, 0.0).unwrap();
        // local pixel i looks at world column i - 8
        let captured = RgbPanorama::from_fn(dims, |i, j| world.get((i + 64 - 8) % 64, j));
        let aligned = align_orientation(&captured, pose.rotation());
        for j in 0..32 {
            for i in 0..64 {
                let a = aligned.get(i, j);
                let b = world.get(i, j);
                assert!((a[0] - b[0]).abs() < 1e-4 && (a[1] - b[1]).abs() < 1e-4);
            }
        }
    }
}
