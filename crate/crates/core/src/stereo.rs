//! Sphere-sweep dense depth estimation.
//!
//! For every depth hypothesis the reference panorama's rays are cut at that
//! distance, reprojected into the nearest neighbor panoramas and compared
//! with an ad-census cost. Each cost slice is smoothed with a guided filter
//! (reference luma as guide) and the minimum-cost hypothesis wins.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ImageDims, Pose, RayGrid, Transfer};
use crate::panorama::{k_nearest, DepthPanorama, Rgb, RgbPanorama, MISSING};

/// Cost assigned to a sample that cannot be compared.
pub const MAX_COST: f32 = 2.0;

/// Depth hypotheses sampled uniformly in inverse depth, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHypotheses {
    values: Vec<f64>,
}

impl DepthHypotheses {
    pub fn uniform_inverse(d_min: f64, d_max: f64, count: usize) -> Result<Self> {
        if !(d_min > 0.0 && d_max > d_min && d_max.is_finite()) {
            return Err(Error::Config(format!(
                "depth range must satisfy 0 < min < max, got [{d_min}, {d_max}]"
            )));
        }
        if count < 2 {
            return Err(Error::Config("at least two depth hypotheses are required".into()));
        }
        let (inv_near, inv_far) = (1.0 / d_min, 1.0 / d_max);
        let values = (0..count)
            .map(|k| {
                let t = k as f64 / (count - 1) as f64;
                1.0 / (inv_near + (inv_far - inv_near) * t)
            })
            .collect();
        Self::from_values(values)
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("hypotheses must be finite and positive".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("hypotheses must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdCensusParams {
    pub census_width: usize,
    pub census_height: usize,
    /// Scale of the color term, in `[0, 1]` channel units.
    pub lambda_ad: f32,
    /// Scale of the census term, in differing bits.
    pub lambda_census: f32,
    pub guided_radius: usize,
    pub guided_epsilon: f64,
}

impl Default for AdCensusParams {
    fn default() -> Self {
        Self {
            census_width: 9,
            census_height: 7,
            lambda_ad: 10.0 / 255.0,
            lambda_census: 30.0,
            guided_radius: 8,
            guided_epsilon: 1e-4,
        }
    }
}

impl AdCensusParams {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.census_width, self.census_height);
        if w % 2 == 0 || h % 2 == 0 {
            return Err(Error::Config(format!("census window {w}x{h} must be odd")));
        }
        if w * h - 1 > 64 {
            return Err(Error::Config(format!(
                "census window {w}x{h} exceeds 64 comparison bits"
            )));
        }
        if !(self.lambda_ad > 0.0 && self.lambda_census > 0.0) {
            return Err(Error::Config("cost scales must be positive".into()));
        }
        if !(self.guided_epsilon > 0.0) {
            return Err(Error::Config("guided filter epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Per-pixel census descriptors.
///
/// Bit `k` (least significant first) compares the `k`-th window neighbor in
/// row-major order, center excluded, and is set when that neighbor is darker
/// than the center. Columns wrap; rows clamp.
pub fn census_transform(pano: &RgbPanorama, width: usize, height: usize) -> Result<Vec<u64>> {
    let dims = pano.dims();
    if width % 2 == 0 || height % 2 == 0 {
        return Err(Error::Config(format!("census window {width}x{height} must be odd")));
    }
    if width * height - 1 > 64 {
        return Err(Error::Config(format!(
            "census window {width}x{height} exceeds 64 comparison bits"
        )));
    }
    if width > dims.width() || height > dims.height() {
        return Err(Error::Dimensions(format!(
            "census window {width}x{height} larger than {dims} image"
        )));
    }
    let luma = pano.luma();
    let (rx, ry) = ((width / 2) as i64, (height / 2) as i64);
    let out = (0..dims.pixel_count())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = ((idx % dims.width()) as i64, (idx / dims.width()) as i64);
            let center = luma[idx];
            let mut bits = 0u64;
            let mut k = 0;
            for dy in -ry..=ry {
                let row = dims.clamp_row(j + dy);
                for dx in -rx..=rx {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    if luma[dims.index(dims.wrap_column(i + dx), row)] < center {
                        bits |= 1 << k;
                    }
                    k += 1;
                }
            }
            bits
        })
        .collect();
    Ok(out)
}

/// Robust cost mapping `1 - exp(-c / lambda)`.
#[inline]
fn rho(c: f32, lambda: f32) -> f32 {
    1.0 - (-c / lambda).exp()
}

/// Ad-census matching cost in `[0, 2)`; a missing sample costs [`MAX_COST`].
#[inline]
pub fn ad_census_cost(
    ref_color: &Rgb,
    ref_descriptor: u64,
    sample: Option<(Rgb, u64)>,
    params: &AdCensusParams,
) -> f32 {
    let Some((color, descriptor)) = sample else {
        return MAX_COST;
    };
    let ad = ((ref_color[0] - color[0]).abs()
        + (ref_color[1] - color[1]).abs()
        + (ref_color[2] - color[2]).abs())
        / 3.0;
    let census = (ref_descriptor ^ descriptor).count_ones() as f32;
    rho(ad, params.lambda_ad) + rho(census, params.lambda_census)
}

/// Color seen by `neighbor` at the point `hypothesis` meters along the ray of
/// reference pixel `(i, j)`; `None` when the point coincides with the
/// neighbor's center.
pub fn sweep_sample(
    ref_pose: &Pose,
    ref_dims: ImageDims,
    neighbor: (&RgbPanorama, &Pose),
    hypothesis: f64,
    pixel: (usize, usize),
) -> Option<Rgb> {
    let grid = RayGrid::new(ref_dims);
    let transfer = Transfer::between(ref_pose, neighbor.1);
    let p = transfer.project(&grid.direction(pixel.0, pixel.1), hypothesis, neighbor.0.dims())?;
    Some(neighbor.0.sample_bilinear(p.x, p.y))
}

/// Sliding box sum over `2r + 1` samples with a custom index map.
fn box_sum_line(src: &[f64], out: &mut [f64], r: usize, map: impl Fn(i64) -> usize) {
    let r = r as i64;
    let mut acc: f64 = (-r..=r).map(|k| src[map(k)]).sum();
    for (n, o) in out.iter_mut().enumerate() {
        *o = acc;
        let n = n as i64;
        acc += src[map(n + r + 1)] - src[map(n - r)];
    }
}

/// Mean over `(2r + 1)^2` windows with horizontal wrap and vertical clamp.
fn box_mean(src: &[f64], dims: ImageDims, r: usize) -> Vec<f64> {
    let (w, h) = (dims.width(), dims.height());
    let mut horiz = vec![0.0; src.len()];
    horiz
        .par_chunks_mut(w)
        .zip(src.par_chunks(w))
        .for_each(|(out, row)| box_sum_line(row, out, r, |k| dims.wrap_column(k)));
    let mut out = vec![0.0; src.len()];
    let norm = 1.0 / ((2 * r + 1) * (2 * r + 1)) as f64;
    // column pass over a transposed copy keeps memory access linear
    let mut cols = vec![0.0; src.len()];
    for j in 0..h {
        for i in 0..w {
            cols[i * h + j] = horiz[j * w + i];
        }
    }
    let mut summed = vec![0.0; src.len()];
    summed
        .par_chunks_mut(h)
        .zip(cols.par_chunks(h))
        .for_each(|(o, col)| box_sum_line(col, o, r, |k| dims.clamp_row(k)));
    for i in 0..w {
        for j in 0..h {
            out[j * w + i] = summed[i * h + j] * norm;
        }
    }
    out
}

/// Guide statistics reused across every slice filtered with the same guide.
pub struct GuidedFilter {
    dims: ImageDims,
    radius: usize,
    guide: Vec<f64>,
    mean_i: Vec<f64>,
    inv_var: Vec<f64>,
}

impl GuidedFilter {
    pub fn new(guide: Vec<f64>, dims: ImageDims, radius: usize, epsilon: f64) -> Result<Self> {
        if guide.len() != dims.pixel_count() {
            return Err(Error::Dimensions(format!(
                "guide of {} samples for a {dims} raster",
                guide.len()
            )));
        }
        if radius >= dims.height() {
            return Err(Error::Config(format!(
                "guided filter radius {radius} must be smaller than the image height {}",
                dims.height()
            )));
        }
        let mean_i = box_mean(&guide, dims, radius);
        let sq: Vec<f64> = guide.iter().map(|v| v * v).collect();
        let mean_ii = box_mean(&sq, dims, radius);
        let inv_var = mean_i
            .iter()
            .zip(&mean_ii)
            .map(|(m, mm)| 1.0 / ((mm - m * m).max(0.0) + epsilon))
            .collect();
        Ok(Self {
            dims,
            radius,
            guide,
            mean_i,
            inv_var,
        })
    }

    /// `q = mean(a) I + mean(b)` with `a = cov(I, p) / (var(I) + eps)` and
    /// `b = mean(p) - a mean(I)`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.guide.len(), "slice and guide sizes differ");
        let r = self.radius;
        let mean_p = box_mean(p, self.dims, r);
        let ip: Vec<f64> = self.guide.iter().zip(p).map(|(i, p)| i * p).collect();
        let mean_ip = box_mean(&ip, self.dims, r);
        let mut a = vec![0.0; p.len()];
        let mut b = vec![0.0; p.len()];
        for k in 0..p.len() {
            let cov = mean_ip[k] - self.mean_i[k] * mean_p[k];
            a[k] = cov * self.inv_var[k];
            b[k] = mean_p[k] - a[k] * self.mean_i[k];
        }
        let mean_a = box_mean(&a, self.dims, r);
        let mean_b = box_mean(&b, self.dims, r);
        (0..p.len())
            .map(|k| mean_a[k] * self.guide[k] + mean_b[k])
            .collect()
    }
}

/// One-shot guided filter of `p` with guide `guide`.
pub fn guided_filter(
    p: &[f64],
    guide: &[f64],
    dims: ImageDims,
    radius: usize,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if p.len() != dims.pixel_count() {
        return Err(Error::Dimensions(format!(
            "slice of {} samples for a {dims} raster",
            p.len()
        )));
    }
    Ok(GuidedFilter::new(guide.to_vec(), dims, radius, epsilon)?.apply(p))
}

/// Matching cost per hypothesis slice, row-major per slice.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    dims: ImageDims,
    slices: Vec<Vec<f32>>,
}

impl CostVolume {
    pub fn new(dims: ImageDims, slices: Vec<Vec<f32>>) -> Result<Self> {
        if slices.iter().any(|s| s.len() != dims.pixel_count()) {
            return Err(Error::Dimensions("cost slice size does not match raster".into()));
        }
        Ok(Self { dims, slices })
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn slices(&self) -> &[Vec<f32>] {
        &self.slices
    }
}

/// Minimum-cost hypothesis per pixel. Ties go to the nearer hypothesis and
/// pixels whose every slice is at [`MAX_COST`] become missing.
pub fn winner_takes_all(cv: &CostVolume, hyp: &DepthHypotheses) -> Result<DepthPanorama> {
    if cv.slices.len() != hyp.len() {
        return Err(Error::Dimensions(format!(
            "{} cost slices for {} hypotheses",
            cv.slices.len(),
            hyp.len()
        )));
    }
    let depths = (0..cv.dims.pixel_count())
        .map(|k| {
            let mut best = (MAX_COST, None);
            for (m, slice) in cv.slices.iter().enumerate() {
                if slice[k] < best.0 {
                    best = (slice[k], Some(m));
                }
            }
            best.1.map_or(MISSING, |m| hyp.values()[m] as f32)
        })
        .collect();
    DepthPanorama::new(cv.dims, depths)
}

/// A posed color panorama taking part in stereo matching.
#[derive(Debug, Clone, Copy)]
pub struct StereoView<'a> {
    pub rgb: &'a RgbPanorama,
    pub pose: &'a Pose,
}

struct Neighbor<'a> {
    rgb: &'a RgbPanorama,
    census: Vec<u64>,
    transfer: Transfer,
}

/// Averaged raw ad-census cost of one hypothesis over `neighbors`.
fn raw_cost_slice(
    reference: &RgbPanorama,
    ref_census: &[u64],
    grid: &RayGrid,
    neighbors: &[Neighbor<'_>],
    depth: f64,
    params: &AdCensusParams,
) -> Vec<f32> {
    let dims = reference.dims();
    let mut out = vec![0.0f32; dims.pixel_count()];
    out.par_chunks_mut(dims.width())
        .enumerate()
        .for_each(|(j, row)| {
            for (i, cost) in row.iter_mut().enumerate() {
                let idx = dims.index(i, j);
                let color = reference.pixels()[idx];
                let dir = grid.direction(i, j);
                let mut sum = 0.0f32;
                let mut valid = 0;
                for n in neighbors {
                    let nd = n.rgb.dims();
                    let Some(p) = n.transfer.project(&dir, depth, nd) else {
                        continue;
                    };
                    let (ni, nj) = nd.nearest_pixel(p.x, p.y);
                    let sample = (n.rgb.sample_bilinear(p.x, p.y), n.census[nd.index(ni, nj)]);
                    sum += ad_census_cost(&color, ref_census[idx], Some(sample), params);
                    valid += 1;
                }
                *cost = if valid == 0 { MAX_COST } else { sum / valid as f32 };
            }
        });
    out
}

/// Raw (unfiltered) cost volume of `views[ref_index]` against its `n`
/// nearest other views.
pub fn build_cost_volume(
    views: &[StereoView<'_>],
    ref_index: usize,
    n: usize,
    hyp: &DepthHypotheses,
    params: &AdCensusParams,
) -> Result<CostVolume> {
    let ctx = SweepContext::new(views, ref_index, n, params)?;
    let slices = hyp
        .values()
        .iter()
        .map(|&d| ctx.raw_slice(d))
        .collect();
    CostVolume::new(ctx.reference.dims(), slices)
}

struct SweepContext<'a> {
    reference: &'a RgbPanorama,
    ref_census: Vec<u64>,
    grid: RayGrid,
    neighbors: Vec<Neighbor<'a>>,
    params: AdCensusParams,
}

impl<'a> SweepContext<'a> {
    fn new(
        views: &[StereoView<'a>],
        ref_index: usize,
        n: usize,
        params: &AdCensusParams,
    ) -> Result<Self> {
        params.validate()?;
        let reference = views
            .get(ref_index)
            .ok_or_else(|| Error::Config(format!("reference index {ref_index} out of range")))?;
        let positions: Vec<_> = views.iter().map(|v| *v.pose.position()).collect();
        let chosen: Vec<usize> = k_nearest(&positions, reference.pose.position(), views.len())
            .into_iter()
            .map(|nb| nb.index)
            .filter(|&k| k != ref_index)
            .take(n)
            .collect();
        if chosen.is_empty() {
            return Err(Error::Config("dense depth needs at least one neighbor view".into()));
        }
        let (cw, ch) = (params.census_width, params.census_height);
        let neighbors = chosen
            .iter()
            .map(|&k| {
                Ok(Neighbor {
                    rgb: views[k].rgb,
                    census: census_transform(views[k].rgb, cw, ch)?,
                    transfer: Transfer::between(reference.pose, views[k].pose),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            reference: reference.rgb,
            ref_census: census_transform(reference.rgb, cw, ch)?,
            grid: RayGrid::new(reference.rgb.dims()),
            neighbors,
            params: *params,
        })
    }

    fn raw_slice(&self, depth: f64) -> Vec<f32> {
        raw_cost_slice(
            self.reference,
            &self.ref_census,
            &self.grid,
            &self.neighbors,
            depth,
            &self.params,
        )
    }
}

/// Dense depth of `views[ref_index]` from its `n` nearest other views.
pub fn estimate_dense_depth(
    views: &[StereoView<'_>],
    ref_index: usize,
    n: usize,
    hyp: &DepthHypotheses,
    params: &AdCensusParams,
) -> Result<DepthPanorama> {
    let ctx = SweepContext::new(views, ref_index, n, params)?;
    let dims = ctx.reference.dims();
    let guide: Vec<f64> = ctx.reference.luma().into_iter().map(f64::from).collect();
    let filter = GuidedFilter::new(guide, dims, params.guided_radius, params.guided_epsilon)?;
    let mut best_cost = vec![f64::INFINITY; dims.pixel_count()];
    let mut best_slice = vec![usize::MAX; dims.pixel_count()];
    let mut comparable = vec![false; dims.pixel_count()];
    for (m, &d) in hyp.values().iter().enumerate() {
        let raw = ctx.raw_slice(d);
        for (c, r) in comparable.iter_mut().zip(&raw) {
            *c |= *r < MAX_COST;
        }
        let raw: Vec<f64> = raw.into_iter().map(f64::from).collect();
        let filtered = filter.apply(&raw);
        // strict comparison keeps the nearer hypothesis on ties
        for k in 0..filtered.len() {
            if filtered[k] < best_cost[k] {
                best_cost[k] = filtered[k];
                best_slice[k] = m;
            }
        }
    }
    let depths = (0..dims.pixel_count())
        .map(|k| {
            if comparable[k] && best_slice[k] != usize::MAX {
                hyp.values()[best_slice[k]] as f32
            } else {
                MISSING
            }
        })
        .collect();
    DepthPanorama::new(dims, depths)
}
