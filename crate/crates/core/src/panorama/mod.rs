//! Equirectangular rasters, their file formats, the scene manifest and
//! capture-time utilities.

mod capture;
mod manifest;
mod pfm;
mod png;

pub use capture::{
    align_orientation, blur_score, k_nearest, quantile, select_frames, BlurPolicy, Neighbor,
};
pub use manifest::{load_manifest, manifest_to_json, save_manifest, CaptureFrame, SceneManifest};
pub use pfm::{read_depth_pfm, read_depth_pfm_expect, write_depth_pfm};
pub use png::{encode_png, read_rgb_png, write_rgb_png};

use crate::error::{Error, Result};
use crate::geometry::ImageDims;

pub type Rgb = [f32; 3];

/// Rec. 601 luma.
#[inline]
pub fn luma(c: &Rgb) -> f32 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

/// Row-major color raster with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbPanorama {
    dims: ImageDims,
    pixels: Vec<Rgb>,
}

impl RgbPanorama {
    pub fn new(dims: ImageDims, pixels: Vec<Rgb>) -> Result<Self> {
        if pixels.len() != dims.pixel_count() {
            return Err(Error::Dimensions(format!(
                "{} pixels supplied for a {dims} raster",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels
            .iter()
            .flatten()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Domain(format!("color channel {bad} outside [0, 1]")));
        }
        Ok(Self { dims, pixels })
    }

    pub fn filled(dims: ImageDims, color: Rgb) -> Self {
        Self {
            dims,
            pixels: vec![color; dims.pixel_count()],
        }
    }

    /// Builds a raster by evaluating `f(i, j)`; channels are clamped to `[0, 1]`.
    pub fn from_fn(dims: ImageDims, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut pixels = Vec::with_capacity(dims.pixel_count());
        for j in 0..dims.height() {
            for i in 0..dims.width() {
                pixels.push(f(i, j).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self { dims, pixels }
    }

    #[inline]
    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    #[inline]
    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Rgb {
        self.pixels[self.dims.index(i, j)]
    }

    pub fn luma(&self) -> Vec<f32> {
        self.pixels.iter().map(luma).collect()
    }

    /// Bilinear lookup at continuous pixel coordinates with horizontal
    /// wrap-around and vertical clamping.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Rgb {
        let taps = bilinear_taps(self.dims, x, y);
        let mut out = [0.0f32; 3];
        for (idx, w) in taps {
            let p = &self.pixels[idx];
            for c in 0..3 {
                out[c] += w * p[c];
            }
        }
        out.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn into_pixels(self) -> Vec<Rgb> {
        self.pixels
    }
}

/// Indices and weights of the four bilinear taps around `(x, y)`.
#[inline]
pub(crate) fn bilinear_taps(dims: ImageDims, x: f64, y: f64) -> [(usize, f32); 4] {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = (x - x0) as f32;
    let fy = (y - y0) as f32;
    let c0 = dims.wrap_column(x0 as i64);
    let c1 = dims.wrap_column(x0 as i64 + 1);
    let r0 = dims.clamp_row(y0 as i64);
    let r1 = dims.clamp_row(y0 as i64 + 1);
    [
        (dims.index(c0, r0), (1.0 - fx) * (1.0 - fy)),
        (dims.index(c1, r0), fx * (1.0 - fy)),
        (dims.index(c0, r1), (1.0 - fx) * fy),
        (dims.index(c1, r1), fx * fy),
    ]
}

/// Row-major metric depth raster; non-finite values mark missing depth.
#[derive(Debug, Clone)]
pub struct DepthPanorama {
    dims: ImageDims,
    depths: Vec<f32>,
}

/// Equal extents and equal depths, with any two missing values equal.
impl PartialEq for DepthPanorama {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self
                .depths
                .iter()
                .zip(&other.depths)
                .all(|(a, b)| a == b || (!a.is_finite() && !b.is_finite()))
    }
}

/// Canonical missing-depth value.
pub const MISSING: f32 = f32::NAN;

impl DepthPanorama {
    /// Wraps a depth vector. Non-positive values are converted to missing.
    pub fn new(dims: ImageDims, mut depths: Vec<f32>) -> Result<Self> {
        if depths.len() != dims.pixel_count() {
            return Err(Error::Dimensions(format!(
                "{} depths supplied for a {dims} raster",
                depths.len()
            )));
        }
        for d in &mut depths {
            if d.is_finite() && *d <= 0.0 {
                *d = MISSING;
            }
        }
        Ok(Self { dims, depths })
    }

    pub fn missing(dims: ImageDims) -> Self {
        Self {
            dims,
            depths: vec![MISSING; dims.pixel_count()],
        }
    }

    pub fn filled(dims: ImageDims, depth: f32) -> Self {
        assert!(depth > 0.0 && depth.is_finite());
        Self {
            dims,
            depths: vec![depth; dims.pixel_count()],
        }
    }

    #[inline]
    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    #[inline]
    pub fn depths(&self) -> &[f32] {
        &self.depths
    }

    #[inline]
    pub fn depths_mut(&mut self) -> &mut [f32] {
        &mut self.depths
    }

    pub fn into_depths(self) -> Vec<f32> {
        self.depths
    }

    /// Depth at `(i, j)` or `None` when missing.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f32> {
        present(self.depths[self.dims.index(i, j)])
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, d: f32) {
        let idx = self.dims.index(i, j);
        self.depths[idx] = d;
    }

    /// Nearest-neighbor lookup at continuous coordinates.
    #[inline]
    pub fn sample_nearest(&self, x: f64, y: f64) -> Option<f32> {
        let (i, j) = self.dims.nearest_pixel(x, y);
        self.get(i, j)
    }

    /// Smallest present depth among the four pixels surrounding `(x, y)`.
    #[inline]
    pub fn footprint_min(&self, x: f64, y: f64) -> Option<f32> {
        bilinear_taps(self.dims, x, y)
            .iter()
            .filter_map(|(idx, _)| present(self.depths[*idx]))
            .reduce(f32::min)
    }

    pub fn present_count(&self) -> usize {
        self.depths.iter().filter(|d| d.is_finite()).count()
    }

    pub fn max_depth(&self) -> Option<f32> {
        self.depths
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .reduce(f32::max)
    }
}

#[inline]
pub(crate) fn present(d: f32) -> Option<f32> {
    if d.is_finite() {
        Some(d)
    } else {
        None
    }
}

/// Boolean per-pixel selection over a raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    dims: ImageDims,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(dims: ImageDims, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.pixel_count() {
            return Err(Error::Dimensions(format!(
                "mask of {} entries for a {dims} raster",
                bits.len()
            )));
        }
        Ok(Self { dims, bits })
    }

    pub fn all(dims: ImageDims) -> Self {
        Self {
            dims,
            bits: vec![true; dims.pixel_count()],
        }
    }

    pub fn none(dims: ImageDims) -> Self {
        Self {
            dims,
            bits: vec![false; dims.pixel_count()],
        }
    }

    /// Pixels whose center latitude satisfies `|phi| <= max_latitude`.
    pub fn latitude_band(dims: ImageDims, max_latitude: f64) -> Self {
        let mut bits = Vec::with_capacity(dims.pixel_count());
        for j in 0..dims.height() {
            let (_, phi) = crate::geometry::continuous_pixel_to_angles(0.0, j as f64, dims);
            bits.extend(std::iter::repeat(phi.abs() <= max_latitude).take(dims.width()));
        }
        Self { dims, bits }
    }

    #[inline]
    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[self.dims.index(i, j)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    pub fn and(&self, other: &PixelMask) -> PixelMask {
        assert_eq!(self.dims, other.dims, "mask dimensions differ");
        PixelMask {
            dims: self.dims,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn or(&self, other: &PixelMask) -> PixelMask {
        assert_eq!(self.dims, other.dims, "mask dimensions differ");
        PixelMask {
            dims: self.dims,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn not(&self) -> PixelMask {
        PixelMask {
            dims: self.dims,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_wraps_across_the_seam() {
        let dims = ImageDims::new(4, 2).unwrap();
        let pano = RgbPanorama::from_fn(dims, |i, _| if i == 0 { [1.0; 3] } else { [0.0; 3] });
        // halfway between the last column and column 0
        let c = pano.sample_bilinear(3.5, 0.0);
        assert!((c[0] - 0.5).abs() < 1e-6);
        // exact pixel centers reproduce the stored values
        assert_eq!(pano.sample_bilinear(0.0, 1.0), [1.0; 3]);
        assert_eq!(pano.sample_bilinear(2.0, 0.0), [0.0; 3]);
    }

    #[test]
    fn non_positive_depths_become_missing() {
        let dims = ImageDims::new(2, 1).unwrap();
        let d = DepthPanorama::new(dims, vec![0.0, -3.0]).unwrap();
        assert_eq!(d.present_count(), 0);
        assert!(d.get(0, 0).is_none());
    }

    #[test]
    fn colors_outside_unit_range_are_rejected() {
        let dims = ImageDims::new(2, 1).unwrap();
        assert!(RgbPanorama::new(dims, vec![[0.0; 3], [1.5, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn latitude_band_excludes_poles() {
        let dims = ImageDims::new(12, 6).unwrap();
        let m = PixelMask::latitude_band(dims, 60f64.to_radians());
        // rows at +-75 deg excluded, +-45 and +-15 included
        assert!(!m.get(0, 0) && m.get(0, 1) && m.get(0, 2) && !m.get(0, 5));
    }
}
