//! Image quality metrics: PSNR, SSIM and MS-SSIM with optional pixel masks.
//!
//! Colors are in `[0, 1]`. SSIM and MS-SSIM operate on luma with an 11x11
//! Gaussian window (sigma 1.5) evaluated only where it fits inside the
//! raster; a window counts when its center pixel is selected by the mask.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::ImageDims;
use crate::panorama::{PixelMask, RgbPanorama};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn check_pair(a: &RgbPanorama, b: &RgbPanorama, mask: Option<&PixelMask>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Dimensions(format!("images are {} and {}", a.dims(), b.dims())));
    }
    if let Some(m) = mask {
        if m.dims() != a.dims() {
            return Err(Error::Dimensions(format!("mask is {}, images are {}", m.dims(), a.dims())));
        }
    }
    Ok(())
}

/// Peak signal-to-noise ratio over the selected pixels, all three channels.
/// Identical inputs give `f64::INFINITY`.
pub fn psnr(a: &RgbPanorama, b: &RgbPanorama, mask: Option<&PixelMask>) -> Result<f64> {
    check_pair(a, b, mask)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, (p, q)) in a.pixels().iter().zip(b.pixels()).enumerate() {
        if mask.is_some_and(|m| !m.bits()[k]) {
            continue;
        }
        for c in 0..3 {
            let e = p[c] as f64 - q[c] as f64;
            sum += e * e;
        }
        n += 3;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let mse = sum / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// A single-channel f64 image.
#[derive(Debug, Clone)]
struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    fn luma(p: &RgbPanorama) -> Self {
        let dims: ImageDims = p.dims();
        Self {
            width: dims.width(),
            height: dims.height(),
            data: p.pixels().iter().map(|c| crate::panorama::luma(c) as f64).collect(),
        }
    }

    fn downsample(&self) -> Self {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for j in 0..h {
            for i in 0..w {
                let at = |di: usize, dj: usize| self.data[(2 * j + dj) * self.width + 2 * i + di];
                data.push((at(0, 0) + at(1, 0) + at(0, 1) + at(1, 1)) / 4.0);
            }
        }
        Self { width: w, height: h, data }
    }
}

/// A window is kept when the mask selects every one of its 2x2 parents.
fn downsample_mask(bits: &[bool], width: usize, height: usize) -> Vec<bool> {
    let (w, h) = (width / 2, height / 2);
    let mut out = Vec::with_capacity(w * h);
    for j in 0..h {
        for i in 0..w {
            let at = |di: usize, dj: usize| bits[(2 * j + dj) * width + 2 * i + di];
            out.push(at(0, 0) && at(1, 0) && at(0, 1) && at(1, 1));
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term over the selected windows.
/// `None` when the image is smaller than a window or no window is selected.
fn ssim_terms(x: &Plane, y: &Plane, mask: Option<&[bool]>) -> Option<(f64, f64)> {
    if x.width < WINDOW || x.height < WINDOW {
        return None;
    }
    let kernel = gaussian_kernel();
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let (w, h) = (x.width, x.height);
    let half = WINDOW / 2;
    let out_w = w - WINDOW + 1;
    // horizontal pass over the five moment images
    let horizontal = |j: usize| -> [Vec<f64>; 5] {
        let mut rows: [Vec<f64>; 5] = Default::default();
        for r in rows.iter_mut() {
            r.reserve(out_w);
        }
        for i in 0..out_w {
            let mut m = [0.0; 5];
            for (t, kv) in kernel.iter().enumerate() {
                let a = x.data[j * w + i + t];
                let b = y.data[j * w + i + t];
                m[0] += kv * a;
                m[1] += kv * b;
                m[2] += kv * a * a;
                m[3] += kv * b * b;
                m[4] += kv * a * b;
            }
            for (r, v) in rows.iter_mut().zip(m) {
                r.push(v);
            }
        }
        rows
    };
    let filtered: Vec<[Vec<f64>; 5]> = (0..h).into_par_iter().map(horizontal).collect();
    let sums: Vec<(f64, f64, usize)> = (0..h - WINDOW + 1)
        .into_par_iter()
        .map(|j| {
            let mut s = 0.0;
            let mut cs = 0.0;
            let mut n = 0;
            for i in 0..out_w {
                if let Some(m) = mask {
                    if !m[(j + half) * w + i + half] {
                        continue;
                    }
                }
                let mut mom = [0.0; 5];
                for (t, kv) in kernel.iter().enumerate() {
                    for (c, v) in mom.iter_mut().enumerate() {
                        *v += kv * filtered[j + t][c][i];
                    }
                }
                let [mx, my, xx, yy, xy] = mom;
                let vx = xx - mx * mx;
                let vy = yy - my * my;
                let cov = xy - mx * my;
                let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
                let c = (2.0 * cov + c2) / (vx + vy + c2);
                s += l * c;
                cs += c;
                n += 1;
            }
            (s, cs, n)
        })
        .collect();
    let (mut s, mut cs, mut n) = (0.0, 0.0, 0usize);
    for (a, b, c) in sums {
        s += a;
        cs += b;
        n += c;
    }
    (n > 0).then(|| (s / n as f64, cs / n as f64))
}

/// Mean structural similarity of the luma channels.
pub fn ssim(a: &RgbPanorama, b: &RgbPanorama, mask: Option<&PixelMask>) -> Result<f64> {
    check_pair(a, b, mask)?;
    let (x, y) = (Plane::luma(a), Plane::luma(b));
    match ssim_terms(&x, &y, mask.map(|m| m.bits())) {
        Some((s, _)) => Ok(s),
        None if x.width < WINDOW || x.height < WINDOW => Err(Error::Dimensions(format!(
            "SSIM needs at least {WINDOW}x{WINDOW} pixels, got {}",
            a.dims()
        ))),
        None => Err(Error::EmptyMask),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsSsim {
    pub value: f64,
    /// Scales actually evaluated (5 unless the image is too small).
    pub scales: usize,
}

/// Multi-scale SSIM with the standard five weights and 2x2 mean
/// downsampling. Scales whose raster no longer fits a window are dropped and
/// the remaining weights renormalized. Negative contrast terms count as 0.
pub fn ms_ssim(a: &RgbPanorama, b: &RgbPanorama, mask: Option<&PixelMask>) -> Result<MsSsim> {
    check_pair(a, b, mask)?;
    let mut x = Plane::luma(a);
    let mut y = Plane::luma(b);
    let mut m: Option<Vec<bool>> = mask.map(|m| m.bits().to_vec());
    let mut terms = Vec::new();
    for scale in 0..MS_SSIM_WEIGHTS.len() {
        if scale > 0 {
            if let Some(bits) = &m {
                m = Some(downsample_mask(bits, x.width, x.height));
            }
            x = x.downsample();
            y = y.downsample();
        }
        match ssim_terms(&x, &y, m.as_deref()) {
            Some(t) => terms.push(t),
            None => break,
        }
    }
    let scales = terms.len();
    if scales == 0 {
        return Err(if x.width < WINDOW || x.height < WINDOW {
            Error::Dimensions(format!("MS-SSIM needs at least {WINDOW}x{WINDOW} pixels, got {}", a.dims()))
        } else {
            Error::EmptyMask
        });
    }
    let total: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let mut value = 1.0;
    for (s, (full, cs)) in terms.iter().enumerate() {
        let w = MS_SSIM_WEIGHTS[s] / total;
        let term = if s + 1 == scales { *full } else { *cs };
        value *= term.max(0.0).powf(w);
    }
    Ok(MsSsim { value, scales })
}

fn finite_or_string<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    #[serde(serialize_with = "finite_or_string")]
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub ms_ssim_scales: usize,
    /// Human-readable description of the evaluation mask.
    pub mask: String,
    pub pixels: usize,
    /// Reserved for a perceptual metric; never computed.
    pub lpips: Option<f64>,
}

/// All metrics over one mask.
pub fn evaluate(
    pred: &RgbPanorama,
    truth: &RgbPanorama,
    mask: Option<&PixelMask>,
    description: impl Into<String>,
) -> Result<MetricReport> {
    let ms = ms_ssim(pred, truth, mask)?;
    Ok(MetricReport {
        psnr: psnr(pred, truth, mask)?,
        ssim: ssim(pred, truth, mask)?,
        ms_ssim: ms.value,
        ms_ssim_scales: ms.scales,
        mask: description.into(),
        pixels: mask.map_or(pred.dims().pixel_count(), |m| m.count()),
        lpips: None,
    })
}
