//! Pose request to encoded image. Shared by `synthesize` and the service so
//! both produce identical bytes for the same request.

use std::io::Cursor;
use std::time::Instant;

use anyhow::{bail, Result};
use image::{ImageFormat, RgbImage};
use omniview::dataset::Dataset;
use omniview::geometry::{project_local, ImageDims, Pose, Vec3};
use omniview::panorama::{encode_png, RgbPanorama};
use omniview::synthesis::{synthesize_view, SynthesisConfig, SynthesisOutput};

use crate::protocol::{HealthReport, OutputSpec, PoseRequest, TIERS};

pub struct Rendered {
    pub png: Vec<u8>,
    pub width: u32,
    pub height: u32,
    pub hole_fraction: f64,
    pub latency_ms: f64,
    pub output: SynthesisOutput,
}

pub struct Renderer {
    pub dataset: Dataset,
    pub cfg: SynthesisConfig,
    /// Largest equirectangular width served.
    pub max_width: usize,
}

impl Renderer {
    pub fn new(dataset: Dataset, cfg: SynthesisConfig, max_width: usize) -> Self {
        Self {
            dataset,
            cfg,
            max_width,
        }
    }

    fn allowed(&self, width: usize) -> bool {
        (TIERS.contains(&width) || width == self.dataset.dims().width()) && width <= self.max_width
    }

    pub fn tiers(&self) -> Vec<usize> {
        let mut t: Vec<usize> = TIERS
            .iter()
            .copied()
            .chain([self.dataset.dims().width()])
            .filter(|w| self.allowed(*w))
            .collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    pub fn validate(&self, req: &PoseRequest) -> Result<(Pose, ImageDims)> {
        if !req.position.iter().all(|v| v.is_finite()) {
            bail!("position must be finite");
        }
        let pose = Pose::from_yaw_pitch_roll(Vec3::from(req.position), req.yaw, req.pitch, req.roll)?;
        let width = req.quality.unwrap_or(self.dataset.dims().width());
        if !self.allowed(width) {
            bail!("quality {width} is not one of the served widths {:?}", self.tiers());
        }
        if let OutputSpec::Perspective { fov_deg, width, height } = req.output {
            if !(fov_deg > 0.0 && fov_deg < 180.0) {
                bail!("perspective fov_deg must lie in (0, 180), got {fov_deg}");
            }
            if !(1..=4096).contains(&width) || !(1..=4096).contains(&height) {
                bail!("perspective size must lie in 1..=4096, got {width}x{height}");
            }
        }
        Ok((pose, ImageDims::from_width(width)?))
    }

    pub fn render(&self, req: &PoseRequest) -> Result<Rendered> {
        let (pose, dims) = self.validate(req)?;
        let start = Instant::now();
        let output = synthesize_view(&pose, dims, &self.dataset.frames, self.dataset.world_unit, &self.cfg)?;
        let (png, width, height) = match req.output {
            OutputSpec::Equirect => (encode_png(&output.rgb), dims.width() as u32, dims.height() as u32),
            OutputSpec::Perspective { fov_deg, width, height } => {
                let img = perspective(&output.rgb, fov_deg, width, height);
                let mut buf = Cursor::new(Vec::new());
                img.write_to(&mut buf, ImageFormat::Png)?;
                (buf.into_inner(), width, height)
            }
        };
        Ok(Rendered {
            png,
            width,
            height,
            hole_fraction: output.hole_fraction(),
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
            output,
        })
    }

    pub fn health(&self) -> HealthReport {
        let dims = self.dataset.dims();
        HealthReport {
            status: "ok".into(),
            frames: self.dataset.frames.len(),
            width: dims.width(),
            height: dims.height(),
            memory_bytes: self.dataset.memory_bytes(),
            depth_source: self.dataset.source.name().into(),
            world_unit: self.dataset.world_unit,
            tiers: self.tiers(),
        }
    }
}

/// Pinhole view along the panorama's forward axis (+x, right = +z, up = +y).
pub fn perspective(pano: &RgbPanorama, fov_deg: f64, width: u32, height: u32) -> RgbImage {
    let half = (fov_deg.to_radians() / 2.0).tan();
    let aspect = height as f64 / width as f64;
    RgbImage::from_fn(width, height, |u, v| {
        let x = (2.0 * (u as f64 + 0.5) / width as f64 - 1.0) * half;
        let y = (1.0 - 2.0 * (v as f64 + 0.5) / height as f64) * half * aspect;
        let p = project_local(&Vec3::new(1.0, y, x), pano.dims()).expect("non-zero ray");
        let c = pano.sample_bilinear(p.x, p.y);
        image::Rgb(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perspective_center_looks_forward() {
        let dims = ImageDims::new(64, 32).unwrap();
        // forward (theta = 0) sits at the center column
        let pano = RgbPanorama::from_fn(dims, |i, _| if (30..34).contains(&i) { [1.0; 3] } else { [0.0; 3] });
        let img = perspective(&pano, 20.0, 9, 9);
        assert_eq!(img.get_pixel(4, 4).0, [255; 3]);
        let wide = perspective(&pano, 150.0, 33, 9);
        assert_eq!(wide.get_pixel(0, 4).0, [0; 3]);
    }
}
