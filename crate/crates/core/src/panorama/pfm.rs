//! Grayscale portable float map (`Pf`) storage for depth panoramas.
//!
//! Scanlines are stored bottom-to-top as in the reference format. Written
//! files are little-endian (negative scale field); both byte orders are read.
//! Missing depths are written as `0.0`, and any non-positive stored value is
//! read back as missing.

use std::fs;
use std::path::Path;

use super::DepthPanorama;
use crate::error::{Error, Result};
use crate::geometry::ImageDims;

pub fn write_depth_pfm(depth: &DepthPanorama, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dims = depth.dims();
    let mut out = format!("Pf\n{} {}\n-1.0\n", dims.width(), dims.height()).into_bytes();
    out.reserve(dims.pixel_count() * 4);
    for row in depth.depths().chunks_exact(dims.width()).rev() {
        for &d in row {
            let v = if d.is_finite() { d } else { 0.0 };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_depth_pfm(path: impl AsRef<Path>) -> Result<DepthPanorama> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (width, height, depths) = parse(&bytes).map_err(|reason| Error::format(path, reason))?;
    DepthPanorama::new(ImageDims::new(width, height)?, depths)
}

/// Reads a depth map and checks it has the expected extent.
pub fn read_depth_pfm_expect(path: impl AsRef<Path>, dims: ImageDims) -> Result<DepthPanorama> {
    let depth = read_depth_pfm(path.as_ref())?;
    if depth.dims() != dims {
        return Err(Error::Dimensions(format!(
            "{}: depth map is {}, expected {dims}",
            path.as_ref().display(),
            depth.dims()
        )));
    }
    Ok(depth)
}

fn parse(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f32>), String> {
    let mut pos = 0usize;
    let mut token = || -> std::result::Result<String, String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "Pf" {
        return Err(format!("bad magic '{magic}', expected grayscale 'Pf'"));
    }
    let width: usize = token()?.parse().map_err(|_| "bad width")?;
    let height: usize = token()?.parse().map_err(|_| "bad height")?;
    let scale: f32 = token()?.parse().map_err(|_| "bad scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err("scale field must be non-zero".into());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let little = scale < 0.0;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or("dimensions overflow")?;
    let data = bytes.get(pos..).unwrap_or_default();
    if data.len() != expected {
        return Err(format!(
            "expected {expected} bytes of raster data, found {}",
            data.len()
        ));
    }
    let mut depths = vec![0.0f32; width * height];
    for (row_idx, row) in data.chunks_exact(width * 4).enumerate() {
        let j = height - 1 - row_idx;
        for (i, b) in row.chunks_exact(4).enumerate() {
            let raw = [b[0], b[1], b[2], b[3]];
            depths[j * width + i] = if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
        }
    }
    Ok((width, height, depths))
}
