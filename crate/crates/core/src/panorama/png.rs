use std::io::Cursor;
use std::path::Path;

use image::{ColorType, ImageFormat, RgbImage};

use super::RgbPanorama;
use crate::error::{Error, Result};
use crate::geometry::ImageDims;

/// Reads an 8-bit RGB PNG as a panorama (`value / 255` per channel).
pub fn read_rgb_png(path: impl AsRef<Path>) -> Result<RgbPanorama> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| Error::format(path, e.to_string()))?;
    if img.color() != ColorType::Rgb8 {
        return Err(Error::format(
            path,
            format!("unsupported color type {:?}, expected 8-bit RGB", img.color()),
        ));
    }
    let rgb = img.into_rgb8();
    let dims = ImageDims::new(rgb.width() as usize, rgb.height() as usize)
        .map_err(|e| Error::Dimensions(format!("{}: {e}", path.display())))?;
    let pixels = rgb
        .pixels()
        .map(|p| p.0.map(|v| v as f32 / 255.0))
        .collect();
    RgbPanorama::new(dims, pixels)
}

fn to_rgb8(pano: &RgbPanorama) -> RgbImage {
    let dims = pano.dims();
    let raw = pano
        .pixels()
        .iter()
        .flat_map(|p| p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    RgbImage::from_raw(dims.width() as u32, dims.height() as u32, raw)
        .expect("raster length matches its dimensions")
}

/// Encodes a panorama as PNG bytes (deterministic for identical input).
pub fn encode_png(pano: &RgbPanorama) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    to_rgb8(pano)
        .write_to(&mut buf, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    buf.into_inner()
}

pub fn write_rgb_png(pano: &RgbPanorama, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, encode_png(pano)).map_err(|e| Error::io(path, e))
}
