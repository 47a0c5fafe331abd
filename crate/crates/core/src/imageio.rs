//! PNG conversion for frames, masks and localization maps.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{Tensor2, Tensor3};

/// RGB PNG as an `H×W×3` tensor in `[0, 1]`.
pub fn read_rgb(path: &Path) -> Result<Tensor3> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|b| f64::from(b) / 255.0).collect();
    Tensor3::from_vec(h, w, 3, data)
}

pub fn write_rgb(frame: &Tensor3, path: &Path) -> Result<()> {
    let (h, w, c) = frame.shape();
    if c != 3 {
        return Err(Error::Shape(format!("expected 3 channels, got {c}")));
    }
    let mut img = RgbImage::new(w as u32, h as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let (i, j) = (y as usize, x as usize);
        *px = Rgb([0, 1, 2].map(|ch| quantize(frame.get(i, j, ch))));
    }
    img.save(path)?;
    Ok(())
}

/// 8-bit grayscale PNG as an `H×W` map in `[0, 1]`.
pub fn read_gray(path: &Path) -> Result<Tensor2> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|b| f64::from(b) / 255.0).collect();
    Tensor2::from_vec(h, w, data)
}

pub fn write_gray(map: &Tensor2, path: &Path) -> Result<()> {
    let (h, w) = map.shape();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([quantize(map[(y as usize, x as usize)])])
    });
    img.save(path)?;
    Ok(())
}

/// `[0, 1]` to `0..=255`, rounding to nearest.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
