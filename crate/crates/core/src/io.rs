//! 8-bit PNG input and output.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{domain_err, Result};
use crate::imaging::Image;
use crate::tensor::Tensor;

/// Loads a PNG as RGB with values scaled to `[0, 1]`.
pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let rgb = image::open(path.as_ref())?.into_rgb8();
    Ok(from_rgb8(&rgb))
}

pub fn from_rgb8(rgb: &RgbImage) -> Image {
    let (w, h) = rgb.dimensions();
    Image::from_fn(3, h as usize, w as usize, |c, y, x| {
        rgb.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    })
}

/// Quantises to 8 bits; values are clamped to `[0, 1]` first.
pub fn to_rgb8(img: &Image) -> Result<RgbImage> {
    if img.channels() != 3 {
        return domain_err!("PNG export needs 3 channels, got {}", img.channels());
    }
    let t = img.tensor();
    let (h, w) = img.size();
    Ok(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let q = |c| (t.at(c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([q(0), q(1), q(2)])
    }))
}

pub fn save_png(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    to_rgb8(img)?.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

/// Rounds an image to the values it would have after a PNG round trip.
pub fn quantize(img: &Image) -> Image {
    let t: Tensor = img.tensor().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
    Image::new(t).expect("quantised image stays finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_on_quantised_values() {
        let dir = tempfile::tempdir().unwrap();
        let img = quantize(&Image::from_fn(3, 5, 7, |c, y, x| ((c * 31 + y * 7 + x) % 13) as f32 / 12.0));
        let path = dir.path().join("a.png");
        save_png(&path, &img).unwrap();
        assert_eq!(load_png(&path).unwrap(), img);
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(load_png("/nonexistent/definitely/not/here.png").is_err());
    }
}
