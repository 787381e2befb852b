use std::path::Path;

use image::{Rgb, RgbImage};

use super::raster::RasterImage;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Quantizes a `[0, 1]` sample to 8 bits, rounding halves up.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor().min(255.0) as u8
}

pub fn to_rgb8<T: Scalar>(img: &RasterImage<T>) -> RgbImage {
    RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        Rgb(img.pixel(y as usize, x as usize).map(|v| quantize(v.primal())))
    })
}

pub fn from_rgb8<T: Scalar>(img: &RgbImage) -> RasterImage<T> {
    RasterImage::from_fn(img.height() as usize, img.width() as usize, |y, x| {
        img.get_pixel(x as u32, y as u32).0.map(|v| T::lit(v as f64 / 255.0))
    })
}

pub fn load_png<T: Scalar>(path: &Path) -> Result<RasterImage<T>> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Codec { path: path.to_path_buf(), source: other },
    })?;
    Ok(from_rgb8(&img.to_rgb8()))
}

pub fn save_png<T: Scalar>(img: &RasterImage<T>, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    to_rgb8(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Codec { path: path.to_path_buf(), source: other },
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(0.49 / 255.0), 0);
        assert_eq!(quantize(127.5 / 255.0), 128);
    }

    #[test]
    fn png_round_trip_is_exact_on_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = RasterImage::<f64>::from_fn(3, 4, |y, x| [(y * 40) as f64 / 255.0, (x * 60) as f64 / 255.0, 1.0]);
        save_png(&img, &path).unwrap();
        let back: RasterImage<f64> = load_png(&path).unwrap();
        assert_eq!(back, img);
    }
}
