use super::raster::RasterImage;
use crate::scalar::Scalar;

/// Source coordinate of output index `i` under corner-aligned sampling.
#[inline]
fn source_coord(i: usize, out_len: usize, in_len: usize) -> f64 {
    if out_len <= 1 {
        0.0
    } else {
        i as f64 * (in_len - 1) as f64 / (out_len - 1) as f64
    }
}

/// Bilinear resampling with corner-aligned sample positions.
///
/// The four corners of the output land exactly on the input corners, so a
/// resample to the same size is the identity.
pub fn resample_bilinear<T: Scalar>(img: &RasterImage<T>, new_height: usize, new_width: usize) -> RasterImage<T> {
    assert!(new_height > 0 && new_width > 0, "resample target must be non-empty");
    let (h, w) = (img.height(), img.width());
    if new_height == h && new_width == w {
        return img.clone();
    }
    RasterImage::from_fn(new_height, new_width, |y, x| {
        let sy = source_coord(y, new_height, h);
        let sx = source_coord(x, new_width, w);
        let y0 = (sy.floor() as usize).min(h - 1);
        let x0 = (sx.floor() as usize).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let fy = T::lit(sy - y0 as f64);
        let fx = T::lit(sx - x0 as f64);
        let one = T::one();
        [0, 1, 2].map(|c| {
            let top = img.get(c, y0, x0) * (one - fx) + img.get(c, y0, x1) * fx;
            let bottom = img.get(c, y1, x0) * (one - fx) + img.get(c, y1, x1) * fx;
            top * (one - fy) + bottom * fy
        })
    })
}
