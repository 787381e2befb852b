use serde::{Deserialize, Serialize};

use super::corpus::DetailLabel;
use super::manifest::AnnotatedRegion;
use crate::error::{Error, Result};
use crate::imagemath::{resample_bilinear, PixelBox, RasterImage};
use crate::scalar::Scalar;

/// Region-to-frame area fractions separating the detail levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LodThresholds {
    pub low_below: f64,
    pub high_above: f64,
}

impl Default for LodThresholds {
    fn default() -> Self {
        LodThresholds { low_below: 0.0031, high_above: 0.0048 }
    }
}

/// Small regions are low detail, large ones are art-direction examples and
/// the band between is dropped.
pub fn lod_split(region: &AnnotatedRegion, frame_area: usize, thresholds: LodThresholds) -> DetailLabel {
    debug_assert!(frame_area > 0, "frame area must be positive");
    let ratio = region.region.area() as f64 / frame_area as f64;
    if ratio < thresholds.low_below {
        DetailLabel::Low
    } else if ratio > thresholds.high_above {
        DetailLabel::High
    } else {
        DetailLabel::Discarded
    }
}

/// A resampled crop and where its parts came from.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardCrop<T = f64> {
    pub image: RasterImage<T>,
    /// The annotated box in crop coordinates.
    pub inner: PixelBox,
    /// The expanded (and clipped) box in frame coordinates.
    pub source: PixelBox,
}

/// Margin in pixels that a crop of side `size` needs so that the region
/// box is expanded by `margin` of its own side on each side.
pub fn margin_pixels(size: usize, margin: f64) -> usize {
    (size as f64 * margin / (1.0 + 2.0 * margin)).round() as usize
}

/// Expands `region.region` by `context_margin` of its size on every side,
/// clips to the frame and resamples to `out_size = (height, width)`.
pub fn standardize_crop<T: Scalar>(
    frame: &RasterImage<T>,
    region: &AnnotatedRegion,
    out_size: (usize, usize),
    context_margin: f64,
) -> Result<StandardCrop<T>> {
    let b = region.region;
    if b.w == 0 || b.h == 0 || !b.fits_within(frame.height(), frame.width()) {
        return Err(Error::InvalidImage(format!("degenerate or out-of-frame box {b:?}")));
    }
    if out_size.0 == 0 || out_size.1 == 0 {
        return Err(Error::Config("crop size must be positive".into()));
    }
    if !(0.0..0.5).contains(&context_margin) {
        return Err(Error::Config(format!("context margin {context_margin} outside [0, 0.5)")));
    }
    let mx = (b.w as f64 * context_margin).round() as usize;
    let my = (b.h as f64 * context_margin).round() as usize;
    let x0 = b.x.saturating_sub(mx);
    let y0 = b.y.saturating_sub(my);
    let x1 = (b.x + b.w + mx).min(frame.width());
    let y1 = (b.y + b.h + my).min(frame.height());
    let source = PixelBox::new(x0, y0, x1 - x0, y1 - y0);
    let crop = frame.crop(source)?;
    let image = resample_bilinear(&crop, out_size.0, out_size.1);
    let sx = out_size.1 as f64 / source.w as f64;
    let sy = out_size.0 as f64 / source.h as f64;
    let ix = ((b.x - x0) as f64 * sx).round() as usize;
    let iy = ((b.y - y0) as f64 * sy).round() as usize;
    let iw = ((b.w as f64 * sx).round() as usize).clamp(1, out_size.1 - ix.min(out_size.1 - 1));
    let ih = ((b.h as f64 * sy).round() as usize).clamp(1, out_size.0 - iy.min(out_size.0 - 1));
    Ok(StandardCrop { image, inner: PixelBox::new(ix.min(out_size.1 - 1), iy.min(out_size.0 - 1), iw, ih), source })
}
