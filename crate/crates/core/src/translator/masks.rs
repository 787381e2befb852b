use crate::error::{Error, Result};
use crate::imagemath::{PixelBox, RegionMask};
use crate::neuralcore::Tensor;
use crate::scalar::Scalar;

pub const DEFAULT_BAND_FRACTION: f64 = 0.125;
pub const DEFAULT_BORDER_FRACTION: f64 = 0.25;

/// Initial coverage for the two discriminators.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPair<T = f64> {
    /// The redrawn region.
    pub quality: RegionMask<T>,
    /// Everything outside the region plus an inner band along its edge.
    pub context: RegionMask<T>,
    /// Band widths `(horizontal, vertical)` in pixels.
    pub band: (usize, usize),
}

/// Builds the quality and context masks for a crop of `(height, width)`
/// whose redrawn region is `region`.
///
/// The band is `band_fraction` of the box side, at least one pixel. The
/// border ring is whatever the crop holds outside the box; the context
/// mask covers all of it. `border_fraction` is the margin a crop is
/// expected to carry and is only range-checked here.
pub fn build_masks<T: Scalar>(
    crop_size: (usize, usize),
    region: PixelBox,
    band_fraction: f64,
    border_fraction: f64,
) -> Result<MaskPair<T>> {
    let (h, w) = crop_size;
    for (name, f) in [("band", band_fraction), ("border", border_fraction)] {
        if !(f > 0.0 && f < 0.5) {
            return Err(Error::Config(format!("{name} fraction {f} outside (0, 0.5)")));
        }
    }
    if region.w == 0 || region.h == 0 || !region.fits_within(h, w) {
        return Err(Error::Validation(format!("region {region:?} outside the {h}x{w} crop")));
    }
    let bx = ((band_fraction * region.w as f64).round() as usize).max(1);
    let by = ((band_fraction * region.h as f64).round() as usize).max(1);
    let deep = |row: usize, col: usize| {
        row >= region.y + by && row + by < region.y + region.h && col >= region.x + bx && col + bx < region.x + region.w
    };
    Ok(MaskPair {
        quality: RegionMask::from_box(h, w, region),
        context: RegionMask::from_predicate(h, w, |r, c| !deep(r, c)),
        band: (bx, by),
    })
}

/// A mask repeated over a batch, `[n, 1, H, W]`.
pub fn mask_batch<T: Scalar>(mask: &RegionMask<T>, n: usize) -> Tensor<T> {
    let plane = mask.data();
    let data = (0..n).flat_map(|_| plane.iter().copied()).collect();
    Tensor::new(vec![n, 1, mask.height(), mask.width()], data).expect("mask batch shape")
}
