use super::raster::{Plane, RegionMask};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_LOWPASS_THRESHOLD: f64 = 0.06;

/// Largest meaningful radial cutoff: the corner frequency (0.5, 0.5).
pub const MAX_LOWPASS_THRESHOLD: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Brick-wall radial low-pass.
///
/// Every DFT coefficient whose normalized frequency `‖(u/H, v/W)‖₂` exceeds
/// `threshold` is zeroed; frequencies are taken in `[-0.5, 0.5)` per axis.
/// The cutoff region is symmetric under negation, so the operator is a real
/// orthogonal projection: linear, idempotent and self-adjoint.
pub fn lowpass_filter<T: Scalar>(plane: &Plane<T>, threshold: f64) -> Result<Plane<T>> {
    check_threshold(threshold)?;
    if plane.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidImage("non-finite sample in low-pass input".into()));
    }
    if plane.data.len() != plane.height * plane.width || plane.data.is_empty() {
        return Err(Error::Shape(format!("bad plane {}x{}", plane.height, plane.width)));
    }
    let mut out = plane.data.clone();
    T::lowpass_plane(&mut out, plane.height, plane.width, threshold);
    Ok(Plane { height: plane.height, width: plane.width, data: out })
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=MAX_LOWPASS_THRESHOLD).contains(&threshold) {
        return Err(Error::Config(format!(
            "low-pass threshold {threshold} outside [0, {MAX_LOWPASS_THRESHOLD:.6}]"
        )));
    }
    Ok(())
}

/// Mean squared high-frequency residual `x − F(x)` over the mask support.
///
/// This is the detail-energy measure used to compare redrawn regions: it
/// is zero for content that survives the low-pass untouched.
pub fn highpass_energy<T: Scalar>(plane: &Plane<T>, mask: &RegionMask<T>, threshold: f64) -> Result<f64> {
    if mask.height() != plane.height || mask.width() != plane.width {
        return Err(Error::Shape("mask does not match plane".into()));
    }
    let low = lowpass_filter(plane, threshold)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (x, f)) in plane.data.iter().zip(&low.data).enumerate() {
        let w = mask.data()[i].primal();
        let r = (*x - *f).primal();
        num += w * r * r;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::DegenerateStatistics("empty mask".into()));
    }
    Ok(num / den)
}
