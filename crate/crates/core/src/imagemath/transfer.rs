use super::color::{lab_to_rgb_pixel, rgb_to_lab};
use super::raster::{LabImage, RasterImage, RegionMask};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Floor on the target standard deviation when computing the scale factor.
pub const STD_FLOOR: f64 = 1e-6;

/// Mean and (population) standard deviation of one channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

/// Mask-weighted statistics of each lαβ channel.
pub fn masked_lab_stats<T: Scalar>(lab: &LabImage<T>, mask: &RegionMask<T>) -> Result<[ChannelStats; 3]> {
    if mask.height() != lab.height() || mask.width() != lab.width() {
        return Err(Error::Shape(format!(
            "mask {}x{} does not match image {}x{}",
            mask.height(),
            mask.width(),
            lab.height(),
            lab.width()
        )));
    }
    let support = mask.support();
    if support < 2 {
        return Err(Error::DegenerateStatistics(format!(
            "mask support of {support} pixel(s); need at least 2"
        )));
    }
    let weights: Vec<f64> = mask.data().iter().map(|w| w.primal()).collect();
    let total: f64 = weights.iter().sum();
    let mut out = [ChannelStats { mean: 0.0, std: 0.0 }; 3];
    for (c, stats) in out.iter_mut().enumerate() {
        let plane = lab.plane(c);
        let mean = plane.iter().zip(&weights).map(|(v, w)| v.primal() * w).sum::<f64>() / total;
        let var = plane
            .iter()
            .zip(&weights)
            .map(|(v, w)| {
                let d = v.primal() - mean;
                w * d * d
            })
            .sum::<f64>()
            / total;
        *stats = ChannelStats { mean, std: var.sqrt() };
    }
    Ok(out)
}

/// Matches the target region's lαβ statistics to the reference region's.
///
/// Inside the target mask each channel is shifted and scaled so its masked
/// mean and standard deviation equal the reference's, then blended by the
/// mask weight and converted back to RGB. Pixels with zero weight are copied
/// verbatim.
pub fn color_transfer<T: Scalar>(
    target: &RasterImage<T>,
    target_mask: &RegionMask<T>,
    reference: &RasterImage<T>,
    reference_mask: &RegionMask<T>,
) -> Result<RasterImage<T>> {
    let target_lab = rgb_to_lab(target);
    let reference_lab = rgb_to_lab(reference);
    let t_stats = masked_lab_stats(&target_lab, target_mask)?;
    let r_stats = masked_lab_stats(&reference_lab, reference_mask)?;

    let (h, w) = (target.height(), target.width());
    let n = h * w;
    let mut out = target.clone();
    for i in 0..n {
        let weight = target_mask.data()[i];
        if weight <= T::zero() {
            continue;
        }
        let mut lab = [T::zero(); 3];
        for c in 0..3 {
            let x = target_lab.plane(c)[i];
            let scale = r_stats[c].std / t_stats[c].std.max(STD_FLOOR);
            let moved = (x - T::lit(t_stats[c].mean)) * T::lit(scale) + T::lit(r_stats[c].mean);
            lab[c] = weight * moved + (T::one() - weight) * x;
        }
        let rgb = lab_to_rgb_pixel(lab);
        out.set_pixel(i / w, i % w, rgb);
    }
    Ok(out)
}
