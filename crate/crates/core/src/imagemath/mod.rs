//! Deterministic image numerics: lαβ color, frequency filtering, color
//! transfer, Poisson cloning and resampling. Everything here is a pure
//! function of its inputs.

mod color;
mod io;
mod lowpass;
mod poisson;
mod raster;
mod resample;
mod transfer;

pub use color::{
    lab_to_rgb, lab_to_rgb_pixel, lightness, lightness_gradient, lms_to_rgb_matrix, rgb_to_lab, rgb_to_lab_pixel,
    rgb_to_lms_matrix, RGB_FLOOR,
};
pub use io::{from_rgb8, load_png, quantize, save_png, to_rgb8};
pub use lowpass::{highpass_energy, lowpass_filter, DEFAULT_LOWPASS_THRESHOLD, MAX_LOWPASS_THRESHOLD};
pub use poisson::{poisson_blend, poisson_solve, PoissonSolution, CG_TOLERANCE};
pub use raster::{LabImage, PixelBox, Plane, RasterImage, RegionMask};
pub use resample::resample_bilinear;
pub use transfer::{color_transfer, masked_lab_stats, ChannelStats, STD_FLOOR};
