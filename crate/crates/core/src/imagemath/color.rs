//! RGB ↔ lαβ conversion.
//!
//! RGB is mapped to cone space with a row-normalized version of the classic
//! color-transfer matrix (rows sum to one so that grays stay exactly on the
//! achromatic axis), logarithms are taken base ten, and a fixed orthogonal
//! transform decorrelates the three log-cone responses into lightness ℓ and
//! the opponent axes α (yellow–blue) and β (red–green).

use super::raster::{LabImage, Plane, RasterImage};
use crate::scalar::Scalar;

/// Samples are floored here before entering log space.
pub const RGB_FLOOR: f64 = 1.0 / 255.0;

const RGB_TO_LMS_RAW: [[f64; 3]; 3] = [
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
];

/// Row-normalized RGB → LMS matrix.
pub fn rgb_to_lms_matrix() -> [[f64; 3]; 3] {
    let mut m = RGB_TO_LMS_RAW;
    for row in &mut m {
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    m
}

/// Exact inverse of [`rgb_to_lms_matrix`].
pub fn lms_to_rgb_matrix() -> [[f64; 3]; 3] {
    invert3(&rgb_to_lms_matrix())
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = m[0][0] * cof(1, 2, 1, 2) - m[0][1] * cof(1, 2, 0, 2) + m[0][2] * cof(1, 2, 0, 1);
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = adj[i][j] / det;
        }
    }
    inv
}

#[inline]
fn mat_vec<T: Scalar>(m: &[[f64; 3]; 3], v: [T; 3]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for (o, row) in out.iter_mut().zip(m) {
        *o = T::lit(row[0]) * v[0] + T::lit(row[1]) * v[1] + T::lit(row[2]) * v[2];
    }
    out
}

/// Converts one RGB triple to (ℓ, α, β).
pub fn rgb_to_lab_pixel<T: Scalar>(rgb: [T; 3]) -> [T; 3] {
    let floor = T::lit(RGB_FLOOR);
    let rgb = rgb.map(|v| v.max(floor));
    let lms = mat_vec(&rgb_to_lms_matrix(), rgb).map(|v| v.log10());
    let (l, m, s) = (lms[0], lms[1], lms[2]);
    let two = T::lit(2.0);
    [
        (l + m + s) / T::lit(3f64.sqrt()),
        (l + m - two * s) / T::lit(6f64.sqrt()),
        (l - m) / T::lit(2f64.sqrt()),
    ]
}

/// Converts one (ℓ, α, β) triple back to RGB, without clamping.
pub fn lab_to_rgb_pixel<T: Scalar>(lab: [T; 3]) -> [T; 3] {
    let a = lab[0] / T::lit(3f64.sqrt());
    let b = lab[1] / T::lit(6f64.sqrt());
    let c = lab[2] / T::lit(2f64.sqrt());
    let ten = T::lit(10.0);
    let lms = [a + b + c, a + b - c, a - T::lit(2.0) * b].map(|v| ten.powf(v));
    mat_vec(&lms_to_rgb_matrix(), lms)
}

pub fn rgb_to_lab<T: Scalar>(img: &RasterImage<T>) -> LabImage<T> {
    let (h, w) = (img.height(), img.width());
    let n = h * w;
    let mut data = vec![T::zero(); 3 * n];
    for i in 0..n {
        let px = [img.data()[i], img.data()[n + i], img.data()[2 * n + i]];
        let lab = rgb_to_lab_pixel(px);
        for c in 0..3 {
            data[c * n + i] = lab[c];
        }
    }
    LabImage { height: h, width: w, data }
}

pub fn lab_to_rgb<T: Scalar>(img: &LabImage<T>) -> RasterImage<T> {
    let n = img.height * img.width;
    let d = &img.data;
    RasterImage::from_fn(img.height, img.width, |y, x| {
        let i = y * img.width + x;
        lab_to_rgb_pixel([d[i], d[n + i], d[2 * n + i]])
    })
}

/// The ℓ channel alone.
pub fn lightness<T: Scalar>(img: &RasterImage<T>) -> Plane<T> {
    let n = img.height() * img.width();
    let d = img.data();
    let data = (0..n).map(|i| rgb_to_lab_pixel([d[i], d[n + i], d[2 * n + i]])[0]).collect();
    Plane { height: img.height(), width: img.width(), data }
}

/// Partial derivatives of ℓ with respect to (r, g, b) at one pixel.
pub fn lightness_gradient<T: Scalar>(rgb: [T; 3]) -> [T; 3] {
    let m = rgb_to_lms_matrix();
    let floor = T::lit(RGB_FLOOR);
    let clamped = rgb.map(|v| v.max(floor));
    let lms = mat_vec(&m, clamped);
    let scale = T::lit(1.0 / (3f64.sqrt() * std::f64::consts::LN_10));
    let mut grad = [T::zero(); 3];
    for j in 0..3 {
        if rgb[j] < floor {
            continue;
        }
        let mut acc = T::zero();
        for k in 0..3 {
            acc += T::lit(m[k][j]) / lms[k];
        }
        grad[j] = acc * scale;
    }
    grad
}
