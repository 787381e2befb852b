//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All image math and the autodiff tape are written against [`Scalar`]. The
//! two hot kernels (dense matrix product and the frequency-domain low-pass)
//! are trait hooks so the primitive floats can dispatch to optimized code
//! while [`Dual`](crate::Dual) numbers split into real and tangent parts.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use rustfft::num_complex::Complex;
use rustfft::{FftNum, FftPlanner};

/// Real scalar usable by the image and network code.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// `c (+)= a · b` for an `m×k` by `k×n` product.
    ///
    /// Matrices are addressed through explicit row/column strides so that
    /// transposed operands need no copy. When `accumulate` is false `c` is
    /// overwritten.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        c: &mut [Self],
        accumulate: bool,
    ) {
        naive_gemm(m, k, n, a, a_strides, b, b_strides, c, accumulate)
    }

    /// Brick-wall radial low-pass of one `height×width` plane, in place.
    fn lowpass_plane(plane: &mut [Self], height: usize, width: usize, threshold: f64);

    /// Literal conversion from `f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Primal value as `f64` (drops tangent parts of dual numbers).
    fn primal(self) -> f64;
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn naive_gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    (rsa, csa): (usize, usize),
    b: &[T],
    (rsb, csb): (usize, usize),
    c: &mut [T],
    accumulate: bool,
) {
    for i in 0..m {
        for j in 0..n {
            let mut acc = if accumulate { c[i * n + j] } else { T::zero() };
            for p in 0..k {
                acc += a[i * rsa + p * csa] * b[p * rsb + j * csb];
            }
            c[i * n + j] = acc;
        }
    }
}

macro_rules! impl_primitive {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                (rsa, csa): (usize, usize),
                b: &[Self],
                (rsb, csb): (usize, usize),
                c: &mut [Self],
                accumulate: bool,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                assert!(c.len() >= m * n, "gemm output too small");
                if k > 0 {
                    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa, "gemm lhs too small");
                    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb, "gemm rhs too small");
                }
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: the bounds of every addressed element were checked above.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn lowpass_plane(plane: &mut [Self], height: usize, width: usize, threshold: f64) {
                fft_lowpass(plane, height, width, threshold)
            }

            #[inline]
            fn primal(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_primitive!(f32, matrixmultiply::sgemm);
impl_primitive!(f64, matrixmultiply::dgemm);

/// Signed normalized frequency of DFT bin `k` out of `n`, in `[-0.5, 0.5)`.
#[inline]
pub(crate) fn bin_frequency(k: usize, n: usize) -> f64 {
    if 2 * k < n {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

fn fft_lowpass<T: FftNum + Float>(plane: &mut [T], height: usize, width: usize, threshold: f64) {
    assert_eq!(plane.len(), height * width, "plane shape mismatch");
    let mut planner = FftPlanner::<T>::new();
    let row_fwd = planner.plan_fft_forward(width);
    let col_fwd = planner.plan_fft_forward(height);
    let row_inv = planner.plan_fft_inverse(width);
    let col_inv = planner.plan_fft_inverse(height);

    let mut buf: Vec<Complex<T>> = plane.iter().map(|&v| Complex::new(v, T::zero())).collect();
    let mut column = vec![Complex::new(T::zero(), T::zero()); height];

    row_fwd.process(&mut buf);
    for x in 0..width {
        for y in 0..height {
            column[y] = buf[y * width + x];
        }
        col_fwd.process(&mut column);
        for y in 0..height {
            let fy = bin_frequency(y, height);
            let fx = bin_frequency(x, width);
            let keep = (fy * fy + fx * fx).sqrt() <= threshold;
            buf[y * width + x] = if keep { column[y] } else { Complex::new(T::zero(), T::zero()) };
        }
    }
    for x in 0..width {
        for y in 0..height {
            column[y] = buf[y * width + x];
        }
        col_inv.process(&mut column);
        for y in 0..height {
            buf[y * width + x] = column[y];
        }
    }
    row_inv.process(&mut buf);

    let norm = T::from(height * width).expect("size representable");
    for (dst, src) in plane.iter_mut().zip(&buf) {
        *dst = src.re / norm;
    }
}
