//! First-order dual numbers `re + ε·eps` with `ε² = 0`.
//!
//! Running the reverse-mode tape over `Dual<T>` yields forward-over-reverse
//! derivatives: seeding an input's tangent with a direction `v` makes the
//! tangent part of every parameter gradient equal to the mixed second
//! derivative applied to `v`. The R1 penalty needs exactly that product.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Float, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Float> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }

    /// A constant (zero tangent).
    pub fn constant(re: T) -> Self {
        Dual { re, eps: T::zero() }
    }

    /// Chain rule for a unary function with value `f` and derivative `df` at `re`.
    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        Dual { re: f, eps: self.eps * df }
    }
}

impl<T: PartialEq> PartialEq for Dual<T> {
    fn eq(&self, other: &Self) -> bool {
        self.re == other.re
    }
}

impl<T: PartialOrd> PartialOrd for Dual<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.re.partial_cmp(&other.re)
    }
}

impl<T: fmt::Display> fmt::Display for Dual<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}ε", self.re, self.eps)
    }
}

impl<T: Float> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, eps: self.eps + o.eps }
    }
}

impl<T: Float> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, eps: self.eps - o.eps }
    }
}

impl<T: Float> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual { re: self.re * o.re, eps: self.re * o.eps + self.eps * o.re }
    }
}

impl<T: Float> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.re;
        Dual { re: self.re * inv, eps: (self.eps * o.re - self.re * o.eps) * inv * inv }
    }
}

impl<T: Float> Rem for Dual<T> {
    type Output = Self;
    fn rem(self, o: Self) -> Self {
        // x mod y = x - trunc(x/y)·y, trunc locally constant.
        let q = (self.re / o.re).trunc();
        Dual { re: self.re % o.re, eps: self.eps - q * o.eps }
    }
}

impl<T: Float> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual { re: -self.re, eps: -self.eps }
    }
}

macro_rules! assign_op {
    ($tr:ident, $f:ident, $op:tt) => {
        impl<T: Float> $tr for Dual<T> {
            #[inline]
            fn $f(&mut self, o: Self) {
                *self = *self $op o;
            }
        }
    };
}
assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);
assign_op!(RemAssign, rem_assign, %);

impl<T: Float> Sum for Dual<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

impl<T: Float> Zero for Dual<T> {
    fn zero() -> Self {
        Self::constant(T::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.eps.is_zero()
    }
}

impl<T: Float> One for Dual<T> {
    fn one() -> Self {
        Self::constant(T::one())
    }
}

impl<T: Float> Num for Dual<T> {
    type FromStrRadixErr = T::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        T::from_str_radix(s, radix).map(Self::constant)
    }
}

impl<T: Float> ToPrimitive for Dual<T> {
    fn to_i64(&self) -> Option<i64> {
        self.re.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.re.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        self.re.to_f64()
    }
}

impl<T: Float> NumCast for Dual<T> {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        <T as NumCast>::from(n).map(Self::constant)
    }
}

impl<T: Float + FromPrimitive> FromPrimitive for Dual<T> {
    fn from_i64(n: i64) -> Option<Self> {
        T::from_i64(n).map(Self::constant)
    }
    fn from_u64(n: u64) -> Option<Self> {
        T::from_u64(n).map(Self::constant)
    }
    fn from_f64(n: f64) -> Option<Self> {
        T::from_f64(n).map(Self::constant)
    }
}

impl<T: Float> Float for Dual<T> {
    fn nan() -> Self {
        Self::constant(T::nan())
    }
    fn infinity() -> Self {
        Self::constant(T::infinity())
    }
    fn neg_infinity() -> Self {
        Self::constant(T::neg_infinity())
    }
    fn neg_zero() -> Self {
        Self::constant(T::neg_zero())
    }
    fn min_value() -> Self {
        Self::constant(T::min_value())
    }
    fn min_positive_value() -> Self {
        Self::constant(T::min_positive_value())
    }
    fn max_value() -> Self {
        Self::constant(T::max_value())
    }
    fn is_nan(self) -> bool {
        self.re.is_nan() || self.eps.is_nan()
    }
    fn is_infinite(self) -> bool {
        self.re.is_infinite() || self.eps.is_infinite()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }
    fn is_normal(self) -> bool {
        self.re.is_normal()
    }
    fn classify(self) -> FpCategory {
        self.re.classify()
    }
    fn floor(self) -> Self {
        Self::constant(self.re.floor())
    }
    fn ceil(self) -> Self {
        Self::constant(self.re.ceil())
    }
    fn round(self) -> Self {
        Self::constant(self.re.round())
    }
    fn trunc(self) -> Self {
        Self::constant(self.re.trunc())
    }
    fn fract(self) -> Self {
        Dual { re: self.re.fract(), eps: self.eps }
    }
    fn abs(self) -> Self {
        if self.re < T::zero() {
            -self
        } else {
            self
        }
    }
    fn signum(self) -> Self {
        Self::constant(self.re.signum())
    }
    fn is_sign_positive(self) -> bool {
        self.re.is_sign_positive()
    }
    fn is_sign_negative(self) -> bool {
        self.re.is_sign_negative()
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        Self::one() / self
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        let f = self.re.powi(n);
        let df = T::from(n).unwrap() * self.re.powi(n - 1);
        self.chain(f, df)
    }
    fn powf(self, n: Self) -> Self {
        if n.eps.is_zero() {
            let f = self.re.powf(n.re);
            let df = n.re * self.re.powf(n.re - T::one());
            self.chain(f, df)
        } else {
            (self.ln() * n).exp()
        }
    }
    fn sqrt(self) -> Self {
        let f = self.re.sqrt();
        self.chain(f, T::one() / (f + f))
    }
    fn exp(self) -> Self {
        let f = self.re.exp();
        self.chain(f, f)
    }
    fn exp2(self) -> Self {
        let f = self.re.exp2();
        self.chain(f, f * T::from(std::f64::consts::LN_2).unwrap())
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), self.re.recip())
    }
    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }
    fn log2(self) -> Self {
        self.chain(self.re.log2(), (self.re * T::from(std::f64::consts::LN_2).unwrap()).recip())
    }
    fn log10(self) -> Self {
        self.chain(self.re.log10(), (self.re * T::from(std::f64::consts::LN_10).unwrap()).recip())
    }
    fn max(self, o: Self) -> Self {
        if o.re > self.re || self.re.is_nan() {
            o
        } else {
            self
        }
    }
    fn min(self, o: Self) -> Self {
        if o.re < self.re || self.re.is_nan() {
            o
        } else {
            self
        }
    }
    fn abs_sub(self, o: Self) -> Self {
        if self.re <= o.re {
            Self::zero()
        } else {
            self - o
        }
    }
    fn cbrt(self) -> Self {
        let f = self.re.cbrt();
        self.chain(f, (T::from(3.0).unwrap() * f * f).recip())
    }
    fn hypot(self, o: Self) -> Self {
        (self * self + o * o).sqrt()
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn tan(self) -> Self {
        let f = self.re.tan();
        self.chain(f, T::one() + f * f)
    }
    fn asin(self) -> Self {
        self.chain(self.re.asin(), (T::one() - self.re * self.re).sqrt().recip())
    }
    fn acos(self) -> Self {
        self.chain(self.re.acos(), -(T::one() - self.re * self.re).sqrt().recip())
    }
    fn atan(self) -> Self {
        self.chain(self.re.atan(), (T::one() + self.re * self.re).recip())
    }
    fn atan2(self, o: Self) -> Self {
        let d = self.re * self.re + o.re * o.re;
        Dual { re: self.re.atan2(o.re), eps: (o.re * self.eps - self.re * o.eps) / d }
    }
    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
    fn exp_m1(self) -> Self {
        self.chain(self.re.exp_m1(), self.re.exp())
    }
    fn ln_1p(self) -> Self {
        self.chain(self.re.ln_1p(), (T::one() + self.re).recip())
    }
    fn sinh(self) -> Self {
        self.chain(self.re.sinh(), self.re.cosh())
    }
    fn cosh(self) -> Self {
        self.chain(self.re.cosh(), self.re.sinh())
    }
    fn tanh(self) -> Self {
        let f = self.re.tanh();
        self.chain(f, T::one() - f * f)
    }
    fn asinh(self) -> Self {
        self.chain(self.re.asinh(), (self.re * self.re + T::one()).sqrt().recip())
    }
    fn acosh(self) -> Self {
        self.chain(self.re.acosh(), (self.re * self.re - T::one()).sqrt().recip())
    }
    fn atanh(self) -> Self {
        self.chain(self.re.atanh(), (T::one() - self.re * self.re).recip())
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        self.re.integer_decode()
    }
}

fn split<T: Copy>(v: &[Dual<T>]) -> (Vec<T>, Vec<T>) {
    v.iter().map(|d| (d.re, d.eps)).unzip()
}

impl<T: Scalar> Scalar for Dual<T> {
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
        // (A + εA')(B + εB') = AB + ε(A'B + AB'), three primal products.
        let (a_re, a_eps) = split(a);
        let (b_re, b_eps) = split(b);
        let (mut c_re, mut c_eps) = split(&c[..m * n]);
        T::gemm(m, k, n, &a_re, a_strides, &b_re, b_strides, &mut c_re, accumulate);
        T::gemm(m, k, n, &a_eps, a_strides, &b_re, b_strides, &mut c_eps, accumulate);
        T::gemm(m, k, n, &a_re, a_strides, &b_eps, b_strides, &mut c_eps, true);
        for (dst, (re, eps)) in c.iter_mut().zip(c_re.into_iter().zip(c_eps)) {
            *dst = Dual { re, eps };
        }
    }

    fn lowpass_plane(plane: &mut [Self], height: usize, width: usize, threshold: f64) {
        let (mut re, mut eps) = split(plane);
        T::lowpass_plane(&mut re, height, width, threshold);
        T::lowpass_plane(&mut eps, height, width, threshold);
        for (dst, (re, eps)) in plane.iter_mut().zip(re.into_iter().zip(eps)) {
            *dst = Dual { re, eps };
        }
    }

    fn primal(self) -> f64 {
        self.re.primal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D = Dual<f64>;

    fn var(x: f64) -> D {
        Dual::new(x, 1.0)
    }

    #[test]
    fn derivatives_of_elementary_functions() {
        let x = 0.7;
        let cases: Vec<(D, f64)> = vec![
            (var(x).exp(), x.exp()),
            (var(x).ln(), 1.0 / x),
            (var(x).sqrt(), 0.5 / x.sqrt()),
            (var(x).log10(), 1.0 / (x * std::f64::consts::LN_10)),
            (var(x).powi(3), 3.0 * x * x),
            (var(x).tanh(), 1.0 - x.tanh().powi(2)),
            (var(x) * var(x) / (var(x) + D::one()), (x * x + 2.0 * x) / (x + 1.0).powi(2)),
        ];
        for (got, want) in cases {
            assert!((got.eps - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn dual_gemm_is_product_rule() {
        let a: Vec<D> = vec![Dual::new(1.0, 0.5), Dual::new(2.0, -1.0)];
        let b: Vec<D> = vec![Dual::new(3.0, 2.0), Dual::new(-1.0, 0.0)];
        let mut c = vec![D::zero(); 1];
        D::gemm(1, 2, 1, &a, (2, 1), &b, (1, 1), &mut c, false);
        let mut slow = vec![D::zero(); 1];
        crate::scalar::naive_gemm(1, 2, 1, &a, (2, 1), &b, (1, 1), &mut slow, false);
        assert_eq!(c[0].re, slow[0].re);
        assert!((c[0].eps - slow[0].eps).abs() < 1e-12);
    }

    #[test]
    fn comparisons_use_primal_part() {
        assert!(Dual::new(1.0, 5.0) < Dual::new(2.0, -5.0));
        assert_eq!(Dual::new(-2.0, 1.0).abs().eps, -1.0);
        assert_eq!(Dual::new(3.0, 1.0).max(Dual::new(1.0, 7.0)).eps, 1.0);
    }
}
