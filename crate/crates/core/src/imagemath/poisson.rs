//! Seamless cloning by solving the discrete Poisson equation.
//!
//! For every masked pixel `p` (destination position `q = p + offset`):
//!
//! ```text
//! 4·f(q) − Σ_{n∈N(p)∩Ω} f(n+offset) = Σ_{n∈N(p)∖Ω} dst(n+offset) + Σ_{n∈N(p)} (src(p) − src(n))
//! ```
//!
//! The system is symmetric positive definite and is solved matrix-free with
//! conjugate gradients, one channel at a time.

use super::raster::{RasterImage, RegionMask};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CG_TOLERANCE: f64 = 1e-8;

const NEIGHBOURS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Unclamped interior solution of the cloning system.
#[derive(Clone, Debug)]
pub struct PoissonSolution {
    /// Destination `(row, col)` of each unknown, in row-major mask order.
    pub pixels: Vec<(usize, usize)>,
    /// Solved values per channel, aligned with `pixels`.
    pub values: [Vec<f64>; 3],
    pub iterations: usize,
}

struct System {
    /// Source-space coordinates of each unknown.
    unknowns: Vec<(usize, usize)>,
    /// Unknown index by source pixel, `usize::MAX` outside the mask.
    index: Vec<usize>,
    width: usize,
}

impl System {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, &(r, c)) in self.unknowns.iter().enumerate() {
            let mut acc = 4.0 * x[i];
            for (dr, dc) in NEIGHBOURS {
                let j = self.index[(r as isize + dr) as usize * self.width + (c as isize + dc) as usize];
                if j != usize::MAX {
                    acc -= x[j];
                }
            }
            out[i] = acc;
        }
    }
}

fn dest_position(p: (usize, usize), offset: (isize, isize)) -> (isize, isize) {
    (p.0 as isize + offset.0, p.1 as isize + offset.1)
}

/// Solves the cloning system without writing into the destination.
pub fn poisson_solve<T: Scalar>(
    source: &RasterImage<T>,
    destination: &RasterImage<T>,
    mask: &RegionMask<T>,
    offset: (isize, isize),
) -> Result<PoissonSolution> {
    let (sh, sw) = (source.height(), source.width());
    if mask.height() != sh || mask.width() != sw {
        return Err(Error::Shape(format!(
            "mask {}x{} does not match source {sh}x{sw}",
            mask.height(),
            mask.width()
        )));
    }
    if !mask.is_binary() {
        return Err(Error::InvalidImage("poisson blending needs a binary mask".into()));
    }
    let (dh, dw) = (destination.height() as isize, destination.width() as isize);

    let mut index = vec![usize::MAX; sh * sw];
    let mut unknowns = Vec::new();
    for r in 0..sh {
        for c in 0..sw {
            if mask.get(r, c) == T::zero() {
                continue;
            }
            if r == 0 || c == 0 || r + 1 == sh || c + 1 == sw {
                return Err(Error::MaskOnBorder { row: r, col: c });
            }
            let (qr, qc) = dest_position((r, c), offset);
            if qr < 1 || qc < 1 || qr + 1 >= dh || qc + 1 >= dw {
                if qr < 0 || qc < 0 || qr >= dh || qc >= dw {
                    return Err(Error::Shape(format!(
                        "mask pixel ({r}, {c}) lands outside the destination at ({qr}, {qc})"
                    )));
                }
                return Err(Error::MaskOnBorder { row: qr as usize, col: qc as usize });
            }
            index[r * sw + c] = unknowns.len();
            unknowns.push((r, c));
        }
    }
    let pixels: Vec<(usize, usize)> = unknowns
        .iter()
        .map(|&p| {
            let (r, c) = dest_position(p, offset);
            (r as usize, c as usize)
        })
        .collect();
    let system = System { unknowns, index, width: sw };
    let n = system.unknowns.len();
    let mut values: [Vec<f64>; 3] = Default::default();
    let mut iterations = 0;
    if n == 0 {
        return Ok(PoissonSolution { pixels, values, iterations });
    }

    for (ch, out) in values.iter_mut().enumerate() {
        let mut b = vec![0.0; n];
        for (i, &(r, c)) in system.unknowns.iter().enumerate() {
            let centre = source.get(ch, r, c).primal();
            let mut acc = 0.0;
            for (dr, dc) in NEIGHBOURS {
                let (nr, nc) = ((r as isize + dr) as usize, (c as isize + dc) as usize);
                acc += centre - source.get(ch, nr, nc).primal();
                if system.index[nr * sw + nc] == usize::MAX {
                    let (qr, qc) = dest_position((nr, nc), offset);
                    acc += destination.get(ch, qr as usize, qc as usize).primal();
                }
            }
            b[i] = acc;
        }
        let x0: Vec<f64> = pixels.iter().map(|&(r, c)| destination.get(ch, r, c).primal()).collect();
        let (x, its) = conjugate_gradient(&system, &b, x0, CG_TOLERANCE, 10 * n);
        iterations = iterations.max(its);
        *out = x;
    }
    Ok(PoissonSolution { pixels, values, iterations })
}

fn conjugate_gradient(system: &System, b: &[f64], mut x: Vec<f64>, tol: f64, max_iter: usize) -> (Vec<f64>, usize) {
    let n = b.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut ax = vec![0.0; n];
    system.apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let target = tol * dot(b, b).sqrt().max(1e-300);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if rs.sqrt() <= target {
            return (x, it);
        }
        system.apply(&p, &mut ap);
        let alpha = rs / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    (x, max_iter)
}

/// Seamlessly clones the masked part of `source` into `destination`.
///
/// `offset` is the destination position of the source origin. Pixels outside
/// the mask are copied from `destination` untouched.
pub fn poisson_blend<T: Scalar>(
    source: &RasterImage<T>,
    destination: &RasterImage<T>,
    mask: &RegionMask<T>,
    offset: (isize, isize),
) -> Result<RasterImage<T>> {
    let solution = poisson_solve(source, destination, mask, offset)?;
    let mut out = destination.clone();
    for (i, &(r, c)) in solution.pixels.iter().enumerate() {
        let rgb = [0, 1, 2].map(|ch| T::lit(solution.values[ch][i]));
        out.set_pixel(r, c, rgb);
    }
    Ok(out)
}
