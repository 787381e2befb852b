//! Network building blocks on top of the tape.

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{Bound, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.2;

/// Features travelling through partial convolutions together with their
/// coverage mask `[N, 1, H, W]`.
#[derive(Clone, Debug)]
pub struct PartialConvState<T> {
    pub features: Var,
    pub mask: Tensor<T>,
}

/// Mask-renormalized convolution.
///
/// Inputs are multiplied by the mask, convolved with zero padding `k/2`,
/// rescaled by `k² / support` where `support` is the mask sum under the
/// window, and the bias is added. Locations with no support output 0 and
/// get coverage 0; all others get coverage 1. The mask is padded by edge
/// replication, so a full mask reproduces a plain zero-padded convolution.
pub fn partial_conv2d<T: Scalar>(
    g: &mut Graph<T>,
    state: &PartialConvState<T>,
    kernel: Var,
    bias: Var,
    stride: usize,
) -> Result<PartialConvState<T>> {
    let (n, c, h, w) = dims4_checked(g.shape(state.features))?;
    let kshape = g.shape(kernel).to_vec();
    if kshape.len() != 4 || kshape[1] != c || kshape[2] != kshape[3] {
        return Err(Error::Shape(format!("kernel {kshape:?} does not fit {c} input channels")));
    }
    let k = kshape[2];
    if k % 2 == 0 {
        return Err(Error::Shape(format!("partial convolution needs an odd kernel, got {k}")));
    }
    if g.shape(bias) != [kshape[0]] {
        return Err(Error::Shape(format!("bias {:?} for {} output channels", g.shape(bias), kshape[0])));
    }
    if state.mask.shape() != [n, 1, h, w] {
        return Err(Error::Shape(format!("mask {:?} does not match features {:?}", state.mask.shape(), [n, c, h, w])));
    }
    if stride == 0 {
        return Err(Error::Shape("stride must be positive".into()));
    }
    if state.mask.data().iter().any(|m| !(*m >= T::zero() && *m <= T::one())) {
        return Err(Error::InvalidImage("coverage mask outside [0, 1]".into()));
    }
    let pad = k / 2;
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let area = T::lit((k * k) as f64);
    let mut ratio = vec![T::zero(); n * ho * wo];
    let mut cover = vec![T::zero(); n * ho * wo];
    let md = state.mask.data();
    for s in 0..n {
        let plane = &md[s * h * w..(s + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut support = T::zero();
                for ki in 0..k {
                    let iy = ((oy * stride + ki) as isize - pad as isize).clamp(0, h as isize - 1) as usize;
                    for kj in 0..k {
                        let ix = ((ox * stride + kj) as isize - pad as isize).clamp(0, w as isize - 1) as usize;
                        support += plane[iy * w + ix];
                    }
                }
                if support > T::zero() {
                    let at = (s * ho + oy) * wo + ox;
                    ratio[at] = area / support;
                    cover[at] = T::one();
                }
            }
        }
    }
    let ratio = Tensor::new(vec![n, 1, ho, wo], ratio)?;
    let cover = Tensor::new(vec![n, 1, ho, wo], cover)?;
    let masked = g.mul_const(state.features, state.mask.clone());
    let y = g.conv2d(masked, kernel, stride, pad);
    let y = g.mul_const(y, ratio);
    let y = g.add_channel_bias(y, bias);
    let y = g.mul_const(y, cover.clone());
    Ok(PartialConvState { features: y, mask: cover })
}

fn dims4_checked(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match shape {
        &[n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::Shape(format!("expected [N, C, H, W], got {shape:?}"))),
    }
}

/// Adaptive instance normalization; `mean`/`std` are `[N, C]`.
pub fn adain<T: Scalar>(g: &mut Graph<T>, content: Var, mean: Var, std: Var) -> Result<Var> {
    let (n, c, _, _) = dims4_checked(g.shape(content))?;
    for v in [mean, std] {
        if g.shape(v) != [n, c] {
            return Err(Error::Shape(format!("style vector {:?} for content with {c} channels", g.shape(v))));
        }
    }
    let normed = g.instance_norm(content, INSTANCE_NORM_EPS);
    Ok(g.channel_affine(normed, std, mean))
}

/// AdaIN on plain tensors with per-channel style statistics shared by the batch.
pub fn adain_tensor<T: Scalar>(content: &Tensor<T>, mean: &[T], std: &[T]) -> Result<Tensor<T>> {
    let (n, c, _, _) = dims4_checked(content.shape())?;
    if mean.len() != c || std.len() != c {
        return Err(Error::Shape(format!("style vectors of length {}/{} for {c} channels", mean.len(), std.len())));
    }
    if std.iter().any(|s| *s < T::zero()) {
        return Err(Error::Validation("style std must be non-negative".into()));
    }
    let mut g = Graph::new();
    let x = g.constant(content.clone());
    let tile = |v: &[T]| Tensor::new(vec![n, c], (0..n).flat_map(|_| v.iter().copied()).collect()).expect("sized");
    let m = g.constant(tile(mean));
    let s = g.constant(tile(std));
    let y = adain(&mut g, x, m, s)?;
    Ok(g.value(y).clone())
}

/// Convolution with bias.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.w"), &[cout, cin, k, k], cin * k * k, gain, rng);
        let bias = store.add_zeros(format!("{name}.b"), &[cout]);
        Conv { weight, bias, stride, pad: k / 2 }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        let y = g.conv2d(x, p.var(self.weight), self.stride, self.pad);
        g.add_channel_bias(y, p.var(self.bias))
    }

    pub fn forward_partial<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        state: &PartialConvState<T>,
    ) -> Result<PartialConvState<T>> {
        partial_conv2d(g, state, p.var(self.weight), p.var(self.bias), self.stride)
    }
}

/// Fully connected layer, `[N, I] → [N, O]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        output: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.w"), &[input, output], input, gain, rng);
        let bias = store.add_zeros(format!("{name}.b"), &[output]);
        Linear { weight, bias }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        g.linear(x, p.var(self.weight), Some(p.var(self.bias)))
    }
}

/// Halving residual block: `relu(conv(relu(conv_s2(x))) + conv1x1_s2(x))`.
#[derive(Clone, Debug)]
pub struct ResidualDown {
    first: Conv,
    second: Conv,
    shortcut: Conv,
}

impl ResidualDown {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, rng: &mut impl Rng) -> Self {
        ResidualDown {
            first: Conv::new(store, &format!("{name}.conv1"), cin, cout, 3, 2, 1.0, rng),
            second: Conv::new(store, &format!("{name}.conv2"), cout, cout, 3, 1, 0.5, rng),
            shortcut: Conv::new(store, &format!("{name}.skip"), cin, cout, 1, 2, 1.0, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        let a = self.first.forward(g, p, x);
        let a = g.relu(a);
        let a = self.second.forward(g, p, a);
        let s = self.shortcut.forward(g, p, x);
        let y = g.add(a, s);
        g.relu(y)
    }
}

/// Same-resolution residual block with instance normalization.
#[derive(Clone, Debug)]
pub struct Residual {
    first: Conv,
    second: Conv,
}

impl Residual {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize, rng: &mut impl Rng) -> Self {
        Residual {
            first: Conv::new(store, &format!("{name}.conv1"), channels, channels, 3, 1, 1.0, rng),
            second: Conv::new(store, &format!("{name}.conv2"), channels, channels, 3, 1, 1.0, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        let a = self.first.forward(g, p, x);
        let a = g.instance_norm(a, INSTANCE_NORM_EPS);
        let a = g.relu(a);
        let a = self.second.forward(g, p, a);
        let a = g.instance_norm(a, INSTANCE_NORM_EPS);
        g.add(x, a)
    }
}
