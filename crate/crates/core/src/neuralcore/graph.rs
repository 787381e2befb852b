//! Reverse-mode tape.
//!
//! Each operation appends a node holding its forward value and enough saved
//! state to propagate gradients. [`Graph::backward`] walks the tape in
//! reverse. The tape is generic over the scalar, so running it on
//! [`Dual`](crate::Dual) numbers gives forward-over-reverse products.

use super::tensor::Tensor;
use crate::imagemath::{lightness_gradient, rgb_to_lab_pixel};
use crate::scalar::Scalar;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MulConst(Var, Tensor<T>),
    AddChannelBias(Var, Var),
    Relu(Var),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    Exp(Var),
    Abs(Var),
    Conv2d { x: Var, w: Var, stride: usize, pad: usize, cols: Vec<T> },
    InstanceNorm { x: Var, inv_std: Vec<T> },
    ChannelAffine { x: Var, scale: Var, shift: Var },
    GlobalAvgPool(Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    GroupMean { x: Var, sizes: Vec<usize> },
    Gather { x: Var, index: Vec<usize> },
    Concat(Vec<Var>),
    Narrow { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    SelectChannel { x: Var, index: Vec<usize> },
    Upsample2x(Var),
    Lightness(Var),
    Lowpass(Var, f64),
    Sum(Var),
    Reshape(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when no path reached it.
    pub fn get_or_zeros(&self, v: Var, like: &[usize]) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn broadcast_index(shape: &[usize], cshape: &[usize], flat: usize) -> usize {
    // Both 4-D; constant dims are either equal or 1.
    let (_, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let x = flat % w;
    let y = (flat / w) % h;
    let ch = (flat / (w * h)) % c;
    let n = flat / (w * h * c);
    let n2 = if cshape[0] == 1 { 0 } else { n };
    let c2 = if cshape[1] == 1 { 0 } else { ch };
    let y2 = if cshape[2] == 1 { 0 } else { y };
    let x2 = if cshape[3] == 1 { 0 } else { x };
    ((n2 * cshape[1] + c2) * cshape[2] + y2) * cshape[3] + x2
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A leaf; gradients flow to it only when `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape(), vb.shape(), "elementwise shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a), &[a])
    }

    /// Multiplies a 4-D tensor by a constant broadcast along unit dimensions.
    pub fn mul_const(&mut self, a: Var, c: Tensor<T>) -> Var {
        let va = self.value(a);
        let shape = va.shape().to_vec();
        assert_eq!(shape.len(), 4, "mul_const expects 4-D input");
        assert_eq!(c.shape().len(), 4, "mul_const expects 4-D constant");
        for (d, cd) in shape.iter().zip(c.shape()) {
            assert!(*cd == *d || *cd == 1, "cannot broadcast {:?} to {:?}", c.shape(), shape);
        }
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * c.data()[broadcast_index(&shape, c.shape(), i)])
            .collect();
        let v = Tensor::new(shape, data).expect("same shape");
        self.push(v, Op::MulConst(a, c), &[a])
    }

    /// Adds a per-channel bias `[C]` to a `[N, C, H, W]` tensor.
    pub fn add_channel_bias(&mut self, x: Var, b: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(self.value(b).len(), c, "bias length mismatch");
        let bias = self.value(b).data().to_vec();
        let mut v = self.value(x).clone();
        for (i, chunk) in v.data_mut().chunks_mut(h * w).enumerate() {
            let bc = bias[i % c];
            chunk.iter_mut().for_each(|e| *e += bc);
        }
        debug_assert_eq!(v.len(), n * c * h * w);
        self.push(v, Op::AddChannelBias(x, b), &[x, b])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let s = T::lit(slope);
        let v = self.value(a).map(|x| if x > T::zero() { x } else { x * s });
        self.push(v, Op::LeakyRelu(a, s), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| T::one() / (T::one() + (-x).exp()));
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.exp());
        self.push(v, Op::Exp(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.abs());
        self.push(v, Op::Abs(a), &[a])
    }

    /// 2-D convolution, `x: [N, C, H, W]`, `w: [O, C, k, k]`, zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Var {
        let (n, c, h, wd) = self.value(x).dims4();
        let (o, wc, k, k2) = self.value(w).dims4();
        assert_eq!(wc, c, "conv2d channel mismatch");
        assert_eq!(k, k2, "conv2d needs square kernels");
        assert!(h + 2 * pad >= k && wd + 2 * pad >= k, "conv2d input smaller than kernel");
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let ckk = c * k * k;
        let hw = ho * wo;
        let xv = self.value(x).data();
        let mut cols = vec![T::zero(); n * ckk * hw];
        for s in 0..n {
            im2col(&xv[s * c * h * wd..(s + 1) * c * h * wd], c, h, wd, k, stride, pad, ho, wo, &mut cols[s * ckk * hw..(s + 1) * ckk * hw]);
        }
        let wv = self.value(w).data();
        let mut out = vec![T::zero(); n * o * hw];
        for s in 0..n {
            T::gemm(o, ckk, hw, wv, (ckk, 1), &cols[s * ckk * hw..], (hw, 1), &mut out[s * o * hw..(s + 1) * o * hw], false);
        }
        let v = Tensor::new(vec![n, o, ho, wo], out).expect("conv shape");
        self.push(v, Op::Conv2d { x, w, stride, pad, cols }, &[x, w])
    }

    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let inv_hw = T::lit(1.0 / hw as f64);
        let eps = T::lit(eps);
        let mut out = self.value(x).clone();
        let mut inv_std = Vec::with_capacity(n * c);
        for plane in out.data_mut().chunks_mut(hw) {
            let mean = plane.iter().copied().sum::<T>() * inv_hw;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_hw;
            let is = T::one() / (var + eps).sqrt();
            plane.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        self.push(out, Op::InstanceNorm { x, inv_std }, &[x])
    }

    /// `y[n,c] = x[n,c]·scale[n,c] + shift[n,c]`, with `scale`/`shift` of shape `[N, C]`.
    pub fn channel_affine(&mut self, x: Var, scale: Var, shift: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(self.value(scale).shape(), &[n, c], "affine scale shape");
        assert_eq!(self.value(shift).shape(), &[n, c], "affine shift shape");
        let sc = self.value(scale).data().to_vec();
        let sh = self.value(shift).data().to_vec();
        let mut out = self.value(x).clone();
        for (i, plane) in out.data_mut().chunks_mut(h * w).enumerate() {
            plane.iter_mut().for_each(|v| *v = *v * sc[i] + sh[i]);
        }
        self.push(out, Op::ChannelAffine { x, scale, shift }, &[x, scale, shift])
    }

    /// `[N, C, H, W] → [N, C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let inv = T::lit(1.0 / (h * w) as f64);
        let data = self.value(x).data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        let v = Tensor::new(vec![n, c], data).expect("pool shape");
        self.push(v, Op::GlobalAvgPool(x), &[x])
    }

    /// `x: [N, I]`, `w: [I, O]`, `b: [O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (n, i) = self.value(x).dims2();
        let (wi, o) = self.value(w).dims2();
        assert_eq!(i, wi, "linear input mismatch");
        let mut out = vec![T::zero(); n * o];
        T::gemm(n, i, o, self.value(x).data(), (i, 1), self.value(w).data(), (o, 1), &mut out, false);
        if let Some(b) = b {
            let bv = self.value(b).data();
            assert_eq!(bv.len(), o, "linear bias mismatch");
            for row in out.chunks_mut(o) {
                row.iter_mut().zip(bv).for_each(|(y, b)| *y += *b);
            }
        }
        let v = Tensor::new(vec![n, o], out).expect("linear shape");
        let parents: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        self.push(v, Op::Linear { x, w, b }, &parents)
    }

    /// Means over consecutive leading-dimension groups of the given sizes.
    pub fn group_mean(&mut self, x: Var, sizes: &[usize]) -> Var {
        let xv = self.value(x);
        assert_eq!(sizes.iter().sum::<usize>(), xv.rows(), "group sizes must cover the batch");
        assert!(sizes.iter().all(|&s| s > 0), "empty group");
        let rl = xv.row_len();
        let mut data = vec![T::zero(); sizes.len() * rl];
        let mut start = 0;
        for (g, &s) in sizes.iter().enumerate() {
            let inv = T::lit(1.0 / s as f64);
            for r in start..start + s {
                for j in 0..rl {
                    data[g * rl + j] += xv.data()[r * rl + j] * inv;
                }
            }
            start += s;
        }
        let mut shape = xv.shape().to_vec();
        shape[0] = sizes.len();
        let v = Tensor::new(shape, data).expect("group shape");
        self.push(v, Op::GroupMean { x, sizes: sizes.to_vec() }, &[x])
    }

    /// Rows of `x` picked by `index` along the leading dimension.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Var {
        let xv = self.value(x);
        let rl = xv.row_len();
        let mut data = Vec::with_capacity(index.len() * rl);
        for &i in index {
            data.extend_from_slice(&xv.data()[i * rl..(i + 1) * rl]);
        }
        let mut shape = xv.shape().to_vec();
        shape[0] = index.len();
        let v = Tensor::new(shape, data).expect("gather shape");
        self.push(v, Op::Gather { x, index: index.to_vec() }, &[x])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|p| self.value(*p)).collect();
        let v = Tensor::concat(&tensors).expect("concat shapes");
        self.push(v, Op::Concat(parts.to_vec()), parts)
    }

    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x).narrow(start, len);
        self.push(v, Op::Narrow { x, start }, &[x])
    }

    /// Columns `start..start+len` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (n, f) = self.value(x).dims2();
        assert!(start + len <= f, "slice_cols out of range");
        let xv = self.value(x).data();
        let data = (0..n).flat_map(|r| xv[r * f + start..r * f + start + len].iter().copied()).collect();
        let v = Tensor::new(vec![n, len], data).expect("slice shape");
        self.push(v, Op::SliceCols { x, start }, &[x])
    }

    /// Picks channel `index[n]` of sample `n`: `[N, C, H, W] → [N, 1, H, W]`.
    pub fn select_channel(&mut self, x: Var, index: &[usize]) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(index.len(), n, "one channel index per sample");
        let hw = h * w;
        let xv = self.value(x).data();
        let mut data = Vec::with_capacity(n * hw);
        for (s, &ch) in index.iter().enumerate() {
            assert!(ch < c, "channel {ch} out of range");
            data.extend_from_slice(&xv[(s * c + ch) * hw..(s * c + ch + 1) * hw]);
        }
        let v = Tensor::new(vec![n, 1, h, w], data).expect("select shape");
        self.push(v, Op::SelectChannel { x, index: index.to_vec() }, &[x])
    }

    /// Nearest-neighbour ×2 upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let xv = self.value(x).data();
        let (h2, w2) = (2 * h, 2 * w);
        let mut data = vec![T::zero(); n * c * h2 * w2];
        for p in 0..n * c {
            for y in 0..h2 {
                for xx in 0..w2 {
                    data[p * h2 * w2 + y * w2 + xx] = xv[p * h * w + (y / 2) * w + xx / 2];
                }
            }
        }
        let v = Tensor::new(vec![n, c, h2, w2], data).expect("upsample shape");
        self.push(v, Op::Upsample2x(x), &[x])
    }

    /// lαβ lightness of an RGB batch: `[N, 3, H, W] → [N, 1, H, W]`.
    pub fn lightness(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(c, 3, "lightness needs RGB input");
        let hw = h * w;
        let xv = self.value(x).data();
        let mut data = Vec::with_capacity(n * hw);
        for s in 0..n {
            let base = s * 3 * hw;
            for i in 0..hw {
                let px = [xv[base + i], xv[base + hw + i], xv[base + 2 * hw + i]];
                data.push(rgb_to_lab_pixel(px)[0]);
            }
        }
        let v = Tensor::new(vec![n, 1, h, w], data).expect("lightness shape");
        self.push(v, Op::Lightness(x), &[x])
    }

    /// Brick-wall radial low-pass applied to every `H×W` plane.
    pub fn lowpass(&mut self, x: Var, threshold: f64) -> Var {
        let (_, _, h, w) = self.value(x).dims4();
        let mut v = self.value(x).clone();
        for plane in v.data_mut().chunks_mut(h * w) {
            T::lowpass_plane(plane, h, w, threshold);
        }
        self.push(v, Op::Lowpass(x, threshold), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.sum(x);
        self.scale(s, T::lit(1.0 / n as f64))
    }

    /// Mean absolute value of all elements.
    pub fn mean_abs(&mut self, x: Var) -> Var {
        let a = self.abs(x);
        self.mean(a)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let v = self.value(x).clone().reshape(shape).expect("reshape size");
        self.push(v, Op::Reshape(x), &[x])
    }

    /// Backpropagates from a one-element node with unit seed.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(self.value(root).len(), 1, "backward() needs a scalar root; use backward_seeded");
        self.backward_seeded(root, Tensor::new(self.value(root).shape().to_vec(), vec![T::one()]).expect("unit"))
    }

    pub fn backward_seeded(&self, root: Var, seed: Tensor<T>) -> Gradients<T> {
        assert_eq!(seed.shape(), self.value(root).shape(), "seed shape mismatch");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if needs(*b) {
                    self.accumulate(grads, *b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let d = g.data().iter().zip(val(*b).data()).map(|(g, y)| *g * *y).collect();
                    self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d).unwrap());
                }
                if needs(*b) {
                    let d = g.data().iter().zip(val(*a).data()).map(|(g, x)| *g * *x).collect();
                    self.accumulate(grads, *b, Tensor::new(g.shape().to_vec(), d).unwrap());
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|x| x * *s)),
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::MulConst(a, c) => {
                let shape = g.shape().to_vec();
                let d = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| x * c.data()[broadcast_index(&shape, c.shape(), k)])
                    .collect();
                self.accumulate(grads, *a, Tensor::new(shape, d).unwrap());
            }
            Op::AddChannelBias(x, b) => {
                self.accumulate(grads, *x, g.clone());
                if needs(*b) {
                    let (_, c, h, w) = g.dims4();
                    let mut db = vec![T::zero(); c];
                    for (k, chunk) in g.data().chunks(h * w).enumerate() {
                        db[k % c] += chunk.iter().copied().sum::<T>();
                    }
                    self.accumulate(grads, *b, Tensor::new(val(*b).shape().to_vec(), db).unwrap());
                }
            }
            Op::Relu(a) => {
                let d = g.data().iter().zip(val(*a).data()).map(|(g, x)| if *x > T::zero() { *g } else { T::zero() }).collect();
                self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d).unwrap());
            }
            Op::LeakyRelu(a, s) => {
                let d = g.data().iter().zip(val(*a).data()).map(|(g, x)| if *x > T::zero() { *g } else { *g * *s }).collect();
                self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d).unwrap());
            }
            Op::Sigmoid(a) => {
                let d = g.data().iter().zip(node.value.data()).map(|(g, y)| *g * *y * (T::one() - *y)).collect();
                self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d).unwrap());
            }
            Op::Exp(a) => {
                let d = g.data().iter().zip(node.value.data()).map(|(g, y)| *g * *y).collect();
                self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d).unwrap());
            }
            Op::Abs(a) => {
                let d = g
                    .data()
                    .iter()
                    .zip(val(*a).data())
                    .map(|(g, x)| {
                        if *x > T::zero() {
                            *g
                        } else if *x < T::zero() {
                            -*g
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d).unwrap());
            }
            Op::Conv2d { x, w, stride, pad, cols } => {
                let (n, c, h, wd) = val(*x).dims4();
                let (o, _, k, _) = val(*w).dims4();
                let (_, _, ho, wo) = g.dims4();
                let ckk = c * k * k;
                let hw = ho * wo;
                if needs(*w) {
                    let mut dw = vec![T::zero(); o * ckk];
                    for s in 0..n {
                        T::gemm(o, hw, ckk, &g.data()[s * o * hw..], (hw, 1), &cols[s * ckk * hw..], (1, hw), &mut dw, true);
                    }
                    self.accumulate(grads, *w, Tensor::new(val(*w).shape().to_vec(), dw).unwrap());
                }
                if needs(*x) {
                    let wv = val(*w).data();
                    let mut dx = vec![T::zero(); n * c * h * wd];
                    let mut dcols = vec![T::zero(); ckk * hw];
                    for s in 0..n {
                        T::gemm(ckk, o, hw, wv, (1, ckk), &g.data()[s * o * hw..], (hw, 1), &mut dcols, false);
                        col2im(&dcols, c, h, wd, k, *stride, *pad, ho, wo, &mut dx[s * c * h * wd..(s + 1) * c * h * wd]);
                    }
                    self.accumulate(grads, *x, Tensor::new(val(*x).shape().to_vec(), dx).unwrap());
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                let (_, _, h, w) = g.dims4();
                let hw = h * w;
                let inv_hw = T::lit(1.0 / hw as f64);
                let mut dx = vec![T::zero(); g.len()];
                for (p, ((gp, yp), dp)) in g
                    .data()
                    .chunks(hw)
                    .zip(node.value.data().chunks(hw))
                    .zip(dx.chunks_mut(hw))
                    .enumerate()
                {
                    let mg = gp.iter().copied().sum::<T>() * inv_hw;
                    let mgy = gp.iter().zip(yp).map(|(a, b)| *a * *b).sum::<T>() * inv_hw;
                    for j in 0..hw {
                        dp[j] = inv_std[p] * (gp[j] - mg - yp[j] * mgy);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), dx).unwrap());
            }
            Op::ChannelAffine { x, scale, shift } => {
                let (n, c, h, w) = g.dims4();
                let hw = h * w;
                let sc = val(*scale).data();
                if needs(*x) {
                    let mut dx = g.clone();
                    for (p, plane) in dx.data_mut().chunks_mut(hw).enumerate() {
                        plane.iter_mut().for_each(|v| *v *= sc[p]);
                    }
                    self.accumulate(grads, *x, dx);
                }
                if needs(*scale) {
                    let d = g
                        .data()
                        .chunks(hw)
                        .zip(val(*x).data().chunks(hw))
                        .map(|(gp, xp)| gp.iter().zip(xp).map(|(a, b)| *a * *b).sum::<T>())
                        .collect();
                    self.accumulate(grads, *scale, Tensor::new(vec![n, c], d).unwrap());
                }
                if needs(*shift) {
                    let d = g.data().chunks(hw).map(|gp| gp.iter().copied().sum::<T>()).collect();
                    self.accumulate(grads, *shift, Tensor::new(vec![n, c], d).unwrap());
                }
            }
            Op::GlobalAvgPool(x) => {
                let shape = val(*x).shape().to_vec();
                let hw = shape[2] * shape[3];
                let inv = T::lit(1.0 / hw as f64);
                let d = g.data().iter().flat_map(|&gv| std::iter::repeat(gv * inv).take(hw)).collect();
                self.accumulate(grads, *x, Tensor::new(shape, d).unwrap());
            }
            Op::Linear { x, w, b } => {
                let (n, i) = val(*x).dims2();
                let (_, o) = val(*w).dims2();
                if needs(*x) {
                    let mut dx = vec![T::zero(); n * i];
                    T::gemm(n, o, i, g.data(), (o, 1), val(*w).data(), (1, o), &mut dx, false);
                    self.accumulate(grads, *x, Tensor::new(vec![n, i], dx).unwrap());
                }
                if needs(*w) {
                    let mut dw = vec![T::zero(); i * o];
                    T::gemm(i, n, o, val(*x).data(), (1, i), g.data(), (o, 1), &mut dw, false);
                    self.accumulate(grads, *w, Tensor::new(vec![i, o], dw).unwrap());
                }
                if let Some(b) = b {
                    if needs(*b) {
                        let mut db = vec![T::zero(); o];
                        for row in g.data().chunks(o) {
                            db.iter_mut().zip(row).for_each(|(d, v)| *d += *v);
                        }
                        self.accumulate(grads, *b, Tensor::new(vec![o], db).unwrap());
                    }
                }
            }
            Op::GroupMean { x, sizes } => {
                let xv = val(*x);
                let rl = xv.row_len();
                let mut d = Vec::with_capacity(xv.len());
                for (gi, &s) in sizes.iter().enumerate() {
                    let inv = T::lit(1.0 / s as f64);
                    for _ in 0..s {
                        d.extend(g.data()[gi * rl..(gi + 1) * rl].iter().map(|v| *v * inv));
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), d).unwrap());
            }
            Op::Gather { x, index } => {
                let xv = val(*x);
                let rl = xv.row_len();
                let mut d = vec![T::zero(); xv.len()];
                for (r, &src) in index.iter().enumerate() {
                    for j in 0..rl {
                        d[src * rl + j] += g.data()[r * rl + j];
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), d).unwrap());
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for p in parts {
                    let rows = val(*p).rows();
                    if needs(*p) {
                        self.accumulate(grads, *p, g.narrow(start, rows));
                    }
                    start += rows;
                }
            }
            Op::Narrow { x, start } => {
                let xv = val(*x);
                let rl = xv.row_len();
                let mut d = vec![T::zero(); xv.len()];
                d[start * rl..start * rl + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), d).unwrap());
            }
            Op::SliceCols { x, start } => {
                let (n, f) = val(*x).dims2();
                let len = g.dims2().1;
                let mut d = vec![T::zero(); n * f];
                for r in 0..n {
                    d[r * f + start..r * f + start + len].copy_from_slice(&g.data()[r * len..(r + 1) * len]);
                }
                self.accumulate(grads, *x, Tensor::new(vec![n, f], d).unwrap());
            }
            Op::SelectChannel { x, index } => {
                let (n, c, h, w) = val(*x).dims4();
                let hw = h * w;
                let mut d = vec![T::zero(); n * c * hw];
                for (s, &ch) in index.iter().enumerate() {
                    d[(s * c + ch) * hw..(s * c + ch + 1) * hw].copy_from_slice(&g.data()[s * hw..(s + 1) * hw]);
                }
                self.accumulate(grads, *x, Tensor::new(vec![n, c, h, w], d).unwrap());
            }
            Op::Upsample2x(x) => {
                let (n, c, h, w) = val(*x).dims4();
                let (h2, w2) = (2 * h, 2 * w);
                let mut d = vec![T::zero(); n * c * h * w];
                for p in 0..n * c {
                    for y in 0..h2 {
                        for xx in 0..w2 {
                            d[p * h * w + (y / 2) * w + xx / 2] += g.data()[p * h2 * w2 + y * w2 + xx];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![n, c, h, w], d).unwrap());
            }
            Op::Lightness(x) => {
                let (n, _, h, w) = val(*x).dims4();
                let hw = h * w;
                let xv = val(*x).data();
                let mut d = vec![T::zero(); n * 3 * hw];
                for s in 0..n {
                    let base = s * 3 * hw;
                    for i in 0..hw {
                        let px = [xv[base + i], xv[base + hw + i], xv[base + 2 * hw + i]];
                        let gr = lightness_gradient(px);
                        let gv = g.data()[s * hw + i];
                        for ch in 0..3 {
                            d[base + ch * hw + i] = gv * gr[ch];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![n, 3, h, w], d).unwrap());
            }
            Op::Lowpass(x, threshold) => {
                // The filter is an orthogonal projection, hence self-adjoint.
                let (_, _, h, w) = g.dims4();
                let mut d = g.clone();
                for plane in d.data_mut().chunks_mut(h * w) {
                    T::lowpass_plane(plane, h, w, *threshold);
                }
                self.accumulate(grads, *x, d);
            }
            Op::Sum(x) => {
                let gv = g.item();
                self.accumulate(grads, *x, Tensor::full(val(*x).shape(), gv));
            }
            Op::Reshape(x) => {
                let d = g.clone().reshape(val(*x).shape().to_vec()).unwrap();
                self.accumulate(grads, *x, d);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    let hw = ho * wo;
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    for ox in 0..wo {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        dst[oy * wo + ox] = if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < w {
                            x[(ch * h + iy as usize) * w + ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    dx: &mut [T],
) {
    let hw = ho * wo;
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && (ix as usize) < w {
                            dx[(ch * h + iy as usize) * w + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}
