use crate::error::{Error, Result};
use crate::imagemath::{RasterImage, RegionMask, MAX_LOWPASS_THRESHOLD};
use crate::neuralcore::{Graph, ParamStore, Tensor, Var};
use crate::scalar::Scalar;
use crate::Dual;

use super::masks::mask_batch;
use super::model::{DiscOutput, Discriminator};

/// R1 weight.
pub const DEFAULT_GAMMA: f64 = 10.0;

/// Per-location coverage weights that turn a sum over a sample's map into
/// its mean over covered locations, scaled by `scale`.
fn coverage_weights<T: Scalar>(cover: &Tensor<T>, scale: f64) -> Tensor<T> {
    let (n, _, h, w) = cover.dims4();
    let mut data = Vec::with_capacity(n * h * w);
    for plane in cover.data().chunks(h * w) {
        let total: T = plane.iter().copied().sum();
        let inv = if total > T::zero() { T::lit(scale) / total } else { T::zero() };
        data.extend(plane.iter().map(|c| *c * inv));
    }
    Tensor::new(vec![n, 1, h, w], data).expect("weight shape")
}

/// `D(x)_c` per sample: the covered-location mean of class `classes[i]`'s map, `[N, 1]`.
pub fn class_score<T: Scalar>(g: &mut Graph<T>, out: &DiscOutput<T>, classes: &[usize]) -> Var {
    let (_, _, h, w) = out.cover.dims4();
    let sel = g.select_channel(out.maps, classes);
    let weighted = g.mul_const(sel, coverage_weights(&out.cover, (h * w) as f64));
    g.global_avg_pool(weighted)
}

fn hinge_map<T: Scalar>(g: &mut Graph<T>, out: &DiscOutput<T>, classes: &[usize], positive: bool) -> Var {
    let n = classes.len();
    let sel = g.select_channel(out.maps, classes);
    let signed = g.scale(sel, T::lit(if positive { -1.0 } else { 1.0 }));
    let shifted = g.add_scalar(signed, T::one());
    let hinge = g.relu(shifted);
    let weighted = g.mul_const(hinge, coverage_weights(&out.cover, 1.0 / n as f64));
    g.sum(weighted)
}

/// Batch mean of the covered-location mean of `max(0, 1 − score)`.
pub fn hinge_positive_graph<T: Scalar>(g: &mut Graph<T>, out: &DiscOutput<T>, classes: &[usize]) -> Var {
    hinge_map(g, out, classes, true)
}

/// Batch mean of the covered-location mean of `max(0, 1 + score)`.
pub fn hinge_negative_graph<T: Scalar>(g: &mut Graph<T>, out: &DiscOutput<T>, classes: &[usize]) -> Var {
    hinge_map(g, out, classes, false)
}

/// `mean|1 − D(x)_c| + mean|D^F(x) − D^F(s)|`; with `hinge` the first
/// term becomes `mean max(0, 1 − D(x)_c)`.
pub fn adversarial_graph<T: Scalar>(
    g: &mut Graph<T>,
    out: &DiscOutput<T>,
    classes: &[usize],
    reference_features: Var,
    hinge: bool,
) -> Var {
    let score = class_score(g, out, classes);
    let neg = g.scale(score, -T::one());
    let gap = g.add_scalar(neg, T::one());
    let first = if hinge {
        let r = g.relu(gap);
        g.mean(r)
    } else {
        g.mean_abs(gap)
    };
    let diff = g.sub(out.features, reference_features);
    let second = g.mean_abs(diff);
    g.add(first, second)
}

/// `mean|h − ĥ| + mean|F(ℓ(l)) − F(ℓ(t))| + mean|F(ℓ(l)) − F(ℓ(l̂))|`.
pub fn reconstruction_graph<T: Scalar>(
    g: &mut Graph<T>,
    triplet: [Var; 3],
    l: Var,
    h: Var,
    threshold: f64,
) -> Var {
    let [t, l_hat, h_hat] = triplet;
    let d = g.sub(h, h_hat);
    let a = g.mean_abs(d);
    let ll = g.lightness(l);
    let fl = g.lowpass(ll, threshold);
    let mut total = a;
    for x in [t, l_hat] {
        let lx = g.lightness(x);
        let fx = g.lowpass(lx, threshold);
        let d = g.sub(fl, fx);
        let m = g.mean_abs(d);
        total = g.add(total, m);
    }
    total
}

/// Score maps `[N, K, h, w]` and their coverage `[N, 1, h, w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassScores {
    pub maps: Tensor<f64>,
    pub cover: Tensor<f64>,
}

impl ClassScores {
    pub fn new(maps: Tensor<f64>, cover: Tensor<f64>) -> Result<Self> {
        let ms = maps.shape();
        if ms.len() != 4 || cover.shape() != [ms[0], 1, ms[2], ms[3]] {
            return Err(Error::Shape(format!("score maps {ms:?} with coverage {:?}", cover.shape())));
        }
        if maps.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("class score".into()));
        }
        Ok(ClassScores { maps, cover })
    }

    /// Uniform scores with full coverage: `n` samples, `k` classes, `h×w` maps.
    pub fn uniform(n: usize, k: usize, h: usize, w: usize, value: f64) -> Self {
        ClassScores { maps: Tensor::full(&[n, k, h, w], value), cover: Tensor::full(&[n, 1, h, w], 1.0) }
    }

    pub fn classes(&self) -> usize {
        self.maps.shape()[1]
    }

    pub fn samples(&self) -> usize {
        self.maps.shape()[0]
    }

    fn check(&self, class: usize) -> Result<()> {
        if class >= self.classes() {
            return Err(Error::UnknownClass { class, count: self.classes() });
        }
        Ok(())
    }

    fn on_graph(&self, class: usize, f: impl FnOnce(&mut Graph<f64>, &DiscOutput<f64>, &[usize]) -> Var) -> Result<f64> {
        self.check(class)?;
        let mut g = Graph::new();
        let maps = g.constant(self.maps.clone());
        let out = DiscOutput { maps, cover: self.cover.clone(), features: maps };
        let v = f(&mut g, &out, &vec![class; self.samples()]);
        Ok(g.value(v).item())
    }

    /// `D(x)_class` averaged over the batch.
    pub fn mean_score(&self, class: usize) -> Result<f64> {
        self.on_graph(class, |g, out, cls| {
            let s = class_score(g, out, cls);
            g.mean(s)
        })
    }
}

/// `L_P`: positive hinge plus `γ · ‖∇ₓ D(x)_class‖²`.
pub fn hinge_positive(scores: &ClassScores, class: usize, input_gradient_sq_norm: f64, gamma: f64) -> Result<f64> {
    let h = scores.on_graph(class, hinge_positive_graph)?;
    Ok(h + gamma * input_gradient_sq_norm)
}

/// `L_N`: negative hinge.
pub fn hinge_negative(scores: &ClassScores, class: usize) -> Result<f64> {
    scores.on_graph(class, hinge_negative_graph)
}

/// Which discriminator an objective belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Quality,
    Context,
}

/// Scores of one discriminator on the real pair and the generated triplet,
/// with the squared input-gradient norms of the real images.
#[derive(Clone, Debug)]
pub struct RoleScores {
    pub h: ClassScores,
    pub l: ClassScores,
    pub t: ClassScores,
    pub l_hat: ClassScores,
    /// `‖∇ₓ D(h)_ℍ‖²`.
    pub grad_sq_h: f64,
    /// `‖∇ₓ D(l)_𝕃‖²`; the quality role ignores it.
    pub grad_sq_l: f64,
}

/// Quality: `L_P(h,ℍ) + (L_N(l,ℍ) + L_N(t,ℍ))/2`.
/// Context: `L_P(h,ℍ) + L_N(t,ℍ) + L_P(l,𝕃) + L_N(l̂,𝕃)`.
pub fn discriminator_objective(role: Role, s: &RoleScores, low: usize, high: usize, gamma: f64) -> Result<f64> {
    if low == high {
        return Err(Error::Validation(format!("low and high classes are both {low}")));
    }
    let lp_h = hinge_positive(&s.h, high, s.grad_sq_h, gamma)?;
    Ok(match role {
        Role::Quality => lp_h + (hinge_negative(&s.l, high)? + hinge_negative(&s.t, high)?) / 2.0,
        Role::Context => {
            lp_h + hinge_negative(&s.t, high)?
                + hinge_positive(&s.l, low, s.grad_sq_l, gamma)?
                + hinge_negative(&s.l_hat, low)?
        }
    })
}

/// The three redrawings judged together: `t = G(l, ℍ)`, `l̂ = G(l, 𝕃)`, `ĥ = G(h, ℍ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedTriplet {
    pub t: RasterImage<f64>,
    pub l_hat: RasterImage<f64>,
    pub h_hat: RasterImage<f64>,
}

/// `L_R` for one sample.
pub fn reconstruction_loss(
    triplet: &GeneratedTriplet,
    l: &RasterImage<f64>,
    h: &RasterImage<f64>,
    threshold: f64,
) -> Result<f64> {
    let (hh, ww) = (l.height(), l.width());
    for img in [&triplet.t, &triplet.l_hat, &triplet.h_hat, h] {
        if img.height() != hh || img.width() != ww {
            return Err(Error::Shape(format!("{}x{} image next to {hh}x{ww}", img.height(), img.width())));
        }
    }
    if !(0.0..=MAX_LOWPASS_THRESHOLD).contains(&threshold) {
        return Err(Error::Config(format!("low-pass threshold {threshold} out of range")));
    }
    let mut g = Graph::<f64>::new();
    let mut c = |img: &RasterImage<f64>| -> Result<Var> { Ok(g.constant(Tensor::from_images([img])?)) };
    let vars = [c(&triplet.t)?, c(&triplet.l_hat)?, c(&triplet.h_hat)?];
    let (lv, hv) = (c(l)?, c(h)?);
    let r = reconstruction_graph(&mut g, vars, lv, hv, threshold);
    Ok(g.value(r).item())
}

/// `L_D` of `x` against a real `reference` of the same class.
#[allow(clippy::too_many_arguments)]
pub fn adversarial_generator_loss(
    disc: &Discriminator,
    weights: &ParamStore<f64>,
    mask: &RegionMask<f64>,
    x: &RasterImage<f64>,
    class: usize,
    reference: &RasterImage<f64>,
    hinge: bool,
) -> Result<f64> {
    if class >= disc.classes {
        return Err(Error::UnknownClass { class, count: disc.classes });
    }
    let mut g = Graph::<f64>::new();
    let p = weights.bind(&mut g, false);
    let xs = g.constant(Tensor::from_images([x])?);
    let rs = g.constant(Tensor::from_images([reference])?);
    let out = disc.forward(&mut g, &p, xs, mask_batch(mask, 1))?;
    let rout = disc.forward(&mut g, &p, rs, mask_batch(mask, 1))?;
    let v = adversarial_graph(&mut g, &out, &[class], rout.features, hinge);
    Ok(g.value(v).item())
}

/// The five generator terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeneratorTerms {
    pub reconstruction: f64,
    /// `L_Q(t, ℍ)`.
    pub quality_t: f64,
    /// `L_Q(l̂, 𝕃)`.
    pub quality_l_hat: f64,
    /// `L_C(t, 𝕃)`.
    pub context_t: f64,
    /// `L_C(ĥ, ℍ)`.
    pub context_h_hat: f64,
}

impl GeneratorTerms {
    /// `L_R + L_Q(t,ℍ) + L_Q(l̂,𝕃) + L_C(t,𝕃) + L_C(ĥ,ℍ)`.
    pub fn total(&self) -> f64 {
        self.reconstruction + self.quality_t + self.quality_l_hat + self.context_t + self.context_h_hat
    }
}

/// The generator objective from its constituents.
pub fn generator_objective(terms: &GeneratorTerms) -> f64 {
    terms.total()
}

/// `γ · mean_i ‖∇ₓ D(x_i)_{c_i}‖²` and, when `with_grad`, its gradient with
/// respect to the discriminator parameters.
///
/// The parameter gradient is a mixed second derivative. It is obtained by
/// replaying the discriminator on dual numbers whose input tangent is the
/// input gradient: the tangent part of the parameter gradient of
/// `Σ D(x_i)` is then `∇_θ (∇ₓΣD · v)` at `v = ∇ₓΣD`.
pub fn r1_penalty<T: Scalar>(
    disc: &Discriminator,
    params: &ParamStore<T>,
    x: &Tensor<T>,
    mask: &Tensor<T>,
    classes: &[usize],
    gamma: f64,
    with_grad: bool,
) -> Result<(f64, Option<Vec<Tensor<T>>>)> {
    let n = classes.len();
    if let Some(&c) = classes.iter().find(|&&c| c >= disc.classes) {
        return Err(Error::UnknownClass { class: c, count: disc.classes });
    }
    let mut g = Graph::<T>::new();
    let p = params.bind(&mut g, false);
    let xv = g.leaf(x.clone(), true);
    let out = disc.forward(&mut g, &p, xv, mask.clone())?;
    let s = class_score(&mut g, &out, classes);
    let total = g.sum(s);
    let grad_x = g.backward(total).get_or_zeros(xv, x.shape());
    let value = gamma * grad_x.data().iter().map(|v| v.primal() * v.primal()).sum::<f64>() / n as f64;
    if !with_grad {
        return Ok((value, None));
    }

    let dual_params: ParamStore<Dual<T>> = params.cast();
    let mut dg = Graph::<Dual<T>>::new();
    let dp = dual_params.bind(&mut dg, true);
    let dx_data = x.data().iter().zip(grad_x.data()).map(|(v, t)| Dual::new(*v, *t)).collect();
    let dx = dg.constant(Tensor::new(x.shape().to_vec(), dx_data)?);
    let dmask: Tensor<Dual<T>> = mask.cast();
    let out = disc.forward(&mut dg, &dp, dx, dmask)?;
    let s = class_score(&mut dg, &out, classes);
    let total = dg.sum(s);
    let mut grads = dg.backward(total);
    let k = T::lit(2.0 * gamma / n as f64);
    let out = dp
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| match grads.take(v) {
            Some(gd) => Tensor::new(gd.shape().to_vec(), gd.data().iter().map(|d| d.eps * k).collect())
                .expect("gradient shape"),
            None => Tensor::zeros(t.shape()),
        })
        .collect();
    Ok((value, Some(out)))
}

/// `‖∇ₓ D(x)_class‖²` for a single image.
pub fn input_gradient_sq_norm(
    disc: &Discriminator,
    weights: &ParamStore<f64>,
    image: &RasterImage<f64>,
    mask: &RegionMask<f64>,
    class: usize,
) -> Result<f64> {
    let x = Tensor::from_images([image])?;
    Ok(r1_penalty(disc, weights, &x, &mask_batch(mask, 1), &[class], 1.0, false)?.0)
}
