use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::debug;
use serde::{Deserialize, Serialize};

use super::losses::{
    adversarial_graph, class_score, hinge_negative_graph, hinge_positive_graph, r1_penalty, reconstruction_graph,
    GeneratorTerms, DEFAULT_GAMMA,
};
use super::masks::{build_masks, DEFAULT_BAND_FRACTION, DEFAULT_BORDER_FRACTION};
use super::model::{Discriminator, Generator, TranslatorArch};
use crate::datasetgen::{Corpus, TranslationIndices, TranslationSampler};
use crate::error::{Error, Result};
use crate::imagemath::{highpass_energy, lightness, DEFAULT_LOWPASS_THRESHOLD};
use crate::neuralcore::{Adam, AdamConfig, Bound, Graph, ParamStore, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RedrawerTrainConfig {
    pub arch: TranslatorArch,
    pub steps: usize,
    pub batch: usize,
    /// Color-guide crops per style set.
    pub style_k: usize,
    pub gen_adam: AdamConfig,
    pub disc_adam: AdamConfig,
    pub gamma: f64,
    pub lowpass_threshold: f64,
    pub band_fraction: f64,
    pub border_fraction: f64,
    /// Use `max(0, 1 − D)` instead of `|1 − D|` in the generator's adversarial term.
    pub hinge_generator: bool,
    pub seed: u64,
    pub single_precision: bool,
}

impl Default for RedrawerTrainConfig {
    fn default() -> Self {
        RedrawerTrainConfig {
            arch: TranslatorArch::default(),
            steps: 2000,
            batch: 8,
            style_k: 4,
            // beta1 = 0.5 as usual for adversarial training.
            gen_adam: AdamConfig { beta1: 0.5, ..AdamConfig::with_lr(1e-4) },
            disc_adam: AdamConfig { beta1: 0.5, ..AdamConfig::with_lr(2e-4) },
            gamma: DEFAULT_GAMMA,
            lowpass_threshold: DEFAULT_LOWPASS_THRESHOLD,
            band_fraction: DEFAULT_BAND_FRACTION,
            border_fraction: DEFAULT_BORDER_FRACTION,
            hinge_generator: false,
            seed: 0,
            single_precision: false,
        }
    }
}

/// One training step's losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RedrawerLogRow {
    pub step: usize,
    pub generator: GeneratorTerms,
    pub d_quality: f64,
    pub d_context: f64,
}

pub const REDRAWER_LOG_HEADER: &str = "step\tL_R\tL_Q_t\tL_Q_lhat\tL_C_t\tL_C_hhat\tL_G\tD_Q\tD_C";

pub fn format_redrawer_log(rows: &[RedrawerLogRow]) -> String {
    let mut out = format!("{REDRAWER_LOG_HEADER}\n");
    for r in rows {
        let t = &r.generator;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.step,
            t.reconstruction,
            t.quality_t,
            t.quality_l_hat,
            t.context_t,
            t.context_h_hat,
            t.total(),
            r.d_quality,
            r.d_context
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainedRedrawer {
    pub generator: Generator,
    pub gen_weights: ParamStore<f64>,
    pub quality: Discriminator,
    pub quality_weights: ParamStore<f64>,
    pub context: Discriminator,
    pub context_weights: ParamStore<f64>,
    /// Class names; index = discriminator class id.
    pub classes: Vec<String>,
    pub log: Vec<RedrawerLogRow>,
}

/// Class names of a corpus (its design labels), sorted.
pub fn corpus_classes(corpus: &Corpus) -> Vec<String> {
    let mut c: Vec<String> = corpus.patches.iter().map(|p| p.design.clone()).collect();
    c.sort();
    c.dedup();
    c
}

/// Assembled tensors for a batch of translation samples.
pub(crate) struct Batch<T> {
    pub l: Tensor<T>,
    pub h: Tensor<T>,
    pub styles: Tensor<T>,
    pub sizes: Vec<usize>,
    pub low: Vec<usize>,
    pub high: Vec<usize>,
    pub quality_l: Tensor<T>,
    pub quality_h: Tensor<T>,
    pub context_l: Tensor<T>,
    pub context_h: Tensor<T>,
}

/// Builds per-patch masks once and assembles batches from indices.
pub(crate) struct BatchBuilder<'a> {
    corpus: &'a Corpus,
    class_of: BTreeMap<&'a str, usize>,
    masks: Vec<(Tensor<f64>, Tensor<f64>)>,
}

impl<'a> BatchBuilder<'a> {
    pub fn new(corpus: &'a Corpus, classes: &'a [String], band: f64, border: f64) -> Result<Self> {
        let class_of = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let mut masks = Vec::with_capacity(corpus.len());
        for p in &corpus.patches {
            let (h, w) = (p.image.height(), p.image.width());
            let m = build_masks::<f64>((h, w), p.inner, band, border)?;
            let t = |m: &crate::imagemath::RegionMask<f64>| Tensor::new(vec![1, 1, h, w], m.data().to_vec()).expect("mask");
            masks.push((t(&m.quality), t(&m.context)));
        }
        Ok(BatchBuilder { corpus, class_of, masks })
    }

    fn class(&self, design: &str) -> Result<usize> {
        self.class_of.get(design).copied().ok_or_else(|| Error::Dataset(format!("design {design} has no class")))
    }

    pub fn build<T: Scalar>(&self, samples: &[TranslationIndices]) -> Result<Batch<T>> {
        let img = |i: usize| &self.corpus.patches[i].image;
        let l = Tensor::<T>::from_images(samples.iter().map(|s| img(s.low)))?;
        let h = Tensor::<T>::from_images(samples.iter().map(|s| img(s.high)))?;
        let styles = Tensor::<T>::from_images(samples.iter().flat_map(|s| s.style_set.iter().map(|&i| img(i))))?;
        let cat = |high: bool, context: bool| -> Result<Tensor<T>> {
            let parts: Vec<&Tensor<f64>> = samples
                .iter()
                .map(|s| {
                    let m = &self.masks[if high { s.high } else { s.low }];
                    if context {
                        &m.1
                    } else {
                        &m.0
                    }
                })
                .collect();
            Ok(Tensor::concat(&parts)?.cast())
        };
        Ok(Batch {
            quality_l: cat(false, false)?,
            quality_h: cat(true, false)?,
            context_l: cat(false, true)?,
            context_h: cat(true, true)?,
            l,
            h,
            styles,
            sizes: samples.iter().map(|s| s.style_set.len()).collect(),
            low: samples.iter().map(|s| self.class(&s.design_low)).collect::<Result<_>>()?,
            high: samples.iter().map(|s| self.class(&s.design_high)).collect::<Result<_>>()?,
        })
    }
}

fn cat<T: Scalar>(parts: &[&Tensor<T>]) -> Tensor<T> {
    Tensor::concat(parts).expect("batch parts agree")
}

fn twice(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().chain(b).copied().collect()
}

/// `[t, l̂, ĥ]` on the tape.
pub(crate) fn generate_triplet<T: Scalar>(gen: &Generator, g: &mut Graph<T>, p: &Bound, b: &Batch<T>) -> [Var; 3] {
    let n = b.low.len();
    let content = g.constant(cat(&[&b.l, &b.l, &b.h]));
    let styles = g.constant(cat(&[&b.styles, &b.l, &b.h]));
    let mut sizes = b.sizes.clone();
    sizes.extend(std::iter::repeat(1).take(2 * n));
    let group: Vec<usize> = (0..3 * n).collect();
    let y = gen.forward(g, p, content, styles, &sizes, &group);
    [g.narrow(y, 0, n), g.narrow(y, n, n), g.narrow(y, 2 * n, n)]
}

/// Generator terms on the tape; returns `(total, terms)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn generator_terms_graph<T: Scalar>(
    g: &mut Graph<T>,
    triplet: [Var; 3],
    b: &Batch<T>,
    q: (&Discriminator, &Bound),
    c: (&Discriminator, &Bound),
    threshold: f64,
    hinge: bool,
) -> Result<(Var, [Var; 5])> {
    let [t, l_hat, h_hat] = triplet;
    let l = g.constant(b.l.clone());
    let h = g.constant(b.h.clone());
    let rec = reconstruction_graph(g, triplet, l, h, threshold);
    let mut adv = |d: (&Discriminator, &Bound), x: Var, mask: &Tensor<T>, class: &[usize], s: Var, smask: &Tensor<T>| {
        let out = d.0.forward(g, d.1, x, mask.clone())?;
        let reference = d.0.forward(g, d.1, s, smask.clone())?;
        Ok::<Var, Error>(adversarial_graph(g, &out, class, reference.features, hinge))
    };
    let q_t = adv(q, t, &b.quality_l, &b.high, h, &b.quality_h)?;
    let q_lh = adv(q, l_hat, &b.quality_l, &b.low, l, &b.quality_l)?;
    let c_t = adv(c, t, &b.context_l, &b.low, l, &b.context_l)?;
    let c_hh = adv(c, h_hat, &b.context_h, &b.high, h, &b.context_h)?;
    let mut total = rec;
    for v in [q_t, q_lh, c_t, c_hh] {
        total = g.add(total, v);
    }
    Ok((total, [rec, q_t, q_lh, c_t, c_hh]))
}

fn terms_from(g: &Graph<impl Scalar>, v: [Var; 5]) -> GeneratorTerms {
    let f = |x: Var| g.value(x).item().primal();
    GeneratorTerms {
        reconstruction: f(v[0]),
        quality_t: f(v[1]),
        quality_l_hat: f(v[2]),
        context_t: f(v[3]),
        context_h_hat: f(v[4]),
    }
}

fn param_grads<T: Scalar>(grads: &mut crate::neuralcore::Gradients<T>, bound: &Bound, params: &ParamStore<T>) -> Vec<Tensor<T>> {
    bound
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect()
}

/// Hinge parts of both discriminator objectives on the tape.
pub(crate) fn discriminator_hinges<T: Scalar>(
    g: &mut Graph<T>,
    b: &Batch<T>,
    fakes: (Var, Var),
    q: (&Discriminator, &Bound),
    c: (&Discriminator, &Bound),
) -> Result<(Var, Var)> {
    let (t, l_hat) = fakes;
    let h = g.constant(b.h.clone());
    let l = g.constant(b.l.clone());
    // Quality: L_P(h,ℍ) + (L_N(l,ℍ) + L_N(t,ℍ))/2.
    let pos = q.0.forward(g, q.1, h, b.quality_h.clone())?;
    let lp = hinge_positive_graph(g, &pos, &b.high);
    let lt = g.concat(&[l, t]);
    let neg = q.0.forward(g, q.1, lt, cat(&[&b.quality_l, &b.quality_l]))?;
    let ln = hinge_negative_graph(g, &neg, &twice(&b.high, &b.high));
    let dq = g.add(lp, ln);
    // Context: L_P(h,ℍ) + L_P(l,𝕃) + L_N(t,ℍ) + L_N(l̂,𝕃), each pair as one batch.
    let hl = g.concat(&[h, l]);
    let pos = c.0.forward(g, c.1, hl, cat(&[&b.context_h, &b.context_l]))?;
    let lp = hinge_positive_graph(g, &pos, &twice(&b.high, &b.low));
    let fl = g.concat(&[t, l_hat]);
    let neg = c.0.forward(g, c.1, fl, cat(&[&b.context_l, &b.context_l]))?;
    let ln = hinge_negative_graph(g, &neg, &twice(&b.high, &b.low));
    let sum = g.add(lp, ln);
    let dc = g.scale(sum, T::lit(2.0));
    Ok((dq, dc))
}

struct Models<'a> {
    gen: &'a Generator,
    q: &'a Discriminator,
    c: &'a Discriminator,
}

fn train_typed<T: Scalar>(
    corpus: &Corpus,
    config: &RedrawerTrainConfig,
    models: Models<'_>,
    init: [&ParamStore<f64>; 3],
    classes: &[String],
) -> Result<([ParamStore<f64>; 3], Vec<RedrawerLogRow>)> {
    let builder = BatchBuilder::new(corpus, classes, config.band_fraction, config.border_fraction)?;
    let mut sampler = TranslationSampler::new(corpus, config.style_k, config.seed)?;
    let mut gp: ParamStore<T> = init[0].cast();
    let mut qp: ParamStore<T> = init[1].cast();
    let mut cp: ParamStore<T> = init[2].cast();
    let mut g_opt = Adam::new(config.gen_adam, &gp);
    let mut q_opt = Adam::new(config.disc_adam, &qp);
    let mut c_opt = Adam::new(config.disc_adam, &cp);
    let mut log = Vec::with_capacity(config.steps);
    let Models { gen, q, c } = models;
    for step in 0..config.steps {
        let samples = sampler.next_batch(config.batch);
        let b = builder.build::<T>(&samples)?;
        // Discriminator step on detached redrawings.
        let mut g = Graph::<T>::new();
        let gb = gp.bind(&mut g, false);
        let qb = qp.bind(&mut g, true);
        let cb = cp.bind(&mut g, true);
        let [t, l_hat, _] = generate_triplet(gen, &mut g, &gb, &b);
        let (dq, dc) = discriminator_hinges(&mut g, &b, (t, l_hat), (q, &qb), (c, &cb))?;
        let total = g.add(dq, dc);
        let mut grads = g.backward(total);
        let mut q_grads = param_grads(&mut grads, &qb, &qp);
        let mut c_grads = param_grads(&mut grads, &cb, &cp);
        let (r1_q, rq) = r1_penalty(q, &qp, &b.h, &b.quality_h, &b.high, config.gamma, true)?;
        let hl = cat(&[&b.h, &b.l]);
        let (r1_c, rc) =
            r1_penalty(c, &cp, &hl, &cat(&[&b.context_h, &b.context_l]), &twice(&b.high, &b.low), config.gamma, true)?;
        for (acc, r) in q_grads.iter_mut().zip(rq.expect("requested")) {
            acc.add_assign(&r);
        }
        for (acc, r) in c_grads.iter_mut().zip(rc.expect("requested")) {
            acc.add_assign(&r.map(|v| v * T::lit(2.0)));
        }
        let d_quality = g.value(dq).item().primal() + r1_q;
        let d_context = g.value(dc).item().primal() + 2.0 * r1_c;
        q_opt.step(&mut qp, &q_grads);
        c_opt.step(&mut cp, &c_grads);

        // Generator step against the updated, frozen discriminators.
        let mut g = Graph::<T>::new();
        let gb = gp.bind(&mut g, true);
        let qb = qp.bind(&mut g, false);
        let cb = cp.bind(&mut g, false);
        let triplet = generate_triplet(gen, &mut g, &gb, &b);
        let (total, parts) = generator_terms_graph(
            &mut g,
            triplet,
            &b,
            (q, &qb),
            (c, &cb),
            config.lowpass_threshold,
            config.hinge_generator,
        )?;
        let terms = terms_from(&g, parts);
        let mut grads = g.backward(total);
        let g_grads = param_grads(&mut grads, &gb, &gp);
        g_opt.step(&mut gp, &g_grads);

        let row = RedrawerLogRow { step, generator: terms, d_quality, d_context };
        if ![terms.total(), d_quality, d_context].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("redrawer losses at step {step}")));
        }
        debug!("redrawer step {step}: L_G {:.5} L_R {:.5} D_Q {d_quality:.5} D_C {d_context:.5}", terms.total(), terms.reconstruction);
        log.push(row);
    }
    Ok(([gp.cast(), qp.cast(), cp.cast()], log))
}

/// Alternating discriminator and generator updates; deterministic for a seed.
pub fn train_redrawer(corpus: &Corpus, config: &RedrawerTrainConfig) -> Result<TrainedRedrawer> {
    if config.batch == 0 {
        return Err(Error::Config("batch must be positive".into()));
    }
    let s = config.arch.image_size;
    if let Some(p) = corpus.patches.iter().find(|p| p.image.height() != s || p.image.width() != s) {
        return Err(Error::Dataset(format!(
            "patch of {}/{} is {}x{}, expected {s}x{s}",
            p.production,
            p.design,
            p.image.height(),
            p.image.width()
        )));
    }
    let classes = corpus_classes(corpus);
    if classes.len() < 2 {
        return Err(Error::Dataset(format!("{} design class(es); need 2", classes.len())));
    }
    let (generator, gw) = Generator::new(&config.arch, config.seed)?;
    let (quality, qw) = Discriminator::new(&config.arch, classes.len(), "q", config.seed.wrapping_add(1))?;
    let (context, cw) = Discriminator::new(&config.arch, classes.len(), "c", config.seed.wrapping_add(2))?;
    let models = Models { gen: &generator, q: &quality, c: &context };
    let ([gen_weights, quality_weights, context_weights], log) = if config.single_precision {
        train_typed::<f32>(corpus, config, models, [&gw, &qw, &cw], &classes)?
    } else {
        train_typed::<f64>(corpus, config, models, [&gw, &qw, &cw], &classes)?
    };
    Ok(TrainedRedrawer { generator, gen_weights, quality, quality_weights, context, context_weights, classes, log })
}

/// Validation figures of a redrawer on fixed samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RedrawerEval {
    /// Mean `L_R`.
    pub reconstruction: f64,
    /// Fraction of samples whose `t` has more high-frequency energy inside
    /// the redrawn region than the input `l`.
    pub hf_win_rate: f64,
    /// Mean `Q` score of `t` and of the real `l`, both for class `ℍ`.
    pub quality_score_t: f64,
    pub quality_score_l: f64,
}

/// Evaluates a generator (and the quality discriminator, when given) on
/// `samples` of `corpus`.
pub fn evaluate_redrawer(
    gen: &Generator,
    gen_weights: &ParamStore<f64>,
    quality: Option<(&Discriminator, &ParamStore<f64>)>,
    corpus: &Corpus,
    classes: &[String],
    samples: &[TranslationIndices],
    config: &RedrawerTrainConfig,
) -> Result<RedrawerEval> {
    if samples.is_empty() {
        return Err(Error::Validation("no validation samples".into()));
    }
    let builder = BatchBuilder::new(corpus, classes, config.band_fraction, config.border_fraction)?;
    let mut rec = 0.0;
    let mut wins = 0;
    let mut score_t = 0.0;
    let mut score_l = 0.0;
    for chunk in samples.chunks(8) {
        let b = builder.build::<f64>(chunk)?;
        let mut g = Graph::<f64>::new();
        let gb = gen_weights.bind(&mut g, false);
        let triplet = generate_triplet(gen, &mut g, &gb, &b);
        for (i, s) in chunk.iter().enumerate() {
            let parts = triplet.map(|v| g.narrow(v, i, 1));
            let l = g.constant(b.l.narrow(i, 1));
            let h = g.constant(b.h.narrow(i, 1));
            let r = reconstruction_graph(&mut g, parts, l, h, config.lowpass_threshold);
            rec += g.value(r).item();
            let patch = &corpus.patches[s.low];
            let region = crate::imagemath::RegionMask::from_box(patch.image.height(), patch.image.width(), patch.inner);
            let t_img = g.value(triplet[0]).to_image(i);
            let e_t = highpass_energy(&lightness(&t_img), &region, config.lowpass_threshold)?;
            let e_l = highpass_energy(&lightness(&patch.image), &region, config.lowpass_threshold)?;
            if e_t > e_l {
                wins += 1;
            }
        }
        if let Some((q, qw)) = quality {
            let qb = qw.bind(&mut g, false);
            let out_t = q.forward(&mut g, &qb, triplet[0], b.quality_l.clone())?;
            let st = class_score(&mut g, &out_t, &b.high);
            let lv = g.constant(b.l.clone());
            let out_l = q.forward(&mut g, &qb, lv, b.quality_l.clone())?;
            let sl = class_score(&mut g, &out_l, &b.high);
            score_t += g.value(st).sum();
            score_l += g.value(sl).sum();
        }
    }
    let n = samples.len() as f64;
    Ok(RedrawerEval {
        reconstruction: rec / n,
        hf_win_rate: wins as f64 / n,
        quality_score_t: score_t / n,
        quality_score_l: score_l / n,
    })
}
