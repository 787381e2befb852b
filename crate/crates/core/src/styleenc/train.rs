use std::collections::BTreeMap;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{DesignEmbedding, EncoderArch, StyleEncoder, EMBEDDING_DIM};
use crate::datasetgen::{Corpus, TripletSampler};
use crate::error::{Error, Result};
use crate::neuralcore::{Adam, AdamConfig, Graph, ParamStore, Tensor};
use crate::scalar::Scalar;

/// `max(‖e1 − e2‖² − ‖e1 − e3‖² + 1, 0)`.
pub fn triplet_margin_loss(e1: &[f64], e2: &[f64], e3: &[f64]) -> f64 {
    triplet_margin_loss_grad(e1, e2, e3).0
}

/// The loss and its gradients with respect to `e1`, `e2`, `e3`.
pub fn triplet_margin_loss_grad(e1: &[f64], e2: &[f64], e3: &[f64]) -> (f64, [Vec<f64>; 3]) {
    let pos: f64 = e1.iter().zip(e2).map(|(a, b)| (a - b) * (a - b)).sum();
    let neg: f64 = e1.iter().zip(e3).map(|(a, b)| (a - b) * (a - b)).sum();
    let loss = (pos - neg + 1.0).max(0.0);
    let n = e1.len();
    if loss <= 0.0 {
        return (0.0, [vec![0.0; n], vec![0.0; n], vec![0.0; n]]);
    }
    let g1 = (0..n).map(|i| 2.0 * (e3[i] - e2[i])).collect();
    let g2 = (0..n).map(|i| -2.0 * (e1[i] - e2[i])).collect();
    let g3 = (0..n).map(|i| 2.0 * (e1[i] - e3[i])).collect();
    (loss, [g1, g2, g3])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderTrainConfig {
    pub arch: EncoderArch,
    pub steps: usize,
    /// Triplets per step.
    pub batch: usize,
    /// Unlabeled portraits drawn from the production for each triplet.
    pub context_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Train in single precision; weights are stored as f64 either way.
    pub single_precision: bool,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        EncoderTrainConfig {
            arch: EncoderArch::default(),
            steps: 2000,
            batch: 8,
            context_size: 8,
            adam: AdamConfig::default(),
            seed: 0,
            single_precision: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedEncoder {
    pub encoder: StyleEncoder,
    pub weights: ParamStore<f64>,
    /// Mean batch triplet loss per step.
    pub loss_log: Vec<f64>,
}

/// Draws context sets: `k` portraits (fewer if the production is smaller)
/// from one production, any design or detail level.
#[derive(Clone, Debug)]
pub struct ContextSampler {
    pools: BTreeMap<String, Vec<usize>>,
    k: usize,
    rng: ChaCha8Rng,
}

impl ContextSampler {
    pub fn new(corpus: &Corpus, k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("context size must be positive".into()));
        }
        let mut pools: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, p) in corpus.patches.iter().enumerate() {
            pools.entry(p.production.clone()).or_default().push(i);
        }
        Ok(ContextSampler { pools, k, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn draw(&mut self, production: &str) -> Result<Vec<usize>> {
        let pool = self
            .pools
            .get(production)
            .ok_or_else(|| Error::Dataset(format!("no portraits for production {production}")))?;
        let mut ids: Vec<usize> = pool.choose_multiple(&mut self.rng, self.k.min(pool.len())).copied().collect();
        ids.sort_unstable();
        Ok(ids)
    }
}

fn train_typed<T: Scalar>(
    corpus: &Corpus,
    config: &EncoderTrainConfig,
    encoder: &StyleEncoder,
    init: &ParamStore<f64>,
) -> Result<(ParamStore<f64>, Vec<f64>)> {
    let mut sampler = TripletSampler::new(corpus, config.seed)?;
    let mut contexts = ContextSampler::new(corpus, config.context_size, config.seed ^ 0x5eed_c0de)?;
    let mut params: ParamStore<T> = init.cast();
    let mut adam = Adam::new(config.adam, &params);
    let b = config.batch;
    let mut log = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let triplets = sampler.next_batch(b);
        let mut portraits = Vec::with_capacity(3 * b);
        for slot in 0..3 {
            for t in &triplets {
                let i = [t.p1, t.p2, t.p3][slot];
                portraits.push(&corpus.patches[i].image);
            }
        }
        let mut context = Vec::new();
        let mut sizes = Vec::with_capacity(b);
        for t in &triplets {
            let ids = contexts.draw(&t.production)?;
            sizes.push(ids.len());
            context.extend(ids.into_iter().map(|i| &corpus.patches[i].image));
        }
        let group: Vec<usize> = (0..3).flat_map(|_| 0..b).collect();

        let mut g = Graph::<T>::new();
        let p = params.bind(&mut g, true);
        let x = g.constant(Tensor::<T>::from_images(portraits)?);
        let c = g.constant(Tensor::<T>::from_images(context)?);
        let e = encoder.forward(&mut g, &p, x, c, &sizes, &group);
        let values: Vec<f64> = g.value(e).data().iter().map(|v| v.primal()).collect();
        let row = |k: usize| &values[k * EMBEDDING_DIM..(k + 1) * EMBEDDING_DIM];
        let mut seed = vec![T::zero(); values.len()];
        let mut total = 0.0;
        for k in 0..b {
            let (l, grads) = triplet_margin_loss_grad(row(k), row(b + k), row(2 * b + k));
            total += l;
            for (slot, gr) in grads.iter().enumerate() {
                let off = (slot * b + k) * EMBEDDING_DIM;
                for (d, v) in gr.iter().enumerate() {
                    seed[off + d] = T::lit(v / b as f64);
                }
            }
        }
        let loss = total / b as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("encoder loss at step {step}")));
        }
        log.push(loss);
        debug!("encoder step {step}: loss {loss:.6}");
        let mut grads = g.backward_seeded(e, Tensor::new(vec![3 * b, EMBEDDING_DIM], seed)?);
        let grads: Vec<Tensor<T>> = p
            .vars()
            .iter()
            .zip(params.tensors())
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        adam.step(&mut params, &grads);
    }
    Ok((params.cast(), log))
}

/// Trains the encoder on balanced triplets; deterministic for a seed.
pub fn train_style_encoder(corpus: &Corpus, config: &EncoderTrainConfig) -> Result<TrainedEncoder> {
    if config.batch == 0 {
        return Err(Error::Config("batch must be positive".into()));
    }
    let (encoder, init) = StyleEncoder::new(&config.arch, config.seed)?;
    for p in &corpus.patches {
        if p.image.height() != config.arch.image_size || p.image.width() != config.arch.image_size {
            return Err(Error::Dataset(format!(
                "portrait of {}/{} is {}x{}, expected {s}x{s}",
                p.production,
                p.design,
                p.image.height(),
                p.image.width(),
                s = config.arch.image_size
            )));
        }
    }
    let (weights, loss_log) = if config.single_precision {
        train_typed::<f32>(corpus, config, &encoder, &init)?
    } else {
        train_typed::<f64>(corpus, config, &encoder, &init)?
    };
    Ok(TrainedEncoder { encoder, weights, loss_log })
}

/// Embeds every portrait of a corpus. Each production gets one shared
/// context of `context_size` portraits drawn with `seed`.
pub fn embed_corpus(
    encoder: &StyleEncoder,
    weights: &ParamStore<f64>,
    corpus: &Corpus,
    context_size: usize,
    seed: u64,
) -> Result<Vec<DesignEmbedding>> {
    let mut contexts = ContextSampler::new(corpus, context_size, seed)?;
    let mut out = vec![DesignEmbedding([0.0; EMBEDDING_DIM]); corpus.len()];
    for prod in corpus.productions() {
        let ctx_ids = contexts.draw(&prod)?;
        let ctx: Vec<_> = ctx_ids.iter().map(|&i| &corpus.patches[i].image).collect();
        let members: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.patches[i].production == prod).collect();
        for chunk in members.chunks(32) {
            let imgs: Vec<_> = chunk.iter().map(|&i| &corpus.patches[i].image).collect();
            for (&i, e) in chunk.iter().zip(encoder.encode_batch(weights, &imgs, &ctx)?) {
                out[i] = e;
            }
        }
    }
    Ok(out)
}
