//! Balanced samplers.
//!
//! Every draw first picks a production uniformly and then a design
//! uniformly within it, so each production carries the same total weight
//! and so does each design within its production.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::{Corpus, DetailLabel};
use crate::error::{Error, Result};

/// Indices into a corpus: `p1`, `p2` share a design, `p3` is another
/// design of the same production.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub p1: usize,
    pub p2: usize,
    pub p3: usize,
    pub production: String,
}

#[derive(Clone, Debug)]
pub struct TripletSampler {
    /// Per production: name and per-design patch lists.
    productions: Vec<(String, Vec<Vec<usize>>)>,
    rng: ChaCha8Rng,
}

impl TripletSampler {
    pub fn new(corpus: &Corpus, seed: u64) -> Result<Self> {
        let mut productions = Vec::new();
        for (prod, designs) in corpus.index() {
            if designs.len() < 2 {
                return Err(Error::Dataset(format!("production {prod} has {} design(s); need 2", designs.len())));
            }
            for (design, ids) in &designs {
                if ids.len() < 2 {
                    return Err(Error::Dataset(format!("design {prod}/{design} has {} portrait(s); need 2", ids.len())));
                }
            }
            productions.push((prod, designs.into_values().collect()));
        }
        if productions.is_empty() {
            return Err(Error::Dataset("empty corpus".into()));
        }
        Ok(TripletSampler { productions, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn draw(&mut self) -> Triplet {
        let (name, designs) = &self.productions[self.rng.gen_range(0..self.productions.len())];
        let a = self.rng.gen_range(0..designs.len());
        let mut b = self.rng.gen_range(0..designs.len() - 1);
        if b >= a {
            b += 1;
        }
        let pair: Vec<usize> = designs[a].choose_multiple(&mut self.rng, 2).copied().collect();
        let p3 = *designs[b].choose(&mut self.rng).expect("non-empty design");
        Triplet { p1: pair[0], p2: pair[1], p3, production: name.clone() }
    }

    pub fn next_batch(&mut self, batch: usize) -> Vec<Triplet> {
        (0..batch).map(|_| self.draw()).collect()
    }
}

/// One batch of triplets from a fresh sampler seeded with `seed`.
pub fn sample_triplet_batch(corpus: &Corpus, batch: usize, seed: u64) -> Result<Vec<Triplet>> {
    Ok(TripletSampler::new(corpus, seed)?.next_batch(batch))
}

/// Corpus indices of one translation example. Design ids are compared
/// globally, so a design (or cluster) spanning productions is one class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranslationIndices {
    pub low: usize,
    pub high: usize,
    pub style_set: Vec<usize>,
    pub design_low: String,
    pub design_high: String,
}

#[derive(Clone, Debug)]
struct Pools {
    low: Vec<usize>,
    high: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct TranslationSampler {
    /// Per production: `(design, pools)` for designs having both levels.
    productions: Vec<Vec<(String, Pools)>>,
    style_k: usize,
    rng: ChaCha8Rng,
}

impl TranslationSampler {
    pub fn new(corpus: &Corpus, style_k: usize, seed: u64) -> Result<Self> {
        if style_k == 0 {
            return Err(Error::Config("style set size must be positive".into()));
        }
        let mut productions = Vec::new();
        let mut total = 0;
        for designs in corpus.index().into_values() {
            let mut usable = Vec::new();
            for (design, ids) in designs {
                let pick = |d| ids.iter().copied().filter(|&i| corpus.patches[i].detail == d).collect::<Vec<_>>();
                let pools = Pools { low: pick(DetailLabel::Low), high: pick(DetailLabel::High) };
                if !pools.low.is_empty() && !pools.high.is_empty() {
                    usable.push((design, pools));
                }
            }
            total += usable.len();
            if !usable.is_empty() {
                productions.push(usable);
            }
        }
        if total < 2 {
            return Err(Error::Dataset(format!("{total} design(s) with both detail levels; need 2")));
        }
        Ok(TranslationSampler { productions, style_k, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    fn pick_design(&mut self) -> (usize, usize) {
        let p = self.rng.gen_range(0..self.productions.len());
        (p, self.rng.gen_range(0..self.productions[p].len()))
    }

    pub fn draw(&mut self) -> TranslationIndices {
        let lo = self.pick_design();
        let hi = loop {
            let c = self.pick_design();
            if self.productions[c.0][c.1].0 != self.productions[lo.0][lo.1].0 {
                break c;
            }
        };
        let (design_low, low_pool) = &self.productions[lo.0][lo.1];
        let (design_high, high_pool) = &self.productions[hi.0][hi.1];
        let low = *low_pool.low.choose(&mut self.rng).expect("non-empty");
        let high = *high_pool.high.choose(&mut self.rng).expect("non-empty");
        let others: Vec<usize> = high_pool.high.iter().copied().filter(|&i| i != high).collect();
        let style_set = if others.is_empty() {
            vec![high]
        } else {
            others.choose_multiple(&mut self.rng, self.style_k.min(others.len())).copied().collect()
        };
        TranslationIndices { low, high, style_set, design_low: design_low.clone(), design_high: design_high.clone() }
    }

    pub fn next_batch(&mut self, batch: usize) -> Vec<TranslationIndices> {
        (0..batch).map(|_| self.draw()).collect()
    }
}

pub fn sample_translation_batch(corpus: &Corpus, batch: usize, style_k: usize, seed: u64) -> Result<Vec<TranslationIndices>> {
    Ok(TranslationSampler::new(corpus, style_k, seed)?.next_batch(batch))
}
