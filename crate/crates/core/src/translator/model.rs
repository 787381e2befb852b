use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagemath::{RasterImage, RegionMask};
use crate::neuralcore::{
    adain, Bound, Conv, Graph, Linear, ParamStore, PartialConvState, Residual, ResidualDown, Tensor, Var,
    INSTANCE_NORM_EPS, LEAKY_SLOPE,
};
use crate::scalar::Scalar;

use super::masks::mask_batch;

/// Sizes of the redrawer and its discriminators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslatorArch {
    /// Side of the square training crops.
    pub image_size: usize,
    pub gen_width: usize,
    pub gen_down: usize,
    pub gen_res: usize,
    pub style_blocks: usize,
    pub style_width: usize,
    pub disc_blocks: usize,
    pub disc_width: usize,
}

impl Default for TranslatorArch {
    fn default() -> Self {
        TranslatorArch {
            image_size: 64,
            gen_width: 32,
            gen_down: 3,
            gen_res: 2,
            style_blocks: 4,
            style_width: 32,
            disc_blocks: 4,
            disc_width: 32,
        }
    }
}

impl TranslatorArch {
    pub fn validate(&self) -> Result<()> {
        if [self.gen_width, self.gen_down, self.style_blocks, self.style_width, self.disc_blocks, self.disc_width]
            .contains(&0)
        {
            return Err(Error::Config("translator widths and block counts must be positive".into()));
        }
        let deepest = self.gen_down.max(self.style_blocks).max(self.disc_blocks);
        if self.image_size < 8 || self.image_size % (1 << deepest) != 0 {
            return Err(Error::Config(format!("image size {} must be a multiple of 2^{deepest}", self.image_size)));
        }
        Ok(())
    }

    /// Generator channels at resolution level `level` (0 = full size).
    fn gen_channels(&self, level: usize) -> usize {
        self.gen_width << level.min(2)
    }
}

/// Encoder-decoder redrawer with a pooled style path driving AdaIN.
#[derive(Clone, Debug)]
pub struct Generator {
    pub arch: TranslatorArch,
    stem: Conv,
    down: Vec<Conv>,
    res: Vec<Residual>,
    up: Vec<Conv>,
    out: Conv,
    style: Vec<ResidualDown>,
    style_head: Linear,
    /// Channels of each upsampling block.
    up_channels: Vec<usize>,
}

impl Generator {
    pub fn new(arch: &TranslatorArch, seed: u64) -> Result<(Self, ParamStore<f64>)> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let w0 = arch.gen_channels(0);
        let stem = Conv::new(&mut store, "gen.stem", 3, w0, 3, 1, 1.0, &mut rng);
        let mut down = Vec::new();
        for i in 0..arch.gen_down {
            let (cin, cout) = (arch.gen_channels(i), arch.gen_channels(i + 1));
            down.push(Conv::new(&mut store, &format!("gen.down{i}"), cin, cout, 3, 2, 1.0, &mut rng));
        }
        let deep = arch.gen_channels(arch.gen_down);
        let res = (0..arch.gen_res).map(|i| Residual::new(&mut store, &format!("gen.res{i}"), deep, &mut rng)).collect();
        let mut up = Vec::new();
        let mut up_channels = Vec::new();
        for i in 0..arch.gen_down {
            let level = arch.gen_down - i;
            let (cin, cout) = (arch.gen_channels(level), arch.gen_channels(level - 1));
            up.push(Conv::new(&mut store, &format!("gen.up{i}"), cin, cout, 3, 1, 1.0, &mut rng));
            up_channels.push(cout);
        }
        let out = Conv::new(&mut store, "gen.out", w0, 3, 3, 1, 1.0, &mut rng);
        let mut style = Vec::new();
        let mut cin = 3;
        for b in 0..arch.style_blocks {
            let cout = arch.style_width << b.min(3);
            style.push(ResidualDown::new(&mut store, &format!("gen.style{b}"), cin, cout, &mut rng));
            cin = cout;
        }
        let total: usize = up_channels.iter().map(|c| 2 * c).sum();
        let style_head = Linear::new(&mut store, "gen.adain", cin, total, 0.1, &mut rng);
        Ok((Generator { arch: arch.clone(), stem, down, res, up, out, style, style_head, up_channels }, store))
    }

    /// Redraws `content` `[N, 3, S, S]`; sample `i` takes its style from
    /// group `group[i]` of `styles`, split by `sizes`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        content: Var,
        styles: Var,
        sizes: &[usize],
        group: &[usize],
    ) -> Var {
        let mut s = styles;
        for block in &self.style {
            s = block.forward(g, p, s);
        }
        let pooled = g.global_avg_pool(s);
        let per_group = g.group_mean(pooled, sizes);
        let raw = self.style_head.forward(g, p, per_group);
        let raw = g.gather(raw, group);

        let mut x = self.stem.forward(g, p, content);
        x = g.instance_norm(x, INSTANCE_NORM_EPS);
        x = g.relu(x);
        for conv in &self.down {
            x = conv.forward(g, p, x);
            x = g.instance_norm(x, INSTANCE_NORM_EPS);
            x = g.relu(x);
        }
        for block in &self.res {
            x = block.forward(g, p, x);
        }
        let mut offset = 0;
        for (conv, &c) in self.up.iter().zip(&self.up_channels) {
            x = g.upsample2x(x);
            x = conv.forward(g, p, x);
            let mean = g.slice_cols(raw, offset, c);
            let std = g.slice_cols(raw, offset + c, c);
            let std = g.add_scalar(std, T::one());
            offset += 2 * c;
            x = adain(g, x, mean, std).expect("generator shapes are consistent");
            x = g.relu(x);
        }
        let y = self.out.forward(g, p, x);
        g.sigmoid(y)
    }

    fn check(&self, img: &RasterImage<f64>) -> Result<()> {
        let s = self.arch.image_size;
        if img.height() != s || img.width() != s {
            return Err(Error::Shape(format!("image is {}x{}, redrawer expects {s}x{s}", img.height(), img.width())));
        }
        Ok(())
    }

    /// Redraws one crop in the style of `style_set`.
    pub fn generate(
        &self,
        weights: &ParamStore<f64>,
        content: &RasterImage<f64>,
        style_set: &[&RasterImage<f64>],
    ) -> Result<RasterImage<f64>> {
        if style_set.is_empty() {
            return Err(Error::Validation("empty style set".into()));
        }
        self.check(content)?;
        for s in style_set {
            self.check(s)?;
        }
        let mut g = Graph::<f64>::new();
        let p = weights.bind(&mut g, false);
        let x = g.constant(Tensor::from_images([content])?);
        let s = g.constant(Tensor::from_images(style_set.iter().copied())?);
        let y = self.forward(&mut g, &p, x, s, &[style_set.len()], &[0]);
        Ok(g.value(y).to_image(0))
    }
}

/// Discriminator outputs on the tape.
#[derive(Clone, Debug)]
pub struct DiscOutput<T> {
    /// One score map per class, `[N, K, h, w]`.
    pub maps: Var,
    /// Coverage of the score maps, `[N, 1, h, w]`.
    pub cover: Tensor<T>,
    /// Output of the last downsampling block.
    pub features: Var,
}

/// Multi-class partial-convolution discriminator.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub arch: TranslatorArch,
    pub classes: usize,
    blocks: Vec<Conv>,
    head: Conv,
}

impl Discriminator {
    /// `prefix` names the parameters (`q`, `c`).
    pub fn new(arch: &TranslatorArch, classes: usize, prefix: &str, seed: u64) -> Result<(Self, ParamStore<f64>)> {
        arch.validate()?;
        if classes == 0 {
            return Err(Error::Config("discriminator needs at least one class".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut blocks = Vec::new();
        let mut cin = 3;
        for b in 0..arch.disc_blocks {
            let cout = arch.disc_width << b.min(3);
            blocks.push(Conv::new(&mut store, &format!("{prefix}.block{b}"), cin, cout, 3, 2, 1.0, &mut rng));
            cin = cout;
        }
        let head = Conv::new(&mut store, &format!("{prefix}.head"), cin, classes, 1, 1, 1.0, &mut rng);
        Ok((Discriminator { arch: arch.clone(), classes, blocks, head }, store))
    }

    /// Scores `x` `[N, 3, S, S]` with initial coverage `mask` `[N, 1, S, S]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var, mask: Tensor<T>) -> Result<DiscOutput<T>> {
        let mut state = PartialConvState { features: x, mask };
        for conv in &self.blocks {
            state = conv.forward_partial(g, p, &state)?;
            state.features = g.leaky_relu(state.features, LEAKY_SLOPE);
        }
        let features = state.features;
        let out = self.head.forward_partial(g, p, &state)?;
        Ok(DiscOutput { maps: out.features, cover: out.mask, features })
    }

    /// Score maps of a batch of images seen through `mask`.
    pub fn score_images(
        &self,
        weights: &ParamStore<f64>,
        images: &[&RasterImage<f64>],
        mask: &RegionMask<f64>,
    ) -> Result<super::ClassScores> {
        let mut g = Graph::<f64>::new();
        let p = weights.bind(&mut g, false);
        let x = g.constant(Tensor::from_images(images.iter().copied())?);
        let out = self.forward(&mut g, &p, x, mask_batch(mask, images.len()))?;
        super::ClassScores::new(g.value(out.maps).clone(), out.cover)
    }
}
