use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagemath::RasterImage;
use crate::neuralcore::{adain, Bound, Conv, Graph, Linear, ParamStore, ResidualDown, Tensor, Var};
use crate::scalar::Scalar;

pub const EMBEDDING_DIM: usize = 32;

/// A point in the style-normalized design space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignEmbedding(pub [f64; EMBEDDING_DIM]);

impl DesignEmbedding {
    pub fn new(values: &[f64]) -> Result<Self> {
        let arr: [f64; EMBEDDING_DIM] = values
            .try_into()
            .map_err(|_| Error::Shape(format!("embedding needs {EMBEDDING_DIM} components, got {}", values.len())))?;
        if arr.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding component".into()));
        }
        Ok(DesignEmbedding(arr))
    }

    /// Pads a short vector with zeros.
    pub fn padded(values: &[f64]) -> Self {
        let mut a = [0.0; EMBEDDING_DIM];
        a[..values.len()].copy_from_slice(values);
        DesignEmbedding(a)
    }

    pub fn squared_distance(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

impl AsRef<[f64]> for DesignEmbedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Encoder sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderArch {
    /// Side of the square standardized portraits.
    pub image_size: usize,
    pub content_blocks: usize,
    pub content_width: usize,
    pub style_blocks: usize,
    pub style_width: usize,
    pub hidden: usize,
}

impl Default for EncoderArch {
    fn default() -> Self {
        EncoderArch { image_size: 64, content_blocks: 4, content_width: 32, style_blocks: 4, style_width: 16, hidden: 64 }
    }
}

impl EncoderArch {
    pub fn validate(&self) -> Result<()> {
        let blocks = self.content_blocks.max(self.style_blocks);
        if self.content_blocks == 0 || self.style_blocks == 0 || self.content_width == 0 || self.style_width == 0 {
            return Err(Error::Config("encoder blocks and widths must be positive".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("encoder hidden width must be positive".into()));
        }
        if self.image_size < 4 || self.image_size % (1 << blocks) != 0 {
            return Err(Error::Config(format!(
                "image size {} must be a multiple of 2^{blocks}",
                self.image_size
            )));
        }
        Ok(())
    }

    pub(crate) fn width(base: usize, block: usize) -> usize {
        base << block.min(3)
    }

    pub fn content_channels(&self) -> usize {
        Self::width(self.content_width, self.content_blocks - 1)
    }

    fn content_side(&self) -> usize {
        self.image_size >> self.content_blocks
    }
}

/// Residual content path, lightness style path mean-pooled over the
/// production context, AdaIN, then two linear layers.
#[derive(Clone, Debug)]
pub struct StyleEncoder {
    pub arch: EncoderArch,
    content: Vec<ResidualDown>,
    style: Vec<Conv>,
    style_head: Linear,
    head1: Linear,
    head2: Linear,
}

impl StyleEncoder {
    /// Builds the layers and their seeded initial parameters.
    pub fn new(arch: &EncoderArch, seed: u64) -> Result<(Self, ParamStore<f64>)> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut content = Vec::new();
        let mut cin = 3;
        for b in 0..arch.content_blocks {
            let cout = EncoderArch::width(arch.content_width, b);
            content.push(ResidualDown::new(&mut store, &format!("enc.content{b}"), cin, cout, &mut rng));
            cin = cout;
        }
        let cc = cin;
        let mut style = Vec::new();
        let mut sin = 1;
        for b in 0..arch.style_blocks {
            let sout = EncoderArch::width(arch.style_width, b);
            style.push(Conv::new(&mut store, &format!("enc.style{b}"), sin, sout, 3, 2, 1.0, &mut rng));
            sin = sout;
        }
        let style_head = Linear::new(&mut store, "enc.adain", sin, 2 * cc, 0.1, &mut rng);
        let side = arch.content_side();
        let head1 = Linear::new(&mut store, "enc.fc1", cc * side * side, arch.hidden, 1.0, &mut rng);
        let head2 = Linear::new(&mut store, "enc.fc2", arch.hidden, EMBEDDING_DIM, 1.0, &mut rng);
        Ok((StyleEncoder { arch: arch.clone(), content, style, style_head, head1, head2 }, store))
    }

    /// AdaIN `(mean, std)` per context group, each `[groups, C]`.
    pub fn style_params<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, context: Var, sizes: &[usize]) -> (Var, Var) {
        let mut s = g.lightness(context);
        for conv in &self.style {
            s = conv.forward(g, p, s);
            s = g.relu(s);
        }
        let pooled = g.global_avg_pool(s);
        let per_group = g.group_mean(pooled, sizes);
        let raw = self.style_head.forward(g, p, per_group);
        let cc = self.arch.content_channels();
        let mean = g.slice_cols(raw, 0, cc);
        let std = g.slice_cols(raw, cc, cc);
        (mean, g.add_scalar(std, T::one()))
    }

    /// Embeddings `[P, 32]` of `portraits` `[P, 3, S, S]`; portrait `i`
    /// uses context group `group[i]` of `context` (split by `sizes`).
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        portraits: Var,
        context: Var,
        sizes: &[usize],
        group: &[usize],
    ) -> Var {
        let mut x = portraits;
        for block in &self.content {
            x = block.forward(g, p, x);
        }
        let (mean, std) = self.style_params(g, p, context, sizes);
        let mean = g.gather(mean, group);
        let std = g.gather(std, group);
        let y = adain(g, x, mean, std).expect("encoder shapes are consistent");
        let y = g.relu(y);
        let n = group.len();
        let flat = g.value(y).row_len();
        let y = g.reshape(y, vec![n, flat]);
        let h = self.head1.forward(g, p, y);
        let h = g.relu(h);
        self.head2.forward(g, p, h)
    }

    fn check_image<T: Scalar>(&self, img: &RasterImage<T>) -> Result<()> {
        let s = self.arch.image_size;
        if img.height() != s || img.width() != s {
            return Err(Error::Shape(format!(
                "portrait is {}x{}, encoder expects {s}x{s}",
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }

    /// Embeds several portraits of one production against a shared context.
    pub fn encode_batch(
        &self,
        weights: &ParamStore<f64>,
        portraits: &[&RasterImage<f64>],
        context: &[&RasterImage<f64>],
    ) -> Result<Vec<DesignEmbedding>> {
        if context.is_empty() {
            return Err(Error::Validation("empty production context".into()));
        }
        if portraits.is_empty() {
            return Ok(Vec::new());
        }
        for img in portraits.iter().chain(context) {
            self.check_image(img)?;
        }
        let mut g = Graph::<f64>::new();
        let p = weights.bind(&mut g, false);
        let x = g.constant(Tensor::from_images(portraits.iter().copied())?);
        let c = g.constant(Tensor::from_images(context.iter().copied())?);
        let e = self.forward(&mut g, &p, x, c, &[context.len()], &vec![0; portraits.len()]);
        g.value(e).data().chunks(EMBEDDING_DIM).map(DesignEmbedding::new).collect()
    }
}

/// Embeds one portrait given unlabeled portraits of its production.
pub fn encode_design(
    encoder: &StyleEncoder,
    weights: &ParamStore<f64>,
    portrait: &RasterImage<f64>,
    context: &[&RasterImage<f64>],
) -> Result<DesignEmbedding> {
    Ok(encoder.encode_batch(weights, &[portrait], context)?[0])
}
