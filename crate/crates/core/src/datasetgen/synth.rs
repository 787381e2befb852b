//! Procedural eye glyphs with known production, design and detail labels.
//!
//! A production fixes skin and line colors, line width, the eyebrow and the
//! base eye proportions. A design within it fixes the iris color and its
//! own proportions. Each patch adds small geometric jitter and is rendered
//! twice: low detail (flat iris, few highlights, upper lid only) and high
//! detail (shaded and ringed iris, more highlights, lower lid and crease).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, DetailLabel, Patch};
use super::crop::margin_pixels;
use crate::error::{Error, Result};
use crate::imagemath::{quantize, PixelBox};
use crate::Image;

const SCLERA: [f64; 3] = [0.92, 0.92, 0.94];
const HIGHLIGHT: [f64; 3] = [1.0, 1.0, 1.0];
const SUPERSAMPLE: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStyleSpec {
    pub production: String,
    /// `[skin, line art, iris colors…]`.
    pub palette: Vec<[f64; 3]>,
    /// Line thickness as a fraction of the region height.
    pub line_width: f64,
    /// `[iris radius / eye half-height, eye height / eye width]`.
    pub iris_shape: Vec<f64>,
    pub highlight_count_low: usize,
    pub highlight_count_high: usize,
    pub seed: u64,
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

impl SyntheticStyleSpec {
    /// A random production style with `designs` well-separated iris hues.
    pub fn random(production: impl Into<String>, designs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skin = hsv(rng.gen_range(0.02..0.12), rng.gen_range(0.12..0.35), rng.gen_range(0.8..0.95));
        let line = hsv(rng.gen_range(0.0..1.0), rng.gen_range(0.2..0.6), rng.gen_range(0.08..0.3));
        let offset = rng.gen_range(0.0..1.0);
        let mut palette = vec![skin, line];
        for d in 0..designs {
            let hue = offset + d as f64 / designs.max(1) as f64 + rng.gen_range(-0.04..0.04);
            palette.push(hsv(hue, rng.gen_range(0.55..0.85), rng.gen_range(0.5..0.8)));
        }
        SyntheticStyleSpec {
            production: production.into(),
            palette,
            line_width: rng.gen_range(0.05..0.1),
            iris_shape: vec![rng.gen_range(0.7..0.85), rng.gen_range(0.6..0.8)],
            highlight_count_low: 1,
            highlight_count_high: 3,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(format!("production {}: {m}", self.production)));
        if self.palette.len() < 2 {
            return bad("palette needs at least skin and line colors".into());
        }
        if self.palette.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("palette colors must lie in [0, 1]".into());
        }
        if self.highlight_count_high <= self.highlight_count_low {
            return bad("high-detail highlight count must exceed the low-detail count".into());
        }
        if self.highlight_count_high > 4 {
            return bad("at most 4 highlights fit in an iris".into());
        }
        if !(self.line_width > 0.0 && self.line_width < 0.3) {
            return bad(format!("line width {} outside (0, 0.3)", self.line_width));
        }
        if self.iris_shape.len() != 2 || self.iris_shape.iter().any(|v| !(*v > 0.2 && *v < 1.2)) {
            return bad("iris_shape must be two values in (0.2, 1.2)".into());
        }
        Ok(())
    }

    /// The per-design parameters of design `index`.
    pub fn design(&self, index: usize) -> DesignParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1)));
        let iris = match self.palette.get(2 + index) {
            Some(c) => *c,
            None => hsv(rng.gen_range(0.0..1.0), 0.7, 0.65),
        };
        // Golden-ratio sequences spread the shapes of sibling designs.
        let a = (index as f64 * 0.618_034 + 0.2).fract();
        let b = (index as f64 * 0.381_966 + 0.6).fract();
        DesignParams {
            iris_color: iris.map(|c| c.min(0.88)),
            aspect: self.iris_shape[1] * (0.8 + 0.4 * a),
            iris_radius: self.iris_shape[0] * (0.85 + 0.3 * b),
            iris_stretch: 1.0 + 0.25 * (1.0 - a),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignParams {
    pub iris_color: [f64; 3],
    /// Eye height over eye width.
    pub aspect: f64,
    /// Iris radius relative to the eye half-height.
    pub iris_radius: f64,
    /// Vertical over horizontal iris radius.
    pub iris_stretch: f64,
}

/// Per-patch geometric variation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jitter {
    pub dx: f64,
    pub dy: f64,
    pub scale: f64,
    pub gaze_x: f64,
    pub gaze_y: f64,
}

impl Jitter {
    pub const NONE: Jitter = Jitter { dx: 0.0, dy: 0.0, scale: 1.0, gaze_x: 0.0, gaze_y: 0.0 };

    pub fn random(rng: &mut impl Rng) -> Self {
        Jitter {
            dx: rng.gen_range(-0.05..0.05),
            dy: rng.gen_range(-0.05..0.05),
            scale: rng.gen_range(0.92..1.06),
            gaze_x: rng.gen_range(-0.3..0.3),
            gaze_y: rng.gen_range(-0.1..0.1),
        }
    }
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] * (1.0 - t) + b[i] * t)
}

/// Color at box-normalized position `(u, v)`.
fn shade(
    u: f64,
    v: f64,
    spec: &SyntheticStyleSpec,
    design: &DesignParams,
    jitter: &Jitter,
    detail: DetailLabel,
) -> [f64; 3] {
    let high = detail == DetailLabel::High;
    let line = spec.palette[1];
    let lw = spec.line_width;
    let mut color = spec.palette[0];

    let cx = 0.5 + jitter.dx;
    let cy = 0.56 + jitter.dy;
    let ax = 0.45 * jitter.scale;
    let ay = (ax * design.aspect).min(0.42);

    // Eyebrow, mostly in the context margin above the region.
    let brow = cy - ay - 0.2 - 0.15 * (u - cx).powi(2);
    if (v - brow).abs() < 0.6 * lw && (u - cx).abs() < 0.42 {
        color = line;
    }

    let rho = (((u - cx) / ax).powi(2) + ((v - cy) / ay).powi(2)).sqrt();
    if rho < 1.0 {
        color = SCLERA;
        let ri = design.iris_radius * ay;
        let ix = cx + jitter.gaze_x * ri;
        let iy = cy + jitter.gaze_y * ri;
        let (du, dv) = ((u - ix) / ri, (v - iy) / (ri * design.iris_stretch));
        let d = (du * du + dv * dv).sqrt();
        if d < 1.0 {
            color = design.iris_color;
            if high {
                let t = ((dv + 1.0) / 2.0).clamp(0.0, 1.0);
                color = color.map(|c| (c * (0.55 + 0.65 * t)).min(0.9));
                if d > 0.82 {
                    color = design.iris_color.map(|c| c * 0.4);
                }
            }
            if d < 0.4 {
                color = design.iris_color.map(|c| c * 0.18);
            }
            let count = if high { spec.highlight_count_high } else { spec.highlight_count_low };
            const ANGLES: [f64; 4] = [225.0, 45.0, 135.0, 315.0];
            for (k, deg) in ANGLES.iter().take(count).enumerate() {
                let (dist, r) = if k == 0 { (0.42, 0.3) } else { (0.52, 0.2) };
                let th = deg.to_radians();
                let (hx, hy) = (dist * th.cos(), dist * th.sin());
                if (du - hx).powi(2) + (dv - hy).powi(2) < r * r {
                    color = HIGHLIGHT;
                }
            }
        }
    }
    // Upper lid line along the top of the eye outline.
    let band = (rho - 1.0) * ay;
    if band.abs() < 0.5 * lw && v < cy + 0.2 * ay {
        color = line;
    }
    if high {
        if band.abs() < 0.25 * lw && v > cy + 0.45 * ay {
            color = mix(color, line, 0.85);
        }
        let crease = ((((u - cx) / (ax * 0.92)).powi(2) + ((v - cy + 0.04) / (ay * 1.35)).powi(2)).sqrt() - 1.0) * ay;
        if crease.abs() < 0.22 * lw && v < cy - 0.5 * ay {
            color = mix(color, line, 0.7);
        }
    }
    color
}

/// Renders one glyph into a `height × width` image whose region box is `inner`.
pub fn render_glyph(
    height: usize,
    width: usize,
    inner: PixelBox,
    spec: &SyntheticStyleSpec,
    design: &DesignParams,
    jitter: &Jitter,
    detail: DetailLabel,
) -> Image {
    let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    Image::from_fn(height, width, |y, x| {
        let mut acc = [0.0; 3];
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let px = x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                let py = y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                let u = (px - inner.x as f64) / inner.w as f64;
                let v = (py - inner.y as f64) / inner.h as f64;
                let c = shade(u, v, spec, design, jitter, detail);
                for i in 0..3 {
                    acc[i] += c[i];
                }
            }
        }
        // Stored as it would be read back from an 8-bit PNG.
        acc.map(|a| quantize(a / n) as f64 / 255.0)
    })
}

/// Geometry of a standardized patch.
pub fn patch_inner_box(size: usize, context_margin: f64) -> PixelBox {
    let m = margin_pixels(size, context_margin);
    PixelBox::new(m, m, size - 2 * m, size - 2 * m)
}

/// Globally unique design id.
pub fn design_name(production: &str, index: usize) -> String {
    format!("{production}-d{index}")
}

/// Renders `patches_per_design` jittered glyphs per design, each at both
/// detail levels, for every production spec.
pub fn synth_generate(
    specs: &[SyntheticStyleSpec],
    designs_per_production: usize,
    patches_per_design: usize,
    patch_size: usize,
    context_margin: f64,
) -> Result<Corpus> {
    if specs.len() < 2 {
        return Err(Error::Validation(format!("need at least 2 productions, got {}", specs.len())));
    }
    if designs_per_production < 2 {
        return Err(Error::Validation(format!("need at least 2 designs per production, got {designs_per_production}")));
    }
    if patches_per_design == 0 {
        return Err(Error::Validation("patches per design must be positive".into()));
    }
    if patch_size < 8 {
        return Err(Error::Validation(format!("patch size {patch_size} below 8")));
    }
    let mut names: Vec<&str> = specs.iter().map(|s| s.production.as_str()).collect();
    names.sort();
    names.dedup();
    if names.len() != specs.len() {
        return Err(Error::Validation("duplicate production ids".into()));
    }
    for s in specs {
        s.validate()?;
    }
    let inner = patch_inner_box(patch_size, context_margin);
    let mut patches = Vec::with_capacity(specs.len() * designs_per_production * patches_per_design * 2);
    for spec in specs {
        for d in 0..designs_per_production {
            let design = spec.design(d);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1000 + d as u64));
            for _ in 0..patches_per_design {
                let jitter = Jitter::random(&mut rng);
                for detail in [DetailLabel::Low, DetailLabel::High] {
                    patches.push(Patch {
                        image: render_glyph(patch_size, patch_size, inner, spec, &design, &jitter, detail),
                        production: spec.production.clone(),
                        design: design_name(&spec.production, d),
                        detail,
                        inner,
                    });
                }
            }
        }
    }
    Ok(Corpus::new(patches))
}

/// A frame sequence with low-detail eyes, plus a color guide drawing each
/// design at high detail.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub frames: Vec<Image>,
    /// `(frame index, region, design)`.
    pub regions: Vec<(usize, PixelBox, String)>,
    pub guide: Image,
    pub guide_regions: Vec<(PixelBox, String)>,
}

/// Draws `designs` eyes per frame on a flat skin background.
pub fn synth_scene(
    spec: &SyntheticStyleSpec,
    designs: usize,
    frames: usize,
    frame_size: (usize, usize),
    eye_box: (usize, usize),
    seed: u64,
) -> Result<SyntheticScene> {
    spec.validate()?;
    let (fh, fw) = frame_size;
    let (bw, bh) = eye_box;
    if designs == 0 || frames == 0 {
        return Err(Error::Validation("scene needs at least one design and one frame".into()));
    }
    // Each eye owns a padded cell so neighbours never overlap.
    let (cw, ch) = (bw * 2, bh * 2);
    if fw < cw * designs || fh < ch {
        return Err(Error::Validation(format!("frame {fw}x{fh} too small for {designs} eyes of {bw}x{bh}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skin = spec.palette[0];
    let mut out_frames = Vec::with_capacity(frames);
    let mut regions = Vec::new();
    for f in 0..frames {
        let mut frame = Image::filled(fh, fw, skin.map(|c| quantize(c) as f64 / 255.0));
        for d in 0..designs {
            let x = d * (fw / designs) + rng.gen_range(bw / 2..=(fw / designs - bw - bw / 2).max(bw / 2));
            let y = rng.gen_range(bh / 2..=(fh - bh - bh / 2).max(bh / 2));
            let region = PixelBox::new(x, y, bw, bh);
            paste_glyph(&mut frame, region, spec, &spec.design(d), &Jitter::random(&mut rng), DetailLabel::Low);
            regions.push((f, region, design_name(&spec.production, d)));
        }
        out_frames.push(frame);
    }
    let (gw, gh) = (bw * 2, bh * 2);
    let mut guide = Image::filled(gh * 2, gw * 2 * designs, skin.map(|c| quantize(c) as f64 / 255.0));
    let mut guide_regions = Vec::new();
    for d in 0..designs {
        let region = PixelBox::new(d * gw * 2 + gw / 2, gh / 2, gw, gh);
        paste_glyph(&mut guide, region, spec, &spec.design(d), &Jitter::NONE, DetailLabel::High);
        guide_regions.push((region, design_name(&spec.production, d)));
    }
    Ok(SyntheticScene { frames: out_frames, regions, guide, guide_regions })
}

/// Draws a glyph whose region is `region` into `frame`, touching only the
/// region and a half-size margin around it.
fn paste_glyph(
    frame: &mut Image,
    region: PixelBox,
    spec: &SyntheticStyleSpec,
    design: &DesignParams,
    jitter: &Jitter,
    detail: DetailLabel,
) {
    let mx = region.w / 2;
    let my = region.h / 2;
    let x0 = region.x.saturating_sub(mx);
    let y0 = region.y.saturating_sub(my);
    let x1 = (region.x + region.w + mx).min(frame.width());
    let y1 = (region.y + region.h + my).min(frame.height());
    let inner = PixelBox::new(region.x - x0, region.y - y0, region.w, region.h);
    let glyph = render_glyph(y1 - y0, x1 - x0, inner, spec, design, jitter, detail);
    for y in 0..glyph.height() {
        for x in 0..glyph.width() {
            frame.set_pixel(y0 + y, x0 + x, glyph.pixel(y, x));
        }
    }
}

/// Default production specs `p0, p1, …` derived from one seed.
pub fn default_specs(productions: usize, designs: usize, seed: u64) -> Vec<SyntheticStyleSpec> {
    (0..productions)
        .map(|p| SyntheticStyleSpec::random(format!("p{p}"), designs, seed.wrapping_mul(31).wrapping_add(p as u64 * 7919 + 1)))
        .collect()
}
