use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};

use super::config::{files, RunConfig};
use crate::datasetgen::{
    default_specs, format_manifest, ingest_manifest, sample_translation_batch, standardize_crop, synth_generate,
    synth_scene, AnnotatedRegion, Corpus, DetailLabel, RegionKind, StandardCrop,
};
use crate::error::{Error, Result};
use crate::imagemath::{color_transfer, load_png, poisson_blend, resample_bilinear, save_png, PixelBox, RegionMask};
use crate::neuralcore::ParamStore;
use crate::styleenc::{
    cut_labels, embed_corpus, load_embeddings, purity, save_embeddings, separation_ratio, silhouette_cut,
    train_style_encoder, upgma_merges, DesignEmbedding, EmbeddingRecord, StyleEncoder,
};
use crate::translator::{
    corpus_classes, evaluate_redrawer, format_redrawer_log, train_redrawer, Discriminator, Generator, RedrawerEval,
};
use crate::Image;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found")),
        ))
    }
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    require(&cfg.corpus_root.join(crate::datasetgen::LABEL_FILE), "corpus label index")?;
    Corpus::load(&cfg.corpus_root)
}

fn encoder_weights(cfg: &RunConfig) -> Result<(StyleEncoder, ParamStore<f64>)> {
    let (encoder, template) = StyleEncoder::new(&cfg.encoder.arch, cfg.seed)?;
    let weights = template.load_matching(&cfg.out_dir.join(files::ENCODER_WEIGHTS))?;
    Ok((encoder, weights))
}

fn generator_weights(cfg: &RunConfig) -> Result<(Generator, ParamStore<f64>)> {
    let (gen, template) = Generator::new(&cfg.redrawer.arch, cfg.seed)?;
    let weights = template.load_matching(&cfg.out_dir.join(files::GENERATOR_WEIGHTS))?;
    Ok((gen, weights))
}

fn patch_id(i: usize) -> String {
    format!("{i:05}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSummary {
    pub productions: usize,
    pub designs: usize,
    pub low: usize,
    pub high: usize,
    pub scene_frames: usize,
}

impl fmt::Display for SynthSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} productions, {} designs, {} patches ({} low, {} high), {} scene frames",
            self.productions,
            self.designs,
            self.low + self.high,
            self.low,
            self.high,
            self.scene_frames
        )
    }
}

/// Renders the synthetic corpus (and a demo scene) under `corpus_root`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    cfg.validate()?;
    let s = &cfg.synth;
    let specs = default_specs(s.productions, s.designs, cfg.seed);
    let corpus = synth_generate(&specs, s.designs, s.patches, s.patch_size, s.context_margin)?;
    let scene = if s.scene_frames > 0 {
        Some(synth_scene(&specs[0], s.designs, s.scene_frames, s.scene_frame_size, s.scene_eye_box, cfg.seed)?)
    } else {
        None
    };

    corpus.save(&cfg.corpus_root)?;
    if let Some(scene) = &scene {
        let dir = cfg.corpus_root.join("scene");
        let mut regions = Vec::new();
        for (i, frame) in scene.frames.iter().enumerate() {
            save_png(frame, &dir.join("frames").join(format!("frame{i:03}.png")))?;
        }
        for (f, region, design) in &scene.regions {
            regions.push(AnnotatedRegion {
                frame: dir.join("frames").join(format!("frame{f:03}.png")),
                region: *region,
                kind: RegionKind::Eye,
                production: specs[0].production.clone(),
                design: Some(design.clone()),
            });
        }
        write(&dir.join(files::SCENE_MANIFEST), format_manifest(&regions, &dir))?;
        save_png(&scene.guide, &dir.join("guide.png"))?;
        let guide: Vec<AnnotatedRegion> = scene
            .guide_regions
            .iter()
            .map(|(region, design)| AnnotatedRegion {
                frame: dir.join("guide.png"),
                region: *region,
                kind: RegionKind::Eye,
                production: specs[0].production.clone(),
                design: Some(design.clone()),
            })
            .collect();
        write(&dir.join(files::GUIDE_MANIFEST), format_manifest(&guide, &dir))?;
    }
    let count = |d| corpus.patches.iter().filter(|p| p.detail == d).count();
    Ok(SynthSummary {
        productions: s.productions,
        designs: s.productions * s.designs,
        low: count(DetailLabel::Low),
        high: count(DetailLabel::High),
        scene_frames: s.scene_frames,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub steps: usize,
    /// First and last logged objective.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub weights: Vec<PathBuf>,
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} steps, loss {:.6} -> {:.6}", self.steps, self.initial_loss, self.final_loss)?;
        for w in &self.weights {
            write!(f, "\n  wrote {}", w.display())?;
        }
        Ok(())
    }
}

/// Trains the style encoder, then embeds the corpus with it.
pub fn cmd_train_encoder(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let corpus = load_corpus(cfg)?;
    let mut enc_cfg = cfg.encoder.clone();
    enc_cfg.seed = cfg.seed;
    let trained = train_style_encoder(&corpus, &enc_cfg)?;
    let embeddings = embed_corpus(&trained.encoder, &trained.weights, &corpus, enc_cfg.context_size, cfg.seed)?;
    let records: Vec<EmbeddingRecord> = corpus
        .patches
        .iter()
        .zip(embeddings)
        .enumerate()
        .map(|(i, (p, embedding))| EmbeddingRecord {
            id: patch_id(i),
            production: p.production.clone(),
            design: Some(p.design.clone()),
            embedding,
        })
        .collect();

    cfg.persist()?;
    let weights = cfg.out_dir.join(files::ENCODER_WEIGHTS);
    trained.weights.save(&weights)?;
    let mut log = String::from("step\tloss\n");
    for (i, l) in trained.loss_log.iter().enumerate() {
        let _ = writeln!(log, "{}\t{l}", i + 1);
    }
    write(&cfg.out_dir.join(files::ENCODER_LOG), log)?;
    save_embeddings(&cfg.embeddings_path(), &records)?;
    Ok(TrainSummary {
        steps: trained.loss_log.len(),
        initial_loss: trained.loss_log.first().copied().unwrap_or(f64::NAN),
        final_loss: trained.loss_log.last().copied().unwrap_or(f64::NAN),
        weights: vec![weights],
    })
}

/// Trains the redrawer and both discriminators. The frozen encoder must
/// already exist; its clusters are what the design labels stand for.
pub fn cmd_train_redrawer(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    encoder_weights(cfg)?;
    let corpus = load_corpus(cfg)?;
    let mut red_cfg = cfg.redrawer.clone();
    red_cfg.seed = cfg.seed;
    let trained = train_redrawer(&corpus, &red_cfg)?;

    cfg.persist()?;
    let paths = [files::GENERATOR_WEIGHTS, files::QUALITY_WEIGHTS, files::CONTEXT_WEIGHTS].map(|f| cfg.out_dir.join(f));
    trained.gen_weights.save(&paths[0])?;
    trained.quality_weights.save(&paths[1])?;
    trained.context_weights.save(&paths[2])?;
    write(&cfg.out_dir.join(files::CLASSES), trained.classes.iter().map(|c| format!("{c}\n")).collect::<String>())?;
    write(&cfg.out_dir.join(files::REDRAWER_LOG), format_redrawer_log(&trained.log))?;
    Ok(TrainSummary {
        steps: trained.log.len(),
        initial_loss: trained.log.first().map_or(f64::NAN, |r| r.generator.total()),
        final_loss: trained.log.last().map_or(f64::NAN, |r| r.generator.total()),
        weights: paths.to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterReport {
    pub embeddings: usize,
    pub clusters: usize,
    pub cut: f64,
    /// Against the ground-truth designs; `None` when unavailable.
    pub separation_ratio: Option<f64>,
    pub purity: Option<f64>,
    pub labels: Vec<usize>,
}

fn optional(v: Option<f64>) -> String {
    v.map_or_else(|| "unavailable".to_string(), |x| x.to_string())
}

impl ClusterReport {
    pub fn format(&self) -> String {
        format!(
            "key\tvalue\nembeddings\t{}\nclusters\t{}\ncut\t{}\nseparation_ratio\t{}\npurity\t{}\n",
            self.embeddings,
            self.clusters,
            self.cut,
            optional(self.separation_ratio),
            optional(self.purity)
        )
    }
}

impl fmt::Display for ClusterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} embeddings in {} clusters (cut {}); separation ratio {}, purity {}",
            self.embeddings,
            self.clusters,
            self.cut,
            optional(self.separation_ratio),
            optional(self.purity)
        )
    }
}

/// UPGMA over an embeddings file, plus ground-truth figures when every
/// record carries a design.
pub fn cmd_cluster(cfg: &RunConfig) -> Result<ClusterReport> {
    cfg.validate()?;
    let path = cfg.embeddings_path();
    let records = load_embeddings(&path)?;
    if records.is_empty() {
        return Err(Error::Validation(format!("{}: no embeddings", path.display())));
    }
    let points: Vec<&DesignEmbedding> = records.iter().map(|r| &r.embedding).collect();
    let merges = upgma_merges(&points);
    let cut = match cfg.cluster.cut {
        Some(c) => c,
        None => {
            let c = silhouette_cut(&points, &merges);
            if c.is_finite() {
                c
            } else {
                // No cut separates anything: everything in one cluster.
                merges.last().map_or(0.0, |m| m.height)
            }
        }
    };
    let labels = cut_labels(points.len(), &merges, cut);
    let truth: Option<Vec<String>> = records.iter().map(|r| r.design.clone()).collect();
    let (ratio, pur) = match &truth {
        Some(t) => (separation_ratio(&points, t).ok(), Some(purity(&labels, t))),
        None => (None, None),
    };
    let report = ClusterReport {
        embeddings: records.len(),
        clusters: labels.iter().max().map_or(0, |m| m + 1),
        cut,
        separation_ratio: ratio,
        purity: pur,
        labels,
    };

    cfg.persist()?;
    let mut assign = String::from("id\tproduction\tdesign\tcluster\n");
    for (r, l) in records.iter().zip(&report.labels) {
        let _ = writeln!(assign, "{}\t{}\t{}\t{l}", r.id, r.production, r.design.as_deref().unwrap_or("-"));
    }
    write(&cfg.out_dir.join(files::CLUSTERS), assign)?;
    write(&cfg.out_dir.join(files::CLUSTER_REPORT), report.format())?;
    Ok(report)
}

/// What happened to one region during redrawing.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionOutcome {
    pub frame: String,
    pub region: PixelBox,
    pub design: Option<String>,
    /// Guide design used, or `None` when skipped.
    pub matched: Option<String>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RedrawSummary {
    pub frames: usize,
    pub outcomes: Vec<RegionOutcome>,
    /// Blend masks in frame coordinates, per output frame.
    pub masks: Vec<Vec<(PixelBox, RegionMask<f64>)>>,
}

impl RedrawSummary {
    pub fn redrawn(&self) -> usize {
        self.outcomes.iter().filter(|o| o.matched.is_some()).count()
    }

    pub fn format(&self) -> String {
        let mut s = String::from("frame\tx\ty\tw\th\tdesign\tmatched\tnote\n");
        for o in &self.outcomes {
            let b = o.region;
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                o.frame,
                b.x,
                b.y,
                b.w,
                b.h,
                o.design.as_deref().unwrap_or("-"),
                o.matched.as_deref().unwrap_or("-"),
                o.note
            );
        }
        s
    }
}

impl fmt::Display for RedrawSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} frames, {} regions redrawn, {} skipped",
            self.frames,
            self.redrawn(),
            self.outcomes.len() - self.redrawn()
        )
    }
}

struct GuideDesign {
    crops: Vec<StandardCrop>,
    centroid: Option<Vec<f64>>,
}

fn frame_name(path: &Path) -> Result<String> {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Validation(format!("frame path {} has no file name", path.display())))
}

fn ingest_strict(path: &Path) -> Result<Vec<AnnotatedRegion>> {
    let manifest = ingest_manifest(path)?;
    if let Some(r) = manifest.rejected.first() {
        return Err(Error::Validation(format!("{}:{}: {}", path.display(), r.line, r.message)));
    }
    Ok(manifest.regions)
}

/// Side-by-side input/output rows, one per frame, on black.
pub fn comparison_grid(pairs: &[(&Image, &Image)]) -> Image {
    let width = pairs.iter().map(|(a, b)| a.width() + b.width()).max().unwrap_or(1).max(1);
    let height = pairs.iter().map(|(a, b)| a.height().max(b.height())).sum::<usize>().max(1);
    let mut grid = Image::filled(height, width, [0.0; 3]);
    let mut y0 = 0;
    for (a, b) in pairs {
        for (img, x0) in [(*a, 0), (*b, a.width())] {
            for y in 0..img.height() {
                for x in 0..img.width() {
                    grid.set_pixel(y0 + y, x0 + x, img.pixel(y, x));
                }
            }
        }
        y0 += a.height().max(b.height());
    }
    grid
}

/// Redraws every manifest region in the style of its color-guide design
/// and blends it back. Pixels outside the blend masks are never touched.
pub fn cmd_redraw(cfg: &RunConfig) -> Result<RedrawSummary> {
    cfg.validate()?;
    let size = cfg.redrawer.arch.image_size;
    let margin = cfg.redraw.context_margin;
    let manifest_path = cfg.manifest_path();
    let guide_path = cfg.guide_path();
    require(&manifest_path, "frame manifest")?;
    require(&guide_path, "color-guide manifest")?;
    let regions = ingest_strict(&manifest_path)?;
    let guide_regions = ingest_strict(&guide_path)?;
    let (gen, gen_w) = generator_weights(cfg)?;

    // Frames: the manifest's directory of frames plus everything it names.
    let mut frame_paths: Vec<PathBuf> = regions.iter().map(|r| r.frame.clone()).collect();
    let frames_dir = manifest_path.parent().unwrap_or(Path::new("")).join("frames");
    if frames_dir.is_dir() {
        for entry in fs::read_dir(&frames_dir).map_err(|e| Error::io(&frames_dir, e))? {
            let p = entry.map_err(|e| Error::io(&frames_dir, e))?.path();
            if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                frame_paths.push(p);
            }
        }
    }
    let mut by_name: BTreeMap<String, PathBuf> = BTreeMap::new();
    for p in frame_paths {
        let name = frame_name(&p)?;
        match by_name.get(&name) {
            Some(q) if fs::canonicalize(q).ok() != fs::canonicalize(&p).ok() => {
                return Err(Error::Validation(format!("two frames named {name}: {} and {}", q.display(), p.display())))
            }
            _ => {
                by_name.insert(name, p);
            }
        }
    }
    let mut frames: BTreeMap<String, Image> = BTreeMap::new();
    for (name, p) in &by_name {
        frames.insert(name.clone(), load_png(p)?);
    }

    // Guide crops grouped by design; unlabeled rows stand alone.
    let mut guide_images: BTreeMap<PathBuf, Image> = BTreeMap::new();
    let mut guide: BTreeMap<String, GuideDesign> = BTreeMap::new();
    for (i, r) in guide_regions.iter().enumerate() {
        if !guide_images.contains_key(&r.frame) {
            guide_images.insert(r.frame.clone(), load_png(&r.frame)?);
        }
        let crop = standardize_crop(&guide_images[&r.frame], r, (size, size), margin)?;
        let key = r.design.clone().unwrap_or_else(|| format!("guide{i}"));
        guide.entry(key).or_insert(GuideDesign { crops: Vec::new(), centroid: None }).crops.push(crop);
    }

    let mut crops = Vec::with_capacity(regions.len());
    for r in &regions {
        crops.push(standardize_crop(&frames[&frame_name(&r.frame)?], r, (size, size), margin)?);
    }

    // Nearest-centroid matching needs the encoder unless every region is
    // forced or the guide offers a single design.
    let forced = |r: &AnnotatedRegion| r.design.as_ref().and_then(|d| cfg.redraw.pairings.get(d)).cloned();
    let need_match = guide.len() > 1 && regions.iter().any(|r| forced(r).is_none());
    let mut frame_embeddings: Vec<Option<DesignEmbedding>> = vec![None; regions.len()];
    if need_match {
        let (encoder, enc_w) = encoder_weights(cfg)?;
        let k = cfg.encoder.context_size.max(1);
        let guide_ctx: Vec<Image> =
            guide.values().flat_map(|g| g.crops.iter().map(|c| c.image.clone())).take(k).collect();
        let guide_ctx: Vec<&Image> = guide_ctx.iter().collect();
        for g in guide.values_mut() {
            let imgs: Vec<&Image> = g.crops.iter().map(|c| &c.image).collect();
            let e = encoder.encode_batch(&enc_w, &imgs, &guide_ctx)?;
            let mut mean = vec![0.0; e[0].0.len()];
            for v in &e {
                for (m, x) in mean.iter_mut().zip(v.0) {
                    *m += x / e.len() as f64;
                }
            }
            g.centroid = Some(mean);
        }
        let mut productions: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in regions.iter().enumerate() {
            productions.entry(&r.production).or_default().push(i);
        }
        for members in productions.values() {
            let ctx: Vec<&Image> = members.iter().take(k).map(|&i| &crops[i].image).collect();
            let imgs: Vec<&Image> = members.iter().map(|&i| &crops[i].image).collect();
            for (&i, e) in members.iter().zip(encoder.encode_batch(&enc_w, &imgs, &ctx)?) {
                frame_embeddings[i] = Some(e);
            }
        }
    }

    let mut outputs = frames.clone();
    let mut masks: BTreeMap<String, Vec<(PixelBox, RegionMask<f64>)>> = BTreeMap::new();
    let mut outcomes = Vec::new();
    for (i, r) in regions.iter().enumerate() {
        let name = frame_name(&r.frame)?;
        let mut outcome =
            RegionOutcome { frame: name.clone(), region: r.region, design: r.design.clone(), matched: None, note: String::new() };
        let choice = match forced(r) {
            Some(d) => Some((d, "forced".to_string())),
            None if guide.len() == 1 => guide.keys().next().map(|d| (d.clone(), "only design".to_string())),
            None => frame_embeddings[i].as_ref().and_then(|e| {
                guide
                    .iter()
                    .filter_map(|(d, g)| {
                        let c = g.centroid.as_ref()?;
                        Some((d, e.0.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
                    })
                    .fold(None, |best: Option<(&String, f64)>, (d, dist)| match best {
                        Some((_, bd)) if bd <= dist => best,
                        _ => Some((d, dist)),
                    })
                    .map(|(d, dist)| (d.clone(), format!("distance {dist:.6}")))
            }),
        };
        let Some((design, note)) = choice else {
            warn!("{name} {:?}: no color-guide crop available, skipped", r.region);
            outcome.note = "skipped: empty color guide".into();
            outcomes.push(outcome);
            continue;
        };
        let Some(g) = guide.get(&design).filter(|g| !g.crops.is_empty()) else {
            warn!("{name} {:?}: color guide has no crop of design {design}, skipped", r.region);
            outcome.note = format!("skipped: no guide crop of {design}");
            outcomes.push(outcome);
            continue;
        };
        let crop = &crops[i];
        let styles: Vec<&Image> = g.crops.iter().map(|c| &c.image).collect();
        let redrawn = gen.generate(&gen_w, &crop.image, &styles)?;
        let src = crop.source;
        let resized = resample_bilinear(&redrawn, src.h, src.w);
        let local = PixelBox::new(r.region.x - src.x, r.region.y - src.y, r.region.w, r.region.h);
        let target_mask = RegionMask::from_box(src.h, src.w, local);
        let reference = &g.crops[0];
        let reference_mask = RegionMask::from_box(size, size, reference.inner);
        let colored = color_transfer(&resized, &target_mask, &reference.image, &reference_mask)?;
        let dest = outputs.get_mut(&name).expect("frame loaded");
        let (fh, fw) = (dest.height(), dest.width());
        let blend = RegionMask::from_predicate(src.h, src.w, |y, x| {
            let (fy, fx) = (src.y + y, src.x + x);
            local.contains(y, x)
                && y > 0
                && x > 0
                && y + 1 < src.h
                && x + 1 < src.w
                && fy > 0
                && fx > 0
                && fy + 1 < fh
                && fx + 1 < fw
        });
        if blend.support() > 0 {
            *dest = poisson_blend(&colored, dest, &blend, (src.y as isize, src.x as isize))?;
        }
        masks.entry(name.clone()).or_default().push((src, blend));
        info!("{name} {:?}: redrawn as {design}", r.region);
        outcome.matched = Some(design);
        outcome.note = note;
        outcomes.push(outcome);
    }

    cfg.persist()?;
    let dir = cfg.out_dir.join(files::REDRAW_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (name, img) in &outputs {
        save_png(img, &dir.join(name))?;
    }
    let pairs: Vec<(&Image, &Image)> = frames.iter().map(|(n, f)| (f, &outputs[n])).collect();
    save_png(&comparison_grid(&pairs), &cfg.out_dir.join(files::REDRAW_GRID))?;
    let summary = RedrawSummary {
        frames: outputs.len(),
        outcomes,
        masks: outputs.keys().map(|n| masks.remove(n).unwrap_or_default()).collect(),
    };
    write(&cfg.out_dir.join(files::REDRAW_LOG), summary.format())?;
    Ok(summary)
}

/// Scores the trained redrawer on fresh translation samples of the corpus.
pub fn cmd_eval(cfg: &RunConfig) -> Result<RedrawerEval> {
    cfg.validate()?;
    let corpus = load_corpus(cfg)?;
    let (gen, gen_w) = generator_weights(cfg)?;
    let classes_path = cfg.out_dir.join(files::CLASSES);
    let text = fs::read_to_string(&classes_path).map_err(|e| Error::io(&classes_path, e))?;
    let classes: Vec<String> = text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect();
    if classes != corpus_classes(&corpus) {
        return Err(Error::Validation(format!("{} does not match the corpus designs", classes_path.display())));
    }
    let (q, template) = Discriminator::new(&cfg.redrawer.arch, classes.len(), "q", cfg.seed.wrapping_add(1))?;
    let q_w = template.load_matching(&cfg.out_dir.join(files::QUALITY_WEIGHTS))?;
    // A different stream from the one training drew from.
    let samples = sample_translation_batch(&corpus, cfg.eval.samples, cfg.redrawer.style_k, !cfg.seed)?;
    let eval = evaluate_redrawer(&gen, &gen_w, Some((&q, &q_w)), &corpus, &classes, &samples, &cfg.redrawer)?;

    cfg.persist()?;
    write(
        &cfg.out_dir.join(files::EVAL_REPORT),
        format!(
            "key\tvalue\nsamples\t{}\nreconstruction\t{}\nhf_win_rate\t{}\nquality_score_t\t{}\nquality_score_l\t{}\n",
            samples.len(),
            eval.reconstruction,
            eval.hf_win_rate,
            eval.quality_score_t,
            eval.quality_score_l
        ),
    )?;
    Ok(eval)
}
