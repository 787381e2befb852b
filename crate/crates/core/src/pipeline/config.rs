use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasetgen::LodThresholds;
use crate::error::{Error, Result};
use crate::styleenc::EncoderTrainConfig;
use crate::translator::RedrawerTrainConfig;

/// Everything a run needs. Serialized as TOML; every field has a default so
/// a config file only lists what it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Where the corpus (patches + label index) lives.
    pub corpus_root: PathBuf,
    pub out_dir: PathBuf,
    /// Master seed. Commands copy it into the per-stage configs.
    pub seed: u64,
    pub synth: SynthConfig,
    pub lod: LodThresholds,
    pub encoder: EncoderTrainConfig,
    pub redrawer: RedrawerTrainConfig,
    pub cluster: ClusterConfig,
    pub redraw: RedrawConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_root: PathBuf::from("corpus"),
            out_dir: PathBuf::from("out"),
            seed: 0,
            synth: SynthConfig::default(),
            lod: LodThresholds::default(),
            encoder: EncoderTrainConfig::default(),
            redrawer: RedrawerTrainConfig::default(),
            cluster: ClusterConfig::default(),
            redraw: RedrawConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub productions: usize,
    pub designs: usize,
    /// Patches per design and detail level.
    pub patches: usize,
    pub patch_size: usize,
    /// Context around the region, as a fraction of the region side.
    pub context_margin: f64,
    /// Frames in the demo scene written next to the corpus (0 = none).
    pub scene_frames: usize,
    pub scene_frame_size: (usize, usize),
    /// Eye box `(w, h)` in scene frames.
    pub scene_eye_box: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            productions: 4,
            designs: 4,
            patches: 25,
            patch_size: 64,
            context_margin: 0.25,
            scene_frames: 2,
            scene_frame_size: (96, 192),
            scene_eye_box: (20, 14),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Embeddings to cluster; defaults to `<out_dir>/embeddings.tsv`.
    pub embeddings: Option<PathBuf>,
    /// Dendrogram cut height; unset picks the cut with the best silhouette.
    pub cut: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RedrawConfig {
    /// Frames and their regions; defaults to `<corpus_root>/scene/manifest.csv`.
    pub manifest: Option<PathBuf>,
    /// Color-guide regions (rows point at the guide image); defaults to
    /// `<corpus_root>/scene/guide.csv`.
    pub guide: Option<PathBuf>,
    pub context_margin: f64,
    /// Forced pairings, frame design id to guide design id.
    pub pairings: BTreeMap<String, String>,
}

impl Default for RedrawConfig {
    fn default() -> Self {
        RedrawConfig { manifest: None, guide: None, context_margin: 0.25, pairings: BTreeMap::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Validation translation samples.
    pub samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { samples: 32 }
    }
}

impl RunConfig {
    /// Parses a TOML config and validates it.
    pub fn from_toml(text: &str, shown: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            Error::Format { path: shown.to_string(), line, message: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// Writes the config to `<out_dir>/config.toml` so the run can be replayed.
    pub fn persist(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out_dir.join("config.toml");
        fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Sets the master seed and pushes it into the stage configs.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sync_seeds();
        self
    }

    pub(crate) fn sync_seeds(&mut self) {
        self.encoder.seed = self.seed;
        self.redrawer.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.synth;
        if s.productions < 2 || s.designs < 2 || s.patches < 2 {
            return Err(Error::Validation(format!(
                "synthetic corpus needs at least 2 productions, 2 designs and 2 patches (got {}, {}, {})",
                s.productions, s.designs, s.patches
            )));
        }
        if !(0.0..0.5).contains(&s.context_margin) || !(0.0..0.5).contains(&self.redraw.context_margin) {
            return Err(Error::Config("context margins must lie in [0, 0.5)".into()));
        }
        if !(self.lod.low_below > 0.0 && self.lod.low_below <= self.lod.high_above) {
            return Err(Error::Config("detail thresholds must satisfy 0 < low <= high".into()));
        }
        self.encoder.arch.validate()?;
        self.redrawer.arch.validate()?;
        for (name, size) in [("encoder", self.encoder.arch.image_size), ("redrawer", self.redrawer.arch.image_size)] {
            if size != s.patch_size {
                return Err(Error::Config(format!("{name} image size {size} differs from patch size {}", s.patch_size)));
            }
        }
        if let Some(cut) = self.cluster.cut {
            if !(cut >= 0.0) {
                return Err(Error::Config(format!("cluster cut {cut} must be non-negative")));
            }
        }
        if self.eval.samples == 0 {
            return Err(Error::Config("eval needs at least one sample".into()));
        }
        Ok(())
    }

    pub fn embeddings_path(&self) -> PathBuf {
        self.cluster.embeddings.clone().unwrap_or_else(|| self.out_dir.join(files::EMBEDDINGS))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.redraw.manifest.clone().unwrap_or_else(|| self.corpus_root.join("scene").join(files::SCENE_MANIFEST))
    }

    pub fn guide_path(&self) -> PathBuf {
        self.redraw.guide.clone().unwrap_or_else(|| self.corpus_root.join("scene").join(files::GUIDE_MANIFEST))
    }
}

/// Artifact file names inside the output directory.
pub mod files {
    pub const ENCODER_WEIGHTS: &str = "encoder.weights";
    pub const ENCODER_LOG: &str = "encoder_loss.tsv";
    pub const EMBEDDINGS: &str = "embeddings.tsv";
    pub const GENERATOR_WEIGHTS: &str = "generator.weights";
    pub const QUALITY_WEIGHTS: &str = "quality.weights";
    pub const CONTEXT_WEIGHTS: &str = "context.weights";
    pub const CLASSES: &str = "classes.txt";
    pub const REDRAWER_LOG: &str = "redrawer_loss.tsv";
    pub const CLUSTERS: &str = "clusters.tsv";
    pub const CLUSTER_REPORT: &str = "cluster_report.tsv";
    pub const REDRAW_DIR: &str = "redraw";
    pub const REDRAW_GRID: &str = "grid.png";
    pub const REDRAW_LOG: &str = "redraw.tsv";
    pub const EVAL_REPORT: &str = "eval.tsv";
    pub const SCENE_MANIFEST: &str = "manifest.csv";
    pub const GUIDE_MANIFEST: &str = "guide.csv";
}
