//! Dataset construction: manifest ingestion, level-of-detail split, crop
//! standardization, balanced samplers and a procedural eye-glyph corpus.

mod corpus;
mod crop;
mod manifest;
mod sampler;
mod synth;

pub use corpus::{Corpus, DetailLabel, Patch, LABEL_FILE};
pub use crop::{lod_split, margin_pixels, standardize_crop, LodThresholds, StandardCrop};
pub use manifest::{format_manifest, ingest_manifest, AnnotatedRegion, Manifest, RegionKind, RejectedRow};
pub use sampler::{
    sample_translation_batch, sample_triplet_batch, TranslationIndices, TranslationSampler, Triplet, TripletSampler,
};
pub use synth::{
    default_specs, design_name, patch_inner_box, render_glyph, synth_generate, synth_scene, DesignParams, Jitter,
    SyntheticScene, SyntheticStyleSpec,
};
