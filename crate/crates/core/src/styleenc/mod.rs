//! Style-aware design encoder, triplet training, UPGMA clustering and the
//! separation-ratio metric.

mod cluster;
mod model;
mod records;
mod train;

pub use cluster::{cut_labels, purity, separation_ratio, silhouette, silhouette_cut, upgma_cluster, upgma_merges, Merge};
pub use model::{encode_design, DesignEmbedding, EncoderArch, StyleEncoder, EMBEDDING_DIM};
pub use records::{format_embeddings, load_embeddings, parse_embeddings, save_embeddings, EmbeddingRecord};
pub use train::{
    embed_corpus, train_style_encoder, triplet_margin_loss, triplet_margin_loss_grad, ContextSampler,
    EncoderTrainConfig, TrainedEncoder,
};
