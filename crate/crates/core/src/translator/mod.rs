//! The context-aware redrawer, its quality and context discriminators,
//! the training losses and the adversarial loop.

mod losses;
mod masks;
mod model;
mod train;

pub use losses::{
    adversarial_generator_loss, adversarial_graph, class_score, discriminator_objective, generator_objective,
    hinge_negative, hinge_negative_graph, hinge_positive, hinge_positive_graph, input_gradient_sq_norm, r1_penalty,
    reconstruction_graph, reconstruction_loss, ClassScores, GeneratedTriplet, GeneratorTerms, Role, RoleScores,
    DEFAULT_GAMMA,
};
pub use masks::{build_masks, mask_batch, MaskPair, DEFAULT_BAND_FRACTION, DEFAULT_BORDER_FRACTION};
pub use model::{DiscOutput, Discriminator, Generator, TranslatorArch};
pub use train::{
    corpus_classes, evaluate_redrawer, format_redrawer_log, train_redrawer, RedrawerEval, RedrawerLogRow,
    RedrawerTrainConfig, TrainedRedrawer, REDRAWER_LOG_HEADER,
};
