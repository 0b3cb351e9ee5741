//! Two-domain classifier training with feature-wise and compound-wise
//! adversarial discriminators, plus the DANN, NoT and DT baselines.

pub mod losses;
pub mod model;
pub mod train;

pub use losses::{
    binary_cross_entropy, classification_loss, compound_disc_loss, domain_loss, entropy, feature_disc_loss, scale,
};
pub use model::{BatchLabels, GradReversal, LossTerms, TrainConfig, TransferModel, Variant};
pub use train::{baseline_fcn, train, train_dann, EpochRow, Sampler, TrainOutcome};
