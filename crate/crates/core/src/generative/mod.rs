//! Associative VAE: one encoder/decoder pair per modality sharing a latent
//! space, with loss primitives, training, and checkpoints.

mod arch;
mod avae;
mod checkpoint;
mod loss;
mod train;

pub use arch::{AvaeArchitecture, ConvSpec, ImageArch, SoundArch};
pub use avae::{AvaeModel, EncoderDecoderPair, GaussianBatch, SoundNormalizer};
pub use checkpoint::{load_avae, save_avae, AVAE_KIND};
pub use loss::{
    avae_loss, kl_to_standard_prior, reconstruction_loss, reparameterized_sample, symmetric_kl, vae_loss,
    DiagonalGaussian, LossTerms, LossWeights, ReconKind,
};
pub use train::{
    parse_loss_csv, train_avae, EpochLoss, LossHistory, LossRow, TrainOptions, TrainingSet, LOSS_CSV_HEADER,
};

/// Policy-facing latent state.
pub type LatentCode = Vec<f32>;
