#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustics;
pub mod agents;
pub mod archive;
pub mod config;
pub mod env;
pub mod error;
pub mod generative;
pub mod modality;
pub mod nn;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use modality::{Modality, ModalitySubset};
