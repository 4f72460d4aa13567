//! Expression VAE + molecule VAE: pretraining, joint training, decoding and
//! sequence likelihoods.

mod config;
mod model;
mod params;
mod train;

pub use config::ModelConfig;
pub use model::{
    decode, decode_batch, encode_expression, gaussian_kl, reparameterize, reparameterize_with, sequence_log_likelihood,
    standard_normal, step_log_probs, DecodeMode,
};
pub use params::{ModelParams, EXP_DECODER, EXP_ENCODER, MOL_DECODER, MOL_ENCODER};
pub use train::{joint_train, pretrain_molvae, LossLog, LossRecord, TrainConfig, Triplet};

pub(crate) use model::{exp_encode, reparam, teacher_forced};
pub(crate) use params::Bound;

use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("loss diverged in epoch {epoch}: {detail}")]
    DivergedLoss { epoch: usize, detail: String },
    #[error("profile has {found} genes, model expects {expected}")]
    GeneCountMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Per-gene expression values (z-scores) for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionProfile(Vec<f64>);

impl ExpressionProfile {
    pub fn new(values: Vec<f64>) -> Result<Self, GenError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GenError::ShapeMismatch(format!("profile value {i} is not finite")));
        }
        Ok(ExpressionProfile(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A point in the shared latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Self {
        LatentVector(values)
    }

    pub fn zeros(d: usize) -> Self {
        LatentVector(vec![0.0; d])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[cfg(test)]
mod tests;
