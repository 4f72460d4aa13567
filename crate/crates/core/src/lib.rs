//! Phenotype-conditioned SMILES generation with multi-objective
//! policy-gradient fine-tuning.
//!
//! The crate is organised bottom-up:
//!
//! - [`chem`]: SMILES tokenizer and parser, valence validation, descriptors,
//!   QED-style drug-likeness, canonical keys and path fingerprints.
//! - [`nn`]: a small 64-bit tensor toolkit with a reverse-mode tape, GRU and
//!   feed-forward layers, and Adam.
//! - [`generator`]: the dual-channel VAE (expression encoder + SMILES VAE),
//!   its pretraining and joint training, decoding and sequence likelihoods.
//! - [`reward`]: docking oracles (mock and external process), docking-score
//!   normalisation and the docking × QED reward.
//! - [`rl`]: batch sampling and the policy-gradient / ranking / prior /
//!   entropy loss stack driving agent fine-tuning.
//! - [`metrics`]: validity, uniqueness, novelty, diversity and report output.
//! - [`data`]: corpora, synthetic triplets, checkpoints and run manifests.
//! - [`config`]: the strict run configuration shared by the CLI.

pub mod chem;
pub mod config;
pub mod data;
pub mod generator;
pub mod metrics;
pub mod nn;
pub mod reward;
pub mod rl;
mod util;

pub use chem::{
    canonical_key, check_valence, compute_descriptors, fingerprint, parse_smiles, qed, tokenize,
    DescriptorVector, MolGraph, QedParams, TokenSequence, Vocabulary,
};
pub use generator::{ExpressionProfile, LatentVector, ModelConfig, ModelParams};
pub use nn::Tensor;
pub use reward::{DockingOracle, RewardConfig, RewardRecord};
pub use rl::{EpisodeBatch, LossBreakdown, TrainerConfig};
