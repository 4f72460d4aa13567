//! Reinforcement fine-tuning of the molecule decoder against a docking
//! reward, regularised by ranking, prior and entropy terms.

mod loss;
mod trainer;

pub use loss::{entropy_loss, pg_loss, prior_loss, rank_loss, rank_pairs, step_entropy, LossBreakdown, RankPair};
pub use trainer::{
    finetune, finetune_with, sample_batch, sample_unique, surrogate_grad, FinetuneOutput, StepLog, Surrogate, UniqueSample,
};

use serde::{Deserialize, Serialize};

use crate::chem::TokenSequence;
use crate::generator::{GenError, LatentVector};
use crate::reward::{RewardError, RewardRecord};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RlError {
    #[error("invalid trainer configuration: {0}")]
    InvalidConfig(String),
    #[error("at least one expression profile is required")]
    NoProfiles,
    #[error("loss diverged at step {step}: {detail}")]
    DivergedLoss { step: usize, detail: String },
    #[error("oracle unavailable at step {step}: {detail}")]
    OracleUnavailable { step: usize, detail: String },
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    /// Ranking-loss weight.
    pub alpha: f64,
    /// Prior-regulariser weight.
    pub beta: f64,
    /// Entropy-bonus weight.
    pub lambda: f64,
    /// Margin per rank position.
    pub gamma: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    /// Centre rewards on the batch mean in the policy-gradient term.
    pub baseline: bool,
    pub max_len: usize,
    /// Extra scoring attempts when every oracle request of a step fails for
    /// transport reasons.
    pub oracle_retries: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            alpha: 0.5,
            beta: 0.1,
            lambda: 0.05,
            gamma: 0.2,
            batch_size: 64,
            lr: 1e-4,
            steps: 300,
            seed: 0,
            baseline: false,
            max_len: TokenSequence::DEFAULT_MAX_LEN,
            oracle_retries: 2,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be a finite non-negative number"));
            }
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.max_len == 0 {
            return bad("max_len must be positive");
        }
        Ok(())
    }
}

/// One sampled batch. All vectors are index-aligned. `prior_logps` and
/// `rewards` are empty until filled by the trainer (or by the caller when
/// building a batch by hand).
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    pub sequences: Vec<TokenSequence>,
    pub smiles: Vec<String>,
    /// Expression profile each slot was conditioned on.
    pub profiles: Vec<Vec<f64>>,
    /// Standard-normal noise used to draw each latent.
    pub eps: Vec<Vec<f64>>,
    pub latents: Vec<LatentVector>,
    pub agent_logps: Vec<f64>,
    pub prior_logps: Vec<f64>,
    pub rewards: Vec<RewardRecord>,
    pub entropies: Vec<f64>,
}

impl EpisodeBatch {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn reward_values(&self) -> Vec<f64> {
        self.rewards.iter().map(|r| r.reward).collect()
    }

    pub fn as_scores(&self) -> Vec<f64> {
        self.rewards.iter().map(|r| r.as_score).collect()
    }

    /// The literal loss terms on this batch's stored values.
    pub fn losses(&self, cfg: &TrainerConfig) -> LossBreakdown {
        LossBreakdown::combine(
            pg_loss(&self.agent_logps, &self.reward_values(), cfg.baseline),
            rank_loss(&self.agent_logps, &self.as_scores(), cfg.gamma),
            prior_loss(&self.prior_logps),
            entropy_loss(&self.entropies),
            cfg,
        )
    }
}

#[cfg(test)]
mod tests;
