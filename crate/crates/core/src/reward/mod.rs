//! Docking oracles, docking-score normalisation and the docking × QED reward.

mod external;
mod mock;
mod scorer;

pub use external::{ExternalOracle, TIMEOUT_ENV};
pub use mock::{Feature, MockOracle, MockSpec};
pub use scorer::RewardScorer;

use serde::{Deserialize, Serialize};

use crate::chem::{canonical_key, check_valence, compute_descriptors, parse_smiles, qed, QedParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("molecule is not valid")]
    InvalidMolecule,
    #[error("could not start oracle command: {0}")]
    SpawnFailure(String),
    #[error("oracle timed out after {0:.1} s")]
    Timeout(f64),
    #[error("no usable score: {0}")]
    ParseFailure(String),
}

impl OracleError {
    /// Errors that say nothing about the molecule itself: the oracle never
    /// ran to completion.
    pub fn is_transport(&self) -> bool {
        matches!(self, OracleError::SpawnFailure(_) | OracleError::Timeout(_))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("rescaling factor k must be negative, got {0}")]
    NonNegativeK(f64),
    #[error("docking score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("qed_threshold must be in [0, 1), got {0}")]
    BadThreshold(f64),
}

/// Raw docking scores in kcal/mol-like units; more negative binds better.
pub trait DockingOracle {
    /// Scores a batch; the result is index-aligned with `smiles`.
    fn score_batch(&self, smiles: &[String]) -> Vec<Result<f64, OracleError>>;

    fn score(&self, smiles: &str) -> Result<f64, OracleError> {
        self.score_batch(&[smiles.to_string()])
            .pop()
            .unwrap_or_else(|| Err(OracleError::ParseFailure("empty result".into())))
    }
}

/// What the ranking loss sorts by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsMode {
    #[default]
    Reward,
    Dock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    /// Docking score mapped to dock = 1; must be negative.
    pub k: f64,
    pub qed_threshold: f64,
    pub qed_params: QedParams,
    pub as_mode: AsMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            k: -10.0,
            qed_threshold: 0.3,
            qed_params: QedParams::builtin().clone(),
            as_mode: AsMode::Reward,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.k < 0.0) {
            return Err(RewardError::NonNegativeK(self.k));
        }
        if !(0.0..1.0).contains(&self.qed_threshold) {
            return Err(RewardError::BadThreshold(self.qed_threshold));
        }
        Ok(())
    }
}

/// Everything known about one scored molecule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub smiles: String,
    /// Passed parsing, valence, the QED gate and docking.
    pub valid: bool,
    /// Parsed and passed valence checks (no QED gate).
    pub chem_valid: bool,
    pub raw_dock: Option<f64>,
    pub dock: f64,
    pub qed: f64,
    pub reward: f64,
    pub as_score: f64,
    pub failure: Option<String>,
}

impl RewardRecord {
    pub(crate) fn rejected(smiles: &str, chem_valid: bool, qed: f64, why: String) -> Self {
        RewardRecord {
            smiles: smiles.to_string(),
            valid: false,
            chem_valid,
            raw_dock: None,
            dock: 0.0,
            qed,
            reward: 0.0,
            as_score: 0.0,
            failure: Some(why),
        }
    }
}

/// Chemistry verdict and QED for one SMILES; `None` if it does not parse or
/// fails valence checks. QED is computed on the canonical spelling so that
/// every spelling of a molecule gets the same bits.
pub(crate) fn chem_qed(smiles: &str, params: &QedParams) -> Option<f64> {
    let g = parse_smiles(smiles).ok()?;
    if !check_valence(&g).valid {
        return None;
    }
    let g = parse_smiles(&canonical_key(&g)).ok()?;
    qed(&compute_descriptors(&g), params).ok()
}

/// Parse success, zero valence violations and `qed >= qed_threshold`.
pub fn is_valid(smiles: &str, cfg: &RewardConfig) -> bool {
    chem_qed(smiles, &cfg.qed_params).is_some_and(|q| q >= cfg.qed_threshold)
}

/// `max(raw, k) / k` for valid molecules, clamped to [0, 1]; 0 otherwise.
pub fn normalize_dock(raw: f64, valid: bool, k: f64) -> Result<f64, RewardError> {
    if !(k < 0.0) {
        return Err(RewardError::NonNegativeK(k));
    }
    if !valid {
        return Ok(0.0);
    }
    if !raw.is_finite() {
        return Err(RewardError::NonFiniteScore(raw));
    }
    Ok((raw.max(k) / k).clamp(0.0, 1.0))
}

pub(crate) fn as_score(mode: AsMode, dock: f64, reward: f64) -> f64 {
    match mode {
        AsMode::Reward => reward,
        AsMode::Dock => dock,
    }
}

/// Builds the record for a molecule that passed the validity gate, given the
/// oracle's answer.
pub(crate) fn docked_record(
    smiles: &str,
    q: f64,
    raw: Result<f64, OracleError>,
    cfg: &RewardConfig,
) -> RewardRecord {
    let raw = match raw {
        Ok(r) => r,
        Err(e) => return RewardRecord::rejected(smiles, true, q, e.to_string()),
    };
    match normalize_dock(raw, true, cfg.k) {
        Ok(dock) => {
            let reward = dock * q;
            RewardRecord {
                smiles: smiles.to_string(),
                valid: true,
                chem_valid: true,
                raw_dock: Some(raw),
                dock,
                qed: q,
                reward,
                as_score: as_score(cfg.as_mode, dock, reward),
                failure: None,
            }
        }
        Err(e) => RewardRecord::rejected(smiles, true, q, e.to_string()),
    }
}

/// Reward(s) = Dock(s) × QED(s). Molecules failing the validity gate get
/// reward 0 and never reach the oracle; oracle failures are penalised the
/// same way.
pub fn reward(smiles: &str, oracle: &dyn DockingOracle, cfg: &RewardConfig) -> RewardRecord {
    match chem_qed(smiles, &cfg.qed_params) {
        None => RewardRecord::rejected(smiles, false, 0.0, "failed parsing or valence checks".into()),
        Some(q) if q < cfg.qed_threshold => {
            RewardRecord::rejected(smiles, true, q, format!("qed {q:.4} below threshold {}", cfg.qed_threshold))
        }
        Some(q) => docked_record(smiles, q, oracle.score(smiles), cfg),
    }
}

#[cfg(test)]
mod tests;
