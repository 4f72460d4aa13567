//! Loss terms evaluated on plain numbers. The trainer builds the same terms
//! on the tape; these are the reference values that get logged.

use serde::{Deserialize, Serialize};

use super::TrainerConfig;

/// One ranked pair, in original batch indices: `hi` has the strictly larger
/// AS score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankPair {
    pub hi: usize,
    pub lo: usize,
    /// `(rank(lo) − rank(hi)) · γ`.
    pub margin: f64,
}

/// Pairs `(i, j)` with `i` ranked above `j` after a stable sort by AS score,
/// descending. Tied scores produce no pair but still occupy rank positions.
pub fn rank_pairs(as_scores: &[f64], gamma: f64) -> Vec<RankPair> {
    let mut order: Vec<usize> = (0..as_scores.len()).collect();
    order.sort_by(|&a, &b| as_scores[b].total_cmp(&as_scores[a]));
    let mut out = Vec::new();
    for p in 0..order.len() {
        for q in p + 1..order.len() {
            let (hi, lo) = (order[p], order[q]);
            if as_scores[hi] > as_scores[lo] {
                out.push(RankPair {
                    hi,
                    lo,
                    margin: (q - p) as f64 * gamma,
                });
            }
        }
    }
    out
}

/// `−(1/N) Σ logp·r`, with `r` centred on the batch mean when `baseline` is on.
pub fn pg_loss(agent_logps: &[f64], rewards: &[f64], baseline: bool) -> f64 {
    assert_eq!(agent_logps.len(), rewards.len(), "parallel arrays");
    if rewards.is_empty() {
        return 0.0;
    }
    let adv = advantages(rewards, baseline);
    -agent_logps.iter().zip(&adv).map(|(l, a)| l * a).sum::<f64>() / rewards.len() as f64
}

pub(crate) fn advantages(rewards: &[f64], baseline: bool) -> Vec<f64> {
    let mean = if baseline && !rewards.is_empty() {
        rewards.iter().sum::<f64>() / rewards.len() as f64
    } else {
        0.0
    };
    rewards.iter().map(|r| r - mean).collect()
}

/// Hinge sum over ranked pairs of `max(0, f(lo) − f(hi) + margin)`.
pub fn rank_loss(f: &[f64], as_scores: &[f64], gamma: f64) -> f64 {
    assert_eq!(f.len(), as_scores.len(), "parallel arrays");
    rank_pairs(as_scores, gamma)
        .iter()
        .map(|p| (f[p.lo] - f[p.hi] + p.margin).max(0.0))
        .sum()
}

/// `−(1/N) Σ log p_prior`.
pub fn prior_loss(prior_logps: &[f64]) -> f64 {
    if prior_logps.is_empty() {
        return 0.0;
    }
    -prior_logps.iter().sum::<f64>() / prior_logps.len() as f64
}

/// Mean over sequences of the per-sequence entropy sum.
pub fn entropy_loss(entropies: &[f64]) -> f64 {
    if entropies.is_empty() {
        return 0.0;
    }
    entropies.iter().sum::<f64>() / entropies.len() as f64
}

/// Entropy in nats of one categorical distribution given as log-probabilities.
pub fn step_entropy(logp: &[f64]) -> f64 {
    -logp
        .iter()
        .filter(|l| l.is_finite())
        .map(|&l| l.exp() * l)
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_pg: f64,
    pub l_rank: f64,
    pub l_prior: f64,
    pub l_ent: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `total = l_pg + α·l_rank + β·l_prior − λ·l_ent`.
    pub fn combine(l_pg: f64, l_rank: f64, l_prior: f64, l_ent: f64, cfg: &TrainerConfig) -> Self {
        LossBreakdown {
            l_pg,
            l_rank,
            l_prior,
            l_ent,
            total: l_pg + cfg.alpha * l_rank + cfg.beta * l_prior - cfg.lambda * l_ent,
        }
    }
}
