use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::advantages;
use super::{entropy_loss, prior_loss, rank_pairs, EpisodeBatch, LossBreakdown, RlError, TrainerConfig};
use crate::chem::{canonical_key, check_valence, detokenize, parse_smiles, TokenSequence, Vocabulary};
use crate::generator::{
    decode_batch, encode_expression, exp_encode, reparam, reparameterize_with, standard_normal, teacher_forced, Bound,
    DecodeMode, ExpressionProfile, GenError, LatentVector, ModelParams, EXP_ENCODER, MOL_DECODER,
};
use crate::nn::{AdamConfig, AdamState, Tape, Tensor, Var};
use crate::reward::{DockingOracle, RewardConfig, RewardScorer};
use crate::util::mix_seed;

const SAMPLE_STREAM: u64 = 0x5a3b;
const UNIQUE_STREAM: u64 = 0x0c71;

/// Draws `n` molecules from `agent`. Slot `i` is conditioned on
/// `profiles[i % len]` and draws its latent noise and then its tokens from a
/// generator seeded by `(batch_seed, i)`, so a slot's molecule does not
/// depend on the batch size. Agent log-likelihoods and entropies are filled;
/// prior log-likelihoods and rewards are left empty.
pub fn sample_batch(
    agent: &ModelParams,
    vocab: &Vocabulary,
    profiles: &[ExpressionProfile],
    n: usize,
    max_len: usize,
    batch_seed: u64,
) -> Result<EpisodeBatch, RlError> {
    let mut batch = draw(agent, vocab, profiles, n, max_len, batch_seed)?;
    let (logps, ents) = frozen_scores(agent, vocab, &batch.latents, &batch.sequences)?;
    batch.agent_logps = logps;
    batch.entropies = ents;
    Ok(batch)
}

fn draw(
    agent: &ModelParams,
    vocab: &Vocabulary,
    profiles: &[ExpressionProfile],
    n: usize,
    max_len: usize,
    batch_seed: u64,
) -> Result<EpisodeBatch, RlError> {
    if profiles.is_empty() {
        return Err(RlError::NoProfiles);
    }
    let d = agent.config().latent_dim;
    let encoded = profiles
        .iter()
        .take(n)
        .map(|p| encode_expression(agent, p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| ChaCha8Rng::seed_from_u64(mix_seed(batch_seed, i as u64)))
        .collect();
    let mut eps = Vec::with_capacity(n);
    let mut latents = Vec::with_capacity(n);
    for (i, rng) in rngs.iter_mut().enumerate() {
        let (mu, lv) = &encoded[i % encoded.len()];
        let e = standard_normal(d, rng);
        latents.push(reparameterize_with(mu, lv, &e));
        eps.push(e);
    }
    let sequences = decode_batch(agent, vocab, &latents, DecodeMode::Sample, &mut rngs, max_len)?;
    let smiles = sequences
        .iter()
        .map(|s| detokenize(s, vocab).unwrap_or_default())
        .collect();
    Ok(EpisodeBatch {
        sequences,
        smiles,
        profiles: (0..n).map(|i| profiles[i % profiles.len()].values().to_vec()).collect(),
        eps,
        latents,
        agent_logps: Vec::new(),
        prior_logps: Vec::new(),
        rewards: Vec::new(),
        entropies: Vec::new(),
    })
}

/// Result of [`sample_unique`].
#[derive(Debug, Clone, PartialEq)]
pub struct UniqueSample {
    /// Valid molecules with pairwise distinct canonical keys, in draw order.
    /// Each keeps the spelling of its first draw.
    pub smiles: Vec<String>,
    pub draws: usize,
    /// The draw budget ran out before `n` distinct molecules turned up.
    pub cap_hit: bool,
}

/// Draws from `params` in rounds of `batch_size` until `n` distinct valid
/// molecules have been seen or `retry_factor × n` draws are spent.
pub fn sample_unique(
    params: &ModelParams,
    vocab: &Vocabulary,
    profiles: &[ExpressionProfile],
    n: usize,
    max_len: usize,
    seed: u64,
    batch_size: usize,
    retry_factor: usize,
) -> Result<UniqueSample, RlError> {
    if batch_size == 0 {
        return Err(RlError::InvalidConfig("batch_size must be positive".into()));
    }
    let cap = n.saturating_mul(retry_factor);
    let stream = mix_seed(seed, UNIQUE_STREAM);
    let mut seen = BTreeSet::new();
    let mut smiles = Vec::new();
    let mut draws = 0;
    let mut round = 0;
    while smiles.len() < n && draws < cap {
        let k = batch_size.min(cap - draws);
        let batch = draw(params, vocab, profiles, k, max_len, mix_seed(stream, round))?;
        draws += k;
        round += 1;
        for s in batch.smiles {
            let Some(g) = parse_smiles(&s).ok().filter(|g| check_valence(g).valid) else {
                continue;
            };
            if seen.insert(canonical_key(&g)) && smiles.len() < n {
                smiles.push(s);
            }
        }
    }
    Ok(UniqueSample {
        cap_hit: smiles.len() < n,
        smiles,
        draws,
    })
}

fn stack(rows: &[Vec<f64>], width: usize) -> Tensor {
    Tensor::matrix(rows.len(), width, rows.iter().flatten().copied().collect())
}

/// Teacher-forced log-likelihoods and entropy sums under `params` with the
/// latents held fixed.
fn frozen_scores(
    params: &ModelParams,
    vocab: &Vocabulary,
    latents: &[LatentVector],
    seqs: &[TokenSequence],
) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    let d = params.config().latent_dim;
    let tape = Tape::new();
    let b = Bound::frozen(&tape, params);
    let rows: Vec<Vec<f64>> = latents.iter().map(|z| z.values().to_vec()).collect();
    let z = tape.constant(stack(&rows, d));
    let refs: Vec<&TokenSequence> = seqs.iter().collect();
    let tf = teacher_forced(&b, vocab, z, &refs, None);
    tape.check().map_err(GenError::from)?;
    let lp = tape.value(tf.logp).data().to_vec();
    let ent = tape.value(tf.entropy).data().to_vec();
    Ok((lp, ent))
}

/// Value and gradient of the optimised objective on a batch.
#[derive(Debug, Clone)]
pub struct Surrogate {
    /// `−mean(logp·(adv + β·prior_logp/max_len)) + α·rank − λ·mean(entropy)`.
    pub value: f64,
    /// Gradient for every parameter array of the agent.
    pub grads: Vec<Tensor>,
    /// Agent log-likelihoods under the current parameters.
    pub agent_logps: Vec<f64>,
    pub entropies: Vec<f64>,
}

/// Builds the surrogate on the tape. The latent of each slot is recomputed
/// from its profile and stored noise, so the expression encoder receives
/// gradient too. The prior term cannot move the agent on its own (the prior
/// log-likelihood has no dependence on the agent), so it enters as an extra
/// per-sequence score scaled by `1/max_len`.
fn forward(tape: &Tape, agent: &ModelParams, vocab: &Vocabulary, batch: &EpisodeBatch, cfg: &TrainerConfig) -> Result<(Var, Var, Var), RlError> {
    let n = batch.len();
    let mc = agent.config();
    if batch.rewards.len() != n || batch.prior_logps.len() != n || batch.profiles.len() != n || batch.eps.len() != n {
        return Err(RlError::InvalidConfig("episode batch arrays are not index-aligned".into()));
    }
    if let Some(p) = batch.profiles.iter().find(|p| p.len() != mc.gene_count) {
        return Err(GenError::GeneCountMismatch {
            expected: mc.gene_count,
            found: p.len(),
        }
        .into());
    }
    let b = Bound::trainable(tape, agent);
    let x = tape.constant(stack(&batch.profiles, mc.gene_count));
    let (mu, lv) = exp_encode(&b, x);
    let z = reparam(tape, mu, lv, stack(&batch.eps, mc.latent_dim));
    let refs: Vec<&TokenSequence> = batch.sequences.iter().collect();
    let tf = teacher_forced(&b, vocab, z, &refs, None);

    let adv = advantages(&batch.reward_values(), cfg.baseline);
    let c = cfg.max_len as f64;
    let score: Vec<f64> = adv
        .iter()
        .zip(&batch.prior_logps)
        .map(|(a, p)| a + cfg.beta * p / c)
        .collect();
    let weighted = tape.mul(tf.logp, tape.constant(Tensor::col(score)));
    let pg = tape.scale(tape.mean(weighted), -1.0);

    let pairs = rank_pairs(&batch.as_scores(), cfg.gamma);
    let rank = if pairs.is_empty() {
        tape.constant(Tensor::scalar(0.0))
    } else {
        let hi: Vec<usize> = pairs.iter().map(|p| p.hi).collect();
        let lo: Vec<usize> = pairs.iter().map(|p| p.lo).collect();
        let margins = Tensor::col(pairs.iter().map(|p| p.margin).collect());
        let diff = tape.sub(tape.gather_rows(tf.logp, &lo), tape.gather_rows(tf.logp, &hi));
        let hinge = tape.relu(tape.add(diff, tape.constant(margins)));
        tape.sum(hinge)
    };
    let ent = tape.mean(tf.entropy);
    let loss = tape.add(pg, tape.scale(rank, cfg.alpha));
    let loss = tape.sub(loss, tape.scale(ent, cfg.lambda));
    Ok((loss, tf.logp, tf.entropy))
}

/// Evaluates the surrogate objective and its gradient on a populated batch.
pub fn surrogate_grad(
    agent: &ModelParams,
    vocab: &Vocabulary,
    batch: &EpisodeBatch,
    cfg: &TrainerConfig,
) -> Result<Surrogate, RlError> {
    let tape = Tape::new();
    let (loss, logp, ent) = forward(&tape, agent, vocab, batch, cfg)?;
    let mut grads = agent.zeros_like();
    tape.backward(loss, &mut grads).map_err(GenError::from)?;
    let value = tape.scalar(loss);
    let agent_logps = tape.value(logp).data().to_vec();
    let entropies = tape.value(ent).data().to_vec();
    Ok(Surrogate {
        value,
        grads,
        agent_logps,
        entropies,
    })
}

/// One line of the fine-tuning run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub l_pg: f64,
    pub l_rank: f64,
    pub l_prior: f64,
    pub l_ent: f64,
    pub total: f64,
    /// The value actually differentiated (see [`Surrogate`]).
    pub surrogate: f64,
    pub mean_reward: f64,
    /// Fraction of the batch that parses and passes valence checks.
    pub validity_rate: f64,
    pub mean_entropy: f64,
    /// Distinct canonical keys among chemically valid molecules.
    pub unique_in_batch: usize,
    pub mean_agent_logp: f64,
    pub mean_prior_logp: f64,
}

impl StepLog {
    pub fn to_jsonl(logs: &[StepLog]) -> String {
        let mut s = String::new();
        for l in logs {
            s.push_str(&serde_json::to_string(l).expect("plain struct serializes"));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutput {
    pub agent: ModelParams,
    pub log: Vec<StepLog>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn unique_valid(smiles: &[String]) -> usize {
    smiles
        .iter()
        .filter_map(|s| parse_smiles(s).ok())
        .filter(|g| check_valence(g).valid)
        .map(|g| canonical_key(&g))
        .collect::<BTreeSet<_>>()
        .len()
}

/// Fine-tunes a copy of `prior`. Each step samples a batch from the agent,
/// scores it, and takes one Adam step on the expression encoder and the
/// molecule decoder. `prior` itself is never modified.
pub fn finetune(
    prior: &ModelParams,
    vocab: &Vocabulary,
    oracle: &dyn DockingOracle,
    profiles: &[ExpressionProfile],
    cfg: &TrainerConfig,
    reward_cfg: &RewardConfig,
) -> Result<FinetuneOutput, RlError> {
    finetune_with(prior, vocab, oracle, profiles, cfg, reward_cfg, |_| {})
}

/// [`finetune`] with a hook that sees each log line as soon as its step ends.
pub fn finetune_with(
    prior: &ModelParams,
    vocab: &Vocabulary,
    oracle: &dyn DockingOracle,
    profiles: &[ExpressionProfile],
    cfg: &TrainerConfig,
    reward_cfg: &RewardConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<FinetuneOutput, RlError> {
    cfg.validate()?;
    reward_cfg.validate()?;
    if profiles.is_empty() {
        return Err(RlError::NoProfiles);
    }
    let mut agent = prior.clone();
    let trainable = agent.mask(&[EXP_ENCODER, MOL_DECODER]);
    let mut adam = AdamState::new(agent.tensors(), AdamConfig::with_lr(cfg.lr));
    let mut scorer = RewardScorer::new(reward_cfg.clone());
    let stream = mix_seed(cfg.seed, SAMPLE_STREAM);
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut batch = draw(&agent, vocab, profiles, cfg.batch_size, cfg.max_len, mix_seed(stream, step as u64))?;
        batch.prior_logps = frozen_scores(prior, vocab, &batch.latents, &batch.sequences)?.0;

        let mut attempt = 0;
        batch.rewards = loop {
            let (records, down) = scorer.score_batch(oracle, &batch.smiles);
            if !down {
                break records;
            }
            if attempt == cfg.oracle_retries {
                let detail = records
                    .iter()
                    .filter(|r| r.chem_valid)
                    .find_map(|r| r.failure.clone())
                    .unwrap_or_else(|| "no response".into());
                return Err(RlError::OracleUnavailable { step, detail });
            }
            attempt += 1;
        };

        let diverged = |detail: String| RlError::DivergedLoss { step, detail };
        let s = surrogate_grad(&agent, vocab, &batch, cfg).map_err(|e| diverged(e.to_string()))?;
        if !s.value.is_finite() {
            return Err(diverged(format!("surrogate loss is {}", s.value)));
        }
        batch.agent_logps = s.agent_logps;
        batch.entropies = s.entropies;
        let parts: LossBreakdown = batch.losses(cfg);
        if !parts.total.is_finite() {
            return Err(diverged(format!("total loss is {}", parts.total)));
        }
        adam.step(agent.tensors_mut(), &s.grads, &trainable)
            .map_err(|e| diverged(e.to_string()))?;

        let n = batch.len() as f64;
        log.push(StepLog {
            step,
            l_pg: parts.l_pg,
            l_rank: parts.l_rank,
            l_prior: parts.l_prior,
            l_ent: parts.l_ent,
            total: parts.total,
            surrogate: s.value,
            mean_reward: mean(&batch.reward_values()),
            validity_rate: batch.rewards.iter().filter(|r| r.chem_valid).count() as f64 / n,
            mean_entropy: entropy_loss(&batch.entropies),
            unique_in_batch: unique_valid(&batch.smiles),
            mean_agent_logp: mean(&batch.agent_logps),
            mean_prior_logp: -prior_loss(&batch.prior_logps),
        });
        on_step(&log[step]);
    }
    Ok(FinetuneOutput { agent, log })
}
