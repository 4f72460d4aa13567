//! Molecule-VAE pretraining and joint expression/molecule training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{exp_decode, exp_encode, kl_rows, mol_encode, reparam, standard_normal, teacher_forced};
use super::params::{Bound, MOL_ENCODER};
use super::{ExpressionProfile, GenError, ModelConfig, ModelParams};
use crate::chem::{TokenSequence, Vocabulary};
use crate::nn::{AdamConfig, AdamState, NnError, Tape, Tensor, Var};
use crate::util::mix_seed;

const INIT_STREAM: u64 = 0x1417;
const TRAIN_STREAM: u64 = 0x7e41;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Fraction of all optimizer steps over which the KL weight ramps
    /// linearly from 0 to 1.
    pub kl_anneal_fraction: f64,
    pub dropout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            lr: 5e-4,
            seed: 0,
            kl_anneal_fraction: 1.0 / 3.0,
            dropout: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err("lr must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.kl_anneal_fraction) {
            return Err("kl_anneal_fraction must be in [0, 1]".into());
        }
        Ok(())
    }

    fn kl_weight(&self, step: usize, total: usize) -> f64 {
        let ramp = self.kl_anneal_fraction * total as f64;
        if ramp <= 0.0 {
            1.0
        } else {
            (step as f64 / ramp).min(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub term: String,
    pub value: f64,
}

/// Per-epoch loss terms, averaged over training examples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossLog {
    pub records: Vec<LossRecord>,
}

impl LossLog {
    pub fn push(&mut self, epoch: usize, term: &str, value: f64) {
        self.records.push(LossRecord {
            epoch,
            term: term.to_string(),
            value,
        });
    }

    /// Values of one term in epoch order.
    pub fn series(&self, term: &str) -> Vec<f64> {
        self.records.iter().filter(|r| r.term == term).map(|r| r.value).collect()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("plain record serializes"));
            out.push('\n');
        }
        out
    }
}

/// A molecule with the expression profiles of the same cells before and
/// after treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub seq: TokenSequence,
    pub perturbed: ExpressionProfile,
    pub unperturbed: ExpressionProfile,
}

impl Triplet {
    pub fn delta(&self) -> Vec<f64> {
        self.perturbed
            .values()
            .iter()
            .zip(self.unperturbed.values())
            .map(|(p, u)| p - u)
            .collect()
    }
}

fn diverged(epoch: usize, e: NnError) -> GenError {
    GenError::DivergedLoss {
        epoch,
        detail: e.to_string(),
    }
}

struct EpochStats {
    sums: Vec<f64>,
    count: usize,
}

impl EpochStats {
    fn new(terms: usize) -> Self {
        EpochStats {
            sums: vec![0.0; terms],
            count: 0,
        }
    }

    fn add(&mut self, values: &[f64], n: usize) {
        for (s, v) in self.sums.iter_mut().zip(values) {
            *s += v * n as f64;
        }
        self.count += n;
    }

    fn flush(&self, log: &mut LossLog, epoch: usize, names: &[&str]) {
        for (name, s) in names.iter().zip(&self.sums) {
            log.push(epoch, name, s / self.count as f64);
        }
    }
}

fn eps_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
    let data = (0..n).flat_map(|_| standard_normal(d, rng)).collect();
    Tensor::matrix(n, d, data)
}

struct Step {
    loss: Var,
    terms: Vec<f64>,
}

fn optimize(
    params: &mut ModelParams,
    cfg: &TrainConfig,
    n_examples: usize,
    trainable: &[bool],
    term_names: &[&str],
    mut forward: impl FnMut(&Tape, &ModelParams, &[usize], f64, &mut ChaCha8Rng) -> Result<Step, NnError>,
) -> Result<LossLog, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, TRAIN_STREAM));
    let mut adam = AdamState::new(params.tensors(), AdamConfig::with_lr(cfg.lr));
    let per_epoch = n_examples.div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut log = LossLog::default();
    let mut order: Vec<usize> = (0..n_examples).collect();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut stats = EpochStats::new(term_names.len());
        for chunk in order.chunks(cfg.batch_size) {
            let kl_w = cfg.kl_weight(step, total);
            let mut grads = params.zeros_like();
            {
                let tape = Tape::new();
                let s = forward(&tape, params, chunk, kl_w, &mut rng).map_err(|e| diverged(epoch, e))?;
                tape.check().map_err(|e| diverged(epoch, e))?;
                tape.backward(s.loss, &mut grads).map_err(|e| diverged(epoch, e))?;
                stats.add(&s.terms, chunk.len());
            }
            adam.step(params.tensors_mut(), &grads, trainable)
                .map_err(|e| diverged(epoch, e))?;
            step += 1;
        }
        stats.flush(&mut log, epoch, term_names);
    }
    Ok(log)
}

/// Trains the molecule VAE on `corpus` from a fresh initialization seeded by
/// `cfg.seed`. Loss per example: token NLL + w·KL with w annealed linearly
/// from 0 to 1.
pub fn pretrain_molvae(
    corpus: &[TokenSequence],
    vocab: &Vocabulary,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, LossLog), GenError> {
    model.validate().map_err(GenError::InvalidConfig)?;
    cfg.validate().map_err(GenError::InvalidConfig)?;
    if corpus.is_empty() {
        return Err(GenError::EmptyCorpus);
    }
    if vocab.len() != model.vocab_size {
        return Err(GenError::InvalidConfig(format!(
            "vocabulary has {} tokens, model expects {}",
            vocab.len(),
            model.vocab_size
        )));
    }
    let mut params = ModelParams::init(model, mix_seed(cfg.seed, INIT_STREAM));
    let drop_p = if cfg.dropout { model.dropout } else { 0.0 };
    let d = model.latent_dim;
    let log = optimize(
        &mut params,
        cfg,
        corpus.len(),
        &[],
        &["nll", "kl", "kl_weight", "loss"],
        |tape, p, idx, kl_w, rng| {
            let b = Bound::trainable(tape, p);
            let seqs: Vec<&TokenSequence> = idx.iter().map(|&i| &corpus[i]).collect();
            let (mu, lv) = mol_encode(&b, vocab, &seqs);
            let z = reparam(tape, mu, lv, eps_matrix(rng, seqs.len(), d));
            let tf = teacher_forced(&b, vocab, z, &seqs, Some((drop_p, rng)));
            let nll = tape.mean(tf.logp);
            let nll = tape.scale(nll, -1.0);
            let kl = tape.mean(kl_rows(tape, mu, lv));
            let wkl = tape.scale(kl, kl_w);
            let loss = tape.add(nll, wkl);
            tape.check()?;
            let terms = vec![tape.scalar(nll), tape.scalar(kl), kl_w, tape.scalar(loss)];
            Ok(Step { loss, terms })
        },
    )?;
    Ok((params, log))
}

/// Joint training on triplets starting from a pretrained molecule VAE.
///
/// The expression encoder sees the perturbed − unperturbed delta; its latent
/// must reconstruct both the molecule (through the molecule decoder) and the
/// delta (through the expression decoder). Molecule-encoder arrays are
/// frozen and come back bit-identical.
pub fn joint_train(
    start: &ModelParams,
    vocab: &Vocabulary,
    triplets: &[Triplet],
    cfg: &TrainConfig,
) -> Result<(ModelParams, LossLog), GenError> {
    cfg.validate().map_err(GenError::InvalidConfig)?;
    if triplets.is_empty() {
        return Err(GenError::EmptyCorpus);
    }
    let g = start.config().gene_count;
    for t in triplets {
        for p in [&t.perturbed, &t.unperturbed] {
            if p.len() != g {
                return Err(GenError::GeneCountMismatch {
                    expected: g,
                    found: p.len(),
                });
            }
        }
    }
    let mut params = start.clone();
    let trainable: Vec<bool> = params.mask(&[MOL_ENCODER]).into_iter().map(|frozen| !frozen).collect();
    let drop_p = if cfg.dropout { start.config().dropout } else { 0.0 };
    let d = start.config().latent_dim;
    let deltas: Vec<Vec<f64>> = triplets.iter().map(Triplet::delta).collect();
    let log = optimize(
        &mut params,
        cfg,
        triplets.len(),
        &trainable,
        &["nll", "mse", "kl", "kl_weight", "loss"],
        |tape, p, idx, kl_w, rng| {
            let b = Bound::trainable(tape, p);
            let seqs: Vec<&TokenSequence> = idx.iter().map(|&i| &triplets[i].seq).collect();
            let x = Tensor::matrix(idx.len(), g, idx.iter().flat_map(|&i| deltas[i].iter().copied()).collect());
            let x = tape.constant(x);
            let (mu, lv) = exp_encode(&b, x);
            let z = reparam(tape, mu, lv, eps_matrix(rng, idx.len(), d));
            let tf = teacher_forced(&b, vocab, z, &seqs, Some((drop_p, rng)));
            let nll = tape.mean(tf.logp);
            let nll = tape.scale(nll, -1.0);
            let recon = exp_decode(&b, z);
            let diff = tape.sub(recon, x);
            let sq = tape.mul(diff, diff);
            let mse = tape.mean(sq);
            let kl = tape.mean(kl_rows(tape, mu, lv));
            let wkl = tape.scale(kl, kl_w);
            let loss = tape.add(nll, mse);
            let loss = tape.add(loss, wkl);
            tape.check()?;
            let terms = vec![
                tape.scalar(nll),
                tape.scalar(mse),
                tape.scalar(kl),
                kl_w,
                tape.scalar(loss),
            ];
            Ok(Step { loss, terms })
        },
    )?;
    Ok((params, log))
}
