//! Forward passes of the expression VAE and the molecule VAE.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::params::Bound;
use super::{ExpressionProfile, GenError, LatentVector, ModelParams};
use crate::chem::{TokenSequence, Vocabulary};
use crate::nn::{dense, dropout, gru_step_unchecked, std_from_logvar, Activation, Tape, Tensor, Var};

/// Optional inverted dropout applied to recurrent layer outputs.
pub(crate) type Dropout<'r> = Option<(f64, &'r mut dyn RngCore)>;

fn apply_dropout(tape: &Tape, x: Var, drop: &mut Dropout<'_>) -> Var {
    match drop {
        Some((p, rng)) => dropout(tape, x, *p, &mut **rng),
        None => x,
    }
}

/// Expression encoder on a batch `x: [B, G]`; returns `(mu, logvar)`.
pub(crate) fn exp_encode(b: &Bound, x: Var) -> (Var, Var) {
    let lay = b.layout();
    let mut h = x;
    for s in &lay.exp_enc {
        h = dense(b.tape, &b.dense(*s, Activation::Tanh), h);
    }
    let mu = dense(b.tape, &b.dense(lay.exp_mu, Activation::Identity), h);
    let lv = dense(b.tape, &b.dense(lay.exp_logvar, Activation::Identity), h);
    (mu, lv)
}

/// Expression decoder: `z: [B, d] -> [B, G]`.
pub(crate) fn exp_decode(b: &Bound, z: Var) -> Var {
    let lay = b.layout();
    let last = lay.exp_dec.len() - 1;
    let mut h = z;
    for (i, s) in lay.exp_dec.iter().enumerate() {
        let act = if i == last { Activation::Identity } else { Activation::Tanh };
        h = dense(b.tape, &b.dense(*s, act), h);
    }
    h
}

/// `mu + exp(logvar / 2) ⊙ eps` with `eps` supplied as a constant.
pub(crate) fn reparam(tape: &Tape, mu: Var, logvar: Var, eps: Tensor) -> Var {
    let e = tape.constant(eps);
    let sd = tape.std_dev(logvar);
    let noise = tape.mul(sd, e);
    tape.add(mu, noise)
}

/// Per-row KL divergence from N(0, I): `[B, d] -> [B, 1]`.
pub(crate) fn kl_rows(tape: &Tape, mu: Var, logvar: Var) -> Var {
    let d = tape.shape(mu).1 as f64;
    let ev = tape.exp(logvar);
    let mu2 = tape.mul(mu, mu);
    let s = tape.add(ev, mu2);
    let s = tape.sub(s, logvar);
    let s = tape.sum_cols(s);
    let s = tape.add_scalar(s, -d);
    tape.scale(s, 0.5)
}

fn column(mask: impl Iterator<Item = bool>) -> Tensor {
    Tensor::col(mask.map(|m| if m { 1.0 } else { 0.0 }).collect())
}

/// Bidirectional GRU encoder over full token sequences (BOS..EOS).
/// Returns `(mu, logvar)` from the concatenated final states of the top layer.
pub(crate) fn mol_encode(b: &Bound, vocab: &Vocabulary, seqs: &[&TokenSequence]) -> (Var, Var) {
    let tape = b.tape;
    let lay = b.layout();
    let n = seqs.len();
    let hidden = b.params.config().hidden;
    let t_max = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    let embed = b.var(lay.enc_embed);
    let masks: Vec<(Var, Var)> = (0..t_max)
        .map(|t| {
            let m = tape.constant(column(seqs.iter().map(|s| t < s.len())));
            let inv = tape.one_minus(m);
            (m, inv)
        })
        .collect();
    let mut inputs: Vec<Var> = (0..t_max)
        .map(|t| {
            let ids: Vec<usize> = seqs.iter().map(|s| s.ids().get(t).copied().unwrap_or(vocab.pad_id())).collect();
            tape.gather_rows(embed, &ids)
        })
        .collect();
    let mut finals = (tape.constant(Tensor::zeros(n, hidden)), tape.constant(Tensor::zeros(n, hidden)));
    for l in 0..lay.enc_fwd.len() {
        let fwd = b.gru(lay.enc_fwd[l]);
        let bwd = b.gru(lay.enc_bwd[l]);
        let zero = tape.constant(Tensor::zeros(n, hidden));
        let mut out_f = Vec::with_capacity(t_max);
        let mut h = zero;
        for t in 0..t_max {
            let cand = gru_step_unchecked(tape, &fwd, inputs[t], h);
            let (m, inv) = masks[t];
            let keep = tape.mul_col(h, inv);
            let upd = tape.mul_col(cand, m);
            h = tape.add(upd, keep);
            out_f.push(h);
        }
        let hf = h;
        let mut out_b = vec![zero; t_max];
        let mut h = zero;
        for t in (0..t_max).rev() {
            let cand = gru_step_unchecked(tape, &bwd, inputs[t], h);
            let (m, inv) = masks[t];
            let keep = tape.mul_col(h, inv);
            let upd = tape.mul_col(cand, m);
            h = tape.add(upd, keep);
            out_b[t] = h;
        }
        finals = (hf, h);
        if l + 1 < lay.enc_fwd.len() {
            inputs = (0..t_max).map(|t| tape.concat_cols(&[out_f[t], out_b[t]])).collect();
        }
    }
    let top = tape.concat_cols(&[finals.0, finals.1]);
    let mu = dense(tape, &b.dense(lay.enc_mu, Activation::Identity), top);
    let lv = dense(tape, &b.dense(lay.enc_logvar, Activation::Identity), top);
    (mu, lv)
}

/// Initial decoder hidden states, one per layer: `tanh(z W + b)`.
pub(crate) fn dec_init(b: &Bound, z: Var) -> Vec<Var> {
    b.layout()
        .dec_init
        .iter()
        .map(|s| dense(b.tape, &b.dense(*s, Activation::Tanh), z))
        .collect()
}

/// One decoder step: consumes token `ids` (one per row), updates `h` and
/// returns next-token log-probabilities over the output alphabet.
pub(crate) fn dec_step(b: &Bound, z: Var, ids: &[usize], h: &mut [Var], drop: &mut Dropout<'_>) -> Var {
    let tape = b.tape;
    let lay = b.layout();
    let emb = tape.gather_rows(b.var(lay.dec_embed), ids);
    let mut x = tape.concat_cols(&[emb, z]);
    for (l, s) in lay.dec_gru.iter().enumerate() {
        let g = b.gru(*s);
        h[l] = gru_step_unchecked(tape, &g, x, h[l]);
        x = apply_dropout(tape, h[l], drop);
    }
    let logits = dense(tape, &b.dense(lay.dec_out, Activation::Identity), x);
    tape.log_softmax(logits)
}

/// Teacher-forced pass over a batch.
pub(crate) struct TeacherForced {
    /// Σ_t log p(a_t | a_<t, z) per sequence, `[B, 1]`.
    pub logp: Var,
    /// Σ_t H(p(· | a_<t, z)) per sequence, `[B, 1]`.
    pub entropy: Var,
}

pub(crate) fn teacher_forced(
    b: &Bound,
    vocab: &Vocabulary,
    z: Var,
    seqs: &[&TokenSequence],
    mut drop: Dropout<'_>,
) -> TeacherForced {
    let tape = b.tape;
    let n = seqs.len();
    let steps = seqs.iter().map(|s| s.n_predictions()).max().unwrap_or(0);
    let mut h = dec_init(b, z);
    let mut logp = tape.constant(Tensor::zeros(n, 1));
    let mut entropy = tape.constant(Tensor::zeros(n, 1));
    for t in 0..steps {
        let live: Vec<bool> = seqs.iter().map(|s| t < s.n_predictions()).collect();
        let inputs: Vec<usize> = seqs
            .iter()
            .zip(&live)
            .map(|(s, &l)| if l { s.ids()[t] } else { vocab.pad_id() })
            .collect();
        let targets: Vec<usize> = seqs
            .iter()
            .zip(&live)
            .map(|(s, &l)| if l { vocab.output_index(s.ids()[t + 1]).unwrap_or(0) } else { 0 })
            .collect();
        let lp = dec_step(b, z, &inputs, &mut h, &mut drop);
        let mask = tape.constant(column(live.into_iter()));
        let picked = tape.pick(lp, &targets);
        let picked = tape.mul(picked, mask);
        logp = tape.add(logp, picked);
        let p = tape.exp(lp);
        let plogp = tape.mul(p, lp);
        let neg_h = tape.sum_cols(plogp);
        let neg_h = tape.mul(neg_h, mask);
        entropy = tape.sub(entropy, neg_h);
    }
    TeacherForced { logp, entropy }
}

fn check_latent(params: &ModelParams, z: &LatentVector) -> Result<(), GenError> {
    let d = params.config().latent_dim;
    if z.len() != d {
        return Err(GenError::ShapeMismatch(format!("latent has {} values, model expects {d}", z.len())));
    }
    Ok(())
}

/// Encodes one expression profile to `(mu, logvar)`.
pub fn encode_expression(
    params: &ModelParams,
    profile: &ExpressionProfile,
) -> Result<(LatentVector, LatentVector), GenError> {
    let g = params.config().gene_count;
    if profile.len() != g {
        return Err(GenError::GeneCountMismatch {
            expected: g,
            found: profile.len(),
        });
    }
    let tape = Tape::new();
    let b = Bound::frozen(&tape, params);
    let x = tape.constant(Tensor::row(profile.values().to_vec()));
    let (mu, lv) = exp_encode(&b, x);
    tape.check()?;
    let mu = LatentVector::new(tape.value(mu).data().to_vec());
    let lv = LatentVector::new(tape.value(lv).data().to_vec());
    Ok((mu, lv))
}

/// Draws `d` standard-normal values.
pub fn standard_normal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// `z = mu + exp(logvar / 2) ⊙ ε` with `ε ~ N(0, I)` drawn from `rng`.
/// The standard deviation is exactly zero for `logvar` below −40.
pub fn reparameterize<R: Rng + ?Sized>(mu: &LatentVector, logvar: &LatentVector, rng: &mut R) -> LatentVector {
    assert_eq!(mu.len(), logvar.len(), "mu/logvar length mismatch");
    let eps = standard_normal(mu.len(), rng);
    reparameterize_with(mu, logvar, &eps)
}

pub fn reparameterize_with(mu: &LatentVector, logvar: &LatentVector, eps: &[f64]) -> LatentVector {
    LatentVector::new(
        mu.values()
            .iter()
            .zip(logvar.values())
            .zip(eps)
            .map(|((&m, &lv), &e)| m + std_from_logvar(lv) * e)
            .collect(),
    )
}

/// KL(N(mu, diag(exp(logvar))) ‖ N(0, I)).
pub fn gaussian_kl(mu: &LatentVector, logvar: &LatentVector) -> f64 {
    assert_eq!(mu.len(), logvar.len(), "mu/logvar length mismatch");
    0.5 * mu
        .values()
        .iter()
        .zip(logvar.values())
        .map(|(&m, &lv)| lv.exp() + m * m - 1.0 - lv)
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

fn choose<R: Rng + ?Sized>(row: &[f64], mode: DecodeMode, rng: &mut R) -> usize {
    match mode {
        DecodeMode::Greedy => {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        }
        DecodeMode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, &v) in row.iter().enumerate() {
                acc += v.exp();
                if u < acc {
                    return k;
                }
            }
            // rounding left a sliver above the cumulative sum
            row.iter().rposition(|v| v.is_finite() && *v > f64::NEG_INFINITY).unwrap_or(0)
        }
    }
}

/// Autoregressive generation for a batch of latents. Row `i` draws only from
/// `rngs[i]`, so each sequence is reproducible on its own regardless of batch
/// composition. Generation stops at EOS or after `max_len` body tokens, in
/// which case the sequence is returned without EOS.
pub fn decode_batch<R: Rng>(
    params: &ModelParams,
    vocab: &Vocabulary,
    zs: &[LatentVector],
    mode: DecodeMode,
    rngs: &mut [R],
    max_len: usize,
) -> Result<Vec<TokenSequence>, GenError> {
    assert_eq!(zs.len(), rngs.len(), "one rng per latent");
    if vocab.len() != params.config().vocab_size {
        return Err(GenError::ShapeMismatch(format!(
            "vocabulary has {} tokens, model expects {}",
            vocab.len(),
            params.config().vocab_size
        )));
    }
    for z in zs {
        check_latent(params, z)?;
    }
    let n = zs.len();
    let tape = Tape::new();
    let b = Bound::frozen(&tape, params);
    let d = params.config().latent_dim;
    let zdata: Vec<f64> = zs.iter().flat_map(|z| z.values().iter().copied()).collect();
    let z = tape.constant(Tensor::matrix(n, d, zdata));
    let mut h = dec_init(&b, z);
    let mut seqs: Vec<Vec<usize>> = vec![vec![vocab.bos_id()]; n];
    let mut done = vec![false; n];
    for _ in 0..max_len + 1 {
        if done.iter().all(|&x| x) {
            break;
        }
        let inputs: Vec<usize> = seqs.iter().map(|s| *s.last().expect("non-empty")).collect();
        let lp = dec_step(&b, z, &inputs, &mut h, &mut None);
        tape.check()?;
        let lpv = tape.value(lp);
        for i in 0..n {
            if done[i] {
                continue;
            }
            let k = choose(lpv.row_slice(i), mode, &mut rngs[i]);
            let id = vocab.id_of_output(k);
            if id == vocab.eos_id() {
                seqs[i].push(id);
                done[i] = true;
            } else if seqs[i].len() > max_len {
                // max_len body tokens already emitted; truncate without EOS
                done[i] = true;
            } else {
                seqs[i].push(id);
            }
        }
    }
    Ok(seqs.into_iter().map(|ids| TokenSequence::from_raw(ids, max_len)).collect())
}

/// Generates one sequence conditioned on `z`.
pub fn decode<R: Rng>(
    params: &ModelParams,
    vocab: &Vocabulary,
    z: &LatentVector,
    mode: DecodeMode,
    rng: &mut R,
    max_len: usize,
) -> Result<TokenSequence, GenError> {
    let mut out = decode_batch(params, vocab, std::slice::from_ref(z), mode, std::slice::from_mut(rng), max_len)?;
    Ok(out.pop().expect("one sequence"))
}

/// Teacher-forced `Σ_t log p(a_t | a_<t, z)` in nats.
pub fn sequence_log_likelihood(
    params: &ModelParams,
    vocab: &Vocabulary,
    seq: &TokenSequence,
    z: &LatentVector,
) -> Result<f64, GenError> {
    check_latent(params, z)?;
    let tape = Tape::new();
    let b = Bound::frozen(&tape, params);
    let zv = tape.constant(Tensor::row(z.values().to_vec()));
    let out = teacher_forced(&b, vocab, zv, &[seq], None);
    tape.check()?;
    let v = tape.scalar(out.logp);
    Ok(v)
}

/// Next-token log-probabilities at every teacher-forced step, over the
/// decoder's output alphabet (see [`Vocabulary::id_of_output`]).
pub fn step_log_probs(params: &ModelParams, seq: &TokenSequence, z: &LatentVector) -> Result<Vec<Vec<f64>>, GenError> {
    check_latent(params, z)?;
    let tape = Tape::new();
    let b = Bound::frozen(&tape, params);
    let zv = tape.constant(Tensor::row(z.values().to_vec()));
    let mut h = dec_init(&b, zv);
    let mut steps = Vec::new();
    for t in 0..seq.n_predictions() {
        steps.push(dec_step(&b, zv, &seq.ids()[t..t + 1], &mut h, &mut None));
    }
    tape.check()?;
    let out = steps.iter().map(|&s| tape.value(s).data().to_vec()).collect();
    Ok(out)
}
