use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::chem::{tokenize, TokenSequence, Vocabulary};
use crate::nn::{ffn_apply, gru_cell, log_softmax, Activation, GruParams, Tensor};

fn tiny_vocab() -> Vocabulary {
    Vocabulary::from_tokens(["<pad>", "<bos>", "<eos>", "C", "O", "N"]).unwrap()
}

fn tiny_config(v: &Vocabulary) -> ModelConfig {
    ModelConfig {
        gene_count: 5,
        latent_dim: 3,
        hidden: 4,
        layers: 1,
        embed_dim: 2,
        exp_hidden: vec![4],
        dropout: 0.0,
        max_len: 12,
        vocab_size: v.len(),
    }
}

fn zeroed(cfg: &ModelConfig) -> ModelParams {
    let mut p = ModelParams::init(cfg, 0);
    for t in p.tensors_mut() {
        *t = t.zeros_like();
    }
    p
}

fn set(p: &mut ModelParams, name: &str, t: Tensor) {
    let slot = p.get_mut(name).unwrap_or_else(|| panic!("no array {name}"));
    assert_eq!(slot.shape(), t.shape(), "{name}");
    *slot = t;
}

fn seq(v: &Vocabulary, s: &str) -> TokenSequence {
    tokenize(s, v).unwrap()
}

#[test]
fn layout_names_and_blocks() {
    let v = tiny_vocab();
    let p = ModelParams::init(&tiny_config(&v), 1);
    assert!(p.get("exp_enc.l0.w").is_some());
    assert!(p.get("mol_enc.fwd0.u_h").is_some());
    assert!(p.get("mol_enc.bwd0.b_r").is_some());
    assert_eq!(p.get("mol_dec.out.w").unwrap().shape(), &[4, 4]);
    assert_eq!(p.get("mol_dec.gru0.w_z").unwrap().shape(), &[5, 4]);
    assert_eq!(p.get("exp_dec.l1.w").unwrap().shape(), &[4, 5]);
    let n_blocks: usize = [EXP_ENCODER, EXP_DECODER, MOL_ENCODER, MOL_DECODER]
        .iter()
        .map(|b| p.block(b).len())
        .sum();
    assert_eq!(n_blocks, p.names().len());
    assert_eq!(ModelParams::init(&tiny_config(&v), 1), p);
    assert_ne!(ModelParams::init(&tiny_config(&v), 2), p);
}

#[test]
fn zero_weight_expression_encoder_returns_head_biases() {
    let v = tiny_vocab();
    let cfg = tiny_config(&v);
    let mut p = zeroed(&cfg);
    set(&mut p, "exp_enc.mu.b", Tensor::row(vec![0.1, 0.2, 0.3]));
    set(&mut p, "exp_enc.logvar.b", Tensor::row(vec![-1.0, 0.0, 1.0]));
    let prof = ExpressionProfile::new(vec![1.0, -2.0, 0.5, 3.0, 0.0]).unwrap();
    let (mu, lv) = encode_expression(&p, &prof).unwrap();
    assert_eq!(mu.values(), &[0.1, 0.2, 0.3]);
    assert_eq!(lv.values(), &[-1.0, 0.0, 1.0]);
    let short = ExpressionProfile::new(vec![1.0; 4]).unwrap();
    assert!(matches!(
        encode_expression(&p, &short),
        Err(GenError::GeneCountMismatch { expected: 5, found: 4 })
    ));
}

#[test]
fn expression_encoder_matches_plain_ffn() {
    let v = tiny_vocab();
    let p = ModelParams::init(&tiny_config(&v), 9);
    let prof = ExpressionProfile::new(vec![0.3, -1.2, 0.8, 2.0, -0.1]).unwrap();
    let (mu, lv) = encode_expression(&p, &prof).unwrap();
    let (mu2, lv2) = encode_expression(&p, &prof).unwrap();
    assert_eq!((&mu, &lv), (&mu2, &lv2));
    let g = |n: &str| p.get(n).unwrap().clone();
    let x = Tensor::row(prof.values().to_vec());
    let hidden = ffn_apply(&[(g("exp_enc.l0.w"), g("exp_enc.l0.b"), Activation::Tanh)], &x).unwrap();
    let m = ffn_apply(&[(g("exp_enc.mu.w"), g("exp_enc.mu.b"), Activation::Identity)], &hidden).unwrap();
    let l = ffn_apply(&[(g("exp_enc.logvar.w"), g("exp_enc.logvar.b"), Activation::Identity)], &hidden).unwrap();
    for k in 0..3 {
        assert!((mu.values()[k] - m.data()[k]).abs() < 1e-12);
        assert!((lv.values()[k] - l.data()[k]).abs() < 1e-12);
    }
}

#[test]
fn reparameterize_cases() {
    let mu = LatentVector::new(vec![0.5, -1.0]);
    let tiny = LatentVector::new(vec![-50.0, -41.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(reparameterize(&mu, &tiny, &mut rng), mu);
    let lv = LatentVector::new(vec![0.0, 1.0]);
    let a = reparameterize(&mu, &lv, &mut ChaCha8Rng::seed_from_u64(4));
    let b = reparameterize(&mu, &lv, &mut ChaCha8Rng::seed_from_u64(4));
    assert_eq!(a, b);

    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut sums = [0.0; 2];
    for _ in 0..n {
        let z = reparameterize(&mu, &lv, &mut rng);
        sums[0] += z.values()[0];
        sums[1] += z.values()[1];
    }
    for k in 0..2 {
        let sd = (lv.values()[k] / 2.0).exp();
        let mean = sums[k] / n as f64;
        assert!((mean - mu.values()[k]).abs() < 3.0 * sd / (n as f64).sqrt(), "coord {k}: {mean}");
    }
}

#[test]
fn gaussian_kl_cases() {
    assert_eq!(gaussian_kl(&LatentVector::zeros(4), &LatentVector::zeros(4)), 0.0);
    let ones = LatentVector::new(vec![1.0; 6]);
    assert!((gaussian_kl(&ones, &LatentVector::zeros(6)) - 3.0).abs() < 1e-15);
    let mu = LatentVector::new(vec![0.3, -0.7, 1.1]);
    let lv = LatentVector::new(vec![-0.5, 0.2, 0.9]);
    let mut want = 0.0;
    for k in 0..3 {
        let (m, l) = (mu.values()[k], lv.values()[k]);
        want += 0.5 * (l.exp() + m * m - 1.0 - l);
    }
    assert!((gaussian_kl(&mu, &lv) - want).abs() < 1e-12);
}

/// A decoder that emits C, C, EOS: the hidden state climbs 0 → 0.5 → 0.75 as
/// carbons are read and EOS only wins once it passes 0.6.
fn counting_decoder(v: &Vocabulary) -> ModelParams {
    let cfg = ModelConfig {
        gene_count: 2,
        latent_dim: 1,
        hidden: 1,
        layers: 1,
        embed_dim: 1,
        exp_hidden: vec![2],
        dropout: 0.0,
        max_len: 10,
        vocab_size: v.len(),
    };
    let mut p = zeroed(&cfg);
    let c = v.id("C").unwrap();
    let mut embed = Tensor::zeros(v.len(), 1);
    embed.set(c, 0, 1.0);
    set(&mut p, "mol_dec.embed", embed);
    set(&mut p, "mol_dec.gru0.w_h", Tensor::col(vec![50.0, 0.0]));
    // output alphabet: [EOS, C]
    set(&mut p, "mol_dec.out.w", Tensor::row(vec![1000.0, 0.0]));
    set(&mut p, "mol_dec.out.b", Tensor::row(vec![-600.0, 0.0]));
    p
}

#[test]
fn hand_built_decoders() {
    let v = Vocabulary::from_tokens(["<pad>", "<bos>", "<eos>", "C"]).unwrap();
    let p = counting_decoder(&v);
    let z = LatentVector::zeros(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = decode(&p, &v, &z, DecodeMode::Greedy, &mut rng, 10).unwrap();
    assert_eq!(crate::chem::detokenize(&s, &v).unwrap(), "CC");
    assert!(s.is_terminated(&v));
    let sampled = decode(&p, &v, &z, DecodeMode::Sample, &mut rng, 10).unwrap();
    assert_eq!(sampled, s);
    assert!(sequence_log_likelihood(&p, &v, &s, &z).unwrap().abs() < 1e-12);

    let mut eos_only = p.clone();
    set(&mut eos_only, "mol_dec.out.w", Tensor::row(vec![0.0, 0.0]));
    set(&mut eos_only, "mol_dec.out.b", Tensor::row(vec![100.0, 0.0]));
    let s = decode(&eos_only, &v, &z, DecodeMode::Greedy, &mut rng, 10).unwrap();
    assert_eq!(s.ids(), &[v.bos_id(), v.eos_id()]);
}

#[test]
fn truncation_without_eos() {
    let v = Vocabulary::from_tokens(["<pad>", "<bos>", "<eos>", "C"]).unwrap();
    let mut p = counting_decoder(&v);
    set(&mut p, "mol_dec.out.w", Tensor::row(vec![0.0, 0.0]));
    set(&mut p, "mol_dec.out.b", Tensor::row(vec![-100.0, 0.0]));
    let s = decode(&p, &v, &LatentVector::zeros(1), DecodeMode::Greedy, &mut ChaCha8Rng::seed_from_u64(0), 5).unwrap();
    assert_eq!(s.len(), 6);
    assert!(!s.is_terminated(&v));
}

#[test]
fn uniform_policy_likelihood() {
    let v = tiny_vocab();
    let p = zeroed(&tiny_config(&v));
    let s = seq(&v, "CO");
    let ll = sequence_log_likelihood(&p, &v, &s, &LatentVector::zeros(3)).unwrap();
    assert!((ll - 3.0 * (0.25f64).ln()).abs() < 1e-12);
}

#[test]
fn likelihood_matches_manual_recurrence() {
    let v = tiny_vocab();
    let p = ModelParams::init(&tiny_config(&v), 21);
    let z = LatentVector::new(vec![0.4, -0.3, 0.9]);
    let s = seq(&v, "CCON");
    let g = |n: &str| p.get(n).unwrap().clone();
    let gru = GruParams {
        w_z: g("mol_dec.gru0.w_z"),
        w_r: g("mol_dec.gru0.w_r"),
        w_h: g("mol_dec.gru0.w_h"),
        u_z: g("mol_dec.gru0.u_z"),
        u_r: g("mol_dec.gru0.u_r"),
        u_h: g("mol_dec.gru0.u_h"),
        b_z: g("mol_dec.gru0.b_z"),
        b_r: g("mol_dec.gru0.b_r"),
        b_h: g("mol_dec.gru0.b_h"),
    };
    let zt = Tensor::row(z.values().to_vec());
    let mut h = ffn_apply(&[(g("mol_dec.init0.w"), g("mol_dec.init0.b"), Activation::Tanh)], &zt).unwrap();
    let embed = g("mol_dec.embed");
    let mut total = 0.0;
    for t in 0..s.n_predictions() {
        let mut x = embed.row_slice(s.ids()[t]).to_vec();
        x.extend(z.values());
        h = gru_cell(&gru, &Tensor::row(x), &h).unwrap();
        let logits = ffn_apply(&[(g("mol_dec.out.w"), g("mol_dec.out.b"), Activation::Identity)], &h).unwrap();
        let lp = log_softmax(&logits);
        total += lp.data()[v.output_index(s.ids()[t + 1]).unwrap()];
    }
    let ll = sequence_log_likelihood(&p, &v, &s, &z).unwrap();
    assert!((ll - total).abs() < 1e-12, "{ll} vs {total}");

    for row in step_log_probs(&p, &s, &z).unwrap() {
        let mass: f64 = row.iter().map(|x| x.exp()).sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }
}

#[test]
fn batch_decoding_matches_single_decoding() {
    let v = tiny_vocab();
    let p = ModelParams::init(&tiny_config(&v), 5);
    let zs: Vec<LatentVector> = (0..4).map(|i| LatentVector::new(vec![0.1 * i as f64, -0.2, 0.3])).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..4).map(ChaCha8Rng::seed_from_u64).collect();
    let batch = decode_batch(&p, &v, &zs, DecodeMode::Sample, &mut rngs, 12).unwrap();
    for (i, z) in zs.iter().enumerate() {
        let mut r = ChaCha8Rng::seed_from_u64(i as u64);
        assert_eq!(decode(&p, &v, z, DecodeMode::Sample, &mut r, 12).unwrap(), batch[i]);
        assert!(batch[i].len() <= 14);
    }
}

fn corpus(v: &Vocabulary) -> Vec<TokenSequence> {
    ["CC", "CO", "CCO", "CN", "OCC", "CCN", "NCO", "CCC"].iter().map(|s| seq(v, s)).collect()
}

#[test]
fn pretraining_zero_epochs_and_determinism() {
    let v = tiny_vocab();
    let cfg = tiny_config(&v);
    let zero = TrainConfig {
        epochs: 0,
        seed: 3,
        ..TrainConfig::default()
    };
    let (p0, log) = pretrain_molvae(&corpus(&v), &v, &cfg, &zero).unwrap();
    assert!(log.records.is_empty());
    let (p0b, _) = pretrain_molvae(&corpus(&v), &v, &cfg, &zero).unwrap();
    assert_eq!(p0, p0b);

    let tc = TrainConfig {
        epochs: 3,
        batch_size: 3,
        lr: 0.01,
        seed: 3,
        ..TrainConfig::default()
    };
    let (a, la) = pretrain_molvae(&corpus(&v), &v, &cfg, &tc).unwrap();
    let (b, lb) = pretrain_molvae(&corpus(&v), &v, &cfg, &tc).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert_ne!(a, p0);
    assert_eq!(la.series("nll").len(), 3);
    assert!(matches!(pretrain_molvae(&[], &v, &cfg, &tc), Err(GenError::EmptyCorpus)));
}

#[test]
fn joint_training_freezes_molecule_encoder() {
    let v = tiny_vocab();
    let cfg = tiny_config(&v);
    let start = ModelParams::init(&cfg, 8);
    let trips: Vec<Triplet> = corpus(&v)
        .into_iter()
        .enumerate()
        .map(|(i, s)| Triplet {
            seq: s,
            perturbed: ExpressionProfile::new((0..5).map(|g| (i * g) as f64 * 0.1).collect()).unwrap(),
            unperturbed: ExpressionProfile::new(vec![0.0; 5]).unwrap(),
        })
        .collect();
    let tc = TrainConfig {
        epochs: 2,
        batch_size: 4,
        lr: 0.01,
        ..TrainConfig::default()
    };
    let (after, log) = joint_train(&start, &v, &trips, &tc).unwrap();
    assert_eq!(after.block(MOL_ENCODER), start.block(MOL_ENCODER));
    assert_ne!(after.block(MOL_DECODER), start.block(MOL_DECODER));
    assert_ne!(after.block(EXP_ENCODER), start.block(EXP_ENCODER));
    assert_ne!(after.block(EXP_DECODER), start.block(EXP_DECODER));
    assert_eq!(log.series("mse").len(), 2);

    let zero = TrainConfig { epochs: 0, ..tc.clone() };
    assert_eq!(joint_train(&start, &v, &trips, &zero).unwrap().0, start);

    let mut bad = trips.clone();
    bad[0].perturbed = ExpressionProfile::new(vec![0.0; 4]).unwrap();
    assert!(matches!(
        joint_train(&start, &v, &bad, &tc),
        Err(GenError::GeneCountMismatch { expected: 5, found: 4 })
    ));
}

#[test]
fn block_hash_tracks_only_its_block() {
    let v = tiny_vocab();
    let p = ModelParams::init(&tiny_config(&v), 1);
    let mut q = p.clone();
    assert_eq!(p.block_sha256(MOL_ENCODER), q.block_sha256(MOL_ENCODER));
    q.get_mut("mol_dec.out.w").unwrap().data_mut()[0] += 1e-12;
    assert_eq!(p.block_sha256(MOL_ENCODER), q.block_sha256(MOL_ENCODER));
    assert_ne!(p.block_sha256(MOL_DECODER), q.block_sha256(MOL_DECODER));
    assert_ne!(p.block_sha256(MOL_ENCODER), p.block_sha256(EXP_ENCODER));
    assert_eq!(p.block_sha256(MOL_ENCODER).len(), 64);
}
