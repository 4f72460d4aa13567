//! Fixtures shared by the benchmarks.

use phenogen::generator::{ExpressionProfile, ModelConfig, ModelParams};
use phenogen::reward::{MockOracle, MockSpec, RewardScorer};
use phenogen::rl::sample_batch;
use phenogen::{EpisodeBatch, RewardConfig, Vocabulary};

/// Drug-sized molecules with rings, branches, charges and aromatic N.
pub const MOLECULES: &[&str] = &[
    "CC(=O)Nc1ccc(O)cc1",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
    "COc1ccc2[nH]cc(CCN(C)C)c2c1",
    "O=C(O)c1ccccc1OC(C)=O",
    "CC(C)NCC(O)COc1cccc2ccccc12",
    "Clc1ccc(cc1)C(c1ccccc1)N1CCN(CC1)CCOCC(=O)O",
    "C[N+](C)(C)CCOC(C)=O",
];

pub const GENES: usize = 16;

/// An untrained model at the default size with `GENES` genes.
pub fn model(seed: u64) -> ModelParams {
    let cfg = ModelConfig {
        gene_count: GENES,
        ..ModelConfig::default()
    };
    ModelParams::init(&cfg, seed)
}

pub fn profiles() -> Vec<ExpressionProfile> {
    (0..4)
        .map(|k| ExpressionProfile::new((0..GENES).map(|g| ((g * (k + 1)) as f64 * 0.3).sin()).collect()).unwrap())
        .collect()
}

/// A sampled and scored batch, ready for a gradient step.
pub fn scored_batch(params: &ModelParams, n: usize, max_len: usize) -> EpisodeBatch {
    let vocab = Vocabulary::builtin();
    let mut batch = sample_batch(params, vocab, &profiles(), n, max_len, 7).unwrap();
    let mut scorer = RewardScorer::new(RewardConfig::default());
    let (records, _) = scorer.score_batch(&MockOracle::new(0, MockSpec::demo()), &batch.smiles);
    batch.rewards = records;
    batch.prior_logps = vec![-20.0; n];
    batch
}
