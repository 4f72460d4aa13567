use std::collections::BTreeMap;

use super::{docked_record, DockingOracle, OracleError, RewardConfig, RewardRecord};
use crate::chem::{canonical_key, check_valence, compute_descriptors, parse_smiles, qed};

/// Batch reward evaluation with a per-run docking cache keyed by canonical
/// key. Duplicates within and across batches are docked once; only
/// successful scores are cached so transient failures get retried.
#[derive(Debug, Clone)]
pub struct RewardScorer {
    cfg: RewardConfig,
    cache: BTreeMap<String, f64>,
    oracle_calls: usize,
    molecules_docked: usize,
}

enum Pending {
    Done(RewardRecord),
    Dock { key: String, qed: f64 },
}

impl RewardScorer {
    pub fn new(cfg: RewardConfig) -> Self {
        RewardScorer {
            cfg,
            cache: BTreeMap::new(),
            oracle_calls: 0,
            molecules_docked: 0,
        }
    }

    pub fn config(&self) -> &RewardConfig {
        &self.cfg
    }

    /// Number of `score_batch` calls made on the oracle.
    pub fn oracle_calls(&self) -> usize {
        self.oracle_calls
    }

    /// Number of molecules sent to the oracle in total.
    pub fn molecules_docked(&self) -> usize {
        self.molecules_docked
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Scores a batch; records are index-aligned with `smiles`. Returns the
    /// records and whether every oracle request of this call failed for
    /// transport reasons (spawn failure or timeout).
    pub fn score_batch(&mut self, oracle: &dyn DockingOracle, smiles: &[String]) -> (Vec<RewardRecord>, bool) {
        let pending: Vec<Pending> = smiles.iter().map(|s| self.prepare(s)).collect();
        let mut to_dock: Vec<String> = Vec::new();
        for p in &pending {
            if let Pending::Dock { key, .. } = p {
                if !self.cache.contains_key(key) && !to_dock.contains(key) {
                    to_dock.push(key.clone());
                }
            }
        }
        let mut fresh: BTreeMap<String, Result<f64, OracleError>> = BTreeMap::new();
        let mut transport_down = false;
        if !to_dock.is_empty() {
            self.oracle_calls += 1;
            self.molecules_docked += to_dock.len();
            let results = oracle.score_batch(&to_dock);
            transport_down = results.iter().all(|r| matches!(r, Err(e) if e.is_transport()));
            for (key, r) in to_dock.into_iter().zip(results) {
                if let Ok(v) = r {
                    self.cache.insert(key.clone(), v);
                }
                fresh.insert(key, r);
            }
        }
        let records = smiles
            .iter()
            .zip(pending)
            .map(|(s, p)| match p {
                Pending::Done(r) => r,
                Pending::Dock { key, qed } => {
                    let raw = match self.cache.get(&key) {
                        Some(&v) => Ok(v),
                        None => fresh
                            .get(&key)
                            .cloned()
                            .unwrap_or_else(|| Err(OracleError::ParseFailure("not scored".into()))),
                    };
                    docked_record(s, qed, raw, &self.cfg)
                }
            })
            .collect();
        (records, transport_down)
    }

    fn prepare(&self, smiles: &str) -> Pending {
        let rejected = |chem_valid, q, why: String| Pending::Done(RewardRecord::rejected(smiles, chem_valid, q, why));
        let Ok(g) = parse_smiles(smiles) else {
            return rejected(false, 0.0, "failed to parse".into());
        };
        if !check_valence(&g).valid {
            return rejected(false, 0.0, "valence violation".into());
        }
        let key = canonical_key(&g);
        let g = parse_smiles(&key).expect("canonical keys parse");
        let Ok(q) = qed(&compute_descriptors(&g), &self.cfg.qed_params) else {
            return rejected(false, 0.0, "qed undefined".into());
        };
        if q < self.cfg.qed_threshold {
            return rejected(true, q, format!("qed {q:.4} below threshold {}", self.cfg.qed_threshold));
        }
        Pending::Dock { key, qed: q }
    }
}
