use serde::{Deserialize, Serialize};

use super::{DockingOracle, OracleError};
use crate::chem::{canonical_key, check_valence, compute_descriptors, parse_smiles, MolGraph};
use crate::util::{fnv1a, mix_seed};

/// One weighted structural feature. Every feature evaluates to a value in
/// [0, 1] and contributes `value × weight` to the binding strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Feature {
    /// `min(count, target) / target` for atoms of `element`.
    ElementCount { element: String, target: u32, weight: f64 },
    /// `min(rings, target) / target` over perceived rings.
    RingCount { target: u32, weight: f64 },
    /// `min(aromatic rings, target) / target`.
    AromaticRings { target: u32, weight: f64 },
    /// 1 inside `[lo, hi]`, falling linearly to 0 over `falloff` g/mol outside.
    MwWindow { lo: f64, hi: f64, falloff: f64, weight: f64 },
    /// 1 inside `[lo, hi]` heavy atoms, falling linearly to 0 over `falloff`
    /// atoms outside.
    HeavyAtomWindow { lo: f64, hi: f64, falloff: f64, weight: f64 },
    /// 1 if the canonical key contains `motif` as a substring.
    Motif { motif: String, weight: f64 },
}

fn window(x: f64, lo: f64, hi: f64, falloff: f64) -> f64 {
    let dist = if x < lo {
        lo - x
    } else if x > hi {
        x - hi
    } else {
        0.0
    };
    if dist == 0.0 {
        1.0
    } else if falloff <= 0.0 {
        0.0
    } else {
        (1.0 - dist / falloff).max(0.0)
    }
}

fn fraction(count: u32, target: u32) -> f64 {
    if target == 0 {
        1.0
    } else {
        f64::from(count.min(target)) / f64::from(target)
    }
}

impl Feature {
    pub fn weight(&self) -> f64 {
        match self {
            Feature::ElementCount { weight, .. }
            | Feature::RingCount { weight, .. }
            | Feature::AromaticRings { weight, .. }
            | Feature::MwWindow { weight, .. }
            | Feature::HeavyAtomWindow { weight, .. }
            | Feature::Motif { weight, .. } => *weight,
        }
    }

    fn value(&self, g: &MolGraph, key: &str) -> f64 {
        match self {
            Feature::ElementCount { element, target, .. } => {
                let n = g.atoms().iter().filter(|a| &a.element == element).count() as u32;
                fraction(n, *target)
            }
            Feature::RingCount { target, .. } => fraction(g.rings().len() as u32, *target),
            Feature::AromaticRings { target, .. } => fraction(compute_descriptors(g).arom_rings, *target),
            Feature::MwWindow { lo, hi, falloff, .. } => window(compute_descriptors(g).mw, *lo, *hi, *falloff),
            Feature::HeavyAtomWindow { lo, hi, falloff, .. } => {
                window(f64::from(compute_descriptors(g).heavy_atoms), *lo, *hi, *falloff)
            }
            Feature::Motif { motif, .. } => {
                if key.contains(motif.as_str()) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Parameters of the synthetic docking surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSpec {
    pub base: f64,
    /// Half-width of the deterministic per-molecule jitter.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default)]
    pub features: Vec<Feature>,
}

fn default_perturbation() -> f64 {
    0.1
}

impl MockSpec {
    /// A spec favouring one aromatic ring, a nitrogen and mid-sized molecules.
    pub fn demo() -> Self {
        MockSpec {
            base: 2.0,
            perturbation: 0.1,
            features: vec![
                Feature::AromaticRings { target: 1, weight: 3.0 },
                Feature::ElementCount {
                    element: "N".into(),
                    target: 1,
                    weight: 2.0,
                },
                Feature::MwWindow {
                    lo: 250.0,
                    hi: 400.0,
                    falloff: 150.0,
                    weight: 3.0,
                },
            ],
        }
    }

    /// Sum of all feature weights; the strongest achievable score is about
    /// `-(base + max_strength())`.
    pub fn max_strength(&self) -> f64 {
        self.features.iter().map(Feature::weight).sum()
    }
}

/// Deterministic docking stand-in: `-(base + Σ valueᵢ·weightᵢ) + jitter`,
/// where the jitter in `[-perturbation, perturbation)` is a hash of the seed
/// and the canonical key. Invalid molecules fail.
#[derive(Debug, Clone, PartialEq)]
pub struct MockOracle {
    seed: u64,
    spec: MockSpec,
}

impl MockOracle {
    pub fn new(seed: u64, spec: MockSpec) -> Self {
        MockOracle { seed, spec }
    }

    pub fn spec(&self) -> &MockSpec {
        &self.spec
    }

    fn score_one(&self, smiles: &str) -> Result<f64, OracleError> {
        let g = parse_smiles(smiles).map_err(|_| OracleError::InvalidMolecule)?;
        if !check_valence(&g).valid {
            return Err(OracleError::InvalidMolecule);
        }
        let key = canonical_key(&g);
        // features are read off the canonical spelling so that float sums do
        // not depend on input atom order
        let g = parse_smiles(&key).map_err(|_| OracleError::InvalidMolecule)?;
        let strength: f64 = self.spec.features.iter().map(|f| f.value(&g, &key) * f.weight()).sum();
        let h = mix_seed(self.seed, fnv1a(key.as_bytes()));
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        let jitter = (2.0 * unit - 1.0) * self.spec.perturbation;
        Ok(-(self.spec.base + strength) + jitter)
    }
}

impl DockingOracle for MockOracle {
    fn score_batch(&self, smiles: &[String]) -> Vec<Result<f64, OracleError>> {
        smiles.iter().map(|s| self.score_one(s)).collect()
    }
}
