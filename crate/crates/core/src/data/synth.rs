//! Seeded synthetic molecules and expression triplets.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, Provenance, TripletRecord};
use crate::chem::{canonical_key, check_valence, compute_descriptors, parse_smiles, DescriptorVector};
use crate::util::mix_seed;

const CORPUS_STREAM: u64 = 0xc0;
const BASE_STREAM: u64 = 0xba5e;
const PROJ_STREAM: u64 = 0x9401;
const NOISE_STREAM: u64 = 0x4015e;

const CHAIN_ATOMS: [&str; 6] = ["C", "C", "C", "C", "N", "O"];
const BRANCHES: [&str; 7] = ["(C)", "(O)", "(=O)", "(F)", "(Cl)", "(N)", "(CC)"];
// `R` marks the ring-closure digit
const RINGS: [&str; 8] = [
    "c1ccccc1", "C1CCCCC1", "c1ccncc1", "C1CCNCC1", "C1CCOC1", "c1ccc(F)cc1", "c1ccc(O)cc1", "c1ccc(Cl)cc1",
];

fn chain(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=4);
    let mut s = String::new();
    for i in 0..n {
        s.push_str(CHAIN_ATOMS.choose(rng).expect("non-empty"));
        if i + 1 < n && rng.random_bool(0.3) {
            s.push_str(BRANCHES.choose(rng).expect("non-empty"));
        }
    }
    s
}

fn ring(rng: &mut ChaCha8Rng, digit: u32) -> String {
    RINGS
        .choose(rng)
        .expect("non-empty")
        .replace('1', &digit.to_string())
}

fn molecule(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..5) {
        0 => chain(rng) + &chain(rng),
        1 => chain(rng) + &ring(rng, 1),
        2 => ring(rng, 1) + &chain(rng),
        3 => chain(rng) + &ring(rng, 1) + &chain(rng),
        _ => ring(rng, 1) + &chain(rng) + &ring(rng, 2),
    }
}

/// `n` small molecules with pairwise distinct canonical keys, assembled from
/// chain and ring fragments and kept only if they pass valence checks.
pub fn synth_corpus(n: usize, seed: u64) -> Result<Vec<String>, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, CORPUS_STREAM));
    let mut keys = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    let cap = 1000 * n.max(1);
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        if tries > cap {
            return Err(DataError::InvalidArgument(format!(
                "found only {} distinct molecules after {cap} draws",
                out.len()
            )));
        }
        let s = molecule(&mut rng);
        let Ok(g) = parse_smiles(&s) else { continue };
        if !check_valence(&g).valid {
            continue;
        }
        if keys.insert(canonical_key(&g)) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Parameters of the synthetic phenotype model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripletSpec {
    pub gene_count: usize,
    pub seed: u64,
    /// Standard deviation of the per-gene noise added to perturbed profiles.
    pub noise: f64,
    pub cell_lines: usize,
    /// Width of the molecule embedding φ.
    pub phi_dim: usize,
}

impl Default for TripletSpec {
    fn default() -> Self {
        TripletSpec {
            gene_count: 64,
            seed: 0,
            noise: 0.1,
            cell_lines: 4,
            phi_dim: 8,
        }
    }
}

const N_FEATURES: usize = 9;

fn features(d: &DescriptorVector) -> [f64; N_FEATURES] {
    [
        d.mw / 100.0,
        d.logp_proxy,
        f64::from(d.hbd),
        f64::from(d.hba),
        d.psa_proxy / 20.0,
        f64::from(d.rot_bonds) / 2.0,
        f64::from(d.arom_rings),
        f64::from(d.heavy_atoms) / 10.0,
        f64::from(d.alerts),
    ]
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

impl TripletSpec {
    fn validate(&self) -> Result<(), DataError> {
        if self.gene_count < 8 {
            return Err(DataError::InvalidArgument("gene_count must be at least 8".into()));
        }
        if self.cell_lines == 0 || self.phi_dim == 0 {
            return Err(DataError::InvalidArgument("cell_lines and phi_dim must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(DataError::InvalidArgument("noise must be non-negative".into()));
        }
        Ok(())
    }

    /// The noiseless profile shift `W·φ(molecule)`; depends on the molecule
    /// only through its descriptors.
    pub fn delta(&self, d: &DescriptorVector) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, PROJ_STREAM));
        let proj = normal_matrix(&mut rng, self.phi_dim, N_FEATURES, 1.0 / 3.0);
        let w = normal_matrix(&mut rng, self.gene_count, self.phi_dim, 1.0);
        let f = features(d);
        let phi: Vec<f64> = proj
            .iter()
            .map(|row| row.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>().tanh())
            .collect();
        w.iter()
            .map(|row| row.iter().zip(&phi).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Baseline profile of each cell line.
    pub fn baselines(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, BASE_STREAM));
        normal_matrix(&mut rng, self.cell_lines, self.gene_count, 1.0)
    }
}

/// One triplet per corpus molecule. Molecule `i` is measured in cell line
/// `i mod cell_lines`: the unperturbed profile is that line's baseline and
/// the perturbed one adds `W·φ(molecule)` plus Gaussian noise.
pub fn synth_triplets(corpus: &[String], spec: &TripletSpec) -> Result<Vec<TripletRecord>, DataError> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(DataError::InvalidArgument("corpus is empty".into()));
    }
    let base = spec.baselines();
    let mut noise = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, NOISE_STREAM));
    corpus
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let g = parse_smiles(s)
                .ok()
                .filter(|g| check_valence(g).valid)
                .ok_or_else(|| DataError::InvalidArgument(format!("corpus entry {i} `{s}` is not valid")))?;
            // descriptors of the canonical spelling keep the delta spelling-blind
            let g = parse_smiles(&canonical_key(&g)).expect("canonical keys parse");
            let delta = spec.delta(&compute_descriptors(&g));
            let unperturbed = base[i % spec.cell_lines].clone();
            let perturbed = unperturbed
                .iter()
                .zip(&delta)
                .map(|(u, d)| u + d + spec.noise * noise.sample::<f64, _>(StandardNormal))
                .collect();
            Ok(TripletRecord {
                smiles: s.clone(),
                perturbed,
                unperturbed,
                provenance: Provenance::Synthetic,
            })
        })
        .collect()
}
