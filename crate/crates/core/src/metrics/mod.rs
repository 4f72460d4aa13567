//! Set-level metrics for generated molecules and the evaluation report.

mod report;

pub use report::{emit_report, evaluate, EvalOptions, EvalReport, MoleculeRow, Stats, REPORT_VERSION};

use std::collections::BTreeSet;

use crate::chem::{canonical_key, check_valence, fingerprint, parse_smiles, ChemError, DescriptorVector, MolGraph};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no molecules given")]
    EmptyInput,
    #[error("no valid molecules")]
    NoValidMolecules,
    #[error("need at least two distinct valid molecules, found {0}")]
    TooFewMolecules(usize),
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error("i/o failure: {0}")]
    Io(String),
}

/// Parses and valence-checks; `None` for invalid input.
pub(crate) fn valid_graph(smiles: &str) -> Option<MolGraph> {
    let g = parse_smiles(smiles).ok()?;
    check_valence(&g).valid.then_some(g)
}

fn valid_keys<S: AsRef<str>>(smiles: &[S]) -> Vec<String> {
    smiles
        .iter()
        .filter_map(|s| valid_graph(s.as_ref()))
        .map(|g| canonical_key(&g))
        .collect()
}

/// Canonical keys of the valid molecules in a reference corpus.
pub fn reference_keys<S: AsRef<str>>(smiles: &[S]) -> BTreeSet<String> {
    valid_keys(smiles).into_iter().collect()
}

/// Fraction that parses and passes valence checks.
pub fn validity_rate<S: AsRef<str>>(smiles: &[S]) -> Result<f64, MetricsError> {
    if smiles.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(valid_keys(smiles).len() as f64 / smiles.len() as f64)
}

/// Distinct canonical keys over the number of valid molecules.
pub fn uniqueness_rate<S: AsRef<str>>(smiles: &[S]) -> Result<f64, MetricsError> {
    let keys = valid_keys(smiles);
    if keys.is_empty() {
        return Err(MetricsError::NoValidMolecules);
    }
    let distinct: BTreeSet<&String> = keys.iter().collect();
    Ok(distinct.len() as f64 / keys.len() as f64)
}

/// Fraction of distinct valid keys not present in `reference`.
pub fn novelty_rate<S: AsRef<str>>(smiles: &[S], reference: &BTreeSet<String>) -> Result<f64, MetricsError> {
    let distinct: BTreeSet<String> = valid_keys(smiles).into_iter().collect();
    if distinct.is_empty() {
        return Err(MetricsError::NoValidMolecules);
    }
    let novel = distinct.iter().filter(|k| !reference.contains(*k)).count();
    Ok(novel as f64 / distinct.len() as f64)
}

/// `1 − mean pairwise Tanimoto` over path fingerprints. With `dedup` the
/// pairs range over distinct valid molecules; without it, over every valid
/// entry of the list.
pub fn internal_diversity<S: AsRef<str>>(smiles: &[S], n_bits: usize, dedup: bool) -> Result<f64, MetricsError> {
    let mut seen = BTreeSet::new();
    let mut fps = Vec::new();
    for s in smiles {
        let Some(g) = valid_graph(s.as_ref()) else { continue };
        if dedup && !seen.insert(canonical_key(&g)) {
            continue;
        }
        fps.push(fingerprint(&g, n_bits)?);
    }
    if fps.len() < 2 {
        return Err(MetricsError::TooFewMolecules(fps.len()));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..fps.len() {
        for j in i + 1..fps.len() {
            sum += fps[i].tanimoto(&fps[j]);
            pairs += 1;
        }
    }
    Ok(1.0 - sum / pairs as f64)
}

/// LogP < 5, MW < 500, donors < 5 and acceptors < 10, all strict.
pub fn lipinski_pass(d: &DescriptorVector) -> bool {
    d.logp_proxy < 5.0 && d.mw < 500.0 && d.hbd < 5 && d.hba < 10
}
