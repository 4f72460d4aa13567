use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{internal_diversity, lipinski_pass, valid_graph, MetricsError};
use crate::chem::{canonical_key, compute_descriptors, parse_smiles, qed, DEFAULT_FP_BITS};
use crate::reward::{DockingOracle, RewardConfig, RewardScorer};

/// Schema version of [`EvalReport`]; bumped on any field change.
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    /// 90th percentile, linear interpolation between closest ranks.
    pub p90: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Stats {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: q(0.5),
            p90: q(0.9),
        })
    }
}

/// One distinct valid molecule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRow {
    pub key: String,
    /// How often the molecule occurred among the generated strings.
    pub count: usize,
    pub qed: f64,
    pub mw: f64,
    pub logp: f64,
    pub hbd: u32,
    pub hba: u32,
    pub lipinski: bool,
    pub novel: bool,
    pub raw_dock: Option<f64>,
    pub dock: Option<f64>,
    pub reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub n_generated: usize,
    pub n_valid: usize,
    pub n_unique: usize,
    pub validity_rate: f64,
    /// Over valid molecules; absent when none are valid.
    pub uniqueness_rate: Option<f64>,
    /// Over distinct valid molecules; 1 when no reference was given.
    pub novelty_rate: Option<f64>,
    pub reference_used: bool,
    /// Distribution stats over distinct valid molecules.
    pub qed: Option<Stats>,
    pub dock: Option<Stats>,
    pub reward: Option<Stats>,
    pub lipinski_pass_rate: Option<f64>,
    pub internal_diversity: Option<f64>,
    /// Synthetic accessibility; never computed, reserved for tooling.
    pub sa: Option<f64>,
    /// Sorted by canonical key.
    pub molecules: Vec<MoleculeRow>,
}

pub struct EvalOptions<'a> {
    /// Canonical keys of the training corpus.
    pub reference: Option<&'a BTreeSet<String>>,
    /// Docks every distinct valid molecule when present.
    pub oracle: Option<&'a dyn DockingOracle>,
    pub reward: RewardConfig,
    pub n_bits: usize,
}

impl Default for EvalOptions<'_> {
    fn default() -> Self {
        EvalOptions {
            reference: None,
            oracle: None,
            reward: RewardConfig::default(),
            n_bits: DEFAULT_FP_BITS,
        }
    }
}

pub fn evaluate<S: AsRef<str>>(smiles: &[S], opts: &EvalOptions<'_>) -> Result<EvalReport, MetricsError> {
    if smiles.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut rows: BTreeMap<String, MoleculeRow> = BTreeMap::new();
    let mut n_valid = 0;
    for s in smiles {
        let Some(g) = valid_graph(s.as_ref()) else { continue };
        n_valid += 1;
        let key = canonical_key(&g);
        if let Some(row) = rows.get_mut(&key) {
            row.count += 1;
            continue;
        }
        // descriptors from the canonical spelling, so float sums do not
        // depend on which spelling came first
        let g = parse_smiles(&key)?;
        let d = compute_descriptors(&g);
        let q = qed(&d, &opts.reward.qed_params)?;
        let novel = opts.reference.is_none_or(|r| !r.contains(&key));
        rows.insert(
            key.clone(),
            MoleculeRow {
                key,
                count: 1,
                qed: q,
                mw: d.mw,
                logp: d.logp_proxy,
                hbd: d.hbd,
                hba: d.hba,
                lipinski: lipinski_pass(&d),
                novel,
                raw_dock: None,
                dock: None,
                reward: None,
            },
        );
    }
    if let Some(oracle) = opts.oracle {
        let keys: Vec<String> = rows.keys().cloned().collect();
        let (records, _) = RewardScorer::new(opts.reward.clone()).score_batch(oracle, &keys);
        for (k, rec) in keys.iter().zip(records) {
            let row = rows.get_mut(k).expect("row exists");
            row.raw_dock = rec.raw_dock;
            row.dock = Some(rec.dock);
            row.reward = Some(rec.reward);
        }
    }
    let molecules: Vec<MoleculeRow> = rows.into_values().collect();
    let n_unique = molecules.len();
    let frac = |n: usize| (n_unique > 0).then(|| n as f64 / n_unique as f64);
    let keys: Vec<&str> = molecules.iter().map(|m| m.key.as_str()).collect();
    let collect = |f: fn(&MoleculeRow) -> Option<f64>| -> Vec<f64> { molecules.iter().filter_map(f).collect() };
    Ok(EvalReport {
        version: REPORT_VERSION,
        n_generated: smiles.len(),
        n_valid,
        n_unique,
        validity_rate: n_valid as f64 / smiles.len() as f64,
        uniqueness_rate: (n_valid > 0).then(|| n_unique as f64 / n_valid as f64),
        novelty_rate: frac(molecules.iter().filter(|m| m.novel).count()),
        reference_used: opts.reference.is_some(),
        qed: Stats::of(&collect(|m| Some(m.qed))),
        dock: Stats::of(&collect(|m| m.dock)),
        reward: Stats::of(&collect(|m| m.reward)),
        lipinski_pass_rate: frac(molecules.iter().filter(|m| m.lipinski).count()),
        internal_diversity: internal_diversity(&keys, opts.n_bits, false).ok(),
        sa: None,
        molecules,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn stats_line(name: &str, s: &Option<Stats>) -> String {
    match s {
        Some(s) => format!("{name:<20}mean {:.4}  median {:.4}  p90 {:.4}\n", s.mean, s.median, s.p90),
        None => format!("{name:<20}-\n"),
    }
}

impl EvalReport {
    /// Aligned plain-text summary followed by the per-molecule table.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<20}{}", "report version", self.version);
        let _ = writeln!(s, "{:<20}{}", "generated", self.n_generated);
        let _ = writeln!(s, "{:<20}{}", "valid", self.n_valid);
        let _ = writeln!(s, "{:<20}{}", "unique", self.n_unique);
        let _ = writeln!(s, "{:<20}{:.4}", "validity", self.validity_rate);
        let _ = writeln!(s, "{:<20}{}", "uniqueness", opt(self.uniqueness_rate));
        let novelty = if self.reference_used {
            opt(self.novelty_rate)
        } else {
            format!("{} (no reference)", opt(self.novelty_rate))
        };
        let _ = writeln!(s, "{:<20}{}", "novelty", novelty);
        s.push_str(&stats_line("qed", &self.qed));
        s.push_str(&stats_line("dock", &self.dock));
        s.push_str(&stats_line("reward", &self.reward));
        let _ = writeln!(s, "{:<20}{}", "lipinski pass", opt(self.lipinski_pass_rate));
        let _ = writeln!(s, "{:<20}{}", "internal diversity", opt(self.internal_diversity));
        s.push('\n');
        let width = self.molecules.iter().map(|m| m.key.len()).max().unwrap_or(0).max(3);
        let _ = writeln!(
            s,
            "{:<width$}  {:>5}  {:>6}  {:>8}  {:>7}  {:>3}  {:>3}  {:>4}  {:>5}  {:>7}  {:>6}",
            "key", "count", "qed", "mw", "logp", "hbd", "hba", "lip", "novel", "dock", "reward"
        );
        for m in &self.molecules {
            let _ = writeln!(
                s,
                "{:<width$}  {:>5}  {:>6.4}  {:>8.3}  {:>7.3}  {:>3}  {:>3}  {:>4}  {:>5}  {:>7}  {:>6}",
                m.key,
                m.count,
                m.qed,
                m.mw,
                m.logp,
                m.hbd,
                m.hba,
                if m.lipinski { "yes" } else { "no" },
                if m.novel { "yes" } else { "no" },
                opt(m.dock),
                opt(m.reward),
            );
        }
        s
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<(), MetricsError> {
    let io = |e: std::io::Error| MetricsError::Io(format!("{}: {e}", path.display()));
    let name = path.file_name().ok_or_else(|| MetricsError::Io(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, text).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

/// Writes the JSON report and the text summary. Each file is replaced
/// atomically; an empty report writes nothing.
pub fn emit_report(report: &EvalReport, json_path: &Path, text_path: &Path) -> Result<(), MetricsError> {
    if report.n_generated == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let mut json = serde_json::to_string_pretty(report).map_err(|e| MetricsError::Io(e.to_string()))?;
    json.push('\n');
    let text = report.summary();
    write_atomic(json_path, &json)?;
    write_atomic(text_path, &text)
}
