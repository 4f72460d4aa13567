//! Triplet records and their text format.
//!
//! The first line is a header `# G=<genes> count=<records> seed=<seed>`,
//! optionally followed by ` source=synthetic`. Each further line holds
//! `smiles<TAB>perturbed<TAB>unperturbed`, each profile being G
//! space-separated floats written in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use super::{io_err, DataError};
use crate::chem::{tokenize_with_max, Vocabulary};
use crate::generator::{ExpressionProfile, Triplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Synthetic,
    Imported,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletRecord {
    pub smiles: String,
    pub perturbed: Vec<f64>,
    pub unperturbed: Vec<f64>,
    pub provenance: Provenance,
}

fn floats(v: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:?}");
    }
    s
}

/// Serialises records; all must share one gene count `g`.
pub fn triplets_text(records: &[TripletRecord], g: usize, seed: u64) -> Result<String, DataError> {
    let synthetic = !records.is_empty() && records.iter().all(|r| r.provenance == Provenance::Synthetic);
    let mut s = format!("# G={g} count={} seed={seed}", records.len());
    if synthetic {
        s.push_str(" source=synthetic");
    }
    s.push('\n');
    for (i, r) in records.iter().enumerate() {
        if r.perturbed.len() != g || r.unperturbed.len() != g {
            return Err(DataError::InvalidArgument(format!("record {i} does not have {g} genes")));
        }
        if r.smiles.contains(['\t', '\n']) {
            return Err(DataError::InvalidArgument(format!("record {i} has whitespace in its SMILES")));
        }
        let _ = writeln!(s, "{}\t{}\t{}", r.smiles, floats(&r.perturbed), floats(&r.unperturbed));
    }
    Ok(s)
}

/// Parses triplet text; returns `(records, G, seed)`.
pub fn parse_triplets(text: &str) -> Result<(Vec<TripletRecord>, usize, u64), DataError> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
    let header = lines.next().ok_or(DataError::Format {
        line: 1,
        msg: "missing header".into(),
    })?;
    let bad_header = |msg: &str| DataError::Format {
        line: 1,
        msg: msg.to_string(),
    };
    let fields = header
        .strip_prefix('#')
        .ok_or_else(|| bad_header("header must start with `#`"))?;
    let (mut g, mut count, mut seed, mut provenance) = (None, None, None, Provenance::Imported);
    for f in fields.split_whitespace() {
        let (k, v) = f.split_once('=').ok_or_else(|| bad_header("expected key=value"))?;
        match k {
            "G" => g = v.parse::<usize>().ok(),
            "count" => count = v.parse::<usize>().ok(),
            "seed" => seed = v.parse::<u64>().ok(),
            "source" if v == "synthetic" => provenance = Provenance::Synthetic,
            "source" => {}
            _ => return Err(bad_header(&format!("unknown header key `{k}`"))),
        }
    }
    let (g, count, seed) = match (g, count, seed) {
        (Some(g), Some(c), Some(s)) => (g, c, s),
        _ => return Err(bad_header("header needs G, count and seed")),
    };
    let mut out = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| DataError::Format { line: ln, msg };
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated fields, found {}", parts.len())));
        }
        let profile = |s: &str| -> Result<Vec<f64>, DataError> {
            let v = s
                .split_whitespace()
                .map(|x| x.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| bad("profile holds a non-numeric or non-finite value".into()))?;
            if v.len() != g {
                return Err(bad(format!("profile has {} values, header says G={g}", v.len())));
            }
            Ok(v)
        };
        out.push(TripletRecord {
            smiles: parts[0].trim().to_string(),
            perturbed: profile(parts[1])?,
            unperturbed: profile(parts[2])?,
            provenance,
        });
    }
    if out.len() != count {
        return Err(bad_header(&format!("header says count={count}, found {} records", out.len())));
    }
    Ok((out, g, seed))
}

pub fn save_triplets(path: &Path, records: &[TripletRecord], g: usize, seed: u64) -> Result<(), DataError> {
    std::fs::write(path, triplets_text(records, g, seed)?).map_err(|e| io_err(path, e))
}

pub fn load_triplets(path: &Path) -> Result<(Vec<TripletRecord>, usize, u64), DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_triplets(&text)
}

/// Tokenizes records for joint training.
pub fn to_training(records: &[TripletRecord], vocab: &Vocabulary, max_len: usize) -> Result<Vec<Triplet>, DataError> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let bad = |e: String| DataError::InvalidArgument(format!("triplet {i} ({}): {e}", r.smiles));
            Ok(Triplet {
                seq: tokenize_with_max(&r.smiles, vocab, max_len).map_err(|e| bad(e.to_string()))?,
                perturbed: ExpressionProfile::new(r.perturbed.clone()).map_err(|e| bad(e.to_string()))?,
                unperturbed: ExpressionProfile::new(r.unperturbed.clone()).map_err(|e| bad(e.to_string()))?,
            })
        })
        .collect()
}
