//! Corpus loading, synthetic datasets, checkpoints and run manifests.

mod checkpoint;
mod manifest;
mod synth;
mod triplets;

pub use checkpoint::{load_checkpoint, save_checkpoint, checkpoint_bytes, params_from_bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use manifest::{file_sha256, ArtifactHash, RunManifest, StageRecord};
pub use synth::{synth_corpus, synth_triplets, TripletSpec};
pub use triplets::{load_triplets, save_triplets, triplets_text, parse_triplets, to_training, Provenance, TripletRecord};

use std::path::Path;

use crate::chem::{check_valence, parse_smiles, tokenize_with_max, Vocabulary};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("i/o failure on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("no usable molecules in {0}")]
    EmptyAfterFiltering(String),
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("checkpoint was written for vocabulary {found}, current vocabulary is {expected}")]
    VocabularyMismatch { expected: String, found: String },
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("malformed line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// Molecules read from a corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    /// Valid, tokenizable SMILES in file order.
    pub smiles: Vec<String>,
    /// Non-blank lines that were dropped.
    pub skipped: usize,
}

/// Checks one corpus line: parses, passes valence and fits the vocabulary.
pub fn corpus_line_ok(smiles: &str, vocab: &Vocabulary, max_len: usize) -> bool {
    parse_smiles(smiles).is_ok_and(|g| check_valence(&g).valid) && tokenize_with_max(smiles, vocab, max_len).is_ok()
}

/// Parses corpus text: one SMILES per line, LF or CRLF. Surrounding
/// whitespace is trimmed and blank lines ignored.
pub fn parse_corpus(text: &str, vocab: &Vocabulary, max_len: usize) -> Corpus {
    let mut smiles = Vec::new();
    let mut skipped = 0;
    for line in text.lines() {
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        if corpus_line_ok(s, vocab, max_len) {
            smiles.push(s.to_string());
        } else {
            skipped += 1;
        }
    }
    Corpus { smiles, skipped }
}

pub fn load_corpus(path: &Path, vocab: &Vocabulary, max_len: usize) -> Result<Corpus, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let c = parse_corpus(&text, vocab, max_len);
    if c.smiles.is_empty() {
        return Err(DataError::EmptyAfterFiltering(path.display().to_string()));
    }
    Ok(c)
}

/// Writes one SMILES per line with LF endings.
pub fn save_corpus(path: &Path, smiles: &[String]) -> Result<(), DataError> {
    let mut text = String::new();
    for s in smiles {
        text.push_str(s);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Parses conditioning profiles: one per line, whitespace-separated floats.
/// Blank lines and lines starting with `#` are ignored. All rows must have
/// the same length.
pub fn parse_profiles(text: &str) -> Result<Vec<Vec<f64>>, DataError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| DataError::Format {
                line: i + 1,
                msg: "expected finite numbers".into(),
            })?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(DataError::Format {
                    line: i + 1,
                    msg: format!("{} values, earlier rows have {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn load_profiles(path: &Path) -> Result<Vec<Vec<f64>>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let rows = parse_profiles(&text)?;
    if rows.is_empty() {
        return Err(DataError::EmptyAfterFiltering(path.display().to_string()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests;
