//! Chemistry substrate: tokens, graphs, validity, descriptors, QED, keys.

mod canon;
mod descriptors;
mod fingerprint;
mod graph;
mod qed;
mod smiles;
mod tables;
mod valence;
mod vocab;

pub use canon::{canonical_key, MAX_LEAVES};
pub use descriptors::{compute_descriptors, compute_descriptors_with, DescriptorVector};
pub use fingerprint::{fingerprint, Fingerprint, DEFAULT_FP_BITS, MAX_PATH_BONDS};
pub use graph::{Atom, Bond, BondOrder, MolGraph};
pub use qed::{qed, qed_from_desirabilities, qed_inputs, Desirability, QedParams, QED_PROPERTIES};
pub use smiles::{parse_smiles, parse_smiles_with};
pub use tables::{parse_table, ChemTables, ContributionTable, ValenceTable, TABLE_VERSION};
pub use valence::{
    check_valence, check_valence_with, implicit_hydrogens, implicit_hydrogens_with, is_chemically_valid,
    total_hydrogens, ValenceReport, Violation, ViolationKind,
};
pub use vocab::{detokenize, tokenize, tokenize_with_max, TokenSequence, Vocabulary, BOS, EOS, PAD};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChemError {
    #[error("empty input")]
    EmptyInput,
    #[error("unknown token `{token}` at character {position}")]
    UnknownToken { token: String, position: usize },
    #[error("input has {len} characters, limit is {max}")]
    TooLong { len: usize, max: usize },
    #[error("syntax error at character {position}: {msg}")]
    Syntax { position: usize, msg: String },
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("invalid token sequence: {0}")]
    Sequence(String),
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("data table line {line}: {msg}")]
    Table { line: usize, msg: String },
    #[error("all QED weights are zero")]
    DegenerateParams,
    #[error("fingerprint width {0} is not a power of two")]
    FingerprintBits(usize),
    #[error("i/o: {0}")]
    Io(String),
}
