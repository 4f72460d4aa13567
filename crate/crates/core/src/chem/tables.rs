//! Versioned key/value data tables.
//!
//! Every table is plain text: `#` comments, a `version <n>` record, then one
//! `key value` record per line.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use super::ChemError;

pub const TABLE_VERSION: u32 = 1;

const MASSES_TXT: &str = include_str!("../../data/atomic_masses.txt");
const VALENCE_TXT: &str = include_str!("../../data/valence.txt");
const LOGP_TXT: &str = include_str!("../../data/logp_contrib.txt");
const PSA_TXT: &str = include_str!("../../data/psa_contrib.txt");
pub(crate) const QED_TXT: &str = include_str!("../../data/qed_params.txt");

/// Parses the shared table layout into ordered `key -> raw value` records.
pub fn parse_table(text: &str) -> Result<BTreeMap<String, String>, ChemError> {
    let mut version = None;
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let value = parts.next().ok_or_else(|| ChemError::Table {
            line: lineno + 1,
            msg: format!("record `{key}` has no value"),
        })?;
        if parts.next().is_some() {
            return Err(ChemError::Table {
                line: lineno + 1,
                msg: "expected exactly two fields".into(),
            });
        }
        if key == "version" {
            let v: u32 = value.parse().map_err(|_| ChemError::Table {
                line: lineno + 1,
                msg: format!("bad version `{value}`"),
            })?;
            if v != TABLE_VERSION {
                return Err(ChemError::Table {
                    line: lineno + 1,
                    msg: format!("unsupported table version {v}"),
                });
            }
            version = Some(v);
            continue;
        }
        if version.is_none() {
            return Err(ChemError::Table {
                line: lineno + 1,
                msg: "`version` record must precede data".into(),
            });
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ChemError::Table {
                line: lineno + 1,
                msg: format!("duplicate key `{key}`"),
            });
        }
    }
    if version.is_none() {
        return Err(ChemError::Table {
            line: 0,
            msg: "missing `version` record".into(),
        });
    }
    Ok(out)
}

pub(crate) fn parse_f64_table(text: &str) -> Result<BTreeMap<String, f64>, ChemError> {
    parse_table(text)?
        .into_iter()
        .map(|(k, v)| {
            v.parse::<f64>()
                .map(|x| (k.clone(), x))
                .map_err(|_| ChemError::Table {
                    line: 0,
                    msg: format!("value for `{k}` is not a number: `{v}`"),
                })
        })
        .collect()
}

/// Element valence table: allowed bond-order totals per element.
#[derive(Debug, Clone, PartialEq)]
pub struct ValenceTable {
    allowed: BTreeMap<String, Vec<u32>>,
}

impl ValenceTable {
    pub fn parse(text: &str) -> Result<Self, ChemError> {
        let mut allowed = BTreeMap::new();
        for (k, v) in parse_table(text)? {
            let mut vals = v
                .split(',')
                .map(|s| s.trim().parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ChemError::Table {
                    line: 0,
                    msg: format!("bad valence list for `{k}`"),
                })?;
            vals.sort_unstable();
            allowed.insert(k, vals);
        }
        Ok(Self { allowed })
    }

    pub fn allowed(&self, element: &str) -> Option<&[u32]> {
        self.allowed.get(element).map(Vec::as_slice)
    }

    pub fn max(&self, element: &str) -> Option<u32> {
        self.allowed(element).and_then(|v| v.last().copied())
    }
}

/// Per-atom additive contribution table (logP, PSA).
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionTable {
    values: BTreeMap<String, f64>,
}

impl ContributionTable {
    pub fn parse(text: &str) -> Result<Self, ChemError> {
        Ok(Self {
            values: parse_f64_table(text)?,
        })
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

/// The set of tables the chemistry routines consult.
#[derive(Debug, Clone, PartialEq)]
pub struct ChemTables {
    pub masses: BTreeMap<String, f64>,
    pub valence: ValenceTable,
    pub logp: ContributionTable,
    pub psa: ContributionTable,
}

impl ChemTables {
    /// The tables shipped in `data/`, parsed once.
    pub fn builtin() -> &'static ChemTables {
        static TABLES: OnceLock<ChemTables> = OnceLock::new();
        TABLES.get_or_init(|| {
            ChemTables::from_texts(MASSES_TXT, VALENCE_TXT, LOGP_TXT, PSA_TXT)
                .expect("shipped chemistry tables are well-formed")
        })
    }

    pub fn from_texts(masses: &str, valence: &str, logp: &str, psa: &str) -> Result<Self, ChemError> {
        Ok(Self {
            masses: parse_f64_table(masses)?,
            valence: ValenceTable::parse(valence)?,
            logp: ContributionTable::parse(logp)?,
            psa: ContributionTable::parse(psa)?,
        })
    }

    /// Loads the four tables from a directory laid out like `data/`.
    pub fn from_dir(dir: &Path) -> Result<Self, ChemError> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name)).map_err(|e| ChemError::Io(format!("{name}: {e}")))
        };
        Self::from_texts(
            &read("atomic_masses.txt")?,
            &read("valence.txt")?,
            &read("logp_contrib.txt")?,
            &read("psa_contrib.txt")?,
        )
    }

    pub fn is_known_element(&self, symbol: &str) -> bool {
        self.masses.contains_key(symbol)
    }
}
