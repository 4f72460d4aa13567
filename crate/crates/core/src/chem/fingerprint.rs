//! Hashed linear-path fingerprints.
//!
//! Every simple path of 0..=[`MAX_PATH_BONDS`] bonds is written as a string of
//! atom labels and bond codes, read in whichever direction sorts first, hashed
//! with FNV-1a and folded onto `n_bits`.

use super::graph::MolGraph;
use super::valence::total_hydrogens;
use super::ChemError;
use crate::util::fnv1a;

pub const MAX_PATH_BONDS: usize = 6;
pub const DEFAULT_FP_BITS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    n_bits: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    fn empty(n_bits: usize) -> Self {
        Fingerprint {
            n_bits,
            words: vec![0; n_bits.div_ceil(64)],
        }
    }

    fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        bit < self.n_bits && self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Tanimoto similarity. Two empty fingerprints are defined as identical (1.0).
    /// Panics if the widths differ.
    pub fn tanimoto(&self, other: &Fingerprint) -> f64 {
        assert_eq!(self.n_bits, other.n_bits, "fingerprint widths differ");
        let (mut both, mut either) = (0u32, 0u32);
        for (a, b) in self.words.iter().zip(&other.words) {
            both += (a & b).count_ones();
            either += (a | b).count_ones();
        }
        if either == 0 {
            1.0
        } else {
            f64::from(both) / f64::from(either)
        }
    }
}

fn atom_label(g: &MolGraph, i: usize) -> String {
    let a = &g.atoms()[i];
    let mut s = a.symbol();
    if a.charge != 0 {
        s.push_str(&format!("{:+}", a.charge));
    }
    s.push_str(&format!("H{}", total_hydrogens(g, i)));
    s
}

pub fn fingerprint(g: &MolGraph, n_bits: usize) -> Result<Fingerprint, ChemError> {
    if n_bits == 0 || !n_bits.is_power_of_two() {
        return Err(ChemError::FingerprintBits(n_bits));
    }
    let labels: Vec<String> = (0..g.n_atoms()).map(|i| atom_label(g, i)).collect();
    let mut fp = Fingerprint::empty(n_bits);
    let mut path = Vec::with_capacity(MAX_PATH_BONDS + 1);
    let mut bonds = Vec::with_capacity(MAX_PATH_BONDS);
    for start in 0..g.n_atoms() {
        path.push(start);
        walk(g, &labels, &mut path, &mut bonds, &mut fp);
        path.pop();
    }
    Ok(fp)
}

fn walk(g: &MolGraph, labels: &[String], path: &mut Vec<usize>, bonds: &mut Vec<u8>, fp: &mut Fingerprint) {
    // each path is reached from both ends; hashing the smaller reading makes
    // both visits set the same bit
    let forward = path_string(labels, path.iter().copied(), bonds.iter().copied());
    let reverse = path_string(labels, path.iter().rev().copied(), bonds.iter().rev().copied());
    let s = forward.min(reverse);
    fp.set((fnv1a(s.as_bytes()) as usize) & (fp.n_bits - 1));
    if bonds.len() == MAX_PATH_BONDS {
        return;
    }
    let last = *path.last().expect("non-empty path");
    for &(next, e) in g.neighbors(last) {
        if path.contains(&next) {
            continue;
        }
        path.push(next);
        bonds.push(g.bonds()[e].order.code());
        walk(g, labels, path, bonds, fp);
        bonds.pop();
        path.pop();
    }
}

fn path_string(labels: &[String], atoms: impl Iterator<Item = usize>, mut bonds: impl Iterator<Item = u8>) -> String {
    let mut s = String::new();
    for a in atoms {
        s.push_str(&labels[a]);
        if let Some(b) = bonds.next() {
            s.push(char::from(b'0' + b));
        }
    }
    s
}
