use std::collections::{BTreeSet, VecDeque};

use super::ChemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Quadruple,
    Aromatic,
}

impl BondOrder {
    /// Bond-order contribution to an atom's valence sum.
    pub fn order(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Quadruple => 4.0,
            BondOrder::Aromatic => 1.5,
        }
    }

    /// Integer order for non-aromatic bonds.
    pub(crate) fn int_order(self) -> u32 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Quadruple => 4,
            BondOrder::Aromatic => 0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Quadruple => 4,
            BondOrder::Aromatic => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: String,
    pub charge: i32,
    pub aromatic: bool,
    /// Hydrogens written inside a bracket atom. Unbracketed atoms get
    /// implicit hydrogens instead (see [`crate::chem::implicit_hydrogens`]).
    pub explicit_h: u32,
    pub bracket: bool,
}

impl Atom {
    pub fn organic(element: &str, aromatic: bool) -> Self {
        Self {
            element: element.to_string(),
            charge: 0,
            aromatic,
            explicit_h: 0,
            bracket: false,
        }
    }

    /// Symbol as written in SMILES (lowercase when aromatic).
    pub fn symbol(&self) -> String {
        if self.aromatic {
            self.element.to_ascii_lowercase()
        } else {
            self.element.clone()
        }
    }

    pub fn is_hydrogen(&self) -> bool {
        self.element == "H"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, i: usize) -> usize {
        if self.a == i {
            self.b
        } else {
            self.a
        }
    }
}

/// Parsed molecular graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Every shortest cycle through every ring bond, deduplicated by atom set.
    rings: Vec<Vec<usize>>,
    ring_bond: Vec<bool>,
    ring_atom: Vec<bool>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolGraph {
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, ChemError> {
        let n = atoms.len();
        let mut seen = BTreeSet::new();
        for b in &bonds {
            if b.a >= n || b.b >= n {
                return Err(ChemError::Graph(format!("bond {}-{} references a missing atom", b.a, b.b)));
            }
            if b.a == b.b {
                return Err(ChemError::Graph(format!("self-bond on atom {}", b.a)));
            }
            if !seen.insert((b.a.min(b.b), b.a.max(b.b))) {
                return Err(ChemError::Graph(format!("duplicate bond {}-{}", b.a, b.b)));
            }
        }
        let adjacency = build_adjacency(n, &bonds);
        let (ring_bond, rings) = ring_info(n, &bonds, &adjacency);
        let mut ring_atom = vec![false; n];
        for (bi, b) in bonds.iter().enumerate() {
            if ring_bond[bi] {
                ring_atom[b.a] = true;
                ring_atom[b.b] = true;
            }
        }
        Ok(Self {
            atoms,
            bonds,
            rings,
            ring_bond,
            ring_atom,
            adjacency,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn rings(&self) -> &[Vec<usize>] {
        &self.rings
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// `(neighbour atom, bond index)` pairs.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn heavy_degree(&self, atom: usize) -> usize {
        self.adjacency[atom]
            .iter()
            .filter(|(nb, _)| !self.atoms[*nb].is_hydrogen())
            .count()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|(nb, _)| *nb == b)
            .map(|&(_, bi)| &self.bonds[bi])
    }

    pub fn is_ring_bond(&self, bond: usize) -> bool {
        self.ring_bond[bond]
    }

    pub fn is_ring_atom(&self, atom: usize) -> bool {
        self.ring_atom[atom]
    }

    /// Relabels atoms: old atom `i` becomes atom `perm[i]`. Bonds are re-sorted
    /// by their new endpoints, so bond order changes as well.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, ChemError> {
        let n = self.atoms.len();
        if perm.len() != n {
            return Err(ChemError::Graph("permutation length mismatch".into()));
        }
        let mut atoms: Vec<Option<Atom>> = vec![None; n];
        for (old, &new) in perm.iter().enumerate() {
            if new >= n || atoms[new].is_some() {
                return Err(ChemError::Graph("not a permutation".into()));
            }
            atoms[new] = Some(self.atoms[old].clone());
        }
        let mut bonds: Vec<Bond> = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: perm[b.a],
                b: perm[b.b],
                order: b.order,
            })
            .collect();
        bonds.sort_by_key(|b| (b.a.min(b.b), b.a.max(b.b)));
        MolGraph::new(atoms.into_iter().map(|a| a.expect("filled")).collect(), bonds)
    }

    pub(crate) fn set_bond_order(&mut self, bond: usize, order: BondOrder) {
        self.bonds[bond].order = order;
    }
}

fn build_adjacency(n: usize, bonds: &[Bond]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); n];
    for (i, b) in bonds.iter().enumerate() {
        adj[b.a].push((b.b, i));
        adj[b.b].push((b.a, i));
    }
    adj
}

const MAX_CYCLES_PER_BOND: usize = 64;

fn ring_info(n: usize, bonds: &[Bond], adj: &[Vec<(usize, usize)>]) -> (Vec<bool>, Vec<Vec<usize>>) {
    let mut ring_bond = vec![false; bonds.len()];
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut rings = Vec::new();
    for (bi, bond) in bonds.iter().enumerate() {
        // BFS from a to b without using this bond
        let mut dist = vec![usize::MAX; n];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut queue = VecDeque::new();
        dist[bond.a] = 0;
        queue.push_back(bond.a);
        while let Some(u) = queue.pop_front() {
            if u == bond.b {
                continue;
            }
            for &(v, e) in &adj[u] {
                if e == bi {
                    continue;
                }
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    preds[v].push(u);
                    queue.push_back(v);
                } else if dist[v] == dist[u] + 1 {
                    preds[v].push(u);
                }
            }
        }
        if dist[bond.b] == usize::MAX {
            continue;
        }
        ring_bond[bi] = true;
        let mut paths = Vec::new();
        let mut stack = vec![vec![bond.b]];
        while let Some(path) = stack.pop() {
            if paths.len() >= MAX_CYCLES_PER_BOND {
                break;
            }
            let last = *path.last().expect("non-empty");
            if last == bond.a {
                paths.push(path);
                continue;
            }
            for &p in &preds[last] {
                let mut next = path.clone();
                next.push(p);
                stack.push(next);
            }
        }
        for mut cycle in paths {
            cycle.reverse();
            let mut key = cycle.clone();
            key.sort_unstable();
            if seen.insert(key) {
                rings.push(cycle);
            }
        }
    }
    rings.sort_by(|x, y| {
        let mut xs = x.clone();
        let mut ys = y.clone();
        xs.sort_unstable();
        ys.sort_unstable();
        (x.len(), xs).cmp(&(y.len(), ys))
    });
    (ring_bond, rings)
}
