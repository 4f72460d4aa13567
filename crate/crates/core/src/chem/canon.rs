//! Canonical keys.
//!
//! Atoms are ranked by an initial invariant and refined Morgan-style by
//! neighbour ranks until the partition is stable. Remaining ties are broken
//! by individualising each tied atom in turn and refining again; every leaf
//! of that search yields a total order, and the lexicographically smallest
//! SMILES written from those orders is the key. The key is therefore itself
//! a parseable SMILES string.
//!
//! The search is capped at [`MAX_LEAVES`] leaves. Only pathologically
//! symmetric graphs reach the cap; past it the key is still deterministic for
//! a given atom order but is no longer guaranteed order-independent.

use super::graph::{BondOrder, MolGraph};
use super::valence::{bare_implicit_hydrogens, implicit_hydrogens};
use super::ChemTables;

pub const MAX_LEAVES: usize = 4096;

/// Canonical SMILES of `g`.
pub fn canonical_key(g: &MolGraph) -> String {
    let n = g.n_atoms();
    if n == 0 {
        return String::new();
    }
    let hcount: Vec<u32> = (0..n)
        .map(|i| g.atoms()[i].explicit_h + implicit_hydrogens(g, i))
        .collect();
    let ranks = initial_ranks(g, &hcount);
    let mut search = Search {
        g,
        hcount: &hcount,
        best: None,
        leaves: 0,
    };
    search.run(ranks);
    search.best.expect("at least one leaf")
}

fn dense_rank<K: Ord>(keys: &[K]) -> (Vec<usize>, usize) {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0; keys.len()];
    let mut r = 0;
    for w in 0..idx.len() {
        if w > 0 && keys[idx[w]] != keys[idx[w - 1]] {
            r += 1;
        }
        ranks[idx[w]] = r;
    }
    (ranks, if keys.is_empty() { 0 } else { r + 1 })
}

fn initial_ranks(g: &MolGraph, hcount: &[u32]) -> Vec<usize> {
    let keys: Vec<(String, bool, i32, u32, usize, bool)> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            (
                a.element.clone(),
                a.aromatic,
                a.charge,
                hcount[i],
                g.degree(i),
                g.is_ring_atom(i),
            )
        })
        .collect();
    dense_rank(&keys).0
}

fn refine(g: &MolGraph, mut ranks: Vec<usize>) -> Vec<usize> {
    let mut classes = ranks.iter().max().map_or(0, |m| m + 1);
    loop {
        let sigs: Vec<(usize, Vec<(usize, u8)>)> = (0..g.n_atoms())
            .map(|i| {
                let mut nb: Vec<(usize, u8)> = g
                    .neighbors(i)
                    .iter()
                    .map(|&(j, e)| (ranks[j], g.bonds()[e].order.code()))
                    .collect();
                nb.sort_unstable();
                (ranks[i], nb)
            })
            .collect();
        let (next, count) = dense_rank(&sigs);
        ranks = next;
        if count == classes {
            return ranks;
        }
        classes = count;
    }
}

struct Search<'a> {
    g: &'a MolGraph,
    hcount: &'a [u32],
    best: Option<String>,
    leaves: usize,
}

impl Search<'_> {
    fn run(&mut self, ranks: Vec<usize>) {
        let ranks = refine(self.g, ranks);
        let n = ranks.len();
        let mut counts = vec![0usize; n];
        for &r in &ranks {
            counts[r] += 1;
        }
        let Some(tied) = counts.iter().position(|&c| c > 1) else {
            let s = write_smiles(self.g, &ranks, self.hcount);
            self.leaves += 1;
            if self.best.as_ref().is_none_or(|b| s < *b) {
                self.best = Some(s);
            }
            return;
        };
        let members: Vec<usize> = (0..n).filter(|&i| ranks[i] == tied).collect();
        for &pick in &members {
            if self.leaves >= MAX_LEAVES && self.best.is_some() {
                return;
            }
            let next: Vec<usize> = ranks
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    if r > tied || (r == tied && i != pick) {
                        r + 1
                    } else {
                        r
                    }
                })
                .collect();
            self.run(next);
        }
    }
}

const ORGANIC: [&str; 10] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];
const AROMATIC_ORGANIC: [&str; 6] = ["B", "C", "N", "O", "P", "S"];

fn atom_text(g: &MolGraph, i: usize, hcount: &[u32]) -> String {
    let a = &g.atoms()[i];
    let organic = if a.aromatic {
        AROMATIC_ORGANIC.contains(&a.element.as_str())
    } else {
        ORGANIC.contains(&a.element.as_str())
    };
    if organic && a.charge == 0 && bare_implicit_hydrogens(g, i, &ChemTables::builtin().valence) == hcount[i] {
        return a.symbol();
    }
    let mut s = format!("[{}", a.symbol());
    match hcount[i] {
        0 => {}
        1 => s.push('H'),
        h => s.push_str(&format!("H{h}")),
    }
    match a.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("+{c}")),
        c => s.push_str(&format!("-{}", -c)),
    }
    s.push(']');
    s
}

fn bond_text(g: &MolGraph, a: usize, b: usize, order: BondOrder) -> &'static str {
    let both_aromatic = g.atoms()[a].aromatic && g.atoms()[b].aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Quadruple => "$",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn ring_label(d: usize) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d:02}")
    }
}

/// Writes SMILES with DFS rooted at the lowest-ranked atom of each component,
/// visiting neighbours in rank order. `ranks` must be a total order.
pub(crate) fn write_smiles(g: &MolGraph, ranks: &[usize], hcount: &[u32]) -> String {
    let n = g.n_atoms();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| ranks[i]);
    let sorted_nb: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|i| {
            let mut v = g.neighbors(i).to_vec();
            v.sort_by_key(|&(j, _)| ranks[j]);
            v
        })
        .collect();

    // pass 1: spanning tree and closure edges
    let mut visited = vec![false; n];
    let mut visit_pos = vec![usize::MAX; n];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut closures: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut tree_edge = vec![false; g.bonds().len()];
    let mut roots = Vec::new();
    let mut counter = 0;
    for &start in &order {
        if visited[start] {
            continue;
        }
        roots.push(start);
        let mut stack = vec![(start, usize::MAX)];
        while let Some((u, via)) = stack.pop() {
            if visited[u] {
                continue;
            }
            visited[u] = true;
            visit_pos[u] = counter;
            counter += 1;
            if via != usize::MAX {
                tree_edge[via] = true;
                let parent = g.bonds()[via].other(u);
                children[parent].push((u, via));
            }
            for &(v, e) in sorted_nb[u].iter().rev() {
                if !visited[v] {
                    stack.push((v, e));
                }
            }
        }
    }
    for (e, b) in g.bonds().iter().enumerate() {
        if !tree_edge[e] {
            closures[b.a].push((b.b, e));
            closures[b.b].push((b.a, e));
        }
    }
    // children must come out in rank order even when a later sibling was
    // reached through an earlier one's subtree
    for c in children.iter_mut() {
        c.sort_by_key(|&(j, _)| visit_pos[j]);
    }
    for c in closures.iter_mut() {
        c.sort_by_key(|&(j, _)| ranks[j]);
    }

    let mut parts: Vec<String> = Vec::new();
    let mut digit_of_edge = vec![usize::MAX; g.bonds().len()];
    let mut in_use: Vec<bool> = Vec::new();
    for &root in &roots {
        let mut out = String::new();
        emit(
            g,
            root,
            hcount,
            &visit_pos,
            &children,
            &closures,
            &mut digit_of_edge,
            &mut in_use,
            &mut out,
        );
        parts.push(out);
    }
    parts.sort();
    parts.join(".")
}

#[allow(clippy::too_many_arguments)]
fn emit(
    g: &MolGraph,
    root: usize,
    hcount: &[u32],
    visit_pos: &[usize],
    children: &[Vec<(usize, usize)>],
    closures: &[Vec<(usize, usize)>],
    digit_of_edge: &mut [usize],
    in_use: &mut Vec<bool>,
    out: &mut String,
) {
    enum Item {
        Atom(usize),
        Text(&'static str),
        Bond(usize, usize, usize),
    }
    let mut stack = vec![Item::Atom(root)];
    while let Some(item) = stack.pop() {
        let u = match item {
            Item::Text(t) => {
                out.push_str(t);
                continue;
            }
            Item::Bond(a, b, e) => {
                out.push_str(bond_text(g, a, b, g.bonds()[e].order));
                continue;
            }
            Item::Atom(u) => u,
        };
        out.push_str(&atom_text(g, u, hcount));
        // closings first (partner written earlier), then openings
        for &(v, e) in &closures[u] {
            if visit_pos[v] < visit_pos[u] {
                let d = digit_of_edge[e];
                out.push_str(&ring_label(d));
                in_use[d] = false;
            }
        }
        for &(v, e) in &closures[u] {
            if visit_pos[v] > visit_pos[u] {
                let d = match in_use.iter().skip(1).position(|x| !x) {
                    Some(p) => p + 1,
                    None => {
                        if in_use.is_empty() {
                            in_use.push(true);
                        }
                        in_use.push(false);
                        in_use.len() - 1
                    }
                };
                in_use[d] = true;
                digit_of_edge[e] = d;
                out.push_str(bond_text(g, u, v, g.bonds()[e].order));
                out.push_str(&ring_label(d));
            }
        }
        let kids = &children[u];
        // push in reverse so the first child is processed first
        for (k, &(v, e)) in kids.iter().enumerate().rev() {
            let last = k + 1 == kids.len();
            if !last {
                stack.push(Item::Text(")"));
            }
            stack.push(Item::Atom(v));
            stack.push(Item::Bond(u, v, e));
            if !last {
                stack.push(Item::Text("("));
            }
        }
    }
}
