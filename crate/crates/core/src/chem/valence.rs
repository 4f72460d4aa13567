//! Valence validation.
//!
//! Non-aromatic bonds contribute their integer order. An aromatic atom with
//! `k` aromatic bonds contributes either `floor(1.5 k)` (pi form: the atom
//! carries one double bond of the Kekulé structure) or, for N/O/S/P/Se/As, `k`
//! (lone-pair donor form, as in pyrrole or furan; also any atom carrying an
//! exocyclic double bond). The atom is within valence
//! if any permitted form keeps `bonds + explicit H` at or below the element's
//! largest allowed valence plus `|charge|`.

use super::graph::{BondOrder, MolGraph};
use super::tables::ValenceTable;
use super::ChemTables;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    Overvalent { used: u32, allowed: u32 },
    AromaticAtomOutsideRing,
    AromaticBondOutsideRing { bond: usize },
    AromaticBondOnAliphaticAtom { bond: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub atom: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValenceReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

const DONOR_ELEMENTS: [&str; 6] = ["N", "O", "S", "P", "Se", "As"];

struct AtomBonds {
    integer_sum: u32,
    aromatic: u32,
}

fn atom_bonds(g: &MolGraph, i: usize) -> AtomBonds {
    let mut integer_sum = 0;
    let mut aromatic = 0;
    for &(_, bi) in g.neighbors(i) {
        match g.bonds()[bi].order {
            BondOrder::Aromatic => aromatic += 1,
            o => integer_sum += o.int_order(),
        }
    }
    AtomBonds { integer_sum, aromatic }
}

/// Candidate bond-order totals for atom `i`, pi form first.
fn bond_totals(g: &MolGraph, i: usize) -> Vec<u32> {
    let ab = atom_bonds(g, i);
    if ab.aromatic == 0 {
        return vec![ab.integer_sum];
    }
    let pi = ab.integer_sum + (3 * ab.aromatic) / 2;
    let mut forms = vec![pi];
    // an exocyclic double bond (pyridone-style C=O) also takes the atom's
    // share of the ring pi system
    let exocyclic_multiple = g
        .neighbors(i)
        .iter()
        .any(|&(_, bi)| g.bonds()[bi].order.int_order() >= 2);
    if exocyclic_multiple || DONOR_ELEMENTS.contains(&g.atoms()[i].element.as_str()) {
        forms.push(ab.integer_sum + ab.aromatic);
    }
    forms
}

pub fn check_valence(g: &MolGraph) -> ValenceReport {
    check_valence_with(g, &ChemTables::builtin().valence)
}

pub fn check_valence_with(g: &MolGraph, table: &ValenceTable) -> ValenceReport {
    let mut violations = Vec::new();
    for (i, atom) in g.atoms().iter().enumerate() {
        if atom.aromatic && !g.is_ring_atom(i) {
            violations.push(Violation {
                atom: i,
                kind: ViolationKind::AromaticAtomOutsideRing,
            });
        }
        if let Some(max) = table.max(&atom.element) {
            let allowed = max + atom.charge.unsigned_abs();
            let used = bond_totals(g, i)
                .into_iter()
                .map(|t| t + atom.explicit_h)
                .min()
                .expect("at least one form");
            if used > allowed {
                violations.push(Violation {
                    atom: i,
                    kind: ViolationKind::Overvalent { used, allowed },
                });
            }
        }
    }
    for (bi, b) in g.bonds().iter().enumerate() {
        if b.order != BondOrder::Aromatic {
            continue;
        }
        let atom = b.a.min(b.b);
        if !g.is_ring_bond(bi) {
            violations.push(Violation {
                atom,
                kind: ViolationKind::AromaticBondOutsideRing { bond: bi },
            });
        }
        if !g.atoms()[b.a].aromatic || !g.atoms()[b.b].aromatic {
            violations.push(Violation {
                atom,
                kind: ViolationKind::AromaticBondOnAliphaticAtom { bond: bi },
            });
        }
    }
    violations.sort_by_key(|v| v.atom);
    ValenceReport {
        valid: violations.is_empty(),
        violations,
    }
}

/// Parse success plus zero valence violations.
pub fn is_chemically_valid(smiles: &str) -> bool {
    super::parse_smiles(smiles).map(|g| check_valence(&g).valid).unwrap_or(false)
}

/// Implicit hydrogens of an unbracketed atom: the smallest allowed valence
/// at or above its bond total, minus that total, floored at zero. Bracket
/// atoms carry only their written hydrogens.
pub fn implicit_hydrogens(g: &MolGraph, i: usize) -> u32 {
    implicit_hydrogens_with(g, i, &ChemTables::builtin().valence)
}

pub fn implicit_hydrogens_with(g: &MolGraph, i: usize, table: &ValenceTable) -> u32 {
    if g.atoms()[i].bracket {
        return 0;
    }
    bare_implicit_hydrogens(g, i, table)
}

/// Implicit hydrogens atom `i` would receive if written without brackets.
pub(crate) fn bare_implicit_hydrogens(g: &MolGraph, i: usize, table: &ValenceTable) -> u32 {
    let atom = &g.atoms()[i];
    let Some(allowed) = table.allowed(&atom.element) else {
        return 0;
    };
    let max = *allowed.last().expect("non-empty valence list");
    let forms = bond_totals(g, i);
    let used = forms.iter().copied().find(|&t| t <= max).unwrap_or(forms[0]);
    allowed
        .iter()
        .find(|&&v| v >= used)
        .map_or(0, |&v| v - used)
}

/// Written plus implicit hydrogens, plus explicit `[H]` neighbours.
pub fn total_hydrogens(g: &MolGraph, i: usize) -> u32 {
    let h_neighbours = g
        .neighbors(i)
        .iter()
        .filter(|(nb, _)| g.atoms()[*nb].is_hydrogen())
        .count() as u32;
    g.atoms()[i].explicit_h + implicit_hydrogens(g, i) + h_neighbours
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn valid(s: &str) -> bool {
        check_valence(&parse_smiles(s).unwrap()).valid
    }

    #[test]
    fn pentavalent_carbon() {
        let r = check_valence(&parse_smiles("C(C)(C)(C)(C)C").unwrap());
        assert!(!r.valid);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].atom, 0);
    }

    #[test]
    fn carbon_dioxide_valid() {
        assert!(valid("O=C=O"));
    }

    #[test]
    fn aromatic_systems() {
        for s in [
            "c1ccccc1",
            "c1ccncc1",
            "[nH]1cccc1",
            "o1cccc1",
            "s1cccc1",
            "c1ccc2ccccc2c1",
            "Cc1ccccc1",
            "O=c1cccc[nH]1",
            "c1ccccc1-c1ccccc1",
            "c1ccccc1c1ccccc1",
            "Cn1cccc1",
            "c1cc[n+](C)cc1",
        ] {
            assert!(valid(s), "{s}");
        }
        // carbon cannot donate a lone pair
        assert!(!valid("c1ccc(C)(C)cc1"));
        // lowercase atoms outside rings
        assert!(!valid("cc"));
        // explicit aromatic bond outside a ring
        assert!(!valid("C:C"));
    }

    #[test]
    fn charge_adjusts_valence() {
        assert!(valid("C[N+](C)(C)C"));
        assert!(!valid("CN(C)(C)C"));
        assert!(valid("[NH4+]"));
    }

    #[test]
    fn hypervalent_sulfur_and_phosphorus() {
        assert!(valid("CS(=O)(=O)C"));
        assert!(valid("OP(=O)(O)O"));
        assert!(!valid("FS(F)(F)(F)(F)(F)F"));
    }

    #[test]
    fn implicit_h_counts() {
        let g = parse_smiles("CC(=O)O").unwrap();
        let h: Vec<u32> = (0..g.n_atoms()).map(|i| implicit_hydrogens(&g, i)).collect();
        assert_eq!(h, [3, 0, 0, 1]);
        let g = parse_smiles("c1ccncc1").unwrap();
        assert_eq!(implicit_hydrogens(&g, 3), 0);
        assert_eq!(implicit_hydrogens(&g, 0), 1);
        let g = parse_smiles("CS(C)=O").unwrap();
        assert_eq!(implicit_hydrogens(&g, 1), 0);
        let g = parse_smiles("CSC").unwrap();
        assert_eq!(implicit_hydrogens(&g, 1), 0);
        let g = parse_smiles("[CH4]").unwrap();
        assert_eq!(total_hydrogens(&g, 0), 4);
    }
}
