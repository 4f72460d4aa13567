use serde::{Deserialize, Serialize};

use super::graph::{BondOrder, MolGraph};
use super::valence::implicit_hydrogens_with;
use super::ChemTables;

/// Physicochemical descriptors backing QED and the Lipinski filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorVector {
    /// Molecular weight in g/mol, implicit hydrogens included.
    pub mw: f64,
    pub logp_proxy: f64,
    pub hbd: u32,
    pub hba: u32,
    /// Polar surface area in square angstrom (N and O contributions).
    pub psa_proxy: f64,
    pub rot_bonds: u32,
    pub arom_rings: u32,
    pub heavy_atoms: u32,
    /// Structural alert hits (peroxide, disulfide, azo, acyl halide).
    pub alerts: u32,
}

pub fn compute_descriptors(g: &MolGraph) -> DescriptorVector {
    compute_descriptors_with(g, ChemTables::builtin())
}

pub fn compute_descriptors_with(g: &MolGraph, t: &ChemTables) -> DescriptorVector {
    let atoms = g.atoms();
    let h_mass = t.masses.get("H").copied().unwrap_or(1.008);
    let hydrogens: Vec<u32> = (0..atoms.len())
        .map(|i| {
            let attached_h_atoms = g
                .neighbors(i)
                .iter()
                .filter(|(nb, _)| atoms[*nb].is_hydrogen())
                .count() as u32;
            atoms[i].explicit_h + implicit_hydrogens_with(g, i, &t.valence) + attached_h_atoms
        })
        .collect();

    let mut mw = 0.0;
    let mut logp = 0.0;
    let mut psa = 0.0;
    let (mut hbd, mut hba, mut heavy) = (0, 0, 0);
    let logp_default = t.logp.get("default").unwrap_or(0.0);
    for (i, a) in atoms.iter().enumerate() {
        mw += t.masses.get(&a.element).copied().unwrap_or(0.0);
        if a.is_hydrogen() {
            continue;
        }
        // written and implicit H; explicit [H] atoms are counted on their own
        let own_h = a.explicit_h + implicit_hydrogens_with(g, i, &t.valence);
        mw += f64::from(own_h) * h_mass;
        heavy += 1;
        let sym = a.symbol();
        logp += t.logp.get(&sym).unwrap_or(logp_default);
        let h_key = if a.element == "C" { "H.C" } else { "H.X" };
        logp += f64::from(hydrogens[i]) * t.logp.get(h_key).unwrap_or(0.0);
        if a.element == "N" || a.element == "O" {
            hba += 1;
            if hydrogens[i] > 0 {
                hbd += 1;
            }
            psa += psa_contribution(g, i, &sym, hydrogens[i], t);
        }
    }

    let mut rot = 0;
    for (bi, b) in g.bonds().iter().enumerate() {
        if b.order != BondOrder::Single || g.is_ring_bond(bi) {
            continue;
        }
        let ends = [b.a, b.b];
        let ok = ends.iter().all(|&x| {
            !atoms[x].is_hydrogen()
                && g.heavy_degree(x) >= 2
                && !g
                    .neighbors(x)
                    .iter()
                    .any(|&(_, e)| g.bonds()[e].order == BondOrder::Triple)
        });
        if ok {
            rot += 1;
        }
    }

    let arom_rings = g
        .rings()
        .iter()
        .filter(|r| r.iter().all(|&i| atoms[i].aromatic))
        .count() as u32;

    DescriptorVector {
        mw,
        logp_proxy: logp,
        hbd,
        hba,
        psa_proxy: psa,
        rot_bonds: rot,
        arom_rings,
        heavy_atoms: heavy,
        alerts: count_alerts(g),
    }
}

fn psa_contribution(g: &MolGraph, i: usize, sym: &str, h: u32, t: &ChemTables) -> f64 {
    let max_order = g
        .neighbors(i)
        .iter()
        .map(|&(_, e)| g.bonds()[e].order)
        .filter(|o| *o != BondOrder::Aromatic)
        .map(BondOrder::int_order)
        .max()
        .unwrap_or(0);
    let multiplicity = match max_order {
        3 => Some("trip"),
        2 => Some("dbl"),
        _ => None,
    };
    let mut keys = Vec::with_capacity(3);
    if let Some(m) = multiplicity {
        keys.push(format!("{sym}.{m}.h{h}"));
    }
    keys.push(format!("{sym}.h{h}"));
    keys.push(format!("{sym}.h0"));
    keys.iter().find_map(|k| t.psa.get(k)).unwrap_or(0.0)
}

fn count_alerts(g: &MolGraph) -> u32 {
    let atoms = g.atoms();
    let el = |i: usize| atoms[i].element.as_str();
    let mut n = 0;
    for b in g.bonds() {
        let pair = (el(b.a), el(b.b));
        match (pair, b.order) {
            (("O", "O"), BondOrder::Single) | (("S", "S"), BondOrder::Single) | (("N", "N"), BondOrder::Double) => {
                n += 1
            }
            _ => {}
        }
    }
    for (i, a) in atoms.iter().enumerate() {
        if a.element != "C" || a.aromatic {
            continue;
        }
        let mut carbonyl = false;
        let mut halide = false;
        for &(nb, e) in g.neighbors(i) {
            match (el(nb), g.bonds()[e].order) {
                ("O", BondOrder::Double) => carbonyl = true,
                ("F" | "Cl" | "Br" | "I", BondOrder::Single) => halide = true,
                _ => {}
            }
        }
        if carbonyl && halide {
            n += 1;
        }
    }
    n
}
