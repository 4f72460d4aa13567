//! SMILES parser.
//!
//! Supports the organic subset, bracket atoms (isotope, chirality, hydrogen
//! count, charge and atom class are read; isotope, chirality and class are
//! discarded), bonds `- = # $ : / \`, branches, ring closures (`0-9`, `%nn`)
//! and `.` disconnections. Stereo markers are accepted and ignored.

use std::collections::BTreeMap;

use super::graph::{Atom, Bond, BondOrder, MolGraph};
use super::tables::ChemTables;
use super::ChemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSym {
    Order(BondOrder),
}

struct PendingBond {
    a: usize,
    b: usize,
    order: BondOrder,
    implicit_aromatic: bool,
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    tables: &'a ChemTables,
    atoms: Vec<Atom>,
    bonds: Vec<PendingBond>,
}

pub fn parse_smiles(smiles: &str) -> Result<MolGraph, ChemError> {
    parse_smiles_with(smiles, ChemTables::builtin())
}

pub fn parse_smiles_with(smiles: &str, tables: &ChemTables) -> Result<MolGraph, ChemError> {
    if smiles.is_empty() {
        return Err(ChemError::EmptyInput);
    }
    Parser {
        s: smiles.as_bytes(),
        pos: 0,
        tables,
        atoms: Vec::new(),
        bonds: Vec::new(),
    }
    .run()
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ChemError> {
        Err(ChemError::Syntax {
            position: self.pos,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn run(mut self) -> Result<MolGraph, ChemError> {
        let mut prev: Option<usize> = None;
        let mut pending: Option<BondSym> = None;
        // (branch point, whether the branch has received an atom yet)
        let mut branches: Vec<(usize, bool)> = Vec::new();
        let mut rings: BTreeMap<u32, (usize, Option<BondSym>, usize)> = BTreeMap::new();

        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    if prev.is_none() {
                        return self.err("branch opened without a preceding atom");
                    }
                    if pending.is_some() {
                        return self.err("bond symbol before branch");
                    }
                    if branches.last().is_some_and(|b| !b.1) {
                        return self.err("branch must start with an atom or bond");
                    }
                    branches.push((prev.expect("checked"), false));
                    self.pos += 1;
                }
                b')' => {
                    let Some((at, filled)) = branches.pop() else {
                        return self.err("unbalanced `)`");
                    };
                    if !filled {
                        return self.err("empty branch");
                    }
                    if pending.is_some() {
                        return self.err("dangling bond at end of branch");
                    }
                    prev = Some(at);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b'$' | b':' | b'/' | b'\\' => {
                    if prev.is_none() {
                        return self.err("bond without a preceding atom");
                    }
                    if pending.is_some() {
                        return self.err("consecutive bond symbols");
                    }
                    let order = match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b'$' => BondOrder::Quadruple,
                        b':' => BondOrder::Aromatic,
                        _ => BondOrder::Single,
                    };
                    pending = Some(BondSym::Order(order));
                    self.pos += 1;
                }
                b'.' => {
                    if prev.is_none() || pending.is_some() {
                        return self.err("misplaced `.`");
                    }
                    if !branches.is_empty() {
                        return self.err("`.` inside a branch");
                    }
                    prev = None;
                    self.pos += 1;
                    if !matches!(self.peek(), Some(ch) if ch == b'[' || ch.is_ascii_alphabetic()) {
                        return self.err("`.` must be followed by an atom");
                    }
                }
                b'0'..=b'9' | b'%' => {
                    let Some(cur) = prev else {
                        return self.err("ring closure without a preceding atom");
                    };
                    let start = self.pos;
                    let label = self.ring_label()?;
                    if let Some((other, open_bond, _)) = rings.remove(&label) {
                        let order = match (open_bond, pending) {
                            (Some(BondSym::Order(x)), Some(BondSym::Order(y))) if x != y => {
                                self.pos = start;
                                return self.err("conflicting ring-closure bond orders");
                            }
                            (Some(BondSym::Order(x)), _) | (None, Some(BondSym::Order(x))) => Some(x),
                            (None, None) => None,
                        };
                        if other == cur {
                            self.pos = start;
                            return self.err("ring closure bonds an atom to itself");
                        }
                        self.add_bond(other, cur, order, start)?;
                    } else {
                        rings.insert(label, (cur, pending, start));
                    }
                    pending = None;
                }
                b'[' | b'A'..=b'Z' | b'a'..=b'z' | b'*' => {
                    let start = self.pos;
                    let atom = if c == b'[' { self.bracket_atom()? } else { self.organic_atom()? };
                    self.atoms.push(atom);
                    let idx = self.atoms.len() - 1;
                    if let Some(p) = prev {
                        let order = pending.map(|BondSym::Order(o)| o);
                        self.add_bond(p, idx, order, start)?;
                    } else if pending.is_some() {
                        return self.err("bond without a preceding atom");
                    }
                    if let Some(last) = branches.last_mut() {
                        last.1 = true;
                    }
                    pending = None;
                    prev = Some(idx);
                }
                _ => return self.err(format!("unexpected character `{}`", char::from(c).escape_default())),
            }
        }
        if pending.is_some() {
            return self.err("dangling bond at end of input");
        }
        if !branches.is_empty() {
            return self.err("unbalanced `(`");
        }
        if let Some((label, (_, _, at))) = rings.iter().next() {
            return Err(ChemError::Syntax {
                position: *at,
                msg: format!("ring closure {label} never closed"),
            });
        }
        if self.atoms.is_empty() {
            return self.err("no atoms");
        }
        self.finish()
    }

    fn ring_label(&mut self) -> Result<u32, ChemError> {
        let c = self.peek().expect("caller checked");
        if c == b'%' {
            let d = self.s.get(self.pos + 1..self.pos + 3);
            match d {
                Some([a, b]) if a.is_ascii_digit() && b.is_ascii_digit() => {
                    self.pos += 3;
                    Ok(u32::from(a - b'0') * 10 + u32::from(b - b'0'))
                }
                _ => self.err("`%` must be followed by two digits"),
            }
        } else {
            self.pos += 1;
            Ok(u32::from(c - b'0'))
        }
    }

    fn add_bond(&mut self, a: usize, b: usize, order: Option<BondOrder>, at: usize) -> Result<(), ChemError> {
        if self
            .bonds
            .iter()
            .any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a))
        {
            self.pos = at;
            return self.err("duplicate bond between the same atoms");
        }
        let both_aromatic = self.atoms[a].aromatic && self.atoms[b].aromatic;
        let (order, implicit_aromatic) = match order {
            Some(o) => (o, false),
            None if both_aromatic => (BondOrder::Aromatic, true),
            None => (BondOrder::Single, false),
        };
        self.bonds.push(PendingBond {
            a,
            b,
            order,
            implicit_aromatic,
        });
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, ChemError> {
        let rest = &self.s[self.pos..];
        let (sym, aromatic, len) = match rest {
            [b'C', b'l', ..] => ("Cl", false, 2),
            [b'B', b'r', ..] => ("Br", false, 2),
            [b'B', ..] => ("B", false, 1),
            [b'C', ..] => ("C", false, 1),
            [b'N', ..] => ("N", false, 1),
            [b'O', ..] => ("O", false, 1),
            [b'P', ..] => ("P", false, 1),
            [b'S', ..] => ("S", false, 1),
            [b'F', ..] => ("F", false, 1),
            [b'I', ..] => ("I", false, 1),
            [b'b', ..] => ("B", true, 1),
            [b'c', ..] => ("C", true, 1),
            [b'n', ..] => ("N", true, 1),
            [b'o', ..] => ("O", true, 1),
            [b'p', ..] => ("P", true, 1),
            [b's', ..] => ("S", true, 1),
            _ => return self.err("not an organic-subset atom (use brackets)"),
        };
        self.pos += len;
        Ok(Atom::organic(sym, aromatic))
    }

    fn bracket_atom(&mut self) -> Result<Atom, ChemError> {
        let open = self.pos;
        self.pos += 1;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        let (element, aromatic) = self.bracket_symbol()?;
        // chirality
        if self.peek() == Some(b'@') {
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            }
        }
        let mut explicit_h = 0;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            explicit_h = 1;
            if let Some(d) = self.peek().filter(u8::is_ascii_digit) {
                explicit_h = u32::from(d - b'0');
                self.pos += 1;
            }
        }
        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(d) = self.peek().filter(u8::is_ascii_digit) {
                self.pos += 1;
                let mut mag = i32::from(d - b'0');
                if let Some(d2) = self.peek().filter(u8::is_ascii_digit) {
                    self.pos += 1;
                    mag = mag * 10 + i32::from(d2 - b'0');
                }
                charge = unit * mag;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
            if charge.abs() > 15 {
                return self.err("charge out of range");
            }
        }
        if self.peek() == Some(b':') {
            self.pos += 1;
            let start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == start {
                return self.err("atom class needs digits");
            }
        }
        if self.peek() != Some(b']') {
            self.pos = open;
            return self.err("malformed bracket atom");
        }
        self.pos += 1;
        Ok(Atom {
            element,
            charge,
            aromatic,
            explicit_h,
            bracket: true,
        })
    }

    fn bracket_symbol(&mut self) -> Result<(String, bool), ChemError> {
        let rest = &self.s[self.pos..];
        // aromatic two-letter forms first
        for (pat, el) in [(&b"se"[..], "Se"), (&b"as"[..], "As")] {
            if rest.starts_with(pat) {
                self.pos += 2;
                return Ok((el.to_string(), true));
            }
        }
        match rest.first() {
            Some(&c @ (b'b' | b'c' | b'n' | b'o' | b'p' | b's')) => {
                self.pos += 1;
                Ok((char::from(c).to_ascii_uppercase().to_string(), true))
            }
            Some(&c) if c.is_ascii_uppercase() => {
                if let Some(&l) = rest.get(1).filter(|l| l.is_ascii_lowercase()) {
                    let two: String = [char::from(c), char::from(l)].iter().collect();
                    if self.tables.is_known_element(&two) {
                        self.pos += 2;
                        return Ok((two, false));
                    }
                }
                let one = char::from(c).to_string();
                if self.tables.is_known_element(&one) {
                    self.pos += 1;
                    Ok((one, false))
                } else {
                    self.err(format!("unknown element `{one}`"))
                }
            }
            _ => self.err("bracket atom needs an element symbol"),
        }
    }

    fn finish(self) -> Result<MolGraph, ChemError> {
        let bonds: Vec<Bond> = self
            .bonds
            .iter()
            .map(|p| Bond {
                a: p.a,
                b: p.b,
                order: p.order,
            })
            .collect();
        let mut graph = MolGraph::new(self.atoms, bonds)?;
        // An unmarked bond between aromatic atoms is aromatic only inside a ring;
        // between rings (biphenyl-style) it is a plain single bond.
        for (i, p) in self.bonds.iter().enumerate() {
            if p.implicit_aromatic && !graph.is_ring_bond(i) {
                graph.set_bond_order(i, BondOrder::Single);
            }
        }
        Ok(graph)
    }
}
