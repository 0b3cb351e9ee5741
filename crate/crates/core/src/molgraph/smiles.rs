//! Parser for a SMILES subset: organic-subset and aromatic atoms, bracket
//! atoms with charge and hydrogen count, `- = #` bonds, branches and ring
//! closures (`1`–`9`, `%nn`). Stereo, isotopes, wildcards and multi-fragment
//! input are rejected.

use std::collections::BTreeMap;

use crate::error::SmilesError;
use crate::molgraph::elements;
use crate::molgraph::graph::{Atom, BondOrder, MolecularGraph};

struct PendingBond {
    order: BondOrder,
}

struct OpenRing {
    atom: usize,
    order: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<(usize, usize, Option<BondOrder>)>,
}

fn unsupported(offset: usize, token: &[u8]) -> SmilesError {
    SmilesError::UnsupportedToken { offset, token: String::from_utf8_lossy(token).into_owned() }
}

pub fn parse_smiles(s: &str) -> Result<MolecularGraph, SmilesError> {
    let mut p = Parser { s: s.as_bytes(), pos: 0, atoms: Vec::new(), bonds: Vec::new() };
    p.run()?;
    p.finish()
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        if self.s.is_empty() {
            return Err(SmilesError::Empty);
        }
        let mut prev: Option<usize> = None;
        let mut pending: Option<(PendingBond, usize)> = None;
        let mut branches: Vec<(usize, usize)> = Vec::new();
        let mut rings: BTreeMap<u32, OpenRing> = BTreeMap::new();

        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' | b'b' | b'c' | b'n' | b'o' | b'p' | b's' | b'[' => {
                    let atom = if c == b'[' { self.bracket_atom()? } else { self.organic_atom() };
                    self.atoms.push(atom);
                    let idx = self.atoms.len() - 1;
                    match prev {
                        Some(a) => self.bonds.push((a, idx, pending.take().map(|(b, _)| b.order))),
                        None if pending.is_some() => {
                            return Err(SmilesError::Syntax { offset: pending.unwrap().1, reason: "bond without a preceding atom" })
                        }
                        None => {}
                    }
                    prev = Some(idx);
                }
                b'-' | b'=' | b'#' => {
                    if pending.is_some() {
                        return Err(SmilesError::Syntax { offset: start, reason: "two consecutive bond symbols" });
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        _ => BondOrder::Triple,
                    };
                    pending = Some((PendingBond { order }, start));
                    self.pos += 1;
                }
                b'(' => {
                    let Some(a) = prev else {
                        return Err(SmilesError::Syntax { offset: start, reason: "branch without a preceding atom" });
                    };
                    if pending.is_some() {
                        return Err(SmilesError::Syntax { offset: start, reason: "bond symbol before branch" });
                    }
                    branches.push((a, start));
                    self.pos += 1;
                }
                b')' => {
                    let Some((a, _)) = branches.pop() else {
                        return Err(SmilesError::UnbalancedBranch { offset: start });
                    };
                    if let Some((_, off)) = pending {
                        return Err(SmilesError::Syntax { offset: off, reason: "bond symbol at end of branch" });
                    }
                    prev = Some(a);
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let label = self.ring_label()?;
                    let Some(a) = prev else {
                        return Err(SmilesError::Syntax { offset: start, reason: "ring closure without a preceding atom" });
                    };
                    let order = pending.take().map(|(b, _)| b.order);
                    match rings.remove(&label) {
                        Some(open) => {
                            let order = match (open.order, order) {
                                (Some(x), Some(y)) if x != y => {
                                    return Err(SmilesError::InvalidRingBond { offset: start, label })
                                }
                                (x, y) => x.or(y),
                            };
                            let duplicate = self
                                .bonds
                                .iter()
                                .any(|&(u, v, _)| (u == a && v == open.atom) || (u == open.atom && v == a));
                            if open.atom == a || duplicate {
                                return Err(SmilesError::InvalidRingBond { offset: start, label });
                            }
                            self.bonds.push((open.atom, a, order));
                        }
                        None => {
                            rings.insert(label, OpenRing { atom: a, order, offset: start });
                        }
                    }
                }
                b'.' | b'/' | b'\\' | b'@' | b':' | b'*' | b'$' => return Err(unsupported(start, &[c])),
                _ => {
                    let end = (start + 1..=self.s.len()).find(|&e| std::str::from_utf8(&self.s[start..e]).is_ok()).unwrap_or(start + 1);
                    return Err(unsupported(start, &self.s[start..end]));
                }
            }
        }
        if let Some(&(_, offset)) = branches.last() {
            return Err(SmilesError::UnbalancedBranch { offset });
        }
        if let Some((_, off)) = pending {
            return Err(SmilesError::Syntax { offset: off, reason: "trailing bond symbol" });
        }
        if let Some((&label, open)) = rings.iter().min_by_key(|(_, r)| r.offset) {
            return Err(SmilesError::DanglingRingClosure { offset: open.offset, label });
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Atom {
        let c = self.s[self.pos];
        let next = self.s.get(self.pos + 1).copied();
        self.pos += 1;
        let (sym, aromatic) = match (c, next) {
            (b'C', Some(b'l')) => {
                self.pos += 1;
                ("Cl", false)
            }
            (b'B', Some(b'r')) => {
                self.pos += 1;
                ("Br", false)
            }
            (b'b', _) => ("B", true),
            (b'c', _) => ("C", true),
            (b'n', _) => ("N", true),
            (b'o', _) => ("O", true),
            (b'p', _) => ("P", true),
            (b's', _) => ("S", true),
            (b'B', _) => ("B", false),
            (b'C', _) => ("C", false),
            (b'N', _) => ("N", false),
            (b'O', _) => ("O", false),
            (b'P', _) => ("P", false),
            (b'S', _) => ("S", false),
            (b'F', _) => ("F", false),
            _ => ("I", false),
        };
        let z = elements::atomic_number(sym).expect("organic subset is in the element table");
        Atom { element: z, charge: 0, aromatic, hydrogens: None }
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        let Some(c) = self.peek() else {
            return Err(SmilesError::Syntax { offset: open, reason: "unterminated bracket atom" });
        };
        if c.is_ascii_digit() {
            let start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            return Err(unsupported(start, &self.s[start..self.pos]));
        }
        let sym_start = self.pos;
        let (symbol, aromatic) = if c.is_ascii_uppercase() {
            let two = self.s.get(self.pos + 1).filter(|c| c.is_ascii_lowercase()).map(|&l| [c, l]);
            match two.and_then(|t| std::str::from_utf8(&t).ok().and_then(elements::atomic_number).map(|_| t)) {
                Some(t) => {
                    self.pos += 2;
                    (String::from_utf8_lossy(&t).into_owned(), false)
                }
                None => {
                    self.pos += 1;
                    ((c as char).to_string(), false)
                }
            }
        } else if c.is_ascii_lowercase() {
            let rest = &self.s[self.pos..];
            let sym = if rest.starts_with(b"se") {
                "Se"
            } else if rest.starts_with(b"as") {
                "As"
            } else {
                match c {
                    b'b' => "B",
                    b'c' => "C",
                    b'n' => "N",
                    b'o' => "O",
                    b'p' => "P",
                    b's' => "S",
                    _ => return Err(unsupported(self.pos, &[c])),
                }
            };
            self.pos += if sym.len() == 2 { 2 } else { 1 };
            (sym.to_string(), true)
        } else {
            return Err(unsupported(self.pos, &[c]));
        };
        let element = elements::atomic_number(&symbol)
            .ok_or_else(|| unsupported(sym_start, symbol.as_bytes()))?;

        if self.peek() == Some(b'@') {
            return Err(unsupported(self.pos, b"@"));
        }
        let mut hydrogens = None;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hydrogens = Some(self.digits().unwrap_or(1) as u8);
        }
        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.digits() {
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(c @ (b':' | b'@')) => return Err(unsupported(self.pos, &[c])),
            Some(_) => return Err(SmilesError::Syntax { offset: self.pos, reason: "unexpected character in bracket atom" }),
            None => return Err(SmilesError::Syntax { offset: open, reason: "unterminated bracket atom" }),
        }
        let charge = i8::try_from(charge).map_err(|_| SmilesError::Syntax { offset: open, reason: "charge out of range" })?;
        Ok(Atom { element, charge, aromatic, hydrogens })
    }

    fn digits(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        (self.pos > start).then(|| std::str::from_utf8(&self.s[start..self.pos]).unwrap().parse().unwrap_or(u32::MAX))
    }

    fn ring_label(&mut self) -> Result<u32, SmilesError> {
        let start = self.pos;
        let c = self.s[self.pos];
        if c == b'%' {
            let d = self.s.get(self.pos + 1..self.pos + 3);
            match d {
                Some(&[a, b]) if a.is_ascii_digit() && b.is_ascii_digit() => {
                    self.pos += 3;
                    Ok(((a - b'0') * 10 + (b - b'0')) as u32)
                }
                _ => Err(SmilesError::Syntax { offset: start, reason: "'%' must be followed by two digits" }),
            }
        } else if c == b'0' {
            Err(unsupported(start, b"0"))
        } else {
            self.pos += 1;
            Ok((c - b'0') as u32)
        }
    }

    fn finish(self) -> Result<MolecularGraph, SmilesError> {
        // Resolve unspecified orders once ring membership is known: two
        // aromatic atoms joined inside a ring get an aromatic bond.
        let provisional: Vec<_> = self.bonds.iter().map(|&(u, v, o)| (u, v, o.unwrap_or(BondOrder::Single))).collect();
        let g = MolecularGraph::new(self.atoms.clone(), &provisional).map_err(|_| SmilesError::Syntax {
            offset: 0,
            reason: "invalid bond structure",
        })?;
        let resolved: Vec<_> = self
            .bonds
            .iter()
            .zip(g.bonds())
            .map(|(&(u, v, o), b)| {
                let order = o.unwrap_or_else(|| {
                    if self.atoms[u].aromatic && self.atoms[v].aromatic && b.features.in_ring {
                        BondOrder::Aromatic
                    } else {
                        BondOrder::Single
                    }
                });
                (u, v, order)
            })
            .collect();
        Ok(MolecularGraph::new(self.atoms, &resolved).expect("structure already validated"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orders(g: &MolecularGraph) -> Vec<BondOrder> {
        g.bonds().iter().map(|b| b.features.order).collect()
    }

    #[test]
    fn ethanol() {
        let g = parse_smiles("CCO").unwrap();
        assert_eq!(g.n_atoms(), 3);
        assert_eq!(g.atoms().iter().map(|a| a.element).collect::<Vec<_>>(), vec![6, 6, 8]);
        assert_eq!(orders(&g), vec![BondOrder::Single; 2]);
    }

    #[test]
    fn benzene() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.n_atoms(), 6);
        assert!(g.atoms().iter().all(|a| a.aromatic && a.element == 6));
        assert_eq!(orders(&g), vec![BondOrder::Aromatic; 6]);
        assert!((0..6).all(|u| g.degree(u) == 2));
    }

    #[test]
    fn acetate() {
        let g = parse_smiles("CC(=O)[O-]").unwrap();
        assert_eq!(g.n_atoms(), 4);
        assert_eq!(g.atoms()[3].charge, -1);
        assert_eq!(orders(&g).iter().filter(|&&o| o == BondOrder::Double).count(), 1);
        assert_eq!(g.degree(1), 3);
    }

    #[test]
    fn biphenyl_link_is_single() {
        let g = parse_smiles("c1ccccc1c1ccccc1").unwrap();
        let o = orders(&g);
        assert_eq!(o.iter().filter(|&&x| x == BondOrder::Single).count(), 1);
        assert_eq!(o.iter().filter(|&&x| x == BondOrder::Aromatic).count(), 12);
    }

    #[test]
    fn bracket_atoms() {
        let g = parse_smiles("[NH4+]").unwrap();
        assert_eq!(g.atoms()[0].charge, 1);
        assert_eq!(g.atoms()[0].hydrogens, Some(4));
        let g = parse_smiles("[Fe+++]").unwrap();
        assert_eq!(g.atoms()[0].charge, 3);
        let g = parse_smiles("C[N-2]").unwrap();
        assert_eq!(g.atoms()[1].charge, -2);
        let g = parse_smiles("[nH]1cccc1").unwrap();
        assert!(g.atoms()[0].aromatic);
        assert_eq!(parse_smiles("[Cl-]").unwrap().atoms()[0].element, 17);
    }

    #[test]
    fn percent_ring_labels() {
        let g = parse_smiles("C%12CCC%12").unwrap();
        assert_eq!(g.n_bonds(), 4);
        assert!(g.bonds().iter().all(|b| b.features.in_ring));
    }

    #[test]
    fn ring_bond_order_from_either_end() {
        let g = parse_smiles("C=1CCC1").unwrap();
        assert_eq!(g.bonds()[3].features.order, BondOrder::Double);
        assert!(matches!(parse_smiles("C=1CC#1"), Err(SmilesError::InvalidRingBond { .. })));
    }

    #[test]
    fn errors_carry_offsets() {
        assert!(matches!(parse_smiles("C.C"), Err(SmilesError::UnsupportedToken { offset: 1, .. })));
        assert!(matches!(parse_smiles("C[C@H](O)N"), Err(SmilesError::UnsupportedToken { offset: 3, .. })));
        assert!(matches!(parse_smiles("[13C]"), Err(SmilesError::UnsupportedToken { offset: 1, .. })));
        assert!(matches!(parse_smiles("F/C=C/F"), Err(SmilesError::UnsupportedToken { offset: 1, .. })));
        assert!(matches!(parse_smiles("CC(C"), Err(SmilesError::UnbalancedBranch { offset: 2 })));
        assert!(matches!(parse_smiles("CC)C"), Err(SmilesError::UnbalancedBranch { offset: 2 })));
        assert!(matches!(parse_smiles("C1CC"), Err(SmilesError::DanglingRingClosure { offset: 1, label: 1 })));
        assert!(matches!(parse_smiles("C11"), Err(SmilesError::InvalidRingBond { .. })));
        assert!(matches!(parse_smiles(""), Err(SmilesError::Empty)));
        assert!(matches!(parse_smiles("CC="), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse_smiles("*C"), Err(SmilesError::UnsupportedToken { offset: 0, .. })));
        assert!(matches!(parse_smiles("Cé"), Err(SmilesError::UnsupportedToken { offset: 1, .. })));
    }
}
