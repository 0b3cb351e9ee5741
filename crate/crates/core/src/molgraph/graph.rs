use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::molgraph::elements::{self, ATOM_WIDTH, BOND_WIDTH, CHARGE_RANGE, ELEMENT_ALPHABET, MAX_DEGREE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

/// Heavy atom as written in the input.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub element: u8,
    pub charge: i8,
    pub aromatic: bool,
    /// Explicit hydrogen count from a bracket atom; informational only.
    pub hydrogens: Option<u8>,
}

impl Atom {
    pub fn new(element: u8) -> Self {
        Self { element, charge: 0, aromatic: false, hydrogens: None }
    }

    pub fn aromatic(element: u8) -> Self {
        Self { aromatic: true, ..Self::new(element) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomFeatures {
    pub element: u8,
    pub degree: usize,
    pub formal_charge: i8,
    pub aromatic: bool,
    pub mass_scaled: f64,
    pub encoded: Vec<f64>,
}

impl AtomFeatures {
    fn new(atom: &Atom, degree: usize) -> Self {
        let mass_scaled = elements::atomic_mass(atom.element).unwrap_or(0.0) / 100.0;
        let mut encoded = vec![0.0; ATOM_WIDTH];
        let slot = ELEMENT_ALPHABET.iter().position(|&z| z == atom.element).unwrap_or(ELEMENT_ALPHABET.len());
        encoded[slot] = 1.0;
        let mut off = ELEMENT_ALPHABET.len() + 1;
        encoded[off + degree.min(MAX_DEGREE)] = 1.0;
        off += MAX_DEGREE + 1;
        let charge = atom.charge.clamp(CHARGE_RANGE.0, CHARGE_RANGE.1);
        encoded[off + (charge - CHARGE_RANGE.0) as usize] = 1.0;
        off += (CHARGE_RANGE.1 - CHARGE_RANGE.0) as usize + 1;
        encoded[off] = if atom.aromatic { 1.0 } else { 0.0 };
        encoded[off + 1] = mass_scaled;
        Self { element: atom.element, degree, formal_charge: atom.charge, aromatic: atom.aromatic, mass_scaled, encoded }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BondFeatures {
    pub order: BondOrder,
    pub in_ring: bool,
    pub encoded: Vec<f64>,
}

impl BondFeatures {
    fn new(order: BondOrder, in_ring: bool) -> Self {
        let mut encoded = vec![0.0; BOND_WIDTH];
        encoded[order.code() as usize - 1] = 1.0;
        encoded[4] = if in_ring { 1.0 } else { 0.0 };
        Self { order, in_ring, encoded }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bond {
    pub u: usize,
    pub v: usize,
    pub features: BondFeatures,
}

/// Featurized heavy-atom graph.
///
/// Bond `i` owns directed edges `2i = (u, v)` and `2i + 1 = (v, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    atom_features: Vec<AtomFeatures>,
    bonds: Vec<Bond>,
    directed_edges: Vec<(usize, usize)>,
    neighbor_index: Vec<Vec<(usize, usize)>>,
}

impl MolecularGraph {
    /// Validates the bond list and derives features, ring membership and the
    /// directed-edge index.
    pub fn new(atoms: Vec<Atom>, bonds: &[(usize, usize, BondOrder)]) -> Result<Self, GraphError> {
        if atoms.is_empty() {
            return Err(GraphError::NoAtoms);
        }
        let n = atoms.len();
        let mut seen = std::collections::HashSet::new();
        for (index, &(u, v, _)) in bonds.iter().enumerate() {
            for atom in [u, v] {
                if atom >= n {
                    return Err(GraphError::AtomOutOfRange { index, atom, n_atoms: n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop { index, atom: u });
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(GraphError::DuplicateBond { u, v });
            }
        }
        for a in &atoms {
            if elements::symbol(a.element).is_none() {
                return Err(GraphError::UnknownElement(a.element.to_string()));
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        for (i, &(u, v, _)) in bonds.iter().enumerate() {
            adjacency[u].push((v, i));
            adjacency[v].push((u, i));
        }
        let ring = ring_bonds(n, bonds, &adjacency);

        let mut directed_edges = Vec::with_capacity(2 * bonds.len());
        let mut neighbor_index = vec![Vec::new(); n];
        let mut bond_list = Vec::with_capacity(bonds.len());
        for (i, &(u, v, order)) in bonds.iter().enumerate() {
            directed_edges.push((u, v));
            directed_edges.push((v, u));
            // edge (u, v) points into v
            neighbor_index[v].push((u, 2 * i));
            neighbor_index[u].push((v, 2 * i + 1));
            bond_list.push(Bond { u, v, features: BondFeatures::new(order, ring[i]) });
        }
        let atom_features = atoms.iter().enumerate().map(|(i, a)| AtomFeatures::new(a, adjacency[i].len())).collect();
        Ok(Self { atoms, atom_features, bonds: bond_list, directed_edges, neighbor_index })
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom_features(&self) -> &[AtomFeatures] {
        &self.atom_features
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.directed_edges
    }

    /// `(neighbor k, id of directed edge k → u)` for every bond at `u`.
    pub fn neighbor_index(&self, u: usize) -> &[(usize, usize)] {
        &self.neighbor_index[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbor_index[u].len()
    }

    /// Bond features of the undirected bond carrying directed edge `e`.
    pub fn edge_bond(&self, e: usize) -> &BondFeatures {
        &self.bonds[e / 2].features
    }

    /// Bond list in the `(u, v, order)` form accepted by [`MolecularGraph::new`].
    pub fn bond_triples(&self) -> Vec<(usize, usize, BondOrder)> {
        self.bonds.iter().map(|b| (b.u, b.v, b.features.order)).collect()
    }

    pub fn bond_between(&self, u: usize, v: usize) -> Option<&Bond> {
        self.neighbor_index[u].iter().find(|&&(k, _)| k == v).map(|&(_, e)| &self.bonds[e / 2])
    }

    /// Copy with atom `i` moved to position `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> MolecularGraph {
        assert_eq!(perm.len(), self.n_atoms(), "permutation length");
        let mut atoms = vec![Atom::new(0); self.n_atoms()];
        for (i, a) in self.atoms.iter().enumerate() {
            atoms[perm[i]] = a.clone();
        }
        let bonds: Vec<_> = self.bonds.iter().map(|b| (perm[b.u], perm[b.v], b.features.order)).collect();
        MolecularGraph::new(atoms, &bonds).expect("relabeling preserves validity")
    }

    /// Disjoint union with `other` plus extra bonds `(atom in self, atom in other, order)`.
    pub fn join(&self, other: &MolecularGraph, links: &[(usize, usize, BondOrder)]) -> Result<MolecularGraph, GraphError> {
        let off = self.n_atoms();
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        let mut bonds = self.bond_triples();
        bonds.extend(other.bonds.iter().map(|b| (b.u + off, b.v + off, b.features.order)));
        bonds.extend(links.iter().map(|&(a, b, o)| (a, b + off, o)));
        MolecularGraph::new(atoms, &bonds)
    }
}

/// A bond is in a ring iff its endpoints stay connected without it.
fn ring_bonds(n: usize, bonds: &[(usize, usize, BondOrder)], adjacency: &[Vec<(usize, usize)>]) -> Vec<bool> {
    let mut out = vec![false; bonds.len()];
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    for (i, &(u, v, _)) in bonds.iter().enumerate() {
        seen.iter_mut().for_each(|s| *s = false);
        stack.clear();
        stack.push(u);
        seen[u] = true;
        while let Some(x) = stack.pop() {
            if x == v {
                out[i] = true;
                break;
            }
            for &(y, b) in &adjacency[x] {
                if b != i && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
    }
    out
}
