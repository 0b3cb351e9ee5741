use crate::molgraph::graph::MolecularGraph;

/// Whether `pattern` occurs in `graph` as a (not necessarily induced)
/// subgraph with matching element, charge, aromaticity and bond order.
pub fn contains_subgraph(graph: &MolecularGraph, pattern: &MolecularGraph) -> bool {
    if pattern.n_atoms() > graph.n_atoms() || pattern.n_bonds() > graph.n_bonds() {
        return false;
    }
    let order = search_order(pattern);
    let mut mapping = vec![usize::MAX; pattern.n_atoms()];
    let mut used = vec![false; graph.n_atoms()];
    extend(graph, pattern, &order, 0, &mut mapping, &mut used)
}

/// Pattern atoms in BFS order so each new atom (after the first of its
/// component) has an already-mapped neighbor.
fn search_order(p: &MolecularGraph) -> Vec<usize> {
    let mut seen = vec![false; p.n_atoms()];
    let mut out = Vec::with_capacity(p.n_atoms());
    for root in 0..p.n_atoms() {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            out.push(u);
            for &(k, _) in p.neighbor_index(u) {
                if !seen[k] {
                    seen[k] = true;
                    queue.push_back(k);
                }
            }
        }
    }
    out
}

fn atoms_match(g: &MolecularGraph, gu: usize, p: &MolecularGraph, pu: usize) -> bool {
    let (a, b) = (&g.atoms()[gu], &p.atoms()[pu]);
    a.element == b.element && a.charge == b.charge && a.aromatic == b.aromatic && g.degree(gu) >= p.degree(pu)
}

fn extend(
    g: &MolecularGraph,
    p: &MolecularGraph,
    order: &[usize],
    depth: usize,
    mapping: &mut [usize],
    used: &mut [bool],
) -> bool {
    let Some(&pu) = order.get(depth) else { return true };
    // candidates: neighbors of a mapped neighbor's image, else every atom
    let anchor = p.neighbor_index(pu).iter().map(|&(k, _)| k).find(|&k| mapping[k] != usize::MAX);
    let candidates: Vec<usize> = match anchor {
        Some(k) => g.neighbor_index(mapping[k]).iter().map(|&(x, _)| x).collect(),
        None => (0..g.n_atoms()).collect(),
    };
    for gu in candidates {
        if used[gu] || !atoms_match(g, gu, p, pu) {
            continue;
        }
        let bonds_ok = p.neighbor_index(pu).iter().all(|&(pk, pe)| {
            let gk = mapping[pk];
            if gk == usize::MAX {
                return true;
            }
            match g.bond_between(gu, gk) {
                Some(b) => b.features.order == p.edge_bond(pe).order,
                None => false,
            }
        });
        if !bonds_ok {
            continue;
        }
        mapping[pu] = gu;
        used[gu] = true;
        if extend(g, p, order, depth + 1, mapping, used) {
            return true;
        }
        mapping[pu] = usize::MAX;
        used[gu] = false;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::smiles::parse_smiles;

    fn has(g: &str, p: &str) -> bool {
        contains_subgraph(&parse_smiles(g).unwrap(), &parse_smiles(p).unwrap())
    }

    #[test]
    fn finds_planted_groups() {
        assert!(has("CCS(=O)(=O)NC", "S(=O)(=O)N"));
        assert!(!has("CCS(=O)ONC", "S(=O)(=O)N"));
        assert!(has("c1ccccc1O", "cO"));
        assert!(!has("C1CCCCC1O", "cO"));
        assert!(has("CCC", "CC"));
        assert!(!has("C=C", "CC"));
    }
}
