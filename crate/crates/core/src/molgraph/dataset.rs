//! JSON-Lines compound datasets.
//!
//! Each line is an object with an `"id"`, either `"smiles"` or an explicit
//! `"graph"`, and a `"label"` (0/1) and/or an `"activity"` (real). An
//! optional `"family"` tag groups assays by target family.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DatasetError, GraphError};
use crate::molgraph::elements;
use crate::molgraph::graph::{Atom, BondOrder, MolecularGraph};
use crate::molgraph::smiles::parse_smiles;

#[derive(Clone, Debug, PartialEq)]
pub struct CompoundRecord {
    pub id: String,
    pub graph: MolecularGraph,
    pub label: Option<u8>,
    pub activity: Option<f64>,
    pub smiles: Option<String>,
    pub family: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AtomJson {
    pub element: String,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub charge: i8,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub aromatic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hydrogens: Option<u8>,
}

fn is_zero(x: &i8) -> bool {
    *x == 0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BondJson {
    pub u: usize,
    pub v: usize,
    pub order: BondOrder,
}

/// Explicit graph form used when no SMILES is available.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GraphJson {
    pub atoms: Vec<AtomJson>,
    pub bonds: Vec<BondJson>,
}

impl GraphJson {
    pub fn from_graph(g: &MolecularGraph) -> Self {
        Self {
            atoms: g
                .atoms()
                .iter()
                .map(|a| AtomJson {
                    element: elements::symbol(a.element).unwrap_or("?").to_string(),
                    charge: a.charge,
                    aromatic: a.aromatic,
                    hydrogens: a.hydrogens,
                })
                .collect(),
            bonds: g.bonds().iter().map(|b| BondJson { u: b.u, v: b.v, order: b.features.order }).collect(),
        }
    }

    pub fn to_graph(&self) -> Result<MolecularGraph, GraphError> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                let element = elements::atomic_number(&a.element).ok_or_else(|| GraphError::UnknownElement(a.element.clone()))?;
                Ok(Atom { element, charge: a.charge, aromatic: a.aromatic, hydrogens: a.hydrogens })
            })
            .collect::<Result<Vec<_>, GraphError>>()?;
        let bonds: Vec<_> = self.bonds.iter().map(|b| (b.u, b.v, b.order)).collect();
        MolecularGraph::new(atoms, &bonds)
    }
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    smiles: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graph: Option<GraphJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    activity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<String>,
}

impl CompoundRecord {
    pub fn from_smiles(id: impl Into<String>, smiles: &str) -> Result<Self, crate::error::SmilesError> {
        Ok(Self {
            id: id.into(),
            graph: parse_smiles(smiles)?,
            label: None,
            activity: None,
            smiles: Some(smiles.to_string()),
            family: None,
        })
    }

    pub fn from_graph(id: impl Into<String>, graph: MolecularGraph) -> Self {
        Self { id: id.into(), graph, label: None, activity: None, smiles: None, family: None }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_activity(mut self, activity: f64) -> Self {
        self.activity = Some(activity);
        self
    }

    /// Parses one JSONL line (without the trailing newline).
    pub fn from_json_line(line: &str) -> Result<Self, String> {
        let raw: RecordJson = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
        let graph = match (&raw.smiles, &raw.graph) {
            (Some(s), _) => parse_smiles(s).map_err(|e| format!("record {:?}: {e}", raw.id))?,
            (None, Some(g)) => g.to_graph().map_err(|e| format!("record {:?}: {e}", raw.id))?,
            (None, None) => return Err(format!("record {:?} has neither smiles nor graph", raw.id)),
        };
        if let Some(l) = raw.label {
            if l > 1 {
                return Err(format!("record {:?}: label must be 0 or 1, got {l}", raw.id));
            }
        }
        if raw.label.is_none() && raw.activity.is_none() {
            return Err(format!("record {:?} has neither label nor activity", raw.id));
        }
        Ok(Self { id: raw.id, graph, label: raw.label, activity: raw.activity, smiles: raw.smiles, family: raw.family })
    }

    /// Serializes as one JSONL line; records with SMILES keep their SMILES,
    /// others carry the explicit graph.
    pub fn to_json_line(&self) -> String {
        let raw = RecordJson {
            id: self.id.clone(),
            smiles: self.smiles.clone(),
            graph: if self.smiles.is_some() { None } else { Some(GraphJson::from_graph(&self.graph)) },
            label: self.label,
            activity: self.activity,
            family: self.family.clone(),
        };
        serde_json::to_string(&raw).expect("record serializes")
    }
}

/// Reads records in file order; ids must be unique.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<CompoundRecord>, DatasetError> {
    let path = path.as_ref();
    let io = |source| DatasetError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::open(path).map_err(io)?;
    read_dataset(BufReader::new(file)).map_err(|e| match e {
        DatasetError::Io { source, .. } => io(source),
        other => other,
    })
}

pub fn read_dataset(reader: impl BufRead) -> Result<Vec<CompoundRecord>, DatasetError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DatasetError::Io { path: String::new(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = CompoundRecord::from_json_line(&line).map_err(|reason| DatasetError::Line { line: line_no, reason })?;
        if !ids.insert(rec.id.clone()) {
            return Err(DatasetError::DuplicateId { id: rec.id, line: line_no });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_dataset(mut w: impl Write, records: &[CompoundRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_json_line())?;
    }
    w.flush()
}

pub fn save_dataset(path: impl AsRef<Path>, records: &[CompoundRecord]) -> std::io::Result<()> {
    let f = std::fs::File::create(path)?;
    write_dataset(std::io::BufWriter::new(f), records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_in_order() {
        let text = "{\"id\":\"a\",\"smiles\":\"CCO\",\"label\":1}\n{\"id\":\"b\",\"smiles\":\"c1ccccc1\",\"label\":0}\n";
        let recs = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].id, "a");
        assert_eq!(recs[1].graph.n_atoms(), 6);
    }

    #[test]
    fn malformed_line_is_named() {
        let text = "{\"id\":\"a\",\"smiles\":\"C\",\"label\":1}\n{\"id\":\"b\",\"smiles\":\"C\",\"label\":0}\n{oops\n";
        match read_dataset(text.as_bytes()) {
            Err(DatasetError::Line { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_and_activity_both_kept() {
        let text = "{\"id\":\"a\",\"smiles\":\"CN\",\"label\":1,\"activity\":6.5}\n";
        let r = &read_dataset(text.as_bytes()).unwrap()[0];
        assert_eq!(r.label, Some(1));
        assert_eq!(r.activity, Some(6.5));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "{\"id\":\"a\",\"smiles\":\"C\",\"label\":1}\n{\"id\":\"a\",\"smiles\":\"N\",\"label\":0}\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(DatasetError::DuplicateId { line: 2, .. })));
    }

    #[test]
    fn explicit_graph_validated() {
        let ok = r#"{"id":"g","graph":{"atoms":[{"element":"C"},{"element":"O","charge":-1}],"bonds":[{"u":0,"v":1,"order":"single"}]},"label":0}"#;
        let r = CompoundRecord::from_json_line(ok).unwrap();
        assert_eq!(r.graph.atoms()[1].charge, -1);
        let bad = r#"{"id":"g","graph":{"atoms":[{"element":"C"}],"bonds":[{"u":0,"v":0,"order":"single"}]},"label":0}"#;
        assert!(CompoundRecord::from_json_line(bad).is_err());
        let bad_label = r#"{"id":"x","smiles":"C","label":2}"#;
        assert!(CompoundRecord::from_json_line(bad_label).is_err());
    }

    #[test]
    fn graph_json_round_trip() {
        let g = parse_smiles("CC(=O)[O-]").unwrap();
        let rec = CompoundRecord::from_graph("x", g.clone()).with_label(1);
        let back = CompoundRecord::from_json_line(&rec.to_json_line()).unwrap();
        assert_eq!(back.graph, g);
    }
}
