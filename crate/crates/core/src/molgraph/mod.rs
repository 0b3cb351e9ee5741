//! Molecular graphs: construction, SMILES input, JSONL datasets and the
//! synthetic assay generator.

pub mod dataset;
pub mod elements;
pub mod graph;
pub mod smiles;
pub mod subgraph;
pub mod synth;

pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset, CompoundRecord, GraphJson};
pub use elements::{ATOM_WIDTH, BOND_WIDTH};
pub use graph::{Atom, AtomFeatures, Bond, BondFeatures, BondOrder, MolecularGraph};
pub use smiles::parse_smiles;
pub use subgraph::contains_subgraph;
pub use synth::{random_graph, synth_generate, synth_ranking, SynthAssays};
