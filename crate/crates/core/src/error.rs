use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("backward needs a 1x1 loss, got {shape:?}")]
    NonScalarLoss { shape: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    Empty,
    #[error("unsupported token {token:?} at byte {offset}")]
    UnsupportedToken { offset: usize, token: String },
    #[error("unbalanced branch at byte {offset}")]
    UnbalancedBranch { offset: usize },
    #[error("ring closure {label} opened at byte {offset} is never closed")]
    DanglingRingClosure { offset: usize, label: u32 },
    #[error("invalid ring bond for closure {label} at byte {offset}")]
    InvalidRingBond { offset: usize, label: u32 },
    #[error("syntax error at byte {offset}: {reason}")]
    Syntax { offset: usize, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("bond {index} is a self-loop on atom {atom}")]
    SelfLoop { index: usize, atom: usize },
    #[error("bond {index} references atom {atom} but the graph has {n_atoms} atoms")]
    AtomOutOfRange { index: usize, atom: usize, n_atoms: usize },
    #[error("duplicate bond between atoms {u} and {v}")]
    DuplicateBond { u: usize, v: usize },
    #[error("unknown element {0:?}")]
    UnknownElement(String),
    #[error("graph has no atoms")]
    NoAtoms,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("duplicate id {id:?} on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("record {id:?} has no {field}")]
    MissingField { id: String, field: &'static str },
    #[error("invalid count: {0}")]
    InvalidCount(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("fingerprint dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("similarity over an empty set")]
    EmptySet,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("scores and labels differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("metric needs both positive and negative labels")]
    DegenerateLabels,
    #[error("need at least {need} items, got {got}")]
    TooFewItems { need: usize, got: usize },
    #[error("k = {k} exceeds n = {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("ranked dataset has tied activities")]
    TiedActivities,
}

#[derive(Debug, Error)]
pub enum PairingError {
    #[error("assay {assay:?} needs {need} inactives but only {available} are available")]
    InsufficientInactives { assay: String, need: usize, available: usize },
    #[error("two assay files share the id {0:?}")]
    DuplicateAssay(String),
    #[error("record {0:?} has no label")]
    MissingLabel(String),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("header json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing array {0:?}")]
    MissingArray(String),
    #[error("array {name:?} has shape {found:?}, model expects {expected:?}")]
    ShapeMismatch { name: String, expected: (usize, usize), found: (usize, usize) },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty split: {0}")]
    EmptySplit(&'static str),
    #[error("record {0:?} has no label")]
    MissingLabel(String),
    #[error("record {0:?} has no activity")]
    MissingActivity(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("feature width mismatch: graph has {found}, model expects {expected}")]
    FeatureWidth { expected: usize, found: usize },
    #[error("training and validation splits overlap")]
    OverlappingSplits,
    #[error("ranking loss needs at least one ordered pair")]
    NoPairs,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("protocol: {0}")]
    Protocol(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
