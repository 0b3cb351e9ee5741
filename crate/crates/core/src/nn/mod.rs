//! Differentiation core: tape, parameters, layers, optimizer, checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod fd;
pub mod init;
pub mod layers;
pub mod params;
pub mod tape;

pub use adam::Adam;
pub use init::{glorot, init_glorot};
pub use layers::{Dense, Mlp2};
pub use params::{Binding, Param, ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
