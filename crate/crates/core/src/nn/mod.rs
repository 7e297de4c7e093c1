//! Minimal reverse-mode differentiation substrate: dense `f64` matrices,
//! linear/GRU layers, masked MSE and an RMSProp optimizer.

pub mod gradcheck;
mod graph;
mod layers;
mod optim;
mod params;

pub use graph::{Graph, Var};
pub use layers::{GruCell, Linear, Mlp2};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{Matrix, ParamId, ParamStore, ParamTensor};
