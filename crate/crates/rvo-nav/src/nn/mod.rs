//! Minimal dense-tensor engine with reverse-mode differentiation, and the
//! recurrent actor-critic built on top of it.

pub mod checkpoint;
pub mod graph;
pub mod optim;
pub mod policy;
pub mod tensor;

pub use graph::{Graph, Var};
pub use optim::Adam;
pub use policy::{
    ActionDistribution, NetConfig, NetVars, ObsBatch, ObsMode, PolicyNet, PolicyParams,
    RecurrentMode,
};
pub use tensor::Tensor;
