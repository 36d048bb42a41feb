//! Minimal differentiable tensor machinery used by the motion model.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;
pub mod posenc;

pub use adam::{Adam, AdamConfig};
pub use graph::{Gradients, Graph, Var};
pub use params::{ParamId, ParamStore};
