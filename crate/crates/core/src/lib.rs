pub mod container;
pub mod error;
pub mod metrics;
pub mod motionvae;
pub mod nn;
pub mod objectives;
pub mod skeleton;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
