//! The equivariant network: parameters, feature layout and forward pass.

pub mod config;
pub mod forward;
pub mod model;
pub mod params;
pub mod rep;

pub use config::ModelConfig;
pub use forward::{forward, Prepared, StatsAccumulator};
pub use model::{EvStats, Model, ModelSpec};
pub use params::{ParamEntry, ParamSet};
pub use rep::{EquivariantRep, RepLayout};
