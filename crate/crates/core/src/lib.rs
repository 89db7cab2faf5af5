//! Equivariant message passing on atomic-orbital feature matrices.

pub mod autodiff;
pub mod basis;
pub mod checkpoint;
pub mod checks;
pub mod dataset;
pub mod error;
pub mod featurizer;
pub mod gaussian;
pub mod net;
pub mod o3;
pub mod pooling;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
