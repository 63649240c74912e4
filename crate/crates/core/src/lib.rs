//! Simulation and analysis of stochastic matching models on graphs with
//! reneging items and noisy max-weight matching.

pub mod bounds;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod generator;
pub mod graph;
pub mod model;
pub mod noise;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use graph::{Graph, VertexSet};
pub use model::{ModelSpec, QueueState};
pub use noise::NoiseSpec;
pub use policy::PolicyKind;
