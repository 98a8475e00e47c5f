//! Spectral analysis of Kuramoto cluster synchronization on weighted graphs.
//!
//! Phases are decomposed in the Laplacian eigenbasis; partitions whose
//! indicator space is Laplacian-invariant (almost equitable partitions) pin
//! down which modes survive. The crate covers the graph operators, the
//! eigenbasis, partition diagnostics, vertex and coefficient integrators,
//! closed-form predictions, planted-structure generators and the scripted
//! scenarios that tie them together.

pub mod analysis;
pub mod dynamics;
pub mod equitable;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{Edge, VertexPartition, WeightedGraph};
pub use matrix::DenseMatrix;
pub use spectral::SpectralBasis;
