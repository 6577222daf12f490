//! Embedding correction by stochastic subgradient descent on a loss that
//! pairs a local metric regularizer with distributed persistent homology:
//! Wasserstein distances between the Rips diagrams of many small random
//! subsets, measured once in the target metric and once in the embedding.

pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod isomap;
pub mod optimizer;
pub mod persistence;
pub mod union_find;
pub mod wasserstein;

pub use datasets::{Dataset, DatasetSpec};
pub use error::{DipoleError, Result};
pub use evaluation::{EvaluationParams, EvaluationReport};
pub use geometry::{DistanceMatrix, NeighborGraph, PointCloud};
pub use isomap::Embedding;
pub use optimizer::{DipoleConfig, LossBreakdown, OptimizerState};
pub use persistence::{PersistenceDiagram, PersistencePoint};
pub use wasserstein::DiagramMatching;
