//! Per-snapshot network statistics.
//!
//! All functions are read-only over an immutable [`SnapshotGraph`] built
//! from a [`YearSnapshot`](crate::snapshot::YearSnapshot). Undefined results
//! (zero variance, empty inputs) come back as `None` or a [`MetricError`]
//! rather than NaN.

mod components;
mod degree;
mod graph;
mod mixing;
mod stats;
mod suite;
mod top;

use thiserror::Error;

pub use components::{
    component_size_gini, connected_components, strong_refines_weak, ComponentMode, ComponentPartition,
};
pub use degree::{degree_vectors, DegreeVector, DegreeVectors, Direction, Weighting};
pub use graph::SnapshotGraph;
pub use mixing::{
    average_local_clustering, degree_assortativity, triangles_per_node, AssortativityVariant, ClusteringSample,
    LowDegreePolicy,
};
pub use stats::{density_from_counts, distribution_moments, gini, Moments};
pub use suite::{snapshot_metrics, MetricOptions, MetricValue};
pub use top::{
    top_count, top_nodes, top_percent_component_membership, top_percent_component_membership_with,
    top_percent_edge_share, RankWeighting, TopMembership, TopShares,
};

use crate::snapshot::YearSnapshot;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("all values are zero")]
    AllZero,
    #[error("negative or non-finite value")]
    Negative,
    #[error("need at least {needed} nodes, found {found}")]
    TooFewNodes { needed: usize, found: usize },
    #[error("need at least {needed} edges, found {found}")]
    TooFewEdges { needed: usize, found: usize },
    #[error("fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
}

/// Directed density counting each ordered pair once and ignoring
/// self-loops.
pub fn density(s: &YearSnapshot) -> Result<f64, MetricError> {
    let edges = s.edges().iter().filter(|e| e.src != e.dst).count();
    density_from_counts(s.node_count() as u64, edges as u64)
}
