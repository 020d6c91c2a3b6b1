use std::fmt;

use crate::ingest::AddressId;

use super::graph::SnapshotGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Weighting {
    /// Transaction count (`w2`).
    Activity,
    /// Moved value (`w1`), in satoshi.
    Value,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::In => "in",
            Direction::Out => "out",
        })
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Activity => "activity",
            Weighting::Value => "value",
        })
    }
}

/// Weighted degree of every node in a snapshot, aligned with
/// [`SnapshotGraph::nodes`].
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector {
    pub direction: Direction,
    pub weighting: Weighting,
    pub nodes: Vec<AddressId>,
    pub values: Vec<f64>,
}

impl DegreeVector {
    pub fn get(&self, id: AddressId) -> Option<f64> {
        self.nodes.binary_search(&id).ok().map(|i| self.values[i])
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVectors {
    pub in_activity: DegreeVector,
    pub out_activity: DegreeVector,
    pub in_value: DegreeVector,
    pub out_value: DegreeVector,
}

impl DegreeVectors {
    pub fn iter(&self) -> impl Iterator<Item = &DegreeVector> {
        [&self.in_activity, &self.in_value, &self.out_activity, &self.out_value].into_iter()
    }

    pub fn get(&self, direction: Direction, weighting: Weighting) -> &DegreeVector {
        match (direction, weighting) {
            (Direction::In, Weighting::Activity) => &self.in_activity,
            (Direction::In, Weighting::Value) => &self.in_value,
            (Direction::Out, Weighting::Activity) => &self.out_activity,
            (Direction::Out, Weighting::Value) => &self.out_value,
        }
    }
}

pub fn degree_vectors(g: &SnapshotGraph) -> DegreeVectors {
    let n = g.node_count();
    let mut in_act = vec![0.0; n];
    let mut out_act = vec![0.0; n];
    let mut in_val = vec![0.0; n];
    let mut out_val = vec![0.0; n];
    for (u, v, w1, w2) in g.weighted_edges() {
        out_act[u] += w2 as f64;
        in_act[v] += w2 as f64;
        out_val[u] += w1;
        in_val[v] += w1;
    }
    let make = |direction, weighting, values| DegreeVector {
        direction,
        weighting,
        nodes: g.nodes().to_vec(),
        values,
    };
    DegreeVectors {
        in_activity: make(Direction::In, Weighting::Activity, in_act),
        out_activity: make(Direction::Out, Weighting::Activity, out_act),
        in_value: make(Direction::In, Weighting::Value, in_val),
        out_value: make(Direction::Out, Weighting::Value, out_val),
    }
}
