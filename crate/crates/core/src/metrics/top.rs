use super::components::{connected_components, ComponentMode, ComponentPartition};
use super::degree::{degree_vectors, Direction, Weighting};
use super::graph::SnapshotGraph;
use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankWeighting {
    /// Rank and share by transaction count (`w2`).
    #[default]
    Activity,
    /// Rank and share by number of distinct counterparties.
    Unweighted,
}

/// Number of nodes in the top fraction `p` of `n`: `⌈p·n⌉`, at least one.
pub fn top_count(p: f64, n: usize) -> usize {
    // Absorb representation error such as 0.07·100 = 7.000000000000001.
    let raw = p * n as f64;
    let k = (raw - raw.abs() * 1e-12).ceil() as usize;
    k.clamp(1, n.max(1))
}

fn check_fraction(p: f64) -> Result<(), MetricError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(MetricError::InvalidFraction(p))
    }
}

fn degrees(g: &SnapshotGraph, direction: Direction, weighting: RankWeighting) -> Vec<f64> {
    match weighting {
        RankWeighting::Activity => degree_vectors(g).get(direction, Weighting::Activity).values.clone(),
        RankWeighting::Unweighted => (0..g.node_count())
            .map(|v| match direction {
                Direction::In => g.in_neighbors(v).len() as f64,
                Direction::Out => g.out_neighbors(v).len() as f64,
            })
            .collect(),
    }
}

/// Local indices of the top `⌈p·|V|⌉` nodes, highest degree first, ties
/// to the lower address ID.
pub fn top_nodes(degree: &[f64], p: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..degree.len()).collect();
    // Local index order equals address order.
    order.sort_by(|&a, &b| degree[b].total_cmp(&degree[a]).then(a.cmp(&b)));
    order.truncate(top_count(p, degree.len()));
    order
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopShares {
    /// Share of all incoming edge weight received by the top in-degree set.
    pub in_share: Option<f64>,
    /// Share of all outgoing edge weight sent by the top out-degree set.
    pub out_share: Option<f64>,
}

pub fn top_percent_edge_share(g: &SnapshotGraph, p: f64, weighting: RankWeighting) -> Result<TopShares, MetricError> {
    check_fraction(p)?;
    if g.node_count() == 0 {
        return Err(MetricError::TooFewNodes { needed: 1, found: 0 });
    }
    let share = |direction| {
        let deg = degrees(g, direction, weighting);
        let total: f64 = deg.iter().sum();
        let top: f64 = top_nodes(&deg, p).iter().map(|&i| deg[i]).sum();
        (total > 0.0).then(|| top / total)
    };
    Ok(TopShares {
        in_share: share(Direction::In),
        out_share: share(Direction::Out),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopMembership {
    pub in_lscc: f64,
    pub in_lwcc: f64,
    pub out_lscc: f64,
    pub out_lwcc: f64,
}

/// Members of the largest component; for strong components a singleton is
/// not a strongly connected structure, so the result is empty when every
/// strong component has one node.
fn largest_members(p: &ComponentPartition) -> Option<u32> {
    let label = p.largest()?;
    match p.mode {
        ComponentMode::Strong if p.sizes[label as usize] < 2 => None,
        _ => Some(label),
    }
}

pub fn top_percent_component_membership_with(
    g: &SnapshotGraph,
    p: f64,
    weighting: RankWeighting,
    weak: &ComponentPartition,
    strong: &ComponentPartition,
) -> Result<TopMembership, MetricError> {
    check_fraction(p)?;
    if g.node_count() == 0 {
        return Err(MetricError::TooFewNodes { needed: 1, found: 0 });
    }
    let lwcc = largest_members(weak);
    let lscc = largest_members(strong);
    let fraction = |set: &[usize], part: &ComponentPartition, label: Option<u32>| match label {
        Some(l) => set.iter().filter(|&&i| part.labels[i] == l).count() as f64 / set.len() as f64,
        None => 0.0,
    };
    let top_in = top_nodes(&degrees(g, Direction::In, weighting), p);
    let top_out = top_nodes(&degrees(g, Direction::Out, weighting), p);
    Ok(TopMembership {
        in_lscc: fraction(&top_in, strong, lscc),
        in_lwcc: fraction(&top_in, weak, lwcc),
        out_lscc: fraction(&top_out, strong, lscc),
        out_lwcc: fraction(&top_out, weak, lwcc),
    })
}

pub fn top_percent_component_membership(
    g: &SnapshotGraph,
    p: f64,
    weighting: RankWeighting,
) -> Result<TopMembership, MetricError> {
    let weak = connected_components(g, ComponentMode::Weak);
    let strong = connected_components(g, ComponentMode::Strong);
    top_percent_component_membership_with(g, p, weighting, &weak, &strong)
}
