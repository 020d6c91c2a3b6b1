use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use super::graph::SnapshotGraph;
use super::MetricError;
use crate::rng::PortableRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssortativityVariant {
    /// Pearson correlation of endpoint degrees on the undirected
    /// simplification, each edge counted in both orientations.
    #[default]
    UndirectedTotal,
    /// Source out-degree against target in-degree over directed edges.
    DirectedOutIn,
}

/// Degree assortativity. `Ok(None)` when either degree margin has zero
/// variance.
pub fn degree_assortativity(g: &SnapshotGraph, variant: AssortativityVariant) -> Result<Option<f64>, MetricError> {
    match variant {
        AssortativityVariant::UndirectedTotal => undirected_assortativity(g),
        AssortativityVariant::DirectedOutIn => directed_assortativity(g),
    }
}

fn undirected_assortativity(g: &SnapshotGraph) -> Result<Option<f64>, MetricError> {
    let m = g.undirected_edge_count();
    if m < 2 {
        return Err(MetricError::TooFewEdges { needed: 2, found: m });
    }
    // Over the 2m oriented edge ends both margins are identical:
    // Σx = Σ_v d², Σx² = Σ_v d³, Σxy = Σ_v Σ_{u∈N(v)} d_v·d_u.
    let exact = || -> Option<(i128, i128)> {
        let (mut sx, mut sxx, mut sxy) = (0i128, 0i128, 0i128);
        for v in 0..g.node_count() {
            let d = g.degree(v) as i128;
            sx = sx.checked_add(d * d)?;
            sxx = sxx.checked_add(d.checked_mul(d * d)?)?;
            let nsum: i128 = g.neighbors(v).iter().map(|&u| g.degree(u as usize) as i128).sum();
            sxy = sxy.checked_add(d.checked_mul(nsum)?)?;
        }
        let ends = 2 * m as i128;
        let num = ends.checked_mul(sxy)?.checked_sub(sx.checked_mul(sx)?)?;
        let den = ends.checked_mul(sxx)?.checked_sub(sx.checked_mul(sx)?)?;
        Some((num, den))
    };
    if let Some((num, den)) = exact() {
        return Ok((den != 0).then(|| num as f64 / den as f64));
    }
    let ends = 2.0 * m as f64;
    let mean = (0..g.node_count()).map(|v| (g.degree(v) as f64).powi(2)).sum::<f64>() / ends;
    let (mut cov, mut var) = (0.0, 0.0);
    for v in 0..g.node_count() {
        let dv = g.degree(v) as f64 - mean;
        for &u in g.neighbors(v) {
            cov += dv * (g.degree(u as usize) as f64 - mean);
            var += dv * dv;
        }
    }
    Ok((var > 0.0).then(|| cov / var))
}

fn directed_assortativity(g: &SnapshotGraph) -> Result<Option<f64>, MetricError> {
    let pairs: Vec<(f64, f64)> = (0..g.node_count())
        .flat_map(|u| {
            g.out_neighbors(u)
                .iter()
                .filter(move |&&v| v as usize != u)
                .map(move |&v| (u, v as usize))
        })
        .map(|(u, v)| (g.out_neighbors(u).len() as f64, g.in_neighbors(v).len() as f64))
        .collect();
    if pairs.len() < 2 {
        return Err(MetricError::TooFewEdges {
            needed: 2,
            found: pairs.len(),
        });
    }
    Ok(pearson(&pairs))
}

pub(crate) fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LowDegreePolicy {
    /// Nodes with degree < 2 contribute a coefficient of 0.
    #[default]
    CountAsZero,
    /// Nodes with degree < 2 are left out of the average.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusteringSample {
    pub size: usize,
    pub seed: u64,
}

/// Triangles through each node of the undirected simplification.
pub fn triangles_per_node(g: &SnapshotGraph) -> Vec<u64> {
    let n = g.node_count();
    // Orient each edge from lower to higher (degree, index) rank.
    let rank_key = |v: usize| (g.degree(v), v);
    let forward: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|v| {
            g.neighbors(v)
                .iter()
                .copied()
                .filter(|&u| rank_key(u as usize) > rank_key(v))
                .collect()
        })
        .collect();
    let counts: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    (0..n).into_par_iter().for_each_init(
        || vec![u32::MAX; n],
        |mark, v| {
            let fv = &forward[v];
            if fv.len() < 2 {
                return;
            }
            for &u in fv {
                mark[u as usize] = v as u32;
            }
            for &u in fv {
                for &w in &forward[u as usize] {
                    if mark[w as usize] == v as u32 {
                        counts[v].fetch_add(1, Ordering::Relaxed);
                        counts[u as usize].fetch_add(1, Ordering::Relaxed);
                        counts[w as usize].fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
            for &u in fv {
                mark[u as usize] = u32::MAX;
            }
        },
    );
    counts.into_iter().map(AtomicU64::into_inner).collect()
}

fn local_coefficient(triangles: u64, degree: usize) -> Option<f64> {
    if degree < 2 {
        return None;
    }
    let pairs = degree as f64 * (degree as f64 - 1.0) / 2.0;
    Some(triangles as f64 / pairs)
}

fn triangles_through(g: &SnapshotGraph, v: usize, mark: &mut [bool]) -> u64 {
    let nv = g.neighbors(v);
    for &u in nv {
        mark[u as usize] = true;
    }
    let mut twice = 0u64;
    for &u in nv {
        twice += g.neighbors(u as usize).iter().filter(|&&w| mark[w as usize]).count() as u64;
    }
    for &u in nv {
        mark[u as usize] = false;
    }
    twice / 2
}

/// Mean local clustering coefficient on the undirected simplification.
///
/// Exact when `sample` is `None`; otherwise averaged over a uniform sample
/// of nodes drawn without replacement with the given seed. `Ok(None)` only
/// under [`LowDegreePolicy::Exclude`] when no node has degree ≥ 2.
pub fn average_local_clustering(
    g: &SnapshotGraph,
    sample: Option<ClusteringSample>,
    policy: LowDegreePolicy,
) -> Result<Option<f64>, MetricError> {
    let n = g.node_count();
    if n == 0 {
        return Err(MetricError::TooFewNodes { needed: 1, found: 0 });
    }
    let coefficients: Vec<Option<f64>> = match sample {
        Some(ClusteringSample { size, seed }) if size < n => {
            let mut picks = PortableRng::new(seed).sample_indices(n, size);
            picks.sort_unstable();
            picks
                .par_iter()
                .map_init(
                    || vec![false; n],
                    |mark, &v| local_coefficient(triangles_through(g, v, mark), g.degree(v)),
                )
                .collect()
        }
        _ => {
            let tri = triangles_per_node(g);
            (0..n).map(|v| local_coefficient(tri[v], g.degree(v))).collect()
        }
    };
    let (sum, count) = coefficients.iter().fold((0.0, 0usize), |(s, c), x| match (x, policy) {
        (Some(x), _) => (s + x, c + 1),
        (None, LowDegreePolicy::CountAsZero) => (s, c + 1),
        (None, LowDegreePolicy::Exclude) => (s, c),
    });
    Ok((count > 0).then(|| sum / count as f64))
}
