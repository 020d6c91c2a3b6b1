use rayon::prelude::*;

use crate::ingest::AddressId;
use crate::snapshot::YearSnapshot;

/// Compressed adjacency of a snapshot over dense local node indices.
///
/// Local index `i` corresponds to `nodes[i]`; nodes are sorted by address
/// ID, so index order and address order agree.
#[derive(Debug, Clone)]
pub struct SnapshotGraph {
    nodes: Vec<AddressId>,
    out_offsets: Vec<usize>,
    out_targets: Vec<u32>,
    out_w1: Vec<f64>,
    out_w2: Vec<u64>,
    in_offsets: Vec<usize>,
    in_sources: Vec<u32>,
    und_offsets: Vec<usize>,
    und_neighbors: Vec<u32>,
}

fn csr(n: usize, pairs: &mut [(u32, u32)]) -> (Vec<usize>, Vec<u32>) {
    pairs.par_sort_unstable();
    let mut offsets = vec![0usize; n + 1];
    for &(a, _) in pairs.iter() {
        offsets[a as usize + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    (offsets, pairs.iter().map(|&(_, b)| b).collect())
}

impl SnapshotGraph {
    pub fn new(s: &YearSnapshot) -> Self {
        let nodes = s.nodes();
        let n = nodes.len();
        let index = |a: AddressId| nodes.binary_search(&a).expect("edge endpoint is a node") as u32;

        // Edges are sorted by (src, dst), so the out-CSR follows directly.
        let mut out_offsets = vec![0usize; n + 1];
        let mut out_targets = Vec::with_capacity(s.edge_count());
        let mut out_w1 = Vec::with_capacity(s.edge_count());
        let mut out_w2 = Vec::with_capacity(s.edge_count());
        let mut in_pairs = Vec::with_capacity(s.edge_count());
        let mut und_pairs = Vec::with_capacity(2 * s.edge_count());
        for e in s.edges() {
            let (u, v) = (index(e.src), index(e.dst));
            out_offsets[u as usize + 1] += 1;
            out_targets.push(v);
            out_w1.push(e.w1.as_satoshi_f64());
            out_w2.push(e.w2);
            in_pairs.push((v, u));
            if u != v {
                und_pairs.push((u, v));
                und_pairs.push((v, u));
            }
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
        }
        let (in_offsets, in_sources) = csr(n, &mut in_pairs);
        und_pairs.par_sort_unstable();
        und_pairs.dedup();
        let (und_offsets, und_neighbors) = csr(n, &mut und_pairs);
        Self {
            nodes,
            out_offsets,
            out_targets,
            out_w1,
            out_w2,
            in_offsets,
            in_sources,
            und_offsets,
            und_neighbors,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[AddressId] {
        &self.nodes
    }

    pub fn directed_edge_count(&self) -> usize {
        self.out_targets.len()
    }

    pub fn out_neighbors(&self, v: usize) -> &[u32] {
        &self.out_targets[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    pub fn in_neighbors(&self, v: usize) -> &[u32] {
        &self.in_sources[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    /// Distinct neighbors ignoring direction, excluding `v` itself; sorted.
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.und_neighbors[self.und_offsets[v]..self.und_offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.und_offsets[v + 1] - self.und_offsets[v]
    }

    /// Number of edges of the undirected simplification.
    pub fn undirected_edge_count(&self) -> usize {
        self.und_neighbors.len() / 2
    }

    /// Iterates `(src, dst, w1 in satoshi, w2)` over directed edges.
    pub fn weighted_edges(&self) -> impl Iterator<Item = (usize, usize, f64, u64)> + '_ {
        (0..self.nodes.len()).flat_map(move |u| {
            (self.out_offsets[u]..self.out_offsets[u + 1])
                .map(move |k| (u, self.out_targets[k] as usize, self.out_w1[k], self.out_w2[k]))
        })
    }
}
