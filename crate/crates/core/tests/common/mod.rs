//! Independent reference implementations shared by the integration tests.
//! They favour obviousness over speed and use none of the library's
//! algorithms.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::{TimeZone, Utc};
use num_bigint::BigInt;
use num_rational::BigRational;
use txnet_core::flow::TransactionGroup;
use txnet_core::ingest::AddressId;
use txnet_core::money::Quanta;
use txnet_core::rng::PortableRng;
use txnet_core::snapshot::{AggregatedEdge, SnapshotPolicy, YearSnapshot};

/// Random digraph on `n` potential nodes with independent edge probability
/// `p`, as a year snapshot (isolated nodes vanish, as in real snapshots).
pub fn random_snapshot(rng: &mut PortableRng, n: u32, p: f64, year: i32) -> YearSnapshot {
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && rng.chance(p) {
                edges.push(AggregatedEdge {
                    src: AddressId(s),
                    dst: AddressId(d),
                    w1: Quanta(rng.between(1, 1_000_000_000) as i128),
                    w2: rng.between(1, 20),
                });
            }
        }
    }
    YearSnapshot::from_edges(year, edges, SnapshotPolicy::default())
}

/// Local index of each node: position among the sorted node IDs.
pub fn local_edges(s: &YearSnapshot) -> (usize, Vec<(usize, usize)>) {
    let nodes = s.nodes();
    let index: BTreeMap<AddressId, usize> = nodes.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let edges = s.edges().iter().map(|e| (index[&e.src], index[&e.dst])).collect();
    (nodes.len(), edges)
}

/// `Σᵢ Σⱼ |xᵢ − xⱼ| / (2 n² mean)`.
pub fn pairwise_gini(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut diff = 0.0;
    for a in values {
        for b in values {
            diff += (a - b).abs();
        }
    }
    diff / (2.0 * n * n * mean)
}

/// Relabels so components are numbered by their lowest member.
pub fn canonical(labels: &[usize]) -> Vec<u32> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len() as u32;
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

fn reach(n: usize, adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen
}

/// Weak components by depth-first search over the undirected view.
pub fn wcc_oracle(n: usize, edges: &[(usize, usize)]) -> Vec<u32> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut label = vec![usize::MAX; n];
    for v in 0..n {
        if label[v] == usize::MAX {
            for (u, r) in reach(n, &adj, v).into_iter().enumerate() {
                if r {
                    label[u] = v;
                }
            }
        }
    }
    canonical(&label)
}

/// Strong components as classes of mutual reachability.
pub fn scc_oracle(n: usize, edges: &[(usize, usize)]) -> Vec<u32> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
    }
    let reachable: Vec<Vec<bool>> = (0..n).map(|v| reach(n, &adj, v)).collect();
    let label: Vec<usize> = (0..n)
        .map(|v| {
            (0..n)
                .find(|&u| reachable[v][u] && reachable[u][v])
                .expect("v reaches itself")
        })
        .collect();
    canonical(&label)
}

/// Undirected simple adjacency sets without self-loops.
pub fn simple_adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    adj
}

/// Textbook Pearson correlation; `None` when either side is constant.
pub fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Degree pairs at both ends of every undirected edge, in both orientations.
pub fn endpoint_degree_pairs(adj: &[BTreeSet<usize>]) -> Vec<(f64, f64)> {
    let mut pairs = Vec::new();
    for (v, ns) in adj.iter().enumerate() {
        for &u in ns {
            pairs.push((adj[v].len() as f64, adj[u].len() as f64));
        }
    }
    pairs
}

/// Mean local clustering by enumerating every neighbour pair; nodes of
/// degree below two contribute zero.
pub fn triad_clustering(adj: &[BTreeSet<usize>]) -> f64 {
    let mut total = 0.0;
    for ns in adj {
        let k = ns.len();
        if k < 2 {
            continue;
        }
        let ns: Vec<usize> = ns.iter().copied().collect();
        let mut closed = 0usize;
        for i in 0..k {
            for j in i + 1..k {
                if adj[ns[i]].contains(&ns[j]) {
                    closed += 1;
                }
            }
        }
        total += closed as f64 / (k * (k - 1) / 2) as f64;
    }
    total / adj.len() as f64
}

/// Random transaction with `1..=max_in` inputs and `1..=max_out` outputs
/// on distinct addresses, paying a random fee.
pub fn random_transaction(rng: &mut PortableRng, max_in: u64, max_out: u64) -> TransactionGroup {
    let n_in = rng.between(1, max_in) as usize;
    let n_out = rng.between(1, max_out) as usize;
    let ids = rng.sample_indices(1000, n_in + n_out);
    let mut inputs: Vec<(AddressId, Quanta)> = ids[..n_in]
        .iter()
        .map(|&a| (AddressId(a as u32), Quanta(rng.between(1, 5_000_000_000_000) as i128)))
        .collect();
    let t_in: i128 = inputs.iter().map(|(_, v)| v.0).sum();
    let fee = rng.below((t_in / 10) as u64 + 1) as i128;
    let t_out = t_in - fee;
    // Split t_out at random cut points.
    let mut cuts: Vec<i128> = (0..n_out - 1).map(|_| rng.below(t_out as u64 + 1) as i128).collect();
    cuts.push(0);
    cuts.push(t_out);
    cuts.sort_unstable();
    let mut outputs: Vec<(AddressId, Quanta)> = ids[n_in..]
        .iter()
        .zip(cuts.windows(2))
        .map(|(&a, w)| (AddressId(a as u32), Quanta(w[1] - w[0])))
        .collect();
    inputs.sort();
    outputs.sort();
    TransactionGroup {
        block_number: 1,
        tx_id: "t".into(),
        timestamp: Utc.with_ymd_and_hms(2012, 6, 1, 0, 0, 0).unwrap(),
        coinbase: false,
        inputs,
        outputs,
    }
}

/// Exact `v_in(i)·v_out(j)/t_in` for every input/output pair.
pub fn rational_flows(tx: &TransactionGroup) -> BTreeMap<(AddressId, AddressId), BigRational> {
    let t_in: BigInt = tx.inputs.iter().map(|(_, v)| BigInt::from(v.0)).sum();
    let mut out = BTreeMap::new();
    for (i, vi) in &tx.inputs {
        for (j, vj) in &tx.outputs {
            let exact = BigRational::new(BigInt::from(vi.0) * BigInt::from(vj.0), t_in.clone());
            out.insert((*i, *j), exact);
        }
    }
    out
}
