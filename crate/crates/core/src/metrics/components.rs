use super::graph::SnapshotGraph;
use super::stats::gini;
use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComponentMode {
    Weak,
    Strong,
}

/// Component labels per local node index. Labels are canonical: components
/// are numbered in order of their lowest node index, so two partitions of
/// the same node set are equal iff they group nodes identically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentPartition {
    pub mode: ComponentMode,
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

impl ComponentPartition {
    fn canonical(mode: ComponentMode, raw: &[u32]) -> Self {
        let mut remap = vec![u32::MAX; raw.len()];
        let mut labels = Vec::with_capacity(raw.len());
        let mut sizes = Vec::new();
        for &r in raw {
            let slot = &mut remap[r as usize];
            if *slot == u32::MAX {
                *slot = sizes.len() as u32;
                sizes.push(0);
            }
            sizes[*slot as usize] += 1;
            labels.push(*slot);
        }
        Self { mode, labels, sizes }
    }

    pub fn component_count(&self) -> usize {
        self.sizes.len()
    }

    /// Label of the largest component (lowest label on ties).
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(usize, u32)> = None;
        for (label, &size) in self.sizes.iter().enumerate() {
            if best.is_none_or(|(s, _)| size > s) {
                best = Some((size, label as u32));
            }
        }
        best.map(|(_, l)| l)
    }

    pub fn largest_size(&self) -> usize {
        self.largest().map_or(0, |l| self.sizes[l as usize])
    }

    pub fn members(&self, label: u32) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == label)
            .map(|(i, _)| i)
    }
}

struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

fn weak_components(g: &SnapshotGraph) -> Vec<u32> {
    let n = g.node_count();
    let mut ds = DisjointSet::new(n);
    for u in 0..n {
        for &v in g.out_neighbors(u) {
            ds.union(u as u32, v);
        }
    }
    (0..n as u32).map(|v| ds.find(v)).collect()
}

const UNVISITED: u32 = u32::MAX;

/// Tarjan's algorithm driven by an explicit call stack.
fn strong_components(g: &SnapshotGraph) -> Vec<u32> {
    let n = g.node_count();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNVISITED; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut calls: Vec<(u32, usize)> = Vec::new();
    let mut counter = 0u32;
    let mut next_comp = 0u32;

    for root in 0..n as u32 {
        if index[root as usize] != UNVISITED {
            continue;
        }
        index[root as usize] = counter;
        low[root as usize] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        calls.push((root, 0));

        while let Some(frame) = calls.last_mut() {
            let v = frame.0 as usize;
            let succ = g.out_neighbors(v);
            if frame.1 < succ.len() {
                let w = succ[frame.1] as usize;
                frame.1 += 1;
                if index[w] == UNVISITED {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w as u32);
                    on_stack[w] = true;
                    calls.push((w as u32, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            calls.pop();
            if let Some(parent) = calls.last() {
                let p = parent.0 as usize;
                low[p] = low[p].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("v is on the stack") as usize;
                    on_stack[w] = false;
                    comp[w] = next_comp;
                    if w == v {
                        break;
                    }
                }
                next_comp += 1;
            }
        }
    }
    comp
}

pub fn connected_components(g: &SnapshotGraph, mode: ComponentMode) -> ComponentPartition {
    let raw = match mode {
        ComponentMode::Weak => weak_components(g),
        ComponentMode::Strong => strong_components(g),
    };
    ComponentPartition::canonical(mode, &raw)
}

/// Checks that every strong component lies inside one weak component.
pub fn strong_refines_weak(strong: &ComponentPartition, weak: &ComponentPartition) -> bool {
    let mut owner = vec![u32::MAX; strong.sizes.len()];
    strong.labels.iter().zip(&weak.labels).all(|(&s, &w)| {
        let slot = &mut owner[s as usize];
        if *slot == u32::MAX {
            *slot = w;
        }
        *slot == w
    })
}

pub fn component_size_gini(p: &ComponentPartition) -> Result<f64, MetricError> {
    let sizes: Vec<f64> = p.sizes.iter().map(|&s| s as f64).collect();
    gini(&sizes)
}
