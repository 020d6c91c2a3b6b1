//! Yearly dual-weighted snapshots.
//!
//! Parallel same-direction flows within a calendar year (UTC) collapse into
//! one edge with `w1` = summed value and `w2` = number of flows. Self-loops
//! are kept by the accumulators and stripped when a [`YearSnapshot`] is cut
//! according to its [`SnapshotPolicy`]. The dust filter keeps only edges
//! with `w1` strictly above the threshold.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Utc};
use rayon::prelude::*;
use thiserror::Error;

use crate::flow::FlowEdge;
use crate::ingest::AddressId;
use crate::money::Quanta;

pub fn year_of(ts: &DateTime<Utc>) -> i32 {
    ts.year()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregatedEdge {
    pub src: AddressId,
    pub dst: AddressId,
    pub w1: Quanta,
    pub w2: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SnapshotPolicy {
    pub keep_self_loops: bool,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("flow at {ts} lies outside year {year}")]
    OutsideYear { year: i32, ts: DateTime<Utc> },
    #[error("snapshot for {0} is already filtered")]
    AlreadyFiltered(i32),
    #[error("raw snapshot is empty; coverage undefined")]
    EmptyRaw,
    #[error("snapshots belong to different years ({0} vs {1})")]
    YearMismatch(i32, i32),
    #[error("malformed snapshot file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// An immutable, sorted edge set for one year.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YearSnapshot {
    pub year: i32,
    edges: Vec<AggregatedEdge>,
    node_count: usize,
    pub filtered: bool,
    pub threshold: Quanta,
    pub policy: SnapshotPolicy,
}

fn count_nodes(edges: &[AggregatedEdge]) -> usize {
    let mut ids: Vec<u32> = edges.iter().flat_map(|e| [e.src.0, e.dst.0]).collect();
    ids.par_sort_unstable();
    ids.dedup();
    ids.len()
}

impl YearSnapshot {
    /// Cuts a snapshot from a year's complete (self-loop-inclusive) edges.
    pub fn from_edges(year: i32, mut edges: Vec<AggregatedEdge>, policy: SnapshotPolicy) -> Self {
        if !policy.keep_self_loops {
            edges.retain(|e| e.src != e.dst);
        }
        if !edges.windows(2).all(|w| (w[0].src, w[0].dst) < (w[1].src, w[1].dst)) {
            edges.par_sort_unstable_by_key(|e| (e.src, e.dst));
        }
        let node_count = count_nodes(&edges);
        Self {
            year,
            edges,
            node_count,
            filtered: false,
            threshold: Quanta::ZERO,
            policy,
        }
    }

    pub fn empty(year: i32, policy: SnapshotPolicy) -> Self {
        Self::from_edges(year, Vec::new(), policy)
    }

    /// Edges sorted by `(src, dst)`.
    pub fn edges(&self) -> &[AggregatedEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn total_value(&self) -> Quanta {
        self.edges.iter().map(|e| e.w1).sum()
    }

    pub fn total_activity(&self) -> u64 {
        self.edges.iter().map(|e| e.w2).sum()
    }

    /// Sorted, deduplicated node IDs.
    pub fn nodes(&self) -> Vec<AddressId> {
        let mut ids: Vec<AddressId> = self.edges.iter().flat_map(|e| [e.src, e.dst]).collect();
        ids.par_sort_unstable();
        ids.dedup();
        ids
    }

    pub fn write_to<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(
            out,
            "# year={}\tthreshold={}\tfiltered={}\tself_loops={}",
            self.year,
            self.threshold,
            self.filtered,
            if self.policy.keep_self_loops {
                "kept"
            } else {
                "stripped"
            }
        )?;
        writeln!(out, "src\tdst\tw1\tw2")?;
        for e in &self.edges {
            writeln!(out, "{}\t{}\t{}\t{}", e.src, e.dst, e.w1, e.w2)?;
        }
        out.flush()
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, SnapshotError> {
        let mut lines = input.lines();
        let bad = |line: usize, reason: &str| SnapshotError::Malformed {
            line,
            reason: reason.to_string(),
        };
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))??;
        let header = header.strip_prefix("# ").ok_or_else(|| bad(1, "missing '# ' prefix"))?;
        let mut year = None;
        let mut threshold = None;
        let mut filtered = None;
        let mut keep = None;
        for field in header.split('\t') {
            let (k, v) = field.split_once('=').ok_or_else(|| bad(1, "expected key=value"))?;
            match k {
                "year" => year = v.parse().ok(),
                "threshold" => threshold = v.parse().ok().map(Quanta),
                "filtered" => filtered = v.parse().ok(),
                "self_loops" => keep = Some(v == "kept"),
                _ => return Err(bad(1, "unknown header key")),
            }
        }
        let (Some(year), Some(threshold), Some(filtered), Some(keep_self_loops)) = (year, threshold, filtered, keep)
        else {
            return Err(bad(1, "incomplete header"));
        };
        match lines.next() {
            Some(Ok(cols)) if cols == "src\tdst\tw1\tw2" => {}
            _ => return Err(bad(2, "expected column header")),
        }
        let mut edges = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let lineno = idx + 3;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(lineno, "expected 4 fields"));
            }
            let parse_err = || bad(lineno, "non-integer field");
            edges.push(AggregatedEdge {
                src: AddressId(f[0].parse().map_err(|_| parse_err())?),
                dst: AddressId(f[1].parse().map_err(|_| parse_err())?),
                w1: Quanta(f[2].parse().map_err(|_| parse_err())?),
                w2: f[3].parse().map_err(|_| parse_err())?,
            });
        }
        let policy = SnapshotPolicy { keep_self_loops };
        let mut s = Self::from_edges(year, edges, policy);
        s.filtered = filtered;
        s.threshold = threshold;
        Ok(s)
    }
}

/// Removes every edge whose `w1` is at or below `threshold`.
pub fn apply_dust_filter(s: &YearSnapshot, threshold: Quanta) -> Result<YearSnapshot, SnapshotError> {
    if s.filtered {
        return Err(SnapshotError::AlreadyFiltered(s.year));
    }
    let edges: Vec<AggregatedEdge> = s.edges.iter().filter(|e| e.w1 > threshold).copied().collect();
    let mut out = YearSnapshot::from_edges(s.year, edges, s.policy);
    out.filtered = true;
    out.threshold = threshold;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub volume_share: f64,
    pub node_share: f64,
}

pub fn filter_coverage(raw: &YearSnapshot, filtered: &YearSnapshot) -> Result<Coverage, SnapshotError> {
    if raw.year != filtered.year {
        return Err(SnapshotError::YearMismatch(raw.year, filtered.year));
    }
    let raw_volume = raw.total_value();
    if raw.node_count == 0 || raw_volume.0 == 0 {
        return Err(SnapshotError::EmptyRaw);
    }
    Ok(Coverage {
        volume_share: filtered.total_value().0 as f64 / raw_volume.0 as f64,
        node_share: filtered.node_count as f64 / raw.node_count as f64,
    })
}

fn finish_map(map: HashMap<(AddressId, AddressId), (i128, u64)>) -> Vec<AggregatedEdge> {
    let mut edges: Vec<AggregatedEdge> = map
        .into_iter()
        .map(|((src, dst), (w1, w2))| AggregatedEdge {
            src,
            dst,
            w1: Quanta(w1),
            w2,
        })
        .collect();
    edges.par_sort_unstable_by_key(|e| (e.src, e.dst));
    edges
}

/// In-memory per-year edge accumulator.
#[derive(Debug, Default)]
pub struct EdgeAccumulator {
    map: HashMap<(AddressId, AddressId), (i128, u64)>,
}

impl EdgeAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, src: AddressId, dst: AddressId, value: Quanta) {
        let slot = self.map.entry((src, dst)).or_insert((0, 0));
        slot.0 += value.0;
        slot.1 += 1;
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// All aggregated edges, self-loops included, sorted by `(src, dst)`.
    pub fn finish(self) -> Vec<AggregatedEdge> {
        finish_map(self.map)
    }
}

const SPILL_RECORD: usize = 4 + 4 + 16;

fn partition_of(src: AddressId, dst: AddressId, partitions: usize) -> usize {
    let key = ((src.0 as u64) << 32) | dst.0 as u64;
    // Fibonacci hashing; fixed so that partition layout is reproducible.
    let h = key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ((h >> 32) as usize) % partitions
}

/// Out-of-core accumulator: raw flows are hash-partitioned by `(src, dst)`
/// into spill files and each partition is aggregated independently.
#[derive(Debug)]
pub struct SpillingAccumulator {
    dir: PathBuf,
    buffers: Vec<Vec<(AddressId, AddressId, i128)>>,
    files: Vec<Option<BufWriter<File>>>,
    buffer_limit: usize,
}

impl SpillingAccumulator {
    /// `dir` must exist; spill files are created inside it and removed by
    /// [`finish`](Self::finish).
    pub fn new(dir: impl Into<PathBuf>, partitions: usize, buffer_limit: usize) -> Self {
        let partitions = partitions.max(1);
        Self {
            dir: dir.into(),
            buffers: (0..partitions).map(|_| Vec::new()).collect(),
            files: (0..partitions).map(|_| None).collect(),
            buffer_limit: buffer_limit.max(1),
        }
    }

    fn spill_path(&self, p: usize) -> PathBuf {
        self.dir.join(format!("part-{p:05}.bin"))
    }

    pub fn add(&mut self, src: AddressId, dst: AddressId, value: Quanta) -> io::Result<()> {
        let p = partition_of(src, dst, self.buffers.len());
        self.buffers[p].push((src, dst, value.0));
        if self.buffers[p].len() >= self.buffer_limit {
            self.spill(p)?;
        }
        Ok(())
    }

    fn spill(&mut self, p: usize) -> io::Result<()> {
        if self.files[p].is_none() {
            self.files[p] = Some(BufWriter::new(File::create(self.spill_path(p))?));
        }
        let out = self.files[p].as_mut().expect("opened above");
        for (src, dst, v) in self.buffers[p].drain(..) {
            out.write_all(&src.0.to_le_bytes())?;
            out.write_all(&dst.0.to_le_bytes())?;
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<Vec<AggregatedEdge>> {
        let mut spilled = Vec::with_capacity(self.files.len());
        for (p, f) in self.files.iter_mut().enumerate() {
            match f.take() {
                Some(mut w) => {
                    w.flush()?;
                    spilled.push(Some(self.dir.join(format!("part-{p:05}.bin"))));
                }
                None => spilled.push(None),
            }
        }
        let buffers = std::mem::take(&mut self.buffers);
        let parts: Vec<io::Result<Vec<AggregatedEdge>>> = buffers
            .into_par_iter()
            .zip(spilled.into_par_iter())
            .map(|(buffer, path)| {
                let mut map: HashMap<(AddressId, AddressId), (i128, u64)> = HashMap::new();
                let mut add = |s: AddressId, d: AddressId, v: i128| {
                    let slot = map.entry((s, d)).or_insert((0, 0));
                    slot.0 += v;
                    slot.1 += 1;
                };
                if let Some(path) = path {
                    let mut r = BufReader::new(File::open(&path)?);
                    let mut rec = [0u8; SPILL_RECORD];
                    loop {
                        match r.read_exact(&mut rec) {
                            Ok(()) => {}
                            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
                            Err(e) => return Err(e),
                        }
                        let s = u32::from_le_bytes(rec[0..4].try_into().expect("4 bytes"));
                        let d = u32::from_le_bytes(rec[4..8].try_into().expect("4 bytes"));
                        let v = i128::from_le_bytes(rec[8..24].try_into().expect("16 bytes"));
                        add(AddressId(s), AddressId(d), v);
                    }
                    fs::remove_file(&path)?;
                }
                for (s, d, v) in buffer {
                    add(s, d, v);
                }
                Ok(finish_map(map))
            })
            .collect();
        let mut edges = Vec::new();
        for part in parts {
            edges.extend(part?);
        }
        edges.par_sort_unstable_by_key(|e| (e.src, e.dst));
        Ok(edges)
    }
}

/// Aggregates one year's flows in memory.
pub fn build_snapshot<'a, I>(flows: I, year: i32, policy: SnapshotPolicy) -> Result<YearSnapshot, SnapshotError>
where
    I: IntoIterator<Item = &'a FlowEdge>,
{
    let mut acc = EdgeAccumulator::new();
    for f in flows {
        if year_of(&f.timestamp) != year {
            return Err(SnapshotError::OutsideYear { year, ts: f.timestamp });
        }
        acc.add(f.src, f.dst, f.value);
    }
    Ok(YearSnapshot::from_edges(year, acc.finish(), policy))
}

/// Same result as [`build_snapshot`], aggregating through spill files.
pub fn build_snapshot_partitioned<'a, I>(
    flows: I,
    year: i32,
    policy: SnapshotPolicy,
    spill_dir: &Path,
    partitions: usize,
    buffer_limit: usize,
) -> Result<YearSnapshot, SnapshotError>
where
    I: IntoIterator<Item = &'a FlowEdge>,
{
    let mut acc = SpillingAccumulator::new(spill_dir, partitions, buffer_limit);
    for f in flows {
        if year_of(&f.timestamp) != year {
            return Err(SnapshotError::OutsideYear { year, ts: f.timestamp });
        }
        acc.add(f.src, f.dst, f.value)?;
    }
    Ok(YearSnapshot::from_edges(year, acc.finish()?, policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn flow(src: u32, dst: u32, v: i128, year: i32) -> FlowEdge {
        FlowEdge {
            src: AddressId(src),
            dst: AddressId(dst),
            value: Quanta(v),
            timestamp: Utc.with_ymd_and_hms(year, 6, 1, 0, 0, 0).unwrap(),
        }
    }

    fn edge(src: u32, dst: u32, w1: i128, w2: u64) -> AggregatedEdge {
        AggregatedEdge {
            src: AddressId(src),
            dst: AddressId(dst),
            w1: Quanta(w1),
            w2,
        }
    }

    #[test]
    fn parallel_flows_merge() {
        let flows = [flow(1, 2, 10, 2012), flow(1, 2, 20, 2012)];
        let s = build_snapshot(&flows, 2012, SnapshotPolicy::default()).unwrap();
        assert_eq!(s.edges(), &[edge(1, 2, 30, 2)]);
        assert_eq!(s.node_count(), 2);
    }

    #[test]
    fn self_loops_stripped_by_default() {
        let flows = [flow(1, 1, 5, 2012)];
        let s = build_snapshot(&flows, 2012, SnapshotPolicy::default()).unwrap();
        assert_eq!(s.edge_count(), 0);
        assert_eq!(s.node_count(), 0);
        let kept = build_snapshot(&flows, 2012, SnapshotPolicy { keep_self_loops: true }).unwrap();
        assert_eq!(kept.edge_count(), 1);
    }

    #[test]
    fn rejects_foreign_year() {
        let flows = [flow(1, 2, 5, 2013)];
        assert!(matches!(
            build_snapshot(&flows, 2012, SnapshotPolicy::default()),
            Err(SnapshotError::OutsideYear { .. })
        ));
    }

    #[test]
    fn year_boundaries_are_utc() {
        let last = Utc.with_ymd_and_hms(2012, 12, 31, 23, 59, 59).unwrap();
        let first = Utc.with_ymd_and_hms(2013, 1, 1, 0, 0, 0).unwrap();
        assert_eq!(year_of(&last), 2012);
        assert_eq!(year_of(&first), 2013);
    }

    #[test]
    fn dust_boundary_is_strict() {
        let t = crate::money::DEFAULT_DUST_THRESHOLD;
        let raw = YearSnapshot::from_edges(
            2013,
            vec![edge(1, 2, t.0, 1), edge(3, 4, t.0 + 1, 1)],
            SnapshotPolicy::default(),
        );
        let f = apply_dust_filter(&raw, t).unwrap();
        assert_eq!(f.edges(), &[edge(3, 4, t.0 + 1, 1)]);
        assert_eq!(f.node_count(), 2);
        assert!(f.filtered);
        assert!(matches!(
            apply_dust_filter(&f, t),
            Err(SnapshotError::AlreadyFiltered(2013))
        ));
        let none = apply_dust_filter(&raw, Quanta::ZERO).unwrap();
        assert_eq!(none.edges(), raw.edges());
    }

    #[test]
    fn coverage_identity_and_empty() {
        let raw = YearSnapshot::from_edges(2010, vec![edge(1, 2, 50, 1)], SnapshotPolicy::default());
        let c = filter_coverage(&raw, &raw).unwrap();
        assert_eq!((c.volume_share, c.node_share), (1.0, 1.0));
        let empty = YearSnapshot::empty(2010, SnapshotPolicy::default());
        assert!(matches!(filter_coverage(&empty, &empty), Err(SnapshotError::EmptyRaw)));
    }

    #[test]
    fn serialization_round_trip() {
        let mut s = YearSnapshot::from_edges(
            2011,
            vec![edge(5, 1, 7, 2), edge(1, 5, 3, 1)],
            SnapshotPolicy::default(),
        );
        s = apply_dust_filter(&s, Quanta(2)).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "# year=2011\tthreshold=2\tfiltered=true\tself_loops=stripped\nsrc\tdst\tw1\tw2\n1\t5\t3\t1\n5\t1\t7\t2\n"
        );
        let back = YearSnapshot::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn spilling_matches_in_memory() {
        let dir = tempfile::tempdir().unwrap();
        let flows: Vec<FlowEdge> = (0..5000u32)
            .map(|i| flow(i % 37, (i * 7) % 41, (i as i128 % 13) + 1, 2015))
            .collect();
        let a = build_snapshot(&flows, 2015, SnapshotPolicy::default()).unwrap();
        let b = build_snapshot_partitioned(&flows, 2015, SnapshotPolicy::default(), dir.path(), 7, 50).unwrap();
        assert_eq!(a, b);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
