mod common;

use std::collections::BTreeMap;
use std::io::Cursor;

use chrono::{DateTime, Datelike, TimeZone, Utc};
use proptest::prelude::*;
use txnet_core::flow::FlowEdge;
use txnet_core::ingest::AddressId;
use txnet_core::metrics::density;
use txnet_core::money::Quanta;
use txnet_core::rng::PortableRng;
use txnet_core::snapshot::{
    apply_dust_filter, build_snapshot, build_snapshot_partitioned, filter_coverage, SnapshotPolicy, YearSnapshot,
};

fn ts(year: i32, second_of_year: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::seconds(second_of_year)
}

fn random_flows(rng: &mut PortableRng, n: usize, nodes: u64, years: &[i32]) -> Vec<FlowEdge> {
    (0..n)
        .map(|_| FlowEdge {
            src: AddressId(rng.below(nodes) as u32),
            dst: AddressId(rng.below(nodes) as u32),
            value: Quanta(rng.between(1, 10_000_000_000) as i128),
            timestamp: ts(
                years[rng.below(years.len() as u64) as usize],
                rng.below(365 * 86_400) as i64,
            ),
        })
        .collect()
}

/// Brute-force grouping: `(src, dst) → (Σ value, count)`.
fn regroup<'a>(flows: impl Iterator<Item = &'a FlowEdge>, keep_loops: bool) -> BTreeMap<(u32, u32), (i128, u64)> {
    let mut m = BTreeMap::new();
    for f in flows {
        if f.src == f.dst && !keep_loops {
            continue;
        }
        let e = m.entry((f.src.0, f.dst.0)).or_insert((0, 0));
        e.0 += f.value.0;
        e.1 += 1;
    }
    m
}

fn as_map(s: &YearSnapshot) -> BTreeMap<(u32, u32), (i128, u64)> {
    s.edges().iter().map(|e| ((e.src.0, e.dst.0), (e.w1.0, e.w2))).collect()
}

#[test]
fn merges_parallel_flows_and_strips_loops() {
    let f = |s, d, v| FlowEdge {
        src: AddressId(s),
        dst: AddressId(d),
        value: Quanta(v),
        timestamp: ts(2014, 10),
    };
    let flows = [f(0, 1, 10), f(0, 1, 20), f(2, 2, 5)];
    let s = build_snapshot(&flows, 2014, SnapshotPolicy::default()).unwrap();
    assert_eq!(as_map(&s), BTreeMap::from([((0, 1), (30, 2))]));
    let kept = build_snapshot(&flows, 2014, SnapshotPolicy { keep_self_loops: true }).unwrap();
    assert_eq!(kept.edge_count(), 2);
}

#[test]
fn two_year_split_matches_reaggregation() {
    let mut rng = PortableRng::new(21);
    let flows = random_flows(&mut rng, 1000, 60, &[2013, 2014]);
    for year in [2013, 2014] {
        let in_year: Vec<&FlowEdge> = flows.iter().filter(|f| f.timestamp.year() == year).collect();
        let policy = SnapshotPolicy { keep_self_loops: true };
        let s = build_snapshot(in_year.iter().copied(), year, policy).unwrap();
        assert_eq!(as_map(&s), regroup(in_year.iter().copied(), true));
        let volume: i128 = in_year.iter().map(|f| f.value.0).sum();
        assert_eq!(s.total_value(), Quanta(volume));
        assert_eq!(s.total_activity(), in_year.len() as u64);
    }
    assert!(build_snapshot(&flows, 2013, SnapshotPolicy::default()).is_err());
}

#[test]
fn year_boundaries_are_utc() {
    let last = Utc.with_ymd_and_hms(2012, 12, 31, 23, 59, 59).unwrap();
    let first = Utc.with_ymd_and_hms(2013, 1, 1, 0, 0, 0).unwrap();
    let f = |t| FlowEdge {
        src: AddressId(0),
        dst: AddressId(1),
        value: Quanta(1),
        timestamp: t,
    };
    assert!(build_snapshot(&[f(last)], 2012, SnapshotPolicy::default()).is_ok());
    assert!(build_snapshot(&[f(first)], 2012, SnapshotPolicy::default()).is_err());
    assert!(build_snapshot(&[f(first)], 2013, SnapshotPolicy::default()).is_ok());
}

#[test]
fn dust_mass_sets_volume_share() {
    // 90 units of volume on non-dust edges, 10 on dust edges.
    let threshold = Quanta(1000);
    let mut flows = Vec::new();
    let f = |s, d, v| FlowEdge {
        src: AddressId(s),
        dst: AddressId(d),
        value: Quanta(v),
        timestamp: ts(2015, 0),
    };
    for i in 0..9 {
        flows.push(f(i, i + 1, 90_000));
    }
    for i in 0..100 {
        flows.push(f(100 + i, 300 + i, 900));
    }
    let raw = build_snapshot(&flows, 2015, SnapshotPolicy::default()).unwrap();
    let filtered = apply_dust_filter(&raw, threshold).unwrap();
    let cov = filter_coverage(&raw, &filtered).unwrap();
    assert!((cov.volume_share - 0.9).abs() < 1e-12);
    assert!((cov.node_share - 10.0 / 210.0).abs() < 1e-12);

    let same = filter_coverage(&raw, &raw).unwrap();
    assert_eq!((same.volume_share, same.node_share), (1.0, 1.0));
    let unchanged = apply_dust_filter(&raw, Quanta(0)).unwrap();
    assert_eq!(unchanged.edges(), raw.edges());
    assert!(apply_dust_filter(&filtered, threshold).is_err());
    let empty = YearSnapshot::empty(2015, SnapshotPolicy::default());
    assert!(filter_coverage(&empty, &empty).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_is_order_independent(seed in any::<u64>(), n in 1usize..400) {
        let mut rng = PortableRng::new(seed);
        let flows = random_flows(&mut rng, n, 25, &[2017]);
        let a = build_snapshot(&flows, 2017, SnapshotPolicy::default()).unwrap();
        let mut shuffled = flows.clone();
        let order = rng.sample_indices(n, n);
        for (i, j) in order.into_iter().enumerate() {
            shuffled[i] = flows[j];
        }
        let b = build_snapshot(&shuffled, 2017, SnapshotPolicy::default()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(as_map(&a), regroup(flows.iter(), false));
        let d = density(&a);
        if a.node_count() >= 2 {
            let d = d.unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn spilled_aggregation_matches_in_memory(seed in any::<u64>(), n in 1usize..600, parts in 1usize..9, buf in 1usize..50) {
        let mut rng = PortableRng::new(seed);
        let flows = random_flows(&mut rng, n, 40, &[2018]);
        let dir = tempfile::tempdir().unwrap();
        let policy = SnapshotPolicy { keep_self_loops: true };
        let a = build_snapshot(&flows, 2018, policy).unwrap();
        let b = build_snapshot_partitioned(&flows, 2018, policy, dir.path(), parts, buf).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn serialization_round_trips(seed in any::<u64>(), threshold in 0i128..5_000_000_000) {
        let mut rng = PortableRng::new(seed);
        let raw = common::random_snapshot(&mut rng, 30, 0.1, 2019);
        let filtered = apply_dust_filter(&raw, Quanta(threshold)).unwrap();
        prop_assert!(filtered.edges().iter().all(|e| e.w1 > Quanta(threshold)));
        for s in [&raw, &filtered] {
            let mut bytes = Vec::new();
            s.write_to(&mut bytes).unwrap();
            let back = YearSnapshot::read_from(Cursor::new(&bytes)).unwrap();
            prop_assert_eq!(&back, s);
            let mut again = Vec::new();
            back.write_to(&mut again).unwrap();
            prop_assert_eq!(again, bytes);
        }
    }
}
