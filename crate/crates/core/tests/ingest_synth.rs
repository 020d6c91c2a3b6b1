use std::collections::HashMap;
use std::io::{BufReader, Cursor, Write};

use flate2::write::GzEncoder;
use flate2::Compression;
use txnet_core::ingest::{
    header_line, open_input, AddressDictionary, AddressId, Delimiter, ReadError, RecordReader, TransactionRecord,
    FEE_SINK_KEY,
};
use txnet_core::metrics::{
    degree_vectors, gini, top_percent_edge_share, Direction, RankWeighting, SnapshotGraph, Weighting,
};
use txnet_core::money::DEFAULT_DUST_THRESHOLD;
use txnet_core::pipeline::{aggregate_records, YearAggregator};
use txnet_core::rng::PortableRng;
use txnet_core::snapshot::{apply_dust_filter, SnapshotPolicy, YearSnapshot};
use txnet_core::synth::{generate_chain, Attachment, SynthConfig};

fn small(attachment: Attachment) -> SynthConfig {
    SynthConfig {
        seed: 11,
        years: 3,
        tx_per_year: 2000,
        blocks_per_year: 50,
        attachment,
        ..SynthConfig::default()
    }
}

fn chain(cfg: &SynthConfig) -> Vec<TransactionRecord> {
    generate_chain(cfg).unwrap().map(Result::unwrap).collect()
}

fn to_csv(records: &[TransactionRecord], delimiter: Delimiter) -> String {
    let mut s = header_line(delimiter) + "\n";
    for r in records {
        s += &r.to_line(delimiter);
        s.push('\n');
    }
    s
}

fn read_all<R: std::io::BufRead>(input: R, batch: usize) -> Result<Vec<TransactionRecord>, ReadError> {
    let mut reader = RecordReader::new(input)?;
    let mut out = Vec::new();
    loop {
        let b = reader.next_batch(batch)?;
        if b.is_empty() {
            return Ok(out);
        }
        out.extend(b);
    }
}

#[test]
fn random_interning_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dict.tsv");
    let mut rng = PortableRng::new(3);
    let mut dict = AddressDictionary::new();
    let mut oracle: HashMap<String, AddressId> = HashMap::new();
    for i in 0..10_000 {
        let key = format!("addr{}", rng.below(6000));
        let id = dict.intern(&key).unwrap();
        let next = AddressId(oracle.len() as u32);
        let expected = *oracle.entry(key.clone()).or_insert(next);
        assert_eq!(id, expected);
        assert_eq!(dict.key(id), Some(key.as_str()));
        if i == 5000 {
            dict.persist(&path).unwrap();
        }
    }
    dict.persist(&path).unwrap();
    let reloaded = AddressDictionary::load(&path).unwrap();
    assert_eq!(reloaded.len(), oracle.len());
    for (key, id) in &oracle {
        assert_eq!(reloaded.get(key), Some(*id));
        assert_eq!(reloaded.key(*id), Some(key.as_str()));
    }
}

#[test]
fn csv_round_trip_is_byte_exact() {
    let records = chain(&small(Attachment::Preferential));
    for delimiter in [Delimiter::Comma, Delimiter::Tab] {
        let text = to_csv(&records, delimiter);
        for batch in [1, 7, 100_000] {
            let parsed = read_all(Cursor::new(text.as_bytes()), batch).unwrap();
            assert_eq!(parsed, records);
        }
        let parsed = read_all(Cursor::new(text.as_bytes()), 64).unwrap();
        assert_eq!(to_csv(&parsed, delimiter), text);
    }
}

#[test]
fn gzip_input_reads_the_same() {
    let records = chain(&small(Attachment::Uniform));
    let text = to_csv(&records, Delimiter::Comma);
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("c.csv");
    let gz = dir.path().join("c.csv.gz");
    std::fs::write(&plain, &text).unwrap();
    let mut enc = GzEncoder::new(std::fs::File::create(&gz).unwrap(), Compression::fast());
    enc.write_all(text.as_bytes()).unwrap();
    enc.finish().unwrap();
    let a = read_all(open_input(&plain).unwrap(), 1000).unwrap();
    let b = read_all(open_input(&gz).unwrap(), 1000).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, records);
}

#[test]
fn malformed_row_reports_its_line() {
    let records = chain(&small(Attachment::Uniform));
    let mut text = to_csv(&records[..20], Delimiter::Comma);
    text += "5,99,0,1,2,12,2010-13-40 99:00:00 UTC\n";
    let err = read_all(BufReader::new(Cursor::new(text)), 8).unwrap_err();
    assert!(err.to_string().contains("row 22"), "{err}");
}

/// Replays the stream and checks UTXO accounting and conservation after
/// every block.
#[test]
fn synthetic_stream_respects_utxo_accounting() {
    for attachment in [Attachment::Uniform, Attachment::Preferential] {
        let records = chain(&small(attachment));
        let mut balance: HashMap<&str, i128> = HashMap::new();
        let (mut issued, mut fees) = (0i128, 0i128);
        let check = |balance: &HashMap<&str, i128>, issued: i128, fees: i128| {
            assert_eq!(balance.values().sum::<i128>(), issued - fees);
        };
        for (i, r) in records.iter().enumerate() {
            let v = r.value as i128;
            match &r.input_address {
                None => issued += v,
                Some(src) => {
                    *balance.get_mut(src.as_str()).expect("spender was funded") -= v;
                    assert!(balance[src.as_str()] >= 0, "address {src} overspends");
                }
            }
            if r.output_address == FEE_SINK_KEY {
                fees += v;
            } else {
                *balance.entry(&r.output_address).or_default() += v;
            }
            if records.get(i + 1).is_none_or(|n| n.block_number != r.block_number) {
                check(&balance, issued, fees);
            }
        }
    }
}

#[test]
fn coinbase_schedule_halves() {
    let cfg = SynthConfig {
        tx_per_year: 10,
        blocks_per_year: 10,
        years: 2,
        halving_interval: 10,
        block_reward: 1000,
        ..SynthConfig::default()
    };
    let rewards: Vec<u64> = chain(&cfg).iter().filter(|r| r.is_coinbase).map(|r| r.value).collect();
    assert_eq!(rewards, [vec![1000; 10], vec![500; 10]].concat());
}

fn last_year_graph(attachment: Attachment, tx_per_year: u64, years: u32) -> SnapshotGraph {
    let cfg = SynthConfig {
        seed: 1,
        years,
        tx_per_year,
        attachment,
        ..SynthConfig::default()
    };
    let mut dict = AddressDictionary::new();
    let mut agg = YearAggregator::new(None, None);
    aggregate_records(generate_chain(&cfg).unwrap(), &mut dict, &mut agg).unwrap();
    let mut years_data = agg.finish().unwrap();
    let (year, data) = years_data.pop_last().unwrap();
    let raw = YearSnapshot::from_edges(year, data.edges, SnapshotPolicy::default());
    SnapshotGraph::new(&apply_dust_filter(&raw, DEFAULT_DUST_THRESHOLD).unwrap())
}

#[test]
fn preferential_tails_are_heavier() {
    let pref = last_year_graph(Attachment::Preferential, 20_000, 3);
    let unif = last_year_graph(Attachment::Uniform, 20_000, 3);
    let in_gini = |g: &SnapshotGraph| gini(&degree_vectors(g).get(Direction::In, Weighting::Activity).values).unwrap();
    assert!(in_gini(&pref) > in_gini(&unif));
}

#[test]
fn preferential_top_share_exceeds_uniform_at_default_scale() {
    let share = |a| {
        let g = last_year_graph(a, 100_000, 15);
        top_percent_edge_share(&g, 0.01, RankWeighting::Activity)
            .unwrap()
            .in_share
            .unwrap()
    };
    let (p, u) = (share(Attachment::Preferential), share(Attachment::Uniform));
    assert!(p > u, "preferential {p} vs uniform {u}");
}
