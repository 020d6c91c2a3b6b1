//! End-to-end run: ingest → flows → yearly snapshots → metrics → wealth →
//! report bundle.
//!
//! Years before the reported range still feed the wealth ledgers, since
//! balances and in-degrees carry over; years after it are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig, WealthEdges, YearRange};
use crate::flow::{decompose, FlowError, TransactionGroup};
use crate::ingest::{
    open_input, AddressDictionary, AddressId, DictionaryError, IngestError, ReadError, RecordReader,
    TransactionAssembler, TransactionRecord,
};
use crate::metrics::{snapshot_metrics, ClusteringSample, MetricOptions, MetricValue};
use crate::money::Quanta;
use crate::phase::phase_of_year;
use crate::snapshot::{
    apply_dust_filter, filter_coverage, year_of, AggregatedEdge, EdgeAccumulator, SnapshotPolicy, SpillingAccumulator,
    YearSnapshot,
};
use crate::synth::SynthError;
use crate::wealth::{label_rich_set, union_growth, LabelMap, RichKind, RichSet, WealthLedgers, YearActivity};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("{0}")]
    Data(String),
}

impl PipelineError {
    /// 1 configuration, 2 I/O, 3 data validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Io { .. } => 2,
            PipelineError::Data(_) => 3,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> PipelineError {
        let context = context.into();
        move |source| PipelineError::Io { context, source }
    }
}

impl From<ReadError> for PipelineError {
    fn from(e: ReadError) -> Self {
        match e {
            ReadError::Io(source) => PipelineError::Io {
                context: "reading input".into(),
                source,
            },
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<DictionaryError> for PipelineError {
    fn from(e: DictionaryError) -> Self {
        match e {
            DictionaryError::Io(source) => PipelineError::Io {
                context: "address dictionary".into(),
                source,
            },
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        PipelineError::Config(ConfigError::Invalid(e.to_string()))
    }
}

impl From<FlowError> for PipelineError {
    fn from(e: FlowError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

/// One year's aggregated edges (self-loops included), fee shares and
/// coinbase credits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct YearData {
    pub edges: Vec<AggregatedEdge>,
    pub fees: BTreeMap<AddressId, Quanta>,
    pub coinbase: BTreeMap<AddressId, (Quanta, u64)>,
}

enum Accumulator {
    Memory(EdgeAccumulator),
    Spill(SpillingAccumulator),
}

struct YearBuilder {
    acc: Accumulator,
    fees: BTreeMap<AddressId, Quanta>,
    coinbase: BTreeMap<AddressId, (Quanta, u64)>,
}

/// Splits assembled transactions into per-year accumulators.
pub struct YearAggregator {
    years: BTreeMap<i32, YearBuilder>,
    last_year: Option<i32>,
    spill: Option<(PathBuf, usize)>,
}

impl YearAggregator {
    /// Transactions after `last_year` are dropped. With `spill`, edges are
    /// aggregated through files under `dir/<year>/` in `partitions` parts.
    pub fn new(last_year: Option<i32>, spill: Option<(PathBuf, usize)>) -> Self {
        Self {
            years: BTreeMap::new(),
            last_year,
            spill,
        }
    }

    fn builder(&mut self, year: i32) -> Result<&mut YearBuilder, PipelineError> {
        if !self.years.contains_key(&year) {
            let acc = match &self.spill {
                None => Accumulator::Memory(EdgeAccumulator::new()),
                Some((dir, partitions)) => {
                    let dir = dir.join(year.to_string());
                    fs::create_dir_all(&dir).map_err(PipelineError::io(format!("creating {}", dir.display())))?;
                    Accumulator::Spill(SpillingAccumulator::new(dir, *partitions, 1 << 16))
                }
            };
            self.years.insert(
                year,
                YearBuilder {
                    acc,
                    fees: BTreeMap::new(),
                    coinbase: BTreeMap::new(),
                },
            );
        }
        Ok(self.years.get_mut(&year).expect("inserted above"))
    }

    pub fn add(&mut self, tx: &TransactionGroup) -> Result<(), PipelineError> {
        let year = year_of(&tx.timestamp);
        if self.last_year.is_some_and(|last| year > last) {
            return Ok(());
        }
        let parts = decompose(tx)?;
        let b = self.builder(year)?;
        for f in &parts.flows {
            match &mut b.acc {
                Accumulator::Memory(acc) => acc.add(f.src, f.dst, f.value),
                Accumulator::Spill(acc) => acc
                    .add(f.src, f.dst, f.value)
                    .map_err(PipelineError::io("spilling edges"))?,
            }
        }
        for fee in &parts.fees {
            *b.fees.entry(fee.src).or_default() += fee.value;
        }
        for c in &parts.credits {
            let slot = b.coinbase.entry(c.dst).or_insert((Quanta::ZERO, 0));
            slot.0 += c.value;
            slot.1 += 1;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<BTreeMap<i32, YearData>, PipelineError> {
        let mut out = BTreeMap::new();
        for (year, b) in self.years {
            let edges = match b.acc {
                Accumulator::Memory(acc) => acc.finish(),
                Accumulator::Spill(acc) => acc.finish().map_err(PipelineError::io("merging spilled edges"))?,
            };
            out.insert(
                year,
                YearData {
                    edges,
                    fees: b.fees,
                    coinbase: b.coinbase,
                },
            );
        }
        Ok(out)
    }
}

/// Assembles `records` into transactions and feeds them to `agg`.
pub fn aggregate_records<I, E>(
    records: I,
    dict: &mut AddressDictionary,
    agg: &mut YearAggregator,
) -> Result<(), PipelineError>
where
    I: IntoIterator<Item = Result<TransactionRecord, E>>,
    PipelineError: From<E>,
{
    let mut assembler = TransactionAssembler::new(dict);
    let mut groups = Vec::new();
    for rec in records {
        assembler.push(&rec?, &mut groups)?;
        for tx in groups.drain(..) {
            agg.add(&tx)?;
        }
    }
    assembler.flush(&mut groups)?;
    for tx in groups.drain(..) {
        agg.add(&tx)?;
    }
    Ok(())
}

/// Records from several files in order, read in parallel-parsed batches.
struct FileRecords<'a> {
    paths: std::slice::Iter<'a, PathBuf>,
    reader: Option<RecordReader<Box<dyn io::BufRead + Send>>>,
    batch: std::vec::IntoIter<TransactionRecord>,
    batch_size: usize,
}

impl FileRecords<'_> {
    fn advance(&mut self) -> Result<Option<TransactionRecord>, PipelineError> {
        loop {
            if let Some(r) = self.batch.next() {
                return Ok(Some(r));
            }
            match &mut self.reader {
                Some(reader) => {
                    let batch = reader.next_batch(self.batch_size)?;
                    if batch.is_empty() {
                        self.reader = None;
                    } else {
                        self.batch = batch.into_iter();
                    }
                }
                None => {
                    let Some(path) = self.paths.next() else {
                        return Ok(None);
                    };
                    info!("reading {}", path.display());
                    let input = open_input(path).map_err(PipelineError::io(format!("opening {}", path.display())))?;
                    self.reader = Some(RecordReader::new(input).map_err(|e| match e {
                        ReadError::Io(source) => PipelineError::Io {
                            context: format!("reading {}", path.display()),
                            source,
                        },
                        other => PipelineError::Data(format!("{}: {other}", path.display())),
                    })?);
                }
            }
        }
    }
}

impl Iterator for FileRecords<'_> {
    type Item = Result<TransactionRecord, PipelineError>;
    fn next(&mut self) -> Option<Self::Item> {
        self.advance().transpose()
    }
}

/// Wealth results for one reported year.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthYear {
    pub year: i32,
    pub balance_ratio: Option<f64>,
    pub indegree_ratio: Option<f64>,
    pub top_balance: Option<RichSet>,
    pub top_indegree: Option<RichSet>,
    pub negative_balances: usize,
    pub population: usize,
}

/// Advances the ledgers through every year from the first year with data
/// (or `reported.first`, if earlier) to `reported.last`. `threshold`
/// filters the edge set used for balances; `None` uses all edges.
/// `on_year` sees the ledgers after each reported year.
pub fn run_wealth<F>(
    years: &BTreeMap<i32, YearData>,
    reported: YearRange,
    threshold: Option<Quanta>,
    k: usize,
    mut on_year: F,
) -> Result<Vec<WealthYear>, PipelineError>
where
    F: FnMut(&WealthLedgers, &WealthYear) -> Result<(), PipelineError>,
{
    let start = years
        .keys()
        .next()
        .copied()
        .unwrap_or(reported.first)
        .min(reported.first);
    let mut ledgers = WealthLedgers::new();
    let mut out = Vec::new();
    let empty = YearData::default();
    for year in start..=reported.last {
        let data = years.get(&year).unwrap_or(&empty);
        let edges = match threshold {
            Some(t) => data.edges.iter().filter(|e| e.w1 > t).copied().collect(),
            None => data.edges.clone(),
        };
        ledgers
            .advance_year(&YearActivity {
                year,
                edges,
                fees: data.fees.clone(),
                coinbase: data.coinbase.clone(),
            })
            .map_err(|e| PipelineError::Data(format!("year {year}: {e}")))?;
        if !reported.contains(year) {
            continue;
        }
        let w = WealthYear {
            year,
            balance_ratio: ledgers.richness_ratio(RichKind::Balance, k).ok(),
            indegree_ratio: ledgers.richness_ratio(RichKind::Indegree, k).ok(),
            top_balance: ledgers.top_k(RichKind::Balance, k).ok(),
            top_indegree: ledgers.top_k(RichKind::Indegree, k).ok(),
            negative_balances: ledgers.negative_balances(),
            population: ledgers.population(),
        };
        on_year(&ledgers, &w)?;
        out.push(w);
    }
    Ok(out)
}

/// Union-set growth series for one kind over the reported years; years
/// without a rich set contribute nothing new.
pub fn wealth_union_series(rows: &[WealthYear], kind: RichKind) -> Vec<usize> {
    let sets: Vec<RichSet> = rows
        .iter()
        .map(|w| {
            let set = match kind {
                RichKind::Balance => &w.top_balance,
                RichKind::Indegree => &w.top_indegree,
            };
            set.clone().unwrap_or(RichSet {
                year: w.year,
                kind,
                members: Vec::new(),
            })
        })
        .collect();
    union_growth(&sets)
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => "NA".to_string(),
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), PipelineError> {
    fs::write(path, content).map_err(PipelineError::io(format!("writing {}", path.display())))
}

struct YearReport {
    year: i32,
    metrics: Vec<MetricValue>,
    coverage_row: String,
    snapshots: Option<(YearSnapshot, YearSnapshot)>,
}

fn year_report(year: i32, data: Option<&YearData>, cfg: &RunConfig, opts: &MetricOptions) -> YearReport {
    let policy = SnapshotPolicy {
        keep_self_loops: cfg.keep_self_loops,
    };
    let edges = data.map(|d| d.edges.clone()).unwrap_or_default();
    let raw = YearSnapshot::from_edges(year, edges, policy);
    let main = if cfg.no_filter {
        raw.clone()
    } else {
        apply_dust_filter(&raw, cfg.dust_threshold).expect("raw snapshot is unfiltered")
    };
    debug!("year {year}: {} nodes, {} edges", raw.node_count(), raw.edge_count());
    let metrics = snapshot_metrics(&raw, &main, opts);
    let cov = filter_coverage(&raw, &main).ok();
    let coverage_row = format!(
        "{year},{},{},{},{},{},{},{},{},{}\n",
        phase_of_year(year).expect("validated year"),
        raw.node_count(),
        raw.edge_count(),
        main.node_count(),
        main.edge_count(),
        raw.total_value(),
        main.total_value(),
        fmt_value(cov.map(|c| c.volume_share)),
        fmt_value(cov.map(|c| c.node_share)),
    );
    YearReport {
        year,
        metrics,
        coverage_row,
        snapshots: cfg.write_snapshots.then_some((raw, main)),
    }
}

/// Runs the whole pipeline and writes the report bundle to `cfg.out`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<(), PipelineError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &RunConfig) -> Result<(), PipelineError> {
    let labels = match &cfg.labels {
        Some(path) => {
            let f = File::open(path).map_err(PipelineError::io(format!("opening {}", path.display())))?;
            LabelMap::parse(BufReader::new(f)).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?
        }
        None => LabelMap::default(),
    };
    fs::create_dir_all(&cfg.out).map_err(PipelineError::io(format!("creating {}", cfg.out.display())))?;

    let mut dict = match &cfg.dictionary {
        Some(path) => AddressDictionary::load(path)?,
        None => AddressDictionary::new(),
    };
    let spill = cfg.spill_dir.as_ref().map(|d| (d.clone(), cfg.partitions));
    let mut agg = YearAggregator::new(cfg.years.map(|r| r.last), spill);
    let records = FileRecords {
        paths: cfg.inputs.iter(),
        reader: None,
        batch: Vec::new().into_iter(),
        batch_size: cfg.batch_size,
    };
    aggregate_records(records, &mut dict, &mut agg)?;
    let years = agg.finish()?;
    info!("ingested {} addresses over {} years", dict.len(), years.len());

    let reported = match cfg.years {
        Some(r) => r,
        None => match (years.keys().next(), years.keys().next_back()) {
            (Some(&first), Some(&last)) => YearRange { first, last },
            _ => return Err(PipelineError::Data("input contains no transactions".into())),
        },
    };
    if reported.first < 2009 {
        return Err(PipelineError::Data(format!(
            "input contains year {} before 2009",
            reported.first
        )));
    }

    let opts = MetricOptions {
        top_fraction: cfg.top_percent,
        rank_weighting: cfg.rank_weighting,
        clustering_sample: cfg
            .clustering_sample
            .map(|size| ClusteringSample { size, seed: cfg.seed }),
        ..Default::default()
    };
    let reports: Vec<YearReport> = (reported.first..=reported.last)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|year| year_report(year, years.get(&year), cfg, &opts))
        .collect();

    let ledger_dir = cfg.out.join("ledgers");
    fs::create_dir_all(&ledger_dir).map_err(PipelineError::io(format!("creating {}", ledger_dir.display())))?;
    let threshold = match (cfg.no_filter, cfg.wealth_edges) {
        (false, WealthEdges::Filtered) => Some(cfg.dust_threshold),
        _ => None,
    };
    let wealth = run_wealth(&years, reported, threshold, cfg.top_k, |ledgers, w| {
        let path = ledger_dir.join(format!("ledger_{}.tsv", w.year));
        let f = File::create(&path).map_err(PipelineError::io(format!("creating {}", path.display())))?;
        ledgers
            .write_checkpoint(BufWriter::new(f))
            .map_err(PipelineError::io(format!("writing {}", path.display())))
    })?;

    write_bundle(cfg, &reports, &wealth, &labels, &mut dict)
}

fn write_bundle(
    cfg: &RunConfig,
    reports: &[YearReport],
    wealth: &[WealthYear],
    labels: &LabelMap,
    dict: &mut AddressDictionary,
) -> Result<(), PipelineError> {
    let out = &cfg.out;
    write_file(&out.join("config.txt"), &cfg.effective_text())?;

    let union_b = wealth_union_series(wealth, RichKind::Balance);
    let union_i = wealth_union_series(wealth, RichKind::Indegree);

    let mut metrics = String::from("year,phase,metric,variant,value\n");
    let mut coverage = String::from(
        "year,phase,raw_nodes,raw_edges,filtered_nodes,filtered_edges,raw_volume_quanta,filtered_volume_quanta,volume_share,node_share\n",
    );
    for r in reports {
        let phase = phase_of_year(r.year).expect("validated year");
        for m in &r.metrics {
            let _ = writeln!(
                metrics,
                "{},{phase},{},{},{}",
                r.year,
                m.metric,
                m.variant,
                fmt_value(m.value)
            );
        }
        coverage.push_str(&r.coverage_row);
    }
    let mut json = serde_json::Map::new();
    let mut record = |year: i32, metric: &str, variant: &str, value: Option<f64>| {
        let entry = json.entry(year.to_string()).or_insert_with(|| {
            let phase = phase_of_year(year).expect("validated year").to_string();
            serde_json::json!({ "phase": phase })
        });
        let value = value
            .and_then(serde_json::Number::from_f64)
            .map_or(serde_json::Value::Null, Into::into);
        entry[metric][variant] = value;
    };
    for r in reports {
        for m in &r.metrics {
            record(r.year, m.metric, &m.variant, m.value);
        }
    }
    let mut union = String::from("year,phase,kind,t,union_size,max\n");
    let mut rich = String::from("year,kind,rank,address,value,label\n");
    for (t, w) in wealth.iter().enumerate() {
        let phase = phase_of_year(w.year).expect("validated year");
        let rows: [(&str, &str, Option<f64>); 6] = [
            ("richness_ratio", "balance", w.balance_ratio),
            ("richness_ratio", "indegree", w.indegree_ratio),
            ("union_size", "balance", Some(union_b[t] as f64)),
            ("union_size", "indegree", Some(union_i[t] as f64)),
            ("negative_balances", "ledger", Some(w.negative_balances as f64)),
            ("ledger_population", "ledger", Some(w.population as f64)),
        ];
        for (metric, variant, value) in rows {
            record(w.year, metric, variant, value);
            let _ = writeln!(metrics, "{},{phase},{metric},{variant},{}", w.year, fmt_value(value));
        }
        let max = cfg.top_k * (t + 1);
        let _ = writeln!(union, "{},{phase},balance,{},{},{max}", w.year, t + 1, union_b[t]);
        let _ = writeln!(union, "{},{phase},indegree,{},{},{max}", w.year, t + 1, union_i[t]);
        for set in [&w.top_balance, &w.top_indegree].into_iter().flatten() {
            for m in label_rich_set(set, labels) {
                let _ = writeln!(
                    rich,
                    "{},{},{},{},{},{}",
                    w.year,
                    set.kind,
                    m.rank,
                    m.address,
                    m.value,
                    m.label.as_deref().map(csv_field).unwrap_or_default()
                );
            }
        }
    }
    write_file(&out.join("metrics.csv"), &metrics)?;
    write_file(&out.join("filter_coverage.csv"), &coverage)?;
    write_file(&out.join("union_growth.csv"), &union)?;
    write_file(&out.join("rich_sets.csv"), &rich)?;
    let json = serde_json::to_string_pretty(&json).expect("JSON values are finite") + "\n";
    write_file(&out.join("metrics.json"), &json)?;

    if cfg.write_snapshots {
        let dir = out.join("snapshots");
        fs::create_dir_all(&dir).map_err(PipelineError::io(format!("creating {}", dir.display())))?;
        for r in reports {
            let Some((raw, main)) = &r.snapshots else { continue };
            let mut pairs = vec![("raw", raw)];
            if main.filtered {
                pairs.push(("filtered", main));
            }
            for (name, s) in pairs {
                let path = dir.join(format!("snapshot_{}_{name}.tsv", r.year));
                let f = File::create(&path).map_err(PipelineError::io(format!("creating {}", path.display())))?;
                s.write_to(BufWriter::new(f))
                    .map_err(PipelineError::io(format!("writing {}", path.display())))?;
            }
        }
    }

    let dict_path = match &cfg.dictionary {
        Some(path) => path.clone(),
        None => {
            // A fresh dictionary is written whole, replacing any earlier run's.
            let path = out.join("dictionary.tsv");
            match fs::remove_file(&path) {
                Err(e) if e.kind() != io::ErrorKind::NotFound => {
                    return Err(PipelineError::io(format!("replacing {}", path.display()))(e))
                }
                _ => {}
            }
            path
        }
    };
    dict.persist(&dict_path)?;
    info!("bundle written to {}", out.display());
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
