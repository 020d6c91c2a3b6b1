//! Python bindings for the transaction-network toolkit.
//!
//! Amounts cross the boundary as integer quanta (10⁻⁴ satoshi) and
//! addresses as integer IDs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};

use chrono::DateTime;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use txnet_core::config::RunConfig;
use txnet_core::flow::{attribute_flows as core_attribute_flows, fee_shares as core_fee_shares, TransactionGroup};
use txnet_core::ingest::{header_line, AddressId, Delimiter};
use txnet_core::metrics::{self, MetricOptions};
use txnet_core::money::{Quanta, ThresholdArg};
use txnet_core::pipeline::{run_pipeline, PipelineError};
use txnet_core::snapshot::{self, AggregatedEdge, SnapshotPolicy, YearSnapshot};
use txnet_core::synth::{generate_chain, SynthConfig};
use txnet_core::wealth::{RichKind, WealthLedgers, YearActivity};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_err(e: PipelineError) -> PyErr {
    match e {
        PipelineError::Config(_) => PyValueError::new_err(e.to_string()),
        PipelineError::Io { .. } => PyOSError::new_err(e.to_string()),
        PipelineError::Data(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

fn edge_list(edges: Vec<(u32, u32, i128, u64)>) -> Vec<AggregatedEdge> {
    edges
        .into_iter()
        .map(|(s, d, w1, w2)| AggregatedEdge {
            src: AddressId(s),
            dst: AddressId(d),
            w1: Quanta(w1),
            w2,
        })
        .collect()
}

fn rich_kind(kind: &str) -> PyResult<RichKind> {
    match kind {
        "balance" => Ok(RichKind::Balance),
        "indegree" => Ok(RichKind::Indegree),
        _ => Err(value_err(format!(
            "unknown kind {kind:?}; expected balance or indegree"
        ))),
    }
}

/// Parses a threshold such as `100000000`, `10000sat` or `0.0001btc` into quanta.
#[pyfunction]
fn parse_threshold(text: &str) -> PyResult<i128> {
    text.parse::<ThresholdArg>().map(|t| t.0 .0).map_err(value_err)
}

fn group(inputs: Vec<(u32, i128)>, outputs: Vec<(u32, i128)>) -> TransactionGroup {
    let merge = |legs: Vec<(u32, i128)>| {
        let mut m: BTreeMap<AddressId, Quanta> = BTreeMap::new();
        for (a, v) in legs {
            *m.entry(AddressId(a)).or_default() += Quanta(v);
        }
        m.into_iter().collect()
    };
    TransactionGroup {
        block_number: 0,
        tx_id: String::new(),
        timestamp: DateTime::UNIX_EPOCH,
        coinbase: false,
        inputs: merge(inputs),
        outputs: merge(outputs),
    }
}

/// Splits a transaction's inputs across its outputs: `[(src, dst, quanta)]`.
#[pyfunction]
fn attribute_flows(inputs: Vec<(u32, i128)>, outputs: Vec<(u32, i128)>) -> PyResult<Vec<(u32, u32, i128)>> {
    let flows = core_attribute_flows(&group(inputs, outputs)).map_err(value_err)?;
    Ok(flows.iter().map(|f| (f.src.0, f.dst.0, f.value.0)).collect())
}

/// The fee paid by each input address: `[(src, quanta)]`.
#[pyfunction]
fn fee_shares(inputs: Vec<(u32, i128)>, outputs: Vec<(u32, i128)>) -> PyResult<Vec<(u32, i128)>> {
    let fees = core_fee_shares(&group(inputs, outputs)).map_err(value_err)?;
    Ok(fees.iter().map(|f| (f.src.0, f.value.0)).collect())
}

#[pyfunction]
fn gini(values: Vec<f64>) -> PyResult<f64> {
    metrics::gini(&values).map_err(value_err)
}

/// Population mean, standard deviation, skewness and kurtosis; the last two
/// are `None` when every value is equal.
#[pyfunction]
fn moments(py: Python<'_>, values: Vec<f64>) -> PyResult<Bound<'_, PyDict>> {
    let m = metrics::distribution_moments(&values).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("mean", m.mean)?;
    d.set_item("std_dev", m.std_dev)?;
    d.set_item("skewness", m.skewness)?;
    d.set_item("kurtosis", m.kurtosis)?;
    Ok(d)
}

/// One year's aggregated transaction graph.
#[pyclass(frozen)]
struct Snapshot(YearSnapshot);

#[pymethods]
impl Snapshot {
    /// `edges` is `[(src, dst, value_quanta, count)]`; parallel pairs are merged.
    #[new]
    #[pyo3(signature = (year, edges, keep_self_loops = false))]
    fn new(year: i32, edges: Vec<(u32, u32, i128, u64)>, keep_self_loops: bool) -> Self {
        let mut merged: BTreeMap<(AddressId, AddressId), AggregatedEdge> = BTreeMap::new();
        for e in edge_list(edges) {
            merged
                .entry((e.src, e.dst))
                .and_modify(|m| {
                    m.w1 += e.w1;
                    m.w2 += e.w2;
                })
                .or_insert(e);
        }
        let policy = SnapshotPolicy { keep_self_loops };
        Snapshot(YearSnapshot::from_edges(year, merged.into_values().collect(), policy))
    }

    #[getter]
    fn year(&self) -> i32 {
        self.0.year
    }

    #[getter]
    fn filtered(&self) -> bool {
        self.0.filtered
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.0.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.0.edge_count()
    }

    #[getter]
    fn total_value(&self) -> i128 {
        self.0.total_value().0
    }

    #[getter]
    fn total_activity(&self) -> u64 {
        self.0.total_activity()
    }

    fn edges(&self) -> Vec<(u32, u32, i128, u64)> {
        self.0
            .edges()
            .iter()
            .map(|e| (e.src.0, e.dst.0, e.w1.0, e.w2))
            .collect()
    }

    /// Drops edges whose value is at or below `threshold` (quanta or a
    /// `sat`/`btc` string).
    fn dust_filter(&self, threshold: &Bound<'_, PyAny>) -> PyResult<Snapshot> {
        let t = match threshold.extract::<i128>() {
            Ok(q) => Quanta(q),
            Err(_) => Quanta(parse_threshold(&threshold.extract::<String>()?)?),
        };
        snapshot::apply_dust_filter(&self.0, t).map(Snapshot).map_err(value_err)
    }

    fn density(&self) -> PyResult<f64> {
        metrics::density(&self.0).map_err(value_err)
    }

    /// Every per-year statistic as `[(metric, variant, value)]`. `raw` is
    /// the unfiltered snapshot this one was derived from, if any.
    #[pyo3(signature = (raw = None, top_fraction = 0.01))]
    fn metrics(
        &self,
        py: Python<'_>,
        raw: Option<&Snapshot>,
        top_fraction: f64,
    ) -> Vec<(&'static str, String, Option<f64>)> {
        let raw = raw.map_or(&self.0, |r| &r.0);
        let opts = MetricOptions {
            top_fraction,
            ..Default::default()
        };
        let values = py.detach(|| metrics::snapshot_metrics(raw, &self.0, &opts));
        values.into_iter().map(|m| (m.metric, m.variant, m.value)).collect()
    }
}

/// Cumulative balance and in-degree ledgers, advanced one year at a time.
#[pyclass]
#[derive(Default)]
struct Ledgers(WealthLedgers);

#[pymethods]
impl Ledgers {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    /// `fees` maps address to quanta paid; `coinbase` maps address to
    /// `(quanta, credits)`.
    #[pyo3(signature = (year, edges, fees = BTreeMap::new(), coinbase = BTreeMap::new()))]
    fn advance_year(
        &mut self,
        year: i32,
        edges: Vec<(u32, u32, i128, u64)>,
        fees: BTreeMap<u32, i128>,
        coinbase: BTreeMap<u32, (i128, u64)>,
    ) -> PyResult<()> {
        let activity = YearActivity {
            year,
            edges: edge_list(edges),
            fees: fees.into_iter().map(|(a, v)| (AddressId(a), Quanta(v))).collect(),
            coinbase: coinbase
                .into_iter()
                .map(|(a, (v, n))| (AddressId(a), (Quanta(v), n)))
                .collect(),
        };
        self.0.advance_year(&activity).map_err(value_err)
    }

    #[getter]
    fn year(&self) -> Option<i32> {
        self.0.year()
    }

    #[getter]
    fn population(&self) -> usize {
        self.0.population()
    }

    fn balance(&self, address: u32) -> i128 {
        self.0.balance(AddressId(address)).0
    }

    fn indegree(&self, address: u32) -> u64 {
        self.0.indegree(AddressId(address))
    }

    fn top_k(&self, kind: &str, k: usize) -> PyResult<Vec<(u32, i128)>> {
        let set = self.0.top_k(rich_kind(kind)?, k).map_err(value_err)?;
        Ok(set.members.iter().map(|(a, v)| (a.0, *v)).collect())
    }

    fn richness_ratio(&self, kind: &str, k: usize) -> PyResult<f64> {
        self.0.richness_ratio(rich_kind(kind)?, k).map_err(value_err)
    }
}

/// Writes a synthetic chain in the ingest CSV format and returns the number
/// of rows. Keyword arguments override the generator defaults.
#[pyfunction]
#[pyo3(signature = (path, **options))]
fn synth(py: Python<'_>, path: &str, options: Option<&Bound<'_, PyDict>>) -> PyResult<usize> {
    let mut cfg = SynthConfig::default();
    if let Some(options) = options {
        for (key, value) in options.iter() {
            let key: String = key.extract()?;
            match key.as_str() {
                "seed" => cfg.seed = value.extract()?,
                "start_year" => cfg.start_year = value.extract()?,
                "years" => cfg.years = value.extract()?,
                "tx_per_year" => cfg.tx_per_year = value.extract()?,
                "blocks_per_year" => cfg.blocks_per_year = value.extract()?,
                "new_address_rate" => cfg.new_address_rate = value.extract()?,
                "attachment" => cfg.attachment = value.extract::<String>()?.parse().map_err(value_err)?,
                "dust_fraction" => cfg.dust_fraction = value.extract()?,
                "fee_rate" => cfg.fee_rate = value.extract()?,
                "change_rate" => cfg.change_rate = value.extract()?,
                "max_inputs" => cfg.max_inputs = value.extract()?,
                "max_outputs" => cfg.max_outputs = value.extract()?,
                "block_reward" => cfg.block_reward = value.extract()?,
                "halving_interval" => cfg.halving_interval = value.extract()?,
                other => return Err(value_err(format!("unknown synth option {other:?}"))),
            }
        }
    }
    let chain = generate_chain(&cfg).map_err(value_err)?;
    py.detach(|| {
        let file = File::create(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        let mut out = BufWriter::new(file);
        let io = |e: std::io::Error| PyOSError::new_err(format!("{path}: {e}"));
        writeln!(out, "{}", header_line(Delimiter::Comma)).map_err(io)?;
        let mut rows = 0;
        for rec in chain {
            writeln!(out, "{}", rec.map_err(value_err)?.to_line(Delimiter::Comma)).map_err(io)?;
            rows += 1;
        }
        out.flush().map_err(io)?;
        Ok(rows)
    })
}

/// Runs the full pipeline. `config` holds the same keys as a config file;
/// `input` may be a string or a list of paths.
#[pyfunction]
fn run(py: Python<'_>, config: &Bound<'_, PyDict>) -> PyResult<()> {
    let mut cfg = RunConfig::default();
    for (key, value) in config.iter() {
        let key: String = key.extract()?;
        let values: Vec<String> = match value.extract::<Vec<String>>() {
            Ok(list) if !value.is_instance_of::<pyo3::types::PyString>() => list,
            _ => vec![match value.extract::<bool>() {
                Ok(b) => b.to_string(),
                Err(_) => value.str()?.to_string(),
            }],
        };
        for v in values {
            cfg.set(&key, &v).map_err(value_err)?;
        }
    }
    py.detach(|| run_pipeline(&cfg)).map_err(pipeline_err)
}

#[pymodule]
fn txnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Snapshot>()?;
    m.add_class::<Ledgers>()?;
    m.add_function(wrap_pyfunction!(parse_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(attribute_flows, m)?)?;
    m.add_function(wrap_pyfunction!(fee_shares, m)?)?;
    m.add_function(wrap_pyfunction!(gini, m)?)?;
    m.add_function(wrap_pyfunction!(moments, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
