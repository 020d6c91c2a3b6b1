//! Run configuration: a line-oriented `key = value` file plus command-line
//! overrides, with the command line applied last.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::metrics::RankWeighting;
use crate::money::{Quanta, ThresholdArg, DEFAULT_DUST_THRESHOLD};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {reason}")]
    Value { key: String, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config file {path}: {reason}")]
    Read { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearRange {
    pub first: i32,
    pub last: i32,
}

impl FromStr for YearRange {
    type Err = String;
    /// `2009-2023` or a single year.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let parse = |t: &str| t.trim().parse::<i32>().map_err(|_| format!("bad year {t:?}"));
        let (first, last) = match s.split_once('-') {
            Some((a, b)) => (parse(a)?, parse(b)?),
            None => {
                let y = parse(s)?;
                (y, y)
            }
        };
        if first > last {
            return Err(format!("empty year range {s:?}"));
        }
        Ok(Self { first, last })
    }
}

impl YearRange {
    pub fn contains(&self, year: i32) -> bool {
        (self.first..=self.last).contains(&year)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WealthEdges {
    /// Dust-filtered edges, self-loops kept.
    Filtered,
    Unfiltered,
}

impl FromStr for WealthEdges {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "filtered" => Ok(Self::Filtered),
            "unfiltered" => Ok(Self::Unfiltered),
            _ => Err(format!("expected filtered or unfiltered, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    /// Years to report; `None` reports every year present in the input.
    pub years: Option<YearRange>,
    pub dust_threshold: Quanta,
    pub no_filter: bool,
    pub keep_self_loops: bool,
    pub top_k: usize,
    /// Fraction of nodes in the "top percent" sets, e.g. 0.01.
    pub top_percent: f64,
    pub rank_weighting: RankWeighting,
    pub clustering_sample: Option<usize>,
    pub seed: u64,
    pub labels: Option<PathBuf>,
    pub out: PathBuf,
    /// Worker threads; 0 uses one per core. Never affects results.
    pub threads: usize,
    pub wealth_edges: WealthEdges,
    /// Persistent address dictionary shared across runs.
    pub dictionary: Option<PathBuf>,
    /// Aggregate edges through spill files in this directory.
    pub spill_dir: Option<PathBuf>,
    pub partitions: usize,
    pub write_snapshots: bool,
    pub batch_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            years: None,
            dust_threshold: DEFAULT_DUST_THRESHOLD,
            no_filter: false,
            keep_self_loops: false,
            top_k: 10,
            top_percent: 0.01,
            rank_weighting: RankWeighting::Activity,
            clustering_sample: None,
            seed: 0,
            labels: None,
            out: PathBuf::from("txnet-out"),
            threads: 0,
            wealth_edges: WealthEdges::Filtered,
            dictionary: None,
            spill_dir: None,
            partitions: 64,
            write_snapshots: false,
            batch_size: 1 << 16,
        }
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

fn parse_rank_weighting(s: &str) -> Result<RankWeighting, String> {
    match s {
        "activity" => Ok(RankWeighting::Activity),
        "unweighted" => Ok(RankWeighting::Unweighted),
        _ => Err(format!("expected activity or unweighted, got {s:?}")),
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("not a number: {s:?}"))
}

impl RunConfig {
    /// Applies one setting. Keys use either `-` or `_` as separators;
    /// `input` appends.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let fail = |reason: String| ConfigError::Value {
            key: key.clone(),
            reason,
        };
        match key.as_str() {
            "input" => self.inputs.push(PathBuf::from(value)),
            "years" => self.years = Some(value.parse().map_err(fail)?),
            "dust_threshold" => {
                let t: ThresholdArg = value.parse().map_err(|e| fail(format!("{e}")))?;
                self.dust_threshold = t.0;
            }
            "no_filter" => self.no_filter = parse_bool(value).map_err(fail)?,
            "keep_self_loops" => self.keep_self_loops = parse_bool(value).map_err(fail)?,
            "top_k" => self.top_k = parse_num(value).map_err(fail)?,
            "top_percent" => self.top_percent = parse_num(value).map_err(fail)?,
            "rank_weighting" => self.rank_weighting = parse_rank_weighting(value).map_err(fail)?,
            "clustering_sample" => {
                self.clustering_sample = match value {
                    "none" | "" => None,
                    v => Some(parse_num(v).map_err(fail)?),
                }
            }
            "seed" => self.seed = parse_num(value).map_err(fail)?,
            "labels" => self.labels = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "threads" => self.threads = parse_num(value).map_err(fail)?,
            "wealth_edges" => self.wealth_edges = value.parse().map_err(fail)?,
            "dictionary" => self.dictionary = Some(PathBuf::from(value)),
            "spill_dir" => self.spill_dir = Some(PathBuf::from(value)),
            "partitions" => self.partitions = parse_num(value).map_err(fail)?,
            "write_snapshots" => self.write_snapshots = parse_bool(value).map_err(fail)?,
            "batch_size" => self.batch_size = parse_num(value).map_err(fail)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies every `key = value` line; blank lines and `#` comments are
    /// skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                reason: "expected key = value".into(),
            })?;
            self.set(key, value).map_err(|e| ConfigError::Syntax {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.inputs.is_empty() {
            return invalid("no input given");
        }
        if self.dust_threshold.0 < 0 {
            return invalid("dust threshold must be non-negative");
        }
        if !(self.top_percent > 0.0 && self.top_percent <= 1.0) {
            return invalid("top_percent must lie in (0, 1]");
        }
        if self.top_k == 0 {
            return invalid("top_k must be positive");
        }
        if self.clustering_sample == Some(0) {
            return invalid("clustering_sample must be positive");
        }
        if self.partitions == 0 || self.batch_size == 0 {
            return invalid("partitions and batch_size must be positive");
        }
        if let Some(r) = self.years {
            if r.first < 2009 {
                return invalid("reported years must start in 2009 or later");
            }
        }
        Ok(())
    }

    /// The settings that determine the bundle's content, one `key = value`
    /// per line. Thread count, output and spill locations are left out so
    /// the echo is identical wherever and however the run executes.
    pub fn effective_text(&self) -> String {
        let mut s = String::new();
        for input in &self.inputs {
            let _ = writeln!(s, "input = {}", input.display());
        }
        if let Some(r) = self.years {
            let _ = writeln!(s, "years = {}-{}", r.first, r.last);
        }
        let _ = writeln!(s, "dust_threshold = {}", self.dust_threshold);
        let _ = writeln!(s, "no_filter = {}", self.no_filter);
        let _ = writeln!(s, "keep_self_loops = {}", self.keep_self_loops);
        let _ = writeln!(s, "top_k = {}", self.top_k);
        let _ = writeln!(s, "top_percent = {}", self.top_percent);
        let weighting = match self.rank_weighting {
            RankWeighting::Activity => "activity",
            RankWeighting::Unweighted => "unweighted",
        };
        let _ = writeln!(s, "rank_weighting = {weighting}");
        match self.clustering_sample {
            Some(n) => {
                let _ = writeln!(s, "clustering_sample = {n}");
            }
            None => {
                let _ = writeln!(s, "clustering_sample = none");
            }
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(l) = &self.labels {
            let _ = writeln!(s, "labels = {}", l.display());
        }
        let edges = match self.wealth_edges {
            WealthEdges::Filtered => "filtered",
            WealthEdges::Unfiltered => "unfiltered",
        };
        let _ = writeln!(s, "wealth_edges = {edges}");
        if let Some(d) = &self.dictionary {
            let _ = writeln!(s, "dictionary = {}", d.display());
        }
        let _ = writeln!(s, "write_snapshots = {}", self.write_snapshots);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_override() {
        let mut c = RunConfig::default();
        c.apply_text("# run\ninput = a.csv\nyears = 2009-2011\ntop-k = 5\n\ndust_threshold = 1sat\n")
            .unwrap();
        c.set("top_k", "7").unwrap();
        assert_eq!(c.inputs, vec![PathBuf::from("a.csv")]);
        assert_eq!(
            c.years,
            Some(YearRange {
                first: 2009,
                last: 2011
            })
        );
        assert_eq!(c.top_k, 7);
        assert_eq!(c.dust_threshold, Quanta(10_000));
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_lines() {
        let mut c = RunConfig::default();
        assert!(matches!(
            c.apply_text("years 2009"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            c.apply_text("x\n\ncolour = red"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(c.set("colour", "red").is_err());
        assert!("2011-2009".parse::<YearRange>().is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("input = x.csv\nyears = 2010\nclustering_sample = 50\nno_filter = true")
            .unwrap();
        let mut again = RunConfig::default();
        again.apply_text(&c.effective_text()).unwrap();
        assert_eq!(again, c);
    }
}
