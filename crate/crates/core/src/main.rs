use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use txnet_core::config::RunConfig;
use txnet_core::ingest::{header_line, Delimiter};
use txnet_core::pipeline::{run_pipeline, PipelineError};
use txnet_core::synth::{generate_chain, Attachment, SynthConfig};

/// Yearly transaction-network analysis for UTXO ledgers.
///
/// Log verbosity is read from the TXNET_LOG environment variable
/// (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "txnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build yearly snapshots, metrics and wealth reports from ingest CSV.
    Run(Box<RunArgs>),
    /// Write a synthetic chain in the ingest CSV format.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value configuration file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV/TSV file, optionally gzipped; `-` reads stdin. Repeatable.
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Years to report, e.g. 2009-2023.
    #[arg(long)]
    years: Option<String>,
    /// Dust threshold: integer quanta, or e.g. `10000sat`, `0.0001btc`.
    #[arg(long)]
    dust_threshold: Option<String>,
    #[arg(long)]
    no_filter: bool,
    #[arg(long)]
    keep_self_loops: bool,
    /// Size of the rich sets.
    #[arg(long)]
    top_k: Option<String>,
    /// Fraction of nodes in the top-degree sets, e.g. 0.01.
    #[arg(long)]
    top_percent: Option<String>,
    /// Rank top-degree sets by `activity` or `unweighted` degree.
    #[arg(long)]
    rank_weighting: Option<String>,
    /// Estimate clustering from this many sampled nodes.
    #[arg(long)]
    clustering_sample: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// address_id<TAB>name file used to annotate rich sets.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    threads: Option<String>,
    /// Edge set for balances: `filtered` or `unfiltered`.
    #[arg(long)]
    wealth_edges: Option<String>,
    /// Persistent address dictionary shared across runs.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Aggregate edges out of core through spill files in this directory.
    #[arg(long)]
    spill_dir: Option<PathBuf>,
    #[arg(long)]
    partitions: Option<String>,
    /// Also write the raw and filtered snapshots.
    #[arg(long)]
    write_snapshots: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, PipelineError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if !self.input.is_empty() {
            cfg.inputs.clear();
            for p in &self.input {
                cfg.set("input", &p.to_string_lossy())?;
            }
        }
        let path = |p: Option<PathBuf>| p.map(|p| p.to_string_lossy().into_owned());
        let overrides = [
            ("years", self.years),
            ("dust_threshold", self.dust_threshold),
            ("top_k", self.top_k),
            ("top_percent", self.top_percent),
            ("rank_weighting", self.rank_weighting),
            ("clustering_sample", self.clustering_sample),
            ("seed", self.seed),
            ("labels", path(self.labels)),
            ("out", path(self.out)),
            ("threads", self.threads),
            ("wealth_edges", self.wealth_edges),
            ("dictionary", path(self.dictionary)),
            ("spill_dir", path(self.spill_dir)),
            ("partitions", self.partitions),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for (key, flag) in [
            ("no_filter", self.no_filter),
            ("keep_self_loops", self.keep_self_loops),
            ("write_snapshots", self.write_snapshots),
        ] {
            if flag {
                cfg.set(key, "true")?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2009)]
    start_year: i32,
    #[arg(long, default_value_t = 15)]
    years: u32,
    #[arg(long, default_value_t = 100_000)]
    tx_per_year: u64,
    #[arg(long, default_value_t = 365)]
    blocks_per_year: u32,
    /// Probability that a receiver is a new address.
    #[arg(long, default_value_t = 0.3)]
    new_address_rate: f64,
    /// `uniform` or `preferential`.
    #[arg(long, default_value = "preferential")]
    attachment: Attachment,
    #[arg(long, default_value_t = 0.05)]
    dust_fraction: f64,
    #[arg(long, default_value_t = 0.001)]
    fee_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    change_rate: f64,
    /// Most spenders drained by one transaction.
    #[arg(long, default_value_t = 3)]
    max_inputs: u32,
    /// Most receivers paid by one transaction.
    #[arg(long, default_value_t = 3)]
    max_outputs: u32,
    /// Initial block subsidy in satoshi.
    #[arg(long, default_value_t = 5_000_000_000)]
    block_reward: u64,
    #[arg(long, default_value_t = 1460)]
    halving_interval: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn synth(args: SynthArgs) -> Result<(), PipelineError> {
    let cfg = SynthConfig {
        seed: args.seed,
        start_year: args.start_year,
        years: args.years,
        tx_per_year: args.tx_per_year,
        blocks_per_year: args.blocks_per_year,
        new_address_rate: args.new_address_rate,
        attachment: args.attachment,
        dust_fraction: args.dust_fraction,
        fee_rate: args.fee_rate,
        change_rate: args.change_rate,
        max_inputs: args.max_inputs,
        max_outputs: args.max_outputs,
        block_reward: args.block_reward,
        halving_interval: args.halving_interval,
    };
    let records = generate_chain(&cfg)?;
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(File::create(path).map_err(|source| PipelineError::Io {
            context: format!("creating {}", path.display()),
            source,
        })?),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(sink);
    let write_err = |source| PipelineError::Io {
        context: "writing synthetic chain".into(),
        source,
    };
    writeln!(out, "{}", header_line(Delimiter::Comma)).map_err(write_err)?;
    for rec in records {
        writeln!(out, "{}", rec?.to_line(Delimiter::Comma)).map_err(write_err)?;
    }
    out.flush().map_err(write_err)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TXNET_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => args.into_config().and_then(|cfg| run_pipeline(&cfg)),
        Command::Synth(args) => synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("txnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
