use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decentra::pipeline::{
    cmd_analyze, cmd_correlate, cmd_efa, cmd_ingest, cmd_report, cmd_synth, parse_day_list,
    parse_loadings, SynthArgs,
};
use decentra::synthlab::Intermittent;
use decentra::{PipelineError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "decentra", version, about = "Measure decentralization of blockchain consensus and token holdings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate the configured inputs, writing validation_report.json
    Ingest(ConfigArgs),
    /// Compute metric series over windowed snapshots
    Analyze(ConfigArgs),
    /// Spearman correlation matrix between metric series
    Correlate(SeriesArgs),
    /// Exploratory factor analysis of metric series
    Efa(SeriesArgs),
    /// Generate synthetic block streams and test datasets
    Synth(SynthFlags),
    /// Write a tidy CSV and a gnuplot script for metric series
    Report(ReportArgs),
}

/// Every flag overrides the configuration key of the same name.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    chain_id: Option<String>,
    /// Blocks CSV
    #[arg(long)]
    blocks: Option<String>,
    /// Balance snapshots CSV
    #[arg(long)]
    balances: Option<String>,
    /// Entity attribution CSV or JSON
    #[arg(long)]
    attribution: Option<String>,
    /// Transaction inputs CSV for multi-input clustering
    #[arg(long)]
    tx_inputs: Option<String>,
    /// Address to stake key CSV
    #[arg(long)]
    stake_keys: Option<String>,
    /// consensus or tokenomics
    #[arg(long)]
    layer: Option<String>,
    /// Window length such as 7d, or a block count such as 2016b
    #[arg(long)]
    resource_window: Option<String>,
    /// same, all_time or factor:K
    #[arg(long)]
    population_window: Option<String>,
    /// centered or trailing
    #[arg(long)]
    population_anchor: Option<String>,
    /// Snapshot spacing such as 7d
    #[arg(long)]
    frequency: Option<String>,
    /// none, top_k:K, top_percent:P or min_balance:B
    #[arg(long)]
    threshold: Option<String>,
    /// Comma-separated metrics, e.g. entropy,gini,tau:0.33,cr:3
    #[arg(long)]
    metrics: Option<String>,
    /// First day of the study window (YYYY-MM-DD)
    #[arg(long)]
    study_start: Option<String>,
    /// Day after the study window (YYYY-MM-DD)
    #[arg(long)]
    study_end: Option<String>,
    #[arg(long)]
    pipeline_order: Option<String>,
    /// none, varimax or promax
    #[arg(long)]
    rotation: Option<String>,
    #[arg(long)]
    promax_power: Option<String>,
    /// drop, winsorize or transform-only
    #[arg(long)]
    outlier_treatment: Option<String>,
    /// box-cox or none
    #[arg(long)]
    transform: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    box_cox_shift: Option<String>,
    /// Number of factors; defaults to the Kaiser count
    #[arg(long)]
    n_factors: Option<String>,
    /// Run factor analysis despite failed adequacy or overlapping windows
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    force: Option<String>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<String>,
    /// Output directory
    #[arg(long)]
    output: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> [(&'static str, Option<&String>); 25] {
        [
            ("chain-id", self.chain_id.as_ref()),
            ("blocks", self.blocks.as_ref()),
            ("balances", self.balances.as_ref()),
            ("attribution", self.attribution.as_ref()),
            ("tx-inputs", self.tx_inputs.as_ref()),
            ("stake-keys", self.stake_keys.as_ref()),
            ("layer", self.layer.as_ref()),
            ("resource-window", self.resource_window.as_ref()),
            ("population-window", self.population_window.as_ref()),
            ("population-anchor", self.population_anchor.as_ref()),
            ("frequency", self.frequency.as_ref()),
            ("threshold", self.threshold.as_ref()),
            ("metrics", self.metrics.as_ref()),
            ("study-start", self.study_start.as_ref()),
            ("study-end", self.study_end.as_ref()),
            ("pipeline-order", self.pipeline_order.as_ref()),
            ("rotation", self.rotation.as_ref()),
            ("promax-power", self.promax_power.as_ref()),
            ("outlier-treatment", self.outlier_treatment.as_ref()),
            ("transform", self.transform.as_ref()),
            ("box-cox-shift", self.box_cox_shift.as_ref()),
            ("n-factors", self.n_factors.as_ref()),
            ("force", self.force.as_ref()),
            ("jobs", self.jobs.as_ref()),
            ("output", self.output.as_ref()),
        ]
    }

    fn load(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct SeriesArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Series CSV files (snapshot,value,n) or wide tables (snapshot,<metric>,...)
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthFlags {
    /// Number of entities (defaults to the number of shares, or 10)
    #[arg(long)]
    entities: Option<usize>,
    /// Comma-separated planted shares summing to 1
    #[arg(long, value_delimiter = ',', conflicts_with = "zipf")]
    shares: Option<Vec<f64>>,
    /// Zipf exponent for planted shares
    #[arg(long)]
    zipf: Option<f64>,
    #[arg(long, default_value_t = 144.0)]
    blocks_per_day: f64,
    #[arg(long, default_value_t = 70)]
    days: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// STABLE,PERIOD,ACTIVE: entities past the first STABLE mine ACTIVE of every PERIOD days
    #[arg(long)]
    intermittent: Option<String>,
    /// Window lengths for the confidence experiment, e.g. 1d,7d,14d
    #[arg(long)]
    window_experiment: Option<String>,
    #[arg(long, default_value_t = 100)]
    repetitions: usize,
    /// Planted loading matrix, rows separated by ';', e.g. "0.8,0;0,0.8"
    #[arg(long)]
    factor_loadings: Option<String>,
    /// Rows of the planted-factor dataset
    #[arg(long, default_value_t = 500)]
    rows: usize,
    #[arg(long, default_value_t = 0.6)]
    noise_sd: f64,
    #[arg(long, default_value = "synth")]
    output: PathBuf,
}

fn parse_intermittent(s: &str) -> Result<Intermittent, PipelineError> {
    let parts: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| PipelineError::Config(format!("intermittent: expected STABLE,PERIOD,ACTIVE, got {s:?}")))?;
    match parts[..] {
        [stable, period, active] => Ok(Intermittent {
            stable_entities: stable as usize,
            period_days: period,
            active_days: active,
        }),
        _ => Err(PipelineError::Config(format!(
            "intermittent: expected STABLE,PERIOD,ACTIVE, got {s:?}"
        ))),
    }
}

impl SynthFlags {
    fn to_args(&self) -> Result<SynthArgs, PipelineError> {
        Ok(SynthArgs {
            entities: self.entities,
            shares: self.shares.clone(),
            zipf: self.zipf,
            blocks_per_day: self.blocks_per_day,
            days: self.days,
            seed: self.seed,
            intermittent: self.intermittent.as_deref().map(parse_intermittent).transpose()?,
            window_experiment: self.window_experiment.as_deref().map(parse_day_list).transpose()?,
            repetitions: self.repetitions,
            factor_loadings: self.factor_loadings.as_deref().map(parse_loadings).transpose()?,
            factor_rows: self.rows,
            noise_sd: self.noise_sd,
            output: self.output.clone(),
        })
    }
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Series CSV files
    files: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    output: PathBuf,
}

fn list(files: &[PathBuf]) -> String {
    files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join("\n")
}

fn run(command: Command) -> Result<String, PipelineError> {
    match command {
        Command::Ingest(args) => {
            let s = cmd_ingest(&args.load()?)?;
            let mut out = format!("chain {}: {} file(s) parsed, {} row(s) dropped", s.chain_id, s.files.len(), s.rows_dropped);
            for w in &s.warnings {
                out.push_str(&format!("\nwarning: {w}"));
            }
            Ok(out)
        }
        Command::Analyze(args) => {
            let s = cmd_analyze(&args.load()?)?;
            Ok(format!(
                "{} of {} snapshot(s) computed for {} metric(s)\n{}",
                s.manifest.snapshots_computed,
                s.manifest.snapshots_requested,
                s.series.len(),
                list(&s.files)
            ))
        }
        Command::Correlate(args) => {
            let s = cmd_correlate(&args.config.load()?, &args.files)?;
            let mut out = format!("{} variable(s) correlated", s.variables.len());
            if !s.excluded.is_empty() {
                out.push_str(&format!(", constant and excluded: {}", s.excluded.join(", ")));
            }
            Ok(format!("{out}\n{}", list(&s.files)))
        }
        Command::Efa(args) => {
            let s = cmd_efa(&args.config.load()?, &args.files)?;
            Ok(format!(
                "KMO {:.3}, Kaiser count {}, {} factor(s) extracted\n{}",
                s.kmo.overall,
                s.kaiser_count,
                s.model.n_factors,
                list(&s.files)
            ))
        }
        Command::Synth(flags) => {
            let s = cmd_synth(&flags.to_args()?)?;
            Ok(format!("{} block(s) generated\n{}", s.blocks, list(&s.files)))
        }
        Command::Report(args) => {
            let s = cmd_report(&args.files, &args.output)?;
            Ok(format!("{} series reported\n{}", s.series, list(&s.files)))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            if !summary.is_empty() {
                let _ = writeln!(std::io::stdout(), "{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
