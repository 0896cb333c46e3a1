//! `leadlag`: runs the lead-lag pipeline stage by stage or end to end.
//!
//! Settings come from the defaults, then the `--config` file, then flags.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use leadlag_core::pipeline::{self, PipelineConfig, PipelineError, Report, Stage};
use leadlag_core::seed::{derive, stage as seed_stage};
use leadlag_core::synth::UniverseSpec;
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "leadlag", version, about = "Volatility clustering, causal lead-lag discovery and backtesting")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed; overrides the config file.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Run the causal stage on close prices instead of log returns.
    #[arg(long, global = true)]
    on_prices: bool,
    /// Format of the summary printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, align and window the input CSVs.
    Ingest,
    /// Rolling volatility profiles over the training window.
    Volatility,
    /// Fit the mixture model and assign volatility tiers.
    Cluster,
    /// Granger screen, causal graph and transfer-entropy confirmation.
    Causal,
    /// Optimal trading lag for each final pair.
    Lags,
    /// Backtest the lead-lag strategies over the trading window.
    Backtest,
    /// Run every stage and write `report.json`.
    Pipeline,
    /// Write a synthetic universe to `<out>/data` with a matching config.
    Synth {
        /// JSON universe spec; defaults to the bundled nine-ticker universe.
        #[arg(long, value_name = "PATH")]
        spec: Option<PathBuf>,
    },
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        match self {
            Command::Ingest => Some(Stage::Ingest),
            Command::Volatility => Some(Stage::Volatility),
            Command::Cluster => Some(Stage::Cluster),
            Command::Causal => Some(Stage::Causal),
            Command::Lags => Some(Stage::Lags),
            Command::Backtest => Some(Stage::Backtest),
            Command::Pipeline | Command::Synth { .. } => None,
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.on_prices {
        config.on_prices = true;
    }
    config.validate()?;
    Ok(config)
}

/// A table printed either as a JSON array of objects or as CSV.
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    fn render(&self, format: Format, extra: Value) -> String {
        match format {
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Object(self.header.iter().map(|h| h.to_string()).zip(r.iter().cloned()).collect()))
                    .collect();
                let mut obj = extra;
                obj["rows"] = Value::Array(rows);
                let mut s = serde_json::to_string_pretty(&obj).expect("summary serialises");
                s.push('\n');
                s
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(vec![]);
                w.write_record(&self.header).expect("in-memory write");
                for r in &self.rows {
                    w.write_record(r.iter().map(cell)).expect("in-memory write");
                }
                String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
            }
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn pipeline_table(report: &Report) -> Table {
    let rows = report
        .final_pairs
        .iter()
        .map(|p| {
            let lag = report.lags.iter().find(|l| l.leader == p.leader && l.lagger == p.lagger);
            let bt = report
                .backtests
                .iter()
                .find(|b| b.leader.as_deref() == Some(p.leader.as_str()) && b.target == p.lagger);
            vec![
                json!(p.leader),
                json!(p.lagger),
                json!(p.lag),
                json!(p.partial_corr),
                json!(p.gct_p_value),
                json!(p.ete.ete),
                json!(p.ete.z_score),
                json!(lag.map(|l| l.optimal_lag)),
                json!(lag.map(|l| l.accuracy)),
                json!(bt.map(|b| b.metrics.total_return)),
                json!(bt.map(|b| b.metrics.final_equity)),
            ]
        })
        .collect();
    Table {
        header: vec![
            "leader",
            "lagger",
            "causal_lag",
            "partial_corr",
            "gct_p_value",
            "ete",
            "z_score",
            "optimal_lag",
            "accuracy",
            "total_return",
            "final_equity",
        ],
        rows,
    }
}

fn files_table(files: impl IntoIterator<Item = String>) -> Table {
    Table { header: vec!["artifact"], rows: files.into_iter().map(|f| vec![json!(f)]).collect() }
}

fn synth(cli: &Cli, spec_path: Option<&Path>) -> Result<String, PipelineError> {
    let mut config = load_config(cli)?;
    let spec = match spec_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|_| PipelineError::MissingInput(path.to_path_buf()))?;
            serde_json::from_str::<UniverseSpec>(&text)
                .map_err(|e| PipelineError::ConfigParse(format!("{}: {e}", path.display())))?
        }
        None => UniverseSpec::bundled(derive(config.seed, seed_stage::SYNTH)),
    };
    let data = cli.out.join("data");
    let written = pipeline::write_synthetic_universe(&spec, &data)?;
    config.data_dir = PathBuf::from("data");
    config.tickers = spec.tickers.iter().map(|t| t.name.clone()).collect();
    let config_path = cli.out.join("pipeline.toml");
    std::fs::write(&config_path, config.to_toml())
        .map_err(|source| PipelineError::Io { path: config_path.clone(), source })?;
    let mut files: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
    files.push(data.join("universe.json").display().to_string());
    files.push(config_path.display().to_string());
    Ok(files_table(files).render(cli.format, json!({ "command": "synth", "seed": spec.seed })))
}

fn run(cli: &Cli) -> Result<String, PipelineError> {
    if let Command::Synth { spec } = &cli.command {
        return synth(cli, spec.as_deref());
    }
    let config = load_config(cli)?;
    if let Some(stage) = cli.command.stage() {
        let output = pipeline::run_stage(stage, &config, &cli.out)?;
        let files = output.artifacts.iter().map(|a| cli.out.join(a).display().to_string());
        return Ok(files_table(files).render(cli.format, json!({ "command": stage.name(), "seed": config.seed })));
    }
    let report = pipeline::run_pipeline(&config, &cli.out)?;
    let extra = json!({
        "command": "pipeline",
        "seed": report.seed,
        "config_hash": report.config_hash,
        "report": cli.out.join(pipeline::REPORT_FILE).display().to_string(),
        "selected": report.selected,
        "portfolio_return": report.portfolio.as_ref().map(|p| p.metrics.total_return),
    });
    Ok(pipeline_table(&report).render(cli.format, extra))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
