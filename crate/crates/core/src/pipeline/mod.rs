//! File-backed stage orchestration.
//!
//! Each stage reads its prerequisites from the output directory, writes its
//! artifact next to them and records itself in `manifest.json`. Stage order:
//!
//! | stage        | reads                    | writes                          |
//! |--------------|--------------------------|---------------------------------|
//! | `ingest`     | CSV inputs               | `ingest.json`                   |
//! | `volatility` | ingest                   | `volatility.json`               |
//! | `cluster`    | volatility               | `cluster.json`                  |
//! | `causal`     | ingest, cluster          | `causal.json`, `causal_graph.dot` |
//! | `lags`       | ingest, causal           | `lags.json`, `lags.csv`         |
//! | `backtest`   | ingest, lags             | `backtest.json`, `trades.csv`   |
//!
//! [`run_pipeline`] runs them all and adds `report.json`. The report holds no
//! timings or absolute paths, so identical inputs give identical bytes;
//! timings live in the manifest.
//!
//! Randomness: stage `s` draws from `seed::derive(config.seed, s)` with the
//! fixed ids in [`crate::seed::stage`]; within a stage, replicate `i` uses
//! `seed::replicate_rng(stage_seed, i)` or `seed::derive(stage_seed, i)`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backtest::BacktestError;
use crate::causality::CausalError;
use crate::clustering::ClusterError;
use crate::lag_select::LagError;
use crate::market_data::DataError;
use crate::synth::SynthError;
use crate::volatility::VolatilityError;

pub mod config;
pub mod stages;

pub use config::PipelineConfig;
pub use stages::{
    BacktestArtifact, CausalArtifact, ClusterArtifact, IngestArtifact, LagsArtifact, Report, VolatilityArtifact,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Volatility,
    Cluster,
    Causal,
    Lags,
    Backtest,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Ingest, Stage::Volatility, Stage::Cluster, Stage::Causal, Stage::Lags, Stage::Backtest];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Volatility => "volatility",
            Stage::Cluster => "cluster",
            Stage::Causal => "causal",
            Stage::Lags => "lags",
            Stage::Backtest => "backtest",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Main JSON artifact.
    pub fn file(self) -> String {
        format!("{}.json", self.name())
    }

    /// Stages whose artifacts this stage reads.
    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Volatility => &[Stage::Ingest],
            Stage::Cluster => &[Stage::Volatility],
            Stage::Causal => &[Stage::Ingest, Stage::Cluster],
            Stage::Lags => &[Stage::Ingest, Stage::Causal],
            Stage::Backtest => &[Stage::Ingest, Stage::Lags],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Module error raised inside a stage.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Volatility(#[from] VolatilityError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error(transparent)]
    Lag(#[from] LagError),
    #[error(transparent)]
    Backtest(#[from] BacktestError),
    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: DataError },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: `{field}` {message}")]
    Config { field: String, message: String },
    #[error("cannot read config: {0}")]
    ConfigParse(String),
    #[error("stage `{stage}` needs `{needs}` to run first ({} is missing)", path.display())]
    MissingPrerequisite { stage: Stage, needs: Stage, path: PathBuf },
    #[error("missing input file {}", .0.display())]
    MissingInput(PathBuf),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageError,
    },
    #[error("malformed artifact {}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit code: 1 validation, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config { .. }
            | PipelineError::ConfigParse(_)
            | PipelineError::MissingPrerequisite { .. }
            | PipelineError::Synth(_) => 1,
            PipelineError::MissingInput(_) | PipelineError::Stage { .. } | PipelineError::Artifact { .. } => 2,
            PipelineError::Invariant(_) | PipelineError::Io { .. } => 3,
        }
    }

    pub(crate) fn stage(stage: Stage) -> impl Fn(StageError) -> PipelineError {
        move |source| PipelineError::Stage { stage, source }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Stable hash of the effective configuration.
pub fn config_hash(config: &PipelineConfig) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serialises").as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialise");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Artifact { path: path.to_path_buf(), message: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct StageRecord {
    pub artifacts: Vec<String>,
    pub millis: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// SHA-256 of each input CSV, by ticker.
    pub inputs: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
    pub parallel: bool,
}

impl RunManifest {
    fn new(config: &PipelineConfig) -> RunManifest {
        RunManifest {
            version: VERSION.to_string(),
            seed: config.seed,
            config_hash: config_hash(config),
            inputs: BTreeMap::new(),
            stages: BTreeMap::new(),
            parallel: crate::par::is_parallel(),
        }
    }

    /// Existing manifest in `out`, or a fresh one.
    pub fn load_or_new(out: &Path, config: &PipelineConfig) -> RunManifest {
        let mut m: RunManifest = read_json(&out.join(MANIFEST_FILE)).unwrap_or_else(|_| RunManifest::new(config));
        m.seed = config.seed;
        m.config_hash = config_hash(config);
        m.version = VERSION.to_string();
        m
    }
}

/// Outcome of one stage: the files it wrote, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutput {
    pub stage: Stage,
    pub artifacts: Vec<String>,
}

fn require(out: &Path, stage: Stage) -> Result<(), PipelineError> {
    for &needs in stage.prerequisites() {
        let path = out.join(needs.file());
        if !path.is_file() {
            return Err(PipelineError::MissingPrerequisite { stage, needs, path });
        }
    }
    Ok(())
}

fn load<T: DeserializeOwned>(out: &Path, stage: Stage) -> Result<T, PipelineError> {
    read_json(&out.join(stage.file()))
}

/// Runs one stage against the artifacts already in `out`.
pub fn run_stage(stage: Stage, config: &PipelineConfig, out: &Path) -> Result<StageOutput, PipelineError> {
    config.validate()?;
    require(out, stage)?;
    let started = Instant::now();
    let mut manifest = RunManifest::load_or_new(out, config);
    let artifacts = match stage {
        Stage::Ingest => {
            let (art, digests) = stages::ingest(config)?;
            manifest.inputs = digests;
            write_json(&out.join(stage.file()), &art)?;
            vec![stage.file()]
        }
        Stage::Volatility => {
            let ingest: IngestArtifact = load(out, Stage::Ingest)?;
            write_json(&out.join(stage.file()), &stages::volatility(config, &ingest)?)?;
            vec![stage.file()]
        }
        Stage::Cluster => {
            let vol: VolatilityArtifact = load(out, Stage::Volatility)?;
            write_json(&out.join(stage.file()), &stages::cluster(config, &vol)?)?;
            vec![stage.file()]
        }
        Stage::Causal => {
            let ingest: IngestArtifact = load(out, Stage::Ingest)?;
            let cluster: ClusterArtifact = load(out, Stage::Cluster)?;
            let art = stages::causal(config, &ingest, &cluster)?;
            write_json(&out.join(stage.file()), &art)?;
            write_file(&out.join(stages::GRAPH_DOT), art.graph.to_dot().as_bytes())?;
            vec![stage.file(), stages::GRAPH_DOT.to_string()]
        }
        Stage::Lags => {
            let ingest: IngestArtifact = load(out, Stage::Ingest)?;
            let causal: CausalArtifact = load(out, Stage::Causal)?;
            let art = stages::lags(config, &ingest, &causal)?;
            write_json(&out.join(stage.file()), &art)?;
            write_file(&out.join(stages::LAGS_CSV), art.to_csv().as_bytes())?;
            vec![stage.file(), stages::LAGS_CSV.to_string()]
        }
        Stage::Backtest => {
            let ingest: IngestArtifact = load(out, Stage::Ingest)?;
            let lags: LagsArtifact = load(out, Stage::Lags)?;
            let art = stages::backtest(config, &ingest, &lags)?;
            write_json(&out.join(stage.file()), &art)?;
            write_file(&out.join(stages::TRADES_CSV), art.trades_csv().as_bytes())?;
            vec![stage.file(), stages::TRADES_CSV.to_string()]
        }
    };
    manifest.stages.insert(
        stage.name().to_string(),
        StageRecord {
            artifacts: artifacts.clone(),
            millis: started.elapsed().as_secs_f64() * 1e3,
            config_hash: config_hash(config),
        },
    );
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(StageOutput { stage, artifacts })
}

/// Runs every stage in order and writes the aggregated report.
pub fn run_pipeline(config: &PipelineConfig, out: &Path) -> Result<Report, PipelineError> {
    config.validate()?;
    for stage in Stage::ALL {
        run_stage(stage, config, out)?;
    }
    let report = Report::assemble(
        config,
        &load(out, Stage::Ingest)?,
        &load(out, Stage::Cluster)?,
        &load(out, Stage::Causal)?,
        &load(out, Stage::Lags)?,
        &load(out, Stage::Backtest)?,
    );
    write_json(&out.join(REPORT_FILE), &report)?;
    let mut manifest = RunManifest::load_or_new(out, config);
    manifest.stages.insert(
        "report".to_string(),
        StageRecord { artifacts: vec![REPORT_FILE.to_string()], millis: 0.0, config_hash: config_hash(config) },
    );
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(report)
}

/// Writes the bundled synthetic universe as CSV files into `data_dir`
/// together with the spec that produced it.
pub fn write_synthetic_universe(
    spec: &crate::synth::UniverseSpec,
    data_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let series = crate::synth::generate_synthetic_universe(spec)?;
    std::fs::create_dir_all(data_dir).map_err(io_err(data_dir))?;
    let mut paths = vec![];
    for s in &series {
        let path = data_dir.join(format!("{}.csv", s.ticker()));
        let mut buf = Vec::new();
        crate::market_data::write_ohlc_csv(s, &mut buf).map_err(io_err(&path))?;
        write_file(&path, &buf)?;
        paths.push(path);
    }
    write_json(&data_dir.join("universe.json"), spec)?;
    Ok(paths)
}

/// JSON Schema of every file the pipeline writes, keyed by file name. The
/// copies under `docs/schemas` are generated from this.
pub fn artifact_schemas() -> Vec<(String, serde_json::Value)> {
    fn schema<T: schemars::JsonSchema>() -> serde_json::Value {
        schemars::schema_for!(T).to_value()
    }
    vec![
        (Stage::Ingest.file(), schema::<IngestArtifact>()),
        (Stage::Volatility.file(), schema::<VolatilityArtifact>()),
        (Stage::Cluster.file(), schema::<ClusterArtifact>()),
        (Stage::Causal.file(), schema::<CausalArtifact>()),
        (Stage::Lags.file(), schema::<LagsArtifact>()),
        (Stage::Backtest.file(), schema::<BacktestArtifact>()),
        (REPORT_FILE.to_string(), schema::<Report>()),
        (MANIFEST_FILE.to_string(), schema::<RunManifest>()),
        ("universe.json".to_string(), schema::<crate::synth::UniverseSpec>()),
        ("pipeline.toml".to_string(), schema::<PipelineConfig>()),
    ]
}
