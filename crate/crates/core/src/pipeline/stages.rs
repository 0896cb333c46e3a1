//! Stage computations and their artifact types.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::NaiveDate;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::{sha256_hex, PipelineError, Stage, StageError, VERSION};
use crate::backtest::{
    buy_and_hold, lead_lag_trend_follow, portfolio_aggregate, BacktestResult, Metrics, PortfolioResult,
};
use crate::causality::entropy::effective_transfer_entropy;
use crate::causality::{
    granger_scan, pcmci_graph, select_final_pairs, CausalEdge, CausalGraph, EteResult, FinalPair, GrangerResult,
    GrangerScan,
};
use crate::clustering::{
    features_from_profiles, gmm_assign, gmm_fit, select_tier, ClusterAssignment, FeatureMode, GmmConfig, GmmModel, Tier,
};
use crate::lag_select::{optimal_lag, LagSearchResult};
use crate::market_data::{
    align, close_levels, knn_anomaly_scores, log_returns, parse_ohlc_csv, pct_changes, PriceSeries, ReturnSeries,
};
use crate::seed::{derive, stage as seed_stage};
use crate::volatility::{build_profiles, VolatilityProfile};

pub const GRAPH_DOT: &str = "causal_graph.dot";
pub const LAGS_CSV: &str = "lags.csv";
pub const TRADES_CSV: &str = "trades.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub bars: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AnomalySummary {
    pub ticker: String,
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub threshold: f64,
    pub flagged: Vec<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct IngestArtifact {
    pub tickers: Vec<String>,
    pub train: DateRange,
    pub trade: DateRange,
    /// Training begins after this date because of a flagged anomaly in the
    /// leading part of the window.
    pub anomaly_cutoff: Option<NaiveDate>,
    pub anomaly_dropped_bars: usize,
    pub anomalies: Vec<AnomalySummary>,
    /// Aligned bars from the training start to the trading end.
    pub prices: Vec<PriceSeries>,
}

impl IngestArtifact {
    fn find(&self, ticker: &str) -> Result<&PriceSeries, StageError> {
        self.prices
            .iter()
            .find(|p| p.ticker() == ticker)
            .ok_or_else(|| StageError::Other(format!("ticker `{ticker}` not in ingest artifact")))
    }

    /// Bars inside the fitting window, with the no-look-ahead check.
    pub fn training(&self, ticker: &str) -> Result<PriceSeries, PipelineError> {
        let s = self
            .find(ticker)
            .map_err(PipelineError::stage(Stage::Ingest))?
            .between(Some(self.train.start), Some(self.train.end));
        match s.last_date() {
            Some(d) if d <= self.train.end => Ok(s),
            Some(d) => {
                Err(PipelineError::Invariant(format!("training data for {ticker} reaches {d} past {}", self.train.end)))
            }
            None => Err(PipelineError::Invariant(format!("empty training window for {ticker}"))),
        }
    }

    /// Bars inside the trading window; they never overlap the fitting window.
    pub fn trading(&self, ticker: &str) -> Result<PriceSeries, PipelineError> {
        let s = self
            .find(ticker)
            .map_err(PipelineError::stage(Stage::Ingest))?
            .between(Some(self.trade.start), Some(self.trade.end));
        match s.first_date() {
            Some(d) if d > self.train.end => Ok(s),
            Some(d) => Err(PipelineError::Invariant(format!(
                "trading data for {ticker} starts at {d}, inside the training window"
            ))),
            None => Err(PipelineError::Invariant(format!("empty trading window for {ticker}"))),
        }
    }
}

fn resolve_tickers(config: &PipelineConfig) -> Result<Vec<String>, PipelineError> {
    if !config.tickers.is_empty() {
        return Ok(config.tickers.clone());
    }
    let dir = &config.data_dir;
    let entries = std::fs::read_dir(dir).map_err(|_| PipelineError::MissingInput(dir.clone()))?;
    let mut out: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(PipelineError::Stage {
            stage: Stage::Ingest,
            source: StageError::Other(format!("no CSV files in {}", dir.display())),
        });
    }
    Ok(out)
}

fn range_of(dates: &[NaiveDate]) -> Option<DateRange> {
    Some(DateRange { start: *dates.first()?, end: *dates.last()?, bars: dates.len() })
}

/// Loads, aligns and windows the inputs, then drops training bars up to the
/// latest anomaly flagged in any ticker's training window.
pub fn ingest(config: &PipelineConfig) -> Result<(IngestArtifact, BTreeMap<String, String>), PipelineError> {
    let fail = PipelineError::stage(Stage::Ingest);
    let tickers = resolve_tickers(config)?;
    let mut digests = BTreeMap::new();
    let mut raw = Vec::with_capacity(tickers.len());
    for t in &tickers {
        let path: PathBuf = config.data_dir.join(format!("{t}.csv"));
        let bytes = std::fs::read(&path).map_err(|_| PipelineError::MissingInput(path.clone()))?;
        digests.insert(t.clone(), sha256_hex(&bytes));
        let series = parse_ohlc_csv(bytes.as_slice(), t)
            .map_err(|source| fail(StageError::Input { path: path.clone(), source }))?;
        raw.push(series);
    }
    let aligned = align(&raw).map_err(|e| fail(e.into()))?;
    let all_dates = aligned[0].dates();

    let d = &config.dates;
    let within: Vec<NaiveDate> = all_dates
        .iter()
        .copied()
        .filter(|x| d.train_start.is_none_or(|s| *x >= s) && d.trade_end.is_none_or(|e| *x <= e))
        .collect();
    let empty = |what: &str| fail(StageError::Other(format!("{what} window holds no bars")));
    let train_end = match (d.train_end, d.trade_start) {
        (Some(e), _) => e,
        (None, Some(s)) => *within.iter().rev().find(|x| **x < s).ok_or_else(|| empty("training"))?,
        (None, None) => {
            let n = ((within.len() as f64) * d.train_fraction).floor() as usize;
            *within.get(n.max(1) - 1).ok_or_else(|| empty("training"))?
        }
    };
    let train_dates: Vec<NaiveDate> = within.iter().copied().filter(|x| *x <= train_end).collect();
    let trade_dates: Vec<NaiveDate> =
        within.iter().copied().filter(|x| *x > train_end && d.trade_start.is_none_or(|s| *x >= s)).collect();
    let trade = range_of(&trade_dates).ok_or_else(|| empty("trading"))?;
    let mut train = range_of(&train_dates).ok_or_else(|| empty("training"))?;

    let mut anomalies = vec![];
    let mut cutoff: Option<NaiveDate> = None;
    if config.anomaly.enabled {
        for s in &aligned {
            let window = s.between(Some(train.start), Some(train.end));
            let rep = knn_anomaly_scores(&window, config.anomaly.k).map_err(|e| fail(e.into()))?;
            let dates = window.dates();
            let flagged: Vec<NaiveDate> = rep.flagged.iter().map(|&i| dates[i]).collect();
            let horizon = ((dates.len() as f64) * config.anomaly.max_trim_fraction).floor() as usize;
            if let Some(&last) = rep.flagged.iter().filter(|&&i| i < horizon).max() {
                cutoff = Some(cutoff.map_or(dates[last], |c| c.max(dates[last])));
            }
            anomalies.push(AnomalySummary {
                ticker: s.ticker().to_string(),
                k: rep.k,
                mean: rep.mean,
                std: rep.std,
                threshold: rep.threshold,
                flagged,
            });
        }
    }
    let mut dropped = 0;
    if let Some(c) = cutoff {
        let kept: Vec<NaiveDate> = train_dates.iter().copied().filter(|x| *x > c).collect();
        dropped = train_dates.len() - kept.len();
        train = range_of(&kept).ok_or_else(|| empty("post-anomaly training"))?;
    }

    let prices = aligned.iter().map(|s| s.between(Some(train.start), Some(trade.end))).collect();
    let art = IngestArtifact {
        tickers: aligned.iter().map(|s| s.ticker().to_string()).collect(),
        train,
        trade,
        anomaly_cutoff: cutoff,
        anomaly_dropped_bars: dropped,
        anomalies,
        prices,
    };
    Ok((art, digests))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct VolatilityArtifact {
    pub window: usize,
    pub train: DateRange,
    pub profiles: Vec<VolatilityProfile>,
}

pub fn volatility(config: &PipelineConfig, ingest: &IngestArtifact) -> Result<VolatilityArtifact, PipelineError> {
    let training = ingest.tickers.iter().map(|t| ingest.training(t)).collect::<Result<Vec<_>, _>>()?;
    let profiles = build_profiles(&training, config.volatility.window)
        .map_err(|e| PipelineError::stage(Stage::Volatility)(e.into()))?;
    Ok(VolatilityArtifact { window: config.volatility.window, train: ingest.train, profiles })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ClusterArtifact {
    pub features: FeatureMode,
    pub tickers: Vec<String>,
    pub feature_vectors: Vec<Vec<f64>>,
    pub model: GmmModel,
    pub assignments: Vec<ClusterAssignment>,
    pub tier: Tier,
    pub selected: Vec<String>,
}

pub fn cluster(config: &PipelineConfig, vol: &VolatilityArtifact) -> Result<ClusterArtifact, PipelineError> {
    let fail = PipelineError::stage(Stage::Cluster);
    let g = &config.gmm;
    let tickers: Vec<String> = vol.profiles.iter().map(|p| p.ticker.clone()).collect();
    let features = features_from_profiles(&vol.profiles, g.features);
    let gmm_cfg = GmmConfig {
        max_iter: g.max_iter,
        tol: g.tol,
        seed: g.seed.unwrap_or_else(|| derive(config.seed, seed_stage::CLUSTER)),
        n_restarts: g.restarts,
        ..GmmConfig::default()
    };
    let model = gmm_fit(&features, g.components, &gmm_cfg).map_err(|e| fail(e.into()))?;
    let assignments = gmm_assign(&model, &tickers, &features).map_err(|e| fail(e.into()))?;
    let selected = select_tier(&assignments, g.tier);
    Ok(ClusterArtifact {
        features: g.features,
        tickers,
        feature_vectors: features,
        model,
        assignments,
        tier: g.tier,
        selected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PairFailure {
    pub leader: String,
    pub lagger: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CausalArtifact {
    pub tickers: Vec<String>,
    pub on_prices: bool,
    /// `None` when fewer than two tickers reached this stage.
    pub scan: Option<GrangerScan>,
    /// Scan candidates after any pinned-direction filter.
    pub candidates: Vec<GrangerResult>,
    pub graph: CausalGraph,
    pub ete: Vec<EteResult>,
    pub ete_failures: Vec<PairFailure>,
    pub final_pairs: Vec<FinalPair>,
}

pub fn causal(
    config: &PipelineConfig,
    ingest: &IngestArtifact,
    cluster: &ClusterArtifact,
) -> Result<CausalArtifact, PipelineError> {
    let fail = PipelineError::stage(Stage::Causal);
    let tickers = cluster.selected.clone();
    let mut series: Vec<ReturnSeries> = Vec::with_capacity(tickers.len());
    for t in &tickers {
        let p = ingest.training(t)?;
        series.push(if config.on_prices { close_levels(&p) } else { log_returns(&p).map_err(|e| fail(e.into()))? });
    }

    let empty_graph = CausalGraph {
        nodes: tickers.clone(),
        edges: vec![],
        threshold: config.pcmci.threshold,
        alpha: config.pcmci.alpha,
        tests: vec![],
    };
    if series.len() < 2 {
        return Ok(CausalArtifact {
            tickers,
            on_prices: config.on_prices,
            scan: None,
            candidates: vec![],
            graph: empty_graph,
            ete: vec![],
            ete_failures: vec![],
            final_pairs: vec![],
        });
    }

    let gc = &config.granger;
    let lags: Vec<usize> = (gc.lag_min..=gc.lag_max).collect();
    let scan = granger_scan(&series, &lags, gc.significance).map_err(|e| fail(e.into()))?;
    let pinned: BTreeSet<(&str, &str)> = gc.pinned_pairs.iter().map(|p| (p[0].as_str(), p[1].as_str())).collect();
    let candidates: Vec<GrangerResult> = scan
        .candidates
        .iter()
        .filter(|c| pinned.is_empty() || pinned.contains(&(c.cause.as_str(), c.effect.as_str())))
        .cloned()
        .collect();

    let mut graph = pcmci_graph(&series, &candidates, &config.pcmci).map_err(|e| fail(e.into()))?;
    if graph.topological_order().is_none() {
        return Err(PipelineError::Invariant("causal graph contains a cycle".into()));
    }

    let causal_seed = derive(config.seed, seed_stage::CAUSAL);
    let te_cfg = config.ete.te_config();
    let index: BTreeMap<&str, usize> = tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut ete = vec![];
    let mut ete_failures = vec![];
    for (i, edge) in graph.edges.iter_mut().enumerate() {
        let (x, y) = (&series[index[edge.cause.as_str()]], &series[index[edge.effect.as_str()]]);
        match effective_transfer_entropy(x, y, edge.lag, &te_cfg, derive(causal_seed, i as u64)) {
            Ok(r) => {
                edge.ete = Some(r.ete);
                ete.push(r);
            }
            Err(e) => ete_failures.push(PairFailure {
                leader: edge.cause.clone(),
                lagger: edge.effect.clone(),
                reason: e.to_string(),
            }),
        }
    }
    let final_pairs = select_final_pairs(&graph, &ete, config.ete.z_min);
    Ok(CausalArtifact {
        tickers,
        on_prices: config.on_prices,
        scan: Some(scan),
        candidates,
        graph,
        ete,
        ete_failures,
        final_pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LagsArtifact {
    pub results: Vec<LagSearchResult>,
    pub failures: Vec<PairFailure>,
}

impl LagsArtifact {
    /// One row per (pair, lag) with the accuracy curve.
    pub fn to_csv(&self) -> String {
        let rows = self.results.iter().flat_map(|r| {
            r.evaluations.iter().map(move |e| {
                vec![
                    r.leader.clone(),
                    r.lagger.clone(),
                    e.lag.to_string(),
                    e.accuracy.to_string(),
                    e.n_train.to_string(),
                    e.n_test.to_string(),
                    (e.lag == r.optimal_lag).to_string(),
                ]
            })
        });
        csv_text(&["leader", "lagger", "lag", "accuracy", "n_train", "n_test", "optimal"], rows)
    }
}

fn csv_text(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are utf-8")
}

pub fn lags(
    config: &PipelineConfig,
    ingest: &IngestArtifact,
    causal: &CausalArtifact,
) -> Result<LagsArtifact, PipelineError> {
    let cfg = config.lags.lag_config();
    let mut results = vec![];
    let mut failures = vec![];
    for pair in &causal.final_pairs {
        let leader = ingest.training(&pair.leader)?;
        let lagger = ingest.training(&pair.lagger)?;
        let returns = pct_changes(&leader, 1).map_err(|e| PipelineError::stage(Stage::Lags)(e.into()))?;
        match optimal_lag(&returns, &lagger, &cfg) {
            Ok(r) => results.push(r),
            Err(e) => failures.push(PairFailure {
                leader: pair.leader.clone(),
                lagger: pair.lagger.clone(),
                reason: e.to_string(),
            }),
        }
    }
    Ok(LagsArtifact { results, failures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BacktestArtifact {
    pub trade: DateRange,
    pub strategies: Vec<BacktestResult>,
    pub benchmarks: Vec<BacktestResult>,
    pub portfolio: Option<PortfolioResult>,
    pub benchmark_portfolio: Option<PortfolioResult>,
    pub failures: Vec<PairFailure>,
}

impl BacktestArtifact {
    pub fn trades_csv(&self) -> String {
        let rows = self.strategies.iter().chain(&self.benchmarks).flat_map(|r| {
            r.trades.iter().map(move |t| {
                let side = match t.side {
                    crate::backtest::Side::Long => "long",
                    crate::backtest::Side::Short => "short",
                };
                vec![
                    r.strategy.clone(),
                    r.leader.clone().unwrap_or_default(),
                    r.target.clone(),
                    side.to_string(),
                    t.entry_date.to_string(),
                    t.exit_date.to_string(),
                    t.entry_price.to_string(),
                    t.exit_price.to_string(),
                    t.quantity.to_string(),
                    t.commission.to_string(),
                    t.pnl.to_string(),
                ]
            })
        });
        let header = [
            "strategy",
            "leader",
            "target",
            "side",
            "entry_date",
            "exit_date",
            "entry_price",
            "exit_price",
            "quantity",
            "commission",
            "pnl",
        ];
        csv_text(&header, rows)
    }
}

pub fn backtest(
    config: &PipelineConfig,
    ingest: &IngestArtifact,
    lags: &LagsArtifact,
) -> Result<BacktestArtifact, PipelineError> {
    let mut strategies = vec![];
    let mut benchmarks = vec![];
    let mut failures = vec![];
    for r in &lags.results {
        let leader = ingest.trading(&r.leader)?;
        let target = ingest.trading(&r.lagger)?;
        let run = lead_lag_trend_follow(&leader, &target, r.optimal_lag, &config.backtest)
            .and_then(|s| Ok((s, buy_and_hold(&target, &config.backtest)?)));
        match run {
            Ok((s, b)) => {
                strategies.push(s);
                benchmarks.push(b);
            }
            Err(e) => {
                failures.push(PairFailure { leader: r.leader.clone(), lagger: r.lagger.clone(), reason: e.to_string() })
            }
        }
    }
    let fail = PipelineError::stage(Stage::Backtest);
    let portfolio =
        (!strategies.is_empty()).then(|| portfolio_aggregate(&strategies)).transpose().map_err(|e| fail(e.into()))?;
    let benchmark_portfolio =
        (!benchmarks.is_empty()).then(|| portfolio_aggregate(&benchmarks)).transpose().map_err(|e| fail(e.into()))?;
    Ok(BacktestArtifact { trade: ingest.trade, strategies, benchmarks, portfolio, benchmark_portfolio, failures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TierRow {
    pub ticker: String,
    pub component: usize,
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScanSummary {
    pub lags: Vec<usize>,
    pub mean_p: Vec<Option<f64>>,
    pub optimal_lag: Option<usize>,
    pub significance: f64,
    pub candidates: Vec<GrangerResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LagRow {
    pub leader: String,
    pub lagger: String,
    pub optimal_lag: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BacktestRow {
    pub strategy: String,
    pub leader: Option<String>,
    pub target: String,
    pub lag: Option<usize>,
    pub ruined: bool,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PortfolioRow {
    pub strategies: Vec<String>,
    pub initial_capital: f64,
    pub final_equity: f64,
    pub total_profit: f64,
    pub metrics: Metrics,
}

impl From<&PortfolioResult> for PortfolioRow {
    fn from(p: &PortfolioResult) -> Self {
        PortfolioRow {
            strategies: p.strategies.clone(),
            initial_capital: p.initial_capital,
            final_equity: p.final_equity,
            total_profit: p.total_profit,
            metrics: p.metrics.clone(),
        }
    }
}

/// Aggregated, timing-free summary of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Report {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub tickers: Vec<String>,
    pub train: DateRange,
    pub trade: DateRange,
    pub anomaly_cutoff: Option<NaiveDate>,
    pub tiers: Vec<TierRow>,
    pub selected_tier: Tier,
    pub selected: Vec<String>,
    pub granger: Option<ScanSummary>,
    pub dag: Vec<CausalEdge>,
    pub ete: Vec<EteResult>,
    pub final_pairs: Vec<FinalPair>,
    pub lags: Vec<LagRow>,
    pub backtests: Vec<BacktestRow>,
    pub portfolio: Option<PortfolioRow>,
    pub benchmark_portfolio: Option<PortfolioRow>,
}

impl Report {
    pub fn assemble(
        config: &PipelineConfig,
        ingest: &IngestArtifact,
        cluster: &ClusterArtifact,
        causal: &CausalArtifact,
        lags: &LagsArtifact,
        backtest: &BacktestArtifact,
    ) -> Report {
        Report {
            version: VERSION.to_string(),
            config_hash: super::config_hash(config),
            seed: config.seed,
            tickers: ingest.tickers.clone(),
            train: ingest.train,
            trade: ingest.trade,
            anomaly_cutoff: ingest.anomaly_cutoff,
            tiers: cluster
                .assignments
                .iter()
                .map(|a| TierRow { ticker: a.ticker.clone(), component: a.component, tier: a.tier })
                .collect(),
            selected_tier: cluster.tier,
            selected: cluster.selected.clone(),
            granger: causal.scan.as_ref().map(|s| ScanSummary {
                lags: s.lags.clone(),
                mean_p: s.mean_p.clone(),
                optimal_lag: s.optimal_lag,
                significance: s.significance,
                candidates: causal.candidates.clone(),
            }),
            dag: causal.graph.edges.clone(),
            ete: causal.ete.clone(),
            final_pairs: causal.final_pairs.clone(),
            lags: lags
                .results
                .iter()
                .map(|r| LagRow {
                    leader: r.leader.clone(),
                    lagger: r.lagger.clone(),
                    optimal_lag: r.optimal_lag,
                    accuracy: r.best_accuracy,
                })
                .collect(),
            backtests: backtest
                .strategies
                .iter()
                .chain(&backtest.benchmarks)
                .map(|r| BacktestRow {
                    strategy: r.strategy.clone(),
                    leader: r.leader.clone(),
                    target: r.target.clone(),
                    lag: r.lag,
                    ruined: r.ruined,
                    metrics: r.metrics.clone(),
                })
                .collect(),
            portfolio: backtest.portfolio.as_ref().map(PortfolioRow::from),
            benchmark_portfolio: backtest.benchmark_portfolio.as_ref().map(PortfolioRow::from),
        }
    }
}
