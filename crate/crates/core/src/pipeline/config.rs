//! Declarative run configuration.
//!
//! Loaded from a TOML file; every field has a default, and unknown keys are
//! rejected. Command-line overrides are applied on top of the parsed file and
//! the merged result is validated once.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::backtest::BacktestConfig;
use crate::causality::{PcmciConfig, TeConfig};
use crate::clustering::{FeatureMode, Tier};
use crate::lag_select::LagConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Directory of `<TICKER>.csv` files. Relative paths resolve against the
    /// config file's directory.
    pub data_dir: PathBuf,
    /// Tickers to load; empty means every CSV file in `data_dir`.
    pub tickers: Vec<String>,
    /// Run the causal stage on close prices instead of log returns.
    pub on_prices: bool,
    pub dates: DateSettings,
    pub anomaly: AnomalySettings,
    pub volatility: VolatilitySettings,
    pub gmm: GmmSettings,
    pub granger: GrangerSettings,
    pub pcmci: PcmciConfig,
    pub ete: EteSettings,
    pub lags: LagSettings,
    pub backtest: BacktestConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            data_dir: PathBuf::from("data"),
            tickers: vec![],
            on_prices: false,
            dates: DateSettings::default(),
            anomaly: AnomalySettings::default(),
            volatility: VolatilitySettings::default(),
            gmm: GmmSettings::default(),
            granger: GrangerSettings::default(),
            pcmci: PcmciConfig::default(),
            ete: EteSettings::default(),
            lags: LagSettings::default(),
            backtest: BacktestConfig::default(),
        }
    }
}

/// Fitting and trading windows. Unset bounds fall back to a chronological
/// split of the aligned bars at `train_fraction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct DateSettings {
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    pub trade_start: Option<NaiveDate>,
    pub trade_end: Option<NaiveDate>,
    pub train_fraction: f64,
}

impl Default for DateSettings {
    fn default() -> Self {
        DateSettings { train_start: None, train_end: None, trade_start: None, trade_end: None, train_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalySettings {
    pub enabled: bool,
    pub k: usize,
    /// Only flags inside this leading fraction of the training window move
    /// its start; later flags are reported but kept in the sample.
    pub max_trim_fraction: f64,
}

impl Default for AnomalySettings {
    fn default() -> Self {
        AnomalySettings { enabled: true, k: 5, max_trim_fraction: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct VolatilitySettings {
    pub window: usize,
}

impl Default for VolatilitySettings {
    fn default() -> Self {
        VolatilitySettings { window: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct GmmSettings {
    pub components: usize,
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Fixed fitting seed; derived from the global seed when unset.
    pub seed: Option<u64>,
    pub features: FeatureMode,
    /// Tier whose tickers go on to the causal stage.
    pub tier: Tier,
}

impl Default for GmmSettings {
    fn default() -> Self {
        GmmSettings {
            components: 3,
            restarts: 10,
            tol: 1e-8,
            max_iter: 500,
            seed: None,
            features: FeatureMode::AllEstimators,
            tier: Tier::Medium,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct GrangerSettings {
    pub lag_min: usize,
    pub lag_max: usize,
    pub significance: f64,
    /// When non-empty, only these `[leader, lagger]` directions may become
    /// candidates.
    pub pinned_pairs: Vec<[String; 2]>,
}

impl Default for GrangerSettings {
    fn default() -> Self {
        GrangerSettings { lag_min: 2, lag_max: 48, significance: 0.01, pinned_pairs: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct EteSettings {
    pub tau: usize,
    pub bins: usize,
    pub shuffles: usize,
    pub z_min: f64,
}

impl Default for EteSettings {
    fn default() -> Self {
        let te = TeConfig::default();
        EteSettings { tau: te.tau, bins: te.bins, shuffles: te.n_shuffles, z_min: 2.0 }
    }
}

impl EteSettings {
    pub fn te_config(&self) -> TeConfig {
        TeConfig { tau: self.tau, bins: self.bins, n_shuffles: self.shuffles }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct LagSettings {
    pub max_lag: usize,
    pub k: usize,
    pub width: usize,
    pub split: f64,
    pub dtw_band: Option<usize>,
}

impl Default for LagSettings {
    fn default() -> Self {
        let d = LagConfig::default();
        LagSettings { max_lag: *d.grid.last().unwrap(), k: d.k, width: d.width, split: d.split, dtw_band: d.dtw_band }
    }
}

impl LagSettings {
    pub fn lag_config(&self) -> LagConfig {
        LagConfig {
            grid: (1..=self.max_lag).collect(),
            k: self.k,
            width: self.width,
            split: self.split,
            dtw_band: self.dtw_band,
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::Config { field: field.to_string(), message: message.into() }
}

fn positive(field: &str, v: usize) -> Result<(), PipelineError> {
    if v == 0 {
        return Err(invalid(field, "must be at least 1, got 0"));
    }
    Ok(())
}

fn open_unit(field: &str, v: f64) -> Result<(), PipelineError> {
    if !(v > 0.0 && v < 1.0) {
        return Err(invalid(field, format!("must be in (0, 1), got {v}")));
    }
    Ok(())
}

impl PipelineConfig {
    /// Parses a TOML file and resolves `data_dir` against its directory.
    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::ConfigParse(format!("{}: {e}", path.display())))?;
        let mut cfg = PipelineConfig::from_toml(&text)?;
        if cfg.data_dir.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data_dir = dir.join(&cfg.data_dir);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<PipelineConfig, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::ConfigParse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }

    /// Checks every numeric field against its bound; the error names the field.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let d = &self.dates;
        open_unit("dates.train_fraction", d.train_fraction)?;
        let order = [
            ("dates.train_start", d.train_start),
            ("dates.train_end", d.train_end),
            ("dates.trade_start", d.trade_start),
            ("dates.trade_end", d.trade_end),
        ];
        for (i, &(name_a, a)) in order.iter().enumerate() {
            for &(name_b, b) in &order[i + 1..] {
                if let (Some(a), Some(b)) = (a, b) {
                    let strict = name_a == "dates.train_end" && name_b == "dates.trade_start";
                    if a > b || (strict && a == b) {
                        return Err(invalid(
                            name_b,
                            format!("{b} must {} {name_a} ({a})", if strict { "follow" } else { "not precede" }),
                        ));
                    }
                }
            }
        }
        positive("anomaly.k", self.anomaly.k)?;
        let f = self.anomaly.max_trim_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err(invalid("anomaly.max_trim_fraction", format!("must be in [0, 1], got {f}")));
        }
        if self.volatility.window < 2 {
            return Err(invalid("volatility.window", format!("must be at least 2, got {}", self.volatility.window)));
        }

        let g = &self.gmm;
        positive("gmm.components", g.components)?;
        positive("gmm.restarts", g.restarts)?;
        positive("gmm.max_iter", g.max_iter)?;
        if !(g.tol > 0.0 && g.tol.is_finite()) {
            return Err(invalid("gmm.tol", format!("must be positive, got {}", g.tol)));
        }

        let gc = &self.granger;
        positive("granger.lag_min", gc.lag_min)?;
        if gc.lag_max < gc.lag_min {
            return Err(invalid(
                "granger.lag_max",
                format!("must be at least lag_min ({}), got {}", gc.lag_min, gc.lag_max),
            ));
        }
        open_unit("granger.significance", gc.significance)?;
        if let Some(p) = gc.pinned_pairs.iter().find(|p| p[0] == p[1]) {
            return Err(invalid("granger.pinned_pairs", format!("self pair {}", p[0])));
        }

        let p = &self.pcmci;
        if !(0.0..1.0).contains(&p.threshold) {
            return Err(invalid("pcmci.threshold", format!("must be in [0, 1), got {}", p.threshold)));
        }
        if !(p.alpha > 0.0 && p.alpha <= 1.0) {
            return Err(invalid("pcmci.alpha", format!("must be in (0, 1], got {}", p.alpha)));
        }
        positive("pcmci.max_lag", p.max_lag)?;

        let e = &self.ete;
        positive("ete.tau", e.tau)?;
        if e.bins < 2 {
            return Err(invalid("ete.bins", format!("must be at least 2, got {}", e.bins)));
        }
        if e.shuffles < crate::causality::entropy::MIN_SHUFFLES {
            return Err(invalid(
                "ete.shuffles",
                format!("must be at least {}, got {}", crate::causality::entropy::MIN_SHUFFLES, e.shuffles),
            ));
        }
        if !e.z_min.is_finite() {
            return Err(invalid("ete.z_min", "must be finite"));
        }

        let l = &self.lags;
        positive("lags.max_lag", l.max_lag)?;
        positive("lags.k", l.k)?;
        positive("lags.width", l.width)?;
        open_unit("lags.split", l.split)?;

        let b = &self.backtest;
        if !(b.commission >= 0.0 && b.commission.is_finite()) {
            return Err(invalid("backtest.commission", format!("must be non-negative, got {}", b.commission)));
        }
        if !(b.capital > b.commission && b.capital.is_finite()) {
            return Err(invalid(
                "backtest.capital",
                format!("must exceed commission ({}), got {}", b.commission, b.capital),
            ));
        }
        positive("backtest.ma_window", b.ma_window)?;
        if !b.risk_free.is_finite() {
            return Err(invalid("backtest.risk_free", "must be finite"));
        }
        if !(b.periods_per_year > 0.0 && b.periods_per_year.is_finite()) {
            return Err(invalid("backtest.periods_per_year", format!("must be positive, got {}", b.periods_per_year)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(c.pcmci.threshold, 0.15);
        assert_eq!(c.granger.significance, 0.01);
        assert_eq!((c.lags.k, c.backtest.capital, c.backtest.commission), (7, 1000.0, 9.0));
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let c = PipelineConfig::from_toml("seed = 7\n[granger]\nlag_max = 10\n[gmm]\nfeatures = { single = \"GK\" }\n")
            .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.granger.lag_max, 10);
        assert_eq!(c.granger.lag_min, 2);
        assert_eq!(c.gmm.features, FeatureMode::Single(crate::volatility::Estimator::GarmanKlass));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(PipelineConfig::from_toml("sead = 1"), Err(PipelineError::ConfigParse(_))));
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = PipelineConfig::default();
        c.granger.significance = 1.5;
        match c.validate() {
            Err(PipelineError::Config { field, message }) => {
                assert_eq!(field, "granger.significance");
                assert!(message.contains("(0, 1)"));
            }
            other => panic!("{other:?}"),
        }
        let mut c = PipelineConfig::default();
        c.ete.shuffles = 5;
        assert!(matches!(c.validate(), Err(PipelineError::Config { field, .. }) if field == "ete.shuffles"));
        let mut c = PipelineConfig::default();
        c.dates.train_end = NaiveDate::from_ymd_opt(2023, 6, 8);
        c.dates.trade_start = c.dates.train_end;
        assert!(matches!(c.validate(), Err(PipelineError::Config { field, .. }) if field == "dates.trade_start"));
    }
}
