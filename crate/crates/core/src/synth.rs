//! Seeded synthetic price fixtures.
//!
//! [`generate_synthetic_universe`] builds a universe whose standardised log
//! returns follow a sparse VAR with planted lead-lag edges:
//!
//! ```text
//! z[i, t] = sum_e strength_e * z[src_e, t - lag_e] + sqrt(1 - sum_e strength_e^2) * eps[i, t]
//! r[i, t] = drift_i + vol_i * z[i, t]
//! ```
//!
//! so each planted strength is the correlation between the lagged leader and
//! the follower. OHLC bars around each close use `high = close * e^|u|`,
//! `low = close * e^-|v|` with `open` uniform in `[low, high]`.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{OhlcBar, PriceSeries};
use crate::par;
use crate::seed::replicate_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("universe needs at least one ticker and 2 bars")]
    Empty,
    #[error("duplicate ticker `{0}`")]
    DuplicateTicker(String),
    #[error("ticker `{ticker}`: volatility {vol} must be positive and finite")]
    BadVol { ticker: String, vol: f64 },
    #[error("edge {from}->{to}: unknown ticker")]
    UnknownTicker { from: String, to: String },
    #[error("edge {0}->{0}: self loops are not allowed")]
    SelfLoop(String),
    #[error("edge {from}->{to}: lag {lag} must be in 1..{limit} (T/10)")]
    BadLag { from: String, to: String, lag: usize, limit: usize },
    #[error("edge {from}->{to}: strength {strength} must be in (0, 1)")]
    BadStrength { from: String, to: String, strength: f64 },
    #[error("ticker `{0}`: squared incoming strengths must sum below 1")]
    Overloaded(String),
    #[error("spike bar {0} outside the series")]
    BadSpike(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TickerSpec {
    pub name: String,
    /// Per-bar log-return standard deviation.
    pub vol: f64,
    #[serde(default)]
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PlantedEdge {
    pub from: String,
    pub to: String,
    pub lag: usize,
    pub strength: f64,
}

/// A one-bar price dislocation applied to every ticker: the close of `bar`
/// drops by `e^-size` and recovers on the next bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Spike {
    pub bar: usize,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct UniverseSpec {
    pub tickers: Vec<TickerSpec>,
    pub bars: usize,
    #[serde(default)]
    pub edges: Vec<PlantedEdge>,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: NaiveDate,
    /// Intrabar range noise as a multiple of each ticker's vol.
    #[serde(default = "default_range_scale")]
    pub range_scale: f64,
    #[serde(default)]
    pub spike: Option<Spike>,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 2).unwrap()
}

fn default_range_scale() -> f64 {
    1.0
}

impl UniverseSpec {
    /// Nine tickers in three volatility tiers with one planted edge
    /// `MED1 -> MED2` (lag 3, strength 0.8) and a spike early in the sample.
    pub fn bundled(seed: u64) -> UniverseSpec {
        fn tier(prefix: &'static str, vol: f64) -> impl Iterator<Item = TickerSpec> {
            (1..=3).map(move |i| TickerSpec { name: format!("{prefix}{i}"), vol, drift: 0.0 })
        }
        UniverseSpec {
            tickers: tier("LOW", 0.008).chain(tier("MED", 0.018)).chain(tier("HIGH", 0.040)).collect(),
            bars: 750,
            edges: vec![PlantedEdge { from: "MED1".into(), to: "MED2".into(), lag: 3, strength: 0.8 }],
            seed,
            start: default_start(),
            range_scale: 1.0,
            spike: Some(Spike { bar: 40, size: 0.6 }),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.tickers.is_empty() || self.bars < 2 {
            return Err(SynthError::Empty);
        }
        let mut names = BTreeSet::new();
        for t in &self.tickers {
            if !names.insert(t.name.as_str()) {
                return Err(SynthError::DuplicateTicker(t.name.clone()));
            }
            if !(t.vol.is_finite() && t.vol > 0.0) {
                return Err(SynthError::BadVol { ticker: t.name.clone(), vol: t.vol });
            }
        }
        let mut load: BTreeMap<&str, f64> = BTreeMap::new();
        for e in &self.edges {
            if !names.contains(e.from.as_str()) || !names.contains(e.to.as_str()) {
                return Err(SynthError::UnknownTicker { from: e.from.clone(), to: e.to.clone() });
            }
            if e.from == e.to {
                return Err(SynthError::SelfLoop(e.from.clone()));
            }
            let limit = self.bars / 10;
            if e.lag == 0 || e.lag >= limit {
                return Err(SynthError::BadLag { from: e.from.clone(), to: e.to.clone(), lag: e.lag, limit });
            }
            if !(e.strength > 0.0 && e.strength < 1.0) {
                return Err(SynthError::BadStrength { from: e.from.clone(), to: e.to.clone(), strength: e.strength });
            }
            *load.entry(e.to.as_str()).or_default() += e.strength * e.strength;
        }
        if let Some((name, _)) = load.iter().find(|(_, &l)| l >= 1.0) {
            return Err(SynthError::Overloaded(name.to_string()));
        }
        if let Some(s) = self.spike {
            if s.bar + 1 >= self.bars {
                return Err(SynthError::BadSpike(s.bar));
            }
        }
        Ok(())
    }
}

/// `n` consecutive weekdays starting at (or after) `start`.
pub fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Prices for every ticker of `spec`, in spec order.
pub fn generate_synthetic_universe(spec: &UniverseSpec) -> Result<Vec<PriceSeries>, SynthError> {
    spec.validate()?;
    let n = spec.tickers.len();
    let index: BTreeMap<&str, usize> = spec.tickers.iter().enumerate().map(|(i, t)| (t.name.as_str(), i)).collect();
    let max_lag = spec.edges.iter().map(|e| e.lag).max().unwrap_or(0);
    let burn = 10 * max_lag;
    let total = burn + spec.bars;

    let innovations: Vec<Vec<f64>> = par::map_range(n, |i| {
        let mut rng = replicate_rng(spec.seed, i as u64);
        (0..total).map(|_| normal(&mut rng)).collect()
    });

    let mut incoming: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
    for e in &spec.edges {
        incoming[index[e.to.as_str()]].push((index[e.from.as_str()], e.lag, e.strength));
    }
    let own: Vec<f64> =
        incoming.iter().map(|inc| (1.0 - inc.iter().map(|&(_, _, s)| s * s).sum::<f64>()).sqrt()).collect();

    let mut z = vec![vec![0.0; total]; n];
    for t in 0..total {
        for i in 0..n {
            let mut v = own[i] * innovations[i][t];
            for &(src, lag, s) in &incoming[i] {
                if t >= lag {
                    v += s * z[src][t - lag];
                }
            }
            z[i][t] = v;
        }
    }

    let dates = trading_days(spec.start, spec.bars);
    let series = par::map_range(n, |i| {
        let t_spec = &spec.tickers[i];
        let mut rng = replicate_rng(spec.seed, 1_000 + i as u64);
        let mut log_close = 100f64.ln();
        let mut bars = Vec::with_capacity(spec.bars);
        for (k, &date) in dates.iter().enumerate() {
            let mut r = t_spec.drift + t_spec.vol * z[i][burn + k];
            if let Some(sp) = spec.spike {
                if k == sp.bar {
                    r -= sp.size;
                } else if k == sp.bar + 1 {
                    r += sp.size;
                }
            }
            log_close += r;
            let close = log_close.exp();
            let sd = spec.range_scale * t_spec.vol;
            let u = (sd * normal(&mut rng)).abs();
            let v = (sd * normal(&mut rng)).abs();
            let high = close * u.exp();
            let low = close * (-v).exp();
            let open = (low + rng.random::<f64>() * (high - low)).clamp(low, high);
            bars.push(OhlcBar::new(date, open, high, low, close).expect("valid by construction"));
        }
        PriceSeries::new(t_spec.name.clone(), bars).expect("dates strictly increase")
    });
    Ok(series)
}

/// Geometric Brownian motion bars with exact-open continuity (no overnight
/// gap). Each bar walks `substeps` Gaussian increments of total variance
/// `sigma^2`; high and low are the extremes of that walk.
pub fn gbm_ohlc(ticker: &str, bars: usize, sigma: f64, substeps: usize, seed: u64) -> PriceSeries {
    let step_sd = sigma / (substeps as f64).sqrt();
    // per-bar excursions relative to the open: (close, high, low) in log space
    let paths: Vec<(f64, f64, f64)> = par::map_range(bars, |b| {
        let mut rng = replicate_rng(seed, b as u64);
        let (mut x, mut hi, mut lo) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..substeps {
            x += step_sd * normal(&mut rng);
            hi = hi.max(x);
            lo = lo.min(x);
        }
        (x, hi, lo)
    });
    let dates = trading_days(default_start(), bars);
    let mut level = 100f64.ln();
    let out = paths
        .iter()
        .zip(dates)
        .map(|(&(c, h, l), date)| {
            let open = level.exp();
            let bar = OhlcBar::new(date, open, (level + h).exp(), (level + l).exp(), (level + c).exp())
                .expect("valid by construction");
            level += c;
            bar
        })
        .collect();
    PriceSeries::new(ticker, out).expect("dates strictly increase")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::log_returns;
    use crate::stats::pearson;

    fn two(edges: Vec<PlantedEdge>, bars: usize) -> UniverseSpec {
        UniverseSpec {
            tickers: vec![
                TickerSpec { name: "X".into(), vol: 0.02, drift: 0.0 },
                TickerSpec { name: "Y".into(), vol: 0.01, drift: 0.0 },
            ],
            bars,
            edges,
            seed: 9,
            start: default_start(),
            range_scale: 1.0,
            spike: None,
        }
    }

    #[test]
    fn deterministic_for_same_seed() {
        let spec = UniverseSpec::bundled(3);
        assert_eq!(generate_synthetic_universe(&spec).unwrap(), generate_synthetic_universe(&spec).unwrap());
        let other = UniverseSpec::bundled(4);
        assert_ne!(generate_synthetic_universe(&spec).unwrap(), generate_synthetic_universe(&other).unwrap());
    }

    #[test]
    fn planted_edge_shows_as_lagged_correlation() {
        let spec = two(vec![PlantedEdge { from: "X".into(), to: "Y".into(), lag: 3, strength: 0.8 }], 3000);
        let u = generate_synthetic_universe(&spec).unwrap();
        let rx = log_returns(&u[0]).unwrap().values;
        let ry = log_returns(&u[1]).unwrap().values;
        let n = rx.len();
        let c3 = pearson(&rx[..n - 3], &ry[3..]).unwrap();
        let c1 = pearson(&rx[..n - 1], &ry[1..]).unwrap();
        assert!((c3 - 0.8).abs() < 0.05, "{c3}");
        assert!(c1.abs() < 0.1, "{c1}");
        let sd = crate::stats::sample_variance(&ry).sqrt();
        assert!((sd - 0.01).abs() < 0.001, "{sd}");
    }

    #[test]
    fn rejects_invalid_specs() {
        let edge = |lag, strength| PlantedEdge { from: "X".into(), to: "Y".into(), lag, strength };
        assert!(matches!(generate_synthetic_universe(&two(vec![edge(10, 0.5)], 100)), Err(SynthError::BadLag { .. })));
        assert!(matches!(generate_synthetic_universe(&two(vec![edge(0, 0.5)], 100)), Err(SynthError::BadLag { .. })));
        assert!(matches!(
            generate_synthetic_universe(&two(vec![edge(2, 1.0)], 100)),
            Err(SynthError::BadStrength { .. })
        ));
        assert!(matches!(
            generate_synthetic_universe(&two(vec![edge(2, 0.8), edge(3, 0.8)], 100)),
            Err(SynthError::Overloaded(_))
        ));
        let mut bad = two(vec![], 100);
        bad.edges.push(PlantedEdge { from: "X".into(), to: "Q".into(), lag: 1, strength: 0.1 });
        assert!(matches!(generate_synthetic_universe(&bad), Err(SynthError::UnknownTicker { .. })));
    }

    #[test]
    fn spike_is_one_bar() {
        let mut spec = two(vec![], 100);
        spec.spike = Some(Spike { bar: 10, size: 0.5 });
        let u = generate_synthetic_universe(&spec).unwrap();
        let c = u[0].closes();
        assert!(c[10] < 0.7 * c[9] && c[11] > 1.3 * c[10]);
    }

    #[test]
    fn trading_days_skip_weekends() {
        let d = trading_days(NaiveDate::from_ymd_opt(2023, 6, 9).unwrap(), 3);
        assert_eq!(d[1], NaiveDate::from_ymd_opt(2023, 6, 12).unwrap());
    }

    #[test]
    fn gbm_bars_are_continuous() {
        let s = gbm_ohlc("G", 50, 0.02, 16, 1);
        for w in s.bars().windows(2) {
            assert!((w[1].open - w[0].close).abs() < 1e-9 * w[0].close);
        }
    }
}
