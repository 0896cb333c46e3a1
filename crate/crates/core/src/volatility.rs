//! Range-based historical volatility estimators over rolling windows.
//!
//! All estimators return per-period (daily) standard deviations. Composite
//! variances that come out negative on pathological bars are floored at zero
//! before the square root. Windows advance one bar at a time.

use std::fmt;

use chrono::NaiveDate;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{align, DataError, OhlcBar, PriceSeries};
use crate::par;

/// Multiplier that converts a daily σ to an annualised one.
pub const ANNUALISATION: f64 = 15.874_507_866_387_544; // sqrt(252)

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolatilityError {
    #[error("window {window} needs {need} bars but `{ticker}` has {have}")]
    WindowTooLong { ticker: String, window: usize, need: usize, have: usize },
    #[error("window must be at least {min} for {estimator}")]
    WindowTooShort { estimator: Estimator, min: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
pub enum Estimator {
    #[serde(rename = "PK")]
    Parkinson,
    #[serde(rename = "GK")]
    GarmanKlass,
    #[serde(rename = "RS")]
    RogersSatchell,
    #[serde(rename = "YZ")]
    YangZhang,
}

impl Estimator {
    pub const ALL: [Estimator; 4] =
        [Estimator::Parkinson, Estimator::GarmanKlass, Estimator::RogersSatchell, Estimator::YangZhang];

    pub fn code(self) -> &'static str {
        match self {
            Estimator::Parkinson => "PK",
            Estimator::GarmanKlass => "GK",
            Estimator::RogersSatchell => "RS",
            Estimator::YangZhang => "YZ",
        }
    }

    pub fn from_code(code: &str) -> Option<Estimator> {
        Estimator::ALL.into_iter().find(|e| e.code().eq_ignore_ascii_case(code))
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Rolling volatility of one estimator. `end_dates[i]` is the last bar of window `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct VolSeries {
    pub ticker: String,
    pub estimator: Estimator,
    pub window: usize,
    pub end_dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl VolSeries {
    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.values)
    }
}

fn parkinson_term(b: &OhlcBar) -> f64 {
    let hl = (b.high / b.low).ln();
    hl * hl
}

fn garman_klass_term(b: &OhlcBar) -> f64 {
    let hl = (b.high / b.low).ln();
    let co = (b.close / b.open).ln();
    0.5 * hl * hl - (2.0 * std::f64::consts::LN_2 - 1.0) * co * co
}

fn rogers_satchell_term(b: &OhlcBar) -> f64 {
    (b.high / b.close).ln() * (b.high / b.open).ln() + (b.low / b.close).ln() * (b.low / b.open).ln()
}

/// Variance of one window `bars` (length `N`) under `estimator`. For
/// Yang-Zhang `prior_close` is the close before the window's first bar.
fn window_variance(estimator: Estimator, bars: &[OhlcBar], prior_close: Option<f64>) -> f64 {
    let n = bars.len() as f64;
    match estimator {
        Estimator::Parkinson => bars.iter().map(parkinson_term).sum::<f64>() / (4.0 * n * std::f64::consts::LN_2),
        Estimator::GarmanKlass => bars.iter().map(garman_klass_term).sum::<f64>() / n,
        Estimator::RogersSatchell => bars.iter().map(rogers_satchell_term).sum::<f64>() / n,
        Estimator::YangZhang => {
            let prior = prior_close.expect("yang-zhang needs the prior close");
            let mut prev = prior;
            let overnight: Vec<f64> = bars
                .iter()
                .map(|b| {
                    let r = (b.open / prev).ln();
                    prev = b.close;
                    r
                })
                .collect();
            let open_close: Vec<f64> = bars.iter().map(|b| (b.close / b.open).ln()).collect();
            let k = yang_zhang_k(bars.len());
            let rs = bars.iter().map(rogers_satchell_term).sum::<f64>() / n;
            crate::stats::sample_variance(&overnight) + k * crate::stats::sample_variance(&open_close) + (1.0 - k) * rs
        }
    }
}

/// Yang-Zhang weight `k = 0.34 / (1.34 + (N + 1) / (N - 1))` for `N >= 2`.
pub fn yang_zhang_k(window: usize) -> f64 {
    let n = window as f64;
    0.34 / (1.34 + (n + 1.0) / (n - 1.0))
}

/// Rolling σ of `estimator` with window `window`.
///
/// Yang-Zhang consumes one extra leading bar for the first overnight return,
/// so it emits `len - window` values; the others emit `len - window + 1`.
pub fn rolling(series: &PriceSeries, estimator: Estimator, window: usize) -> Result<VolSeries, VolatilityError> {
    let min = if estimator == Estimator::YangZhang { 2 } else { 1 };
    if window < min {
        return Err(VolatilityError::WindowTooShort { estimator, min });
    }
    let lead = usize::from(estimator == Estimator::YangZhang);
    let need = window + lead;
    let bars = series.bars();
    if bars.len() < need {
        return Err(VolatilityError::WindowTooLong {
            ticker: series.ticker().to_string(),
            window,
            need,
            have: bars.len(),
        });
    }
    let ends: Vec<usize> = (need - 1..bars.len()).collect();
    let values = par::map(&ends, |&end| {
        let start = end + 1 - window;
        let prior = (lead == 1).then(|| bars[start - 1].close);
        window_variance(estimator, &bars[start..=end], prior).max(0.0).sqrt()
    });
    Ok(VolSeries {
        ticker: series.ticker().to_string(),
        estimator,
        window,
        end_dates: ends.iter().map(|&e| bars[e].date).collect(),
        values,
    })
}

pub fn parkinson(series: &PriceSeries, window: usize) -> Result<VolSeries, VolatilityError> {
    rolling(series, Estimator::Parkinson, window)
}

pub fn garman_klass(series: &PriceSeries, window: usize) -> Result<VolSeries, VolatilityError> {
    rolling(series, Estimator::GarmanKlass, window)
}

pub fn rogers_satchell(series: &PriceSeries, window: usize) -> Result<VolSeries, VolatilityError> {
    rolling(series, Estimator::RogersSatchell, window)
}

pub fn yang_zhang(series: &PriceSeries, window: usize) -> Result<VolSeries, VolatilityError> {
    rolling(series, Estimator::YangZhang, window)
}

/// All four rolling estimators of one ticker plus their means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct VolatilityProfile {
    pub ticker: String,
    pub window: usize,
    /// Means in [`Estimator::ALL`] order.
    pub means: [f64; 4],
    pub series: Vec<VolSeries>,
}

impl VolatilityProfile {
    pub fn mean_of(&self, estimator: Estimator) -> f64 {
        self.means[Estimator::ALL.iter().position(|&e| e == estimator).unwrap()]
    }
}

/// Profiles for every ticker over the dates common to all of them.
pub fn build_profiles(series_set: &[PriceSeries], window: usize) -> Result<Vec<VolatilityProfile>, VolatilityError> {
    let aligned = align(series_set)?;
    let computed = par::map(&aligned, |s| -> Result<VolatilityProfile, VolatilityError> {
        let series = Estimator::ALL.iter().map(|&e| rolling(s, e, window)).collect::<Result<Vec<_>, _>>()?;
        let mut means = [0.0; 4];
        for (m, v) in means.iter_mut().zip(&series) {
            *m = v.mean();
        }
        Ok(VolatilityProfile { ticker: s.ticker().to_string(), window, means, series })
    });
    computed.into_iter().collect()
}
