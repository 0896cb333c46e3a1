//! Granger causality F-test and lookback-order scan.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::ols::{design_with_intercept, ols_fit};
use super::CausalError;
use crate::market_data::ReturnSeries;
use crate::par;
use crate::stats::f_sf;

/// Outcome of one test of `cause -> effect` at lag order `lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GrangerResult {
    pub cause: String,
    pub effect: String,
    pub lag: usize,
    pub rss_restricted: f64,
    pub rss_unrestricted: f64,
    pub f_stat: f64,
    pub p_value: f64,
    /// Usable observations after dropping the first `lag`.
    pub n_obs: usize,
}

/// Smallest series length that supports lag order `lag`.
pub fn min_length(lag: usize) -> usize {
    3 * lag + 2
}

/// Tests whether lags `1..=l` of `x` improve an AR(`l`) fit of `y`.
///
/// Restricted: `y_t ~ 1 + y_{t-1..t-l}`; unrestricted adds `x_{t-1..t-l}`.
/// `F = ((RSS_r - RSS_u) / l) / (RSS_u / (T - 2l - 1))` with `T = n - l`.
pub fn granger_test(x: &ReturnSeries, y: &ReturnSeries, l: usize) -> Result<GrangerResult, CausalError> {
    let (cause, effect) = (x.ticker.clone(), y.ticker.clone());
    let r = granger_values(&x.values, &y.values, l)?;
    Ok(GrangerResult { cause, effect, ..r })
}

pub(crate) fn granger_values(x: &[f64], y: &[f64], l: usize) -> Result<GrangerResult, CausalError> {
    if x.len() != y.len() {
        return Err(CausalError::Misaligned { left: x.len(), right: y.len() });
    }
    if l == 0 {
        return Err(CausalError::ZeroLag);
    }
    let n = y.len();
    let usable = n.saturating_sub(l);
    if usable < 2 * l + 2 {
        return Err(CausalError::InsufficientSample { lag: l, need: 2 * l + 2, have: usable });
    }
    let target = &y[l..];
    let lags = |s: &[f64]| -> Vec<Vec<f64>> { (1..=l).map(|i| s[l - i..n - i].to_vec()).collect() };
    let y_lags = lags(y);
    let mut all = y_lags.clone();
    all.extend(lags(x));

    let restricted = ols_fit(&design_with_intercept(usable, &y_lags), target)?;
    let unrestricted = ols_fit(&design_with_intercept(usable, &all), target)?;
    let (rss1, rss2) = (restricted.rss, unrestricted.rss);
    let df1 = l as f64;
    let df2 = (usable - 2 * l - 1) as f64;
    let (f_stat, p_value) = if rss2 <= 0.0 {
        if rss1 > rss2 {
            (f64::INFINITY, 0.0)
        } else {
            (0.0, 1.0)
        }
    } else {
        let f = (((rss1 - rss2) / df1) / (rss2 / df2)).max(0.0);
        (f, f_sf(f, df1, df2))
    };
    Ok(GrangerResult {
        cause: String::new(),
        effect: String::new(),
        lag: l,
        rss_restricted: rss1,
        rss_unrestricted: rss2,
        f_stat,
        p_value,
        n_obs: usable,
    })
}

/// p-values of one ordered pair over the scanned lag orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PairScan {
    pub cause: String,
    pub effect: String,
    /// Aligned with [`GrangerScan::lags`]; `None` where the test failed.
    pub p_values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScanWarning {
    pub lag: usize,
    pub pair: Option<(String, String)>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GrangerScan {
    pub tickers: Vec<String>,
    /// Feasible lag orders that were evaluated.
    pub lags: Vec<usize>,
    pub pairs: Vec<PairScan>,
    /// Mean p-value across pairs per entry of `lags`.
    pub mean_p: Vec<Option<f64>>,
    pub optimal_lag: Option<usize>,
    pub significance: f64,
    /// Pairs with `p < significance` at the optimal lag, ascending p-value.
    pub candidates: Vec<GrangerResult>,
    pub warnings: Vec<ScanWarning>,
}

/// Runs [`granger_test`] for every ordered pair of `series` and every lag in
/// `lags`, then picks the lag order minimising the mean p-value.
///
/// Lags whose sample is too short are skipped with a warning.
pub fn granger_scan(series: &[ReturnSeries], lags: &[usize], significance: f64) -> Result<GrangerScan, CausalError> {
    if let Some(s) = series.iter().find(|s| s.len() != series[0].len()) {
        return Err(CausalError::Misaligned { left: series[0].len(), right: s.len() });
    }
    let n = series.first().map_or(0, ReturnSeries::len);
    let mut warnings = Vec::new();
    let mut feasible = Vec::new();
    for &l in lags {
        if l == 0 || n < min_length(l) {
            warnings.push(ScanWarning {
                lag: l,
                pair: None,
                reason: format!("needs {} observations, have {n}", min_length(l)),
            });
        } else {
            feasible.push(l);
        }
    }

    let pair_idx: Vec<(usize, usize)> =
        (0..series.len()).flat_map(|i| (0..series.len()).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let cells: Vec<(usize, usize)> =
        (0..pair_idx.len()).flat_map(|p| (0..feasible.len()).map(move |k| (p, k))).collect();
    let results = par::map(&cells, |&(p, k)| {
        let (i, j) = pair_idx[p];
        granger_test(&series[i], &series[j], feasible[k])
    });

    let mut pairs: Vec<PairScan> = pair_idx
        .iter()
        .map(|&(i, j)| PairScan {
            cause: series[i].ticker.clone(),
            effect: series[j].ticker.clone(),
            p_values: vec![None; feasible.len()],
        })
        .collect();
    let mut full: Vec<Vec<Option<GrangerResult>>> = vec![vec![None; feasible.len()]; pair_idx.len()];
    for (&(p, k), res) in cells.iter().zip(results) {
        match res {
            Ok(r) => {
                pairs[p].p_values[k] = Some(r.p_value);
                full[p][k] = Some(r);
            }
            Err(e) => warnings.push(ScanWarning {
                lag: feasible[k],
                pair: Some((pairs[p].cause.clone(), pairs[p].effect.clone())),
                reason: e.to_string(),
            }),
        }
    }

    let mean_p: Vec<Option<f64>> = (0..feasible.len())
        .map(|k| {
            let ps: Vec<f64> = pairs.iter().filter_map(|p| p.p_values[k]).collect();
            (!ps.is_empty()).then(|| crate::stats::mean(&ps))
        })
        .collect();
    let mut best: Option<usize> = None;
    for (k, m) in mean_p.iter().enumerate() {
        if let Some(m) = m {
            if best.is_none_or(|b| *m < mean_p[b].unwrap()) {
                best = Some(k);
            }
        }
    }

    let mut candidates: Vec<GrangerResult> = match best {
        Some(k) => full.iter().filter_map(|row| row[k].clone()).filter(|r| r.p_value < significance).collect(),
        None => Vec::new(),
    };
    candidates.sort_by(|a, b| {
        a.p_value.total_cmp(&b.p_value).then_with(|| (&a.cause, &a.effect).cmp(&(&b.cause, &b.effect)))
    });

    Ok(GrangerScan {
        tickers: series.iter().map(|s| s.ticker.clone()).collect(),
        optimal_lag: best.map(|k| feasible[k]),
        lags: feasible,
        pairs,
        mean_p,
        significance,
        candidates,
        warnings,
    })
}
