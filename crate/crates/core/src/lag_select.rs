//! DTW similarity and KNN-based execution-lag selection.
//!
//! The executed lag is the one whose lagged leader returns best predict the
//! lagger's next close direction out of sample. DTW distances are reported
//! alongside as diagnostics only.

use chrono::NaiveDate;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{PriceSeries, ReturnSeries};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LagError {
    #[error("sequence is empty")]
    Empty,
    #[error("band {band} narrower than length difference {need}")]
    BandTooNarrow { band: usize, need: usize },
    #[error("lag must be positive")]
    ZeroLag,
    #[error("feature width must be positive")]
    ZeroWidth,
    #[error("need at least {need} aligned bars, have {have}")]
    InsufficientHistory { need: usize, have: usize },
    #[error("k = {k} invalid for {train} training rows")]
    BadK { k: usize, train: usize },
    #[error("training split holds a single class")]
    SingleClass,
    #[error("split fraction {0} outside (0, 1)")]
    BadSplit(f64),
    #[error("lag grid is empty")]
    EmptyGrid,
    #[error("every lag in the grid was degenerate")]
    AllDegenerate,
    #[error("feature dimension {got} differs from training dimension {want}")]
    Dimension { want: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Down,
    Up,
}

impl Direction {
    /// Strictly positive change is up; zero or negative is down.
    pub fn of_change(delta: f64) -> Direction {
        if delta > 0.0 {
            Direction::Up
        } else {
            Direction::Down
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DtwResult {
    pub distance: f64,
    pub path_len: usize,
    pub band: Option<usize>,
}

/// Dynamic time warping with squared pointwise cost; the distance is the
/// square root of the optimal path cost. `band` restricts `|i - j|`.
pub fn dtw_distance(a: &[f64], b: &[f64], band: Option<usize>) -> Result<DtwResult, LagError> {
    if a.is_empty() || b.is_empty() {
        return Err(LagError::Empty);
    }
    let (n, m) = (a.len(), b.len());
    if let Some(w) = band {
        if w < n.abs_diff(m) {
            return Err(LagError::BandTooNarrow { band: w, need: n.abs_diff(m) });
        }
    }
    let w = band.unwrap_or(n.max(m));
    let cols = m + 1;
    let mut cost = vec![f64::INFINITY; (n + 1) * cols];
    cost[0] = 0.0;
    for i in 1..=n {
        let lo = i.saturating_sub(w).max(1);
        let hi = (i + w).min(m);
        for j in lo..=hi {
            let d = a[i - 1] - b[j - 1];
            let best = cost[(i - 1) * cols + j - 1].min(cost[(i - 1) * cols + j]).min(cost[i * cols + j - 1]);
            cost[i * cols + j] = d * d + best;
        }
    }

    // backtrack, preferring the diagonal on ties
    let (mut i, mut j, mut len) = (n, m, 1);
    while (i, j) != (1, 1) {
        let diag = if i > 1 && j > 1 { cost[(i - 1) * cols + j - 1] } else { f64::INFINITY };
        let up = if i > 1 { cost[(i - 1) * cols + j] } else { f64::INFINITY };
        let left = if j > 1 { cost[i * cols + j - 1] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        len += 1;
    }
    Ok(DtwResult { distance: cost[n * cols + m].sqrt(), path_len: len, band })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LagDataset {
    /// Date of the labelled lagger bar.
    pub dates: Vec<NaiveDate>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Direction>,
}

impl LagDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Rows pair the lagger's close direction into bar `t` with the leader
/// returns ending at bars `t-lag, ..., t-lag-width+1`. Leader and lagger are
/// matched by date.
pub fn build_lag_dataset(
    leader: &ReturnSeries,
    lagger: &PriceSeries,
    lag: usize,
    width: usize,
) -> Result<LagDataset, LagError> {
    if lag == 0 {
        return Err(LagError::ZeroLag);
    }
    if width == 0 {
        return Err(LagError::ZeroWidth);
    }
    let bars = lagger.bars();
    let mut out = LagDataset { dates: vec![], features: vec![], labels: vec![] };
    for j in 1..bars.len() {
        let Ok(i) = leader.dates.binary_search(&bars[j].date) else { continue };
        if i < lag + width - 1 {
            continue;
        }
        out.dates.push(bars[j].date);
        out.features.push((0..width).map(|w| leader.values[i - lag - w]).collect());
        out.labels.push(Direction::of_change(bars[j].close - bars[j - 1].close));
    }
    if out.len() < 2 {
        return Err(LagError::InsufficientHistory { need: lag + width + 2, have: out.len().min(bars.len()) });
    }
    Ok(out)
}

/// Euclidean k-nearest-neighbour vote. Distance ties go to the lower
/// training index; vote ties go to `Down`.
pub fn knn_predict(
    features: &[Vec<f64>],
    labels: &[Direction],
    query: &[f64],
    k: usize,
) -> Result<Direction, LagError> {
    if features.is_empty() {
        return Err(LagError::Empty);
    }
    if k == 0 || k > features.len() {
        return Err(LagError::BadK { k, train: features.len() });
    }
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        if f.len() != query.len() {
            return Err(LagError::Dimension { want: query.len(), got: f.len() });
        }
        let d2: f64 = f.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        dist.push((d2, i));
    }
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, cmp);
    }
    let up = dist[..k].iter().filter(|&&(_, i)| labels[i] == Direction::Up).count();
    Ok(if 2 * up > k { Direction::Up } else { Direction::Down })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LagConfig {
    pub grid: Vec<usize>,
    pub k: usize,
    /// Number of lagged leader returns per feature vector.
    pub width: usize,
    /// Chronological training fraction.
    pub split: f64,
    /// Sakoe-Chiba band for the diagnostic DTW distances.
    pub dtw_band: Option<usize>,
}

impl Default for LagConfig {
    fn default() -> Self {
        LagConfig { grid: (1..=10).collect(), k: 7, width: 1, split: 0.8, dtw_band: Some(10) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LagEvaluation {
    pub lag: usize,
    pub accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Trains on the first `split` fraction of the dataset at `lag` and reports
/// out-of-sample directional accuracy.
pub fn lag_accuracy(
    leader: &ReturnSeries,
    lagger: &PriceSeries,
    lag: usize,
    config: &LagConfig,
) -> Result<LagEvaluation, LagError> {
    if !(config.split > 0.0 && config.split < 1.0) {
        return Err(LagError::BadSplit(config.split));
    }
    let data = build_lag_dataset(leader, lagger, lag, config.width)?;
    let n_train = ((data.len() as f64) * config.split).floor() as usize;
    if n_train == 0 || n_train == data.len() {
        return Err(LagError::InsufficientHistory { need: lag + config.width + 2, have: data.len() });
    }
    let (train_x, test_x) = data.features.split_at(n_train);
    let (train_y, test_y) = data.labels.split_at(n_train);
    if train_y.iter().all(|&l| l == train_y[0]) {
        return Err(LagError::SingleClass);
    }
    let mut correct = 0;
    for (q, &truth) in test_x.iter().zip(test_y) {
        if knn_predict(train_x, train_y, q, config.k)? == truth {
            correct += 1;
        }
    }
    Ok(LagEvaluation { lag, accuracy: correct as f64 / test_y.len() as f64, n_train, n_test: test_y.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SkippedLag {
    pub lag: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LagSearchResult {
    pub leader: String,
    pub lagger: String,
    pub k: usize,
    pub width: usize,
    pub split: f64,
    pub evaluations: Vec<LagEvaluation>,
    pub skipped: Vec<SkippedLag>,
    pub optimal_lag: usize,
    pub best_accuracy: f64,
    /// DTW of the unshifted return series.
    pub dtw: Option<DtwResult>,
    /// DTW of leader returns shifted forward by each grid lag against the lagger's.
    pub dtw_by_lag: Vec<(usize, f64)>,
}

fn simple_returns(series: &PriceSeries) -> Vec<f64> {
    series.closes().windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// Evaluates the grid and returns the most accurate lag, smallest on ties.
pub fn optimal_lag(
    leader: &ReturnSeries,
    lagger: &PriceSeries,
    config: &LagConfig,
) -> Result<LagSearchResult, LagError> {
    if config.grid.is_empty() {
        return Err(LagError::EmptyGrid);
    }
    let mut grid = config.grid.clone();
    grid.sort_unstable();
    grid.dedup();
    let results = par::map(&grid, |&d| lag_accuracy(leader, lagger, d, config));
    let mut evaluations = vec![];
    let mut skipped = vec![];
    for (&lag, r) in grid.iter().zip(results) {
        match r {
            Ok(e) => evaluations.push(e),
            Err(e) => skipped.push(SkippedLag { lag, reason: e.to_string() }),
        }
    }
    let best = evaluations
        .iter()
        .fold(None::<&LagEvaluation>, |b, e| match b {
            Some(b) if b.accuracy >= e.accuracy => Some(b),
            _ => Some(e),
        })
        .ok_or(LagError::AllDegenerate)?;

    let target = simple_returns(lagger);
    let lead = &leader.values;
    let dtw = dtw_distance(lead, &target, config.dtw_band.map(|w| w.max(lead.len().abs_diff(target.len())))).ok();
    let dtw_by_lag = grid
        .iter()
        .filter_map(|&d| {
            let n = lead.len().min(target.len());
            if d >= n {
                return None;
            }
            let (a, b) = (&lead[lead.len() - n..lead.len() - d], &target[target.len() - n + d..]);
            dtw_distance(a, b, config.dtw_band).ok().map(|r| (d, r.distance))
        })
        .collect();

    Ok(LagSearchResult {
        leader: leader.ticker.clone(),
        lagger: lagger.ticker().to_string(),
        k: config.k,
        width: config.width,
        split: config.split,
        optimal_lag: best.lag,
        best_accuracy: best.accuracy,
        evaluations,
        skipped,
        dtw,
        dtw_by_lag,
    })
}
