//! OHLC bars, price series, returns and KNN anomaly filtering.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use chrono::NaiveDate;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("input contains no data rows")]
    Empty,
    #[error("missing required column `{0}` in header")]
    MissingColumn(&'static str),
    #[error("line {line}: malformed row: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: invalid bar: {reason}")]
    InvalidBar { line: u64, reason: String },
    #[error("invalid bar on {date}: {reason}")]
    Bar { date: NaiveDate, reason: String },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("dates not strictly increasing at index {0}")]
    Unordered(usize),
    #[error("series `{ticker}` has {have} bars, need at least {need}")]
    TooShort { ticker: String, have: usize, need: usize },
    #[error("neighbour count k must be in 1..{len}, got {k}")]
    BadNeighbourCount { k: usize, len: usize },
    #[error("lag must be positive")]
    ZeroLag,
    #[error("non-finite return at index {0}")]
    NonFinite(usize),
    #[error("series have no dates in common")]
    EmptyIntersection,
    #[error("csv error: {0}")]
    Csv(String),
}

/// One trading period. Construct through [`OhlcBar::new`] to enforce
/// `0 < low <= open, close <= high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OhlcBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl OhlcBar {
    pub fn new(date: NaiveDate, open: f64, high: f64, low: f64, close: f64) -> Result<Self, DataError> {
        let bar = OhlcBar { date, open, high, low, close };
        bar.check().map_err(|reason| DataError::Bar { date, reason })?;
        Ok(bar)
    }

    fn check(&self) -> Result<(), String> {
        let OhlcBar { open, high, low, close, .. } = *self;
        if ![open, high, low, close].iter().all(|p| p.is_finite()) {
            return Err("non-finite price".into());
        }
        if low <= 0.0 {
            return Err(format!("low {low} must be positive"));
        }
        if low > high {
            return Err(format!("high {high} below low {low}"));
        }
        if open < low || open > high {
            return Err(format!("open {open} outside [{low}, {high}]"));
        }
        if close < low || close > high {
            return Err(format!("close {close} outside [{low}, {high}]"));
        }
        Ok(())
    }

    /// Multiplies every price by `factor`.
    pub fn scaled(&self, factor: f64) -> OhlcBar {
        OhlcBar {
            date: self.date,
            open: self.open * factor,
            high: self.high * factor,
            low: self.low * factor,
            close: self.close * factor,
        }
    }
}

/// Ordered bars of one ticker with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PriceSeries {
    ticker: String,
    bars: Vec<OhlcBar>,
}

impl PriceSeries {
    pub fn new(ticker: impl Into<String>, bars: Vec<OhlcBar>) -> Result<Self, DataError> {
        for bar in &bars {
            bar.check().map_err(|reason| DataError::Bar { date: bar.date, reason })?;
        }
        for (i, w) in bars.windows(2).enumerate() {
            if w[0].date == w[1].date {
                return Err(DataError::DuplicateDate(w[1].date));
            }
            if w[0].date > w[1].date {
                return Err(DataError::Unordered(i + 1));
            }
        }
        Ok(PriceSeries { ticker: ticker.into(), bars })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn bars(&self) -> &[OhlcBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.bars.first().map(|b| b.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.bars.last().map(|b| b.date)
    }

    /// Contiguous sub-range `start..end` of bars.
    pub fn slice(&self, range: std::ops::Range<usize>) -> PriceSeries {
        PriceSeries { ticker: self.ticker.clone(), bars: self.bars[range].to_vec() }
    }

    /// Bars with `from <= date <= to`; open bounds when `None`.
    pub fn between(&self, from: Option<NaiveDate>, to: Option<NaiveDate>) -> PriceSeries {
        let bars = self
            .bars
            .iter()
            .filter(|b| from.is_none_or(|f| b.date >= f) && to.is_none_or(|t| b.date <= t))
            .copied()
            .collect();
        PriceSeries { ticker: self.ticker.clone(), bars }
    }

    /// Keeps only bars whose date is in `dates`.
    pub fn restrict_to(&self, dates: &BTreeSet<NaiveDate>) -> PriceSeries {
        let bars = self.bars.iter().filter(|b| dates.contains(&b.date)).copied().collect();
        PriceSeries { ticker: self.ticker.clone(), bars }
    }

    pub fn scaled(&self, factor: f64) -> PriceSeries {
        PriceSeries { ticker: self.ticker.clone(), bars: self.bars.iter().map(|b| b.scaled(factor)).collect() }
    }

    fn require(&self, need: usize) -> Result<(), DataError> {
        if self.len() < need {
            return Err(DataError::TooShort { ticker: self.ticker.clone(), have: self.len(), need });
        }
        Ok(())
    }
}

/// Dates present in every series.
pub fn common_dates(series: &[PriceSeries]) -> BTreeSet<NaiveDate> {
    let mut iter = series.iter();
    let Some(first) = iter.next() else {
        return BTreeSet::new();
    };
    let mut common: BTreeSet<NaiveDate> = first.bars.iter().map(|b| b.date).collect();
    for s in iter {
        let dates: BTreeSet<NaiveDate> = s.bars.iter().map(|b| b.date).collect();
        common = common.intersection(&dates).copied().collect();
    }
    common
}

/// Restricts every series to the dates they all share.
pub fn align(series: &[PriceSeries]) -> Result<Vec<PriceSeries>, DataError> {
    let common = common_dates(series);
    if common.is_empty() {
        return Err(DataError::EmptyIntersection);
    }
    Ok(series.iter().map(|s| s.restrict_to(&common)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ReturnKind {
    Log,
    Simple,
    /// Raw close levels carried in a return container.
    Level,
}

/// Returns aligned to the bar they end on: `dates[i]` is the date of the
/// closing bar of `values[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ReturnSeries {
    pub ticker: String,
    pub kind: ReturnKind,
    pub lag: usize,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_finite(values: &[f64]) -> Result<(), DataError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(DataError::NonFinite(i)),
        None => Ok(()),
    }
}

/// `ln(close_t / close_{t-1})` for every consecutive pair of bars.
pub fn log_returns(series: &PriceSeries) -> Result<ReturnSeries, DataError> {
    series.require(2)?;
    let values: Vec<f64> = series.bars.windows(2).map(|w| (w[1].close / w[0].close).ln()).collect();
    check_finite(&values)?;
    Ok(ReturnSeries {
        ticker: series.ticker.clone(),
        kind: ReturnKind::Log,
        lag: 1,
        dates: series.bars[1..].iter().map(|b| b.date).collect(),
        values,
    })
}

/// Close prices themselves, dated like the bars.
pub fn close_levels(series: &PriceSeries) -> ReturnSeries {
    ReturnSeries {
        ticker: series.ticker.clone(),
        kind: ReturnKind::Level,
        lag: 0,
        dates: series.dates(),
        values: series.closes(),
    }
}

/// `(close_t - close_{t-lag}) / close_{t-lag}` for every `t >= lag`.
pub fn pct_changes(series: &PriceSeries, lag: usize) -> Result<ReturnSeries, DataError> {
    if lag == 0 {
        return Err(DataError::ZeroLag);
    }
    series.require(lag + 1)?;
    let bars = &series.bars;
    let values: Vec<f64> =
        (lag..bars.len()).map(|t| (bars[t].close - bars[t - lag].close) / bars[t - lag].close).collect();
    check_finite(&values)?;
    Ok(ReturnSeries {
        ticker: series.ticker.clone(),
        kind: ReturnKind::Simple,
        lag,
        dates: bars[lag..].iter().map(|b| b.date).collect(),
        values,
    })
}

fn find_column(headers: &csv::StringRecord, name: &'static str) -> Result<usize, DataError> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name)).ok_or(DataError::MissingColumn(name))
}

/// Parses `date,open,high,low,close` CSV (extra columns ignored) and returns
/// the bars sorted by date.
pub fn parse_ohlc_csv<R: Read>(source: R, ticker: &str) -> Result<PriceSeries, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(source);
    let headers = reader.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    if headers.is_empty() {
        return Err(DataError::Empty);
    }
    let cols = [
        find_column(&headers, "date")?,
        find_column(&headers, "open")?,
        find_column(&headers, "high")?,
        find_column(&headers, "low")?,
        find_column(&headers, "close")?,
    ];

    let mut rows: Vec<(u64, OhlcBar)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            DataError::Malformed { line, reason: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field =
            |i: usize| record.get(cols[i]).ok_or_else(|| DataError::Malformed { line, reason: "missing field".into() });
        let date = NaiveDate::parse_from_str(field(0)?, "%Y-%m-%d")
            .map_err(|e| DataError::Malformed { line, reason: format!("bad date: {e}") })?;
        let mut prices = [0.0; 4];
        for (k, p) in prices.iter_mut().enumerate() {
            let raw = field(k + 1)?;
            *p =
                raw.parse::<f64>().map_err(|_| DataError::Malformed { line, reason: format!("bad number `{raw}`") })?;
        }
        let bar = OhlcBar { date, open: prices[0], high: prices[1], low: prices[2], close: prices[3] };
        bar.check().map_err(|reason| DataError::InvalidBar { line, reason })?;
        rows.push((line, bar));
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    rows.sort_by_key(|(_, b)| b.date);
    if let Some(w) = rows.windows(2).find(|w| w[0].1.date == w[1].1.date) {
        return Err(DataError::DuplicateDate(w[1].1.date));
    }
    PriceSeries::new(ticker, rows.into_iter().map(|(_, b)| b).collect())
}

/// Writes a series in the format accepted by [`parse_ohlc_csv`]. Floats use
/// the shortest representation that round-trips exactly.
pub fn write_ohlc_csv<W: Write>(series: &PriceSeries, mut out: W) -> std::io::Result<()> {
    writeln!(out, "date,open,high,low,close")?;
    for b in &series.bars {
        writeln!(out, "{},{:?},{:?},{:?},{:?}", b.date.format("%Y-%m-%d"), b.open, b.high, b.low, b.close)?;
    }
    Ok(())
}

/// Per-bar KNN anomaly scores with the `mean + 3 * std` flagging rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AnomalyReport {
    pub k: usize,
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `scores`.
    pub std: f64,
    pub threshold: f64,
    pub flagged: Vec<usize>,
}

/// Scores every bar by the mean absolute close-price distance to its `k`
/// nearest other bars.
///
/// Nearest neighbours of a scalar are contiguous in sorted order, so each
/// score is found by growing a window outward from the point's sorted
/// position.
pub fn knn_anomaly_scores(series: &PriceSeries, k: usize) -> Result<AnomalyReport, DataError> {
    let n = series.len();
    if k == 0 || k >= n {
        return Err(DataError::BadNeighbourCount { k, len: n });
    }
    let closes = series.closes();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| closes[a].total_cmp(&closes[b]).then(a.cmp(&b)));

    let mut scores = vec![0.0; n];
    for (pos, &idx) in order.iter().enumerate() {
        let x = closes[idx];
        let (mut lo, mut hi) = (pos, pos + 1);
        let mut sum = 0.0;
        for _ in 0..k {
            let left = (lo > 0).then(|| x - closes[order[lo - 1]]);
            let right = (hi < n).then(|| closes[order[hi]] - x);
            match (left, right) {
                (Some(l), Some(r)) if l <= r => {
                    sum += l;
                    lo -= 1;
                }
                (Some(l), None) => {
                    sum += l;
                    lo -= 1;
                }
                (_, Some(r)) => {
                    sum += r;
                    hi += 1;
                }
                (None, None) => unreachable!("k < n"),
            }
        }
        scores[idx] = sum / k as f64;
    }

    let mean = crate::stats::mean(&scores);
    let std = crate::stats::population_std(&scores);
    let threshold = mean + 3.0 * std;
    let flagged = (0..n).filter(|&i| scores[i] > threshold).collect();
    Ok(AnomalyReport { k, scores, mean, std, threshold, flagged })
}

/// Suffix of `series` strictly after the last flagged bar.
pub fn trim_after_anomaly(series: &PriceSeries, report: &AnomalyReport) -> PriceSeries {
    match report.flagged.iter().max() {
        None => series.clone(),
        Some(&last) => series.slice((last + 1).min(series.len())..series.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 1, 1).unwrap() + chrono::Days::new(day as u64)
    }

    fn from_closes(closes: &[f64]) -> PriceSeries {
        let bars = closes.iter().enumerate().map(|(i, &c)| OhlcBar::new(d(i as u32), c, c, c, c).unwrap()).collect();
        PriceSeries::new("T", bars).unwrap()
    }

    /// O(n^2 log n) oracle: sort all distances to other points.
    fn brute_scores(closes: &[f64], k: usize) -> Vec<f64> {
        (0..closes.len())
            .map(|i| {
                let mut dist: Vec<f64> =
                    (0..closes.len()).filter(|&j| j != i).map(|j| (closes[i] - closes[j]).abs()).collect();
                dist.sort_by(f64::total_cmp);
                dist[..k].iter().sum::<f64>() / k as f64
            })
            .collect()
    }

    #[test]
    fn parses_single_row() {
        let csv = "date,open,high,low,close\n2023-06-08,100,110,95,105\n";
        let s = parse_ohlc_csv(csv.as_bytes(), "X").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.bars()[0].close, 105.0);
        assert_eq!(s.ticker(), "X");
    }

    #[test]
    fn rejects_high_below_low_with_line_number() {
        let csv = "date,open,high,low,close\n2023-06-08,100,110,95,105\n2023-06-09,100,95,98,97\n";
        match parse_ohlc_csv(csv.as_bytes(), "X") {
            Err(DataError::InvalidBar { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sorts_out_of_order_rows_and_ignores_volume() {
        let csv = "date,open,high,low,close,volume\n2023-06-09,1,2,1,2,10\n2023-06-08,1,1,1,1,20\n";
        let s = parse_ohlc_csv(csv.as_bytes(), "X").unwrap();
        assert_eq!(s.dates(), vec![d(158), d(159)]);
        assert_eq!(s.closes(), vec![1.0, 2.0]);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_ohlc_csv("date,open,high,low,close\n".as_bytes(), "X"), Err(DataError::Empty));
        assert!(matches!(
            parse_ohlc_csv("date,open,high,low,close\n2023-01-01,a,1,1,1\n".as_bytes(), "X"),
            Err(DataError::Malformed { line: 2, .. })
        ));
        assert_eq!(
            parse_ohlc_csv("date,open,high,close\n2023-01-01,1,1,1\n".as_bytes(), "X"),
            Err(DataError::MissingColumn("low"))
        );
        let dup = "date,open,high,low,close\n2023-01-01,1,1,1,1\n2023-01-01,1,1,1,1\n";
        assert!(matches!(parse_ohlc_csv(dup.as_bytes(), "X"), Err(DataError::DuplicateDate(_))));
    }

    #[test]
    fn series_rejects_bad_order() {
        let a = OhlcBar::new(d(1), 1.0, 1.0, 1.0, 1.0).unwrap();
        let b = OhlcBar::new(d(0), 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(PriceSeries::new("T", vec![a, b]), Err(DataError::Unordered(1)));
        assert!(OhlcBar::new(d(0), 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(OhlcBar::new(d(0), 3.0, 2.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn log_return_values() {
        assert_eq!(log_returns(&from_closes(&[100.0, 100.0])).unwrap().values, vec![0.0]);
        let r = log_returns(&from_closes(&[100.0, 110.0, 99.0])).unwrap();
        assert!((r.values[0] - 0.095_310_179_804_324_9).abs() < 1e-12);
        assert!((r.values[1] - -0.105_360_515_657_826_3).abs() < 1e-12);
        assert_eq!(r.dates, vec![d(1), d(2)]);
        assert!(matches!(log_returns(&from_closes(&[1.0])), Err(DataError::TooShort { .. })));
    }

    #[test]
    fn pct_change_values() {
        let r = pct_changes(&from_closes(&[100.0, 110.0]), 1).unwrap();
        assert!((r.values[0] - 0.10).abs() < 1e-12);
        let r = pct_changes(&from_closes(&[100.0, 110.0, 121.0]), 2).unwrap();
        assert_eq!(r.values.len(), 1);
        assert!((r.values[0] - 0.21).abs() < 1e-12);
        let r = pct_changes(&from_closes(&[5.0; 6]), 3).unwrap();
        assert!(r.values.iter().all(|&v| v == 0.0));
        assert!(pct_changes(&from_closes(&[1.0, 2.0]), 2).is_err());
        assert_eq!(pct_changes(&from_closes(&[1.0, 2.0]), 0), Err(DataError::ZeroLag));
    }

    #[test]
    fn anomaly_constant_series_flags_nothing() {
        let rep = knn_anomaly_scores(&from_closes(&[5.0; 4]), 2).unwrap();
        assert!(rep.scores.iter().all(|&s| s == 0.0));
        assert_eq!((rep.std, rep.threshold), (0.0, 0.0));
        assert!(rep.flagged.is_empty());
    }

    #[test]
    fn anomaly_single_spike_is_the_only_flag() {
        // with n points no z-score can exceed sqrt(n - 1), so n must exceed 10
        let mut closes = vec![1.0; 19];
        closes.push(100.0);
        let rep = knn_anomaly_scores(&from_closes(&closes), 3).unwrap();
        assert_eq!(rep.scores, brute_scores(&closes, 3));
        assert_eq!(rep.flagged, vec![19]);
        assert_eq!(rep.threshold, rep.mean + 3.0 * rep.std);
    }

    #[test]
    fn anomaly_linear_ramp() {
        let closes: Vec<f64> = (1..=20).map(f64::from).collect();
        let rep = knn_anomaly_scores(&from_closes(&closes), 1).unwrap();
        assert!(rep.scores.iter().all(|&s| s == 1.0));
        assert!(rep.flagged.is_empty());
    }

    #[test]
    fn anomaly_rejects_bad_k() {
        let s = from_closes(&[1.0, 2.0, 3.0]);
        assert!(knn_anomaly_scores(&s, 0).is_err());
        assert!(knn_anomaly_scores(&s, 3).is_err());
    }

    #[test]
    fn trimming_rules() {
        let s = from_closes(&(0..10).map(|i| 1.0 + i as f64).collect::<Vec<_>>());
        let mut rep = knn_anomaly_scores(&s, 2).unwrap();
        rep.flagged = vec![];
        assert_eq!(trim_after_anomaly(&s, &rep), s);
        rep.flagged = vec![3];
        assert_eq!(trim_after_anomaly(&s, &rep).closes(), vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        rep.flagged = vec![3, 7];
        assert_eq!(trim_after_anomaly(&s, &rep).closes(), vec![9.0, 10.0]);
        rep.flagged = vec![9];
        assert!(trim_after_anomaly(&s, &rep).is_empty());
    }

    #[test]
    fn align_takes_intersection() {
        let a = from_closes(&[1.0, 2.0, 3.0]);
        let b = PriceSeries::new("U", a.bars()[1..].to_vec()).unwrap();
        let aligned = align(&[a.clone(), b]).unwrap();
        assert_eq!(aligned[0].len(), 2);
        let c = PriceSeries::new("V", vec![OhlcBar::new(d(50), 1.0, 1.0, 1.0, 1.0).unwrap()]).unwrap();
        assert_eq!(align(&[a, c]), Err(DataError::EmptyIntersection));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_series() -> impl Strategy<Value = PriceSeries> {
            prop::collection::vec((1.0f64..500.0, 0.0f64..0.2, 0.0f64..1.0, 0.0f64..1.0), 2..40).prop_map(|rows| {
                let bars = rows
                    .iter()
                    .enumerate()
                    .map(|(i, &(low, span, fo, fc))| {
                        let high = low * (1.0 + span);
                        let open = low + fo * (high - low);
                        let close = low + fc * (high - low);
                        OhlcBar::new(d(2 * i as u32), open, high, low, close).unwrap()
                    })
                    .collect();
                PriceSeries::new("P", bars).unwrap()
            })
        }

        proptest! {
            #[test]
            fn csv_round_trip(s in arb_series()) {
                let mut buf = Vec::new();
                write_ohlc_csv(&s, &mut buf).unwrap();
                prop_assert_eq!(parse_ohlc_csv(buf.as_slice(), "P").unwrap(), s);
            }

            #[test]
            fn scores_match_brute_force_and_ignore_row_order(s in arb_series(), k in 1usize..4, rot in 0usize..40) {
                prop_assume!(k < s.len());
                let rep = knn_anomaly_scores(&s, k).unwrap();
                let oracle = brute_scores(&s.closes(), k);
                for (a, b) in rep.scores.iter().zip(&oracle) {
                    prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
                    prop_assert!(*a >= 0.0);
                }
                // shuffle the text rows, re-parse, compare
                let mut buf = Vec::new();
                write_ohlc_csv(&s, &mut buf).unwrap();
                let text = String::from_utf8(buf).unwrap();
                let mut lines: Vec<&str> = text.lines().skip(1).collect();
                let r = rot % lines.len();
                lines.rotate_left(r);
                lines.reverse();
                let shuffled = format!("date,open,high,low,close\n{}\n", lines.join("\n"));
                let reparsed = parse_ohlc_csv(shuffled.as_bytes(), "P").unwrap();
                prop_assert_eq!(knn_anomaly_scores(&reparsed, k).unwrap().scores, rep.scores);
            }

            #[test]
            fn duplicate_close_never_raises_score(s in arb_series(), k in 1usize..4, pick in 0usize..40) {
                prop_assume!(k < s.len());
                let i = pick % s.len();
                let before = knn_anomaly_scores(&s, k).unwrap().scores[i];
                let mut bars = s.bars().to_vec();
                let mut extra = bars[i];
                extra.date = d(1000);
                bars.push(extra);
                let grown = PriceSeries::new("P", bars).unwrap();
                let after = knn_anomaly_scores(&grown, k).unwrap().scores[i];
                prop_assert!(after <= before + 1e-12);
            }

            #[test]
            fn trim_is_valid_suffix(s in arb_series(), flags in prop::collection::vec(0usize..40, 0..4)) {
                let mut rep = knn_anomaly_scores(&s, 1).unwrap();
                rep.flagged = flags.into_iter().filter(|&f| f < s.len()).collect();
                let t = trim_after_anomaly(&s, &rep);
                prop_assert!(PriceSeries::new("P", t.bars().to_vec()).is_ok());
                prop_assert_eq!(&s.bars()[s.len() - t.len()..], t.bars());
            }
        }
    }
}
