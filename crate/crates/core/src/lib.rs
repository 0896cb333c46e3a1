//! Volatility-tiered causal lead-lag research toolkit.
//!
//! The crate runs a daily-bar pipeline end to end:
//!
//! 1. [`market_data`]: OHLC ingestion, returns, KNN anomaly scoring and trimming.
//! 2. [`volatility`]: Parkinson, Garman-Klass, Rogers-Satchell and Yang-Zhang
//!    rolling estimators and per-ticker profiles.
//! 3. [`clustering`]: diagonal Gaussian mixture over volatility features and
//!    low/medium/high tier selection.
//! 4. [`causality`]: Granger F-test scan, partial-correlation graph filtering
//!    and effective transfer entropy confirmation.
//! 5. [`lag_select`]: DTW diagnostics and KNN directional accuracy per lag.
//! 6. [`backtest`]: buy-and-hold and lead-lag trend following with a full
//!    metric block.
//! 7. [`pipeline`]: declarative configuration, file-backed stage artifacts and
//!    run manifests; [`synth`] produces seeded fixtures with planted structure.
//!
//! Data-parallel inner loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.
//! Results are identical either way.

pub mod backtest;
pub mod causality;
pub mod clustering;
pub mod lag_select;
pub mod market_data;
pub mod par;
pub mod pipeline;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod volatility;

pub use market_data::{OhlcBar, PriceSeries, ReturnKind, ReturnSeries};
