//! Plug-in transfer entropy on equal-frequency bins, with a shuffled-source
//! surrogate baseline.

use rand::seq::SliceRandom;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::pcmci::CausalGraph;
use super::CausalError;
use crate::market_data::ReturnSeries;
use crate::par;
use crate::seed::replicate_rng;
use crate::stats::{mean, sample_variance};

/// Minimum length beyond the history for a stable estimate.
pub const MIN_EXTRA_OBS: usize = 50;
pub const MIN_SHUFFLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TeConfig {
    /// History length.
    pub tau: usize,
    pub bins: usize,
    pub n_shuffles: usize,
}

impl Default for TeConfig {
    fn default() -> Self {
        TeConfig { tau: 1, bins: 6, n_shuffles: 50 }
    }
}

/// Equal-frequency bin index per observation. Ties share a bin: an
/// observation's mid-rank `less + equal / 2` decides it, so only the ordering
/// of values matters.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let mid = 2 * start + (end - start); // twice the mid-rank
        let bin = ((bins * mid) / (2 * n)).min(bins - 1);
        for &i in &order[start..end] {
            out[i] = bin;
        }
        start = end;
    }
    out
}

/// Entropy in bits of the empirical distribution of `codes` (sorted in place).
fn entropy_bits(codes: &mut [u64]) -> f64 {
    codes.sort_unstable();
    let n = codes.len() as f64;
    let mut acc = 0.0;
    let mut i = 0;
    while i < codes.len() {
        let mut j = i + 1;
        while j < codes.len() && codes[j] == codes[i] {
            j += 1;
        }
        let c = (j - i) as f64;
        acc += c * c.log2();
        i = j;
    }
    n.log2() - acc / n
}

fn check(x_len: usize, y_len: usize, tau: usize, bins: usize) -> Result<(), CausalError> {
    if x_len != y_len {
        return Err(CausalError::Misaligned { left: x_len, right: y_len });
    }
    if tau == 0 {
        return Err(CausalError::ZeroHistory);
    }
    if bins < 2 {
        return Err(CausalError::TooFewBins(bins));
    }
    if x_len < tau + MIN_EXTRA_OBS {
        return Err(CausalError::TooShort { need: tau + MIN_EXTRA_OBS, have: x_len });
    }
    let dims = 2 * tau + 1;
    if (dims as f64) * (bins as f64).log2() >= 63.0 {
        return Err(CausalError::StateSpace { bins, dims });
    }
    Ok(())
}

/// TE on already-binned series.
fn te_binned(xb: &[usize], yb: &[usize], tau: usize, bins: usize) -> f64 {
    let n = yb.len();
    let b = bins as u64;
    let rows = n - tau;
    let mut past_y = Vec::with_capacity(rows);
    let mut past_xy = Vec::with_capacity(rows);
    for t in tau..n {
        let mut py = 0u64;
        let mut pxy = 0u64;
        for j in 1..=tau {
            py = py * b + yb[t - j] as u64;
            pxy = pxy * b + xb[t - j] as u64;
        }
        past_y.push(py);
        past_xy.push(pxy);
    }
    let scale = b.pow(tau as u32);
    let now = |t: usize| yb[t + tau] as u64;

    let mut c_yp: Vec<u64> = past_y.clone();
    let mut c_y_yp: Vec<u64> = (0..rows).map(|t| past_y[t] * b + now(t)).collect();
    let mut c_yp_xp: Vec<u64> = (0..rows).map(|t| past_y[t] * scale + past_xy[t]).collect();
    let mut c_all: Vec<u64> = (0..rows).map(|t| (past_y[t] * scale + past_xy[t]) * b + now(t)).collect();

    let h_cond_y = entropy_bits(&mut c_y_yp) - entropy_bits(&mut c_yp);
    let h_cond_xy = entropy_bits(&mut c_all) - entropy_bits(&mut c_yp_xp);
    (h_cond_y - h_cond_xy).max(0.0)
}

/// Transfer entropy `x -> y` in bits.
pub fn transfer_entropy(x: &[f64], y: &[f64], tau: usize, bins: usize) -> Result<f64, CausalError> {
    check(x.len(), y.len(), tau, bins)?;
    Ok(te_binned(&equal_frequency_bins(x, bins), &equal_frequency_bins(y, bins), tau, bins))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EteResult {
    pub cause: String,
    pub effect: String,
    /// Driver lag the source was shifted to; `1` means no shift.
    pub lag: usize,
    pub te: f64,
    pub shuffle_mean: f64,
    pub shuffle_std: f64,
    pub ete: f64,
    /// `ete / shuffle_std`; `None` when the surrogate spread is zero.
    pub z_score: Option<f64>,
    pub tau: usize,
    pub bins: usize,
    pub n_shuffles: usize,
}

/// Pairs `x_{t-lag+1}` with `y_t`, so a one-step history of the shifted
/// source looks `lag` bars back.
pub fn shift_for_lag<'a>(x: &'a [f64], y: &'a [f64], lag: usize) -> Result<(&'a [f64], &'a [f64]), CausalError> {
    if lag == 0 {
        return Err(CausalError::ZeroLag);
    }
    if x.len() != y.len() {
        return Err(CausalError::Misaligned { left: x.len(), right: y.len() });
    }
    let s = lag - 1;
    if s >= x.len() {
        return Err(CausalError::TooShort { need: lag, have: x.len() });
    }
    Ok((&x[..x.len() - s], &y[s..]))
}

/// Raw TE of `x -> y` (source shifted by `lag`) minus the mean TE over
/// `n_shuffles` time-permuted copies of the source.
pub fn effective_transfer_entropy(
    x: &ReturnSeries,
    y: &ReturnSeries,
    lag: usize,
    config: &TeConfig,
    seed: u64,
) -> Result<EteResult, CausalError> {
    let (xs, ys) = shift_for_lag(&x.values, &y.values, lag)?;
    let (tau, bins) = (config.tau, config.bins);
    check(xs.len(), ys.len(), tau, bins)?;
    if config.n_shuffles < MIN_SHUFFLES {
        return Err(CausalError::TooFewShuffles { min: MIN_SHUFFLES, got: config.n_shuffles });
    }
    let xb = equal_frequency_bins(xs, bins);
    let yb = equal_frequency_bins(ys, bins);
    let te = te_binned(&xb, &yb, tau, bins);
    let surrogate = par::map_range(config.n_shuffles, |i| {
        let mut perm = xb.clone();
        perm.shuffle(&mut replicate_rng(seed, i as u64));
        te_binned(&perm, &yb, tau, bins)
    });
    let shuffle_mean = mean(&surrogate);
    let shuffle_std = sample_variance(&surrogate).sqrt();
    let ete = te - shuffle_mean;
    Ok(EteResult {
        cause: x.ticker.clone(),
        effect: y.ticker.clone(),
        lag,
        te,
        shuffle_mean,
        shuffle_std,
        ete,
        z_score: (shuffle_std > 0.0).then(|| ete / shuffle_std),
        tau,
        bins,
        n_shuffles: config.n_shuffles,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FinalPair {
    pub leader: String,
    pub lagger: String,
    /// Driver lag from the partial-correlation stage.
    pub lag: usize,
    pub partial_corr: f64,
    pub gct_p_value: f64,
    pub ete: EteResult,
}

/// Graph edges whose ETE z-score reaches `z_min`, by descending ETE.
/// Edges without a matching `EteResult` or with an undefined z-score are dropped.
pub fn select_final_pairs(graph: &CausalGraph, etes: &[EteResult], z_min: f64) -> Vec<FinalPair> {
    let mut out: Vec<FinalPair> = graph
        .edges
        .iter()
        .filter_map(|e| {
            let r = etes.iter().find(|r| r.cause == e.cause && r.effect == e.effect)?;
            (r.z_score? >= z_min).then(|| FinalPair {
                leader: e.cause.clone(),
                lagger: e.effect.clone(),
                lag: e.lag,
                partial_corr: e.partial_corr,
                gct_p_value: e.gct_p_value,
                ete: r.clone(),
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.ete.ete.total_cmp(&a.ete.ete).then_with(|| (&a.leader, &a.lagger).cmp(&(&b.leader, &b.lagger)))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causality::granger::tests::returns;
    use crate::causality::pcmci::CausalEdge;
    use rand::Rng;

    fn coins(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = replicate_rng(seed, 0);
        (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect()
    }

    fn coupled(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let x = coins(seed, n);
        let mut y = vec![0.0; n];
        y[0] = coins(seed + 1, 1)[0];
        y[1..].copy_from_slice(&x[..n - 1]);
        (x, y)
    }

    #[test]
    fn bins_are_equal_frequency() {
        let v: Vec<f64> = (0..60).map(|i| ((i * 37) % 60) as f64).collect();
        let b = equal_frequency_bins(&v, 6);
        for k in 0..6 {
            assert_eq!(b.iter().filter(|&&x| x == k).count(), 10);
        }
    }

    #[test]
    fn binary_values_split_into_two_bins() {
        let b = equal_frequency_bins(&[0.0, 1.0, 1.0, 0.0, 1.0], 2);
        assert_eq!(b, vec![0, 1, 1, 0, 1]);
    }

    #[test]
    fn copied_coin_carries_one_bit() {
        let (x, y) = coupled(11, 10_000);
        let te = transfer_entropy(&x, &y, 1, 2).unwrap();
        assert!((te - 1.0).abs() < 0.05, "te = {te}");
    }

    #[test]
    fn independent_coins_carry_little() {
        let x = coins(21, 10_000);
        let y = coins(22, 10_000);
        let te = transfer_entropy(&x, &y, 1, 2).unwrap();
        assert!((0.0..0.05).contains(&te), "te = {te}");
    }

    #[test]
    fn ete_on_coupled_and_independent_pairs() {
        let cfg = TeConfig { tau: 1, bins: 2, n_shuffles: 50 };
        let (x, y) = coupled(31, 10_000);
        let r = effective_transfer_entropy(&returns("X", x), &returns("Y", y), 1, &cfg, 5).unwrap();
        assert!((r.ete - 1.0).abs() < 0.05, "{r:?}");
        assert!(r.z_score.unwrap() > 10.0);

        let r =
            effective_transfer_entropy(&returns("X", coins(41, 10_000)), &returns("Y", coins(42, 10_000)), 1, &cfg, 5)
                .unwrap();
        assert!(r.ete.abs() < 0.02, "{r:?}");
        assert!(r.shuffle_mean >= 0.0 && r.te >= 0.0);
    }

    #[test]
    fn lag_shift_recovers_delayed_copy() {
        let x = coins(51, 5_000);
        let mut y = coins(52, 5_000);
        y[3..].copy_from_slice(&x[..5_000 - 3]);
        let cfg = TeConfig { tau: 1, bins: 2, n_shuffles: 20 };
        let (xs, ys) = (returns("X", x), returns("Y", y));
        let at3 = effective_transfer_entropy(&xs, &ys, 3, &cfg, 1).unwrap();
        let at1 = effective_transfer_entropy(&xs, &ys, 1, &cfg, 1).unwrap();
        assert!(at3.ete > 0.9 && at1.ete < 0.02);
    }

    #[test]
    fn preconditions() {
        let x = coins(1, 100);
        assert_eq!(transfer_entropy(&x, &x, 1, 1), Err(CausalError::TooFewBins(1)));
        assert_eq!(transfer_entropy(&x, &x, 0, 2), Err(CausalError::ZeroHistory));
        assert!(matches!(transfer_entropy(&x[..40], &x[..40], 1, 2), Err(CausalError::TooShort { .. })));
        assert!(matches!(transfer_entropy(&x, &x[..99], 1, 2), Err(CausalError::Misaligned { .. })));
        assert!(matches!(transfer_entropy(&x, &x, 20, 16), Err(CausalError::StateSpace { .. })));
        let cfg = TeConfig { n_shuffles: 0, ..TeConfig::default() };
        let s = returns("X", x);
        assert_eq!(
            effective_transfer_entropy(&s, &s, 1, &cfg, 0),
            Err(CausalError::TooFewShuffles { min: MIN_SHUFFLES, got: 0 })
        );
    }

    #[test]
    fn ete_is_deterministic() {
        let (x, y) = coupled(61, 800);
        let (x, y) = (returns("X", x), returns("Y", y));
        let cfg = TeConfig::default();
        let a = effective_transfer_entropy(&x, &y, 2, &cfg, 9).unwrap();
        let b = effective_transfer_entropy(&x, &y, 2, &cfg, 9).unwrap();
        assert_eq!(a.ete.to_bits(), b.ete.to_bits());
        assert_eq!(a, b);
    }

    fn graph(edges: &[(&str, &str)]) -> CausalGraph {
        CausalGraph {
            nodes: vec!["A".into(), "B".into(), "C".into()],
            edges: edges
                .iter()
                .map(|&(c, e)| CausalEdge {
                    cause: c.into(),
                    effect: e.into(),
                    lag: 1,
                    partial_corr: 0.3,
                    p_value: 0.001,
                    gct_p_value: 0.001,
                    ete: None,
                })
                .collect(),
            threshold: 0.15,
            alpha: 0.05,
            tests: vec![],
        }
    }

    fn ete(c: &str, e: &str, value: f64, z: Option<f64>) -> EteResult {
        EteResult {
            cause: c.into(),
            effect: e.into(),
            lag: 1,
            te: value,
            shuffle_mean: 0.0,
            shuffle_std: 0.01,
            ete: value,
            z_score: z,
            tau: 1,
            bins: 6,
            n_shuffles: 50,
        }
    }

    #[test]
    fn final_pairs_filter_and_sort() {
        let g = graph(&[("A", "B"), ("B", "C"), ("A", "C")]);
        let etes = [ete("A", "B", 0.1, Some(3.0)), ete("B", "C", 0.3, Some(5.0)), ete("A", "C", 0.2, Some(1.0))];
        let f = select_final_pairs(&g, &etes, 2.0);
        let names: Vec<_> = f.iter().map(|p| (p.leader.as_str(), p.lagger.as_str())).collect();
        assert_eq!(names, vec![("B", "C"), ("A", "B")]);
        assert!(select_final_pairs(&g, &etes, 10.0).is_empty());
        assert!(select_final_pairs(&g, &[ete("A", "B", 0.1, None)], 0.0).is_empty());
    }

    mod props {
        use super::{replicate_rng, transfer_entropy};
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn monotone_transform_invariance(seed in 0u64..10_000, bins in 2usize..8) {
                let mut rng = replicate_rng(seed, 0);
                let x: Vec<f64> = (0..200).map(|_| rng.random::<f64>() - 0.5).collect();
                let y: Vec<f64> = (0..200).map(|i| if i > 0 { x[i - 1] } else { 0.0 } + rng.random::<f64>()).collect();
                let base = transfer_entropy(&x, &y, 1, bins).unwrap();
                let tx: Vec<f64> = x.iter().map(|v| (3.0 * v).exp()).collect();
                let ty: Vec<f64> = y.iter().map(|v| v.powi(3) - 7.0).collect();
                prop_assert_eq!(base.to_bits(), transfer_entropy(&tx, &ty, 1, bins).unwrap().to_bits());
                prop_assert!(base >= 0.0);
            }
        }
    }
}
