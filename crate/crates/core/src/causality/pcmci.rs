//! Linear partial-correlation graph over Granger candidates.
//!
//! Each candidate `X -> Y` is scored at every driver lag `d` in
//! `1..=max_lag` by `PartCorr(X_{t-d}, Y_t | Z)`, where `Z` holds every other
//! series at lags `0..=d`, i.e. each value between the driver's time and the
//! target's. That set contains any intermediate step of a mediated path, so
//! chains do not leave a spurious shortcut edge. The lag with the largest
//! `|PartCorr|` is kept; its t-test p-value is Bonferroni-adjusted for the
//! number of lags tried.

use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::granger::GrangerResult;
use super::ols::{design_with_intercept, ols_fit};
use super::CausalError;
use crate::market_data::ReturnSeries;
use crate::par;
use crate::stats::{pearson, t_two_sided};

/// Pearson correlation of the residuals of `x` and `y` after regressing each
/// on an intercept and every series in `z`.
pub fn partial_correlation(x: &[f64], y: &[f64], z: &[&[f64]]) -> Result<f64, CausalError> {
    if x.len() != y.len() {
        return Err(CausalError::Misaligned { left: x.len(), right: y.len() });
    }
    if let Some(bad) = z.iter().find(|c| c.len() != x.len()) {
        return Err(CausalError::Misaligned { left: x.len(), right: bad.len() });
    }
    let need = z.len() + 3;
    if x.len() < need {
        return Err(CausalError::TooShort { need, have: x.len() });
    }
    if z.is_empty() {
        // intercept-only residuals are the centred series
        return pearson(x, y).ok_or(CausalError::ZeroVariance);
    }
    let cols: Vec<Vec<f64>> = z.iter().map(|c| c.to_vec()).collect();
    let design = design_with_intercept(x.len(), &cols);
    let ex = ols_fit(&design, x)?.residuals;
    let ey = ols_fit(&design, y)?.residuals;
    let scale = |v: &[f64]| v.iter().map(|a| a.abs()).fold(0.0, f64::max);
    // residuals at round-off level mean the series is explained by z
    if scale(&ex) <= 1e-12 * scale(x).max(f64::MIN_POSITIVE) || scale(&ey) <= 1e-12 * scale(y).max(f64::MIN_POSITIVE) {
        return Err(CausalError::ZeroVariance);
    }
    pearson(&ex, &ey).ok_or(CausalError::ZeroVariance)
}

/// Two-sided p-value for a partial correlation `r` from `n` observations
/// conditioned on `k` regressors.
pub fn partial_corr_p_value(r: f64, n: usize, k: usize) -> f64 {
    let df = n as f64 - 2.0 - k as f64;
    if df <= 0.0 {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PcmciConfig {
    /// Minimum `|PartCorr|` for an edge.
    pub threshold: f64,
    /// Significance level for the adjusted t-test.
    pub alpha: f64,
    /// Largest driver lag tried per candidate.
    pub max_lag: usize,
}

impl Default for PcmciConfig {
    fn default() -> Self {
        PcmciConfig { threshold: 0.15, alpha: 0.05, max_lag: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CausalEdge {
    pub cause: String,
    pub effect: String,
    /// Driver lag with the strongest partial correlation.
    pub lag: usize,
    pub partial_corr: f64,
    /// Bonferroni-adjusted p-value of `partial_corr`.
    pub p_value: f64,
    pub gct_p_value: f64,
    #[serde(default)]
    pub ete: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum EdgeVerdict {
    Kept,
    BelowThreshold,
    NotSignificant,
    CycleBreak,
    Failed,
}

/// Per-candidate record, kept or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EdgeTest {
    pub cause: String,
    pub effect: String,
    pub lag: Option<usize>,
    pub partial_corr: Option<f64>,
    pub p_value: Option<f64>,
    pub verdict: EdgeVerdict,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CausalGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<CausalEdge>,
    pub threshold: f64,
    pub alpha: f64,
    pub tests: Vec<EdgeTest>,
}

impl CausalGraph {
    /// Kahn topological order of `nodes`; `None` if the edges contain a cycle.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        topo(&self.nodes, &self.edges)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    pub fn edge(&self, cause: &str, effect: &str) -> Option<&CausalEdge> {
        self.edges.iter().find(|e| e.cause == cause && e.effect == effect)
    }

    /// Graphviz rendering with partial correlations as edge labels.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph causal {\n  rankdir=LR;\n");
        for n in &self.nodes {
            out.push_str(&format!("  \"{n}\";\n"));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{:.3} (lag {})\"];\n",
                e.cause, e.effect, e.partial_corr, e.lag
            ));
        }
        out.push_str("}\n");
        out
    }
}

fn topo(nodes: &[String], edges: &[CausalEdge]) -> Option<Vec<String>> {
    let mut indeg: BTreeMap<&str, usize> = nodes.iter().map(|n| (n.as_str(), 0)).collect();
    for e in edges {
        *indeg.entry(e.effect.as_str()).or_default() += 1;
        indeg.entry(e.cause.as_str()).or_default();
    }
    let mut ready: Vec<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut order = Vec::new();
    while let Some(n) = ready.pop() {
        order.push(n.to_string());
        for e in edges.iter().filter(|e| e.cause == n) {
            let d = indeg.get_mut(e.effect.as_str()).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(e.effect.as_str());
            }
        }
    }
    (order.len() == indeg.len()).then_some(order)
}

/// Edge indices of some directed cycle, if any.
fn find_cycle(edges: &[CausalEdge]) -> Option<Vec<usize>> {
    fn dfs<'a>(
        node: &'a str,
        edges: &'a [CausalEdge],
        state: &mut BTreeMap<&'a str, u8>,
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        state.insert(node, 1);
        for (i, e) in edges.iter().enumerate().filter(|(_, e)| e.cause == node) {
            stack.push(i);
            match state.get(e.effect.as_str()).copied().unwrap_or(0) {
                1 => {
                    let start = stack.iter().position(|&j| edges[j].cause == e.effect).unwrap();
                    return Some(stack[start..].to_vec());
                }
                0 => {
                    if let Some(c) = dfs(e.effect.as_str(), edges, state, stack) {
                        return Some(c);
                    }
                }
                _ => {}
            }
            stack.pop();
        }
        state.insert(node, 2);
        None
    }

    let mut state = BTreeMap::new();
    let mut starts: Vec<&str> = edges.iter().map(|e| e.cause.as_str()).collect();
    starts.sort();
    starts.dedup();
    for s in starts {
        if state.get(s).copied().unwrap_or(0) == 0 {
            if let Some(c) = dfs(s, edges, &mut state, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}

/// Strongest partial correlation of `x` leading `y` over driver lags.
/// Returns `(lag, r, adjusted p)`.
fn score_candidate(x: &[f64], y: &[f64], others: &[&[f64]], max_lag: usize) -> Result<(usize, f64, f64), CausalError> {
    let n = y.len();
    let mut best: Option<(usize, f64, usize, usize)> = None;
    let mut last_err = None;
    for d in 1..=max_lag {
        if d >= n {
            break;
        }
        let rows = n - d;
        let xd = &x[..rows];
        let yd = &y[d..];
        let z: Vec<&[f64]> = others.iter().flat_map(|o| (0..=d).map(move |j| &o[d - j..n - j])).collect();
        match partial_correlation(xd, yd, &z) {
            Ok(r) => {
                if best.is_none_or(|(_, br, _, _)| r.abs() > br.abs()) {
                    best = Some((d, r, rows, z.len()));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((d, r, rows, k)) => {
            let p = (partial_corr_p_value(r, rows, k) * max_lag as f64).min(1.0);
            Ok((d, r, p))
        }
        None => Err(last_err.unwrap_or(CausalError::TooShort { need: 2, have: n })),
    }
}

/// Scores each Granger candidate, keeps edges with `|r| >= threshold` and
/// adjusted `p < alpha`, then breaks cycles by dropping the weakest edge of
/// each until the graph is acyclic.
pub fn pcmci_graph(
    series: &[ReturnSeries],
    candidates: &[GrangerResult],
    config: &PcmciConfig,
) -> Result<CausalGraph, CausalError> {
    let index: BTreeMap<&str, usize> = series.iter().enumerate().map(|(i, s)| (s.ticker.as_str(), i)).collect();
    if let Some(s) = series.iter().find(|s| s.len() != series[0].len()) {
        return Err(CausalError::Misaligned { left: series[0].len(), right: s.len() });
    }
    for c in candidates {
        for t in [&c.cause, &c.effect] {
            if !index.contains_key(t.as_str()) {
                return Err(CausalError::UnknownTicker(t.clone()));
            }
        }
    }

    let scored = par::map(candidates, |c| {
        let (i, j) = (index[c.cause.as_str()], index[c.effect.as_str()]);
        let others: Vec<&[f64]> =
            series.iter().enumerate().filter(|&(k, _)| k != i && k != j).map(|(_, s)| s.values.as_slice()).collect();
        score_candidate(&series[i].values, &series[j].values, &others, config.max_lag)
    });

    let mut tests = Vec::new();
    let mut edges = Vec::new();
    for (c, res) in candidates.iter().zip(scored) {
        match res {
            Ok((lag, r, p)) => {
                let verdict = if r.abs() < config.threshold {
                    EdgeVerdict::BelowThreshold
                } else if p >= config.alpha {
                    EdgeVerdict::NotSignificant
                } else {
                    EdgeVerdict::Kept
                };
                if verdict == EdgeVerdict::Kept {
                    edges.push(CausalEdge {
                        cause: c.cause.clone(),
                        effect: c.effect.clone(),
                        lag,
                        partial_corr: r,
                        p_value: p,
                        gct_p_value: c.p_value,
                        ete: None,
                    });
                }
                tests.push(EdgeTest {
                    cause: c.cause.clone(),
                    effect: c.effect.clone(),
                    lag: Some(lag),
                    partial_corr: Some(r),
                    p_value: Some(p),
                    verdict,
                    error: None,
                });
            }
            Err(e) => tests.push(EdgeTest {
                cause: c.cause.clone(),
                effect: c.effect.clone(),
                lag: None,
                partial_corr: None,
                p_value: None,
                verdict: EdgeVerdict::Failed,
                error: Some(e.to_string()),
            }),
        }
    }

    while let Some(cycle) = find_cycle(&edges) {
        let weakest = *cycle
            .iter()
            .min_by(|&&a, &&b| {
                edges[a]
                    .partial_corr
                    .abs()
                    .total_cmp(&edges[b].partial_corr.abs())
                    .then_with(|| (&edges[b].cause, &edges[b].effect).cmp(&(&edges[a].cause, &edges[a].effect)))
            })
            .unwrap();
        let dropped = edges.remove(weakest);
        if let Some(t) = tests.iter_mut().find(|t| t.cause == dropped.cause && t.effect == dropped.effect) {
            t.verdict = EdgeVerdict::CycleBreak;
        }
    }

    Ok(CausalGraph {
        nodes: series.iter().map(|s| s.ticker.clone()).collect(),
        edges,
        threshold: config.threshold,
        alpha: config.alpha,
        tests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causality::granger::tests::returns;
    use crate::seed::replicate_rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, stream: u64, n: usize) -> Vec<f64> {
        let mut rng = replicate_rng(seed, stream);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn candidate(cause: &str, effect: &str) -> GrangerResult {
        GrangerResult {
            cause: cause.into(),
            effect: effect.into(),
            lag: 1,
            rss_restricted: 1.0,
            rss_unrestricted: 0.5,
            f_stat: 10.0,
            p_value: 0.001,
            n_obs: 100,
        }
    }

    /// x -> y -> w, each step one bar later.
    pub(crate) fn chain(seed: u64, n: usize) -> Vec<ReturnSeries> {
        let x = noise(seed, 0, n);
        let ey = noise(seed, 1, n);
        let ew = noise(seed, 2, n);
        let mut y = vec![0.0; n];
        let mut w = vec![0.0; n];
        for t in 0..n {
            y[t] = if t >= 1 { 0.7 * x[t - 1] } else { 0.0 } + 0.7 * ey[t];
            w[t] = if t >= 1 { 0.7 * y[t - 1] } else { 0.0 } + 0.7 * ew[t];
        }
        vec![returns("X", x), returns("Y", y), returns("W", w)]
    }

    #[test]
    fn self_partial_correlation_is_one() {
        let x = noise(1, 0, 50);
        let z = noise(1, 1, 50);
        assert!((partial_correlation(&x, &x, &[&z]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_conditioning_set_is_pearson() {
        let x = noise(2, 0, 80);
        let y = noise(2, 1, 80);
        assert_eq!(partial_correlation(&x, &y, &[]).unwrap(), pearson(&x, &y).unwrap());
    }

    #[test]
    fn common_driver_is_removed() {
        let z = noise(3, 0, 1000);
        let x: Vec<f64> = z.iter().zip(noise(3, 1, 1000)).map(|(a, b)| a + b).collect();
        let y: Vec<f64> = z.iter().zip(noise(3, 2, 1000)).map(|(a, b)| a + b).collect();
        assert!(pearson(&x, &y).unwrap() > 0.4);
        assert!(partial_correlation(&x, &y, &[&z]).unwrap().abs() < 0.1);
    }

    #[test]
    fn independent_conditioning_leaves_correlation() {
        let a = noise(4, 0, 1000);
        let x: Vec<f64> = a.iter().zip(noise(4, 1, 1000)).map(|(a, b)| a + b).collect();
        let y: Vec<f64> = a.iter().zip(noise(4, 2, 1000)).map(|(a, b)| a + b).collect();
        let z = noise(4, 3, 1000);
        let plain = pearson(&x, &y).unwrap();
        assert!((partial_correlation(&x, &y, &[&z]).unwrap() - plain).abs() < 0.05);
    }

    #[test]
    fn errors() {
        let x = noise(5, 0, 10);
        assert!(matches!(partial_correlation(&x, &x[..9], &[]), Err(CausalError::Misaligned { .. })));
        let z: Vec<Vec<f64>> = (0..8).map(|i| noise(5, i + 1, 10)).collect();
        let zs: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
        assert!(matches!(partial_correlation(&x, &x, &zs), Err(CausalError::TooShort { .. })));
        let y: Vec<f64> = z[0].iter().map(|v| 2.0 * v + 1.0).collect();
        assert_eq!(partial_correlation(&x, &y, &zs[..1]), Err(CausalError::ZeroVariance));
    }

    #[test]
    fn chain_shortcut_is_dropped() {
        let s = chain(7, 1000);
        let cands = [candidate("X", "Y"), candidate("Y", "W"), candidate("X", "W")];
        let g = pcmci_graph(&s, &cands, &PcmciConfig::default()).unwrap();
        assert!(g.edge("X", "Y").is_some());
        assert!(g.edge("Y", "W").is_some());
        assert!(g.edge("X", "W").is_none());
        let shortcut = g.tests.iter().find(|t| t.cause == "X" && t.effect == "W").unwrap();
        assert_eq!(shortcut.verdict, EdgeVerdict::BelowThreshold);
        assert!(g.is_acyclic());
        assert_eq!(g.edge("X", "Y").unwrap().lag, 1);
    }

    #[test]
    fn empty_candidates_give_empty_graph() {
        let g = pcmci_graph(&chain(1, 100), &[], &PcmciConfig::default()).unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.nodes.len(), 3);
    }

    #[test]
    fn two_cycle_drops_weaker_edge() {
        let s = chain(9, 1000);
        // Y -> X is spurious and weak; X -> Y is strong.
        let cfg = PcmciConfig { threshold: 0.0, alpha: 1.1, max_lag: 2 };
        let g = pcmci_graph(&s, &[candidate("X", "Y"), candidate("Y", "X")], &cfg).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].cause, "X");
        assert!(g.tests.iter().any(|t| t.verdict == EdgeVerdict::CycleBreak));
    }

    #[test]
    fn unknown_candidate_ticker() {
        let err = pcmci_graph(&chain(1, 50), &[candidate("X", "Q")], &PcmciConfig::default());
        assert_eq!(err, Err(CausalError::UnknownTicker("Q".into())));
    }

    #[test]
    fn dot_output_lists_edges() {
        let g = pcmci_graph(&chain(7, 500), &[candidate("X", "Y")], &PcmciConfig::default()).unwrap();
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph causal {"));
        assert!(dot.contains("\"X\" -> \"Y\""));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn output_is_acyclic(seed in 0u64..10_000, mask in 0u32..64) {
                let s: Vec<ReturnSeries> = (0..4).map(|i| returns(&format!("S{i}"), noise(seed, i, 120))).collect();
                let names = ["S0", "S1", "S2", "S3"];
                let pairs = [(0, 1), (1, 2), (2, 0), (1, 0), (2, 3), (3, 1)];
                let cands: Vec<GrangerResult> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << k) != 0)
                    .map(|(_, &(a, b))| candidate(names[a], names[b]))
                    .collect();
                let cfg = PcmciConfig { threshold: 0.0, alpha: 1.1, max_lag: 2 };
                let g = pcmci_graph(&s, &cands, &cfg).unwrap();
                prop_assert!(g.is_acyclic());
                prop_assert!(g.edges.iter().all(|e| e.cause != e.effect && e.partial_corr.abs() >= cfg.threshold));
            }
        }
    }
}
