//! Diagonal Gaussian mixture clustering of per-ticker volatility features.
//!
//! Fitting is invariant to input order: points are put into a canonical
//! (lexicographic) order before seeding and EM, so permuting the input gives
//! bitwise-identical parameters and responsibilities.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;
use crate::seed::replicate_rng;
use crate::volatility::{Estimator, VolatilityProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("need at least {k} distinct feature vectors, got {distinct}")]
    TooFewPoints { k: usize, distinct: usize },
    #[error("component count must be positive")]
    ZeroComponents,
    #[error("feature vectors must be non-empty with equal dimension")]
    DimensionMismatch,
    #[error("non-finite feature value in point {0}")]
    NonFinite(usize),
    #[error("every restart collapsed a component")]
    AllRestartsCollapsed,
    #[error("{got} tickers for {want} feature vectors")]
    LabelMismatch { want: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GmmConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub n_restarts: usize,
    pub var_floor: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig { max_iter: 500, tol: 1e-8, seed: 0, n_restarts: 10, var_floor: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Diagonal of the covariance.
    pub var: Vec<f64>,
}

impl Component {
    fn log_density(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((xi, m), v) in x.iter().zip(&self.mean).zip(&self.var) {
            let d = xi - m;
            acc += -0.5 * ((2.0 * PI * v).ln() + d * d / v);
        }
        acc
    }

    fn mean_norm(&self) -> f64 {
        self.mean.iter().map(|m| m * m).sum::<f64>().sqrt()
    }
}

/// Fitted mixture. Components are ordered by ascending L2 norm of their mean,
/// so component id equals volatility rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GmmModel {
    pub components: Vec<Component>,
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    pub seed: u64,
    pub restart: usize,
}

impl GmmModel {
    /// Builds a model from explicit parameters; components are re-sorted by mean norm.
    pub fn from_components(mut components: Vec<Component>) -> GmmModel {
        sort_components(&mut components);
        GmmModel { components, log_likelihood: Vec::new(), converged: true, seed: 0, restart: 0 }
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn final_log_likelihood(&self) -> f64 {
        self.log_likelihood.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Posterior component probabilities of `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = self.components.iter().map(|c| c.weight.ln() + c.log_density(x)).collect();
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp()).collect()
    }
}

fn sort_components(components: &mut [Component]) {
    components.sort_by(|a, b| a.mean_norm().total_cmp(&b.mean_norm()).then_with(|| lex_cmp(&a.mean, &b.mean)));
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

fn validate(features: &[Vec<f64>]) -> Result<usize, ClusterError> {
    let dim = features.first().map_or(0, Vec::len);
    if dim == 0 || features.iter().any(|f| f.len() != dim) {
        return Err(ClusterError::DimensionMismatch);
    }
    if let Some(i) = features.iter().position(|f| f.iter().any(|v| !v.is_finite())) {
        return Err(ClusterError::NonFinite(i));
    }
    Ok(dim)
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance from the nearest chosen centre.
fn seed_centres<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut d2: Vec<f64> = points.iter().map(|p| sq(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
        }
        let next = pick.expect("at least k distinct points");
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq(p, &points[next]));
        }
    }
    chosen
}

/// One EM run. `None` when a component loses all responsibility mass.
fn run_em(points: &[Vec<f64>], k: usize, config: &GmmConfig, restart: usize) -> Option<GmmModel> {
    let n = points.len();
    let dim = points[0].len();
    let inv_n = 1.0 / n as f64;
    let mut rng = replicate_rng(config.seed, restart as u64);
    let centres = seed_centres(points, k, &mut rng);

    let global_var: Vec<f64> = (0..dim)
        .map(|j| {
            let m = points.iter().map(|p| p[j]).sum::<f64>() * inv_n;
            let v = points.iter().map(|p| (p[j] - m) * (p[j] - m)).sum::<f64>() * inv_n;
            v.max(config.var_floor)
        })
        .collect();
    let mut comps: Vec<Component> = centres
        .iter()
        .map(|&c| Component { weight: 1.0 / k as f64, mean: points[c].clone(), var: global_var.clone() })
        .collect();

    let mut trace = Vec::new();
    let mut resp = vec![vec![0.0; k]; n];
    let mut converged = false;
    for _ in 0..=config.max_iter {
        // E-step
        let mut ll = 0.0;
        for (i, x) in points.iter().enumerate() {
            let logs: Vec<f64> = comps.iter().map(|c| c.weight.ln() + c.log_density(x)).collect();
            let lse = log_sum_exp(&logs);
            ll += lse;
            for (r, l) in resp[i].iter_mut().zip(&logs) {
                *r = (l - lse).exp();
            }
        }
        if let Some(&prev) = trace.last() {
            if ll - prev < config.tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if trace.len() > config.max_iter {
            break;
        }
        // M-step
        for (c, comp) in comps.iter_mut().enumerate() {
            let nk: f64 = resp.iter().map(|r| r[c]).sum();
            if nk <= f64::MIN_POSITIVE {
                return None;
            }
            comp.weight = nk * inv_n;
            for j in 0..dim {
                comp.mean[j] = resp.iter().zip(points).map(|(r, p)| r[c] * p[j]).sum::<f64>() / nk;
            }
            for j in 0..dim {
                let m = comp.mean[j];
                let v = resp.iter().zip(points).map(|(r, p)| r[c] * (p[j] - m) * (p[j] - m)).sum::<f64>() / nk;
                comp.var[j] = v.max(config.var_floor);
            }
        }
        let wsum: f64 = comps.iter().map(|c| c.weight).sum();
        for comp in &mut comps {
            comp.weight /= wsum;
        }
    }
    Some(GmmModel { components: comps, log_likelihood: trace, converged, seed: config.seed, restart })
}

/// Fits a `k`-component diagonal GMM, keeping the best of
/// `config.n_restarts` seeded restarts by final log-likelihood.
pub fn gmm_fit(features: &[Vec<f64>], k: usize, config: &GmmConfig) -> Result<GmmModel, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroComponents);
    }
    validate(features)?;
    let mut points = features.to_vec();
    points.sort_by(|a, b| lex_cmp(a, b));
    let distinct = 1 + points.windows(2).filter(|w| lex_cmp(&w[0], &w[1]).is_ne()).count();
    if distinct < k {
        return Err(ClusterError::TooFewPoints { k, distinct });
    }

    let fits = par::map_range(config.n_restarts.max(1), |r| run_em(&points, k, config, r));
    let mut best: Option<GmmModel> = None;
    for fit in fits.into_iter().flatten() {
        let better = best.as_ref().is_none_or(|b| fit.final_log_likelihood() > b.final_log_likelihood());
        if better {
            best = Some(fit);
        }
    }
    let mut model = best.ok_or(ClusterError::AllRestartsCollapsed)?;
    sort_components(&mut model.components);
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Low,
    Medium,
    High,
}

impl Tier {
    /// Tier of the component with volatility rank `rank` out of `k`.
    /// A single component is `Medium`; the lowest and highest ranks are
    /// `Low` and `High`, everything between is `Medium`.
    pub fn for_rank(rank: usize, k: usize) -> Tier {
        if k == 1 {
            Tier::Medium
        } else if rank == 0 {
            Tier::Low
        } else if rank + 1 == k {
            Tier::High
        } else {
            Tier::Medium
        }
    }

    pub fn parse(s: &str) -> Option<Tier> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Some(Tier::Low),
            "medium" => Some(Tier::Medium),
            "high" => Some(Tier::High),
            _ => None,
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Low => "low",
            Tier::Medium => "medium",
            Tier::High => "high",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ClusterAssignment {
    pub ticker: String,
    pub component: usize,
    pub responsibilities: Vec<f64>,
    pub tier: Tier,
}

/// Assigns each ticker to its maximum-responsibility component (ties go to
/// the lower id).
pub fn gmm_assign(
    model: &GmmModel,
    tickers: &[String],
    features: &[Vec<f64>],
) -> Result<Vec<ClusterAssignment>, ClusterError> {
    if tickers.len() != features.len() {
        return Err(ClusterError::LabelMismatch { want: features.len(), got: tickers.len() });
    }
    if features.iter().any(|f| f.len() != model.dim()) {
        return Err(ClusterError::DimensionMismatch);
    }
    Ok(tickers
        .iter()
        .zip(features)
        .map(|(ticker, x)| {
            let responsibilities = model.responsibilities(x);
            let mut component = 0;
            for (c, &r) in responsibilities.iter().enumerate() {
                if r > responsibilities[component] {
                    component = c;
                }
            }
            ClusterAssignment {
                ticker: ticker.clone(),
                component,
                responsibilities,
                tier: Tier::for_rank(component, model.k()),
            }
        })
        .collect())
}

/// Tickers in `tier`, sorted.
pub fn select_tier(assignments: &[ClusterAssignment], tier: Tier) -> Vec<String> {
    let mut out: Vec<String> = assignments.iter().filter(|a| a.tier == tier).map(|a| a.ticker.clone()).collect();
    out.sort();
    out
}

/// Which volatility means form the clustering feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// 4-D vector of PK, GK, RS and YZ means.
    #[default]
    AllEstimators,
    Single(Estimator),
}

pub fn features_from_profiles(profiles: &[VolatilityProfile], mode: FeatureMode) -> Vec<Vec<f64>> {
    profiles
        .iter()
        .map(|p| match mode {
            FeatureMode::AllEstimators => p.means.to_vec(),
            FeatureMode::Single(e) => vec![p.mean_of(e)],
        })
        .collect()
}
