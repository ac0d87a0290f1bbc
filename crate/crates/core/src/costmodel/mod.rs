//! Expected simulation cost `c(θ)`: analytic presets, measurement, and fitted regressors.

mod gp;
mod measure;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, RngKey};
use crate::support::BoxSupport;

pub use gp::{fit_gp, GpConfig, GpModel};
pub use measure::{measure_cost, read_observations_csv, write_observations_csv, Clock, CostMeasurement, MeasuredCost};

pub const DEFAULT_FLOOR: f64 = 1e-9;

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

/// One `(θ, y)` pair; `y` is a measured cost in seconds or virtual units.
#[derive(Clone, Debug, PartialEq)]
pub struct CostObservation {
    pub theta: Vec<f64>,
    pub y: f64,
}

impl CostObservation {
    pub fn new(theta: Vec<f64>, y: f64) -> Self {
        CostObservation { theta, y }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum CostKind {
    /// `c(θ) = Σ_d slope_d θ_d + intercept`
    AnalyticLinear { slopes: Vec<f64>, intercept: f64 },
    /// `c(θ) = Σ_d alpha_d θ_d²`
    AnalyticQuadratic { alpha: Vec<f64> },
    FittedLinear { slopes: Vec<f64>, intercept: f64 },
    /// Total-degree polynomial in standardised coordinates `(θ_d - center_d) / scale_d`.
    FittedPolynomial {
        degree: u32,
        center: Vec<f64>,
        scale: Vec<f64>,
        exponents: Vec<Vec<u32>>,
        coefficients: Vec<f64>,
    },
    FittedGp(GpModel),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub n_observations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub train_rmse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Expected cost of one simulation, clamped below at `floor`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub kind: CostKind,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitMetadata>,
}

impl CostModel {
    pub fn new(kind: CostKind) -> Self {
        CostModel {
            kind,
            floor: DEFAULT_FLOOR,
            fit: None,
        }
    }

    pub fn analytic_linear(slopes: Vec<f64>, intercept: f64) -> Self {
        CostModel::new(CostKind::AnalyticLinear { slopes, intercept })
    }

    pub fn analytic_quadratic(alpha: Vec<f64>) -> Self {
        CostModel::new(CostKind::AnalyticQuadratic { alpha })
    }

    /// One-dimensional polynomial `Σ_j coeffs[j] θ^j`.
    pub fn polynomial_1d(coeffs: Vec<f64>) -> Self {
        let degree = coeffs.len().saturating_sub(1) as u32;
        CostModel::new(CostKind::FittedPolynomial {
            degree,
            center: vec![0.0],
            scale: vec![1.0],
            exponents: (0..=degree).map(|j| vec![j]).collect(),
            coefficients: coeffs,
        })
    }

    /// Gamma simulator cost from the reported timings: 0.002 s at θ = 100
    /// and 0.02 s at θ = 1000 for 500 draws (proportional to θ).
    pub fn gamma_cost_text() -> Self {
        CostModel::analytic_linear(vec![2e-5], 0.0)
    }

    /// Gamma simulator cost consistent with the reported penalty extrema for
    /// `g(z) = z`: c(100) = 1e-3, c(1000) = 2.8e-3.
    pub fn gamma_cost_table() -> Self {
        CostModel::analytic_linear(vec![2e-6], 8e-4)
    }

    /// Looks up a named preset (`gamma-cost-text`, `gamma-cost-table`).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "gamma-cost-text" => Ok(CostModel::gamma_cost_text()),
            "gamma-cost-table" => Ok(CostModel::gamma_cost_table()),
            "gaussian-toy" => Ok(CostModel::analytic_linear(vec![1.0], 6.0)),
            other => Err(Error::config(format!(
                "unknown cost preset `{other}` (expected gamma-cost-text|gamma-cost-table|gaussian-toy)"
            ))),
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            CostKind::AnalyticLinear { slopes, .. } | CostKind::FittedLinear { slopes, .. } => slopes.len(),
            CostKind::AnalyticQuadratic { alpha } => alpha.len(),
            CostKind::FittedPolynomial { center, .. } => center.len(),
            CostKind::FittedGp(gp) => gp.dim(),
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(
            self.kind,
            CostKind::AnalyticLinear { .. } | CostKind::AnalyticQuadratic { .. }
        )
    }

    /// Whether the model is non-decreasing in every coordinate over `support`,
    /// so its extrema sit at the low and high corners.
    pub fn is_monotone_on(&self, support: &BoxSupport) -> bool {
        match &self.kind {
            CostKind::AnalyticLinear { slopes, .. } | CostKind::FittedLinear { slopes, .. } => {
                slopes.iter().all(|s| *s >= 0.0)
            }
            CostKind::AnalyticQuadratic { alpha } => {
                alpha.iter().all(|a| *a >= 0.0) && support.low.iter().all(|l| *l >= 0.0)
            }
            _ => false,
        }
    }

    /// Model value before the floor clamp.
    pub fn eval_unclamped(&self, theta: &[f64]) -> f64 {
        match &self.kind {
            CostKind::AnalyticLinear { slopes, intercept } | CostKind::FittedLinear { slopes, intercept } => {
                intercept + slopes.iter().zip(theta).map(|(s, t)| s * t).sum::<f64>()
            }
            CostKind::AnalyticQuadratic { alpha } => alpha.iter().zip(theta).map(|(a, t)| a * t * t).sum(),
            CostKind::FittedPolynomial {
                center,
                scale,
                exponents,
                coefficients,
                ..
            } => {
                let z: Vec<f64> = theta
                    .iter()
                    .zip(center.iter().zip(scale))
                    .map(|(t, (c, s))| (t - c) / s)
                    .collect();
                exponents
                    .iter()
                    .zip(coefficients)
                    .map(|(e, c)| c * monomial(&z, e))
                    .sum()
            }
            CostKind::FittedGp(gp) => gp.predict(theta),
        }
    }

    /// `max(floor, c(θ))`; NaN model output also maps to the floor.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        let raw = self.eval_unclamped(theta);
        if raw.is_nan() {
            return self.floor;
        }
        raw.max(self.floor)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn monomial(z: &[f64], exps: &[u32]) -> f64 {
    z.iter().zip(exps).map(|(x, &e)| x.powi(e as i32)).product()
}

/// All exponent vectors of total degree ≤ `degree` in `dim` variables,
/// ordered by total degree.
fn exponent_set(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(dim: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=remaining {
            prefix.push(e);
            rec(dim, remaining - e, prefix, out);
            prefix.pop();
        }
    }
    let mut all = Vec::new();
    rec(dim, degree, &mut Vec::new(), &mut all);
    all.sort_by_key(|e| (e.iter().sum::<u32>(), std::cmp::Reverse(e.clone())));
    all
}

fn term_label(exps: &[u32]) -> String {
    let parts: Vec<String> = exps
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(d, &e)| if e == 1 { format!("theta_{d}") } else { format!("theta_{d}^{e}") })
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("*")
    }
}

pub(crate) fn check_observations(obs: &[CostObservation]) -> Result<usize> {
    let dim = obs
        .first()
        .map(|o| o.theta.len())
        .ok_or_else(|| Error::config("no cost observations"))?;
    for (i, o) in obs.iter().enumerate() {
        if o.theta.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: o.theta.len(),
            });
        }
        if !(o.y.is_finite() && o.y >= 0.0) || o.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::config(format!("cost observation {i} is invalid: {o:?}")));
        }
    }
    Ok(dim)
}

struct PolyFit {
    center: Vec<f64>,
    scale: Vec<f64>,
    exponents: Vec<Vec<u32>>,
    coefficients: Vec<f64>,
}

fn least_squares_poly(obs: &[CostObservation], degree: u32) -> Result<PolyFit> {
    let dim = check_observations(obs)?;
    let exponents = exponent_set(dim, degree);
    let q = exponents.len();

    let mut distinct: Vec<&Vec<f64>> = obs.iter().map(|o| &o.theta).collect();
    distinct.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < q {
        return Err(Error::RankDeficient(format!(
            "{} distinct parameter values cannot determine {q} coefficients",
            distinct.len()
        )));
    }

    let n = obs.len();
    let mut center = vec![0.0; dim];
    let mut scale = vec![1.0; dim];
    for d in 0..dim {
        let (lo, hi) = obs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), o| (l.min(o.theta[d]), h.max(o.theta[d])));
        center[d] = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        scale[d] = if half > 0.0 { half } else { 1.0 };
    }

    let design = DMatrix::from_fn(n, q, |i, j| {
        let z: Vec<f64> = (0..dim).map(|d| (obs[i].theta[d] - center[d]) / scale[d]).collect();
        monomial(&z, &exponents[j])
    });
    let y = DVector::from_iterator(n, obs.iter().map(|o| o.y));

    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * (n.max(q) as f64) * f64::EPSILON * 16.0;
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut deficient = Vec::new();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s <= cutoff {
            let dir: Vec<String> = (0..q)
                .filter(|&j| v_t[(k, j)].abs() > 1e-6)
                .map(|j| format!("{:+.3}*{}", v_t[(k, j)], term_label(&exponents[j])))
                .collect();
            deficient.push(format!("[{}]", dir.join(" ")));
        }
    }
    if !deficient.is_empty() {
        return Err(Error::RankDeficient(deficient.join(", ")));
    }
    let coef = svd
        .solve(&y, cutoff)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    Ok(PolyFit {
        center,
        scale,
        exponents,
        coefficients: coef.iter().copied().collect(),
    })
}

pub(crate) fn rmse(model: &CostModel, obs: &[CostObservation]) -> f64 {
    if obs.is_empty() {
        return f64::NAN;
    }
    let se: Vec<f64> = obs
        .iter()
        .map(|o| {
            let r = model.eval(&o.theta) - o.y;
            r * r
        })
        .collect();
    (crate::numeric::pairwise_sum(&se) / obs.len() as f64).sqrt()
}

/// Ordinary least-squares linear cost model.
pub fn fit_linear(obs: &[CostObservation]) -> Result<CostModel> {
    let fit = least_squares_poly(obs, 1)?;
    let dim = fit.center.len();
    let mut slopes = vec![0.0; dim];
    let mut intercept = 0.0;
    for (e, c) in fit.exponents.iter().zip(&fit.coefficients) {
        match e.iter().position(|&x| x == 1) {
            None => intercept += c,
            Some(d) => {
                slopes[d] = c / fit.scale[d];
                intercept -= c * fit.center[d] / fit.scale[d];
            }
        }
    }
    let mut model = CostModel::new(CostKind::FittedLinear { slopes, intercept });
    model.fit = Some(FitMetadata {
        n_observations: obs.len(),
        train_rmse: rmse(&model, obs),
        ..Default::default()
    });
    Ok(model)
}

/// Least-squares polynomial of total degree `degree`.
pub fn fit_polynomial(obs: &[CostObservation], degree: u32) -> Result<CostModel> {
    let fit = least_squares_poly(obs, degree)?;
    let mut model = CostModel::new(CostKind::FittedPolynomial {
        degree,
        center: fit.center,
        scale: fit.scale,
        exponents: fit.exponents,
        coefficients: fit.coefficients,
    });
    model.fit = Some(FitMetadata {
        n_observations: obs.len(),
        train_rmse: rmse(&model, obs),
        ..Default::default()
    });
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FitMethod {
    Linear,
    Polynomial { degree: u32 },
    Gp(GpConfig),
}

impl FitMethod {
    pub fn fit(&self, obs: &[CostObservation]) -> Result<CostModel> {
        match self {
            FitMethod::Linear => fit_linear(obs),
            FitMethod::Polynomial { degree } => fit_polynomial(obs, *degree),
            FitMethod::Gp(cfg) => fit_gp(obs, cfg),
        }
    }
}

/// Fits on a seeded 80/20 split to report held-out RMSE, then refits on all
/// observations. The returned model carries both diagnostics.
pub fn fit_with_holdout(obs: &[CostObservation], method: &FitMethod, seed: u64) -> Result<CostModel> {
    let mut model = method.fit(obs)?;
    let holdout_rmse = if obs.len() >= 10 {
        let mut idx: Vec<usize> = (0..obs.len()).collect();
        idx.shuffle(&mut RngKey::new(seed).child(domain::SPLIT).stream(0));
        let n_test = obs.len() / 5;
        let test: Vec<CostObservation> = idx[..n_test].iter().map(|&i| obs[i].clone()).collect();
        let train: Vec<CostObservation> = idx[n_test..].iter().map(|&i| obs[i].clone()).collect();
        method.fit(&train).ok().map(|m| rmse(&m, &test))
    } else {
        None
    };
    let meta = model.fit.get_or_insert_with(Default::default);
    meta.seed = Some(seed);
    meta.holdout_rmse = holdout_rmse;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn line_obs(slope: f64, intercept: f64, n: usize) -> Vec<CostObservation> {
        (0..n)
            .map(|i| {
                let t = 100.0 + 900.0 * i as f64 / (n - 1) as f64;
                CostObservation::new(vec![t], slope * t + intercept)
            })
            .collect()
    }

    #[test]
    fn exact_line_is_recovered() {
        let model = fit_linear(&line_obs(2e-5, 0.0, 25)).unwrap();
        match &model.kind {
            CostKind::FittedLinear { slopes, intercept } => {
                assert!(((slopes[0] - 2e-5) / 2e-5).abs() < 1e-12, "slope {}", slopes[0]);
                assert!(intercept.abs() < 1e-15);
            }
            k => panic!("unexpected {k:?}"),
        }
    }

    #[test]
    fn constant_observations_give_zero_slope() {
        let obs: Vec<_> = (0..10).map(|i| CostObservation::new(vec![i as f64], 0.25)).collect();
        match fit_linear(&obs).unwrap().kind {
            CostKind::FittedLinear { slopes, intercept } => {
                assert!(slopes[0].abs() < 1e-15);
                assert!((intercept - 0.25).abs() < 1e-15);
            }
            k => panic!("unexpected {k:?}"),
        }
    }

    #[test]
    fn noisy_line_holdout_rmse() {
        let mut rng = RngKey::new(5).stream(0);
        let (slope, intercept) = (2e-5, 1e-3);
        let (lo, hi) = (slope * 100.0 + intercept, slope * 1000.0 + intercept);
        let noise = Normal::new(0.0, 0.05 * (hi - lo)).unwrap();
        let obs: Vec<_> = (0..200)
            .map(|_| {
                let t: f64 = rng.random_range(100.0..1000.0);
                CostObservation::new(vec![t], (slope * t + intercept + noise.sample(&mut rng)).max(0.0))
            })
            .collect();
        let model = fit_linear(&obs).unwrap();
        let grid: Vec<f64> = (0..100).map(|i| 100.0 + 9.0 * i as f64).collect();
        let mse: f64 = grid
            .iter()
            .map(|t| (model.eval(&[*t]) - (slope * t + intercept)).powi(2))
            .sum::<f64>()
            / grid.len() as f64;
        let mean_cost = slope * 550.0 + intercept;
        assert!(mse.sqrt() < 0.05 * mean_cost, "rmse {} vs mean {}", mse.sqrt(), mean_cost);
    }

    #[test]
    fn polynomial_recovers_quadratic() {
        let obs: Vec<_> = (0..30)
            .map(|i| {
                let t = i as f64 / 29.0;
                CostObservation::new(vec![t], 0.19 - 0.6 * t + t * t)
            })
            .collect();
        let model = fit_polynomial(&obs, 2).unwrap();
        for t in [0.0, 0.3, 0.77, 1.0] {
            assert!((model.eval(&[t]) - (0.19 - 0.6 * t + t * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_names_directions() {
        // θ1 = 2 θ0 for every observation: the two linear terms are collinear.
        let obs: Vec<_> = (0..10)
            .map(|i| {
                let t = i as f64;
                CostObservation::new(vec![t, 2.0 * t], 1.0 + t)
            })
            .collect();
        match fit_linear(&obs) {
            Err(Error::RankDeficient(msg)) => assert!(msg.contains("theta_0") && msg.contains("theta_1"), "{msg}"),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        let too_few = vec![CostObservation::new(vec![1.0], 1.0), CostObservation::new(vec![1.0], 2.0)];
        assert!(matches!(fit_linear(&too_few), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn floor_clamp_applies() {
        let model = CostModel::analytic_linear(vec![1.0], -10.0);
        assert_eq!(model.eval(&[0.0]), DEFAULT_FLOOR);
        assert_eq!(model.eval_unclamped(&[0.0]), -10.0);
    }

    #[test]
    fn presets_match_reported_values() {
        let text = CostModel::preset("gamma-cost-text").unwrap();
        assert!((text.eval(&[100.0]) - 0.002).abs() < 1e-15);
        assert!((text.eval(&[1000.0]) - 0.02).abs() < 1e-15);
        let table = CostModel::preset("gamma-cost-table").unwrap();
        assert!((table.eval(&[100.0]) - 1e-3).abs() < 1e-15);
        assert!((table.eval(&[1000.0]) - 2.8e-3).abs() < 1e-15);
        assert!(CostModel::preset("nope").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let model = fit_with_holdout(&line_obs(3e-4, 0.1, 40), &FitMethod::Polynomial { degree: 2 }, 9).unwrap();
        let text = model.to_toml().unwrap();
        let back = CostModel::from_toml(&text).unwrap();
        assert_eq!(model, back);
        assert!(text.contains("fitted_polynomial"));
    }

    #[test]
    fn monotone_flags() {
        let s = BoxSupport::interval(1.0, 2.0).unwrap();
        assert!(CostModel::gamma_cost_table().is_monotone_on(&s));
        assert!(!CostModel::analytic_linear(vec![-1.0], 5.0).is_monotone_on(&s));
        assert!(CostModel::analytic_quadratic(vec![1.0]).is_monotone_on(&s));
        let neg = BoxSupport::interval(-1.0, 2.0).unwrap();
        assert!(!CostModel::analytic_quadratic(vec![1.0]).is_monotone_on(&neg));
    }

    #[test]
    fn exponent_set_counts() {
        assert_eq!(exponent_set(1, 3).len(), 4);
        assert_eq!(exponent_set(2, 2).len(), 6);
        assert_eq!(exponent_set(3, 1)[0], vec![0, 0, 0]);
    }
}
