//! Zero-mean Gaussian-process regression with a squared-exponential kernel.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_observations, rmse, CostKind, CostModel, CostObservation, FitMetadata};
use crate::error::Result;
use crate::numeric::nelder_mead;
use crate::rng::{domain, RngKey};

/// Hyperparameter search settings. Lengthscale bounds are multiples of the
/// per-dimension input range; amplitude and noise bounds are multiples of the
/// mean squared target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub lengthscale_bounds: (f64, f64),
    pub amplitude_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
    pub restarts: usize,
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            lengthscale_bounds: (0.01, 10.0),
            amplitude_bounds: (1e-3, 1e3),
            noise_bounds: (1e-8, 1.0),
            restarts: 4,
            max_evals: 600,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub lengthscales: Vec<f64>,
    /// Signal variance of the kernel.
    pub amplitude: f64,
    pub noise_variance: f64,
    pub log_marginal_likelihood: f64,
    pub inputs: Vec<Vec<f64>>,
    /// `(K + σ_n² I)^{-1} y`, so the posterior mean is `k(x)ᵀ dual_weights`.
    pub dual_weights: Vec<f64>,
}

fn kernel(a: &[f64], b: &[f64], lengthscales: &[f64], amplitude: f64) -> f64 {
    let d2: f64 = a
        .iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    amplitude * (-0.5 * d2).exp()
}

impl GpModel {
    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Posterior mean at `theta`.
    pub fn predict(&self, theta: &[f64]) -> f64 {
        self.inputs
            .iter()
            .zip(&self.dual_weights)
            .map(|(x, w)| w * kernel(theta, x, &self.lengthscales, self.amplitude))
            .sum()
    }
}

struct Solved {
    lml: f64,
    alpha: DVector<f64>,
}

fn solve(x: &[Vec<f64>], y: &DVector<f64>, ls: &[f64], amp: f64, noise: f64) -> Option<Solved> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        kernel(&x[i], &x[j], ls, amp) + if i == j { noise } else { 0.0 }
    });
    let chol = k.clone().cholesky()?;
    let mut alpha = chol.solve(y);
    // One step of iterative refinement recovers accuracy lost to conditioning.
    let residual = y - &k * &alpha;
    alpha += chol.solve(&residual);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    lml.is_finite().then_some(Solved { lml, alpha })
}

/// Median of `|x_i,d − x_j,d|` over pairs, per dimension.
fn median_spacing(x: &[Vec<f64>], d: usize) -> f64 {
    let mut diffs = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            diffs.push((x[i][d] - x[j][d]).abs());
        }
    }
    if diffs.is_empty() {
        return 1.0;
    }
    diffs.sort_by(f64::total_cmp);
    let m = diffs[diffs.len() / 2];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Fits a GP cost model by maximising the log marginal likelihood over
/// log-hyperparameters with seeded Nelder–Mead restarts. If no finite
/// likelihood is found the fit falls back to median-heuristic lengthscales
/// and the data variance, and records a warning.
pub fn fit_gp(obs: &[CostObservation], config: &GpConfig) -> Result<CostModel> {
    let dim = check_observations(obs)?;
    let x: Vec<Vec<f64>> = obs.iter().map(|o| o.theta.clone()).collect();
    let y = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.y));
    let mean_sq = (y.dot(&y) / obs.len() as f64).max(f64::MIN_POSITIVE);

    let ranges: Vec<f64> = (0..dim)
        .map(|d| {
            let (lo, hi) = x
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), t| (l.min(t[d]), h.max(t[d])));
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        })
        .collect();

    let mut lo = Vec::with_capacity(dim + 2);
    let mut hi = Vec::with_capacity(dim + 2);
    for r in &ranges {
        lo.push((config.lengthscale_bounds.0 * r).ln());
        hi.push((config.lengthscale_bounds.1 * r).ln());
    }
    lo.push((config.amplitude_bounds.0 * mean_sq).ln());
    hi.push((config.amplitude_bounds.1 * mean_sq).ln());
    lo.push((config.noise_bounds.0 * mean_sq).ln());
    hi.push((config.noise_bounds.1 * mean_sq).ln());

    let objective = |p: &[f64]| -> f64 {
        if p.iter().zip(lo.iter().zip(&hi)).any(|(v, (l, h))| v < l || v > h) {
            return f64::INFINITY;
        }
        let ls: Vec<f64> = p[..dim].iter().map(|v| v.exp()).collect();
        match solve(&x, &y, &ls, p[dim].exp(), p[dim + 1].exp()) {
            Some(s) => -s.lml,
            None => f64::INFINITY,
        }
    };

    let mut starts = Vec::with_capacity(config.restarts + 1);
    let mut first: Vec<f64> = ranges.iter().map(|r| (0.3 * r).ln()).collect();
    first.push(mean_sq.ln());
    first.push((1e-2 * mean_sq).ln());
    for (v, (l, h)) in first.iter_mut().zip(lo.iter().zip(&hi)) {
        *v = v.clamp(*l, *h);
    }
    starts.push(first);
    let key = RngKey::new(config.seed).child(domain::GP_RESTART);
    for r in 0..config.restarts {
        let mut rng = key.stream(r as u64);
        starts.push(lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..=*h)).collect());
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let (p, v) = nelder_mead(objective, start, 0.5, config.max_evals, 1e-10);
        if v.is_finite() && best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((p, v));
        }
    }

    let mut warnings = Vec::new();
    let (ls, amp, noise) = match best {
        Some((p, _)) => (p[..dim].iter().map(|v| v.exp()).collect::<Vec<_>>(), p[dim].exp(), p[dim + 1].exp()),
        None => {
            let var = crate::numeric::sample_variance(y.as_slice());
            let amp = if var > 0.0 { var } else { mean_sq };
            warnings.push(
                "marginal likelihood not finite for any hyperparameters; \
                 using median-heuristic lengthscales and data variance"
                    .to_string(),
            );
            log::warn!("{}", warnings[0]);
            ((0..dim).map(|d| median_spacing(&x, d)).collect(), amp, 1e-6 * amp)
        }
    };
    let solved = solve(&x, &y, &ls, amp, noise).ok_or_else(|| {
        crate::error::Error::InvalidCost("GP covariance is not positive definite".to_string())
    })?;

    let mut model = CostModel::new(CostKind::FittedGp(GpModel {
        lengthscales: ls,
        amplitude: amp,
        noise_variance: noise,
        log_marginal_likelihood: solved.lml,
        inputs: x,
        dual_weights: solved.alpha.iter().copied().collect(),
    }));
    model.fit = Some(FitMetadata {
        n_observations: obs.len(),
        train_rmse: rmse(&model, obs),
        warnings,
        ..Default::default()
    });
    Ok(model)
}
