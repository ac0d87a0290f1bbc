//! Closed-form and quadrature ground truth for the normalising constant `B`,
//! the computational gain, and the tilted CDF on one-dimensional uniform priors.

use crate::costmodel::CostModel;
use crate::error::{Error, Result};
use crate::penalty::PenaltySpec;
use crate::prior::PriorSpec;
use crate::quadrature::{integrate, integrate_2d, QuadTolerance};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostShape {
    /// `c(θ) = αθ + β`
    Linear { alpha: f64, beta: f64 },
    /// `c(θ) = αθ²`
    Quadratic { alpha: f64 },
}

/// Uniform prior on `[theta_min, theta_max]`, cost shape, and penalty `g(z) = z^k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedFormCase {
    pub cost: CostShape,
    pub k: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

/// A value together with whether it came from quadrature instead of a formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    pub via_quadrature: bool,
}

impl OracleValue {
    fn exact(value: f64) -> Self {
        OracleValue {
            value,
            via_quadrature: false,
        }
    }

    fn numeric(value: f64) -> Self {
        OracleValue {
            value,
            via_quadrature: true,
        }
    }
}

impl ClosedFormCase {
    pub fn new(cost: CostShape, k: f64, theta_min: f64, theta_max: f64) -> Result<Self> {
        if !(theta_min.is_finite() && theta_min < theta_max && theta_max.is_finite()) {
            return Err(Error::config(format!(
                "need finite theta_min < theta_max, got ({theta_min}, {theta_max})"
            )));
        }
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::config(format!("penalty power must be finite and ≥ 0, got {k}")));
        }
        let case = ClosedFormCase {
            cost,
            k,
            theta_min,
            theta_max,
        };
        for t in [theta_min, theta_max] {
            if !(case.cost_at(t) > 0.0) {
                return Err(Error::InvalidCost(format!("cost must be positive on the support, got {} at {t}", case.cost_at(t))));
            }
        }
        Ok(case)
    }

    pub fn width(&self) -> f64 {
        self.theta_max - self.theta_min
    }

    pub fn cost_at(&self, theta: f64) -> f64 {
        match self.cost {
            CostShape::Linear { alpha, beta } => alpha * theta + beta,
            CostShape::Quadratic { alpha } => alpha * theta * theta,
        }
    }

    pub fn cost_model(&self) -> CostModel {
        match self.cost {
            CostShape::Linear { alpha, beta } => CostModel::analytic_linear(vec![alpha], beta),
            CostShape::Quadratic { alpha } => CostModel::analytic_quadratic(vec![alpha]),
        }
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec::BoxUniform {
            low: vec![self.theta_min],
            high: vec![self.theta_max],
        }
    }

    pub fn penalty(&self) -> PenaltySpec {
        PenaltySpec::power(self.k)
    }

    /// Antiderivative of `(αθ + β)^{-k}` evaluated at `theta` (linear cost only).
    fn linear_antiderivative(&self, alpha: f64, beta: f64, theta: f64) -> f64 {
        let c = alpha * theta + beta;
        if self.k == 1.0 {
            c.ln() / alpha
        } else {
            c.powf(1.0 - self.k) / (alpha * (1.0 - self.k))
        }
    }
}

/// Normalising constant `B = ∫ π(θ) / g(c(θ)) dθ` of the tilted density.
/// Linear costs use the antiderivative; other cases fall back to quadrature.
pub fn closed_form_b(case: &ClosedFormCase) -> Result<OracleValue> {
    if case.k == 0.0 {
        return Ok(OracleValue::exact(1.0));
    }
    match case.cost {
        CostShape::Linear { alpha, beta } if alpha != 0.0 => {
            let upper = case.linear_antiderivative(alpha, beta, case.theta_max);
            let lower = case.linear_antiderivative(alpha, beta, case.theta_min);
            Ok(OracleValue::exact((upper - lower) / case.width()))
        }
        CostShape::Linear { beta, .. } => Ok(OracleValue::exact(beta.powf(-case.k))),
        CostShape::Quadratic { .. } => {
            quad_b(&case.prior(), &case.cost_model(), &case.penalty()).map(OracleValue::numeric)
        }
    }
}

/// Computational gain from the four tabulated cases (`c = αθ` or `αθ²`,
/// `g(z) = z` or `z²`); constant penalties give 1 and anything else falls
/// back to quadrature.
pub fn closed_form_cg(case: &ClosedFormCase) -> Result<OracleValue> {
    let (a, b) = (case.theta_min, case.theta_max);
    let w = case.width();
    let ln_ratio = (b / a).ln();
    let cubes = b.powi(3) - a.powi(3);
    let value = match (case.cost, case.k) {
        (_, 0.0) => Some(1.0),
        (CostShape::Linear { beta, .. }, k) if beta == 0.0 && k == 1.0 => Some((b + a) * ln_ratio / (2.0 * w)),
        (CostShape::Quadratic { .. }, 1.0) => Some(cubes / (3.0 * w * a * b)),
        (CostShape::Linear { beta, .. }, k) if beta == 0.0 && k == 2.0 => Some((b * b - a * a) / (2.0 * a * b * ln_ratio)),
        (CostShape::Quadratic { .. }, 2.0) => Some(cubes * cubes / (9.0 * w * w * a * a * b * b)),
        _ => None,
    };
    match value {
        Some(v) => Ok(OracleValue::exact(v)),
        None => quad_cg(&case.prior(), &case.cost_model(), &case.penalty()).map(OracleValue::numeric),
    }
}

fn box_of(prior: &PriorSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    match prior {
        PriorSpec::BoxUniform { low, high } if low.len() <= 2 => Ok((low.clone(), high.clone())),
        PriorSpec::BoxUniform { .. } => Err(Error::config("quadrature oracles support at most two dimensions")),
        PriorSpec::IndependentGaussian { .. } => Err(Error::config("quadrature oracles need a uniform prior")),
    }
}

/// `∫ f dπ` over a uniform prior of dimension one or two.
fn prior_expectation<F: Fn(&[f64]) -> f64>(prior: &PriorSpec, f: F) -> Result<f64> {
    let (low, high) = box_of(prior)?;
    let volume: f64 = low.iter().zip(&high).map(|(l, h)| h - l).product();
    let tol = QuadTolerance::default();
    let integral = if low.len() == 1 {
        integrate(|t| f(&[t]), low[0], high[0], tol)?
    } else {
        integrate_2d(|x, y| f(&[x, y]), (low[0], high[0]), (low[1], high[1]), tol)?
    };
    Ok(integral.value / volume)
}

/// `g(c(θ))` at the support's centre, used to keep integrands near unit scale
/// so the absolute tolerance acts as a relative one.
fn reference_scale(prior: &PriorSpec, cost: &CostModel, penalty: &PenaltySpec) -> f64 {
    let mid = prior.mean();
    penalty.eval_positive(cost.eval(&mid))
}

/// `B = E_π[1 / g(c(θ))]` by adaptive quadrature.
pub fn quad_b(prior: &PriorSpec, cost: &CostModel, penalty: &PenaltySpec) -> Result<f64> {
    let g_ref = reference_scale(prior, cost, penalty);
    let scaled = prior_expectation(prior, |t| g_ref / penalty.eval_positive(cost.eval(t)))?;
    Ok(scaled / g_ref)
}

/// `CG = E_π[c] / E_π̃[c]` by adaptive quadrature.
pub fn quad_cg(prior: &PriorSpec, cost: &CostModel, penalty: &PenaltySpec) -> Result<f64> {
    let c_ref = cost.eval(&prior.mean());
    let g_ref = reference_scale(prior, cost, penalty);
    let prior_cost = prior_expectation(prior, |t| cost.eval(t) / c_ref)?;
    let tilted_mass = prior_expectation(prior, |t| g_ref / penalty.eval_positive(cost.eval(t)))?;
    let tilted_cost = prior_expectation(prior, |t| {
        let c = cost.eval(t);
        (c / c_ref) * g_ref / penalty.eval_positive(c)
    })?;
    Ok(prior_cost * tilted_mass / tilted_cost)
}

/// CDF of the tilted density at `theta`, clamped to `[0, 1]` outside the support.
pub fn tilted_cdf(case: &ClosedFormCase, theta: f64) -> Result<OracleValue> {
    if theta <= case.theta_min {
        return Ok(OracleValue::exact(0.0));
    }
    if theta >= case.theta_max {
        return Ok(OracleValue::exact(1.0));
    }
    if case.k == 0.0 {
        return Ok(OracleValue::exact((theta - case.theta_min) / case.width()));
    }
    match case.cost {
        CostShape::Linear { alpha, .. } if alpha != 0.0 => {
            let (c, lo, hi) = (case.cost_at(theta), case.cost_at(case.theta_min), case.cost_at(case.theta_max));
            let v = if case.k == 1.0 {
                (c / lo).ln() / (hi / lo).ln()
            } else {
                let e = 1.0 - case.k;
                (c.powf(e) - lo.powf(e)) / (hi.powf(e) - lo.powf(e))
            };
            Ok(OracleValue::exact(v))
        }
        CostShape::Linear { .. } => Ok(OracleValue::exact((theta - case.theta_min) / case.width())),
        CostShape::Quadratic { .. } => {
            let density = |t: f64| case.cost_at(t).powf(-case.k);
            let scale = density(0.5 * (case.theta_min + case.theta_max));
            let tol = QuadTolerance::default();
            let part = integrate(|t| density(t) / scale, case.theta_min, theta, tol)?.value;
            let total = integrate(|t| density(t) / scale, case.theta_min, case.theta_max, tol)?.value;
            Ok(OracleValue::numeric(part / total))
        }
    }
}
