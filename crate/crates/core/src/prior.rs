use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::support::BoxSupport;

/// Half-width, in standard deviations, of the box used to bound penalty
/// extrema under a Gaussian prior.
pub const GAUSSIAN_BOUND_SIGMAS: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorSpec {
    BoxUniform { low: Vec<f64>, high: Vec<f64> },
    IndependentGaussian { mean: Vec<f64>, stddev: Vec<f64> },
}

impl PriorSpec {
    pub fn box_uniform(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        BoxSupport::new(low.clone(), high.clone())?;
        Ok(PriorSpec::BoxUniform { low, high })
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        PriorSpec::box_uniform(vec![low], vec![high])
    }

    pub fn gaussian(mean: Vec<f64>, stddev: Vec<f64>) -> Result<Self> {
        let p = PriorSpec::IndependentGaussian { mean, stddev };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::BoxUniform { low, high } => BoxSupport::new(low.clone(), high.clone()).map(|_| ()),
            PriorSpec::IndependentGaussian { mean, stddev } => {
                if mean.len() != stddev.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mean.len(),
                        got: stddev.len(),
                    });
                }
                if mean.is_empty() {
                    return Err(Error::config("prior must have at least one dimension"));
                }
                if mean.iter().any(|m| !m.is_finite()) || stddev.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::config("Gaussian prior needs finite means and positive stddevs"));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::BoxUniform { low, .. } => low.len(),
            PriorSpec::IndependentGaussian { mean, .. } => mean.len(),
        }
    }

    /// Box over which penalty bounds are computed: the support itself for a
    /// uniform prior, mean ± 8σ for a Gaussian one.
    pub fn bounding_box(&self) -> BoxSupport {
        match self {
            PriorSpec::BoxUniform { low, high } => BoxSupport {
                low: low.clone(),
                high: high.clone(),
            },
            PriorSpec::IndependentGaussian { mean, stddev } => BoxSupport {
                low: mean.iter().zip(stddev).map(|(m, s)| m - GAUSSIAN_BOUND_SIGMAS * s).collect(),
                high: mean.iter().zip(stddev).map(|(m, s)| m + GAUSSIAN_BOUND_SIGMAS * s).collect(),
            },
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            PriorSpec::BoxUniform { low, high } => low.iter().zip(high).map(|(l, h)| 0.5 * (l + h)).collect(),
            PriorSpec::IndependentGaussian { mean, .. } => mean.clone(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            PriorSpec::BoxUniform { low, high } => low
                .iter()
                .zip(high)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
            PriorSpec::IndependentGaussian { mean, stddev } => mean
                .iter()
                .zip(stddev)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect(),
        }
    }

    pub fn density(&self, theta: &[f64]) -> f64 {
        match self {
            PriorSpec::BoxUniform { low, high } => {
                let inside = theta
                    .iter()
                    .zip(low.iter().zip(high))
                    .all(|(t, (l, h))| t >= l && t <= h);
                if inside && theta.len() == low.len() {
                    low.iter().zip(high).map(|(l, h)| 1.0 / (h - l)).product()
                } else {
                    0.0
                }
            }
            PriorSpec::IndependentGaussian { mean, stddev } => theta
                .iter()
                .zip(mean.iter().zip(stddev))
                .map(|(t, (m, s))| {
                    let z = (t - m) / s;
                    (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
                })
                .product(),
        }
    }
}
