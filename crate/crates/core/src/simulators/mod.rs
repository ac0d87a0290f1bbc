//! Built-in stochastic simulators with summary statistics and virtual-cost counters.

mod gamma;
mod radio;
mod sir;
mod toy;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::PriorSpec;
use crate::rng::RngKey;

pub use gamma::{gamma_draw, gamma_simulate};
pub use radio::{inverse_plan, radio_realisation, radio_simulate, RadioParams, RadioRealisation, BANDWIDTH, N_FREQ, T_MAX};
pub use sir::{sir_bernoulli, sir_homogeneous, sir_temporal, EpidemicOutcome};
pub use toy::gaussian_toy;

/// One simulator run: summary statistics and its deterministic cost counter.
#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub summary: Vec<f64>,
    pub virtual_cost: u64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Simulator {
    /// `m` draws from Gamma(θ, 1); summary (mean, stddev).
    Gamma {
        #[serde(default = "default_gamma_m")]
        m: usize,
    },
    SirHomogeneous {
        #[serde(default = "default_sir_homogeneous_n")]
        population: usize,
        #[serde(default = "default_dispersion")]
        dispersion: f64,
    },
    SirTemporal {
        #[serde(default = "default_sir_n")]
        population: usize,
        #[serde(default = "default_bins")]
        bins: usize,
    },
    SirBernoulli {
        #[serde(default = "default_sir_n")]
        population: usize,
        #[serde(default = "default_bins")]
        bins: usize,
    },
    Radio {
        #[serde(default = "default_radio_m")]
        m: usize,
    },
    /// Mean of `m` draws from Normal(θ, 1).
    GaussianToy {
        #[serde(default = "default_toy_m")]
        m: usize,
    },
}

fn default_gamma_m() -> usize {
    500
}
fn default_sir_homogeneous_n() -> usize {
    10_000
}
fn default_dispersion() -> f64 {
    1.0
}
fn default_sir_n() -> usize {
    1000
}
fn default_bins() -> usize {
    10
}
fn default_radio_m() -> usize {
    50
}
fn default_toy_m() -> usize {
    100
}

impl Simulator {
    /// Simulator with its default constants, looked up by config name
    /// (`gamma`, `sir_homogeneous`, `sir_temporal`, `sir_bernoulli`, `radio`,
    /// `gaussian_toy`; dashes are accepted in place of underscores).
    pub fn by_name(name: &str) -> Result<Self> {
        match name.replace('-', "_").as_str() {
            "gamma" => Ok(Simulator::Gamma { m: default_gamma_m() }),
            "sir_homogeneous" => Ok(Simulator::SirHomogeneous {
                population: default_sir_homogeneous_n(),
                dispersion: default_dispersion(),
            }),
            "sir_temporal" => Ok(Simulator::SirTemporal {
                population: default_sir_n(),
                bins: default_bins(),
            }),
            "sir_bernoulli" => Ok(Simulator::SirBernoulli {
                population: default_sir_n(),
                bins: default_bins(),
            }),
            "radio" => Ok(Simulator::Radio { m: default_radio_m() }),
            "gaussian_toy" => Ok(Simulator::GaussianToy { m: default_toy_m() }),
            other => Err(Error::config(format!("unknown simulator `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Simulator::Gamma { .. } => "gamma",
            Simulator::SirHomogeneous { .. } => "sir_homogeneous",
            Simulator::SirTemporal { .. } => "sir_temporal",
            Simulator::SirBernoulli { .. } => "sir_bernoulli",
            Simulator::Radio { .. } => "radio",
            Simulator::GaussianToy { .. } => "gaussian_toy",
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            Simulator::Gamma { .. } | Simulator::SirHomogeneous { .. } | Simulator::GaussianToy { .. } => 1,
            Simulator::SirTemporal { .. } => 2,
            Simulator::SirBernoulli { .. } => 3,
            Simulator::Radio { .. } => 4,
        }
    }

    pub fn summary_dim(&self) -> usize {
        match self {
            Simulator::Gamma { .. } => 2,
            Simulator::SirHomogeneous { .. } | Simulator::GaussianToy { .. } => 1,
            Simulator::SirTemporal { bins, .. } | Simulator::SirBernoulli { bins, .. } => 2 + bins,
            Simulator::Radio { .. } => 6,
        }
    }

    pub fn default_prior(&self) -> PriorSpec {
        let (low, high) = match self {
            Simulator::Gamma { .. } => (vec![100.0], vec![1000.0]),
            Simulator::SirHomogeneous { .. } => (vec![1.0], vec![10.0]),
            Simulator::SirTemporal { .. } => (vec![0.1; 2], vec![1.0; 2]),
            Simulator::SirBernoulli { .. } => (vec![0.1; 3], vec![1.0; 3]),
            Simulator::Radio { .. } => (vec![1e-9, 1e-9, 1e7, 1e-10], vec![1e-8, 1e-8, 5e9, 1e-9]),
            Simulator::GaussianToy { .. } => (vec![-5.0], vec![5.0]),
        };
        PriorSpec::BoxUniform { low, high }
    }

    /// Parameter used to generate synthetic observations in the presets.
    pub fn default_theta_true(&self) -> Vec<f64> {
        match self {
            Simulator::Gamma { .. } => vec![250.0],
            Simulator::SirHomogeneous { .. } => vec![5.0],
            Simulator::SirTemporal { .. } => vec![0.5, 0.5],
            Simulator::SirBernoulli { .. } => vec![0.5, 0.5, 0.5],
            Simulator::Radio { .. } => vec![3.98e-9, 7.8e-9, 1e9, 2.8e-10],
            Simulator::GaussianToy { .. } => vec![2.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::config(format!("simulator {}: {msg}", self.name())));
        match self {
            Simulator::Gamma { m } | Simulator::Radio { m } | Simulator::GaussianToy { m } if *m == 0 => {
                bad("m must be at least 1")
            }
            Simulator::SirHomogeneous { population, dispersion } if *population == 0 || !(*dispersion > 0.0) => {
                bad("need population ≥ 1 and dispersion > 0")
            }
            Simulator::SirTemporal { population, bins } | Simulator::SirBernoulli { population, bins }
                if *population == 0 || *bins == 0 =>
            {
                bad("need population ≥ 1 and bins ≥ 1")
            }
            _ => Ok(()),
        }
    }

    /// Runs the simulator once at `theta`. All randomness comes from `key`.
    pub fn simulate(&self, theta: &[f64], key: RngKey) -> Result<SimOutput> {
        if theta.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(self.failure(format!("non-finite parameter {theta:?}")));
        }
        let start = Instant::now();
        let (summary, virtual_cost) = match self {
            Simulator::Gamma { m } => {
                let (s, cost) = gamma_simulate(theta[0], *m, key)?;
                (s.to_vec(), cost)
            }
            Simulator::SirHomogeneous { population, dispersion } => {
                if theta[0] < 0.0 {
                    return Err(self.failure("infection rate must be non-negative"));
                }
                let out = sir_homogeneous(theta[0], *population, *dispersion, &mut key.stream(0));
                (vec![out.final_size as f64], out.virtual_cost)
            }
            Simulator::SirTemporal { population, bins } => {
                if theta.iter().any(|t| *t < 0.0) {
                    return Err(self.failure("rates must be non-negative"));
                }
                let out = sir_temporal(theta[0], theta[1], *population, *bins, &mut key.stream(0));
                (out.summary(), out.virtual_cost)
            }
            Simulator::SirBernoulli { population, bins } => {
                if theta.iter().any(|t| *t < 0.0) || theta[2] > 1.0 {
                    return Err(self.failure("rates must be non-negative and edge probability ≤ 1"));
                }
                let out = sir_bernoulli(theta[0], theta[1], theta[2], *population, *bins, &mut key.stream(0));
                (out.summary(), out.virtual_cost)
            }
            Simulator::Radio { m } => {
                let params = RadioParams::from_slice(theta)?;
                let (s, cost) = radio_simulate(&params, *m, key);
                (s.to_vec(), cost)
            }
            Simulator::GaussianToy { m } => (vec![gaussian_toy(theta[0], *m, &mut key.stream(0))], *m as u64),
        };
        if summary.iter().any(|x| !x.is_finite()) {
            return Err(self.failure(format!("non-finite summary at θ = {theta:?}")));
        }
        Ok(SimOutput {
            summary,
            virtual_cost,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn failure(&self, message: impl Into<String>) -> Error {
        Error::Simulator {
            simulator: self.name().to_string(),
            message: message.into(),
        }
    }
}
