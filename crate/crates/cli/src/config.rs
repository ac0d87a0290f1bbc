//! Experiment configuration, presets and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use casbi::costmodel::{Clock, FitMethod, GpConfig};
use casbi::{CostModel, Error, PenaltySpec, PriorSpec, Simulator};

pub const PRESETS: [&str; 6] = ["gamma", "sir-homogeneous", "sir-temporal", "sir-bernoulli", "radio", "gaussian-toy"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Thread count; affects speed only and is excluded from the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Output directory; excluded from the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub simulator: Simulator,
    /// Defaults to the simulator's prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    /// Parameter that generates the synthetic observation; defaults to the simulator's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_true: Option<Vec<f64>>,
    /// Observed summary; replaces the synthetic observation when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<Vec<f64>>,
    pub cost: CostSource,
    pub penalty: PenaltyChoice,
    #[serde(default)]
    pub diagnose: DiagnoseSection,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default)]
    pub abc: AbcSection,
    #[serde(default)]
    pub export: ExportSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSource {
    /// A named analytic cost model (`gamma-cost-text`, `gamma-cost-table`, `gaussian-toy`).
    Preset { name: String },
    /// Measure the simulator at `n_pilot` prior draws and fit a model.
    Fit {
        n_pilot: usize,
        #[serde(default = "one")]
        reps: usize,
        #[serde(default)]
        clock: Clock,
        fit: FitMethod,
    },
    /// A cost model previously written by `cost-fit`.
    File { path: PathBuf },
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltyChoice {
    Constant,
    Power {
        k: f64,
    },
    /// Constant penalty plus `z^k` for each listed power, equal budget shares.
    Mis {
        #[serde(default = "default_powers")]
        powers: Vec<f64>,
    },
    /// Mixture chosen by CG×ESS screening of the candidates.
    Auto {
        #[serde(default = "default_auto_candidates")]
        candidates: Vec<f64>,
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default = "default_selection_n_mc")]
        n_mc: usize,
    },
}

fn default_powers() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}
fn default_auto_candidates() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 3.0]
}
fn default_threshold() -> f64 {
    casbi::diagnostics::DEFAULT_THRESHOLD
}
fn default_selection_n_mc() -> usize {
    casbi::diagnostics::SELECTION_N_MC
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    pub candidates: Vec<f64>,
    pub n_mc: usize,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        DiagnoseSection {
            candidates: vec![0.0, 0.5, 1.0, 2.0, 3.0],
            n_mc: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    /// Draws from the proposal (per component for mixtures).
    pub n: usize,
    /// Also simulate the draws, and the same number of prior draws, to
    /// report realised virtual cost.
    pub simulate: bool,
    pub n_mc: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            n: 20_000,
            simulate: true,
            n_mc: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbcSection {
    pub epsilon: f64,
    pub budget: usize,
    pub n_pilot: usize,
}

impl Default for AbcSection {
    fn default() -> Self {
        AbcSection {
            epsilon: 0.05,
            budget: 50_000,
            n_pilot: casbi::inference::PILOT_SIZE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    pub n: usize,
    pub reps: usize,
}

impl Default for ExportSection {
    fn default() -> Self {
        ExportSection { n: 5000, reps: 1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// Reference particle file (`theta_*[,weight]`) to score the ABC posterior against.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    /// Kernel lengthscale; the median heuristic on the reference when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lengthscale: Option<f64>,
    pub unbiased: bool,
    /// Score equally weighted resampled particles of this size instead of the weighted set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resample: Option<usize>,
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self, Error> {
        let fitted = |n_pilot| CostSource::Fit {
            n_pilot,
            reps: 1,
            clock: Clock::Virtual,
            fit: FitMethod::Gp(GpConfig::default()),
        };
        let (simulator, cost, penalty, epsilon, budget) = match name.replace('_', "-").as_str() {
            "gamma" => (
                Simulator::Gamma { m: 500 },
                CostSource::Preset {
                    name: "gamma-cost-table".into(),
                },
                PenaltyChoice::Power { k: 1.0 },
                0.05,
                50_000,
            ),
            "gaussian-toy" => (
                Simulator::GaussianToy { m: 100 },
                CostSource::Preset {
                    name: "gaussian-toy".into(),
                },
                PenaltyChoice::Power { k: 1.0 },
                0.05,
                50_000,
            ),
            "sir-homogeneous" => (
                Simulator::SirHomogeneous {
                    population: 10_000,
                    dispersion: 1.0,
                },
                fitted(15),
                PenaltyChoice::Mis { powers: default_powers() },
                0.5,
                10_000,
            ),
            "sir-temporal" => (
                Simulator::SirTemporal { population: 1000, bins: 10 },
                fitted(15),
                PenaltyChoice::Mis { powers: default_powers() },
                0.5,
                10_000,
            ),
            "sir-bernoulli" => (
                Simulator::SirBernoulli { population: 1000, bins: 10 },
                fitted(15),
                PenaltyChoice::Mis { powers: default_powers() },
                0.5,
                10_000,
            ),
            "radio" => (
                Simulator::Radio { m: 50 },
                fitted(15),
                PenaltyChoice::Mis { powers: default_powers() },
                0.5,
                10_000,
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(ExperimentConfig {
            seed: 0,
            workers: None,
            out: None,
            simulator,
            prior: None,
            theta_true: None,
            observed: None,
            cost,
            penalty,
            diagnose: DiagnoseSection::default(),
            sample: SampleSection::default(),
            abc: AbcSection {
                epsilon,
                budget,
                ..AbcSection::default()
            },
            export: ExportSection::default(),
            metrics: MetricsSection::default(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn prior(&self) -> PriorSpec {
        self.prior.clone().unwrap_or_else(|| self.simulator.default_prior())
    }

    pub fn theta_true(&self) -> Vec<f64> {
        self.theta_true.clone().unwrap_or_else(|| self.simulator.default_theta_true())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// SHA-256 of the canonical TOML form with `workers` and `out` removed.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = None;
        canonical.out = None;
        let text = canonical.to_toml().unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks every field against the preconditions of the operations that
    /// consume it, before any simulation runs.
    pub fn validate(&self) -> Result<(), Error> {
        self.simulator.validate().map_err(|e| field_error("simulator", e))?;
        let p = self.simulator.param_dim();
        let prior = self.prior();
        prior.validate().map_err(|e| field_error("prior", e))?;
        if prior.dim() != p {
            return Err(field_error("prior", format!("has dimension {}, simulator needs {p}", prior.dim())));
        }
        if self.theta_true().len() != p {
            return Err(field_error("theta_true", format!("needs {p} entries")));
        }
        if let Some(x) = &self.observed {
            if x.len() != self.simulator.summary_dim() || x.iter().any(|v| !v.is_finite()) {
                return Err(field_error(
                    "observed",
                    format!("needs {} finite entries", self.simulator.summary_dim()),
                ));
            }
        }
        if self.workers == Some(0) {
            return Err(field_error("workers", "must be at least 1"));
        }
        match &self.cost {
            CostSource::Preset { name } => {
                let model = CostModel::preset(name).map_err(|e| field_error("cost.name", e))?;
                if model.dim() != p {
                    return Err(field_error("cost.name", format!("preset `{name}` has dimension {}, simulator needs {p}", model.dim())));
                }
            }
            CostSource::Fit { n_pilot, reps, .. } => {
                if *n_pilot < 2 {
                    return Err(field_error("cost.n_pilot", "must be at least 2"));
                }
                if *reps == 0 {
                    return Err(field_error("cost.reps", "must be at least 1"));
                }
            }
            CostSource::File { .. } => {}
        }
        let check_k = |field: &str, k: f64| -> Result<(), Error> {
            PenaltySpec::power(k).validate().map_err(|e| field_error(field, e))
        };
        match &self.penalty {
            PenaltyChoice::Constant => {}
            PenaltyChoice::Power { k } => check_k("penalty.k", *k)?,
            PenaltyChoice::Mis { powers } => {
                for k in powers {
                    check_k("penalty.powers", *k)?;
                }
            }
            PenaltyChoice::Auto {
                candidates,
                threshold,
                n_mc,
            } => {
                if candidates.is_empty() {
                    return Err(field_error("penalty.candidates", "must not be empty"));
                }
                for k in candidates {
                    check_k("penalty.candidates", *k)?;
                }
                if !threshold.is_finite() {
                    return Err(field_error("penalty.threshold", "must be finite"));
                }
                if *n_mc < 100 {
                    return Err(field_error("penalty.n_mc", "must be at least 100"));
                }
            }
        }
        if self.diagnose.candidates.is_empty() {
            return Err(field_error("diagnose.candidates", "must not be empty"));
        }
        for k in &self.diagnose.candidates {
            check_k("diagnose.candidates", *k)?;
        }
        if self.diagnose.n_mc < 100 {
            return Err(field_error("diagnose.n_mc", "must be at least 100"));
        }
        if self.sample.n == 0 {
            return Err(field_error("sample.n", "must be at least 1"));
        }
        if self.sample.n_mc < 100 {
            return Err(field_error("sample.n_mc", "must be at least 100"));
        }
        if !(self.abc.epsilon > 0.0) {
            return Err(field_error("abc.epsilon", format!("must be positive, got {}", self.abc.epsilon)));
        }
        if self.abc.budget == 0 {
            return Err(field_error("abc.budget", "must be at least 1"));
        }
        if self.abc.n_pilot < 2 {
            return Err(field_error("abc.n_pilot", "must be at least 2"));
        }
        if self.export.n == 0 || self.export.reps == 0 {
            return Err(field_error("export", "n and reps must be at least 1"));
        }
        if let Some(l) = self.metrics.lengthscale {
            if !(l > 0.0 && l.is_finite()) {
                return Err(field_error("metrics.lengthscale", "must be positive"));
            }
        }
        if self.metrics.resample == Some(0) {
            return Err(field_error("metrics.resample", "must be at least 1"));
        }
        Ok(())
    }
}
