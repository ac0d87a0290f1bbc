//! The cost-aware proposal `π̃_g ∝ π / g(c)`, its rejection sampler, and
//! self-normalised importance estimators built on it.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmodel::CostModel;
use crate::error::{Error, Result};
use crate::numeric::{fmt_num, pairwise_sum};
use crate::penalty::{penalty_bounds, BoundsConfig, PenaltyBounds, PenaltySpec};
use crate::prior::PriorSpec;
use crate::rng::RngKey;

pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000_000;
/// Clamped acceptances above this fraction of proposals mean `g_min` is wrong.
pub const CLAMP_FRACTION_LIMIT: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct CostAwareProposal {
    pub prior: PriorSpec,
    pub cost: CostModel,
    pub penalty: PenaltySpec,
    pub bounds: PenaltyBounds,
    pub max_attempts_per_accept: u64,
}

impl CostAwareProposal {
    /// Builds the proposal, computing penalty bounds over the prior's bounding box.
    pub fn new(prior: PriorSpec, cost: CostModel, penalty: PenaltySpec) -> Result<Self> {
        Self::with_bounds_config(prior, cost, penalty, BoundsConfig::default())
    }

    pub fn with_bounds_config(
        prior: PriorSpec,
        cost: CostModel,
        penalty: PenaltySpec,
        config: BoundsConfig,
    ) -> Result<Self> {
        prior.validate()?;
        let bounds = penalty_bounds(&penalty, &cost, &prior.bounding_box(), config)?;
        Ok(CostAwareProposal {
            prior,
            cost,
            penalty,
            bounds,
            max_attempts_per_accept: DEFAULT_MAX_ATTEMPTS,
        })
    }

    pub fn with_max_attempts(mut self, max: u64) -> Self {
        self.max_attempts_per_accept = max;
        self
    }

    /// `g(c(θ))`
    pub fn g(&self, theta: &[f64]) -> f64 {
        self.penalty.eval_positive(self.cost.eval(theta))
    }

    /// Unclamped acceptance ratio `g_min / g(c(θ))`.
    pub fn acceptance(&self, theta: &[f64]) -> f64 {
        self.bounds.g_min / self.g(theta)
    }

    /// Draws one accepted parameter using the stream for `index`.
    pub fn draw(&self, key: RngKey, index: u64) -> Draw {
        use rand::Rng;
        let mut rng = key.stream(index);
        let mut clamped = 0;
        for attempt in 1..=self.max_attempts_per_accept {
            let theta = self.prior.sample(&mut rng);
            let g = self.g(&theta);
            let a = self.bounds.g_min / g;
            if a > 1.0 {
                clamped += 1;
            }
            if self.penalty.is_constant() || rng.random::<f64>() < a {
                return Draw {
                    theta: Some((theta, g)),
                    attempts: attempt,
                    clamped,
                };
            }
        }
        Draw {
            theta: None,
            attempts: self.max_attempts_per_accept,
            clamped,
        }
    }
}

/// Outcome of one attempt loop; `theta` carries `(θ, g(c(θ)))` when accepted.
#[derive(Clone, Debug)]
pub struct Draw {
    pub theta: Option<(Vec<f64>, f64)>,
    pub attempts: u64,
    pub clamped: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub proposed: u64,
    pub accepted: u64,
    pub clamped: u64,
}

impl AcceptanceStats {
    pub fn rate(&self) -> f64 {
        self.accepted as f64 / self.proposed.max(1) as f64
    }

    pub fn merge(&self, other: &AcceptanceStats) -> AcceptanceStats {
        AcceptanceStats {
            proposed: self.proposed + other.proposed,
            accepted: self.accepted + other.accepted,
            clamped: self.clamped + other.clamped,
        }
    }
}

/// Parameters drawn from `π̃_g` with their self-normalised weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSamples {
    pub thetas: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
    /// Unnormalised weights `g(c(θ_i))`.
    pub g_values: Vec<f64>,
    /// `g(c(θ_i)) / Σ_j g(c(θ_j))`
    pub weights: Vec<f64>,
    pub stats: AcceptanceStats,
    pub bounds: Option<PenaltyBounds>,
}

impl WeightedSamples {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// Checks `g_min/(n g_max) ≤ w_i ≤ g_max/(n g_min)` for every weight.
    pub fn check_weight_bounds(&self, tol: f64) -> Result<()> {
        let Some(b) = self.bounds else {
            return Ok(());
        };
        let n = self.len() as f64;
        let lo = b.g_min / (n * b.g_max) - tol;
        let hi = b.g_max / (n * b.g_min) + tol;
        for (i, w) in self.weights.iter().enumerate() {
            if *w < lo || *w > hi {
                return Err(Error::domain(format!(
                    "weight {i} = {w} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Writes `theta_0..theta_{p-1},cost,g_of_cost,weight` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let dim = self.thetas.first().map(|t| t.len()).unwrap_or(0);
        let mut header: Vec<String> = (0..dim).map(|d| format!("theta_{d}")).collect();
        header.extend(["cost", "g_of_cost", "weight"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.thetas[i].iter().map(|x| fmt_num(*x)).collect();
            row.push(fmt_num(self.costs[i]));
            row.push(fmt_num(self.g_values[i]));
            row.push(fmt_num(self.weights[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads rows written by [`WeightedSamples::write_csv`]. Acceptance
    /// statistics and bounds are not part of the file and come back empty.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let dim = headers.iter().filter(|h| h.starts_with("theta_")).count();
        let tail: Vec<&str> = headers.iter().skip(dim).collect();
        if tail != ["cost", "g_of_cost", "weight"] {
            return Err(Error::Parse(format!("unexpected weighted-sample header {headers:?}")));
        }
        let mut out = WeightedSamples {
            thetas: Vec::new(),
            costs: Vec::new(),
            g_values: Vec::new(),
            weights: Vec::new(),
            stats: AcceptanceStats::default(),
            bounds: None,
        };
        for row in rdr.records() {
            let vals = crate::numeric::parse_row(&row?)?;
            out.thetas.push(vals[..dim].to_vec());
            out.costs.push(vals[dim]);
            out.g_values.push(vals[dim + 1]);
            out.weights.push(vals[dim + 2]);
        }
        Ok(out)
    }
}

/// Normalises positive unnormalised weights to sum to one.
pub fn normalise(g_values: &[f64]) -> Result<Vec<f64>> {
    if g_values.is_empty() {
        return Err(Error::domain("no weights to normalise"));
    }
    if let Some(i) = g_values.iter().position(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::domain(format!("penalty value {} at index {i} is not a finite non-negative number", g_values[i])));
    }
    let total = pairwise_sum(g_values);
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::domain(format!("penalty values sum to {total}")));
    }
    Ok(g_values.iter().map(|g| g / total).collect())
}

/// Rejection sampling from `π̃_g`: propose from the prior and accept with
/// probability `min(1, g_min / g(c(θ)))` until `n` draws are accepted.
/// Each accepted index runs its own attempt loop on its own stream.
pub fn rejection_sample(proposal: &CostAwareProposal, n: usize, key: RngKey) -> Result<WeightedSamples> {
    if n == 0 {
        return Err(Error::config("rejection_sample needs n ≥ 1"));
    }
    let draws: Vec<Draw> = (0..n as u64)
        .into_par_iter()
        .map(|i| proposal.draw(key, i))
        .collect();

    let stats = AcceptanceStats {
        proposed: draws.iter().map(|d| d.attempts).sum(),
        accepted: draws.iter().filter(|d| d.theta.is_some()).count() as u64,
        clamped: draws.iter().map(|d| d.clamped).sum(),
    };
    if let Some(d) = draws.iter().find(|d| d.theta.is_none()) {
        return Err(Error::BudgetExceeded {
            attempts: d.attempts,
            rate: stats.rate(),
        });
    }
    let fraction = stats.clamped as f64 / stats.proposed as f64;
    if fraction > CLAMP_FRACTION_LIMIT {
        return Err(Error::BoundsInvalid {
            clamped: stats.clamped,
            proposed: stats.proposed,
            fraction,
        });
    }
    if stats.clamped > 0 {
        log::warn!(
            "acceptance probability clamped to 1 on {} of {} proposals",
            stats.clamped,
            stats.proposed
        );
    }

    let mut thetas = Vec::with_capacity(n);
    let mut g_values = Vec::with_capacity(n);
    for d in draws {
        let (theta, g) = d.theta.expect("checked above");
        thetas.push(theta);
        g_values.push(g);
    }
    let costs = thetas.iter().map(|t| proposal.cost.eval(t)).collect();
    let weights = normalise(&g_values)?;
    Ok(WeightedSamples {
        thetas,
        costs,
        g_values,
        weights,
        stats,
        bounds: Some(proposal.bounds),
    })
}

/// Normalised cost-aware weights `g(c(θ_i)) / Σ_j g(c(θ_j))`.
pub fn ca_weights(thetas: &[Vec<f64>], cost: &CostModel, penalty: &PenaltySpec) -> Result<Vec<f64>> {
    let g: Vec<f64> = thetas
        .iter()
        .map(|t| penalty.eval(cost.eval(t)))
        .collect::<Result<_>>()?;
    normalise(&g)
}

/// A vector-valued estimate with per-component standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
}

fn evaluate_integrand<F>(thetas: &[Vec<f64>], f: &F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let values: Vec<Vec<f64>> = thetas.par_iter().map(|t| f(t)).collect();
    let dim = values.first().map(|v| v.len()).unwrap_or(0);
    let bad: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.len() != dim || v.iter().any(|x| !x.is_finite()))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonFiniteIntegrand(bad));
    }
    Ok(values)
}

/// Weighted mean of `values` with the delta-method standard error
/// `sqrt(Σ w_i² (f_i − μ̂)²)` of a self-normalised estimator.
fn weighted_estimate(weights: &[f64], values: &[Vec<f64>]) -> Estimate {
    let dim = values.first().map(|v| v.len()).unwrap_or(0);
    let mut value = Vec::with_capacity(dim);
    let mut std_error = Vec::with_capacity(dim);
    for d in 0..dim {
        let terms: Vec<f64> = weights.iter().zip(values).map(|(w, v)| w * v[d]).collect();
        let mu = pairwise_sum(&terms);
        let sq: Vec<f64> = weights
            .iter()
            .zip(values)
            .map(|(w, v)| (w * (v[d] - mu)).powi(2))
            .collect();
        value.push(mu);
        std_error.push(pairwise_sum(&sq).sqrt());
    }
    Estimate { value, std_error }
}

/// `Σ_i w_Ca,i f(θ_i)` with a delta-method standard error.
pub fn ca_estimate<F>(samples: &WeightedSamples, f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if samples.is_empty() {
        return Err(Error::domain("cannot estimate from an empty sample"));
    }
    let values = evaluate_integrand(&samples.thetas, &f)?;
    Ok(weighted_estimate(&samples.weights, &values))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisComponent {
    pub penalty: PenaltySpec,
    pub n: usize,
}

/// Components of a multiple cost-aware importance sampler. The first component
/// must be the unpenalised target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisPlan {
    pub components: Vec<MisComponent>,
}

impl MisPlan {
    /// `{constant} ∪ {z^k : k ∈ powers}` with `n_per` draws each.
    pub fn with_powers(powers: &[f64], n_per: usize) -> Self {
        let mut components = vec![MisComponent {
            penalty: PenaltySpec::constant(),
            n: n_per,
        }];
        components.extend(powers.iter().map(|&k| MisComponent {
            penalty: PenaltySpec::power(k),
            n: n_per,
        }));
        MisPlan { components }
    }

    /// Constant plus `z, z², z³`, equal sizes.
    pub fn default_plan(n_per: usize) -> Self {
        MisPlan::with_powers(&[1.0, 2.0, 3.0], n_per)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .components
            .first()
            .ok_or_else(|| Error::config("MIS plan needs at least one component"))?;
        if !first.penalty.is_constant() {
            return Err(Error::config("the first MIS component must be the constant penalty"));
        }
        for (j, c) in self.components.iter().enumerate() {
            if c.n == 0 {
                return Err(Error::config(format!("MIS component {j} has n = 0")));
            }
            c.penalty.validate()?;
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.components.iter().map(|c| c.n).sum()
    }
}

/// Per-component diagnostics of a multiple cost-aware estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentReport {
    pub penalty: PenaltySpec,
    pub n: usize,
    pub ess: f64,
    pub mean_cost: f64,
    pub estimate: Estimate,
    pub stats: AcceptanceStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MisEstimate {
    pub estimate: Estimate,
    pub components: Vec<ComponentReport>,
}

/// Draws every component of `plan`; component `j` uses sub-key `j`.
pub fn mis_sample(plan: &MisPlan, prior: &PriorSpec, cost: &CostModel, key: RngKey) -> Result<Vec<WeightedSamples>> {
    plan.validate()?;
    plan.components
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let proposal = CostAwareProposal::new(prior.clone(), cost.clone(), c.penalty.clone())?;
            rejection_sample(&proposal, c.n, key.child(j as u64))
        })
        .collect()
}

/// `(1/J) Σ_j Σ_i w_Ca,j(θ_ij) f(θ_ij)` with weights normalised within each component.
pub fn mis_estimate<F>(plan: &MisPlan, prior: &PriorSpec, cost: &CostModel, f: F, key: RngKey) -> Result<MisEstimate>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let strata = mis_sample(plan, prior, cost, key)?;
    let j = strata.len() as f64;
    let mut components = Vec::with_capacity(strata.len());
    for (c, s) in plan.components.iter().zip(&strata) {
        let est = ca_estimate(s, &f)?;
        components.push(ComponentReport {
            penalty: c.penalty.clone(),
            n: c.n,
            ess: crate::diagnostics::ess(s),
            mean_cost: crate::numeric::mean(&s.costs),
            estimate: est,
            stats: s.stats,
        });
    }
    let dim = components[0].estimate.value.len();
    let mut value = vec![0.0; dim];
    let mut var = vec![0.0; dim];
    for c in &components {
        for d in 0..dim {
            value[d] += c.estimate.value[d] / j;
            var[d] += (c.estimate.std_error[d] / j).powi(2);
        }
    }
    Ok(MisEstimate {
        estimate: Estimate {
            value,
            std_error: var.iter().map(|v| v.sqrt()).collect(),
        },
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_problem(k: f64) -> CostAwareProposal {
        CostAwareProposal::new(
            PriorSpec::uniform(0.0, 1.0).unwrap(),
            CostModel::analytic_linear(vec![1.0], 0.1),
            PenaltySpec::power(k),
        )
        .unwrap()
    }

    #[test]
    fn constant_penalty_is_plain_prior_sampling() {
        let p = unit_problem(0.0);
        let s = rejection_sample(&p, 1000, RngKey::new(1)).unwrap();
        assert_eq!(s.stats.proposed, 1000);
        assert!(s.weights.iter().all(|w| (*w - 1e-3).abs() < 1e-15));
    }

    #[test]
    fn acceptance_at_reported_extremes() {
        let p = CostAwareProposal::new(
            PriorSpec::uniform(100.0, 1000.0).unwrap(),
            CostModel::gamma_cost_table(),
            PenaltySpec::power(1.0),
        )
        .unwrap();
        assert_eq!(p.acceptance(&[100.0]), 1.0);
        assert!((p.acceptance(&[1000.0]) - 1e-3 / 2.8e-3).abs() < 1e-12);
        assert!((p.acceptance(&[1000.0]) - 0.357).abs() < 1e-3);
    }

    #[test]
    fn weight_examples() {
        let cost = CostModel::analytic_linear(vec![1.0], 0.0);
        let w = ca_weights(&[vec![1.0], vec![3.0]], &cost, &PenaltySpec::power(1.0)).unwrap();
        assert_eq!(w, vec![0.25, 0.75]);
        let w = ca_weights(&[vec![2.0], vec![2.0], vec![2.0]], &cost, &PenaltySpec::power(2.0)).unwrap();
        assert!(w.iter().all(|x| (*x - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(ca_weights(&[vec![7.0]], &cost, &PenaltySpec::power(3.0)).unwrap(), vec![1.0]);
        assert!(normalise(&[0.0, 0.0]).is_err());
        assert!(normalise(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn estimates_match_target() {
        let p = unit_problem(1.0);
        let s = rejection_sample(&p, 100_000, RngKey::new(2)).unwrap();
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        s.check_weight_bounds(1e-15).unwrap();
        let e = ca_estimate(&s, |t| vec![t[0]]).unwrap();
        assert!((e.value[0] - 0.5).abs() < 4.0 * e.std_error[0], "{e:?}");
        let e = ca_estimate(&s, |t| vec![(t[0] < 0.25) as u8 as f64]).unwrap();
        assert!((e.value[0] - 0.25).abs() < 4.0 * e.std_error[0], "{e:?}");
        let e = ca_estimate(&s, |_| vec![3.5]).unwrap();
        assert!((e.value[0] - 3.5).abs() < 1e-12);
        match ca_estimate(&s, |t| vec![if t[0] < 0.01 { f64::NAN } else { 1.0 }]) {
            Err(Error::NonFiniteIntegrand(idx)) => assert!(!idx.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn budget_and_bounds_errors() {
        let p = unit_problem(3.0).with_max_attempts(1);
        // With A well below 1 for most θ, one attempt per draw must fail somewhere.
        assert!(matches!(
            rejection_sample(&p, 1000, RngKey::new(3)),
            Err(Error::BudgetExceeded { .. })
        ));
        let mut p = unit_problem(1.0);
        p.bounds.g_min *= 5.0;
        assert!(matches!(
            rejection_sample(&p, 1000, RngKey::new(3)),
            Err(Error::BoundsInvalid { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_across_pools() {
        let p = unit_problem(2.0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| rejection_sample(&p, 5000, RngKey::new(4)).unwrap())
        };
        assert_eq!(run(1), run(7));
    }

    #[test]
    fn mis_plan_rules() {
        assert!(MisPlan { components: vec![] }.validate().is_err());
        let bad = MisPlan {
            components: vec![MisComponent {
                penalty: PenaltySpec::power(1.0),
                n: 5,
            }],
        };
        assert!(bad.validate().is_err());
        assert_eq!(MisPlan::default_plan(10).components.len(), 4);
    }

    #[test]
    fn mis_recovers_prior_mean() {
        let prior = PriorSpec::uniform(100.0, 1000.0).unwrap();
        let cost = CostModel::gamma_cost_text();
        let plan = MisPlan::default_plan(10_000);
        let e = mis_estimate(&plan, &prior, &cost, |t| vec![t[0]], RngKey::new(5)).unwrap();
        assert!((e.estimate.value[0] - 550.0).abs() < 4.0 * e.estimate.std_error[0], "{:?}", e.estimate);
        assert_eq!(e.components.len(), 4);
        // All-constant strata average to the stratum means.
        let flat = MisPlan::with_powers(&[0.0, 0.0], 100);
        let e = mis_estimate(&flat, &prior, &cost, |t| vec![t[0]], RngKey::new(6)).unwrap();
        let avg: f64 = e.components.iter().map(|c| c.estimate.value[0]).sum::<f64>() / 3.0;
        assert!((e.estimate.value[0] - avg).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = rejection_sample(&unit_problem(1.0), 50, RngKey::new(7)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = WeightedSamples::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.thetas, s.thetas);
        assert_eq!(back.weights, s.weights);
        assert_eq!(back.g_values, s.g_values);
    }
}
