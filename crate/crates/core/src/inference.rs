//! Rejection ABC with prior, cost-aware or mixture sampling, weighted
//! posterior summaries, and weighted training-set export.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::costmodel::CostModel;
use crate::error::{Error, Result};
use crate::numeric::{fmt_num, mean, pairwise_sum, parse_row, sample_variance};
use crate::prior::PriorSpec;
use crate::proposal::{normalise, AcceptanceStats, CostAwareProposal, MisPlan, CLAMP_FRACTION_LIMIT};
use crate::rng::{domain, RngKey};
use crate::simulators::Simulator;

/// Prior simulations used to standardise summaries.
pub const PILOT_SIZE: usize = 500;

/// Observed summaries and the per-dimension location and scale of the distance.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedData {
    pub summary: Vec<f64>,
    pub theta_true: Option<Vec<f64>>,
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ObservedData {
    pub fn new(summary: Vec<f64>, theta_true: Option<Vec<f64>>, location: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        let p = summary.len();
        for (name, v) in [("location", &location), ("scale", &scale)] {
            if v.len() != p {
                return Err(Error::config(format!("{name} has {} entries, summary has {p}", v.len())));
            }
        }
        if summary.iter().chain(&location).any(|x| !x.is_finite()) {
            return Err(Error::domain("observed summary and location must be finite"));
        }
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::domain(format!("scales must be finite and positive, got {scale:?}")));
        }
        Ok(ObservedData {
            summary,
            theta_true,
            location,
            scale,
        })
    }

    /// Standardises `summary` by the mean and standard deviation of `n_pilot`
    /// prior simulations. A dimension with zero spread gets scale 1.
    pub fn with_pilot(
        sim: &Simulator,
        prior: &PriorSpec,
        summary: Vec<f64>,
        theta_true: Option<Vec<f64>>,
        n_pilot: usize,
        key: RngKey,
    ) -> Result<Self> {
        if summary.len() != sim.summary_dim() {
            return Err(Error::DimensionMismatch {
                expected: sim.summary_dim(),
                got: summary.len(),
            });
        }
        if n_pilot < 2 {
            return Err(Error::config("pilot needs at least two simulations"));
        }
        let key = key.child(domain::PILOT);
        let pilot: Vec<Vec<f64>> = (0..n_pilot as u64)
            .into_par_iter()
            .map(|i| {
                let theta = prior.sample(&mut key.child(domain::PRIOR).stream(i));
                sim.simulate(&theta, key.child(domain::SIMULATION).child(i)).map(|o| o.summary)
            })
            .collect::<Result<_>>()?;
        let dim = summary.len();
        let mut location = Vec::with_capacity(dim);
        let mut scale = Vec::with_capacity(dim);
        for d in 0..dim {
            let col: Vec<f64> = pilot.iter().map(|x| x[d]).filter(|x| x.is_finite()).collect();
            let sd = sample_variance(&col).sqrt();
            location.push(if col.is_empty() { 0.0 } else { mean(&col) });
            scale.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        ObservedData::new(summary, theta_true, location, scale)
    }

    /// Simulates the observation at `theta_true` and standardises it with a pilot run.
    pub fn synthetic(sim: &Simulator, prior: &PriorSpec, theta_true: Vec<f64>, n_pilot: usize, key: RngKey) -> Result<Self> {
        let x = sim.simulate(&theta_true, key.child(domain::OBSERVED))?.summary;
        ObservedData::with_pilot(sim, prior, x, Some(theta_true), n_pilot, key)
    }

    pub fn dim(&self) -> usize {
        self.summary.len()
    }

    /// Euclidean distance between standardised summaries. Non-finite
    /// simulated summaries give an infinite distance.
    pub fn distance(&self, x: &[f64]) -> f64 {
        if x.len() != self.summary.len() || x.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        self.summary
            .iter()
            .zip(x)
            .zip(&self.scale)
            .map(|((o, s), sc)| ((o - s) / sc).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Where ABC draws its parameters from.
#[derive(Clone, Debug, PartialEq)]
pub enum SamplingDist {
    Prior(PriorSpec),
    CostAware(CostAwareProposal),
    /// Strata with their relative share of the simulation budget.
    Mis { strata: Vec<CostAwareProposal>, shares: Vec<usize> },
}

impl SamplingDist {
    /// One stratum per plan component; the budget is split in proportion to
    /// the components' sizes.
    pub fn mis(plan: &MisPlan, prior: &PriorSpec, cost: &CostModel) -> Result<Self> {
        plan.validate()?;
        let strata = plan
            .components
            .iter()
            .map(|c| CostAwareProposal::new(prior.clone(), cost.clone(), c.penalty.clone()))
            .collect::<Result<_>>()?;
        Ok(SamplingDist::Mis {
            strata,
            shares: plan.components.iter().map(|c| c.n).collect(),
        })
    }
}

/// Weighted particle approximation `Σ w_i δ_{θ_i}` of the ABC posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPosterior {
    pub particles: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Simulated summaries of the accepted particles.
    pub summaries: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
    pub epsilon: f64,
    /// Accepted particles per simulated parameter.
    pub acceptance_rate: f64,
    /// Sum of the simulator's virtual cost over every simulated parameter.
    pub total_virtual_cost: u64,
    pub n_simulated: usize,
    /// Rejection-sampler bookkeeping for cost-aware proposals.
    pub proposal_stats: AcceptanceStats,
}

impl WeightedPosterior {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles.first().map(|p| p.len()).unwrap_or(0)
    }
}

struct Stratum {
    particles: Vec<Vec<f64>>,
    g_values: Vec<f64>,
    summaries: Vec<Vec<f64>>,
    distances: Vec<f64>,
    all_distances: Vec<f64>,
    virtual_cost: u64,
    stats: AcceptanceStats,
}

struct Run {
    theta: Vec<f64>,
    g: f64,
    summary: Vec<f64>,
    distance: f64,
    virtual_cost: u64,
    attempts: u64,
    clamped: u64,
}

fn run_stratum(
    sim: &Simulator,
    proposal: Option<&CostAwareProposal>,
    prior: &PriorSpec,
    obs: &ObservedData,
    epsilon: f64,
    budget: usize,
    key: RngKey,
) -> Result<Stratum> {
    let draw_key = key.child(domain::REJECTION);
    let sim_key = key.child(domain::SIMULATION);
    let runs: Vec<Run> = (0..budget as u64)
        .into_par_iter()
        .map(|i| {
            let (theta, g, attempts, clamped) = match proposal {
                Some(p) => {
                    let d = p.draw(draw_key, i);
                    match d.theta {
                        Some((theta, g)) => (theta, g, d.attempts, d.clamped),
                        None => {
                            return Err(Error::BudgetExceeded {
                                attempts: d.attempts,
                                rate: 0.0,
                            })
                        }
                    }
                }
                None => (prior.sample(&mut draw_key.stream(i)), 1.0, 1, 0),
            };
            let out = sim.simulate(&theta, sim_key.child(i))?;
            Ok(Run {
                distance: obs.distance(&out.summary),
                theta,
                g,
                summary: out.summary,
                virtual_cost: out.virtual_cost,
                attempts,
                clamped,
            })
        })
        .collect::<Result<_>>()?;

    let stats = AcceptanceStats {
        proposed: runs.iter().map(|r| r.attempts).sum(),
        accepted: runs.len() as u64,
        clamped: runs.iter().map(|r| r.clamped).sum(),
    };
    if stats.proposed > 0 {
        let fraction = stats.clamped as f64 / stats.proposed as f64;
        if fraction > CLAMP_FRACTION_LIMIT {
            return Err(Error::BoundsInvalid {
                clamped: stats.clamped,
                proposed: stats.proposed,
                fraction,
            });
        }
    }
    let mut s = Stratum {
        particles: Vec::new(),
        g_values: Vec::new(),
        summaries: Vec::new(),
        distances: Vec::new(),
        all_distances: Vec::with_capacity(runs.len()),
        virtual_cost: runs.iter().map(|r| r.virtual_cost).sum(),
        stats,
    };
    for r in runs {
        s.all_distances.push(r.distance);
        if r.distance <= epsilon {
            s.particles.push(r.theta);
            s.g_values.push(r.g);
            s.summaries.push(r.summary);
            s.distances.push(r.distance);
        }
    }
    Ok(s)
}

/// Left-continuous empirical quantile of unweighted values.
fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

fn split_budget(budget: usize, shares: &[usize]) -> Vec<usize> {
    let total: usize = shares.iter().sum();
    let mut parts: Vec<usize> = shares
        .iter()
        .map(|s| ((budget as u128 * *s as u128) / total.max(1) as u128) as usize)
        .collect();
    let mut left = budget - parts.iter().sum::<usize>();
    for p in parts.iter_mut() {
        if left == 0 {
            break;
        }
        *p += 1;
        left -= 1;
    }
    parts
}

/// Rejection ABC with a budget of `budget` simulated parameters.
///
/// Each parameter is drawn from `dist`, simulated once, and accepted when its
/// standardised distance to the observation is at most `epsilon`. Accepted
/// particles from a cost-aware proposal carry weights `∝ g(c(θ))`, normalised
/// over the accepted set. Mixture strata are weighted within each stratum and
/// combined with coefficient `1/J'`, where `J'` counts the strata that
/// accepted at least one particle. Stratum `j` uses sub-key `j`.
pub fn abc_rejection(
    sim: &Simulator,
    dist: &SamplingDist,
    obs: &ObservedData,
    epsilon: f64,
    budget: usize,
    key: RngKey,
) -> Result<WeightedPosterior> {
    if !(epsilon > 0.0) {
        return Err(Error::config(format!("epsilon must be positive, got {epsilon}")));
    }
    if budget == 0 {
        return Err(Error::config("ABC budget must be at least 1"));
    }
    if obs.dim() != sim.summary_dim() {
        return Err(Error::DimensionMismatch {
            expected: sim.summary_dim(),
            got: obs.dim(),
        });
    }
    let strata: Vec<Stratum> = match dist {
        SamplingDist::Prior(prior) => vec![run_stratum(sim, None, prior, obs, epsilon, budget, key.child(0))?],
        SamplingDist::CostAware(p) => vec![run_stratum(sim, Some(p), &p.prior, obs, epsilon, budget, key.child(0))?],
        SamplingDist::Mis { strata, shares } => {
            if strata.is_empty() || strata.len() != shares.len() {
                return Err(Error::config("mixture needs one budget share per stratum"));
            }
            let parts = split_budget(budget, shares);
            strata
                .iter()
                .zip(parts)
                .enumerate()
                .filter(|(_, (_, b))| *b > 0)
                .map(|(j, (p, b))| run_stratum(sim, Some(p), &p.prior, obs, epsilon, b, key.child(j as u64)))
                .collect::<Result<_>>()?
        }
    };

    let total_virtual_cost = strata.iter().map(|s| s.virtual_cost).sum();
    let proposal_stats = strata
        .iter()
        .fold(AcceptanceStats::default(), |acc, s| acc.merge(&s.stats));
    let non_empty: Vec<&Stratum> = strata.iter().filter(|s| !s.particles.is_empty()).collect();
    if non_empty.is_empty() {
        let mut all: Vec<f64> = strata.iter().flat_map(|s| s.all_distances.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        let quantiles = [0.0, 0.01, 0.05, 0.5].map(|p| if p == 0.0 { all[0] } else { empirical_quantile(&all, p) });
        return Err(Error::EmptyPosterior { epsilon, quantiles });
    }
    if non_empty.len() < strata.len() {
        log::warn!(
            "{} of {} strata accepted no particles and were dropped",
            strata.len() - non_empty.len(),
            strata.len()
        );
    }

    let j = non_empty.len() as f64;
    let mut post = WeightedPosterior {
        particles: Vec::new(),
        weights: Vec::new(),
        summaries: Vec::new(),
        distances: Vec::new(),
        epsilon,
        acceptance_rate: 0.0,
        total_virtual_cost,
        n_simulated: budget,
        proposal_stats,
    };
    for s in non_empty {
        let w = normalise(&s.g_values)?;
        post.weights.extend(w.iter().map(|x| x / j));
        post.particles.extend(s.particles.iter().cloned());
        post.summaries.extend(s.summaries.iter().cloned());
        post.distances.extend(s.distances.iter().copied());
    }
    post.acceptance_rate = post.particles.len() as f64 / budget as f64;
    Ok(post)
}

/// Default probabilities reported by [`posterior_stats`].
pub const DEFAULT_QUANTILES: [f64; 7] = [0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975];

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorStats {
    pub mean: Vec<f64>,
    /// Row-major `dim × dim` weighted covariance `Σ w_i (θ_i − μ)(θ_i − μ)ᵀ`.
    pub covariance: Vec<Vec<f64>>,
    /// `(p, per-dimension quantile)` pairs.
    pub quantiles: Vec<(f64, Vec<f64>)>,
}

/// Smallest value `x` with weighted CDF `F(x) ≥ p`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let total = pairwise_sum(weights);
    let target = p * total;
    let slack = 1e-12 * total;
    let mut cum = 0.0;
    for &i in &order {
        cum += weights[i];
        if cum >= target - slack && weights[i] > 0.0 || cum >= total {
            return values[i];
        }
    }
    values[*order.last().expect("non-empty")]
}

pub fn posterior_stats(particles: &[Vec<f64>], weights: &[f64], probs: &[f64]) -> Result<PosteriorStats> {
    if particles.is_empty() {
        return Err(Error::domain("posterior has no particles"));
    }
    if particles.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: particles.len(),
            got: weights.len(),
        });
    }
    let dim = particles[0].len();
    let col = |d: usize| -> Vec<f64> { particles.iter().map(|p| p[d]).collect() };
    let mean: Vec<f64> = (0..dim)
        .map(|d| {
            let terms: Vec<f64> = particles.iter().zip(weights).map(|(p, w)| w * p[d]).collect();
            pairwise_sum(&terms)
        })
        .collect();
    let covariance = (0..dim)
        .map(|a| {
            (0..dim)
                .map(|b| {
                    let terms: Vec<f64> = particles
                        .iter()
                        .zip(weights)
                        .map(|(p, w)| w * (p[a] - mean[a]) * (p[b] - mean[b]))
                        .collect();
                    pairwise_sum(&terms)
                })
                .collect()
        })
        .collect();
    let columns: Vec<Vec<f64>> = (0..dim).map(col).collect();
    let quantiles = probs
        .iter()
        .map(|&p| (p, columns.iter().map(|c| weighted_quantile(c, weights, p)).collect()))
        .collect();
    Ok(PosteriorStats {
        mean,
        covariance,
        quantiles,
    })
}

/// Systematic resampling to `size` equally weighted particles.
pub fn resample(particles: &[Vec<f64>], weights: &[f64], size: usize, key: RngKey) -> Result<Vec<Vec<f64>>> {
    use rand::Rng;
    if size == 0 {
        return Err(Error::config("resample size must be at least 1"));
    }
    if particles.is_empty() || particles.len() != weights.len() {
        return Err(Error::domain("resample needs aligned, non-empty particles and weights"));
    }
    let total = pairwise_sum(weights);
    let start: f64 = key.child(domain::RESAMPLE).stream(0).random::<f64>() / size as f64;
    let mut out = Vec::with_capacity(size);
    let mut i = 0;
    let mut cum = weights[0] / total;
    for k in 0..size {
        let u = start + k as f64 / size as f64;
        while u > cum && i + 1 < particles.len() {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(particles[i].clone());
    }
    Ok(out)
}

/// Writes `theta_*,weight` rows.
pub fn write_posterior_csv<W: Write>(writer: W, particles: &[Vec<f64>], weights: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dim = particles.first().map(|p| p.len()).unwrap_or(0);
    let mut header: Vec<String> = (0..dim).map(|d| format!("theta_{d}")).collect();
    header.push("weight".into());
    w.write_record(&header)?;
    for (p, wt) in particles.iter().zip(weights) {
        let mut row: Vec<String> = p.iter().map(|x| fmt_num(*x)).collect();
        row.push(fmt_num(*wt));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a particle file. Columns named `theta_*` are the particle; a
/// `weight` column is optional and defaults to uniform weights.
pub fn read_particles_csv<R: Read>(reader: R) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let theta_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("theta_"))
        .map(|(i, _)| i)
        .collect();
    if theta_cols.is_empty() {
        return Err(Error::Parse(format!("no theta_* columns in header {headers:?}")));
    }
    let weight_col = headers.iter().position(|h| h == "weight");
    let mut particles = Vec::new();
    let mut weights = Vec::new();
    for row in rdr.records() {
        let vals = parse_row(&row?)?;
        particles.push(theta_cols.iter().map(|&c| vals[c]).collect());
        weights.push(weight_col.map(|c| vals[c]).unwrap_or(1.0));
    }
    if weight_col.is_none() && !weights.is_empty() {
        let n = weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = 1.0 / n);
    }
    Ok((particles, weights))
}

/// One `(θ_i, x_ij, w_i)` row of a weighted training set.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedRecord {
    pub theta: Vec<f64>,
    pub summary: Vec<f64>,
    pub weight: f64,
}

/// Simulates `reps` summaries at each parameter; parameter `i`, repetition
/// `r` uses sub-key `(i, r)`.
pub fn simulate_dataset(sim: &Simulator, thetas: &[Vec<f64>], reps: usize, key: RngKey) -> Result<Vec<Vec<Vec<f64>>>> {
    if reps == 0 {
        return Err(Error::config("need at least one simulation per parameter"));
    }
    let flat: Vec<Vec<f64>> = (0..thetas.len() * reps)
        .into_par_iter()
        .map(|idx| {
            let (i, r) = (idx / reps, idx % reps);
            sim.simulate(&thetas[i], key.child(i as u64).child(r as u64)).map(|o| o.summary)
        })
        .collect::<Result<_>>()?;
    Ok(flat.chunks(reps).map(|c| c.to_vec()).collect())
}

/// Writes one `theta_*,x_*,weight` row per `(i, j)` pair; the weight of
/// parameter `i` repeats on each of its rows.
pub fn export_weighted_dataset<W: Write>(
    writer: W,
    thetas: &[Vec<f64>],
    summaries: &[Vec<Vec<f64>>],
    weights: &[f64],
) -> Result<()> {
    if thetas.len() != summaries.len() || thetas.len() != weights.len() {
        return Err(Error::domain(format!(
            "unaligned export: {} parameters, {} summary groups, {} weights",
            thetas.len(),
            summaries.len(),
            weights.len()
        )));
    }
    let p = thetas.first().map(|t| t.len()).unwrap_or(0);
    let q = summaries.iter().flatten().next().map(|x| x.len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..p).map(|d| format!("theta_{d}")).collect();
    header.extend((0..q).map(|d| format!("x_{d}")));
    header.push("weight".into());
    w.write_record(&header)?;
    for ((theta, xs), wt) in thetas.iter().zip(summaries).zip(weights) {
        for x in xs {
            if x.len() != q || theta.len() != p {
                return Err(Error::domain("ragged parameters or summaries in export"));
            }
            let mut row: Vec<String> = theta.iter().map(|v| fmt_num(*v)).collect();
            row.extend(x.iter().map(|v| fmt_num(*v)));
            row.push(fmt_num(*wt));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_weighted_dataset<R: Read>(reader: R) -> Result<Vec<WeightedRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let p = headers.iter().take_while(|h| h.starts_with("theta_")).count();
    let q = headers.iter().skip(p).take_while(|h| h.starts_with("x_")).count();
    if headers.len() != p + q + 1 || headers.get(p + q) != Some("weight") {
        return Err(Error::Parse(format!("unexpected dataset header {headers:?}")));
    }
    rdr.records()
        .map(|row| {
            let vals = parse_row(&row?)?;
            Ok(WeightedRecord {
                theta: vals[..p].to_vec(),
                summary: vals[p..p + q].to_vec(),
                weight: vals[p + q],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::PenaltySpec;

    fn toy_setup(seed: u64) -> (Simulator, PriorSpec, ObservedData) {
        let sim = Simulator::GaussianToy { m: 100 };
        let prior = sim.default_prior();
        let obs = ObservedData::synthetic(&sim, &prior, vec![2.0], PILOT_SIZE, RngKey::new(seed)).unwrap();
        (sim, prior, obs)
    }

    #[test]
    fn stats_examples() {
        let s = posterior_stats(&[vec![3.5, -1.0]], &[1.0], &DEFAULT_QUANTILES).unwrap();
        assert_eq!(s.mean, vec![3.5, -1.0]);
        assert!(s.quantiles.iter().all(|(_, q)| q == &vec![3.5, -1.0]));
        let s = posterior_stats(&[vec![0.0], vec![1.0]], &[0.25, 0.75], &[0.25, 0.5]).unwrap();
        assert_eq!(s.mean, vec![0.75]);
        assert_eq!(s.quantiles[0].1, vec![0.0]);
        assert_eq!(s.quantiles[1].1, vec![1.0]);
        assert!((s.covariance[0][0] - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn resampling_preserves_mean() {
        let mut rng = RngKey::new(9).stream(0);
        use rand::Rng;
        let particles: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.random::<f64>() * 10.0]).collect();
        let weights = normalise(&particles.iter().map(|p| 1.0 + p[0]).collect::<Vec<_>>()).unwrap();
        let stats = posterior_stats(&particles, &weights, &[0.5]).unwrap();
        let draws = resample(&particles, &weights, 100_000, RngKey::new(1)).unwrap();
        let values: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let se = (stats.covariance[0][0] / 1e5).sqrt();
        assert!((mean(&values) - stats.mean[0]).abs() < 3.0 * se);
        let one = resample(&[vec![4.0]], &[1.0], 10, RngKey::new(1)).unwrap();
        assert!(one.iter().all(|p| p == &vec![4.0]));
    }

    #[test]
    fn budget_split_is_exact() {
        assert_eq!(split_budget(10, &[1, 1, 1]), vec![4, 3, 3]);
        assert_eq!(split_budget(7, &[2, 1, 1]), vec![4, 2, 1]);
        assert_eq!(split_budget(2, &[1, 1, 1, 1]).iter().sum::<usize>(), 2);
    }

    #[test]
    fn constant_penalty_gives_uniform_weights() {
        let (sim, prior, obs) = toy_setup(1);
        let p = CostAwareProposal::new(prior, CostModel::preset("gaussian-toy").unwrap(), PenaltySpec::constant()).unwrap();
        let post = abc_rejection(&sim, &SamplingDist::CostAware(p), &obs, 0.5, 2000, RngKey::new(2)).unwrap();
        let n = post.len() as f64;
        assert!(post.weights.iter().all(|w| (*w - 1.0 / n).abs() < 1e-15));
        assert_eq!(post.n_simulated, 2000);
    }

    #[test]
    fn infinite_tolerance_recovers_prior_mean() {
        let (sim, prior, obs) = toy_setup(3);
        let p = CostAwareProposal::new(prior, CostModel::preset("gaussian-toy").unwrap(), PenaltySpec::power(1.0)).unwrap();
        let post = abc_rejection(&sim, &SamplingDist::CostAware(p), &obs, f64::INFINITY, 20_000, RngKey::new(4)).unwrap();
        assert_eq!(post.len(), 20_000);
        let values: Vec<Vec<f64>> = post.particles.to_vec();
        let m = pairwise_sum(&values.iter().zip(&post.weights).map(|(v, w)| v[0] * w).collect::<Vec<_>>());
        let se = pairwise_sum(&values.iter().zip(&post.weights).map(|(v, w)| (w * (v[0] - m)).powi(2)).collect::<Vec<_>>()).sqrt();
        assert!(m.abs() < 4.0 * se, "mean {m}, se {se}");
    }

    #[test]
    fn empty_posterior_reports_quantiles() {
        let (sim, prior, obs) = toy_setup(5);
        let err = abc_rejection(&sim, &SamplingDist::Prior(prior), &obs, 1e-12, 200, RngKey::new(6)).unwrap_err();
        match err {
            Error::EmptyPosterior { epsilon, quantiles } => {
                assert_eq!(epsilon, 1e-12);
                assert!(quantiles.windows(2).all(|w| w[0] <= w[1]));
                assert!(quantiles[0] > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn virtual_cost_sums_over_simulations() {
        let sim = Simulator::Gamma { m: 20 };
        let prior = sim.default_prior();
        let obs = ObservedData::synthetic(&sim, &prior, vec![250.0], 50, RngKey::new(7)).unwrap();
        let key = RngKey::new(8);
        let post = abc_rejection(&sim, &SamplingDist::Prior(prior.clone()), &obs, 1e9, 30, key).unwrap();
        let stratum = key.child(0);
        let direct: u64 = (0..30u64)
            .map(|i| {
                let theta = prior.sample(&mut stratum.child(domain::REJECTION).stream(i));
                sim.simulate(&theta, stratum.child(domain::SIMULATION).child(i)).unwrap().virtual_cost
            })
            .sum();
        assert_eq!(post.total_virtual_cost, direct);
    }

    #[test]
    fn mixture_weights_sum_to_one() {
        let (sim, prior, obs) = toy_setup(9);
        let dist = SamplingDist::mis(&MisPlan::default_plan(1), &prior, &CostModel::preset("gaussian-toy").unwrap()).unwrap();
        let post = abc_rejection(&sim, &dist, &obs, 0.3, 4000, RngKey::new(10)).unwrap();
        assert!((pairwise_sum(&post.weights) - 1.0).abs() < 1e-12);
        assert_eq!(post.n_simulated, 4000);
    }

    #[test]
    fn dataset_round_trip() {
        let sim = Simulator::GaussianToy { m: 10 };
        let thetas = vec![vec![0.5], vec![-1.25]];
        let xs = simulate_dataset(&sim, &thetas, 3, RngKey::new(11)).unwrap();
        let weights = vec![0.25, 0.75];
        let mut buf = Vec::new();
        export_weighted_dataset(&mut buf, &thetas, &xs, &weights).unwrap();
        let back = read_weighted_dataset(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 6);
        for (k, rec) in back.iter().enumerate() {
            let (i, j) = (k / 3, k % 3);
            assert_eq!(rec.theta, thetas[i]);
            assert_eq!(rec.summary, xs[i][j]);
            assert_eq!(rec.weight.to_bits(), weights[i].to_bits());
        }
        assert!(export_weighted_dataset(Vec::new(), &thetas, &xs, &[1.0]).is_err());
    }

    #[test]
    fn posterior_csv_round_trip() {
        let particles = vec![vec![0.1, 2.0], vec![1.0 / 3.0, -4.5]];
        let weights = vec![0.4, 0.6];
        let mut buf = Vec::new();
        write_posterior_csv(&mut buf, &particles, &weights).unwrap();
        let (p, w) = read_particles_csv(buf.as_slice()).unwrap();
        assert_eq!(p, particles);
        assert_eq!(w, weights);
    }
}
