//! Efficiency and cost diagnostics: effective sample size, computational
//! gain, and penalty selection by their product.

use std::io::Write;

use rayon::prelude::*;

use crate::costmodel::CostModel;
use crate::error::{Error, Result};
use crate::numeric::{fmt_num, mean, pairwise_sum, sample_variance};
use crate::penalty::{PenaltyBounds, PenaltySpec};
use crate::prior::PriorSpec;
use crate::proposal::{rejection_sample, CostAwareProposal, MisPlan, WeightedSamples};
use crate::rng::{domain, RngKey};

/// Number of proposal draws used for the "asymptotic" ESS in penalty selection.
pub const SELECTION_N_MC: usize = 100_000;
pub const DEFAULT_THRESHOLD: f64 = 0.95;

/// `(Σ g_i)² / (n Σ g_i²)` for unnormalised weights `g_i`.
pub fn ess_from_g(g: &[f64]) -> f64 {
    let s = pairwise_sum(g);
    let sq: Vec<f64> = g.iter().map(|x| x * x).collect();
    s * s / (g.len() as f64 * pairwise_sum(&sq))
}

/// Normalised effective sample size of cost-aware samples.
pub fn ess(samples: &WeightedSamples) -> f64 {
    ess_from_g(&samples.g_values)
}

/// Delta-method standard error of [`ess_from_g`] as a function of the
/// sample means of `g` and `g²`.
fn ess_std_error(g: &[f64]) -> f64 {
    let n = g.len() as f64;
    if g.len() < 2 {
        return 0.0;
    }
    let sq: Vec<f64> = g.iter().map(|x| x * x).collect();
    let a = mean(g);
    let b = mean(&sq);
    let var_a = sample_variance(g);
    let var_b = sample_variance(&sq);
    let cross: Vec<f64> = g.iter().zip(&sq).map(|(x, y)| (x - a) * (y - b)).collect();
    let cov = pairwise_sum(&cross) / (n - 1.0);
    let (da, db) = (2.0 * a / b, -a * a / (b * b));
    ((da * da * var_a + db * db * var_b + 2.0 * da * db * cov) / n).max(0.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgEstimate {
    pub cg: f64,
    pub std_error: f64,
    pub mean_cost_prior: f64,
    pub mean_cost_proposal: f64,
}

/// `E_π[c] / E_π̃[c]` from `n_mc` prior draws and `n_mc` proposal draws of the
/// cost model. The standard error treats the two means as independent.
pub fn estimate_cg(proposal: &CostAwareProposal, n_mc: usize, key: RngKey) -> Result<CgEstimate> {
    if n_mc < 100 {
        return Err(Error::config(format!("estimate_cg needs n_mc ≥ 100, got {n_mc}")));
    }
    let prior_key = key.child(domain::PRIOR);
    let prior_costs: Vec<f64> = (0..n_mc as u64)
        .into_par_iter()
        .map(|i| proposal.cost.eval(&proposal.prior.sample(&mut prior_key.stream(i))))
        .collect();
    let tilted = rejection_sample(proposal, n_mc, key.child(domain::REJECTION))?;
    Ok(cg_from_costs(&prior_costs, &tilted.costs, proposal.penalty.is_constant()))
}

/// A constant penalty leaves the proposal equal to the prior, so the gain is exactly 1.
fn cg_from_costs(prior_costs: &[f64], proposal_costs: &[f64], constant: bool) -> CgEstimate {
    let a = mean(prior_costs);
    let b = mean(proposal_costs);
    if constant {
        return CgEstimate {
            cg: 1.0,
            std_error: 0.0,
            mean_cost_prior: a,
            mean_cost_proposal: a,
        };
    }
    let cg = a / b;
    let rel = sample_variance(prior_costs) / prior_costs.len() as f64 / (a * a)
        + sample_variance(proposal_costs) / proposal_costs.len() as f64 / (b * b);
    CgEstimate {
        cg,
        std_error: cg * rel.sqrt(),
        mean_cost_prior: a,
        mean_cost_proposal: b,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsReport {
    pub penalty: PenaltySpec,
    pub bounds: PenaltyBounds,
    pub n_mc: usize,
    pub ess: f64,
    pub ess_std_error: f64,
    pub cg: f64,
    pub cg_std_error: f64,
}

impl DiagnosticsReport {
    pub fn product(&self) -> f64 {
        self.cg * self.ess
    }

    /// ESS within `[(g_min/g_max)², (g_max/g_min)²]` (± `tol`) and CG within
    /// `[1, g_max/g_min]` widened by `se_mult` standard errors.
    pub fn check_bounds(&self, tol: f64, se_mult: f64) -> Result<()> {
        let r = self.bounds.ratio();
        if self.ess < 1.0 / (r * r) - tol || self.ess > r * r + tol {
            return Err(Error::domain(format!("ESS {} outside [{}, {}]", self.ess, 1.0 / (r * r), r * r)));
        }
        let slack = se_mult * self.cg_std_error;
        if self.cg < 1.0 - slack || self.cg > r + slack {
            return Err(Error::domain(format!("CG {} outside [1, {r}] ± {slack}", self.cg)));
        }
        Ok(())
    }
}

/// ESS of `n_mc` draws from `π̃_g` and CG estimated from the same number of draws.
pub fn diagnose(proposal: &CostAwareProposal, n_mc: usize, key: RngKey) -> Result<DiagnosticsReport> {
    let tilted = rejection_sample(proposal, n_mc, key.child(domain::REJECTION))?;
    let prior_key = key.child(domain::PRIOR);
    let prior_costs: Vec<f64> = (0..n_mc as u64)
        .into_par_iter()
        .map(|i| proposal.cost.eval(&proposal.prior.sample(&mut prior_key.stream(i))))
        .collect();
    let cg = cg_from_costs(&prior_costs, &tilted.costs, proposal.penalty.is_constant());
    Ok(DiagnosticsReport {
        penalty: proposal.penalty.clone(),
        bounds: proposal.bounds,
        n_mc,
        ess: ess(&tilted),
        ess_std_error: ess_std_error(&tilted.g_values),
        cg: cg.cg,
        cg_std_error: cg.std_error,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub reports: Vec<DiagnosticsReport>,
    /// Candidate powers whose CG×ESS reached the threshold.
    pub selected: Vec<f64>,
    /// Non-constant powers of the recommended mixture.
    pub plan_powers: Vec<f64>,
    pub warning: Option<String>,
}

impl Selection {
    pub fn plan(&self, n_per_component: usize) -> MisPlan {
        MisPlan::with_powers(&self.plan_powers, n_per_component)
    }
}

/// Scores `g(z) = z^k` for each candidate `k` and keeps those with
/// CG×ESS ≥ `threshold`. The recommended mixture is the constant penalty,
/// the selected powers, and the next one or two integer steps above the
/// largest selected power, capped at 3.
pub fn select_penalties(
    candidate_ks: &[f64],
    prior: &PriorSpec,
    cost: &CostModel,
    n_mc: usize,
    threshold: f64,
    key: RngKey,
) -> Result<Selection> {
    if candidate_ks.is_empty() {
        return Err(Error::config("select_penalties needs at least one candidate"));
    }
    let mut reports = Vec::with_capacity(candidate_ks.len());
    for (i, &k) in candidate_ks.iter().enumerate() {
        let proposal = CostAwareProposal::new(prior.clone(), cost.clone(), PenaltySpec::power(k))?;
        reports.push(diagnose(&proposal, n_mc, key.child(i as u64))?);
    }
    let selected: Vec<f64> = candidate_ks
        .iter()
        .zip(&reports)
        .filter(|(_, r)| r.product() >= threshold)
        .map(|(k, _)| *k)
        .collect();
    let mut plan_powers: Vec<f64> = selected.iter().copied().filter(|k| *k > 0.0).collect();
    let warning = if plan_powers.is_empty() {
        let msg = "no cost-aware candidate reached the CG×ESS threshold; recommending the constant penalty only".to_string();
        log::warn!("{msg}");
        Some(msg)
    } else {
        let top = plan_powers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for step in [1.0, 2.0] {
            let k = top + step;
            if k <= 3.0 && !plan_powers.contains(&k) {
                plan_powers.push(k);
            }
        }
        None
    };
    plan_powers.sort_by(f64::total_cmp);
    Ok(Selection {
        reports,
        selected,
        plan_powers,
        warning,
    })
}

type TableRow = (&'static str, fn(&DiagnosticsReport) -> f64);

/// Writes a table with rows `ESS`, `CG`, `CG×ESS` and one column per report.
pub fn write_table_csv<W: Write>(reports: &[DiagnosticsReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["metric".to_string()];
    header.extend(reports.iter().map(|r| r.penalty.label()));
    w.write_record(&header)?;
    let rows: [TableRow; 5] = [
        ("ESS", |r| r.ess),
        ("CG", |r| r.cg),
        ("CGxESS", |r| r.product()),
        ("g_min", |r| r.bounds.g_min),
        ("g_max", |r| r.bounds.g_max),
    ];
    for (name, f) in rows {
        let mut row = vec![name.to_string()];
        row.extend(reports.iter().map(|r| fmt_num(f(r))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
