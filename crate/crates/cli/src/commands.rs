//! Pipeline commands. Each writes its outputs under the configured
//! directory and returns the paths it wrote.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use rayon::prelude::*;

use casbi::costmodel::{fit_with_holdout, measure_cost, Clock, CostKind};
use casbi::diagnostics::{diagnose, estimate_cg, select_penalties, write_table_csv, ess_from_g, Selection};
use casbi::inference::{
    abc_rejection, export_weighted_dataset, posterior_stats, read_particles_csv, resample, simulate_dataset,
    write_posterior_csv, ObservedData, SamplingDist, WeightedPosterior, DEFAULT_QUANTILES,
};
use casbi::metrics::{ks_marginals, median_heuristic, mmd2_unbiased, mmd2_weighted, KernelConfig};
use casbi::numeric::fmt_num;
use casbi::proposal::{mis_sample, rejection_sample};
use casbi::rng::domain;
use casbi::{CostAwareProposal, CostModel, Error, MisPlan, PenaltySpec, PriorSpec, RngKey, Simulator, WeightedSamples};

use crate::config::{CostSource, ExperimentConfig, PenaltyChoice};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Sub-key tags for each command under the experiment seed.
mod tag {
    pub const DIAGNOSE: u64 = 1;
    pub const SAMPLE: u64 = 2;
    pub const ABC: u64 = 3;
    pub const EXPORT: u64 = 4;
    pub const SELECT: u64 = 5;
}

/// `# casbi v<version> config=<sha256> seed=<seed>`
pub fn metadata_line(config_hash: &str, seed: u64) -> String {
    format!("# casbi v{VERSION} config={config_hash} seed={seed}")
}

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub hash: String,
    pub out: PathBuf,
    pub root: RngKey,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let out = cfg.out_dir();
        std::fs::create_dir_all(&out).with_context(|| format!("creating output directory {}", out.display()))?;
        Ok(Context {
            cfg,
            hash: cfg.hash(),
            out,
            root: RngKey::new(cfg.seed),
        })
    }

    /// Opens `name` in the output directory and writes the metadata line.
    pub fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.out.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{}", metadata_line(&self.hash, self.cfg.seed))?;
        Ok((path, w))
    }

    fn key_value_file(&self, name: &str, rows: &[(String, String)]) -> Result<PathBuf> {
        let (path, w) = self.create(name)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["key", "value"])?;
        for (k, v) in rows {
            csv.write_record([k, v])?;
        }
        csv.flush()?;
        Ok(path)
    }
}

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

/// Cost model named by the config; fitted models come with the pilot measurement.
pub fn resolve_cost(cfg: &ExperimentConfig, root: RngKey) -> Result<(CostModel, Option<PilotFit>)> {
    match &cfg.cost {
        CostSource::Preset { name } => Ok((CostModel::preset(name)?, None)),
        CostSource::File { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cost.path: cannot read {}: {e}", path.display())))?;
            let model = CostModel::from_toml(&text)?;
            if model.dim() != cfg.simulator.param_dim() {
                return Err(Error::Config(format!(
                    "cost.path: model has dimension {}, simulator needs {}",
                    model.dim(),
                    cfg.simulator.param_dim()
                ))
                .into());
            }
            Ok((model, None))
        }
        CostSource::Fit {
            n_pilot,
            reps,
            clock,
            fit,
        } => {
            let prior = cfg.prior();
            let key = root.child(domain::COST);
            let thetas: Vec<Vec<f64>> = (0..*n_pilot as u64)
                .map(|i| prior.sample(&mut key.child(domain::PRIOR).stream(i)))
                .collect();
            let measurement = measure_cost(&cfg.simulator, &thetas, *reps, key.child(domain::SIMULATION))?;
            let obs = measurement.observations(*clock);
            if obs.len() < 2 {
                return Err(Error::InvalidCost(format!(
                    "only {} of {} pilot runs succeeded",
                    obs.len(),
                    n_pilot
                ))
                .into());
            }
            let model = fit_with_holdout(&obs, fit, cfg.seed)?;
            let failures = measurement.failures.len();
            Ok((
                model,
                Some(PilotFit {
                    observations: obs.into_iter().map(|o| (o.theta, o.y)).collect(),
                    clock: *clock,
                    failures,
                }),
            ))
        }
    }
}

pub struct PilotFit {
    pub observations: Vec<(Vec<f64>, f64)>,
    pub clock: Clock,
    pub failures: usize,
}

/// A single proposal, or a mixture whose first component is the prior.
#[derive(Clone, Debug)]
pub enum Resolved {
    Single(PenaltySpec),
    Mixture(Vec<f64>),
}

pub fn resolve_penalty(
    cfg: &ExperimentConfig,
    prior: &PriorSpec,
    cost: &CostModel,
    root: RngKey,
) -> Result<(Resolved, Option<Selection>)> {
    Ok(match &cfg.penalty {
        PenaltyChoice::Constant => (Resolved::Single(PenaltySpec::constant()), None),
        PenaltyChoice::Power { k } => (Resolved::Single(PenaltySpec::power(*k)), None),
        PenaltyChoice::Mis { powers } => (Resolved::Mixture(powers.clone()), None),
        PenaltyChoice::Auto {
            candidates,
            threshold,
            n_mc,
        } => {
            let sel = select_penalties(candidates, prior, cost, *n_mc, *threshold, root.child(tag::SELECT))?;
            (Resolved::Mixture(sel.plan_powers.clone()), Some(sel))
        }
    })
}

fn cost_kind_name(model: &CostModel) -> &'static str {
    match model.kind {
        CostKind::AnalyticLinear { .. } => "analytic_linear",
        CostKind::AnalyticQuadratic { .. } => "analytic_quadratic",
        CostKind::FittedLinear { .. } => "fitted_linear",
        CostKind::FittedPolynomial { .. } => "fitted_polynomial",
        CostKind::FittedGp(_) => "fitted_gp",
    }
}

fn write_cost_model(ctx: &Context, model: &CostModel) -> Result<PathBuf> {
    let (path, mut w) = ctx.create("cost_model.toml")?;
    w.write_all(model.to_toml()?.as_bytes())?;
    w.flush()?;
    Ok(path)
}

/// Measures (or loads) the cost model and writes it with a fit report.
pub fn cmd_cost_fit(ctx: &Context) -> Result<Vec<PathBuf>> {
    let (model, pilot) = resolve_cost(ctx.cfg, ctx.root)?;
    let mut paths = vec![write_cost_model(ctx, &model)?];
    let meta = model.fit.clone().unwrap_or_default();
    let mut rows = vec![
        kv("model", cost_kind_name(&model)),
        kv("n_observations", meta.n_observations),
        kv("train_rmse", fmt_num(meta.train_rmse)),
        kv("holdout_rmse", meta.holdout_rmse.map(fmt_num).unwrap_or_else(|| "NA".into())),
    ];
    if let Some(p) = &pilot {
        rows.push(kv("pilot_failures", p.failures));
        rows.push(kv("clock", format!("{:?}", p.clock).to_lowercase()));
        let column = match p.clock {
            Clock::Virtual => "y_virtual",
            Clock::Wall => "y_seconds",
        };
        let (path, w) = ctx.create("cost_observations.csv")?;
        let mut csv = csv::Writer::from_writer(w);
        let dim = ctx.cfg.simulator.param_dim();
        let mut header: Vec<String> = (0..dim).map(|d| format!("theta_{d}")).collect();
        header.push(column.into());
        csv.write_record(&header)?;
        for (theta, y) in &p.observations {
            let mut row: Vec<String> = theta.iter().map(|t| fmt_num(*t)).collect();
            row.push(fmt_num(*y));
            csv.write_record(&row)?;
        }
        csv.flush()?;
        paths.push(path);
    }
    for (i, w) in meta.warnings.iter().enumerate() {
        rows.push(kv(&format!("warning_{i}"), w));
    }
    paths.push(ctx.key_value_file("fit_report.csv", &rows)?);
    Ok(paths)
}

/// ESS, CG and CG×ESS for every candidate power; one column per candidate.
pub fn cmd_diagnose(ctx: &Context) -> Result<Vec<PathBuf>> {
    let prior = ctx.cfg.prior();
    let (cost, _) = resolve_cost(ctx.cfg, ctx.root)?;
    let key = ctx.root.child(tag::DIAGNOSE);
    let reports = ctx
        .cfg
        .diagnose
        .candidates
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let p = CostAwareProposal::new(prior.clone(), cost.clone(), PenaltySpec::power(k))?;
            diagnose(&p, ctx.cfg.diagnose.n_mc, key.child(i as u64))
        })
        .collect::<casbi::Result<Vec<_>>>()?;
    let (path, mut w) = ctx.create("diagnostics.csv")?;
    write_table_csv(&reports, &mut w)?;
    w.flush()?;
    Ok(vec![path])
}

/// Sum of virtual costs of one simulation per parameter; parameter `i` uses sub-key `i`.
fn simulate_cost(sim: &Simulator, thetas: &[Vec<f64>], key: RngKey) -> Result<u64> {
    let costs: Vec<u64> = thetas
        .par_iter()
        .enumerate()
        .map(|(i, t)| sim.simulate(t, key.child(i as u64)).map(|o| o.virtual_cost))
        .collect::<casbi::Result<_>>()?;
    Ok(costs.iter().sum())
}

fn proposals_for(resolved: &Resolved, prior: &PriorSpec, cost: &CostModel) -> Result<Vec<CostAwareProposal>> {
    let penalties = match resolved {
        Resolved::Single(p) => vec![p.clone()],
        Resolved::Mixture(powers) => MisPlan::with_powers(powers, 1).components.into_iter().map(|c| c.penalty).collect(),
    };
    penalties
        .into_iter()
        .map(|p| CostAwareProposal::new(prior.clone(), cost.clone(), p).map_err(Into::into))
        .collect()
}

/// Draws from the proposal (or every mixture component), writes weighted
/// samples, and compares predicted with realised virtual cost.
pub fn cmd_sample(ctx: &Context) -> Result<Vec<PathBuf>> {
    let cfg = ctx.cfg;
    let prior = cfg.prior();
    let (cost, _) = resolve_cost(cfg, ctx.root)?;
    let (resolved, _) = resolve_penalty(cfg, &prior, &cost, ctx.root)?;
    let key = ctx.root.child(tag::SAMPLE);
    let n = cfg.sample.n;

    let strata: Vec<WeightedSamples> = match &resolved {
        Resolved::Single(p) => {
            let proposal = CostAwareProposal::new(prior.clone(), cost.clone(), p.clone())?;
            vec![rejection_sample(&proposal, n, key.child(0))?]
        }
        Resolved::Mixture(powers) => mis_sample(&MisPlan::with_powers(powers, n), &prior, &cost, key.child(0))?,
    };
    let proposals = proposals_for(&resolved, &prior, &cost)?;
    let gains = proposals
        .iter()
        .enumerate()
        .map(|(j, p)| estimate_cg(p, cfg.sample.n_mc, key.child(1).child(j as u64)))
        .collect::<casbi::Result<Vec<_>>>()?;
    let prior_mean_cost = gains[0].mean_cost_prior;
    let proposal_mean_cost = gains.iter().map(|g| g.mean_cost_proposal).sum::<f64>() / gains.len() as f64;
    let predicted = if strata.len() == 1 { gains[0].cg } else { prior_mean_cost / proposal_mean_cost };
    let predicted_se = if strata.len() == 1 { gains[0].std_error } else { f64::NAN };

    let mut paths = Vec::new();
    for (j, s) in strata.iter().enumerate() {
        let name = if strata.len() == 1 { "samples.csv".to_string() } else { format!("samples_c{j}.csv") };
        let (path, mut w) = ctx.create(&name)?;
        s.write_csv(&mut w)?;
        w.flush()?;
        paths.push(path);
    }

    let total: usize = strata.iter().map(|s| s.len()).sum();
    let mut rows = vec![
        kv("n_draws", total),
        kv("components", strata.len()),
        kv("predicted_cg", fmt_num(predicted)),
        kv("predicted_cg_std_error", fmt_num(predicted_se)),
        kv("predicted_time_saved", fmt_num(1.0 - 1.0 / predicted)),
    ];
    for (j, s) in strata.iter().enumerate() {
        rows.push(kv(&format!("ess_c{j}"), fmt_num(ess_from_g(&s.g_values))));
        rows.push(kv(&format!("acceptance_rate_c{j}"), fmt_num(s.stats.rate())));
    }
    if cfg.sample.simulate {
        let thetas: Vec<Vec<f64>> = strata.iter().flat_map(|s| s.thetas.iter().cloned()).collect();
        let prior_key = key.child(2).child(domain::PRIOR);
        let prior_thetas: Vec<Vec<f64>> = (0..total as u64).map(|i| prior.sample(&mut prior_key.stream(i))).collect();
        let aware = simulate_cost(&cfg.simulator, &thetas, key.child(3))?;
        let plain = simulate_cost(&cfg.simulator, &prior_thetas, key.child(4))?;
        let ratio = plain as f64 / aware as f64;
        rows.push(kv("realised_virtual_cost_prior", plain));
        rows.push(kv("realised_virtual_cost_proposal", aware));
        rows.push(kv("realised_cost_ratio", fmt_num(ratio)));
        rows.push(kv("realised_time_saved", fmt_num(1.0 - 1.0 / ratio)));
    }
    paths.push(ctx.key_value_file("cost_report.csv", &rows)?);
    Ok(paths)
}

pub fn observed_data(cfg: &ExperimentConfig, key: RngKey) -> Result<ObservedData> {
    let prior = cfg.prior();
    Ok(match &cfg.observed {
        Some(x) => ObservedData::with_pilot(&cfg.simulator, &prior, x.clone(), cfg.theta_true.clone(), cfg.abc.n_pilot, key)?,
        None => ObservedData::synthetic(&cfg.simulator, &prior, cfg.theta_true(), cfg.abc.n_pilot, key)?,
    })
}

fn sampling_dist(resolved: &Resolved, prior: &PriorSpec, cost: &CostModel) -> Result<SamplingDist> {
    Ok(match resolved {
        Resolved::Single(p) if p.is_constant() => SamplingDist::Prior(prior.clone()),
        Resolved::Single(p) => SamplingDist::CostAware(CostAwareProposal::new(prior.clone(), cost.clone(), p.clone())?),
        Resolved::Mixture(powers) => SamplingDist::mis(&MisPlan::with_powers(powers, 1), prior, cost)?,
    })
}

/// Runs the configured ABC and returns the posterior without writing files.
pub fn run_abc(ctx: &Context) -> Result<(ObservedData, WeightedPosterior)> {
    let cfg = ctx.cfg;
    let prior = cfg.prior();
    let (cost, _) = resolve_cost(cfg, ctx.root)?;
    let (resolved, _) = resolve_penalty(cfg, &prior, &cost, ctx.root)?;
    let key = ctx.root.child(tag::ABC);
    let obs = observed_data(cfg, key.child(0))?;
    let dist = sampling_dist(&resolved, &prior, &cost)?;
    let post = abc_rejection(&cfg.simulator, &dist, &obs, cfg.abc.epsilon, cfg.abc.budget, key.child(1))?;
    Ok((obs, post))
}

/// Cost-aware rejection ABC: posterior particles, summary statistics, a run
/// report, and metrics against a reference when one is configured.
pub fn cmd_abc(ctx: &Context) -> Result<Vec<PathBuf>> {
    let (obs, post) = run_abc(ctx)?;
    let mut paths = Vec::new();

    let (path, mut w) = ctx.create("posterior.csv")?;
    write_posterior_csv(&mut w, &post.particles, &post.weights)?;
    w.flush()?;
    paths.push(path);

    let stats = posterior_stats(&post.particles, &post.weights, &DEFAULT_QUANTILES)?;
    let (path, w) = ctx.create("posterior_stats.csv")?;
    let mut csv = csv::Writer::from_writer(w);
    let dim = post.dim();
    let mut header = vec!["statistic".to_string()];
    header.extend((0..dim).map(|d| format!("theta_{d}")));
    csv.write_record(&header)?;
    let mut mean_row = vec!["mean".to_string()];
    mean_row.extend(stats.mean.iter().map(|v| fmt_num(*v)));
    csv.write_record(&mean_row)?;
    let mut sd_row = vec!["sd".to_string()];
    sd_row.extend((0..dim).map(|d| fmt_num(stats.covariance[d][d].sqrt())));
    csv.write_record(&sd_row)?;
    for (p, q) in &stats.quantiles {
        let mut row = vec![format!("q{p}")];
        row.extend(q.iter().map(|v| fmt_num(*v)));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    paths.push(path);

    let mut rows = vec![
        kv("epsilon", fmt_num(post.epsilon)),
        kv("budget", post.n_simulated),
        kv("accepted", post.len()),
        kv("acceptance_rate", fmt_num(post.acceptance_rate)),
        kv("total_virtual_cost", post.total_virtual_cost),
        kv("ess", fmt_num(ess_from_g(&post.weights))),
    ];
    for (d, x) in obs.summary.iter().enumerate() {
        rows.push(kv(&format!("observed_x_{d}"), fmt_num(*x)));
    }
    paths.push(ctx.key_value_file("abc_report.csv", &rows)?);

    if let Some(reference) = &ctx.cfg.metrics.reference {
        let (ref_particles, ref_weights) = load_particles(reference)?;
        let rows = score(
            &post.particles,
            &post.weights,
            &ref_particles,
            &ref_weights,
            ctx.cfg.metrics.lengthscale,
            ctx.cfg.metrics.unbiased,
            ctx.cfg.metrics.resample,
            ctx.root.child(tag::ABC).child(2),
        )?;
        paths.push(ctx.key_value_file("metrics.csv", &rows)?);
    }
    Ok(paths)
}

pub fn load_particles(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let file = File::open(path).with_context(|| format!("opening particle file {}", path.display()))?;
    Ok(read_particles_csv(std::io::BufReader::new(file))?)
}

/// MMD² and marginal KS between a (weighted) particle set and a reference.
/// KS always uses an equally weighted resample of `x`; MMD uses the weights
/// directly unless `resample_size` is given. The default lengthscale is the
/// median heuristic on the reference.
#[allow(clippy::too_many_arguments)]
pub fn score(
    x: &[Vec<f64>],
    wx: &[f64],
    y: &[Vec<f64>],
    wy: &[f64],
    lengthscale: Option<f64>,
    unbiased: bool,
    resample_size: Option<usize>,
    key: RngKey,
) -> Result<Vec<(String, String)>> {
    let ell = match lengthscale {
        Some(l) => l,
        None => median_heuristic(y)?,
    };
    let kernel = KernelConfig::new(ell)?;
    let size = resample_size.unwrap_or(x.len());
    let xr = resample(x, wx, size, key.child(0))?;
    let yr = resample(y, wy, y.len(), key.child(1))?;
    let mmd = match (unbiased, resample_size) {
        (true, _) => mmd2_unbiased(&xr, &yr, &kernel)?,
        (false, Some(_)) => mmd2_weighted(&xr, &vec![1.0; xr.len()], y, wy, &kernel)?,
        (false, None) => mmd2_weighted(x, wx, y, wy, &kernel)?,
    };
    let mut rows = vec![kv("lengthscale", fmt_num(ell)), kv("mmd2", fmt_num(mmd))];
    for (d, ks) in ks_marginals(&xr, &yr)?.iter().enumerate() {
        rows.push(kv(&format!("ks_{d}"), fmt_num(*ks)));
    }
    Ok(rows)
}

/// Weighted `(θ_i, x_ij, w_i)` training set for external neural SBI.
pub fn cmd_export(ctx: &Context) -> Result<Vec<PathBuf>> {
    let cfg = ctx.cfg;
    let prior = cfg.prior();
    let (cost, _) = resolve_cost(cfg, ctx.root)?;
    let (resolved, _) = resolve_penalty(cfg, &prior, &cost, ctx.root)?;
    let key = ctx.root.child(tag::EXPORT);
    let strata: Vec<WeightedSamples> = match &resolved {
        Resolved::Single(p) => {
            let proposal = CostAwareProposal::new(prior.clone(), cost.clone(), p.clone())?;
            vec![rejection_sample(&proposal, cfg.export.n, key.child(0))?]
        }
        Resolved::Mixture(powers) => mis_sample(&MisPlan::with_powers(powers, cfg.export.n), &prior, &cost, key.child(0))?,
    };
    let j = strata.len() as f64;
    let thetas: Vec<Vec<f64>> = strata.iter().flat_map(|s| s.thetas.iter().cloned()).collect();
    let weights: Vec<f64> = strata.iter().flat_map(|s| s.weights.iter().map(move |w| w / j)).collect();
    let summaries = simulate_dataset(&cfg.simulator, &thetas, cfg.export.reps, key.child(1))?;
    let (path, mut w) = ctx.create("dataset.csv")?;
    export_weighted_dataset(&mut w, &thetas, &summaries, &weights)?;
    w.flush()?;
    Ok(vec![path])
}
