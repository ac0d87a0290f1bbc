//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! and fails if its criterion is not met.

use std::collections::BTreeMap;
use std::time::Instant;

use casbi::costmodel::{Clock, FitMethod};
use casbi::diagnostics::{diagnose, estimate_cg};
use casbi::inference::{abc_rejection, posterior_stats, ObservedData, SamplingDist, PILOT_SIZE};
use casbi::metrics::{ks_marginals, median_heuristic_with, mmd2, KernelConfig, MedianConvention};
use casbi::oracle::{closed_form_b, closed_form_cg, quad_b, quad_cg, tilted_cdf, ClosedFormCase, CostShape};
use casbi::proposal::rejection_sample;
use casbi::rng::domain as tags;
use casbi::simulators::{inverse_plan, radio_realisation, sir_bernoulli, sir_homogeneous, sir_temporal, RadioParams};
use casbi::{CostAwareProposal, CostModel, PenaltySpec, PriorSpec, RngKey, Simulator, WeightedSamples};
use casbi_cli::config::CostSource;
use casbi_cli::{run, Command, ExperimentConfig};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

fn report(id: u32, name: &str, ok: bool, detail: String, start: Instant) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("{verdict} criterion {id}: {name} ({detail}; {:.1} s)", start.elapsed().as_secs_f64());
    assert!(ok, "criterion {id} failed: {detail}");
}

/// Every weighted sample set drawn in this suite goes through here.
fn checked(samples: WeightedSamples) -> WeightedSamples {
    samples.check_weight_bounds(1e-12).expect("weight bounds");
    samples
}

fn linear_case(alpha: f64, beta: f64, k: f64, a: f64, b: f64) -> ClosedFormCase {
    ClosedFormCase::new(CostShape::Linear { alpha, beta }, k, a, b).unwrap()
}

fn proposal_for(case: &ClosedFormCase) -> CostAwareProposal {
    CostAwareProposal::new(case.prior(), case.cost_model(), case.penalty()).unwrap()
}

fn one_sample_ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn criterion_01_sampler_matches_tilted_cdf() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for k in [1.0, 2.0, 3.0] {
        let case = linear_case(2e-5, 0.0, k, 100.0, 1000.0);
        let s = checked(rejection_sample(&proposal_for(&case), 100_000, RngKey::new(100 + k as u64)).unwrap());
        let xs = s.thetas.iter().map(|t| t[0]).collect();
        let d = one_sample_ks(xs, |t| tilted_cdf(&case, t).unwrap().value);
        worst = worst.max(d);
    }
    report(1, "rejection sampler vs tilted CDF", worst < 0.01, format!("max KS {worst:.5} < 0.01"), start);
}

#[test]
fn criterion_02_weight_bounds_and_variance_bracket() {
    let start = Instant::now();
    let case = linear_case(2e-5, 0.0, 1.0, 100.0, 1000.0);
    let proposal = proposal_for(&case);
    let prior = case.prior();
    let root = RngKey::new(200);
    let reps: Vec<(f64, f64, f64)> = (0..200u64)
        .into_par_iter()
        .map(|r| {
            let s = checked(rejection_sample(&proposal, 2000, root.child(r)).unwrap());
            let ca: f64 = s.thetas.iter().zip(&s.weights).map(|(t, w)| w * t[0]).sum();
            let mut rng = root.child(r).child(tags::PRIOR).stream(0);
            let mc = (0..2000).map(|_| prior.sample(&mut rng)[0]).sum::<f64>() / 2000.0;
            let b = s.bounds.unwrap();
            (ca, mc, b.g_max / b.g_min)
        })
        .collect();
    let var = |xs: Vec<f64>| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
    };
    let ratio = var(reps.iter().map(|r| r.0).collect()) / var(reps.iter().map(|r| r.1).collect());
    let spread = reps[0].2;
    let (lo, hi) = (0.5 / spread, 2.0 * spread);
    report(
        2,
        "weight bounds and variance bracket",
        ratio >= lo && ratio <= hi,
        format!("var ratio {ratio:.4} in [{lo:.4}, {hi:.4}]"),
        start,
    );
}

#[test]
fn criterion_03_ess_and_cg_bounds() {
    let start = Instant::now();
    let root = RngKey::new(300);
    let failures: Vec<String> = (0..200u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = root.child(i).stream(0);
            let a = rng.random_range(0.5..100.0);
            let b = a * rng.random_range(1.2..20.0);
            let alpha = rng.random_range(0.01..10.0);
            let cost = if rng.random::<bool>() {
                CostModel::analytic_linear(vec![alpha], alpha * a * rng.random_range(0.0..3.0))
            } else {
                CostModel::analytic_quadratic(vec![alpha])
            };
            let k = rng.random_range(0.1..3.0);
            let prior = PriorSpec::uniform(a, b).unwrap();
            let p = CostAwareProposal::new(prior, cost, PenaltySpec::power(k)).unwrap();
            let r = diagnose(&p, 20_000, root.child(i).child(1)).unwrap();
            let spread = r.bounds.g_max / r.bounds.g_min;
            let ess_ok = r.ess >= spread.powi(-2) && r.ess <= 1.0;
            let cg_ok = r.cg >= 1.0 - 3.0 * r.cg_std_error && r.cg <= spread + 3.0 * r.cg_std_error;
            (!(ess_ok && cg_ok)).then(|| format!("config {i}: ess {} cg {} spread {spread}", r.ess, r.cg))
        })
        .collect();
    report(
        3,
        "ESS and CG bounds on 200 configurations",
        failures.is_empty(),
        format!("{} violations {:?}", failures.len(), failures.first()),
        start,
    );
}

#[test]
fn criterion_04_closed_forms_match_quadrature() {
    let start = Instant::now();
    let mut rng = RngKey::new(400).stream(0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = rng.random_range(0.5..100.0);
        let b = a * rng.random_range(1.5..20.0);
        let alpha = rng.random_range(0.01..10.0);
        let beta = alpha * a * rng.random_range(0.0..3.0);
        let k = [0.5, 1.0, 1.5, 2.0, 3.0][rng.random_range(0..5)];
        let lin = linear_case(alpha, beta, k, a, b);
        let closed = closed_form_b(&lin).unwrap();
        assert!(!closed.via_quadrature);
        worst = worst.max(rel(closed.value, quad_b(&lin.prior(), &lin.cost_model(), &lin.penalty()).unwrap()));

        let shape = if rng.random::<bool>() {
            CostShape::Linear { alpha, beta: 0.0 }
        } else {
            CostShape::Quadratic { alpha }
        };
        let case = ClosedFormCase::new(shape, [1.0, 2.0][rng.random_range(0..2)], a, b).unwrap();
        let closed = closed_form_cg(&case).unwrap();
        assert!(!closed.via_quadrature);
        worst = worst.max(rel(closed.value, quad_cg(&case.prior(), &case.cost_model(), &case.penalty()).unwrap()));
    }
    let case1_case = linear_case(1.0, 0.0, 1.0, 100.0, 1000.0);
    let case1 = closed_form_cg(&case1_case).unwrap().value;
    let formula = 1100.0 * 10f64.ln() / 1800.0;
    let case1_quad = quad_cg(&case1_case.prior(), &case1_case.cost_model(), &case1_case.penalty()).unwrap();
    let reference = 1.4072;
    let ok = worst < 1e-8
        && (case1 - formula).abs() < 1e-6
        && (case1 - case1_quad).abs() < 1e-6
        && (case1 - reference).abs() < 0.02;
    report(
        4,
        "closed forms vs quadrature",
        ok,
        format!("max rel err {worst:.2e}; case 1 = {case1:.7}, formula {formula:.7}, quadrature {case1_quad:.7} (≈ {reference})"),
        start,
    );
}

#[test]
fn criterion_05_gain_times_ess_is_one_when_penalty_is_cost() {
    let start = Instant::now();
    let models: [(&str, CostModel, f64, f64, f64); 3] = [
        ("2e-5θ", CostModel::gamma_cost_text(), 100.0, 1000.0, 2e-5 * 550.0),
        ("2e-6θ + 8e-4", CostModel::gamma_cost_table(), 100.0, 1000.0, 2e-6 * 550.0 + 8e-4),
        ("θ²", CostModel::analytic_quadratic(vec![1.0]), 1.0, 10.0, (1000.0 - 1.0) / 27.0),
    ];
    let mut quad_err = 0.0f64;
    let mut mc_err = 0.0f64;
    for (i, (_, cost, a, b, mean_cost)) in models.iter().enumerate() {
        let prior = PriorSpec::uniform(*a, *b).unwrap();
        let g = PenaltySpec::power(1.0);
        let cg = quad_cg(&prior, cost, &g).unwrap();
        // ESS∞ = (E_π̃ g)² / E_π̃ g² = 1 / (E_π[1/g] · E_π[g])
        let ess_inf = 1.0 / (quad_b(&prior, cost, &g).unwrap() * mean_cost);
        quad_err = quad_err.max((cg * ess_inf - 1.0).abs());
        let p = CostAwareProposal::new(prior, cost.clone(), g).unwrap();
        let r = diagnose(&p, 100_000, RngKey::new(500 + i as u64)).unwrap();
        mc_err = mc_err.max((r.product() - 1.0).abs());
    }
    report(
        5,
        "CG×ESS = 1 for g = c",
        quad_err < 1e-6 && mc_err < 0.03,
        format!("quadrature |err| {quad_err:.2e}, Monte Carlo |err| {mc_err:.4}"),
        start,
    );
}

#[test]
fn criterion_06_gamma_trade_off_ordering() {
    let start = Instant::now();
    let prior = Simulator::Gamma { m: 500 }.default_prior();
    let reports: Vec<_> = [0.5, 1.0, 2.0, 3.0]
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let p = CostAwareProposal::new(prior.clone(), CostModel::gamma_cost_table(), PenaltySpec::power(*k)).unwrap();
            diagnose(&p, 100_000, RngKey::new(600 + i as u64)).unwrap()
        })
        .collect();
    let ess_down = reports.windows(2).all(|w| w[1].ess < w[0].ess);
    let cg_up = reports.windows(2).all(|w| w[1].cg > w[0].cg);
    let product = reports[1].product();
    let table: Vec<String> = reports.iter().map(|r| format!("{}: ESS {:.3} CG {:.3}", r.penalty.label(), r.ess, r.cg)).collect();
    report(
        6,
        "gamma trade-off ordering",
        ess_down && cg_up && (0.95..=1.05).contains(&product),
        format!("{}; CG×ESS(k=1) {product:.4}", table.join(", ")),
        start,
    );
}

#[test]
fn criterion_07_realised_cost_tracks_gain() {
    let start = Instant::now();
    let sim = Simulator::Gamma { m: 10 };
    let prior = sim.default_prior();
    let n = 20_000u64;
    let simulate_all = |thetas: &[Vec<f64>], key: RngKey| -> u64 {
        thetas
            .par_iter()
            .enumerate()
            .map(|(i, t)| sim.simulate(t, key.child(i as u64)).unwrap().virtual_cost)
            .collect::<Vec<_>>()
            .iter()
            .sum()
    };
    let root = RngKey::new(700);
    let prior_draws: Vec<Vec<f64>> = (0..n).map(|i| prior.sample(&mut root.child(tags::PRIOR).stream(i))).collect();
    let prior_cost = simulate_all(&prior_draws, root.child(tags::SIMULATION)) as f64;
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for k in [1u64, 2, 3] {
        let p = CostAwareProposal::new(prior.clone(), CostModel::gamma_cost_text(), PenaltySpec::power(k as f64)).unwrap();
        let s = checked(rejection_sample(&p, n as usize, root.child(k)).unwrap());
        let ratio = prior_cost / simulate_all(&s.thetas, root.child(k).child(tags::SIMULATION)) as f64;
        let cg = estimate_cg(&p, 100_000, root.child(10 + k)).unwrap().cg;
        worst = worst.max(rel(ratio, cg));
        rows.push(format!("k={k}: realised {ratio:.4} vs CG {cg:.4}"));
    }
    report(7, "realised cost ratio vs CG", worst < 0.05, format!("{}; max rel {worst:.4}", rows.join(", ")), start);
}

#[test]
fn criterion_08_cost_aware_abc_target_invariance() {
    let start = Instant::now();
    let sim = Simulator::GaussianToy { m: 100 };
    let prior = sim.default_prior();
    let obs = ObservedData::synthetic(&sim, &prior, vec![2.0], PILOT_SIZE, RngKey::new(800)).unwrap();
    // flat prior on a wide box, so the posterior mean is x̄ up to truncation
    let conjugate_mean = obs.summary[0];
    let proposal = CostAwareProposal::new(prior.clone(), CostModel::preset("gaussian-toy").unwrap(), PenaltySpec::power(1.0)).unwrap();
    let mut fits = Vec::new();
    for dist in [SamplingDist::Prior(prior), SamplingDist::CostAware(proposal)] {
        let post = abc_rejection(&sim, &dist, &obs, 0.05, 50_000, RngKey::new(801)).unwrap();
        let mean = posterior_stats(&post.particles, &post.weights, &[0.5]).unwrap().mean[0];
        let se = post
            .particles
            .iter()
            .zip(&post.weights)
            .map(|(p, w)| (w * (p[0] - mean)).powi(2))
            .sum::<f64>()
            .sqrt();
        fits.push((mean, se));
    }
    let [(m0, s0), (m1, s1)] = [fits[0], fits[1]];
    let combined = (s0 * s0 + s1 * s1).sqrt();
    let ok = (m0 - m1).abs() < 4.0 * combined && (m0 - conjugate_mean).abs() < 0.1 && (m1 - conjugate_mean).abs() < 0.1;
    report(
        8,
        "cost-aware ABC target invariance",
        ok,
        format!("prior {m0:.4}, cost-aware {m1:.4}, 4SE {:.4}, exact {conjugate_mean:.4}", 4.0 * combined),
        start,
    );
}

#[test]
fn criterion_09_simulator_edge_cases() {
    let start = Instant::now();
    let mut rng = RngKey::new(900).stream(0);
    let no_spread = [
        sir_homogeneous(0.0, 10_000, 1.0, &mut rng).final_size,
        sir_temporal(0.0, 0.5, 1000, 10, &mut rng).final_size,
        sir_bernoulli(0.0, 0.5, 0.5, 1000, 10, &mut rng).final_size,
    ];
    let zero_ok = no_spread.iter().all(|s| *s == 1);

    let root = RngKey::new(901);
    let bin_failures = (0..1000u64)
        .into_par_iter()
        .filter(|i| {
            let mut rng = root.stream(*i);
            let population = rng.random_range(2..1000usize);
            let bins = rng.random_range(1..20usize);
            let (infection, removal) = (rng.random_range(0.1..1.0), rng.random_range(0.1..1.0));
            let out = if i % 2 == 0 {
                sir_temporal(infection, removal, population, bins, &mut rng)
            } else {
                let p = rng.random_range(0.1..1.0);
                sir_bernoulli(infection, removal, p, population.min(300), bins, &mut rng)
            };
            out.bins.len() != bins || out.bins.iter().sum::<u64>() != out.final_size
        })
        .count();

    let params = RadioParams::from_slice(&[3.98e-9, 7.8e-9, 1e9, 2.8e-10]).unwrap();
    let plan = inverse_plan();
    let powers: Vec<f64> = (0..2000u64)
        .into_par_iter()
        .map(|i| {
            let r = radio_realisation(&params, plan.as_ref(), &mut RngKey::new(902).stream(i));
            r.channel.iter().map(|h| h.norm_sqr()).sum::<f64>() / r.channel.len() as f64
        })
        .collect();
    let power = powers.iter().sum::<f64>() / powers.len() as f64;
    let power_err = rel(power, params.expected_channel_power());

    let silent = RadioParams { noise_variance: 0.0, ..params };
    let r = radio_realisation(&silent, plan.as_ref(), &mut RngKey::new(903).stream(0));
    let freq: f64 = r.channel.iter().map(|h| h.norm_sqr()).sum::<f64>() / r.channel.len() as f64;
    let time: f64 = r.signal.iter().map(|y| y.norm_sqr()).sum();
    let parseval_err = rel(time, freq);

    report(
        9,
        "simulator edge cases",
        zero_ok && bin_failures == 0 && power_err < 0.05 && parseval_err < 1e-9,
        format!(
            "final sizes {no_spread:?}, bin mismatches {bin_failures}, E|H|² rel err {power_err:.4}, Parseval rel err {parseval_err:.1e}"
        ),
        start,
    );
}

/// lnΓ(x) by the Stirling series, accurate to machine precision for x > 50.
fn ln_gamma_large(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Exact posterior draws for the Gamma simulator by inverse CDF on a fine grid.
fn gamma_reference_posterior(theta_true: f64, m: usize, n: usize, key: RngKey) -> Vec<Vec<f64>> {
    let dist = Gamma::new(theta_true, 1.0).unwrap();
    let mut rng = key.stream(0);
    let xs: Vec<f64> = (0..m).map(|_| dist.sample(&mut rng)).collect();
    let (sum_ln, sum) = (xs.iter().map(|x| x.ln()).sum::<f64>(), xs.iter().sum::<f64>());
    let log_lik = |t: f64| (t - 1.0) * sum_ln - sum - m as f64 * ln_gamma_large(t);
    let (lo, hi, cells) = (theta_true - 25.0, theta_true + 25.0, 200_000);
    let h = (hi - lo) / cells as f64;
    let grid: Vec<f64> = (0..=cells).map(|i| lo + i as f64 * h).collect();
    let ll: Vec<f64> = grid.iter().map(|t| log_lik(*t)).collect();
    let top = ll.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut cdf = vec![0.0; grid.len()];
    for i in 1..grid.len() {
        cdf[i] = cdf[i - 1] + 0.5 * h * ((ll[i - 1] - top).exp() + (ll[i] - top).exp());
    }
    let total = cdf[cells];
    (0..n)
        .map(|j| {
            let u = (j as f64 + 0.5) / n as f64 * total;
            let i = cdf.partition_point(|c| *c < u).clamp(1, cells);
            let frac = (u - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
            vec![grid[i - 1] + frac * h]
        })
        .collect()
}

#[test]
fn criterion_10_metrics() {
    let start = Instant::now();
    let mut rng = RngKey::new(1000).stream(0);
    let cloud: Vec<Vec<f64>> = (0..500)
        .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let self_mmd = mmd2(&cloud, &cloud, &KernelConfig::new(1.3).unwrap()).unwrap().abs();

    let normals = |shift: f64, stream: u64| -> Vec<Vec<f64>> {
        let mut rng = RngKey::new(1001).stream(stream);
        (0..5000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                vec![z + shift]
            })
            .collect()
    };
    // N(0,1) vs N(1,1), ℓ = 1: 2ℓ/√(ℓ²+2σ²) · (1 − exp(−Δ²/(2(ℓ²+2σ²))))
    let exact = 2.0 / 3f64.sqrt() * (1.0 - (-1.0f64 / 6.0).exp());
    let shifted = mmd2(&normals(0.0, 0), &normals(1.0, 1), &KernelConfig::new(1.0).unwrap()).unwrap();
    let shift_err = rel(shifted, exact);

    let left: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.random::<f64>()]).collect();
    let right: Vec<Vec<f64>> = (0..1000).map(|_| vec![2.0 + rng.random::<f64>()]).collect();
    let ks = ks_marginals(&left, &right).unwrap()[0];

    let reference = gamma_reference_posterior(250.0, 500, 2000, RngKey::new(1002));
    let ell = median_heuristic_with(&reference, MedianConvention::HalfSquared).unwrap();

    let ok = self_mmd <= 1e-12 && shift_err < 0.1 && ks == 1.0 && (ell - 0.48).abs() <= 0.1;
    report(
        10,
        "metrics",
        ok,
        format!("mmd²(X,X) {self_mmd:.1e}, shift rel err {shift_err:.4}, disjoint KS {ks}, median heuristic {ell:.4}"),
        start,
    );
}

fn pipeline_outputs(workers: usize, dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut cfg = ExperimentConfig::preset("gamma").unwrap();
    cfg.seed = 11;
    cfg.workers = Some(workers);
    cfg.out = Some(dir.to_path_buf());
    cfg.cost = CostSource::Fit {
        n_pilot: 30,
        reps: 1,
        clock: Clock::Virtual,
        fit: FitMethod::Linear,
    };
    cfg.diagnose.n_mc = 20_000;
    cfg.sample.n = 2000;
    cfg.sample.n_mc = 20_000;
    cfg.abc.epsilon = 0.5;
    cfg.abc.budget = 3000;
    cfg.export.n = 1000;
    for command in [Command::CostFit, Command::Diagnose, Command::Sample, Command::Abc, Command::Export] {
        run(command, &cfg).unwrap();
    }
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

#[test]
fn criterion_11_determinism_across_workers() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<_> = [1, 4, 16]
        .iter()
        .map(|w| pipeline_outputs(*w, &tmp.path().join(format!("w{w}"))))
        .collect();
    let files: Vec<&String> = runs[0].keys().collect();
    let identical = runs[1..].iter().all(|r| *r == runs[0]);
    report(
        11,
        "byte-identical outputs across 1, 4, 16 workers",
        identical && files.len() >= 8,
        format!("{} files compared: {files:?}", files.len()),
        start,
    );
}
