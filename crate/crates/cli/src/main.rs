use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};

use casbi::metrics::{median_heuristic_with, MedianConvention};
use casbi::numeric::fmt_num;
use casbi::oracle::{closed_form_b, closed_form_cg, tilted_cdf, ClosedFormCase, CostShape};
use casbi::RngKey;
use casbi_cli::commands::{load_particles, metadata_line, score};
use casbi_cli::config::PenaltyChoice;
use casbi_cli::{exit_code, run, Command, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "casbi", version, about = "Cost-aware simulation-based inference")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment: gamma, sir-homogeneous, sir-temporal, sir-bernoulli, radio, gaussian-toy.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Use the single penalty g(z) = z^k.
    #[arg(long, global = true, conflicts_with = "mis")]
    penalty_k: Option<f64>,
    /// Use the mixture of the prior with z, z², z³.
    #[arg(long, global = true)]
    mis: bool,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Measure simulator cost at pilot parameters and fit a cost model.
    CostFit,
    /// ESS, CG and CG×ESS for each candidate penalty power.
    Diagnose,
    /// Draw weighted samples and report predicted versus realised cost.
    Sample,
    /// Cost-aware rejection ABC.
    Abc,
    /// Weighted (θ, x, w) training set for neural SBI.
    Export,
    /// Closed-form or quadrature B and CG for a uniform prior with linear or quadratic cost.
    Oracle {
        #[arg(long, value_enum, default_value = "linear")]
        cost: Shape,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long)]
        k: f64,
        #[arg(long)]
        theta_min: f64,
        #[arg(long)]
        theta_max: f64,
        /// Also evaluate the tilted CDF here.
        #[arg(long)]
        theta: Option<f64>,
    },
    /// MMD² and marginal KS between two particle files (`theta_*[,weight]`).
    Metrics {
        x: PathBuf,
        /// Reference set; the median heuristic is computed on it.
        y: PathBuf,
        #[arg(long)]
        lengthscale: Option<f64>,
        #[arg(long)]
        unbiased: bool,
        #[arg(long)]
        resample: Option<usize>,
        /// Median convention when no lengthscale is given.
        #[arg(long, value_enum, default_value = "plain")]
        median: Median,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Shape {
    Linear,
    Quadratic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Median {
    Plain,
    HalfSquared,
}

fn experiment(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(casbi::Error::Config("pass --config <file> or --preset <name>".into()).into()),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if let Some(e) = cli.epsilon {
        cfg.abc.epsilon = e;
    }
    if let Some(b) = cli.budget {
        cfg.abc.budget = b;
    }
    if let Some(k) = cli.penalty_k {
        cfg.penalty = PenaltyChoice::Power { k };
    }
    if cli.mis && !matches!(cfg.penalty, PenaltyChoice::Mis { .. }) {
        cfg.penalty = PenaltyChoice::Mis {
            powers: vec![1.0, 2.0, 3.0],
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_rows(header: &str, rows: &[(String, String)]) {
    println!("{header}");
    println!("key,value");
    for (k, v) in rows {
        println!("{k},{v}");
    }
}

fn execute(cli: Cli) -> Result<()> {
    let command = match &cli.command {
        Sub::CostFit => Command::CostFit,
        Sub::Diagnose => Command::Diagnose,
        Sub::Sample => Command::Sample,
        Sub::Abc => Command::Abc,
        Sub::Export => Command::Export,
        Sub::Oracle {
            cost,
            alpha,
            beta,
            k,
            theta_min,
            theta_max,
            theta,
        } => {
            let shape = match cost {
                Shape::Linear => CostShape::Linear { alpha: *alpha, beta: *beta },
                Shape::Quadratic => CostShape::Quadratic { alpha: *alpha },
            };
            let case = ClosedFormCase::new(shape, *k, *theta_min, *theta_max)?;
            let b = closed_form_b(&case)?;
            let cg = closed_form_cg(&case)?;
            println!("quantity,value,via_quadrature");
            println!("B,{},{}", fmt_num(b.value), b.via_quadrature);
            println!("CG,{},{}", fmt_num(cg.value), cg.via_quadrature);
            if let Some(t) = theta {
                let f = tilted_cdf(&case, *t)?;
                println!("tilted_cdf,{},{}", fmt_num(f.value), f.via_quadrature);
            }
            return Ok(());
        }
        Sub::Metrics {
            x,
            y,
            lengthscale,
            unbiased,
            resample,
            median,
        } => {
            let (xp, xw) = load_particles(x)?;
            let (yp, yw) = load_particles(y)?;
            let ell = match (lengthscale, median) {
                (Some(l), _) => *l,
                (None, Median::Plain) => median_heuristic_with(&yp, MedianConvention::Plain)?,
                (None, Median::HalfSquared) => median_heuristic_with(&yp, MedianConvention::HalfSquared)?,
            };
            let seed = cli.seed.unwrap_or(0);
            let rows = score(&xp, &xw, &yp, &yw, Some(ell), *unbiased, *resample, RngKey::new(seed))?;
            print_rows(&format!("# casbi v{} seed={seed}", casbi_cli::commands::VERSION), &rows);
            return Ok(());
        }
    };
    let cfg = experiment(&cli)?;
    let paths = run(command, &cfg).with_context(|| format!("{command:?} failed"))?;
    println!("{}", metadata_line(&cfg.hash(), cfg.seed));
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
