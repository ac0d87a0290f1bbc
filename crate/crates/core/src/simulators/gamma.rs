use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{mean, sample_variance};
use crate::rng::{RngKey, StreamRng};

/// Uniform on (0, 1], safe to take the log of.
fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Ahrens–Dieter GS rejection sampler for Gamma(δ, 1) with 0 < δ < 1.
/// Returns the draw and the number of uniforms consumed.
fn gamma_fractional<R: Rng + ?Sized>(delta: f64, rng: &mut R) -> (f64, u64) {
    let b = (std::f64::consts::E + delta) / std::f64::consts::E;
    let mut used = 0;
    loop {
        let p = b * rng.random::<f64>();
        let u = open_uniform(rng);
        used += 2;
        if p <= 1.0 {
            let x = p.powf(1.0 / delta);
            if u <= (-x).exp() {
                return (x, used);
            }
        } else {
            let x = -((b - p) / delta).ln();
            if u <= x.powf(delta - 1.0) {
                return (x, used);
            }
        }
    }
}

/// One Gamma(θ, 1) draw as a sum of ⌊θ⌋ unit exponentials plus a fractional
/// rejection step. Cost, counted in uniforms, grows linearly with θ.
pub fn gamma_draw<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> (f64, u64) {
    let whole = theta.floor();
    let delta = theta - whole;
    let n = whole as u64;
    let mut sum = 0.0;
    for _ in 0..n {
        sum -= open_uniform(rng).ln();
    }
    let mut used = n;
    if delta > 0.0 {
        let (x, u) = gamma_fractional(delta, rng);
        sum += x;
        used += u;
    }
    (sum, used)
}

/// Sample mean and standard deviation of `m` Gamma(θ, 1) draws, each on its
/// own stream, plus the total uniform count.
pub fn gamma_simulate(theta: f64, m: usize, key: RngKey) -> Result<([f64; 2], u64)> {
    if !(theta >= 1.0) {
        return Err(Error::Simulator {
            simulator: "gamma".into(),
            message: format!("unsupported shape {theta}: need θ ≥ 1"),
        });
    }
    if m == 0 {
        return Err(Error::config("gamma simulator needs m ≥ 1"));
    }
    let draws: Vec<(f64, u64)> = (0..m)
        .into_par_iter()
        .with_min_len(16)
        .map(|j| {
            let mut rng: StreamRng = key.stream(j as u64);
            gamma_draw(theta, &mut rng)
        })
        .collect();
    let values: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let cost = draws.iter().map(|d| d.1).sum();
    Ok(([mean(&values), sample_variance(&values).sqrt()], cost))
}
