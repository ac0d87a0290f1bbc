//! Stochastic radio channel: Poisson arrivals with exponentially decaying
//! complex gains, observed in the frequency domain and summarised by
//! temporal moments of the received power.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::numeric::{mean, sample_variance};
use crate::rng::RngKey;

pub const BANDWIDTH: f64 = 4e9;
pub const N_FREQ: usize = 801;
pub const DELTA_F: f64 = BANDWIDTH / (N_FREQ as f64 - 1.0);
pub const T_MAX: f64 = 1.0 / DELTA_F;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadioParams {
    pub gain: f64,
    pub reverberation_time: f64,
    pub arrival_rate: f64,
    pub noise_variance: f64,
}

impl RadioParams {
    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        if theta.len() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: theta.len(),
            });
        }
        if theta.iter().any(|t| *t < 0.0) || theta[1] <= 0.0 || theta[2] <= 0.0 {
            return Err(Error::Simulator {
                simulator: "radio".into(),
                message: format!("parameters must be positive, got {theta:?}"),
            });
        }
        Ok(RadioParams {
            gain: theta[0],
            reverberation_time: theta[1],
            arrival_rate: theta[2],
            noise_variance: theta[3],
        })
    }

    /// Expected per-frequency channel power `E|H_l|²`.
    pub fn expected_channel_power(&self) -> f64 {
        self.gain * self.reverberation_time / BANDWIDTH * (1.0 - (-T_MAX / self.reverberation_time).exp())
    }
}

#[derive(Clone, Debug)]
pub struct RadioRealisation {
    pub n_points: u64,
    /// Noise-free transfer function `H_1..H_Ns`.
    pub channel: Vec<Complex64>,
    /// Time-domain signal after the inverse transform of `H + W`.
    pub signal: Vec<Complex64>,
    pub moments: [f64; 3],
    pub virtual_cost: u64,
}

fn complex_normal<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

fn fft_cost() -> u64 {
    (N_FREQ as f64 * (N_FREQ as f64).log2()).round() as u64
}

pub fn inverse_plan() -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_inverse(N_FREQ)
}

/// One realisation of the channel. The inverse transform carries the `1/N_s`
/// factor, so `Σ|y|² = (1/N_s) Σ|Y|²`.
pub fn radio_realisation<R: Rng + ?Sized>(params: &RadioParams, plan: &dyn Fft<f64>, rng: &mut R) -> RadioRealisation {
    let mean_points = params.arrival_rate * T_MAX;
    let n_points = if mean_points > 0.0 {
        Poisson::new(mean_points).map(|p| p.sample(rng) as u64).unwrap_or(0)
    } else {
        0
    };
    let mut delays: Vec<f64> = (0..n_points).map(|_| T_MAX * rng.random::<f64>()).collect();
    delays.sort_by(f64::total_cmp);

    let mut channel = vec![Complex64::new(0.0, 0.0); N_FREQ];
    for &tau in &delays {
        let variance = params.gain * (-tau / params.reverberation_time).exp() / (params.arrival_rate * BANDWIDTH);
        let beta = complex_normal(variance, rng);
        let step = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * DELTA_F * tau);
        let mut term = beta * step;
        for h in channel.iter_mut() {
            *h += term;
            term *= step;
        }
    }

    let mut signal: Vec<Complex64> = channel
        .iter()
        .map(|h| {
            if params.noise_variance > 0.0 {
                h + complex_normal(params.noise_variance, rng)
            } else {
                *h
            }
        })
        .collect();
    plan.process(&mut signal);
    let norm = 1.0 / N_FREQ as f64;
    for y in signal.iter_mut() {
        *y *= norm;
    }

    let dt = T_MAX / N_FREQ as f64;
    let mut moments = [0.0; 3];
    for (s, y) in signal.iter().enumerate() {
        let t = s as f64 * dt;
        let p = y.norm_sqr() * dt;
        moments[0] += p;
        moments[1] += t * p;
        moments[2] += t * t * p;
    }

    RadioRealisation {
        n_points,
        channel,
        signal,
        moments,
        virtual_cost: n_points * N_FREQ as u64 + fft_cost(),
    }
}

/// Means and unbiased variances of the temporal moments `M_0, M_1, M_2`
/// over `m` realisations, ordered `[mean M0, mean M1, mean M2, var M0, var M1, var M2]`.
pub fn radio_simulate(params: &RadioParams, m: usize, key: RngKey) -> ([f64; 6], u64) {
    let plan = inverse_plan();
    let runs: Vec<([f64; 3], u64)> = (0..m as u64)
        .into_par_iter()
        .map(|j| {
            let r = radio_realisation(params, plan.as_ref(), &mut key.stream(j));
            (r.moments, r.virtual_cost)
        })
        .collect();
    let mut out = [0.0; 6];
    for k in 0..3 {
        let xs: Vec<f64> = runs.iter().map(|r| r.0[k]).collect();
        out[k] = mean(&xs);
        out[k + 3] = sample_variance(&xs);
    }
    (out, runs.iter().map(|r| r.1).sum())
}
