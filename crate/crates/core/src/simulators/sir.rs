//! Stochastic SIR epidemics: branching (homogeneous), Gillespie (temporal),
//! and Gillespie on a Bernoulli random graph.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

/// Result of one epidemic run. `bins` and `duration` are empty/zero for the
/// homogeneous model, which has no time axis.
#[derive(Clone, Debug, PartialEq)]
pub struct EpidemicOutcome {
    pub final_size: u64,
    pub duration: f64,
    pub bins: Vec<u64>,
    pub virtual_cost: u64,
}

impl EpidemicOutcome {
    /// `[final size, duration, removals per bin...]`
    pub fn summary(&self) -> Vec<f64> {
        let mut s = vec![self.final_size as f64, self.duration];
        s.extend(self.bins.iter().map(|b| *b as f64));
        s
    }
}

fn exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

fn bin_removals(removal_times: &[f64], duration: f64, n_bins: usize) -> Vec<u64> {
    let mut bins = vec![0u64; n_bins];
    for &t in removal_times {
        let idx = if duration > 0.0 {
            ((t / duration * n_bins as f64).floor() as usize).min(n_bins - 1)
        } else {
            0
        };
        bins[idx] += 1;
    }
    bins
}

/// Branching-process epidemic with Gamma(k, k) infectious periods. Virtual
/// cost is the number of contact trials.
pub fn sir_homogeneous<R: Rng + ?Sized>(rate: f64, population: usize, dispersion: f64, rng: &mut R) -> EpidemicOutcome {
    let n = population as u64;
    let period = Gamma::new(dispersion, 1.0 / dispersion).expect("dispersion > 0");
    let mut infectious: u64 = 1;
    let mut susceptible: u64 = n - 1;
    let mut trials: u64 = 0;
    while infectious > 0 {
        let length: f64 = period.sample(rng);
        let mean_contacts = rate * length;
        let contacts = if mean_contacts > 0.0 {
            Poisson::new(mean_contacts).map(|p| p.sample(rng) as u64).unwrap_or(0)
        } else {
            0
        };
        for _ in 0..contacts {
            if rng.random::<f64>() < susceptible as f64 / n as f64 {
                susceptible -= 1;
                infectious += 1;
            }
        }
        trials += contacts;
        infectious -= 1;
    }
    EpidemicOutcome {
        final_size: n - susceptible,
        duration: 0.0,
        bins: Vec::new(),
        virtual_cost: trials,
    }
}

/// Gillespie simulation of the well-mixed SIR model with infection rate
/// `(infection/N)·i·s` and removal rate `removal·i`. Virtual cost is the event count.
pub fn sir_temporal<R: Rng + ?Sized>(
    infection: f64,
    removal: f64,
    population: usize,
    n_bins: usize,
    rng: &mut R,
) -> EpidemicOutcome {
    let n = population as f64;
    let mut i: u64 = 1;
    let mut s: u64 = population as u64 - 1;
    let mut t = 0.0;
    let mut removals = Vec::new();
    let mut events: u64 = 0;
    while i > 0 {
        let total = infection / n * i as f64 * s as f64 + removal * i as f64;
        if !(total > 0.0) {
            break;
        }
        let tau = exponential(total, rng);
        let p_infect = infection * s as f64 / (infection * s as f64 + n * removal);
        if rng.random::<f64>() < p_infect {
            i += 1;
            s -= 1;
            t += tau;
        } else {
            i -= 1;
            t += tau;
            removals.push(t);
        }
        events += 1;
    }
    EpidemicOutcome {
        final_size: population as u64 - s,
        duration: t,
        bins: bin_removals(&removals, t, n_bins),
        virtual_cost: events,
    }
}

const SUSCEPTIBLE: u8 = 0;
const INFECTIOUS: u8 = 1;
const REMOVED: u8 = 2;

/// Gillespie SIR on a Bernoulli(`edge_prob`) random graph. Individual 0 starts
/// infectious. Virtual cost is the event count plus the N(N−1)/2 edge draws.
pub fn sir_bernoulli<R: Rng + ?Sized>(
    infection: f64,
    removal: f64,
    edge_prob: f64,
    population: usize,
    n_bins: usize,
    rng: &mut R,
) -> EpidemicOutcome {
    let n = population;
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); n];
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < edge_prob {
                adjacency[a].push(b as u32);
                adjacency[b].push(a as u32);
            }
        }
    }
    let edge_draws = (n as u64) * (n as u64).saturating_sub(1) / 2;

    let mut state = vec![SUSCEPTIBLE; n];
    // For susceptibles: number of infectious neighbours.
    let mut pressure = vec![0u64; n];
    let mut total_pressure: u64 = 0;
    let mut infected: Vec<usize> = Vec::new();

    let infect = |j: usize,
                  state: &mut Vec<u8>,
                  pressure: &mut Vec<u64>,
                  total_pressure: &mut u64,
                  infected: &mut Vec<usize>| {
        *total_pressure -= pressure[j];
        pressure[j] = 0;
        state[j] = INFECTIOUS;
        infected.push(j);
        for &nb in &adjacency[j] {
            let nb = nb as usize;
            if state[nb] == SUSCEPTIBLE {
                pressure[nb] += 1;
                *total_pressure += 1;
            }
        }
    };
    infect(0, &mut state, &mut pressure, &mut total_pressure, &mut infected);

    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut removed: u64 = 0;
    let mut events: u64 = 0;
    while !infected.is_empty() {
        let infection_rate = infection * total_pressure as f64;
        let total = infection_rate + removal * infected.len() as f64;
        if !(total > 0.0) {
            break;
        }
        t += exponential(total, rng);
        if rng.random::<f64>() < infection_rate / total {
            let target = rng.random_range(0..total_pressure);
            let mut acc = 0u64;
            let mut chosen = None;
            for (j, &p) in pressure.iter().enumerate() {
                if state[j] == SUSCEPTIBLE && p > 0 {
                    acc += p;
                    if target < acc {
                        chosen = Some(j);
                        break;
                    }
                }
            }
            let j = chosen.expect("positive pressure has a susceptible target");
            infect(j, &mut state, &mut pressure, &mut total_pressure, &mut infected);
        } else {
            let k = infected.swap_remove(rng.random_range(0..infected.len()));
            state[k] = REMOVED;
            for &nb in &adjacency[k] {
                let nb = nb as usize;
                if state[nb] == SUSCEPTIBLE {
                    pressure[nb] -= 1;
                    total_pressure -= 1;
                }
            }
            times.push(t);
            removed += 1;
        }
        events += 1;
    }
    let duration = *times.last().expect("non-empty");
    EpidemicOutcome {
        final_size: removed,
        duration,
        bins: bin_removals(&times[1..], duration, n_bins),
        virtual_cost: events + edge_draws,
    }
}
