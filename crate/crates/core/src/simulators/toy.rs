use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numeric::pairwise_sum;

/// Mean of `m` draws from Normal(θ, 1).
pub fn gaussian_toy<R: Rng + ?Sized>(theta: f64, m: usize, rng: &mut R) -> f64 {
    let xs: Vec<f64> = (0..m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            theta + z
        })
        .collect();
    pairwise_sum(&xs) / m as f64
}
