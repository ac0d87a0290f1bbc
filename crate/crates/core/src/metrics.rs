//! Sample-based distances between particle sets: squared MMD with a
//! Gaussian kernel, the median-heuristic lengthscale, and marginal KS statistics.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

/// Points beyond this count are thinned to an evenly spaced subset before
/// the median heuristic forms all pairwise distances.
pub const MEDIAN_HEURISTIC_MAX_POINTS: usize = 4000;

/// Gaussian kernel `exp(−‖a − b‖² / (2ℓ²))` with unit amplitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig {
    pub lengthscale: f64,
}

impl KernelConfig {
    pub fn new(lengthscale: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::config(format!("kernel lengthscale must be positive, got {lengthscale}")));
        }
        Ok(KernelConfig { lengthscale })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-d2 / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }
}

/// How the median pairwise distance becomes a lengthscale.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MedianConvention {
    /// The median distance itself.
    #[default]
    Plain,
    /// `sqrt(median(‖a − b‖²) / 2)`, which matches a kernel written as
    /// `exp(−‖a − b‖² / ℓ²)` to the `2ℓ²` form used here.
    HalfSquared,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median of pairwise Euclidean distances.
pub fn median_heuristic(points: &[Vec<f64>]) -> Result<f64> {
    median_heuristic_with(points, MedianConvention::Plain)
}

/// Median-heuristic lengthscale under `convention`. Falls back to 1.0 with a
/// warning when all points coincide.
pub fn median_heuristic_with(points: &[Vec<f64>], convention: MedianConvention) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::domain(format!("median heuristic needs at least 2 points, got {}", points.len())));
    }
    check_dims(points, points[0].len())?;
    let subset: Vec<&Vec<f64>> = if points.len() > MEDIAN_HEURISTIC_MAX_POINTS {
        let stride = points.len() as f64 / MEDIAN_HEURISTIC_MAX_POINTS as f64;
        (0..MEDIAN_HEURISTIC_MAX_POINTS)
            .map(|i| &points[(i as f64 * stride) as usize])
            .collect()
    } else {
        points.iter().collect()
    };
    let mut d2: Vec<f64> = (0..subset.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = subset[i];
            subset[i + 1..]
                .iter()
                .map(move |b| a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        })
        .collect();
    d2.par_sort_unstable_by(f64::total_cmp);
    let value = match convention {
        MedianConvention::Plain => {
            let d: Vec<f64> = d2.iter().map(|v| v.sqrt()).collect();
            median(&d)
        }
        MedianConvention::HalfSquared => (median(&d2) / 2.0).sqrt(),
    };
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        log::warn!("median pairwise distance is {value}; using lengthscale 1.0");
        Ok(1.0)
    }
}

fn check_dims(points: &[Vec<f64>], dim: usize) -> Result<()> {
    match points.iter().find(|p| p.len() != dim) {
        Some(p) => Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        }),
        None => Ok(()),
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// `Σ_i Σ_j a_i b_j k(x_i, y_j)`, one parallel task per row, rows reduced
/// pairwise in index order.
fn cross_sum(x: &[Vec<f64>], a: &[f64], y: &[Vec<f64>], b: &[f64], kernel: &KernelConfig) -> f64 {
    let rows: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let terms: Vec<f64> = y.iter().zip(b).map(|(yj, bj)| bj * kernel.eval(&x[i], yj)).collect();
            a[i] * pairwise_sum(&terms)
        })
        .collect();
    pairwise_sum(&rows)
}

/// `Σ_i Σ_j a_i a_j k(x_i, x_j)`, optionally without the diagonal, using symmetry.
fn self_sum(x: &[Vec<f64>], a: &[f64], kernel: &KernelConfig, diagonal: bool) -> f64 {
    let rows: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let terms: Vec<f64> = x[i + 1..]
                .iter()
                .zip(&a[i + 1..])
                .map(|(xj, aj)| aj * kernel.eval(&x[i], xj))
                .collect();
            2.0 * a[i] * pairwise_sum(&terms)
        })
        .collect();
    let off = pairwise_sum(&rows);
    if diagonal {
        let sq: Vec<f64> = a.iter().map(|w| w * w).collect();
        off + pairwise_sum(&sq)
    } else {
        off
    }
}

fn compare_sets(x: &[Vec<f64>], wx: &[f64], y: &[Vec<f64>], wy: &[f64]) -> Ordering {
    x.len()
        .cmp(&y.len())
        .then_with(|| {
            x.iter()
                .flatten()
                .zip(y.iter().flatten())
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| {
            wx.iter()
                .zip(wy)
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

fn check_pair(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<usize> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::domain("MMD needs two non-empty samples"));
    }
    let dim = x[0].len();
    check_dims(x, dim)?;
    check_dims(y, dim)?;
    Ok(dim)
}

/// Biased (V-statistic) squared MMD between uniformly weighted samples.
pub fn mmd2(x: &[Vec<f64>], y: &[Vec<f64>], kernel: &KernelConfig) -> Result<f64> {
    check_pair(x, y)?;
    mmd2_weighted(x, &uniform(x.len()), y, &uniform(y.len()), kernel)
}

/// Squared MMD between the mixtures `Σ wx_i δ_{x_i}` and `Σ wy_j δ_{y_j}`.
/// Weights are normalised internally. The two arguments are put in a
/// canonical order first, so swapping them gives a bit-identical result.
pub fn mmd2_weighted(x: &[Vec<f64>], wx: &[f64], y: &[Vec<f64>], wy: &[f64], kernel: &KernelConfig) -> Result<f64> {
    check_pair(x, y)?;
    if wx.len() != x.len() || wy.len() != y.len() {
        return Err(Error::domain("weights must align with points"));
    }
    let norm = |w: &[f64]| -> Result<Vec<f64>> {
        let s = pairwise_sum(w);
        if !(s > 0.0 && s.is_finite()) || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("MMD weights must be non-negative with a positive finite sum"));
        }
        Ok(w.iter().map(|v| v / s).collect())
    };
    let (a, b) = (norm(wx)?, norm(wy)?);
    let (x, a, y, b) = if compare_sets(x, &a, y, &b) == Ordering::Greater {
        (y, b, x, a)
    } else {
        (x, a, y, b)
    };
    let kxx = self_sum(x, &a, kernel, true);
    let kyy = self_sum(y, &b, kernel, true);
    let kxy = cross_sum(x, &a, y, &b, kernel);
    Ok(kxx + kyy - 2.0 * kxy)
}

/// Unbiased (U-statistic) squared MMD; may be negative. Needs at least two
/// points in each sample.
pub fn mmd2_unbiased(x: &[Vec<f64>], y: &[Vec<f64>], kernel: &KernelConfig) -> Result<f64> {
    check_pair(x, y)?;
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::domain("unbiased MMD needs at least two points per sample"));
    }
    let (x, y) = if compare_sets(x, &[], y, &[]) == Ordering::Greater { (y, x) } else { (x, y) };
    let (n, m) = (x.len() as f64, y.len() as f64);
    let kxx = self_sum(x, &vec![1.0; x.len()], kernel, false) / (n * (n - 1.0));
    let kyy = self_sum(y, &vec![1.0; y.len()], kernel, false) / (m * (m - 1.0));
    let kxy = cross_sum(x, &vec![1.0; x.len()], y, &vec![1.0; y.len()], kernel) / (n * m);
    Ok(kxx + kyy - 2.0 * kxy)
}

/// Two-sample KS statistic `sup_t |F̂_X(t) − F̂_Y(t)|` per dimension, by
/// merging the sorted marginals.
pub fn ks_marginals(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = check_pair(x, y)?;
    Ok((0..dim)
        .map(|d| {
            let mut a: Vec<f64> = x.iter().map(|p| p[d]).collect();
            let mut b: Vec<f64> = y.iter().map(|p| p[d]).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            ks_sorted(&a, &b)
        })
        .collect())
}

fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = if a[i].total_cmp(&b[j]).is_le() { a[i] } else { b[j] };
        while i < a.len() && a[i].total_cmp(&t).is_eq() {
            i += 1;
        }
        while j < b.len() && b[j].total_cmp(&t).is_eq() {
            j += 1;
        }
        sup = sup.max((i as f64 / n - j as f64 / m).abs());
    }
    sup
}
