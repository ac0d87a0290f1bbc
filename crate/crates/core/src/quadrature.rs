//! Globally adaptive Gauss–Kronrod (7/15) quadrature in one and two dimensions.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadTolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for QuadTolerance {
    fn default() -> Self {
        QuadTolerance {
            abs: 1e-10,
            rel: 1e-13,
            max_intervals: 4000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]` to within `max(tol.abs, tol.rel * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: QuadTolerance) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0 });
    }
    let mut intervals: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(&f, a, b);
    intervals.push((a, b, v, e));
    loop {
        let total: f64 = intervals.iter().map(|iv| iv.2).sum();
        let err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature {
                achieved: f64::INFINITY,
                requested: tol.abs,
            });
        }
        let target = tol.abs.max(tol.rel * total.abs());
        if err <= target {
            return Ok(QuadResult { value: total, error: err });
        }
        if intervals.len() >= tol.max_intervals {
            return Err(Error::Quadrature {
                achieved: err,
                requested: target,
            });
        }
        let worst = (0..intervals.len())
            .max_by(|&i, &j| intervals[i].3.total_cmp(&intervals[j].3))
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Iterated integral over the rectangle `[a0,b0] x [a1,b1]`.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    (a0, b0): (f64, f64),
    (a1, b1): (f64, f64),
    tol: QuadTolerance,
) -> Result<QuadResult> {
    let inner_tol = QuadTolerance {
        abs: tol.abs / (b0 - a0).abs().max(1.0) * 0.1,
        rel: tol.rel * 0.1,
        max_intervals: tol.max_intervals,
    };
    let failure = std::cell::Cell::new(None);
    let outer = integrate(
        |x| match integrate(|y| f(x, y), a1, b1, inner_tol) {
            Ok(r) => r.value,
            Err(e) => {
                if let Error::Quadrature { achieved, .. } = e {
                    failure.set(Some(achieved));
                }
                f64::NAN
            }
        },
        a0,
        b0,
        tol,
    );
    if let Some(achieved) = failure.get() {
        return Err(Error::Quadrature {
            achieved,
            requested: tol.abs,
        });
    }
    outer
}
