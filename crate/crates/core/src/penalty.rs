//! Penalty functions `g` and their extrema over the composed surface `g∘c`.

use serde::{Deserialize, Serialize};

use crate::costmodel::CostModel;
use crate::error::{Error, Result};
use crate::numeric::golden_section_min;
use crate::support::BoxSupport;

/// A non-decreasing, strictly positive penalty `g: (0, ∞) → (0, ∞)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PenaltySpec {
    Constant { value: f64 },
    /// `g(z) = z^k`; `k = 0` is the unpenalised case.
    Power { k: f64 },
    /// `g(z) = max(1, inner(z))`
    ClampBelow { inner: Box<PenaltySpec> },
    /// `g(z) = min(inner(z), cap)`
    ClampAbove { inner: Box<PenaltySpec>, cap: f64 },
}

impl PenaltySpec {
    pub fn constant() -> Self {
        PenaltySpec::Constant { value: 1.0 }
    }

    pub fn power(k: f64) -> Self {
        PenaltySpec::Power { k }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PenaltySpec::Constant { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(Error::config(format!("constant penalty must be positive, got {value}")));
                }
            }
            PenaltySpec::Power { k } => {
                if !(k.is_finite() && *k >= 0.0) {
                    return Err(Error::config(format!("power penalty needs finite k >= 0, got {k}")));
                }
            }
            PenaltySpec::ClampBelow { inner } => inner.validate()?,
            PenaltySpec::ClampAbove { inner, cap } => {
                inner.validate()?;
                if !(cap.is_finite() && *cap > 0.0) {
                    return Err(Error::config(format!("penalty cap must be positive, got {cap}")));
                }
            }
        }
        Ok(())
    }

    /// True when `g` does not depend on `z`, so the proposal equals the target.
    pub fn is_constant(&self) -> bool {
        match self {
            PenaltySpec::Constant { .. } => true,
            PenaltySpec::Power { k } => *k == 0.0,
            PenaltySpec::ClampBelow { inner } | PenaltySpec::ClampAbove { inner, .. } => inner.is_constant(),
        }
    }

    /// The exponent of a plain power penalty (constants count as `k = 0`).
    pub fn power_exponent(&self) -> Option<f64> {
        match self {
            PenaltySpec::Power { k } => Some(*k),
            PenaltySpec::Constant { .. } => Some(0.0),
            _ => None,
        }
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::domain(format!("penalty argument must be finite and positive, got {z}")));
        }
        Ok(self.eval_positive(z))
    }

    /// `g(z)` without argument checks; `z` must be positive and finite.
    pub fn eval_positive(&self, z: f64) -> f64 {
        match self {
            PenaltySpec::Constant { value } => *value,
            PenaltySpec::Power { k } => {
                if *k == 0.0 {
                    1.0
                } else if *k == 1.0 {
                    z
                } else {
                    z.powf(*k)
                }
            }
            PenaltySpec::ClampBelow { inner } => inner.eval_positive(z).max(1.0),
            PenaltySpec::ClampAbove { inner, cap } => inner.eval_positive(z).min(*cap),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PenaltySpec::Constant { value } => format!("const({value})"),
            PenaltySpec::Power { k } if *k == 0.0 => "const(1)".to_string(),
            PenaltySpec::Power { k } => format!("z^{k}"),
            PenaltySpec::ClampBelow { inner } => format!("max(1,{})", inner.label()),
            PenaltySpec::ClampAbove { inner, cap } => format!("min({},{cap})", inner.label()),
        }
    }
}

/// Flat configuration form: `{type = "power", k = 2.0}`, `{type = "clamp_above", k = 2.0, cap = 10.0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl TryFrom<&PenaltyConfig> for PenaltySpec {
    type Error = Error;

    fn try_from(cfg: &PenaltyConfig) -> Result<Self> {
        let k = || cfg.k.ok_or_else(|| Error::config(format!("penalty type `{}` requires `k`", cfg.kind)));
        let spec = match cfg.kind.as_str() {
            "constant" => PenaltySpec::Constant {
                value: cfg.value.unwrap_or(1.0),
            },
            "power" => PenaltySpec::Power { k: k()? },
            "clamp_below" => PenaltySpec::ClampBelow {
                inner: Box::new(PenaltySpec::Power { k: k()? }),
            },
            "clamp_above" => PenaltySpec::ClampAbove {
                inner: Box::new(PenaltySpec::Power { k: k()? }),
                cap: cfg
                    .cap
                    .ok_or_else(|| Error::config("penalty type `clamp_above` requires `cap`"))?,
            },
            other => {
                return Err(Error::config(format!(
                    "unknown penalty type `{other}` (expected power|constant|clamp_below|clamp_above)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsMethod {
    AnalyticEndpoints,
    GridRefined,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyBounds {
    pub g_min: f64,
    pub g_max: f64,
    pub method: BoundsMethod,
    pub safety_factor: f64,
}

impl PenaltyBounds {
    pub fn ratio(&self) -> f64 {
        self.g_max / self.g_min
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundsConfig {
    /// Grid points per axis; `None` picks 1024 in 1-D and 64 per axis up to 3-D.
    pub grid_size: Option<usize>,
    /// Deflation applied to a grid-estimated `g_min`.
    pub safety_factor: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            grid_size: None,
            safety_factor: 0.999,
        }
    }
}

fn default_grid_size(dim: usize) -> usize {
    match dim {
        1 => 1024,
        2 | 3 => 64,
        // keep the grid near 2^18 points
        d => ((1u64 << 18) as f64).powf(1.0 / d as f64).floor().max(3.0) as usize,
    }
}

/// Computes `g_min` and `g_max` of `g∘c` over `support`.
///
/// Monotone cost models are evaluated at the two extreme corners. Otherwise a
/// dense grid locates the extrema, which are then polished by golden-section
/// search (1-D) or coordinate descent (p ≥ 2) inside the neighbouring cells;
/// the reported `g_min` is deflated by `safety_factor`.
pub fn penalty_bounds(
    spec: &PenaltySpec,
    cost: &CostModel,
    support: &BoxSupport,
    config: BoundsConfig,
) -> Result<PenaltyBounds> {
    spec.validate()?;
    if cost.dim() != support.dim() {
        return Err(Error::DimensionMismatch {
            expected: support.dim(),
            got: cost.dim(),
        });
    }
    if !(config.safety_factor > 0.0 && config.safety_factor <= 1.0) {
        return Err(Error::config(format!(
            "safety factor must lie in (0, 1], got {}",
            config.safety_factor
        )));
    }

    let composed = |theta: &[f64]| -> Result<f64> {
        let raw = cost.eval_unclamped(theta);
        if cost.is_analytic() && !(raw.is_finite() && raw > 0.0) {
            return Err(Error::InvalidCost(format!(
                "analytic cost is {raw} at theta = {theta:?}; costs must be strictly positive on the support"
            )));
        }
        let c = cost.eval(theta);
        if !c.is_finite() {
            return Err(Error::InvalidCost(format!("cost is {c} at theta = {theta:?}")));
        }
        Ok(spec.eval_positive(c))
    };

    if spec.is_constant() {
        let v = spec.eval_positive(1.0);
        // still reject invalid analytic costs
        composed(&support.low)?;
        composed(&support.high)?;
        return Ok(PenaltyBounds {
            g_min: v,
            g_max: v,
            method: BoundsMethod::AnalyticEndpoints,
            safety_factor: 1.0,
        });
    }

    if cost.is_monotone_on(support) {
        let lo = composed(&support.low)?;
        let hi = composed(&support.high)?;
        return Ok(PenaltyBounds {
            g_min: lo.min(hi),
            g_max: lo.max(hi),
            method: BoundsMethod::AnalyticEndpoints,
            safety_factor: 1.0,
        });
    }

    let dim = support.dim();
    let per_axis = config.grid_size.unwrap_or_else(|| default_grid_size(dim)).max(2);
    let total = per_axis
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::config("penalty grid too large"))?;

    let cell: Vec<f64> = (0..dim).map(|d| support.width(d) / (per_axis - 1) as f64).collect();
    let point = |flat: usize| -> Vec<f64> {
        let mut rem = flat;
        (0..dim)
            .map(|d| {
                let i = rem % per_axis;
                rem /= per_axis;
                if i == per_axis - 1 {
                    support.high[d]
                } else {
                    support.low[d] + i as f64 * cell[d]
                }
            })
            .collect()
    };

    let mut min = (f64::INFINITY, 0usize);
    let mut max = (f64::NEG_INFINITY, 0usize);
    for flat in 0..total {
        let v = composed(&point(flat))?;
        if v < min.0 {
            min = (v, flat);
        }
        if v > max.0 {
            max = (v, flat);
        }
    }

    let g = |theta: &[f64]| composed(theta).unwrap_or(f64::NAN);
    let g_min = refine(&g, &point(min.1), support, &cell).min(min.0);
    let g_max = -refine(&|t: &[f64]| -g(t), &point(max.1), support, &cell).min(-max.0);
    if !(g_min > 0.0 && g_max.is_finite()) {
        return Err(Error::InvalidCost(format!(
            "penalised cost extrema out of range: g_min = {g_min}, g_max = {g_max}"
        )));
    }

    Ok(PenaltyBounds {
        g_min: g_min * config.safety_factor,
        g_max,
        method: BoundsMethod::GridRefined,
        safety_factor: config.safety_factor,
    })
}

/// Minimises `f` starting from `start`, searching within one grid cell of it
/// along each axis. Returns the smallest value found.
fn refine<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], support: &BoxSupport, cell: &[f64]) -> f64 {
    let mut x = start.to_vec();
    let mut best = f(&x);
    let sweeps = if x.len() == 1 { 1 } else { 4 };
    for _ in 0..sweeps {
        let before = best;
        for d in 0..x.len() {
            let lo = (start[d] - cell[d]).max(support.low[d]);
            let hi = (start[d] + cell[d]).min(support.high[d]);
            let (arg, val) = golden_section_min(
                |t| {
                    let mut probe = x.clone();
                    probe[d] = t;
                    let v = f(&probe);
                    if v.is_nan() {
                        f64::INFINITY
                    } else {
                        v
                    }
                },
                lo,
                hi,
                80,
            );
            if val < best {
                best = val;
                x[d] = arg;
            }
        }
        if best >= before {
            break;
        }
    }
    best
}
