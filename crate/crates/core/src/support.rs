use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[low_d, high_d]` in parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSupport {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl BoxSupport {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::DimensionMismatch {
                expected: low.len(),
                got: high.len(),
            });
        }
        if low.is_empty() {
            return Err(Error::config("support must have at least one dimension"));
        }
        for (d, (l, h)) in low.iter().zip(&high).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::config(format!(
                    "support dimension {d}: need finite low < high, got [{l}, {h}]"
                )));
            }
        }
        Ok(BoxSupport { low, high })
    }

    pub fn interval(low: f64, high: f64) -> Result<Self> {
        BoxSupport::new(vec![low], vec![high])
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn width(&self, d: usize) -> f64 {
        self.high[d] - self.low[d]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.width(d)).product()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(t, (l, h))| *t >= *l && *t <= *h)
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (t, (l, h)) in theta.iter_mut().zip(self.low.iter().zip(&self.high)) {
            *t = t.clamp(*l, *h);
        }
    }
}
