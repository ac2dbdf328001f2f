use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{math, Error, Result};

/// Measurement frequencies in Hz, strictly increasing.
///
/// Indices are 0-based internally; everything user-facing (reports, CLI,
/// rankings) uses 1-based indices via [`FrequencyGrid::label`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyGrid {
    values: Vec<f64>,
}

impl FrequencyGrid {
    pub const DEFAULT_POINTS: usize = 31;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty frequency grid".into()));
        }
        if values.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(Error::NonFinite("frequency grid".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "frequency grid must be strictly increasing".into(),
            ));
        }
        Ok(FrequencyGrid { values })
    }

    /// `points` log-spaced values from `f_min` to `f_max` inclusive.
    ///
    /// The exponent is formed as `decades * k / (points - 1)` so the end points
    /// are exact powers of ten when the bounds are.
    pub fn log_spaced(f_min: f64, f_max: f64, points: usize) -> Result<Self> {
        if points < 2 || !(f_min > 0.0 && f_max > f_min) {
            return Err(Error::InvalidArgument(format!(
                "log grid needs 0 < f_min < f_max and >= 2 points (got {f_min}, {f_max}, {points})"
            )));
        }
        let decades = libm::log10(f_max / f_min);
        let rounded = libm::round(decades);
        let decades = if math::abs(decades - rounded) < 1e-12 {
            rounded
        } else {
            decades
        };
        let steps = (points - 1) as f64;
        let values = (0..points)
            .map(|k| f_min * math::powf(10.0, decades * k as f64 / steps))
            .collect();
        Self::new(values)
    }

    /// 31 points from 100 Hz to 100 kHz.
    pub fn standard() -> Self {
        Self::log_spaced(100.0, 100_000.0, Self::DEFAULT_POINTS).expect("valid constant grid")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Frequency at a 1-based index.
    pub fn at_label(&self, one_based: usize) -> Option<f64> {
        one_based
            .checked_sub(1)
            .and_then(|i| self.values.get(i))
            .copied()
    }

    /// 1-based label of an internal index.
    pub fn label(index: usize) -> usize {
        index + 1
    }
}

impl TryFrom<Vec<f64>> for FrequencyGrid {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FrequencyGrid> for Vec<f64> {
    fn from(g: FrequencyGrid) -> Self {
        g.values
    }
}
