use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Evaluated points and their log-posterior estimates.
///
/// Non-finite estimates are kept as recorded; [`SurrogateDataset::targets`]
/// replaces them by `min - 3 * range` of the finite ones so the regression
/// stays finite while still marking the region as poor.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDataset {
    points: Vec<Vec<f64>>,
    #[serde(with = "crate::serde_ext::log_values")]
    values: Vec<f64>,
}

impl SurrogateDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Contract(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        let mut ds = Self::new();
        for (p, v) in points.into_iter().zip(values) {
            ds.push(p, v)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, point: Vec<f64>, value: f64) -> Result<()> {
        if let Some(first) = self.points.first() {
            if first.len() != point.len() {
                return Err(Error::Contract(format!(
                    "point of dimension {} added to a dataset of dimension {}",
                    point.len(),
                    first.len()
                )));
            }
        }
        if value.is_nan() || value == f64::INFINITY {
            return Err(Error::Contract(format!("log-posterior estimate {value} is not admissible")));
        }
        self.points.push(point);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Values as recorded, including `-inf`.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    /// Substitute for `-inf` entries; `None` when nothing finite exists yet.
    pub fn floor(&self) -> Option<f64> {
        let finite = self.values.iter().copied().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            return None;
        }
        let range = hi - lo;
        // A single distinct value gives no scale; fall back to one unit.
        let range = if range > 0.0 { range } else { 1.0 };
        Some(lo - 3.0 * range)
    }

    /// Regression targets with the floor substituted.
    pub fn targets(&self) -> Result<Vec<f64>> {
        if self.values.iter().all(|v| v.is_finite()) {
            return Ok(self.values.clone());
        }
        let floor = self
            .floor()
            .ok_or_else(|| Error::Numerical("every log-posterior estimate is -inf".into()))?;
        Ok(self
            .values
            .iter()
            .map(|v| if v.is_finite() { *v } else { floor })
            .collect())
    }
}
