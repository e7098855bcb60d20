use serde::{Deserialize, Serialize};

use super::ModelId;
use crate::{Error, Result};

/// Axis-aligned search region for the optimisers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Config("search box bounds must be non-empty and of equal length".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "search box dimension {i}: need finite lower < upper, got ({lo}, {hi})"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    pub fn unit(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim]).expect("unit box")
    }

    /// mu in (0, 1), phi in (0, 1), sigma_v in (0.01, 1) and, for the ASV
    /// model, alpha in (1.2, 2).
    pub fn default_for(model: ModelId) -> Self {
        let mut pairs = vec![(0.0, 1.0), (0.0, 1.0), (0.01, 1.0)];
        if model == ModelId::Asv {
            pairs.push((1.2, 2.0));
        }
        Self::from_pairs(&pairs).expect("default box")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.width(i)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Clamps to the box shrunk by `fraction` of each width, so that faces
    /// outside a model's domain (such as `phi = 1`) are never hit.
    pub fn clamp_interior(&self, x: &mut [f64], fraction: f64) {
        for (i, v) in x.iter_mut().enumerate() {
            let m = fraction * self.width(i);
            *v = v.clamp(self.lower[i] + m, self.upper[i] - m);
        }
    }

    /// Map a point of the unit cube onto the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, v)| self.lower[i] + v * self.width(i))
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.lower[i]) / self.width(i))
            .collect()
    }

    pub fn centre(&self) -> Vec<f64> {
        self.from_unit(&vec![0.5; self.dim()])
    }
}
