use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

/// Bias plus ARD Matern 5/2 covariance, with observation noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparameters {
    pub bias_variance: f64,
    pub matern_variance: f64,
    pub length_scales: Vec<f64>,
    pub noise_variance: f64,
}

impl GpHyperparameters {
    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        if !(ok(self.bias_variance) && self.bias_variance >= 0.0) {
            return Err(Error::Domain(format!("bias variance {} must be >= 0", self.bias_variance)));
        }
        if !(ok(self.matern_variance) && self.matern_variance > 0.0) {
            return Err(Error::Domain(format!("Matern variance {} must be > 0", self.matern_variance)));
        }
        if !(ok(self.noise_variance) && self.noise_variance >= 0.0) {
            return Err(Error::Domain(format!("noise variance {} must be >= 0", self.noise_variance)));
        }
        if let Some(l) = self.length_scales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Domain(format!("length scale {l} must be > 0")));
        }
        Ok(())
    }

    /// Parameters in log space, ordered bias, Matern, length scales, noise.
    pub fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 3);
        v.push(self.bias_variance.ln());
        v.push(self.matern_variance.ln());
        v.extend(self.length_scales.iter().map(|l| l.ln()));
        v.push(self.noise_variance.ln());
        v
    }

    pub fn from_log(v: &[f64]) -> Self {
        let p = v.len() - 3;
        Self {
            bias_variance: v[0].exp(),
            matern_variance: v[1].exp(),
            length_scales: v[2..2 + p].iter().map(|x| x.exp()).collect(),
            noise_variance: v[2 + p].exp(),
        }
    }

    #[inline]
    pub(crate) fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Matern 5/2 part only.
    #[inline]
    pub(crate) fn matern(&self, r: f64) -> f64 {
        let s = SQRT5 * r;
        self.matern_variance * (1.0 + s + s * s / 3.0) * (-s).exp()
    }

    #[inline]
    pub(crate) fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.bias_variance + self.matern(self.scaled_distance(a, b))
    }

    /// `k(x, x)`.
    pub fn prior_variance(&self) -> f64 {
        self.bias_variance + self.matern_variance
    }
}

/// Covariance between two points.
pub fn kernel(a: &[f64], b: &[f64], hyp: &GpHyperparameters) -> Result<f64> {
    if a.len() != b.len() || a.len() != hyp.dim() {
        return Err(Error::Contract(format!(
            "dimension mismatch: {} / {} / {} length scales",
            a.len(),
            b.len(),
            hyp.dim()
        )));
    }
    hyp.validate()?;
    Ok(hyp.eval(a, b))
}

/// Derivative of the Matern part with respect to `log l_d`, given the
/// per-dimension scaled squared distance `q_d = (dx_d / l_d)^2`.
#[inline]
pub(crate) fn matern_log_length_derivative(hyp: &GpHyperparameters, r: f64, q_d: f64) -> f64 {
    let s = SQRT5 * r;
    hyp.matern_variance * (5.0 / 3.0) * (1.0 + s) * (-s).exp() * q_d
}
