use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `exp(-xhat_t / 2) y_t`.
pub fn filtered_residuals(y: &[f64], xhat: &[f64]) -> Result<Vec<f64>> {
    if y.len() != xhat.len() {
        return Err(Error::Contract(format!(
            "{} returns but {} volatility estimates",
            y.len(),
            xhat.len()
        )));
    }
    Ok(y.iter().zip(xhat).map(|(y, x)| (-0.5 * x).exp() * y).collect())
}

/// Average ranks (one-based), ties sharing the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

/// `rank / (T + 1)`, strictly inside `(0, 1)`.
pub fn probability_transform(e: &[f64]) -> Result<Vec<f64>> {
    if e.len() < 2 {
        return Err(Error::Contract("probability transform needs at least 2 residuals".into()));
    }
    if e.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN residual".into()));
    }
    let denom = (e.len() + 1) as f64;
    Ok(average_ranks(e).into_iter().map(|r| r / denom).collect())
}

/// Empirical distribution of residuals, inverted by linear interpolation
/// between order statistics with tails clamped to the extremes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("empirical CDF needs finite values".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// The `i`-th order statistic (zero-based) sits at `u = (i + 1) / (T + 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.sorted.len();
        let h = (u * (n + 1) as f64 - 1.0).clamp(0.0, (n - 1) as f64);
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let w = h - lo as f64;
        self.sorted[lo] + w * (self.sorted[hi] - self.sorted[lo])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_identities() {
        let y = [0.5, -2.0, 3.0];
        assert_eq!(filtered_residuals(&y, &[0.0; 3]).unwrap(), y.to_vec());
        let x: Vec<f64> = y.iter().map(|v: &f64| 2.0 * v.abs().ln()).collect();
        let e = filtered_residuals(&y, &x).unwrap();
        for (a, b) in e.iter().zip(&y) {
            assert!((a - b.signum()).abs() < 1e-15);
        }
        assert!(filtered_residuals(&y, &[0.0]).is_err());
    }

    #[test]
    fn transform_rules() {
        let u = probability_transform(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!(u, vec![0.6, 0.2, 0.4, 0.8]);
        let u = probability_transform(&[1.0; 5]).unwrap();
        assert!(u.iter().all(|v| *v == 0.5));
        let u = probability_transform(&[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(u, vec![0.2, 0.5, 0.5, 0.8]);
        assert!(probability_transform(&[1.0]).is_err());
    }

    #[test]
    fn quantile_inverts_transform_and_clamps_tails() {
        let e = [0.3, -1.0, 2.0, 0.0];
        let cdf = EmpiricalCdf::new(&e).unwrap();
        for (v, u) in e.iter().zip(probability_transform(&e).unwrap()) {
            assert!((cdf.quantile(u) - v).abs() < 1e-15);
        }
        assert_eq!(cdf.quantile(1e-9), -1.0);
        assert_eq!(cdf.quantile(1.0 - 1e-9), 2.0);
        assert!((cdf.quantile(0.3) - (-1.0 + 0.5 * 1.0)).abs() < 1e-12);
    }
}
