use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::residuals::EmpiricalCdf;
use super::tcopula::simulate_t_copula;
use crate::{Error, Result, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopulaModel {
    pub assets: Vec<String>,
    pub correlation: Vec<Vec<f64>>,
    pub dof: f64,
    pub dof_on_boundary: bool,
    /// True when the Kendall-implied matrix needed a positive-definite repair.
    pub repaired: bool,
}

impl CopulaModel {
    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        let d = self.correlation.len();
        DMatrix::from_fn(d, d, |i, j| self.correlation[i][j])
    }
}

/// Simulated filtered residuals: one column of `M` draws per asset, obtained
/// by pushing copula draws through each asset's empirical quantile function.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSimulation {
    columns: Vec<Vec<f64>>,
}

impl ResidualSimulation {
    pub fn new(copula: &CopulaModel, margins: &[EmpiricalCdf], m: usize, stream: &RngStream) -> Result<Self> {
        if margins.len() != copula.assets.len() {
            return Err(Error::Contract(format!(
                "{} margins for a {}-asset copula",
                margins.len(),
                copula.assets.len()
            )));
        }
        if m < 1000 {
            return Err(Error::Config(format!("at least 1000 simulations required, got {m}")));
        }
        let u = if margins.len() == 1 {
            // A one-dimensional copula is the uniform law; reuse the t path with R = [1].
            simulate_t_copula(copula.dof, &DMatrix::identity(1, 1), m, stream)?
        } else {
            simulate_t_copula(copula.dof, &copula.correlation_matrix(), m, stream)?
        };
        let columns = margins
            .iter()
            .enumerate()
            .map(|(j, cdf)| u.iter().map(|row| cdf.quantile(row[j])).collect())
            .collect();
        Ok(Self { columns })
    }

    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let m = columns.first().map_or(0, Vec::len);
        if m == 0 || columns.iter().any(|c| c.len() != m) {
            return Err(Error::Contract("residual columns must be non-empty and equally long".into()));
        }
        Ok(Self { columns })
    }

    pub fn draws(&self) -> usize {
        self.columns[0].len()
    }

    pub fn assets(&self) -> usize {
        self.columns.len()
    }

    /// Portfolio VaR at `level` for log-volatilities `xhat` (one per asset):
    /// the `level` quantile of the simulated loss.
    pub fn value_at_risk(&self, xhat: &[f64], weights: &[f64], level: f64) -> Result<f64> {
        check_weights(weights, self.assets())?;
        if xhat.len() != self.assets() {
            return Err(Error::Contract(format!("{} volatilities for {} assets", xhat.len(), self.assets())));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Config(format!("VaR level {level} outside (0, 1)")));
        }
        let scale: Vec<f64> = xhat.iter().zip(weights).map(|(x, w)| w * (0.5 * x).exp()).collect();
        let m = self.draws();
        let mut losses: Vec<f64> = (0..m)
            .map(|i| -self.columns.iter().zip(&scale).map(|(c, s)| s * c[i]).sum::<f64>())
            .collect();
        let k = ((level * m as f64).ceil() as usize).clamp(1, m) - 1;
        let (_, v, _) = losses.select_nth_unstable_by(k, f64::total_cmp);
        Ok(*v)
    }
}

fn check_weights(weights: &[f64], d: usize) -> Result<()> {
    if weights.len() != d {
        return Err(Error::Config(format!("{} weights for {d} assets", weights.len())));
    }
    if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config("portfolio weights must sum to 1".into()));
    }
    Ok(())
}

/// One-period VaR from a fresh simulation.
pub fn var_estimate(
    copula: &CopulaModel,
    margins: &[EmpiricalCdf],
    xhat: &[f64],
    weights: &[f64],
    level: f64,
    m: usize,
    stream: &RngStream,
) -> Result<f64> {
    ResidualSimulation::new(copula, margins, m, stream)?.value_at_risk(xhat, weights, level)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Backtest {
    pub periods: usize,
    pub violations: usize,
    /// `(1 - level) n`.
    pub expected: f64,
    pub flags: Vec<bool>,
}

/// Counts periods whose loss exceeds the VaR.
pub fn backtest(var: &[f64], returns: &[f64], level: f64) -> Result<Backtest> {
    if var.len() != returns.len() {
        return Err(Error::Contract(format!(
            "{} VaR values but {} returns",
            var.len(),
            returns.len()
        )));
    }
    let flags: Vec<bool> = var.iter().zip(returns).map(|(v, r)| -r > *v).collect();
    Ok(Backtest {
        periods: var.len(),
        violations: flags.iter().filter(|f| **f).count(),
        expected: (1.0 - level) * var.len() as f64,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal_sim(m: usize, seed: u64) -> ResidualSimulation {
        let mut rng = RngStream::new(seed);
        ResidualSimulation::from_columns(vec![(0..m).map(|_| rng.sample(StandardNormal)).collect()]).unwrap()
    }

    #[test]
    fn normal_quantile_oracle() {
        let sim = normal_sim(200_000, 1);
        let v = sim.value_at_risk(&[0.0], &[1.0], 0.99).unwrap();
        // Standard error of the 0.99 quantile: sqrt(p(1-p)/M) / phi(z).
        let se = (0.99f64 * 0.01 / 200_000.0).sqrt() / 0.026_652;
        assert!((v - 2.326_348).abs() < 4.0 * se, "{v}");
        let median = sim.value_at_risk(&[0.0], &[1.0], 0.5).unwrap();
        assert!(median.abs() < 0.01);
    }

    #[test]
    fn homogeneous_and_monotone() {
        let sim = normal_sim(10_000, 2);
        let a = sim.value_at_risk(&[0.3], &[1.0], 0.95).unwrap();
        let b = sim.value_at_risk(&[0.3 + 2.0 * 2f64.ln()], &[1.0], 0.95).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12 * a.abs());
        let c = sim.value_at_risk(&[0.3], &[1.0], 0.99).unwrap();
        assert!(c >= a);
    }

    #[test]
    fn weights_are_checked() {
        let sim = normal_sim(2000, 3);
        assert!(sim.value_at_risk(&[0.0], &[0.5], 0.99).is_err());
    }

    #[test]
    fn backtest_counts() {
        let b = backtest(&[f64::INFINITY; 4], &[-5.0, 1.0, -100.0, 0.0], 0.99).unwrap();
        assert_eq!(b.violations, 0);
        let b = backtest(&[1.0, 1.0, 1.0], &[-2.0, -0.5, -1.0], 0.99).unwrap();
        assert_eq!(b.violations, 1);
        assert_eq!(b.flags, vec![true, false, false]);
        assert!((backtest(&vec![1.0; 233], &vec![0.0; 233], 0.99).unwrap().expected - 2.33).abs() < 1e-12);
        assert!((backtest(&vec![1.0; 358], &vec![0.0; 358], 0.99).unwrap().expected - 3.58).abs() < 1e-12);
        assert!(backtest(&[1.0], &[], 0.99).is_err());
    }
}
