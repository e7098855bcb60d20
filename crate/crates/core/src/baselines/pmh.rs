use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::evaluator::Evaluator;
use crate::models::ModelId;
use crate::serde_ext::log_value;
use crate::{Error, Result, RngStream};

const KEY_EVALUATION: u64 = 2;
const KEY_PROPOSAL: u64 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmhConfig {
    pub theta0: Vec<f64>,
    pub proposal_covariance: Vec<Vec<f64>>,
    /// Total number of posterior evaluations, including the one at `theta0`.
    pub iterations: usize,
    pub burnin: usize,
}

impl PmhConfig {
    /// Pilot-tuned random-walk settings for the two volatility models.
    pub fn default_for(model: ModelId) -> Self {
        let (theta0, scale, diag): (Vec<f64>, f64, Vec<f64>) = match model {
            ModelId::Gsv => (vec![0.10, 0.95, 0.12], 2.562f64.powi(2) / 3.0 * 1e-4, vec![137.0, 7.0, 38.0]),
            ModelId::Asv => (
                vec![0.22, 0.93, 0.25, 1.55],
                2.562f64.powi(2) / 4.0 * 1e-3,
                vec![26.0, 1.0, 9.0, 11.0],
            ),
        };
        let p = diag.len();
        let proposal_covariance = (0..p)
            .map(|i| (0..p).map(|j| if i == j { scale * diag[i] } else { 0.0 }).collect())
            .collect();
        Self {
            theta0,
            proposal_covariance,
            iterations: 15_000,
            burnin: 5_000,
        }
    }

    fn proposal_factor(&self) -> Result<DMatrix<f64>> {
        let p = self.theta0.len();
        if self.proposal_covariance.len() != p || self.proposal_covariance.iter().any(|r| r.len() != p) {
            return Err(Error::Config(format!("proposal covariance must be {p}x{p}")));
        }
        let m = DMatrix::from_fn(p, p, |i, j| self.proposal_covariance[i][j]);
        if (&m - m.transpose()).abs().max() > 1e-12 * m.abs().max() {
            return Err(Error::Config("proposal covariance is not symmetric".into()));
        }
        m.cholesky()
            .map(|c| c.unpack())
            .ok_or_else(|| Error::Config("proposal covariance is not positive definite".into()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.burnin >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be below the iteration count {}",
                self.burnin, self.iterations
            )));
        }
        self.proposal_factor().map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmhRow {
    pub iteration: usize,
    pub theta: Vec<f64>,
    /// Stored estimate at the current state.
    #[serde(with = "log_value")]
    pub xi: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmhResult {
    pub chain: Vec<PmhRow>,
    pub acceptance_rate: f64,
    pub posterior_mean: Vec<f64>,
    pub posterior_covariance: Vec<Vec<f64>>,
    pub posterior_sd: Vec<f64>,
    pub evaluations: usize,
    pub burnin: usize,
}

/// Pseudo-marginal random-walk Metropolis-Hastings.
///
/// The estimate at the current state is stored and reused; it is never
/// refreshed. Proposals estimated at `-inf` are always rejected.
pub fn pmh_run<E: Evaluator + ?Sized>(evaluator: &E, cfg: &PmhConfig, stream: &RngStream) -> Result<PmhResult> {
    cfg.validate()?;
    let l = cfg.proposal_factor()?;
    let p = cfg.theta0.len();
    let eval = |theta: &[f64], i: usize| -> f64 {
        let mut s = stream.fork2(KEY_EVALUATION, i as u64);
        match evaluator.log_posterior(theta, &mut s) {
            Ok(v) if !v.is_nan() => v,
            Ok(_) => f64::NEG_INFINITY,
            Err(e) => {
                log::warn!("PMH evaluation {i} failed: {e}");
                f64::NEG_INFINITY
            }
        }
    };

    let mut theta = cfg.theta0.clone();
    let mut xi = eval(&theta, 0);
    if xi == f64::NEG_INFINITY {
        return Err(Error::StartUp(format!("log-posterior at the initial point {theta:?} is -inf")));
    }
    let mut chain = Vec::with_capacity(cfg.iterations);
    chain.push(PmhRow {
        iteration: 0,
        theta: theta.clone(),
        xi,
        accepted: true,
    });
    let mut accepted = 0usize;
    for i in 1..cfg.iterations {
        let mut rng = stream.fork2(KEY_PROPOSAL, i as u64);
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = &l * z;
        let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let u: f64 = rng.random();
        let xi_cand = eval(&cand, i);
        let ok = xi_cand > f64::NEG_INFINITY && u.ln() < xi_cand - xi;
        if ok {
            theta = cand;
            xi = xi_cand;
            accepted += 1;
        }
        chain.push(PmhRow {
            iteration: i,
            theta: theta.clone(),
            xi,
            accepted: ok,
        });
        if i % 1000 == 0 {
            log::info!("PMH iteration {i}, acceptance {:.3}", accepted as f64 / i as f64);
        }
    }

    let kept = &chain[cfg.burnin..];
    let n = kept.len() as f64;
    let mean: Vec<f64> = (0..p).map(|j| kept.iter().map(|r| r.theta[j]).sum::<f64>() / n).collect();
    let denom = (n - 1.0).max(1.0);
    let cov: Vec<Vec<f64>> = (0..p)
        .map(|a| {
            (0..p)
                .map(|b| {
                    kept.iter()
                        .map(|r| (r.theta[a] - mean[a]) * (r.theta[b] - mean[b]))
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect();
    Ok(PmhResult {
        acceptance_rate: if cfg.iterations > 1 {
            accepted as f64 / (cfg.iterations - 1) as f64
        } else {
            0.0
        },
        posterior_sd: (0..p).map(|j| cov[j][j].sqrt()).collect(),
        posterior_mean: mean,
        posterior_covariance: cov,
        evaluations: cfg.iterations,
        burnin: cfg.burnin,
        chain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal(x: &[f64], _: &mut RngStream) -> f64 {
        -0.5 * x[0] * x[0]
    }

    fn cfg_1d(m: usize) -> PmhConfig {
        PmhConfig {
            theta0: vec![0.5],
            proposal_covariance: vec![vec![2.4f64.powi(2)]],
            iterations: m,
            burnin: 1000,
        }
    }

    #[test]
    fn samples_standard_normal() {
        let r = pmh_run(&std_normal, &cfg_1d(51_000), &RngStream::new(1)).unwrap();
        assert!(r.posterior_mean[0].abs() < 0.05, "{}", r.posterior_mean[0]);
        assert!((r.posterior_covariance[0][0] - 1.0).abs() < 0.1);
        assert_eq!(r.chain.len(), 51_000);
        assert_eq!(r.evaluations, 51_000);
        assert!(r.acceptance_rate > 0.2 && r.acceptance_rate < 0.7);
    }

    #[test]
    fn stored_estimate_is_reused() {
        // An estimator that is enormous on its first call only: a pseudo-
        // marginal chain must stay stuck there.
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let sticky = |x: &[f64], _: &mut RngStream| {
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
                1e6
            } else {
                -0.5 * x[0] * x[0]
            }
        };
        let r = pmh_run(&sticky, &cfg_1d(2000), &RngStream::new(2)).unwrap();
        assert_eq!(r.acceptance_rate, 0.0);
        assert!(r.chain.iter().all(|row| row.theta == vec![0.5] && row.xi == 1e6));
    }

    #[test]
    fn impossible_proposals_rejected_and_start_checked() {
        let half = |x: &[f64], _: &mut RngStream| if x[0] < 0.0 { f64::NEG_INFINITY } else { -x[0] };
        let r = pmh_run(&half, &cfg_1d(5000), &RngStream::new(3)).unwrap();
        assert!(r.chain.iter().all(|row| row.theta[0] >= 0.0));
        let mut bad = cfg_1d(5000);
        bad.theta0 = vec![-1.0];
        assert!(matches!(pmh_run(&half, &bad, &RngStream::new(3)), Err(Error::StartUp(_))));
    }

    #[test]
    fn reversibility_on_discretised_target() {
        // Oracle: for a symmetric proposal, transitions between bins i -> j and
        // j -> i occur equally often in stationarity.
        let r = pmh_run(&std_normal, &cfg_1d(101_000), &RngStream::new(4)).unwrap();
        let bin = |x: f64| ((x + 3.0) / 1.5).floor().clamp(0.0, 3.0) as usize;
        let mut counts = [[0f64; 4]; 4];
        for w in r.chain[1000..].windows(2) {
            counts[bin(w[0].theta[0])][bin(w[1].theta[0])] += 1.0;
        }
        let mut chi2 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                let (a, b) = (counts[i][j], counts[j][i]);
                if a + b > 0.0 {
                    chi2 += (a - b).powi(2) / (a + b);
                }
            }
        }
        // Six pairs; a loose bound well beyond the 0.999 quantile.
        assert!(chi2 < 40.0, "{chi2} {counts:?}");
    }

    #[test]
    fn config_validation() {
        let mut c = cfg_1d(100);
        c.burnin = 100;
        assert!(pmh_run(&std_normal, &c, &RngStream::new(1)).is_err());
        let mut c = cfg_1d(100);
        c.proposal_covariance = vec![vec![-1.0]];
        assert!(c.validate().is_err());
        let g = PmhConfig::default_for(ModelId::Gsv);
        assert!((g.proposal_covariance[0][0] - 2.562f64.powi(2) / 3.0 * 1e-4 * 137.0).abs() < 1e-15);
        g.validate().unwrap();
        PmhConfig::default_for(ModelId::Asv).validate().unwrap();
    }
}
