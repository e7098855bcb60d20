//! Bootstrap particle filters, exact and ABC, and the log-posterior
//! estimators built on them.

mod filter;
mod resample;

pub use filter::{bootstrap_filter, FilterOutput, ParticleSystem, Weighting, PARTICLE_BLOCK};
pub use resample::systematic_resample;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::evaluator::Evaluator;
use crate::models::{ModelId, PriorSpec, StableScale, SvModel};
use crate::{Error, Result, RngStream};

/// One-to-one transform applied to observations before the ABC comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Psi {
    #[default]
    Identity,
    Arctan,
}

impl Psi {
    #[inline]
    pub fn apply(self, y: f64) -> f64 {
        match self {
            Psi::Identity => y,
            Psi::Arctan => y.atan(),
        }
    }

    /// Identity for the Gaussian model, arctan for the stable one.
    pub fn default_for(model: ModelId) -> Self {
        match model {
            ModelId::Gsv => Psi::Identity,
            ModelId::Asv => Psi::Arctan,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbcKernel {
    #[default]
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub epsilon: f64,
    #[serde(default)]
    pub psi: Psi,
    #[serde(default)]
    pub kernel: AbcKernel,
}

impl AbcConfig {
    pub fn new(epsilon: f64, psi: Psi) -> Result<Self> {
        let cfg = Self {
            epsilon,
            psi,
            kernel: AbcKernel::Gaussian,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("ABC tolerance {} must be positive", self.epsilon)));
        }
        Ok(())
    }

    /// `log rho(y; mean, eps)`.
    #[inline]
    pub(crate) fn log_kernel(&self, y: f64, mean: f64) -> f64 {
        let e = (y - mean) / self.epsilon;
        -0.918_938_533_204_672_8 - self.epsilon.ln() - 0.5 * e * e
    }
}

/// `psi(y_t) + z_t`, `z_t ~ N(0, eps^2)`.
///
/// Drawn once per inference run; every posterior evaluation of that run
/// reuses the same perturbed series.
pub fn perturb_observations<R: Rng + ?Sized>(y: &[f64], cfg: &AbcConfig, rng: &mut R) -> Vec<f64> {
    y.iter()
        .map(|v| {
            let z: f64 = rng.sample(StandardNormal);
            cfg.psi.apply(*v) + cfg.epsilon * z
        })
        .collect()
}

/// A single noisy evaluation of the log-posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogPosteriorEstimate {
    pub model: ModelId,
    pub theta: Vec<f64>,
    /// `log_likelihood + log_prior`; `-inf` for zero prior mass or a degenerate filter.
    pub xi: f64,
    pub log_likelihood: f64,
    pub particles: usize,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub degenerate: bool,
}

fn estimate(
    theta: &[f64],
    observations: &[f64],
    n: usize,
    abc: Option<&AbcConfig>,
    prior: &PriorSpec,
    scale: StableScale,
    stream: &RngStream,
) -> Result<(LogPosteriorEstimate, Vec<f64>)> {
    if n < 2 {
        return Err(Error::Contract(format!("need at least 2 particles, got {n}")));
    }
    let model_id = prior.model();
    let mut out = LogPosteriorEstimate {
        model: model_id,
        theta: theta.to_vec(),
        xi: f64::NEG_INFINITY,
        log_likelihood: f64::NEG_INFINITY,
        particles: n,
        epsilon: abc.map(|c| c.epsilon),
        seed: stream.seed(),
        degenerate: false,
    };
    let log_prior = prior.log_density(theta);
    if log_prior == f64::NEG_INFINITY {
        return Ok((out, Vec::new()));
    }
    // A prior wider than the model's parameter space still yields -inf here.
    let Ok(model) = SvModel::from_values(model_id, theta, scale) else {
        return Ok((out, Vec::new()));
    };
    let weighting = match abc {
        Some(cfg) => Weighting::Abc(cfg),
        None => Weighting::Exact,
    };
    let filtered = match model {
        SvModel::Gsv(m) => bootstrap_filter(&m, observations, weighting, n, stream)?,
        SvModel::Asv(m) => bootstrap_filter(&m, observations, weighting, n, stream)?,
    };
    out.log_likelihood = filtered.log_likelihood;
    out.degenerate = filtered.degenerate;
    out.xi = if filtered.degenerate {
        f64::NEG_INFINITY
    } else {
        filtered.log_likelihood + log_prior
    };
    Ok((out, filtered.filtered_states))
}

/// ABC log-posterior estimate on an already perturbed series, with the
/// filtered log-volatility means.
pub fn smc_abc_log_posterior(
    theta: &[f64],
    perturbed: &[f64],
    n: usize,
    cfg: &AbcConfig,
    prior: &PriorSpec,
    scale: StableScale,
    stream: &RngStream,
) -> Result<(LogPosteriorEstimate, Vec<f64>)> {
    cfg.validate()?;
    estimate(theta, perturbed, n, Some(cfg), prior, scale, stream)
}

/// Standard bootstrap-filter estimate; needs a tractable observation density.
pub fn bpf_log_posterior(
    theta: &[f64],
    y: &[f64],
    n: usize,
    prior: &PriorSpec,
    stream: &RngStream,
) -> Result<(LogPosteriorEstimate, Vec<f64>)> {
    if prior.model() != ModelId::Gsv {
        return Err(Error::Unsupported(format!(
            "the exact bootstrap filter needs an evaluable observation density; {} has none",
            prior.model()
        )));
    }
    estimate(theta, y, n, None, prior, StableScale::Stable, stream)
}

/// Log-posterior oracle over a fixed data set, exact or ABC.
#[derive(Clone, Debug)]
pub struct SmcEvaluator {
    prior: PriorSpec,
    scale: StableScale,
    /// Raw data for the exact filter, perturbed data for ABC.
    observations: Vec<f64>,
    particles: usize,
    abc: Option<AbcConfig>,
}

impl SmcEvaluator {
    pub fn exact(y: Vec<f64>, particles: usize, prior: PriorSpec) -> Result<Self> {
        if prior.model() != ModelId::Gsv {
            return Err(Error::Unsupported(format!(
                "exact filtering is unavailable for {}",
                prior.model()
            )));
        }
        Ok(Self {
            prior,
            scale: StableScale::Stable,
            observations: y,
            particles,
            abc: None,
        })
    }

    /// Perturbs `y` once with `rng` and keeps the result for every evaluation.
    pub fn abc<R: Rng + ?Sized>(
        y: &[f64],
        particles: usize,
        cfg: AbcConfig,
        prior: PriorSpec,
        scale: StableScale,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            prior,
            scale,
            observations: perturb_observations(y, &cfg, rng),
            particles,
            abc: Some(cfg),
        })
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn abc_config(&self) -> Option<&AbcConfig> {
        self.abc.as_ref()
    }

    pub fn estimate(&self, theta: &[f64], stream: &RngStream) -> Result<(LogPosteriorEstimate, Vec<f64>)> {
        estimate(
            theta,
            &self.observations,
            self.particles,
            self.abc.as_ref(),
            &self.prior,
            self.scale,
            stream,
        )
    }
}

impl Evaluator for SmcEvaluator {
    fn log_posterior(&self, theta: &[f64], stream: &mut RngStream) -> Result<f64> {
        Ok(self.estimate(theta, stream)?.0.xi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{simulate, ThetaVector};

    fn gsv_data(t: usize, seed: u64) -> Vec<f64> {
        let theta = ThetaVector::new(ModelId::Gsv, vec![0.2, 0.96, 0.15]).unwrap();
        simulate(&theta, t, StableScale::Stable, &mut RngStream::new(seed))
            .unwrap()
            .observations
    }

    #[test]
    fn perturbation_limits() {
        let y = vec![0.0, 1.0, -2.0];
        let tiny = AbcConfig::new(1e-300, Psi::Arctan).unwrap();
        let out = perturb_observations(&y, &tiny, &mut RngStream::new(1));
        for (a, b) in out.iter().zip(&y) {
            assert!((a - b.atan()).abs() < 1e-290);
        }
        assert!(AbcConfig::new(0.0, Psi::Identity).is_err());
    }

    #[test]
    fn perturbation_variance() {
        let y: Vec<f64> = (0..10_000).map(|i| (i as f64).sin()).collect();
        let cfg = AbcConfig::new(0.2, Psi::Identity).unwrap();
        let out = perturb_observations(&y, &cfg, &mut RngStream::new(2));
        let d: Vec<f64> = out.iter().zip(&y).map(|(a, b)| a - b).collect();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let v = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((v / 0.04 - 1.0).abs() < 0.05, "{v}");

        let zeros = vec![0.0; 10_000];
        let arctan = AbcConfig::new(0.2, Psi::Arctan).unwrap();
        let out = perturb_observations(&zeros, &arctan, &mut RngStream::new(3));
        let v = out.iter().map(|x| x * x).sum::<f64>() / out.len() as f64;
        assert!((v / 0.04 - 1.0).abs() < 0.05);
    }

    #[test]
    fn empty_series_returns_prior() {
        let prior = PriorSpec::default_for(ModelId::Gsv);
        let theta = [0.2, 0.9, 0.15];
        let (est, states) = bpf_log_posterior(&theta, &[], 100, &prior, &RngStream::new(1)).unwrap();
        assert_eq!(est.log_likelihood, 0.0);
        assert_eq!(est.xi, prior.log_density(&theta));
        assert!(states.is_empty());

        let cfg = AbcConfig::new(0.1, Psi::Identity).unwrap();
        let (est, _) =
            smc_abc_log_posterior(&theta, &[], 100, &cfg, &prior, StableScale::Stable, &RngStream::new(1))
                .unwrap();
        assert_eq!(est.log_likelihood, 0.0);
    }

    #[test]
    fn outside_support_short_circuits() {
        let prior = PriorSpec::default_for(ModelId::Gsv);
        let y = gsv_data(20, 1);
        let (est, states) = bpf_log_posterior(&[0.2, 1.2, 0.15], &y, 100, &prior, &RngStream::new(1)).unwrap();
        assert_eq!(est.xi, f64::NEG_INFINITY);
        assert!(states.is_empty());
        let (est, _) = bpf_log_posterior(&[0.2, 0.9, -0.1], &y, 100, &prior, &RngStream::new(1)).unwrap();
        assert_eq!(est.xi, f64::NEG_INFINITY);
    }

    #[test]
    fn exact_filter_refuses_stable_model() {
        let prior = PriorSpec::default_for(ModelId::Asv);
        assert!(bpf_log_posterior(&[0.2, 0.9, 0.1, 1.8], &[0.1], 10, &prior, &RngStream::new(1)).is_err());
        assert!(SmcEvaluator::exact(vec![0.1], 10, prior).is_err());
    }

    #[test]
    fn too_few_particles() {
        let prior = PriorSpec::default_for(ModelId::Gsv);
        assert!(matches!(
            bpf_log_posterior(&[0.2, 0.9, 0.15], &[0.1], 1, &prior, &RngStream::new(1)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn xi_is_loglik_plus_prior_and_metadata() {
        let prior = PriorSpec::default_for(ModelId::Gsv);
        let y = gsv_data(50, 2);
        let theta = [0.2, 0.9, 0.15];
        let (est, states) = bpf_log_posterior(&theta, &y, 200, &prior, &RngStream::new(5)).unwrap();
        assert!((est.xi - est.log_likelihood - prior.log_density(&theta)).abs() < 1e-12);
        assert_eq!(states.len(), 50);
        assert_eq!(est.particles, 200);
        assert_eq!(est.seed, 5);
        assert_eq!(est.epsilon, None);
    }

    #[test]
    fn abc_on_stable_model_runs() {
        let theta = ThetaVector::new(ModelId::Asv, vec![0.2, 0.9, 0.15, 1.7]).unwrap();
        let y = simulate(&theta, 100, StableScale::Stable, &mut RngStream::new(3))
            .unwrap()
            .observations;
        let prior = PriorSpec::default_for(ModelId::Asv);
        let cfg = AbcConfig::new(0.1, Psi::Arctan).unwrap();
        let eval =
            SmcEvaluator::abc(&y, 500, cfg, prior, StableScale::Stable, &mut RngStream::new(4)).unwrap();
        let a = eval.log_posterior(theta.values(), &mut RngStream::new(8)).unwrap();
        let b = eval.log_posterior(theta.values(), &mut RngStream::new(8)).unwrap();
        assert!(a.is_finite());
        assert_eq!(a, b);
    }

    #[test]
    fn abc_approaches_exact_filter_for_small_tolerance() {
        // Oracle: the exact bootstrap filter on the same series. With eps = 0.05
        // the perturbed-model likelihood differs from the exact one by far less
        // than the Monte Carlo spread of the ABC estimator.
        let y = gsv_data(100, 11);
        let prior = PriorSpec::default_for(ModelId::Gsv);
        let theta = [0.2, 0.96, 0.15];
        let cfg = AbcConfig::new(0.05, Psi::Identity).unwrap();
        let abc = SmcEvaluator::abc(&y, 5000, cfg, prior.clone(), StableScale::Stable, &mut RngStream::new(1))
            .unwrap();
        let exact = SmcEvaluator::exact(y, 5000, prior).unwrap();
        let reps = 50;
        let run = |e: &SmcEvaluator| -> Vec<f64> {
            (0..reps)
                .map(|r| e.log_posterior(&theta, &mut RngStream::new(100 + r)).unwrap())
                .collect()
        };
        let a = run(&abc);
        let b = run(&exact);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let diff = (mean(&a) - mean(&b)).abs();
        assert!(diff < 2.0 * sd(&a).max(sd(&b)), "diff {diff}, sd {} / {}", sd(&a), sd(&b));
    }
}
