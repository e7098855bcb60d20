use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::gp::{GpModel, GpPrediction};
use crate::models::SearchBox;
use crate::optim::{direct_maximize, DirectBudget};
use crate::{Error, Result};

/// Jittered proposals stay this fraction of the box width away from each face.
const INTERIOR_MARGIN: f64 = 1e-6;

/// EI is zero below this predictive standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-10;

/// Treatment of jitter that leaves the search box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JitterBoundary {
    /// Clamp to the face.
    #[default]
    Clamp,
    /// Redraw the offending component, so the jitter is a truncated Gaussian.
    Resample,
}

/// Redraws before a component falls back to clamping.
const MAX_REDRAWS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// Exploration offset added to the incumbent.
    pub zeta: f64,
    /// Diagonal of the jitter covariance.
    pub jitter_variance: Vec<f64>,
    /// Stop once the best EI falls below this.
    #[serde(default)]
    pub ei_threshold: Option<f64>,
    #[serde(default)]
    pub boundary: JitterBoundary,
    #[serde(default)]
    pub direct: DirectBudget,
}

impl AcquisitionConfig {
    /// `zeta = 0.01`, `Sigma = 0.01 I`.
    pub fn default_for_dim(p: usize) -> Self {
        Self {
            zeta: 0.01,
            jitter_variance: vec![0.01; p],
            ei_threshold: None,
            boundary: JitterBoundary::default(),
            direct: DirectBudget::default(),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::Config(format!("zeta {} must be >= 0", self.zeta)));
        }
        if self.jitter_variance.len() != p {
            return Err(Error::Config(format!(
                "jitter covariance has {} entries for a {p}-dimensional box",
                self.jitter_variance.len()
            )));
        }
        if self.jitter_variance.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("jitter variances must be >= 0".into()));
        }
        if let Some(t) = self.ei_threshold {
            if !(t > 0.0) {
                return Err(Error::Config(format!("EI threshold {t} must be > 0")));
            }
        }
        if self.direct.max_evaluations == 0 {
            return Err(Error::Config("DIRECT budget must be positive".into()));
        }
        Ok(())
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `sigma [Z Phi(Z) + phi(Z)]` with `Z = (mu - mu_max - zeta) / sigma`.
pub fn expected_improvement_from(pred: &GpPrediction, mu_max: f64, zeta: f64) -> f64 {
    let sd = pred.variance.sqrt();
    if sd <= SIGMA_FLOOR {
        return 0.0;
    }
    let z = (pred.mean - mu_max - zeta) / sd;
    (sd * (z * std_normal_cdf(z) + std_normal_pdf(z))).max(0.0)
}

pub fn expected_improvement(x: &[f64], model: &GpModel, mu_max: f64, zeta: f64) -> Result<f64> {
    Ok(expected_improvement_from(&model.predict(x)?, mu_max, zeta))
}

/// Largest predictive mean over the sampled points.
pub fn incumbent(model: &GpModel) -> f64 {
    model
        .dataset()
        .points()
        .iter()
        .map(|p| model.mean(p))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    /// Point to evaluate next.
    pub theta: Vec<f64>,
    /// EI maximiser before jitter.
    pub argmax: Vec<f64>,
    /// EI at the maximiser.
    pub ei: f64,
}

/// DIRECT maximiser of EI, jittered by `N(0, Sigma)` and kept just inside the box.
pub fn propose_next<R: Rng + ?Sized>(
    model: &GpModel,
    mu_max: f64,
    bbox: &SearchBox,
    cfg: &AcquisitionConfig,
    rng: &mut R,
) -> Result<Proposal> {
    let best = direct_maximize(
        |x| model.predict(x).map(|p| expected_improvement_from(&p, mu_max, cfg.zeta)).unwrap_or(0.0),
        bbox,
        &cfg.direct,
    )?;
    let mut jittered: Vec<f64> = Vec::with_capacity(best.x.len());
    for (i, (x, v)) in best.x.iter().zip(&cfg.jitter_variance).enumerate() {
        let (lo, hi) = (bbox.lower()[i], bbox.upper()[i]);
        let mut value = x + v.sqrt() * rng.sample::<f64, _>(StandardNormal);
        if cfg.boundary == JitterBoundary::Resample {
            let mut tries = 0;
            while !(value > lo && value < hi) && tries < MAX_REDRAWS {
                value = x + v.sqrt() * rng.sample::<f64, _>(StandardNormal);
                tries += 1;
            }
        }
        jittered.push(value);
    }
    bbox.clamp_interior(&mut jittered, INTERIOR_MARGIN);
    Ok(Proposal {
        theta: jittered,
        argmax: best.x,
        ei: best.f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{GpHyperparameters, SurrogateDataset};
    use crate::RngStream;

    fn pred(mean: f64, variance: f64) -> GpPrediction {
        GpPrediction {
            mean,
            variance,
            noisy_variance: variance,
        }
    }

    #[test]
    fn ei_at_zero_z() {
        let ei = expected_improvement_from(&pred(1.01, 1.0), 1.0, 0.01);
        assert!((ei - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn ei_vanishes_without_uncertainty() {
        assert_eq!(expected_improvement_from(&pred(0.0, 0.0), 1.0, 0.0), 0.0);
        assert!(expected_improvement_from(&pred(0.0, 1e-8), 1.0, 0.0) < 1e-12);
        assert!(expected_improvement_from(&pred(-50.0, 1.0), 1.0, 0.0) >= 0.0);
    }

    fn model() -> GpModel {
        let ds = SurrogateDataset::from_parts(
            vec![vec![0.1, 0.2], vec![0.5, 0.5], vec![0.9, 0.3]],
            vec![-3.0, -1.0, -2.0],
        )
        .unwrap();
        GpModel::fit(
            &ds,
            GpHyperparameters {
                bias_variance: 1.0,
                matern_variance: 1.0,
                length_scales: vec![0.3, 0.3],
                noise_variance: 1e-4,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_jitter_returns_argmax() {
        let m = model();
        let mut cfg = AcquisitionConfig::default_for_dim(2);
        cfg.jitter_variance = vec![0.0, 0.0];
        cfg.direct = DirectBudget::evaluations(300);
        let p = propose_next(&m, incumbent(&m), &SearchBox::unit(2), &cfg, &mut RngStream::new(1)).unwrap();
        assert_eq!(p.theta, p.argmax);
    }

    #[test]
    fn jitter_is_clamped_inside_and_reproducible() {
        let m = model();
        let mut cfg = AcquisitionConfig::default_for_dim(2);
        cfg.jitter_variance = vec![1e4, 1e4];
        cfg.direct = DirectBudget::evaluations(300);
        let bbox = SearchBox::unit(2);
        let a = propose_next(&m, incumbent(&m), &bbox, &cfg, &mut RngStream::new(7)).unwrap();
        let b = propose_next(&m, incumbent(&m), &bbox, &cfg, &mut RngStream::new(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.theta.iter().all(|v| *v == INTERIOR_MARGIN || *v == 1.0 - INTERIOR_MARGIN));
    }

    #[test]
    fn resampled_jitter_stays_inside_without_piling_on_faces() {
        let m = model();
        let mut cfg = AcquisitionConfig::default_for_dim(2);
        cfg.jitter_variance = vec![0.25, 0.25];
        cfg.boundary = JitterBoundary::Resample;
        cfg.direct = DirectBudget::evaluations(300);
        let bbox = SearchBox::unit(2);
        let mut rng = RngStream::new(3);
        let mut on_face = 0;
        for _ in 0..200 {
            let p = propose_next(&m, incumbent(&m), &bbox, &cfg, &mut rng).unwrap();
            assert!(p.theta.iter().all(|v| *v > 0.0 && *v < 1.0));
            on_face += p.theta.iter().filter(|v| **v <= INTERIOR_MARGIN || **v >= 1.0 - INTERIOR_MARGIN).count();
        }
        assert_eq!(on_face, 0);
    }
}
