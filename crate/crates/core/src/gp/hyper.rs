use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::SurrogateDataset;
use super::kernel::GpHyperparameters;
use super::model::{gp_log_marginal_likelihood, log_marginal_likelihood_gradient};
use crate::models::SearchBox;
use crate::optim::{lbfgs_minimize, LbfgsOptions};
use crate::{Error, Result};

/// Box constraints on the log hyperparameters, laid out as
/// [`GpHyperparameters::to_log`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl HyperBounds {
    /// Length scales within `[1e-3, 10]` box widths, variances within `[1e-6, 1e6]`.
    pub fn for_box(bbox: &SearchBox) -> Self {
        let (vlo, vhi) = (1e-6f64.ln(), 1e6f64.ln());
        let mut lower = vec![vlo, vlo];
        let mut upper = vec![vhi, vhi];
        for w in bbox.widths() {
            lower.push((1e-3 * w).ln());
            upper.push((10.0 * w).ln());
        }
        lower.push(vlo);
        upper.push(vhi);
        Self { lower, upper }
    }

    pub fn clamp(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (lo, hi))| if x.is_nan() { *lo } else { x.clamp(*lo, *hi) })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperFit {
    pub hyperparameters: GpHyperparameters,
    pub log_marginal_likelihood: f64,
    /// False when no restart beat the initial hyperparameters.
    pub improved: bool,
}

/// Data-driven starting values: bias from the squared mean, Matern variance
/// from the spread, length scales a fifth of the box, noise one percent of
/// the spread.
pub fn initial_hyperparameters(dataset: &SurrogateDataset, bbox: &SearchBox) -> Result<GpHyperparameters> {
    let y = dataset.targets()?;
    let n = y.len().max(1) as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let var = var.clamp(1e-4, 1e6);
    Ok(GpHyperparameters {
        bias_variance: (mean * mean).clamp(1e-6, 1e6),
        matern_variance: var,
        length_scales: bbox.widths().iter().map(|w| 0.2 * w).collect(),
        noise_variance: (0.01 * var).clamp(1e-6, 1e6),
    })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Empirical-Bayes hyperparameters by L-BFGS on the log marginal likelihood.
///
/// The first start is `init` clamped to the bounds; the remaining
/// `restarts - 1` starts are uniform in the log bounds. The result never has a
/// lower marginal likelihood than `init`.
pub fn estimate_hyperparameters<R: Rng + ?Sized>(
    dataset: &SurrogateDataset,
    init: &GpHyperparameters,
    bounds: &HyperBounds,
    restarts: usize,
    rng: &mut R,
) -> Result<HyperFit> {
    if dataset.len() < 2 {
        return Err(Error::Contract(format!(
            "hyperparameter estimation needs at least 2 points, got {}",
            dataset.len()
        )));
    }
    let np = init.dim() + 3;
    if bounds.lower.len() != np || bounds.upper.len() != np {
        return Err(Error::Contract("hyperparameter bounds do not match the dimension".into()));
    }
    let init_lml = gp_log_marginal_likelihood(dataset, init).unwrap_or(f64::NEG_INFINITY);

    let to_u = |z: &[f64]| -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(j, z)| bounds.lower[j] + (bounds.upper[j] - bounds.lower[j]) * sigmoid(*z))
            .collect()
    };
    let to_z = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(j, u)| {
                let w = bounds.upper[j] - bounds.lower[j];
                let s = ((u - bounds.lower[j]) / w).clamp(1e-6, 1.0 - 1e-6);
                (s / (1.0 - s)).ln()
            })
            .collect()
    };
    let objective = |z: &[f64]| -> (f64, Vec<f64>) {
        let u = to_u(z);
        match log_marginal_likelihood_gradient(dataset, &GpHyperparameters::from_log(&u)) {
            Ok((l, g)) => {
                let gz = z
                    .iter()
                    .enumerate()
                    .map(|(j, z)| {
                        let s = sigmoid(*z);
                        -g[j] * (bounds.upper[j] - bounds.lower[j]) * s * (1.0 - s)
                    })
                    .collect();
                (-l, gz)
            }
            Err(_) => (f64::INFINITY, vec![0.0; z.len()]),
        }
    };

    let mut starts = vec![bounds.clamp(&init.to_log())];
    for _ in 1..restarts.max(1) {
        starts.push(
            (0..np)
                .map(|j| rng.random_range(bounds.lower[j]..=bounds.upper[j]))
                .collect(),
        );
    }
    let opts = LbfgsOptions {
        max_iterations: 100,
        gradient_tolerance: 1e-5,
        function_tolerance: 1e-10,
        ..Default::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in starts {
        let r = lbfgs_minimize(objective, &to_z(&s), &opts);
        if !r.f.is_finite() {
            continue;
        }
        let lml = -r.f;
        if best.as_ref().is_none_or(|(b, _)| lml > *b) {
            best = Some((lml, to_u(&r.x)));
        }
    }
    match best {
        Some((lml, u)) if lml >= init_lml => Ok(HyperFit {
            hyperparameters: GpHyperparameters::from_log(&u),
            log_marginal_likelihood: lml,
            improved: lml > init_lml,
        }),
        _ => {
            log::warn!("hyperparameter search did not improve on the initial values");
            Ok(HyperFit {
                hyperparameters: init.clone(),
                log_marginal_likelihood: init_lml,
                improved: false,
            })
        }
    }
}
