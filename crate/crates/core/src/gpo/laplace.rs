use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::gp::GpModel;
use crate::models::SearchBox;
use crate::optim::{direct_maximize, finite_difference_hessian, DirectBudget};
use crate::{Error, Result};

/// Eigenvalues of the curvature below this fraction of the largest are raised to it.
const EIGEN_FLOOR: f64 = 1e-8;
/// A MAP within this fraction of a box width from a face is flagged.
const BOUNDARY_TOLERANCE: f64 = 1e-3;
/// Coordinate search stops once every step is below this fraction of the width.
const POLISH_RESOLUTION: f64 = 1e-6;

/// Gaussian approximation `N(theta_map, J^-1)` of the posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplacePosterior {
    pub theta_map: Vec<f64>,
    /// Surrogate mean at the MAP.
    pub map_value: f64,
    /// Negative Hessian of the surrogate mean, after repair.
    pub hessian: Vec<Vec<f64>>,
    pub covariance: Vec<Vec<f64>>,
    pub marginal_sd: Vec<f64>,
    pub on_boundary: bool,
    /// True when eigenvalues of the curvature were raised.
    pub repaired: bool,
    pub hessian_steps: Vec<f64>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl LaplacePosterior {
    pub fn dim(&self) -> usize {
        self.theta_map.len()
    }

    /// Normal density of component `i` at `x`.
    pub fn marginal_density(&self, i: usize, x: f64) -> f64 {
        let sd = self.marginal_sd[i];
        let z = (x - self.theta_map[i]) / sd;
        (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// Repairs `j` to positive definite by clamping small eigenvalues.
/// Returns the repaired matrix and whether anything changed.
pub fn repair_curvature(j: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let sym = (j + j.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::IrreparableHessian { matrix: to_rows(j) });
    }
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.max();
    if !(max > 0.0) {
        return Err(Error::IrreparableHessian { matrix: to_rows(j) });
    }
    let floor = EIGEN_FLOOR * max;
    if eig.eigenvalues.iter().all(|l| *l >= floor) {
        return Ok((sym, false));
    }
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let q = &eig.eigenvectors;
    let rebuilt = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    Ok(((&rebuilt + rebuilt.transpose()) * 0.5, true))
}

/// Coordinate search on `f` from `x`, starting at `initial` box fractions.
fn polish<F: Fn(&[f64]) -> f64>(f: F, x: &mut [f64], fx: &mut f64, bbox: &SearchBox, initial: f64) {
    let widths = bbox.widths();
    let mut steps: Vec<f64> = widths.iter().map(|w| initial * w).collect();
    let mut guard = 0;
    while steps.iter().zip(&widths).any(|(s, w)| *s > POLISH_RESOLUTION * w) && guard < 10_000 {
        guard += 1;
        let mut moved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut cand = x.to_vec();
                cand[i] = (cand[i] + dir * steps[i]).clamp(bbox.lower()[i], bbox.upper()[i]);
                let fc = f(&cand);
                if fc > *fx {
                    x.copy_from_slice(&cand);
                    *fx = fc;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            for s in &mut steps {
                *s *= 0.5;
            }
        }
    }
}

/// MAP of the surrogate mean over the box and the Laplace approximation there.
pub fn extract_laplace(model: &GpModel, bbox: &SearchBox, budget: &DirectBudget) -> Result<LaplacePosterior> {
    let mean = |x: &[f64]| model.mean(x);
    let best = direct_maximize(mean, bbox, budget)?;
    let mut x = best.x;
    let mut fx = best.f;
    polish(mean, &mut x, &mut fx, bbox, 1e-2);
    // Keep room for the full-size difference stencil on every side.
    for (i, v) in x.iter_mut().enumerate() {
        let w = bbox.upper()[i] - bbox.lower()[i];
        *v = v.clamp(bbox.lower()[i] + 1e-4 * w, bbox.upper()[i] - 1e-4 * w);
    }
    fx = mean(&x);

    let (h, steps) = finite_difference_hessian(mean, &x, bbox)?;
    let j = -h;
    let (j, repaired) = repair_curvature(&j)?;
    let cov = j
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::IrreparableHessian { matrix: to_rows(&j) })?;
    let cov = (&cov + cov.transpose()) * 0.5;
    let on_boundary = x
        .iter()
        .zip(bbox.lower().iter().zip(bbox.upper()))
        .any(|(v, (lo, hi))| (v - lo).min(hi - v) < BOUNDARY_TOLERANCE * (hi - lo));
    if on_boundary {
        log::warn!("MAP estimate {x:?} lies on the search box boundary");
    }
    Ok(LaplacePosterior {
        marginal_sd: cov.diagonal().iter().map(|v| v.sqrt()).collect(),
        theta_map: x,
        map_value: fx,
        hessian: to_rows(&j),
        covariance: to_rows(&cov),
        on_boundary,
        repaired,
        hessian_steps: steps.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{GpHyperparameters, SurrogateDataset};

    #[test]
    fn repair_raises_flat_directions() {
        let j = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, -1.0]);
        let (r, changed) = repair_curvature(&j).unwrap();
        assert!(changed);
        assert!((r[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((r[(1, 1)] - 4e-8).abs() < 1e-15);
        assert!(repair_curvature(&(-DMatrix::<f64>::identity(2, 2))).is_err());
    }

    #[test]
    fn gaussian_surrogate_recovers_location_and_covariance() {
        // Oracle: a noiselessly sampled quadratic log-density with known
        // location and precision.
        let a = [0.3, 0.6];
        let prec = [[40.0, 10.0], [10.0, 25.0]];
        let f = |x: &[f64]| {
            let d = [x[0] - a[0], x[1] - a[1]];
            -0.5 * (prec[0][0] * d[0] * d[0] + 2.0 * prec[0][1] * d[0] * d[1] + prec[1][1] * d[1] * d[1])
        };
        let mut pts = Vec::new();
        for i in 0..9 {
            for j in 0..9 {
                pts.push(vec![i as f64 / 8.0, j as f64 / 8.0]);
            }
        }
        let vals = pts.iter().map(|p| f(p)).collect();
        let ds = SurrogateDataset::from_parts(pts, vals).unwrap();
        let model = GpModel::fit(
            &ds,
            GpHyperparameters {
                bias_variance: 10.0,
                matern_variance: 10.0,
                length_scales: vec![1.0, 1.0],
                noise_variance: 1e-10,
            },
        )
        .unwrap();
        let lp = extract_laplace(&model, &SearchBox::unit(2), &DirectBudget::default()).unwrap();
        assert!((lp.theta_map[0] - 0.3).abs() < 1e-2 && (lp.theta_map[1] - 0.6).abs() < 1e-2, "{:?}", lp.theta_map);
        let det = prec[0][0] * prec[1][1] - prec[0][1] * prec[0][1];
        let cov = [[prec[1][1] / det, -prec[0][1] / det], [-prec[0][1] / det, prec[0][0] / det]];
        for i in 0..2 {
            for j in 0..2 {
                let rel = (lp.covariance[i][j] - cov[i][j]).abs() / cov[i][i].abs();
                assert!(rel < 0.05, "{i}{j}: {} vs {}", lp.covariance[i][j], cov[i][j]);
            }
        }
        assert!(!lp.on_boundary);
    }

    #[test]
    fn symmetric_one_dimensional_surrogate() {
        let pts: Vec<Vec<f64>> = (0..11).map(|i| vec![i as f64 / 10.0]).collect();
        let vals = pts.iter().map(|p| -(p[0] - 0.5).powi(2) * 10.0).collect();
        let ds = SurrogateDataset::from_parts(pts, vals).unwrap();
        let model = GpModel::fit(
            &ds,
            GpHyperparameters {
                bias_variance: 1.0,
                matern_variance: 1.0,
                length_scales: vec![0.5],
                noise_variance: 1e-8,
            },
        )
        .unwrap();
        let lp = extract_laplace(&model, &SearchBox::unit(1), &DirectBudget::default()).unwrap();
        assert!((lp.theta_map[0] - 0.5).abs() < 1e-3);
        assert!((lp.marginal_sd[0] - lp.covariance[0][0].sqrt()).abs() < 1e-15);
    }
}
