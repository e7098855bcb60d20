use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use super::dataset::SurrogateDataset;
use super::kernel::{matern_log_length_derivative, GpHyperparameters};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const JITTER_DOUBLINGS: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GpPrediction {
    pub mean: f64,
    /// Latent variance, clamped at zero.
    pub variance: f64,
    /// `variance + noise_variance`.
    pub noisy_variance: f64,
}

impl GpPrediction {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// A factorised GP posterior. Immutable once fitted.
#[derive(Clone, Debug)]
pub struct GpModel {
    dataset: SurrogateDataset,
    targets: Vec<f64>,
    hyp: GpHyperparameters,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    jitter: f64,
    log_marginal_likelihood: f64,
}

fn gram(points: &[Vec<f64>], hyp: &GpHyperparameters) -> DMatrix<f64> {
    let k = points.len();
    let mut m = DMatrix::zeros(k, k);
    for j in 0..k {
        for i in j..k {
            let v = hyp.eval(&points[i], &points[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m[(j, j)] += hyp.noise_variance;
    }
    m
}

/// Cholesky of `m`, adding diagonal jitter on failure. Returns the factor and
/// the jitter used.
fn factorise(m: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let k = m.nrows();
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, 0.0));
    }
    let mean_diag = m.diagonal().sum() / k as f64;
    let mut jitter = 1e-10 * mean_diag.abs().max(f64::MIN_POSITIVE);
    for _ in 0..=JITTER_DOUBLINGS {
        let mut mj = m.clone();
        for i in 0..k {
            mj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(mj) {
            log::debug!("Gram matrix factorised with jitter {jitter:e}");
            return Ok((c, jitter));
        }
        jitter *= 2.0;
    }
    Err(Error::Numerical(format!(
        "Gram matrix of size {k} not positive definite after jitter {:e}",
        jitter / 2.0
    )))
}

fn check_points(points: &[Vec<f64>], hyp: &GpHyperparameters) -> Result<()> {
    hyp.validate()?;
    if let Some(p) = points.iter().find(|p| p.len() != hyp.dim()) {
        return Err(Error::Contract(format!(
            "point of dimension {} but {} length scales",
            p.len(),
            hyp.dim()
        )));
    }
    Ok(())
}

impl GpModel {
    pub fn fit(dataset: &SurrogateDataset, hyp: GpHyperparameters) -> Result<Self> {
        check_points(dataset.points(), &hyp)?;
        let targets = if dataset.is_empty() { Vec::new() } else { dataset.targets()? };
        if dataset.is_empty() {
            return Ok(Self {
                dataset: dataset.clone(),
                targets,
                hyp,
                chol: None,
                alpha: DVector::zeros(0),
                jitter: 0.0,
                log_marginal_likelihood: 0.0,
            });
        }
        let (chol, jitter) = factorise(gram(dataset.points(), &hyp))?;
        let y = DVector::from_column_slice(&targets);
        let alpha = chol.solve(&y);
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let k = targets.len() as f64;
        let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * k * LN_2PI;
        Ok(Self {
            dataset: dataset.clone(),
            targets,
            hyp,
            chol: Some(chol),
            alpha,
            jitter,
            log_marginal_likelihood: lml,
        })
    }

    pub fn dataset(&self) -> &SurrogateDataset {
        &self.dataset
    }

    /// Regression targets after floor substitution.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn hyperparameters(&self) -> &GpHyperparameters {
        &self.hyp
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    fn cross(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dataset.len(),
            self.dataset.points().iter().map(|p| self.hyp.eval(x, p)),
        )
    }

    /// Predictive mean alone; no dimension check.
    pub fn mean(&self, x: &[f64]) -> f64 {
        self.dataset
            .points()
            .iter()
            .zip(self.alpha.iter())
            .map(|(p, a)| self.hyp.eval(x, p) * a)
            .sum()
    }

    pub fn predict(&self, x: &[f64]) -> Result<GpPrediction> {
        if x.len() != self.hyp.dim() {
            return Err(Error::Contract(format!(
                "test point of dimension {} for a {}-dimensional model",
                x.len(),
                self.hyp.dim()
            )));
        }
        let prior = self.hyp.prior_variance();
        let Some(chol) = &self.chol else {
            return Ok(GpPrediction {
                mean: 0.0,
                variance: prior,
                noisy_variance: prior + self.hyp.noise_variance,
            });
        };
        let ks = self.cross(x);
        let mean = ks.dot(&self.alpha);
        // v = L^{-1} k*, column-oriented forward substitution.
        let l = chol.l_dirty();
        let n = ks.len();
        let mut v = ks;
        for j in 0..n {
            let vj = v[j] / l[(j, j)];
            v[j] = vj;
            let col = l.column(j);
            for i in j + 1..n {
                v[i] -= col[i] * vj;
            }
        }
        let raw = prior - v.norm_squared();
        if raw < -1e-10 * prior {
            log::warn!("negative predictive variance {raw:e} clamped to zero");
        }
        let variance = raw.max(0.0);
        Ok(GpPrediction {
            mean,
            variance,
            noisy_variance: variance + self.hyp.noise_variance,
        })
    }
}

/// Zero-mean GP log marginal likelihood of the dataset.
pub fn gp_log_marginal_likelihood(dataset: &SurrogateDataset, hyp: &GpHyperparameters) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Contract("marginal likelihood needs at least one point".into()));
    }
    Ok(GpModel::fit(dataset, hyp.clone())?.log_marginal_likelihood())
}

/// Log marginal likelihood and its gradient with respect to the log
/// hyperparameters (ordered as [`GpHyperparameters::to_log`]).
pub fn log_marginal_likelihood_gradient(
    dataset: &SurrogateDataset,
    hyp: &GpHyperparameters,
) -> Result<(f64, Vec<f64>)> {
    let model = GpModel::fit(dataset, hyp.clone())?;
    let chol = model
        .chol
        .as_ref()
        .ok_or_else(|| Error::Contract("marginal likelihood needs at least one point".into()))?;
    let k = dataset.len();
    let p = hyp.dim();
    let kinv = chol.inverse();
    let a = &model.alpha;
    let pts = dataset.points();
    let mut grad = vec![0.0; p + 3];
    let mut q = vec![0.0; p];
    for j in 0..k {
        for i in j..k {
            let w = a[i] * a[j] - kinv[(i, j)];
            // Off-diagonal pairs appear twice in the trace.
            let mult = if i == j { 0.5 } else { 1.0 };
            let mut r2 = 0.0;
            for d in 0..p {
                let t = (pts[i][d] - pts[j][d]) / hyp.length_scales[d];
                q[d] = t * t;
                r2 += q[d];
            }
            let r = r2.sqrt();
            grad[0] += mult * w * hyp.bias_variance;
            grad[1] += mult * w * hyp.matern(r);
            for d in 0..p {
                grad[2 + d] += mult * w * matern_log_length_derivative(hyp, r, q[d]);
            }
            if i == j {
                grad[2 + p] += mult * w * hyp.noise_variance;
            }
        }
    }
    Ok((model.log_marginal_likelihood, grad))
}
