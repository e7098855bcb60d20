use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::optim::golden_section_max;
use crate::{Error, Result, RngStream};

/// Rows simulated per random substream.
const SIM_BLOCK: usize = 4096;
const GRID_POINTS: usize = 24;

fn student(nu: f64) -> Result<StudentsT> {
    StudentsT::new(0.0, 1.0, nu).map_err(|e| Error::Domain(format!("degrees of freedom {nu}: {e}")))
}

fn check_correlation(r: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if !r.is_square() {
        return Err(Error::Contract("correlation matrix must be square".into()));
    }
    r.clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("correlation matrix is not positive definite".into()))
}

/// Log-likelihood of the rows of `u` under the Student-t copula.
pub fn t_copula_log_likelihood(u: &[Vec<f64>], r: &DMatrix<f64>, nu: f64) -> Result<f64> {
    let chol = check_correlation(r)?;
    let d = r.nrows();
    let t = student(nu)?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let c_multi = ln_gamma(0.5 * (nu + d as f64))
        - ln_gamma(0.5 * nu)
        - 0.5 * d as f64 * (nu * std::f64::consts::PI).ln()
        - 0.5 * log_det;
    let c_uni = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for row in u {
        if row.len() != d {
            return Err(Error::Contract(format!("row of length {} for a {d}-dimensional copula", row.len())));
        }
        let q = DVector::from_iterator(d, row.iter().map(|v| t.inverse_cdf(*v)));
        let w = chol.solve(&q);
        let quad = q.dot(&w);
        let joint = c_multi - 0.5 * (nu + d as f64) * (quad / nu).ln_1p();
        let margins: f64 = q.iter().map(|x| c_uni - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()).sum();
        total += joint - margins;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DofFit {
    pub nu: f64,
    pub log_likelihood: f64,
    pub on_boundary: bool,
}

/// Maximum-likelihood degrees of freedom on `[lower, upper]` (the MAP under a
/// uniform prior): log-spaced grid, then golden-section refinement.
pub fn fit_t_copula_dof(u: &[Vec<f64>], r: &DMatrix<f64>, lower: f64, upper: f64) -> Result<DofFit> {
    if !(lower > 0.0 && upper > lower) {
        return Err(Error::Config(format!("invalid degrees-of-freedom range [{lower}, {upper}]")));
    }
    check_correlation(r)?;
    let (la, lb) = (lower.ln(), upper.ln());
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| la + (lb - la) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let mut values = Vec::with_capacity(GRID_POINTS);
    for g in &grid {
        values.push(t_copula_log_likelihood(u, r, g.exp())?);
    }
    let best = (0..GRID_POINTS).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(GRID_POINTS - 1)];
    let (x, f) = golden_section_max(
        |l| t_copula_log_likelihood(u, r, l.exp()).unwrap_or(f64::NEG_INFINITY),
        lo,
        hi,
        1e-5,
    );
    let (x, f) = if f >= values[best] { (x, f) } else { (grid[best], values[best]) };
    let nu = x.exp().clamp(lower, upper);
    Ok(DofFit {
        nu,
        log_likelihood: f,
        on_boundary: (nu / lower).ln() < 1e-3 || (upper / nu).ln() < 1e-3,
    })
}

/// `m` draws from the Student-t copula, one row per draw.
pub fn simulate_t_copula(nu: f64, r: &DMatrix<f64>, m: usize, stream: &RngStream) -> Result<Vec<Vec<f64>>> {
    if !(nu > 0.0) {
        return Err(Error::Domain(format!("degrees of freedom {nu} must be positive")));
    }
    let l = check_correlation(r)?.unpack();
    let d = r.nrows();
    let t = student(nu)?;
    let chi = ChiSquared::new(nu).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rows = vec![Vec::new(); m];
    rows.par_chunks_mut(SIM_BLOCK).enumerate().for_each(|(b, chunk)| {
        let mut rng = stream.fork(b as u64);
        for row in chunk {
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &l * z;
            let w: f64 = chi.sample(&mut rng) / nu;
            let s = w.sqrt();
            *row = x.iter().map(|v| t.cdf(v / s)).collect();
        }
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::kendall_tau;

    #[test]
    fn independence_copula_has_zero_density_at_normal_limit() {
        // With R = I and large nu the t copula tends to the independence copula.
        let u = vec![vec![0.3, 0.8], vec![0.5, 0.1]];
        let v = t_copula_log_likelihood(&u, &DMatrix::identity(2, 2), 1e6).unwrap();
        assert!(v.abs() < 1e-4, "{v}");
    }

    #[test]
    fn bivariate_density_oracle() {
        // Oracle: direct bivariate t density formula at one point.
        let rho: f64 = 0.6;
        let nu = 4.0;
        let r = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let u = [0.2, 0.7];
        let t = StudentsT::new(0.0, 1.0, nu).unwrap();
        let (a, b) = (t.inverse_cdf(u[0]), t.inverse_cdf(u[1]));
        let quad = (a * a - 2.0 * rho * a * b + b * b) / (1.0 - rho * rho);
        let joint = 1.0 / (2.0 * std::f64::consts::PI * (1.0 - rho * rho).sqrt()) * (1.0 + quad / nu).powf(-(nu + 2.0) / 2.0);
        let f1 = |x: f64| {
            use statrs::distribution::Continuous;
            t.pdf(x)
        };
        let expected = (joint / (f1(a) * f1(b))).ln();
        let got = t_copula_log_likelihood(&[u.to_vec()], &r, nu).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn simulation_recovers_kendall_tau() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.7, 1.0]);
        let draws = simulate_t_copula(5.0, &r, 100_000, &RngStream::new(3)).unwrap();
        let a: Vec<f64> = draws.iter().map(|r| r[0]).collect();
        let b: Vec<f64> = draws.iter().map(|r| r[1]).collect();
        let tau = kendall_tau(&a, &b).unwrap();
        let expected = 2.0 / std::f64::consts::PI * 0.7f64.asin();
        assert!((tau - expected).abs() < 0.02, "{tau} vs {expected}");
        assert!(draws.iter().all(|r| r.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn simulation_is_thread_independent() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let run = |n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| simulate_t_copula(6.0, &r, 10_000, &RngStream::new(9)).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn dof_fit_flags_boundary() {
        let r = DMatrix::identity(2, 2);
        let draws = simulate_t_copula(4.0, &DMatrix::identity(2, 2), 500, &RngStream::new(1)).unwrap();
        let fit = fit_t_copula_dof(&draws, &r, 10.0, 20.0).unwrap();
        assert!(fit.on_boundary);
        assert!((fit.nu - 10.0).abs() < 1e-6);
    }
}
