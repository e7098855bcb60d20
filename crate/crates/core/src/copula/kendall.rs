use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Smallest eigenvalue kept when repairing a correlation matrix.
const MIN_EIGENVALUE: f64 = 1e-8;

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Number of tied pairs in a sorted slice.
fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += pairs(run);
            run = 1;
        }
    }
    total + pairs(run)
}

/// Merge sort counting inversions.
fn sort_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count(&mut v[..mid], buf) + sort_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Tie-adjusted Kendall tau-b in `O(n log n)`. `None` when either series is
/// constant.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();

    let n0 = pairs(n as u64);
    let n1 = tied_pairs(&xs);
    // Pairs tied in both coordinates.
    let mut n3 = 0;
    let mut run = 1u64;
    for k in 1..n {
        if xs[k] == xs[k - 1] && ys[k] == ys[k - 1] {
            run += 1;
        } else {
            n3 += pairs(run);
            run = 1;
        }
    }
    n3 += pairs(run);

    let mut buf = Vec::with_capacity(n);
    let swaps = sort_count(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);
    if n1 == n0 || n2 == n0 {
        return None;
    }
    let num = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let den = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Some(num / den)
}

/// `sin(pi tau / 2)`, exact for elliptical copulas.
pub fn tau_to_rho(tau: f64) -> f64 {
    (std::f64::consts::FRAC_PI_2 * tau).sin()
}

/// Nearest positive-definite correlation matrix by eigenvalue clamping and
/// rescaling to a unit diagonal. Returns whether a repair was needed.
pub fn repair_correlation(r: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(r.clone());
    if eig.eigenvalues.iter().all(|l| *l >= MIN_EIGENVALUE) {
        return (r.clone(), false);
    }
    let clamped = eig.eigenvalues.map(|l| l.max(MIN_EIGENVALUE));
    let q = &eig.eigenvectors;
    let m = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    let d: Vec<f64> = m.diagonal().iter().map(|v| v.sqrt()).collect();
    let out = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if i == j { 1.0 } else { m[(i, j)] / (d[i] * d[j]) });
    (out, true)
}

/// Correlation matrix from pairwise Kendall tau of the columns of `u`.
pub fn kendall_tau_to_correlation(columns: &[Vec<f64>], names: &[String]) -> Result<(DMatrix<f64>, bool)> {
    let d = columns.len();
    if d < 2 {
        return Err(Error::Contract("need at least two assets".into()));
    }
    let t = columns[0].len();
    if t < 2 || columns.iter().any(|c| c.len() != t) {
        return Err(Error::Contract("columns must share a length of at least 2".into()));
    }
    for (j, c) in columns.iter().enumerate() {
        if c.iter().all(|v| *v == c[0]) {
            return Err(Error::ConstantColumn {
                asset: names.get(j).cloned().unwrap_or_else(|| format!("column {j}")),
            });
        }
    }
    let mut r = DMatrix::identity(d, d);
    for i in 0..d {
        for j in i + 1..d {
            let tau = kendall_tau(&columns[i], &columns[j]).expect("columns checked non-constant");
            let rho = tau_to_rho(tau);
            r[(i, j)] = rho;
            r[(j, i)] = rho;
        }
    }
    Ok(repair_correlation(&r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;
    use proptest::prelude::*;
    use rand::Rng;

    fn naive_tau(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut c, mut d, mut tx, mut ty) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            for j in i + 1..n {
                let a = (x[i] - x[j]).signum() * if x[i] == x[j] { 0.0 } else { 1.0 };
                let b = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
                if a == 0.0 && b == 0.0 {
                    continue;
                }
                if a == 0.0 {
                    tx += 1.0;
                } else if b == 0.0 {
                    ty += 1.0;
                } else if a * b > 0.0 {
                    c += 1.0;
                } else {
                    d += 1.0;
                }
            }
        }
        (c - d) / ((c + d + tx) * (c + d + ty)).sqrt()
    }

    proptest! {
        #[test]
        fn matches_quadratic_definition(
            x in prop::collection::vec(0i32..6, 2..60),
            seed in any::<u64>(),
        ) {
            let mut rng = RngStream::new(seed);
            let y: Vec<f64> = x.iter().map(|_| rng.random_range(0..5) as f64).collect();
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            match kendall_tau(&x, &y) {
                Some(t) => prop_assert!((t - naive_tau(&x, &y)).abs() < 1e-12),
                None => prop_assert!(x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0])),
            }
        }
    }

    #[test]
    fn map_at_analytic_points() {
        assert_eq!(tau_to_rho(0.0), 0.0);
        assert!((tau_to_rho(1.0) - 1.0).abs() < 1e-12);
        assert!((tau_to_rho(0.5) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(tau_to_rho(-0.3), -tau_to_rho(0.3));
    }

    #[test]
    fn comonotone_columns() {
        let a: Vec<f64> = (0..20).map(|i| i as f64 / 21.0).collect();
        let (r, _) = kendall_tau_to_correlation(&[a.clone(), a], &["a".into(), "b".into()]).unwrap();
        assert!((r[(0, 1)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn independent_columns_near_zero() {
        let mut rng = RngStream::new(5);
        let t = 4000;
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..t).map(|_| rng.random::<f64>()).collect()).collect();
        let (r, _) = kendall_tau_to_correlation(&cols, &[]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(r[(i, j)].abs() < 3.0 / (t as f64).sqrt());
                }
            }
        }
    }

    #[test]
    fn constant_column_names_asset() {
        let err = kendall_tau_to_correlation(&[vec![0.1, 0.2, 0.3], vec![0.5; 3]], &["wti".into(), "brent".into()])
            .unwrap_err();
        assert!(matches!(err, Error::ConstantColumn { ref asset } if asset == "brent"));
    }

    #[test]
    fn repair_produces_positive_definite_unit_diagonal() {
        let r = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let (fixed, changed) = repair_correlation(&r);
        assert!(changed);
        assert!(fixed.clone().cholesky().is_some());
        assert!(fixed.diagonal().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}
