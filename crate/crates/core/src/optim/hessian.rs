use nalgebra::DMatrix;

use crate::models::SearchBox;
use crate::{Error, Result};

/// Step sizes used by [`finite_difference_hessian`].
#[derive(Clone, Debug, PartialEq)]
pub struct HessianSteps(pub Vec<f64>);

/// Central finite-difference Hessian of `f` at `x`.
///
/// The step in dimension `d` is `1e-4` of the box width, shrunk to half the
/// distance to the nearest face when that is closer. A point on a face has no
/// admissible step and is a domain error.
pub fn finite_difference_hessian<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &[f64],
    bbox: &SearchBox,
) -> Result<(DMatrix<f64>, HessianSteps)> {
    let d = x.len();
    if d != bbox.dim() {
        return Err(Error::Contract(format!("point has {d} coordinates, box has {}", bbox.dim())));
    }
    let mut h = vec![0.0; d];
    for i in 0..d {
        let step = 1e-4 * (bbox.upper()[i] - bbox.lower()[i]);
        let room = (x[i] - bbox.lower()[i]).min(bbox.upper()[i] - x[i]);
        h[i] = if room >= step { step } else { 0.5 * room };
        if !(h[i] > 0.0) {
            return Err(Error::Domain(format!(
                "no room for a finite-difference step in dimension {i} at {}",
                x[i]
            )));
        }
    }
    let mut at = |offsets: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, s) in offsets {
            p[i] += s;
        }
        f(&p)
    };
    let f0 = at(&[]);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let fp = at(&[(i, h[i])]);
        let fm = at(&[(i, -h[i])]);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let pp = at(&[(i, h[i]), (j, h[j])]);
            let pm = at(&[(i, h[i]), (j, -h[j])]);
            let mp = at(&[(i, -h[i]), (j, h[j])]);
            let mm = at(&[(i, -h[i]), (j, -h[j])]);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((hess, HessianSteps(h)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_quadratics() {
        let bbox = SearchBox::from_pairs(&[(-1.0, 1.0), (0.0, 2.0), (-5.0, 5.0)]).unwrap();
        let a = [[2.0, 0.5, -0.3], [0.5, 1.0, 0.2], [-0.3, 0.2, 4.0]];
        let f = |x: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += 0.5 * a[i][j] * x[i] * x[j];
                }
            }
            s + x[0] - 2.0 * x[2]
        };
        let (h, _) = finite_difference_hessian(f, &[0.1, 0.7, 1.0], &bbox).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((h[(i, j)] - a[i][j]).abs() < 1e-5, "{i},{j}: {}", h[(i, j)]);
            }
        }
    }

    #[test]
    fn shrinks_near_the_boundary() {
        let bbox = SearchBox::from_pairs(&[(0.0, 1.0)]).unwrap();
        let (h, steps) = finite_difference_hessian(|x| x[0].powi(3), &[1e-6], &bbox).unwrap();
        assert_eq!(steps.0[0], 5e-7);
        assert!((h[(0, 0)] - 6e-6).abs() < 1e-6);
        assert!(finite_difference_hessian(|x| x[0], &[1.0], &bbox).is_err());
    }

    #[test]
    fn diagonal_and_constant() {
        let bbox = SearchBox::from_pairs(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let (h, _) = finite_difference_hessian(|x| -(x[0] * x[0] + 2.5 * x[1] * x[1]), &[0.2, -0.1], &bbox).unwrap();
        assert!((h[(0, 0)] + 2.0).abs() < 1e-6 && (h[(1, 1)] + 5.0).abs() < 1e-6);
        assert!(h[(0, 1)].abs() < 1e-6);
        assert_eq!(h, h.transpose());
        let (z, _) = finite_difference_hessian(|_| 4.0, &[0.2, -0.1], &bbox).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }
}
