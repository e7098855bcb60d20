//! Symmetric alpha-stable variates by the two-draw transformation
//! (an exponential and a uniform angle).

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::Exp1;

use crate::{Error, Result};

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha == 1.0 {
        return Err(Error::Unsupported(
            "alpha = 1 (Cauchy branch) is not supported by the stable sampler".into(),
        ));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("stability alpha = {alpha} outside (0, 2]")));
    }
    Ok(())
}

/// Draw from the zero-mean symmetric stable law `A(alpha, gamma)`.
///
/// `alpha = 2` gives `N(0, 2 gamma^2)`.
pub fn stable_sample<R: Rng + ?Sized>(alpha: f64, gamma: f64, rng: &mut R) -> Result<f64> {
    check_alpha(alpha)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("stable scale gamma = {gamma} must be positive")));
    }
    Ok(stable_sample_unchecked(alpha, gamma, rng))
}

/// As [`stable_sample`] without argument checks; for inner loops.
#[inline]
pub fn stable_sample_unchecked<R: Rng + ?Sized>(alpha: f64, gamma: f64, rng: &mut R) -> f64 {
    let w: f64 = rng.sample(Exp1);
    let v = std::f64::consts::PI * (rng.random::<f64>() - 0.5);
    let head = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let tail = (((alpha - 1.0) * v).cos() / w).powf((1.0 - alpha) / alpha);
    let y = gamma * head * tail;
    if y.is_finite() {
        y
    } else {
        // v at exactly -pi/2 (probability 2^-53): fall back to the angle's
        // nearest interior value.
        let v = -FRAC_PI_2 + f64::EPSILON;
        gamma * (alpha * v).sin() / v.cos().powf(1.0 / alpha)
            * (((alpha - 1.0) * v).cos() / w).powf((1.0 - alpha) / alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn draws(alpha: f64, gamma: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed);
        (0..n).map(|_| stable_sample(alpha, gamma, &mut rng).unwrap()).collect()
    }

    #[test]
    fn alpha_two_is_gaussian_with_variance_two_gamma_sq() {
        let n = 1_000_000;
        let y = draws(2.0, 1.0, n, 1);
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let skew = y.iter().map(|v| ((v - mean) / var.sqrt()).powi(3)).sum::<f64>() / n as f64;
        assert!((var / 2.0 - 1.0).abs() < 0.02, "variance {var}");
        assert!(skew.abs() < 0.01, "skewness {skew}");
    }

    #[test]
    fn alpha_two_ks_against_normal() {
        let n = 1_000_000;
        let mut y = draws(2.0, 0.7, n, 2);
        y.sort_by(f64::total_cmp);
        let normal = Normal::new(0.0, 2f64.sqrt() * 0.7).unwrap();
        let d = y
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let f = normal.cdf(*v);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.01, "KS {d}");
    }

    #[test]
    fn symmetric_about_zero() {
        let n = 1_000_000;
        let y = draws(1.5, 1.0, n, 3);
        let below = y.iter().filter(|v| **v <= 0.0).count() as f64 / n as f64;
        assert!((below - 0.5).abs() < 0.005, "{below}");
    }

    #[test]
    fn rejects_cauchy_and_out_of_range() {
        let mut rng = RngStream::new(0);
        assert!(matches!(stable_sample(1.0, 1.0, &mut rng), Err(Error::Unsupported(_))));
        assert!(matches!(stable_sample(2.5, 1.0, &mut rng), Err(Error::Domain(_))));
        assert!(matches!(stable_sample(0.0, 1.0, &mut rng), Err(Error::Domain(_))));
        assert!(matches!(stable_sample(1.5, 0.0, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn heavier_tails_for_smaller_alpha() {
        let n = 200_000;
        let tail = |alpha| draws(alpha, 1.0, n, 4).iter().filter(|v| v.abs() > 5.0).count();
        assert!(tail(1.3) > tail(1.8));
    }
}
