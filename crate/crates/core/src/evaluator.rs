//! The log-posterior oracle shared by GPO, PMH and SPSA.

use crate::{Result, RngStream};

/// Something that returns a (possibly noisy) log-posterior value at a point.
///
/// `-inf` is a legal return value (zero prior mass or a degenerate filter).
pub trait Evaluator: Sync {
    fn log_posterior(&self, theta: &[f64], stream: &mut RngStream) -> Result<f64>;
}

impl<F> Evaluator for F
where
    F: Fn(&[f64], &mut RngStream) -> f64 + Sync,
{
    fn log_posterior(&self, theta: &[f64], stream: &mut RngStream) -> Result<f64> {
        Ok(self(theta, stream))
    }
}
