//! Likelihood-free posterior approximation for state-space models.
//!
//! Noisy log-posterior estimates from (ABC) bootstrap particle filters are fed
//! into a Gaussian-process surrogate. Expected-improvement acquisition chooses
//! where to evaluate next, and a Laplace approximation is read off the
//! surrogate mean at the end. Particle Metropolis-Hastings and SPSA drivers
//! share the same estimators, and a Student-t copula stage turns fitted
//! stochastic-volatility margins into portfolio Value-at-Risk.

pub mod baselines;
pub mod copula;
pub mod error;
pub mod evaluator;
pub mod gp;
pub mod gpo;
pub mod models;
pub mod optim;
pub mod rng;
mod serde_ext;
pub mod smc;

pub use error::{Error, Result};
pub use evaluator::Evaluator;
pub use rng::RngStream;
