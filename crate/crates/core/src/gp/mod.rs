//! Gaussian-process regression over log-posterior estimates: bias plus
//! Matern 5/2 kernel, predictive posterior, and empirical-Bayes
//! hyperparameter estimation.

mod dataset;
mod hyper;
mod kernel;
mod model;

pub use dataset::SurrogateDataset;
pub use hyper::{estimate_hyperparameters, initial_hyperparameters, HyperBounds, HyperFit};
pub use kernel::{kernel, GpHyperparameters};
pub use model::{gp_log_marginal_likelihood, log_marginal_likelihood_gradient, GpModel, GpPrediction};
