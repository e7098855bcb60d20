//! Two-stage copula Value-at-Risk: volatility-filtered residuals per asset,
//! empirical probability transform, Student-t copula fitted by Kendall's tau
//! and maximum-likelihood degrees of freedom, Monte Carlo VaR and
//! back-testing.

mod kendall;
mod pipeline;
mod residuals;
mod tcopula;
mod var;

pub use kendall::{kendall_tau, kendall_tau_to_correlation, repair_correlation, tau_to_rho};
pub use pipeline::{
    fit_copula, fit_margin, run_var_pipeline, MarginFit, MarginSettings, PipelineConfig, PipelineResult, VarRecord,
    VolatilityTiming,
};
pub use residuals::{average_ranks, filtered_residuals, probability_transform, EmpiricalCdf};
pub use tcopula::{fit_t_copula_dof, simulate_t_copula, t_copula_log_likelihood, DofFit};
pub use var::{backtest, var_estimate, Backtest, CopulaModel, ResidualSimulation};
