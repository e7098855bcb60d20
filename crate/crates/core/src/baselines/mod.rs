//! Particle Metropolis-Hastings and SPSA drivers over the same log-posterior
//! estimators used by GPO.

mod pmh;
mod spsa;

pub use pmh::{pmh_run, PmhConfig, PmhResult, PmhRow};
pub use spsa::{spsa_run, CoordinateMap, SpsaConfig, SpsaResult, SpsaRow};
