//! Deterministic optimisers and design utilities: DIRECT, Latin hypercube
//! sampling, finite-difference Hessians, L-BFGS and golden-section search.

mod direct;
mod hessian;
mod lbfgs;
mod lhs;
mod scalar;

pub use direct::{direct_maximize, direct_minimize, DirectBudget, DirectResult};
pub use hessian::{finite_difference_hessian, HessianSteps};
pub use lbfgs::{lbfgs_minimize, LbfgsOptions, LbfgsResult};
pub use lhs::latin_hypercube;
pub use scalar::golden_section_max;
