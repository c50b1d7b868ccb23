//! Feynman-Kac Monte Carlo engine.

mod checks;
mod estimate;
mod functionals;
mod path;

pub use checks::{malliavin_duality_check, mclt_bound_check, DualityCheck, DualityIntegrand, DualityTerminal, MCLTRow, QvProfile};
pub use estimate::{MCEstimate, Z95};
pub use functionals::{martingale_decomposition, path_seed, u_eps_estimate, v_eps_estimate, PathFunctionals};
pub use path::{max_stable_dt, simulate_path, step_count, BrownianPath};

pub(crate) use functionals::{decomposition_with, u_eps_inner, u_eps_inner_controlled, v_eps_inner_controlled};

#[cfg(test)]
mod tests;
