//! Fluctuation statistics: limit variances, limit-law sampling, ε-rate fits
//! and distribution tests.

mod clt;
mod rates;
pub mod stats;
mod variance;

pub use clt::{
    clt_self_calibration, clt_test_d3, d4_corrector_clt, d5_expansion_check, ks_normal_test, sample_limit_v,
    v_eps_ensemble, D4CltResult, D4CltRow, D5Row, DistTestResult, VEnsemble,
};
pub use rates::{
    decomposition_scaling, inner_budget, DecompositionRow, DecompositionScaling, rate_experiment, OmegaSample, Potential, PotentialKind, RateConfig, RateFitResult, RateRow,
    simulate_ensemble,
};
pub use stats::{correlation, ks_pvalue, ks_statistic, linear_fit, moments, normal_cdf, LineFit, Moments};
pub use variance::{var_eps, var_limit, wiener_variance_mc};
