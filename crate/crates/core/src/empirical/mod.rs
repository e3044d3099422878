//! Empirical distribution functions, Kolmogorov-Smirnov statistics and the
//! Gaussian limit of heterogeneous empirical processes.

pub mod cdf;
pub mod ecdf;
pub mod kolmogorov;
pub mod convergence;
pub mod limit;

pub use cdf::CdfModel;
pub use ecdf::{ks_statistic, ks_statistic_with, Ecdf};
pub use kolmogorov::{expected_ks_sup, kolmogorov_cdf, kolmogorov_quantile, McEstimate, KOLMOGOROV_MEAN};
pub use convergence::{averaged_modulus, modulus_of_continuity, uniform_gap, vanishing_sequence, GapBound, ModulusReport, VanishingSequence};
pub use limit::{
    build_limit_model, build_weighted_limit_model, c_alpha, covariance_kernel, findim_gaussian_test, simulate_limit_sup, simulate_limit_sup_with, CAlpha,
    FindimReport, LimitProcessModel, SupMethod,
};
