//! Simulation of measure-valued epidemics driven by random ball-supported
//! transition kernels, and estimation of safety areas: regions the infection
//! reaches at the next step only with controlled probability.
//!
//! The geometric and order-statistic layers are generic over [`Scalar`]; the
//! analytic support chain runs in exact rationals ([`Exact`]) and the particle
//! layer in any [`Real`]. Distribution theory (Kolmogorov law, Gaussian limit
//! process) is `f64`.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod empirical;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod harness;
pub mod kernel;
pub mod rng;
pub mod safety;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{exact, Exact, Real, Scalar};

pub use empirical::{CdfModel, Ecdf, LimitProcessModel};
pub use evolution::{EpidemicConfig, EpidemicTrace, ParticleMeasure};
pub use geometry::{breach, diameter, dilate, Level, SafetyArea, Site, SupportSet};
pub use kernel::{CovariateProcess, KernelSpec, NoiseDriver, NoiseFamily, RealizedKernel};
pub use safety::{DeltaResult, IidEstimatorConfig};

pub type Site64 = Site<f64>;
pub type Site32 = Site<f32>;
pub type SupportSet64 = SupportSet<f64>;
pub type SupportSet32 = SupportSet<f32>;
pub type ExactSupport = SupportSet<Exact>;
pub type SafetyArea64 = SafetyArea<f64>;
pub type ExactSafetyArea = SafetyArea<Exact>;
pub type Particles64 = ParticleMeasure<f64>;
pub type Particles32 = ParticleMeasure<f32>;
pub type DeltaResult64 = DeltaResult<f64>;
