//! The Kolmogorov distribution and Monte Carlo estimates of the expected
//! Kolmogorov–Smirnov supremum.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cdf::CdfModel;
use super::ecdf::ks_sorted;
use crate::error::{Error, Result};
use crate::rng::{fork_seed, substream};

const TERM_TOL: f64 = 1e-16;
// Below this the alternating series is ill-conditioned; the theta-function form converges instead.
const SERIES_CUTOVER: f64 = 1.0;

/// `P(sup |b(t)| <= x)` for a Brownian bridge `b`.
pub fn kolmogorov_cdf(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::invalid("kolmogorov_cdf needs x >= 0"));
    }
    Ok(kolmogorov_cdf_unchecked(x))
}

pub(crate) fn kolmogorov_cdf_unchecked(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < SERIES_CUTOVER {
        let c = -PI * PI / (8.0 * x * x);
        let mut sum = 0.0;
        for k in 1.. {
            let j = (2 * k - 1) as f64;
            let term = (c * j * j).exp();
            sum += term;
            if term < TERM_TOL {
                break;
            }
        }
        ((2.0 * PI).sqrt() / x * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1.. {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < TERM_TOL {
                break;
            }
        }
        (1.0 - 2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Inverse of [`kolmogorov_cdf`] by bisection.
pub fn kolmogorov_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("kolmogorov_quantile needs p in (0, 1)"));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while kolmogorov_cdf_unchecked(hi) < p {
        hi *= 2.0;
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf_unchecked(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub reps: usize,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        McEstimate { mean, se: (var / n).sqrt(), reps: xs.len() }
    }
}

/// One KS supremum from `n` iid draws of `f0`.
pub fn ks_sup_draw<R: Rng + ?Sized>(n: usize, f0: &CdfModel, rng: &mut R) -> f64 {
    let mut xs: Vec<f64> = (0..n).map(|_| f0.sample(rng)).collect();
    xs.sort_unstable_by(f64::total_cmp);
    ks_sorted(&xs, |x| f0.cdf(x))
}

/// `E sup_t |F_n(t) - F0(t)|` by Monte Carlo over `reps` replications.
pub fn expected_ks_sup<R: Rng + ?Sized>(n: usize, f0: &CdfModel, reps: usize, rng: &mut R) -> Result<McEstimate> {
    if n == 0 || reps == 0 {
        return Err(Error::invalid("expected_ks_sup needs n >= 1 and reps >= 1"));
    }
    let seed = fork_seed(rng);
    let sups: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| ks_sup_draw(n, f0, &mut substream(seed, rep)))
        .collect();
    Ok(McEstimate::from_samples(&sups))
}

/// `sqrt(pi/2) ln 2`, the mean of the Kolmogorov law.
pub const KOLMOGOROV_MEAN: f64 = 0.868_731_160_636_159_3;
