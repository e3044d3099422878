use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Continuous distribution function on a bounded interval.
///
/// `Beta` is a Beta(p, q) law affinely mapped onto `[lo, hi]`; `TruncExp` is
/// an exponential law with the given rate started at `lo` and truncated at
/// `hi`. Mixture weights are normalized on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CdfModel {
    Uniform { lo: f64, hi: f64 },
    Beta { p: f64, q: f64, lo: f64, hi: f64 },
    TruncExp { rate: f64, lo: f64, hi: f64 },
    Mixture { components: Vec<(f64, CdfModel)> },
}

impl CdfModel {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        CdfModel::Uniform { lo, hi }.validated()
    }

    pub fn standard_uniform() -> Self {
        CdfModel::Uniform { lo: 0.0, hi: 1.0 }
    }

    pub fn beta(p: f64, q: f64) -> Result<Self> {
        CdfModel::Beta { p, q, lo: 0.0, hi: 1.0 }.validated()
    }

    pub fn trunc_exp(rate: f64, cap: f64) -> Result<Self> {
        CdfModel::TruncExp { rate, lo: 0.0, hi: cap }.validated()
    }

    pub fn mixture(components: Vec<(f64, CdfModel)>) -> Result<Self> {
        let total: f64 = components.iter().map(|(w, _)| *w).sum();
        if components.is_empty() || !(total > 0.0) {
            return Err(Error::invalid("mixture needs positive total weight"));
        }
        let components = components.into_iter().map(|(w, c)| (w / total, c)).collect();
        CdfModel::Mixture { components }.validated()
    }

    /// Equal-weight mixture.
    pub fn average(components: &[CdfModel]) -> Result<Self> {
        if components.len() == 1 {
            return Ok(components[0].clone());
        }
        Self::mixture(components.iter().map(|c| (1.0, c.clone())).collect())
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let interval = |lo: f64, hi: f64| {
            if lo.is_finite() && hi.is_finite() && lo < hi {
                Ok(())
            } else {
                Err(Error::invalid(format!("support [{lo}, {hi}] must be a finite nonempty interval")))
            }
        };
        match self {
            CdfModel::Uniform { lo, hi } => interval(*lo, *hi),
            CdfModel::Beta { p, q, lo, hi } => {
                if !(*p > 0.0 && *q > 0.0) {
                    return Err(Error::invalid("beta shape parameters must be positive"));
                }
                interval(*lo, *hi)
            }
            CdfModel::TruncExp { rate, lo, hi } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::invalid("exponential rate must be positive"));
                }
                interval(*lo, *hi)
            }
            CdfModel::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::invalid("empty mixture"));
                }
                for (w, c) in components {
                    if !(*w >= 0.0) {
                        return Err(Error::invalid("mixture weights must be nonnegative"));
                    }
                    c.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Smallest closed interval carrying all mass.
    pub fn support(&self) -> (f64, f64) {
        match self {
            CdfModel::Uniform { lo, hi } | CdfModel::Beta { lo, hi, .. } | CdfModel::TruncExp { lo, hi, .. } => (*lo, *hi),
            CdfModel::Mixture { components } => components
                .iter()
                .filter(|(w, _)| *w > 0.0)
                .map(|(_, c)| c.support())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (lo, hi)| (a.min(lo), b.max(hi))),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            CdfModel::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            CdfModel::Beta { p, q, lo, hi } => {
                let u = (x - lo) / (hi - lo);
                if u <= 0.0 {
                    0.0
                } else if u >= 1.0 {
                    1.0
                } else {
                    beta_reg(*p, *q, u)
                }
            }
            CdfModel::TruncExp { rate, lo, hi } => {
                if x <= *lo {
                    0.0
                } else if x >= *hi {
                    1.0
                } else {
                    (-rate * (x - lo)).exp_m1() / (-rate * (hi - lo)).exp_m1()
                }
            }
            CdfModel::Mixture { components } => components.iter().map(|(w, c)| w * c.cdf(x)).sum(),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            CdfModel::Uniform { lo, hi } => lo + p * (hi - lo),
            CdfModel::TruncExp { rate, lo, hi } => {
                let total = (-rate * (hi - lo)).exp_m1();
                (lo - (p * total).ln_1p() / rate).clamp(*lo, *hi)
            }
            CdfModel::Beta { .. } | CdfModel::Mixture { .. } => self.bisect_quantile(p),
        }
    }

    fn bisect_quantile(&self, p: f64) -> f64 {
        let (mut a, mut b) = self.support();
        if p <= 0.0 {
            return a;
        }
        if p >= 1.0 {
            return b;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.cdf(m) < p {
                a = m;
            } else {
                b = m;
            }
        }
        b
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CdfModel::Uniform { lo, hi } => lo + rng.random::<f64>() * (hi - lo),
            CdfModel::Beta { p, q, lo, hi } => {
                let b = rand_distr::Beta::new(*p, *q).expect("validated beta");
                lo + b.sample(rng) * (hi - lo)
            }
            CdfModel::TruncExp { .. } => self.quantile(rng.random::<f64>()),
            CdfModel::Mixture { components } => {
                let mut u: f64 = rng.random();
                for (w, c) in components {
                    if u < *w {
                        return c.sample(rng);
                    }
                    u -= w;
                }
                components.last().expect("nonempty").1.sample(rng)
            }
        }
    }

    /// Law of `scale * X + shift` for `scale > 0`.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && shift.is_finite()) {
            return Err(Error::invalid("affine map needs a positive finite scale"));
        }
        let m = |x: f64| scale * x + shift;
        Ok(match self {
            CdfModel::Uniform { lo, hi } => CdfModel::Uniform { lo: m(*lo), hi: m(*hi) },
            CdfModel::Beta { p, q, lo, hi } => CdfModel::Beta { p: *p, q: *q, lo: m(*lo), hi: m(*hi) },
            CdfModel::TruncExp { rate, lo, hi } => CdfModel::TruncExp { rate: rate / scale, lo: m(*lo), hi: m(*hi) },
            CdfModel::Mixture { components } => CdfModel::Mixture {
                components: components
                    .iter()
                    .map(|(w, c)| c.affine(scale, shift).map(|c| (*w, c)))
                    .collect::<Result<_>>()?,
            },
        })
    }
}
