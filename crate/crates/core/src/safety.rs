//! Safety thresholds `delta_{n+1}` from the observed radii.
//!
//! Both regimes reduce to the same scan: the smallest `t` in `{0} ∪ {r_i}`
//! with `#{r_i > t} / n < threshold`, where the threshold is `alpha - C_n`
//! for iid radii and `epsilon - C_alpha / sqrt(n)` when the radii also depend
//! on the covariate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::empirical::kolmogorov::{expected_ks_sup, KOLMOGOROV_MEAN};
use crate::empirical::limit::{c_alpha, CAlpha, LimitProcessModel};
use crate::empirical::CdfModel;
use crate::error::{Error, Result};
use crate::geometry::{Level, SafetyArea, SupportSet};
use crate::scalar::Scalar;

/// How `C_n = E sup_t |F_n(t) - F_0(t)|` is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum CnMethod {
    MonteCarlo { reps: usize },
    /// `sqrt(pi/2) ln 2 / sqrt(n)`.
    Asymptotic,
    /// `sqrt(ln(2/beta) / (2n))`.
    DkwBound { beta: f64 },
}

impl Default for CnMethod {
    fn default() -> Self {
        CnMethod::MonteCarlo { reps: 2000 }
    }
}

impl CnMethod {
    pub fn validate(&self) -> Result<()> {
        match self {
            CnMethod::MonteCarlo { reps: 0 } => Err(Error::invalid("Monte Carlo C_n needs reps >= 1")),
            CnMethod::DkwBound { beta } if !(*beta > 0.0 && *beta < 1.0) => Err(Error::invalid("DKW beta must lie in (0, 1)")),
            _ => Ok(()),
        }
    }

    /// Smallest `n` at which `alpha` exceeds the constant. Monte Carlo uses the
    /// asymptotic value, which `sqrt(n) C_n` approaches from below.
    pub fn min_n(&self, alpha: f64) -> u64 {
        let smallest = |bound: f64| -> u64 {
            // Smallest n with bound(n) < alpha where bound = c / sqrt(n).
            let mut n = ((bound / alpha).powi(2).floor() as u64).max(1);
            while bound / (n as f64).sqrt() >= alpha {
                n += 1;
            }
            n
        };
        match self {
            CnMethod::MonteCarlo { .. } | CnMethod::Asymptotic => smallest(KOLMOGOROV_MEAN),
            CnMethod::DkwBound { beta } => smallest(((2.0 / beta).ln() / 2.0).sqrt()),
        }
    }
}

/// A critical constant with its Monte Carlo standard error (0 for closed forms).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub name: ConstantName,
    pub value: f64,
    pub se: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantName {
    #[serde(rename = "c_n")]
    Cn,
    CAlpha,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidEstimatorConfig {
    pub alpha: f64,
    /// Reference law for Monte Carlo `C_n`; any continuous law gives the same answer.
    pub f0: CdfModel,
    pub cn_method: CnMethod,
}

impl IidEstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        check_probability("alpha", self.alpha)?;
        self.f0.validate()?;
        self.cn_method.validate()
    }
}

#[derive(Clone, Debug)]
pub struct DependentEstimatorConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub limit_model: LimitProcessModel,
    pub paths: usize,
}

impl DependentEstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        check_probability("alpha", self.alpha)?;
        check_probability("epsilon", self.epsilon)?;
        if self.paths == 0 {
            return Err(Error::invalid("paths must be at least 1"));
        }
        Ok(())
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in (0, 1), got {p}")))
    }
}

/// Outcome of a threshold computation. `delta` is `None` when infeasible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaResult<T> {
    pub delta: Option<T>,
    pub threshold_used: f64,
    pub count_above: usize,
    pub n: usize,
    pub feasible: bool,
    pub constant: ConstantEstimate,
    /// Smallest sample size at which the threshold turns positive.
    pub min_n: Option<u64>,
}

impl<T: Scalar> DeltaResult<T> {
    /// The threshold, or [`Error::NoFeasibleDelta`].
    pub fn into_feasible(self) -> Result<Self> {
        if self.feasible {
            Ok(self)
        } else {
            Err(Error::NoFeasibleDelta { threshold: self.threshold_used, min_n: self.min_n.unwrap_or(0) })
        }
    }
}

/// Smallest `t` in `{0} ∪ radii` with `#{r_i > t} / n < threshold`, and that count.
///
/// Requires `0 < threshold`; `radii` must be nonempty and nonnegative.
pub fn order_statistic_delta<T: Scalar>(radii: &[T], threshold: f64) -> Result<(T, usize)> {
    check_radii(radii)?;
    if !(threshold > 0.0) {
        return Err(Error::invalid("threshold must be positive"));
    }
    let n = radii.len();
    let admissible = |c: usize| (c as f64) / (n as f64) < threshold;
    // Largest admissible count of radii strictly above delta.
    let mut c_max = ((n as f64 * threshold).ceil() as usize).saturating_sub(1).min(n);
    while c_max < n && admissible(c_max + 1) {
        c_max += 1;
    }
    while c_max > 0 && !admissible(c_max) {
        c_max -= 1;
    }
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    let count = |t: &T| sorted.iter().filter(|r| *r > t).count();
    let zero = T::zero();
    if admissible(count(&zero)) {
        return Ok((zero.clone(), count(&zero)));
    }
    let delta = sorted[n - 1 - c_max].clone();
    Ok((delta.clone(), count(&delta)))
}

fn check_radii<T: Scalar>(radii: &[T]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::invalid("radii must be nonempty"));
    }
    if radii.iter().any(|r| !r.is_finite_value() || *r < T::zero()) {
        return Err(Error::invalid("radii must be finite and nonnegative"));
    }
    Ok(())
}

/// `C_n` for sample size `n`.
pub fn compute_cn<R: Rng + ?Sized>(n: usize, cfg: &IidEstimatorConfig, rng: &mut R) -> Result<ConstantEstimate> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let (value, se) = match cfg.cn_method {
        CnMethod::MonteCarlo { reps } => {
            let est = expected_ks_sup(n, &cfg.f0, reps, rng)?;
            (est.mean, est.se)
        }
        CnMethod::Asymptotic => (KOLMOGOROV_MEAN / (n as f64).sqrt(), 0.0),
        CnMethod::DkwBound { beta } => (((2.0 / beta).ln() / (2.0 * n as f64)).sqrt(), 0.0),
    };
    Ok(ConstantEstimate { name: ConstantName::Cn, value, se })
}

/// Iid-regime threshold with a precomputed `C_n`; infeasibility is reported in the result.
pub fn estimate_iid_with<T: Scalar>(radii: &[T], alpha: f64, cn: ConstantEstimate, method: &CnMethod) -> Result<DeltaResult<T>> {
    check_probability("alpha", alpha)?;
    check_radii(radii)?;
    let threshold = alpha - cn.value;
    scan(radii, threshold, cn, || method.min_n(alpha))
}

/// Dependent-regime threshold with a precomputed `C_alpha`.
pub fn estimate_dependent_with<T: Scalar>(radii: &[T], epsilon: f64, c: CAlpha) -> Result<DeltaResult<T>> {
    check_probability("epsilon", epsilon)?;
    check_radii(radii)?;
    let n = radii.len();
    let threshold = epsilon - c.value / (n as f64).sqrt();
    let constant = ConstantEstimate { name: ConstantName::CAlpha, value: c.value, se: c.se };
    scan(radii, threshold, constant, || {
        // Smallest n with C_alpha / sqrt(n) < epsilon.
        let mut m = ((c.value / epsilon).powi(2).ceil() as u64).max(1);
        while m > 1 && c.value / ((m - 1) as f64).sqrt() < epsilon {
            m -= 1;
        }
        while c.value / (m as f64).sqrt() >= epsilon {
            m += 1;
        }
        m
    })
}

fn scan<T: Scalar>(radii: &[T], threshold: f64, constant: ConstantEstimate, min_n: impl Fn() -> u64) -> Result<DeltaResult<T>> {
    let n = radii.len();
    if !(threshold > 0.0) {
        return Ok(DeltaResult {
            delta: None,
            threshold_used: threshold,
            count_above: 0,
            n,
            feasible: false,
            constant,
            min_n: Some(min_n()),
        });
    }
    let (delta, count_above) = order_statistic_delta(radii, threshold)?;
    Ok(DeltaResult { delta: Some(delta), threshold_used: threshold, count_above, n, feasible: true, constant, min_n: None })
}

/// Threshold for iid radii; `alpha <= C_n` gives [`Error::NoFeasibleDelta`].
pub fn delta_iid<T: Scalar, R: Rng + ?Sized>(radii: &[T], cfg: &IidEstimatorConfig, rng: &mut R) -> Result<DeltaResult<T>> {
    let cn = compute_cn(radii.len().max(1), cfg, rng)?;
    estimate_iid_with(radii, cfg.alpha, cn, &cfg.cn_method)?.into_feasible()
}

/// Threshold for covariate-driven radii; `epsilon <= C_alpha / sqrt(n)` gives [`Error::NoFeasibleDelta`].
pub fn delta_dependent<T: Scalar, R: Rng + ?Sized>(radii: &[T], cfg: &DependentEstimatorConfig, rng: &mut R) -> Result<DeltaResult<T>> {
    cfg.validate()?;
    let c = c_alpha(&cfg.limit_model, cfg.alpha, cfg.paths, rng)?;
    estimate_dependent_with(radii, cfg.epsilon, c)?.into_feasible()
}

pub fn make_safety_area<T: Scalar>(base: SupportSet<T>, d: &DeltaResult<T>, level: Level) -> Result<SafetyArea<T>> {
    match (&d.delta, d.feasible) {
        (Some(delta), true) => SafetyArea::new(base, delta.clone(), level),
        _ => Err(Error::NoFeasibleDelta { threshold: d.threshold_used, min_n: d.min_n.unwrap_or(0) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{breach, dilate, Site};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn cn(value: f64) -> ConstantEstimate {
        ConstantEstimate { name: ConstantName::Cn, value, se: 0.0 }
    }

    fn brute_force(radii: &[f64], threshold: f64) -> f64 {
        let n = radii.len() as f64;
        std::iter::once(0.0)
            .chain(radii.iter().copied())
            .filter(|t| (radii.iter().filter(|r| *r > t).count() as f64) / n < threshold)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn nine_radii_example() {
        let radii: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let d = estimate_iid_with(&radii, 0.35, cn(0.2), &CnMethod::Asymptotic).unwrap();
        assert!((d.threshold_used - 0.15).abs() < 1e-12);
        assert_eq!(d.delta, Some(0.8));
        assert_eq!(d.count_above, 1);
    }

    #[test]
    fn four_radii_example() {
        assert_eq!(order_statistic_delta(&[4.0, 2.0, 3.0, 1.0], 0.5).unwrap(), (3.0, 1));
    }

    #[test]
    fn ties_are_counted() {
        assert_eq!(order_statistic_delta(&[1.0, 2.0, 2.0, 2.0], 0.5).unwrap(), (2.0, 0));
        assert_eq!(order_statistic_delta(&[0.0, 0.0, 1.0], 0.5).unwrap(), (0.0, 1));
    }

    #[test]
    fn exact_scalars_scan() {
        use crate::scalar::exact;
        let radii: Vec<_> = [0.3, 0.1, 0.2].iter().map(|&x| exact(x)).collect();
        assert_eq!(order_statistic_delta(&radii, 0.5).unwrap().0, exact(0.2));
    }

    #[test]
    fn small_n_is_infeasible() {
        let cfg = IidEstimatorConfig { alpha: 0.01, f0: CdfModel::standard_uniform(), cn_method: CnMethod::MonteCarlo { reps: 4000 } };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let radii = [0.1, 0.2, 0.3, 0.4, 0.5];
        let c = compute_cn(5, &cfg, &mut rng).unwrap();
        assert!(c.value > 0.3);
        match delta_iid(&radii, &cfg, &mut rng) {
            Err(Error::NoFeasibleDelta { min_n, .. }) => assert_eq!(min_n, 7547),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dependent_examples() {
        let c = CAlpha { value: 1.358, se: 0.0, paths: 1 };
        let d = estimate_dependent_with(&vec![1.0; 100], 0.1, c).unwrap();
        assert!(!d.feasible);
        assert!((d.threshold_used + 0.0358).abs() < 1e-9);
        assert_eq!(d.min_n, Some(185));

        let radii: Vec<f64> = (1..=400).map(|i| i as f64).collect();
        let d = estimate_dependent_with(&radii, 0.1, c).unwrap();
        assert!((d.threshold_used - 0.0321).abs() < 1e-9);
        assert_eq!(d.delta, Some(388.0));
        assert_eq!(d.count_above, 12);
    }

    #[test]
    fn tolerant_epsilon_gives_a_low_order_statistic() {
        let radii: Vec<f64> = (1..=400).map(|i| i as f64).collect();
        let c = CAlpha { value: 1.358, se: 0.0, paths: 1 };
        let d = estimate_dependent_with(&radii, 0.999, c).unwrap();
        // threshold = 0.999 - 0.0679 admits up to 372 radii above delta.
        assert_eq!(d.count_above, 372);
        assert_eq!(d.delta, Some(28.0));
    }

    #[test]
    fn min_n_for_closed_forms() {
        // 0.8687 / sqrt(n) < 0.1 first holds at n = 76.
        assert_eq!(CnMethod::Asymptotic.min_n(0.1), 76);
        // sqrt(ln 40 / (2n)) < 0.1 first holds at n = 185.
        assert_eq!(CnMethod::DkwBound { beta: 0.05 }.min_n(0.1), 185);
    }

    #[test]
    fn safety_area_membership_and_breach() {
        let base = SupportSet::ball(Site::new(vec![0.0, 0.0]).unwrap(), 1.0).unwrap();
        let d = estimate_iid_with(&[0.5, 0.5], 0.9, cn(0.1), &CnMethod::Asymptotic).unwrap();
        assert_eq!(d.delta, Some(0.5));
        let area = make_safety_area(base.clone(), &d, Level::new(0.9, None).unwrap()).unwrap();
        assert!(area.contains(&Site::new(vec![1.6, 0.0]).unwrap()));
        assert!(!area.contains(&Site::new(vec![1.4, 0.0]).unwrap()));
        assert!(!breach(&area, &dilate(&base, 0.4).unwrap()));
        assert!(breach(&area, &dilate(&base, 0.6).unwrap()));
        let infeasible = estimate_iid_with(&[0.5], 0.1, cn(0.2), &CnMethod::Asymptotic).unwrap();
        assert!(make_safety_area(base, &infeasible, Level::new(0.1, None).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn scan_matches_brute_force(radii in prop::collection::vec(0.0f64..10.0, 1..40), threshold in 0.001f64..0.999) {
            let (delta, count) = order_statistic_delta(&radii, threshold).unwrap();
            prop_assert_eq!(delta, brute_force(&radii, threshold));
            prop_assert_eq!(count, radii.iter().filter(|r| **r > delta).count());
        }

        #[test]
        fn delta_is_monotone_in_threshold(radii in prop::collection::vec(0.01f64..10.0, 1..40), a in 0.001f64..0.999, b in 0.001f64..0.999) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(order_statistic_delta(&radii, hi).unwrap().0 <= order_statistic_delta(&radii, lo).unwrap().0);
        }

        #[test]
        fn delta_ignores_the_future(mut radii in prop::collection::vec(0.01f64..10.0, 2..40), future in 0.0f64..100.0, threshold in 0.01f64..0.99) {
            let past = radii[..radii.len() - 1].to_vec();
            let before = order_statistic_delta(&past, threshold).unwrap();
            *radii.last_mut().unwrap() = future;
            prop_assert_eq!(order_statistic_delta(&radii[..radii.len() - 1], threshold).unwrap(), before);
        }
    }
}
