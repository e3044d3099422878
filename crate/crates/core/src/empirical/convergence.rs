//! Constructive helpers around convergence in probability and uniform
//! convergence of monotone functions.

use serde::{Deserialize, Serialize};

use super::cdf::CdfModel;
use crate::error::{Error, Result};

/// Output of [`vanishing_sequence`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanishingSequence {
    /// `a_1 ..= a_horizon`.
    pub values: Vec<f64>,
    /// Located `n_0 < n_1 < ...`; `a_n = a0 / 2^(j+1)` on `(n_j, n_{j+1}]`.
    pub change_points: Vec<usize>,
    /// First level whose tail bound could not be certified within the horizon.
    pub stalled_level: Option<usize>,
}

/// Halving construction of a sequence `a_n -> 0` with `P(|Z_n| > a_n) -> 0`.
///
/// `tail(n, a)` estimates `P(|Z_n| > a)`. Level `j >= 1` looks for the
/// smallest `n_{j-1}` (beyond the previous change point) such that
/// `tail(n, a0 / 2^j) < 2^-j` for every `n` in `(n_{j-1}, horizon]`; the
/// sequence then takes the value `a0 / 2^j` on `(n_{j-1}, n_j]`. Levels stop
/// when a bound cannot be certified inside the horizon; the remaining terms
/// keep the last certified value. Failing already at the first level is a
/// [`Error::ConstructionStalled`].
pub fn vanishing_sequence(tail: impl Fn(usize, f64) -> f64, a0: f64, horizon: usize) -> Result<VanishingSequence> {
    if !(a0 > 0.0 && a0.is_finite()) {
        return Err(Error::invalid("a0 must be positive and finite"));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut change_points = Vec::new();
    let mut stalled_level = None;
    let mut level = 1usize;
    let mut prev: Option<usize> = None;
    loop {
        let a = a0 / 2f64.powi(level as i32);
        let bound = 0.5f64.powi(level as i32);
        if a == 0.0 || bound == 0.0 {
            break;
        }
        let start = prev.map_or(0, |p| p + 1);
        if start >= horizon {
            break;
        }
        // Smallest n0 >= start with tail(n, a) < bound for all n in (n0, horizon].
        let mut n0 = horizon;
        while n0 > start && tail(n0, a) < bound {
            n0 -= 1;
        }
        if n0 == horizon {
            if level == 1 {
                return Err(Error::ConstructionStalled { level, a, bound });
            }
            stalled_level = Some(level);
            break;
        }
        change_points.push(n0);
        prev = Some(n0);
        level += 1;
    }
    let values = (1..=horizon)
        .map(|n| {
            let j = change_points.iter().take_while(|&&c| c < n).count();
            a0 / 2f64.powi(j as i32)
        })
        .collect();
    Ok(VanishingSequence { values, change_points, stalled_level })
}

/// Rigorous bound on `sup_x |f_n(x) - f(x)|` for nondecreasing `f_n` and a continuous `f`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapBound {
    pub bound: f64,
    /// `max_i |f_n(x_i) - f(x_i)|` over the grid.
    pub grid_max: f64,
    /// `max_i (f(x_{i+1}) - f(x_i))`.
    pub oscillation: f64,
    pub points: usize,
}

/// Grid bound for `sup |f_n - f|`.
///
/// The grid is `-inf`, the support ends of `f`, the interior quantiles
/// `f^{-1}(i/k)` and `+inf`. On each cell `[x_i, x_{i+1}]` monotonicity gives
/// `|f_n - f| <= |f_n - f| at an end + (f(x_{i+1}) - f(x_i))`.
pub fn uniform_gap(f_n: impl Fn(f64) -> f64, f: &CdfModel, k: usize) -> Result<GapBound> {
    if k < 1 {
        return Err(Error::invalid("grid density must be at least 1"));
    }
    let (lo, hi) = f.support();
    let mut grid = Vec::with_capacity(k + 3);
    grid.push(f64::NEG_INFINITY);
    grid.push(lo);
    grid.extend((1..k).map(|i| f.quantile(i as f64 / k as f64)));
    grid.push(hi);
    grid.push(f64::INFINITY);
    grid.sort_by(f64::total_cmp);
    let fv: Vec<f64> = grid.iter().map(|&x| f.cdf(x)).collect();
    let grid_max = grid.iter().zip(&fv).fold(0.0f64, |m, (&x, &y)| m.max((f_n(x) - y).abs()));
    let oscillation = fv.windows(2).fold(0.0f64, |m, w| m.max(w[1] - w[0]));
    Ok(GapBound { bound: grid_max + oscillation, grid_max, oscillation, points: grid.len() })
}

/// `max_t F(t + delta) - F(t)` over `grid`.
pub fn modulus_of_continuity(f: &CdfModel, delta: f64, grid: &[f64]) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::invalid("delta must be nonnegative"));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    Ok(grid.iter().fold(0.0f64, |m, &t| m.max(f.cdf(t + delta) - f.cdf(t))))
}

/// `m` evenly spaced points covering `[lo - delta, hi]` for `f` supported on `[lo, hi]`.
pub fn modulus_grid(f: &CdfModel, delta: f64, m: usize) -> Vec<f64> {
    let (lo, hi) = f.support();
    let a = lo - delta.max(0.0);
    let m = m.max(2);
    (0..m).map(|i| a + (hi - a) * i as f64 / (m - 1) as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub delta: f64,
    pub value: f64,
    pub per_component: Vec<f64>,
}

/// Average of the component moduli at `delta`, each on its own grid of `m` points.
pub fn averaged_modulus(components: &[CdfModel], delta: f64, m: usize) -> Result<ModulusReport> {
    if components.is_empty() {
        return Err(Error::invalid("need at least one component"));
    }
    let per_component = components
        .iter()
        .map(|c| modulus_of_continuity(c, delta, &modulus_grid(c, delta, m)))
        .collect::<Result<Vec<_>>>()?;
    let value = per_component.iter().sum::<f64>() / per_component.len() as f64;
    Ok(ModulusReport { delta, value, per_component })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_sequence_halves_at_powers_of_two() {
        let tail = |n: usize, a: f64| if 1.0 / n as f64 > a { 1.0 } else { 0.0 };
        let seq = vanishing_sequence(tail, 1.0, 64).unwrap();
        assert_eq!(&seq.change_points[..5], &[1, 3, 7, 15, 31]);
        for (i, &a) in seq.values.iter().enumerate() {
            let n = i + 1;
            assert!(a > 0.0);
            assert!(a >= 1.0 / n as f64, "a_{n} = {a}");
            assert_eq!(tail(n, a), 0.0);
        }
        assert!(seq.values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_process_halves_every_step() {
        let seq = vanishing_sequence(|_, _| 0.0, 1.0, 10).unwrap();
        assert_eq!(seq.change_points, (0..10).collect::<Vec<_>>());
        for (i, &a) in seq.values.iter().enumerate() {
            assert_eq!(a, 0.5f64.powi(i as i32 + 1));
        }
    }

    #[test]
    fn stall_at_first_level_is_an_error() {
        let err = vanishing_sequence(|_, _| 1.0, 1.0, 10).unwrap_err();
        assert!(matches!(err, Error::ConstructionStalled { level: 1, .. }));
    }

    #[test]
    fn later_stall_is_reported() {
        // Tail drops below 1/2 and 1/4 but never below 1/8.
        let seq = vanishing_sequence(|_, a| if a < 0.2 { 0.2 } else { 0.0 }, 1.0, 20).unwrap();
        assert_eq!(seq.change_points, vec![0, 1]);
        assert_eq!(seq.stalled_level, Some(3));
        assert_eq!(*seq.values.last().unwrap(), 0.25);
    }

    #[test]
    fn gap_of_identical_functions_is_the_oscillation() {
        let f = CdfModel::beta(2.0, 5.0).unwrap();
        let coarse = uniform_gap(|x| f.cdf(x), &f, 10).unwrap();
        let fine = uniform_gap(|x| f.cdf(x), &f, 1000).unwrap();
        assert_eq!(coarse.grid_max, 0.0);
        assert!(fine.bound < coarse.bound);
        assert!(fine.bound < 1.1e-3);
    }

    #[test]
    fn gap_between_stretched_uniforms() {
        let f = CdfModel::standard_uniform();
        for n in [10usize, 100] {
            let g = CdfModel::uniform(0.0, 1.0 + 1.0 / n as f64).unwrap();
            let truth = 1.0 / (n as f64 + 1.0);
            let b = uniform_gap(|x| g.cdf(x), &f, 1000).unwrap().bound;
            assert!(b >= truth && b <= 2.0 * truth, "n={n} bound={b} truth={truth}");
        }
    }

    #[test]
    fn modulus_of_uniform_is_delta() {
        let f = CdfModel::standard_uniform();
        let grid = modulus_grid(&f, 0.1, 1001);
        assert!((modulus_of_continuity(&f, 0.1, &grid).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(modulus_of_continuity(&f, 0.0, &grid).unwrap(), 0.0);
        assert!(modulus_of_continuity(&f, -0.1, &grid).is_err());
    }

    #[test]
    fn modulus_is_monotone_in_delta() {
        let comps = [CdfModel::beta(2.0, 5.0).unwrap(), CdfModel::trunc_exp(2.0, 1.0).unwrap()];
        let vals: Vec<f64> = [0.2, 0.1, 0.05, 0.01].iter().map(|&d| averaged_modulus(&comps, d, 2001).unwrap().value).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
        assert!(vals.iter().all(|&v| v >= 0.0));
    }
}
