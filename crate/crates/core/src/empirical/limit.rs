//! The centered Gaussian limit process of the heterogeneous empirical process
//! `U_n(t) = sqrt(n) (F_n(t) - (1/n) sum F_i(t))`.
//!
//! Its covariance is `G(s, t) = avg_i F_i(min(s,t)) (1 - F_i(max(s,t)))`. The
//! process is sampled on a grid from a lower-triangular factor of the Gram
//! matrix. The supremum over the continuum is recovered by drawing, for every
//! grid interval, the extremes of a Brownian bridge pinned at the two grid
//! values with the interval's incremental variance; the plain grid maximum is
//! kept as [`SupMethod::GridMax`].

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cdf::CdfModel;
use super::kolmogorov::kolmogorov_cdf_unchecked;
use crate::error::{Error, Result};
use crate::rng::{fork_seed, substream};

pub const DEFAULT_GRID: usize = 512;
pub const NUGGET: f64 = 1e-10;
const BATCH: usize = 256;

#[derive(Clone, Debug)]
pub struct LimitProcessModel {
    /// Normalized `(weight, F_i)` pairs.
    components: Vec<(f64, CdfModel)>,
    mean_cdf: CdfModel,
    grid: Vec<f64>,
    covariance: DMatrix<f64>,
    /// Support endpoints of `mean_cdf`, where the process is pinned at 0.
    ends: Option<(f64, f64)>,
}

impl LimitProcessModel {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn mean_cdf(&self) -> &CdfModel {
        &self.mean_cdf
    }

    pub fn components(&self) -> &[(f64, CdfModel)] {
        &self.components
    }

    /// `G(s, t)` evaluated from the components.
    pub fn g(&self, s: f64, t: f64) -> f64 {
        weighted_covariance_kernel(&self.components, s, t)
    }

    /// Brownian bridge in `F`-time: a single standard uniform component.
    pub fn brownian_bridge(grid_size: usize) -> Result<Self> {
        let u = CdfModel::standard_uniform();
        let grid = default_grid(&u, grid_size)?;
        build_limit_model(&[u], &grid)
    }

    /// Model from an explicit covariance matrix; the process is not pinned at the ends.
    pub fn from_covariance(grid: Vec<f64>, covariance: DMatrix<f64>, mean_cdf: CdfModel) -> Result<Self> {
        let m = grid.len();
        if covariance.nrows() != m || covariance.ncols() != m {
            return Err(Error::invalid("covariance must be square and match the grid"));
        }
        check_grid(&grid)?;
        for i in 0..m {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Covariance("matrix is not symmetric".into()));
                }
            }
        }
        Ok(LimitProcessModel { components: Vec::new(), mean_cdf, grid, covariance, ends: None })
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::invalid("limit grid needs at least two points"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("limit grid must be strictly increasing"));
    }
    Ok(())
}

pub fn covariance_kernel(components: &[CdfModel], s: f64, t: f64) -> f64 {
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    let sum: f64 = components.iter().map(|f| f.cdf(lo) * (1.0 - f.cdf(hi))).sum();
    sum / components.len() as f64
}

/// `G(s, t)` for components with (normalized) weights.
pub fn weighted_covariance_kernel(components: &[(f64, CdfModel)], s: f64, t: f64) -> f64 {
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    components.iter().map(|(w, f)| w * f.cdf(lo) * (1.0 - f.cdf(hi))).sum()
}

/// Interior quantiles `F^{-1}(j/(m+1))`, `j = 1..m`, with ties nudged apart.
pub fn default_grid(mean_cdf: &CdfModel, m: usize) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::invalid("limit grid needs at least two points"));
    }
    let mut grid: Vec<f64> = (1..=m).map(|j| mean_cdf.quantile(j as f64 / (m + 1) as f64)).collect();
    for j in 1..m {
        if grid[j] <= grid[j - 1] {
            grid[j] = grid[j - 1].next_up();
        }
    }
    Ok(grid)
}

/// Averages the component laws into `F` and the covariance kernel `G` on `grid`.
pub fn build_limit_model(components: &[CdfModel], grid: &[f64]) -> Result<LimitProcessModel> {
    let weighted: Vec<(f64, CdfModel)> = components.iter().map(|c| (1.0, c.clone())).collect();
    build_weighted_limit_model(&weighted, grid)
}

/// As [`build_limit_model`], for a limit in which `F_i` occurs with the given frequencies.
pub fn build_weighted_limit_model(components: &[(f64, CdfModel)], grid: &[f64]) -> Result<LimitProcessModel> {
    if components.is_empty() {
        return Err(Error::invalid("limit model needs at least one component"));
    }
    let total: f64 = components.iter().map(|(w, _)| *w).sum();
    if !(total > 0.0) || components.iter().any(|(w, _)| !(*w >= 0.0)) {
        return Err(Error::invalid("component weights must be nonnegative with a positive sum"));
    }
    for (_, c) in components {
        c.validate()?;
    }
    check_grid(grid)?;
    let components: Vec<(f64, CdfModel)> = components.iter().map(|(w, c)| (w / total, c.clone())).collect();
    let mean_cdf = if components.len() == 1 { components[0].1.clone() } else { CdfModel::mixture(components.clone())? };
    let m = grid.len();
    // F_i on the grid, then G from the min/max ordering.
    let values: Vec<(f64, Vec<f64>)> = components.iter().map(|(w, c)| (*w, grid.iter().map(|&t| c.cdf(t)).collect())).collect();
    let mut covariance = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let g: f64 = values.iter().map(|(w, v)| w * v[j] * (1.0 - v[i])).sum();
            covariance[(i, j)] = g;
            covariance[(j, i)] = g;
        }
    }
    let (lo, hi) = mean_cdf.support();
    let pinned = weighted_covariance_kernel(&components, lo, lo) < 1e-15 && weighted_covariance_kernel(&components, hi, hi) < 1e-15;
    let ends = (pinned && lo < grid[0] && hi > grid[m - 1]).then_some((lo, hi));
    Ok(LimitProcessModel { components, mean_cdf, grid: grid.to_vec(), covariance, ends })
}

/// Lower-triangular factor of a positive semidefinite matrix.
///
/// Pivots within `tol` of zero are treated as exact zeros, so singular
/// directions (e.g. `G = 0`) factor without noise. A clearly negative pivot
/// is an error.
pub fn psd_cholesky(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    let mut l = DMatrix::zeros(m, m);
    for j in 0..m {
        let d = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d < -tol {
            return Err(Error::Covariance(format!("negative pivot {d:e} at row {j}")));
        }
        if d <= tol {
            continue;
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in j + 1..m {
            let s = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / root;
        }
    }
    Ok(l)
}

fn factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = cov.diagonal().iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let tol = 1e-13 * scale;
    psd_cholesky(cov, tol).or_else(|_| {
        let mut bumped = cov.clone();
        for i in 0..cov.nrows() {
            bumped[(i, i)] += NUGGET;
        }
        psd_cholesky(&bumped, tol)
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupMethod {
    GridMax,
    #[default]
    BridgeCorrected,
}

/// Sorted samples of `sup_t |U(t)|`.
pub fn simulate_limit_sup<R: Rng + ?Sized>(model: &LimitProcessModel, paths: usize, rng: &mut R) -> Result<Vec<f64>> {
    simulate_limit_sup_with(model, paths, SupMethod::default(), rng)
}

pub fn simulate_limit_sup_with<R: Rng + ?Sized>(
    model: &LimitProcessModel,
    paths: usize,
    method: SupMethod,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    let l = factor(&model.covariance)?;
    let m = model.grid.len();
    let increments = interval_variances(model);
    let seed = fork_seed(rng);
    let batches = paths.div_ceil(BATCH);
    let mut sups: Vec<f64> = (0..batches)
        .into_par_iter()
        .flat_map_iter(|b| {
            let width = BATCH.min(paths - b * BATCH);
            let mut rng = substream(seed, b as u64);
            let z = DMatrix::<f64>::from_fn(m, width, |_, _| StandardNormal.sample(&mut rng));
            let u = &l * z;
            (0..width)
                .map(|c| {
                    let col = u.column(c);
                    match method {
                        SupMethod::GridMax => col.iter().fold(0.0f64, |a, x| a.max(x.abs())),
                        SupMethod::BridgeCorrected => bridge_sup(col.as_slice(), &increments, model.ends.is_some(), &mut rng),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    sups.sort_unstable_by(f64::total_cmp);
    Ok(sups)
}

/// Incremental variances `Var(U(t_{j+1}) - U(t_j))`, including the pinned ends when present.
fn interval_variances(model: &LimitProcessModel) -> Vec<f64> {
    let c = &model.covariance;
    let m = model.grid.len();
    let mut v = Vec::with_capacity(m + 1);
    if model.ends.is_some() {
        v.push(c[(0, 0)].max(0.0));
    }
    for j in 0..m - 1 {
        v.push((c[(j, j)] - 2.0 * c[(j, j + 1)] + c[(j + 1, j + 1)]).max(0.0));
    }
    if model.ends.is_some() {
        v.push(c[(m - 1, m - 1)].max(0.0));
    }
    v
}

fn bridge_sup<R: Rng + ?Sized>(values: &[f64], increments: &[f64], pinned: bool, rng: &mut R) -> f64 {
    let mut best = values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut interval = |a: f64, b: f64, v: f64| {
        if v <= 0.0 {
            return;
        }
        let e1: f64 = -(1.0 - rng.random::<f64>()).ln();
        let e2: f64 = -(1.0 - rng.random::<f64>()).ln();
        let spread = (b - a) * (b - a);
        let hi = 0.5 * (a + b + (spread + 2.0 * v * e1).sqrt());
        let lo = 0.5 * (a + b - (spread + 2.0 * v * e2).sqrt());
        best = best.max(hi).max(-lo);
    };
    let mut k = 0;
    if pinned {
        interval(0.0, values[0], increments[0]);
        k = 1;
    }
    for w in values.windows(2) {
        interval(w[0], w[1], increments[k]);
        k += 1;
    }
    if pinned {
        interval(values[values.len() - 1], 0.0, increments[k]);
    }
    best
}

/// Empirical quantile `x_(ceil(p N))` of sorted samples.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CAlpha {
    pub value: f64,
    pub se: f64,
    pub paths: usize,
}

/// Level-`alpha` critical value from sorted limit-sup samples.
pub fn c_alpha_from_sorted(sorted: &[f64], alpha: f64) -> Result<CAlpha> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    if sorted.is_empty() {
        return Err(Error::invalid("no limit-sup samples"));
    }
    let p = 1.0 - alpha;
    let n = sorted.len() as f64;
    // Half-width of the order-statistic interval at one binomial standard deviation.
    let spread = (p * (1.0 - p) / n).sqrt();
    let se = 0.5 * (sorted_quantile(sorted, (p + spread).min(1.0)) - sorted_quantile(sorted, (p - spread).max(0.0)));
    Ok(CAlpha { value: sorted_quantile(sorted, p), se, paths: sorted.len() })
}

/// `C_alpha` with `P(sup |U| >= C_alpha) = alpha`.
pub fn c_alpha<R: Rng + ?Sized>(model: &LimitProcessModel, alpha: f64, paths: usize, rng: &mut R) -> Result<CAlpha> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    let sups = simulate_limit_sup(model, paths, rng)?;
    c_alpha_from_sorted(&sups, alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub t: f64,
    pub variance: f64,
    pub empirical_variance: f64,
    pub ks: f64,
    pub p_value: f64,
    pub rejected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub s: f64,
    pub t: f64,
    pub expected: f64,
    pub empirical: f64,
    pub se: f64,
    pub rejected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FindimReport {
    pub n: usize,
    pub reps: usize,
    pub significance: f64,
    pub marginals: Vec<MarginalCheck>,
    pub covariances: Vec<CovarianceCheck>,
    pub rejections: usize,
    pub passed: bool,
}

pub const FINDIM_SIGNIFICANCE: f64 = 0.01;
pub const FINDIM_COVARIANCE_SE: f64 = 4.0;

fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Finite-dimensional check of the Gaussian limit at up to three time points.
///
/// `X_i` cycles through `components`. Each marginal `U_n(t)` is compared with
/// `N(0, G(t,t))` by a continuity-corrected KS test on its lattice; each pair
/// of points compares the empirical covariance with `G(s,t)`. The report
/// fails only on two or more rejections.
pub fn findim_gaussian_test<R: Rng + ?Sized>(
    components: &[CdfModel],
    t_points: &[f64],
    n: usize,
    reps: usize,
    rng: &mut R,
) -> Result<FindimReport> {
    if components.is_empty() {
        return Err(Error::invalid("need at least one component"));
    }
    if t_points.is_empty() || t_points.len() > 3 {
        return Err(Error::invalid("findim test takes one to three time points"));
    }
    if n == 0 || reps < 2 {
        return Err(Error::invalid("need n >= 1 and reps >= 2"));
    }
    let k = t_points.len();
    // Exact centering: sum_i F_i(t) over the cycled assignment.
    let centre: Vec<f64> = t_points
        .iter()
        .map(|&t| (0..n).map(|i| components[i % components.len()].cdf(t)).sum())
        .collect();
    let seed = fork_seed(rng);
    let counts: Vec<Vec<u32>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, rep);
            let mut c = vec![0u32; k];
            for i in 0..n {
                let x = components[i % components.len()].sample(&mut rng);
                for (j, &t) in t_points.iter().enumerate() {
                    if x <= t {
                        c[j] += 1;
                    }
                }
            }
            c
        })
        .collect();
    let root_n = (n as f64).sqrt();
    let u: Vec<Vec<f64>> = (0..k)
        .map(|j| counts.iter().map(|c| (c[j] as f64 - centre[j]) / root_n).collect())
        .collect();

    let mut marginals = Vec::with_capacity(k);
    for j in 0..k {
        let t = t_points[j];
        let variance = covariance_kernel(components, t, t);
        let mean = u[j].iter().sum::<f64>() / reps as f64;
        let empirical_variance = u[j].iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
        let (ks, p_value) = if variance <= 1e-15 {
            let degenerate = u[j].iter().all(|x| x.abs() < 1e-12);
            (if degenerate { 0.0 } else { 1.0 }, if degenerate { 1.0 } else { 0.0 })
        } else {
            let column: Vec<u32> = counts.iter().map(|c| c[j]).collect();
            let ks = lattice_ks(&column, centre[j], root_n * variance.sqrt());
            (ks, 1.0 - kolmogorov_cdf_unchecked((reps as f64).sqrt() * ks))
        };
        marginals.push(MarginalCheck { t, variance, empirical_variance, ks, p_value, rejected: p_value < FINDIM_SIGNIFICANCE });
    }

    let mut covariances = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let prods: Vec<f64> = u[a].iter().zip(&u[b]).map(|(x, y)| x * y).collect();
            let mean = prods.iter().sum::<f64>() / reps as f64;
            let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
            let se = (var / reps as f64).sqrt();
            let expected = covariance_kernel(components, t_points[a], t_points[b]);
            let rejected = (mean - expected).abs() > FINDIM_COVARIANCE_SE * se;
            covariances.push(CovarianceCheck { s: t_points[a], t: t_points[b], expected, empirical: mean, se, rejected });
        }
    }
    let rejections = marginals.iter().filter(|m| m.rejected).count() + covariances.iter().filter(|c| c.rejected).count();
    Ok(FindimReport {
        n,
        reps,
        significance: FINDIM_SIGNIFICANCE,
        marginals,
        covariances,
        rejections,
        passed: rejections < 2,
    })
}

/// KS distance between integer counts and `N(centre, sd^2)` with a half-unit continuity correction.
fn lattice_ks(counts: &[u32], centre: f64, sd: f64) -> f64 {
    let lo = *counts.iter().min().expect("reps > 0") as i64;
    let hi = *counts.iter().max().expect("reps > 0") as i64;
    let mut hist = vec![0usize; (hi - lo + 1) as usize];
    for &c in counts {
        hist[(c as i64 - lo) as usize] += 1;
    }
    let total = counts.len() as f64;
    let mut cum = 0usize;
    let mut d = normal_cdf((lo as f64 - 0.5 - centre) / sd);
    for (i, h) in hist.iter().enumerate() {
        cum += h;
        let x = (lo + i as i64) as f64 + 0.5;
        d = d.max((cum as f64 / total - normal_cdf((x - centre) / sd)).abs());
    }
    d
}
