//! Random transition kernels with ball supports, the iid noise that drives
//! them and the covariate process.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::empirical::ecdf::ks_sorted;
use crate::empirical::CdfModel;
use crate::error::{Error, Result};
use crate::geometry::Site;
use crate::rng::{substream, StreamRng};
use crate::scalar::Real;

/// Smallest admissible radius; guards float underflow only.
pub const RADIUS_FLOOR: f64 = 1e-12;

/// Law of the iid noise `xi_n`. Every family has bounded support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseFamily {
    Uniform { a: f64, b: f64 },
    /// Beta(p, q) scaled onto `(0, scale)`.
    Beta { p: f64, q: f64, scale: f64 },
    /// Exponential with rate `rate`, truncated to `(0, cap)`.
    TruncExp { rate: f64, cap: f64 },
}

impl NoiseFamily {
    pub fn law(&self) -> Result<CdfModel> {
        match self {
            NoiseFamily::Uniform { a, b } => CdfModel::uniform(*a, *b),
            NoiseFamily::Beta { p, q, scale } => CdfModel::beta(*p, *q)?.affine(*scale, 0.0),
            NoiseFamily::TruncExp { rate, cap } => CdfModel::trunc_exp(*rate, *cap),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.law().map(|_| ())
    }
}

/// Noise family plus the seed of its stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseDriver {
    pub family: NoiseFamily,
    pub seed: u64,
}

impl NoiseDriver {
    pub fn new(family: NoiseFamily, seed: u64) -> Result<Self> {
        family.validate()?;
        Ok(NoiseDriver { family, seed })
    }

    /// `xi_1 ..= xi_n`. Prefixes agree across `n`.
    pub fn draws(&self, n: usize) -> Vec<f64> {
        let law = self.family.law().expect("validated noise family");
        let mut rng = substream(self.seed, 0);
        (0..n).map(|_| law.sample(&mut rng)).collect()
    }
}

/// Limit law `lambda^Y` of the covariate's empirical measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateLaw {
    Atoms { values: Vec<f64>, weights: Vec<f64> },
    Continuous(CdfModel),
}

impl CovariateLaw {
    pub fn atoms(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let law = CovariateLaw::Atoms { values, weights };
        law.validate()?;
        Ok(law.normalized())
    }

    fn normalized(self) -> Self {
        match self {
            CovariateLaw::Atoms { values, weights } => {
                let total: f64 = weights.iter().sum();
                CovariateLaw::Atoms { values, weights: weights.iter().map(|w| w / total).collect() }
            }
            other => other,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CovariateLaw::Atoms { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return Err(Error::invalid("atom values and weights must be nonempty and of equal length"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("atom values must be finite"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || !(weights.iter().sum::<f64>() > 0.0) {
                    return Err(Error::invalid("atom weights must be nonnegative with a positive sum"));
                }
                Ok(())
            }
            CovariateLaw::Continuous(c) => c.validate(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            CovariateLaw::Atoms { values, weights } => {
                let total: f64 = weights.iter().sum();
                values.iter().zip(weights).filter(|(v, _)| **v <= x).map(|(_, w)| w).sum::<f64>() / total
            }
            CovariateLaw::Continuous(c) => c.cdf(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CovariateLaw::Atoms { values, weights } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                for (v, w) in values.iter().zip(weights) {
                    if u < *w {
                        return *v;
                    }
                    u -= w;
                }
                *values.last().expect("nonempty atoms")
            }
            CovariateLaw::Continuous(c) => c.sample(rng),
        }
    }

    /// Weighted nodes representing the law: the atoms themselves, or `nodes`
    /// midpoint quantiles of a continuous law.
    pub fn nodes(&self, nodes: usize) -> Vec<(f64, f64)> {
        match self {
            CovariateLaw::Atoms { values, weights } => {
                let total: f64 = weights.iter().sum();
                values.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(v, w)| (w / total, *v)).collect()
            }
            CovariateLaw::Continuous(c) => {
                let k = nodes.max(1);
                (0..k).map(|j| (1.0 / k as f64, c.quantile((j as f64 + 0.5) / k as f64))).collect()
            }
        }
    }
}

/// The covariate sequence `Y_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateProcess {
    Constant { value: f64 },
    /// `values` repeated with period `values.len()`.
    Cycle { values: Vec<f64> },
    /// Base-2 van der Corput points mapped onto `[lo, hi]`.
    LowDiscrepancy { lo: f64, hi: f64 },
    /// Iid draws; the empirical measure converges only at the `1/sqrt(n)` rate.
    IidViolating { law: CovariateLaw },
}

impl CovariateProcess {
    pub fn validate(&self) -> Result<()> {
        match self {
            CovariateProcess::Constant { value } if !value.is_finite() => Err(Error::invalid("constant covariate must be finite")),
            CovariateProcess::Cycle { values } if values.is_empty() || values.iter().any(|v| !v.is_finite()) => {
                Err(Error::invalid("cycle values must be nonempty and finite"))
            }
            CovariateProcess::LowDiscrepancy { lo, hi } => CdfModel::uniform(*lo, *hi).map(|_| ()),
            CovariateProcess::IidViolating { law } => law.validate(),
            _ => Ok(()),
        }
    }

    /// Whether the mode breaks the fast empirical-convergence hypothesis.
    pub fn assumption_violating(&self) -> bool {
        matches!(self, CovariateProcess::IidViolating { .. })
    }

    /// `Y_1 ..= Y_n`. Only the iid mode consumes randomness.
    pub fn path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match self {
            CovariateProcess::Constant { value } => vec![*value; n],
            CovariateProcess::Cycle { values } => (0..n).map(|i| values[i % values.len()]).collect(),
            CovariateProcess::LowDiscrepancy { lo, hi } => (1..=n as u64).map(|i| lo + (hi - lo) * van_der_corput(i)).collect(),
            CovariateProcess::IidViolating { law } => (0..n).map(|_| law.sample(rng)).collect(),
        }
    }

    pub fn limit_law(&self) -> Result<CovariateLaw> {
        Ok(match self {
            CovariateProcess::Constant { value } => CovariateLaw::Atoms { values: vec![*value], weights: vec![1.0] },
            CovariateProcess::Cycle { values } => {
                let mut distinct: Vec<f64> = values.clone();
                distinct.sort_by(f64::total_cmp);
                distinct.dedup();
                let weights = distinct
                    .iter()
                    .map(|d| values.iter().filter(|v| *v == d).count() as f64 / values.len() as f64)
                    .collect();
                CovariateLaw::Atoms { values: distinct, weights }
            }
            CovariateProcess::LowDiscrepancy { lo, hi } => CovariateLaw::Continuous(CdfModel::uniform(*lo, *hi)?),
            CovariateProcess::IidViolating { law } => law.clone().normalized(),
        })
    }
}

/// Radical inverse of `i` in base 2.
pub fn van_der_corput(mut i: u64) -> f64 {
    let mut x = 0.0;
    let mut scale = 0.5;
    while i > 0 {
        if i & 1 == 1 {
            x += scale;
        }
        i >>= 1;
        scale *= 0.5;
    }
    x
}

/// `sqrt(n) sup_x |F^n_Y(x) - lambda^Y(x)|` for one path of length `n`.
pub fn covariate_ecdf_gap<R: Rng + ?Sized>(process: &CovariateProcess, n: usize, rng: &mut R) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    process.validate()?;
    let law = process.limit_law()?;
    let mut path = process.path(n, rng);
    path.sort_by(f64::total_cmp);
    let sup = match &law {
        CovariateLaw::Continuous(c) => ks_sorted(&path, |x| c.cdf(x)),
        CovariateLaw::Atoms { values, .. } => {
            // Both functions are right-continuous steps; compare at every jump
            // and just below it.
            let mut points: Vec<f64> = path.iter().chain(values).copied().collect();
            points.sort_by(f64::total_cmp);
            points.dedup();
            let ecdf = |x: f64| path.partition_point(|&p| p <= x) as f64 / n as f64;
            let left = |x: f64| path.partition_point(|&p| p < x) as f64 / n as f64;
            let law_left = |x: f64| law.cdf(x.next_down());
            points.iter().fold(0.0f64, |m, &x| m.max((ecdf(x) - law.cdf(x)).abs()).max((left(x) - law_left(x)).abs()))
        }
    };
    Ok((n as f64).sqrt() * sup)
}

/// Map from `(xi, y)` to the kernel radius.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMap {
    /// `r = xi`
    #[default]
    Identity,
    /// `r = xi * y`
    Scaled,
    /// `r = xi + y`
    Shifted,
}

impl RadiusMap {
    pub fn raw(self, xi: f64, y: f64) -> f64 {
        match self {
            RadiusMap::Identity => xi,
            RadiusMap::Scaled => xi * y,
            RadiusMap::Shifted => xi + y,
        }
    }

    /// The radius, floored at [`RADIUS_FLOOR`]; negative or non-finite values are rejected.
    pub fn radius(self, xi: f64, y: f64) -> Result<f64> {
        let r = self.raw(xi, y);
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::DegenerateKernel { radius: r });
        }
        Ok(r.max(RADIUS_FLOOR))
    }
}

/// Distribution of mass inside the support ball.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    UniformBall,
    /// Density proportional to `1 - |x - s| / r`.
    TriangularRadial,
}

impl Profile {
    /// Density of the distance `rho = |X - s|` in dimension `d`.
    pub fn radial_density(self, d: usize, r: f64, rho: f64) -> f64 {
        if !(0.0..r).contains(&rho) {
            return 0.0;
        }
        let d = d as f64;
        let u = rho / r;
        match self {
            Profile::UniformBall => d * u.powf(d - 1.0) / r,
            Profile::TriangularRadial => d * (d + 1.0) * u.powf(d - 1.0) * (1.0 - u) / r,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default)]
    pub radius_map: RadiusMap,
    #[serde(default)]
    pub profile: Profile,
}

/// One kernel `pi_i(. ; s)`: the same radius and profile for every source site.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizedKernel {
    pub radius: f64,
    pub profile: Profile,
}

pub fn realize_kernel(spec: &KernelSpec, xi: f64, y: f64) -> Result<RealizedKernel> {
    Ok(RealizedKernel { radius: spec.radius_map.radius(xi, y)?, profile: spec.profile })
}

/// Draws a destination from `pi(. ; s)`; the result lies in the open ball `B(s, r)`.
pub fn sample_transition<T: Real, R: Rng + ?Sized>(k: &RealizedKernel, s: &Site<T>, rng: &mut R) -> Site<T> {
    let d = s.dim();
    let r = T::from_f64(k.radius).expect("finite radius");
    loop {
        let rho = sample_distance(k, d, rng);
        let dir: Vec<f64> = loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        };
        let coords: Vec<T> = s.coords.iter().zip(&dir).map(|(&c, &u)| c + T::from_f64(rho * u).expect("finite step")).collect();
        let out = Site { coords };
        // Rounding can push a point onto the boundary sphere; redraw in that case.
        if out.distance(s) < r {
            return out;
        }
    }
}

fn sample_distance<R: Rng + ?Sized>(k: &RealizedKernel, d: usize, rng: &mut R) -> f64 {
    let uniform = |rng: &mut R| k.radius * rng.random::<f64>().powf(1.0 / d as f64);
    match k.profile {
        Profile::UniformBall => uniform(rng),
        Profile::TriangularRadial => loop {
            let rho = uniform(rng);
            if rng.random::<f64>() < 1.0 - rho / k.radius {
                return rho;
            }
        },
    }
}

/// Law of the radius `r(xi, y)` for a fixed covariate value.
pub fn radius_law(spec: &KernelSpec, noise: &NoiseFamily, y: f64) -> Result<CdfModel> {
    let law = noise.law()?;
    let (lo, _) = law.support();
    match spec.radius_map {
        RadiusMap::Identity => {
            if lo < 0.0 {
                return Err(Error::Unsupported("identity radius map needs nonnegative noise".into()));
            }
            Ok(law)
        }
        RadiusMap::Scaled => {
            if !(y > 0.0) || lo < 0.0 {
                return Err(Error::Unsupported(format!("scaled radius map needs y > 0 and nonnegative noise (y = {y})")));
            }
            law.affine(y, 0.0)
        }
        RadiusMap::Shifted => {
            if lo + y < 0.0 {
                return Err(Error::Unsupported(format!("shifted radius map leaves mass below 0 at y = {y}")));
            }
            law.affine(1.0, y)
        }
    }
}

/// Weighted conditional radius laws making up the limit `F(. ; omega)`.
///
/// `nodes` sets the quadrature resolution for a continuous covariate law.
pub fn limit_radius_components(
    spec: &KernelSpec,
    noise: &NoiseFamily,
    law: &CovariateLaw,
    nodes: usize,
) -> Result<Vec<(f64, CdfModel)>> {
    law.nodes(nodes).into_iter().map(|(w, y)| radius_law(spec, noise, y).map(|c| (w, c))).collect()
}

/// Radius laws `F_i` of the first `n` steps given the covariate path.
pub fn conditional_radius_laws(spec: &KernelSpec, noise: &NoiseFamily, ys: &[f64]) -> Result<Vec<CdfModel>> {
    ys.iter().map(|&y| radius_law(spec, noise, y)).collect()
}

/// Shared kernel sequence for one run: noise, covariates and radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSequence {
    pub noise: Vec<f64>,
    pub covariates: Vec<f64>,
    pub radii: Vec<f64>,
}

/// Draws `xi_1..=xi_n` and `Y_1..=Y_n` from independent streams and maps them to radii.
pub fn draw_kernel_sequence(
    spec: &KernelSpec,
    noise: &NoiseDriver,
    covariate: &CovariateProcess,
    covariate_rng: &mut StreamRng,
    n: usize,
) -> Result<KernelSequence> {
    let xi = noise.draws(n);
    let ys = covariate.path(n, covariate_rng);
    let radii = xi.iter().zip(&ys).map(|(&x, &y)| spec.radius_map.radius(x, y)).collect::<Result<Vec<_>>>()?;
    Ok(KernelSequence { noise: xi, covariates: ys, radii })
}
