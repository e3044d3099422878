//! Measure evolution under a sequence of random kernels.
//!
//! The analytic support chain is carried in exact rationals, so radii
//! recovered from diameter increments equal the kernel radii bit for bit. The
//! particle cloud is the observational view of the same run.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cloud_diameter, diameter_with, dilate, Site, SupportSet, DEFAULT_HULL_THRESHOLD};
use crate::kernel::{
    draw_kernel_sequence, sample_transition, CovariateProcess, KernelSpec, NoiseDriver, NoiseFamily, RealizedKernel,
};
use crate::rng::{derive_seed, fork_seed, substream, tag};
use crate::scalar::{exact, Exact, Real, Scalar};

const CHUNK: usize = 1024;
pub const DEFAULT_PARTICLES: usize = 10_000;

/// Weighted particle approximation of `mu_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleMeasure<T> {
    pub sites: Vec<Site<T>>,
    pub weights: Vec<f64>,
    pub generation: usize,
}

impl<T: Real> ParticleMeasure<T> {
    pub fn new(sites: Vec<Site<T>>, weights: Vec<f64>, generation: usize) -> Result<Self> {
        if sites.is_empty() || sites.len() != weights.len() {
            return Err(Error::invalid("particle measure needs matching nonempty sites and weights"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("particle weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("particle weights sum to {total}, not 1")));
        }
        Ok(ParticleMeasure { sites, weights, generation })
    }

    pub fn dirac(site: Site<T>) -> Self {
        ParticleMeasure { sites: vec![site], weights: vec![1.0], generation: 0 }
    }

    pub fn uniform(sites: Vec<Site<T>>, generation: usize) -> Result<Self> {
        let w = 1.0 / sites.len() as f64;
        let weights = vec![w; sites.len()];
        Self::new(sites, weights, generation)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn support(&self) -> Result<SupportSet<T>> {
        SupportSet::point_cloud(self.sites.clone())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// Particle approximation of `mu_{n+1} = int pi(. ; s) mu_n(ds)`.
///
/// Output particle `j` belongs to chunk `j / 1024`, whose draws come from
/// substream `(step seed, chunk)`; serial and parallel execution therefore
/// agree exactly.
pub fn step<T: Real, R: Rng + ?Sized>(
    mu: &ParticleMeasure<T>,
    k: &RealizedKernel,
    particles_out: usize,
    rng: &mut R,
    execution: Execution,
) -> Result<ParticleMeasure<T>> {
    step_seeded(mu, k, particles_out, fork_seed(rng), execution)
}

pub fn step_seeded<T: Real>(
    mu: &ParticleMeasure<T>,
    k: &RealizedKernel,
    particles_out: usize,
    seed: u64,
    execution: Execution,
) -> Result<ParticleMeasure<T>> {
    if particles_out == 0 {
        return Err(Error::invalid("particles_out must be at least 1"));
    }
    let index = WeightedIndex::new(&mu.weights).map_err(|e| Error::invalid(format!("particle weights: {e}")))?;
    let chunk = |c: usize| -> Vec<Site<T>> {
        let mut rng = substream(seed, c as u64);
        let len = CHUNK.min(particles_out - c * CHUNK);
        (0..len).map(|_| sample_transition(k, &mu.sites[index.sample(&mut rng)], &mut rng)).collect()
    };
    let chunks = particles_out.div_ceil(CHUNK);
    let sites: Vec<Site<T>> = match execution {
        Execution::Serial => (0..chunks).flat_map(chunk).collect(),
        Execution::Parallel => (0..chunks).into_par_iter().flat_map_iter(chunk).collect(),
    };
    let w = 1.0 / particles_out as f64;
    Ok(ParticleMeasure { sites, weights: vec![w; particles_out], generation: mu.generation + 1 })
}

/// Initial support `S_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSupport {
    /// A single site; the origin when `center` is omitted.
    Point {
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    Ball {
        #[serde(default)]
        center: Option<Vec<f64>>,
        radius: f64,
    },
    PointCloud { points: Vec<Vec<f64>> },
}

impl Default for InitialSupport {
    fn default() -> Self {
        InitialSupport::Point { center: None }
    }
}

impl InitialSupport {
    fn center(center: &Option<Vec<f64>>, dim: usize) -> Result<Site<f64>> {
        match center {
            None => Ok(Site::origin(dim)),
            Some(c) if c.len() == dim => Site::new(c.clone()),
            Some(c) => Err(Error::invalid(format!("center has {} coordinates, expected {dim}", c.len()))),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.support(dim).map(|_| ())
    }

    /// `S_0` in exact arithmetic.
    pub fn support(&self, dim: usize) -> Result<SupportSet<Exact>> {
        let lift = |s: Site<f64>| Site { coords: s.coords.into_iter().map(exact).collect() };
        match self {
            InitialSupport::Point { center } => Ok(SupportSet::point(lift(Self::center(center, dim)?))),
            InitialSupport::Ball { center, radius } => {
                if !(*radius >= 0.0 && radius.is_finite()) {
                    return Err(Error::invalid("initial ball radius must be finite and nonnegative"));
                }
                SupportSet::ball(lift(Self::center(center, dim)?), exact(*radius))
            }
            InitialSupport::PointCloud { points } => {
                let sites = points
                    .iter()
                    .map(|p| {
                        if p.len() != dim {
                            return Err(Error::invalid(format!("point has {} coordinates, expected {dim}", p.len())));
                        }
                        Site::new(p.clone()).map(lift)
                    })
                    .collect::<Result<Vec<_>>>()?;
                SupportSet::point_cloud(sites)
            }
        }
    }

    /// Particle approximation of `mu_0`: uniform on the ball, equal weights on a cloud.
    pub fn particles(&self, dim: usize, count: usize, seed: u64) -> Result<ParticleMeasure<f64>> {
        match self {
            InitialSupport::Point { center } => Ok(ParticleMeasure::dirac(Self::center(center, dim)?)),
            InitialSupport::Ball { center, radius } => {
                let c = Self::center(center, dim)?;
                if *radius == 0.0 {
                    return Ok(ParticleMeasure::dirac(c));
                }
                let k = RealizedKernel { radius: *radius, profile: crate::kernel::Profile::UniformBall };
                step_seeded(&ParticleMeasure::dirac(c), &k, count.max(1), seed, Execution::Parallel)
                    .map(|mu| ParticleMeasure { generation: 0, ..mu })
            }
            InitialSupport::PointCloud { points } => {
                ParticleMeasure::uniform(points.iter().map(|p| Site::new(p.clone())).collect::<Result<_>>()?, 0)
            }
        }
    }
}

/// Everything needed to run one epidemic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpidemicConfig {
    pub dimension: usize,
    pub initial: InitialSupport,
    pub kernel: KernelSpec,
    pub noise: NoiseFamily,
    pub covariate: CovariateProcess,
    /// Particles per generation; 0 keeps only the analytic chain.
    pub particles: usize,
    pub hull_threshold: usize,
}

impl Default for EpidemicConfig {
    fn default() -> Self {
        EpidemicConfig {
            dimension: 2,
            initial: InitialSupport::default(),
            kernel: KernelSpec::default(),
            noise: NoiseFamily::Uniform { a: 0.0, b: 1.0 },
            covariate: CovariateProcess::Constant { value: 1.0 },
            particles: DEFAULT_PARTICLES,
            hull_threshold: DEFAULT_HULL_THRESHOLD,
        }
    }
}

impl EpidemicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        self.initial.validate(self.dimension)?;
        self.noise.validate()?;
        self.covariate.validate()
    }
}

/// Recorded run: analytic supports `S_0..S_n`, optional particle clouds and radii.
#[derive(Clone, Debug, PartialEq)]
pub struct EpidemicTrace {
    pub dimension: usize,
    pub supports: Vec<SupportSet<Exact>>,
    pub diameters: Vec<Exact>,
    pub clouds: Vec<SupportSet<f64>>,
    pub particle_diameters: Vec<f64>,
    pub true_radii: Vec<f64>,
    pub noise: Vec<f64>,
    pub covariates: Vec<f64>,
}

impl EpidemicTrace {
    pub fn horizon(&self) -> usize {
        self.true_radii.len()
    }

    pub fn has_particles(&self) -> bool {
        !self.particle_diameters.is_empty()
    }
}

/// Runs `horizon` steps, drawing noise and covariates from streams derived from `rng`.
pub fn run_epidemic<R: Rng + ?Sized>(config: &EpidemicConfig, horizon: usize, rng: &mut R) -> Result<EpidemicTrace> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    config.validate()?;
    let master = fork_seed(rng);
    let noise = NoiseDriver::new(config.noise.clone(), derive_seed(master, tag::NOISE))?;
    let mut cov_rng = substream(derive_seed(master, tag::COVARIATE), 0);
    let seq = draw_kernel_sequence(&config.kernel, &noise, &config.covariate, &mut cov_rng, horizon)?;
    let mut trace = run_with_radii(config, &seq.radii, derive_seed(master, tag::PARTICLES))?;
    trace.noise = seq.noise;
    trace.covariates = seq.covariates;
    Ok(trace)
}

/// Runs the epidemic for a given radius sequence. The support chain is a
/// deterministic function of the radii; `particle_seed` drives the cloud.
pub fn run_with_radii(config: &EpidemicConfig, radii: &[f64], particle_seed: u64) -> Result<EpidemicTrace> {
    if radii.is_empty() {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    config.validate()?;
    if let Some(&r) = radii.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
        return Err(Error::DegenerateKernel { radius: r });
    }
    let dim = config.dimension;
    let mut supports = Vec::with_capacity(radii.len() + 1);
    supports.push(config.initial.support(dim)?);
    for &r in radii {
        let next = dilate(supports.last().expect("nonempty"), exact(r))?;
        supports.push(next);
    }
    let diameters = supports.iter().map(|s| diameter_with(s, config.hull_threshold)).collect();

    let mut clouds = Vec::new();
    let mut particle_diameters = Vec::new();
    if config.particles > 0 {
        let mut mu = config.initial.particles(dim, config.particles, substream_seed(particle_seed, 0))?;
        let record = |mu: &ParticleMeasure<f64>, clouds: &mut Vec<SupportSet<f64>>, ds: &mut Vec<f64>| -> Result<()> {
            ds.push(cloud_diameter(&mu.sites, config.hull_threshold));
            clouds.push(mu.support()?);
            Ok(())
        };
        record(&mu, &mut clouds, &mut particle_diameters)?;
        for (i, &r) in radii.iter().enumerate() {
            let k = RealizedKernel { radius: r, profile: config.kernel.profile };
            mu = step_seeded(&mu, &k, config.particles, substream_seed(particle_seed, i as u64 + 1), Execution::Parallel)?;
            record(&mu, &mut clouds, &mut particle_diameters)?;
        }
    }
    Ok(EpidemicTrace {
        dimension: dim,
        supports,
        diameters,
        clouds,
        particle_diameters,
        true_radii: radii.to_vec(),
        noise: Vec::new(),
        covariates: Vec::new(),
    })
}

fn substream_seed(seed: u64, i: u64) -> u64 {
    derive_seed(seed, i)
}

/// `r_{i+1} = (d_{i+1} - d_i) / 2`; rejects decreasing diameters.
pub fn radii_from_diameters<T: Scalar>(diameters: &[T]) -> Result<Vec<T>> {
    if diameters.len() < 2 {
        return Err(Error::invalid("need at least two diameters"));
    }
    let two = T::one() + T::one();
    diameters
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            if w[1] < w[0] {
                return Err(Error::InconsistentTrace { step: i + 1, from: w[0].to_f64_lossy(), to: w[1].to_f64_lossy() });
            }
            Ok((w[1].clone() - w[0].clone()) / two.clone())
        })
        .collect()
}

/// Half the diameter increments without the monotonicity check; particle
/// diameters can shrink between generations.
pub fn diameter_increments(diameters: &[f64]) -> Vec<f64> {
    diameters.windows(2).map(|w| (w[1] - w[0]) / 2.0).collect()
}

/// Radii recovered from the analytic diameters.
pub fn extract_radii(trace: &EpidemicTrace) -> Result<Vec<Exact>> {
    radii_from_diameters(&trace.diameters)
}

pub const TRACE_COLUMNS: [&str; 5] = ["step", "diameter_analytic", "diameter_particle", "radius_true", "radius_recovered"];

/// Writes the per-step CSV. Step 0 has blank radius columns; the particle
/// column is blank when no particles were simulated.
pub fn write_trace_csv<W: Write>(trace: &EpidemicTrace, out: W) -> Result<()> {
    let recovered = extract_radii(trace)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for (i, d) in trace.diameters.iter().enumerate() {
        let particle = trace.particle_diameters.get(i).map(f64::to_string).unwrap_or_default();
        let (truth, rec) = match i {
            0 => (String::new(), String::new()),
            _ => (trace.true_radii[i - 1].to_string(), recovered[i - 1].to_f64_lossy().to_string()),
        };
        w.write_record([i.to_string(), d.to_f64_lossy().to_string(), particle, truth, rec])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a trace CSV.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub diameter_analytic: f64,
    pub diameter_particle: Option<f64>,
    pub radius_true: Option<f64>,
    pub radius_recovered: Option<f64>,
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
    if rows.is_empty() {
        return Err(Error::invalid("trace has no rows"));
    }
    Ok(rows)
}

/// Radii from the analytic diameter column, computed in exact arithmetic.
pub fn radii_from_trace_rows(rows: &[TraceRow]) -> Result<Vec<f64>> {
    let ds: Vec<Exact> = rows
        .iter()
        .map(|r| {
            if r.diameter_analytic.is_finite() {
                Ok(exact(r.diameter_analytic))
            } else {
                Err(Error::invalid("non-finite diameter"))
            }
        })
        .collect::<Result<_>>()?;
    Ok(radii_from_diameters(&ds)?.iter().map(Scalar::to_f64_lossy).collect())
}

/// JSON view of a trace with supports rounded to `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceJson {
    pub dimension: usize,
    pub supports: Vec<SupportSet<f64>>,
    pub diameters: Vec<f64>,
    pub clouds: Vec<SupportSet<f64>>,
    pub particle_diameters: Vec<f64>,
    pub true_radii: Vec<f64>,
    pub recovered_radii: Vec<f64>,
    pub noise: Vec<f64>,
    pub covariates: Vec<f64>,
}

impl TryFrom<&EpidemicTrace> for TraceJson {
    type Error = Error;

    fn try_from(t: &EpidemicTrace) -> Result<Self> {
        let f = |x: &Exact| x.to_f64_lossy();
        Ok(TraceJson {
            dimension: t.dimension,
            supports: t.supports.iter().map(|s| s.map(&f)).collect(),
            diameters: t.diameters.iter().map(f).collect(),
            clouds: t.clouds.clone(),
            particle_diameters: t.particle_diameters.clone(),
            true_radii: t.true_radii.clone(),
            recovered_radii: extract_radii(t)?.iter().map(f).collect(),
            noise: t.noise.clone(),
            covariates: t.covariates.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::{ks_statistic_with, Ecdf};
    use crate::empirical::kolmogorov_quantile;
    use crate::kernel::Profile;
    use rand::SeedableRng;

    fn rng(seed: u64) -> crate::rng::StreamRng {
        crate::rng::StreamRng::seed_from_u64(seed)
    }

    #[test]
    fn one_step_from_dirac() {
        let mu = ParticleMeasure::dirac(Site::new(vec![0.0, 0.0]).unwrap());
        let k = RealizedKernel { radius: 0.7, profile: Profile::UniformBall };
        let out = step(&mu, &k, 5000, &mut rng(1), Execution::Parallel).unwrap();
        assert_eq!(out.generation, 1);
        assert!((out.total_weight() - 1.0).abs() < 1e-9);
        assert!(out.sites.iter().all(|s| s.distance(&mu.sites[0]) < 0.7));
        let mean_x = out.sites.iter().map(|s| s.coords[0]).sum::<f64>() / 5000.0;
        assert!(mean_x.abs() < 0.05);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let mu = ParticleMeasure::uniform(vec![Site::new(vec![0.0]).unwrap(), Site::new(vec![3.0]).unwrap()], 0).unwrap();
        let k = RealizedKernel { radius: 1.0, profile: Profile::TriangularRadial };
        let a = step(&mu, &k, 3000, &mut rng(2), Execution::Serial).unwrap();
        let b = step(&mu, &k, 3000, &mut rng(2), Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_dimensional_profile_within_kolmogorov_band() {
        let n = 20_000;
        let mu = ParticleMeasure::dirac(Site::new(vec![0.0]).unwrap());
        let k = RealizedKernel { radius: 1.0, profile: Profile::UniformBall };
        let out = step(&mu, &k, n, &mut rng(3), Execution::Parallel).unwrap();
        let e = Ecdf::new(out.sites.iter().map(|s| s.coords[0]).collect()).unwrap();
        let d = ks_statistic_with(&e, |x| ((x + 1.0) / 2.0).clamp(0.0, 1.0));
        assert!(d < kolmogorov_quantile(0.99).unwrap() / (n as f64).sqrt());
    }

    #[test]
    fn diameters_follow_radii() {
        let cfg = EpidemicConfig {
            initial: InitialSupport::Ball { center: None, radius: 1.0 },
            particles: 0,
            ..Default::default()
        };
        let t = run_with_radii(&cfg, &[0.5, 0.25, 0.1], 0).unwrap();
        let ds: Vec<f64> = t.diameters.iter().map(Scalar::to_f64_lossy).collect();
        assert_eq!(&ds[..3], &[2.0, 3.0, 3.5]);
        assert!((ds[3] - 3.7).abs() < 1e-15);
        assert_eq!(t.diameters[3].clone() - t.diameters[2].clone(), exact(0.1) * exact(2.0));
        let radii: Vec<f64> = extract_radii(&t).unwrap().iter().map(Scalar::to_f64_lossy).collect();
        assert_eq!(radii, vec![0.5, 0.25, 0.1]);
    }

    #[test]
    fn radii_from_diameter_examples() {
        assert_eq!(radii_from_diameters(&[2.0, 3.0, 3.5]).unwrap(), vec![0.5, 0.25]);
        assert_eq!(radii_from_diameters(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(radii_from_diameters(&[2.0, 1.0]), Err(Error::InconsistentTrace { step: 1, .. })));
        assert!(radii_from_diameters(&[2.0]).is_err());
    }

    #[test]
    fn horizon_zero_is_rejected() {
        assert!(run_epidemic(&EpidemicConfig::default(), 0, &mut rng(1)).is_err());
    }

    #[test]
    fn epidemic_is_deterministic_and_exact() {
        let cfg = EpidemicConfig { particles: 500, ..Default::default() };
        let a = run_epidemic(&cfg, 5, &mut rng(4)).unwrap();
        let b = run_epidemic(&cfg, 5, &mut rng(4)).unwrap();
        assert_eq!(a, b);
        let rec = extract_radii(&a).unwrap();
        for (r, t) in rec.iter().zip(&a.true_radii) {
            assert_eq!(*r, exact(*t));
        }
        for w in a.supports.windows(2).zip(&a.true_radii) {
            assert_eq!(w.0[1], dilate(&w.0[0], exact(*w.1)).unwrap());
        }
        assert_eq!(a.particle_diameters.len(), 6);
        for (p, d) in a.particle_diameters.iter().zip(&a.diameters) {
            assert!(*p <= d.to_f64_lossy() + 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let cfg = EpidemicConfig { particles: 100, ..Default::default() };
        let t = run_epidemic(&cfg, 4, &mut rng(5)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("step,diameter_analytic,diameter_particle,radius_true,radius_recovered\n0,0,0,,\n"));
        assert!(!text.contains('\r'));
        let rows = read_trace_csv(&buf[..]).unwrap();
        let radii = radii_from_trace_rows(&rows).unwrap();
        for (r, t) in radii.iter().zip(&t.true_radii) {
            assert!((r - t).abs() <= 1e-12 * t.max(1.0));
        }
        let json = serde_json::to_value(TraceJson::try_from(&t).unwrap()).unwrap();
        assert_eq!(json["supports"][1]["kind"], "ball");
    }
}
