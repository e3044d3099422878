use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Regime, ScenarioConfig};
use crate::empirical::limit::{build_weighted_limit_model, c_alpha, default_grid, CAlpha};
use crate::empirical::CdfModel;
use crate::error::{Error, Result};
use crate::evolution::{extract_radii, run_with_radii};
use crate::geometry::{breach, dilate, Level, SafetyArea};
use crate::kernel::{draw_kernel_sequence, limit_radius_components, radius_law, NoiseDriver};
use crate::rng::{derive_seed, substream, tag};
use crate::safety::{compute_cn, estimate_dependent_with, estimate_iid_with, ConstantEstimate, IidEstimatorConfig};
use crate::scalar::{exact, Scalar};

/// Every replication with `rep.is_multiple_of(GEOMETRY_STRIDE)` also checks the breach geometrically.
pub const GEOMETRY_STRIDE: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub n: usize,
    pub feasible: bool,
    pub delta: Option<f64>,
    /// `r_{n+1}`.
    pub next_radius: f64,
    /// `1 - F(delta; omega)` in the dependent regime.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<f64>,
    /// `r_{n+1} > delta` (iid) or `tail > epsilon` (dependent).
    pub breach: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_breach: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub n: usize,
    pub threshold: f64,
    pub feasible: usize,
    pub breaches: usize,
    pub coverage: Option<f64>,
    pub se: Option<f64>,
    pub radius_breaches: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub constant_ms: f64,
    pub simulate_ms: f64,
    pub estimate_ms: f64,
    pub aggregate_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub regime: Regime,
    pub m: usize,
    pub feasible: usize,
    pub infeasible: usize,
    pub breaches: usize,
    /// `breaches / feasible`; absent when nothing was feasible.
    pub coverage: Option<f64>,
    pub se: Option<f64>,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub n: usize,
    pub constant: ConstantEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_n: Option<u64>,
    pub assumption_violating: bool,
    pub geometric_checks: usize,
    pub geometric_mismatches: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ladder: Vec<LadderEntry>,
    pub per_rep: Vec<RepRecord>,
    /// Wall-clock phases; left out by default so reports are reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl CoverageReport {
    /// `coverage <= target + 2 SE`; vacuously true when nothing was feasible.
    pub fn within(&self, target: f64) -> bool {
        match (self.coverage, self.se) {
            (Some(c), Some(se)) => c <= target + 2.0 * se,
            _ => true,
        }
    }
}

fn binomial(breaches: usize, feasible: usize) -> (Option<f64>, Option<f64>) {
    if feasible == 0 {
        return (None, None);
    }
    let p = breaches as f64 / feasible as f64;
    (Some(p), Some((p * (1.0 - p) / feasible as f64).sqrt()))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Radii `r_1..=r_len` of replication `rep`, drawn exactly as in a full epidemic run.
fn replication_radii(cfg: &ScenarioConfig, rep: usize, len: usize) -> Result<(Vec<f64>, u64)> {
    let rep_seed = derive_seed(derive_seed(cfg.scenario.seed, tag::REPLICATION), rep as u64);
    let noise = NoiseDriver::new(cfg.noise.clone(), derive_seed(rep_seed, tag::NOISE))?;
    let mut cov_rng = substream(derive_seed(rep_seed, tag::COVARIATE), 0);
    let seq = draw_kernel_sequence(&cfg.kernel, &noise, &cfg.covariate, &mut cov_rng, len)?;
    Ok((seq.radii, derive_seed(rep_seed, tag::PARTICLES)))
}

/// Observed radii: the drawn values, or the ones recovered from a simulated epidemic.
fn observed_radii(cfg: &ScenarioConfig, radii: &[f64], particle_seed: u64) -> Result<Vec<f64>> {
    if !cfg.scenario.simulate_full {
        return Ok(radii.to_vec());
    }
    let trace = run_with_radii(&cfg.epidemic(), radii, particle_seed)?;
    Ok(extract_radii(&trace)?.iter().map(Scalar::to_f64_lossy).collect())
}

/// Geometric form of the breach event on the exact support chain.
fn geometric_breach(cfg: &ScenarioConfig, past: &[f64], delta: f64, next: f64, level: Level) -> Result<bool> {
    let mut s = cfg.initial.support(cfg.scenario.dimension)?;
    for &r in past {
        s = dilate(&s, exact(r))?;
    }
    let next_support = dilate(&s, exact(next))?;
    let area = SafetyArea::new(s, exact(delta), level)?;
    Ok(breach(&area, &next_support))
}

struct Outcome {
    record: RepRecord,
    geometric: Option<bool>,
    simulate: Duration,
    estimate: Duration,
}

/// Monte Carlo estimate of `P(r_{n+1} > delta_{n+1})` for iid radii.
pub fn run_coverage_iid(cfg: &ScenarioConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    if cfg.estimator.mode != Regime::Iid {
        return Err(Error::Config("scenario is not in iid mode".into()));
    }
    let start = Instant::now();
    let n = cfg.scenario.horizon;
    let alpha = cfg.estimator.alpha;
    let y0 = cfg.covariate.path(1, &mut substream(0, 0))[0];
    let f0 = radius_law(&cfg.kernel, &cfg.noise, y0).map_err(|e| Error::Config(e.to_string()))?;
    let method = cfg.estimator.cn_method();
    let est_cfg = IidEstimatorConfig { alpha, f0, cn_method: method };
    let mut const_rng = substream(derive_seed(cfg.scenario.seed, tag::CONSTANT), 0);
    let cn = compute_cn(n, &est_cfg, &mut const_rng)?;
    let constant_time = start.elapsed();
    let level = Level::new(alpha, None)?;

    let one = |rep: usize| -> Result<Outcome> {
        let t0 = Instant::now();
        let (radii, pseed) = replication_radii(cfg, rep, n + 1)?;
        let observed = observed_radii(cfg, &radii[..n], pseed)?;
        let next = radii[n];
        let t1 = Instant::now();
        let d = estimate_iid_with(&observed, alpha, cn, &method)?;
        let breach_flag = d.delta.is_some_and(|delta| next > delta);
        let geometric = match d.delta {
            Some(delta) if rep.is_multiple_of(GEOMETRY_STRIDE) => Some(geometric_breach(cfg, &observed, delta, next, level)? == breach_flag),
            _ => None,
        };
        let t2 = Instant::now();
        Ok(Outcome {
            record: RepRecord {
                rep,
                n,
                feasible: d.feasible,
                delta: d.delta,
                next_radius: next,
                tail: None,
                breach: breach_flag,
                radius_breach: None,
            },
            geometric,
            simulate: t1 - t0,
            estimate: t2 - t1,
        })
    };
    let outcomes = pool(cfg.scenario.workers)?.install(|| (0..cfg.scenario.replications).into_par_iter().map(one).collect::<Result<Vec<_>>>())?;

    let t_agg = Instant::now();
    let m = outcomes.len();
    let feasible = outcomes.iter().filter(|o| o.record.feasible).count();
    let breaches = outcomes.iter().filter(|o| o.record.breach).count();
    let (coverage, se) = binomial(breaches, feasible);
    let geometric_checks = outcomes.iter().filter(|o| o.geometric.is_some()).count();
    let geometric_mismatches = outcomes.iter().filter(|o| o.geometric == Some(false)).count();
    let min_n = (feasible == 0).then(|| method.min_n(alpha));
    let timings = Timings {
        constant_ms: ms(constant_time),
        simulate_ms: outcomes.iter().map(|o| ms(o.simulate)).sum(),
        estimate_ms: outcomes.iter().map(|o| ms(o.estimate)).sum(),
        aggregate_ms: ms(t_agg.elapsed()),
        total_ms: ms(start.elapsed()),
    };
    Ok(CoverageReport {
        regime: Regime::Iid,
        m,
        feasible,
        infeasible: m - feasible,
        breaches,
        coverage,
        se,
        alpha,
        epsilon: None,
        n,
        constant: cn,
        min_n,
        assumption_violating: cfg.covariate.assumption_violating(),
        geometric_checks,
        geometric_mismatches,
        ladder: Vec::new(),
        per_rep: outcomes.into_iter().map(|o| o.record).collect(),
        timings: Some(timings),
    })
}

/// Limit radius law `F(. ; omega)` and the level-`alpha` constant of its Gaussian limit.
pub fn dependent_constants(cfg: &ScenarioConfig) -> Result<(CdfModel, CAlpha)> {
    let law = cfg.covariate.limit_law()?;
    let components = limit_radius_components(&cfg.kernel, &cfg.noise, &law, cfg.estimator.nodes)?;
    let limit_cdf = if components.len() == 1 { components[0].1.clone() } else { CdfModel::mixture(components.clone())? };
    let grid = default_grid(&limit_cdf, cfg.estimator.grid)?;
    let model = build_weighted_limit_model(&components, &grid)?;
    let mut const_rng = substream(derive_seed(cfg.scenario.seed, tag::CONSTANT), 0);
    let c = c_alpha(&model, cfg.estimator.alpha, cfg.estimator.paths, &mut const_rng)?;
    Ok((limit_cdf, c))
}

/// Monte Carlo estimate of `P(1 - F(delta_{n+1}; omega) > epsilon)` along the sample-size ladder.
///
/// The headline numbers refer to the largest `n` of the ladder.
pub fn run_coverage_dependent(cfg: &ScenarioConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    if cfg.estimator.mode != Regime::Dependent {
        return Err(Error::Config("scenario is not in dependent mode".into()));
    }
    let start = Instant::now();
    let alpha = cfg.estimator.alpha;
    let epsilon = cfg.estimator.epsilon.expect("validated");
    let ladder = cfg.ladder();
    let n_max = *ladder.last().expect("nonempty ladder");
    let (limit_cdf, c) = dependent_constants(cfg)?;
    let constant_time = start.elapsed();

    let one = |rep: usize| -> Result<(Vec<RepRecord>, Duration, Duration)> {
        let t0 = Instant::now();
        let (radii, pseed) = replication_radii(cfg, rep, n_max + 1)?;
        let observed = observed_radii(cfg, &radii[..n_max], pseed)?;
        let t1 = Instant::now();
        let mut records = Vec::with_capacity(ladder.len());
        for &n in &ladder {
            let d = estimate_dependent_with(&observed[..n], epsilon, c)?;
            let next = radii[n];
            let tail = d.delta.map(|delta| 1.0 - limit_cdf.cdf(delta));
            records.push(RepRecord {
                rep,
                n,
                feasible: d.feasible,
                delta: d.delta,
                next_radius: next,
                tail,
                breach: tail.is_some_and(|t| t > epsilon),
                radius_breach: d.delta.map(|delta| next > delta),
            });
        }
        Ok((records, t1 - t0, t1.elapsed()))
    };
    let outcomes = pool(cfg.scenario.workers)?.install(|| (0..cfg.scenario.replications).into_par_iter().map(one).collect::<Result<Vec<_>>>())?;

    let t_agg = Instant::now();
    let m = outcomes.len();
    let ladder_entries: Vec<LadderEntry> = ladder
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let recs = outcomes.iter().map(|o| &o.0[k]);
            let feasible = recs.clone().filter(|r| r.feasible).count();
            let breaches = recs.clone().filter(|r| r.breach).count();
            let radius_breaches = recs.filter(|r| r.radius_breach == Some(true)).count();
            let (coverage, se) = binomial(breaches, feasible);
            LadderEntry { n, threshold: epsilon - c.value / (n as f64).sqrt(), feasible, breaches, coverage, se, radius_breaches }
        })
        .collect();
    let top = ladder_entries.last().expect("nonempty ladder").clone();
    let min_n = (top.feasible == 0).then(|| (c.value / epsilon).powi(2).ceil() as u64);
    let timings = Timings {
        constant_ms: ms(constant_time),
        simulate_ms: outcomes.iter().map(|o| ms(o.1)).sum(),
        estimate_ms: outcomes.iter().map(|o| ms(o.2)).sum(),
        aggregate_ms: ms(t_agg.elapsed()),
        total_ms: ms(start.elapsed()),
    };
    Ok(CoverageReport {
        regime: Regime::Dependent,
        m,
        feasible: top.feasible,
        infeasible: m - top.feasible,
        breaches: top.breaches,
        coverage: top.coverage,
        se: top.se,
        alpha,
        epsilon: Some(epsilon),
        n: n_max,
        constant: ConstantEstimate { name: crate::safety::ConstantName::CAlpha, value: c.value, se: c.se },
        min_n,
        assumption_violating: cfg.covariate.assumption_violating(),
        geometric_checks: 0,
        geometric_mismatches: 0,
        ladder: ladder_entries,
        per_rep: outcomes.into_iter().flat_map(|o| o.0).collect(),
        timings: Some(timings),
    })
}

/// Runs whichever regime the scenario selects.
pub fn run_coverage(cfg: &ScenarioConfig) -> Result<CoverageReport> {
    match cfg.estimator.mode {
        Regime::Iid => run_coverage_iid(cfg),
        Regime::Dependent => run_coverage_dependent(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iid(n: usize, alpha: f64, m: usize) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario.horizon = n;
        cfg.scenario.replications = m;
        cfg.scenario.seed = 3;
        cfg.estimator.alpha = alpha;
        cfg.estimator.cn_reps = 500;
        cfg
    }

    #[test]
    fn infeasible_scenario_is_flagged() {
        let r = run_coverage_iid(&iid(5, 0.02, 20)).unwrap();
        assert_eq!(r.feasible, 0);
        assert_eq!(r.infeasible, 20);
        assert_eq!(r.coverage, None);
        assert!(r.min_n.is_some());
        assert!(r.within(0.02));
    }

    #[test]
    fn full_simulation_reproduces_breaches() {
        let mut cfg = iid(60, 0.3, 200);
        let fast = run_coverage_iid(&cfg).unwrap();
        cfg.scenario.simulate_full = true;
        cfg.scenario.particles = 50;
        let full = run_coverage_iid(&cfg).unwrap();
        let flags = |r: &CoverageReport| r.per_rep.iter().map(|x| (x.delta, x.breach)).collect::<Vec<_>>();
        assert_eq!(flags(&fast), flags(&full));
        assert!(fast.feasible > 0);
        assert_eq!(fast.geometric_checks, 2);
        assert_eq!(fast.geometric_mismatches, 0);
    }

    #[test]
    fn reports_are_deterministic_across_worker_counts() {
        let mut cfg = iid(50, 0.3, 64);
        cfg.scenario.workers = 1;
        let mut a = run_coverage_iid(&cfg).unwrap();
        cfg.scenario.workers = 3;
        let mut b = run_coverage_iid(&cfg).unwrap();
        a.timings = None;
        b.timings = None;
        assert_eq!(a, b);
    }

    #[test]
    fn dependent_cycle_runs() {
        let text = "[scenario]\nreplications = 50\nn_ladder = [100, 400]\n[kernel]\nradius_map = \"scaled\"\n[covariate]\nmode = \"cycle\"\nvalues = [1.0, 2.0]\n[estimator]\nmode = \"dependent\"\nalpha = 0.05\nepsilon = 0.1\npaths = 2000\ngrid = 128\n";
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        let r = run_coverage_dependent(&cfg).unwrap();
        assert_eq!(r.ladder.len(), 2);
        assert_eq!(r.ladder[0].feasible, 0);
        assert_eq!(r.ladder[1].feasible, 50);
        assert_eq!(r.per_rep.len(), 100);
        assert!(!r.assumption_violating);
    }

    #[test]
    fn violating_covariate_is_flagged() {
        let text = "[scenario]\nreplications = 10\nallow_violations = true\nhorizon = 400\n[kernel]\nradius_map = \"scaled\"\n[covariate]\nmode = \"iid_violating\"\nlaw = { values = [1.0, 2.0], weights = [1.0, 1.0] }\n[estimator]\nmode = \"dependent\"\nepsilon = 0.2\npaths = 1000\ngrid = 64\n";
        let r = run_coverage(&ScenarioConfig::from_toml_str(text).unwrap()).unwrap();
        assert!(r.assumption_violating);
    }
}
