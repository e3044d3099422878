use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::empirical::limit::DEFAULT_GRID;
use crate::error::{Error, Result};
use crate::evolution::{EpidemicConfig, InitialSupport};
use crate::geometry::DEFAULT_HULL_THRESHOLD;
use crate::kernel::{CovariateProcess, KernelSpec, NoiseFamily, RadiusMap};
use crate::safety::CnMethod;

/// Reference scenario printed by `coverage --init`.
pub const DEFAULT_CONFIG: &str = r#"# Coverage scenario. Every key is optional except where noted.

[scenario]
dimension = 2
# Number of observed radii n; the threshold is checked against r_{n+1}.
horizon = 200
# Particles per generation when simulate_full = true (0 = analytic chain only).
particles = 0
replications = 1000
seed = 1
# Worker threads for replications (0 = all cores).
workers = 0
# Run the full epidemic and recover the radii from the support diameters.
simulate_full = false
# Permit covariate modes that break the fast-convergence hypothesis.
allow_violations = false
# Sample sizes for the dependent regime; empty means [horizon].
n_ladder = []

[initial]
shape = "point"

[kernel]
radius_map = "identity"
profile = "uniform_ball"

[noise]
family = "uniform"
a = 0.0
b = 1.0

[covariate]
mode = "constant"
value = 1.0

[estimator]
# "iid" or "dependent".
mode = "iid"
alpha = 0.1
# Required for mode = "dependent".
# epsilon = 0.1
# "monte_carlo", "asymptotic" or "dkw_bound".
cn_method = "monte_carlo"
cn_reps = 2000
dkw_beta = 0.05
# Limit-process paths and grid size for C_alpha.
paths = 20000
grid = 512
# Quadrature nodes for a continuous covariate limit law.
nodes = 64
"#;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub dimension: usize,
    pub horizon: usize,
    pub particles: usize,
    pub replications: usize,
    pub seed: u64,
    pub workers: usize,
    pub simulate_full: bool,
    pub allow_violations: bool,
    pub n_ladder: Vec<usize>,
    pub output_dir: Option<String>,
    pub hull_threshold: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            dimension: 2,
            horizon: 200,
            particles: 0,
            replications: 1000,
            seed: 1,
            workers: 0,
            simulate_full: false,
            allow_violations: false,
            n_ladder: Vec::new(),
            output_dir: None,
            hull_threshold: DEFAULT_HULL_THRESHOLD,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    Iid,
    Dependent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CnChoice {
    #[default]
    MonteCarlo,
    Asymptotic,
    DkwBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub mode: Regime,
    pub alpha: f64,
    pub epsilon: Option<f64>,
    pub cn_method: CnChoice,
    pub cn_reps: usize,
    pub dkw_beta: f64,
    pub paths: usize,
    pub grid: usize,
    pub nodes: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            mode: Regime::Iid,
            alpha: 0.1,
            epsilon: None,
            cn_method: CnChoice::MonteCarlo,
            cn_reps: 2000,
            dkw_beta: 0.05,
            paths: 20_000,
            grid: DEFAULT_GRID,
            nodes: 64,
        }
    }
}

impl EstimatorSection {
    pub fn cn_method(&self) -> CnMethod {
        match self.cn_method {
            CnChoice::MonteCarlo => CnMethod::MonteCarlo { reps: self.cn_reps },
            CnChoice::Asymptotic => CnMethod::Asymptotic,
            CnChoice::DkwBound => CnMethod::DkwBound { beta: self.dkw_beta },
        }
    }
}

fn default_noise() -> NoiseFamily {
    NoiseFamily::Uniform { a: 0.0, b: 1.0 }
}

fn default_covariate() -> CovariateProcess {
    CovariateProcess::Constant { value: 1.0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub initial: InitialSupport,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default = "default_noise")]
    pub noise: NoiseFamily,
    #[serde(default = "default_covariate")]
    pub covariate: CovariateProcess,
    #[serde(default)]
    pub estimator: EstimatorSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: ScenarioSection::default(),
            initial: InitialSupport::default(),
            kernel: KernelSpec::default(),
            noise: default_noise(),
            covariate: default_covariate(),
            estimator: EstimatorSection::default(),
        }
    }
}

impl ScenarioConfig {
    /// Parses and validates a TOML scenario.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn epidemic(&self) -> EpidemicConfig {
        EpidemicConfig {
            dimension: self.scenario.dimension,
            initial: self.initial.clone(),
            kernel: self.kernel,
            noise: self.noise.clone(),
            covariate: self.covariate.clone(),
            particles: self.scenario.particles,
            hull_threshold: self.scenario.hull_threshold,
        }
    }

    /// Sample sizes for the dependent regime, ascending.
    pub fn ladder(&self) -> Vec<usize> {
        let mut l = if self.scenario.n_ladder.is_empty() { vec![self.scenario.horizon] } else { self.scenario.n_ladder.clone() };
        l.sort_unstable();
        l.dedup();
        l
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let s = &self.scenario;
        if s.dimension == 0 {
            return bad("scenario.dimension must be at least 1".into());
        }
        if s.horizon == 0 {
            return bad("scenario.horizon must be at least 1".into());
        }
        if s.replications == 0 {
            return bad("scenario.replications must be at least 1".into());
        }
        if s.n_ladder.contains(&0) {
            return bad("scenario.n_ladder entries must be at least 1".into());
        }
        let e = &self.estimator;
        if !(e.alpha > 0.0 && e.alpha < 1.0) {
            return bad(format!("estimator.alpha must lie in (0, 1), got {}", e.alpha));
        }
        if let Some(eps) = e.epsilon {
            if !(eps > 0.0 && eps < 1.0) {
                return bad(format!("estimator.epsilon must lie in (0, 1), got {eps}"));
            }
        }
        if e.paths == 0 || e.grid < 2 || e.nodes == 0 {
            return bad("estimator.paths and estimator.nodes must be positive and estimator.grid at least 2".into());
        }
        e.cn_method().validate().map_err(|err| Error::Config(err.to_string()))?;
        self.epidemic().validate().map_err(|err| Error::Config(err.to_string()))?;
        match e.mode {
            Regime::Iid => {
                if self.kernel.radius_map != RadiusMap::Identity && !matches!(self.covariate, CovariateProcess::Constant { .. }) {
                    return bad("iid mode needs radii that depend on the noise only (identity radius map or constant covariate)".into());
                }
            }
            Regime::Dependent => {
                if e.epsilon.is_none() {
                    return bad("estimator.epsilon is required in dependent mode".into());
                }
                if self.covariate.assumption_violating() && !s.allow_violations {
                    return bad("covariate mode violates the convergence hypothesis; set scenario.allow_violations = true".into());
                }
            }
        }
        Ok(())
    }
}
