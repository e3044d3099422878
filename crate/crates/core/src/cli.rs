//! Command-line front end. Exit codes: 0 success, 1 invalid input, 2 runtime failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use serde::Serialize;

use crate::empirical::kolmogorov::{kolmogorov_cdf, kolmogorov_quantile};
use crate::empirical::limit::{c_alpha, default_grid, findim_gaussian_test, simulate_limit_sup, LimitProcessModel};
use crate::empirical::CdfModel;
use crate::error::{Error, Result};
use crate::evolution::{read_trace_csv, run_epidemic, radii_from_trace_rows, write_trace_csv, TraceJson};
use crate::harness::coverage::run_coverage;
use crate::harness::{ScenarioConfig, DEFAULT_CONFIG};
use crate::kernel::{covariate_ecdf_gap, limit_radius_components};
use crate::rng::StreamRng;
use crate::safety::{compute_cn, estimate_dependent_with, estimate_iid_with, CnMethod, IidEstimatorConfig};

#[derive(Debug, Parser)]
#[command(name = "safety", version, about = "Safety areas for epidemics driven by random ball kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one epidemic and write its trace.
    Simulate(SimulateArgs),
    /// Recover the radii from a trace file.
    Radii(RadiiArgs),
    /// Compute the safety threshold from observed radii.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo coverage scenario.
    Coverage(CoverageArgs),
    /// Kolmogorov distribution tables and limit-process samples.
    Dist(DistArgs),
    /// Finite-dimensional limit checks and covariate convergence diagnostics.
    LimitCheck(LimitCheckArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace CSV destination (stdout when omitted).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Full trace JSON destination.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RadiiArgs {
    /// Trace CSV or JSON file.
    trace: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Iid,
    Dependent,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CnArg {
    MonteCarlo,
    Asymptotic,
    DkwBound,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Radii CSV (column `radius`) or trace CSV/JSON.
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Iid)]
    mode: Mode,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum, default_value_t = CnArg::MonteCarlo)]
    cn_method: CnArg,
    #[arg(long, default_value_t = 2000)]
    cn_reps: usize,
    #[arg(long, default_value_t = 0.05)]
    dkw_beta: f64,
    #[arg(long, default_value_t = 20_000)]
    paths: usize,
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Scenario whose limit radius law defines C_alpha (Brownian bridge otherwise).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CoverageArgs {
    #[arg(long, required_unless_present = "init")]
    config: Option<PathBuf>,
    /// Overrides `scenario.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Report destination; defaults to `<output_dir>/coverage_report.json` or stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the reference scenario file and exit.
    #[arg(long)]
    init: bool,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct DistArgs {
    /// Kolmogorov tables: `p,K_inv(p)` for `--p`, `x,K(x)` for `--x`.
    #[arg(long)]
    kolmogorov: bool,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    p: Vec<f64>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    x: Vec<f64>,
    /// Sorted samples of the sup of the limit process.
    #[arg(long)]
    limit_sup: bool,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Scenario whose limit radius law defines the process (Brownian bridge otherwise).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct LimitCheckArgs {
    /// Scenario providing the components and covariate (alternating U(0,1)/U(0,2) otherwise).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    t: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    /// Path lengths for the covariate gap.
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = [100usize, 400, 1600])]
    gap_n: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `argv` (including the program name) and runs the command.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Radii(a) => radii(a),
        Command::Estimate(a) => estimate(a),
        Command::Coverage(a) => coverage(a),
        Command::Dist(a) => dist(a),
        Command::LimitCheck(a) => limit_check(a),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::from_path(p).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("{}: {io}", p.display())),
            other => other,
        }),
        None => Ok(ScenarioConfig::default()),
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, mut w: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn input_error(path: &Path, e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
        Error::Csv(c) => Error::InvalidArgument(format!("{}: {c}", path.display())),
        Error::Json(j) => Error::InvalidArgument(format!("{}: {j}", path.display())),
        other => other,
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let mut epi = cfg.epidemic();
    if let Some(p) = a.particles {
        epi.particles = p;
    }
    let horizon = a.horizon.unwrap_or(cfg.scenario.horizon);
    let trace = run_epidemic(&epi, horizon, &mut StreamRng::seed_from_u64(a.seed))?;
    if let Some(path) = &a.json {
        write_json(&TraceJson::try_from(&trace)?, BufWriter::new(File::create(path)?))?;
    }
    if a.csv.is_some() || a.json.is_none() {
        write_trace_csv(&trace, output(&a.csv)?)?;
    }
    Ok(())
}

/// Radii from a radii CSV, a trace CSV or a trace JSON.
fn read_radii(path: &Path) -> Result<Vec<f64>> {
    let read = || -> Result<Vec<f64>> {
        if path.extension().is_some_and(|e| e == "json") {
            let t: TraceJson = serde_json::from_reader(File::open(path)?)?;
            let ds: Vec<_> = t.diameters.iter().map(|&d| crate::scalar::exact(d)).collect();
            return Ok(crate::evolution::radii_from_diameters(&ds)?.iter().map(crate::scalar::Scalar::to_f64_lossy).collect());
        }
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if let Some(col) = headers.iter().position(|h| h.trim() == "radius") {
            let mut out = Vec::new();
            for rec in r.records() {
                let rec = rec?;
                let field = rec.get(col).unwrap_or("").trim();
                out.push(field.parse::<f64>().map_err(|e| Error::invalid(format!("bad radius {field:?}: {e}")))?);
            }
            return Ok(out);
        }
        if headers.iter().any(|h| h == "diameter_analytic") {
            return radii_from_trace_rows(&read_trace_csv(File::open(path)?)?);
        }
        Err(Error::invalid("input needs a `radius` column or a trace header"))
    };
    read().map_err(|e| input_error(path, e))
}

fn radii(a: RadiiArgs) -> Result<()> {
    let radii = read_radii(&a.trace)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(output(&a.out)?);
    w.write_record(["step", "radius"])?;
    for (i, r) in radii.iter().enumerate() {
        w.write_record([(i + 1).to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn limit_model_for(config: &Option<PathBuf>, grid: usize) -> Result<LimitProcessModel> {
    match config {
        None => LimitProcessModel::brownian_bridge(grid),
        Some(_) => {
            let cfg = load_config(config)?;
            let law = cfg.covariate.limit_law()?;
            let components = limit_radius_components(&cfg.kernel, &cfg.noise, &law, cfg.estimator.nodes)?;
            let mean = CdfModel::mixture(components.clone())?;
            crate::empirical::limit::build_weighted_limit_model(&components, &default_grid(&mean, grid)?)
        }
    }
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let radii = read_radii(&a.input)?;
    let mut rng = StreamRng::seed_from_u64(a.seed);
    let result = match a.mode {
        Mode::Iid => {
            let method = match a.cn_method {
                CnArg::MonteCarlo => CnMethod::MonteCarlo { reps: a.cn_reps },
                CnArg::Asymptotic => CnMethod::Asymptotic,
                CnArg::DkwBound => CnMethod::DkwBound { beta: a.dkw_beta },
            };
            let cfg = IidEstimatorConfig { alpha: a.alpha, f0: CdfModel::standard_uniform(), cn_method: method };
            let cn = compute_cn(radii.len().max(1), &cfg, &mut rng)?;
            estimate_iid_with(&radii, a.alpha, cn, &method)?
        }
        Mode::Dependent => {
            let epsilon = a.epsilon.ok_or_else(|| Error::invalid("--epsilon is required in dependent mode"))?;
            if !(a.alpha > 0.0 && a.alpha < 1.0) {
                return Err(Error::invalid("alpha must lie in (0, 1)"));
            }
            let model = limit_model_for(&a.config, a.grid)?;
            let c = c_alpha(&model, a.alpha, a.paths, &mut rng)?;
            estimate_dependent_with(&radii, epsilon, c)?
        }
    };
    write_json(&result, io::stdout().lock())?;
    if !result.feasible {
        return Err(Error::NoFeasibleDelta { threshold: result.threshold_used, min_n: result.min_n.unwrap_or(0) });
    }
    Ok(())
}

fn coverage(a: CoverageArgs) -> Result<()> {
    if a.init {
        print!("{DEFAULT_CONFIG}");
        return Ok(());
    }
    let mut cfg = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.scenario.seed = seed;
    }
    let mut report = run_coverage(&cfg)?;
    if let Some(t) = &report.timings {
        eprintln!(
            "timings (ms): constant {:.1}, simulate {:.1}, estimate {:.1}, aggregate {:.1}, total {:.1}",
            t.constant_ms, t.simulate_ms, t.estimate_ms, t.aggregate_ms, t.total_ms
        );
    }
    if !a.timings {
        report.timings = None;
    }
    let dest = a.out.or_else(|| cfg.scenario.output_dir.as_ref().map(|d| Path::new(d).join("coverage_report.json")));
    if let Some(dir) = dest.as_ref().and_then(|p| p.parent()).filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_json(&report, output(&dest)?)
}

fn dist(a: DistArgs) -> Result<()> {
    if !a.kolmogorov && !a.limit_sup {
        return Err(Error::invalid("choose --kolmogorov and/or --limit-sup"));
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(io::stdout().lock());
    if a.kolmogorov {
        if !a.x.is_empty() {
            w.write_record(["x", "K(x)"])?;
            for &x in &a.x {
                w.write_record([x.to_string(), kolmogorov_cdf(x)?.to_string()])?;
            }
        }
        if !a.p.is_empty() || a.x.is_empty() {
            let ps = if a.p.is_empty() { (1..100).map(|i| i as f64 / 100.0).collect() } else { a.p.clone() };
            w.write_record(["p", "K_inv(p)"])?;
            for p in ps {
                w.write_record([p.to_string(), kolmogorov_quantile(p)?.to_string()])?;
            }
        }
    }
    if a.limit_sup {
        let model = limit_model_for(&a.config, a.grid)?;
        let sups = simulate_limit_sup(&model, a.paths, &mut StreamRng::seed_from_u64(a.seed))?;
        w.write_record(["sup"])?;
        for s in sups {
            w.write_record([s.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct GapEntry {
    n: usize,
    gap: f64,
}

#[derive(Serialize)]
struct LimitCheckReport {
    findim: crate::empirical::FindimReport,
    covariate_gap: Vec<GapEntry>,
    assumption_violating: bool,
}

fn limit_check(a: LimitCheckArgs) -> Result<()> {
    let (components, covariate) = match &a.config {
        None => (
            vec![CdfModel::standard_uniform(), CdfModel::uniform(0.0, 2.0)?],
            crate::kernel::CovariateProcess::Cycle { values: vec![1.0, 2.0] },
        ),
        Some(_) => {
            let cfg = load_config(&a.config)?;
            // Components follow the covariate path, one conditional law per step.
            let path = cfg.covariate.path(a.n.max(1), &mut StreamRng::seed_from_u64(a.seed));
            let laws = crate::kernel::conditional_radius_laws(&cfg.kernel, &cfg.noise, &path)?;
            (laws, cfg.covariate.clone())
        }
    };
    let t = if a.t.is_empty() {
        let mean = CdfModel::average(&components)?;
        vec![mean.quantile(0.25), mean.quantile(0.5), mean.quantile(0.75)]
    } else {
        a.t.clone()
    };
    let mut rng = StreamRng::seed_from_u64(a.seed);
    let findim = findim_gaussian_test(&components, &t, a.n, a.reps, &mut rng)?;
    let covariate_gap = a
        .gap_n
        .iter()
        .map(|&n| covariate_ecdf_gap(&covariate, n, &mut rng).map(|gap| GapEntry { n, gap }))
        .collect::<Result<Vec<_>>>()?;
    let report = LimitCheckReport { findim, covariate_gap, assumption_violating: covariate.assumption_violating() };
    write_json(&report, io::stdout().lock())
}
