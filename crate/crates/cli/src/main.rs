//! `sheetvar`: simulation, limit constants, moment oracle and Monte Carlo
//! experiments for fractional Brownian sheets from the command line.
//!
//! Exit codes: 0 success, 1 I/O, 2 usage or invalid input, 3 numerical
//! failure, 4 inconsistent regime or branch, 5 an experiment verdict failed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use sheetvar_core::fgn::{FactorMethod, FieldSampler, HurstVector, SamplerOptions};
use sheetvar_core::harness::{self, config_schema, parse_config, ExperimentReport};
use sheetvar_core::hermite::{power_expansion, HermiteExpansion};
use sheetvar_core::lattice::{self, LatticeField, LatticeShape};
use sheetvar_core::limits::{self, BOUNDARY_TOL, TAIL_TOL};
use sheetvar_core::moments::{self, DEFAULT_GUARD_CAP};
use sheetvar_core::rng::{stream_id, SeedSpec};
use sheetvar_core::variations::{self, EvalMode, Functional};
use sheetvar_core::Error;

#[derive(Parser)]
#[command(name = "sheetvar", version, about = "Fractional Brownian sheet variations lab")]
struct Cli {
    /// Increase log verbosity (-v info, -vv one line per replication).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a sheet or its standardized increments on a lattice.
    Simulate(SimulateArgs),
    /// Regime, rescaling and limit constants for a Hurst vector and functional.
    Constants(ConstantsArgs),
    /// Sample a field and write one of its variation processes.
    Variations(VariationsArgs),
    /// Evaluate a power variation or its fluctuation on a grid of points.
    Interpolate(InterpolateArgs),
    /// Exact moment of a normalized variation sum with its upper bound.
    Oracle(OracleArgs),
    /// Run a Monte Carlo experiment or suite from a JSON config.
    Experiment(ExperimentArgs),
    /// Print the JSON schema of experiment configs.
    Schema,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKind {
    Fbs,
    Increments,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Bin,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Circulant,
    Cholesky,
}

#[derive(clap::Args)]
struct FieldArgs {
    /// Comma-separated Hurst exponents, one per axis.
    #[arg(long, value_delimiter = ',', required = true)]
    hurst: Vec<f64>,
    /// Comma-separated cell counts, one per axis.
    #[arg(long, value_delimiter = ',', required = true)]
    shape: Vec<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "circulant")]
    method: Method,
}

impl FieldArgs {
    fn hurst(&self) -> Result<HurstVector, Error> {
        HurstVector::new(self.hurst.clone())
    }

    fn sampler(&self) -> Result<(HurstVector, FieldSampler), Error> {
        let hurst = self.hurst()?;
        let shape = LatticeShape::new(self.shape.clone())?;
        let opts = SamplerOptions {
            method: match self.method {
                Method::Circulant => FactorMethod::Circulant,
                Method::Cholesky => FactorMethod::Cholesky,
            },
            ..SamplerOptions::default()
        };
        let sampler = FieldSampler::new(&hurst, &shape, &opts)?;
        Ok((hurst, sampler))
    }

    fn seed(&self, label: &str) -> SeedSpec {
        SeedSpec::new(self.seed, stream_id(label, 0))
    }
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "fbs")]
    kind: SimKind,
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "bin")]
    format: Format,
}

#[derive(clap::Args)]
struct ConstantsArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    hurst: Vec<f64>,
    /// `Pk:k` for a single Hermite polynomial, `power:p` for a centered
    /// power, or `json:path` for an expansion file.
    #[arg(long)]
    functional: String,
    /// Lattice for the rescaling factor c(m).
    #[arg(long, value_delimiter = ',')]
    shape: Option<Vec<usize>>,
    #[arg(long, default_value_t = TAIL_TOL)]
    tail_tol: f64,
    #[arg(long, default_value_t = BOUNDARY_TOL)]
    boundary_tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum VarKind {
    /// Partial sums of f(Z).
    Raw,
    /// Partial sums divided by sqrt(c(m)).
    Rescaled,
    /// Power variation of order p.
    Power,
    /// Rescaled fluctuation of the power variation around its limit.
    Fluctuation,
}

#[derive(clap::Args)]
struct VariationsArgs {
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long, value_enum, default_value = "rescaled")]
    kind: VarKind,
    /// Functional for raw and rescaled variations, `power:p` for the others.
    #[arg(long)]
    functional: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, default_value_t = BOUNDARY_TOL)]
    boundary_tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Power,
    Fluctuation,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Piecewise,
    Multilinear,
}

#[derive(clap::Args)]
struct InterpolateArgs {
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long)]
    power: usize,
    #[arg(long, value_enum, default_value = "fluctuation")]
    target: Target,
    #[arg(long, value_enum, default_value = "multilinear")]
    mode: Mode,
    /// CSV file of evaluation points, one comma-separated t vector per row.
    #[arg(long, conflicts_with = "points")]
    t_grid: Option<PathBuf>,
    /// Uniform grid with this many points per axis on [0, 1].
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = BOUNDARY_TOL)]
    boundary_tol: f64,
}

#[derive(clap::Args)]
struct OracleArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    hurst: Vec<f64>,
    /// Comma-separated lattice extents l.
    #[arg(long, value_delimiter = ',', required = true)]
    lattice: Vec<usize>,
    #[arg(long)]
    functional: String,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = DEFAULT_GUARD_CAP)]
    guard_cap: f64,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "SHEETVAR_THREADS")]
    threads: Option<usize>,
    /// Directory for the JSON and CSV reports.
    #[arg(long)]
    out: PathBuf,
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => 1,
            Error::Embedding { .. }
            | Error::Cholesky { .. }
            | Error::NonFinite(_)
            | Error::QuadratureNonConvergence(_)
            | Error::GuardCap { .. }
            | Error::InvalidCorrelation(_) => 3,
            Error::Branch(_) | Error::RegimeMismatch(_) => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Constants(a) => constants(a),
        Command::Variations(a) => variations_cmd(a),
        Command::Interpolate(a) => interpolate(a),
        Command::Oracle(a) => oracle(a),
        Command::Experiment(a) => experiment(a),
        Command::Schema => print_json(&config_schema()).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn print_json(v: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(Error::from)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}")?;
    Ok(())
}

fn parse_functional(spec: &str) -> Result<HermiteExpansion, Failure> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| usage(format!("functional `{spec}`: expected Pk:k, power:p or json:path")))?;
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| usage(format!("functional `{spec}`: `{s}` is not a non-negative integer")))
    };
    Ok(match kind {
        "Pk" | "P" => HermiteExpansion::hermite(int(arg)?)?,
        "power" => power_expansion(int(arg)?)?,
        "json" => {
            let text = fs::read_to_string(arg)?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{arg}: {e}")))?
        }
        _ => return Err(usage(format!("functional `{spec}`: unknown kind `{kind}`"))),
    })
}

fn power_order(spec: &str) -> Result<usize, Failure> {
    spec.strip_prefix("power:")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| usage(format!("functional `{spec}`: power variations need power:p")))
}

fn write_field(field: &LatticeField, out: &Path, format: Format) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(out)?);
    match format {
        Format::Bin => lattice::write_binary(field, &mut w)?,
        Format::Csv => lattice::write_csv(field, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

/// Variance of the corner value implied by the factors actually used,
/// skipped for long axes where the dense check is too costly.
fn implied_corner_variance(sampler: &FieldSampler) -> Option<f64> {
    let mut total = 1.0;
    for (factor, h) in sampler.factors().iter().zip(sampler.hurst().iter()) {
        let m = factor.len();
        if m > 2048 {
            return None;
        }
        let sum: f64 = factor.implied_covariance().iter().sum();
        total *= sum / (m as f64).powf(2.0 * h);
    }
    Some(total)
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let (hurst, sampler) = a.field.sampler()?;
    let incr = sampler.sample_increments(a.field.seed("simulate"));
    let sheet = sampler.fbs_from_increments(&incr)?;
    let corner: Vec<usize> = sampler.cells().extents().to_vec();
    let corner_value = sheet.get(&corner)?;
    let field = match a.kind {
        SimKind::Fbs => sheet,
        SimKind::Increments => incr,
    };
    write_field(&field, &a.out, a.format)?;
    print_json(&json!({
        "kind": match a.kind { SimKind::Fbs => "fbs", SimKind::Increments => "increments" },
        "hurst": hurst.as_slice(),
        "shape": sampler.cells().extents(),
        "seed": a.field.seed,
        "out": a.out,
        "corner_value": corner_value,
        "corner_variance": 1.0,
        "implied_corner_variance": implied_corner_variance(&sampler),
    }))?;
    Ok(0)
}

fn constants(a: ConstantsArgs) -> CmdResult {
    let hurst = HurstVector::new(a.hurst)?;
    let e = parse_functional(&a.functional)?;
    let shape = a.shape.map(LatticeShape::new).transpose()?;
    let c = limits::limit_constants(&hurst, &e, shape.as_ref(), a.tail_tol, a.boundary_tol)?;
    let mut v = serde_json::to_value(&c).map_err(Error::from)?;
    v["hurst"] = json!(hurst.as_slice());
    v["functional"] = serde_json::to_value(&e).map_err(Error::from)?;
    print_json(&v)?;
    Ok(0)
}

fn variations_cmd(a: VariationsArgs) -> CmdResult {
    let (hurst, sampler) = a.field.sampler()?;
    let incr = sampler.sample_increments(a.field.seed("variations"));
    let (field, at_one, kind) = match a.kind {
        VarKind::Raw | VarKind::Rescaled => {
            let e = parse_functional(&a.functional)?;
            let f = Functional::Hermite(e.clone());
            let u = variations::generalized_variation(&incr, &f)?;
            if matches!(a.kind, VarKind::Raw) {
                let one = u.eval(&vec![1.0; hurst.dim()], EvalMode::Piecewise)?;
                (u.values().clone(), one, "raw")
            } else {
                let ub = variations::rescaled_variation(&u, &hurst, e.rank(), a.boundary_tol)?;
                let one = ub.eval(&vec![1.0; hurst.dim()], EvalMode::Piecewise)?;
                (ub.values().clone(), one, "rescaled")
            }
        }
        VarKind::Power | VarKind::Fluctuation => {
            let p = power_order(&a.functional)?;
            let v = variations::power_variation(&incr, p)?;
            if matches!(a.kind, VarKind::Power) {
                let one = v.eval(&vec![1.0; hurst.dim()], EvalMode::Piecewise)?;
                (v.values().clone(), one, "power")
            } else {
                let fl = variations::fluctuation(&v, &hurst, a.boundary_tol)?;
                let one = fl.eval(&vec![1.0; hurst.dim()], EvalMode::Piecewise)?;
                (fl.lattice().values().clone(), one, "fluctuation")
            }
        }
    };
    write_field(&field, &a.out, a.format)?;
    print_json(&json!({
        "kind": kind,
        "hurst": hurst.as_slice(),
        "shape": sampler.cells().extents(),
        "seed": a.field.seed,
        "out": a.out,
        "value_at_one": at_one,
    }))?;
    Ok(0)
}

fn read_t_grid(path: &Path, d: usize) -> Result<Vec<Vec<f64>>, Failure> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('t') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| usage(format!("{}:{}: {e}", path.display(), line_no + 1)))?;
        if row.len() != d {
            return Err(usage(format!(
                "{}:{}: expected {d} coordinates, got {}",
                path.display(),
                line_no + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn uniform_grid(points: usize, d: usize) -> Result<Vec<Vec<f64>>, Failure> {
    if points < 2 {
        return Err(usage("--points must be at least 2"));
    }
    let axis: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let mut grid = vec![Vec::new()];
    for _ in 0..d {
        grid = grid
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                axis.iter().map(move |&x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    Ok(grid)
}

fn interpolate(a: InterpolateArgs) -> CmdResult {
    let (hurst, sampler) = a.field.sampler()?;
    let d = hurst.dim();
    let ts = match (&a.t_grid, a.points) {
        (Some(path), _) => read_t_grid(path, d)?,
        (None, Some(n)) => uniform_grid(n, d)?,
        (None, None) => return Err(usage("one of --t-grid or --points is required")),
    };
    let mode = match a.mode {
        Mode::Piecewise => EvalMode::Piecewise,
        Mode::Multilinear => EvalMode::Multilinear,
    };
    let v = variations::power_variation(&sampler.sample_increments(a.field.seed("interpolate")), a.power)?;
    let values: Vec<f64> = match a.target {
        Target::Power => ts.iter().map(|t| v.eval(t, mode)).collect::<Result<_, _>>()?,
        Target::Fluctuation => {
            let fl = variations::fluctuation(&v, &hurst, a.boundary_tol)?;
            ts.iter().map(|t| fl.eval(t, mode)).collect::<Result<_, _>>()?
        }
    };
    let mut w = BufWriter::new(File::create(&a.out)?);
    variations::write_trace(&ts, &values, &mut w)?;
    w.flush()?;
    print_json(&json!({ "points": ts.len(), "out": a.out }))?;
    Ok(0)
}

fn oracle(a: OracleArgs) -> CmdResult {
    let hurst = HurstVector::new(a.hurst)?;
    let l = LatticeShape::new(a.lattice)?;
    let e = parse_functional(&a.functional)?;
    let exact = moments::exact_variation_moment(&hurst, &l, &e, a.p, a.guard_cap)?;
    let bound = if a.p >= 2 {
        Some(moments::moment_bound_rhs(&hurst, &e, a.p, &l)?)
    } else {
        None
    };
    print_json(&json!({
        "hurst": hurst.as_slice(),
        "expansion": e,
        "lattice": l.extents(),
        "p": a.p,
        "exact_moment": exact,
        "bound_rhs": bound.map(|b| b.value),
        "bound_partial": bound.map(|b| b.partial),
        "diagram_count": moments::variation_diagram_count(&e, a.p)?,
    }))?;
    Ok(0)
}

fn git_describe() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

fn write_report(r: &ExperimentReport, dir: &Path) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(r).map_err(Error::from)?;
    fs::write(dir.join(format!("{}.json", r.name)), json + "\n")?;
    let mut w = BufWriter::new(File::create(dir.join(format!("{}.csv", r.name)))?);
    r.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn experiment(a: ExperimentArgs) -> CmdResult {
    let text = fs::read_to_string(&a.config)?;
    let suite = parse_config(&text)?;
    let threads = a
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(usage("--threads must be positive"));
    }
    fs::create_dir_all(&a.out)?;
    let describe = git_describe();
    let mut all_passed = true;
    for cfg in &suite.experiments {
        log::info!("running {} ({}) on {threads} threads", cfg.name, cfg.kind.as_str());
        let mut report = harness::run_experiment(cfg, threads)?;
        report.provenance.git_describe = describe.clone();
        write_report(&report, &a.out)?;
        let verdict = if report.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {} ({:.1}s)", report.name, report.provenance.wall_time_s);
        for f in report.failures() {
            println!("  failed: {} = {} (target {:?}, z {:?})", f.name, f.empirical, f.target, f.z);
        }
        all_passed &= report.passed;
    }
    Ok(if all_passed { 0 } else { 5 })
}
