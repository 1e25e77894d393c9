//! Batch front end: model files in, reports and exports out.

pub mod schema;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble, equilibrium_report, modes, sample_model, step1_geometry, step2_wrenches, AssemblyOptions,
    EquilibriumReport, LinearLftModel, MultibodyModel,
};
use crate::error::{Error, Result};
use crate::lft::{format_number, output_precision, BoundsMode, NumMatrix, ParamKind, ParamSet, Point};
use crate::oracle::{fd_linearize, rel_frobenius, FdConfig, NonlinearEvaluator, TRIM_TOL};
use crate::ss::StateSpace;

pub use schema::{load_model, load_model_str};

/// Largest relative A/B deviation accepted by `validate`.
pub const VALIDATION_TOL: f64 = 1e-4;

pub const POLES_HEADER: &str = "re,im,freq_hz,damping";

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Trim { .. }
        | Error::IllPosed { .. }
        | Error::GimbalLock { .. }
        | Error::Singular { .. }
        | Error::OutOfBounds { .. } => EXIT_NUMERICAL,
        Error::Validation(_) => EXIT_VALIDATION,
        _ => EXIT_SCHEMA,
    }
}

// ---- report ------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurrenceRow {
    pub param: String,
    pub kind: ParamKind,
    pub before: usize,
    pub after: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointDelta {
    pub point: Point,
    pub rel_a: f64,
    pub rel_b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub seed: u64,
    pub points: Vec<PointDelta>,
    pub max_rel_a: f64,
    pub max_rel_b: f64,
    pub tolerance: f64,
}

impl ValidationSummary {
    pub fn passed(&self) -> bool {
        self.max_rel_a <= self.tolerance && self.max_rel_b <= self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub n_states: Option<usize>,
    pub equilibrium: EquilibriumReport,
    /// Nonlinear residual of the equilibrium at nominal.
    pub trim_residual: f64,
    pub occurrences: Vec<OccurrenceRow>,
    pub validation: Option<ValidationSummary>,
}

impl RunReport {
    fn new(model: &MultibodyModel, equilibrium: EquilibriumReport, trim_residual: f64) -> Self {
        RunReport {
            model: model.name.clone(),
            n_states: None,
            equilibrium,
            trim_residual,
            occurrences: Vec::new(),
            validation: None,
        }
    }

    fn with_linear(mut self, lm: &LinearLftModel) -> Self {
        self.n_states = Some(lm.n_states());
        self.occurrences = occurrence_table(lm);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn render(&self) -> String {
        let dg = output_precision();
        let num = |v: f64| format_number(v, dg);
        let mut s = String::new();
        let _ = writeln!(s, "model {}", self.model);
        let _ = writeln!(s, "equilibrium at nominal");
        for b in &self.equilibrium.bodies {
            let _ = writeln!(
                s,
                "  body {:<8} euler_deg = [{}, {}, {}]",
                b.name,
                num(b.euler_rad[0].to_degrees()),
                num(b.euler_rad[1].to_degrees()),
                num(b.euler_rad[2].to_degrees())
            );
        }
        for j in &self.equilibrium.joints {
            let w: Vec<String> = j.wrench_child_on_joint.iter().map(|&v| num(v)).collect();
            let _ = writeln!(
                s,
                "  joint {:<7} angle_deg = {}  Cm = {}  W = [{}]",
                j.name,
                num(j.angle_rad.to_degrees()),
                num(j.torque),
                w.join(", ")
            );
        }
        let r: Vec<String> = self.equilibrium.root_residual.iter().map(|&v| num(v)).collect();
        let _ = writeln!(s, "  root residual = [{}]", r.join(", "));
        let _ = writeln!(s, "  nonlinear residual = {}", num(self.trim_residual));
        if let Some(n) = self.n_states {
            let _ = writeln!(s, "states {n}");
        }
        if !self.occurrences.is_empty() {
            let _ = writeln!(s, "occurrences");
            let _ = writeln!(s, "  {:<10} {:<9} {:>7} {:>6}", "param", "kind", "before", "after");
            for o in &self.occurrences {
                let _ = writeln!(s, "  {:<10} {:<9} {:>7} {:>6}", o.param, o.kind, o.before, o.after);
            }
        }
        if let Some(v) = &self.validation {
            let _ = writeln!(s, "validation (seed {}, {} points)", v.seed, v.points.len());
            for (k, p) in v.points.iter().enumerate() {
                let _ = writeln!(s, "  point {k:>3}  rel_A = {}  rel_B = {}", num(p.rel_a), num(p.rel_b));
            }
            let _ = writeln!(
                s,
                "  max rel_A = {}  max rel_B = {}  tolerance = {}  {}",
                num(v.max_rel_a),
                num(v.max_rel_b),
                num(v.tolerance),
                if v.passed() { "PASS" } else { "FAIL" }
            );
        }
        s
    }
}

/// One row per parameter of the model's perturbation blocks.
pub fn occurrence_table(lm: &LinearLftModel) -> Vec<OccurrenceRow> {
    let after = lm.occurrences();
    let mut names: BTreeSet<&String> = after.keys().collect();
    names.extend(lm.occurrences_before.keys());
    names
        .into_iter()
        .map(|n| OccurrenceRow {
            param: n.clone(),
            kind: lm.params.get(n).map(|p| p.kind).unwrap_or(ParamKind::Uncertain),
            before: lm.occurrences_before.get(n).copied().unwrap_or(0),
            after: after.get(n).copied().unwrap_or(0),
        })
        .collect()
}

// ---- commands ----------------------------------------------------------------------

fn nominal_equilibrium(model: &MultibodyModel) -> Result<RunReport> {
    let geo = step1_geometry(model)?;
    let sol = step2_wrenches(model, geo)?;
    let nominal = model.params.nominal_point();
    let eq = equilibrium_report(model, &sol, &nominal)?;
    let ev = NonlinearEvaluator::new(model, &nominal)?;
    let residual = ev.trim_residual(&sol.torques_at(&nominal)?)?;
    if residual > TRIM_TOL {
        return Err(Error::Trim {
            residual,
            tolerance: TRIM_TOL,
            context: "nonlinear equations at the nominal equilibrium".into(),
        });
    }
    Ok(RunReport::new(model, eq, residual))
}

/// Steps 1 and 2 at nominal, checked against the nonlinear equations.
pub fn cmd_equilibrium(model: &MultibodyModel) -> Result<RunReport> {
    nominal_equilibrium(model)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LinearizeFlags {
    pub no_reduce: bool,
    pub strict_bounds: bool,
}

/// Full linearization; returns the model and its report.
pub fn cmd_linearize(model: &MultibodyModel, flags: LinearizeFlags) -> Result<(LinearLftModel, RunReport)> {
    let report = nominal_equilibrium(model)?;
    let lm = assemble(model, AssemblyOptions { reduce: !flags.no_reduce })?;
    if flags.strict_bounds {
        check_box(&lm)?;
    }
    let report = report.with_linear(&lm);
    Ok((lm, report))
}

/// Well-posedness at every corner of the parameter box.
fn check_box(lm: &LinearLftModel) -> Result<()> {
    let params: Vec<_> = lm.system.system.params().cloned().collect();
    if params.len() > 16 {
        return Err(Error::model("--strict-bounds supports at most 16 parameters"));
    }
    for k in 0..(1usize << params.len()) {
        let point: Point = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), if k >> i & 1 == 1 { p.upper } else { p.lower }))
            .collect();
        lm.system.evaluate_with(&point, BoundsMode::Strict)?;
    }
    Ok(())
}

/// Linearization cross-checked against finite differences of the nonlinear model.
pub fn cmd_validate(model: &MultibodyModel, n_points: usize, seed: u64) -> Result<RunReport> {
    let (lm, report) = cmd_linearize(model, LinearizeFlags::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![model.params.nominal_point()];
    for _ in 0..n_points {
        points.push(model.params.random_point(&mut rng));
    }
    let deltas = parallel_map(&points, |pt| validate_point(model, &lm, pt))?;
    let max_rel_a = deltas.iter().map(|d| d.rel_a).fold(0.0, f64::max);
    let max_rel_b = deltas.iter().map(|d| d.rel_b).fold(0.0, f64::max);
    let mut report = report;
    report.validation = Some(ValidationSummary {
        seed,
        points: deltas,
        max_rel_a,
        max_rel_b,
        tolerance: VALIDATION_TOL,
    });
    Ok(report)
}

pub fn validate_point(model: &MultibodyModel, lm: &LinearLftModel, point: &Point) -> Result<PointDelta> {
    let ss = sample_model(lm, point, BoundsMode::Strict)?;
    let ev = NonlinearEvaluator::new(model, point)?;
    let torques = ev.trim_torques()?;
    let (a, b) = fd_linearize(&ev, &torques, FdConfig::default())?;
    Ok(PointDelta {
        point: point.clone(),
        rel_a: rel_frobenius(&ss.a, &a),
        rel_b: rel_frobenius(&ss.b, &b),
    })
}

/// `map` over `items` on all cores, results in input order.
fn parallel_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    let f = &f;
    let parts: Vec<Result<Vec<U>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Result<Vec<U>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

// ---- sampling ------------------------------------------------------------------------

/// Numeric matrices at one point, as written by `sample`.
#[derive(Clone, Debug, Serialize)]
pub struct SampleFile {
    pub index: usize,
    pub point: Point,
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub a: NumMatrix,
    pub b: NumMatrix,
    pub c: NumMatrix,
    pub d: NumMatrix,
}

/// Parse `name=lo:hi:n`, optionally suffixed `@deg` or `@rad` for angles.
///
/// With a unit suffix the values are angles, converted to the tangent
/// parameter `name` or to the tangent parameter of the angle called `name`.
pub fn parse_grid(spec: &str, params: &ParamSet) -> Result<(String, Vec<f64>)> {
    let bad = |msg: &str| Error::schema("--grid", spec, msg);
    let (name, range) = spec.split_once('=').ok_or_else(|| bad("expected name=lo:hi:n"))?;
    let (range, unit) = match range.split_once('@') {
        Some((r, u)) => (r, Some(u)),
        None => (range, None),
    };
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("expected name=lo:hi:n"));
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad("lower value is not a number"))?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad("upper value is not a number"))?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad("count is not an integer"))?;
    if n == 0 {
        return Err(bad("count must be positive"));
    }
    let values: Vec<f64> = (0..n)
        .map(|k| if n == 1 { lo } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect();
    match unit {
        None => {
            if params.get(name).is_none() {
                return Err(bad(&format!("unknown parameter `{name}`")));
            }
            Ok((name.to_string(), values))
        }
        Some(u) => {
            let k = match u {
                "deg" => std::f64::consts::PI / 180.0,
                "rad" => 1.0,
                _ => return Err(bad("unit must be deg or rad")),
            };
            let angle = params
                .angle(name)
                .or_else(|| params.angles().find(|a| a.base_angle_name == name))
                .ok_or_else(|| bad(&format!("`{name}` is not an angle parameter")))?;
            Ok((angle.t.name.clone(), values.iter().map(|&v| angle.tangent_of(v * k)).collect()))
        }
    }
}

/// Cartesian product of grid axes, first axis slowest.
pub fn grid_points(axes: &[(String, Vec<f64>)]) -> Vec<Point> {
    let mut out = vec![Point::new()];
    for (name, values) in axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.insert(name.clone(), v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Points from a JSON array of `{name: value}` objects.
pub fn read_points(path: &Path) -> Result<Vec<Point>> {
    let src = std::fs::read_to_string(path)?;
    let pts: Vec<BTreeMap<String, f64>> = serde_json::from_str(&src).map_err(|e| {
        Error::schema(path.display().to_string(), format!("line {}", e.line()), e.to_string())
    })?;
    Ok(pts)
}

pub fn poles_csv(ss: &StateSpace) -> String {
    let dg = output_precision();
    let mut s = String::from(POLES_HEADER);
    s.push('\n');
    for m in modes(&ss.a) {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            format_number(m.re, dg),
            format_number(m.im, dg),
            format_number(m.freq_hz, dg),
            format_number(m.damping, dg)
        );
    }
    s
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Evaluate the model at every point (missing parameters take their nominal
/// value) and write `point_NNNN.json`, `poles_NNNN.csv` and `points.csv`.
pub fn cmd_sample(lm: &LinearLftModel, points: &[Point], out_dir: &Path, mode: BoundsMode) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let full: Vec<Point> = points.iter().map(|p| lm.params.complete(p)).collect();
    for p in &full {
        for k in p.keys() {
            if lm.params.get(k).is_none() {
                return Err(Error::schema("points", k.clone(), "unknown parameter"));
            }
        }
    }
    let indexed: Vec<(usize, &Point)> = full.iter().enumerate().collect();
    let files = parallel_map(&indexed, |&(i, p)| {
        let ss = sample_model(lm, p, mode)?;
        let file = SampleFile {
            index: i,
            point: p.clone(),
            states: lm.states.clone(),
            inputs: lm.inputs.clone(),
            outputs: lm.outputs.clone(),
            a: NumMatrix::from_mat(&ss.a),
            b: NumMatrix::from_mat(&ss.b),
            c: NumMatrix::from_mat(&ss.c),
            d: NumMatrix::from_mat(&ss.d),
        };
        let mpath = out_dir.join(format!("point_{i:04}.json"));
        write_atomic(&mpath, &serde_json::to_string_pretty(&file)?)?;
        write_atomic(&out_dir.join(format!("poles_{i:04}.csv")), &poles_csv(&ss))?;
        Ok(mpath)
    })?;
    let names: Vec<String> = lm.params.iter().map(|p| p.name.clone()).collect();
    let dg = output_precision();
    let mut index = format!("index,{}\n", names.join(","));
    for (i, p) in full.iter().enumerate() {
        let vals: Vec<String> = names.iter().map(|n| format_number(p[n], dg)).collect();
        let _ = writeln!(index, "{i},{}", vals.join(","));
    }
    write_atomic(&out_dir.join("points.csv"), &index)?;
    Ok(files)
}

// ---- argument parsing ----------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "lftmb", version, about = "LFT models of rigid multibody trees around equilibrium")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Also write the report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibrium angles, joint torques and wrenches at nominal.
    Equilibrium {
        model: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Write the parametric linear model.
    Linearize {
        model: PathBuf,
        /// Output file for the model export.
        #[arg(short, long)]
        out: PathBuf,
        /// Skip structural order reduction.
        #[arg(long)]
        no_reduce: bool,
        /// Require well-posedness at every corner of the parameter box.
        #[arg(long)]
        strict_bounds: bool,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Numeric matrices and poles at given points of a linear model export.
    Sample {
        export: PathBuf,
        /// JSON array of parameter points.
        #[arg(long, conflicts_with = "grid")]
        points: Option<PathBuf>,
        /// Grid axis `name=lo:hi:n[@deg|@rad]`; repeat for a product grid.
        #[arg(long)]
        grid: Vec<String>,
        #[arg(short, long)]
        out_dir: PathBuf,
        /// Refuse points outside the parameter bounds.
        #[arg(long)]
        strict_bounds: bool,
    },
    /// Compare the linear model with finite differences of the nonlinear one.
    Validate {
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        report: ReportArgs,
    },
}

fn emit(report: &RunReport, args: &ReportArgs) -> Result<()> {
    print!("{}", report.render());
    if let Some(path) = &args.report {
        write_atomic(path, &report.to_json()?)?;
    }
    Ok(())
}

fn run_inner(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Equilibrium { model, report } => {
            let m = load_model(&model)?;
            emit(&cmd_equilibrium(&m)?, &report)?;
        }
        Command::Linearize {
            model,
            out,
            no_reduce,
            strict_bounds,
            report,
        } => {
            let m = load_model(&model)?;
            let (lm, rep) = cmd_linearize(&m, LinearizeFlags { no_reduce, strict_bounds })?;
            write_atomic(&out, &lm.to_json()?)?;
            emit(&rep, &report)?;
        }
        Command::Sample {
            export,
            points,
            grid,
            out_dir,
            strict_bounds,
        } => {
            let lm = LinearLftModel::from_json(&std::fs::read_to_string(&export)?)?;
            let pts = match points {
                Some(p) => read_points(&p)?,
                None if grid.is_empty() => vec![Point::new()],
                None => {
                    let axes = grid
                        .iter()
                        .map(|g| parse_grid(g, &lm.params))
                        .collect::<Result<Vec<_>>>()?;
                    grid_points(&axes)
                }
            };
            let mode = if strict_bounds { BoundsMode::Strict } else { BoundsMode::Warn };
            let files = cmd_sample(&lm, &pts, &out_dir, mode)?;
            println!("wrote {} points to {}", files.len(), out_dir.display());
        }
        Command::Validate {
            model,
            points,
            seed,
            report,
        } => {
            let m = load_model(&model)?;
            let rep = cmd_validate(&m, points, seed)?;
            emit(&rep, &report)?;
            if !rep.validation.as_ref().is_some_and(|v| v.passed()) {
                return Err(Error::Validation(format!(
                    "relative deviation above {VALIDATION_TOL:e}"
                )));
            }
        }
    }
    Ok(EXIT_OK)
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match run_inner(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
