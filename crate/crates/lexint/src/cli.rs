//! Batch command-line surface.
//!
//! Subcommands: `integrate` (one trajectory → CSV), `benchmark` (figure-style
//! equal-cost sweep → CSV), `order` (fitted convergence slopes), `stability`
//! (linear-system audit report), `calibrate` (λ map). All outputs are
//! byte-stable for identical arguments; numbers are printed with 17
//! significant digits.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    benchmark_figure, calibrate_lambda, configure_threads, estimate_order, fmt_g17,
    geometric_grid, run_cost_units, stability_audit, BenchmarkConfig, CSV_HEADER,
};
use crate::matfun::SquareMatrix;
use crate::schemes::{
    exact_linear_flow, integrate, lookup_scheme, RunStatus, SchemeKind, SchemeSpec,
    SolverSettings,
};
use crate::systems::{circ_init, circ_reference, make_problem, LinearSystem, SYSTEM_NAMES};
use crate::{Error, Result, Vec64};

#[derive(Parser)]
#[command(
    name = "lexint",
    about = "Locally exact ODE integrators: trajectories, benchmarks, audits",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write it as CSV
    Integrate(IntegrateArgs),
    /// Equal-cost benchmark sweep (one CSV row per scheme and step)
    Benchmark(BenchmarkArgs),
    /// Fit empirical convergence orders
    Order(OrderArgs),
    /// Linear-stability audit at small and large steps
    Stability(StabilityArgs),
    /// Calibrate the equal-cost factors lambda
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct SolverFlags {
    /// Fixed-point solver tolerance (max-norm of iterate difference)
    #[arg(long, default_value_t = 3e-16)]
    tol: f64,
    /// Fixed-point iteration cap per step
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
}

impl SolverFlags {
    fn settings(&self) -> Result<SolverSettings<f64>> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Validation("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Validation("max-iter must be at least 1".into()));
        }
        Ok(SolverSettings {
            tol: self.tol,
            max_iter: self.max_iter,
        })
    }
}

#[derive(Args)]
struct IntegrateArgs {
    /// Scheme name from the catalog
    #[arg(long)]
    scheme: String,
    /// System registry name
    #[arg(long)]
    system: String,
    /// Circular-orbit radius (anharmonic2d initial condition)
    #[arg(long)]
    radius: Option<f64>,
    /// Step size h
    #[arg(long)]
    step: f64,
    #[arg(long = "t-end", default_value_t = 12.5)]
    t_end: f64,
    #[command(flatten)]
    solver: SolverFlags,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Preset sweep: euler-r0.2, euler-r5, midtrap-r0.2, midtrap-r1,
    /// grad-r0.2, grad-r1
    #[arg(long, conflicts_with_all = ["scheme", "radius", "steps", "baseline"])]
    preset: Option<String>,
    /// Scheme names (repeatable) for a custom sweep
    #[arg(long)]
    scheme: Vec<String>,
    #[arg(long)]
    radius: Option<f64>,
    /// Comma-separated h-tilde grid for a custom sweep
    #[arg(long)]
    steps: Option<String>,
    /// Cost baseline scheme for a custom sweep
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long = "t-end", default_value_t = 12.5)]
    t_end: f64,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OrderArgs {
    /// Scheme names (repeatable)
    #[arg(long, required = true)]
    scheme: Vec<String>,
    #[arg(long, default_value = "anharmonic2d")]
    system: String,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Comma-separated step grid
    #[arg(long)]
    steps: Option<String>,
    #[arg(long = "t-end", default_value_t = 6.0)]
    t_end: f64,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    /// Scheme names (repeatable); defaults to the whole catalog
    #[arg(long)]
    scheme: Vec<String>,
    /// Comma-separated step grid
    #[arg(long, default_value = "0.1,1,10,100")]
    steps: String,
    #[arg(long = "n-steps", default_value_t = 10)]
    n_steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Preset naming the scheme family and radius
    #[arg(long, conflicts_with_all = ["scheme", "radius", "baseline"])]
    preset: Option<String>,
    #[arg(long)]
    scheme: Vec<String>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    baseline: Option<String>,
    /// Scaled step h-tilde the calibration runs at
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    #[arg(long = "t-end", default_value_t = 12.5)]
    t_end: f64,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Figure-style preset sweeps: scheme family, radius, cost baseline, h̃ grid.
pub struct Preset {
    pub name: &'static str,
    pub schemes: &'static [&'static str],
    pub baseline: &'static str,
    pub radius: f64,
    pub grid_top: f64,
    pub decades: usize,
    pub per_decade: usize,
}

const EULER_SCHEMES: &[&str] = &["EEU", "IEU", "EEU-LEX", "IEU-LEX", "IEU-ILEX"];
const MIDTRAP_SCHEMES: &[&str] = &["IMP", "TR", "IMP-LEX", "IMP-SLEX", "TR-LEX", "TR-SLEX"];
const GRAD_SCHEMES: &[&str] = &[
    "GR-IA",
    "GR-SYM",
    "GR-IA-LEX",
    "GR-IA-SLEX",
    "GR-SYM-LEX",
    "GR-SYM-SLEX",
];

pub const PRESETS: &[Preset] = &[
    Preset { name: "euler-r0.2", schemes: EULER_SCHEMES, baseline: "EEU", radius: 0.2, grid_top: 2e-3, decades: 2, per_decade: 8 },
    Preset { name: "euler-r5", schemes: EULER_SCHEMES, baseline: "EEU", radius: 5.0, grid_top: 2e-3, decades: 2, per_decade: 8 },
    Preset { name: "midtrap-r0.2", schemes: MIDTRAP_SCHEMES, baseline: "IMP", radius: 0.2, grid_top: 5e-2, decades: 2, per_decade: 8 },
    Preset { name: "midtrap-r1", schemes: MIDTRAP_SCHEMES, baseline: "IMP", radius: 1.0, grid_top: 5e-2, decades: 2, per_decade: 8 },
    Preset { name: "grad-r0.2", schemes: GRAD_SCHEMES, baseline: "GR-SYM", radius: 0.2, grid_top: 5e-2, decades: 2, per_decade: 8 },
    Preset { name: "grad-r1", schemes: GRAD_SCHEMES, baseline: "GR-SYM", radius: 1.0, grid_top: 5e-2, decades: 2, per_decade: 8 },
];

pub fn lookup_preset(name: &str) -> Result<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        Error::Validation(format!(
            "unknown preset '{name}'; valid presets: {}",
            PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
        ))
    })
}

// ---------------------------------------------------------------------------
// Command bodies (each returns the full output text)
// ---------------------------------------------------------------------------

fn parse_step_list(s: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for piece in s.split(',') {
        let v: f64 = piece
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("bad step value '{piece}'")))?;
        if v.is_nan() || v <= 0.0 {
            return Err(Error::Validation(format!("step {v} must be positive")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Validation("empty step list".into()));
    }
    Ok(out)
}

fn resolve_schemes(names: &[String]) -> Result<Vec<&'static SchemeSpec>> {
    names.iter().map(|n| lookup_scheme(n)).collect()
}

fn validate_radius(r: f64) -> Result<f64> {
    if r > 0.0 && r < 10.0 {
        Ok(r)
    } else {
        Err(Error::Validation(format!(
            "radius {r} outside (0, 10); circular orbits exist only there"
        )))
    }
}

fn default_x0(system: &str, radius: Option<f64>) -> Result<Vec64> {
    match system {
        "anharmonic2d" => Ok(circ_init(validate_radius(radius.unwrap_or(1.0))?)),
        "harmonic1d" => Ok(Vec64::from_slice(&[1.0, 0.0])),
        "quartic1d" => Ok(Vec64::from_slice(&[0.8, 0.3])),
        "linear" => Ok(Vec64::from_slice(&[1.0, 1.0])),
        other => Err(Error::Validation(format!(
            "unknown system '{other}'; valid systems: {}",
            SYSTEM_NAMES.join(", ")
        ))),
    }
}

fn cmd_integrate(a: &IntegrateArgs) -> Result<String> {
    let spec = lookup_scheme(&a.scheme)?;
    let solver = a.solver.settings()?;
    if a.step.is_nan() || a.step <= 0.0 {
        return Err(Error::Validation("step must be positive".into()));
    }
    let problem = make_problem::<f64>(&a.system)?;
    let x0 = default_x0(&a.system, a.radius)?;
    let run = integrate(spec, &problem, &x0, a.step, a.t_end, &solver)?;
    if let RunStatus::Aborted(reason) = &run.status {
        return Err(Error::Aborted(reason.clone()));
    }

    let dim = x0.dim();
    let mut out = String::new();
    out.push_str(&format!(
        "# scheme={} system={} cost_units={} fp_warnings={}\n",
        spec.name,
        problem.name,
        fmt_g17(run_cost_units(&run)),
        run.solver_warnings
    ));
    out.push('t');
    for j in 0..dim {
        out.push_str(&format!(",y{}", j + 1));
    }
    if run.energies.is_some() {
        out.push_str(",H");
    }
    out.push('\n');
    for (k, t) in run.times.iter().enumerate() {
        out.push_str(&fmt_g17(*t));
        for j in 0..dim {
            out.push(',');
            out.push_str(&fmt_g17(run.states[k].get(j)));
        }
        if let Some(energies) = &run.energies {
            out.push(',');
            out.push_str(&fmt_g17(energies[k]));
        }
        out.push('\n');
    }
    Ok(out)
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Result<String> {
    let (schemes, baseline, radius, grid) = if let Some(name) = &a.preset {
        let p = lookup_preset(name)?;
        (
            p.schemes.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            p.baseline.to_string(),
            p.radius,
            geometric_grid(p.grid_top, p.decades, p.per_decade),
        )
    } else {
        let steps = a.steps.as_deref().ok_or_else(|| {
            Error::Validation("custom benchmark needs --steps (or use --preset)".into())
        })?;
        let baseline = a.baseline.clone().ok_or_else(|| {
            Error::Validation("custom benchmark needs --baseline (or use --preset)".into())
        })?;
        if a.scheme.is_empty() {
            return Err(Error::Validation(
                "custom benchmark needs --scheme (or use --preset)".into(),
            ));
        }
        let radius = a.radius.ok_or_else(|| {
            Error::Validation("custom benchmark needs --radius (or use --preset)".into())
        })?;
        (a.scheme.clone(), baseline, radius, parse_step_list(steps)?)
    };
    let specs = resolve_schemes(&schemes)?;
    let config = BenchmarkConfig {
        radius: validate_radius(radius)?,
        t_end: a.t_end,
        h_tilde_grid: grid,
        baseline,
        solver: a.solver.settings()?,
    };
    let rows = benchmark_figure(&config, &specs)?;
    let mut out = String::with_capacity(rows.len() * 200);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    Ok(out)
}

fn default_order_steps(system: &str) -> Vec<f64> {
    match system {
        // quartic runs hit the fourth-order round-off floor sooner
        "quartic1d" => vec![0.2, 0.1, 0.05, 0.02, 0.01],
        _ => vec![0.2, 0.1, 0.05, 0.02, 0.01, 0.005],
    }
}

/// Reference state evaluator at `t_end` for the order fits: closed form for
/// circular orbits and linear systems, a fine locally exact gradient run for
/// the remaining Hamiltonian systems.
pub fn order_reference(
    system: &str,
    radius: f64,
    x0: &Vec64,
    t_end: f64,
    h_min: f64,
    solver: &SolverSettings<f64>,
) -> Result<Box<dyn Fn(f64) -> Vec64>> {
    match system {
        "anharmonic2d" => Ok(Box::new(move |t| circ_reference(radius, t))),
        "harmonic1d" => {
            let j = SquareMatrix::new(2, vec![0.0, 1.0, -1.0, 0.0])?;
            let ls = LinearSystem::new(j, Vec64::zeros(2))?;
            let x0 = x0.clone();
            Ok(Box::new(move |t| {
                exact_linear_flow(&ls, &x0, t).expect("rotation flow is total")
            }))
        }
        "linear" => {
            let problem = make_problem::<f64>("linear")?;
            let a = problem.ode.eval_jac(x0);
            let b = problem.ode.eval_f(&Vec64::zeros(a.dim()));
            let ls = LinearSystem::new(a, b)?;
            let x0 = x0.clone();
            Ok(Box::new(move |t| {
                exact_linear_flow(&ls, &x0, t).expect("stable linear flow")
            }))
        }
        _ => {
            let spec = lookup_scheme("GR-SYM-SLEX")?;
            let problem = make_problem::<f64>(system)?;
            let run = integrate(spec, &problem, x0, h_min / 20.0, t_end, solver)?;
            if let RunStatus::Aborted(reason) = &run.status {
                return Err(Error::Aborted(format!("reference run: {reason}")));
            }
            let final_state = run.final_state().clone();
            Ok(Box::new(move |_| final_state.clone()))
        }
    }
}

fn cmd_order(a: &OrderArgs) -> Result<String> {
    let solver = a.solver.settings()?;
    let steps = match &a.steps {
        Some(s) => parse_step_list(s)?,
        None => default_order_steps(&a.system),
    };
    let h_min = steps.iter().copied().fold(f64::INFINITY, f64::min);
    let x0 = default_x0(&a.system, Some(a.radius))?;
    let reference = order_reference(&a.system, a.radius, &x0, a.t_end, h_min, &solver)?;
    let mut out = String::new();
    for name in &a.scheme {
        let spec = lookup_scheme(name)?;
        let fit = estimate_order(spec, &a.system, &x0, &reference, &steps, a.t_end, &solver)?;
        out.push_str(&format!(
            "{} slope {:.3} ({} points{})\n",
            spec.name,
            fit.slope,
            fit.points_used,
            if fit.floored > 0 {
                format!(", {} at round-off floor", fit.floored)
            } else {
                String::new()
            }
        ));
    }
    Ok(out)
}

fn cmd_stability(a: &StabilityArgs) -> Result<String> {
    let specs = if a.scheme.is_empty() {
        crate::schemes::CATALOG.iter().collect::<Vec<_>>()
    } else {
        resolve_schemes(&a.scheme)?
    };
    let grid = parse_step_list(&a.steps)?;
    // ẋ = −x for the one-step schemes; the gradient schemes need a
    // Hamiltonian test system, so they audit on the harmonic rotation
    let decay = LinearSystem::new(SquareMatrix::new(1, vec![-1.0])?, Vec64::zeros(1))?;
    let rotation = LinearSystem::new(
        SquareMatrix::new(2, vec![0.0, 1.0, -1.0, 0.0])?,
        Vec64::zeros(2),
    )?;
    let mut out = String::new();
    for spec in specs {
        let ls = if matches!(spec.kind, SchemeKind::Gradient { .. }) {
            &rotation
        } else {
            &decay
        };
        let report = stability_audit(spec, ls, &grid, a.n_steps)?;
        for row in &report.rows {
            if row.diverged {
                out.push_str(&format!("{} h={}: DIVERGED\n", report.scheme, row.h));
            } else {
                let exact = match row.exact_rel_err {
                    Some(e) => format!(", exact rel err {:.3e}", e),
                    None => String::new(),
                };
                out.push_str(&format!(
                    "{} h={}: max amplification {:.6e}{}\n",
                    report.scheme, row.h, row.max_amplification, exact
                ));
            }
        }
    }
    Ok(out)
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<String> {
    let (schemes, baseline, radius) = if let Some(name) = &a.preset {
        let p = lookup_preset(name)?;
        (
            p.schemes.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            p.baseline.to_string(),
            p.radius,
        )
    } else {
        if a.scheme.is_empty() {
            return Err(Error::Validation(
                "calibrate needs --scheme list or --preset".into(),
            ));
        }
        let baseline = a
            .baseline
            .clone()
            .unwrap_or_else(|| a.scheme[0].clone());
        (a.scheme.clone(), baseline, a.radius.unwrap_or(1.0))
    };
    let specs = resolve_schemes(&schemes)?;
    let outcome = calibrate_lambda(
        &specs,
        &baseline,
        validate_radius(radius)?,
        a.step,
        a.t_end,
        &a.solver.settings()?,
    )?;
    let mut out = String::new();
    for (name, lambda) in &outcome.lambda {
        out.push_str(&format!("{name} lambda {:.4}\n", lambda));
    }
    for w in &outcome.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::Dimension(_) | Error::NonFinite(_) => 2,
        _ => 3,
    }
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let stdout = std::io::stdout();
            stdout.lock().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

/// Run the CLI on an argv-style argument list (including the program name)
/// and return the process exit code. The binary is a thin wrapper over this;
/// tests call it directly.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    configure_threads();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with success status
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.cmd {
        Command::Integrate(a) => cmd_integrate(a).map(|text| (text, a.out.clone())),
        Command::Benchmark(a) => cmd_benchmark(a).map(|text| (text, a.out.clone())),
        Command::Order(a) => cmd_order(a).map(|text| (text, a.out.clone())),
        Command::Stability(a) => cmd_stability(a).map(|text| (text, a.out.clone())),
        Command::Calibrate(a) => cmd_calibrate(a).map(|text| (text, a.out.clone())),
    };
    match result {
        Ok((text, out)) => match emit(&text, &out) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
