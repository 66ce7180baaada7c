//! Verification and benchmark harness: global-error measurement, empirical
//! convergence orders, the equal-cost λ calibration, figure-style benchmark
//! sweeps, linear-stability audits, and orbital-period extraction.
//!
//! Benchmarks compare schemes at equal computational cost: each scheme runs
//! with step `h = λh̃`, where λ is calibrated iteratively until the weighted
//! evaluation counts agree with a designated baseline scheme to 1%.

use rayon::prelude::*;

use crate::gradschemes::gradient_step_linear;
use crate::matfun::Vector;
use crate::schemes::{
    exact_linear_step, integrate, step_linear, RunRecord, RunStatus, SchemeKind, SchemeSpec,
    SolverSettings,
};
use crate::systems::{circ_init, circ_reference, make_problem, CostSnapshot, LinearSystem};
use crate::{Error, Result, Scalar};

/// Cap the rayon worker count from the `LEXINT_THREADS` environment
/// variable. No-op if the global pool is already configured.
pub fn configure_threads() {
    if let Ok(v) = std::env::var("LEXINT_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Cost accounting
// ---------------------------------------------------------------------------

/// Weighted evaluation count, in scalar-evaluation units.
///
/// One unit per scalar-field evaluation: `H` costs 1, a gradient `m`, a
/// Hessian `m²`, `F` costs `d`, a Jacobian `d²`, and one matrix-function
/// evaluation (`φ₁`/`tanhc`) costs `d` units. Hamiltonian-backed runs count
/// only the `H`/gradient/Hessian/matrix-function calls, because their `F`
/// and Jacobian evaluators are thin wrappers over the gradient and Hessian
/// and would double-count.
pub fn cost_units(c: &CostSnapshot, dim: usize, hamiltonian: bool) -> f64 {
    let d = dim as f64;
    let matfun = c.matfun_evals as f64 * d;
    if hamiltonian {
        let m = dim as f64 / 2.0;
        c.h_evals as f64 + c.grad_evals as f64 * m + c.hess_evals as f64 * m * m + matfun
    } else {
        c.f_evals as f64 * d + c.jac_evals as f64 * d * d + matfun
    }
}

/// Cost of a finished run in evaluation units.
pub fn run_cost_units<S: Scalar>(run: &RunRecord<S>) -> f64 {
    cost_units(&run.cost, run.states[0].dim(), run.energies.is_some())
}

/// Maximum relative energy drift over a Hamiltonian run.
pub fn energy_drift<S: Scalar>(run: &RunRecord<S>) -> Option<S> {
    let energies = run.energies.as_ref()?;
    let e0 = energies[0];
    let scale = e0.abs().max(S::epsilon());
    energies
        .iter()
        .map(|e| (*e - e0).abs() / scale)
        .fold(S::zero(), |a, b| a.max(b))
        .into()
}

// ---------------------------------------------------------------------------
// Errors and orders
// ---------------------------------------------------------------------------

/// Euclidean norm of the final-state deviation from the reference solution
/// at `t_end`. The run must have reached `t_end`.
pub fn global_error<S: Scalar>(
    run: &RunRecord<S>,
    reference: impl Fn(S) -> Vector<S>,
    t_end: S,
) -> Result<S> {
    let t = run.final_time();
    if (t - t_end).abs() > S::of(1e-9) * t_end.max(S::one()) {
        return Err(Error::Validation(format!(
            "run ended at t = {t} instead of {t_end}"
        )));
    }
    Ok(run.final_state().sub(&reference(t_end)).norm())
}

/// Least-squares slope of `log(error)` vs `log(h)`.
#[derive(Clone, Debug)]
pub struct OrderFit<S: Scalar> {
    pub slope: S,
    pub points_used: usize,
    /// Points discarded because the error hit the round-off floor.
    pub floored: usize,
}

/// Fit the empirical convergence order from per-step-size global errors.
/// Errors below the 1e-13 floor are excluded (round-off regime) and counted
/// in the fit report.
pub fn fit_order<S: Scalar>(samples: &[(S, S)]) -> Result<OrderFit<S>> {
    let floor = S::of(1e-13);
    let usable: Vec<(S, S)> = samples
        .iter()
        .copied()
        .filter(|(_, e)| *e > floor)
        .collect();
    let floored = samples.len() - usable.len();
    if usable.len() < 2 {
        return Err(Error::Validation(
            "too few error samples above the round-off floor to fit a slope".into(),
        ));
    }
    let n = S::of(usable.len() as f64);
    let (mut sx, mut sy, mut sxx, mut sxy) = (S::zero(), S::zero(), S::zero(), S::zero());
    for (h, e) in &usable {
        let x = h.ln();
        let y = e.ln();
        sx = sx + x;
        sy = sy + y;
        sxx = sxx + x * x;
        sxy = sxy + x * y;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    Ok(OrderFit {
        slope,
        points_used: usable.len(),
        floored,
    })
}

/// Run a scheme over a grid of step sizes and fit the convergence order of
/// the global error at `t_end` against the reference evaluator.
pub fn estimate_order<S: Scalar>(
    spec: &SchemeSpec,
    system: &str,
    x0: &Vector<S>,
    reference: impl Fn(S) -> Vector<S>,
    steps: &[S],
    t_end: S,
    solver: &SolverSettings<S>,
) -> Result<OrderFit<S>> {
    let mut samples = Vec::with_capacity(steps.len());
    for &h in steps {
        let problem = make_problem::<S>(system)?;
        let run = integrate(spec, &problem, x0, h, t_end, solver)?;
        if let RunStatus::Aborted(reason) = &run.status {
            return Err(Error::Aborted(format!("order run at h = {h}: {reason}")));
        }
        samples.push((h, global_error(&run, &reference, t_end)?));
    }
    fit_order(&samples)
}

// ---------------------------------------------------------------------------
// λ calibration
// ---------------------------------------------------------------------------

/// Result of one equal-cost calibration.
#[derive(Clone, Debug)]
pub struct CalibrationOutcome<S: Scalar> {
    /// Scheme name → calibrated λ, in input order.
    pub lambda: Vec<(String, S)>,
    /// One line per iteration, for the CLI report.
    pub transcript: Vec<String>,
    pub warnings: Vec<String>,
}

impl<S: Scalar> CalibrationOutcome<S> {
    pub fn lambda_of(&self, name: &str) -> Option<S> {
        self.lambda
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, l)| *l)
    }
}

fn probe_cost<S: Scalar>(
    spec: &SchemeSpec,
    radius: S,
    h: S,
    t_end: S,
    solver: &SolverSettings<S>,
) -> Result<f64> {
    let problem = make_problem::<S>("anharmonic2d")?;
    let run = integrate(spec, &problem, &circ_init(radius), h, t_end, solver)?;
    if let RunStatus::Aborted(reason) = &run.status {
        return Err(Error::Aborted(format!(
            "{} calibration run at h = {h}: {reason}",
            spec.name
        )));
    }
    Ok(run_cost_units(&run))
}

/// Calibrate the cost factors λ on the benchmark system: each scheme's step
/// is `h = λh̃`, and λ is iterated (`λ ← λ·cost/cost_baseline`, damped after
/// 10 rounds) until its run cost matches the baseline scheme's cost at
/// `h = h̃` to 1%.
pub fn calibrate_lambda<S: Scalar>(
    schemes: &[&SchemeSpec],
    baseline: &str,
    radius: S,
    h_tilde: S,
    t_end: S,
    solver: &SolverSettings<S>,
) -> Result<CalibrationOutcome<S>> {
    let base_spec = schemes
        .iter()
        .find(|s| s.name == baseline)
        .ok_or_else(|| {
            Error::Validation(format!("baseline scheme '{baseline}' not in the scheme list"))
        })?;
    let base_cost = probe_cost(base_spec, radius, h_tilde, t_end, solver)?;
    let mut out = CalibrationOutcome {
        lambda: Vec::new(),
        transcript: vec![format!(
            "baseline {baseline}: h_tilde {h_tilde:e}, cost {base_cost:.1} units"
        )],
        warnings: Vec::new(),
    };
    for spec in schemes {
        if spec.name == baseline {
            out.lambda.push((spec.name.to_string(), S::one()));
            continue;
        }
        let mut lambda = S::one();
        let mut converged = false;
        for round in 1..=40 {
            let cost = probe_cost(spec, radius, lambda * h_tilde, t_end, solver)?;
            let ratio = cost / base_cost;
            out.transcript.push(format!(
                "{} round {round}: lambda {:.6}, cost ratio {ratio:.4}",
                spec.name, lambda
            ));
            if (ratio - 1.0).abs() <= 0.01 {
                converged = true;
                break;
            }
            // damp once the plain proportional update starts to oscillate
            let factor = if round > 10 {
                1.0 + (ratio - 1.0) * 0.5
            } else {
                ratio
            };
            lambda = lambda * S::of(factor);
        }
        if !converged {
            out.warnings.push(format!(
                "{}: cost did not settle to 1% within 40 rounds (lambda {:.6})",
                spec.name, lambda
            ));
        }
        out.lambda.push((spec.name.to_string(), lambda));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Benchmark sweeps
// ---------------------------------------------------------------------------

/// One figure-style sweep: a circular-orbit radius, a grid of scaled steps
/// h̃, and the scheme set with its cost baseline.
#[derive(Clone, Debug)]
pub struct BenchmarkConfig<S: Scalar> {
    pub radius: S,
    pub t_end: S,
    pub h_tilde_grid: Vec<S>,
    pub baseline: String,
    pub solver: SolverSettings<S>,
}

impl<S: Scalar> BenchmarkConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > S::zero() && self.radius < S::of(10.0)) {
            return Err(Error::Validation(format!(
                "radius {} outside (0, 10); circular orbits exist only there",
                self.radius
            )));
        }
        if self.h_tilde_grid.is_empty() {
            return Err(Error::Validation("empty step grid".into()));
        }
        Ok(())
    }
}

/// Geometric step grid with `per_decade` points per decade, descending from
/// `top` over `decades` decades.
pub fn geometric_grid<S: Scalar>(top: S, decades: usize, per_decade: usize) -> Vec<S> {
    let n = decades * per_decade;
    (0..=n)
        .map(|k| top * S::of(10.0).powf(-S::of(k as f64) / S::of(per_decade as f64)))
        .collect()
}

/// One CSV row of a benchmark sweep.
#[derive(Clone, Debug)]
pub struct BenchRow<S: Scalar> {
    pub scheme: String,
    pub radius: S,
    pub h_tilde: S,
    pub lambda: S,
    pub h: S,
    pub t_end: S,
    pub global_error: S,
    pub energy_drift: S,
    pub cost_units: f64,
    pub fp_warnings: usize,
    pub status: String,
}

pub const CSV_HEADER: &str =
    "scheme,R,h_tilde,lambda,h,t_end,global_error,energy_drift,cost_units,fp_warnings,status";

/// 17-significant-digit scientific formatting; the CSV byte-stability
/// contract hangs on this.
pub fn fmt_g17<S: Scalar>(x: S) -> String {
    format!("{:.16e}", x)
}

impl<S: Scalar> BenchRow<S> {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.scheme,
            fmt_g17(self.radius),
            fmt_g17(self.h_tilde),
            fmt_g17(self.lambda),
            fmt_g17(self.h),
            fmt_g17(self.t_end),
            fmt_g17(self.global_error),
            fmt_g17(self.energy_drift),
            fmt_g17(S::of(self.cost_units)),
            self.fp_warnings,
            self.status
        )
    }
}

fn sweep_point<S: Scalar>(
    config: &BenchmarkConfig<S>,
    schemes: &[&SchemeSpec],
    h_tilde: S,
) -> Result<Vec<BenchRow<S>>> {
    let calib = calibrate_lambda(
        schemes,
        &config.baseline,
        config.radius,
        h_tilde,
        config.t_end,
        &config.solver,
    )?;
    let mut rows = Vec::with_capacity(schemes.len());
    for spec in schemes {
        let lambda = calib.lambda_of(spec.name).expect("calibrated above");
        let h = lambda * h_tilde;
        let problem = make_problem::<S>("anharmonic2d")?;
        let x0 = circ_init(config.radius);
        let radius = config.radius;
        match integrate(spec, &problem, &x0, h, config.t_end, &config.solver) {
            Ok(run) => {
                let (err, status) = match &run.status {
                    RunStatus::Ok => (
                        global_error(&run, |t| circ_reference(radius, t), config.t_end)?,
                        "ok".to_string(),
                    ),
                    RunStatus::Aborted(reason) => {
                        (S::nan(), format!("aborted: {}", reason.replace(',', ";")))
                    }
                };
                rows.push(BenchRow {
                    scheme: spec.name.to_string(),
                    radius: config.radius,
                    h_tilde,
                    lambda,
                    h,
                    t_end: config.t_end,
                    global_error: err,
                    energy_drift: energy_drift(&run).unwrap_or(S::zero()),
                    cost_units: run_cost_units(&run),
                    fp_warnings: run.solver_warnings,
                    status,
                });
            }
            Err(e) => rows.push(BenchRow {
                scheme: spec.name.to_string(),
                radius: config.radius,
                h_tilde,
                lambda,
                h,
                t_end: config.t_end,
                global_error: S::nan(),
                energy_drift: S::nan(),
                cost_units: 0.0,
                fp_warnings: 0,
                status: format!("failed: {}", e.to_string().replace(',', ";")),
            }),
        }
    }
    Ok(rows)
}

/// Run the full sweep: one row per (scheme, h̃), with λ calibrated per h̃
/// point. Per-run failures become rows with a non-`ok` status; they never
/// abort the sweep. Sweep points run in parallel, merged in grid order.
pub fn benchmark_figure<S: Scalar + Send + Sync>(
    config: &BenchmarkConfig<S>,
    schemes: &[&SchemeSpec],
) -> Result<Vec<BenchRow<S>>> {
    config.validate()?;
    let point_results: Vec<Result<Vec<BenchRow<S>>>> = config
        .h_tilde_grid
        .par_iter()
        .map(|&h_tilde| sweep_point(config, schemes, h_tilde))
        .collect();
    let mut per_point = Vec::with_capacity(point_results.len());
    for r in point_results {
        per_point.push(r?);
    }
    // canonical order: scheme-major, h̃ descending as given in the grid
    let mut rows = Vec::new();
    for (si, _) in schemes.iter().enumerate() {
        for point in &per_point {
            rows.push(point[si].clone());
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Stability audit
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct StabilityRow<S: Scalar> {
    pub h: S,
    /// max over steps of ‖xₙ‖ / ‖x₀‖.
    pub max_amplification: S,
    /// Locally exact schemes: worst per-step relative deviation from the
    /// exact propagator.
    pub exact_rel_err: Option<S>,
    pub diverged: bool,
}

#[derive(Clone, Debug)]
pub struct StabilityReport<S: Scalar> {
    pub scheme: String,
    pub rows: Vec<StabilityRow<S>>,
}

/// Audit a scheme on a linear system over a grid of step sizes (including
/// large ones — the implicit equations are solved exactly here, not by
/// fixed-point iteration). Locally exact schemes are additionally checked
/// per step against the exact propagator.
pub fn stability_audit<S: Scalar>(
    spec: &SchemeSpec,
    ls: &LinearSystem<S>,
    h_grid: &[S],
    n_steps: usize,
) -> Result<StabilityReport<S>> {
    let n = ls.dim();
    // gradient schemes need the quadratic-Hamiltonian form of the system:
    // A = S M with M symmetric, b = S c
    let grad_form = match spec.kind {
        SchemeKind::Gradient { kind, anchor } => {
            let s = crate::systems::symplectic_form::<S>(n / 2);
            if !n.is_multiple_of(2) {
                return Err(Error::Validation(
                    "gradient schemes need an even-dimensional system".into(),
                ));
            }
            let m_mat = s.matmul(&ls.a).scale(-S::one()); // S⁻¹A
            if m_mat.sub(&m_mat.transpose()).max_abs()
                > S::of(1e-12) * m_mat.max_abs().max(S::one())
            {
                return Err(Error::Validation(
                    "system is not Hamiltonian: S⁻¹A is not symmetric".into(),
                ));
            }
            let c = s.matvec(&ls.b).scale(-S::one());
            Some((kind, anchor != crate::schemes::Anchor::None, m_mat, c))
        }
        SchemeKind::OneStep { .. } => None,
    };

    let x0 = Vector::from_slice(&vec![S::one(); n]);
    let x0_norm = x0.norm().max(S::epsilon());
    let mut rows = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        let mut x = x0.clone();
        let mut max_amp = S::one();
        let mut worst_rel: Option<S> = spec.is_locally_exact().then(S::zero);
        let mut diverged = false;
        for _ in 0..n_steps {
            let next = match (&grad_form, spec.kind) {
                (Some((kind, modified, m_mat, c)), _) => {
                    gradient_step_linear(*kind, *modified, m_mat, c, &x, h)?
                }
                (None, SchemeKind::OneStep { kernel, anchor }) => {
                    step_linear(kernel, anchor, ls, &x, h, spec.is_locally_exact())?
                }
                _ => unreachable!(),
            };
            if let Some(worst) = worst_rel.as_mut() {
                let exact = exact_linear_step(ls, &x, h)?;
                // once e^{hA}x sinks below round-off of the state being
                // propagated, absolute accuracy at the state scale is all a
                // finite-precision solve of the scheme equation can carry;
                // the floor keeps the 1e-10 threshold meaningful there
                let floor = S::of(4e10) * S::epsilon() * x.norm_inf();
                let denom = exact.norm_inf().max(floor).max(S::of(1e-300));
                let rel = next.sub(&exact).norm_inf() / denom;
                *worst = worst.max(rel);
            }
            x = next;
            let amp = x.norm() / x0_norm;
            max_amp = max_amp.max(amp);
            if !x.is_finite() || amp > S::of(1e6) {
                diverged = true;
                break;
            }
        }
        rows.push(StabilityRow {
            h,
            max_amplification: max_amp,
            exact_rel_err: worst_rel,
            diverged,
        });
    }
    Ok(StabilityReport {
        scheme: spec.name.to_string(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Orbital periods
// ---------------------------------------------------------------------------

/// Period of a planar orbit, from unwrapping the polar angle of the
/// `(x¹, x²)` components until the first full revolution, with linear
/// interpolation between the bracketing samples.
pub fn orbital_period<S: Scalar>(run: &RunRecord<S>) -> Result<S> {
    let tau = S::of(std::f64::consts::TAU);
    let pi = S::of(std::f64::consts::PI);
    let angle_of = |y: &Vector<S>| y.get(1).atan2(y.get(0));
    let mut prev_angle = angle_of(&run.states[0]);
    let mut total = S::zero();
    for k in 1..run.states.len() {
        let angle = angle_of(&run.states[k]);
        let mut d = angle - prev_angle;
        // unwrap the principal-value jump
        if d > pi {
            d = d - tau;
        } else if d < -pi {
            d = d + tau;
        }
        let next_total = total + d;
        if next_total.abs() >= tau {
            let frac = (tau - total.abs()) / (next_total.abs() - total.abs());
            let t0 = run.times[k - 1];
            return Ok(t0 + frac * (run.times[k] - t0));
        }
        total = next_total;
        prev_angle = angle;
    }
    Err(Error::Validation(
        "trajectory does not complete a full revolution".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfun::SquareMatrix;
    use crate::schemes::{lookup_scheme, CATALOG};
    use crate::systems::{circ_period, make_problem};

    type M = SquareMatrix<f64>;
    type V = Vector<f64>;

    fn scalar_decay() -> LinearSystem<f64> {
        LinearSystem::new(M::new(1, vec![-1.0]).unwrap(), V::zeros(1)).unwrap()
    }

    #[test]
    fn global_error_zero_against_itself() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let spec = lookup_scheme("IMP").unwrap();
        let run = integrate(
            spec,
            &p,
            &circ_init(1.0f64),
            0.05,
            1.0,
            &SolverSettings::default(),
        )
        .unwrap();
        let final_state = run.final_state().clone();
        let err = global_error(&run, |_| final_state.clone(), 1.0).unwrap();
        assert_eq!(err, 0.0);
        assert!(global_error(&run, |_| final_state.clone(), 2.0).is_err());
    }

    #[test]
    fn eeu_error_lands_in_sanity_band() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let spec = lookup_scheme("EEU").unwrap();
        let run = integrate(
            spec,
            &p,
            &circ_init(0.2f64),
            0.01,
            12.5,
            &SolverSettings::default(),
        )
        .unwrap();
        let err = global_error(&run, |t| circ_reference(0.2, t), 12.5).unwrap();
        assert!(err > 1e-3 && err < 1.0, "EEU error {err}");
    }

    #[test]
    fn cost_units_hand_check() {
        // 10 EEU steps on the benchmark: one gradient per step through the
        // induced field, m = 2 units each, nothing else counted
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let spec = lookup_scheme("EEU").unwrap();
        let run = integrate(
            spec,
            &p,
            &circ_init(1.0f64),
            0.1,
            1.0,
            &SolverSettings::default(),
        )
        .unwrap();
        assert_eq!(run.cost.grad_evals, 10);
        assert_eq!(run.cost.matfun_evals, 0);
        assert_eq!(run_cost_units(&run), 20.0);
    }

    #[test]
    fn fit_order_recovers_power_law() {
        let samples: Vec<(f64, f64)> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&h: &f64| (h, 3.0 * h.powi(2)))
            .collect();
        let fit = fit_order(&samples).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert_eq!(fit.floored, 0);
    }

    #[test]
    fn fit_order_drops_floored_points() {
        let samples = vec![(0.1f64, 1e-2), (0.05, 2.5e-3), (0.025, 1e-14)];
        let fit = fit_order(&samples).unwrap();
        assert_eq!(fit.floored, 1);
        assert_eq!(fit.points_used, 2);
        assert!((fit.slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn estimate_order_eeu_is_first_order() {
        let spec = lookup_scheme("EEU").unwrap();
        let fit = estimate_order(
            spec,
            "anharmonic2d",
            &circ_init(1.0f64),
            |t| circ_reference(1.0, t),
            &[0.1, 0.05, 0.02, 0.01, 0.005, 0.002],
            6.0,
            &SolverSettings::default(),
        )
        .unwrap();
        assert!((fit.slope - 1.0).abs() <= 0.25, "slope {}", fit.slope);
    }

    #[test]
    fn estimate_order_imp_lex_is_second_order() {
        let spec = lookup_scheme("IMP-LEX").unwrap();
        let fit = estimate_order(
            spec,
            "anharmonic2d",
            &circ_init(1.0f64),
            |t| circ_reference(1.0, t),
            &[0.2, 0.1, 0.05, 0.02, 0.01],
            6.0,
            &SolverSettings::default(),
        )
        .unwrap();
        assert!((fit.slope - 2.0).abs() <= 0.25, "slope {}", fit.slope);
    }

    #[test]
    fn calibration_baseline_is_unity_and_ordering_holds() {
        let schemes: Vec<&SchemeSpec> = ["EEU", "EEU-LEX"]
            .iter()
            .map(|n| lookup_scheme(n).unwrap())
            .collect();
        let out = calibrate_lambda(
            &schemes,
            "EEU",
            0.2f64,
            1e-3,
            12.5,
            &SolverSettings::default(),
        )
        .unwrap();
        assert_eq!(out.lambda_of("EEU"), Some(1.0));
        let lex = out.lambda_of("EEU-LEX").unwrap();
        assert!(lex > 1.0, "EEU-LEX lambda {lex}");
        assert!(out.warnings.is_empty(), "{:?}", out.warnings);
    }

    #[test]
    fn stability_ieu_lex_at_h_100() {
        let spec = lookup_scheme("IEU-LEX").unwrap();
        let report = stability_audit(spec, &scalar_decay(), &[1.0, 10.0, 100.0], 3).unwrap();
        for row in &report.rows {
            assert!(!row.diverged);
            assert!(
                row.exact_rel_err.unwrap() <= 1e-10,
                "h {} rel {}",
                row.h,
                row.exact_rel_err.unwrap()
            );
        }
    }

    #[test]
    fn stability_eeu_divergence_contrast() {
        let spec = lookup_scheme("EEU").unwrap();
        let report = stability_audit(spec, &scalar_decay(), &[3.0], 50).unwrap();
        assert!(report.rows[0].diverged);
    }

    #[test]
    fn stability_imp_slex_preserves_norm_on_skew_system() {
        let ls = LinearSystem::new(
            M::new(2, vec![0.0, 1.0, -1.0, 0.0]).unwrap(),
            V::zeros(2),
        )
        .unwrap();
        let spec = lookup_scheme("IMP-SLEX").unwrap();
        let report = stability_audit(spec, &ls, &[0.7], 1000).unwrap();
        let amp = report.rows[0].max_amplification;
        assert!((amp - 1.0).abs() <= 1e-9, "amplification {amp}");
    }

    #[test]
    fn stability_gradient_scheme_on_harmonic_oscillator() {
        // ẏ = Jy is the harmonic oscillator; GR-SYM-LEX propagates it exactly
        let ls = LinearSystem::new(
            M::new(2, vec![0.0, 1.0, -1.0, 0.0]).unwrap(),
            V::zeros(2),
        )
        .unwrap();
        let spec = lookup_scheme("GR-SYM-LEX").unwrap();
        let report = stability_audit(spec, &ls, &[0.5, 2.0], 100).unwrap();
        for row in &report.rows {
            assert!(!row.diverged);
            assert!(row.exact_rel_err.unwrap() <= 1e-11);
        }
    }

    #[test]
    fn orbital_period_on_exact_trajectory() {
        for &r in &[0.2f64, 1.0, 5.0] {
            let times: Vec<f64> = (0..=2000).map(|k| 0.005 * k as f64).collect();
            let states = times.iter().map(|&t| circ_reference(r, t)).collect();
            let run = RunRecord {
                scheme: "reference".into(),
                times,
                states,
                energies: None,
                cost: CostSnapshot::default(),
                solver_warnings: 0,
                status: RunStatus::Ok,
            };
            let period = orbital_period(&run).unwrap();
            assert!(
                (period - circ_period(r)).abs() < 1e-6,
                "R {r}: period {period} vs {}",
                circ_period(r)
            );
        }
    }

    #[test]
    fn benchmark_rows_are_byte_stable() {
        let config = BenchmarkConfig {
            radius: 0.2f64,
            t_end: 6.0,
            h_tilde_grid: vec![2e-3, 1e-3],
            baseline: "EEU".into(),
            solver: SolverSettings::default(),
        };
        let schemes: Vec<&SchemeSpec> = ["EEU", "EEU-LEX"]
            .iter()
            .map(|n| lookup_scheme(n).unwrap())
            .collect();
        let csv = |rows: &[BenchRow<f64>]| {
            rows.iter().map(|r| r.to_csv()).collect::<Vec<_>>().join("\n")
        };
        let a = csv(&benchmark_figure(&config, &schemes).unwrap());
        let b = csv(&benchmark_figure(&config, &schemes).unwrap());
        assert_eq!(a, b);
        assert!(a.lines().count() == 4);
        assert!(a.contains("EEU-LEX"));
    }

    #[test]
    fn geometric_grid_shape() {
        let g = geometric_grid(1e-2f64, 2, 8);
        assert_eq!(g.len(), 17);
        assert!((g[0] - 1e-2).abs() < 1e-18);
        assert!((g[16] - 1e-4).abs() < 1e-12);
        for w in g.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn catalog_schemes_all_audit_cleanly_on_small_steps() {
        let ls = LinearSystem::new(
            M::new(2, vec![0.0, 1.0, -1.0, 0.0]).unwrap(),
            V::zeros(2),
        )
        .unwrap();
        for spec in CATALOG {
            let report = stability_audit(spec, &ls, &[0.05], 20).unwrap();
            assert!(!report.rows[0].diverged, "{}", spec.name);
        }
    }
}
