//! One-step integrators and their locally exact modifications.
//!
//! The base schemes all fit the two-point form
//! `yₙ₊₁ − yₙ = h Ψ(yₙ, yₙ₊₁)`; the locally exact family replaces the scalar
//! step `h` by the matrix
//!
//! ```text
//! δ(ȳ, h) = h φ₁(hF'(ȳ)) (I + h Ψ̄₂ φ₁(hF'(ȳ)))⁻¹
//! ```
//!
//! which makes the scheme's linearization at the anchor ȳ coincide with the
//! exact discretization of the linearized equation. Anchors: LEX uses the
//! current point, ILEX the next point, SLEX their midpoint.

use crate::gradschemes::{self, GradKind};
use crate::matfun::{expm, phi1, solve_linear, solve_right, tanhc_half, SquareMatrix, Vector};
use crate::systems::{CostSnapshot, LinearSystem, OdeSystem, Problem};
use crate::{Error, Result, Scalar};

/// Base two-point kernel Ψ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    /// Explicit Euler: Ψ = F(yₙ)
    Eeu,
    /// Implicit Euler: Ψ = F(yₙ₊₁)
    Ieu,
    /// Implicit midpoint: Ψ = F((yₙ + yₙ₊₁)/2)
    Imp,
    /// Trapezoidal: Ψ = (F(yₙ) + F(yₙ₊₁))/2
    Tr,
}

impl Kernel {
    /// Ψ evaluated on the pair (yₙ, current iterate).
    pub fn psi<S: Scalar>(&self, sys: &OdeSystem<S>, yn: &Vector<S>, ycur: &Vector<S>) -> Vector<S> {
        match self {
            Kernel::Eeu => sys.eval_f(yn),
            Kernel::Ieu => sys.eval_f(ycur),
            Kernel::Imp => sys.eval_f(&yn.add(ycur).scale(S::half())),
            Kernel::Tr => sys
                .eval_f(yn)
                .add(&sys.eval_f(ycur))
                .scale(S::half()),
        }
    }

    /// Coefficient c₁ with Ψ₁(ȳ,ȳ) = c₁ F'(ȳ).
    pub fn psi1_coeff<S: Scalar>(&self) -> S {
        match self {
            Kernel::Eeu => S::one(),
            Kernel::Ieu => S::zero(),
            Kernel::Imp | Kernel::Tr => S::half(),
        }
    }

    /// Coefficient c₂ with Ψ₂(ȳ,ȳ) = c₂ F'(ȳ).
    pub fn psi2_coeff<S: Scalar>(&self) -> S {
        match self {
            Kernel::Eeu => S::zero(),
            Kernel::Ieu => S::one(),
            Kernel::Imp | Kernel::Tr => S::half(),
        }
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self, Kernel::Eeu)
    }
}

/// Where the vector field is linearized each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Anchor {
    /// No modification: δ = hI (the classical scheme).
    None,
    /// x̄ = xₙ.
    Lex,
    /// x̄ = xₙ₊₁ (implicit kernels only).
    Ilex,
    /// x̄ = ½(xₙ + xₙ₊₁) (midpoint/trapezoidal/gradient kernels only).
    Slex,
}

/// Fixed-point solver settings for the implicit equations.
#[derive(Clone, Copy, Debug)]
pub struct SolverSettings<S: Scalar> {
    /// Max-norm of the successive-iterate difference at which the iteration
    /// stops.
    pub tol: S,
    pub max_iter: usize,
}

impl<S: Scalar> Default for SolverSettings<S> {
    fn default() -> Self {
        Self {
            tol: S::of(3e-16),
            max_iter: 20,
        }
    }
}

/// Outcome of one step's implicit solve.
#[derive(Clone, Copy, Debug)]
pub struct StepStats<S: Scalar> {
    pub iterations: usize,
    pub residual: S,
    pub converged: bool,
}

impl<S: Scalar> StepStats<S> {
    pub fn explicit() -> Self {
        Self {
            iterations: 0,
            residual: S::zero(),
            converged: true,
        }
    }
}

// ---------------------------------------------------------------------------
// Linear propagation and exponential Euler
// ---------------------------------------------------------------------------

/// Exact discretization of `ẋ = Ax + b`:
/// `xₙ₊₁ = xₙ + h φ₁(hA)(Axₙ + b)`, valid for singular `A` as well.
pub fn exact_linear_step<S: Scalar>(
    ls: &LinearSystem<S>,
    x: &Vector<S>,
    h: S,
) -> Result<Vector<S>> {
    let p = phi1(&ls.a.scale(h))?;
    Ok(x.add(&p.matvec(&ls.rhs(x)).scale(h)))
}

/// Exponential Euler step `x + h φ₁(hF'(x)) F(x)` (identical to EEU-LEX).
pub fn exp_euler_step<S: Scalar>(sys: &OdeSystem<S>, x: &Vector<S>, h: S) -> Result<Vector<S>> {
    let fp = sys.eval_jac(x);
    let p = phi1(&fp.scale(h))?;
    sys.tally().bump_matfun();
    Ok(x.add(&p.matvec(&sys.eval_f(x)).scale(h)))
}

// ---------------------------------------------------------------------------
// δ matrices
// ---------------------------------------------------------------------------

fn delta_from_jac<S: Scalar>(
    kernel: Kernel,
    fp: &SquareMatrix<S>,
    h: S,
) -> Result<SquareMatrix<S>> {
    // per-kernel closed forms of δ = hφ₁(hF')(I + hΨ̄₂φ₁(hF'))⁻¹; the generic
    // bracket inverse computes e^{hF'} by subtraction and loses all accuracy
    // for strongly decaying modes at large h, these forms do not
    match kernel {
        Kernel::Eeu => Ok(phi1(&fp.scale(h))?.scale(h)),
        Kernel::Ieu => Ok(phi1(&fp.scale(-h))?.scale(h)),
        Kernel::Imp | Kernel::Tr => Ok(tanhc_half(fp, h)?.scale(h)),
    }
}

/// Generic bracket form of δ, kept as an internal cross-check for moderate
/// step sizes.
pub fn delta_matrix_bracket_form<S: Scalar>(
    kernel: Kernel,
    fp: &SquareMatrix<S>,
    h: S,
) -> Result<SquareMatrix<S>> {
    let p = phi1(&fp.scale(h))?;
    let c2: S = kernel.psi2_coeff();
    if c2 == S::zero() {
        return Ok(p.scale(h));
    }
    let bracket = SquareMatrix::identity(fp.dim()).add(&fp.matmul(&p).scale(h * c2));
    solve_right(&p.scale(h), &bracket).map_err(|e| match e {
        Error::Singular { pivot } => Error::StepSize(format!(
            "singular bracket in delta matrix (pivot {pivot:e})"
        )),
        other => other,
    })
}

/// The locally exact step matrix `δ(ȳ, h)` for a kernel, evaluated at the
/// anchor point. `δ = hI + O(h²)`.
pub fn delta_matrix<S: Scalar>(
    kernel: Kernel,
    sys: &OdeSystem<S>,
    anchor: &Vector<S>,
    h: S,
) -> Result<SquareMatrix<S>> {
    let fp = sys.eval_jac(anchor);
    sys.tally().bump_matfun();
    delta_from_jac(kernel, &fp, h)
}

/// Equivalent tanhc form of δ, used as an internal cross-check:
/// `δ = h tanhc(hF'/2) (I + ½h(Ψ̄₂ − Ψ̄₁) tanhc(hF'/2))⁻¹`.
pub fn delta_matrix_tanhc_form<S: Scalar>(
    kernel: Kernel,
    fp: &SquareMatrix<S>,
    h: S,
) -> Result<SquareMatrix<S>> {
    let t = tanhc_half(fp, h)?;
    let c = kernel.psi2_coeff::<S>() - kernel.psi1_coeff::<S>();
    if c == S::zero() {
        return Ok(t.scale(h));
    }
    let bracket =
        SquareMatrix::identity(fp.dim()).add(&fp.matmul(&t).scale(h * c * S::half()));
    solve_right(&t.scale(h), &bracket)
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

fn round_off_floor<S: Scalar>(y: &Vector<S>) -> S {
    S::of(16.0) * S::epsilon() * y.norm_inf().max(S::one())
}

/// One step of the (possibly modified) scheme
/// `xₙ₊₁ = xₙ + δ(x̄, h) Ψ(xₙ, xₙ₊₁)`.
///
/// Implicit equations are solved by fixed-point iteration starting from
/// `xₙ`; for ILEX/SLEX anchors δ is recomputed every iteration because the
/// anchor moves with the iterate. Negative `h` is permitted (reversibility
/// checks). Non-convergence after `max_iter` is reported in the stats, not
/// an error.
pub fn step<S: Scalar>(
    kernel: Kernel,
    anchor: Anchor,
    sys: &OdeSystem<S>,
    x: &Vector<S>,
    h: S,
    solver: &SolverSettings<S>,
) -> Result<(Vector<S>, StepStats<S>)> {
    // explicit shortcuts: Ψ does not involve the unknown
    if kernel.is_explicit() && matches!(anchor, Anchor::None | Anchor::Lex) {
        let f = sys.eval_f(x);
        let next = match anchor {
            Anchor::None => x.add(&f.scale(h)),
            Anchor::Lex => {
                let delta = delta_matrix(kernel, sys, x, h)?;
                x.add(&delta.matvec(&f))
            }
            _ => unreachable!(),
        };
        return Ok((next, StepStats::explicit()));
    }

    // δ fixed for None/Lex anchors, refreshed per iteration otherwise
    let fixed_delta = match anchor {
        Anchor::None => None,
        Anchor::Lex => Some(delta_matrix(kernel, sys, x, h)?),
        Anchor::Ilex | Anchor::Slex => None,
    };

    let mut y = x.clone();
    let mut stats = StepStats {
        iterations: 0,
        residual: S::infinity(),
        converged: false,
    };
    let mut prev_res = S::infinity();
    for it in 1..=solver.max_iter {
        let delta = match anchor {
            Anchor::Ilex => Some(delta_matrix(kernel, sys, &y, h)?),
            Anchor::Slex => Some(delta_matrix(kernel, sys, &x.add(&y).scale(S::half()), h)?),
            _ => fixed_delta.clone(),
        };
        let psi = kernel.psi(sys, x, &y);
        let y_next = match &delta {
            Some(d) => x.add(&d.matvec(&psi)),
            None => x.add(&psi.scale(h)),
        };
        let res = y_next.sub(&y).norm_inf();
        y = y_next;
        stats.iterations = it;
        stats.residual = res;
        if res <= solver.tol {
            stats.converged = true;
            break;
        }
        // stalled at the round-off floor: accept
        if res <= round_off_floor(&y) && res >= prev_res {
            stats.converged = true;
            break;
        }
        prev_res = res;
    }
    if !y.is_finite() {
        return Err(Error::Aborted("fixed-point iteration diverged".into()));
    }
    Ok((y, stats))
}

/// One step of the scheme on a linear system, solved exactly.
///
/// For `F = Ax + b` the implicit equation is affine in the unknown, so it is
/// solved by linear algebra instead of fixed-point iteration. This is the
/// path the stability audit uses: it realizes the scheme's defining equation
/// at any step size, including sizes where fixed-point iteration cannot
/// contract.
pub fn step_linear<S: Scalar>(
    kernel: Kernel,
    _anchor: Anchor,
    ls: &LinearSystem<S>,
    x: &Vector<S>,
    h: S,
    modified: bool,
) -> Result<Vector<S>> {
    // F' = A everywhere, so every anchor rule yields the same δ
    let n = ls.dim();
    let delta = if modified {
        if kernel.is_explicit() {
            // EEU-LEX is the exact discretization outright; the
            // multiplicative form avoids cancellation at large h
            let e = expm(&ls.a.scale(h))?;
            let p = phi1(&ls.a.scale(h))?;
            return Ok(e.matvec(x).add(&p.matvec(&ls.b).scale(h)));
        }
        delta_from_jac(kernel, &ls.a, h)?
    } else {
        SquareMatrix::identity(n).scale(h)
    };
    let c1: S = kernel.psi1_coeff();
    let c2: S = kernel.psi2_coeff();
    // (I − c₂ δA) y = x + δ(c₁ Ax + b)
    let da = delta.matmul(&ls.a);
    let lhs = SquareMatrix::identity(n).sub(&da.scale(c2));
    let rhs = x.add(&delta.matvec(&ls.a.matvec(x).scale(c1).add(&ls.b)));
    solve_linear(&lhs, &rhs)
}

// ---------------------------------------------------------------------------
// Scheme catalog
// ---------------------------------------------------------------------------

/// Scheme identity: kernel family plus anchor rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    OneStep { kernel: Kernel, anchor: Anchor },
    Gradient { kind: GradKind, anchor: Anchor },
}

#[derive(Clone, Copy, Debug)]
pub struct SchemeSpec {
    pub name: &'static str,
    pub kind: SchemeKind,
}

impl SchemeSpec {
    pub fn is_gradient(&self) -> bool {
        matches!(self.kind, SchemeKind::Gradient { .. })
    }

    pub fn is_locally_exact(&self) -> bool {
        let anchor = match self.kind {
            SchemeKind::OneStep { anchor, .. } => anchor,
            SchemeKind::Gradient { anchor, .. } => anchor,
        };
        anchor != Anchor::None
    }
}

/// Every scheme in the catalog, keyed by the canonical names the CLI and CSV
/// output use verbatim.
pub const CATALOG: &[SchemeSpec] = &[
    SchemeSpec { name: "EEU", kind: SchemeKind::OneStep { kernel: Kernel::Eeu, anchor: Anchor::None } },
    SchemeSpec { name: "IEU", kind: SchemeKind::OneStep { kernel: Kernel::Ieu, anchor: Anchor::None } },
    SchemeSpec { name: "IMP", kind: SchemeKind::OneStep { kernel: Kernel::Imp, anchor: Anchor::None } },
    SchemeSpec { name: "TR", kind: SchemeKind::OneStep { kernel: Kernel::Tr, anchor: Anchor::None } },
    SchemeSpec { name: "EEU-LEX", kind: SchemeKind::OneStep { kernel: Kernel::Eeu, anchor: Anchor::Lex } },
    SchemeSpec { name: "IEU-LEX", kind: SchemeKind::OneStep { kernel: Kernel::Ieu, anchor: Anchor::Lex } },
    SchemeSpec { name: "IEU-ILEX", kind: SchemeKind::OneStep { kernel: Kernel::Ieu, anchor: Anchor::Ilex } },
    SchemeSpec { name: "IMP-LEX", kind: SchemeKind::OneStep { kernel: Kernel::Imp, anchor: Anchor::Lex } },
    SchemeSpec { name: "IMP-SLEX", kind: SchemeKind::OneStep { kernel: Kernel::Imp, anchor: Anchor::Slex } },
    SchemeSpec { name: "TR-LEX", kind: SchemeKind::OneStep { kernel: Kernel::Tr, anchor: Anchor::Lex } },
    SchemeSpec { name: "TR-SLEX", kind: SchemeKind::OneStep { kernel: Kernel::Tr, anchor: Anchor::Slex } },
    SchemeSpec { name: "GR-IA", kind: SchemeKind::Gradient { kind: GradKind::Ia, anchor: Anchor::None } },
    SchemeSpec { name: "GR-SYM", kind: SchemeKind::Gradient { kind: GradKind::Sym, anchor: Anchor::None } },
    SchemeSpec { name: "GR-IA-LEX", kind: SchemeKind::Gradient { kind: GradKind::Ia, anchor: Anchor::Lex } },
    SchemeSpec { name: "GR-IA-SLEX", kind: SchemeKind::Gradient { kind: GradKind::Ia, anchor: Anchor::Slex } },
    SchemeSpec { name: "GR-SYM-LEX", kind: SchemeKind::Gradient { kind: GradKind::Sym, anchor: Anchor::Lex } },
    SchemeSpec { name: "GR-SYM-SLEX", kind: SchemeKind::Gradient { kind: GradKind::Sym, anchor: Anchor::Slex } },
];

pub fn scheme_names() -> Vec<&'static str> {
    CATALOG.iter().map(|s| s.name).collect()
}

pub fn lookup_scheme(name: &str) -> Result<&'static SchemeSpec> {
    CATALOG.iter().find(|s| s.name == name).ok_or_else(|| {
        Error::Validation(format!(
            "unknown scheme '{name}'; valid schemes: {}",
            scheme_names().join(", ")
        ))
    })
}

// ---------------------------------------------------------------------------
// Driver loop
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Aborted(String),
}

/// Trajectory of one integration run, with per-step energies for
/// Hamiltonian problems and the evaluation-cost snapshot.
pub struct RunRecord<S: Scalar> {
    pub scheme: String,
    pub times: Vec<S>,
    pub states: Vec<Vector<S>>,
    pub energies: Option<Vec<S>>,
    pub cost: CostSnapshot,
    pub solver_warnings: usize,
    pub status: RunStatus,
}

impl<S: Scalar> RunRecord<S> {
    pub fn final_time(&self) -> S {
        *self.times.last().expect("record never empty")
    }

    pub fn final_state(&self) -> &Vector<S> {
        self.states.last().expect("record never empty")
    }
}

/// Integrate with constant step `h` up to `t_end`; the final step is
/// shortened to land exactly on `t_end`. The problem's cost tally is reset
/// at the start and snapshotted at the end.
pub fn integrate<S: Scalar>(
    spec: &SchemeSpec,
    problem: &Problem<S>,
    x0: &Vector<S>,
    h: S,
    t_end: S,
    solver: &SolverSettings<S>,
) -> Result<RunRecord<S>> {
    if h.is_nan() || h <= S::zero() {
        return Err(Error::Validation("step size must be positive".into()));
    }
    if t_end < S::zero() {
        return Err(Error::Validation("t_end must be non-negative".into()));
    }
    if let SchemeKind::Gradient { .. } = spec.kind {
        if problem.ham.is_none() {
            return Err(Error::Validation(format!(
                "scheme {} requires a Hamiltonian system",
                spec.name
            )));
        }
    }

    problem.tally().reset();
    // measure the energy outside the tallied evaluators so that the audit
    // column does not perturb the cost accounting
    let energy_of = |y: &Vector<S>| -> Option<S> {
        problem.ham.as_ref().map(|hs| {
            let e = hs.energy(y);
            hs.tally().h_evals.set(hs.tally().h_evals.get() - 1);
            e
        })
    };

    let mut times = vec![S::zero()];
    let mut states = vec![x0.clone()];
    let mut energies: Option<Vec<S>> = energy_of(x0).map(|e| vec![e]);
    let mut warnings = 0usize;
    let mut status = RunStatus::Ok;

    let tiny = S::epsilon() * t_end.max(S::one());
    let mut k: u64 = 0;
    let mut t = S::zero();
    while t < t_end - tiny {
        let grid_next = S::of((k + 1) as f64) * h;
        let (h_step, t_next) = if grid_next >= t_end - tiny {
            (t_end - t, t_end)
        } else {
            (grid_next - t, grid_next)
        };
        let current = states.last().unwrap().clone();
        let outcome = match spec.kind {
            SchemeKind::OneStep { kernel, anchor } => {
                step(kernel, anchor, &problem.ode, &current, h_step, solver)
            }
            SchemeKind::Gradient { kind, anchor } => gradschemes::gradient_step(
                kind,
                anchor,
                problem.ham.as_ref().unwrap(),
                &current,
                h_step,
                solver,
            ),
        };
        match outcome {
            Ok((next, stats)) => {
                if !stats.converged {
                    warnings += 1;
                }
                times.push(t_next);
                if let (Some(list), Some(e)) = (energies.as_mut(), energy_of(&next)) {
                    list.push(e);
                }
                states.push(next);
                t = t_next;
                k += 1;
            }
            Err(e) => {
                status = RunStatus::Aborted(e.to_string());
                break;
            }
        }
    }

    Ok(RunRecord {
        scheme: spec.name.to_string(),
        times,
        states,
        energies,
        cost: problem.tally().snapshot(),
        solver_warnings: warnings,
        status,
    })
}

/// Exact propagator of a linear system over `t`, used as an oracle:
/// `x(t) = e^{tA} x₀ + t φ₁(tA) b`.
pub fn exact_linear_flow<S: Scalar>(ls: &LinearSystem<S>, x0: &Vector<S>, t: S) -> Result<Vector<S>> {
    let e = expm(&ls.a.scale(t))?;
    let p = phi1(&ls.a.scale(t))?;
    Ok(e.matvec(x0).add(&p.matvec(&ls.b).scale(t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfun::SquareMatrix;
    use crate::systems::{make_problem, LinearSystem};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    type M = SquareMatrix<f64>;
    type V = Vector<f64>;

    fn rotation() -> LinearSystem<f64> {
        LinearSystem::new(
            M::new(2, vec![0.0, 1.0, -1.0, 0.0]).unwrap(),
            V::zeros(2),
        )
        .unwrap()
    }

    fn scalar_decay() -> LinearSystem<f64> {
        LinearSystem::new(M::new(1, vec![-1.0]).unwrap(), V::zeros(1)).unwrap()
    }

    #[test]
    fn exact_linear_full_rotation_is_identity() {
        let ls = rotation();
        let x = V::from_slice(&[0.3, -1.2]);
        let y = exact_linear_step(&ls, &x, std::f64::consts::TAU).unwrap();
        assert!(y.sub(&x).norm_inf() < 1e-13);
    }

    #[test]
    fn exact_linear_scalar_closed_form() {
        // ẋ = −x + 1 from 0 over ln 2 reaches 1 − e^{−ln 2} = 1/2
        let ls = LinearSystem::new(
            M::new(1, vec![-1.0]).unwrap(),
            V::from_slice(&[1.0]),
        )
        .unwrap();
        let y = exact_linear_step(&ls, &V::zeros(1), 2.0f64.ln()).unwrap();
        assert!((y.get(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_linear_zero_matrix_is_drift() {
        let ls = LinearSystem::new(M::zeros(3), V::from_slice(&[1.0, -2.0, 0.5])).unwrap();
        let y = exact_linear_step(&ls, &V::from_slice(&[1.0, 1.0, 1.0]), 0.25).unwrap();
        assert_eq!(y.as_slice(), &[1.25, 0.5, 1.125]);
    }

    #[test]
    fn exp_euler_scalar_decay() {
        let sys = scalar_decay().to_ode();
        let y = exp_euler_step(&sys, &V::from_slice(&[1.0]), 1.0).unwrap();
        assert!((y.get(0) - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn exp_euler_preserves_fixed_point() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let origin = V::zeros(4);
        let y = exp_euler_step(&p.ode, &origin, 0.7).unwrap();
        assert!(y.norm_inf() < 1e-15);
    }

    #[test]
    fn exp_euler_equals_exact_on_linear() {
        let ls = LinearSystem::new(
            M::new(2, vec![-0.4, 1.0, -1.0, -0.4]).unwrap(),
            V::from_slice(&[0.3, -0.1]),
        )
        .unwrap();
        let sys = ls.to_ode();
        let x = V::from_slice(&[1.0, 2.0]);
        let a = exp_euler_step(&sys, &x, 0.7).unwrap();
        let b = exact_linear_step(&ls, &x, 0.7).unwrap();
        assert!(a.sub(&b).norm_inf() < 1e-12);
    }

    #[test]
    fn delta_eeu_is_h_phi1() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let anchor = V::from_slice(&[0.8, -0.1, 0.2, 0.4]);
        let h = 0.3;
        let d = delta_matrix(Kernel::Eeu, &p.ode, &anchor, h).unwrap();
        let fp = p.ode.eval_jac(&anchor);
        let expected = phi1(&fp.scale(h)).unwrap().scale(h);
        assert!(d.sub(&expected).max_abs() < 1e-14);
    }

    #[test]
    fn delta_ieu_is_h_phi1_negated_argument() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let anchor = V::from_slice(&[0.8, -0.1, 0.2, 0.4]);
        let h = 0.3;
        let d = delta_matrix(Kernel::Ieu, &p.ode, &anchor, h).unwrap();
        let fp = p.ode.eval_jac(&anchor);
        let expected = phi1(&fp.scale(-h)).unwrap().scale(h);
        assert!(d.sub(&expected).max_abs() < 1e-12);
    }

    #[test]
    fn delta_imp_is_h_tanhc() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let anchor = V::from_slice(&[0.8, -0.1, 0.2, 0.4]);
        let h = 0.3;
        for kernel in [Kernel::Imp, Kernel::Tr] {
            let d = delta_matrix(kernel, &p.ode, &anchor, h).unwrap();
            let fp = p.ode.eval_jac(&anchor);
            let expected = tanhc_half(&fp, h).unwrap().scale(h);
            assert!(d.sub(&expected).max_abs() < 1e-12);
        }
    }

    #[test]
    fn delta_cross_checks_against_tanhc_form() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let anchor = V::from_slice(&[1.1, 0.4, -0.3, 0.2]);
        let fp = p.ode.eval_jac(&anchor);
        for kernel in [Kernel::Eeu, Kernel::Ieu, Kernel::Imp, Kernel::Tr] {
            for h in [0.05, 0.2, 0.5] {
                let a = delta_from_jac(kernel, &fp, h).unwrap();
                for other in [
                    delta_matrix_tanhc_form(kernel, &fp, h).unwrap(),
                    delta_matrix_bracket_form(kernel, &fp, h).unwrap(),
                ] {
                    assert!(
                        a.sub(&other).max_abs() < 1e-11,
                        "kernel {kernel:?} h {h}: {}",
                        a.sub(&other).max_abs()
                    );
                }
            }
        }
    }

    #[test]
    fn delta_over_h_tends_to_identity() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let anchor = V::from_slice(&[0.5, 0.5, 0.1, -0.1]);
        for kernel in [Kernel::Eeu, Kernel::Ieu, Kernel::Imp, Kernel::Tr] {
            let mut prev = f64::INFINITY;
            let mut dists = Vec::new();
            for &h in &[1e-2, 1e-3, 1e-4] {
                let d = delta_matrix(kernel, &p.ode, &anchor, h).unwrap();
                let dist = d.scale(1.0 / h).sub(&M::identity(4)).max_abs();
                assert!(dist < prev);
                prev = dist;
                dists.push(dist);
            }
            // empirical slope of log(dist) vs log(h) should be ~1
            let slope = (dists[0] / dists[2]).ln() / (1e-2f64 / 1e-4).ln();
            assert!(slope >= 0.9, "kernel {kernel:?} slope {slope}");
        }
    }

    #[test]
    fn delta_h2_coefficient_matches_kernel_table() {
        // δ = hI + ½h²(Ψ̄₁ − Ψ̄₂) + O(h³), extracted by Richardson
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let anchor = V::from_slice(&[0.9, -0.2, 0.3, 0.1]);
        let fp = p.ode.eval_jac(&anchor);
        for kernel in [Kernel::Eeu, Kernel::Ieu, Kernel::Imp, Kernel::Tr] {
            let coeff_of = |h: f64| {
                delta_from_jac(kernel, &fp, h)
                    .unwrap()
                    .sub(&M::identity(4).scale(h))
                    .scale(1.0 / (h * h))
            };
            let h = 1e-3;
            let extracted = coeff_of(h / 2.0).scale(2.0).sub(&coeff_of(h));
            let c = kernel.psi1_coeff::<f64>() - kernel.psi2_coeff::<f64>();
            let expected = fp.scale(0.5 * c);
            let err = extracted.sub(&expected).max_abs();
            let scale = expected.max_abs().max(0.05);
            assert!(err <= 0.05 * scale, "kernel {kernel:?} err {err}");
        }
    }

    #[test]
    fn step_eeu_is_forward_euler() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let x = V::from_slice(&[1.0, 0.0, 0.0, 0.5]);
        let h = 0.1;
        let (y, stats) = step(Kernel::Eeu, Anchor::None, &p.ode, &x, h, &SolverSettings::default()).unwrap();
        let expected = x.add(&p.ode.eval_f(&x).scale(h));
        assert_eq!(y, expected);
        assert!(stats.converged);
    }

    #[test]
    fn step_tr_scalar_hand_solution() {
        // ẋ = −x, h = 1, x₀ = 1: trapezoidal gives (1 − ½)/(1 + ½) = 1/3
        let sys = scalar_decay().to_ode();
        // contraction factor is ½ at h = 1, so allow the iteration room
        let solver = SolverSettings {
            max_iter: 80,
            ..SolverSettings::default()
        };
        let (y, stats) = step(
            Kernel::Tr,
            Anchor::None,
            &sys,
            &V::from_slice(&[1.0]),
            1.0,
            &solver,
        )
        .unwrap();
        assert!(stats.converged);
        assert!((y.get(0) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn step_preserves_fixed_points() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let origin = V::zeros(4);
        let solver = SolverSettings::default();
        for spec in CATALOG.iter().filter(|s| !s.is_gradient()) {
            if let SchemeKind::OneStep { kernel, anchor } = spec.kind {
                let (y, _) = step(kernel, anchor, &p.ode, &origin, 0.4, &solver).unwrap();
                assert!(
                    y.norm_inf() <= solver.tol * 10.0,
                    "{} moved off the fixed point by {}",
                    spec.name,
                    y.norm_inf()
                );
            }
        }
    }

    #[test]
    fn imp_slex_reproduces_exact_linear_propagation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let a = M::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let ls = LinearSystem::new(a, V::zeros(3)).unwrap();
            let sys = ls.to_ode();
            let x = V::from_slice(&[1.0, -0.5, 0.2]);
            let h = 0.15;
            let (y, stats) = step(Kernel::Imp, Anchor::Slex, &sys, &x, h, &SolverSettings::default()).unwrap();
            assert!(stats.converged);
            let exact = exact_linear_flow(&ls, &x, h).unwrap();
            let rel = y.sub(&exact).norm_inf() / exact.norm_inf().max(1.0);
            assert!(rel < 1e-12, "rel {rel}");
        }
    }

    #[test]
    fn locally_exact_one_step_schemes_match_expm_on_random_stable_systems() {
        // smaller sibling of the acceptance criterion: 20 systems, 10 steps
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let solver = SolverSettings::default();
        for _ in 0..20 {
            let d = rng.gen_range(1..=6);
            let q = M::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let shift = q.norm_inf() + 0.1;
            let a = q.sub(&M::identity(d).scale(shift));
            let b = V::from_slice(&(0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            let ls = LinearSystem::new(a, b).unwrap();
            let sys = ls.to_ode();
            let h = 0.2 / ls.a.norm_inf();
            let mut x = V::from_slice(&(0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            for spec in CATALOG.iter().filter(|s| !s.is_gradient() && s.is_locally_exact()) {
                if let SchemeKind::OneStep { kernel, anchor } = spec.kind {
                    let exact = exact_linear_flow(&ls, &x, h).unwrap();
                    let (y, _) = step(kernel, anchor, &sys, &x, h, &solver).unwrap();
                    let rel = y.sub(&exact).norm_inf() / exact.norm_inf().max(1e-6);
                    assert!(rel < 1e-11, "{} rel {rel}", spec.name);
                }
            }
            x = exact_linear_flow(&ls, &x, h).unwrap();
            assert!(x.is_finite());
        }
    }

    #[test]
    fn step_linear_matches_exact_at_extreme_steps() {
        let ls = scalar_decay();
        let x = V::from_slice(&[1.0]);
        for h in [1.0, 10.0, 100.0] {
            for kernel in [Kernel::Eeu, Kernel::Ieu, Kernel::Imp, Kernel::Tr] {
                let y = step_linear(kernel, Anchor::Lex, &ls, &x, h, true).unwrap();
                // denominator floored near eps·|x₀|: once e^{−h} sinks below
                // round-off of the working quantities, absolute accuracy at
                // the state scale is all any finite-precision step can carry
                let exact = (-h).exp();
                let denom = exact.max(4e10 * f64::EPSILON * x.norm_inf());
                let rel = (y.get(0) - exact).abs() / denom;
                assert!(rel < 1e-10, "{kernel:?} h {h} rel {rel}");
            }
        }
    }

    #[test]
    fn time_symmetry_of_symmetric_schemes() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let solver = SolverSettings::default();
        let x = V::from_slice(&[1.0, 0.0, 0.0, 0.9f64.sqrt()]);
        let h = 0.05;
        for (kernel, anchor) in [
            (Kernel::Imp, Anchor::None),
            (Kernel::Tr, Anchor::None),
            (Kernel::Imp, Anchor::Slex),
            (Kernel::Tr, Anchor::Slex),
        ] {
            let (fwd, _) = step(kernel, anchor, &p.ode, &x, h, &solver).unwrap();
            let (back, _) = step(kernel, anchor, &p.ode, &fwd, -h, &solver).unwrap();
            let err = back.sub(&x).norm_inf();
            assert!(
                err <= 10.0 * solver.tol.max(1e-15),
                "{kernel:?}/{anchor:?} reversibility error {err}"
            );
        }
    }

    #[test]
    fn third_order_coefficient_distinguishes_imp_from_imp_lex() {
        // ẋ = −x³ has the closed form x(h) = x₀/√(1 + 2x₀²h); the h³
        // coefficients of the one-step error at x₀ = 1 are −1/2 for IMP and
        // +1/4 for IMP-LEX
        let sys = OdeSystem::new(
            1,
            Box::new(|x: &V| V::from_slice(&[-x.get(0).powi(3)])),
            Box::new(|x: &V| M::new(1, vec![-3.0 * x.get(0) * x.get(0)]).unwrap()),
        );
        let solver = SolverSettings {
            tol: 1e-17,
            max_iter: 60,
        };
        let one_step_err = |anchor: Anchor, h: f64| -> f64 {
            let (y, _) = step(Kernel::Imp, anchor, &sys, &V::from_slice(&[1.0]), h, &solver).unwrap();
            let exact = 1.0 / (1.0 + 2.0 * h).sqrt();
            y.get(0) - exact
        };
        for (anchor, expected) in [(Anchor::None, -0.5), (Anchor::Lex, 0.25)] {
            let h = 1e-2;
            let c = |h: f64| one_step_err(anchor, h) / (h * h * h);
            let extracted = 2.0 * c(h / 2.0) - c(h);
            assert!(
                (extracted - expected).abs() <= 0.05 * expected.abs(),
                "{anchor:?}: extracted {extracted}, expected {expected}"
            );
        }
    }

    #[test]
    fn integrate_zero_horizon_keeps_initial_state() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let spec = lookup_scheme("IMP").unwrap();
        let x0 = V::from_slice(&[1.0, 0.0, 0.0, 0.5]);
        let rec = integrate(spec, &p, &x0, 0.1, 0.0, &SolverSettings::default()).unwrap();
        assert_eq!(rec.times.len(), 1);
        assert_eq!(rec.states[0], x0);
        assert_eq!(rec.status, RunStatus::Ok);
    }

    #[test]
    fn integrate_shortens_final_step() {
        let p = make_problem::<f64>("harmonic1d").unwrap();
        let spec = lookup_scheme("TR").unwrap();
        let x0 = V::from_slice(&[1.0, 0.0]);
        let rec = integrate(spec, &p, &x0, 0.3, 1.0, &SolverSettings::default()).unwrap();
        assert_eq!(rec.times.len(), 5); // 0, .3, .6, .9, 1.0
        assert!((rec.final_time() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn integrate_locally_exact_matches_linear_flow() {
        let ls = LinearSystem::new(
            M::new(2, vec![-0.3, 1.0, -1.0, -0.3]).unwrap(),
            V::from_slice(&[0.2, 0.0]),
        )
        .unwrap();
        let problem = Problem::from_ode("lin", ls.to_ode());
        let x0 = V::from_slice(&[1.0, -1.0]);
        let t_end = 2.0;
        for name in ["EEU-LEX", "IEU-LEX", "IMP-SLEX", "TR-LEX"] {
            let spec = lookup_scheme(name).unwrap();
            let rec = integrate(spec, &problem, &x0, 0.1, t_end, &SolverSettings::default()).unwrap();
            let exact = exact_linear_flow(&ls, &x0, t_end).unwrap();
            let rel = rec.final_state().sub(&exact).norm_inf() / exact.norm_inf();
            assert!(rel < 1e-11, "{name} rel {rel}");
        }
    }

    #[test]
    fn catalog_names_are_exact_strings() {
        let names = scheme_names();
        for expected in [
            "EEU", "IEU", "IMP", "TR", "EEU-LEX", "IEU-LEX", "IEU-ILEX", "IMP-LEX",
            "IMP-SLEX", "TR-LEX", "TR-SLEX", "GR-IA", "GR-SYM", "GR-IA-LEX", "GR-IA-SLEX",
            "GR-SYM-LEX", "GR-SYM-SLEX",
        ] {
            assert!(names.contains(&expected), "missing {expected}");
        }
        assert!(lookup_scheme("RK4").is_err());
    }

    #[test]
    fn kernel_consistency_psi_diagonal_is_field() {
        let p = make_problem::<f64>("anharmonic2d").unwrap();
        let y = V::from_slice(&[0.4, 0.6, -0.2, 0.1]);
        let f = p.ode.eval_f(&y);
        for kernel in [Kernel::Eeu, Kernel::Ieu, Kernel::Imp, Kernel::Tr] {
            let psi = kernel.psi(&p.ode, &y, &y);
            assert!(psi.sub(&f).norm_inf() < 1e-15, "{kernel:?}");
            // Ψ₁ + Ψ₂ = F' via the coefficient table and finite differences
            let c_sum = kernel.psi1_coeff::<f64>() + kernel.psi2_coeff::<f64>();
            assert_eq!(c_sum, 1.0);
        }
    }
}
