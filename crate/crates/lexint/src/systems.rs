//! Problem descriptors: generic autonomous ODEs `ẋ = F(x)`, linear
//! constant-coefficient systems, canonical Hamiltonian systems, and the
//! benchmark anharmonic oscillator with its circular-orbit solutions.
//!
//! Descriptors are immutable after construction except the evaluation
//! counters, which belong to a single integration run; independent runs use
//! independent descriptor instances.

use std::cell::Cell;
use std::rc::Rc;

use crate::matfun::{SquareMatrix, Vector};
use crate::{Error, Result, Scalar};

/// Tally of evaluator calls, the cost-accounting substrate for the
/// equal-cost benchmarks. Monotone non-decreasing during a run.
#[derive(Debug, Default)]
pub struct CostTally {
    pub f_evals: Cell<u64>,
    pub jac_evals: Cell<u64>,
    pub h_evals: Cell<u64>,
    pub grad_evals: Cell<u64>,
    pub hess_evals: Cell<u64>,
    pub matfun_evals: Cell<u64>,
}

/// Plain-value snapshot of a [`CostTally`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostSnapshot {
    pub f_evals: u64,
    pub jac_evals: u64,
    pub h_evals: u64,
    pub grad_evals: u64,
    pub hess_evals: u64,
    pub matfun_evals: u64,
}

impl CostTally {
    pub fn snapshot(&self) -> CostSnapshot {
        CostSnapshot {
            f_evals: self.f_evals.get(),
            jac_evals: self.jac_evals.get(),
            h_evals: self.h_evals.get(),
            grad_evals: self.grad_evals.get(),
            hess_evals: self.hess_evals.get(),
            matfun_evals: self.matfun_evals.get(),
        }
    }

    pub fn reset(&self) {
        self.f_evals.set(0);
        self.jac_evals.set(0);
        self.h_evals.set(0);
        self.grad_evals.set(0);
        self.hess_evals.set(0);
        self.matfun_evals.set(0);
    }

    pub fn bump_matfun(&self) {
        self.matfun_evals.set(self.matfun_evals.get() + 1);
    }
}

type VecFn<S> = Box<dyn Fn(&Vector<S>) -> Vector<S>>;
type MatFn<S> = Box<dyn Fn(&Vector<S>) -> SquareMatrix<S>>;
type ScalarFn<S> = Box<dyn Fn(&Vector<S>) -> S>;

/// Autonomous system `ẋ = F(x)` with user-supplied analytic Jacobian.
///
/// Locally exact schemes are exact only relative to the true `F'`, so the
/// Jacobian is an analytic evaluator; [`check_jacobian`] offers a
/// finite-difference self-check for tests.
pub struct OdeSystem<S: Scalar> {
    dim: usize,
    f: VecFn<S>,
    jac: MatFn<S>,
    tally: Rc<CostTally>,
}

impl<S: Scalar> OdeSystem<S> {
    pub fn new(dim: usize, f: VecFn<S>, jac: MatFn<S>) -> Self {
        Self {
            dim,
            f,
            jac,
            tally: Rc::new(CostTally::default()),
        }
    }

    pub fn with_tally(dim: usize, f: VecFn<S>, jac: MatFn<S>, tally: Rc<CostTally>) -> Self {
        Self { dim, f, jac, tally }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tally(&self) -> &Rc<CostTally> {
        &self.tally
    }

    pub fn eval_f(&self, x: &Vector<S>) -> Vector<S> {
        self.tally.f_evals.set(self.tally.f_evals.get() + 1);
        (self.f)(x)
    }

    pub fn eval_jac(&self, x: &Vector<S>) -> SquareMatrix<S> {
        self.tally.jac_evals.set(self.tally.jac_evals.get() + 1);
        (self.jac)(x)
    }
}

/// Linear constant-coefficient system `ẋ = Ax + b`.
#[derive(Clone, Debug)]
pub struct LinearSystem<S: Scalar> {
    pub a: SquareMatrix<S>,
    pub b: Vector<S>,
}

impl<S: Scalar> LinearSystem<S> {
    pub fn new(a: SquareMatrix<S>, b: Vector<S>) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::Dimension(format!(
                "linear system: matrix dim {} vs vector dim {}",
                a.dim(),
                b.dim()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// Right-hand side `Ax + b`.
    pub fn rhs(&self, x: &Vector<S>) -> Vector<S> {
        self.a.matvec(x).add(&self.b)
    }

    /// View as a generic [`OdeSystem`].
    pub fn to_ode(&self) -> OdeSystem<S> {
        let a1 = self.a.clone();
        let b1 = self.b.clone();
        let a2 = self.a.clone();
        OdeSystem::new(
            self.dim(),
            Box::new(move |x| a1.matvec(x).add(&b1)),
            Box::new(move |_| a2.clone()),
        )
    }
}

/// Canonical Hamiltonian system with `m` degrees of freedom.
///
/// States are packed as `y = (x¹..xᵐ, p¹..pᵐ)`. The `grad` evaluator returns
/// the full `∇H` (length `2m`), `hess` the full symmetric Hessian `H_yy`
/// (`2m × 2m`); the blocks `H_xx`, `H_xp`, `H_px`, `H_pp` are its quadrants.
pub struct HamiltonianSystem<S: Scalar> {
    m: usize,
    h_fn: ScalarFn<S>,
    grad: VecFn<S>,
    hess: MatFn<S>,
    tally: Rc<CostTally>,
}

impl<S: Scalar> HamiltonianSystem<S> {
    pub fn new(m: usize, h_fn: ScalarFn<S>, grad: VecFn<S>, hess: MatFn<S>) -> Self {
        Self {
            m,
            h_fn,
            grad,
            hess,
            tally: Rc::new(CostTally::default()),
        }
    }

    /// Degrees of freedom.
    pub fn dof(&self) -> usize {
        self.m
    }

    /// Phase-space dimension `2m`.
    pub fn dim(&self) -> usize {
        2 * self.m
    }

    pub fn tally(&self) -> &Rc<CostTally> {
        &self.tally
    }

    pub fn energy(&self, y: &Vector<S>) -> S {
        self.tally.h_evals.set(self.tally.h_evals.get() + 1);
        (self.h_fn)(y)
    }

    pub fn gradient(&self, y: &Vector<S>) -> Vector<S> {
        self.tally.grad_evals.set(self.tally.grad_evals.get() + 1);
        (self.grad)(y)
    }

    pub fn hessian(&self, y: &Vector<S>) -> SquareMatrix<S> {
        self.tally.hess_evals.set(self.tally.hess_evals.get() + 1);
        (self.hess)(y)
    }

    /// Jacobian of the induced vector field: `F' = S · H_yy`.
    pub fn field_jacobian(&self, y: &Vector<S>) -> SquareMatrix<S> {
        symplectic_form(self.m).matmul(&self.hessian(y))
    }
}

/// The canonical symplectic form `S = [[0, I], [−I, 0]]` (2m × 2m).
pub fn symplectic_form<S: Scalar>(m: usize) -> SquareMatrix<S> {
    SquareMatrix::from_fn(2 * m, |i, j| {
        if i < m && j == i + m {
            S::one()
        } else if i >= m && j == i - m {
            -S::one()
        } else {
            S::zero()
        }
    })
}

/// Induce the first-order system `ẏ = S∇H(y)` from a Hamiltonian.
///
/// The returned system shares the Hamiltonian's evaluation tally, so cost
/// accounting sees `grad`/`hess` calls rather than opaque `f`/`jac` ones.
pub fn hamiltonian_to_ode<S: Scalar>(hs: &Rc<HamiltonianSystem<S>>) -> OdeSystem<S> {
    let m = hs.m;
    let hs_f = Rc::clone(hs);
    let hs_j = Rc::clone(hs);
    let sform = symplectic_form::<S>(m);
    let sform_j = sform.clone();
    OdeSystem::with_tally(
        2 * m,
        Box::new(move |y| sform.matvec(&hs_f.gradient(y))),
        Box::new(move |y| sform_j.matmul(&hs_j.hessian(y))),
        Rc::clone(hs.tally()),
    )
}

/// Linearize `ẋ = F(x)` at `anchor`: `A = F'(x̄)`, `b = F(x̄) − F'(x̄)x̄`,
/// expressed in the original coordinates so that `ẋ = Ax + b` reproduces the
/// linearized flow exactly.
pub fn linearize<S: Scalar>(sys: &OdeSystem<S>, anchor: &Vector<S>) -> LinearSystem<S> {
    let a = sys.eval_jac(anchor);
    let b = sys.eval_f(anchor).sub(&a.matvec(anchor));
    LinearSystem { a, b }
}

// ---------------------------------------------------------------------------
// Benchmark systems
// ---------------------------------------------------------------------------

/// The m = 2 benchmark oscillator `H = ½|p|² + ½|x|² − |x|³/30`.
///
/// The cubic term's Hessian has a removable singularity at `x = 0`; the
/// evaluator takes the limit value (zero matrix) there so linearization is
/// total.
pub fn anharmonic2d<S: Scalar>() -> HamiltonianSystem<S> {
    let h_fn = |y: &Vector<S>| {
        let (x1, x2, p1, p2) = (y.get(0), y.get(1), y.get(2), y.get(3));
        let r2 = x1 * x1 + x2 * x2;
        let r = r2.sqrt();
        S::half() * (p1 * p1 + p2 * p2) + S::half() * r2 - r2 * r / S::of(30.0)
    };
    let grad = |y: &Vector<S>| {
        let (x1, x2, p1, p2) = (y.get(0), y.get(1), y.get(2), y.get(3));
        let r = (x1 * x1 + x2 * x2).sqrt();
        // ∂H/∂xᵏ = xᵏ (1 − r/10)
        let c = S::one() - r / S::of(10.0);
        Vector::from_slice(&[x1 * c, x2 * c, p1, p2])
    };
    let hess = |y: &Vector<S>| {
        let (x1, x2) = (y.get(0), y.get(1));
        let r = (x1 * x1 + x2 * x2).sqrt();
        let mut h = SquareMatrix::zeros(4);
        // H_xx = (1 − r/10) I − (1/10) x xᵀ / r, limit I at the origin
        if r > S::zero() {
            let d = S::one() - r / S::of(10.0);
            let c = S::one() / (S::of(10.0) * r);
            h.set(0, 0, d - c * x1 * x1);
            h.set(0, 1, -c * x1 * x2);
            h.set(1, 0, -c * x1 * x2);
            h.set(1, 1, d - c * x2 * x2);
        } else {
            h.set(0, 0, S::one());
            h.set(1, 1, S::one());
        }
        h.set(2, 2, S::one());
        h.set(3, 3, S::one());
        h
    };
    HamiltonianSystem::new(2, Box::new(h_fn), Box::new(grad), Box::new(hess))
}

/// Harmonic oscillator `H = ½(x² + p²)`, one degree of freedom.
pub fn harmonic1d<S: Scalar>() -> HamiltonianSystem<S> {
    HamiltonianSystem::new(
        1,
        Box::new(|y: &Vector<S>| S::half() * (y.get(0) * y.get(0) + y.get(1) * y.get(1))),
        Box::new(|y: &Vector<S>| Vector::from_slice(&[y.get(0), y.get(1)])),
        Box::new(|_| SquareMatrix::identity(2)),
    )
}

/// Quartic-perturbed oscillator `H = ½p² + ½x² + ¼x⁴`, one degree of
/// freedom; the generic 1-D separable system used for the third/fourth order
/// classification of the gradient schemes.
pub fn quartic1d<S: Scalar>() -> HamiltonianSystem<S> {
    HamiltonianSystem::new(
        1,
        Box::new(|y: &Vector<S>| {
            let (x, p) = (y.get(0), y.get(1));
            S::half() * p * p + S::half() * x * x + x * x * x * x / S::of(4.0)
        }),
        Box::new(|y: &Vector<S>| {
            let (x, p) = (y.get(0), y.get(1));
            Vector::from_slice(&[x + x * x * x, p])
        }),
        Box::new(|y: &Vector<S>| {
            let x = y.get(0);
            let mut h = SquareMatrix::identity(2);
            h.set(0, 0, S::one() + S::of(3.0) * x * x);
            h
        }),
    )
}

/// Quadratic Hamiltonian `H = ½ yᵀ M y` on a phase space of even dimension.
///
/// `M` is symmetrized on construction; the induced field `ẏ = S M y` is
/// linear, which makes these the natural ground truth for the local-exactness
/// checks of the gradient schemes.
pub fn quadratic_hamiltonian<S: Scalar>(m_mat: SquareMatrix<S>) -> Result<HamiltonianSystem<S>> {
    let n = m_mat.dim();
    if !n.is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "quadratic Hamiltonian needs even phase-space dimension, got {n}"
        )));
    }
    let m_sym = m_mat.add(&m_mat.transpose()).scale(S::half());
    let m1 = m_sym.clone();
    let m2 = m_sym.clone();
    let m3 = m_sym;
    Ok(HamiltonianSystem::new(
        n / 2,
        Box::new(move |y: &Vector<S>| S::half() * y.dot(&m1.matvec(y))),
        Box::new(move |y: &Vector<S>| m2.matvec(y)),
        Box::new(move |_| m3.clone()),
    ))
}

/// Initial condition for a circular orbit of radius `R` of the benchmark
/// oscillator: `x₀ = (R, 0)`, `p₀ = (0, R√(1 − 0.1R))`. Orbits exist for
/// `R < 10`.
pub fn circ_init<S: Scalar>(radius: S) -> Vector<S> {
    let omega = (S::one() - radius / S::of(10.0)).sqrt();
    Vector::from_slice(&[radius, S::zero(), S::zero(), radius * omega])
}

/// Angular frequency of the circular orbit of radius `R`.
pub fn circ_omega<S: Scalar>(radius: S) -> S {
    (S::one() - radius / S::of(10.0)).sqrt()
}

/// Exact period `T(R) = 2π/√(1 − 0.1R)` of the circular orbit.
pub fn circ_period<S: Scalar>(radius: S) -> S {
    S::of(std::f64::consts::TAU) / circ_omega(radius)
}

/// Closed-form circular-orbit state at time `t`.
pub fn circ_reference<S: Scalar>(radius: S, t: S) -> Vector<S> {
    let w = circ_omega(radius);
    let (s, c) = (w * t).sin_cos();
    Vector::from_slice(&[radius * c, radius * s, -radius * w * s, radius * w * c])
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// A named problem: the ODE view plus, for Hamiltonian systems, the
/// underlying Hamiltonian (needed by the gradient schemes and the energy
/// audit).
pub struct Problem<S: Scalar> {
    pub name: String,
    pub ham: Option<Rc<HamiltonianSystem<S>>>,
    pub ode: OdeSystem<S>,
}

impl<S: Scalar> Problem<S> {
    pub fn from_ham(name: &str, hs: HamiltonianSystem<S>) -> Self {
        let hs = Rc::new(hs);
        let ode = hamiltonian_to_ode(&hs);
        Self {
            name: name.to_string(),
            ham: Some(hs),
            ode,
        }
    }

    pub fn from_ode(name: &str, ode: OdeSystem<S>) -> Self {
        Self {
            name: name.to_string(),
            ham: None,
            ode,
        }
    }

    pub fn tally(&self) -> &Rc<CostTally> {
        self.ode.tally()
    }
}

/// Names accepted by [`make_problem`].
pub const SYSTEM_NAMES: &[&str] = &["anharmonic2d", "harmonic1d", "quartic1d", "linear"];

/// Build a fresh problem instance by registry name.
pub fn make_problem<S: Scalar>(name: &str) -> Result<Problem<S>> {
    match name {
        "anharmonic2d" => Ok(Problem::from_ham(name, anharmonic2d())),
        "harmonic1d" => Ok(Problem::from_ham(name, harmonic1d())),
        "quartic1d" => Ok(Problem::from_ham(name, quartic1d())),
        "linear" => {
            // fixed stable demonstration system
            let a = SquareMatrix::new(2, vec![S::of(-1.0), S::of(0.5), S::zero(), S::of(-2.0)])?;
            let b = Vector::from_slice(&[S::one(), S::zero()]);
            Ok(Problem::from_ode(name, LinearSystem::new(a, b)?.to_ode()))
        }
        other => Err(Error::Validation(format!(
            "unknown system '{other}'; valid systems: {}",
            SYSTEM_NAMES.join(", ")
        ))),
    }
}

// ---------------------------------------------------------------------------
// Finite-difference self-checks (test hooks)
// ---------------------------------------------------------------------------

/// Max componentwise disagreement between the analytic Jacobian and central
/// finite differences of `F` at `x`, with step `eps`.
pub fn jacobian_fd_error<S: Scalar>(sys: &OdeSystem<S>, x: &Vector<S>, eps: S) -> S {
    let n = sys.dim();
    let jac = sys.eval_jac(x);
    let mut worst = S::zero();
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.set(j, x.get(j) + eps);
        xm.set(j, x.get(j) - eps);
        let fp = sys.eval_f(&xp);
        let fm = sys.eval_f(&xm);
        for i in 0..n {
            let fd = (fp.get(i) - fm.get(i)) / (S::two() * eps);
            let d = (fd - jac.get(i, j)).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Max componentwise disagreement between the analytic gradient and central
/// finite differences of `H` at `y`.
pub fn gradient_fd_error<S: Scalar>(hs: &HamiltonianSystem<S>, y: &Vector<S>, eps: S) -> S {
    let n = hs.dim();
    let grad = hs.gradient(y);
    let mut worst = S::zero();
    for j in 0..n {
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp.set(j, y.get(j) + eps);
        ym.set(j, y.get(j) - eps);
        let fd = (hs.energy(&yp) - hs.energy(&ym)) / (S::two() * eps);
        let d = (fd - grad.get(j)).abs();
        if d > worst {
            worst = d;
        }
    }
    worst
}
