//! Locally exact modifications of classical one-step and discrete gradient
//! ODE integrators.
//!
//! A locally exact scheme reproduces, at every step, the exact discretization
//! of the linearization of the system at an anchor point (the current point,
//! the next point, or their midpoint). Such schemes preserve all fixed points
//! and are A-stable, and for canonical Hamiltonian systems the discrete
//! gradient variants additionally conserve the energy integral exactly.
//!
//! The crate is organized as:
//!
//! * [`matfun`] — dense matrix functions (`expm`, `phi1`, `tanhc`) and LU solves,
//!   all singularity-free at the zero matrix;
//! * [`systems`] — problem descriptors: generic autonomous ODEs, linear
//!   constant-coefficient systems, canonical Hamiltonian systems, and the
//!   benchmark anharmonic oscillator;
//! * [`schemes`] — the one-step kernels (EEU, IEU, IMP, TR), the exact linear
//!   propagator, and their locally exact δ-modified variants;
//! * [`gradschemes`] — Itoh–Abe and symmetrized discrete gradients and their
//!   energy-preserving locally exact modifications;
//! * [`analysis`] — convergence-order estimation, stability audits, energy
//!   drift checks, global-error measurement and cost calibration;
//! * [`cli`] — the batch command-line surface.
//!
//! Core numerics are generic over the scalar type through the [`Scalar`]
//! trait; the `f64` instantiations used by the CLI are aliased at the crate
//! root ([`Mat64`], [`Vec64`]).

pub mod analysis;
pub mod cli;
pub mod gradschemes;
pub mod matfun;
pub mod schemes;
pub mod systems;

mod scalar;

pub use scalar::Scalar;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite entry at construction: {0}")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix exponential overflow: norm {norm} exceeds representable range")]
    Overflow { norm: f64 },
    #[error("matrix singular to working precision (pivot magnitude {pivot:e})")]
    Singular { pivot: f64 },
    #[error("ill-conditioned solve in {context}: smallest pivot {pivot:e} suggests an eigenvalue near {eigenvalue_estimate:e}")]
    IllConditioned {
        context: &'static str,
        pivot: f64,
        eigenvalue_estimate: f64,
    },
    #[error("step-size failure: {0} (consider halving h)")]
    StepSize(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("run aborted: {0}")]
    Aborted(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Concrete `f64` matrix used by the CLI and benchmark harness.
pub type Mat64 = matfun::SquareMatrix<f64>;
/// Concrete `f64` vector.
pub type Vec64 = matfun::Vector<f64>;
/// Concrete `f32` matrix.
pub type Mat32 = matfun::SquareMatrix<f32>;
/// Concrete `f32` vector.
pub type Vec32 = matfun::Vector<f32>;
