//! Dense real matrix functions: `exp`, `φ₁`, `tanhc`, and LU solves.
//!
//! Everything here is sized for the tiny systems the integrators produce
//! (d ≤ a few dozen), so robustness is preferred over asymptotics:
//! the exponential and φ₁ use scaling-and-squaring around a short Taylor
//! core, and tanhc is evaluated through a φ₁-based identity that stays
//! finite at the zero matrix. All operations are deterministic value
//! semantics: same input bits, same output bits.

use crate::{Error, Result, Scalar};

/// Dense real square matrix, row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix<S: Scalar> {
    dim: usize,
    data: Vec<S>,
}

/// Dense real vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector<S: Scalar> {
    data: Vec<S>,
}

impl<S: Scalar> SquareMatrix<S> {
    /// Construct from row-major entries, checking finiteness.
    pub fn new(dim: usize, entries: Vec<S>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("matrix dimension must be >= 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries for dim {}, got {}",
                dim * dim,
                dim,
                entries.len()
            )));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        Ok(Self { dim, data: entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![S::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = S::one();
        }
        m
    }

    /// Build from a function of (row, col).
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.dim + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|e| e.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i))
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, c: S) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&a| a * c).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == S::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &Vector<S>) -> Vector<S> {
        debug_assert_eq!(self.dim, v.dim());
        let n = self.dim;
        let mut out = vec![S::zero(); n];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = S::zero();
            for j in 0..n {
                acc = acc + self.data[i * n + j] * v.data[j];
            }
            *o = acc;
        }
        Vector { data: out }
    }

    /// Maximum absolute row sum (induced infinity norm).
    pub fn norm_inf(&self) -> S {
        let n = self.dim;
        let mut best = S::zero();
        for i in 0..n {
            let mut row = S::zero();
            for j in 0..n {
                row = row + self.data[i * n + j].abs();
            }
            if row > best {
                best = row;
            }
        }
        best
    }

    pub fn max_abs(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |acc, &e| if e.abs() > acc { e.abs() } else { acc })
    }
}

impl<S: Scalar> Vector<S> {
    pub fn new(entries: Vec<S>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Dimension("vector dimension must be >= 1".into()));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("vector entry".into()));
        }
        Ok(Self { data: entries })
    }

    pub fn from_slice(entries: &[S]) -> Self {
        Self {
            data: entries.to_vec(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![S::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn get(&self, i: usize) -> S {
        self.data[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: S) {
        self.data[i] = v;
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|e| e.is_finite())
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, c: S) -> Self {
        Self {
            data: self.data.iter().map(|&a| a * c).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> S {
        debug_assert_eq!(self.dim(), other.dim());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |acc, &e| if e.abs() > acc { e.abs() } else { acc })
    }
}

// ---------------------------------------------------------------------------
// LU factorization with partial pivoting
// ---------------------------------------------------------------------------

/// LU factorization with partial pivoting of a square matrix.
pub struct Lu<S: Scalar> {
    dim: usize,
    lu: Vec<S>,
    piv: Vec<usize>,
    min_pivot: S,
}

impl<S: Scalar> Lu<S> {
    pub fn factor(m: &SquareMatrix<S>) -> Result<Self> {
        let n = m.dim;
        let mut lu = m.data.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        let scale = m.norm_inf().max(S::one());
        let tiny = S::epsilon() * scale * S::of(n as f64);
        let mut min_pivot = S::infinity();

        for col in 0..n {
            // pivot search
            let mut best = col;
            let mut best_val = lu[col * n + col].abs();
            for row in (col + 1)..n {
                let v = lu[row * n + col].abs();
                if v > best_val {
                    best_val = v;
                    best = row;
                }
            }
            if best_val <= tiny {
                return Err(Error::Singular {
                    pivot: best_val.to_f64().unwrap_or(0.0),
                });
            }
            if best != col {
                for j in 0..n {
                    lu.swap(col * n + j, best * n + j);
                }
                piv.swap(col, best);
            }
            let pivot = lu[col * n + col];
            if pivot.abs() < min_pivot {
                min_pivot = pivot.abs();
            }
            for row in (col + 1)..n {
                let factor = lu[row * n + col] / pivot;
                lu[row * n + col] = factor;
                for j in (col + 1)..n {
                    lu[row * n + j] = lu[row * n + j] - factor * lu[col * n + j];
                }
            }
        }
        Ok(Self {
            dim: n,
            lu,
            piv,
            min_pivot,
        })
    }

    /// Smallest pivot magnitude seen during elimination, a cheap proxy for
    /// the distance to singularity.
    pub fn min_pivot(&self) -> S {
        self.min_pivot
    }

    pub fn solve_vec(&self, b: &Vector<S>) -> Vector<S> {
        let n = self.dim;
        debug_assert_eq!(b.dim(), n);
        let mut x: Vec<S> = self.piv.iter().map(|&p| b.data[p]).collect();
        // forward substitution (unit lower triangle)
        for i in 1..n {
            let mut acc = x[i];
            for (j, xj) in x.iter().enumerate().take(i) {
                acc = acc - self.lu[i * n + j] * *xj;
            }
            x[i] = acc;
        }
        // back substitution
        for i in (0..n).rev() {
            let mut acc = x[i];
            for (j, xj) in x.iter().enumerate().skip(i + 1) {
                acc = acc - self.lu[i * n + j] * *xj;
            }
            x[i] = acc / self.lu[i * n + i];
        }
        Vector { data: x }
    }

    pub fn solve_mat(&self, b: &SquareMatrix<S>) -> SquareMatrix<S> {
        let n = self.dim;
        debug_assert_eq!(b.dim, n);
        let mut out = SquareMatrix::zeros(n);
        for col in 0..n {
            let rhs = Vector::from_slice(&(0..n).map(|i| b.get(i, col)).collect::<Vec<_>>());
            let x = self.solve_vec(&rhs);
            for i in 0..n {
                out.set(i, col, x.data[i]);
            }
        }
        out
    }
}

/// Solve `M x = b`.
pub fn solve_linear<S: Scalar>(m: &SquareMatrix<S>, b: &Vector<S>) -> Result<Vector<S>> {
    Ok(Lu::factor(m)?.solve_vec(b))
}

/// Solve `M X = B` column by column.
pub fn solve_linear_mat<S: Scalar>(
    m: &SquareMatrix<S>,
    b: &SquareMatrix<S>,
) -> Result<SquareMatrix<S>> {
    Ok(Lu::factor(m)?.solve_mat(b))
}

/// Solve `X M = B` (right division), via the transposed system.
pub fn solve_right<S: Scalar>(
    b: &SquareMatrix<S>,
    m: &SquareMatrix<S>,
) -> Result<SquareMatrix<S>> {
    let xt = solve_linear_mat(&m.transpose(), &b.transpose())?;
    Ok(xt.transpose())
}

// ---------------------------------------------------------------------------
// Matrix functions
// ---------------------------------------------------------------------------

fn check_expm_pre<S: Scalar>(m: &SquareMatrix<S>) -> Result<S> {
    if !m.is_finite() {
        return Err(Error::NonFinite("matrix function argument".into()));
    }
    let norm = m.norm_inf();
    // e^{||M||} must stay representable; never return a silent Inf
    if norm > S::max_value().ln() {
        return Err(Error::Overflow {
            norm: norm.to_f64().unwrap_or(f64::INFINITY),
        });
    }
    Ok(norm)
}

/// Shared scaling-and-squaring core producing `(e^M, φ₁(M))` together.
///
/// The squaring phase uses the doubling identities
/// `e^{2A} = (e^A)²` and `φ₁(2A) = ½ φ₁(A)(e^A + I)`.
fn expm_phi1_pair<S: Scalar>(m: &SquareMatrix<S>) -> Result<(SquareMatrix<S>, SquareMatrix<S>)> {
    let norm = check_expm_pre(m)?;
    let n = m.dim;

    // scale so the Taylor argument has norm <= 1/2
    let mut squarings = 0u32;
    let mut scaled_norm = norm;
    while scaled_norm > S::half() {
        scaled_norm = scaled_norm * S::half();
        squarings += 1;
    }
    let a = m.scale(S::one() / S::of(f64::powi(2.0, squarings as i32)));

    // Taylor series for exp and φ₁ of the scaled argument
    let mut e = SquareMatrix::identity(n);
    let mut p = SquareMatrix::identity(n);
    let mut term = SquareMatrix::identity(n); // A^k / k!
    let floor = S::epsilon() * S::of(0.25);
    for k in 1..=64 {
        term = term.matmul(&a).scale(S::one() / S::of(k as f64));
        e = e.add(&term);
        p = p.add(&term.scale(S::one() / S::of((k + 1) as f64)));
        if term.max_abs() <= floor {
            break;
        }
    }

    let identity = SquareMatrix::identity(n);
    for _ in 0..squarings {
        p = p.matmul(&e.add(&identity)).scale(S::half());
        e = e.matmul(&e);
    }
    if !e.is_finite() || !p.is_finite() {
        return Err(Error::Overflow {
            norm: norm.to_f64().unwrap_or(f64::INFINITY),
        });
    }
    Ok((e, p))
}

/// Matrix exponential `e^M`.
pub fn expm<S: Scalar>(m: &SquareMatrix<S>) -> Result<SquareMatrix<S>> {
    Ok(expm_phi1_pair(m)?.0)
}

/// `φ₁(M) = M⁻¹(e^M − I)`, extended analytically through singular `M`
/// (`φ₁(0) = I`); no inversion of `M` is performed.
pub fn phi1<S: Scalar>(m: &SquareMatrix<S>) -> Result<SquareMatrix<S>> {
    Ok(expm_phi1_pair(m)?.1)
}

/// `tanhc(hM/2)` where `tanhc(z) = z⁻¹ tanh z`, `tanhc(0) = 1`.
///
/// Computed through the singularity-free identity
/// `tanhc(Z) = 2 (e^{2Z} + I)⁻¹ φ₁(2Z)` with `Z = hM/2`, so the zero matrix
/// and singular `M` need no special casing. Fails with a conditioning report
/// when `e^{hM} + I` is singular to working precision (an eigenvalue of `hM`
/// near `iπ(2k+1)`).
pub fn tanhc_half<S: Scalar>(m: &SquareMatrix<S>, h: S) -> Result<SquareMatrix<S>> {
    if !h.is_finite() {
        return Err(Error::NonFinite("tanhc step size".into()));
    }
    let n = m.dim;
    let two_z = m.scale(h); // 2Z = hM
    let (e, p) = expm_phi1_pair(&two_z)?;
    let denom = e.add(&SquareMatrix::identity(n));
    let lu = Lu::factor(&denom).map_err(|err| match err {
        Error::Singular { pivot } => Error::IllConditioned {
            context: "tanhc_half",
            pivot,
            eigenvalue_estimate: pivot,
        },
        other => other,
    })?;
    // conditioning guard: pivot growth relative to the matrix scale
    let scale = denom.norm_inf().max(S::one());
    if lu.min_pivot() < scale * S::epsilon() * S::of(1e3) {
        return Err(Error::IllConditioned {
            context: "tanhc_half",
            pivot: lu.min_pivot().to_f64().unwrap_or(0.0),
            // the smallest pivot approximates |λ(e^{hM}) + 1| for the
            // offending eigenvalue
            eigenvalue_estimate: lu.min_pivot().to_f64().unwrap_or(0.0),
        });
    }
    Ok(lu.solve_mat(&p.scale(S::two())))
}
