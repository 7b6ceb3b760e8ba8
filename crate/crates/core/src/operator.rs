//! Dense complex square matrices acting on a Hilbert space.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Tolerance used by the cached hermiticity flag.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// A dense `dim x dim` complex matrix.
pub struct Operator {
    mat: Mat<C64>,
    hermitian: OnceLock<bool>,
}

impl Clone for Operator {
    fn clone(&self) -> Self {
        Self {
            mat: self.mat.clone(),
            hermitian: self.hermitian.clone(),
        }
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Operator({}x{})", self.dim(), self.dim())?;
        for i in 0..self.dim().min(16) {
            for j in 0..self.dim().min(16) {
                let z = self.mat[(i, j)];
                write!(f, " {:+.4}{:+.4}i", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl Operator {
    /// Wraps a matrix after checking it is square with finite entries.
    pub fn new(mat: Mat<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        for j in 0..mat.ncols() {
            for i in 0..mat.nrows() {
                let z = mat[(i, j)];
                if !(z.re.is_finite() && z.im.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "non-finite entry at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::wrap(mat))
    }

    pub(crate) fn wrap(mat: Mat<C64>) -> Self {
        debug_assert_eq!(mat.nrows(), mat.ncols());
        Self {
            mat,
            hermitian: OnceLock::new(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::wrap(Mat::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::wrap(Mat::identity(dim, dim))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self::wrap(Mat::from_fn(dim, dim, f))
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { ZERO })
    }

    pub fn real_diagonal(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |i, j| {
            if i == j {
                C64::new(diag[i], 0.0)
            } else {
                ZERO
            }
        })
    }

    /// Outer product `|a><b|`.
    pub fn outer(a: &[C64], b: &[C64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        Ok(Self::from_fn(a.len(), |i, j| a[i] * b[j].conj()))
    }

    /// Projector onto a basis state.
    pub fn basis_projector(dim: usize, k: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == k && j == k { ONE } else { ZERO })
    }

    /// Rebuilds an operator from its column-stacked vectorization.
    pub fn from_vec(v: &[C64]) -> Result<Self> {
        let d = (v.len() as f64).sqrt().round() as usize;
        if d * d != v.len() {
            return Err(Error::InvalidInput(format!(
                "length {} is not a square",
                v.len()
            )));
        }
        Ok(Self::from_fn(d, |i, j| v[i + d * j]))
    }

    /// Column-stacked vectorization, `vec(A)[i + d j] = A[i, j]`.
    pub fn to_vec(&self) -> Vec<C64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for j in 0..d {
            out.extend_from_slice(self.mat.col_as_slice(j));
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> MatRef<'_, C64> {
        self.mat.as_ref()
    }

    pub fn into_mat(self) -> Mat<C64> {
        self.mat
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    pub fn dagger(&self) -> Self {
        let out = Self::wrap(self.mat.adjoint().to_owned());
        if let Some(&h) = self.hermitian.get() {
            let _ = out.hermitian.set(h);
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::wrap(self.mat.transpose().to_owned())
    }

    pub fn conj(&self) -> Self {
        Self::from_fn(self.dim(), |i, j| self.mat[(i, j)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.mat[(i, i)]).sum()
    }

    /// Hilbert–Schmidt inner product `Tr(self^† other)`.
    pub fn hs_inner(&self, other: &Operator) -> C64 {
        assert_eq!(self.dim(), other.dim(), "hs_inner dimension mismatch");
        let mut acc = ZERO;
        for j in 0..self.dim() {
            let a = self.mat.col_as_slice(j);
            let b = other.mat.col_as_slice(j);
            for (x, y) in a.iter().zip(b) {
                acc += x.conj() * y;
            }
        }
        acc
    }

    /// Frobenius (Hilbert–Schmidt) norm.
    pub fn hs_norm(&self) -> f64 {
        self.mat.norm_l2()
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.norm_max()
    }

    /// Largest entrywise deviation from hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut err = 0.0_f64;
        for j in 0..d {
            for i in 0..=j {
                err = err.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        err
    }

    /// Cached check, relative to `max(1, max_abs)`.
    pub fn is_hermitian(&self) -> bool {
        *self.hermitian.get_or_init(|| self.check_hermitian())
    }

    /// Recomputes the hermiticity flag without using the cache.
    pub fn check_hermitian(&self) -> bool {
        self.hermiticity_error() <= HERMITIAN_TOL * self.max_abs().max(1.0)
    }

    pub fn require_hermitian(&self) -> Result<()> {
        if self.is_hermitian() {
            Ok(())
        } else {
            Err(Error::NotHermitian(self.hermiticity_error()))
        }
    }

    /// `(A + A^†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let d = self.dim();
        let out = Self::from_fn(d, |i, j| 0.5 * (self.mat[(i, j)] + self.mat[(j, i)].conj()));
        let _ = out.hermitian.set(true);
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::from_fn(self.dim(), |i, j| c * self.mat[(i, j)])
    }

    pub fn scale_re(&self, c: f64) -> Self {
        let out = Self::from_fn(self.dim(), |i, j| c * self.mat[(i, j)]);
        if let Some(&h) = self.hermitian.get() {
            let _ = out.hermitian.set(h);
        }
        out
    }

    pub fn matmul(&self, other: &Operator) -> Self {
        assert_eq!(self.dim(), other.dim(), "matmul dimension mismatch");
        Self::wrap(&self.mat * &other.mat)
    }

    /// `A B A^†`.
    pub fn conjugate_by(&self, u: &Operator) -> Self {
        u.matmul(self).matmul(&u.dagger())
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    pub fn anticommutator(&self, other: &Operator) -> Self {
        &self.matmul(other) + &other.matmul(self)
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut out = Self::identity(self.dim());
        for _ in 0..n {
            out = out.matmul(self);
        }
        out
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Operator) -> Self {
        let (da, db) = (self.dim(), other.dim());
        Self::from_fn(da * db, |i, j| {
            self.mat[(i / db, j / db)] * other.mat[(i % db, j % db)]
        })
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim());
        let mut out = vec![ZERO; self.dim()];
        for (j, &x) in v.iter().enumerate() {
            if x == ZERO {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.mat.col_as_slice(j)) {
                *o += a * x;
            }
        }
        out
    }

    /// Eigen-decomposition of the hermitian part: ascending eigenvalues and
    /// eigenvectors as columns.
    pub fn eigh(&self) -> Result<(Vec<f64>, Mat<C64>)> {
        let h = self.hermitian_part();
        let evd = h
            .mat
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Linalg(format!("hermitian eigendecomposition: {e:?}")))?;
        let vals = evd.S().column_vector().iter().map(|z| z.re).collect();
        Ok((vals, evd.U().to_owned()))
    }

    pub fn eigvalsh(&self) -> Result<Vec<f64>> {
        self.hermitian_part()
            .mat
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Linalg(format!("hermitian eigenvalues: {e:?}")))
    }

    /// Applies a real function to a hermitian operator through its spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> C64) -> Result<Self> {
        let (vals, u) = self.eigh()?;
        let d = self.dim();
        let fv: Vec<C64> = vals.iter().map(|&x| f(x)).collect();
        Ok(Self::from_fn(d, |i, j| {
            (0..d).map(|k| u[(i, k)] * fv[k] * u[(j, k)].conj()).sum()
        }))
    }

    /// `exp(-i t H)` for hermitian `H = self`.
    pub fn exp_i_hermitian(&self, t: f64) -> Result<Self> {
        self.require_hermitian()?;
        self.map_spectrum(|x| C64::from_polar(1.0, -t * x))
    }

    /// Largest entrywise deviation of `U^† U` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.dagger().matmul(self);
        (&p - &Operator::identity(self.dim())).max_abs()
    }

    /// Hilbert–Schmidt distance `||A - B||_2`.
    pub fn hs_distance(&self, other: &Operator) -> f64 {
        (self - other).hs_norm()
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "add dimension mismatch");
        Operator::wrap(&self.mat + &rhs.mat)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "sub dimension mismatch");
        Operator::wrap(&self.mat - &rhs.mat)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs)
    }
}

impl Mul<&Operator> for f64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scale_re(self)
    }
}

impl Mul<&Operator> for C64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scale(self)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_re(-1.0)
    }
}

/// Kronecker product of a list of operators, left to right.
pub fn kron_all(ops: &[&Operator]) -> Operator {
    let mut out = Operator::identity(1);
    for op in ops {
        out = out.kron(op);
    }
    out
}
