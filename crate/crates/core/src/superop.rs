//! Linear maps on column-stacked density matrices.
//!
//! Every generator is kept as a short list of sandwich terms
//! `c * A rho B`. From that list the builder materializes a dense matrix, a
//! CSR matrix, or keeps the factors and applies them matrix-free.
//! Column stacking gives `vec(A rho B) = (B^T ⊗ A) vec(rho)`.

use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::operator::{Operator, ONE, ZERO};
use crate::sparse::{Csr, CsrBuilder};

/// Superoperators with `d^2` at most this size are stored densely.
pub const DENSE_VEC_DIM: usize = 4096;

/// Above this many stored entries the CSR form is skipped in favour of the
/// matrix-free form.
pub const SPARSE_NNZ_LIMIT: usize = 1 << 24;

/// One term `coef * A rho B`; `None` stands for the identity.
#[derive(Debug, Clone)]
pub struct SandwichTerm {
    pub left: Option<Csr>,
    /// Transpose of the right factor, so row `j` lists column `j` of `B`.
    pub right_t: Option<Csr>,
    pub coef: C64,
}

impl SandwichTerm {
    pub fn new(left: Option<Csr>, right: Option<Csr>, coef: C64) -> Self {
        Self {
            left,
            right_t: right.map(|b| b.transpose()),
            coef,
        }
    }
}

/// Sum of sandwich terms on a `d`-dimensional Hilbert space.
#[derive(Debug, Clone)]
pub struct SandwichForm {
    dim: usize,
    terms: Vec<SandwichTerm>,
}

impl SandwichForm {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[SandwichTerm] {
        &self.terms
    }

    pub fn push(&mut self, term: SandwichTerm) {
        for m in [&term.left, &term.right_t].into_iter().flatten() {
            assert_eq!(
                (m.nrows(), m.ncols()),
                (self.dim, self.dim),
                "term dimension mismatch"
            );
        }
        self.terms.push(term);
    }

    /// Lindblad form `-i[H, rho] + sum_k r_k (2 K rho K^† - {K^†K, rho})`
    /// written as `G rho + rho G^† + sum 2 r K rho K^†` with
    /// `G = -iH - sum r K^†K`.
    pub fn lindblad(h: &Csr, jumps: &[(Csr, f64)]) -> Self {
        let d = h.nrows();
        let mut g = h.scale(C64::new(0.0, -1.0));
        for (k, r) in jumps {
            let kdk = k.adjoint().matmul(k);
            g = g.add(&kdk.scale(C64::new(-r, 0.0)));
        }
        let mut form = Self::new(d);
        form.push(SandwichTerm {
            left: Some(g.clone()),
            right_t: None,
            coef: ONE,
        });
        form.push(SandwichTerm {
            left: None,
            right_t: Some(g.map_values(|v| v.conj())),
            coef: ONE,
        });
        for (k, r) in jumps {
            if *r == 0.0 {
                continue;
            }
            form.push(SandwichTerm {
                left: Some(k.clone()),
                right_t: Some(k.map_values(|v| v.conj())),
                coef: C64::new(2.0 * r, 0.0),
            });
        }
        form
    }

    /// Upper bound on stored entries of the assembled matrix.
    pub fn nnz_bound(&self) -> usize {
        let d = self.dim;
        self.terms
            .iter()
            .map(|t| {
                let a = t.left.as_ref().map_or(d, Csr::nnz);
                let b = t.right_t.as_ref().map_or(d, Csr::nnz);
                a.saturating_mul(b)
            })
            .fold(0usize, usize::saturating_add)
    }

    /// Entries of row `i + d j`, unsorted and possibly repeated.
    fn row_entries(&self, i: usize, j: usize, out: &mut Vec<(usize, C64)>) {
        let d = self.dim;
        for t in &self.terms {
            let left: Vec<(usize, C64)> = match &t.left {
                Some(a) => a.row(i).collect(),
                None => vec![(i, ONE)],
            };
            let right: Vec<(usize, C64)> = match &t.right_t {
                Some(b) => b.row(j).collect(),
                None => vec![(j, ONE)],
            };
            for &(l, vb) in &right {
                for &(k, va) in &left {
                    out.push((k + d * l, t.coef * va * vb));
                }
            }
        }
    }

    pub fn assemble_csr(&self) -> Csr {
        let d = self.dim;
        let n = d * d;
        let mut b = CsrBuilder::new(n, n);
        b.reserve(self.nnz_bound().min(SPARSE_NNZ_LIMIT));
        let mut buf = Vec::new();
        for j in 0..d {
            for i in 0..d {
                buf.clear();
                self.row_entries(i, j, &mut buf);
                buf.sort_by_key(|e| e.0);
                let mut k = 0;
                while k < buf.len() {
                    let col = buf[k].0;
                    let mut acc = ZERO;
                    while k < buf.len() && buf[k].0 == col {
                        acc += buf[k].1;
                        k += 1;
                    }
                    b.push(col, acc);
                }
                b.finish_row();
            }
        }
        b.build()
    }

    pub fn assemble_dense(&self) -> Mat<C64> {
        let d = self.dim;
        let n = d * d;
        let mut m = Mat::<C64>::zeros(n, n);
        let mut buf = Vec::new();
        for j in 0..d {
            for i in 0..d {
                buf.clear();
                self.row_entries(i, j, &mut buf);
                buf.sort_by_key(|e| e.0);
                for &(c, v) in &buf {
                    m[(i + d * j, c)] += v;
                }
            }
        }
        m
    }

    /// `y = L x` without assembling `L`.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        let d = self.dim;
        y.iter_mut().for_each(|v| *v = ZERO);
        let mut tmp = vec![ZERO; d * d];
        for t in &self.terms {
            // tmp = A X
            let ax: &[C64] = match &t.left {
                Some(a) => {
                    for j in 0..d {
                        a.matvec(&x[j * d..(j + 1) * d], &mut tmp[j * d..(j + 1) * d]);
                    }
                    &tmp
                }
                None => x,
            };
            // y[:, j] += coef * sum_l ax[:, l] B[l, j]
            match &t.right_t {
                Some(bt) => {
                    for j in 0..d {
                        let yj = &mut y[j * d..(j + 1) * d];
                        for (l, v) in bt.row(j) {
                            let w = t.coef * v;
                            for (yy, aa) in yj.iter_mut().zip(&ax[l * d..(l + 1) * d]) {
                                *yy += w * aa;
                            }
                        }
                    }
                }
                None => {
                    for (yy, aa) in y.iter_mut().zip(ax) {
                        *yy += t.coef * aa;
                    }
                }
            }
        }
    }

    /// The operator `sum coef B A`; its Frobenius norm measures how far the
    /// trace functional is from being a left null vector.
    pub fn dual_of_identity(&self) -> Csr {
        let d = self.dim;
        let mut acc = Csr::zeros(d, d);
        for t in &self.terms {
            let ba = match (&t.left, &t.right_t) {
                (Some(a), Some(bt)) => bt.transpose().matmul(a),
                (Some(a), None) => a.clone(),
                (None, Some(bt)) => bt.transpose(),
                (None, None) => Csr::identity(d),
            };
            acc = acc.add(&ba.scale(t.coef));
        }
        acc
    }

    /// Cheap upper bound on the induced infinity norm.
    pub fn norm_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let a = t.left.as_ref().map_or(1.0, Csr::norm_inf);
                let b = t.right_t.as_ref().map_or(1.0, Csr::norm_inf);
                t.coef.norm() * a * b
            })
            .sum()
    }
}

/// Storage used by a [`SuperOperator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Storage {
    Dense,
    Sparse,
    MatrixFree,
}

impl Storage {
    /// Dense up to `d^2 = 4096`, CSR while the entry bound fits, matrix-free
    /// beyond.
    pub fn auto(form: &SandwichForm) -> Self {
        let n = form.dim() * form.dim();
        if n <= DENSE_VEC_DIM {
            Storage::Dense
        } else if form.nnz_bound() <= SPARSE_NNZ_LIMIT {
            Storage::Sparse
        } else {
            Storage::MatrixFree
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Dense(Mat<C64>),
    Sparse(Csr),
    MatrixFree,
}

/// Data kept alongside an embedded generator for the iterative solver.
#[derive(Debug, Clone)]
pub struct EmbeddingStructure {
    pub spin_dim: usize,
    pub aux_dim: usize,
    /// Dense generator on the spin space with the auxiliaries adiabatically
    /// eliminated.
    pub spin_generator: Mat<C64>,
    /// Free auxiliary generator (no spin coupling), vectorized on the
    /// auxiliary space.
    pub aux_generator: Csr,
    /// `n(a) + n(a')` for every auxiliary super-index `a + da a'`.
    pub aux_excitations: Vec<usize>,
    /// Index of the auxiliary vacuum.
    pub vacuum: usize,
}

/// A linear map on vectorized `d x d` matrices.
#[derive(Debug, Clone)]
pub struct SuperOperator {
    form: Arc<SandwichForm>,
    repr: Repr,
    embedding: Option<Arc<EmbeddingStructure>>,
}

impl SuperOperator {
    pub fn from_form(form: SandwichForm, storage: Storage) -> Self {
        let repr = match storage {
            Storage::Dense => Repr::Dense(form.assemble_dense()),
            Storage::Sparse => Repr::Sparse(form.assemble_csr()),
            Storage::MatrixFree => Repr::MatrixFree,
        };
        Self {
            form: Arc::new(form),
            repr,
            embedding: None,
        }
    }

    pub fn auto(form: SandwichForm) -> Self {
        let storage = Storage::auto(&form);
        Self::from_form(form, storage)
    }

    /// Superoperator `rho -> sum c A rho B` from dense factors.
    pub fn from_dense_terms(terms: &[(Operator, Operator, C64)]) -> Result<Self> {
        let d = terms
            .first()
            .map(|t| t.0.dim())
            .ok_or_else(|| Error::InvalidInput("at least one sandwich term required".into()))?;
        let mut form = SandwichForm::new(d);
        for (a, b, c) in terms {
            if a.dim() != d || b.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: a.dim().max(b.dim()),
                });
            }
            form.push(SandwichTerm::new(
                Some(Csr::from_dense(a)),
                Some(Csr::from_dense(b)),
                *c,
            ));
        }
        Ok(Self::auto(form))
    }

    pub fn zero(dim: usize) -> Self {
        Self::auto(SandwichForm::new(dim))
    }

    pub(crate) fn with_embedding(mut self, s: EmbeddingStructure) -> Self {
        self.embedding = Some(Arc::new(s));
        self
    }

    pub fn embedding(&self) -> Option<&EmbeddingStructure> {
        self.embedding.as_deref()
    }

    /// Same map with a different storage.
    pub fn restored(&self, storage: Storage) -> Self {
        let mut out = Self::from_form((*self.form).clone(), storage);
        out.embedding = self.embedding.clone();
        out
    }

    pub fn form(&self) -> &SandwichForm {
        &self.form
    }

    /// Hilbert-space dimension `d`.
    pub fn dim(&self) -> usize {
        self.form.dim()
    }

    /// Length `d^2` of vectorized operands.
    pub fn vec_dim(&self) -> usize {
        self.dim() * self.dim()
    }

    pub fn storage(&self) -> Storage {
        match self.repr {
            Repr::Dense(_) => Storage::Dense,
            Repr::Sparse(_) => Storage::Sparse,
            Repr::MatrixFree => Storage::MatrixFree,
        }
    }

    pub fn dense(&self) -> Option<&Mat<C64>> {
        match &self.repr {
            Repr::Dense(m) => Some(m),
            _ => None,
        }
    }

    pub fn sparse(&self) -> Option<&Csr> {
        match &self.repr {
            Repr::Sparse(m) => Some(m),
            _ => None,
        }
    }

    /// Dense `d^2 x d^2` matrix, assembled if needed.
    pub fn to_dense_matrix(&self) -> Mat<C64> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            _ => self.form.assemble_dense(),
        }
    }

    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.vec_dim(), "superoperator input length");
        assert_eq!(y.len(), self.vec_dim(), "superoperator output length");
        match &self.repr {
            Repr::Dense(m) => {
                y.iter_mut().for_each(|v| *v = ZERO);
                for (c, &xc) in x.iter().enumerate() {
                    if xc == ZERO {
                        continue;
                    }
                    for (yy, mm) in y.iter_mut().zip(m.col_as_slice(c)) {
                        *yy += mm * xc;
                    }
                }
            }
            Repr::Sparse(m) => m.matvec(x, y),
            Repr::MatrixFree => self.form.apply_into(x, y),
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.vec_dim()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_op(&self, rho: &Operator) -> Result<Operator> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: rho.dim(),
            });
        }
        Operator::from_vec(&self.apply(&rho.to_vec()))
    }

    /// `||vec(I)^† L||`; zero for trace-preserving generators.
    pub fn trace_functional_residual(&self) -> f64 {
        self.form.dual_of_identity().frobenius()
    }

    pub fn norm_bound(&self) -> f64 {
        self.form.norm_bound()
    }
}

/// Lindblad generator `-i[h, rho] + sum r (2 K rho K^† - {K^†K, rho})`.
pub fn lindblad_superop(h: &Operator, dissipators: &[(Operator, f64)]) -> Result<SuperOperator> {
    h.require_hermitian()?;
    let d = h.dim();
    let mut jumps = Vec::with_capacity(dissipators.len());
    for (k, r) in dissipators {
        if k.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: k.dim(),
            });
        }
        if !(*r >= 0.0 && r.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dissipator prefactor must be >= 0, got {r}"
            )));
        }
        jumps.push((Csr::from_dense(k), *r));
    }
    let form = SandwichForm::lindblad(&Csr::from_dense(&h.hermitian_part()), &jumps);
    Ok(SuperOperator::auto(form))
}
