//! Stationary states of Lindblad generators.
//!
//! Small generators are handled through the SVD of the dense matrix. Large
//! ones solve the trace-bordered system `(L + x0 <I|) x = x0` with restarted
//! GMRES; embedded generators get a right preconditioner built from the
//! uncoupled problem (adiabatically eliminated spin generator plus the free
//! auxiliary generator), which is block triangular in excitation number and
//! therefore exactly invertible.

use std::collections::HashMap;
use std::fmt;

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::liouville::{build_embedding_with, partial_trace, EmbeddingModel};
use crate::operator::{Operator, ONE, ZERO};
use crate::superop::{EmbeddingStructure, Storage, SuperOperator};

/// Relative singular-value threshold for the dense null space.
pub const NULL_TOL: f64 = 1e-10;

/// Largest vectorized dimension solved by a full SVD; bigger dense
/// generators use an LU factorization of the bordered system.
pub const SVD_MAX_DIM: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// SVD of the assembled generator.
    DenseSvd,
    /// LU of the assembled trace-bordered generator.
    DenseLu,
    /// Preconditioned GMRES on the trace-bordered system.
    SparseGmres,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::DenseSvd => "dense_svd",
            Method::DenseLu => "dense_lu",
            Method::SparseGmres => "sparse_gmres",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SteadyStateReport {
    pub rho_ss: Operator,
    pub nullity: usize,
    /// `||L[rho_ss]||_HS`.
    pub residual: f64,
    pub method: Method,
    /// Local dimension of every auxiliary (empty for spin-only generators).
    pub truncation_used: Vec<usize>,
    /// Smallest eigenvalue before clipping.
    pub min_eigenvalue: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SteadyOptions {
    /// Negative eigenvalues down to `-negativity_floor` are clipped; below
    /// that the solve fails.
    pub negativity_floor: f64,
    pub residual_tol: f64,
    /// Absolute target for the bordered-system residual.
    pub gmres_tol: f64,
    pub max_iterations: usize,
    pub restart: usize,
    pub seed: u64,
    /// Force a path instead of following the storage.
    pub method: Option<Method>,
    /// Initial guess for the iterative path (column-stacked).
    pub initial: Option<Vec<C64>>,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            negativity_floor: 1e-9,
            residual_tol: 1e-9,
            gmres_tol: 1e-12,
            max_iterations: 3000,
            restart: 60,
            seed: 0x5eed,
            method: None,
            initial: None,
        }
    }
}

pub fn steady_state(superop: &SuperOperator) -> Result<SteadyStateReport> {
    steady_state_with(superop, &SteadyOptions::default())
}

pub fn steady_state_with(
    superop: &SuperOperator,
    opts: &SteadyOptions,
) -> Result<SteadyStateReport> {
    let mut method = opts.method.unwrap_or(match superop.storage() {
        Storage::Dense if superop.vec_dim() <= SVD_MAX_DIM => Method::DenseSvd,
        Storage::Dense => Method::DenseLu,
        _ => Method::SparseGmres,
    });
    if method == Method::DenseLu {
        // A singular bordered system means a degenerate null space.
        let border = reference_vector(superop)?;
        if dense_bordered_solve(&superop.to_dense_matrix(), &border, superop.dim()).is_none() {
            method = Method::DenseSvd;
        }
    }
    let (x, nullity, iterations) = match method {
        Method::DenseSvd => {
            let (nullity, x) = dense_null_state(&superop.to_dense_matrix(), superop.dim())?;
            (x, nullity, 0)
        }
        Method::DenseLu => {
            let border = reference_vector(superop)?;
            let x = dense_bordered_solve(&superop.to_dense_matrix(), &border, superop.dim())
                .ok_or_else(|| Error::Solver("bordered system is singular".into()))?;
            (x, 1, 0)
        }
        Method::SparseGmres => {
            let (x, it) = bordered_solve(superop, opts, opts.initial.as_deref())?;
            (x, 1, it)
        }
    };
    let (rho_ss, min_eigenvalue) = finalize_state(&x, superop.dim(), opts.negativity_floor)?;
    let residual = vec_norm(&superop.apply(&rho_ss.to_vec()));
    if !(residual <= opts.residual_tol) {
        return Err(Error::Solver(format!(
            "residual {residual:.3e} above {:.1e} ({method})",
            opts.residual_tol
        )));
    }
    Ok(SteadyStateReport {
        rho_ss,
        nullity,
        residual,
        method,
        truncation_used: Vec::new(),
        min_eigenvalue,
        iterations,
    })
}

/// `(unique, nullity)`. Dense generators report the exact nullity; sparse
/// ones run two solves from independent random starts and call the state
/// unique when they agree within `1e-7` (nullity is then the lower bound 1,
/// otherwise at least 2).
pub fn uniqueness_certificate(superop: &SuperOperator) -> Result<(bool, usize)> {
    uniqueness_certificate_with(superop, 0xc0ffee)
}

pub fn uniqueness_certificate_with(superop: &SuperOperator, seed: u64) -> Result<(bool, usize)> {
    let d = superop.dim();
    if superop.storage() == Storage::Dense {
        if superop.vec_dim() <= SVD_MAX_DIM {
            let (nullity, _) = dense_null_state(&superop.to_dense_matrix(), d)?;
            return Ok((nullity == 1, nullity));
        }
        // A well-conditioned bordered matrix certifies a one-dimensional kernel.
        let border = reference_vector(superop)?;
        let ok = dense_bordered_solve(&superop.to_dense_matrix(), &border, d).is_some();
        return Ok((ok, if ok { 1 } else { 2 }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::new();
    for _ in 0..2 {
        let start = random_state(d, &mut rng).to_vec();
        let opts = SteadyOptions {
            initial: Some(start),
            ..SteadyOptions::default()
        };
        match bordered_solve(superop, &opts, opts.initial.as_deref()) {
            Ok((x, _)) => states.push(Operator::from_vec(&x)?),
            Err(Error::Solver(_)) => return Ok((false, 2)),
            Err(e) => return Err(e),
        }
    }
    let a = normalize_trace(&states[0]);
    let b = normalize_trace(&states[1]);
    let unique = a.hs_distance(&b) < 1e-7;
    Ok((unique, if unique { 1 } else { 2 }))
}

fn normalize_trace(rho: &Operator) -> Operator {
    rho.scale(ONE / rho.trace())
}

/// Random full-rank density matrix.
pub fn random_state(d: usize, rng: &mut impl Rng) -> Operator {
    let g = Operator::from_fn(d, |_, _| {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let rho = g.matmul(&g.dagger());
    let tr = rho.trace().re;
    rho.scale_re(1.0 / tr).hermitian_part()
}

/// Nullity and a trace-normalized stationary vector. For a degenerate null
/// space the vectorized identity is projected onto it.
fn dense_null_state(m: &Mat<C64>, d: usize) -> Result<(usize, Vec<C64>)> {
    let svd = m
        .svd()
        .map_err(|e| Error::Linalg(format!("svd failed: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let n = s.len();
    let smax = s.first().copied().unwrap_or(0.0);
    let nullity = s
        .iter()
        .filter(|&&x| x < NULL_TOL * smax.max(f64::MIN_POSITIVE))
        .count();
    if nullity == 0 {
        return Err(Error::Solver(format!(
            "no stationary state: smallest singular value {:.3e} (largest {smax:.3e})",
            s[n - 1]
        )));
    }
    let v = svd.V();
    let id: Vec<C64> = (0..n)
        .map(|k| if k % (d + 1) == 0 { ONE } else { ZERO })
        .collect();
    let mut x = vec![ZERO; n];
    if nullity == 1 {
        for (r, xi) in x.iter_mut().enumerate() {
            *xi = v[(r, n - 1)];
        }
    } else {
        for c in n - nullity..n {
            let proj: C64 = (0..n).map(|r| v[(r, c)].conj() * id[r]).sum();
            for (r, xi) in x.iter_mut().enumerate() {
                *xi += proj * v[(r, c)];
            }
        }
    }
    Ok((nullity, x))
}

/// Border vector for the bordered system: the uncoupled reference state for
/// embedded generators, the maximally mixed state otherwise.
fn reference_vector(superop: &SuperOperator) -> Result<Vec<C64>> {
    let d = superop.dim();
    Ok(match superop.embedding() {
        Some(st) => Preconditioner::new(st)?.x0,
        None => (0..d * d)
            .map(|k| {
                if k % (d + 1) == 0 {
                    C64::new(1.0 / d as f64, 0.0)
                } else {
                    ZERO
                }
            })
            .collect(),
    })
}

/// Solves `(L + b <I|) x = b` by LU. Returns `None` when the bordered matrix
/// is numerically singular, which happens exactly when the null space of `L`
/// is degenerate. Singularity is detected by one step of inverse iteration
/// on a fixed pseudo-random vector.
fn dense_bordered_solve(m: &Mat<C64>, border: &[C64], d: usize) -> Option<Vec<C64>> {
    use faer::linalg::solvers::Solve;
    let n = m.nrows();
    let mut a = m.clone();
    for c in (0..n).step_by(d + 1) {
        for (r, b) in border.iter().enumerate() {
            a[(r, c)] += b;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let rhs = Mat::from_fn(n, 2, |r, c| {
        if c == 0 {
            border[r]
        } else {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        }
    });
    let sol = a.partial_piv_lu().solve(&rhs);
    let probe = (0..n).map(|r| sol[(r, 1)].norm_sqr()).sum::<f64>().sqrt();
    let probe_rhs = (0..n).map(|r| rhs[(r, 1)].norm_sqr()).sum::<f64>().sqrt();
    let growth = probe / (probe_rhs * a.norm_max().max(f64::MIN_POSITIVE).recip());
    if !(growth.is_finite() && growth < 1e10) {
        return None;
    }
    Some((0..n).map(|r| sol[(r, 0)]).collect())
}

/// Hermitian, unit-trace state from a stationary vector, with tiny negative
/// eigenvalues clipped.
fn finalize_state(x: &[C64], d: usize, floor: f64) -> Result<(Operator, f64)> {
    let raw = Operator::from_vec(x)?;
    let tr = raw.trace();
    if tr.norm() < 1e-300 {
        return Err(Error::Solver("stationary vector is traceless".into()));
    }
    let rho = raw.scale(ONE / tr).hermitian_part();
    let (vals, vecs) = rho.eigh()?;
    let min = vals[0];
    if min < -floor {
        return Err(Error::Solver(format!(
            "steady state has eigenvalue {min:.3e} below -{floor:.0e}"
        )));
    }
    if min >= 0.0 {
        return Ok((rho.scale_re(1.0 / rho.trace().re), min));
    }
    let clipped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let out = Operator::from_fn(d, |i, j| {
        (0..d)
            .map(|k| vecs[(i, k)] * clipped[k] * vecs[(j, k)].conj())
            .sum::<C64>()
            / total
    });
    Ok((out.hermitian_part(), min))
}

fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn trace_of_vec(x: &[C64], d: usize) -> C64 {
    (0..d).map(|i| x[i + d * i]).sum()
}

/// Right preconditioner for embedded generators.
struct Preconditioner<'a> {
    st: &'a EmbeddingStructure,
    d: usize,
    /// Vectorized reference state `x0 = x0s ⊗ |vac><vac|` (trace one).
    x0: Vec<C64>,
    order: Vec<usize>,
    /// Inverse blocks keyed by the index into `inverses`.
    block_of: Vec<usize>,
    inverses: Vec<Mat<C64>>,
}

impl<'a> Preconditioner<'a> {
    fn new(st: &'a EmbeddingStructure) -> Result<Self> {
        let (ds, da) = (st.spin_dim, st.aux_dim);
        let d = ds * da;
        let p = ds * ds;
        let mut a = st.spin_generator.clone();
        let x0s = spin_reference_state(&mut a, ds)?;
        let id_s: Vec<C64> = (0..p)
            .map(|k| if k % (ds + 1) == 0 { ONE } else { ZERO })
            .collect();

        let q_count = da * da;
        let diag = st.aux_generator.diag();
        let mut key_to_block: HashMap<(i64, i64), usize> = HashMap::new();
        let mut inverses = Vec::new();
        let mut block_of = vec![0; q_count];
        for q in 0..q_count {
            let b = diag[q];
            let bordered = q == st.vacuum;
            let key = if bordered {
                (i64::MAX, i64::MAX)
            } else {
                ((b.re * 1e10).round() as i64, (b.im * 1e10).round() as i64)
            };
            let idx = match key_to_block.get(&key) {
                Some(&k) => k,
                None => {
                    let mut m = a.clone();
                    for k in 0..p {
                        m[(k, k)] += b;
                    }
                    if bordered {
                        for r in 0..p {
                            for c in 0..p {
                                m[(r, c)] += x0s[r] * id_s[c];
                            }
                        }
                    }
                    let inv = invert(&m)?;
                    inverses.push(inv);
                    key_to_block.insert(key, inverses.len() - 1);
                    inverses.len() - 1
                }
            };
            block_of[q] = idx;
        }
        let mut order: Vec<usize> = (0..q_count).collect();
        order.sort_by(|&x, &y| st.aux_excitations[y].cmp(&st.aux_excitations[x]));

        // Off-diagonal couplings must point from higher to lower excitation.
        for q in 0..q_count {
            for (l, _) in st.aux_generator.row(q) {
                if l != q && st.aux_excitations[l] <= st.aux_excitations[q] {
                    return Err(Error::Solver(
                        "auxiliary generator is not excitation-triangular".into(),
                    ));
                }
            }
        }

        let mut x0 = vec![ZERO; d * d];
        let (sv, av) = (st.vacuum % da, st.vacuum / da);
        for s in 0..ds {
            for t in 0..ds {
                let i = s * da + sv;
                let j = t * da + av;
                x0[i + d * j] = x0s[s + ds * t];
            }
        }
        Ok(Self {
            st,
            d,
            x0,
            order,
            block_of,
            inverses,
        })
    }

    fn full_index(&self, p: usize, q: usize) -> usize {
        let (ds, da) = (self.st.spin_dim, self.st.aux_dim);
        let (s, t) = (p % ds, p / ds);
        let (a, b) = (q % da, q / da);
        (s * da + a) + self.d * (t * da + b)
    }

    /// Solves `(L0 + x0 <I|) z = y`.
    fn apply(&self, y: &[C64]) -> Vec<C64> {
        let ds = self.st.spin_dim;
        let p = ds * ds;
        let tau = trace_of_vec(y, self.d);
        let q_count = self.st.aux_dim * self.st.aux_dim;
        let mut z = vec![ZERO; p * q_count];
        let mut rhs = vec![ZERO; p];
        for &q in &self.order {
            for (k, r) in rhs.iter_mut().enumerate() {
                let idx = self.full_index(k, q);
                *r = y[idx] - tau * self.x0[idx];
            }
            for (l, v) in self.st.aux_generator.row(q) {
                if l == q {
                    continue;
                }
                let zl = &z[l * p..(l + 1) * p];
                for (r, zz) in rhs.iter_mut().zip(zl) {
                    *r -= v * zz;
                }
            }
            let inv = &self.inverses[self.block_of[q]];
            let zq = &mut z[q * p..(q + 1) * p];
            zq.iter_mut().for_each(|v| *v = ZERO);
            for (c, &rc) in rhs.iter().enumerate() {
                if rc == ZERO {
                    continue;
                }
                for (zz, m) in zq.iter_mut().zip(inv.col_as_slice(c)) {
                    *zz += m * rc;
                }
            }
        }
        let mut out = vec![ZERO; self.d * self.d];
        for q in 0..q_count {
            for k in 0..p {
                out[self.full_index(k, q)] = z[q * p + k];
            }
        }
        let shift = tau - trace_of_vec(&out, self.d);
        for (o, x) in out.iter_mut().zip(&self.x0) {
            *o += shift * x;
        }
        out
    }
}

/// Stationary state of the dense spin generator `a`, regularizing `a` in
/// place when that state is not unique.
fn spin_reference_state(a: &mut Mat<C64>, ds: usize) -> Result<Vec<C64>> {
    let p = ds * ds;
    let (mut nullity, mut x) = dense_null_state(a, ds)?;
    if nullity > 1 {
        // Weak depolarization, used for preconditioning only.
        let eps = 1e-2 * a.norm_max().max(1.0);
        for c in 0..p {
            a[(c, c)] -= C64::new(eps, 0.0);
            if c % (ds + 1) == 0 {
                for r in (0..p).step_by(ds + 1) {
                    a[(r, c)] += C64::new(eps / ds as f64, 0.0);
                }
            }
        }
        let (n2, x2) = dense_null_state(a, ds)?;
        nullity = n2;
        x = x2;
    }
    debug_assert_eq!(nullity, 1);
    let tr = trace_of_vec(&x, ds);
    Ok(x.iter().map(|v| v / tr).collect())
}

fn invert(m: &Mat<C64>) -> Result<Mat<C64>> {
    use faer::linalg::solvers::DenseSolveCore;
    let inv = m.partial_piv_lu().inverse();
    if inv.norm_max().is_finite() {
        Ok(inv)
    } else {
        Err(Error::Linalg("singular preconditioner block".into()))
    }
}

/// GMRES on `(L + x0 <I|) x = x0`; returns the solution and the iteration
/// count.
fn bordered_solve(
    superop: &SuperOperator,
    opts: &SteadyOptions,
    init: Option<&[C64]>,
) -> Result<(Vec<C64>, usize)> {
    let d = superop.dim();
    let n = d * d;
    let pre = match superop.embedding() {
        Some(st) => Some(Preconditioner::new(st)?),
        None => None,
    };
    let x0 = match &pre {
        Some(p) => p.x0.clone(),
        None => (0..n)
            .map(|k| {
                if k % (d + 1) == 0 {
                    C64::new(1.0 / d as f64, 0.0)
                } else {
                    ZERO
                }
            })
            .collect(),
    };
    let apply_a = |x: &[C64], y: &mut [C64]| {
        superop.apply_into(x, y);
        let tr = trace_of_vec(x, d);
        for (yy, xx) in y.iter_mut().zip(&x0) {
            *yy += tr * xx;
        }
    };
    let apply_m = |v: &[C64]| -> Vec<C64> {
        match &pre {
            Some(p) => p.apply(v),
            None => v.to_vec(),
        }
    };
    let mut x = match init {
        Some(v) if v.len() == n => v.to_vec(),
        Some(v) => {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            })
        }
        None => x0.clone(),
    };
    // Krylov basis memory is kept under ~1.5 GB.
    let max_restart = ((1.5e9 / (16.0 * n as f64)) as usize).max(8);
    let restart = opts.restart.min(max_restart);
    let (iters, res) = gmres(
        &apply_a,
        &apply_m,
        &x0,
        &mut x,
        restart,
        opts.max_iterations,
        opts.gmres_tol,
    )?;
    if !(res <= opts.gmres_tol) {
        return Err(Error::Solver(format!(
            "gmres stalled at residual {res:.3e} after {iters} iterations"
        )));
    }
    Ok((x, iters))
}

/// Restarted right-preconditioned GMRES with Givens rotations. Stops when
/// the true residual `||b - A x||` is at most `tol`.
fn gmres(
    apply_a: &dyn Fn(&[C64], &mut [C64]),
    apply_m: &dyn Fn(&[C64]) -> Vec<C64>,
    b: &[C64],
    x: &mut [C64],
    restart: usize,
    max_iter: usize,
    tol: f64,
) -> Result<(usize, f64)> {
    let n = b.len();
    let mut total = 0;
    let mut r = vec![ZERO; n];
    let mut w = vec![ZERO; n];
    let true_residual = |x: &[C64], r: &mut Vec<C64>| -> f64 {
        apply_a(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        vec_norm(r)
    };
    let mut beta = true_residual(x, &mut r);
    let mut stagnant = 0;
    while beta > tol && total < max_iter {
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![ZERO; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![ZERO; restart];
        let mut g = vec![ZERO; restart + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..restart {
            let z = apply_m(&basis[k]);
            apply_a(&z, &mut w);
            // Modified Gram-Schmidt with one reorthogonalization pass.
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    h[i][k] += c;
                    for (wi, vi) in w.iter_mut().zip(v) {
                        *wi -= c * vi;
                    }
                }
            }
            let hn = vec_norm(&w);
            h[k + 1][k] = C64::new(hn, 0.0);
            for i in 0..k {
                let (a, bb) = (h[i][k], h[i + 1][k]);
                h[i][k] = cs[i] * a + sn[i] * bb;
                h[i + 1][k] = -sn[i].conj() * a + cs[i] * bb;
            }
            let (a, bb) = (h[k][k], h[k + 1][k]);
            let rr = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if rr == 0.0 {
                k_used = k;
                break;
            }
            if a.norm() == 0.0 {
                cs[k] = 0.0;
                sn[k] = bb.conj() / bb.norm();
            } else {
                cs[k] = a.norm() / rr;
                sn[k] = (a / a.norm()) * bb.conj() / rr;
            }
            h[k][k] = cs[k] * a + sn[k] * bb;
            h[k + 1][k] = ZERO;
            let gk = g[k];
            g[k] = cs[k] * gk;
            g[k + 1] = -sn[k].conj() * gk;
            total += 1;
            k_used = k + 1;
            if g[k + 1].norm() <= 0.5 * tol || hn == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        if k_used == 0 {
            break;
        }
        // Back substitution.
        let mut y = vec![ZERO; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        let mut update = vec![ZERO; n];
        for (yi, v) in y.iter().zip(&basis) {
            for (u, vi) in update.iter_mut().zip(v) {
                *u += yi * vi;
            }
        }
        let dx = apply_m(&update);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        let new_beta = true_residual(x, &mut r);
        if new_beta > 0.5 * beta {
            stagnant += 1;
            if stagnant >= 5 {
                beta = new_beta;
                break;
            }
        } else {
            stagnant = 0;
        }
        beta = new_beta;
    }
    Ok((total, beta))
}

/// Integrates `d rho / dt = L[rho]` with an adaptive Dormand–Prince 5(4)
/// scheme.
pub fn evolve_oracle(
    superop: &SuperOperator,
    rho0: &Operator,
    t_final: f64,
    dt_max: f64,
) -> Result<Operator> {
    evolve_with_tolerances(superop, rho0, t_final, dt_max, 1e-10, 1e-13)
}

pub fn evolve_with_tolerances(
    superop: &SuperOperator,
    rho0: &Operator,
    t_final: f64,
    dt_max: f64,
    rtol: f64,
    atol: f64,
) -> Result<Operator> {
    if rho0.dim() != superop.dim() {
        return Err(Error::DimensionMismatch {
            expected: superop.dim(),
            found: rho0.dim(),
        });
    }
    if !(t_final > 0.0) || !(dt_max > 0.0) {
        return Err(Error::InvalidInput(
            "t_final and dt_max must be positive".into(),
        ));
    }
    const A: [&[f64]; 6] = [
        &[0.2],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
        ],
        &[
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
        ],
        &[
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let d = rho0.dim();
    let n = d * d;
    let mut y = rho0.to_vec();
    let tr0 = trace_of_vec(&y, d);
    let mut k: Vec<Vec<C64>> = vec![vec![ZERO; n]; 7];
    superop.apply_into(&y, &mut k[0]);
    let mut t = 0.0;
    let mut h = dt_max
        .min(t_final)
        .min(0.1 / superop.norm_bound().max(1e-12));
    let mut stage = vec![ZERO; n];
    let mut y_new = vec![ZERO; n];
    while t < t_final {
        if t + h > t_final {
            h = t_final - t;
        }
        for s in 1..7 {
            stage.copy_from_slice(&y);
            for (j, &a) in A[s - 1].iter().enumerate() {
                if a != 0.0 {
                    let w = h * a;
                    for (st, kj) in stage.iter_mut().zip(&k[j]) {
                        *st += w * kj;
                    }
                }
            }
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
            superop.apply_into(&stage, &mut k[s]);
        }
        // Error estimate from the embedded fourth-order pair.
        let mut err = 0.0_f64;
        for i in 0..n {
            let mut e = ZERO;
            for s in 0..7 {
                let c = B5[s] - B4[s];
                if c != 0.0 {
                    e += h * c * k[s][i];
                }
            }
            let scale = atol + rtol * y[i].norm().max(y_new[i].norm());
            err = err.max(e.norm() / scale);
        }
        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * factor).min(dt_max);
        if h < 1e-14 * t_final.max(1.0) {
            return Err(Error::StepUnderflow { t, dt: h });
        }
    }
    let drift = (trace_of_vec(&y, d) - tr0).norm();
    if drift > 1e-9 {
        return Err(Error::Solver(format!(
            "trace drift {drift:.3e} during time evolution"
        )));
    }
    Ok(Operator::from_vec(&y)?.hermitian_part())
}

/// How boson truncations are chosen for an embedded solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationPolicy {
    /// Use the truncations in the model as given.
    Fixed,
    /// Start at `start` levels and grow until one more level changes the
    /// reduced state by less than `tol`.
    Adaptive { start: usize, tol: f64 },
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy::Adaptive {
            start: 4,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddedSteadyState {
    /// Composite steady state and solver diagnostics.
    pub report: SteadyStateReport,
    /// Reduced spin state.
    pub rho_spin: Operator,
    /// HS change of the reduced state when one more boson level is added
    /// (adaptive policy only).
    pub truncation_change: Option<f64>,
    /// False when the dimension cap stopped the adaptive search.
    pub converged: bool,
    /// Model at the accepted truncation.
    pub model: EmbeddingModel,
}

/// Steady state of an embedded model with the requested truncation policy.
pub fn solve_embedding(
    model: &EmbeddingModel,
    policy: TruncationPolicy,
    opts: &SteadyOptions,
) -> Result<EmbeddedSteadyState> {
    let solve = |m: &EmbeddingModel| -> Result<(SteadyStateReport, Operator)> {
        let l = build_embedding_with(m, None)?;
        let mut rep = steady_state_with(&l, opts)?;
        rep.truncation_used = m.truncation();
        let rs = partial_trace(&rep.rho_ss, m.sys().dim(), m.aux_dim()?)?;
        Ok((rep, rs))
    };
    let (start, tol) = match policy {
        TruncationPolicy::Adaptive { start, tol } if model.has_bosons() => (start, tol),
        _ => {
            let (report, rho_spin) = solve(model)?;
            return Ok(EmbeddedSteadyState {
                report,
                rho_spin,
                truncation_change: None,
                converged: true,
                model: model.clone(),
            });
        }
    };
    let mut current = model.clone().with_boson_truncation(start)?;
    let (mut report, mut rho_spin) = solve(&current)?;
    loop {
        let next = current
            .clone()
            .with_boson_truncation(current_truncation(&current) + 1)?;
        if next.total_dim()? > next.dim_cap() {
            return Ok(EmbeddedSteadyState {
                report,
                rho_spin,
                truncation_change: None,
                converged: false,
                model: current,
            });
        }
        let (rep2, rs2) = solve(&next)?;
        let change = rs2.hs_distance(&rho_spin);
        if change < tol {
            return Ok(EmbeddedSteadyState {
                report,
                rho_spin,
                truncation_change: Some(change),
                converged: true,
                model: current,
            });
        }
        current = next;
        report = rep2;
        rho_spin = rs2;
    }
}

fn current_truncation(model: &EmbeddingModel) -> usize {
    model
        .aux()
        .iter()
        .filter_map(|a| match a.kind {
            crate::liouville::AuxKind::Boson { truncation } => Some(truncation),
            _ => None,
        })
        .max()
        .unwrap_or(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouville::{build_embedding, AuxKind, AuxSpec};
    use crate::spin::{collective_spin_ops, SpinSystem};
    use crate::superop::lindblad_superop;

    fn sigma_minus() -> Operator {
        Operator::from_fn(2, |i, j| if i == 1 && j == 0 { ONE } else { ZERO })
    }

    #[test]
    fn two_level_decay_goes_to_ground() {
        // Basis (excited, ground); sigma_- maps index 0 to 1.
        let l = lindblad_superop(&Operator::zeros(2), &[(sigma_minus(), 0.7)]).unwrap();
        let rep = steady_state(&l).unwrap();
        assert_eq!(rep.nullity, 1);
        assert!(rep.rho_ss.hs_distance(&Operator::basis_projector(2, 1)) < 1e-12);
        assert_eq!(rep.method, Method::DenseSvd);
    }

    #[test]
    fn dephasing_has_full_nullity() {
        for n in 2..=5 {
            let sys = SpinSystem::new(n).unwrap();
            let s = collective_spin_ops(&sys);
            let l = lindblad_superop(&Operator::zeros(sys.dim()), &[(s.sz.clone(), 1.0)]).unwrap();
            let rep = steady_state(&l).unwrap();
            assert_eq!(rep.nullity, n + 1);
            // Most mixed representative.
            assert!(rep.rho_ss.hs_distance(&sys.mms()) < 1e-12);
            assert_eq!(uniqueness_certificate(&l).unwrap(), (false, n + 1));
        }
    }

    #[test]
    fn lu_path_agrees_with_svd() {
        let sys = SpinSystem::new(35).unwrap();
        let s = collective_spin_ops(&sys);
        let l = lindblad_superop(&s.sx, &[(s.s_minus.clone(), 0.1)]).unwrap();
        assert!(l.vec_dim() > SVD_MAX_DIM);
        let lu = steady_state(&l).unwrap();
        assert_eq!(lu.method, Method::DenseLu);
        let svd = steady_state_with(
            &l,
            &SteadyOptions {
                method: Some(Method::DenseSvd),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(svd.nullity, 1);
        assert!(lu.rho_ss.hs_distance(&svd.rho_ss) < 1e-9);
        assert_eq!(uniqueness_certificate(&l).unwrap(), (true, 1));
        let deph = lindblad_superop(&Operator::zeros(sys.dim()), &[(s.sz.clone(), 1.0)]).unwrap();
        assert_eq!(uniqueness_certificate(&deph).unwrap(), (false, 2));
    }

    #[test]
    fn unitary_dynamics_is_not_unique() {
        let sys = SpinSystem::new(3).unwrap();
        let s = collective_spin_ops(&sys);
        let l = lindblad_superop(&s.sz.matmul(&s.sz), &[]).unwrap();
        assert!(!uniqueness_certificate(&l).unwrap().0);
    }

    #[test]
    fn decay_oracle_matches_closed_form() {
        let kappa = 0.8;
        let l = lindblad_superop(&Operator::zeros(2), &[(sigma_minus(), kappa)]).unwrap();
        let rho0 = Operator::basis_projector(2, 0);
        for t in [0.1, 0.5, 2.0] {
            let rho = evolve_oracle(&l, &rho0, t, 0.05).unwrap();
            let want = (-2.0 * kappa * t).exp();
            assert!((rho.get(0, 0).re - want).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn zero_generator_keeps_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho0 = random_state(4, &mut rng);
        let l = SuperOperator::zero(4);
        let rho = evolve_oracle(&l, &rho0, 3.0, 0.5).unwrap();
        assert!(rho.hs_distance(&rho0) < 1e-15);
    }

    #[test]
    fn oracle_validates_arguments() {
        let l = SuperOperator::zero(2);
        assert!(evolve_oracle(&l, &Operator::identity(3), 1.0, 0.1).is_err());
        assert!(evolve_oracle(&l, &Operator::identity(2), -1.0, 0.1).is_err());
    }

    fn small_embedding(t: usize) -> EmbeddingModel {
        let sys = SpinSystem::new(3).unwrap();
        let s = collective_spin_ops(&sys);
        let b = AuxSpec::new(AuxKind::Boson { truncation: t }, 1.0, 0.6, 0.3).unwrap();
        let h = s.sz.matmul(&s.sz).scale_re(2.0 / 3.0);
        EmbeddingModel::new(sys, h, vec![s.sx.clone(), s.sy.clone()], vec![b, b]).unwrap()
    }

    #[test]
    fn gmres_path_matches_dense_path() {
        let m = small_embedding(3);
        let l = build_embedding_with(&m, Some(Storage::Sparse)).unwrap();
        let sparse = steady_state(&l).unwrap();
        assert_eq!(sparse.method, Method::SparseGmres);
        let dense = steady_state_with(
            &l,
            &SteadyOptions {
                method: Some(Method::DenseSvd),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(dense.nullity, 1);
        assert!(sparse.rho_ss.hs_distance(&dense.rho_ss) < 1e-10);
        assert!(sparse.residual < 1e-10);
        let mf = steady_state(&l.restored(Storage::MatrixFree)).unwrap();
        assert!(mf.rho_ss.hs_distance(&dense.rho_ss) < 1e-10);
        assert_eq!(uniqueness_certificate(&l).unwrap(), (true, 1));
    }

    #[test]
    fn decoupled_embedding_factorizes() {
        let sys = SpinSystem::new(2).unwrap();
        let s = collective_spin_ops(&sys);
        let b = AuxSpec::new(AuxKind::Boson { truncation: 3 }, 1.0, 0.5, 0.0).unwrap();
        let m = EmbeddingModel::new(sys, s.sz.clone(), vec![s.sx.clone()], vec![b]).unwrap();
        let l = build_embedding(&m).unwrap();
        let rep = steady_state(&l).unwrap();
        // Aux in vacuum: every populated composite index has aux index 0.
        let rs = partial_trace(&rep.rho_ss, 3, 3).unwrap();
        let vac = Operator::basis_projector(3, 0);
        assert!(rep.rho_ss.hs_distance(&rs.kron(&vac)) < 1e-12);
    }

    #[test]
    fn adaptive_truncation_converges() {
        let m = small_embedding(2);
        let out = solve_embedding(
            &m,
            TruncationPolicy::Adaptive {
                start: 3,
                tol: 1e-6,
            },
            &SteadyOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert!(out.truncation_change.unwrap() < 1e-6);
        assert!((out.rho_spin.trace().re - 1.0).abs() < 1e-12);
    }
}
