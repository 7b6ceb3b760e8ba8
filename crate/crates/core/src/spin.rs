//! Collective spin algebra on the symmetric (Dicke) subspace.
//!
//! Basis index `k` carries `m = j - k`, so index 0 is the stretched state
//! `|j, j>`.

use num_bigint::BigUint;
use num_complex::Complex64 as C64;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::operator::{Operator, I, ONE, ZERO};

/// Largest supported number of spins (`j <= 20`).
pub const MAX_SPINS: usize = 40;

/// Largest number of qubits accepted by [`dicke_isometry`].
pub const MAX_ISOMETRY_SPINS: usize = 12;

/// `N` spins-1/2 restricted to total spin `j = N/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinSystem {
    n_spins: usize,
}

impl SpinSystem {
    pub fn new(n_spins: usize) -> Result<Self> {
        if n_spins == 0 || n_spins > MAX_SPINS {
            return Err(Error::InvalidInput(format!(
                "n_spins must lie in 1..={MAX_SPINS}, got {n_spins}"
            )));
        }
        Ok(Self { n_spins })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    /// Twice the spin quantum number.
    pub fn two_j(&self) -> usize {
        self.n_spins
    }

    pub fn j(&self) -> f64 {
        self.n_spins as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.n_spins + 1
    }

    /// Magnetic quantum number of basis index `k`.
    pub fn m(&self, k: usize) -> f64 {
        self.j() - k as f64
    }

    /// Basis index of magnetic number `m` (given as `2m`).
    pub fn index_of_two_m(&self, two_m: i64) -> Option<usize> {
        let tj = self.two_j() as i64;
        if two_m.abs() > tj || (tj - two_m) % 2 != 0 {
            return None;
        }
        Some(((tj - two_m) / 2) as usize)
    }

    pub fn identity(&self) -> Operator {
        Operator::identity(self.dim())
    }

    /// Maximally mixed state.
    pub fn mms(&self) -> Operator {
        let d = self.dim();
        Operator::identity(d).scale_re(1.0 / d as f64)
    }

    /// Pure Dicke state `|j, m><j, m|` by basis index.
    pub fn dicke_projector(&self, k: usize) -> Operator {
        Operator::basis_projector(self.dim(), k)
    }
}

/// Collective spin operators in the Dicke basis.
#[derive(Debug, Clone)]
pub struct SpinOps {
    pub sx: Operator,
    pub sy: Operator,
    pub sz: Operator,
    pub s_plus: Operator,
    pub s_minus: Operator,
}

impl SpinOps {
    /// `n . S` for a real direction (not normalized).
    pub fn along(&self, n: [f64; 3]) -> Operator {
        self.along_complex([n[0].into(), n[1].into(), n[2].into()])
    }

    /// `c . S` for complex coefficients.
    pub fn along_complex(&self, c: [C64; 3]) -> Operator {
        let d = self.sx.dim();
        Operator::from_fn(d, |i, j| {
            c[0] * self.sx.get(i, j) + c[1] * self.sy.get(i, j) + c[2] * self.sz.get(i, j)
        })
    }

    pub fn components(&self) -> [&Operator; 3] {
        [&self.sx, &self.sy, &self.sz]
    }
}

/// Builds `Sx, Sy, Sz, S+, S-` in the spin-`j` representation.
pub fn collective_spin_ops(sys: &SpinSystem) -> SpinOps {
    let d = sys.dim();
    let j = sys.j();
    let mut plus = vec![ZERO; d * d];
    for k in 1..d {
        // S+ |j, m_k> = c |j, m_k + 1> and m_k + 1 sits at index k - 1.
        let m = sys.m(k);
        plus[(k - 1) + d * k] = C64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let s_plus = Operator::from_fn(d, |r, c| plus[r + d * c]);
    let s_minus = s_plus.dagger();
    let half = C64::new(0.5, 0.0);
    let sx = Operator::from_fn(d, |r, c| half * (s_plus.get(r, c) + s_minus.get(r, c)));
    let sy = Operator::from_fn(d, |r, c| (s_plus.get(r, c) - s_minus.get(r, c)) / (2.0 * I));
    let sz = Operator::real_diagonal(&(0..d).map(|k| sys.m(k)).collect::<Vec<_>>());
    SpinOps {
        sx,
        sy,
        sz,
        s_plus,
        s_minus,
    }
}

fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

/// `num / den` rounded to the nearest double.
fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift = den.bits() as i64 - num.bits() as i64 + 64;
    let q = if shift >= 0 {
        (num << shift as usize) / den
    } else {
        num / (den << (-shift) as usize)
    };
    q.to_f64().unwrap_or(f64::INFINITY) * 2f64.powi(-shift as i32)
}

/// Clebsch–Gordan coefficient `<j1 m1; j2 m2 | J M>` with every argument
/// passed as twice its value (so half-integers are exact).
///
/// Condon–Shortley phase convention. Returns exactly 0 when a selection
/// rule is violated.
pub fn clebsch_gordan_2x(tj1: i64, tm1: i64, tj2: i64, tm2: i64, tjj: i64, tmm: i64) -> f64 {
    let valid_pair = |tj: i64, tm: i64| tj >= 0 && tm.abs() <= tj && (tj - tm) % 2 == 0;
    if !valid_pair(tj1, tm1) || !valid_pair(tj2, tm2) || !valid_pair(tjj, tmm) {
        return 0.0;
    }
    if tm1 + tm2 != tmm {
        return 0.0;
    }
    if tjj < (tj1 - tj2).abs() || tjj > tj1 + tj2 || (tj1 + tj2 + tjj) % 2 != 0 {
        return 0.0;
    }
    let h = |x: i64| -> u64 {
        debug_assert!(x >= 0 && x % 2 == 0);
        (x / 2) as u64
    };
    let f = |x: i64| factorial(h(x));

    let p_num = BigUint::from((tjj + 1) as u64)
        * f(tjj + tj1 - tj2)
        * f(tjj - tj1 + tj2)
        * f(tj1 + tj2 - tjj)
        * f(tjj + tmm)
        * f(tjj - tmm)
        * f(tj1 - tm1)
        * f(tj1 + tm1)
        * f(tj2 - tm2)
        * f(tj2 + tm2);
    let p_den = f(tj1 + tj2 + tjj + 2);

    // Racah sum over k with all factorial arguments nonnegative.
    let a = tj1 + tj2 - tjj;
    let b = tj1 - tm1;
    let c = tj2 + tm2;
    let d = tjj - tj2 + tm1;
    let e = tjj - tj1 - tm2;
    let k_min = 0.max(-d).max(-e);
    let k_max = a.min(b).min(c);
    let mut terms: Vec<(bool, BigUint)> = Vec::new();
    // Every bound is an even doubled integer, so k = kk / 2 is integral.
    for kk in (k_min..=k_max).step_by(2) {
        let den = f(kk) * f(a - kk) * f(b - kk) * f(c - kk) * f(d + kk) * f(e + kk);
        terms.push(((kk / 2) % 2 != 0, den));
    }
    if terms.is_empty() {
        return 0.0;
    }
    let lcm = terms
        .iter()
        .fold(BigUint::one(), |acc, (_, den)| acc.lcm(den));
    let (mut pos, mut neg) = (BigUint::zero(), BigUint::zero());
    for (negative, den) in &terms {
        let w = &lcm / den;
        if *negative {
            neg += w;
        } else {
            pos += w;
        }
    }
    let (s_num, sign) = if pos >= neg {
        (pos - neg, 1.0)
    } else {
        (neg - pos, -1.0)
    };
    if s_num.is_zero() {
        return 0.0;
    }
    let num = p_num * &s_num * &s_num;
    let den = p_den * &lcm * &lcm;
    sign * ratio_to_f64(&num, &den).sqrt()
}

/// Clebsch–Gordan coefficient with half-integer arguments given as `f64`.
pub fn clebsch_gordan(j1: f64, m1: f64, j2: f64, m2: f64, jj: f64, mm: f64) -> Result<f64> {
    let twice = |x: f64| -> Result<i64> {
        let t = 2.0 * x;
        if (t - t.round()).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("{x} is not a half-integer")));
        }
        Ok(t.round() as i64)
    };
    Ok(clebsch_gordan_2x(
        twice(j1)?,
        twice(m1)?,
        twice(j2)?,
        twice(m2)?,
        twice(jj)?,
        twice(mm)?,
    ))
}

/// Irreducible tensor operator `T_LM` of the spin-`j` representation,
/// orthonormal under the Hilbert–Schmidt product.
pub fn tensor_op(sys: &SpinSystem, l: usize, m: i64) -> Result<Operator> {
    if l > sys.two_j() || m.unsigned_abs() as usize > l {
        return Err(Error::OutOfRange(format!(
            "tensor rank (L={l}, M={m}) invalid for 2j={}",
            sys.two_j()
        )));
    }
    let d = sys.dim();
    let tj = sys.two_j() as i64;
    let norm = ((2 * l + 1) as f64 / d as f64).sqrt();
    let mut out = vec![ZERO; d * d];
    for col in 0..d {
        let tm = tj - 2 * col as i64;
        let tm_out = tm + 2 * m;
        if let Some(row) = sys.index_of_two_m(tm_out) {
            let cg = clebsch_gordan_2x(tj, tm, 2 * l as i64, 2 * m, tj, tm_out);
            out[row + d * col] = C64::new(norm * cg, 0.0);
        }
    }
    Ok(Operator::from_fn(d, |r, c| out[r + d * c]))
}

/// All tensor operators `T_LM` with `L = 0..=2j`, ordered by `(L, M)` with
/// `M` ascending.
#[derive(Debug, Clone)]
pub struct TensorBasis {
    sys: SpinSystem,
    ops: Vec<(usize, i64, Operator)>,
}

impl TensorBasis {
    pub fn new(sys: &SpinSystem) -> Self {
        let mut ops = Vec::with_capacity(sys.dim() * sys.dim());
        for l in 0..=sys.two_j() {
            for m in -(l as i64)..=(l as i64) {
                ops.push((l, m, tensor_op(sys, l, m).expect("rank within range")));
            }
        }
        Self { sys: *sys, ops }
    }

    pub fn sys(&self) -> &SpinSystem {
        &self.sys
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, i64, Operator)> {
        self.ops.iter()
    }

    pub fn get(&self, l: usize, m: i64) -> Option<&Operator> {
        if l > self.sys.two_j() || m.unsigned_abs() as usize > l {
            return None;
        }
        Some(&self.ops[l * l + (m + l as i64) as usize].2)
    }

    /// Multipole coefficients `rho_LM = Tr(rho T_LM^†)`, same ordering as
    /// [`TensorBasis::iter`].
    pub fn coefficients(&self, rho: &Operator) -> Vec<C64> {
        self.ops.iter().map(|(_, _, t)| t.hs_inner(rho)).collect()
    }

    /// Inverse of [`TensorBasis::coefficients`].
    pub fn reconstruct(&self, coeffs: &[C64]) -> Result<Operator> {
        if coeffs.len() != self.ops.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ops.len(),
                found: coeffs.len(),
            });
        }
        let d = self.sys.dim();
        let mut out = Operator::zeros(d);
        for (c, (_, _, t)) in coeffs.iter().zip(&self.ops) {
            out = &out + &t.scale(*c);
        }
        Ok(out)
    }
}

/// Isometry from the Dicke subspace into `N` qubits.
///
/// Qubit 1 is the most significant bit of the computational index and bit
/// value 0 is spin up.
#[derive(Debug, Clone)]
pub struct DickeIsometry {
    n_spins: usize,
    map: faer::Mat<C64>,
}

impl DickeIsometry {
    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    /// `2^N x (N+1)` matrix whose columns are Dicke states.
    pub fn map(&self) -> faer::MatRef<'_, C64> {
        self.map.as_ref()
    }

    /// `V rho V^†` on the qubit register.
    pub fn embed(&self, rho: &Operator) -> Result<Operator> {
        if rho.dim() != self.n_spins + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.n_spins + 1,
                found: rho.dim(),
            });
        }
        let v = &self.map;
        let tmp = v * rho.mat();
        Ok(Operator::wrap(&tmp * v.adjoint()))
    }

    /// `V^† A V` for a qubit-space operator.
    pub fn pull_back(&self, op: &Operator) -> Result<Operator> {
        let q = 1usize << self.n_spins;
        if op.dim() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                found: op.dim(),
            });
        }
        let v = &self.map;
        let tmp = op.mat() * v;
        Ok(Operator::wrap(v.adjoint() * &tmp))
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Builds the Dicke isometry for `1 <= n_spins <= 12`.
pub fn dicke_isometry(n_spins: usize) -> Result<DickeIsometry> {
    if n_spins == 0 || n_spins > MAX_ISOMETRY_SPINS {
        return Err(Error::DimensionCap {
            dim: n_spins,
            cap: MAX_ISOMETRY_SPINS,
            hint: "the qubit embedding is limited to 12 spins".into(),
        });
    }
    let q = 1usize << n_spins;
    let mut map = faer::Mat::<C64>::zeros(q, n_spins + 1);
    for b in 0..q {
        let k = b.count_ones() as usize;
        map[(b, k)] = ONE;
    }
    for k in 0..=n_spins {
        let w = 1.0 / binomial(n_spins, k).sqrt();
        for b in 0..q {
            map[(b, k)] *= w;
        }
    }
    Ok(DickeIsometry { n_spins, map })
}

/// Collective operator `sum_k op^(k)` on the `N`-qubit register.
pub fn qubit_collective(n_spins: usize, single: &Operator) -> Operator {
    assert_eq!(single.dim(), 2);
    let q = 1usize << n_spins;
    let mut out = Operator::zeros(q);
    for site in 0..n_spins {
        let bit = n_spins - 1 - site;
        let local = Operator::from_fn(q, |r, c| {
            if (r ^ c) & !(1 << bit) != 0 {
                return ZERO;
            }
            single.get((r >> bit) & 1, (c >> bit) & 1)
        });
        out = &out + &local;
    }
    out
}
