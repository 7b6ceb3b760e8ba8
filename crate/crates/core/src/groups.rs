//! Rotation groups in the spin-j representation and the symmetry checks
//! built on them.

use std::f64::consts::PI;
use std::fmt;

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::liouville::{AuxSpace, EmbeddingModel};
use crate::operator::{Operator, ONE, ZERO};
use crate::spin::{collective_spin_ops, SpinSystem};
use crate::superop::SuperOperator;

pub type So3 = [[f64; 3]; 3];

/// Fingerprint tolerance for identifying rotations.
pub const SO3_TOL: f64 = 1e-8;
/// Tolerance on normalized overlaps in closure checks.
pub const CLOSURE_TOL: f64 = 1e-9;

const GOLDEN: f64 = 1.618_033_988_749_895;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupName {
    D2,
    T,
    O,
    I,
    U1Sampled,
}

impl GroupName {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "d2" | "z2xz2" => GroupName::D2,
            "t" | "tetra" | "tetrahedral" => GroupName::T,
            "o" | "octa" | "octahedral" => GroupName::O,
            "i" | "icosa" | "icosahedral" => GroupName::I,
            "u1" | "u1sampled" | "u1z2" => GroupName::U1Sampled,
            other => return Err(Error::InvalidInput(format!("unknown group '{other}'"))),
        })
    }
}

impl fmt::Display for GroupName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupName::D2 => "D2",
            GroupName::T => "T",
            GroupName::O => "O",
            GroupName::I => "I",
            GroupName::U1Sampled => "U1sampled",
        })
    }
}

#[derive(Debug, Clone)]
pub struct GroupElement {
    /// Adjoint action: `u† S_a u = Σ_b so3[a][b] S_b`.
    pub so3: So3,
    pub u: Operator,
}

impl GroupElement {
    pub fn identity(sys: &SpinSystem) -> Self {
        Self {
            so3: IDENTITY3,
            u: sys.identity(),
        }
    }

    pub fn rotation(sys: &SpinSystem, axis: [f64; 3], angle: f64) -> Result<Self> {
        Ok(Self {
            so3: rodrigues(axis, angle),
            u: rotation_unitary(sys, axis, angle)?,
        })
    }

    /// `self` applied after `other`.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            so3: mat3_mul(&self.so3, &other.so3),
            u: self.u.matmul(&other.u),
        }
    }

    pub fn same_rotation(&self, so3: &So3) -> bool {
        so3_distance(&self.so3, so3) < SO3_TOL
    }

    /// Superoperator action `rho -> u rho u†`.
    pub fn act(&self, rho: &Operator) -> Operator {
        rho.conjugate_by(&self.u)
    }
}

const IDENTITY3: So3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn mat3_mul(a: &So3, b: &So3) -> So3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn so3_distance(a: &So3, b: &So3) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

pub fn mat3_apply(r: &So3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| (0..3).map(|k| r[i][k] * v[k]).sum())
}

fn check_axis(axis: [f64; 3]) -> Result<()> {
    let n = axis.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "rotation axis has norm {n}, expected 1"
        )));
    }
    Ok(())
}

/// Rotation matrix for angle `theta` about the unit axis `n`.
pub fn rodrigues(n: [f64; 3], theta: f64) -> So3 {
    let k = [[0.0, -n[2], n[1]], [n[2], 0.0, -n[0]], [-n[1], n[0], 0.0]];
    let k2 = mat3_mul(&k, &k);
    let (s, c) = theta.sin_cos();
    let mut r = IDENTITY3;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += s * k[i][j] + (1.0 - c) * k2[i][j];
        }
    }
    r
}

/// `exp(-i angle axis·S)`.
pub fn rotation_unitary(sys: &SpinSystem, axis: [f64; 3], angle: f64) -> Result<Operator> {
    check_axis(axis)?;
    let s = collective_spin_ops(sys);
    s.along(axis).exp_i_hermitian(angle)
}

/// Adjoint-action matrix of a spin unitary, read off from `u† S_a u`.
pub fn adjoint_so3(sys: &SpinSystem, u: &Operator) -> So3 {
    let s = collective_spin_ops(sys);
    let comps = s.components();
    let norm = comps[0].hs_inner(comps[0]).re;
    let mut r = [[0.0; 3]; 3];
    for a in 0..3 {
        let rotated = comps[a].conjugate_by(&u.dagger());
        for b in 0..3 {
            r[a][b] = comps[b].hs_inner(&rotated).re / norm;
        }
    }
    r
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.map(|x| x / n)
}

/// Three-fold axes of the tetrahedral group.
pub fn tetrahedral_axes() -> [[f64; 3]; 4] {
    let a = (2.0f64 / 3.0).sqrt();
    let b = 1.0 / 3.0f64.sqrt();
    [[a, 0.0, b], [-a, 0.0, b], [0.0, a, -b], [0.0, -a, -b]]
}

/// Five-fold axes of the icosahedral group (one per antipodal pair).
pub fn icosahedral_axes() -> [[f64; 3]; 6] {
    let p = GOLDEN;
    [
        [0.0, 1.0, p],
        [0.0, 1.0, -p],
        [1.0, p, 0.0],
        [1.0, -p, 0.0],
        [p, 0.0, 1.0],
        [p, 0.0, -1.0],
    ]
    .map(normalize)
}

#[derive(Debug, Clone)]
pub struct SymmetryGroup {
    pub name: GroupName,
    pub elements: Vec<GroupElement>,
    /// Extra random-angle elements used only to probe continuous symmetry.
    pub probes: Vec<GroupElement>,
}

impl SymmetryGroup {
    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn find(&self, so3: &So3) -> Option<usize> {
        self.elements.iter().position(|e| e.same_rotation(so3))
    }

    /// Elements followed by probes.
    pub fn all_elements(&self) -> impl Iterator<Item = &GroupElement> {
        self.elements.iter().chain(&self.probes)
    }
}

/// Number of U(1) angles sampled for a spin of dimension `dim`: enough that
/// the discrete average removes every coherence `Δm != 0`.
pub fn u1_samples(dim: usize) -> usize {
    dim.max(8)
}

pub fn generate_group(sys: &SpinSystem, name: GroupName) -> Result<SymmetryGroup> {
    let x = [1.0, 0.0, 0.0];
    let z = [0.0, 0.0, 1.0];
    let (gens, expected): (Vec<([f64; 3], f64)>, usize) = match name {
        GroupName::D2 => (vec![(x, PI), (z, PI)], 4),
        GroupName::T => (vec![(z, PI), (tetrahedral_axes()[0], 2.0 * PI / 3.0)], 12),
        GroupName::O => (
            vec![(z, PI / 2.0), (normalize([1.0, 1.0, 1.0]), 2.0 * PI / 3.0)],
            24,
        ),
        GroupName::I => (vec![(icosahedral_axes()[0], 2.0 * PI / 5.0), (z, PI)], 60),
        GroupName::U1Sampled => {
            let k = u1_samples(sys.dim());
            (vec![(z, 2.0 * PI / k as f64), (x, PI)], 2 * k)
        }
    };
    let gens: Vec<GroupElement> = gens
        .into_iter()
        .map(|(a, t)| GroupElement::rotation(sys, a, t))
        .collect::<Result<_>>()?;
    let elements = close(sys, &gens, expected)?;
    let probes = if name == GroupName::U1Sampled {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5a17);
        (0..4)
            .map(|_| GroupElement::rotation(sys, z, rng.random::<f64>() * 2.0 * PI))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(SymmetryGroup {
        name,
        elements,
        probes,
    })
}

fn close(sys: &SpinSystem, gens: &[GroupElement], expected: usize) -> Result<Vec<GroupElement>> {
    let mut elements = vec![GroupElement::identity(sys)];
    let mut frontier = 0;
    let mut compositions = 0;
    while frontier < elements.len() {
        let current = elements[frontier].clone();
        frontier += 1;
        for g in gens {
            compositions += 1;
            if compositions > 10 * expected {
                return Err(Error::Symmetry(format!(
                    "group closure did not stabilize within {} compositions ({} elements so far)",
                    10 * expected,
                    elements.len()
                )));
            }
            let next = g.compose(&current);
            if !elements.iter().any(|e| e.same_rotation(&next.so3)) {
                elements.push(next);
            }
        }
    }
    if elements.len() != expected {
        return Err(Error::Symmetry(format!(
            "closure produced {} elements, expected {expected}",
            elements.len()
        )));
    }
    Ok(elements)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureEntry {
    pub target: usize,
    /// `u L_mu u† ≈ e^{i phase} L_target`.
    pub phase: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureMode {
    /// Every element permutes the jumps up to phases.
    PhasePermutation,
    /// Elements mix the jumps unitarily within their span.
    SpanMixing,
    Failed,
}

#[derive(Debug, Clone)]
pub struct ClosureReport {
    pub ok: bool,
    pub mode: ClosureMode,
    /// `table[element][mu]`: best single-jump match.
    pub table: Vec<Vec<ClosureEntry>>,
    /// Per element: `u L_mu u† = Σ_nu W[nu, mu] L_nu`.
    pub mixing: Vec<Mat<C64>>,
    /// Rotation of each row of the table, for lookup.
    pub so3: Vec<So3>,
    pub max_error: f64,
}

impl ClosureReport {
    pub fn mixing_for(&self, element: &GroupElement) -> Option<&Mat<C64>> {
        self.so3
            .iter()
            .position(|r| element.same_rotation(r))
            .map(|k| &self.mixing[k])
    }

    pub fn permutation(&self, element: usize) -> Vec<usize> {
        self.table[element].iter().map(|e| e.target).collect()
    }
}

/// Checks that every element (and probe) maps the jump set into itself,
/// first as a phase permutation and otherwise as a unitary mixing.
pub fn check_closure(group: &SymmetryGroup, jumps: &[Operator]) -> ClosureReport {
    let elems: Vec<&GroupElement> = group.all_elements().collect();
    let norms: Vec<f64> = jumps.iter().map(|l| l.hs_norm()).collect();
    let k = jumps.len();
    let mut table = Vec::with_capacity(elems.len());
    let mut perm_ok = k > 0 && norms.iter().all(|&n| n > 0.0);
    let mut max_perm_error: f64 = 0.0;
    let mut images = Vec::with_capacity(elems.len());
    for e in &elems {
        let imgs: Vec<Operator> = jumps.iter().map(|l| l.conjugate_by(&e.u)).collect();
        let mut row = Vec::with_capacity(k);
        for (mu, m) in imgs.iter().enumerate() {
            let mn = m.hs_norm();
            let mut best = ClosureEntry {
                target: mu,
                phase: 0.0,
                error: f64::INFINITY,
            };
            let mut best_abs = -1.0;
            for (nu, l) in jumps.iter().enumerate() {
                let ov = l.hs_inner(m) / (norms[nu] * mn).max(f64::MIN_POSITIVE);
                if ov.norm() > best_abs + 1e-12 {
                    best_abs = ov.norm();
                    let error = (1.0 - ov.norm()).abs().max((mn / norms[nu] - 1.0).abs());
                    best = ClosureEntry {
                        target: nu,
                        phase: ov.arg(),
                        error,
                    };
                }
            }
            max_perm_error = max_perm_error.max(best.error);
            row.push(best);
        }
        let mut seen = vec![false; k];
        for entry in &row {
            if entry.error > CLOSURE_TOL || seen[entry.target] {
                perm_ok = false;
            } else {
                seen[entry.target] = true;
            }
        }
        table.push(row);
        images.push(imgs);
    }
    // Group action: perm(g h) = perm(g) ∘ perm(h) over the finite elements.
    if perm_ok {
        let n = group.elements.len();
        'outer: for a in 0..n {
            for b in 0..n {
                let prod = mat3_mul(&group.elements[a].so3, &group.elements[b].so3);
                match group.find(&prod) {
                    Some(c) => {
                        for mu in 0..k {
                            if table[c][mu].target != table[a][table[b][mu].target].target {
                                perm_ok = false;
                                break 'outer;
                            }
                        }
                    }
                    None => {
                        perm_ok = false;
                        break 'outer;
                    }
                }
            }
        }
    }
    let so3 = elems.iter().map(|e| e.so3).collect();
    if perm_ok {
        let mixing = table
            .iter()
            .map(|row| {
                let mut w = Mat::zeros(k, k);
                for (mu, e) in row.iter().enumerate() {
                    w[(e.target, mu)] = C64::from_polar(1.0, e.phase);
                }
                w
            })
            .collect();
        return ClosureReport {
            ok: true,
            mode: ClosureMode::PhasePermutation,
            table,
            mixing,
            so3,
            max_error: max_perm_error,
        };
    }
    match span_mixing(jumps, &images) {
        Some((mixing, err)) => ClosureReport {
            ok: true,
            mode: ClosureMode::SpanMixing,
            table,
            mixing,
            so3,
            max_error: err,
        },
        None => ClosureReport {
            ok: false,
            mode: ClosureMode::Failed,
            table,
            mixing: Vec::new(),
            so3,
            max_error: max_perm_error,
        },
    }
}

/// Least-squares expansion of every image in the jump span; succeeds when
/// all residuals and the unitarity defect of each `W` are within tolerance.
fn span_mixing(jumps: &[Operator], images: &[Vec<Operator>]) -> Option<(Vec<Mat<C64>>, f64)> {
    use faer::linalg::solvers::Solve;
    let k = jumps.len();
    let gram = Mat::from_fn(k, k, |a, b| jumps[a].hs_inner(&jumps[b]));
    let lu = gram.partial_piv_lu();
    let mut out = Vec::with_capacity(images.len());
    let mut max_err: f64 = 0.0;
    for imgs in images {
        let rhs = Mat::from_fn(k, k, |nu, mu| jumps[nu].hs_inner(&imgs[mu]));
        let w = lu.solve(&rhs);
        if !w.norm_max().is_finite() {
            return None;
        }
        for (mu, m) in imgs.iter().enumerate() {
            let mut recon = Operator::zeros(m.dim());
            for (nu, l) in jumps.iter().enumerate() {
                recon = &recon + &l.scale(w[(nu, mu)]);
            }
            let err = recon.hs_distance(m) / m.hs_norm().max(f64::MIN_POSITIVE);
            max_err = max_err.max(err);
        }
        let wtw = w.adjoint() * &w;
        for a in 0..k {
            for b in 0..k {
                let target = if a == b { ONE } else { ZERO };
                max_err = max_err.max((wtw[(a, b)] - target).norm());
            }
        }
        if max_err > CLOSURE_TOL {
            return None;
        }
        out.push(w);
    }
    Some((out, max_err))
}

/// `(1/|G|) Σ u rho u†` over the group elements.
pub fn group_average_state(rho: &Operator, group: &SymmetryGroup) -> Operator {
    let mut acc = Operator::zeros(rho.dim());
    for e in &group.elements {
        acc = &acc + &e.act(rho);
    }
    acc.scale_re(1.0 / group.order() as f64).hermitian_part()
}

/// Max over 20 seeded random Hermitian probes of
/// `||L[u rho u†] - u L[rho] u†|| / ||rho||`.
pub fn check_weak_symmetry(superop: &SuperOperator, u: &Operator) -> Result<f64> {
    let d = superop.dim();
    if u.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: u.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let g = Operator::from_fn(d, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let rho = g.hermitian_part();
        let lhs = superop.apply_op(&rho.conjugate_by(u))?;
        let rhs = superop.apply_op(&rho)?.conjugate_by(u);
        worst = worst.max(lhs.hs_distance(&rhs) / rho.hs_norm());
    }
    Ok(worst)
}

/// Lifts a spin symmetry to the composite space: `U_S ⊗ U_A`, where `U_A`
/// maps each auxiliary creation operator to `Σ_nu conj(W[nu, mu]) A_nu†`.
pub fn embedding_symmetry_unitary(
    model: &EmbeddingModel,
    element: &GroupElement,
    closure: &ClosureReport,
) -> Result<Operator> {
    if !closure.ok {
        return Err(Error::Symmetry(
            "jump set is not closed under the group".into(),
        ));
    }
    let w = closure
        .mixing_for(element)
        .ok_or_else(|| Error::Symmetry("element not covered by the closure report".into()))?;
    let k = model.aux().len();
    if w.nrows() != k || model.couplings().len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: w.nrows(),
        });
    }
    let v = Mat::from_fn(k, k, |a, b| w[(a, b)].conj());
    let monomial = (0..k).all(|mu| (0..k).filter(|&nu| v[(nu, mu)].norm() > 1e-12).count() == 1);
    for mu in 0..k {
        for nu in 0..k {
            if v[(nu, mu)].norm() > 1e-12 && model.aux()[nu] != model.aux()[mu] {
                return Err(Error::Symmetry(format!(
                    "symmetry maps auxiliary {mu} onto non-identical auxiliary {nu}"
                )));
            }
        }
        if !monomial && !model.aux()[mu].kind.is_boson() {
            return Err(Error::Symmetry(
                "two-level or fermionic auxiliaries cannot be mixed".into(),
            ));
        }
    }
    let space = AuxSpace::new(model.aux(), model.excitation_cap())?;
    let da = space.dim();
    let raising: Vec<_> = space.lowering().iter().map(|a| a.adjoint()).collect();
    let mut ua = Operator::zeros(da).into_mat();
    let mut fact = vec![1.0f64; 64];
    for n in 1..fact.len() {
        fact[n] = fact[n - 1] * n as f64;
    }
    for idx in 0..da {
        let occ = space.occupation(idx).to_vec();
        let mut state = vec![ZERO; da];
        state[space.vacuum()] = ONE;
        for mu in (0..k).rev() {
            for _ in 0..occ[mu] {
                let mut next = vec![ZERO; da];
                let mut img = vec![ZERO; da];
                for nu in 0..k {
                    let c = v[(nu, mu)];
                    if c == ZERO {
                        continue;
                    }
                    raising[nu].matvec(&state, &mut img);
                    for (x, y) in next.iter_mut().zip(&img) {
                        *x += c * y;
                    }
                }
                state = next;
            }
            state.iter_mut().for_each(|x| *x /= fact[occ[mu]].sqrt());
        }
        for (r, x) in state.into_iter().enumerate() {
            ua[(r, idx)] = x;
        }
    }
    let ua = Operator::new(ua)?;
    let defect = ua.unitarity_error();
    if defect > 1e-9 {
        return Err(Error::Symmetry(format!(
            "auxiliary transformation is not unitary (defect {defect:.2e}); mixing bosons needs a joint excitation cap"
        )));
    }
    Ok(element.u.kron(&ua))
}
