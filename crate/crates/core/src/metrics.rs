//! Steady-state diagnostics.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::groups::{group_average_state, SymmetryGroup};
use crate::operator::{Operator, ZERO};
use crate::spin::{collective_spin_ops, dicke_isometry, SpinSystem, TensorBasis};

/// Pairs with `λ_k + λ_l` at or below this are left out of the QFI sum.
pub const QFI_CUTOFF: f64 = 1e-12;

pub fn purity(rho: &Operator) -> f64 {
    rho.hs_inner(rho).re
}

/// `sqrt(Tr (rho - I/d)^2)`.
pub fn hs_distance_mms(rho: &Operator) -> f64 {
    let d = rho.dim();
    rho.hs_distance(&Operator::identity(d).scale_re(1.0 / d as f64))
}

/// Eigendecomposition of a state, reused across QFI evaluations.
pub struct QfiKernel {
    vals: Vec<f64>,
    vecs: Mat<C64>,
}

impl QfiKernel {
    pub fn new(rho: &Operator) -> Result<Self> {
        let (vals, vecs) = rho.hermitian_part().eigh()?;
        Ok(Self { vals, vecs })
    }

    pub fn qfi(&self, generator: &Operator) -> Result<f64> {
        generator.require_hermitian()?;
        let a = self.vecs.adjoint() * generator.mat() * &self.vecs;
        let n = self.vals.len();
        let mut f = 0.0;
        for k in 0..n {
            for l in 0..n {
                let s = self.vals[k] + self.vals[l];
                if s <= QFI_CUTOFF {
                    continue;
                }
                let diff = self.vals[k] - self.vals[l];
                f += diff * diff / s * a[(k, l)].norm_sqr();
            }
        }
        Ok(2.0 * f)
    }
}

/// Quantum Fisher information of `rho` for rotations generated by `generator`.
pub fn qfi(rho: &Operator, generator: &Operator) -> Result<f64> {
    QfiKernel::new(rho)?.qfi(generator)
}

/// Mean and spread (max - min) of `F(rho, cos φ Sx + sin φ Sy)` over
/// `n_angles` equally spaced angles in `[0, π)`.
pub fn equatorial_qfi(rho: &Operator, sys: &SpinSystem, n_angles: usize) -> Result<(f64, f64)> {
    if n_angles < 4 {
        return Err(Error::InvalidInput(
            "equatorial QFI needs at least 4 angles".into(),
        ));
    }
    let s = collective_spin_ops(sys);
    let kernel = QfiKernel::new(rho)?;
    let values = (0..n_angles)
        .map(|k| {
            let phi = PI * k as f64 / n_angles as f64;
            kernel.qfi(&s.along([phi.cos(), phi.sin(), 0.0]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_spread(&values))
}

/// Mean and spread of `F(rho, n·S)` over Fibonacci-lattice directions.
pub fn isotropic_qfi_check(
    rho: &Operator,
    sys: &SpinSystem,
    n_directions: usize,
) -> Result<(f64, f64)> {
    if n_directions < 10 {
        return Err(Error::InvalidInput(
            "isotropy check needs at least 10 directions".into(),
        ));
    }
    let s = collective_spin_ops(sys);
    let kernel = QfiKernel::new(rho)?;
    let values = fibonacci_directions(n_directions)
        .into_iter()
        .map(|n| kernel.qfi(&s.along(n)))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_spread(&values))
}

fn mean_spread(values: &[f64]) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    (mean, max - min)
}

/// Quasi-uniform unit vectors on the sphere.
pub fn fibonacci_directions(n: usize) -> Vec<[f64; 3]> {
    let golden_angle = PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Negativity across the first `cut` qubits of the symmetric-subspace state.
pub fn negativity(rho_spin: &Operator, sys: &SpinSystem, cut: usize) -> Result<f64> {
    let n = sys.n_spins();
    if cut == 0 || cut >= n {
        return Err(Error::InvalidInput(format!(
            "cut must lie in 1..{n}, got {cut}"
        )));
    }
    if rho_spin.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            found: rho_spin.dim(),
        });
    }
    let iso = dicke_isometry(n)?;
    let full = iso.embed(rho_spin)?;
    let da = 1usize << cut;
    let db = 1usize << (n - cut);
    // Qubit 1 is the most significant bit, so the first `cut` qubits form
    // the high part of the index.
    let pt = Operator::from_fn(da * db, |i, j| {
        let (ia, ib) = (i / db, i % db);
        let (ja, jb) = (j / db, j % db);
        full.get(ja * db + ib, ia * db + jb)
    });
    let vals = pt.hermitian_part().eigvalsh()?;
    let trace_norm: f64 = vals.iter().map(|v| v.abs()).sum();
    Ok(((trace_norm - 1.0) / 2.0).max(0.0))
}

/// `A_L = Σ_M |Tr(rho T_LM†)|²` for `L = 1..=2j`.
pub fn multipole_norms(rho: &Operator, sys: &SpinSystem) -> Vec<f64> {
    multipole_norms_with(rho, &TensorBasis::new(sys))
}

pub fn multipole_norms_with(rho: &Operator, basis: &TensorBasis) -> Vec<f64> {
    let two_j = basis.sys().two_j();
    let coeffs = basis.coefficients(rho);
    let mut out = vec![0.0; two_j];
    for ((l, _, _), c) in basis.iter().zip(&coeffs) {
        if *l >= 1 {
            out[l - 1] += c.norm_sqr();
        }
    }
    out
}

/// Largest `t` with `A_L < tol` for every `L <= t`.
pub fn anticoherence_order(rho: &Operator, sys: &SpinSystem, tol: f64) -> usize {
    anticoherence_from_norms(&multipole_norms(rho, sys), tol)
}

pub fn anticoherence_from_norms(norms: &[f64], tol: f64) -> usize {
    norms.iter().take_while(|&&a| a < tol).count()
}

/// `1 - Tr(rho rho_G) / Tr(rho²)` with `rho_G` the group average. The
/// average is an orthogonal projection, so this equals
/// `||rho - rho_G||² / Tr(rho²)`, which is evaluated instead to avoid
/// cancellation for nearly symmetric states.
pub fn symmetry_deviation(rho: &Operator, group: &SymmetryGroup) -> f64 {
    let avg = group_average_state(rho, group);
    (rho.hs_distance(&avg).powi(2) / purity(rho)).clamp(0.0, 1.0)
}

/// Dicke populations `p_m` (basis order m = j..-j) and the Frobenius norm of
/// the off-diagonal part.
pub fn dicke_populations(rho: &Operator) -> (Vec<f64>, f64) {
    let d = rho.dim();
    let pops = (0..d).map(|k| rho.get(k, k).re).collect();
    let mut off = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                off += rho.get(i, j).norm_sqr();
            }
        }
    }
    (pops, off.sqrt())
}

/// Orthonormal spherical harmonics `Y_LM(θ, φ)` (Condon–Shortley phase) for
/// `L <= l_max`, indexed `L² + M + L`.
pub fn spherical_harmonics(l_max: usize, theta: f64, phi: f64) -> Vec<C64> {
    let x = theta.cos();
    let sx = theta.sin().abs();
    // p[l][m] for m >= 0, fully normalized.
    let mut p = vec![vec![0.0; l_max + 1]; l_max + 1];
    p[0][0] = 1.0 / (4.0 * PI).sqrt();
    for m in 1..=l_max {
        p[m][m] = -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * sx * p[m - 1][m - 1];
    }
    for m in 0..l_max {
        p[m + 1][m] = x * ((2 * m + 3) as f64).sqrt() * p[m][m];
    }
    for m in 0..=l_max {
        for l in m + 2..=l_max {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            p[l][m] = a * (x * p[l - 1][m] - b * p[l - 2][m]);
        }
    }
    let mut out = vec![ZERO; (l_max + 1) * (l_max + 1)];
    for l in 0..=l_max {
        for m in 0..=l {
            let y = C64::from_polar(p[l][m], m as f64 * phi);
            out[l * l + l + m] = y;
            if m > 0 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                out[l * l + l - m] = y.conj() * sign;
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct WignerField {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// Row-major `values[i * n_phi + k]` at `(thetas[i], phis[k])`.
    pub values: Vec<f64>,
    /// Largest imaginary part encountered.
    pub imag_residue: f64,
}

impl WignerField {
    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.phis.len() + k]
    }
}

/// Multipole coefficients `rho_LM = Tr(rho T_LM†)`, indexed like the
/// spherical harmonics.
pub fn multipole_coefficients(rho: &Operator, sys: &SpinSystem) -> Vec<C64> {
    TensorBasis::new(sys).coefficients(rho)
}

/// `W(θ, φ) = Σ rho_LM Y_LM(θ, φ)` for given coefficients.
pub fn wigner_from_coefficients(coeffs: &[C64], two_j: usize, theta: f64, phi: f64) -> C64 {
    let y = spherical_harmonics(two_j, theta, phi);
    coeffs.iter().zip(&y).map(|(c, y)| c * y).sum()
}

pub fn wigner_at(rho: &Operator, sys: &SpinSystem, theta: f64, phi: f64) -> f64 {
    wigner_from_coefficients(&multipole_coefficients(rho, sys), sys.two_j(), theta, phi).re
}

/// Spherical Wigner function on a grid with poles included: `θ_i = π i /
/// (n_theta - 1)`, `φ_k = 2π k / n_phi`.
pub fn wigner_sphere(
    rho: &Operator,
    sys: &SpinSystem,
    n_theta: usize,
    n_phi: usize,
) -> Result<WignerField> {
    if n_theta < 16 || n_phi < 32 {
        return Err(Error::InvalidInput(format!(
            "Wigner grid must be at least 16x32, got {n_theta}x{n_phi}"
        )));
    }
    let coeffs = multipole_coefficients(rho, sys);
    let thetas: Vec<f64> = (0..n_theta)
        .map(|i| PI * i as f64 / (n_theta - 1) as f64)
        .collect();
    let phis: Vec<f64> = (0..n_phi)
        .map(|k| 2.0 * PI * k as f64 / n_phi as f64)
        .collect();
    let mut values = Vec::with_capacity(n_theta * n_phi);
    let mut imag: f64 = 0.0;
    for &t in &thetas {
        for &p in &phis {
            let w = wigner_from_coefficients(&coeffs, sys.two_j(), t, p);
            imag = imag.max(w.im.abs());
            values.push(w.re);
        }
    }
    Ok(WignerField {
        thetas,
        phis,
        values,
        imag_residue: imag,
    })
}

#[derive(Debug, Clone, Default)]
pub struct MetricOptions {
    /// Qubit cut for the negativity; skipped when `None`.
    pub cut: Option<usize>,
    pub n_angles: usize,
    pub n_directions: usize,
    pub anticoherence_tol: f64,
}

impl MetricOptions {
    pub fn standard() -> Self {
        Self {
            cut: None,
            n_angles: 16,
            n_directions: 64,
            anticoherence_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetricBundle {
    pub purity: f64,
    pub hs_dist_mms: f64,
    pub dicke_populations: Vec<f64>,
    pub dicke_off_diagonal: f64,
    pub qfi_z: f64,
    pub qfi_equatorial: f64,
    pub qfi_equatorial_spread: f64,
    pub qfi_isotropic: f64,
    pub qfi_isotropy_spread: f64,
    pub negativity: Option<f64>,
    pub anticoherence_order: usize,
    pub multipole_norms: Vec<f64>,
    pub delta_g: Option<f64>,
}

pub fn metric_bundle(
    rho: &Operator,
    sys: &SpinSystem,
    group: Option<&SymmetryGroup>,
    opts: &MetricOptions,
) -> Result<MetricBundle> {
    let s = collective_spin_ops(sys);
    let (pops, off) = dicke_populations(rho);
    let (eq_mean, eq_spread) = equatorial_qfi(rho, sys, opts.n_angles.max(4))?;
    let (iso_mean, iso_spread) = isotropic_qfi_check(rho, sys, opts.n_directions.max(10))?;
    let norms = multipole_norms(rho, sys);
    let tol = if opts.anticoherence_tol > 0.0 {
        opts.anticoherence_tol
    } else {
        1e-8
    };
    Ok(MetricBundle {
        purity: purity(rho),
        hs_dist_mms: hs_distance_mms(rho),
        dicke_populations: pops,
        dicke_off_diagonal: off,
        qfi_z: qfi(rho, &s.sz)?,
        qfi_equatorial: eq_mean,
        qfi_equatorial_spread: eq_spread,
        qfi_isotropic: iso_mean,
        qfi_isotropy_spread: iso_spread,
        negativity: opts.cut.map(|c| negativity(rho, sys, c)).transpose()?,
        anticoherence_order: anticoherence_from_norms(&norms, tol),
        multipole_norms: norms,
        delta_g: group.map(|g| symmetry_deviation(rho, g)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{generate_group, rotation_unitary, GroupName};
    use crate::operator::ONE;
    use crate::steady::random_state;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sys(n: usize) -> SpinSystem {
        SpinSystem::new(n).unwrap()
    }

    fn pure(v: &[C64]) -> Operator {
        Operator::outer(v, v).unwrap()
    }

    #[test]
    fn mms_distances() {
        let s = sys(5);
        assert!(hs_distance_mms(&s.mms()) < 1e-14);
        let top = Operator::basis_projector(6, 0);
        assert!((hs_distance_mms(&top) - (5.0f64 / 6.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn ghz_qfi_is_n_squared() {
        for n in 1..8 {
            let s = sys(n);
            let d = s.dim();
            let mut v = vec![ZERO; d];
            v[0] = C64::new(0.5f64.sqrt(), 0.0);
            v[d - 1] = C64::new(0.5f64.sqrt(), 0.0);
            let ops = collective_spin_ops(&s);
            let f = qfi(&pure(&v), &ops.sz).unwrap();
            assert!((f - (n * n) as f64).abs() < 1e-9, "n={n} f={f}");
            assert!(qfi(&s.mms(), &ops.sx).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn pure_qfi_equals_four_variances() {
        let s = sys(4);
        let ops = collective_spin_ops(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let rho = random_state(s.dim(), &mut rng);
            let (_, vecs) = rho.eigh().unwrap();
            let v: Vec<C64> = (0..s.dim()).map(|i| vecs[(i, 0)]).collect();
            let psi = pure(&v);
            let a = ops.along([0.3, -0.5, 0.81f64.sqrt()]);
            let m1 = psi.hs_inner(&a).re;
            let m2 = psi.hs_inner(&a.matmul(&a)).re;
            assert!((qfi(&psi, &a).unwrap() - 4.0 * (m2 - m1 * m1)).abs() < 1e-9);
        }
    }

    #[test]
    fn qfi_rejects_non_hermitian() {
        let s = sys(2);
        let ops = collective_spin_ops(&s);
        assert!(qfi(&s.mms(), &ops.s_plus).is_err());
    }

    #[test]
    fn coherent_state_is_anisotropic() {
        let s = sys(4);
        let top = Operator::basis_projector(s.dim(), 0);
        let ops = collective_spin_ops(&s);
        assert!(qfi(&top, &ops.sz).unwrap().abs() < 1e-12);
        assert!((qfi(&top, &ops.sx).unwrap() - 4.0).abs() < 1e-10);
        let (mean, spread) = isotropic_qfi_check(&top, &s, 50).unwrap();
        assert!(spread / mean > 0.5);
        assert_eq!(isotropic_qfi_check(&s.mms(), &s, 50).unwrap().0, 0.0);
        assert_eq!(equatorial_qfi(&s.mms(), &s, 8).unwrap().0, 0.0);
        assert!(equatorial_qfi(&top, &s, 3).is_err());
    }

    #[test]
    fn fibonacci_directions_are_unit_and_balanced() {
        let dirs = fibonacci_directions(200);
        let mut c = [0.0; 3];
        for d in &dirs {
            assert!((d.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..3 {
                c[i] += d[i] / 200.0;
            }
        }
        assert!(c.iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn negativity_examples() {
        for n in 2..=6 {
            let s = sys(n);
            for cut in 1..n {
                assert!(negativity(&s.mms(), &s, cut).unwrap() < 1e-12);
            }
        }
        // N = 2, m = 0 is the triplet Bell state.
        let s = sys(2);
        let trip = Operator::basis_projector(3, 1);
        assert!((negativity(&trip, &s, 1).unwrap() - 0.5).abs() < 1e-12);
        // Coherent states are product states.
        assert!(negativity(&Operator::basis_projector(3, 0), &s, 1).unwrap() < 1e-12);
        assert!(negativity(&trip, &s, 2).is_err());
    }

    #[test]
    fn multipole_examples_and_parseval() {
        let s = sys(4);
        assert!(multipole_norms(&s.mms(), &s).iter().all(|&a| a < 1e-20));
        let top = Operator::basis_projector(s.dim(), 0);
        assert!(multipole_norms(&top, &s)[0] > 0.1);
        assert_eq!(anticoherence_order(&top, &s, 1e-8), 0);
        assert_eq!(anticoherence_order(&s.mms(), &s, 1e-8), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..7 {
            let s = sys(n);
            let rho = random_state(s.dim(), &mut rng);
            let total: f64 = multipole_norms(&rho, &s).iter().sum::<f64>() + 1.0 / s.dim() as f64;
            assert!((total - purity(&rho)).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetry_deviation_examples() {
        let s = sys(4);
        let g = generate_group(&s, GroupName::D2).unwrap();
        let top = Operator::basis_projector(s.dim(), 0);
        assert!((symmetry_deviation(&top, &g) - 0.5).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random_state(s.dim(), &mut rng);
        assert!(symmetry_deviation(&group_average_state(&rho, &g), &g) < 1e-10);
        let d = symmetry_deviation(&rho, &g);
        assert!((0.0..=1.0).contains(&d));
        let avg = group_average_state(&rho, &g);
        let direct = 1.0 - rho.hs_inner(&avg).re / purity(&rho);
        assert!((d - direct).abs() < 1e-12);
    }

    #[test]
    fn dicke_population_basics() {
        let s = sys(5);
        let (p, off) = dicke_populations(&s.mms());
        assert!(p.iter().all(|&x| (x - 1.0 / 6.0).abs() < 1e-15));
        assert_eq!(off, 0.0);
    }

    #[test]
    fn spherical_harmonics_closed_forms() {
        let (t, p) = (0.7, 1.3);
        let y = spherical_harmonics(2, t, p);
        let y10 = (3.0 / (4.0 * PI)).sqrt() * t.cos();
        let y11 = -(3.0 / (8.0 * PI)).sqrt() * t.sin();
        let y22 = (15.0 / (32.0 * PI)).sqrt() * t.sin().powi(2);
        let y20 = (5.0 / (16.0 * PI)).sqrt() * (3.0 * t.cos().powi(2) - 1.0);
        assert!((y[2] - C64::new(y10, 0.0)).norm() < 1e-14);
        assert!((y[3] - C64::from_polar(y11, p)).norm() < 1e-14);
        assert!((y[1] - C64::from_polar(-y11, -p)).norm() < 1e-14);
        assert!((y[6] - C64::new(y20, 0.0)).norm() < 1e-14);
        assert!((y[8] - C64::from_polar(y22, 2.0 * p)).norm() < 1e-14);
    }

    #[test]
    fn spherical_harmonics_orthonormal() {
        let l_max = 4;
        let (nt, np) = (400, 64);
        let k = (l_max + 1) * (l_max + 1);
        let mut gram = vec![vec![ZERO; k]; k];
        for i in 0..nt {
            let t = PI * (i as f64 + 0.5) / nt as f64;
            let w = t.sin() * (PI / nt as f64) * (2.0 * PI / np as f64);
            for j in 0..np {
                let y = spherical_harmonics(l_max, t, 2.0 * PI * j as f64 / np as f64);
                for a in 0..k {
                    for b in 0..k {
                        gram[a][b] += y[a].conj() * y[b] * w;
                    }
                }
            }
        }
        for a in 0..k {
            for b in 0..k {
                let want = if a == b { ONE } else { ZERO };
                assert!((gram[a][b] - want).norm() < 1e-4, "{a} {b}");
            }
        }
    }

    #[test]
    fn wigner_examples() {
        let s = sys(4);
        let w = wigner_sphere(&s.mms(), &s, 16, 32).unwrap();
        let first = w.values[0];
        assert!(w.values.iter().all(|v| (v - first).abs() < 1e-12));
        let top = Operator::basis_projector(s.dim(), 0);
        let w = wigner_sphere(&top, &s, 16, 32).unwrap();
        let max = w.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((w.at(0, 0) - max).abs() < 1e-12);
        assert!(w.imag_residue < 1e-10);
        assert!(wigner_sphere(&top, &s, 8, 32).is_err());
    }

    #[test]
    fn wigner_is_rotation_covariant() {
        // <S> of u rho u† is R <S>, so the field moves by R as well.
        let s = sys(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho = random_state(s.dim(), &mut rng);
        let axis = [0.48, -0.6, 0.64];
        let angle = 1.1;
        let u = rotation_unitary(&s, axis, angle).unwrap();
        let rotated = rho.conjugate_by(&u);
        let r = crate::groups::rodrigues(axis, angle);
        for (t, p) in [(0.3f64, 0.2f64), (1.2, 4.0), (2.5, 2.2)] {
            let n = [t.sin() * f64::cos(p), t.sin() * f64::sin(p), f64::cos(t)];
            let m = crate::groups::mat3_apply(&r, n);
            let (t2, p2) = (m[2].clamp(-1.0, 1.0).acos(), m[1].atan2(m[0]));
            let lhs = wigner_at(&rotated, &s, t2, p2);
            let rhs = wigner_at(&rho, &s, t, p);
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }
}
