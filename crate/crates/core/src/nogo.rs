//! Randomized check that spin-only Lindbladians built from collective spin
//! components have the maximally mixed state as steady state, and that it is
//! unique once two independent jumps are present.

use std::fmt;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::operator::Operator;
use crate::spin::{collective_spin_ops, SpinOps, SpinSystem};
use crate::steady::steady_state;
use crate::superop::lindblad_superop;

/// Jump-set families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpFamily {
    /// One Hermitian jump `n·S`.
    SingleHermitian,
    /// Two Hermitian jumps along independent directions, arbitrary rates.
    HermitianPair,
    /// `c1 n1·S ± i c2 n2·S` with `n1 ⟂ n2` and equal rates.
    LadderPair,
    /// Three Hermitian jumps.
    HermitianTriple,
    /// Ladder pair plus a Hermitian jump.
    LadderPairPlusHermitian,
}

impl JumpFamily {
    pub const ALL: [JumpFamily; 5] = [
        JumpFamily::SingleHermitian,
        JumpFamily::HermitianPair,
        JumpFamily::LadderPair,
        JumpFamily::HermitianTriple,
        JumpFamily::LadderPairPlusHermitian,
    ];

    pub fn expects_uniqueness(&self) -> bool {
        !matches!(self, JumpFamily::SingleHermitian)
    }
}

impl fmt::Display for JumpFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JumpFamily::SingleHermitian => "k1_hermitian",
            JumpFamily::HermitianPair => "k2_hermitian",
            JumpFamily::LadderPair => "k2_ladder_pair",
            JumpFamily::HermitianTriple => "k3_hermitian",
            JumpFamily::LadderPairPlusHermitian => "k3_ladder_pair_hermitian",
        })
    }
}

#[derive(Debug, Clone)]
pub struct NogoInstance {
    pub n_spins: usize,
    pub family: JumpFamily,
    pub index: usize,
    /// Human-readable coefficients, enough to rebuild the instance.
    pub description: String,
    pub distance_to_mms: f64,
    /// `||L[I/d]||_HS`.
    pub mms_residual: f64,
    pub nullity: usize,
    /// `||Σ r_k [L_k, L_k†]||_HS`.
    pub unitality_defect: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct NogoReport {
    pub instances: Vec<NogoInstance>,
}

impl NogoReport {
    pub fn passed(&self) -> bool {
        self.instances.iter().all(|i| i.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &NogoInstance> {
        self.instances.iter().filter(|i| !i.passed)
    }
}

pub const NOGO_TOL: f64 = 1e-10;

fn random_direction(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [0, 1, 2].map(|_| rng.random::<f64>() * 2.0 - 1.0);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (0.2..=1.0).contains(&n) {
            return v.map(|x| x / n);
        }
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn fmt_vec(v: [f64; 3]) -> String {
    format!("({:.6},{:.6},{:.6})", v[0], v[1], v[2])
}

/// Random Hamiltonian invariant under π rotations about x, y and z.
pub fn random_d2_hamiltonian(s: &SpinOps, rng: &mut impl Rng) -> (Operator, String) {
    let c: [f64; 4] = [0, 1, 2, 3].map(|_| rng.random::<f64>() * 2.0 - 1.0);
    let xyz = s.sx.matmul(&s.sy).matmul(&s.sz);
    let h = &(&(&s.sx.pow(2).scale_re(c[0]) + &s.sy.pow(2).scale_re(c[1]))
        + &s.sz.pow(4).scale_re(c[2]))
        + &(&xyz + &xyz.dagger()).scale_re(c[3]);
    (
        h.hermitian_part(),
        format!(
            "H=[{:.6} Sx^2 + {:.6} Sy^2 + {:.6} Sz^4 + {:.6}(SxSySz+h.c.)]",
            c[0], c[1], c[2], c[3]
        ),
    )
}

fn build_jumps(
    family: JumpFamily,
    s: &SpinOps,
    rng: &mut impl Rng,
) -> (Vec<(Operator, f64)>, String) {
    let rate = |rng: &mut dyn rand::RngCore| 0.2 + 2.0 * rng.random::<f64>();
    let herm = |rng: &mut ChaCha8Rng| -> ((Operator, f64), String) {
        let n = random_direction(rng);
        let r = rate(rng);
        ((s.along(n), r), format!("{r:.6}*D[n.S] n={}", fmt_vec(n)))
    };
    let ladder = |rng: &mut ChaCha8Rng| -> (Vec<(Operator, f64)>, String) {
        let n1 = random_direction(rng);
        let n2 = {
            let t = cross(n1, random_direction(rng));
            let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
            t.map(|x| x / norm)
        };
        let (c1, c2) = (0.3 + rng.random::<f64>(), 0.3 + rng.random::<f64>());
        let r = rate(rng);
        let a = s.along(n1).scale_re(c1);
        let b = s.along(n2).scale(C64::new(0.0, c2));
        let plus = &a + &b;
        let minus = &a - &b;
        (
            vec![(plus, r), (minus, r)],
            format!(
                "{r:.6}*D[c1 n1.S +/- i c2 n2.S] c1={c1:.6} c2={c2:.6} n1={} n2={}",
                fmt_vec(n1),
                fmt_vec(n2)
            ),
        )
    };
    let mut local = ChaCha8Rng::seed_from_u64(rng.random());
    match family {
        JumpFamily::SingleHermitian => {
            let (j, d) = herm(&mut local);
            (vec![j], d)
        }
        JumpFamily::HermitianPair => {
            let (a, da) = herm(&mut local);
            let (b, db) = herm(&mut local);
            (vec![a, b], format!("{da}; {db}"))
        }
        JumpFamily::LadderPair => ladder(&mut local),
        JumpFamily::HermitianTriple => {
            let (a, da) = herm(&mut local);
            let (b, db) = herm(&mut local);
            let (c, dc) = herm(&mut local);
            (vec![a, b, c], format!("{da}; {db}; {dc}"))
        }
        JumpFamily::LadderPairPlusHermitian => {
            let (mut v, d1) = ladder(&mut local);
            let (c, d2) = herm(&mut local);
            v.push(c);
            (v, format!("{d1}; {d2}"))
        }
    }
}

/// Runs `instances` random draws of every family for every `N` in `n_list`.
pub fn verify_nogo(n_list: &[usize], instances: usize, seed: u64) -> Result<NogoReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &n in n_list {
        let sys = SpinSystem::new(n)?;
        let s = collective_spin_ops(&sys);
        let mms = sys.mms();
        for family in JumpFamily::ALL {
            for index in 0..instances {
                let (h, hdesc) = random_d2_hamiltonian(&s, &mut rng);
                let (jumps, jdesc) = build_jumps(family, &s, &mut rng);
                let l = lindblad_superop(&h, &jumps)?;
                let mms_residual = l.apply_op(&mms)?.hs_norm();
                let mut defect = Operator::zeros(sys.dim());
                for (k, r) in &jumps {
                    defect = &defect + &k.commutator(&k.dagger()).scale_re(*r);
                }
                let unitality_defect = defect.hs_norm();
                let rep = steady_state(&l)?;
                let distance_to_mms = rep.rho_ss.hs_distance(&mms);
                let mut passed = mms_residual < NOGO_TOL && unitality_defect < NOGO_TOL;
                if family.expects_uniqueness() {
                    passed &= rep.nullity == 1 && distance_to_mms < NOGO_TOL;
                }
                out.push(NogoInstance {
                    n_spins: n,
                    family,
                    index,
                    description: format!("{hdesc}; {jdesc}"),
                    distance_to_mms,
                    mms_residual,
                    nullity: rep.nullity,
                    unitality_defect,
                    passed,
                });
            }
        }
    }
    Ok(NogoReport { instances: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{generate_group, GroupName};

    #[test]
    fn random_hamiltonian_is_d2_symmetric() {
        let sys = SpinSystem::new(4).unwrap();
        let s = collective_spin_ops(&sys);
        let g = generate_group(&sys, GroupName::D2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (h, _) = random_d2_hamiltonian(&s, &mut rng);
        for e in &g.elements {
            assert!(h.conjugate_by(&e.u).hs_distance(&h) < 1e-10);
        }
    }

    #[test]
    fn single_sz_is_stationary_but_degenerate() {
        let sys = SpinSystem::new(5).unwrap();
        let s = collective_spin_ops(&sys);
        let l = lindblad_superop(&Operator::zeros(sys.dim()), &[(s.sz.clone(), 1.0)]).unwrap();
        assert!(l.apply_op(&sys.mms()).unwrap().hs_norm() < 1e-14);
        assert!(steady_state(&l).unwrap().nullity > 1);
    }

    #[test]
    fn small_sweep_passes() {
        let rep = verify_nogo(&[2, 3, 4], 3, 7).unwrap();
        assert_eq!(rep.instances.len(), 3 * 5 * 3);
        let failures: Vec<_> = rep.failures().collect();
        assert!(failures.is_empty(), "{failures:?}");
    }

    #[test]
    fn unequal_ladder_rates_break_unitality() {
        let sys = SpinSystem::new(3).unwrap();
        let s = collective_spin_ops(&sys);
        let l = lindblad_superop(
            &Operator::zeros(sys.dim()),
            &[(s.s_plus.clone(), 1.0), (s.s_minus.clone(), 0.5)],
        )
        .unwrap();
        assert!(l.apply_op(&sys.mms()).unwrap().hs_norm() > 1e-3);
    }
}
