//! Preset models: Hamiltonians, jump sets and symmetry groups of the
//! collective-spin constructions, plus the reduced Lindblad-limit and
//! Redfield generators.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::groups::{
    check_closure, generate_group, icosahedral_axes, tetrahedral_axes, ClosureReport, GroupName,
    SymmetryGroup,
};
use crate::liouville::{correlation_function, AuxKind, AuxSpec, EmbeddingModel};
use crate::operator::{Operator, ZERO};
use crate::spin::{collective_spin_ops, SpinSystem};
use crate::superop::{lindblad_superop, SuperOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetId {
    D2Minimal,
    U1Z2,
    Tetra,
    TetraAxes,
    Octa,
    Icosa,
}

impl PresetId {
    pub const ALL: [PresetId; 6] = [
        PresetId::D2Minimal,
        PresetId::U1Z2,
        PresetId::Tetra,
        PresetId::TetraAxes,
        PresetId::Octa,
        PresetId::Icosa,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetId::D2Minimal => "d2_minimal",
            PresetId::U1Z2 => "u1z2",
            PresetId::Tetra => "tetra",
            PresetId::TetraAxes => "tetra_axes",
            PresetId::Octa => "octa",
            PresetId::Icosa => "icosa",
        }
    }

    pub fn group(&self) -> GroupName {
        match self {
            PresetId::D2Minimal => GroupName::D2,
            PresetId::U1Z2 => GroupName::U1Sampled,
            PresetId::Tetra | PresetId::TetraAxes => GroupName::T,
            PresetId::Octa => GroupName::O,
            PresetId::Icosa => GroupName::I,
        }
    }

    pub fn is_polyhedral(&self) -> bool {
        matches!(
            self,
            PresetId::Tetra | PresetId::TetraAxes | PresetId::Octa | PresetId::Icosa
        )
    }

    /// Rank up to which the steady state's multipoles must vanish.
    pub fn anticoherence_rank(&self) -> usize {
        match self {
            PresetId::D2Minimal | PresetId::U1Z2 => 1,
            PresetId::Tetra | PresetId::TetraAxes => 2,
            PresetId::Octa => 3,
            PresetId::Icosa => 5,
        }
    }

    pub fn defaults(&self) -> PresetParams {
        let base = PresetParams {
            n_spins: 5,
            h: 1.0,
            omega: 1.0,
            gamma: 0.5,
            kappa: 0.5,
            kappas: None,
            aux: AuxChoice::Boson,
            truncation: 4,
            joint_cap: true,
        };
        match self {
            PresetId::D2Minimal => PresetParams {
                n_spins: 5,
                h: 10.0,
                gamma: 2.5,
                kappa: 1.0,
                aux: AuxChoice::TwoLevel,
                truncation: 6,
                joint_cap: false,
                ..base
            },
            PresetId::U1Z2 => PresetParams {
                n_spins: 6,
                h: 5.0,
                gamma: 1.0,
                kappa: 0.2,
                truncation: 5,
                joint_cap: false,
                ..base
            },
            PresetId::Tetra | PresetId::TetraAxes => PresetParams { n_spins: 4, ..base },
            PresetId::Octa => PresetParams { n_spins: 6, ..base },
            PresetId::Icosa => PresetParams {
                n_spins: 6,
                h: 1.0 / 6.0,
                ..base
            },
        }
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetId::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown preset '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxChoice {
    Boson,
    Fermion,
    TwoLevel,
}

impl AuxChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            AuxChoice::Boson => "boson",
            AuxChoice::Fermion => "fermion",
            AuxChoice::TwoLevel => "twolevel",
        }
    }

    pub fn kind(&self, truncation: usize) -> AuxKind {
        match self {
            AuxChoice::Boson => AuxKind::Boson { truncation },
            AuxChoice::Fermion => AuxKind::Fermion,
            AuxChoice::TwoLevel => AuxKind::TwoLevel,
        }
    }
}

impl FromStr for AuxChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "boson" | "bosonic" => Ok(AuxChoice::Boson),
            "fermion" | "fermionic" => Ok(AuxChoice::Fermion),
            "twolevel" | "two_level" | "two-level" | "tls" => Ok(AuxChoice::TwoLevel),
            other => Err(Error::InvalidInput(format!(
                "unknown auxiliary kind '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetParams {
    pub n_spins: usize,
    pub h: f64,
    pub omega: f64,
    pub gamma: f64,
    /// Mean auxiliary damping rate; also fixes `g = sqrt(gamma kappa / 2N)`.
    pub kappa: f64,
    /// Per-auxiliary damping rates overriding `kappa` (coupling unchanged).
    pub kappas: Option<Vec<f64>>,
    pub aux: AuxChoice,
    /// Boson levels per mode.
    pub truncation: usize,
    /// Restrict bosons to total excitation `truncation - 1`.
    pub joint_cap: bool,
}

impl PresetParams {
    pub fn coupling(&self) -> f64 {
        (self.gamma * self.kappa / (2.0 * self.n_spins as f64)).sqrt()
    }

    /// Sets a parameter from its CLI name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("'{key}' expects a number, got '{v}'")))
        };
        let int = |v: &str| -> Result<usize> {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("'{key}' expects an integer, got '{v}'")))
        };
        match key {
            "n_spins" | "N" | "n" => self.n_spins = int(value)?,
            "h" => self.h = num(value)?,
            "omega" => self.omega = num(value)?,
            "gamma" => self.gamma = num(value)?,
            "kappa" => self.kappa = num(value)?,
            "kappas" => {
                self.kappas = if value.trim().is_empty() {
                    None
                } else {
                    Some(value.split(',').map(num).collect::<Result<_>>()?)
                }
            }
            "aux" => self.aux = value.parse()?,
            "truncation" => self.truncation = int(value)?,
            "joint_cap" => {
                self.joint_cap = value.trim().parse().map_err(|_| {
                    Error::InvalidInput(format!("'{key}' expects true or false, got '{value}'"))
                })?
            }
            other => return Err(Error::InvalidInput(format!("unknown parameter '{other}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        Some(match key {
            "n_spins" | "N" | "n" => self.n_spins as f64,
            "h" => self.h,
            "omega" => self.omega,
            "gamma" => self.gamma,
            "kappa" => self.kappa,
            "truncation" => self.truncation as f64,
            _ => return None,
        })
    }

    /// `(name, value)` pairs for provenance headers.
    pub fn describe(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("n_spins".to_string(), self.n_spins.to_string()),
            ("h".into(), self.h.to_string()),
            ("omega".into(), self.omega.to_string()),
            ("gamma".into(), self.gamma.to_string()),
            ("kappa".into(), self.kappa.to_string()),
            ("aux".into(), self.aux.as_str().into()),
            ("truncation".into(), self.truncation.to_string()),
            ("joint_cap".into(), self.joint_cap.to_string()),
        ];
        if let Some(k) = &self.kappas {
            out.push((
                "kappas".into(),
                k.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ));
        }
        out
    }
}

/// Damping rates `kbar - dk, kbar, kbar + dk, ...` for `n` modes, assigned
/// through `perm` (rate `k` goes to mode `perm[k]`).
pub fn kappa_imbalance(kbar: f64, dk: f64, n: usize, perm: &[usize]) -> Result<Vec<f64>> {
    if perm.len() != n || {
        let mut s = perm.to_vec();
        s.sort_unstable();
        s != (0..n).collect::<Vec<_>>()
    } {
        return Err(Error::InvalidInput(format!(
            "{perm:?} is not a permutation of 0..{n}"
        )));
    }
    let mid = (n as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; n];
    for (k, &mode) in perm.iter().enumerate() {
        out[mode] = kbar + dk * (k as f64 - mid);
    }
    Ok(out)
}

/// Spin Hamiltonian of a preset.
pub fn spin_hamiltonian(id: PresetId, sys: &SpinSystem, h: f64) -> Operator {
    let s = collective_spin_ops(sys);
    let n = sys.n_spins() as f64;
    match id {
        PresetId::D2Minimal | PresetId::U1Z2 => s.sz.matmul(&s.sz).scale_re(h / n),
        PresetId::Tetra => {
            let q = &s.s_plus.pow(2) + &s.s_minus.pow(2);
            q.anticommutator(&s.sz)
                .scale_re(h / (n * n))
                .hermitian_part()
        }
        PresetId::TetraAxes => {
            let mut acc = Operator::zeros(sys.dim());
            for a in tetrahedral_axes() {
                acc = &acc + &s.along(a).pow(3);
            }
            acc.scale_re(h / (n * n)).hermitian_part()
        }
        PresetId::Octa => {
            let acc = &(&s.sx.pow(4) + &s.sy.pow(4)) + &s.sz.pow(4);
            acc.scale_re(h / (n / 2.0).powi(3)).hermitian_part()
        }
        PresetId::Icosa => {
            let mut acc = Operator::zeros(sys.dim());
            for a in icosahedral_axes() {
                acc = &acc + &s.along(a).pow(6);
            }
            acc.scale_re(h / (n / 2.0).powi(5)).hermitian_part()
        }
    }
}

/// Spin coupling operators of a preset, in listed order.
pub fn jump_set(id: PresetId, sys: &SpinSystem) -> Vec<Operator> {
    let s = collective_spin_ops(sys);
    match id {
        PresetId::D2Minimal => vec![s.sx, s.sy],
        PresetId::U1Z2 => vec![s.s_minus, s.s_plus],
        PresetId::Tetra | PresetId::Octa | PresetId::Icosa => vec![s.sx, s.sy, s.sz],
        PresetId::TetraAxes => tetrahedral_axes().iter().map(|&a| s.along(a)).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct PresetModel {
    pub id: PresetId,
    pub params: PresetParams,
    pub model: EmbeddingModel,
    pub group: SymmetryGroup,
    pub closure: ClosureReport,
    /// Largest `||u H u† - H||_HS` over the group.
    pub invariance_residual: f64,
}

impl PresetModel {
    pub fn sys(&self) -> &SpinSystem {
        self.model.sys()
    }
}

pub fn preset(id: PresetId, params: &PresetParams) -> Result<PresetModel> {
    let sys = SpinSystem::new(params.n_spins)?;
    for (name, v) in [("h", params.h), ("omega", params.omega)] {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("{name} must be finite")));
        }
    }
    for (name, v) in [("gamma", params.gamma), ("kappa", params.kappa)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let h_s = spin_hamiltonian(id, &sys, params.h);
    let jumps = jump_set(id, &sys);
    let k = jumps.len();
    let kappas = match &params.kappas {
        Some(v) if v.len() != k => {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: v.len(),
            })
        }
        Some(v) => v.clone(),
        None => vec![params.kappa; k],
    };
    let g = params.coupling();
    let kind = params.aux.kind(params.truncation);
    let aux = kappas
        .iter()
        .map(|&kap| AuxSpec::new(kind, params.omega, kap, g))
        .collect::<Result<Vec<_>>>()?;
    let cap = (params.joint_cap && params.aux == AuxChoice::Boson)
        .then(|| params.truncation.saturating_sub(1));
    let model = EmbeddingModel::new(sys, h_s.clone(), jumps, aux)?.with_excitation_cap(cap);

    let group = generate_group(&sys, id.group())?;
    let closure = check_closure(&group, model.couplings());
    if !closure.ok {
        return Err(Error::Symmetry(format!(
            "{id}: jump set is not closed under {}",
            id.group()
        )));
    }
    let scale = h_s.hs_norm().max(1.0);
    let invariance_residual = group
        .all_elements()
        .map(|e| h_s.conjugate_by(&e.u).hs_distance(&h_s))
        .fold(0.0, f64::max);
    if invariance_residual > 1e-9 * scale {
        return Err(Error::Symmetry(format!(
            "{id}: Hamiltonian not invariant under {} (residual {invariance_residual:.2e})",
            id.group()
        )));
    }
    Ok(PresetModel {
        id,
        params: params.clone(),
        model,
        group,
        closure,
        invariance_residual,
    })
}

pub fn default_preset(id: PresetId) -> Result<PresetModel> {
    preset(id, &id.defaults())
}

/// Spin-only Lindbladian of the large-damping limit: each coupling operator
/// acts as a jump with prefactor `g² / κ` (`γ/2N` for the standard coupling).
pub fn lindblad_limit_generator(p: &PresetModel) -> Result<SuperOperator> {
    let jumps: Vec<(Operator, f64)> = p
        .model
        .couplings()
        .iter()
        .zip(p.model.aux())
        .map(|(l, a)| (l.clone(), a.g * a.g / a.kappa))
        .collect();
    lindblad_superop(p.model.h_s(), &jumps)
}

/// Filtered coupling `Lbar = ∫_0^∞ C(t) e^{-iHt} L e^{iHt} dt` in closed form:
/// `Lbar_ab = L_ab g² / (κ + i(ω + E_a - E_b))` in the eigenbasis of `h`.
pub fn redfield_filtered_jump(h: &Operator, l: &Operator, aux: &AuxSpec) -> Result<Operator> {
    filtered_jump_with(h, l, |de| {
        aux.g * aux.g / C64::new(aux.kappa, aux.omega + de)
    })
}

/// Same integral evaluated numerically, element by element: double-exponential
/// quadrature on panels no longer than one decay length or half an
/// oscillation period, truncated at `t = 40/κ` where the tail is below
/// `e^{-40}` of the total.
pub fn redfield_filtered_jump_quadrature(
    h: &Operator,
    l: &Operator,
    aux: &AuxSpec,
    tol: f64,
) -> Result<Operator> {
    let kappa = aux.kappa;
    let t_max = 40.0 / kappa;
    let mut worst: f64 = 0.0;
    let out = filtered_jump_with(h, l, |de| {
        let freq = (aux.omega + de).abs();
        let panels = (40.0 + t_max * freq / PI).ceil() as usize;
        let width = t_max / panels as f64;
        let mut total = ZERO;
        for k in 0..panels {
            let (a, b) = (k as f64 * width, (k + 1) as f64 * width);
            let f = |t: f64| {
                correlation_function(aux, t).unwrap_or(ZERO) * C64::from_polar(1.0, -de * t)
            };
            let re = quadrature::double_exponential::integrate(|t| f(t).re, a, b, tol);
            let im = quadrature::double_exponential::integrate(|t| f(t).im, a, b, tol);
            worst = worst.max(re.error_estimate).max(im.error_estimate);
            total += C64::new(re.integral, im.integral);
        }
        total
    })?;
    let scale = aux.g * aux.g / kappa;
    if worst > 1e3 * tol * scale.max(1.0) {
        return Err(Error::Solver(format!(
            "quadrature error estimate {worst:.2e} above target"
        )));
    }
    Ok(out)
}

fn filtered_jump_with(
    h: &Operator,
    l: &Operator,
    mut kernel: impl FnMut(f64) -> C64,
) -> Result<Operator> {
    let (e, v) = h.eigh()?;
    let d = h.dim();
    let vop = Operator::new(v)?;
    let le = l.conjugate_by(&vop.dagger());
    let filtered = Operator::from_fn(d, |a, b| le.get(a, b) * kernel(e[a] - e[b]));
    Ok(filtered.conjugate_by(&vop))
}

/// Second-order reduced generator
/// `-i[H,·] + Σ (Lbar ρ L† - L† Lbar ρ + L ρ Lbar† - ρ Lbar† L)`.
/// Not completely positive in general.
pub fn redfield_generator(p: &PresetModel) -> Result<SuperOperator> {
    let h = p.model.h_s();
    let d = h.dim();
    let id = Operator::identity(d);
    let i = C64::new(0.0, 1.0);
    let mut terms = vec![(h.clone(), id.clone(), -i), (id.clone(), h.clone(), i)];
    for (l, aux) in p.model.couplings().iter().zip(p.model.aux()) {
        let lb = redfield_filtered_jump(h, l, aux)?;
        let ld = l.dagger();
        let lbd = lb.dagger();
        let one = C64::new(1.0, 0.0);
        terms.push((lb.clone(), ld.clone(), one));
        terms.push((ld.matmul(&lb), id.clone(), -one));
        terms.push((l.clone(), lbd.clone(), one));
        terms.push((id.clone(), lbd.matmul(l), -one));
    }
    SuperOperator::from_dense_terms(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::rodrigues;
    use crate::steady::{steady_state, steady_state_with, SteadyOptions};

    #[test]
    fn presets_build_with_guards() {
        for id in PresetId::ALL {
            let p = default_preset(id).unwrap();
            assert!(p.closure.ok, "{id}");
            assert!(p.invariance_residual < 1e-9, "{id}");
        }
    }

    #[test]
    fn preset_ids_round_trip() {
        for id in PresetId::ALL {
            assert_eq!(id.as_str().parse::<PresetId>().unwrap(), id);
        }
        assert!("cube".parse::<PresetId>().is_err());
    }

    #[test]
    fn d2_closure_flips_sy() {
        let p = default_preset(PresetId::D2Minimal).unwrap();
        let x = p.group.find(&rodrigues([1.0, 0.0, 0.0], PI)).unwrap();
        assert_eq!(p.closure.permutation(x), vec![0, 1]);
        assert!(p.closure.table[x][0].phase.abs() < 1e-9);
        assert!((p.closure.table[x][1].phase.abs() - PI).abs() < 1e-9);
    }

    #[test]
    fn u1z2_closure_swaps() {
        let p = default_preset(PresetId::U1Z2).unwrap();
        let x = p.group.find(&rodrigues([1.0, 0.0, 0.0], PI)).unwrap();
        assert_eq!(p.closure.permutation(x), vec![1, 0]);
    }

    #[test]
    fn icosa_hamiltonian_invariant_and_nontrivial() {
        let p = default_preset(PresetId::Icosa).unwrap();
        assert_eq!(p.group.order(), 60);
        assert!(p.invariance_residual < 1e-9);
        // Not proportional to the identity, so the symmetry is not vacuous.
        let h = p.model.h_s();
        let tr = h.trace().re / h.dim() as f64;
        assert!(h.hs_distance(&Operator::identity(h.dim()).scale_re(tr)) > 1e-3);
    }

    #[test]
    fn wrong_group_is_rejected() {
        // The cubic Hamiltonian is not invariant under a quarter turn.
        let sys = SpinSystem::new(4).unwrap();
        let h = spin_hamiltonian(PresetId::Tetra, &sys, 1.0);
        let g = generate_group(&sys, GroupName::O).unwrap();
        let worst = g
            .elements
            .iter()
            .map(|e| h.conjugate_by(&e.u).hs_distance(&h))
            .fold(0.0, f64::max);
        assert!(worst > 1e-3);
    }

    #[test]
    fn params_set_and_validate() {
        let mut p = PresetId::D2Minimal.defaults();
        p.set("kappa", "3.5").unwrap();
        p.set("aux", "fermion").unwrap();
        p.set("kappas", "1,2").unwrap();
        assert_eq!(p.kappa, 3.5);
        assert_eq!(p.aux, AuxChoice::Fermion);
        assert_eq!(p.kappas, Some(vec![1.0, 2.0]));
        assert!(p.set("kappa", "x").is_err());
        assert!(p.set("bogus", "1").is_err());
        p.set("kappas", "1,2,3").unwrap();
        assert!(preset(PresetId::D2Minimal, &p).is_err());
        let mut q = PresetId::Octa.defaults();
        q.gamma = -1.0;
        assert!(preset(PresetId::Octa, &q).is_err());
    }

    #[test]
    fn imbalance_assignment() {
        assert_eq!(
            kappa_imbalance(1.0, 0.1, 3, &[0, 1, 2]).unwrap(),
            vec![0.9, 1.0, 1.1]
        );
        assert_eq!(
            kappa_imbalance(1.0, 0.1, 3, &[2, 0, 1]).unwrap(),
            vec![1.0, 1.1, 0.9]
        );
        assert!(kappa_imbalance(1.0, 0.1, 3, &[0, 0, 1]).is_err());
    }

    #[test]
    fn lindblad_limits_are_maximally_mixed() {
        for id in [PresetId::D2Minimal, PresetId::U1Z2, PresetId::Tetra] {
            let p = default_preset(id).unwrap();
            let l = lindblad_limit_generator(&p).unwrap();
            assert_eq!(l.dim(), p.sys().dim());
            let rep = steady_state(&l).unwrap();
            assert_eq!(rep.nullity, 1, "{id}");
            assert!(rep.rho_ss.hs_distance(&p.sys().mms()) < 1e-10, "{id}");
        }
    }

    #[test]
    fn redfield_closed_form_matches_quadrature() {
        for kappa in [0.5, 10.0, 1e6] {
            let mut params = PresetId::D2Minimal.defaults();
            params.kappa = kappa;
            let p = preset(PresetId::D2Minimal, &params).unwrap();
            for (l, a) in p.model.couplings().iter().zip(p.model.aux()) {
                let closed = redfield_filtered_jump(p.model.h_s(), l, a).unwrap();
                let quad = redfield_filtered_jump_quadrature(p.model.h_s(), l, a, 1e-13).unwrap();
                let scale = a.g * a.g / a.kappa;
                assert!(
                    closed.hs_distance(&quad) < 1e-9 * scale.max(1.0),
                    "kappa={kappa}"
                );
            }
        }
    }

    #[test]
    fn redfield_limits() {
        let mut params = PresetId::D2Minimal.defaults();
        let opts = SteadyOptions {
            negativity_floor: 1e-6,
            ..Default::default()
        };
        params.kappa = 1e6;
        let p = preset(PresetId::D2Minimal, &params).unwrap();
        let far = steady_state_with(&redfield_generator(&p).unwrap(), &opts).unwrap();
        assert!(far.rho_ss.hs_distance(&p.sys().mms()) < 1e-4);
        params.kappa = 10.0;
        let p = preset(PresetId::D2Minimal, &params).unwrap();
        let near = steady_state_with(&redfield_generator(&p).unwrap(), &opts).unwrap();
        assert!(near.rho_ss.hs_distance(&p.sys().mms()) > 1e-3);
    }

    #[test]
    fn redfield_reduces_to_lindblad_for_large_kappa() {
        let mut params = PresetId::D2Minimal.defaults();
        params.kappa = 1e9;
        let p = preset(PresetId::D2Minimal, &params).unwrap();
        let r = redfield_generator(&p).unwrap().to_dense_matrix();
        let l = lindblad_limit_generator(&p).unwrap().to_dense_matrix();
        let diff = (&r - &l).norm_max();
        assert!(diff < 1e-6 * l.norm_max(), "{diff}");
    }
}
