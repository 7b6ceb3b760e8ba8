//! Markovian embeddings: a collective spin coupled to damped auxiliary
//! modes.
//!
//! Tensor order is spin ⊗ aux_1 ⊗ ... ⊗ aux_NE with the first auxiliary as
//! the most significant digit of the auxiliary index.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::operator::{Operator, ONE, ZERO};
use crate::sparse::Csr;
use crate::spin::SpinSystem;
use crate::superop::{lindblad_superop, EmbeddingStructure, SandwichForm, Storage, SuperOperator};

/// Default cap on the composite Hilbert dimension.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Largest auxiliary tensor-product box enumerated before a joint cap is
/// applied.
const MAX_AUX_BOX: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxKind {
    /// Harmonic mode truncated to `truncation` levels.
    Boson {
        truncation: usize,
    },
    /// Fermionic mode, Jordan–Wigner ordered after earlier fermions.
    Fermion,
    TwoLevel,
}

impl AuxKind {
    pub fn local_dim(&self) -> usize {
        match self {
            AuxKind::Boson { truncation } => *truncation,
            AuxKind::Fermion | AuxKind::TwoLevel => 2,
        }
    }

    pub fn is_boson(&self) -> bool {
        matches!(self, AuxKind::Boson { .. })
    }
}

/// One damped auxiliary system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxSpec {
    pub kind: AuxKind,
    pub omega: f64,
    pub kappa: f64,
    pub g: f64,
}

impl AuxSpec {
    pub fn new(kind: AuxKind, omega: f64, kappa: f64, g: f64) -> Result<Self> {
        let spec = Self {
            kind,
            omega,
            kappa,
            g,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        if !self.omega.is_finite() || !self.g.is_finite() {
            return Err(Error::InvalidInput("omega and g must be finite".into()));
        }
        if let AuxKind::Boson { truncation } = self.kind {
            if truncation < 2 {
                return Err(Error::InvalidInput(format!(
                    "boson truncation must be >= 2, got {truncation}"
                )));
            }
        }
        Ok(())
    }

    /// `int_0^inf alpha(t) dt = g^2 / (kappa + i omega)`.
    pub fn bath_integral(&self) -> C64 {
        C64::new(self.g * self.g, 0.0) / C64::new(self.kappa, self.omega)
    }
}

/// Residual-bath correlation `alpha(t) = g^2 exp(-i omega t - kappa t)`.
pub fn correlation_function(aux: &AuxSpec, t: f64) -> Result<C64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "correlation time must be >= 0, got {t}"
        )));
    }
    Ok(C64::from_polar(
        aux.g * aux.g * (-aux.kappa * t).exp(),
        -aux.omega * t,
    ))
}

/// Fock space of the auxiliaries, optionally restricted to total
/// excitation number at most `cap`.
#[derive(Debug, Clone)]
pub struct AuxSpace {
    specs: Vec<AuxSpec>,
    states: Vec<Vec<usize>>,
    lowering: Vec<Csr>,
    cap: Option<usize>,
}

impl AuxSpace {
    pub fn new(aux: &[AuxSpec], cap: Option<usize>) -> Result<Self> {
        if aux.is_empty() {
            return Err(Error::InvalidInput(
                "at least one auxiliary system required".into(),
            ));
        }
        for a in aux {
            a.validate()?;
        }
        let dims: Vec<usize> = aux.iter().map(|a| a.kind.local_dim()).collect();
        let full = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .unwrap_or(usize::MAX);
        if full > MAX_AUX_BOX {
            return Err(Error::DimensionCap {
                dim: full,
                cap: MAX_AUX_BOX,
                hint: "lower the boson truncation".into(),
            });
        }
        let occupation = |mut idx: usize| -> Vec<usize> {
            let mut occ = vec![0; dims.len()];
            for (k, &d) in dims.iter().enumerate().rev() {
                occ[k] = idx % d;
                idx /= d;
            }
            occ
        };
        let mut keep = Vec::new();
        let mut states = Vec::new();
        for idx in 0..full {
            let occ = occupation(idx);
            if cap.map_or(true, |c| occ.iter().sum::<usize>() <= c) {
                keep.push(idx);
                states.push(occ);
            }
        }

        let mut lowering = Vec::with_capacity(aux.len());
        for (mu, spec) in aux.iter().enumerate() {
            let mut op = Csr::identity(1);
            for (nu, other) in aux.iter().enumerate() {
                let local = if nu == mu {
                    local_lowering(spec.kind)
                } else if nu < mu && spec.kind == AuxKind::Fermion && other.kind == AuxKind::Fermion
                {
                    // Parity string (-1)^n on earlier fermions.
                    Csr::diagonal(&[ONE, -ONE])
                } else {
                    Csr::identity(dims[nu])
                };
                op = op.kron(&local);
            }
            lowering.push(if cap.is_some() {
                op.restrict(&keep)
            } else {
                op
            });
        }
        Ok(Self {
            specs: aux.to_vec(),
            states,
            lowering,
            cap,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn specs(&self) -> &[AuxSpec] {
        &self.specs
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    pub fn lowering(&self) -> &[Csr] {
        &self.lowering
    }

    pub fn occupation(&self, idx: usize) -> &[usize] {
        &self.states[idx]
    }

    pub fn excitation(&self, idx: usize) -> usize {
        self.states[idx].iter().sum()
    }

    /// Index of the all-empty state.
    pub fn vacuum(&self) -> usize {
        0
    }

    pub fn index_of(&self, occ: &[usize]) -> Option<usize> {
        self.states.iter().position(|s| s == occ)
    }

    /// Local dimension of every auxiliary.
    pub fn local_dims(&self) -> Vec<usize> {
        self.specs.iter().map(|a| a.kind.local_dim()).collect()
    }
}

fn local_lowering(kind: AuxKind) -> Csr {
    let t = kind.local_dim();
    let mut trip = Vec::with_capacity(t - 1);
    for n in 1..t {
        trip.push((n - 1, n, C64::new((n as f64).sqrt(), 0.0)));
    }
    Csr::from_triplets(t, t, trip)
}

/// Dense lowering operators on the full auxiliary tensor product.
pub fn aux_lowering_ops(aux: &[AuxSpec]) -> Result<Vec<Operator>> {
    Ok(AuxSpace::new(aux, None)?
        .lowering
        .iter()
        .map(Csr::to_dense)
        .collect())
}

/// Spin coupled linearly to damped auxiliary systems.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    sys: SpinSystem,
    h_s: Operator,
    couplings: Vec<Operator>,
    aux: Vec<AuxSpec>,
    excitation_cap: Option<usize>,
    dim_cap: usize,
}

impl EmbeddingModel {
    pub fn new(
        sys: SpinSystem,
        h_s: Operator,
        couplings: Vec<Operator>,
        aux: Vec<AuxSpec>,
    ) -> Result<Self> {
        if couplings.is_empty() || couplings.len() != aux.len() {
            return Err(Error::InvalidInput(format!(
                "need one auxiliary per coupling operator ({} couplings, {} auxiliaries)",
                couplings.len(),
                aux.len()
            )));
        }
        for op in std::iter::once(&h_s).chain(&couplings) {
            if op.dim() != sys.dim() {
                return Err(Error::DimensionMismatch {
                    expected: sys.dim(),
                    found: op.dim(),
                });
            }
        }
        h_s.require_hermitian()?;
        for a in &aux {
            a.validate()?;
        }
        Ok(Self {
            sys,
            h_s,
            couplings,
            aux,
            excitation_cap: None,
            dim_cap: DEFAULT_DIM_CAP,
        })
    }

    /// Restricts the auxiliaries to total excitation number `<= cap`.
    pub fn with_excitation_cap(mut self, cap: Option<usize>) -> Self {
        self.excitation_cap = cap;
        self
    }

    pub fn with_dim_cap(mut self, cap: usize) -> Self {
        self.dim_cap = cap;
        self
    }

    /// Replaces the auxiliary list (same length).
    pub fn with_aux(mut self, aux: Vec<AuxSpec>) -> Result<Self> {
        if aux.len() != self.couplings.len() {
            return Err(Error::DimensionMismatch {
                expected: self.couplings.len(),
                found: aux.len(),
            });
        }
        for a in &aux {
            a.validate()?;
        }
        self.aux = aux;
        Ok(self)
    }

    /// Sets every boson truncation to `t` (and the joint cap to `t - 1`
    /// when a cap is in use).
    pub fn with_boson_truncation(self, t: usize) -> Result<Self> {
        let aux = self
            .aux
            .iter()
            .map(|a| match a.kind {
                AuxKind::Boson { .. } => AuxSpec {
                    kind: AuxKind::Boson { truncation: t },
                    ..*a
                },
                _ => *a,
            })
            .collect();
        let capped = self.excitation_cap.is_some();
        let out = self.with_aux(aux)?;
        Ok(if capped {
            out.with_excitation_cap(Some(t.saturating_sub(1)))
        } else {
            out
        })
    }

    pub fn sys(&self) -> &SpinSystem {
        &self.sys
    }

    pub fn h_s(&self) -> &Operator {
        &self.h_s
    }

    pub fn couplings(&self) -> &[Operator] {
        &self.couplings
    }

    pub fn aux(&self) -> &[AuxSpec] {
        &self.aux
    }

    pub fn excitation_cap(&self) -> Option<usize> {
        self.excitation_cap
    }

    pub fn dim_cap(&self) -> usize {
        self.dim_cap
    }

    pub fn has_bosons(&self) -> bool {
        self.aux.iter().any(|a| a.kind.is_boson())
    }

    pub fn aux_space(&self) -> Result<AuxSpace> {
        AuxSpace::new(&self.aux, self.excitation_cap)
    }

    pub fn aux_dim(&self) -> Result<usize> {
        Ok(self.aux_space()?.dim())
    }

    pub fn total_dim(&self) -> Result<usize> {
        Ok(self.sys.dim() * self.aux_dim()?)
    }

    /// Per-auxiliary local dimensions.
    pub fn truncation(&self) -> Vec<usize> {
        self.aux.iter().map(|a| a.kind.local_dim()).collect()
    }
}

/// Composite generator with `H = H_S + sum w A^†A + sum g (L A^† + L^† A)`
/// and dissipators `kappa D[A]`, stored as chosen automatically.
pub fn build_embedding(model: &EmbeddingModel) -> Result<SuperOperator> {
    build_embedding_with(model, None)
}

/// As [`build_embedding`] with an explicit storage choice.
pub fn build_embedding_with(
    model: &EmbeddingModel,
    storage: Option<Storage>,
) -> Result<SuperOperator> {
    let space = model.aux_space()?;
    let ds = model.sys.dim();
    let da = space.dim();
    let d = ds * da;
    if d > model.dim_cap {
        return Err(Error::DimensionCap {
            dim: d,
            cap: model.dim_cap,
            hint: "lower the boson truncation or set an excitation cap".into(),
        });
    }
    let is = Csr::identity(ds);
    let ia = Csr::identity(da);
    let mut h = Csr::from_dense(&model.h_s).kron(&ia);
    let mut jumps = Vec::with_capacity(model.aux.len());
    let mut h_aux = Csr::zeros(da, da);
    for ((l, spec), a) in model.couplings.iter().zip(&model.aux).zip(space.lowering()) {
        let ad = a.adjoint();
        let n = ad.matmul(a);
        h_aux = h_aux.add(&n.scale(C64::new(spec.omega, 0.0)));
        let lc = Csr::from_dense(l);
        let coupling = lc.kron(&ad).add(&lc.adjoint().kron(a));
        h = h.add(&coupling.scale(C64::new(spec.g, 0.0)));
        jumps.push((is.kron(a), spec.kappa));
    }
    h = h.add(&is.kron(&h_aux));
    let form = SandwichForm::lindblad(&h, &jumps);
    let storage = storage.unwrap_or_else(|| Storage::auto(&form));
    let structure = embedding_structure(model, &space, &h_aux)?;
    Ok(SuperOperator::from_form(form, storage).with_embedding(structure))
}

fn embedding_structure(
    model: &EmbeddingModel,
    space: &AuxSpace,
    h_aux: &Csr,
) -> Result<EmbeddingStructure> {
    let mut h_eff = model.h_s.clone();
    let mut spin_jumps = Vec::new();
    for (l, spec) in model.couplings.iter().zip(&model.aux) {
        let c = spec.bath_integral();
        h_eff = &h_eff + &l.dagger().matmul(l).scale_re(c.im);
        spin_jumps.push((l.clone(), c.re));
    }
    let spin = lindblad_superop(&h_eff.hermitian_part(), &spin_jumps)?;
    let aux_jumps: Vec<(Csr, f64)> = space
        .lowering()
        .iter()
        .cloned()
        .zip(model.aux.iter().map(|a| a.kappa))
        .collect();
    let aux_gen = SandwichForm::lindblad(h_aux, &aux_jumps).assemble_csr();
    let da = space.dim();
    let aux_excitations = (0..da * da)
        .map(|q| space.excitation(q % da) + space.excitation(q / da))
        .collect();
    Ok(EmbeddingStructure {
        spin_dim: model.sys.dim(),
        aux_dim: da,
        spin_generator: spin.to_dense_matrix(),
        aux_generator: aux_gen,
        aux_excitations,
        vacuum: space.vacuum() * (da + 1),
    })
}

/// `Tr_aux` for a state on spin ⊗ aux with the given factor dimensions.
pub fn partial_trace(rho_total: &Operator, ds: usize, da: usize) -> Result<Operator> {
    if rho_total.dim() != ds * da {
        return Err(Error::DimensionMismatch {
            expected: ds * da,
            found: rho_total.dim(),
        });
    }
    Ok(Operator::from_fn(ds, |s, t| {
        (0..da)
            .map(|a| rho_total.get(s * da + a, t * da + a))
            .fold(ZERO, |x, y| x + y)
    }))
}

/// Reduced spin state of a composite state of `model`.
pub fn partial_trace_aux(rho_total: &Operator, model: &EmbeddingModel) -> Result<Operator> {
    partial_trace(rho_total, model.sys.dim(), model.aux_dim()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::collective_spin_ops;

    fn anticomm(a: &Operator, b: &Operator) -> Operator {
        a.anticommutator(b)
    }

    #[test]
    fn fermion_jordan_wigner() {
        let f = AuxSpec::new(AuxKind::Fermion, 1.0, 1.0, 0.1).unwrap();
        let ops = aux_lowering_ops(&[f, f]).unwrap();
        let sz = Operator::real_diagonal(&[1.0, -1.0]);
        let sm = Operator::from_fn(2, |i, j| if i == 0 && j == 1 { ONE } else { ZERO });
        assert_eq!(ops[1].hs_distance(&sz.kron(&sm)), 0.0);
        assert_eq!(ops[0].hs_distance(&sm.kron(&Operator::identity(2))), 0.0);
        for mu in 0..2 {
            for nu in 0..2 {
                let ac = anticomm(&ops[mu], &ops[nu].dagger());
                let want = if mu == nu {
                    Operator::identity(4)
                } else {
                    Operator::zeros(4)
                };
                assert_eq!(ac.hs_distance(&want), 0.0);
                assert_eq!(anticomm(&ops[mu], &ops[nu]).max_abs(), 0.0);
            }
        }
    }

    #[test]
    fn boson_shift_matrix() {
        let b = AuxSpec::new(AuxKind::Boson { truncation: 4 }, 1.0, 1.0, 0.1).unwrap();
        let a = &aux_lowering_ops(&[b]).unwrap()[0];
        for n in 1..4 {
            assert_eq!(a.get(n - 1, n).re, (n as f64).sqrt());
        }
        assert_eq!(a.hs_norm().powi(2).round(), 6.0);
        let comm = a.commutator(&a.dagger());
        for k in 0..3 {
            assert!((comm.get(k, k).re - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn two_level_auxiliaries_commute() {
        let t = AuxSpec::new(AuxKind::TwoLevel, 1.0, 1.0, 0.1).unwrap();
        let ops = aux_lowering_ops(&[t, t]).unwrap();
        assert_eq!(ops[0].commutator(&ops[1]).max_abs(), 0.0);
        assert_eq!(ops[0].commutator(&ops[1].dagger()).max_abs(), 0.0);
    }

    #[test]
    fn excitation_cap_restricts_basis() {
        let b = AuxSpec::new(AuxKind::Boson { truncation: 4 }, 1.0, 1.0, 0.1).unwrap();
        let space = AuxSpace::new(&[b, b, b], Some(3)).unwrap();
        assert_eq!(space.dim(), 20);
        assert_eq!(space.occupation(0), &[0, 0, 0]);
        assert!((0..space.dim()).all(|k| space.excitation(k) <= 3));
    }

    #[test]
    fn validation() {
        assert!(AuxSpec::new(AuxKind::TwoLevel, 1.0, 0.0, 1.0).is_err());
        assert!(AuxSpec::new(AuxKind::Boson { truncation: 1 }, 1.0, 1.0, 1.0).is_err());
        assert!(correlation_function(
            &AuxSpec::new(AuxKind::TwoLevel, 1.0, 1.0, 1.0).unwrap(),
            -1.0
        )
        .is_err());
        let sys = SpinSystem::new(2).unwrap();
        let s = collective_spin_ops(&sys);
        let t = AuxSpec::new(AuxKind::TwoLevel, 1.0, 1.0, 1.0).unwrap();
        assert!(EmbeddingModel::new(sys, s.sz.clone(), vec![s.sx.clone()], vec![t, t]).is_err());
        assert!(EmbeddingModel::new(sys, s.s_plus.clone(), vec![s.sx.clone()], vec![t]).is_err());
    }

    #[test]
    fn dimension_cap_enforced() {
        let sys = SpinSystem::new(4).unwrap();
        let s = collective_spin_ops(&sys);
        let b = AuxSpec::new(AuxKind::Boson { truncation: 30 }, 1.0, 1.0, 0.1).unwrap();
        let m = EmbeddingModel::new(
            sys,
            s.sz.clone(),
            vec![s.sx.clone(), s.sy.clone()],
            vec![b, b],
        )
        .unwrap();
        match build_embedding(&m) {
            Err(Error::DimensionCap { dim, cap, .. }) => assert_eq!((dim, cap), (4500, 4096)),
            other => panic!("expected a dimension-cap error, got {other:?}"),
        }
    }

    #[test]
    fn correlation_values() {
        let a = AuxSpec::new(AuxKind::TwoLevel, 2.0, 3.0, 0.5).unwrap();
        assert!((correlation_function(&a, 0.0).unwrap() - C64::new(0.25, 0.0)).norm() < 1e-16);
        let t = 0.3;
        let want = 0.25 * (C64::new(-3.0 * t, -2.0 * t)).exp();
        assert!((correlation_function(&a, t).unwrap() - want).norm() < 1e-15);
    }

    #[test]
    fn partial_trace_of_products() {
        let rs = Operator::from_fn(3, |i, j| C64::new((i + 2 * j) as f64, i as f64 - j as f64));
        let ra = Operator::from_fn(4, |i, j| {
            if i == j {
                C64::new(0.25, 0.0)
            } else {
                C64::new(0.01, 0.02)
            }
        });
        let r = partial_trace(&rs.kron(&ra), 3, 4).unwrap();
        assert!(r.hs_distance(&rs) < 1e-14);
        assert!(partial_trace(&rs, 2, 2).is_err());
    }

    #[test]
    fn purification_traces_to_mms() {
        let d = 3;
        let mut psi = vec![ZERO; d * d];
        for k in 0..d {
            psi[k * d + k] = C64::new(1.0 / (d as f64).sqrt(), 0.0);
        }
        let rho = Operator::outer(&psi, &psi).unwrap();
        let r = partial_trace(&rho, d, d).unwrap();
        assert!(r.hs_distance(&Operator::identity(d).scale_re(1.0 / d as f64)) < 1e-15);
    }

    #[test]
    fn embedding_is_trace_preserving() {
        let sys = SpinSystem::new(3).unwrap();
        let s = collective_spin_ops(&sys);
        let f = AuxSpec::new(AuxKind::Fermion, 1.0, 0.7, 0.3).unwrap();
        let b = AuxSpec::new(AuxKind::Boson { truncation: 3 }, 0.5, 0.4, 0.2).unwrap();
        let m = EmbeddingModel::new(
            sys,
            s.sz.matmul(&s.sz),
            vec![s.sx.clone(), s.s_minus.clone()],
            vec![f, b],
        )
        .unwrap();
        let l = build_embedding(&m).unwrap();
        assert_eq!(l.dim(), 24);
        assert!(l.trace_functional_residual() < 1e-12);
        let st = l.embedding().unwrap();
        assert_eq!((st.spin_dim, st.aux_dim), (4, 6));
    }
}
