//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 2 7`.

use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symss::groups::{check_weak_symmetry, embedding_symmetry_unitary};
use symss::liouville::build_embedding_with;
use symss::metrics::{
    dicke_populations, equatorial_qfi, hs_distance_mms, isotropic_qfi_check, multipole_norms,
    negativity, purity, qfi, symmetry_deviation,
};
use symss::models::{
    default_preset, jump_set, kappa_imbalance, preset, redfield_filtered_jump,
    redfield_filtered_jump_quadrature, redfield_generator, AuxChoice, PresetId, PresetModel,
    PresetParams,
};
use symss::nogo::verify_nogo;
use symss::steady::{
    evolve_oracle, random_state, solve_embedding, steady_state, steady_state_with,
    EmbeddedSteadyState, Method, SteadyOptions, TruncationPolicy,
};
use symss::{build_embedding, collective_spin_ops, Operator, SpinSystem, Storage};

const NOGO_N: [usize; 5] = [2, 3, 4, 5, 6];
const NOGO_INSTANCES: usize = 50;
const NOGO_TOL: f64 = 1e-10;

const LIMIT_FAR: f64 = 1e-2;
const LIMIT_NEAR_MIN: f64 = 1e-3;

const SLOPE_GAP: f64 = 0.5;

const NEG_PEAK_MIN: f64 = 1e-3;
const NEG_DROP: f64 = 10.0;

const STRUCT_TOL: f64 = 1e-8;
const EQ_SPREAD_TOL: f64 = 1e-6;

const MULTIPOLE_TOL: f64 = 1e-8;
const ISO_SPREAD_TOL: f64 = 1e-6;
const ISO_DIRECTIONS: usize = 50;
const MIXED_PURITY_MAX: f64 = 1.0 - 1e-3;
const MIXED_DISTANCE_MIN: f64 = 1e-3;

const ROBUST_SLOPE: f64 = 2.0;
const ROBUST_SLOPE_TOL: f64 = 0.15;

const ORACLE_TOL: f64 = 1e-7;
const ORACLE_CHUNK: f64 = 100.0;
const ORACLE_T_MAX: f64 = 10_000.0;
const PATH_TOL: f64 = 1e-8;

const INHERIT_TOL: f64 = 1e-8;
const WEAK_TOL: f64 = 1e-9;

const REDFIELD_FAR: f64 = 1e-4;
const REDFIELD_NEAR_MIN: f64 = 1e-3;
const QUADRATURE_TOL: f64 = 1e-9;

type Outcome = Result<(bool, String), symss::Error>;

fn with(id: PresetId, f: impl FnOnce(&mut PresetParams)) -> symss::Result<PresetModel> {
    let mut p = id.defaults();
    f(&mut p);
    preset(id, &p)
}

fn solve(p: &PresetModel, policy: TruncationPolicy) -> symss::Result<EmbeddedSteadyState> {
    solve_embedding(&p.model, policy, &SteadyOptions::default())
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn nogo() -> Outcome {
    let rep = verify_nogo(&NOGO_N, NOGO_INSTANCES, 2024)?;
    let worst = rep
        .instances
        .iter()
        .filter(|i| i.family.expects_uniqueness())
        .map(|i| i.distance_to_mms)
        .fold(0.0, f64::max);
    let fails = rep.failures().count();
    Ok((
        rep.passed() && worst < NOGO_TOL,
        format!(
            "{} instances, {fails} failures, max distance {worst:.1e}",
            rep.instances.len()
        ),
    ))
}

fn d2_distance(aux: AuxChoice, kappa: f64) -> symss::Result<(f64, Operator, SpinSystem)> {
    let p = with(PresetId::D2Minimal, |p| {
        p.aux = aux;
        p.kappa = kappa;
        p.truncation = 4;
    })?;
    let s = solve(&p, TruncationPolicy::default())?;
    Ok((hs_distance_mms(&s.rho_spin), s.rho_spin, p.sys().clone()))
}

fn lindblad_limit() -> Outcome {
    let omega = PresetId::D2Minimal.defaults().omega;
    let near: Vec<f64> = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|r| d2_distance(AuxChoice::TwoLevel, r * omega).map(|d| d.0))
        .collect::<symss::Result<_>>()?;
    let far = d2_distance(AuxChoice::TwoLevel, 1e3 * omega)?.0;
    let ok = far < LIMIT_FAR && far < near[3] && near.iter().all(|&d| d > LIMIT_NEAR_MIN);
    Ok((
        ok,
        format!("d(1,2,5,10) = {}, d(1e3) = {far:.3e}", fmt_list(&near)),
    ))
}

fn tail_exponents() -> Outcome {
    let omega = PresetId::D2Minimal.defaults().omega;
    let ratios = logspace(1e2, 1e3, 5);
    let mut slopes = Vec::new();
    for aux in [AuxChoice::Fermion, AuxChoice::Boson] {
        let d: Vec<f64> = ratios
            .iter()
            .map(|r| d2_distance(aux, r * omega).map(|d| d.0))
            .collect::<symss::Result<_>>()?;
        slopes.push(log_slope(&ratios, &d));
    }
    let gap = (slopes[0] - slopes[1]).abs();
    Ok((
        gap > SLOPE_GAP,
        format!(
            "fermion slope {:.3}, boson slope {:.3}",
            slopes[0], slopes[1]
        ),
    ))
}

fn entanglement() -> Outcome {
    let omega = PresetId::D2Minimal.defaults().omega;
    let neg = |r: f64| -> symss::Result<f64> {
        let (_, rho, sys) = d2_distance(AuxChoice::TwoLevel, r * omega)?;
        negativity(&rho, &sys, 2)
    };
    let grid = [1.0, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0];
    let values: Vec<f64> = grid.iter().map(|&r| neg(r)).collect::<symss::Result<_>>()?;
    let peak = values.iter().cloned().fold(0.0, f64::max);
    let far = neg(1e3)?;
    Ok((
        peak > NEG_PEAK_MIN && far * NEG_DROP < peak,
        format!("peak {peak:.3e} over kappa/omega in [1, 20], {far:.1e} at 1e3"),
    ))
}

fn u1_structure() -> Outcome {
    let base = PresetId::U1Z2.defaults();
    let mut ok = true;
    let mut notes = Vec::new();
    let mut f_perp = Vec::new();
    for kappa in [base.kappa, 1e3 * base.omega] {
        let p = with(PresetId::U1Z2, |p| p.kappa = kappa)?;
        let s = solve(&p, TruncationPolicy::default())?;
        let sys = p.sys();
        let (pops, off) = dicke_populations(&s.rho_spin);
        let asym = (0..pops.len())
            .map(|i| (pops[i] - pops[pops.len() - 1 - i]).abs())
            .fold(0.0, f64::max);
        let fz = qfi(&s.rho_spin, &collective_spin_ops(sys).sz)?;
        let (mean, spread) = equatorial_qfi(&s.rho_spin, sys, 64)?;
        let rel = if mean > 0.0 { spread / mean } else { 0.0 };
        ok &= s.converged
            && off < STRUCT_TOL
            && asym < STRUCT_TOL
            && fz < STRUCT_TOL
            && rel < EQ_SPREAD_TOL;
        notes.push(format!(
            "kappa={kappa}: off {off:.1e} asym {asym:.1e} F_z {fz:.1e} spread {rel:.1e}"
        ));
        f_perp.push(mean / sys.n_spins() as f64);
    }
    ok &= f_perp[0] > 1.0 && f_perp[1] < 1.0;
    Ok((
        ok,
        format!(
            "F_perp/N = {:.3} (small kappa), {:.2e} (1e3); {}",
            f_perp[0],
            f_perp[1],
            notes.join("; ")
        ),
    ))
}

fn anticoherence() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for id in [PresetId::Tetra, PresetId::Octa, PresetId::Icosa] {
        let p = default_preset(id)?;
        let s = solve(&p, TruncationPolicy::Fixed)?;
        let norms = multipole_norms(&s.rho_spin, p.sys());
        let rank = id.anticoherence_rank();
        let worst = norms[..rank].iter().cloned().fold(0.0, f64::max);
        let (mean, spread) = isotropic_qfi_check(&s.rho_spin, p.sys(), ISO_DIRECTIONS)?;
        ok &= worst < MULTIPOLE_TOL && spread / mean < ISO_SPREAD_TOL;
        notes.push(format!(
            "{id} max A_L(L<={rank}) {worst:.1e} iso spread {:.1e}",
            spread / mean
        ));
    }
    let p = with(PresetId::Tetra, |p| p.n_spins = 5)?;
    let s = solve(&p, TruncationPolicy::Fixed)?;
    let norms = multipole_norms(&s.rho_spin, p.sys());
    let worst = norms[..2].iter().cloned().fold(0.0, f64::max);
    let (pur, dist) = (purity(&s.rho_spin), hs_distance_mms(&s.rho_spin));
    ok &= worst < MULTIPOLE_TOL && pur < MIXED_PURITY_MAX && dist > MIXED_DISTANCE_MIN;
    notes.push(format!(
        "tetra N=5 max A_L(L<=2) {worst:.1e} purity {pur:.3} distance {dist:.3}"
    ));
    Ok((ok, notes.join("; ")))
}

fn robustness() -> Outcome {
    let ratios = logspace(1e-3, 1e-1, 6);
    let mut ok = true;
    let mut notes = Vec::new();
    for id in [PresetId::Tetra, PresetId::Octa, PresetId::Icosa] {
        let base = id.defaults();
        let k = jump_set(id, &SpinSystem::new(base.n_spins)?).len();
        let identity: Vec<usize> = (0..k).collect();
        let cyclic: Vec<usize> = (0..k).map(|i| (i + 1) % k).collect();
        let mut slopes = Vec::new();
        for perm in [identity, cyclic] {
            let mut dev = Vec::new();
            for &r in &ratios {
                let p = with(id, |p| {
                    p.kappas = kappa_imbalance(p.kappa, r * p.kappa, k, &perm).ok()
                })?;
                let s = solve(&p, TruncationPolicy::Fixed)?;
                dev.push(symmetry_deviation(&s.rho_spin, &p.group));
            }
            slopes.push(log_slope(&ratios, &dev));
        }
        ok &= slopes
            .iter()
            .all(|s| (s - ROBUST_SLOPE).abs() < ROBUST_SLOPE_TOL)
            && (slopes[0] - slopes[1]).abs() < ROBUST_SLOPE_TOL;
        notes.push(format!("{id} slopes {:.3}/{:.3}", slopes[0], slopes[1]));
    }
    Ok((ok, notes.join(", ")))
}

fn cross_validation() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for id in PresetId::ALL {
        let p = default_preset(id)?;
        let l = build_embedding(&p.model)?;
        let ss = steady_state(&l)?;
        let stepper = l.restored(Storage::Sparse);
        let mut worst: f64 = 0.0;
        let mut t_worst: f64 = 0.0;
        for _ in 0..3 {
            let mut rho = random_state(ss.rho_ss.dim(), &mut rng);
            let mut t = 0.0;
            let mut err = rho.hs_distance(&ss.rho_ss);
            while err >= ORACLE_TOL && t < ORACLE_T_MAX {
                rho = evolve_oracle(&stepper, &rho, ORACLE_CHUNK, f64::INFINITY)?;
                t += ORACLE_CHUNK;
                err = rho.hs_distance(&ss.rho_ss);
            }
            worst = worst.max(err);
            t_worst = t_worst.max(t);
        }
        ok &= worst < ORACLE_TOL;
        notes.push(format!("{id} oracle {worst:.1e} by t={t_worst}"));
    }
    let small = [
        with(PresetId::D2Minimal, |_| {})?,
        with(PresetId::U1Z2, |p| p.truncation = 3)?,
        with(PresetId::Tetra, |p| p.truncation = 2)?,
        with(PresetId::TetraAxes, |p| p.truncation = 2)?,
        with(PresetId::Octa, |p| p.truncation = 2)?,
        with(PresetId::Icosa, |p| p.truncation = 2)?,
    ];
    let mut path_worst: f64 = 0.0;
    for p in &small {
        let dense = steady_state(&build_embedding_with(&p.model, Some(Storage::Dense))?)?;
        let opts = SteadyOptions {
            method: Some(Method::SparseGmres),
            ..Default::default()
        };
        let sparse = steady_state_with(
            &build_embedding_with(&p.model, Some(Storage::Sparse))?,
            &opts,
        )?;
        path_worst = path_worst.max(dense.rho_ss.hs_distance(&sparse.rho_ss));
    }
    ok &= path_worst < PATH_TOL;
    notes.push(format!("dense vs sparse {path_worst:.1e}"));
    Ok((ok, notes.join(", ")))
}

fn inheritance() -> Outcome {
    let mut state_worst: f64 = 0.0;
    let mut weak_worst: f64 = 0.0;
    for id in PresetId::ALL {
        let p = default_preset(id)?;
        let l = build_embedding(&p.model)?;
        let ss = steady_state(&l)?;
        let rho = symss::liouville::partial_trace_aux(&ss.rho_ss, &p.model)?;
        for e in p.group.all_elements() {
            state_worst = state_worst.max(e.act(&rho).hs_distance(&rho));
            let u = embedding_symmetry_unitary(&p.model, e, &p.closure)?;
            weak_worst = weak_worst.max(check_weak_symmetry(&l, &u)?);
        }
    }
    Ok((
        state_worst < INHERIT_TOL && weak_worst < WEAK_TOL,
        format!(
            "max ||u rho u+ - rho|| {state_worst:.1e}, max weak-symmetry residual {weak_worst:.1e}"
        ),
    ))
}

fn redfield() -> Outcome {
    let opts = SteadyOptions {
        negativity_floor: 1e-6,
        ..Default::default()
    };
    let dist = |kappa: f64| -> symss::Result<f64> {
        let p = with(PresetId::D2Minimal, |p| p.kappa = kappa)?;
        let ss = steady_state_with(&redfield_generator(&p)?, &opts)?;
        Ok(hs_distance_mms(&ss.rho_ss))
    };
    let omega = PresetId::D2Minimal.defaults().omega;
    let (far, near) = (dist(1e6 * omega)?, dist(10.0 * omega)?);
    let mut quad: f64 = 0.0;
    for kappa in [0.5, 10.0, 1e6] {
        let p = with(PresetId::D2Minimal, |p| p.kappa = kappa)?;
        for (l, a) in p.model.couplings().iter().zip(p.model.aux()) {
            let closed = redfield_filtered_jump(p.model.h_s(), l, a)?;
            let numeric = redfield_filtered_jump_quadrature(p.model.h_s(), l, a, 1e-13)?;
            quad = quad.max(closed.hs_distance(&numeric));
        }
    }
    Ok((
        far < REDFIELD_FAR && near > REDFIELD_NEAR_MIN && quad < QUADRATURE_TOL,
        format!("d(1e6) {far:.1e}, d(10) {near:.3e}, closed vs quadrature {quad:.1e}"),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        (
            "no-go: collective jumps give a unique maximally mixed state",
            nogo,
        ),
        (
            "Lindblad limit: distance to MMS vanishes as kappa grows",
            lindblad_limit,
        ),
        (
            "fermionic and bosonic tails have distinct exponents",
            tail_exponents,
        ),
        (
            "entangled steady state at intermediate damping",
            entanglement,
        ),
        ("U(1)xZ2 steady-state structure and QFI", u1_structure),
        ("polyhedral anticoherence and isotropic QFI", anticoherence),
        ("quadratic robustness to rate imbalance", robustness),
        ("time evolution and solver paths agree", cross_validation),
        ("steady states inherit the symmetry", inheritance),
        ("Redfield generator limits and quadrature", redfield),
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|n| (1..=10).contains(n))
        .collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "{} [{n:>2}] {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
