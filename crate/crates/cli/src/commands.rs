//! `verify-nogo` and `closure-check`.

use std::io::Write;
use std::path::Path;

use serde_json::json;
use symss::groups::{
    check_closure, generate_group, ClosureMode, ClosureReport, GroupName, So3, SymmetryGroup,
};
use symss::nogo::verify_nogo;
use symss::{collective_spin_ops, Operator, SpinSystem};

use crate::config::{fmt_num, resolve_all, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::run::{write_table, Row, Table};

pub fn nogo(n_list: &[usize], instances: usize, seed: u64, out: Option<&Path>) -> CliResult<()> {
    if n_list.is_empty() || instances == 0 {
        return Err(CliError::Config(
            "need at least one N and one instance".into(),
        ));
    }
    let rep = verify_nogo(n_list, instances, seed).map_err(|e| match e {
        symss::Error::InvalidInput(m) => CliError::Config(m),
        other => CliError::Core(other),
    })?;
    let columns = [
        "n_spins",
        "family",
        "index",
        "passed",
        "distance_to_mms",
        "mms_residual",
        "nullity",
        "unitality_defect",
        "description",
    ]
    .map(String::from)
    .to_vec();
    let rows = rep
        .instances
        .iter()
        .map(|i| Row {
            cells: vec![
                i.n_spins.to_string(),
                i.family.to_string(),
                i.index.to_string(),
                i.passed.to_string(),
                fmt_num(i.distance_to_mms),
                fmt_num(i.mms_residual),
                i.nullity.to_string(),
                fmt_num(i.unitality_defect),
                i.description.clone(),
            ],
            ok: i.passed,
        })
        .collect();
    let header = vec![
        format!("# symss {}", env!("CARGO_PKG_VERSION")),
        "# command: verify-nogo".into(),
        format!(
            "# config: {}",
            json!({ "n_spins": n_list, "instances": instances, "seed": seed })
        ),
    ];
    write_table(
        out,
        &header,
        &Table {
            columns,
            rows,
            footer: Vec::new(),
        },
    )?;
    let failures: Vec<_> = rep.failures().collect();
    let mut err = std::io::stderr().lock();
    writeln!(
        err,
        "verify-nogo: {} instances, {} failures",
        rep.instances.len(),
        failures.len()
    )?;
    for f in &failures {
        let record = json!({
            "n_spins": f.n_spins,
            "family": f.family.to_string(),
            "index": f.index,
            "description": f.description,
            "distance_to_mms": f.distance_to_mms,
            "mms_residual": f.mms_residual,
            "nullity": f.nullity,
            "unitality_defect": f.unitality_defect,
        });
        writeln!(err, "{record}")?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "{} no-go instances failed",
            failures.len()
        )))
    }
}

/// Parses jump names: `sx`, `sy`, `sz`, `s+`, `s-`, `sx2`, `sy2`, `sz2`.
pub fn parse_jump(name: &str, sys: &SpinSystem) -> CliResult<Operator> {
    let s = collective_spin_ops(sys);
    Ok(match name.trim().to_ascii_lowercase().as_str() {
        "sx" => s.sx,
        "sy" => s.sy,
        "sz" => s.sz,
        "s+" | "sp" | "splus" => s.s_plus,
        "s-" | "sm" | "sminus" => s.s_minus,
        "sx2" => s.sx.pow(2),
        "sy2" => s.sy.pow(2),
        "sz2" => s.sz.pow(2),
        other => return Err(CliError::Config(format!("unknown jump operator '{other}'"))),
    })
}

/// Rotation angle in `[0, π]` and unit axis.
fn axis_angle(r: &So3) -> (f64, [f64; 3]) {
    let tr = r[0][0] + r[1][1] + r[2][2];
    let angle = ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
    if angle < 1e-9 {
        return (0.0, [0.0, 0.0, 1.0]);
    }
    let v = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]];
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-6 {
        return (angle, v.map(|x| x / norm));
    }
    // Half turn: R = 2nnᵀ - I.
    let k = (0..3)
        .max_by(|&a, &b| r[a][a].total_cmp(&r[b][b]))
        .unwrap_or(0);
    let nk = ((r[k][k] + 1.0) / 2.0).max(0.0).sqrt();
    let n: [f64; 3] = std::array::from_fn(|i| {
        if i == k {
            nk
        } else {
            (r[i][k] + r[k][i]) / (4.0 * nk)
        }
    });
    (angle, n)
}

fn closure_table(group: &SymmetryGroup, report: &ClosureReport) -> Table {
    let columns = [
        "element",
        "angle",
        "axis_x",
        "axis_y",
        "axis_z",
        "permutation",
        "phases",
        "max_error",
    ]
    .map(String::from)
    .to_vec();
    let rows = group
        .all_elements()
        .zip(&report.table)
        .enumerate()
        .map(|(k, (e, entries))| {
            let (angle, axis) = axis_angle(&e.so3);
            let perm: Vec<String> = entries
                .iter()
                .enumerate()
                .map(|(mu, x)| format!("{mu}->{}", x.target))
                .collect();
            let phases: Vec<String> = entries.iter().map(|x| fmt_num(x.phase)).collect();
            let err = entries.iter().map(|x| x.error).fold(0.0, f64::max);
            let mut cells = vec![k.to_string(), fmt_num(angle)];
            cells.extend(axis.map(fmt_num));
            cells.extend([perm.join(";"), phases.join(";"), fmt_num(err)]);
            Row { cells, ok: true }
        })
        .collect();
    Table {
        columns,
        rows,
        footer: Vec::new(),
    }
}

pub struct AdHocClosure {
    pub group: String,
    pub n_spins: usize,
    pub jumps: Vec<String>,
}

pub fn closure(
    cfg: &ExperimentConfig,
    ad_hoc: Option<AdHocClosure>,
    out: Option<&Path>,
) -> CliResult<()> {
    let (label, group, report) = match ad_hoc {
        Some(a) => {
            let name = GroupName::parse(&a.group).map_err(|e| CliError::Config(e.to_string()))?;
            let sys = SpinSystem::new(a.n_spins).map_err(|e| CliError::Config(e.to_string()))?;
            if a.jumps.is_empty() {
                return Err(CliError::Config(
                    "--jumps needs at least one operator".into(),
                ));
            }
            let jumps = a
                .jumps
                .iter()
                .map(|j| parse_jump(j, &sys))
                .collect::<CliResult<Vec<_>>>()?;
            let group = generate_group(&sys, name)?;
            let report = check_closure(&group, &jumps);
            (
                format!("{} on [{}], N={}", name, a.jumps.join(", "), a.n_spins),
                group,
                report,
            )
        }
        None => {
            if !cfg.sweep.is_empty() {
                return Err(CliError::Config(
                    "closure-check takes a single preset, not a sweep".into(),
                ));
            }
            // Preset construction rejects open jump sets, so rebuild the
            // report from the resolved model instead of failing early.
            let resolved = resolve_all(cfg).map_err(|e| match e {
                CliError::Config(m) if m.contains("not closed") => CliError::Verification(m),
                other => other,
            })?;
            let m = &resolved[0].model;
            let report = check_closure(&m.group, m.model.couplings());
            (
                format!("preset {} under {}", m.id, m.id.group()),
                m.group.clone(),
                report,
            )
        }
    };
    let header = vec![
        format!("# symss {}", env!("CARGO_PKG_VERSION")),
        "# command: closure-check".into(),
        format!("# subject: {label}"),
        format!(
            "# ok={} mode={} max_error={}",
            report.ok,
            mode_name(report.mode),
            fmt_num(report.max_error)
        ),
    ];
    write_table(out, &header, &closure_table(&group, &report))?;
    eprintln!(
        "closure {}: {label}, {} elements, mode {}, max error {:.2e}",
        if report.ok { "ok" } else { "FAILED" },
        report.table.len(),
        mode_name(report.mode),
        report.max_error
    );
    if report.ok {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "jump set is not closed ({label})"
        )))
    }
}

fn mode_name(m: ClosureMode) -> &'static str {
    match m {
        ClosureMode::PhasePermutation => "phase_permutation",
        ClosureMode::SpanMixing => "span_mixing",
        ClosureMode::Failed => "failed",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use symss::groups::rodrigues;

    #[test]
    fn axis_angle_inverts_rodrigues() {
        for (n, th) in [
            ([0.0, 0.0, 1.0], 0.7),
            ([1.0, 1.0, 1.0], 2.0 * std::f64::consts::PI / 3.0),
            ([1.0, 0.0, 0.0], std::f64::consts::PI),
        ] {
            let norm: f64 = n[0] * n[0] + n[1] * n[1] + n[2] * n[2];
            let n = n.map(|x: f64| x / norm.sqrt());
            let (a, axis) = axis_angle(&rodrigues(n, th));
            assert!((a - th).abs() < 1e-9);
            let dot: f64 = axis.iter().zip(&n).map(|(x, y)| x * y).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_sx_is_not_tetrahedral() {
        let sys = SpinSystem::new(4).unwrap();
        let g = generate_group(&sys, GroupName::T).unwrap();
        let r = check_closure(&g, &[parse_jump("sx", &sys).unwrap()]);
        assert!(!r.ok);
    }
}
