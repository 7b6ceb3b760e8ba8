//! Solving sweep points, computing metric columns and writing CSV tables.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use symss::liouville::build_embedding;
use symss::metrics::{
    anticoherence_from_norms, dicke_populations, equatorial_qfi, hs_distance_mms,
    isotropic_qfi_check, multipole_norms, negativity, purity, qfi, symmetry_deviation,
    wigner_sphere,
};
use symss::models::{lindblad_limit_generator, redfield_generator};
use symss::steady::{
    solve_embedding, steady_state_with, uniqueness_certificate_with, SteadyOptions,
    SteadyStateReport, TruncationPolicy,
};
use symss::{collective_spin_ops, Operator, SuperOperator};

use crate::config::{
    fmt_num, resolve_all, value_text, ExperimentConfig, GeneratorKind, PolicyKind, Resolved,
};
use crate::error::{CliError, CliResult};

const EQUATORIAL_ANGLES: usize = 32;
const ISOTROPY_DIRECTIONS: usize = 50;
const ANTICOHERENCE_TOL: f64 = 1e-8;
const REDFIELD_NEGATIVITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Purity,
    HsDistMms,
    Negativity,
    QfiZ,
    FPerp,
    QfiIso,
    Anticoherence,
    Dicke,
    DeltaG,
    Uniqueness,
}

impl Metric {
    pub const NAMES: [&'static str; 10] = [
        "purity",
        "hs_dist_mms",
        "negativity",
        "qfi_z",
        "f_perp",
        "qfi_iso",
        "anticoherence",
        "dicke",
        "delta_g",
        "uniqueness",
    ];

    pub fn parse(s: &str) -> CliResult<Self> {
        Ok(match s {
            "purity" => Metric::Purity,
            "hs_dist_mms" => Metric::HsDistMms,
            "negativity" => Metric::Negativity,
            "qfi_z" => Metric::QfiZ,
            "f_perp" => Metric::FPerp,
            "qfi_iso" => Metric::QfiIso,
            "anticoherence" => Metric::Anticoherence,
            "dicke" => Metric::Dicke,
            "delta_g" => Metric::DeltaG,
            "uniqueness" => Metric::Uniqueness,
            other => {
                return Err(CliError::Config(format!(
                    "unknown metric '{other}' (known: {})",
                    Metric::NAMES.join(", ")
                )))
            }
        })
    }

    fn columns(&self, negativity_name: &str) -> Vec<String> {
        let c: &[&str] = match self {
            Metric::Purity => &["purity"],
            Metric::HsDistMms => &["hs_dist_mms"],
            Metric::Negativity => return vec![negativity_name.to_string()],
            Metric::QfiZ => &["qfi_z"],
            Metric::FPerp => &["f_perp_over_n", "f_perp_rel_spread", "metrological_gain"],
            Metric::QfiIso => &["qfi_iso_over_n", "qfi_iso_rel_spread"],
            Metric::Anticoherence => &["anticoherence_order", "multipole_norms"],
            Metric::Dicke => &["dicke_populations", "dicke_off_diagonal"],
            Metric::DeltaG => &["delta_g"],
            Metric::Uniqueness => &["unique", "certificate_nullity"],
        };
        c.iter().map(|s| s.to_string()).collect()
    }
}

fn metrics_of(cfg: &ExperimentConfig) -> CliResult<Vec<Metric>> {
    if cfg.metrics.is_empty() {
        return Ok(vec![Metric::Purity, Metric::HsDistMms]);
    }
    cfg.metrics.iter().map(|m| Metric::parse(m)).collect()
}

/// Spin state and solver report at one point.
pub struct Solved {
    pub rho: Operator,
    pub report: SteadyStateReport,
    pub converged: bool,
    pub generator: SuperOperator,
}

pub fn solve_point(cfg: &ExperimentConfig, r: &Resolved) -> symss::Result<Solved> {
    let mut opts = SteadyOptions {
        method: cfg.method().ok().flatten(),
        seed: cfg.seed(),
        ..Default::default()
    };
    match cfg.generator.unwrap_or_default() {
        GeneratorKind::Embedding => {
            let policy = match cfg.truncation_policy.unwrap_or_default() {
                PolicyKind::Fixed => TruncationPolicy::Fixed,
                PolicyKind::Adaptive => {
                    let TruncationPolicy::Adaptive { start, tol } = TruncationPolicy::default()
                    else {
                        unreachable!("default policy is adaptive")
                    };
                    TruncationPolicy::Adaptive {
                        start: cfg.adaptive_start.unwrap_or(start),
                        tol: cfg.adaptive_tol.unwrap_or(tol),
                    }
                }
            };
            let es = solve_embedding(&r.model.model, policy, &opts)?;
            let generator = build_embedding(&es.model)?;
            Ok(Solved {
                rho: es.rho_spin,
                report: es.report,
                converged: es.converged,
                generator,
            })
        }
        kind => {
            let generator = if kind == GeneratorKind::Redfield {
                opts.negativity_floor = REDFIELD_NEGATIVITY_FLOOR;
                redfield_generator(&r.model)?
            } else {
                lindblad_limit_generator(&r.model)?
            };
            let report = steady_state_with(&generator, &opts)?;
            Ok(Solved {
                rho: report.rho_ss.clone(),
                report,
                converged: true,
                generator,
            })
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(";")
}

fn cut_for(cfg: &ExperimentConfig, n: usize) -> usize {
    cfg.cut.unwrap_or(n / 2).max(1)
}

fn metric_cells(
    cfg: &ExperimentConfig,
    r: &Resolved,
    s: &Solved,
    metrics: &[Metric],
) -> symss::Result<Vec<String>> {
    let sys = r.model.sys();
    let n = sys.n_spins() as f64;
    let rho = &s.rho;
    let mut out = Vec::new();
    for m in metrics {
        match m {
            Metric::Purity => out.push(fmt_num(purity(rho))),
            Metric::HsDistMms => out.push(fmt_num(hs_distance_mms(rho))),
            Metric::Negativity => {
                out.push(fmt_num(negativity(rho, sys, cut_for(cfg, sys.n_spins()))?))
            }
            Metric::QfiZ => out.push(fmt_num(qfi(rho, &collective_spin_ops(sys).sz)?)),
            Metric::FPerp => {
                let (mean, spread) = equatorial_qfi(rho, sys, EQUATORIAL_ANGLES)?;
                out.push(fmt_num(mean / n));
                out.push(fmt_num(if mean > 0.0 { spread / mean } else { 0.0 }));
                out.push((mean / n > 1.0).to_string());
            }
            Metric::QfiIso => {
                let (mean, spread) = isotropic_qfi_check(rho, sys, ISOTROPY_DIRECTIONS)?;
                out.push(fmt_num(mean / n));
                out.push(fmt_num(if mean > 0.0 { spread / mean } else { 0.0 }));
            }
            Metric::Anticoherence => {
                let norms = multipole_norms(rho, sys);
                out.push(anticoherence_from_norms(&norms, ANTICOHERENCE_TOL).to_string());
                out.push(join(&norms));
            }
            Metric::Dicke => {
                let (pops, off) = dicke_populations(rho);
                out.push(join(&pops));
                out.push(fmt_num(off));
            }
            Metric::DeltaG => out.push(fmt_num(symmetry_deviation(rho, &r.model.group))),
            Metric::Uniqueness => {
                let (unique, nullity) = uniqueness_certificate_with(&s.generator, cfg.seed())?;
                out.push(unique.to_string());
                out.push(nullity.to_string());
            }
        }
    }
    Ok(out)
}

/// One output row; failed points keep their axis values and a status.
#[derive(Debug, Clone)]
pub struct Row {
    pub cells: Vec<String>,
    pub ok: bool,
}

pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub footer: Vec<String>,
}

impl Table {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok).count()
    }
}

fn axis_names(cfg: &ExperimentConfig) -> Vec<String> {
    cfg.sweep.iter().map(|a| a.param.clone()).collect()
}

fn axis_cells(r: &Resolved) -> Vec<String> {
    r.point.values.iter().map(|(_, v)| value_text(v)).collect()
}

fn negativity_name(cfg: &ExperimentConfig, points: &[Resolved]) -> String {
    let ns: Vec<usize> = points.iter().map(|r| r.model.sys().n_spins()).collect();
    match ns.first() {
        Some(&n) if ns.iter().all(|&m| m == n) => {
            let c = cut_for(cfg, n);
            format!("negativity_{c}_{}", n - c)
        }
        _ => "negativity".into(),
    }
}

fn pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))
}

/// Runs every point of the configuration; solver failures become rows with
/// an error status.
pub fn run_table(cfg: &ExperimentConfig, jobs: Option<usize>) -> CliResult<Table> {
    let metrics = metrics_of(cfg)?;
    let points = resolve_all(cfg)?;
    let neg = negativity_name(cfg, &points);
    let mut columns = axis_names(cfg);
    for c in [
        "status",
        "method",
        "nullity",
        "residual",
        "min_eigenvalue",
        "iterations",
        "truncation_used",
        "truncation_converged",
    ] {
        columns.push(c.into());
    }
    let n_fixed = columns.len();
    for m in &metrics {
        columns.extend(m.columns(&neg));
    }
    let width = columns.len();
    let rows: Vec<Row> = pool(jobs)?.install(|| {
        points
            .par_iter()
            .map(|r| {
                let mut cells = axis_cells(r);
                let result = solve_point(cfg, r)
                    .and_then(|s| metric_cells(cfg, r, &s, &metrics).map(|m| (s, m)));
                match result {
                    Ok((s, m)) => {
                        cells.push("ok".into());
                        cells.push(s.report.method.to_string());
                        cells.push(s.report.nullity.to_string());
                        cells.push(fmt_num(s.report.residual));
                        cells.push(fmt_num(s.report.min_eigenvalue));
                        cells.push(s.report.iterations.to_string());
                        cells.push(
                            s.report
                                .truncation_used
                                .iter()
                                .map(|t| t.to_string())
                                .collect::<Vec<_>>()
                                .join(";"),
                        );
                        cells.push(s.converged.to_string());
                        cells.extend(m);
                        Row { cells, ok: true }
                    }
                    Err(e) => {
                        cells.push(format!("error: {e}"));
                        cells.resize(width, String::new());
                        Row { cells, ok: false }
                    }
                }
            })
            .collect()
    });
    debug_assert!(rows
        .iter()
        .all(|r| r.cells.len() == width && n_fixed <= width));
    let footer = fit_footer(cfg, &columns, &rows);
    Ok(Table {
        columns,
        rows,
        footer,
    })
}

fn log_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Log-log fits grouped by the axes other than `fit.x`.
fn fit_footer(cfg: &ExperimentConfig, columns: &[String], rows: &[Row]) -> Vec<String> {
    let Some(fit) = &cfg.fit else {
        return Vec::new();
    };
    let col = |name: &str| columns.iter().position(|c| c == name);
    let (Some(xi), Some(yi)) = (col(&fit.x), col(&fit.y)) else {
        return vec![format!("# fit {} vs {}: column not present", fit.y, fit.x)];
    };
    let groups: Vec<usize> = (0..cfg.sweep.len()).filter(|&i| i != xi).collect();
    let mut keys: Vec<Vec<String>> = Vec::new();
    for r in rows {
        let key: Vec<String> = groups.iter().map(|&i| r.cells[i].clone()).collect();
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|key| {
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for r in rows.iter().filter(|r| r.ok) {
                if groups.iter().zip(&key).all(|(&i, k)| &r.cells[i] == k) {
                    if let (Ok(x), Ok(y)) = (r.cells[xi].parse::<f64>(), r.cells[yi].parse::<f64>())
                    {
                        if x > 0.0 && y > 0.0 {
                            xs.push(x);
                            ys.push(y);
                        }
                    }
                }
            }
            let label: Vec<String> = groups
                .iter()
                .zip(&key)
                .map(|(&i, k)| format!("{}={k}", columns[i]))
                .collect();
            let label = if label.is_empty() {
                String::new()
            } else {
                format!(" {}", label.join(" "))
            };
            if xs.len() < 2 {
                format!(
                    "# fit log({}) vs log({}){label}: not enough positive points",
                    fit.y, fit.x
                )
            } else {
                let (slope, intercept) = log_fit(&xs, &ys);
                format!(
                    "# fit log({}) vs log({}){label}: slope={} intercept={} points={}",
                    fit.y,
                    fit.x,
                    fmt_num(slope),
                    fmt_num(intercept),
                    xs.len()
                )
            }
        })
        .collect()
}

/// Wigner grids of every point as `(axes..., theta, phi, w)` rows.
pub fn run_wigner(cfg: &ExperimentConfig, jobs: Option<usize>) -> CliResult<Table> {
    let points = resolve_all(cfg)?;
    let grid = cfg.wigner.unwrap_or_default();
    if grid.n_theta < 16 || grid.n_phi < 32 {
        return Err(CliError::Config(
            "wigner grid needs n_theta >= 16 and n_phi >= 32".into(),
        ));
    }
    let mut columns = axis_names(cfg);
    columns.extend(["theta", "phi", "w"].map(String::from));
    let blocks: Vec<CliResult<Vec<Row>>> = pool(jobs)?.install(|| {
        points
            .par_iter()
            .map(|r| {
                let s = solve_point(cfg, r)?;
                let field = wigner_sphere(&s.rho, r.model.sys(), grid.n_theta, grid.n_phi)?;
                let axes = axis_cells(r);
                let mut rows = Vec::with_capacity(grid.n_theta * grid.n_phi);
                for (i, &th) in field.thetas.iter().enumerate() {
                    for (k, &ph) in field.phis.iter().enumerate() {
                        let mut cells = axes.clone();
                        cells.extend([fmt_num(th), fmt_num(ph), fmt_num(field.at(i, k))]);
                        rows.push(Row { cells, ok: true });
                    }
                }
                Ok(rows)
            })
            .collect()
    });
    let mut rows = Vec::new();
    for b in blocks {
        rows.extend(b.map_err(|e| match e {
            CliError::Core(c) => CliError::Solver(format!("wigner solve failed: {c}")),
            other => other,
        })?);
    }
    Ok(Table {
        columns,
        rows,
        footer: Vec::new(),
    })
}

/// Provenance header: library version, command and resolved configuration.
pub fn header(command: &str, cfg: &ExperimentConfig) -> CliResult<Vec<String>> {
    let mut lines = vec![
        format!("# symss {}", env!("CARGO_PKG_VERSION")),
        format!("# command: {command}"),
    ];
    lines.push(format!("# config: {}", cfg.to_json()));
    let points = cfg.points()?;
    let mut seen = Vec::new();
    for p in &points {
        let id = crate::config::preset_id(cfg, p)?;
        if seen.contains(&id) {
            continue;
        }
        seen.push(id);
        let base = crate::config::Point::default();
        let params = crate::config::resolve_params(cfg, id, &base)?;
        let desc: Vec<String> = params
            .describe()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        lines.push(format!(
            "# preset {id} (group {}): {}",
            id.group(),
            desc.join(" ")
        ));
    }
    lines.push(format!(
        "# generator={} truncation_policy={} seed={}",
        serde_json::to_value(cfg.generator.unwrap_or_default())?
            .as_str()
            .unwrap_or("?"),
        serde_json::to_value(cfg.truncation_policy.unwrap_or_default())?
            .as_str()
            .unwrap_or("?"),
        cfg.seed()
    ));
    Ok(lines)
}

/// Writes header, table and footer to `out` or stdout.
pub fn write_table(out: Option<&Path>, header: &[String], table: &Table) -> CliResult<()> {
    let mut buf: Vec<u8> = Vec::new();
    for line in header {
        writeln!(buf, "{line}")?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&table.columns)?;
        for r in &table.rows {
            w.write_record(&r.cells)?;
        }
        w.flush()?;
    }
    for line in &table.footer {
        writeln!(buf, "{line}")?;
    }
    match out {
        Some(p) => std::fs::write(p, buf)?,
        None => std::io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_names_parse() {
        for name in Metric::NAMES {
            assert!(Metric::parse(name).is_ok());
        }
        assert!(Metric::parse("fidelity").is_err());
    }

    #[test]
    fn log_fit_recovers_power_law() {
        let xs = [1e-3, 1e-2, 1e-1];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x * x).collect();
        let (slope, intercept) = log_fit(&xs, &ys);
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lindblad_limit_point_is_maximally_mixed() {
        let cfg = ExperimentConfig {
            preset: Some("d2_minimal".into()),
            generator: Some(GeneratorKind::LindbladLimit),
            metrics: vec!["hs_dist_mms".into(), "uniqueness".into()],
            ..Default::default()
        };
        let t = run_table(&cfg, Some(1)).unwrap();
        assert_eq!(t.rows.len(), 1);
        let row = &t.rows[0];
        assert!(row.ok);
        let col = |n: &str| t.columns.iter().position(|c| c == n).unwrap();
        assert!(row.cells[col("hs_dist_mms")].parse::<f64>().unwrap() < 1e-10);
        assert_eq!(row.cells[col("unique")], "true");
    }
}
