//! Built-in experiment recipes with the published parameters.

use serde_json::Value;

use crate::config::{ExperimentConfig, FitSpec, Scale, SweepAxis, WignerGrid};
use crate::error::{CliError, CliResult};

pub const RECIPES: [&str; 6] = ["fig2", "fig3", "fig4a", "fig4b", "fig4c", "sm-fig-s1"];

/// Whether a recipe produces Wigner grids rather than a sweep table.
pub fn is_wigner(name: &str) -> bool {
    matches!(name, "fig4a" | "sm-fig-s1")
}

fn range(param: &str, start: f64, stop: f64, count: usize, scale: Scale) -> SweepAxis {
    SweepAxis {
        param: param.into(),
        start: Some(start),
        stop: Some(stop),
        count: Some(count),
        scale,
        values: None,
    }
}

fn values(param: &str, v: &[&str]) -> SweepAxis {
    SweepAxis {
        param: param.into(),
        start: None,
        stop: None,
        count: None,
        scale: Scale::Linear,
        values: Some(v.iter().map(|s| Value::from(*s)).collect()),
    }
}

fn metrics(m: &[&str]) -> Vec<String> {
    m.iter().map(|s| s.to_string()).collect()
}

const POLYHEDRA: [&str; 3] = ["tetra", "octa", "icosa"];

pub fn recipe(name: &str) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    match name {
        "fig2" => {
            cfg.preset = Some("d2_minimal".into());
            cfg.sweep = vec![
                values("aux", &["boson", "fermion", "twolevel"]),
                range("kappa_over_omega", 1.0, 1e3, 31, Scale::Log),
            ];
            cfg.metrics = metrics(&["hs_dist_mms", "negativity"]);
            cfg.cut = Some(2);
        }
        "fig3" => {
            cfg.preset = Some("u1z2".into());
            cfg.sweep = vec![
                range("h_over_omega", 1.0, 10.0, 10, Scale::Linear),
                range("kappa_over_omega", 0.05, 5.0, 9, Scale::Log),
            ];
            cfg.metrics = metrics(&["f_perp", "qfi_z", "dicke"]);
        }
        "fig4a" => {
            cfg.sweep = vec![values("preset", &POLYHEDRA)];
            cfg.wigner = Some(WignerGrid {
                n_theta: 65,
                n_phi: 128,
            });
        }
        "fig4b" => {
            cfg.sweep = vec![
                values("preset", &POLYHEDRA),
                range("h_over_omega", 0.05, 5.0, 21, Scale::Log),
            ];
            cfg.metrics = metrics(&["qfi_iso", "anticoherence", "purity"]);
        }
        "fig4c" => {
            cfg.sweep = vec![
                values("preset", &POLYHEDRA),
                range("dk_over_kappa", 1e-3, 1e-1, 9, Scale::Log),
            ];
            cfg.metrics = metrics(&["delta_g"]);
            cfg.fit = Some(FitSpec {
                x: "dk_over_kappa".into(),
                y: "delta_g".into(),
            });
        }
        "sm-fig-s1" => {
            cfg.preset = Some("tetra".into());
            cfg.params.insert("n_spins".into(), Value::from(5));
            cfg.wigner = Some(WignerGrid {
                n_theta: 65,
                n_phi: 128,
            });
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown recipe '{other}' (known: {})",
                RECIPES.join(", ")
            )));
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::resolve_all;

    #[test]
    fn every_recipe_resolves() {
        for name in RECIPES {
            let cfg = recipe(name).unwrap();
            let pts = resolve_all(&cfg).unwrap();
            assert!(!pts.is_empty(), "{name}");
        }
    }

    #[test]
    fn polyhedral_recipes_use_default_rates() {
        let pts = resolve_all(&recipe("fig4c").unwrap()).unwrap();
        for p in &pts {
            assert_eq!(p.model.params.gamma, 0.5);
            assert_eq!(p.model.params.kappa, 0.5);
        }
        let icosa = pts.iter().find(|p| p.model.id.as_str() == "icosa").unwrap();
        assert!((icosa.model.params.h - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_recipe_is_rejected() {
        assert!(recipe("fig5").is_err());
    }
}
