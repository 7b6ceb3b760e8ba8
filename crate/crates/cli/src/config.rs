//! Experiment configuration: JSON file, recipe defaults and CLI overrides,
//! resolved into one preset model per sweep point.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use symss::models::{jump_set, kappa_imbalance, preset, PresetId, PresetModel, PresetParams};
use symss::steady::Method;
use symss::SpinSystem;

use crate::error::{CliError, CliResult};

/// Parameters derived from others after the plain ones are applied.
const DERIVED: [&str; 4] = ["kappa_over_omega", "h_over_omega", "dk_over_kappa", "perm"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Overrides of preset parameters, plus `kappa_over_omega`,
    /// `h_over_omega`, `dk_over_kappa` and `perm`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Value>,
    /// Axes of the sweep grid; the first axis varies slowest.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepAxis>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_policy: Option<PolicyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive_tol: Option<f64>,
    /// `dense_svd`, `dense_lu` or `sparse_gmres`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// Qubits on the first side of the negativity cut (default `N / 2`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wigner: Option<WignerGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default)]
    pub scale: Scale,
    /// Explicit values instead of a grid (numbers or strings).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Value>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Spin plus auxiliary systems.
    #[default]
    Embedding,
    /// Spin-only Lindbladian of the strong-damping limit.
    LindbladLimit,
    /// Spin-only Redfield generator.
    Redfield,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Adaptive,
    Fixed,
}

/// Log-log fit of `y` against `x`, one per combination of the other axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub x: String,
    pub y: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerGrid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for WignerGrid {
    fn default() -> Self {
        Self {
            n_theta: 33,
            n_phi: 64,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `other` replace those in `self`; parameter maps merge.
    pub fn merge(mut self, other: ExperimentConfig) -> Self {
        self.preset = other.preset.or(self.preset);
        self.params.extend(other.params);
        if !other.sweep.is_empty() {
            self.sweep = other.sweep;
        }
        if !other.metrics.is_empty() {
            self.metrics = other.metrics;
        }
        self.generator = other.generator.or(self.generator);
        self.truncation_policy = other.truncation_policy.or(self.truncation_policy);
        self.adaptive_start = other.adaptive_start.or(self.adaptive_start);
        self.adaptive_tol = other.adaptive_tol.or(self.adaptive_tol);
        self.method = other.method.or(self.method);
        self.cut = other.cut.or(self.cut);
        self.fit = other.fit.or(self.fit);
        self.wigner = other.wigner.or(self.wigner);
        self.seed = other.seed.or(self.seed);
        self.out = other.out.or(self.out);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn method(&self) -> CliResult<Option<Method>> {
        self.method
            .as_deref()
            .map(|m| match m {
                "dense_svd" => Ok(Method::DenseSvd),
                "dense_lu" => Ok(Method::DenseLu),
                "sparse_gmres" => Ok(Method::SparseGmres),
                other => Err(CliError::Config(format!("unknown method '{other}'"))),
            })
            .transpose()
    }

    /// Cartesian product of the sweep axes; a single empty point without axes.
    pub fn points(&self) -> CliResult<Vec<Point>> {
        let mut points = vec![Point::default()];
        for axis in &self.sweep {
            let values = axis.grid()?;
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.values.push((axis.param.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        Ok(points)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config is always serializable")
    }
}

impl SweepAxis {
    pub fn grid(&self) -> CliResult<Vec<Value>> {
        let err = |m: &str| CliError::Config(format!("sweep axis '{}': {m}", self.param));
        if let Some(v) = &self.values {
            if v.is_empty() {
                return Err(err("values must not be empty"));
            }
            if self.start.is_some() || self.stop.is_some() || self.count.is_some() {
                return Err(err("give either values or start/stop/count"));
            }
            return Ok(v.clone());
        }
        let (Some(a), Some(b), Some(n)) = (self.start, self.stop, self.count) else {
            return Err(err("needs start, stop and count (or values)"));
        };
        if n == 0 {
            return Err(err("count must be at least 1"));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(err("bounds must be finite"));
        }
        if self.scale == Scale::Log && (a <= 0.0 || b <= 0.0) {
            return Err(err("log grid needs positive bounds"));
        }
        let step = |i: usize| {
            if n == 1 {
                0.0
            } else {
                i as f64 / (n - 1) as f64
            }
        };
        Ok((0..n)
            .map(|i| {
                let x = match self.scale {
                    Scale::Linear => a + (b - a) * step(i),
                    Scale::Log => (a.ln() + (b.ln() - a.ln()) * step(i)).exp(),
                };
                Value::from(x)
            })
            .collect())
    }
}

/// Values of the sweep axes at one grid point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Point {
    pub values: Vec<(String, Value)>,
}

impl Point {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
    }
}

/// Renders a JSON scalar the way the CLI parameter parser expects it.
pub fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => fmt_num(x),
            _ => n.to_string(),
        },
        Value::Array(a) => a.iter().map(value_text).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e6)`.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e6).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn number(key: &str, v: &Value) -> CliResult<f64> {
    value_text(v)
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("'{key}' expects a number, got {v}")))
}

/// A fully resolved sweep point.
pub struct Resolved {
    pub point: Point,
    pub model: PresetModel,
}

impl fmt::Debug for Resolved {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Resolved")
            .field("point", &self.point)
            .field("preset", &self.model.id)
            .finish()
    }
}

pub fn preset_id(cfg: &ExperimentConfig, point: &Point) -> CliResult<PresetId> {
    let name = match point.get("preset") {
        Some(v) => value_text(v),
        None => cfg
            .preset
            .clone()
            .ok_or_else(|| CliError::Config("no preset given".into()))?,
    };
    name.parse()
        .map_err(|e: symss::Error| CliError::Config(e.to_string()))
}

/// Preset parameters at a point: defaults, then config overrides, then the
/// point's axis values, then derived parameters.
pub fn resolve_params(
    cfg: &ExperimentConfig,
    id: PresetId,
    point: &Point,
) -> CliResult<PresetParams> {
    let mut params = id.defaults();
    let mut derived: BTreeMap<&str, Value> = BTreeMap::new();
    let overrides = cfg.params.iter().map(|(k, v)| (k.as_str(), v)).chain(
        point
            .values
            .iter()
            .filter(|(k, _)| k != "preset")
            .map(|(k, v)| (k.as_str(), v)),
    );
    for (key, value) in overrides {
        if let Some(&name) = DERIVED.iter().find(|&&d| d == key) {
            derived.insert(name, value.clone());
        } else {
            params
                .set(key, &value_text(value))
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
    }
    if let Some(v) = derived.get("kappa_over_omega") {
        params.kappa = number("kappa_over_omega", v)? * params.omega;
    }
    if let Some(v) = derived.get("h_over_omega") {
        params.h = number("h_over_omega", v)? * params.omega;
    }
    let perm = derived
        .get("perm")
        .map(|v| {
            value_text(v)
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::Config(format!("'perm' expects a list of indices, got {v}")))
        })
        .transpose()?;
    if let Some(v) = derived.get("dk_over_kappa") {
        let r = number("dk_over_kappa", v)?;
        let sys = SpinSystem::new(params.n_spins).map_err(|e| CliError::Config(e.to_string()))?;
        let k = jump_set(id, &sys).len();
        let perm = perm.unwrap_or_else(|| (0..k).collect());
        let rates = kappa_imbalance(params.kappa, r * params.kappa, k, &perm)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if rates.iter().any(|&x| x <= 0.0) {
            return Err(CliError::Config(format!(
                "dk_over_kappa = {r} makes a damping rate non-positive"
            )));
        }
        params.kappas = Some(rates);
    } else if perm.is_some() {
        return Err(CliError::Config(
            "'perm' only applies together with 'dk_over_kappa'".into(),
        ));
    }
    Ok(params)
}

/// Resolves and constructs every sweep point; any failure here is a
/// configuration error.
pub fn resolve_all(cfg: &ExperimentConfig) -> CliResult<Vec<Resolved>> {
    cfg.method()?;
    if let Some(tol) = cfg.adaptive_tol {
        if !(tol > 0.0) {
            return Err(CliError::Config("adaptive_tol must be positive".into()));
        }
    }
    cfg.points()?
        .into_iter()
        .map(|point| {
            let id = preset_id(cfg, &point)?;
            let params = resolve_params(cfg, id, &point)?;
            let model = preset(id, &params).map_err(|e| CliError::Config(e.to_string()))?;
            if let Some(c) = cfg.cut {
                if c == 0 || c >= params.n_spins {
                    return Err(CliError::Config(format!(
                        "cut {c} must lie in 1..{}",
                        params.n_spins
                    )));
                }
            }
            Ok(Resolved { point, model })
        })
        .collect()
}

/// Parses `key=value` overrides into JSON values (numbers when possible).
pub fn parse_overrides(sets: &[String]) -> CliResult<BTreeMap<String, Value>> {
    sets.iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got '{s}'")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(CliError::Config(format!("--set has an empty key in '{s}'")));
            }
            let value = match v.trim().parse::<f64>() {
                Ok(x) if !v.contains(',') => Value::from(x),
                _ => Value::from(v.trim()),
            };
            Ok((k.to_string(), value))
        })
        .collect()
}
