//! Layered run configuration: built-in defaults, then the config file,
//! then `EXCHAIN_SEED` / `EXCHAIN_WORKERS`, then `--set key=value`, then
//! the `--seed`, `--workers` and `--out` flags.

use exchain_core::billiard::GeometrySpec;
use exchain_core::estimators::{GammaPolicy, ReferenceSet, WindowPolicy};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid TOML in {origin}: {message}")]
    Syntax { origin: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("bad environment variable {name}={value}")]
    Env { name: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeeSection {
    pub n: usize,
    pub m: usize,
    pub t_left: f64,
    pub t_right: f64,
}

impl Default for SeeSection {
    fn default() -> Self {
        Self { n: 3, m: 2, t_left: 1.0, t_right: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartKind {
    Point,
    TailCorrected,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// The window chosen by `[window]`.
    Default,
    /// The last decade with enough observations above it.
    ResolvableDecade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeeTail {
    pub start: StartKind,
    pub point: Vec<f64>,
    pub t_relax: f64,
    pub replicas: u64,
    pub cap: f64,
    pub fit: FitKind,
}

impl Default for SeeTail {
    fn default() -> Self {
        Self {
            start: StartKind::Point,
            point: vec![0.1, 0.1, 0.1],
            t_relax: 100.0,
            replicas: 100_000,
            cap: 1e5,
            fit: FitKind::ResolvableDecade,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeeSimulate {
    pub point: Vec<f64>,
    pub times: Vec<f64>,
    pub replicas: u64,
}

impl Default for SeeSimulate {
    fn default() -> Self {
        Self { point: vec![0.1, 0.1, 0.1], times: vec![0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0], replicas: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeeInvariant {
    pub t_relax: f64,
    pub t_check: f64,
    pub replicas: u64,
    pub bins: usize,
}

impl Default for SeeInvariant {
    fn default() -> Self {
        Self { t_relax: 100.0, t_check: 100.0, replicas: 10_000, bins: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeeGammaScan {
    pub base: Vec<f64>,
    /// Zero-based site whose energy is varied.
    pub site: usize,
    pub values: Vec<f64>,
    pub beta: f64,
    pub replicas: u64,
    pub cap: f64,
    pub policy: GammaPolicy,
}

impl Default for SeeGammaScan {
    fn default() -> Self {
        Self {
            base: vec![0.1, 0.1, 0.1],
            site: 0,
            values: vec![1e-4, 1e-3, 1e-2, 0.1],
            beta: 4.0,
            replicas: 20_000,
            cap: 1e4,
            policy: GammaPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollisionTime {
    pub m: usize,
    pub points: Vec<Vec<f64>>,
    pub replicas: u64,
    pub cap: f64,
}

impl Default for CollisionTime {
    fn default() -> Self {
        Self { m: 3, points: vec![vec![0.5, 0.5], vec![0.01, 0.99], vec![0.001, 0.999]], replicas: 10_000, cap: 1e5 }
    }
}

fn rate_grid() -> Vec<f64> {
    [-4.0, -3.5, -3.0, -2.5, -2.0].iter().map(|x| 10f64.powf(*x)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BilliardRate {
    pub m: usize,
    pub grid: Vec<f64>,
    pub replicas: u64,
    pub cap: f64,
    pub fit_lo: f64,
    pub fit_hi: f64,
}

impl Default for BilliardRate {
    fn default() -> Self {
        Self { m: 3, grid: rate_grid(), replicas: 5_000, cap: 1e5, fit_lo: 1e-4, fit_hi: 1e-2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateKind {
    /// Interpolated from first-collision rates measured on `grid`.
    Surface,
    /// `sqrt(min(E1, E2))`, rescaled so the rescaled gaps have unit mean.
    SqrtMin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BilliardLambda {
    pub m: usize,
    pub rate: RateKind,
    pub grid: Vec<f64>,
    pub rate_replicas: u64,
    pub energies: Vec<f64>,
    pub burn_in: usize,
    pub collisions: usize,
    pub trajectories: u64,
    pub cap: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for BilliardLambda {
    fn default() -> Self {
        Self {
            m: 3,
            rate: RateKind::Surface,
            grid: vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5],
            rate_replicas: 5_000,
            energies: vec![0.5, 0.5],
            burn_in: 1_000,
            collisions: 20_000,
            trajectories: 1,
            cap: 1e5,
            t_max: 5.0,
            points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollisionSampling {
    pub m: usize,
    pub energies: Vec<f64>,
    pub replicas: u64,
    pub cap: f64,
    pub bins: usize,
}

fn participation_defaults() -> CollisionSampling {
    CollisionSampling { m: 4, energies: vec![0.5, 0.5], replicas: 20_000, cap: 1e4, bins: 50 }
}

fn postcollision_defaults() -> CollisionSampling {
    CollisionSampling { m: 1, energies: vec![0.8, 0.2], replicas: 20_000, cap: 1e4, bins: 50 }
}

impl Default for CollisionSampling {
    fn default() -> Self {
        participation_defaults()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellTail {
    pub m: usize,
    pub energies: Vec<f64>,
    pub replicas: u64,
    pub cap: f64,
    pub window: (f64, f64),
    pub bins: usize,
    pub exchange_draws: u64,
    pub exchange_window: (f64, f64),
    pub exchange_bins: usize,
}

impl Default for CellTail {
    fn default() -> Self {
        Self {
            m: 3,
            energies: vec![0.5, 0.5],
            replicas: 20_000,
            cap: 1e4,
            window: (0.01, 0.2),
            bins: 10,
            exchange_draws: 1_000_000,
            exchange_window: (0.005, 0.1),
            exchange_bins: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BilliardFlux {
    pub m: usize,
    pub grid: Vec<f64>,
    pub replicas: u64,
    pub cap: f64,
}

impl Default for BilliardFlux {
    fn default() -> Self {
        Self { m: 3, grid: (0..=10).map(|k| k as f64 * 0.05).collect(), replicas: 2_000, cap: 1e5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BilliardPassage {
    pub m: usize,
    pub total: f64,
    pub threshold: f64,
    pub target: f64,
    pub h: f64,
    pub replicas: u64,
    pub cap: f64,
    pub fit: FitKind,
}

impl Default for BilliardPassage {
    fn default() -> Self {
        Self { m: 2, total: 1.0, threshold: 0.001, target: 0.2, h: 0.1, replicas: 20_000, cap: 1e5, fit: FitKind::ResolvableDecade }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Conductivity {
    pub lengths: Vec<usize>,
    pub repeats: u64,
    pub burn_in: f64,
    pub horizon: f64,
}

impl Default for Conductivity {
    fn default() -> Self {
        Self { lengths: vec![4, 8, 16, 32], repeats: 20, burn_in: 1_000.0, horizon: 10_000.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Calibration {
    pub samples: u64,
    pub rate: f64,
    pub pareto_scale: f64,
    pub pareto_shape: f64,
    /// Window for the Pareto fit; the exponential fit uses `[window]`.
    pub pareto_window: WindowPolicy,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            samples: 100_000,
            rate: 2.0,
            pareto_scale: 1.0,
            pareto_shape: 3.0,
            pareto_window: WindowPolicy { start_quantile: 0.0, min_count: 50, ..WindowPolicy::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct Config {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Run directory; empty means `runs/<subcommand>`.
    pub out: String,
    pub progress: bool,
    pub see: SeeSection,
    pub reference: ReferenceSet,
    pub geometry: GeometrySpec,
    pub window: WindowPolicy,
    pub see_tail: SeeTail,
    pub see_simulate: SeeSimulate,
    pub see_invariant: SeeInvariant,
    pub see_gamma_scan: SeeGammaScan,
    pub billiard_collision_time: CollisionTime,
    pub billiard_rate: BilliardRate,
    pub billiard_lambda: BilliardLambda,
    #[serde(default = "participation_defaults")]
    pub billiard_participation: CollisionSampling,
    #[serde(default = "postcollision_defaults")]
    pub billiard_postcollision: CollisionSampling,
    pub billiard_celltail: CellTail,
    pub billiard_flux: BilliardFlux,
    pub billiard_passage: BilliardPassage,
    pub conductivity: Conductivity,
    pub calibrate_estimators: Calibration,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 0,
            out: String::new(),
            progress: false,
            see: SeeSection::default(),
            reference: ReferenceSet::default(),
            geometry: GeometrySpec::default(),
            window: WindowPolicy::default(),
            see_tail: SeeTail::default(),
            see_simulate: SeeSimulate::default(),
            see_invariant: SeeInvariant::default(),
            see_gamma_scan: SeeGammaScan::default(),
            billiard_collision_time: CollisionTime::default(),
            billiard_rate: BilliardRate::default(),
            billiard_lambda: BilliardLambda::default(),
            billiard_participation: participation_defaults(),
            billiard_postcollision: postcollision_defaults(),
            billiard_celltail: CellTail::default(),
            billiard_flux: BilliardFlux::default(),
            billiard_passage: BilliardPassage::default(),
            conductivity: Conductivity::default(),
            calibrate_estimators: Calibration::default(),
        }
    }
}

/// Command-line layers applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<String>,
}

impl Config {
    /// Resolves the configuration. `env` looks up environment variables so
    /// tests can supply their own.
    pub fn resolve(
        file: Option<&std::path::Path>,
        overrides: &Overrides,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let mut root = to_table(&Config::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
            let layer: Table = text
                .parse()
                .map_err(|e: toml::de::Error| ConfigError::Syntax { origin: path.display().to_string(), message: e.to_string() })?;
            merge(&mut root, layer);
        }
        if let Some(v) = env("EXCHAIN_SEED") {
            let seed = v.parse::<i64>().map_err(|_| ConfigError::Env { name: "EXCHAIN_SEED", value: v.clone() })?;
            root.insert("seed".into(), Value::Integer(seed));
        }
        if let Some(v) = env("EXCHAIN_WORKERS") {
            let w = v.parse::<i64>().map_err(|_| ConfigError::Env { name: "EXCHAIN_WORKERS", value: v.clone() })?;
            root.insert("workers".into(), Value::Integer(w));
        }
        for s in &overrides.sets {
            apply_set(&mut root, s)?;
        }
        if let Some(seed) = overrides.seed {
            root.insert("seed".into(), Value::Integer(seed as i64));
        }
        if let Some(w) = overrides.workers {
            root.insert("workers".into(), Value::Integer(w as i64));
        }
        if let Some(out) = &overrides.out {
            root.insert("out".into(), Value::String(out.clone()));
        }
        Config::deserialize(Value::Table(root)).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax { origin: "resolved config".into(), message: e.to_string() })
    }
}

fn to_table<T: Serialize>(value: &T) -> Result<Table, ConfigError> {
    match Value::try_from(value).map_err(|e| ConfigError::Invalid(e.to_string()))? {
        Value::Table(t) => Ok(t),
        _ => Err(ConfigError::Invalid("configuration is not a table".into())),
    }
}

/// Recursive merge; a table whose `kind` differs from the base replaces it.
fn merge(base: &mut Table, layer: Table) {
    for (k, v) in layer {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(l)) if b.get("kind") == l.get("kind") || l.get("kind").is_none() => merge(b, l),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn apply_set(root: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let value =
        format!("v = {raw}").parse::<Table>().ok().and_then(|mut t| t.remove("v")).unwrap_or_else(|| Value::String(raw.to_string()));
    let mut table = root;
    for part in &path[..path.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => return Err(ConfigError::Override(spec.to_string())),
        };
    }
    table.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}
