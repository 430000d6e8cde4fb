//! Run configuration: a flat `key = value` file with dotted sections,
//! overridden by command line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use dphase::control::{ControlConfig, ControlMetric};
use dphase::phase::DEFAULT_REGULARIZATION;
use dphase::solver::{Metric, SolverConfig};
use dphase::{validate_exponents, ExponentMode, Exponents64};
use thiserror::Error;

/// A configuration problem, tagged with the dotted path of the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    CompareOps,
    Convexity,
    Control,
    Exponents,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::CompareOps => "compare-ops",
            Command::Convexity => "convexity",
            Command::Control => "control",
            Command::Exponents => "exponents",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Command::Solve,
            Command::CompareOps,
            Command::Convexity,
            Command::Control,
            Command::Exponents,
        ]
        .into_iter()
        .find(|c| c.name() == s)
    }
}

/// Built-in fields on the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `prod_i sin(pi x_i)`.
    Sine,
    /// `16 x(1-x) y(1-y)` (or `4 x(1-x)` in 1-D).
    Bump,
    /// `x(1-x) sin(pi y)` (or `x(1-x)` in 1-D).
    Anisotropic,
}

impl Preset {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "sine" => Some(Preset::Sine),
            "bump" => Some(Preset::Bump),
            "anisotropic" => Some(Preset::Anisotropic),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        use std::f64::consts::PI;
        match self {
            Preset::Sine => x.iter().map(|v| (PI * v).sin()).product(),
            Preset::Bump => x.iter().map(|v| 4.0 * v * (1.0 - v)).product(),
            Preset::Anisotropic => {
                let base = x[0] * (1.0 - x[0]);
                if x.len() == 2 {
                    base * (PI * x[1]).sin()
                } else {
                    base
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Constant(f64),
    Preset(Preset),
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    Constant(f64),
    /// `mu(x) = value * x_1`, zero on the face `x_1 = 0`.
    Ramp(f64),
    /// Nodal values on interior nodes, averaged onto edges.
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvexityTarget {
    /// The discrete energy with zero load, `gamma = p`.
    Energy,
    /// `x^2` on the real line, `gamma = 2`.
    Square,
    /// `|u|^p/p + |u|^q/q` via the sum lemma.
    SumLemma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentSpec {
    pub q: f64,
    pub mode: ExponentMode,
    /// `mode = "equal"`: a single growth exponent `p = q` (reference runs).
    pub equal_growth: bool,
    pub p_override: Option<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSettings {
    pub config: ControlConfig<f64>,
    /// Known control whose state is the tracking target.
    pub reference: FieldSpec,
    /// Tracking target read from disk instead of solved from `reference`.
    pub target_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub n: usize,
    pub m: usize,
    pub exponent_spec: ExponentSpec,
    pub exponents: Exponents64,
    pub weight: WeightSpec,
    pub forcing: FieldSpec,
    pub compare_state: FieldSpec,
    pub solver: SolverConfig<f64>,
    pub control: ControlSettings,
    pub convexity_trials: usize,
    pub convexity_target: ConvexityTarget,
    pub seed: u64,
    pub out: PathBuf,
    pub dump_energy_trace: bool,
}

/// Command line overrides; `None` leaves the file (or default) value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub command: Option<Command>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub q: Option<String>,
    pub p: Option<String>,
    pub strict_sobolev: bool,
    pub epsilon: Option<String>,
    pub tol: Option<String>,
    pub max_iters: Option<usize>,
    pub mu_const: Option<String>,
    pub dump_energy_trace: bool,
}

const KNOWN_KEYS: &[&str] = &[
    "command",
    "seed",
    "out",
    "dump_energy_trace",
    "grid.n",
    "grid.m",
    "exponents.q",
    "exponents.p",
    "exponents.mode",
    "exponents.epsilon",
    "weight.kind",
    "weight.value",
    "weight.path",
    "forcing.kind",
    "forcing.value",
    "forcing.preset",
    "forcing.path",
    "compare.state.kind",
    "compare.state.value",
    "compare.state.preset",
    "compare.state.path",
    "solver.tol",
    "solver.max_iters",
    "solver.armijo_c",
    "solver.backtrack",
    "solver.metric",
    "control.tol_reduced",
    "control.max_outer",
    "control.cg_tol",
    "control.cg_max",
    "control.alpha",
    "control.inner_tol",
    "control.initial_step",
    "control.metric",
    "control.direction_tol",
    "control.reference.kind",
    "control.reference.value",
    "control.reference.preset",
    "control.reference.path",
    "control.target_path",
    "convexity.trials",
    "convexity.target",
];

/// Flattened `dotted.key -> value` view of a configuration file.
#[derive(Debug, Clone, Default)]
struct Entries {
    map: BTreeMap<String, toml::Value>,
    base: PathBuf,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parses a real number, accepting a fraction such as `4/3`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let a: f64 = a.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
        let b: f64 = b.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
        return Ok(a / b);
    }
    s.parse().map_err(|e| format!("{s:?}: {e}"))
}

impl Entries {
    fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::new("<file>", e))?;
        let mut map = BTreeMap::new();
        flatten("", &table, &mut map);
        if let Some(k) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(ConfigError::new(k.clone(), "unknown key"));
        }
        Ok(Self {
            map,
            base: base.to_path_buf(),
        })
    }

    fn real(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(v)) => Ok(Some(*v)),
            Some(toml::Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(toml::Value::String(s)) => parse_real(s).map(Some).map_err(|e| ConfigError::new(key, e)),
            Some(other) => Err(ConfigError::new(key, format!("expected a number, got {other}"))),
        }
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(v)) if *v >= 0 => Ok(Some(*v as usize)),
            Some(other) => Err(ConfigError::new(key, format!("expected a nonnegative integer, got {other}"))),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(ConfigError::new(key, format!("expected a string, got {other}"))),
        }
    }

    fn flag(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(other) => Err(ConfigError::new(key, format!("expected true or false, got {other}"))),
        }
    }

    fn path(&self, key: &str) -> Result<Option<PathBuf>, ConfigError> {
        Ok(self.string(key)?.map(|p| {
            let p = PathBuf::from(p);
            if p.is_relative() {
                self.base.join(p)
            } else {
                p
            }
        }))
    }

    fn field(&self, section: &str, default: FieldSpec) -> Result<FieldSpec, ConfigError> {
        let kind_key = format!("{section}.kind");
        let kind = self.string(&kind_key)?;
        let value = self.real(&format!("{section}.value"))?;
        let preset = self.string(&format!("{section}.preset"))?;
        let path = self.path(&format!("{section}.path"))?;
        let kind = match kind {
            Some(k) => k,
            None if value.is_some() => "constant".into(),
            None if preset.is_some() => "preset".into(),
            None if path.is_some() => "csv".into(),
            None => return Ok(default),
        };
        match kind.as_str() {
            "constant" => Ok(FieldSpec::Constant(value.ok_or_else(|| {
                ConfigError::new(format!("{section}.value"), "required for kind = constant")
            })?)),
            "preset" => {
                let name = preset.ok_or_else(|| {
                    ConfigError::new(format!("{section}.preset"), "required for kind = preset")
                })?;
                Preset::parse(&name).map(FieldSpec::Preset).ok_or_else(|| {
                    ConfigError::new(
                        format!("{section}.preset"),
                        format!("unknown preset {name:?} (expected sine, bump or anisotropic)"),
                    )
                })
            }
            "csv" => Ok(FieldSpec::Csv(path.ok_or_else(|| {
                ConfigError::new(format!("{section}.path"), "required for kind = csv")
            })?)),
            other => Err(ConfigError::new(
                kind_key,
                format!("unknown kind {other:?} (expected constant, preset or csv)"),
            )),
        }
    }
}

fn check_file(path: &Path, key: &str) -> Result<(), ConfigError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("file {} does not exist", path.display())))
    }
}

/// Reads an optional configuration file and applies the overrides on top.
pub fn parse_config(path: Option<&Path>, flags: &Overrides) -> Result<RunConfig, ConfigError> {
    let entries = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError::new("--config", format!("{}: {e}", p.display())))?;
            Entries::parse(&text, p.parent().unwrap_or(Path::new(".")))?
        }
        None => Entries::default(),
    };
    from_entries(&entries, flags)
}

/// Same as [`parse_config`] for configuration text already in memory;
/// relative paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path, flags: &Overrides) -> Result<RunConfig, ConfigError> {
    from_entries(&Entries::parse(text, base)?, flags)
}

fn flag_real(name: &str, v: &Option<String>) -> Result<Option<f64>, ConfigError> {
    v.as_deref()
        .map(parse_real)
        .transpose()
        .map_err(|e| ConfigError::new(name, e))
}

fn from_entries(en: &Entries, fl: &Overrides) -> Result<RunConfig, ConfigError> {
    let command = match fl.command {
        Some(c) => c,
        None => {
            let name = en
                .string("command")?
                .ok_or_else(|| ConfigError::new("command", "no command given"))?;
            Command::parse(&name).ok_or_else(|| {
                ConfigError::new(
                    "command",
                    format!("unknown command {name:?} (expected solve, compare-ops, convexity, control or exponents)"),
                )
            })?
        }
    };

    let n = fl.n.or(en.count("grid.n")?).unwrap_or(2);
    let m = fl.m.or(en.count("grid.m")?).unwrap_or(15);
    if !(1..=2).contains(&n) {
        return Err(ConfigError::new("grid.n", format!("unsupported dimension {n} (expected 1 or 2)")));
    }
    if m < 1 {
        return Err(ConfigError::new("grid.m", "at least one interior node per axis is required"));
    }

    let q = flag_real("--q", &fl.q)?
        .or(en.real("exponents.q")?)
        .unwrap_or(4.0 / 3.0);
    let p_override = flag_real("--p", &fl.p)?.or(en.real("exponents.p")?);
    let mode_name = en.string("exponents.mode")?;
    let equal_growth = !fl.strict_sobolev && mode_name.as_deref() == Some("equal");
    let mode = if fl.strict_sobolev {
        ExponentMode::Strict
    } else {
        match mode_name.as_deref() {
            Some("equal") => ExponentMode::Relaxed,
            Some(s) => s.parse().map_err(|e| ConfigError::new("exponents.mode", e))?,
            None if p_override.is_some() => ExponentMode::Relaxed,
            None => ExponentMode::Strict,
        }
    };
    let epsilon = flag_real("--epsilon", &fl.epsilon)?
        .or(en.real("exponents.epsilon")?)
        .unwrap_or(DEFAULT_REGULARIZATION);
    let exponents = if equal_growth {
        let p = p_override.unwrap_or(q);
        if p != q {
            return Err(ConfigError::new(
                "exponents.p",
                format!("mode = \"equal\" needs p = q (got p = {p}, q = {q})"),
            ));
        }
        Exponents64::equal_growth(p, n, epsilon)
    } else {
        validate_exponents(q, n, mode, p_override).and_then(|e| e.with_regularization(epsilon))
    }
    .map_err(|e| ConfigError::new("exponents", e))?;

    let weight = {
        let mu_flag = flag_real("--mu-const", &fl.mu_const)?;
        let kind = en.string("weight.kind")?;
        let value = en.real("weight.value")?;
        match (mu_flag, kind.as_deref()) {
            (Some(v), _) => WeightSpec::Constant(v),
            (None, None) | (None, Some("constant")) => WeightSpec::Constant(value.unwrap_or(1.0)),
            (None, Some("ramp")) => WeightSpec::Ramp(value.unwrap_or(1.0)),
            (None, Some("csv")) => WeightSpec::Csv(
                en.path("weight.path")?
                    .ok_or_else(|| ConfigError::new("weight.path", "required for kind = csv"))?,
            ),
            (None, Some(other)) => {
                return Err(ConfigError::new(
                    "weight.kind",
                    format!("unknown kind {other:?} (expected constant, ramp or csv)"),
                ))
            }
        }
    };
    match &weight {
        WeightSpec::Constant(v) | WeightSpec::Ramp(v) if !(*v >= 0.0 && v.is_finite()) => {
            return Err(ConfigError::new("weight.value", format!("must be finite and >= 0 (got {v})")));
        }
        WeightSpec::Csv(p) => check_file(p, "weight.path")?,
        _ => {}
    }

    let forcing = en.field("forcing", FieldSpec::Constant(1.0))?;
    let compare_state = en.field("compare.state", FieldSpec::Preset(Preset::Anisotropic))?;
    let reference = en.field("control.reference", FieldSpec::Preset(Preset::Bump))?;
    for (key, spec) in [
        ("forcing.path", &forcing),
        ("compare.state.path", &compare_state),
        ("control.reference.path", &reference),
    ] {
        if let FieldSpec::Csv(p) = spec {
            check_file(p, key)?;
        }
    }

    let mut solver = SolverConfig::general();
    if let Some(v) = flag_real("--tol", &fl.tol)?.or(en.real("solver.tol")?) {
        solver.tol_grad = v;
    }
    if let Some(v) = fl.max_iters.or(en.count("solver.max_iters")?) {
        solver.max_iters = v;
    }
    if let Some(v) = en.real("solver.armijo_c")? {
        solver.armijo_c = v;
    }
    if let Some(v) = en.real("solver.backtrack")? {
        solver.backtrack = v;
    }
    if let Some(s) = en.string("solver.metric")? {
        solver.metric = match s.as_str() {
            "sobolev" => Metric::Sobolev,
            "l2" => Metric::L2,
            other => {
                return Err(ConfigError::new(
                    "solver.metric",
                    format!("unknown metric {other:?} (expected sobolev or l2)"),
                ))
            }
        };
    }
    solver.validate().map_err(|e| ConfigError::new("solver", e))?;

    let mut control = ControlConfig::<f64>::default();
    control.inner = SolverConfig {
        tol_grad: en.real("control.inner_tol")?.unwrap_or(control.inner.tol_grad),
        ..solver.clone()
    };
    if let Some(v) = en.real("control.tol_reduced")? {
        control.tol_reduced = v;
    }
    if let Some(v) = en.count("control.max_outer")? {
        control.max_outer = v;
    }
    if let Some(v) = en.real("control.cg_tol")? {
        control.cg_tol = v;
    }
    if let Some(v) = en.count("control.cg_max")? {
        control.cg_max = v;
    }
    if let Some(v) = en.real("control.alpha")? {
        control.alpha = v;
    }
    if let Some(v) = en.real("control.initial_step")? {
        control.initial_step = v;
    }
    if let Some(v) = en.real("control.direction_tol")? {
        control.direction_tol = v;
    }
    if let Some(s) = en.string("control.metric")? {
        control.metric = match s.as_str() {
            "state" => ControlMetric::State,
            "l2" => ControlMetric::L2,
            other => {
                return Err(ConfigError::new(
                    "control.metric",
                    format!("unknown metric {other:?} (expected state or l2)"),
                ))
            }
        };
    }
    control.validate().map_err(|e| ConfigError::new("control", e))?;
    let target_path = en.path("control.target_path")?;
    if let Some(p) = &target_path {
        check_file(p, "control.target_path")?;
    }

    let convexity_trials = en.count("convexity.trials")?.unwrap_or(1000);
    if convexity_trials < 1 {
        return Err(ConfigError::new("convexity.trials", "at least one trial is required"));
    }
    let convexity_target = match en.string("convexity.target")?.as_deref() {
        None | Some("energy") => ConvexityTarget::Energy,
        Some("square") => ConvexityTarget::Square,
        Some("sum-lemma") => ConvexityTarget::SumLemma,
        Some(other) => {
            return Err(ConfigError::new(
                "convexity.target",
                format!("unknown target {other:?} (expected energy, square or sum-lemma)"),
            ))
        }
    };

    let seed = match fl.seed {
        Some(s) => s,
        None => match en.map.get("seed") {
            None => 0,
            Some(toml::Value::Integer(v)) if *v >= 0 => *v as u64,
            Some(other) => return Err(ConfigError::new("seed", format!("expected a nonnegative integer, got {other}"))),
        },
    };
    let out = fl
        .out
        .clone()
        .or(en.path("out")?)
        .unwrap_or_else(|| PathBuf::from("out"));
    let dump_energy_trace = fl.dump_energy_trace || en.flag("dump_energy_trace")?.unwrap_or(false);

    Ok(RunConfig {
        command,
        n,
        m,
        exponent_spec: ExponentSpec {
            q,
            mode,
            equal_growth,
            p_override,
            epsilon,
        },
        exponents,
        weight,
        forcing,
        compare_state,
        solver,
        control: ControlSettings {
            config: control,
            reference,
            target_path,
        },
        convexity_trials,
        convexity_target,
        seed,
        out,
        dump_energy_trace,
    })
}
