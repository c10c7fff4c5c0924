//! Run configuration: a line-oriented `key = value` file with optional
//! `[section]` headers.
//!
//! Keys are unique across sections, so a key may appear at top level or under
//! its own section. `--set key=value` (or `--set section.key=value`) overrides
//! a value after the file is read. Every problem is collected and reported with
//! the line it came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use rpimon::nonselective::MasterForm;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Float,
    Positive,
    NonNegative,
    Count { min: u64 },
    Seed,
    Text,
    Choice(&'static [&'static str]),
    FloatList,
    PositiveList,
    Bool,
}

struct KeySpec {
    name: &'static str,
    section: &'static str,
    kind: Kind,
}

const MODES: &[&str] = &["selective", "sample", "ensemble", "master", "lattice", "check"];
const SYSTEMS: &[&str] = &["qubit", "oscillator", "custom"];
const STATES: &[&str] = &["plus", "uniform", "basis", "coherent"];
const FORMS: &[&str] = &["simple", "nonminimal", "lindblad_canonical"];
const POTENTIALS: &[&str] = &["free", "harmonic"];
const KINETICS: &[&str] = &["lattice", "continuum"];

const SECTIONS: &[&str] = &["run", "system", "monitor", "time", "initial", "readout", "master", "lattice"];

const KEYS: &[KeySpec] = &[
    KeySpec { name: "mode", section: "run", kind: Kind::Choice(MODES) },
    KeySpec { name: "seed", section: "run", kind: Kind::Seed },
    KeySpec { name: "n_traj", section: "run", kind: Kind::Count { min: 1 } },
    KeySpec { name: "output_dir", section: "run", kind: Kind::Text },
    KeySpec { name: "system", section: "system", kind: Kind::Choice(SYSTEMS) },
    KeySpec { name: "hbar", section: "system", kind: Kind::Positive },
    KeySpec { name: "hx", section: "system", kind: Kind::Float },
    KeySpec { name: "hy", section: "system", kind: Kind::Float },
    KeySpec { name: "hz", section: "system", kind: Kind::Float },
    KeySpec { name: "d", section: "system", kind: Kind::Count { min: 2 } },
    KeySpec { name: "mass", section: "system", kind: Kind::Positive },
    KeySpec { name: "omega", section: "system", kind: Kind::Positive },
    KeySpec { name: "matrix_file", section: "system", kind: Kind::Text },
    KeySpec { name: "observable", section: "monitor", kind: Kind::Text },
    KeySpec { name: "kappa", section: "monitor", kind: Kind::NonNegative },
    KeySpec { name: "lambda", section: "monitor", kind: Kind::Float },
    KeySpec { name: "disturbance", section: "monitor", kind: Kind::Text },
    KeySpec { name: "t_final", section: "time", kind: Kind::Positive },
    KeySpec { name: "n_steps", section: "time", kind: Kind::Count { min: 1 } },
    KeySpec { name: "dt", section: "time", kind: Kind::Positive },
    KeySpec { name: "state", section: "initial", kind: Kind::Choice(STATES) },
    KeySpec { name: "basis_index", section: "initial", kind: Kind::Count { min: 0 } },
    KeySpec { name: "alpha", section: "initial", kind: Kind::Float },
    KeySpec { name: "readout", section: "readout", kind: Kind::FloatList },
    KeySpec { name: "readout_file", section: "readout", kind: Kind::Text },
    KeySpec { name: "readout_levels", section: "readout", kind: Kind::FloatList },
    KeySpec { name: "level_duration", section: "readout", kind: Kind::Positive },
    KeySpec { name: "form", section: "master", kind: Kind::Choice(FORMS) },
    KeySpec { name: "truncation_guard", section: "master", kind: Kind::Bool },
    KeySpec { name: "n_q", section: "lattice", kind: Kind::Count { min: 3 } },
    KeySpec { name: "q_max", section: "lattice", kind: Kind::Positive },
    KeySpec { name: "potential", section: "lattice", kind: Kind::Choice(POTENTIALS) },
    KeySpec { name: "kinetic", section: "lattice", kind: Kind::Choice(KINETICS) },
    KeySpec { name: "dts", section: "lattice", kind: Kind::PositiveList },
    KeySpec { name: "q0", section: "lattice", kind: Kind::Float },
    KeySpec { name: "p0", section: "lattice", kind: Kind::Float },
    KeySpec { name: "sigma", section: "lattice", kind: Kind::Positive },
];

const ALIASES: &[(&str, &str)] = &[("m", "mass"), ("A", "observable"), ("B", "disturbance")];

fn lookup(name: &str) -> Option<&'static KeySpec> {
    let name = ALIASES.iter().find(|(a, _)| *a == name).map_or(name, |(_, k)| k);
    KEYS.iter().find(|k| k.name == name)
}

/// Where a value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override,
    None,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override => write!(f, "--set"),
            Origin::None => write!(f, "config"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub origin: Origin,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.origin, self.message)
    }
}

/// All problems found in one configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Selective,
    Sample,
    Ensemble,
    Master,
    Lattice,
    Check,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemKind {
    Qubit,
    Oscillator,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialKind {
    Uniform,
    Basis,
    Coherent,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReadoutSource {
    Inline(Vec<f64>),
    File(PathBuf),
    /// Piecewise-constant blocks of equal duration; the last level is held.
    Levels { levels: Vec<f64>, duration: f64 },
}

impl ReadoutSource {
    pub fn level_at(levels: &[f64], duration: f64, t: f64) -> f64 {
        let k = (t / duration + 1e-9).floor().max(0.0) as usize;
        levels[k.min(levels.len() - 1)]
    }
}

/// A fully validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub system: SystemKind,
    pub hbar: f64,
    pub hx: f64,
    pub hy: f64,
    pub hz: f64,
    pub d: usize,
    pub mass: f64,
    pub omega: f64,
    pub matrix_file: Option<PathBuf>,
    pub observable: Option<String>,
    pub kappa: f64,
    pub lambda: f64,
    pub disturbance: Option<String>,
    /// `(dt, n_steps)` when the mode needs a time grid.
    pub grid: Option<(f64, usize)>,
    pub t_final: Option<f64>,
    pub initial: InitialKind,
    pub basis_index: usize,
    pub alpha: f64,
    pub readout: Option<ReadoutSource>,
    pub form: Option<MasterForm>,
    pub truncation_guard: Option<bool>,
    pub n_q: usize,
    pub q_max: f64,
    pub harmonic: bool,
    pub continuum_kernel: bool,
    pub dts: Vec<f64>,
    pub q0: f64,
    pub p0: f64,
    pub sigma: f64,
    pub seed: Option<u64>,
    pub n_traj: usize,
    pub output_dir: PathBuf,
    /// SHA-256 of the effective key/value set.
    pub hash: String,
}

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    origin: Origin,
}

struct Raw {
    entries: BTreeMap<&'static str, Entry>,
    errors: Vec<ConfigError>,
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && ((v.starts_with('"') && v.ends_with('"')) || (v.starts_with('\'') && v.ends_with('\''))) {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

impl Raw {
    fn read(text: &str) -> Self {
        let mut raw = Raw { entries: BTreeMap::new(), errors: Vec::new() };
        let mut section: Option<&str> = None;
        for (idx, line) in text.lines().enumerate() {
            let origin = Origin::Line(idx + 1);
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                match rest.strip_suffix(']').map(str::trim) {
                    Some(name) if SECTIONS.contains(&name) => section = SECTIONS.iter().copied().find(|s| *s == name),
                    Some(name) => raw.err(origin, format!("unknown section [{name}]")),
                    None => raw.err(origin, "malformed section header"),
                }
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => raw.set(k.trim(), v, section, origin, false),
                None => raw.err(origin, format!("expected 'key = value', got '{line}'")),
            }
        }
        raw
    }

    fn err(&mut self, origin: Origin, message: impl Into<String>) {
        self.errors.push(ConfigError { origin, message: message.into() });
    }

    fn set(&mut self, key: &str, value: &str, section: Option<&str>, origin: Origin, replace: bool) {
        let Some(spec) = lookup(key) else {
            self.err(origin, format!("unknown key '{key}'"));
            return;
        };
        if let Some(s) = section {
            if s != spec.section {
                self.err(origin, format!("key '{}' belongs in [{}], not [{s}]", spec.name, spec.section));
                return;
            }
        }
        if !replace {
            if let Some(prev) = self.entries.get(spec.name) {
                let msg = format!("duplicate key '{}' (first set at {})", spec.name, prev.origin);
                self.err(origin, msg);
                return;
            }
        }
        self.entries.insert(spec.name, Entry { value: unquote(value).to_string(), origin });
    }

    fn apply_override(&mut self, item: &str) {
        let Some((k, v)) = item.split_once('=') else {
            self.err(Origin::Override, format!("expected key=value, got '{item}'"));
            return;
        };
        let k = k.trim();
        let (section, key) = match k.split_once('.') {
            Some((s, key)) if SECTIONS.contains(&s) => (Some(s), key),
            Some((s, _)) => {
                self.err(Origin::Override, format!("unknown section '{s}' in '{k}'"));
                return;
            }
            None => (None, k),
        };
        self.set(key, v, section, Origin::Override, true);
    }

    fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, e) in &self.entries {
            h.update(format!("{k}={}\n", e.value).as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn origin(&self, key: &str) -> Origin {
        self.entries.get(key).map_or(Origin::None, |e| e.origin)
    }

    fn get(&mut self, key: &'static str) -> Option<Value> {
        let spec = lookup(key).expect("known key");
        let entry = self.entries.get(key)?.clone();
        let v = entry.value.as_str();
        let origin = entry.origin;
        let parse_f = |s: &str| s.trim().parse::<f64>().ok().filter(|x| x.is_finite());
        let parsed = match spec.kind {
            Kind::Float => parse_f(v).map(Value::F).ok_or(format!("'{key}' must be a finite number, got '{v}'")),
            Kind::Positive => match parse_f(v) {
                Some(x) if x > 0.0 => Ok(Value::F(x)),
                Some(_) => Err(format!("{key} must be > 0")),
                None => Err(format!("'{key}' must be a finite number, got '{v}'")),
            },
            Kind::NonNegative => match parse_f(v) {
                Some(x) if x >= 0.0 => Ok(Value::F(x)),
                Some(_) => Err(format!("{key} must be ≥ 0")),
                None => Err(format!("'{key}' must be a finite number, got '{v}'")),
            },
            Kind::Count { min } => match v.parse::<u64>() {
                Ok(n) if n >= min => Ok(Value::N(n)),
                Ok(_) => Err(format!("{key} must be ≥ {min}")),
                Err(_) => Err(format!("'{key}' must be a non-negative integer, got '{v}'")),
            },
            Kind::Seed => v.parse::<u64>().map(Value::N).map_err(|_| format!("'{key}' must be an unsigned 64-bit integer, got '{v}'")),
            Kind::Text if v.is_empty() => Err(format!("'{key}' must not be empty")),
            Kind::Text => Ok(Value::S(v.to_string())),
            Kind::Choice(options) => match options.iter().find(|o| **o == v) {
                Some(o) => Ok(Value::S((*o).to_string())),
                None => Err(format!("'{key}' must be one of {}, got '{v}'", options.join(", "))),
            },
            Kind::FloatList | Kind::PositiveList => {
                let items: Option<Vec<f64>> = v.split(',').map(parse_f).collect();
                match items {
                    Some(xs) if xs.is_empty() => Err(format!("'{key}' must not be empty")),
                    Some(xs) if spec.kind == Kind::PositiveList && xs.iter().any(|x| *x <= 0.0) => {
                        Err(format!("every entry of {key} must be > 0"))
                    }
                    Some(xs) => Ok(Value::L(xs)),
                    None => Err(format!("'{key}' must be a comma-separated list of finite numbers, got '{v}'")),
                }
            }
            Kind::Bool => match v {
                "true" | "yes" | "1" => Ok(Value::B(true)),
                "false" | "no" | "0" => Ok(Value::B(false)),
                _ => Err(format!("'{key}' must be true or false, got '{v}'")),
            },
        };
        match parsed {
            Ok(x) => Some(x),
            Err(msg) => {
                self.err(origin, msg);
                None
            }
        }
    }

    fn f(&mut self, key: &'static str) -> Option<f64> {
        match self.get(key)? {
            Value::F(x) => Some(x),
            _ => None,
        }
    }

    fn n(&mut self, key: &'static str) -> Option<u64> {
        match self.get(key)? {
            Value::N(x) => Some(x),
            _ => None,
        }
    }

    fn s(&mut self, key: &'static str) -> Option<String> {
        match self.get(key)? {
            Value::S(x) => Some(x),
            _ => None,
        }
    }

    fn list(&mut self, key: &'static str) -> Option<Vec<f64>> {
        match self.get(key)? {
            Value::L(x) => Some(x),
            _ => None,
        }
    }

    fn b(&mut self, key: &'static str) -> Option<bool> {
        match self.get(key)? {
            Value::B(x) => Some(x),
            _ => None,
        }
    }

    fn require(&mut self, mode: &str, keys: &[&str]) {
        for k in keys {
            if !self.has(k) {
                self.err(Origin::None, format!("missing required key '{k}' for mode {mode}"));
            }
        }
    }
}

enum Value {
    F(f64),
    N(u64),
    S(String),
    L(Vec<f64>),
    B(bool),
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    parse_config_with_overrides(text, &[])
}

/// As [`parse_config`], applying `key=value` overrides after the file.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigErrors> {
    let mut raw = Raw::read(text);
    for item in overrides {
        raw.apply_override(item);
    }
    let hash = raw.hash();

    let mode = match raw.s("mode").as_deref() {
        Some("selective") => Some(Mode::Selective),
        Some("sample") => Some(Mode::Sample),
        Some("ensemble") => Some(Mode::Ensemble),
        Some("master") => Some(Mode::Master),
        Some("lattice") => Some(Mode::Lattice),
        Some("check") => Some(Mode::Check),
        _ => {
            if !raw.has("mode") {
                raw.err(Origin::None, "missing required key 'mode'");
            }
            None
        }
    };
    let system = match raw.s("system").as_deref() {
        Some("oscillator") => SystemKind::Oscillator,
        Some("custom") => SystemKind::Custom,
        _ => SystemKind::Qubit,
    };

    let hbar = raw.f("hbar").unwrap_or(1.0);
    let hx = raw.f("hx").unwrap_or(0.0);
    let hy = raw.f("hy").unwrap_or(0.0);
    let hz = raw.f("hz").unwrap_or(0.0);
    let d = raw.n("d").unwrap_or(16) as usize;
    let mass = raw.f("mass").unwrap_or(1.0);
    let omega = raw.f("omega").unwrap_or(1.0);
    let matrix_file = raw.s("matrix_file").map(PathBuf::from);
    let observable = raw.s("observable");
    let kappa = raw.f("kappa");
    let lambda = raw.f("lambda").unwrap_or(0.0);
    let disturbance = raw.s("disturbance");
    let t_final = raw.f("t_final");
    let n_steps = raw.n("n_steps").map(|n| n as usize);
    let dt = raw.f("dt");
    let initial = match raw.s("state").as_deref() {
        Some("basis") => InitialKind::Basis,
        Some("coherent") => InitialKind::Coherent,
        Some(_) => InitialKind::Uniform,
        None => match system {
            SystemKind::Qubit => InitialKind::Uniform,
            SystemKind::Oscillator => InitialKind::Coherent,
            SystemKind::Custom => InitialKind::Basis,
        },
    };
    let basis_index = raw.n("basis_index").unwrap_or(0) as usize;
    let alpha = raw.f("alpha").unwrap_or(1.0);
    let inline = raw.list("readout");
    let readout_file = raw.s("readout_file");
    let levels = raw.list("readout_levels");
    let level_duration = raw.f("level_duration");
    let form = raw.s("form").map(|s| s.parse::<MasterForm>().expect("validated choice"));
    let truncation_guard = raw.b("truncation_guard");
    let n_q = raw.n("n_q").unwrap_or(101) as usize;
    let q_max = raw.f("q_max").unwrap_or(8.0);
    let harmonic = raw.s("potential").as_deref() == Some("harmonic");
    let continuum_kernel = raw.s("kinetic").as_deref() == Some("continuum");
    let dts = raw.list("dts").unwrap_or_else(|| vec![1.0 / 25.0, 1.0 / 50.0, 1.0 / 100.0, 1.0 / 200.0]);
    let q0 = raw.f("q0").unwrap_or(0.0);
    let p0 = raw.f("p0").unwrap_or(0.0);
    let sigma = raw.f("sigma").unwrap_or(0.5);
    let seed = raw.n("seed");
    let n_traj = raw.n("n_traj").unwrap_or(1) as usize;
    let output_dir = PathBuf::from(raw.s("output_dir").unwrap_or_else(|| "rpimon-out".into()));

    if raw.has("n_q") && n_q % 2 == 0 {
        raw.err(raw.origin("n_q"), "n_q must be odd");
    }
    if system == SystemKind::Custom && !raw.has("matrix_file") {
        raw.err(Origin::None, "missing required key 'matrix_file' for system custom");
    }

    let sources = [raw.has("readout"), raw.has("readout_file"), raw.has("readout_levels")].iter().filter(|x| **x).count();
    if sources > 1 {
        raw.err(Origin::None, "give at most one of 'readout', 'readout_file', 'readout_levels'");
    }
    if raw.has("readout_levels") && !raw.has("level_duration") {
        raw.err(raw.origin("readout_levels"), "readout_levels needs level_duration");
    }
    let readout = match (inline, readout_file, levels, level_duration) {
        (Some(v), _, _, _) => Some(ReadoutSource::Inline(v)),
        (_, Some(p), _, _) => Some(ReadoutSource::File(PathBuf::from(p))),
        (_, _, Some(levels), Some(duration)) => Some(ReadoutSource::Levels { levels, duration }),
        _ => None,
    };

    let mut grid = None;
    if let Some(mode) = mode {
        let name = MODES[mode as usize];
        let needs_kappa = !matches!(mode, Mode::Check);
        if needs_kappa {
            raw.require(name, &["kappa"]);
        }
        match mode {
            Mode::Sample | Mode::Ensemble => {
                raw.require(name, &["seed"]);
                if mode == Mode::Ensemble {
                    raw.require(name, &["n_traj"]);
                }
                if kappa == Some(0.0) {
                    raw.err(raw.origin("kappa"), "kappa must be > 0 for readout sampling");
                }
            }
            Mode::Selective if readout.is_none() => {
                raw.err(Origin::None, format!("missing required key 'readout' (or 'readout_file', 'readout_levels') for mode {name}"))
            }
            _ => {}
        }
        if lambda != 0.0 && kappa == Some(0.0) {
            raw.err(raw.origin("lambda"), "lambda != 0 needs kappa > 0");
        }
        if lambda != 0.0 && !raw.has("disturbance") && mode != Mode::Lattice && system != SystemKind::Custom {
            raw.err(raw.origin("lambda"), "lambda != 0 needs a 'disturbance' observable");
        }
        let needs_grid = match mode {
            Mode::Sample | Mode::Ensemble | Mode::Master => true,
            Mode::Selective => !matches!(readout, Some(ReadoutSource::File(_))),
            Mode::Lattice => {
                raw.require(name, &["t_final"]);
                false
            }
            Mode::Check => false,
        };
        if needs_grid {
            grid = resolve_grid(&mut raw, name, t_final, n_steps, dt, &readout);
        }
    }

    if !raw.errors.is_empty() {
        return Err(ConfigErrors(raw.errors));
    }
    Ok(RunConfig {
        mode: mode.expect("checked"),
        system,
        hbar,
        hx,
        hy,
        hz,
        d,
        mass,
        omega,
        matrix_file,
        observable,
        kappa: kappa.unwrap_or(0.0),
        lambda,
        disturbance,
        grid,
        t_final,
        initial,
        basis_index,
        alpha,
        readout,
        form,
        truncation_guard,
        n_q,
        q_max,
        harmonic,
        continuum_kernel,
        dts,
        q0,
        p0,
        sigma,
        seed,
        n_traj,
        output_dir,
        hash,
    })
}

fn resolve_grid(
    raw: &mut Raw,
    mode: &str,
    t_final: Option<f64>,
    n_steps: Option<usize>,
    dt: Option<f64>,
    readout: &Option<ReadoutSource>,
) -> Option<(f64, usize)> {
    // an inline readout fixes the number of slices
    let n_steps = match (n_steps, readout) {
        (Some(n), Some(ReadoutSource::Inline(v))) if n != v.len() && mode == "selective" => {
            raw.err(raw.origin("n_steps"), format!("n_steps = {n} but the readout has {} values", v.len()));
            return None;
        }
        (None, Some(ReadoutSource::Inline(v))) if mode == "selective" => Some(v.len()),
        (n, _) => n,
    };
    match (t_final, n_steps, dt) {
        (Some(t), Some(n), Some(dt)) => {
            if (t - n as f64 * dt).abs() > 1e-9 * t {
                raw.err(raw.origin("dt"), format!("dt = {dt} is inconsistent with t_final = {t} and n_steps = {n}"));
                None
            } else {
                Some((dt, n))
            }
        }
        (_, Some(n), Some(dt)) => Some((dt, n)),
        (Some(t), Some(n), None) => Some((t / n as f64, n)),
        (Some(t), None, Some(dt)) => {
            let n = (t / dt).round();
            if n < 1.0 || (n * dt - t).abs() > 1e-9 * t {
                raw.err(raw.origin("dt"), format!("dt = {dt} does not divide t_final = {t}"));
                None
            } else {
                Some((dt, n as usize))
            }
        }
        _ => {
            raw.err(Origin::None, format!("missing required key 't_final' with 'n_steps' or 'dt' for mode {mode}"));
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEPHASING: &str = "\
[run]
mode = master
[system]
system = qubit
[monitor]
A = sz
kappa = 1
[time]
t_final = 1
n_steps = 1000
";

    #[test]
    fn minimal_dephasing_config_is_valid() {
        let cfg = parse_config(DEPHASING).unwrap();
        assert_eq!(cfg.mode, Mode::Master);
        assert_eq!(cfg.system, SystemKind::Qubit);
        assert_eq!(cfg.observable.as_deref(), Some("sz"));
        assert_eq!(cfg.grid, Some((1e-3, 1000)));
        assert_eq!(cfg.hash.len(), 64);
    }

    #[test]
    fn negative_kappa_is_reported_at_its_line() {
        let errs = parse_config(&DEPHASING.replace("kappa = 1", "kappa = -1")).unwrap_err();
        assert_eq!(errs.0.len(), 1);
        assert_eq!(errs.0[0].origin, Origin::Line(7));
        assert!(errs.0[0].message.contains("kappa must be ≥ 0"));
    }

    #[test]
    fn sample_without_seed_lists_the_missing_key() {
        let text = "mode = sample\nkappa = 1\nt_final = 1\nn_steps = 10\n";
        let errs = parse_config(text).unwrap_err();
        assert!(errs.to_string().contains("missing required key 'seed'"), "{errs}");
    }

    #[test]
    fn all_errors_are_collected() {
        let text = "mode = master\nbogus = 1\nkappa = x\n[nowhere]\nn_steps = 0\njunk line\n";
        let errs = parse_config(text).unwrap_err();
        let lines: Vec<Origin> = errs.0.iter().map(|e| e.origin).collect();
        for l in [2, 3, 4, 5, 6] {
            assert!(lines.contains(&Origin::Line(l)), "line {l} missing from {errs}");
        }
    }

    #[test]
    fn keys_must_sit_in_their_section() {
        let errs = parse_config("[time]\nmode = check\n").unwrap_err();
        assert!(errs.to_string().contains("belongs in [run]"));
        let errs = parse_config("mode = check\nmode = master\n").unwrap_err();
        assert!(errs.to_string().contains("duplicate key 'mode' (first set at line 1)"));
    }

    #[test]
    fn overrides_replace_values_and_change_the_hash() {
        let base = parse_config(DEPHASING).unwrap();
        let cfg = parse_config_with_overrides(DEPHASING, &["monitor.kappa=2".into(), "n_steps = 500".into()]).unwrap();
        assert_eq!(cfg.kappa, 2.0);
        assert_eq!(cfg.grid, Some((2e-3, 500)));
        assert_ne!(cfg.hash, base.hash);
        let errs = parse_config_with_overrides(DEPHASING, &["time.kappa=2".into()]).unwrap_err();
        assert_eq!(errs.0[0].origin, Origin::Override);
    }

    #[test]
    fn hash_ignores_layout_and_comments() {
        let a = parse_config(DEPHASING).unwrap();
        let b = parse_config("# comment\nmode=master\nsystem=qubit\nA=sz\nkappa=1\nt_final=1\nn_steps=1000\n").unwrap();
        assert_eq!(a.hash, b.hash);
    }

    #[test]
    fn time_grid_resolution() {
        let cfg = parse_config("mode = master\nkappa = 1\nt_final = 1\ndt = 0.25\n").unwrap();
        assert_eq!(cfg.grid, Some((0.25, 4)));
        assert!(parse_config("mode = master\nkappa = 1\nt_final = 1\ndt = 0.3\n").is_err());
        assert!(parse_config("mode = master\nkappa = 1\nt_final = 1\n").is_err());
        let cfg = parse_config("mode = selective\nkappa = 1\ndt = 0.1\nreadout = 1, 0.5, 0\n").unwrap();
        assert_eq!(cfg.grid, Some((0.1, 3)));
        assert_eq!(cfg.readout, Some(ReadoutSource::Inline(vec![1.0, 0.5, 0.0])));
    }

    #[test]
    fn mode_specific_requirements() {
        assert!(parse_config("mode = check\n").is_ok());
        let errs = parse_config("mode = ensemble\nkappa = 0\nseed = 1\nt_final = 1\nn_steps = 4\n").unwrap_err();
        let s = errs.to_string();
        assert!(s.contains("n_traj") && s.contains("kappa must be > 0"), "{s}");
        assert!(parse_config("mode = lattice\nkappa = 0.5\nn_q = 100\nt_final = 1\n").is_err());
        assert!(parse_config("mode = selective\nkappa = 1\ndt = 0.1\n").is_err());
        assert!(parse_config("").is_err());
    }

    #[test]
    fn level_lookup_holds_the_last_level() {
        assert_eq!(ReadoutSource::level_at(&[1.0, 2.0], 0.5, 0.2), 1.0);
        assert_eq!(ReadoutSource::level_at(&[1.0, 2.0], 0.5, 0.7), 2.0);
        assert_eq!(ReadoutSource::level_at(&[1.0, 2.0], 0.5, 9.0), 2.0);
    }
}
