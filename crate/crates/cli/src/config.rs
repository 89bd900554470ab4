//! Flat INI-style run configuration.
//!
//! Keys are written either as `section.key = value` or under a `[section]` header.
//! Every key must be one of the known keys below; anything else is rejected.

use mixdim::exterior::{Mode0Radiation, RadialProfile, RadialSource};
use mixdim::interface::{FourierFn, PiecewiseConstantFn};
use mixdim::poly::Poly;
use mixdim::transmission::{Alpha0, Manufactured, TransmissionConfig, TreeSource};
use mixdim::tree_model::{EdgeRef, TreeParams};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if let Some(l) = self.line {
            write!(f, " at line {l}")?;
        }
        if let Some(k) = &self.key {
            write!(f, ", key `{k}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed key/value text with line numbers, before interpretation.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

const PLAIN_KEYS: &[&str] = &[
    "tree.p",
    "tree.ell",
    "tree.omega",
    "tree.L0",
    "tree.omega0",
    "tree.N1",
    "interface.radius",
    "interface.N",
    "interface.mode_cutoff",
    "transmission.alpha1",
    "transmission.alpha0",
    "transmission.c_root",
    "transmission.N_src",
    "transmission.oversampling",
    "transmission.allow_large",
    "transmission.radiation",
    "transmission.levels",
    "transmission.pencil_count",
    "transmission.manufactured.kind",
    "transmission.manufactured.k",
    "transmission.manufactured.level",
    "transmission.manufactured.values",
    "source.exterior.r_max",
    "run.out_dir",
    "run.seed",
    "run.serial",
];

fn known_key(key: &str) -> bool {
    if PLAIN_KEYS.contains(&key) {
        return true;
    }
    let parts: Vec<&str> = key.split('.').collect();
    let int = |s: &str| s.parse::<u64>().is_ok();
    let sint = |s: &str| s.parse::<i64>().is_ok();
    match parts.as_slice() {
        ["tree", "override", n, k, "length" | "weight"] => int(n) && int(k),
        ["source", "tree", "gen", n] => int(n),
        ["source", "tree", "edge", n, k] => int(n) && int(k),
        ["source", "exterior", "mode", k] => sint(k),
        ["source", "exterior", "mode", k, "min_power"] => sint(k),
        _ => false,
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.split(['#', ';']).next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            if let Some(inner) = stripped.strip_prefix('[') {
                let name = inner.strip_suffix(']').ok_or_else(|| ConfigError {
                    line: Some(line),
                    key: None,
                    message: format!("malformed section header `{stripped}`"),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = stripped.split_once('=').ok_or_else(|| ConfigError {
                line: Some(line),
                key: None,
                message: format!("expected `key = value`, got `{stripped}`"),
            })?;
            let k = k.trim();
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            if k.is_empty() || !known_key(&key) {
                return Err(ConfigError { line: Some(line), key: Some(key), message: "unknown key".into() });
            }
            let entry = Entry { value: v.trim().to_string(), line };
            if let Some(prev) = entries.insert(key.clone(), entry) {
                return Err(ConfigError {
                    line: Some(line),
                    key: Some(key),
                    message: format!("duplicate key (first set at line {})", prev.line),
                });
            }
        }
        Ok(RawConfig { entries })
    }

    /// Normalized `key=value` pairs in key order.
    pub fn echo(&self) -> Vec<(String, String)> {
        self.entries.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect()
    }

    pub fn has_section(&self, section: &str) -> bool {
        let prefix = format!("{section}.");
        self.entries.keys().any(|k| k.starts_with(&prefix))
    }

    fn err(&self, key: &str, message: String) -> ConfigError {
        ConfigError { line: self.entries.get(key).map(|e| e.line), key: Some(key.into()), message }
    }

    fn get<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => parse(&e.value)
                .map(Some)
                .ok_or_else(|| self.err(key, format!("expected {what}, got `{}`", e.value))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key, |s| s.parse::<f64>().ok(), "a number")
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.get(key, |s| s.parse::<usize>().ok(), "a non-negative integer")
    }

    fn complex(&self, key: &str) -> Result<Option<Complex64>, ConfigError> {
        self.get(key, parse_complex, "a complex number such as 1.5-0.5i")
    }

    fn bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.get(key, |s| s.parse::<bool>().ok(), "true or false")
    }

    fn reals(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key, |s| list(s, |x| x.parse::<f64>().ok()), "a comma-separated list of numbers")
    }

    fn complexes(&self, key: &str) -> Result<Option<Vec<Complex64>>, ConfigError> {
        self.get(key, |s| list(s, parse_complex), "a comma-separated list of complex numbers")
    }
}

fn list<T>(s: &str, f: impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
    s.split(',').map(|x| f(x.trim())).collect()
}

/// Parses `a`, `bi`, `a+bi` or `a-bi` (exponents allowed).
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let Some(body) = s.strip_suffix('i') else {
        return s.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| matches!(bytes[i], b'+' | b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let imag = |t: &str| match t {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        t => t.parse::<f64>().ok(),
    };
    match split {
        Some(i) => Some(Complex64::new(body[..i].parse().ok()?, imag(&body[i..])?)),
        None => Some(Complex64::new(0.0, imag(body)?)),
    }
}

/// Interpreted configuration shared by the subcommands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub params: TreeParams,
    pub radius: f64,
    pub level: usize,
    pub transmission: TransmissionConfig,
    pub levels: Vec<usize>,
    pub pencil_count: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub serial: bool,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw = RawConfig::parse(text)?;
        let params = tree_params(&raw)?;
        let radius = raw.f64("interface.radius")?.unwrap_or(1.0);
        let level = raw.usize("interface.N")?.unwrap_or(3);
        let mode_cutoff = raw.usize("interface.mode_cutoff")?;

        let alpha1 = raw.complex("transmission.alpha1")?.unwrap_or(Complex64::new(1.0, 0.0));
        let mut t = TransmissionConfig::new(params.clone(), radius, level, alpha1);
        t.mode_cutoff = mode_cutoff;
        t.alpha0 = match raw.complexes("transmission.alpha0")? {
            None => Alpha0::Constant(Complex64::new(0.0, 0.0)),
            Some(v) if v.len() == 1 => Alpha0::Constant(v[0]),
            Some(v) => Alpha0::Cellwise(v),
        };
        if let Some(c) = raw.complex("transmission.c_root")? {
            t.c_root = c;
        }
        t.n_src = raw.usize("transmission.N_src")?;
        if let Some(o) = raw.usize("transmission.oversampling")? {
            if o == 0 {
                return Err(raw.err("transmission.oversampling", "must be positive".into()));
            }
            t.oversampling = o;
        }
        t.allow_large = raw.bool("transmission.allow_large")?.unwrap_or(false);
        t.radiation = match raw.entries.get("transmission.radiation").map(|e| e.value.as_str()) {
            None | Some("bounded") => Mode0Radiation::Bounded,
            Some("log") => Mode0Radiation::LogGrowth,
            Some(other) => {
                return Err(raw.err("transmission.radiation", format!("expected `bounded` or `log`, got `{other}`")))
            }
        };
        t.tree_source = tree_source(&raw)?;
        t.exterior_source = exterior_source(&raw)?;
        t.manufactured = manufactured(&raw, params.p)?;

        let levels = match raw.get("transmission.levels", |s| list(s, |x| x.parse::<usize>().ok()), "a list of levels")? {
            Some(v) => v,
            None => vec![level, level + 1, level + 2],
        };
        Ok(RunConfig {
            params,
            radius,
            level,
            transmission: t,
            levels,
            pencil_count: raw.usize("transmission.pencil_count")?,
            out_dir: raw.entries.get("run.out_dir").map(|e| PathBuf::from(&e.value)),
            seed: raw.get("run.seed", |s| s.parse::<u64>().ok(), "a non-negative integer")?,
            serial: raw.bool("run.serial")?.unwrap_or(false),
            raw,
        })
    }
}

fn tree_params(raw: &RawConfig) -> Result<TreeParams, ConfigError> {
    let need = |k: &str| -> Result<f64, ConfigError> {
        raw.f64(k)?.ok_or_else(|| ConfigError { line: None, key: Some(k.into()), message: "missing required key".into() })
    };
    let p = raw
        .usize("tree.p")?
        .ok_or_else(|| ConfigError { line: None, key: Some("tree.p".into()), message: "missing required key".into() })?;
    let mut params = TreeParams::geometric(
        p,
        need("tree.ell")?,
        need("tree.omega")?,
        raw.f64("tree.L0")?.unwrap_or(1.0),
        raw.f64("tree.omega0")?.unwrap_or(1.0),
    );
    params.n1 = raw.usize("tree.N1")?.unwrap_or(0);
    for (key, e) in &raw.entries {
        let parts: Vec<&str> = key.split('.').collect();
        if let ["tree", "override", n, k, what] = parts.as_slice() {
            let edge = EdgeRef::new(n.parse().unwrap_or(0), k.parse().unwrap_or(0));
            let v: f64 = e.value.parse().map_err(|_| raw.err(key, format!("expected a number, got `{}`", e.value)))?;
            if *what == "length" {
                params.length_overrides.insert(edge, v);
            } else {
                params.weight_overrides.insert(edge, v);
            }
        }
    }
    Ok(params)
}

fn tree_source(raw: &RawConfig) -> Result<TreeSource, ConfigError> {
    let mut src = TreeSource::default();
    for key in raw.entries.keys() {
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["source", "tree", "gen", n] => {
                let c = raw.reals(key)?.unwrap_or_default();
                src.generations.insert(n.parse().unwrap_or(0), Poly::new(c));
            }
            ["source", "tree", "edge", n, k] => {
                let c = raw.reals(key)?.unwrap_or_default();
                src.edges.insert(EdgeRef::new(n.parse().unwrap_or(0), k.parse().unwrap_or(0)), Poly::new(c));
            }
            _ => {}
        }
    }
    Ok(src)
}

fn exterior_source(raw: &RawConfig) -> Result<RadialSource, ConfigError> {
    let mut modes = BTreeMap::new();
    for key in raw.entries.keys() {
        let parts: Vec<&str> = key.split('.').collect();
        if let ["source", "exterior", "mode", k] = parts.as_slice() {
            let coeffs = raw.complexes(key)?.unwrap_or_default();
            let min_power = raw
                .get(&format!("{key}.min_power"), |s| s.parse::<i32>().ok(), "an integer")?
                .unwrap_or(0);
            modes.insert(k.parse::<i64>().unwrap_or(0), RadialProfile { min_power, coeffs });
        }
        if let ["source", "exterior", "mode", k, "min_power"] = parts.as_slice() {
            if !raw.entries.contains_key(&format!("source.exterior.mode.{k}")) {
                return Err(raw.err(key, "min_power given without coefficients".into()));
            }
        }
    }
    if modes.is_empty() {
        return Ok(RadialSource::none());
    }
    let r_max = raw.f64("source.exterior.r_max")?.ok_or_else(|| ConfigError {
        line: None,
        key: Some("source.exterior.r_max".into()),
        message: "required when exterior source modes are given".into(),
    })?;
    Ok(RadialSource { r_max, modes })
}

fn manufactured(raw: &RawConfig, p: usize) -> Result<Option<Manufactured>, ConfigError> {
    const KIND: &str = "transmission.manufactured.kind";
    let Some(kind) = raw.entries.get(KIND).map(|e| e.value.clone()) else {
        return Ok(None);
    };
    match kind.as_str() {
        "cos" => {
            let k = raw.usize("transmission.manufactured.k")?.unwrap_or(1);
            Ok(Some(Manufactured::Fourier(FourierFn::cos(k as i64, k))))
        }
        "cells" => {
            let level = raw.usize("transmission.manufactured.level")?.unwrap_or(0);
            let key = "transmission.manufactured.values";
            let values = raw
                .complexes(key)?
                .ok_or_else(|| ConfigError { line: None, key: Some(key.into()), message: "required for cells".into() })?;
            let f = PiecewiseConstantFn::new(p, level, values).map_err(|e| raw.err(key, e.to_string()))?;
            Ok(Some(Manufactured::Cells(f)))
        }
        other => Err(raw.err(KIND, format!("expected `cos` or `cells`, got `{other}`"))),
    }
}
