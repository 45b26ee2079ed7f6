//! Run configuration: a flat `key = value` file with sections.
//!
//! Every key has a default, so an empty file (or no file) is a valid
//! configuration. Unknown sections and keys are rejected so that a typo
//! cannot silently fall back to a default.

use std::fmt;
use std::path::{Path, PathBuf};

use hyperphg::indicial::{parse_rational, ExactWeight, Rational};
use hyperphg::weights::WeightKind;
use ini::{Ini, Properties};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}, field {}: {}", self.field, self.message),
            None => write!(f, "config field {}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandName {
    VerifyMetric,
    CurvatureReport,
    WeightScan,
    Indicial,
    Monoid,
    PhgRun,
}

impl CommandName {
    pub const ALL: [CommandName; 6] = [
        CommandName::VerifyMetric,
        CommandName::CurvatureReport,
        CommandName::WeightScan,
        CommandName::Indicial,
        CommandName::Monoid,
        CommandName::PhgRun,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::VerifyMetric => "verify-metric",
            CommandName::CurvatureReport => "curvature-report",
            CommandName::WeightScan => "weight-scan",
            CommandName::Indicial => "indicial",
            CommandName::Monoid => "monoid",
            CommandName::PhgRun => "phg-run",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// Which hyperbolic model a geometry command runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Complex hyperbolic space of complex dimension `m`.
    Complex(usize),
    /// Real hyperbolic space of dimension `n`.
    Real(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub points: usize,
    pub planes: usize,
    pub rho_max: f64,
    pub foliation_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightConfig {
    pub kind: WeightKind,
    pub delta1: f64,
    pub delta2: f64,
    pub resolution: f64,
    /// Constant `λ` added to the functional; enables the shifted-interval check.
    pub lambda: Option<f64>,
    /// Random points for the closed-vs-numeric and identity checks.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumSource {
    EinsteinComplex(u32),
    Explicit { hcal: Rational, lambdas: Vec<Rational> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumConfig {
    pub source: SpectrumSource,
    /// Where an explicit spectrum came from, for the echo.
    pub file: Option<PathBuf>,
    /// Chart step added to the upper weights when `generators` is not given.
    pub step: Rational,
    pub generators: Option<Vec<ExactWeight>>,
    pub ladder: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonoidConfig {
    pub generators: Vec<ExactWeight>,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Model,
    Resonant,
    Custom,
}

impl Scenario {
    fn as_str(self) -> &'static str {
        match self {
            Scenario::Model => "model",
            Scenario::Resonant => "resonant",
            Scenario::Custom => "custom",
        }
    }
}

/// `output += coeff · φ_left · φ_right`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpec {
    pub output: usize,
    pub left: usize,
    pub right: usize,
    pub coeff: f64,
}

/// `coeff · s^sigma · e^{−tau s}` in the forcing of `mode`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    pub mode: usize,
    pub coeff: f64,
    pub sigma: u32,
    pub tau: ExactWeight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhgConfig {
    pub scenario: Scenario,
    pub hcal: Rational,
    pub lambdas: Vec<Rational>,
    pub quadratic: Vec<QuadraticSpec>,
    pub forcing: Vec<ForcingSpec>,
    pub generators: Vec<ExactWeight>,
    pub kernel: Vec<f64>,
    pub s0: f64,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub pullback: f64,
    pub curvature: f64,
    pub foliation: f64,
    pub mean_curvature: f64,
    pub laplacian: f64,
    pub limit: f64,
    pub identity: f64,
    pub slope_fraction: f64,
    pub exact: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pullback: 1e-6,
            curvature: 1e-6,
            foliation: 1e-8,
            mean_curvature: 1e-8,
            laplacian: 1e-5,
            limit: 1e-4,
            identity: 1e-5,
            slope_fraction: 0.05,
            exact: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Option<CommandName>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub model: ModelConfig,
    pub weight: WeightConfig,
    pub spectrum: SpectrumConfig,
    pub monoid: MonoidConfig,
    pub phg: PhgConfig,
    pub tolerances: Tolerances,
}

pub const DEFAULT_SEED: u64 = 1;

const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["command", "seed", "output"]),
    (
        "model",
        &["kind", "m", "n", "points", "planes", "rho_max", "foliation_points"],
    ),
    (
        "weight",
        &["kind", "m", "n", "delta1", "delta2", "resolution", "lambda", "samples"],
    ),
    (
        "spectrum",
        &["preset", "m", "hcal", "lambdas", "file", "step", "generators", "ladder"],
    ),
    ("monoid", &["generators", "bound"]),
    (
        "phg",
        &[
            "scenario",
            "hcal",
            "lambdas",
            "quadratic",
            "forcing",
            "generators",
            "kernel",
            "s0",
            "order",
        ],
    ),
    (
        "tolerances",
        &[
            "pullback",
            "curvature",
            "foliation",
            "mean_curvature",
            "laplacian",
            "limit",
            "identity",
            "slope_fraction",
            "exact",
        ],
    ),
];

/// Line lookup for error messages; rust-ini does not keep positions.
struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        let mut current = String::new();
        for (i, raw) in self.text.lines().enumerate() {
            let l = raw.trim();
            if let Some(rest) = l.strip_prefix('[') {
                current = rest.trim_end_matches(']').trim().to_string();
            } else if current == section {
                if let Some((k, _)) = l.split_once(['=', ':']) {
                    if k.trim() == key {
                        return Some(i + 1);
                    }
                }
            }
        }
        None
    }

    fn section_line(&self, section: &str) -> Option<usize> {
        self.text
            .lines()
            .position(|l| l.trim().strip_prefix('[').map(|r| r.trim_end_matches(']').trim()) == Some(section))
            .map(|i| i + 1)
    }
}

struct Section<'a> {
    name: &'static str,
    props: Option<&'a Properties>,
    src: &'a Source<'a>,
}

impl<'a> Section<'a> {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.src.line_of(self.name, key),
            field: format!("[{}] {key}", self.name),
            message: message.into(),
        }
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.props.and_then(|p| p.get(key)).map(str::trim)
    }

    fn has(&self, key: &str) -> bool {
        self.raw(key).is_some()
    }

    fn parse<T, E: fmt::Display>(
        &self,
        key: &str,
        default: T,
        f: impl FnOnce(&str) -> Result<T, E>,
    ) -> Result<T, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => f(v).map_err(|e| self.err(key, format!("'{v}': {e}"))),
        }
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.parse(key, default, str::parse::<usize>)
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.parse(key, default, parse_real)?;
        if !v.is_finite() {
            return Err(self.err(key, "must be finite"));
        }
        Ok(v)
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.f64(key, default)?;
        if v <= 0.0 {
            return Err(self.err(key, format!("must be > 0, got {v}")));
        }
        Ok(v)
    }

    fn rational(&self, key: &str, default: Rational) -> Result<Rational, ConfigError> {
        self.parse(key, default, parse_rational)
    }

    fn list<T, E: fmt::Display>(
        &self,
        key: &str,
        default: Vec<T>,
        f: impl Fn(&str) -> Result<T, E>,
    ) -> Result<Vec<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => split_list(v)
                .map(|item| f(item).map_err(|e| self.err(key, format!("'{item}': {e}"))))
                .collect(),
        }
    }

    fn weights(&self, key: &str, default: Vec<ExactWeight>) -> Result<Vec<ExactWeight>, ConfigError> {
        self.list(key, default, str::parse::<ExactWeight>)
    }
}

/// A float literal or an exact fraction such as `5/4`.
fn parse_real(v: &str) -> Result<f64, String> {
    if v.contains('/') {
        let q = parse_rational(v).map_err(|e| e.to_string())?;
        return Ok(*q.numer() as f64 / *q.denom() as f64);
    }
    v.parse::<f64>().map_err(|e| e.to_string())
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn w(s: &str) -> ExactWeight {
    s.parse().expect("built-in weight literal")
}

fn dimension(sec: &Section, key: &str, default: usize) -> Result<usize, ConfigError> {
    let v = sec.usize(key, default)?;
    let min = if key == "n" { 3 } else { 2 };
    if v < min {
        return Err(sec.err(key, format!("must be >= {min}, got {v}")));
    }
    if v > 12 {
        return Err(sec.err(key, format!("must be <= 12, got {v}")));
    }
    Ok(v)
}

fn parse_model(sec: &Section) -> Result<ModelConfig, ConfigError> {
    let kind = match sec.raw("kind").unwrap_or("complex") {
        "complex" => {
            if sec.has("n") {
                return Err(sec.err("n", "the complex model takes m"));
            }
            ModelKind::Complex(dimension(sec, "m", 2)?)
        }
        "real" => {
            if sec.has("m") {
                return Err(sec.err("m", "the real model takes n"));
            }
            ModelKind::Real(dimension(sec, "n", 3)?)
        }
        other => return Err(sec.err("kind", format!("expected complex or real, got '{other}'"))),
    };
    let points = sec.usize("points", 100)?;
    let planes = sec.usize("planes", 500)?;
    let foliation_points = sec.usize("foliation_points", 50)?;
    for (k, v) in [
        ("points", points),
        ("planes", planes),
        ("foliation_points", foliation_points),
    ] {
        if v == 0 {
            return Err(sec.err(k, "must be >= 1"));
        }
    }
    let rho_max = sec.positive("rho_max", 3.0)?;
    if rho_max <= 0.1 {
        return Err(sec.err(
            "rho_max",
            format!("must exceed the lower sampling bound 0.1, got {rho_max}"),
        ));
    }
    Ok(ModelConfig {
        kind,
        points,
        planes,
        rho_max,
        foliation_points,
    })
}

fn parse_weight(sec: &Section) -> Result<WeightConfig, ConfigError> {
    // dimensions and δ ranges are hypotheses checked by the command, so they
    // only need to parse here
    let kind = match sec.raw("kind").unwrap_or("real") {
        "real" => WeightKind::Real(sec.usize("n", 4)?),
        "complex" => WeightKind::Complex(sec.usize("m", 2)?),
        other => return Err(sec.err("kind", format!("expected real or complex, got '{other}'"))),
    };
    let lambda = match sec.raw("lambda") {
        None => None,
        Some(_) => Some(sec.f64("lambda", 0.0)?),
    };
    let resolution = sec.positive("resolution", 0.05)?;
    let samples = sec.usize("samples", 20)?;
    if samples == 0 {
        return Err(sec.err("samples", "must be >= 1"));
    }
    Ok(WeightConfig {
        kind,
        delta1: sec.f64("delta1", 1.0)?,
        delta2: sec.f64("delta2", 1.0)?,
        resolution,
        lambda,
        samples,
    })
}

fn parse_spectrum(sec: &Section, base: &Path) -> Result<SpectrumConfig, ConfigError> {
    let explicit = sec.has("hcal") || sec.has("lambdas");
    let mut file = None;
    let source = if let Some(path) = sec.raw("file") {
        if explicit || sec.has("preset") {
            return Err(sec.err("file", "give either file, preset, or hcal/lambdas"));
        }
        let p = base.join(path);
        let text =
            std::fs::read_to_string(&p).map_err(|e| sec.err("file", format!("cannot read {}: {e}", p.display())))?;
        let src = spectrum_from_text(&text).map_err(|e| ConfigError {
            line: e.line,
            field: format!("{} {}", p.display(), e.field),
            message: e.message,
        })?;
        file = Some(p);
        src
    } else if explicit {
        if sec.has("preset") {
            return Err(sec.err("preset", "give either preset or hcal/lambdas"));
        }
        explicit_spectrum(sec)?
    } else {
        match sec.raw("preset").unwrap_or("einstein-complex") {
            "einstein-complex" => {
                let m = dimension(sec, "m", 2)?;
                SpectrumSource::EinsteinComplex(m as u32)
            }
            other => return Err(sec.err("preset", format!("unknown preset '{other}'"))),
        }
    };
    if explicit && sec.has("m") {
        return Err(sec.err("m", "m only applies to the preset"));
    }
    let default_step = match source {
        SpectrumSource::EinsteinComplex(_) => Rational::new(1, 2),
        SpectrumSource::Explicit { .. } => Rational::from_integer(1),
    };
    let step = sec.rational("step", default_step)?;
    if step <= Rational::from_integer(0) {
        return Err(sec.err("step", "must be > 0"));
    }
    let generators = match sec.raw("generators") {
        None => None,
        Some(_) => Some(positive_weights(sec, "generators", vec![])?),
    };
    let ladder = sec.usize("ladder", 4)?;
    Ok(SpectrumConfig {
        source,
        file,
        step,
        generators,
        ladder,
    })
}

fn explicit_spectrum(sec: &Section) -> Result<SpectrumSource, ConfigError> {
    let hcal = sec.rational("hcal", Rational::from_integer(0))?;
    if hcal <= Rational::from_integer(0) {
        return Err(sec.err("hcal", "required and must be > 0"));
    }
    let lambdas = sec.list("lambdas", vec![], parse_rational)?;
    if lambdas.is_empty() {
        return Err(sec.err("lambdas", "at least one eigenvalue is required"));
    }
    Ok(SpectrumSource::Explicit { hcal, lambdas })
}

/// A spectrum file holds `hcal` and `lambdas` keys, with no section header.
pub fn spectrum_from_text(text: &str) -> Result<SpectrumSource, ConfigError> {
    let ini = load(text)?;
    let src = Source { text };
    let general = ini.general_section();
    for (k, _) in general.iter() {
        if k != "hcal" && k != "lambdas" {
            return Err(ConfigError {
                line: src.line_of("", k),
                field: k.to_string(),
                message: "unknown key in spectrum file (expected hcal, lambdas)".into(),
            });
        }
    }
    if let Some(s) = ini.sections().flatten().next() {
        return Err(ConfigError {
            line: src.section_line(s),
            field: format!("[{s}]"),
            message: "spectrum files take no sections".into(),
        });
    }
    explicit_spectrum(&Section {
        name: "",
        props: Some(general),
        src: &src,
    })
}

fn positive_weights(sec: &Section, key: &str, default: Vec<ExactWeight>) -> Result<Vec<ExactWeight>, ConfigError> {
    let gens = sec.weights(key, default)?;
    if gens.is_empty() {
        return Err(sec.err(key, "at least one generator is required"));
    }
    if let Some(g) = gens.iter().find(|g| g <= &&ExactWeight::zero()) {
        return Err(sec.err(key, format!("generator {g} is not positive")));
    }
    Ok(gens)
}

fn parse_monoid(sec: &Section) -> Result<MonoidConfig, ConfigError> {
    let generators = positive_weights(sec, "generators", vec![w("1"), w("3")])?;
    let bound = sec.f64("bound", 6.0)?;
    if bound < 0.0 {
        return Err(sec.err("bound", "must be >= 0"));
    }
    if let Some(g) = generators.iter().min() {
        // the enumeration size is about (bound/g)^len; keep it interactive
        if (bound / g.value()).powi(generators.len().min(6) as i32) > 1e7 {
            return Err(sec.err("bound", "enumeration would exceed 1e7 candidates"));
        }
    }
    Ok(MonoidConfig { generators, bound })
}

fn parse_quadratic(item: &str, modes: usize) -> Result<QuadraticSpec, String> {
    let parts: Vec<&str> = item.split(':').map(str::trim).collect();
    let [o, l, r, c] = parts[..] else {
        return Err("expected output:left:right:coeff".into());
    };
    let idx = |s: &str| -> Result<usize, String> {
        let v: usize = s.parse().map_err(|_| format!("bad mode index '{s}'"))?;
        if v >= modes {
            return Err(format!("mode {v} out of range (0..{modes})"));
        }
        Ok(v)
    };
    let coeff: f64 = c.parse().map_err(|_| format!("bad coefficient '{c}'"))?;
    if !coeff.is_finite() {
        return Err("coefficient must be finite".into());
    }
    Ok(QuadraticSpec {
        output: idx(o)?,
        left: idx(l)?,
        right: idx(r)?,
        coeff,
    })
}

fn parse_forcing(item: &str, modes: usize) -> Result<ForcingSpec, String> {
    let parts: Vec<&str> = item.split(':').map(str::trim).collect();
    let [m, c, s, t] = parts[..] else {
        return Err("expected mode:coeff:sigma:tau".into());
    };
    let mode: usize = m.parse().map_err(|_| format!("bad mode index '{m}'"))?;
    if mode >= modes {
        return Err(format!("mode {mode} out of range (0..{modes})"));
    }
    let coeff: f64 = c.parse().map_err(|_| format!("bad coefficient '{c}'"))?;
    if !coeff.is_finite() {
        return Err("coefficient must be finite".into());
    }
    Ok(ForcingSpec {
        mode,
        coeff,
        sigma: s.parse().map_err(|_| format!("bad power '{s}'"))?,
        tau: t.parse().map_err(|e| format!("{e}"))?,
    })
}

fn parse_phg(sec: &Section) -> Result<PhgConfig, ConfigError> {
    let scenario = match sec.raw("scenario").unwrap_or("model") {
        "model" => Scenario::Model,
        "resonant" => Scenario::Resonant,
        "custom" => Scenario::Custom,
        other => return Err(sec.err("scenario", format!("expected model, resonant or custom, got '{other}'"))),
    };
    let q = Rational::from_integer;
    let (hcal, lambdas, quad, forcing, gens, kernel) = match scenario {
        Scenario::Model => ("3", "0", "0:0:0:1", "0:1:0:4", "1, 3", "0"),
        Scenario::Resonant => ("3", "0, 4", "1:1:1:1", "1:1:0:4", "1, 3, 4", "0, 0.5"),
        Scenario::Custom => ("", "", "", "", "", ""),
    };
    if scenario != Scenario::Custom {
        // named scenarios are fixed problems; only numerics may be tuned
        for key in ["hcal", "lambdas", "quadratic", "forcing", "generators", "kernel"] {
            if sec.has(key) {
                return Err(sec.err(key, format!("not adjustable for scenario {}", scenario.as_str())));
            }
        }
    }
    let text = |key: &str, default: &'static str| sec.raw(key).unwrap_or(default);
    let hcal = {
        let v = text("hcal", hcal);
        parse_rational(v).map_err(|e| sec.err("hcal", format!("'{v}': {e}")))?
    };
    if hcal <= q(0) {
        return Err(sec.err("hcal", "must be > 0"));
    }
    let lambdas: Vec<Rational> = split_list(text("lambdas", lambdas))
        .map(|v| parse_rational(v).map_err(|e| sec.err("lambdas", format!("'{v}': {e}"))))
        .collect::<Result<_, _>>()?;
    if lambdas.is_empty() {
        return Err(sec.err("lambdas", "at least one mode is required"));
    }
    let modes = lambdas.len();
    let quadratic = split_list(text("quadratic", quad))
        .map(|v| parse_quadratic(v, modes).map_err(|e| sec.err("quadratic", format!("'{v}': {e}"))))
        .collect::<Result<_, _>>()?;
    let forcing = split_list(text("forcing", forcing))
        .map(|v| parse_forcing(v, modes).map_err(|e| sec.err("forcing", format!("'{v}': {e}"))))
        .collect::<Result<_, _>>()?;
    let generators: Vec<ExactWeight> = split_list(text("generators", gens))
        .map(|v| {
            v.parse::<ExactWeight>()
                .map_err(|e| sec.err("generators", format!("'{v}': {e}")))
        })
        .collect::<Result<_, _>>()?;
    if generators.is_empty() {
        return Err(sec.err("generators", "at least one generator is required"));
    }
    if let Some(g) = generators.iter().find(|g| g <= &&ExactWeight::zero()) {
        return Err(sec.err("generators", format!("generator {g} is not positive")));
    }
    let mut kernel: Vec<f64> = split_list(text("kernel", kernel))
        .map(|v| match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(sec.err("kernel", format!("'{v}' is not a finite number"))),
        })
        .collect::<Result<_, _>>()?;
    if kernel.is_empty() {
        kernel = vec![0.0; modes];
    }
    if kernel.len() != modes {
        return Err(sec.err("kernel", format!("{} values for {modes} modes", kernel.len())));
    }
    let s0 = sec.positive("s0", hyperphg::phg::DEFAULT_S0)?;
    let order = sec.usize("order", 4)?;
    if order > 12 {
        return Err(sec.err("order", format!("must be <= 12, got {order}")));
    }
    Ok(PhgConfig {
        scenario,
        hcal,
        lambdas,
        quadratic,
        forcing,
        generators,
        kernel,
        s0,
        order,
    })
}

fn parse_tolerances(sec: &Section) -> Result<Tolerances, ConfigError> {
    let d = Tolerances::default();
    Ok(Tolerances {
        pullback: sec.positive("pullback", d.pullback)?,
        curvature: sec.positive("curvature", d.curvature)?,
        foliation: sec.positive("foliation", d.foliation)?,
        mean_curvature: sec.positive("mean_curvature", d.mean_curvature)?,
        laplacian: sec.positive("laplacian", d.laplacian)?,
        limit: sec.positive("limit", d.limit)?,
        identity: sec.positive("identity", d.identity)?,
        slope_fraction: sec.positive("slope_fraction", d.slope_fraction)?,
        exact: sec.positive("exact", d.exact)?,
    })
}

fn load(text: &str) -> Result<Ini, ConfigError> {
    Ini::load_from_str_noescape(text).map_err(|e| ConfigError {
        line: Some(e.line + 1),
        field: "syntax".into(),
        message: e.msg.to_string(),
    })
}

impl RunConfig {
    /// Parses configuration text. Relative file references resolve against `base`.
    pub fn from_text(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let ini = load(text)?;
        let src = Source { text };
        if let Some((k, _)) = ini.general_section().iter().next() {
            return Err(ConfigError {
                line: src.line_of("", k),
                field: k.to_string(),
                message: "keys must follow a [section] header".into(),
            });
        }
        for (name, props) in ini.iter() {
            let Some(name) = name else { continue };
            let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| *s == name) else {
                return Err(ConfigError {
                    line: src.section_line(name),
                    field: format!("[{name}]"),
                    message: "unknown section".into(),
                });
            };
            if ini.section_all(Some(name)).count() > 1 {
                return Err(ConfigError {
                    line: src.section_line(name),
                    field: format!("[{name}]"),
                    message: "section given more than once".into(),
                });
            }
            for (k, _) in props.iter() {
                let field = format!("[{name}] {k}");
                if !keys.contains(&k) {
                    return Err(ConfigError {
                        line: src.line_of(name, k),
                        field,
                        message: "unknown key".into(),
                    });
                }
                if props.get_all(k).count() > 1 {
                    return Err(ConfigError {
                        line: src.line_of(name, k),
                        field,
                        message: "key given more than once".into(),
                    });
                }
            }
        }
        let section = |name: &'static str| Section {
            name,
            props: ini.section(Some(name)),
            src: &src,
        };
        let run = section("run");
        let command = match run.raw("command") {
            None => None,
            Some(c) => Some(CommandName::parse(c).ok_or_else(|| run.err("command", format!("unknown command '{c}'")))?),
        };
        Ok(RunConfig {
            command,
            seed: run.parse("seed", DEFAULT_SEED, str::parse::<u64>)?,
            output: run.raw("output").map(PathBuf::from),
            model: parse_model(&section("model"))?,
            weight: parse_weight(&section("weight"))?,
            spectrum: parse_spectrum(&section("spectrum"), base)?,
            monoid: parse_monoid(&section("monoid"))?,
            phg: parse_phg(&section("phg"))?,
            tolerances: parse_tolerances(&section("tolerances"))?,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            field: "--config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base)
    }

    /// All defaults.
    pub fn defaults() -> Self {
        Self::from_text("", Path::new(".")).expect("defaults are valid")
    }

    /// Effective values of the sections `command` reads, plus the seed.
    pub fn echo(&self, command: CommandName) -> Value {
        let t = &self.tolerances;
        let tolerances = json!({
            "pullback": t.pullback, "curvature": t.curvature, "foliation": t.foliation,
            "mean_curvature": t.mean_curvature, "laplacian": t.laplacian, "limit": t.limit,
            "identity": t.identity, "slope_fraction": t.slope_fraction, "exact": t.exact,
        });
        let exprs = |v: &[ExactWeight]| v.iter().map(ExactWeight::expr).collect::<Vec<_>>();
        let section = match command {
            CommandName::VerifyMetric | CommandName::CurvatureReport => {
                let m = &self.model;
                let (kind, dim) = match m.kind {
                    ModelKind::Complex(d) => ("complex", json!({ "m": d })),
                    ModelKind::Real(d) => ("real", json!({ "n": d })),
                };
                json!({ "model": { "kind": kind, "dimension": dim, "points": m.points, "planes": m.planes,
                    "rho_max": m.rho_max, "foliation_points": m.foliation_points } })
            }
            CommandName::WeightScan => {
                let w = &self.weight;
                json!({ "weight": { "kind": w.kind.label(), "delta1": w.delta1, "delta2": w.delta2,
                    "resolution": w.resolution, "lambda": w.lambda, "samples": w.samples } })
            }
            CommandName::Indicial => {
                let s = &self.spectrum;
                let source = match &s.source {
                    SpectrumSource::EinsteinComplex(m) => json!({ "preset": "einstein-complex", "m": m }),
                    SpectrumSource::Explicit { hcal, lambdas } => json!({
                        "hcal": hcal.to_string(),
                        "lambdas": lambdas.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
                        "file": s.file.as_ref().map(|p| p.display().to_string()),
                    }),
                };
                json!({ "spectrum": { "source": source, "step": s.step.to_string(),
                    "generators": s.generators.as_deref().map(exprs), "ladder": s.ladder } })
            }
            CommandName::Monoid => json!({ "monoid": {
                "generators": exprs(&self.monoid.generators), "bound": self.monoid.bound } }),
            CommandName::PhgRun => {
                let p = &self.phg;
                json!({ "phg": {
                    "scenario": p.scenario.as_str(),
                    "hcal": p.hcal.to_string(),
                    "lambdas": p.lambdas.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
                    "quadratic": p.quadratic.iter()
                        .map(|q| format!("{}:{}:{}:{}", q.output, q.left, q.right, q.coeff)).collect::<Vec<_>>(),
                    "forcing": p.forcing.iter()
                        .map(|f| format!("{}:{}:{}:{}", f.mode, f.coeff, f.sigma, f.tau.expr())).collect::<Vec<_>>(),
                    "generators": exprs(&p.generators),
                    "kernel": p.kernel,
                    "s0": p.s0,
                    "order": p.order,
                } })
            }
        };
        let mut v = section;
        v["seed"] = json!(self.seed);
        v["tolerances"] = tolerances;
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_text(text, Path::new("."))
    }

    #[test]
    fn defaults_are_the_documented_ones() {
        let c = RunConfig::defaults();
        assert_eq!(c.seed, 1);
        assert_eq!(c.model.kind, ModelKind::Complex(2));
        assert_eq!((c.model.points, c.model.planes), (100, 500));
        assert_eq!(c.spectrum.source, SpectrumSource::EinsteinComplex(2));
        assert_eq!(c.phg.generators, vec![w("1"), w("3")]);
        assert_eq!(c.tolerances, Tolerances::default());
    }

    #[test]
    fn invalid_dimension_names_line_and_field() {
        let e = parse("[run]\nseed = 4\n\n[model]\nkind = complex\nm = 1\n").unwrap_err();
        assert_eq!(e.line, Some(6));
        assert_eq!(e.field, "[model] m");
        assert!(e.message.contains(">= 2"), "{e}");
    }

    #[test]
    fn rejects_unknown_and_nonpositive() {
        assert_eq!(parse("[model]\nmm = 3\n").unwrap_err().message, "unknown key");
        assert_eq!(parse("[x]\n").unwrap_err().line, Some(1));
        let e = parse("[tolerances]\n# comment\nexact = 0\n").unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (Some(3), "[tolerances] exact"));
        assert!(parse("[phg]\nscenario = model\nhcal = 4\n").is_err());
        assert!(parse("seed = 3\n").is_err());
    }

    #[test]
    fn custom_phg_lists() {
        let c = parse(
            "[phg]\nscenario = custom\nhcal = 3\nlambdas = 0, 4\nquadratic = 1:1:1:1\n\
             forcing = 1:1:0:4, 1:-2:1:6\ngenerators = 1, 3, 4\nkernel = 0, 0.5\n",
        )
        .unwrap();
        assert_eq!(c.phg.forcing.len(), 2);
        assert_eq!(c.phg.forcing[1].sigma, 1);
        assert_eq!(c.phg.kernel, vec![0.0, 0.5]);
        let e =
            parse("[phg]\nscenario = custom\nhcal = 3\nlambdas = 0\nforcing = 2:1:0:4\ngenerators = 1\n").unwrap_err();
        assert!(e.message.contains("out of range"), "{e}");
    }

    #[test]
    fn spectrum_file_text() {
        let s = spectrum_from_text("hcal = 3\nlambdas = 0, 5/4\n").unwrap();
        assert_eq!(
            s,
            SpectrumSource::Explicit {
                hcal: Rational::from_integer(3),
                lambdas: vec![Rational::from_integer(0), Rational::new(5, 4)]
            }
        );
        assert_eq!(spectrum_from_text("hcal = 3\nfoo = 1\n").unwrap_err().line, Some(2));
    }
}
