//! TOML run configuration.
//!
//! Parsing walks the document by hand so that every problem in a file is
//! reported at once, each with the dotted key it belongs to. Unknown
//! sections and keys are errors.
//!
//! ```toml
//! [domain]
//! length = 1.0
//!
//! [space]
//! n_modes = 8
//! # n_collocation defaults to max(ceil(3n/2), p n)
//!
//! [kernel]
//! spec = "exp(1,1)"        # or "singular(delta,alpha)" or "none"
//! n_nodes = 64
//!
//! [f]
//! coeffs = [1.0, 0.0, -1.0, 0.0]   # descending powers: u^3 - u
//!
//! [a]
//! kind = "constant"
//! value = 1.0
//!
//! [initial]
//! u0 = "sine"
//! past = [[[1.0, 1.0]]]    # per mode: list of [amplitude, rate]
//!
//! [time]
//! dt = 1e-3
//! horizon = 1.0
//! ```

use memheat_core::history::PastTrajectory;
use memheat_core::kernel::{make_kernel, KernelFamily, MemoryKernel};
use memheat_core::solver::{GammaChoice, HistoryTransport, ProblemConfig, ProblemSetup, Scheme};
use memheat_core::spectral::{eigenbasis, project, DiffusionLaw, Nonlinearity, NonlocalCoefficient, SpectralField};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use toml::{Table, Value};

/// One problem found while reading a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

/// Everything wrong with a configuration file.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.issues.len();
        writeln!(f, "{n} configuration error{}:", if n == 1 { "" } else { "s" })?;
        for i in &self.issues {
            writeln!(f, "  {}: {}", i.key, i.message)?;
        }
        Ok(())
    }
}

impl ConfigError {
    fn single(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            issues: vec![ConfigIssue {
                key: key.to_string(),
                message: message.into(),
            }],
        }
    }

    pub fn mentions(&self, key: &str) -> bool {
        self.issues.iter().any(|i| i.key == key)
    }
}

/// A spatial function given either by modal coefficients or by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Named(String),
    Modal(Vec<f64>),
}

pub const NAMED_FIELDS: &[&str] = &["zero", "one", "x", "parabola", "sine"];

impl FieldSpec {
    pub fn to_field(&self, basis: &memheat_core::spectral::SpatialBasis) -> SpectralField {
        let l = basis.length();
        match self {
            FieldSpec::Modal(c) => SpectralField::from_coeffs(c.clone()),
            FieldSpec::Named(name) => match name.as_str() {
                "one" => project(|_| 1.0, basis),
                "x" => project(|x| x, basis),
                "parabola" => project(|x| x * (l - x), basis),
                "sine" => SpectralField::mode(basis.n_modes(), 1, (l / 2.0).sqrt()),
                _ => SpectralField::zeros(basis.n_modes()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSection {
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSection {
    pub n_modes: usize,
    pub n_collocation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSection {
    /// `exp(c,delta)`, `singular(delta,alpha)` or `none`
    pub spec: String,
    pub n_nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points_per_cell: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// unset when `gamma` is given explicitly
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_safety: Option<f64>,
    /// rate used for the decay-hypothesis check, defaults to the kernel's δ
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FSection {
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ASection {
    Constant { value: f64 },
    ClampedAffine { base: f64, slope: f64, m: f64, m_tilde: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LSection {
    pub weight: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GSection {
    pub forcing: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSection {
    pub u0: FieldSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub past: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub past_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSection {
    pub dt: f64,
    pub horizon: f64,
    pub scheme: String,
    pub transport: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub stride: usize,
    pub seed: u64,
}

/// Declarative description of one run, with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub space: SpaceSection,
    pub kernel: KernelSection,
    pub f: FSection,
    pub a: ASection,
    pub l: LSection,
    pub g: GSection,
    pub initial: InitialSection,
    pub time: TimeSection,
    pub output: OutputSection,
}

/// Tracks which keys of a table were read.
struct Section<'a> {
    name: &'a str,
    table: Option<&'a Table>,
    seen: Vec<&'a str>,
}

impl<'a> Section<'a> {
    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.name)
    }

    fn get(&mut self, k: &'a str) -> Option<&'a Value> {
        self.seen.push(k);
        self.table.and_then(|t| t.get(k))
    }

    fn finish(self, issues: &mut Vec<ConfigIssue>) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.seen.contains(&k.as_str()) {
                    issues.push(ConfigIssue {
                        key: format!("{}.{k}", self.name),
                        message: "unknown key".into(),
                    });
                }
            }
        }
    }
}

struct Reader {
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn push(&mut self, key: String, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            key,
            message: message.into(),
        });
    }

    fn float(&mut self, s: &mut Section<'_>, k: &'static str, default: Option<f64>) -> Option<f64> {
        match s.get(k) {
            None => {
                if default.is_none() {
                    self.push(s.key(k), "missing required key");
                }
                default
            }
            Some(Value::Float(x)) => Some(*x),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(v) => {
                self.push(s.key(k), format!("expected a number, found {}", v.type_str()));
                None
            }
        }
    }

    fn opt_float(&mut self, s: &mut Section<'_>, k: &'static str) -> Option<f64> {
        if s.table.is_some_and(|t| t.contains_key(k)) {
            self.float(s, k, None)
        } else {
            s.seen.push(k);
            None
        }
    }

    fn count(&mut self, s: &mut Section<'_>, k: &'static str, default: Option<usize>) -> Option<usize> {
        match s.get(k) {
            None => {
                if default.is_none() {
                    self.push(s.key(k), "missing required key");
                }
                default
            }
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as usize),
            Some(v) => {
                self.push(s.key(k), format!("expected a non-negative integer, found {v}"));
                None
            }
        }
    }

    fn text(&mut self, s: &mut Section<'_>, k: &'static str, default: Option<&str>) -> Option<String> {
        match s.get(k) {
            None => {
                if default.is_none() {
                    self.push(s.key(k), "missing required key");
                }
                default.map(str::to_string)
            }
            Some(Value::String(x)) => Some(x.clone()),
            Some(v) => {
                self.push(s.key(k), format!("expected a string, found {}", v.type_str()));
                None
            }
        }
    }

    fn floats(&mut self, key: String, v: &Value) -> Option<Vec<f64>> {
        let Value::Array(items) = v else {
            self.push(key, format!("expected an array of numbers, found {}", v.type_str()));
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Value::Float(x) => out.push(*x),
                Value::Integer(i) => out.push(*i as f64),
                _ => {
                    self.push(key, format!("expected an array of numbers, found element {item}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn field(&mut self, s: &mut Section<'_>, k: &'static str, n: Option<usize>) -> Option<FieldSpec> {
        let key = s.key(k);
        match s.get(k) {
            None => Some(FieldSpec::Named("zero".into())),
            Some(Value::String(name)) => {
                if NAMED_FIELDS.contains(&name.as_str()) {
                    Some(FieldSpec::Named(name.clone()))
                } else {
                    self.push(key, format!("unknown function `{name}`, expected one of {NAMED_FIELDS:?}"));
                    None
                }
            }
            Some(v) => {
                let c = self.floats(key.clone(), v)?;
                if let Some(n) = n {
                    if c.len() != n {
                        self.push(key, format!("expected {n} modal coefficients, found {}", c.len()));
                        return None;
                    }
                }
                Some(FieldSpec::Modal(c))
            }
        }
    }

    fn past(&mut self, key: String, v: &Value, n: Option<usize>) -> Option<Vec<Vec<[f64; 2]>>> {
        let bad = "expected a list per mode of [amplitude, rate] pairs";
        let Value::Array(modes) = v else {
            self.push(key, bad);
            return None;
        };
        if let Some(n) = n {
            if modes.len() > n {
                self.push(key, format!("{} modes given, the basis has {n}", modes.len()));
                return None;
            }
        }
        let mut out = Vec::with_capacity(modes.len());
        for mode in modes {
            let Value::Array(terms) = mode else {
                self.push(key, bad);
                return None;
            };
            let mut row = Vec::with_capacity(terms.len());
            for term in terms {
                let pair = self.floats(key.clone(), term)?;
                if pair.len() != 2 {
                    self.push(key, bad);
                    return None;
                }
                row.push([pair[0], pair[1]]);
            }
            out.push(row);
        }
        Some(out)
    }
}

const SECTIONS: &[&str] = &["domain", "space", "kernel", "f", "a", "l", "g", "initial", "time", "output"];

fn section<'a>(doc: &'a Table, name: &'a str, r: &mut Reader) -> Section<'a> {
    let table = match doc.get(name) {
        None => None,
        Some(Value::Table(t)) => Some(t),
        Some(v) => {
            r.push(name.to_string(), format!("expected a table, found {}", v.type_str()));
            None
        }
    };
    Section {
        name,
        table,
        seen: Vec::new(),
    }
}

/// Default collocation count: enough points to resolve quadratic products
/// and the nonlinearity without aliasing.
pub fn default_collocation(n_modes: usize, f_coeffs: &[f64]) -> usize {
    let p = f_coeffs.len().div_ceil(2).max(1);
    (3 * n_modes).div_ceil(2).max(p * n_modes).max(2)
}

/// Parses a configuration document. All problems are collected.
pub fn parse_str(text: &str) -> Result<RunConfig, ConfigError> {
    let doc: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::single("<document>", e.message().to_string()))?;
    let mut r = Reader { issues: Vec::new() };
    for k in doc.keys() {
        if !SECTIONS.contains(&k.as_str()) {
            r.push(k.clone(), "unknown section");
        }
    }

    let mut s = section(&doc, "domain", &mut r);
    let length = r.float(&mut s, "length", Some(1.0));
    s.finish(&mut r.issues);

    let mut s = section(&doc, "f", &mut r);
    let coeffs = s.get("coeffs").and_then(|v| r.floats("f.coeffs".into(), v));
    if s.table.is_none_or(|t| !t.contains_key("coeffs")) {
        r.push("f.coeffs".into(), "missing required key (use [] for f = 0)");
    }
    s.finish(&mut r.issues);

    let mut s = section(&doc, "space", &mut r);
    let n_modes = r.count(&mut s, "n_modes", None);
    let n_colloc = {
        let default = match (n_modes, &coeffs) {
            (Some(n), Some(c)) => Some(default_collocation(n, c)),
            _ => Some(0),
        };
        r.count(&mut s, "n_collocation", default)
    };
    s.finish(&mut r.issues);

    let mut s = section(&doc, "kernel", &mut r);
    let spec = r.text(&mut s, "spec", Some("none"));
    let n_nodes = r.count(&mut s, "n_nodes", Some(64));
    let s_max = r.opt_float(&mut s, "s_max");
    let ppc = if s.table.is_some_and(|t| t.contains_key("points_per_cell")) {
        r.count(&mut s, "points_per_cell", None)
    } else {
        s.seen.push("points_per_cell");
        None
    };
    let gamma = r.opt_float(&mut s, "gamma");
    let gamma_safety = r.float(&mut s, "gamma_safety", Some(0.5));
    let delta_test = r.opt_float(&mut s, "delta_test");
    let has_safety = s.table.is_some_and(|t| t.contains_key("gamma_safety"));
    s.finish(&mut r.issues);
    if gamma.is_some() && has_safety {
        r.push("kernel.gamma".into(), "give either kernel.gamma or kernel.gamma_safety, not both");
    }
    if let Some(spec) = &spec {
        if spec != "none" {
            match spec.parse::<KernelFamily>().and_then(make_kernel) {
                Ok(_) => {}
                Err(e) => r.push("kernel.spec".into(), e.to_string()),
            }
        }
    }
    if let Some(x) = gamma_safety {
        if !(x > 0.0 && x < 1.0) {
            r.push("kernel.gamma_safety".into(), format!("must lie strictly inside (0, 1), got {x}"));
        }
    }
    if let Some(nn) = n_nodes {
        if nn == 0 {
            r.push("kernel.n_nodes".into(), "must be positive");
        }
    }

    let mut s = section(&doc, "a", &mut r);
    let kind = r.text(&mut s, "kind", Some("constant"));
    let a = match kind.as_deref() {
        Some("constant") => {
            let value = r.float(&mut s, "value", Some(1.0));
            value.map(|value| ASection::Constant { value })
        }
        Some("clamped_affine") => {
            let base = r.float(&mut s, "base", None);
            let slope = r.float(&mut s, "slope", Some(0.0));
            let m = r.float(&mut s, "m", None);
            let m_tilde = r.float(&mut s, "m_tilde", None);
            match (base, slope, m, m_tilde) {
                (Some(base), Some(slope), Some(m), Some(m_tilde)) => Some(ASection::ClampedAffine {
                    base,
                    slope,
                    m,
                    m_tilde,
                }),
                _ => None,
            }
        }
        Some(other) => {
            r.push("a.kind".into(), format!("expected `constant` or `clamped_affine`, found `{other}`"));
            None
        }
        None => None,
    };
    s.finish(&mut r.issues);

    let mut s = section(&doc, "l", &mut r);
    let l_weight = r.field(&mut s, "weight", n_modes);
    s.finish(&mut r.issues);
    let mut s = section(&doc, "g", &mut r);
    let forcing = r.field(&mut s, "forcing", n_modes);
    s.finish(&mut r.issues);

    let mut s = section(&doc, "initial", &mut r);
    let u0 = r.field(&mut s, "u0", n_modes);
    let past = s.get("past").and_then(|v| r.past("initial.past".into(), v, n_modes));
    let past_csv = r.text(&mut s, "past_csv", Some("")).filter(|p| !p.is_empty()).map(PathBuf::from);
    s.finish(&mut r.issues);
    if past.is_some() && past_csv.is_some() {
        r.push("initial.past".into(), "give either initial.past or initial.past_csv, not both");
    }

    let mut s = section(&doc, "time", &mut r);
    let dt = r.float(&mut s, "dt", None);
    let horizon = r.float(&mut s, "horizon", None);
    let scheme = r.text(&mut s, "scheme", Some("imex"));
    let transport = r.text(&mut s, "transport", Some("characteristic"));
    s.finish(&mut r.issues);
    if let Some(sc) = &scheme {
        if sc != "imex" && sc != "rk4" {
            r.push("time.scheme".into(), format!("expected `imex` or `rk4`, found `{sc}`"));
        }
    }
    if let Some(tr) = &transport {
        if tr != "characteristic" && tr != "interpolated" {
            r.push(
                "time.transport".into(),
                format!("expected `characteristic` or `interpolated`, found `{tr}`"),
            );
        }
    }

    let mut s = section(&doc, "output", &mut r);
    let dir = r.text(&mut s, "dir", Some("out")).map(PathBuf::from);
    let stride = r.count(&mut s, "stride", Some(1));
    let seed = r.count(&mut s, "seed", Some(0)).map(|x| x as u64);
    s.finish(&mut r.issues);
    if stride == Some(0) {
        r.push("output.stride".into(), "must be at least 1");
    }

    // numeric preconditions that do not need the assembled problem
    if let Some(x) = length {
        if !(x > 0.0 && x.is_finite()) {
            r.push("domain.length".into(), format!("must be positive, got {x}"));
        }
    }
    if n_modes == Some(0) {
        r.push("space.n_modes".into(), "must be at least 1");
    }
    if let Some(c) = coeffs.as_ref().filter(|c| !c.is_empty()) {
        if let Err(e) = Nonlinearity::new(c.clone()) {
            r.push("f.coeffs".into(), e.to_string());
        }
    }
    if let Some(x) = dt {
        if !(x > 0.0 && x.is_finite()) {
            r.push("time.dt".into(), format!("must be positive, got {x}"));
        }
    }
    if let Some(x) = horizon {
        if !(x >= 0.0 && x.is_finite()) {
            r.push("time.horizon".into(), format!("must be non-negative, got {x}"));
        }
    }
    match &a {
        Some(ASection::Constant { value }) if !(*value > 0.0 && value.is_finite()) => {
            r.push("a.value".into(), format!("must be positive, got {value}"))
        }
        Some(ASection::ClampedAffine { m, m_tilde, .. }) if !(*m > 0.0 && m_tilde >= m && m_tilde.is_finite()) => {
            r.push("a.m".into(), format!("need 0 < m <= m_tilde, got m = {m}, m_tilde = {m_tilde}"))
        }
        _ => {}
    }

    if !r.issues.is_empty() {
        return Err(ConfigError { issues: r.issues });
    }
    // every value below is present: a missing one would have left an issue
    Ok(RunConfig {
        domain: DomainSection { length: length.unwrap() },
        space: SpaceSection {
            n_modes: n_modes.unwrap(),
            n_collocation: n_colloc.unwrap(),
        },
        kernel: KernelSection {
            spec: spec.unwrap(),
            n_nodes: n_nodes.unwrap(),
            s_max,
            points_per_cell: ppc,
            gamma,
            gamma_safety: if gamma.is_some() { None } else { gamma_safety },
            delta_test,
        },
        f: FSection { coeffs: coeffs.unwrap() },
        a: a.unwrap(),
        l: LSection { weight: l_weight.unwrap() },
        g: GSection { forcing: forcing.unwrap() },
        initial: InitialSection {
            u0: u0.unwrap(),
            past,
            past_csv,
        },
        time: TimeSection {
            dt: dt.unwrap(),
            horizon: horizon.unwrap(),
            scheme: scheme.unwrap(),
            transport: transport.unwrap(),
        },
        output: OutputSection {
            dir: dir.unwrap(),
            stride: stride.unwrap(),
            seed: seed.unwrap(),
        },
    })
}

pub fn parse_file(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    Ok(parse_str(&text)?)
}

/// Everything a run needs, assembled from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Problem {
    pub cfg: ProblemConfig,
    pub u0: SpectralField,
    pub phi: PastTrajectory,
    pub kernel: Option<MemoryKernel>,
}

impl RunConfig {
    /// Canonical TOML form with all defaults written out.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("run configuration is always representable as TOML")
    }

    pub fn kernel(&self) -> Option<MemoryKernel> {
        if self.kernel.spec == "none" {
            return None;
        }
        self.kernel.spec.parse::<KernelFamily>().and_then(make_kernel).ok()
    }

    /// Builds the numerical problem. Relative `past_csv` paths resolve
    /// against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Problem, ConfigError> {
        let wrap = |key: &str, e: memheat_core::Error| ConfigError::single(key, e.to_string());
        let n = self.space.n_modes;
        let basis = eigenbasis(self.domain.length, n, self.space.n_collocation)
            .map_err(|e| wrap("space.n_collocation", e))?;
        let f = if self.f.coeffs.is_empty() {
            Nonlinearity::zero()
        } else {
            Nonlinearity::new(self.f.coeffs.clone()).map_err(|e| wrap("f.coeffs", e))?
        };
        let l_weight = self.l.weight.to_field(&basis);
        let a = match self.a {
            ASection::Constant { value } => NonlocalCoefficient::new(DiffusionLaw::Constant(value), l_weight),
            ASection::ClampedAffine {
                base,
                slope,
                m,
                m_tilde,
            } => NonlocalCoefficient::new(
                DiffusionLaw::ClampedAffine {
                    base,
                    slope,
                    m,
                    m_tilde,
                },
                l_weight,
            ),
        }
        .map_err(|e| wrap("a.kind", e))?;
        let kernel = self.kernel();
        let mut setup = ProblemSetup::new(basis, f, a);
        setup.kernel = kernel;
        setup.n_nodes = self.kernel.n_nodes;
        setup.s_max = self.kernel.s_max;
        setup.points_per_cell = self.kernel.points_per_cell;
        setup.forcing = Some(self.g.forcing.to_field(&setup.basis));
        setup.gamma = match self.kernel.gamma {
            Some(g) => GammaChoice::Fixed(g),
            None => GammaChoice::Safety(self.kernel.gamma_safety.unwrap_or(0.5)),
        };
        setup.dt = self.time.dt;
        setup.horizon = self.time.horizon;
        setup.scheme = if self.time.scheme == "rk4" { Scheme::Rk4 } else { Scheme::Imex };
        setup.transport = if self.time.transport == "interpolated" {
            HistoryTransport::Interpolated
        } else {
            HistoryTransport::Characteristic
        };
        let u0 = self.initial.u0.to_field(&setup.basis);
        let cfg = setup.build().map_err(|e| {
            let key = match &e {
                memheat_core::Error::Parameter { name, .. } => match *name {
                    "gamma" | "kernel.gamma" | "gamma_select" => "kernel.gamma",
                    "space.n_collocation" => "space.n_collocation",
                    "time.dt" => "time.dt",
                    "time.horizon" => "time.horizon",
                    "time.transport" => "time.transport",
                    _ => "kernel.spec",
                },
                _ => "kernel.spec",
            };
            wrap(key, e)
        })?;
        let phi = match (&self.initial.past, &self.initial.past_csv) {
            (Some(terms), _) => {
                let mut rows: Vec<Vec<(f64, f64)>> =
                    terms.iter().map(|m| m.iter().map(|p| (p[0], p[1])).collect()).collect();
                rows.resize(n, Vec::new());
                PastTrajectory::exponential_mix(rows)
            }
            (None, Some(path)) => {
                let path = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let tail = crate::formats::read_past_csv(&path, n)
                    .map_err(|e| ConfigError::single("initial.past_csv", format!("{e:#}")))?;
                PastTrajectory::Sampled(tail)
            }
            (None, None) => PastTrajectory::Zero,
        };
        phi.validate(n, cfg.gamma).map_err(|e| wrap("initial.past", e))?;
        Ok(Problem { cfg, u0, phi, kernel })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[space]\nn_modes = 4\n[f]\ncoeffs = []\n[time]\ndt = 0.01\nhorizon = 1.0\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_str(MINIMAL).unwrap();
        assert_eq!(c.kernel.spec, "none");
        assert_eq!(c.space.n_collocation, 6);
        assert_eq!(c.a, ASection::Constant { value: 1.0 });
        assert_eq!(c.initial.u0, FieldSpec::Named("zero".into()));
    }

    #[test]
    fn echo_is_idempotent() {
        let text = "[space]\nn_modes = 3\n[kernel]\nspec = \"singular(1,0.5)\"\ngamma = 0.3\n\
                    [f]\ncoeffs = [1, 0, -1, 0]\n[a]\nkind = \"clamped_affine\"\nbase = 1\nslope = 0.5\nm = 0.5\nm_tilde = 2\n\
                    [initial]\nu0 = [1, 0.5, 0]\npast = [[[1, 1]], [], [[0.2, 3], [0.1, 1]]]\n\
                    [time]\ndt = 1e-3\nhorizon = 2\nscheme = \"rk4\"\n";
        let a = parse_str(text).unwrap();
        let b = parse_str(&a.echo()).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.echo(), a.echo());
    }

    #[test]
    fn all_errors_are_collected() {
        let text = "[space]\nn_modes = 2\nbogus = 1\n[kernel]\nspec = \"exp(1,-1)\"\n[f]\ncoeffs = [-1, 0]\n\
                    [time]\ndt = -1\n[extra]\n";
        let e = parse_str(text).unwrap_err();
        for key in ["space.bogus", "kernel.spec", "f.coeffs", "time.dt", "time.horizon", "extra"] {
            assert!(e.mentions(key), "missing {key} in {e}");
        }
    }

    #[test]
    fn nonpositive_delta_names_the_key() {
        let text = "[space]\nn_modes = 2\n[kernel]\nspec = \"exp(1,0)\"\n[f]\ncoeffs = []\n[time]\ndt = 0.1\nhorizon = 1\n";
        let e = parse_str(text).unwrap_err();
        assert_eq!(e.issues.len(), 1);
        assert_eq!(e.issues[0].key, "kernel.spec");
        assert!(e.issues[0].message.contains("delta"));
    }

    #[test]
    fn build_assembles_problem() {
        let text = "[space]\nn_modes = 2\n[kernel]\nspec = \"exp(1,1)\"\nn_nodes = 32\n[f]\ncoeffs = [1, 0, -1, 0]\n\
                    [initial]\nu0 = \"sine\"\npast = [[[1, 1]]]\n[time]\ndt = 0.01\nhorizon = 0.1\n";
        let p = parse_str(text).unwrap().build(Path::new(".")).unwrap();
        assert_eq!(p.cfg.rule.len(), 32);
        assert!((p.u0.coeffs[0] - (0.5f64).sqrt()).abs() < 1e-15);
        assert_eq!(p.phi.n_modes(), 2);
    }
}
