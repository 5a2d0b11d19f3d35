//! Batch experiments: a versioned JSON config names families, diagnostics and
//! operator suites; `run` writes CSV/JSON artifacts plus a hashed manifest and
//! `compare` diffs two manifests numerically.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::diag::{self, ReportConfig, SemigroupOptions, TrendRule};
use crate::error::{LabError, Result};
use crate::families::{FamilySpec, SubordOptions};
use crate::numeric::powers_of_two;
use crate::op::{self, DenseOp, FracMethod, FracOptions, ScanKind, ScanOptions};
use crate::seq::{conv_power, ConvMethod, ConvOptions, ExpOptions, ProbSeq, Sequence, DEFAULT_CAP};
use crate::transforms::{sector_report, uniform_positive_grid};

pub const CONFIG_VERSION: u64 = 1;
pub const MANIFEST_NAME: &str = "MANIFEST.json";

// ---------------------------------------------------------------------------
// source positions

/// Line numbers (1-based) of every object member and array element in a JSON
/// text, keyed by paths such as `experiments[0].family.alpha`.
fn json_lines(text: &str) -> HashMap<String, usize> {
    struct Scan<'a> {
        b: &'a [u8],
        i: usize,
        line: usize,
        out: HashMap<String, usize>,
    }
    impl Scan<'_> {
        fn ws(&mut self) {
            while let Some(&c) = self.b.get(self.i) {
                match c {
                    b'\n' => self.line += 1,
                    b' ' | b'\t' | b'\r' => {}
                    _ => return,
                }
                self.i += 1;
            }
        }
        fn string(&mut self) -> String {
            let start = self.i + 1;
            self.i += 1;
            while let Some(&c) = self.b.get(self.i) {
                match c {
                    b'\\' => self.i += 1,
                    b'"' => break,
                    b'\n' => self.line += 1,
                    _ => {}
                }
                self.i += 1;
            }
            let s = String::from_utf8_lossy(&self.b[start..self.i.min(self.b.len())]).into_owned();
            self.i += 1;
            s
        }
        fn value(&mut self, path: &str) {
            self.ws();
            match self.b.get(self.i) {
                Some(b'{') => {
                    self.i += 1;
                    loop {
                        self.ws();
                        match self.b.get(self.i) {
                            Some(b'"') => {
                                let line = self.line;
                                let key = self.string();
                                let child = if path.is_empty() { key } else { format!("{path}.{key}") };
                                self.out.entry(child.clone()).or_insert(line);
                                self.ws();
                                self.i += 1; // ':'
                                self.value(&child);
                            }
                            Some(b',') => self.i += 1,
                            _ => {
                                self.i += 1;
                                return;
                            }
                        }
                    }
                }
                Some(b'[') => {
                    self.i += 1;
                    let mut k = 0;
                    loop {
                        self.ws();
                        match self.b.get(self.i) {
                            Some(b']') | None => {
                                self.i += 1;
                                return;
                            }
                            Some(b',') => self.i += 1,
                            _ => {
                                let child = format!("{path}[{k}]");
                                self.out.entry(child.clone()).or_insert(self.line);
                                self.value(&child);
                                k += 1;
                            }
                        }
                    }
                }
                Some(b'"') => {
                    self.string();
                }
                Some(_) => {
                    while let Some(&c) = self.b.get(self.i) {
                        if matches!(c, b',' | b'}' | b']') || c.is_ascii_whitespace() {
                            break;
                        }
                        self.i += 1;
                    }
                }
                None => {}
            }
        }
    }
    let mut s = Scan {
        b: text.as_bytes(),
        i: 0,
        line: 1,
        out: HashMap::new(),
    };
    s.value("");
    s.out
}

/// Line of `path`, falling back to the nearest enclosing member.
fn line_of(lines: &HashMap<String, usize>, path: &str) -> Option<usize> {
    let mut p = path.to_string();
    loop {
        if let Some(&l) = lines.get(&p) {
            return Some(l);
        }
        let cut = p.rfind(['.', '['])?;
        p.truncate(cut);
    }
}

fn cfg_err(path: &str, message: impl std::fmt::Display) -> LabError {
    LabError::Config {
        line: None,
        message: format!("{path}: {message}"),
    }
}

// ---------------------------------------------------------------------------
// config schema

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    RittTable,
    HalfTable,
    SemigroupTable,
    SectorReport,
    ClassAReport,
}

impl Diagnostic {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ritt_table" => Self::RittTable,
            "half_table" => Self::HalfTable,
            "semigroup_table" => Self::SemigroupTable,
            "sector_report" => Self::SectorReport,
            "class_a_report" => Self::ClassAReport,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::RittTable => "ritt_table",
            Self::HalfTable => "half_table",
            Self::SemigroupTable => "semigroup_table",
            Self::SectorReport => "sector_report",
            Self::ClassAReport => "class_a_report",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatrixSource {
    Volterra { d: usize },
    Shift { d: usize },
    RandomNormal { d: usize, count: usize },
    /// `Ψ(F; T)` for seeded random normal contractions `T`.
    PsiRandomNormal { d: usize, count: usize, family: FamilySpec },
    Inline(DenseOp),
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpCheck {
    PowerBound,
    SubordinationIdentity,
    SpectralMap,
    FracPower,
    RittFromKreiss,
    Kritt,
    RittScan,
    KreissScan,
}

impl OpCheck {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "power_bound" => Self::PowerBound,
            "subordination_identity" => Self::SubordinationIdentity,
            "spectral_map" => Self::SpectralMap,
            "frac_power" => Self::FracPower,
            "ritt_from_kreiss" => Self::RittFromKreiss,
            "kritt" => Self::Kritt,
            "ritt_scan" => Self::RittScan,
            "kreiss_scan" => Self::KreissScan,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSuite {
    pub matrix: MatrixSource,
    pub checks: Vec<OpCheck>,
    /// Sequence used by the subordination and spectral-map checks.
    pub family: FamilySpec,
    pub alpha: f64,
    pub gammas: Vec<f64>,
    pub n: u64,
    pub horizon: usize,
    pub scan: ScanOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub moment_margin: f64,
    pub flatness: f64,
    pub slope_band: f64,
    pub sector_margin: f64,
    pub poisson_eps: f64,
    /// Wall-clock budget per experiment, in seconds; remaining work is skipped and flagged.
    pub time_budget_s: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let rule = TrendRule::default();
        Self {
            moment_margin: crate::seq::DEFAULT_MOMENT_MARGIN,
            flatness: rule.flatness,
            slope_band: rule.slope_band,
            sector_margin: 0.05,
            poisson_eps: ExpOptions::default().poisson_eps,
            time_budget_s: f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub family: Option<FamilySpec>,
    pub diagnostics: Vec<Diagnostic>,
    pub n_grid: Vec<u64>,
    pub t_grid: Vec<f64>,
    pub cap: usize,
    pub sector_points: usize,
    pub operator_suite: Option<OperatorSuite>,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub version: u64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub method: ConvMethod,
    pub threads: usize,
    pub experiments: Vec<Experiment>,
    /// Raw text, hashed into the manifest.
    pub source: String,
}

/// Strict reader over one JSON object: every key must be consumed.
struct Obj<'a> {
    v: &'a serde_json::Map<String, Value>,
    path: String,
    seen: Vec<&'static str>,
}

impl<'a> Obj<'a> {
    fn new(v: &'a Value, path: &str) -> Result<Self> {
        let v = v.as_object().ok_or_else(|| cfg_err(path, "expected an object"))?;
        Ok(Self {
            v,
            path: path.to_string(),
            seen: Vec::new(),
        })
    }

    fn at(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.push(key);
        self.v.get(key)
    }

    fn u64_or(&mut self, key: &'static str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.as_u64().ok_or_else(|| cfg_err(&self.at(key), "expected a nonnegative integer")),
        }
    }

    fn f64_or(&mut self, key: &'static str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| cfg_err(&self.at(key), "expected a number")),
        }
    }

    fn positive(&mut self, key: &'static str, default: f64) -> Result<f64> {
        let x = self.f64_or(key, default)?;
        if !(x > 0.0) {
            return Err(cfg_err(&self.at(key), format!("must be positive, got {x}")));
        }
        Ok(x)
    }

    fn str_or(&mut self, key: &'static str, default: &'a str) -> Result<&'a str> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.as_str().ok_or_else(|| cfg_err(&self.at(key), "expected a string")),
        }
    }

    fn finish(self) -> Result<()> {
        for k in self.v.keys() {
            if !self.seen.contains(&k.as_str()) {
                return Err(cfg_err(&self.at(k), "unknown key"));
            }
        }
        Ok(())
    }
}

fn parse_family(v: &Value, path: &str) -> Result<FamilySpec> {
    FamilySpec::from_json(v).map_err(|e| match e {
        // family messages are relative to the family object
        LabError::Config { message, .. } => cfg_err(
            path,
            message.strip_prefix("family").map(|m| m.trim_start_matches([':', ' '])).unwrap_or(&message),
        )
        .with_subpath(&message),
        other => other,
    })
}

impl LabError {
    /// Re-anchors a family error at `base` + the path inside the family message.
    fn with_subpath(self, family_message: &str) -> Self {
        match self {
            LabError::Config { line, message } => {
                let base = message.split(':').next().unwrap_or_default().to_string();
                let rel = family_message.split(':').next().unwrap_or_default();
                let rest = family_message[rel.len()..].trim_start_matches([':', ' ']);
                let sub = rel.strip_prefix("family").unwrap_or(rel);
                LabError::Config {
                    line,
                    message: format!("{base}{sub}: {rest}"),
                }
            }
            other => other,
        }
    }
}

fn parse_grid_u64(v: Option<&Value>, path: &str, default: Vec<u64>) -> Result<Vec<u64>> {
    let Some(v) = v else { return Ok(default) };
    let arr = v.as_array().ok_or_else(|| cfg_err(path, "expected an array of positive integers"))?;
    let mut out = Vec::with_capacity(arr.len());
    for (i, x) in arr.iter().enumerate() {
        match x.as_u64() {
            Some(n) if n >= 1 && out.last().is_none_or(|&p| n > p) => out.push(n),
            _ => return Err(cfg_err(&format!("{path}[{i}]"), "expected increasing positive integers")),
        }
    }
    if out.is_empty() {
        return Err(cfg_err(path, "must not be empty"));
    }
    Ok(out)
}

fn parse_grid_f64(v: Option<&Value>, path: &str, default: Vec<f64>) -> Result<Vec<f64>> {
    let Some(v) = v else { return Ok(default) };
    let arr = v.as_array().ok_or_else(|| cfg_err(path, "expected an array of positive numbers"))?;
    let mut out: Vec<f64> = Vec::with_capacity(arr.len());
    for (i, x) in arr.iter().enumerate() {
        match x.as_f64() {
            Some(t) if t > 0.0 && out.last().is_none_or(|&p| t > p) => out.push(t),
            _ => return Err(cfg_err(&format!("{path}[{i}]"), "expected increasing positive numbers")),
        }
    }
    if out.is_empty() {
        return Err(cfg_err(path, "must not be empty"));
    }
    Ok(out)
}

fn parse_tolerances(v: Option<&Value>, path: &str) -> Result<Tolerances> {
    let d = Tolerances::default();
    let Some(v) = v else { return Ok(d) };
    let mut o = Obj::new(v, path)?;
    let t = Tolerances {
        moment_margin: o.positive("moment_margin", d.moment_margin)?,
        flatness: o.positive("flatness", d.flatness)?,
        slope_band: o.positive("slope_band", d.slope_band)?,
        sector_margin: o.positive("sector_margin", d.sector_margin)?,
        poisson_eps: o.positive("poisson_eps", d.poisson_eps)?,
        time_budget_s: o.positive("time_budget_s", d.time_budget_s)?,
    };
    o.finish()?;
    Ok(t)
}

fn parse_matrix(v: &Value, path: &str) -> Result<MatrixSource> {
    let mut o = Obj::new(v, path)?;
    let kind = o.str_or("kind", "")?;
    let dim = |o: &mut Obj, default: u64| -> Result<usize> {
        let d = o.u64_or("d", default)?;
        if d < 1 {
            return Err(cfg_err(&o.at("d"), "must be at least 1"));
        }
        Ok(d as usize)
    };
    let m = match kind {
        "volterra" => MatrixSource::Volterra { d: dim(&mut o, 256)? },
        "shift" => MatrixSource::Shift { d: dim(&mut o, 64)? },
        "random_normal" => MatrixSource::RandomNormal {
            d: dim(&mut o, 6)?,
            count: o.u64_or("count", 1)? as usize,
        },
        "psi_random_normal" => {
            let d = dim(&mut o, 6)?;
            let count = o.u64_or("count", 1)? as usize;
            let fpath = o.at("family");
            let family = match o.get("family") {
                Some(f) => parse_family(f, &fpath)?,
                None => default_op_family(),
            };
            MatrixSource::PsiRandomNormal { d, count, family }
        }
        "inline" => {
            let epath = o.at("entries");
            let e = o.get("entries").ok_or_else(|| cfg_err(&epath, "missing"))?;
            MatrixSource::Inline(DenseOp::from_json(e).map_err(|err| cfg_err(&epath, err))?)
        }
        "file" => {
            let ppath = o.at("path");
            let p = o.get("path").and_then(Value::as_str).ok_or_else(|| cfg_err(&ppath, "expected a string"))?;
            MatrixSource::File(PathBuf::from(p))
        }
        other => {
            return Err(cfg_err(
                &o.at("kind"),
                format!("unknown matrix kind `{other}`; expected volterra, shift, random_normal, psi_random_normal, inline or file"),
            ))
        }
    };
    o.finish()?;
    Ok(m)
}

fn default_op_family() -> FamilySpec {
    FamilySpec::AlphaFrac { alpha: 0.5, n: 4096 }
}

fn parse_suite(v: &Value, path: &str, threads: usize) -> Result<OperatorSuite> {
    let mut o = Obj::new(v, path)?;
    let mpath = o.at("matrix");
    let matrix = parse_matrix(o.get("matrix").ok_or_else(|| cfg_err(&mpath, "missing"))?, &mpath)?;
    let cpath = o.at("checks");
    let raw = o
        .get("checks")
        .and_then(Value::as_array)
        .ok_or_else(|| cfg_err(&cpath, "expected an array of check names"))?;
    let mut checks = Vec::new();
    for (i, c) in raw.iter().enumerate() {
        let name = c.as_str().unwrap_or_default();
        checks.push(OpCheck::parse(name).ok_or_else(|| cfg_err(&format!("{cpath}[{i}]"), format!("unknown check `{name}`")))?);
    }
    if checks.is_empty() {
        return Err(cfg_err(&cpath, "must not be empty"));
    }
    let fpath = o.at("family");
    let family = match o.get("family") {
        Some(f) => parse_family(f, &fpath)?,
        None => default_op_family(),
    };
    let alpha = o.f64_or("alpha", 0.5)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(cfg_err(&o.at("alpha"), format!("must lie in (0, 1), got {alpha}")));
    }
    let gpath = o.at("gammas");
    let gammas = parse_grid_f64(o.get("gammas"), &gpath, vec![1.05, 1.1, 1.25])?;
    if let Some(i) = gammas.iter().position(|g| !(*g > 1.0 && *g < 2.0)) {
        return Err(cfg_err(&format!("{gpath}[{i}]"), "must lie in (1, 2)"));
    }
    let n = o.u64_or("n", 8)?;
    if n == 0 {
        return Err(cfg_err(&o.at("n"), "must be at least 1"));
    }
    let horizon = o.u64_or("horizon", 256)? as usize;
    let d = ScanOptions::default();
    let scan = ScanOptions {
        min_exp: o.u64_or("min_exp", d.min_exp as u64)? as u32,
        max_exp: o.u64_or("max_exp", d.max_exp as u64)? as u32,
        angles: o.u64_or("angles", d.angles as u64)? as usize,
        threads,
    };
    if scan.angles == 0 || scan.min_exp > scan.max_exp {
        return Err(cfg_err(&o.at("angles"), "need angles >= 1 and min_exp <= max_exp"));
    }
    o.finish()?;
    Ok(OperatorSuite {
        matrix,
        checks,
        family,
        alpha,
        gammas,
        n,
        horizon: horizon.max(1),
        scan,
    })
}

fn parse_experiment(v: &Value, path: &str, threads: usize) -> Result<Experiment> {
    let mut o = Obj::new(v, path)?;
    let name = o.str_or("name", "")?.to_string();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(cfg_err(&o.at("name"), "expected a nonempty name of letters, digits, '_' or '-'"));
    }
    let fpath = o.at("family");
    let family = o.get("family").map(|f| parse_family(f, &fpath)).transpose()?;
    let dpath = o.at("diagnostics");
    let mut diagnostics = Vec::new();
    if let Some(d) = o.get("diagnostics") {
        let arr = d.as_array().ok_or_else(|| cfg_err(&dpath, "expected an array of diagnostic names"))?;
        for (i, x) in arr.iter().enumerate() {
            let s = x.as_str().unwrap_or_default();
            diagnostics.push(Diagnostic::parse(s).ok_or_else(|| {
                cfg_err(
                    &format!("{dpath}[{i}]"),
                    format!("unknown diagnostic `{s}`; expected ritt_table, half_table, semigroup_table, sector_report or class_a_report"),
                )
            })?);
        }
    }
    let npath = o.at("n_grid");
    let n_grid = parse_grid_u64(o.get("n_grid"), &npath, powers_of_two(1, 11))?;
    let tpath = o.at("t_grid");
    let t_grid = parse_grid_f64(o.get("t_grid"), &tpath, powers_of_two(0, 10).into_iter().map(|t| t as f64).collect())?;
    let cap = o.u64_or("cap", DEFAULT_CAP as u64)? as usize;
    if cap < 2 {
        return Err(cfg_err(&o.at("cap"), "must be at least 2"));
    }
    let sector_points = o.u64_or("sector_points", 256)? as usize;
    let spath = o.at("operator_suite");
    let operator_suite = o.get("operator_suite").map(|s| parse_suite(s, &spath, threads)).transpose()?;
    let tol_path = o.at("tolerances");
    let tolerances = parse_tolerances(o.get("tolerances"), &tol_path)?;
    if diagnostics.is_empty() && operator_suite.is_none() {
        return Err(cfg_err(path, "requests neither diagnostics nor an operator suite"));
    }
    if !diagnostics.is_empty() && family.is_none() {
        return Err(cfg_err(&fpath, "diagnostics need a family"));
    }
    o.finish()?;
    Ok(Experiment {
        name,
        family,
        diagnostics,
        n_grid,
        t_grid,
        cap,
        sector_points,
        operator_suite,
        tolerances,
    })
}

impl ExperimentConfig {
    /// Parses and validates a config; errors carry the line of the offending key.
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| LabError::Config {
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        let lines = json_lines(text);
        Self::from_value(&value, text).map_err(|e| match e {
            LabError::Config { line: None, message } => {
                let path = message.split(':').next().unwrap_or_default();
                LabError::Config {
                    line: line_of(&lines, path),
                    message,
                }
            }
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    fn from_value(v: &Value, text: &str) -> Result<Self> {
        let mut o = Obj::new(v, "")?;
        let version = o.u64_or("version", 0)?;
        if version != CONFIG_VERSION {
            return Err(cfg_err("version", format!("expected {CONFIG_VERSION}, got {version}")));
        }
        let seed = o.u64_or("seed", 0)?;
        let output_dir = PathBuf::from(o.str_or("output_dir", "ritt-lab-out")?);
        let method_str = o.str_or("method", "auto")?;
        let method: ConvMethod = method_str.parse().map_err(|e| cfg_err("method", e))?;
        let threads = o.u64_or("threads", 1)?.max(1) as usize;
        let raw = o
            .get("experiments")
            .and_then(Value::as_array)
            .ok_or_else(|| cfg_err("experiments", "expected a nonempty array"))?;
        if raw.is_empty() {
            return Err(cfg_err("experiments", "expected a nonempty array"));
        }
        let experiments = raw
            .iter()
            .enumerate()
            .map(|(i, e)| parse_experiment(e, &format!("experiments[{i}]"), threads))
            .collect::<Result<Vec<_>>>()?;
        let mut names: Vec<&str> = experiments.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(cfg_err("experiments", format!("duplicate experiment name `{}`", w[0])));
        }
        o.finish()?;
        Ok(Self {
            version,
            seed,
            output_dir,
            method,
            threads,
            experiments,
            source: text.to_string(),
        })
    }

    pub fn with_method(mut self, method: ConvMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        for e in &mut self.experiments {
            if let Some(s) = &mut e.operator_suite {
                s.scan.threads = self.threads;
            }
        }
        self
    }

    pub fn with_output_dir(mut self, dir: PathBuf) -> Self {
        self.output_dir = dir;
        self
    }
}

// ---------------------------------------------------------------------------
// running

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub name: String,
    pub artifacts: Vec<String>,
    /// True when the time budget ran out before every step finished.
    pub partial: bool,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub outcomes: Vec<ExperimentOutcome>,
    pub manifest: PathBuf,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        self.outcomes.iter().all(|o| o.errors.is_empty() && !o.partial)
    }
}

struct Writer<'a> {
    root: &'a Path,
    dir: String,
    written: Vec<String>,
}

impl Writer<'_> {
    fn file(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        body(&mut buf)?;
        let rel = format!("{}/{name}", self.dir);
        fs::write(self.root.join(&rel), buf)?;
        self.written.push(rel);
        Ok(())
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<()> {
        self.file(name, |b| {
            serde_json::to_writer_pretty(&mut *b, v)?;
            b.push(b'\n');
            Ok(())
        })
    }
}

fn report_config(e: &Experiment, conv: ConvOptions) -> ReportConfig {
    let t = &e.tolerances;
    let base = ReportConfig::default();
    ReportConfig {
        n_grid: e.n_grid.clone(),
        t_grid: e.t_grid.clone(),
        conv,
        semigroup: SemigroupOptions {
            exp: ExpOptions {
                conv,
                poisson_eps: t.poisson_eps,
            },
            ..SemigroupOptions::default()
        },
        moment_margin: t.moment_margin,
        sector_points: e.sector_points,
        trend: TrendRule {
            flatness: t.flatness,
            slope_band: t.slope_band,
            ..base.trend
        },
        sector_margin: t.sector_margin,
        ..base
    }
}

fn family_summary(spec: &FamilySpec, f: &ProbSeq) -> Value {
    json!({
        "spec": spec.to_json(),
        "label": spec.label(),
        "len": f.len(),
        "mass": f.mass(),
        "tail_bound": f.tail_bound(),
        "exact_len": f.tail().exact_len,
        "prefix_err": f.tail().prefix_err,
    })
}

fn run_diagnostics(e: &Experiment, conv: ConvOptions, w: &mut Writer, clock: &Instant, partial: &mut bool) -> Result<()> {
    let spec = e.family.as_ref().expect("validated");
    let f = spec.build_with(&SubordOptions {
        conv,
        ..SubordOptions::default()
    })?;
    w.json("family.json", &family_summary(spec, &f))?;
    let cfg = report_config(e, conv);
    let mut chain: Option<(diag::DiagTable, diag::DiagTable)> = None;
    for d in &e.diagnostics {
        if clock.elapsed().as_secs_f64() > e.tolerances.time_budget_s {
            *partial = true;
            return Ok(());
        }
        match d {
            Diagnostic::RittTable | Diagnostic::HalfTable => {
                if chain.is_none() {
                    let norms = diag::diff_chain(&f, &e.n_grid, &conv)?;
                    chain = Some(diag::tables_from_chain(&e.n_grid, &norms));
                }
                let (ritt, half) = chain.as_ref().expect("just filled");
                let t = if *d == Diagnostic::RittTable { ritt } else { half };
                w.file(&format!("{}.csv", d.name()), |b| Ok(t.write_csv(b)?))?;
            }
            Diagnostic::SemigroupTable => {
                let t = diag::semigroup_table(&f, &e.t_grid, &cfg.semigroup)?;
                w.file("semigroup_table.csv", |b| Ok(t.write_csv(b)?))?;
            }
            Diagnostic::SectorReport => {
                let r = sector_report(&f, &uniform_positive_grid(e.sector_points));
                w.file("sector_report.csv", |b| Ok(r.write_csv(b)?))?;
                w.json(
                    "sector_summary.json",
                    &json!({ "sup_angle": r.sup_angle, "limit_estimate": r.limit_estimate }),
                )?;
            }
            Diagnostic::ClassAReport => {
                let r = diag::class_a_report(&f, &cfg)?;
                w.json("class_a_report.json", &r.to_json())?;
            }
        }
    }
    Ok(())
}

fn load_matrices(src: &MatrixSource, seed: u64, conv: &ConvOptions, base: &Path) -> Result<Vec<DenseOp>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match src {
        MatrixSource::Volterra { d } => vec![op::volterra_op(*d)?],
        MatrixSource::Shift { d } => vec![op::shift_op(*d)?],
        MatrixSource::RandomNormal { d, count } => (0..*count)
            .map(|_| op::random_normal_contraction(*d, &mut rng))
            .collect::<Result<_>>()?,
        MatrixSource::PsiRandomNormal { d, count, family } => {
            let f = family.build_with(&SubordOptions {
                conv: *conv,
                ..SubordOptions::default()
            })?;
            (0..*count)
                .map(|_| Ok(op::psi_op(&f, &op::random_normal_contraction(*d, &mut rng)?)?.op))
                .collect::<Result<_>>()?
        }
        MatrixSource::Inline(m) => vec![m.clone()],
        MatrixSource::File(p) => {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            vec![DenseOp::from_json(&serde_json::from_str(&fs::read_to_string(path)?)?)?]
        }
    })
}

fn run_suite(
    s: &OperatorSuite,
    seed: u64,
    conv: ConvOptions,
    base: &Path,
    w: &mut Writer,
    clock: &Instant,
    budget: f64,
    partial: &mut bool,
) -> Result<()> {
    let mats = load_matrices(&s.matrix, seed, &conv, base)?;
    let f = s.family.build_with(&SubordOptions {
        conv,
        ..SubordOptions::default()
    })?;
    let frac = FracOptions::default();
    let mut results = Vec::new();
    for (i, t) in mats.iter().enumerate() {
        let mut r = BTreeMap::new();
        r.insert("dim".to_string(), json!(t.dim()));
        r.insert("norm".to_string(), json!(t.norm()));
        for check in &s.checks {
            if clock.elapsed().as_secs_f64() > budget {
                *partial = true;
                break;
            }
            let (key, value) = match check {
                OpCheck::PowerBound => ("power_bound", serde_json::to_value(op::power_bound(t, s.horizon)?)?),
                OpCheck::SubordinationIdentity => (
                    "subordination_identity",
                    serde_json::to_value(op::subordination_identity_check(&f, t, s.n, &conv)?)?,
                ),
                OpCheck::SpectralMap => ("spectral_map", serde_json::to_value(op::spectral_map_check(&f, t)?)?),
                OpCheck::FracPower => {
                    let mut rows = BTreeMap::new();
                    let eig = op::frac_power(t, s.alpha, FracMethod::Eigen, &frac);
                    let kato = op::frac_power(t, s.alpha, FracMethod::Kato, &frac);
                    let ser = op::frac_power(t, s.alpha, FracMethod::Series, &frac);
                    let dist = |a: &op::FracPower, b: &op::FracPower| op::spectral_norm(&(a.op.matrix() - b.op.matrix()));
                    for (name, p) in [("eigen", &eig), ("kato", &kato), ("series", &ser)] {
                        rows.insert(
                            name.to_string(),
                            match p {
                                Ok(p) => json!({ "error": p.error, "cond": p.cond }),
                                Err(e) => json!({ "failed": e.to_string() }),
                            },
                        );
                    }
                    for ((na, a), (nb, b)) in [(("eigen", &eig), ("kato", &kato)), (("eigen", &eig), ("series", &ser)), (("kato", &kato), ("series", &ser))] {
                        if let (Ok(a), Ok(b)) = (a, b) {
                            rows.insert(format!("{na}_vs_{nb}"), json!({ "distance": dist(a, b), "budget": a.error + b.error }));
                        }
                    }
                    ("frac_power", serde_json::to_value(rows)?)
                }
                OpCheck::RittFromKreiss => {
                    let r = op::ritt_from_kreiss_check(t, s.alpha, &frac, &s.scan)?;
                    w.file(&format!("kreiss_scan_{i}.csv"), |b| r.kreiss.write_csv(b))?;
                    w.file(&format!("ritt_scan_s_{i}.csv"), |b| r.ritt.write_csv(b))?;
                    (
                        "ritt_from_kreiss",
                        json!({
                            "method": r.method,
                            "frac_error": r.frac_error,
                            "kreiss_constant": r.kreiss.constant,
                            "kreiss_per_radius": r.kreiss.per_radius_max,
                            "ritt_constant": r.ritt.constant,
                            "ritt_per_radius": r.ritt.per_radius_max,
                            "ritt_stabilizes": r.ritt.stabilizes(),
                        }),
                    )
                }
                OpCheck::Kritt => ("kritt", serde_json::to_value(op::kritt_equivalence_suite(t, &s.gammas, &frac, &s.scan)?)?),
                OpCheck::RittScan | OpCheck::KreissScan => {
                    let (kind, name) = if *check == OpCheck::RittScan {
                        (ScanKind::Ritt, "ritt_scan")
                    } else {
                        (ScanKind::Kreiss, "kreiss_scan")
                    };
                    let r = op::resolvent_scan(t, kind, &s.scan)?;
                    w.file(&format!("{name}_{i}.csv"), |b| r.write_csv(b))?;
                    (
                        name,
                        json!({
                            "constant": r.constant,
                            "per_radius": r.per_radius_max,
                            "singular": r.singular.len(),
                            "stabilizes": r.stabilizes(),
                        }),
                    )
                }
            };
            r.insert(key.to_string(), value);
        }
        results.push(Value::Object(r.into_iter().collect()));
    }
    w.json("operator_suite.json", &json!({ "matrices": results }))
}

fn run_one(e: &Experiment, idx: usize, cfg: &ExperimentConfig, base: &Path) -> ExperimentOutcome {
    let conv = ConvOptions::default().with_method(cfg.method).with_cap(e.cap);
    let mut w = Writer {
        root: &cfg.output_dir,
        dir: e.name.clone(),
        written: Vec::new(),
    };
    let mut errors = Vec::new();
    let mut partial = false;
    let clock = Instant::now();
    if let Err(err) = fs::create_dir_all(cfg.output_dir.join(&e.name)) {
        errors.push(err.to_string());
    } else {
        if !e.diagnostics.is_empty() {
            if let Err(err) = run_diagnostics(e, conv, &mut w, &clock, &mut partial) {
                errors.push(format!("diagnostics: {err}"));
            }
        }
        if let Some(s) = &e.operator_suite {
            let seed = cfg.seed.wrapping_add(idx as u64);
            if let Err(err) = run_suite(s, seed, conv, base, &mut w, &clock, e.tolerances.time_budget_s, &mut partial) {
                errors.push(format!("operator_suite: {err}"));
            }
        }
    }
    ExperimentOutcome {
        name: e.name.clone(),
        artifacts: w.written,
        partial,
        errors,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u64,
    pub config_sha256: String,
    pub artifacts: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Runs every experiment. Independent experiments share out over `threads`
/// workers; each writes only into its own directory.
///
/// `base` resolves relative matrix file paths.
pub fn run(cfg: &ExperimentConfig, base: &Path) -> Result<RunSummary> {
    fs::create_dir_all(&cfg.output_dir)?;
    let n = cfg.experiments.len();
    let workers = cfg.threads.min(n).max(1);
    let mut outcomes: Vec<Option<ExperimentOutcome>> = vec![None; n];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|wk| {
                scope.spawn(move || {
                    (wk..n)
                        .step_by(workers)
                        .map(|i| (i, run_one(&cfg.experiments[i], i, cfg, base)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, o) in h.join().expect("experiment worker panicked") {
                outcomes[i] = Some(o);
            }
        }
    });
    let outcomes: Vec<ExperimentOutcome> = outcomes.into_iter().map(|o| o.expect("every experiment ran")).collect();

    let mut paths: Vec<&String> = outcomes.iter().flat_map(|o| &o.artifacts).collect();
    paths.sort();
    let mut artifacts = Vec::with_capacity(paths.len());
    for p in paths {
        let bytes = fs::read(cfg.output_dir.join(p))?;
        artifacts.push(ManifestEntry {
            path: p.clone(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    let manifest = Manifest {
        version: CONFIG_VERSION,
        config_sha256: sha256_hex(cfg.source.as_bytes()),
        artifacts,
    };
    let manifest_path = cfg.output_dir.join(MANIFEST_NAME);
    let mut file = fs::File::create(&manifest_path)?;
    serde_json::to_writer_pretty(&mut file, &manifest)?;
    file.write_all(b"\n")?;
    Ok(RunSummary {
        output_dir: cfg.output_dir.clone(),
        outcomes,
        manifest: manifest_path,
    })
}

// ---------------------------------------------------------------------------
// comparing runs

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareStatus {
    Identical,
    WithinTolerance,
    Differs,
    MissingInA,
    MissingInB,
    Unreadable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub artifact: String,
    pub status: CompareStatus,
    /// Largest `|a − b| / max(1, |a|, |b|)` over numeric cells.
    pub max_scaled_diff: f64,
    /// First location that failed, when any.
    pub first_failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub tolerance: f64,
    pub mode: BoundsMode,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.rows
            .iter()
            .all(|r| matches!(r.status, CompareStatus::Identical | CompareStatus::WithinTolerance))
    }
}

fn scaled(a: f64, b: f64) -> f64 {
    if a == b || (a.is_nan() && b.is_nan()) {
        return 0.0;
    }
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// How certified bound columns are compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMode {
    /// Every numeric cell must agree within the tolerance.
    #[default]
    Strict,
    /// `lower`/`upper` pairs must overlap and error budgets are skipped; all
    /// other numbers must agree within the tolerance. Runs that differ only in
    /// their convolution backend certify different slacks, so this is the
    /// mode for comparing them.
    Consistent,
}

/// JSON keys holding error budgets rather than computed values.
const BUDGET_KEYS: [&str; 6] = ["error", "budget", "prefix_err", "tail_bound", "frac_error", "width"];

fn overlap(lo_a: f64, up_a: f64, lo_b: f64, up_b: f64, tol: f64) -> bool {
    lo_a.max(lo_b) <= up_a.min(up_b) + tol * 1f64.max(up_a.abs()).max(up_b.abs())
}

fn num(s: &str) -> Option<f64> {
    s.parse().ok()
}

/// Returns the largest scaled difference, or the first mismatch.
fn diff_csv(a: &str, b: &str, tol: f64, mode: BoundsMode) -> std::result::Result<f64, String> {
    let (la, lb): (Vec<&str>, Vec<&str>) = (a.lines().collect(), b.lines().collect());
    if la.len() != lb.len() {
        return Err(format!("row count {} vs {}", la.len(), lb.len()));
    }
    let header: Vec<&str> = la.first().map(|h| h.split(',').collect()).unwrap_or_default();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let pair = match mode {
        BoundsMode::Consistent => col("lower").zip(col("upper")),
        BoundsMode::Strict => None,
    };
    let mut worst = 0.0f64;
    for (i, (ra, rb)) in la.iter().zip(&lb).enumerate() {
        let (ca, cb): (Vec<&str>, Vec<&str>) = (ra.split(',').collect(), rb.split(',').collect());
        if ca.len() != cb.len() {
            return Err(format!("line {}: column count differs", i + 1));
        }
        if let (Some((lo, up)), true) = (pair, i > 0) {
            if let (Some(la_), Some(ua), Some(lb_), Some(ub)) = (num(ca[lo]), num(ca[up]), num(cb[lo]), num(cb[up])) {
                if !overlap(la_, ua, lb_, ub, tol) {
                    return Err(format!("line {}: intervals [{la_:e}, {ua:e}] and [{lb_:e}, {ub:e}] are disjoint", i + 1));
                }
            }
        }
        for (j, (x, y)) in ca.iter().zip(&cb).enumerate() {
            if pair.is_some_and(|(lo, up)| i > 0 && (j == lo || j == up)) {
                continue;
            }
            match (num(x), num(y)) {
                (Some(x), Some(y)) => worst = worst.max(scaled(x, y)),
                _ if x == y => {}
                _ => return Err(format!("line {}: `{x}` vs `{y}`", i + 1)),
            }
        }
    }
    Ok(worst)
}

fn diff_json(a: &Value, b: &Value, path: &str, tol: f64, mode: BoundsMode) -> std::result::Result<f64, String> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => Ok(scaled(x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN))),
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                return Err(format!("{path}: length {} vs {}", x.len(), y.len()));
            }
            x.iter()
                .zip(y)
                .enumerate()
                .try_fold(0.0f64, |m, (i, (p, q))| Ok(m.max(diff_json(p, q, &format!("{path}[{i}]"), tol, mode)?)))
        }
        (Value::Object(x), Value::Object(y)) => {
            if let Some(k) = x.keys().find(|k| !y.contains_key(*k)).or_else(|| y.keys().find(|k| !x.contains_key(*k))) {
                return Err(format!("{path}.{k}: present on one side only"));
            }
            let bounds = |o: &serde_json::Map<String, Value>| Some((o.get("lower")?.as_f64()?, o.get("upper")?.as_f64()?));
            let consistent = mode == BoundsMode::Consistent;
            let paired = match (consistent, bounds(x), bounds(y)) {
                (true, Some((la, ua)), Some((lb, ub))) => {
                    if !overlap(la, ua, lb, ub, tol) {
                        return Err(format!("{path}: intervals [{la:e}, {ua:e}] and [{lb:e}, {ub:e}] are disjoint"));
                    }
                    true
                }
                _ => false,
            };
            x.iter().try_fold(0.0f64, |m, (k, p)| {
                let skip = consistent && (BUDGET_KEYS.contains(&k.as_str()) || (paired && (k == "lower" || k == "upper")));
                if skip {
                    return Ok(m);
                }
                Ok(m.max(diff_json(p, &y[k], &format!("{path}.{k}"), tol, mode)?))
            })
        }
        _ if a == b => Ok(0.0),
        _ => Err(format!("{path}: {a} vs {b}")),
    }
}

/// Compares the artifacts listed in two manifests cell by cell.
pub fn compare(manifest_a: &Path, manifest_b: &Path, tolerance: f64) -> Result<CompareReport> {
    compare_with(manifest_a, manifest_b, tolerance, BoundsMode::Strict)
}

pub fn compare_with(manifest_a: &Path, manifest_b: &Path, tolerance: f64, mode: BoundsMode) -> Result<CompareReport> {
    let (ma, mb) = (Manifest::load(manifest_a)?, Manifest::load(manifest_b)?);
    let dir = |p: &Path| p.parent().map(Path::to_path_buf).unwrap_or_default();
    let (da, db) = (dir(manifest_a), dir(manifest_b));
    let index_b: BTreeMap<&str, &ManifestEntry> = mb.artifacts.iter().map(|e| (e.path.as_str(), e)).collect();
    let index_a: BTreeMap<&str, &ManifestEntry> = ma.artifacts.iter().map(|e| (e.path.as_str(), e)).collect();
    let mut names: Vec<&str> = index_a.keys().chain(index_b.keys()).copied().collect();
    names.sort_unstable();
    names.dedup();
    let mut rows = Vec::with_capacity(names.len());
    for name in names {
        let row = |status, max_scaled_diff, first_failure| CompareRow {
            artifact: name.to_string(),
            status,
            max_scaled_diff,
            first_failure,
        };
        let (ea, eb) = match (index_a.get(name), index_b.get(name)) {
            (Some(a), Some(b)) => (a, b),
            (None, _) => {
                rows.push(row(CompareStatus::MissingInA, f64::NAN, None));
                continue;
            }
            (_, None) => {
                rows.push(row(CompareStatus::MissingInB, f64::NAN, None));
                continue;
            }
        };
        if ea.sha256 == eb.sha256 {
            rows.push(row(CompareStatus::Identical, 0.0, None));
            continue;
        }
        let (ta, tb) = match (fs::read_to_string(da.join(name)), fs::read_to_string(db.join(name))) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                rows.push(row(CompareStatus::Unreadable, f64::NAN, Some("file missing on disk".into())));
                continue;
            }
        };
        let diff = if name.ends_with(".json") {
            match (serde_json::from_str::<Value>(&ta), serde_json::from_str::<Value>(&tb)) {
                (Ok(a), Ok(b)) => diff_json(&a, &b, "", tolerance, mode),
                _ => Err("invalid JSON".to_string()),
            }
        } else {
            diff_csv(&ta, &tb, tolerance, mode)
        };
        rows.push(match diff {
            Ok(d) if d <= tolerance => row(CompareStatus::WithinTolerance, d, None),
            Ok(d) => row(CompareStatus::Differs, d, Some(format!("scaled difference {d:e}"))),
            Err(msg) => row(CompareStatus::Differs, f64::NAN, Some(msg)),
        });
    }
    Ok(CompareReport { tolerance, mode, rows })
}

/// Parses a standalone family file; errors carry the line of the offending key.
pub fn parse_family_text(text: &str) -> Result<FamilySpec> {
    let value: Value = serde_json::from_str(text).map_err(|e| LabError::Config {
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    FamilySpec::from_json(&value).map_err(|e| match e {
        LabError::Config { line: None, message } => {
            let path = message.split(':').next().unwrap_or_default();
            let rel = path.strip_prefix("family.").unwrap_or(path);
            LabError::Config {
                line: line_of(&json_lines(text), rel),
                message,
            }
        }
        other => other,
    })
}

/// Construction-only helper behind the `family` subcommand: the sequence as
/// JSON plus its `k,value` CSV.
pub fn dump_family(spec: &FamilySpec, conv: ConvOptions, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let f = spec.build_with(&SubordOptions {
        conv,
        ..SubordOptions::default()
    })?;
    let json_path = dir.join("sequence.json");
    fs::write(&json_path, serde_json::to_vec(&f.to_json())?)?;
    let csv_path = dir.join("sequence.csv");
    let mut buf = Vec::new();
    f.write_csv(&mut buf)?;
    fs::write(&csv_path, buf)?;
    let summary = dir.join("family.json");
    fs::write(&summary, serde_json::to_vec_pretty(&family_summary(spec, &f))?)?;
    Ok(vec![json_path, csv_path, summary])
}

/// Power of a family, used by `diag` for a single `‖F⁽ⁿ⁾ − F⁽ⁿ⁺¹⁾‖` query.
pub fn single_diff(spec: &FamilySpec, n: u64, conv: &ConvOptions) -> Result<crate::seq::Interval> {
    let f = spec.build()?;
    let g = conv_power(&f, n, conv)?;
    let h = g.convolve(&f, conv);
    Ok(crate::seq::prob_diff_interval(&g, &h))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
  "version": 1,
  "seed": 3,
  "experiments": [
    {
      "name": "bern",
      "family": {"family": "bernoulli", "beta": 0.5},
      "diagnostics": ["ritt_table", "half_table"],
      "n_grid": [1, 2, 4, 8]
    }
  ]
}"#;

    #[test]
    fn parses_small_config() {
        let c = ExperimentConfig::parse(SMALL).unwrap();
        assert_eq!(c.experiments[0].n_grid, vec![1, 2, 4, 8]);
        assert_eq!(c.experiments[0].diagnostics, vec![Diagnostic::RittTable, Diagnostic::HalfTable]);
        assert_eq!(c.method, ConvMethod::Auto);
    }

    #[test]
    fn invalid_alpha_names_field_and_line() {
        let text = SMALL.replace(r#"{"family": "bernoulli", "beta": 0.5}"#, "{\"family\": \"alpha_frac\",\n \"alpha\": 1.5, \"N\": 10}");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        match err {
            LabError::Config { line, message } => {
                assert!(message.starts_with("experiments[0].family.alpha:"), "{message}");
                assert_eq!(line, Some(8));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_keys_and_versions_rejected() {
        let text = SMALL.replace("\"seed\": 3,", "\"seed\": 3,\n  \"colour\": 1,");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("colour") && err.contains("line 4"), "{err}");
        let text = SMALL.replace("\"version\": 1", "\"version\": 2");
        assert!(ExperimentConfig::parse(&text).unwrap_err().to_string().contains("version"));
        let text = SMALL.replace("\"ritt_table\", ", "\"ritt\", ");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("diagnostics[0]") && err.contains("line 8"), "{err}");
        let err = ExperimentConfig::parse("{\"version\": 1,\n \"experiments\": [").unwrap_err();
        assert!(matches!(err, LabError::Config { line: Some(2), .. }), "{err}");
    }

    #[test]
    fn nested_family_errors_keep_their_path() {
        let text = SMALL.replace(
            r#"{"family": "bernoulli", "beta": 0.5}"#,
            r#"{"family": "mixture", "weights": [0.5, 0.5], "components": [{"family": "delta", "m": 0}, {"family": "bernoulli", "beta": 2}]}"#,
        );
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("experiments[0].family.components[1].beta"), "{err}");
    }

    #[test]
    fn run_writes_manifest_and_reproduces() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        let a = run(&cfg.clone().with_output_dir(dir.path().join("a")), dir.path()).unwrap();
        let b = run(&cfg.with_output_dir(dir.path().join("b")), dir.path()).unwrap();
        assert!(a.success());
        let text = fs::read_to_string(dir.path().join("a/bern/ritt_table.csv")).unwrap();
        assert!(text.starts_with("index,estimate,lower,upper\n"));
        assert_eq!(text.lines().count(), 5);
        let ma = Manifest::load(&a.manifest).unwrap();
        let mb = Manifest::load(&b.manifest).unwrap();
        assert_eq!(ma, mb);
        let rep = compare(&a.manifest, &b.manifest, 0.0).unwrap();
        assert!(rep.passed());
        assert!(rep.rows.iter().all(|r| r.status == CompareStatus::Identical));
    }

    #[test]
    fn compare_flags_missing_and_perturbed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        let a = run(&cfg.clone().with_output_dir(dir.path().join("a")), dir.path()).unwrap();
        let b = run(&cfg.with_output_dir(dir.path().join("b")), dir.path()).unwrap();
        let p = dir.path().join("b/bern/half_table.csv");
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[2] = "2,0.5,0.5".to_string();
        fs::write(&p, lines.join("\n") + "\n").unwrap();
        let mut m = Manifest::load(&b.manifest).unwrap();
        m.artifacts.iter_mut().for_each(|e| {
            if e.path.ends_with("half_table.csv") {
                e.sha256 = "changed".into();
            }
        });
        m.artifacts.retain(|e| !e.path.ends_with("family.json"));
        fs::write(&b.manifest, serde_json::to_vec(&m).unwrap()).unwrap();
        let rep = compare(&a.manifest, &b.manifest, 1e-10).unwrap();
        let status = |suffix: &str| rep.rows.iter().find(|r| r.artifact.ends_with(suffix)).unwrap().status;
        assert_eq!(status("half_table.csv"), CompareStatus::Differs);
        assert_eq!(status("ritt_table.csv"), CompareStatus::Identical);
        assert_eq!(status("family.json"), CompareStatus::MissingInB);
        assert!(!rep.passed());
    }

    #[test]
    fn operator_suite_runs() {
        let text = r#"{
  "version": 1,
  "seed": 11,
  "experiments": [
    {
      "name": "ops",
      "operator_suite": {
        "matrix": {"kind": "random_normal", "d": 3, "count": 2},
        "checks": ["power_bound", "subordination_identity", "spectral_map", "frac_power", "ritt_scan"],
        "angles": 16
      }
    }
  ]
}"#;
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::parse(text).unwrap().with_output_dir(dir.path().join("o"));
        let s = run(&cfg, dir.path()).unwrap();
        assert!(s.success(), "{:?}", s.outcomes);
        let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/ops/operator_suite.json")).unwrap()).unwrap();
        let m = &v["matrices"][1];
        assert!(m["subordination_identity"]["residual"].as_f64().unwrap() <= m["subordination_identity"]["budget"].as_f64().unwrap());
        assert!(dir.path().join("o/ops/ritt_scan_1.csv").exists());
    }

    #[test]
    fn family_file_errors_are_line_anchored() {
        let spec = parse_family_text("{\"family\": \"poisson\", \"s\": 2}").unwrap();
        assert_eq!(spec.label(), "poisson_2");
        let err = parse_family_text("{\n \"family\": \"alpha_frac\",\n \"alpha\": -1,\n \"N\": 8\n}").unwrap_err();
        assert!(matches!(err, LabError::Config { line: Some(3), .. }), "{err}");
    }

    #[test]
    fn json_line_index() {
        let lines = json_lines("{\n \"a\": [1,\n {\"b\": 2}],\n \"c\": \"x\\\"y\"\n}");
        assert_eq!(lines["a"], 2);
        assert_eq!(lines["a[1].b"], 3);
        assert_eq!(lines["c"], 4);
        assert_eq!(line_of(&lines, "a[1].b.zzz"), Some(3));
    }
}
