//! INI run configuration.
//!
//! ```ini
//! [model]
//! preset = skt          ; maxwell_stefan, skt, ion_transport, custom
//! a0 = 1.0
//! a = 1.0, 1.0          ; species weights
//! L = 3.0               ; aggregate upper bound
//!
//! [grid]
//! cells = 128
//! length = 1.0
//!
//! [scheme]
//! t_end = 0.01
//! auto_cfl = true       ; or dt = <number>
//!
//! [initial]
//! u1 = "0.5 + 0.1*cos(pi*x)"
//! u2 = 0.5
//! f = 1.0               ; background source of the potential equation
//! ```
//!
//! Preset parameters: maxwell_stefan takes `D0`, `D`, `n`; skt takes `a0`,
//! `a`, `L`; ion_transport takes `D`, `z`, `n`. `preset = custom` supplies
//! `p`, `q`, `r` (expressions in `s`), optional `r_prime`, weights `a`,
//! and `L` (a positive number, or `unbounded` when r is identically zero).
//! Optional sections: `[diagnostics]` (eps, kind), `[experiment]` (kind,
//! delta, seed, tol_decay, ladder), `[initial2]` (second state for
//! gronwall), `[output]` (dir, header_time).
//!
//! Values may be double-quoted; `#` and `;` start comments; lists are
//! comma-separated, optionally in brackets. Unknown sections or keys are
//! errors. All problems are collected and reported together, each with
//! its line and `section.key` path. The initial data must satisfy the
//! discrete compatibility condition of the potential equation; the defect
//! is part of the error message when they do not.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::coefficients::{
    preset_ion_transport, preset_maxwell_stefan, preset_skt, CoefficientModel, UpperBound,
};
use crate::entropy::{EntropySpec, SemimetricKind};
use crate::experiments::{ExperimentKind, ExperimentSpec};
use crate::expr::ScalarFn;
use crate::fields::{mass, Field, Grid1D, SpeciesState};
use crate::poisson::compat_tol;
use crate::solver::{DriftFlux, FaceAverage, SchemeConfig};

#[derive(Debug, Clone)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}, {}: {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSettings {
    pub kind: ExperimentKind,
    pub delta: f64,
    pub seed: u64,
    pub tol_decay: f64,
    pub ladder: Vec<usize>,
}

/// Everything a run needs, fully validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: CoefficientModel,
    pub grid: Grid1D,
    pub scheme: SchemeConfig,
    pub entropy: EntropySpec,
    pub initial: Vec<ScalarFn>,
    pub background: ScalarFn,
    pub initial2: Option<Vec<ScalarFn>>,
    pub experiment: Option<ExperimentSettings>,
    pub outdir: Option<PathBuf>,
    pub header_time: bool,
}

impl RunConfig {
    /// Repackages the configuration for the experiment runner.
    pub fn experiment_spec(&self) -> Option<ExperimentSpec> {
        let e = self.experiment.as_ref()?;
        Some(ExperimentSpec {
            kind: e.kind,
            model: self.model.clone(),
            grid: self.grid,
            scheme: self.scheme.clone(),
            entropy: self.entropy,
            initial: self.initial.clone(),
            background: self.background.clone(),
            initial2: self.initial2.clone(),
            delta: e.delta,
            seed: e.seed,
            tol_decay: e.tol_decay,
            ladder: e.ladder.clone(),
        })
    }
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, Entry>,
    /// key order as written, for ordered u1..un collection
    order: Vec<String>,
}

struct Parser {
    sections: Vec<Section>,
    issues: Vec<ConfigIssue>,
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            '#' | ';' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

fn strip_brackets(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('[') && v.ends_with(']') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

impl Parser {
    fn parse(text: &str) -> Parser {
        let mut sections: Vec<Section> = Vec::new();
        let mut issues = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                match rest.strip_suffix(']') {
                    Some(name) if !name.trim().is_empty() => {
                        let name = name.trim().to_string();
                        if sections.iter().any(|s| s.name == name) {
                            issues.push(ConfigIssue {
                                line: Some(lineno),
                                path: name.clone(),
                                message: "duplicate section".into(),
                            });
                        }
                        sections.push(Section {
                            name,
                            line: lineno,
                            entries: BTreeMap::new(),
                            order: Vec::new(),
                        });
                    }
                    _ => issues.push(ConfigIssue {
                        line: Some(lineno),
                        path: "(syntax)".into(),
                        message: format!("malformed section header: {line}"),
                    }),
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                issues.push(ConfigIssue {
                    line: Some(lineno),
                    path: "(syntax)".into(),
                    message: format!("expected `key = value`, got: {line}"),
                });
                continue;
            };
            let key = key.trim().to_string();
            let value = unquote(value).to_string();
            let Some(section) = sections.last_mut() else {
                issues.push(ConfigIssue {
                    line: Some(lineno),
                    path: key,
                    message: "key outside any [section]".into(),
                });
                continue;
            };
            if key.is_empty() {
                issues.push(ConfigIssue {
                    line: Some(lineno),
                    path: format!("{}.?", section.name),
                    message: "empty key".into(),
                });
                continue;
            }
            if section.entries.contains_key(&key) {
                issues.push(ConfigIssue {
                    line: Some(lineno),
                    path: format!("{}.{key}", section.name),
                    message: "duplicate key".into(),
                });
                continue;
            }
            section.order.push(key.clone());
            section.entries.insert(
                key,
                Entry {
                    value,
                    line: lineno,
                    used: false,
                },
            );
        }
        Parser { sections, issues }
    }
}

/// Accumulates issues while pulling typed values out of one section.
struct Ctx {
    issues: Vec<ConfigIssue>,
}

impl Ctx {
    fn push(&mut self, line: Option<usize>, path: String, message: String) {
        self.issues.push(ConfigIssue {
            line,
            path,
            message,
        });
    }

    fn take_raw<'s>(&mut self, sec: Option<&'s mut Section>, key: &str) -> Option<(&'s str, usize)> {
        let sec = sec?;
        let e = sec.entries.get_mut(key)?;
        e.used = true;
        Some((e.value.as_str(), e.line))
    }

    fn take_f64(&mut self, sec: Option<&mut Section>, name: &str, key: &str) -> Option<f64> {
        let (v, line) = self.take_raw(sec, key)?;
        let (v, line) = (v.to_string(), line);
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Some(x),
            Ok(x) => {
                self.push(
                    Some(line),
                    format!("{name}.{key}"),
                    format!("must be finite, got {x}"),
                );
                None
            }
            Err(_) => {
                self.push(
                    Some(line),
                    format!("{name}.{key}"),
                    format!("not a number: '{v}'"),
                );
                None
            }
        }
    }

    fn take_usize(&mut self, sec: Option<&mut Section>, name: &str, key: &str) -> Option<usize> {
        let (v, line) = self.take_raw(sec, key)?;
        let (v, line) = (v.to_string(), line);
        match v.parse::<usize>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.push(
                    Some(line),
                    format!("{name}.{key}"),
                    format!("not a nonnegative integer: '{v}'"),
                );
                None
            }
        }
    }

    fn take_u64(&mut self, sec: Option<&mut Section>, name: &str, key: &str) -> Option<u64> {
        let (v, line) = self.take_raw(sec, key)?;
        let (v, line) = (v.to_string(), line);
        match v.parse::<u64>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.push(
                    Some(line),
                    format!("{name}.{key}"),
                    format!("not a nonnegative integer: '{v}'"),
                );
                None
            }
        }
    }

    fn take_bool(&mut self, sec: Option<&mut Section>, name: &str, key: &str) -> Option<bool> {
        let (v, line) = self.take_raw(sec, key)?;
        let (v, line) = (v.to_string(), line);
        match v.as_str() {
            "true" => Some(true),
            "false" => Some(false),
            _ => {
                self.push(
                    Some(line),
                    format!("{name}.{key}"),
                    format!("expected true or false, got '{v}'"),
                );
                None
            }
        }
    }

    fn take_expr(
        &mut self,
        sec: Option<&mut Section>,
        name: &str,
        key: &str,
        var: &str,
    ) -> Option<ScalarFn> {
        let (v, line) = self.take_raw(sec, key)?;
        let (v, line) = (v.to_string(), line);
        match ScalarFn::parse(&v, var) {
            Ok(f) => Some(f),
            Err(e) => {
                self.push(Some(line), format!("{name}.{key}"), e.to_string());
                None
            }
        }
    }

    fn take_choice(
        &mut self,
        sec: Option<&mut Section>,
        name: &str,
        key: &str,
        choices: &[&str],
    ) -> Option<usize> {
        let (v, line) = self.take_raw(sec, key)?;
        let (v, line) = (v.to_string(), line);
        match choices.iter().position(|c| *c == v) {
            Some(i) => Some(i),
            None => {
                self.push(
                    Some(line),
                    format!("{name}.{key}"),
                    format!("expected one of {}, got '{v}'", choices.join(", ")),
                );
                None
            }
        }
    }

    fn take_f64_list(&mut self, sec: Option<&mut Section>, name: &str, key: &str) -> Option<Vec<f64>> {
        let (v, line) = self.take_raw(sec, key)?;
        let (v, line) = (strip_brackets(v).to_string(), line);
        let mut out = Vec::new();
        for part in v.split(',') {
            match part.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => out.push(x),
                _ => {
                    self.push(
                        Some(line),
                        format!("{name}.{key}"),
                        format!("not a finite number: '{}'", part.trim()),
                    );
                    return None;
                }
            }
        }
        Some(out)
    }

    fn take_usize_list(
        &mut self,
        sec: Option<&mut Section>,
        name: &str,
        key: &str,
    ) -> Option<Vec<usize>> {
        let (v, line) = self.take_raw(sec, key)?;
        let (v, line) = (strip_brackets(v).to_string(), line);
        let mut out = Vec::new();
        for part in v.split(',') {
            match part.trim().parse::<usize>() {
                Ok(x) => out.push(x),
                _ => {
                    self.push(
                        Some(line),
                        format!("{name}.{key}"),
                        format!("not a nonnegative integer: '{}'", part.trim()),
                    );
                    return None;
                }
            }
        }
        Some(out)
    }

    fn require<T>(&mut self, got: Option<T>, sec_line: Option<usize>, path: &str) -> Option<T> {
        if got.is_none() {
            // only report absence; parse failures already carry an issue
            if !self.issues.iter().any(|i| i.path == path) {
                self.push(sec_line, path.to_string(), "missing required key".into());
            }
        }
        got
    }
}

/// Ordered u1..un profiles from a section; gaps and strays are errors.
fn take_profiles(ctx: &mut Ctx, sec: &mut Section, count_hint: Option<usize>) -> Option<Vec<ScalarFn>> {
    let name = sec.name.clone();
    let mut indices: Vec<(usize, String)> = Vec::new();
    for key in sec.order.clone() {
        if let Some(num) = key.strip_prefix('u') {
            if let Ok(i) = num.parse::<usize>() {
                if i >= 1 {
                    indices.push((i, key));
                    continue;
                }
            }
            let line = sec.entries[&key].line;
            ctx.push(
                Some(line),
                format!("{name}.{key}"),
                "species profiles are u1, u2, ...".into(),
            );
            sec.entries.get_mut(&key).unwrap().used = true;
        }
    }
    indices.sort();
    let n = count_hint.unwrap_or(indices.len());
    let mut out = Vec::new();
    let mut ok = true;
    for want in 1..=n {
        match indices.iter().find(|(i, _)| *i == want) {
            Some((_, key)) => {
                if let Some(f) = ctx.take_expr(Some(&mut *sec), &name, key, "x") {
                    out.push(f);
                } else {
                    ok = false;
                }
            }
            None => {
                ctx.push(
                    Some(sec.line),
                    format!("{name}.u{want}"),
                    "missing species profile".into(),
                );
                ok = false;
            }
        }
    }
    for (i, key) in &indices {
        if *i > n {
            let line = sec.entries[key].line;
            ctx.push(
                Some(line),
                format!("{name}.{key}"),
                format!("model has {n} species"),
            );
            sec.entries.get_mut(key).unwrap().used = true;
        }
    }
    (ok && out.len() == n).then_some(out)
}

const KNOWN_SECTIONS: [&str; 8] = [
    "model",
    "grid",
    "scheme",
    "diagnostics",
    "initial",
    "initial2",
    "experiment",
    "output",
];

pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigIssue>> {
    let parser = Parser::parse(text);
    let mut ctx = Ctx {
        issues: parser.issues,
    };
    let mut sections = parser.sections;

    for s in &sections {
        if !KNOWN_SECTIONS.contains(&s.name.as_str()) {
            ctx.push(
                Some(s.line),
                s.name.clone(),
                format!(
                    "unknown section (known: {})",
                    KNOWN_SECTIONS.join(", ")
                ),
            );
        }
    }
    let sec = |name: &str| -> Option<usize> { sections.iter().position(|s| s.name == name) };
    let idx_model = sec("model");
    let idx_grid = sec("grid");
    let idx_scheme = sec("scheme");
    let idx_diag = sec("diagnostics");
    let idx_initial = sec("initial");
    let idx_initial2 = sec("initial2");
    let idx_experiment = sec("experiment");
    let idx_output = sec("output");

    // ---- model ----
    let model: Option<CoefficientModel> = {
        let line = idx_model.map(|i| sections[i].line);
        if idx_model.is_none() {
            ctx.push(None, "model".into(), "missing required section".into());
        }
        let preset = ctx
            .take_raw(idx_model.map(|i| &mut sections[i]), "preset")
            .map(|(v, l)| (v.to_string(), l));
        let preset = if idx_model.is_some() {
            ctx.require(preset, line, "model.preset")
        } else {
            None
        };
        match preset.as_ref().map(|(v, _)| v.as_str()) {
            None => None,
            Some("custom") => {
                let weights = ctx.take_f64_list(idx_model.map(|i| &mut sections[i]), "model", "a");
                let p = ctx.take_expr(idx_model.map(|i| &mut sections[i]), "model", "p", "s");
                let q = ctx.take_expr(idx_model.map(|i| &mut sections[i]), "model", "q", "s");
                let r = ctx.take_expr(idx_model.map(|i| &mut sections[i]), "model", "r", "s");
                let r_prime =
                    ctx.take_expr(idx_model.map(|i| &mut sections[i]), "model", "r_prime", "s");
                let sup_raw = ctx
                    .take_raw(idx_model.map(|i| &mut sections[i]), "L")
                    .map(|(v, l)| (v.to_string(), l));
                let weights = ctx.require(weights, line, "model.a");
                let p = ctx.require(p, line, "model.p");
                let q = ctx.require(q, line, "model.q");
                let r = ctx.require(r, line, "model.r");
                let sup_raw = ctx.require(sup_raw, line, "model.L");
                let sup = match sup_raw {
                    Some((ref v, l)) => {
                        if v == "unbounded" || v == "inf" {
                            Some(UpperBound::Unbounded)
                        } else {
                            match v.parse::<f64>() {
                                Ok(x) if x.is_finite() && x > 0.0 => Some(UpperBound::Finite(x)),
                                _ => {
                                    ctx.push(
                                        Some(l),
                                        "model.L".into(),
                                        format!(
                                            "expected a positive number or unbounded, got '{v}'"
                                        ),
                                    );
                                    None
                                }
                            }
                        }
                    }
                    None => None,
                };
                match (weights, p, q, r, sup) {
                    (Some(w), Some(p), Some(q), Some(r), Some(sup)) => {
                        let n = w.len();
                        match CoefficientModel::new(n, w, p, q, r, r_prime, sup) {
                            Ok(m) => Some(m),
                            Err(e) => {
                                ctx.push(line, "model".into(), e.to_string());
                                None
                            }
                        }
                    }
                    _ => None,
                }
            }
            Some("maxwell_stefan") => {
                let d0 = ctx.take_f64(idx_model.map(|i| &mut sections[i]), "model", "D0");
                let d = ctx.take_f64(idx_model.map(|i| &mut sections[i]), "model", "D");
                let n = ctx.take_usize(idx_model.map(|i| &mut sections[i]), "model", "n");
                let d0 = ctx.require(d0, line, "model.D0");
                let d = ctx.require(d, line, "model.D");
                let n = ctx.require(n, line, "model.n");
                match (d0, d, n) {
                    (Some(d0), Some(d), Some(n)) => match preset_maxwell_stefan(d0, d, n) {
                        Ok(m) => Some(m),
                        Err(e) => {
                            ctx.push(line, "model".into(), e.to_string());
                            None
                        }
                    },
                    _ => None,
                }
            }
            Some("skt") => {
                let a0 = ctx.take_f64(idx_model.map(|i| &mut sections[i]), "model", "a0");
                let weights = ctx.take_f64_list(idx_model.map(|i| &mut sections[i]), "model", "a");
                let sup = ctx.take_f64(idx_model.map(|i| &mut sections[i]), "model", "L");
                let sup = match sup {
                    Some(s) if s <= 0.0 => {
                        ctx.push(line, "model.L".into(), format!("must be positive, got {s}"));
                        None
                    }
                    other => other,
                };
                let a0 = ctx.require(a0, line, "model.a0");
                let weights = ctx.require(weights, line, "model.a");
                let sup = ctx.require(sup, line, "model.L");
                match (a0, weights, sup) {
                    (Some(a0), Some(w), Some(sup)) => match preset_skt(a0, &w, sup) {
                        Ok(m) => Some(m),
                        Err(e) => {
                            ctx.push(line, "model".into(), e.to_string());
                            None
                        }
                    },
                    _ => None,
                }
            }
            Some("ion_transport") => {
                let d = ctx.take_f64(idx_model.map(|i| &mut sections[i]), "model", "D");
                let z = ctx.take_f64(idx_model.map(|i| &mut sections[i]), "model", "z");
                let n = ctx.take_usize(idx_model.map(|i| &mut sections[i]), "model", "n");
                let d = ctx.require(d, line, "model.D");
                let z = ctx.require(z, line, "model.z");
                let n = ctx.require(n, line, "model.n");
                match (d, z, n) {
                    (Some(d), Some(z), Some(n)) => match preset_ion_transport(d, z, n) {
                        Ok(m) => Some(m),
                        Err(e) => {
                            ctx.push(line, "model".into(), e.to_string());
                            None
                        }
                    },
                    _ => None,
                }
            }
            Some(other) => {
                let l = preset.as_ref().map(|(_, l)| *l);
                ctx.push(
                    l,
                    "model.preset".into(),
                    format!(
                        "unknown preset '{other}' (maxwell_stefan, skt, ion_transport, custom)"
                    ),
                );
                None
            }
        }
    };

    // ---- grid ----
    let grid: Option<Grid1D> = {
        let line = idx_grid.map(|i| sections[i].line);
        if idx_grid.is_none() {
            ctx.push(None, "grid".into(), "missing required section".into());
        }
        let cells = ctx.take_usize(idx_grid.map(|i| &mut sections[i]), "grid", "cells");
        let length = ctx
            .take_f64(idx_grid.map(|i| &mut sections[i]), "grid", "length")
            .or(idx_grid.map(|_| 1.0));
        let cells = ctx.require(cells, line, "grid.cells");
        match (cells, length) {
            (Some(c), Some(l)) => match Grid1D::new(c, l) {
                Ok(g) => Some(g),
                Err(e) => {
                    ctx.push(line, "grid".into(), e.to_string());
                    None
                }
            },
            _ => None,
        }
    };

    // ---- diagnostics ----
    let mut entropy = EntropySpec::default();
    {
        if let Some(eps) = ctx.take_f64(idx_diag.map(|i| &mut sections[i]), "diagnostics", "eps") {
            entropy.eps = eps;
        }
        if let Some(i) = ctx.take_choice(
            idx_diag.map(|i| &mut sections[i]),
            "diagnostics",
            "kind",
            &["gajewski", "relative_sym"],
        ) {
            entropy.kind = [SemimetricKind::Gajewski, SemimetricKind::RelativeSym][i];
        }
        if let Err(e) = entropy.validate() {
            ctx.push(
                idx_diag.map(|i| sections[i].line),
                "diagnostics.eps".into(),
                e.to_string(),
            );
        }
    }

    // ---- scheme ----
    let scheme: Option<SchemeConfig> = {
        let line = idx_scheme.map(|i| sections[i].line);
        if idx_scheme.is_none() {
            ctx.push(None, "scheme".into(), "missing required section".into());
        }
        let t_end = ctx.take_f64(idx_scheme.map(|i| &mut sections[i]), "scheme", "t_end");
        let t_end = ctx.require(t_end, line, "scheme.t_end");
        let dt_raw = match ctx.take_raw(idx_scheme.map(|i| &mut sections[i]), "dt") {
            None => Some(None),
            Some((v, l)) => {
                let (v, l) = (v.to_string(), l);
                match v.parse::<f64>() {
                    Ok(x) if x.is_finite() && x > 0.0 => Some(Some(x)),
                    _ => {
                        ctx.push(
                            Some(l),
                            "scheme.dt".into(),
                            format!("expected a positive number, got '{v}'"),
                        );
                        None
                    }
                }
            }
        };
        let auto_cfl = ctx.take_bool(idx_scheme.map(|i| &mut sections[i]), "scheme", "auto_cfl");
        // exactly one way to choose the step
        let dt = match (dt_raw, auto_cfl) {
            (Some(Some(x)), None | Some(false)) => Some(Some(x)),
            (Some(None), Some(true)) => Some(None),
            (Some(Some(_)), Some(true)) => {
                ctx.push(
                    line,
                    "scheme.dt".into(),
                    "give either dt or auto_cfl = true, not both".into(),
                );
                None
            }
            (Some(None), None | Some(false)) => {
                if idx_scheme.is_some() {
                    ctx.push(
                        line,
                        "scheme.dt".into(),
                        "either dt or auto_cfl = true is required".into(),
                    );
                }
                None
            }
            (None, _) => None,
        };
        let cfl_safety = ctx.take_f64(idx_scheme.map(|i| &mut sections[i]), "scheme", "cfl_safety");
        let drift = ctx.take_choice(
            idx_scheme.map(|i| &mut sections[i]),
            "scheme",
            "drift_flux",
            &["centered", "upwind"],
        );
        let face_average = ctx.take_choice(
            idx_scheme.map(|i| &mut sections[i]),
            "scheme",
            "face_average",
            &["arithmetic", "harmonic"],
        );
        let q_consistent =
            ctx.take_bool(idx_scheme.map(|i| &mut sections[i]), "scheme", "q_consistent");
        let floor = ctx.take_f64(
            idx_scheme.map(|i| &mut sections[i]),
            "scheme",
            "positivity_floor",
        );
        let output_every = ctx.take_usize(
            idx_scheme.map(|i| &mut sections[i]),
            "scheme",
            "output_every",
        );
        match (t_end, dt) {
            (Some(t_end), Some(dt)) => {
                let mut s = SchemeConfig {
                    t_end,
                    dt,
                    diag_eps: entropy.eps,
                    ..Default::default()
                };
                if let Some(v) = cfl_safety {
                    s.cfl_safety = v;
                }
                if let Some(i) = drift {
                    s.drift_flux = [DriftFlux::Centered, DriftFlux::Upwind][i];
                }
                if let Some(i) = face_average {
                    s.face_average = [FaceAverage::Arithmetic, FaceAverage::Harmonic][i];
                }
                if let Some(v) = q_consistent {
                    s.q_consistent = v;
                }
                if let Some(v) = floor {
                    s.positivity_floor = v;
                }
                if let Some(v) = output_every {
                    s.output_every = v;
                }
                match s.validate() {
                    Ok(()) => Some(s),
                    Err(e) => {
                        ctx.push(line, "scheme".into(), e.to_string());
                        None
                    }
                }
            }
            _ => None,
        }
    };

    // ---- experiment ----
    let experiment: Option<ExperimentSettings> = if let Some(i) = idx_experiment {
        let line = Some(sections[i].line);
        let kind = ctx.take_choice(
            Some(&mut sections[i]),
            "experiment",
            "kind",
            &["duplicate", "same_aggregate", "gronwall", "refinement"],
        );
        let kind = ctx.require(kind, line, "experiment.kind").map(|k| {
            [
                ExperimentKind::Duplicate,
                ExperimentKind::SameAggregate,
                ExperimentKind::Gronwall,
                ExperimentKind::Refinement,
            ][k]
        });
        let delta = ctx.take_f64(Some(&mut sections[i]), "experiment", "delta");
        let seed = ctx.take_u64(Some(&mut sections[i]), "experiment", "seed");
        let tol_decay = ctx.take_f64(Some(&mut sections[i]), "experiment", "tol_decay");
        let ladder = ctx.take_usize_list(Some(&mut sections[i]), "experiment", "ladder");
        if let Some(d) = delta {
            if d < 0.0 {
                ctx.push(
                    line,
                    "experiment.delta".into(),
                    format!("must be nonnegative, got {d}"),
                );
            }
        }
        if let Some(t) = tol_decay {
            if t < 0.0 {
                ctx.push(
                    line,
                    "experiment.tol_decay".into(),
                    format!("must be nonnegative, got {t}"),
                );
            }
        }
        match kind {
            Some(kind) => {
                if kind == ExperimentKind::Refinement && ladder.is_none() {
                    ctx.push(
                        line,
                        "experiment.ladder".into(),
                        "refinement needs a cell ladder like 32, 64, 128".into(),
                    );
                }
                Some(ExperimentSettings {
                    kind,
                    delta: delta.unwrap_or(0.01),
                    seed: seed.unwrap_or(1),
                    tol_decay: tol_decay.unwrap_or(1e-3),
                    ladder: ladder.unwrap_or_default(),
                })
            }
            None => None,
        }
    } else {
        None
    };

    // ---- initial ----
    let n_species = model.as_ref().map(|m| m.weights().len());
    let (initial, background) = {
        if idx_initial.is_none() {
            ctx.push(None, "initial".into(), "missing required section".into());
            (None, None)
        } else {
            let i = idx_initial.unwrap();
            let line = Some(sections[i].line);
            let f = ctx.take_expr(Some(&mut sections[i]), "initial", "f", "x");
            let f = ctx.require(f, line, "initial.f");
            let profiles = take_profiles(&mut ctx, &mut sections[i], n_species);
            (profiles, f)
        }
    };

    // ---- initial2 ----
    let initial2: Option<Vec<ScalarFn>> = if let Some(i) = idx_initial2 {
        let is_gronwall = experiment
            .as_ref()
            .map(|e| e.kind == ExperimentKind::Gronwall)
            .unwrap_or(false);
        if !is_gronwall {
            ctx.push(
                Some(sections[i].line),
                "initial2".into(),
                "only meaningful with experiment kind gronwall".into(),
            );
        }
        take_profiles(&mut ctx, &mut sections[i], n_species)
    } else {
        None
    };

    // ---- compatibility of the initial data with the potential equation ----
    if let (Some(m), Some(g), Some(init), Some(bg)) = (&model, &grid, &initial, &background) {
        let mut check = |profiles: &[ScalarFn], section: &str| {
            let state = SpeciesState::from_profiles(g, profiles);
            if state.min_value() < 0.0 {
                ctx.push(
                    None,
                    section.to_string(),
                    format!(
                        "species profiles must be nonnegative on the grid (min {})",
                        state.min_value()
                    ),
                );
                return;
            }
            match state.aggregate(m.weights()) {
                Ok(agg) => {
                    let f = Field::from_profile(g, bg);
                    let rhs = Field {
                        values: agg
                            .values
                            .iter()
                            .zip(&f.values)
                            .map(|(a, b)| a - b)
                            .collect(),
                    };
                    let defect = mass(g, &rhs).abs();
                    let tol = compat_tol(g.cells(), rhs.max_abs());
                    if defect > tol {
                        ctx.push(
                            None,
                            section.to_string(),
                            format!(
                                "initial data violate the compatibility condition \
                                 of the potential equation: defect {defect:.6e} \
                                 exceeds tolerance {tol:.6e}"
                            ),
                        );
                    }
                }
                Err(e) => ctx.push(None, section.to_string(), e.to_string()),
            }
        };
        check(init, "initial");
        if let Some(init2) = &initial2 {
            check(init2, "initial2");
        }
    }

    // ---- output ----
    let outdir = ctx
        .take_raw(idx_output.map(|i| &mut sections[i]), "dir")
        .map(|(v, _)| PathBuf::from(v));
    let header_time = ctx
        .take_bool(idx_output.map(|i| &mut sections[i]), "output", "header_time")
        .unwrap_or(true);

    // ---- leftovers ----
    for s in &sections {
        if !KNOWN_SECTIONS.contains(&s.name.as_str()) {
            continue; // already reported
        }
        for (key, e) in &s.entries {
            if !e.used {
                ctx.push(
                    Some(e.line),
                    format!("{}.{key}", s.name),
                    "unknown key for this section".into(),
                );
            }
        }
    }

    if !ctx.issues.is_empty() {
        ctx.issues.sort_by_key(|i| i.line.unwrap_or(0));
        return Err(ctx.issues);
    }

    Ok(RunConfig {
        model: model.expect("validated"),
        grid: grid.expect("validated"),
        scheme: scheme.expect("validated"),
        entropy,
        initial: initial.expect("validated"),
        background: background.expect("validated"),
        initial2,
        experiment,
        outdir,
        header_time,
    })
}
