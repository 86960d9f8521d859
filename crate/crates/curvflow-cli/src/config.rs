//! JSON run configs. Each file is read into a generic value first so that every
//! problem (unknown key, missing key, bad type, bad range) is reported at once,
//! tagged with the line of the offending top-level key.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use curvflow::bubbles::SolutionPart;
use curvflow::energy::Preset;
use curvflow::geometry::{Backend, CondVariant, FnSpec};
use curvflow::shadow::{DivergingSetup, LyapunovSpec, RkPolicy, ShadowMode};
use curvflow::Dim;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult, Violations};

/// Line (1-based) of every key of the outermost JSON object.
fn top_level_key_lines(src: &str) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    let mut depth = 0usize;
    let mut line = 1usize;
    let mut chars = src.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\n' => line += 1,
            '{' | '[' => depth += 1,
            '}' | ']' => depth = depth.saturating_sub(1),
            '"' => {
                let start = line;
                let mut s = String::new();
                while let Some(c) = chars.next() {
                    match c {
                        '\\' => {
                            if let Some(e) = chars.next() {
                                s.push(e);
                            }
                        }
                        '"' => break,
                        '\n' => {
                            line += 1;
                            s.push(c);
                        }
                        _ => s.push(c),
                    }
                }
                if depth == 1 {
                    while chars.peek().is_some_and(|c| c.is_whitespace() && *c != '\n') {
                        chars.next();
                    }
                    if chars.peek() == Some(&':') {
                        out.entry(s).or_insert(start);
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Typed access to the fields of one config object, collecting violations.
pub struct Fields {
    map: Map<String, Value>,
    lines: HashMap<String, usize>,
    /// `(line, message)`; missing keys have no line and sort last.
    errors: Vec<(usize, String)>,
}

impl Fields {
    pub fn parse(src: &str) -> CliResult<Self> {
        let value: Value = serde_json::from_str(src).map_err(|e| {
            CliError::config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        let Value::Object(map) = value else {
            return Err(CliError::config("line 1: config must be a JSON object"));
        };
        Ok(Fields { map, lines: top_level_key_lines(src), errors: Vec::new() })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&src)
    }

    fn at(&self, key: &str) -> String {
        match self.lines.get(key) {
            Some(l) => format!("line {l}: `{key}`"),
            None => format!("`{key}`"),
        }
    }

    fn record(&mut self, key: &str, msg: String) {
        let line = self.lines.get(key).copied().unwrap_or(usize::MAX);
        self.errors.push((line, msg));
    }

    fn decode<T: DeserializeOwned>(&mut self, key: &str, v: Value) -> Option<T> {
        match serde_json::from_value(v) {
            Ok(t) => Some(t),
            Err(e) => {
                self.record(key, format!("{}: {e}", self.at(key)));
                None
            }
        }
    }

    pub fn required<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        match self.map.remove(key) {
            Some(v) => self.decode(key, v),
            None => {
                self.record(key, format!("missing field `{key}`"));
                None
            }
        }
    }

    pub fn optional<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        let v = self.map.remove(key)?;
        self.decode(key, v)
    }

    pub fn raw(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    /// Record a range violation on `key` unless `ok`.
    pub fn ensure(&mut self, key: &str, ok: bool, what: &str) {
        if !ok {
            self.record(key, format!("{}: {what}", self.at(key)));
        }
    }

    pub fn push(&mut self, key: &str, what: impl std::fmt::Display) {
        self.record(key, format!("{}: {what}", self.at(key)));
    }

    /// Fail with every collected violation, unknown keys included.
    pub fn finish(mut self) -> CliResult<()> {
        let unknown: Vec<String> = self.map.keys().cloned().collect();
        for k in unknown {
            self.record(&k, format!("{}: unknown field", self.at(&k)));
        }
        if self.errors.is_empty() {
            return Ok(());
        }
        // stable, so several problems on one key keep their order
        self.errors.sort_by_key(|(l, _)| *l);
        Err(CliError::Config(Violations(self.errors.into_iter().map(|(_, m)| m).collect())))
    }
}

fn positive(x: Option<f64>) -> bool {
    x.is_none_or(|v| v > 0.0 && v.is_finite())
}

/// Initial data of a PDE run.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Preset(Preset),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub dim: Dim,
    pub k: FnSpec,
    pub grid_size: usize,
    pub t_end: f64,
    pub dt_init: f64,
    pub tol: f64,
    pub dt_max: f64,
    pub init: InitialData,
    pub out: Option<PathBuf>,
    /// Where to write the final conformal factor, if anywhere.
    pub final_field: Option<PathBuf>,
}

impl FlowConfig {
    pub fn from_fields(mut f: Fields) -> CliResult<Self> {
        let dim = f.required::<Dim>("dim");
        let k = f.optional::<FnSpec>("K").unwrap_or(FnSpec::constant(1.0));
        let grid_size = f.required::<usize>("grid_size");
        let t_end = f.required::<f64>("t_end");
        let dt_init = f.required::<f64>("dt_init");
        let tol = f.required::<f64>("tol");
        let dt_max = f.optional::<f64>("dt_max");
        let init = match f.raw("init") {
            None => {
                f.push("init", "missing (a preset object or {\"file\": path})");
                None
            }
            Some(Value::Object(m)) if m.contains_key("file") => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct FromFile {
                    file: PathBuf,
                }
                match serde_json::from_value::<FromFile>(Value::Object(m)) {
                    Ok(v) => Some(InitialData::File(v.file)),
                    Err(e) => {
                        f.push("init", e);
                        None
                    }
                }
            }
            Some(v) => match serde_json::from_value::<Preset>(v) {
                Ok(p) => Some(InitialData::Preset(p)),
                Err(e) => {
                    f.push("init", e);
                    None
                }
            },
        };
        let out = f.optional::<PathBuf>("out");
        let final_field = f.optional::<PathBuf>("final_field");
        f.ensure("grid_size", grid_size.is_none_or(|m| m >= 8), "must be at least 8");
        f.ensure("t_end", positive(t_end), "must be positive");
        f.ensure("dt_init", positive(dt_init), "must be positive");
        f.ensure("tol", positive(tol), "must be positive");
        f.ensure("dt_max", positive(dt_max), "must be positive");
        f.finish()?;
        Ok(FlowConfig {
            dim: dim.unwrap(),
            k,
            grid_size: grid_size.unwrap(),
            t_end: t_end.unwrap(),
            dt_init: dt_init.unwrap(),
            tol: tol.unwrap(),
            dt_max: dt_max.unwrap_or(0.05),
            init: init.unwrap(),
            out,
            final_field,
        })
    }
}

/// A bubble of a shadow run; without `alpha` the amplitude is put on the lock.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleInit {
    pub a: Vec<f64>,
    pub lambda: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowRunConfig {
    pub dim: Dim,
    pub backend: Backend,
    pub k: FnSpec,
    pub mass: FnSpec,
    pub mode: ShadowMode,
    pub solution: Option<SolutionPart>,
    pub policy: RkPolicy,
    pub bubbles: Vec<BubbleInit>,
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub lyapunov: Option<LyapunovSpec>,
    pub out: Option<PathBuf>,
}

impl ShadowRunConfig {
    pub fn from_fields(mut f: Fields) -> CliResult<Self> {
        let dim = f.required::<Dim>("dim");
        let backend = f.optional::<Backend>("backend").unwrap_or(Backend::Flat);
        let k = f.required::<FnSpec>("K");
        let mass = f.optional::<FnSpec>("mass").unwrap_or(FnSpec::constant(0.0));
        let mode = f.optional::<ShadowMode>("mode").unwrap_or(ShadowMode::NoSolution);
        let solution = f.optional::<SolutionPart>("solution");
        let policy = f.optional::<RkPolicy>("policy").unwrap_or_default();
        let bubbles = f.required::<Vec<BubbleInit>>("bubbles");
        let t_end = f.required::<f64>("t_end");
        let rtol = f.optional::<f64>("rtol");
        let atol = f.optional::<f64>("atol");
        let h_max = f.optional::<f64>("h_max");
        let lyapunov = f.optional::<LyapunovSpec>("lyapunov");
        let out = f.optional::<PathBuf>("out");
        if let Some(b) = &bubbles {
            f.ensure("bubbles", !b.is_empty(), "needs at least one bubble");
            f.ensure("bubbles", b.iter().all(|b| b.lambda > 1.0), "every lambda must exceed 1");
            f.ensure("bubbles", b.iter().all(|b| b.alpha.is_none_or(|a| a > 0.0)), "every alpha must be positive");
        }
        f.ensure("t_end", positive(t_end), "must be positive");
        f.ensure("rtol", positive(rtol), "must be positive");
        f.ensure("atol", positive(atol), "must be positive");
        f.ensure("h_max", positive(h_max), "must be positive");
        if let Some(l) = &lyapunov {
            if let Err(e) = l.validate() {
                f.push("lyapunov", e);
            }
        }
        f.finish()?;
        Ok(ShadowRunConfig {
            dim: dim.unwrap(),
            backend,
            k: k.unwrap(),
            mass,
            mode,
            solution,
            policy,
            bubbles: bubbles.unwrap(),
            t_end: t_end.unwrap(),
            rtol: rtol.unwrap_or(1e-10),
            atol: atol.unwrap_or(1e-12),
            h_max: h_max.unwrap_or(f64::INFINITY),
            lyapunov,
            out,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionsConfig {
    pub backend: Backend,
    /// `[i, j]`: the pair estimates use both, the self terms the first.
    pub bubbles: Vec<curvflow::bubbles::BubbleParam>,
    pub panels_per_log_unit: f64,
    pub rel_tol: f64,
    /// Accepted range of `numeric / predicted` for the leading pair estimate.
    pub band: (f64, f64),
}

impl InteractionsConfig {
    pub fn from_fields(mut f: Fields) -> CliResult<Self> {
        let backend = f.optional::<Backend>("backend").unwrap_or(Backend::Flat);
        let bubbles = f.required::<Vec<curvflow::bubbles::BubbleParam>>("bubbles");
        let ppl = f.optional::<f64>("panels_per_log_unit");
        let rel_tol = f.optional::<f64>("rel_tol");
        let band = f.optional::<(f64, f64)>("band");
        if let Some(b) = &bubbles {
            f.ensure("bubbles", b.len() == 2, "needs exactly two bubbles");
        }
        f.ensure("panels_per_log_unit", positive(ppl), "must be positive");
        f.ensure("rel_tol", positive(rel_tol), "must be positive");
        f.ensure("band", band.is_none_or(|(lo, hi)| lo < hi), "needs lower < upper");
        f.finish()?;
        let dq = curvflow::bubbles::InteractionQuad::default();
        Ok(InteractionsConfig {
            backend,
            bubbles: bubbles.unwrap(),
            panels_per_log_unit: ppl.unwrap_or(dq.panels_per_log_unit),
            rel_tol: rel_tol.unwrap_or(dq.rel_tol),
            band: band.unwrap_or((0.95, 1.05)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckCondConfig {
    pub dim: Dim,
    pub backend: Backend,
    pub k: FnSpec,
    pub variant: CondVariant,
    pub margin_c: f64,
    pub budget: usize,
    pub box_radius: f64,
    pub tube_radius: f64,
    pub not_round_sphere: bool,
    pub out: Option<PathBuf>,
}

impl CheckCondConfig {
    pub fn from_fields(mut f: Fields) -> CliResult<Self> {
        let d = curvflow::geometry::CondOptions::default();
        let dim = f.required::<Dim>("dim");
        let backend = f.optional::<Backend>("backend").unwrap_or(Backend::Flat);
        let k = f.required::<FnSpec>("K");
        let variant = f.optional::<CondVariant>("variant").unwrap_or(d.variant);
        let margin_c = f.optional::<f64>("margin_c");
        let budget = f.optional::<usize>("budget");
        let box_radius = f.optional::<f64>("box_radius");
        let tube_radius = f.optional::<f64>("tube_radius");
        let not_round_sphere = f.optional::<bool>("not_round_sphere").unwrap_or(d.not_round_sphere);
        let out = f.optional::<PathBuf>("out");
        f.ensure("margin_c", positive(margin_c), "must be positive");
        f.ensure("budget", budget.is_none_or(|b| b > 0), "must be at least 1");
        f.ensure("box_radius", positive(box_radius), "must be positive");
        f.ensure("tube_radius", positive(tube_radius), "must be positive");
        f.finish()?;
        Ok(CheckCondConfig {
            dim: dim.unwrap(),
            backend,
            k: k.unwrap(),
            variant,
            margin_c: margin_c.unwrap_or(d.margin_c),
            budget: budget.unwrap_or(d.budget),
            box_radius: box_radius.unwrap_or(d.box_radius),
            tube_radius: tube_radius.unwrap_or(d.tube_radius),
            not_round_sphere,
            out,
        })
    }
}

/// Scenario setup; every field optional, defaults as in [`DivergingSetup::default`].
pub fn diverging_setup(mut f: Fields) -> CliResult<DivergingSetup> {
    let d = DivergingSetup::default();
    let lambda0 = f.optional::<f64>("lambda0");
    let a0_norm = f.optional::<f64>("a0_norm");
    let t_end = f.optional::<f64>("t_end");
    let transient = f.optional::<f64>("transient");
    f.ensure("lambda0", lambda0.is_none_or(|l| l > 1.0), "must exceed 1");
    f.ensure("a0_norm", positive(a0_norm), "must be positive");
    f.ensure("t_end", positive(t_end), "must be positive");
    f.ensure("transient", transient.is_none_or(|t| t >= 0.0), "must be non-negative");
    f.finish()?;
    Ok(DivergingSetup {
        lambda0: lambda0.unwrap_or(d.lambda0),
        a0_norm: a0_norm.unwrap_or(d.a0_norm),
        t_end: t_end.unwrap_or(d.t_end),
        transient: transient.unwrap_or(d.transient),
    })
}
