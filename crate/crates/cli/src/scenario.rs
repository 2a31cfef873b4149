//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "ou_standard"            # [A-Za-z0-9_-]+, names the output folder
//!
//! [model]
//! catalog = "ou_const"            # see `kolmolab list-catalog`
//! dim = 1                         # default 1
//! kind = "ou"                     # optional; must match the catalog entry
//! params = { rate = 1.0 }         # overrides of catalog parameters
//!
//! [constants]                     # optional; defaults come from the catalog
//! eta0 = 1.0
//! lambda = 1.0
//! r0 = -1.0
//!
//! [sim]                           # all optional
//! dt = 5e-3
//! paths = 20000
//! seed = 1
//! scheme = "euler"                # or "semi_implicit"
//! tol = 1e-3                      # burn-in accuracy for sampled measures
//!
//! [output]
//! dir = "out"
//!
//! [[experiment]]                  # executed in file order
//! id = "lsi"                      # [A-Za-z0-9_-]+, names the CSV file
//! kind = "lsi"                    # audit | simulate | measure | lsi | poincare
//!                                 # | hyper | decay | limit
//! t = 5.0
//! p = [1.5, 2.0, 4.0]
//! ```
//!
//! Per-experiment keys, all optional:
//!
//! | key            | used by                              | default                 |
//! |----------------|--------------------------------------|-------------------------|
//! | `t`            | measure, lsi, poincare, hyper (as s) | `interval_start + 5`    |
//! | `times`        | measure, limit                       | kind-specific           |
//! | `s`, `x`       | simulate                             | `t − 1`, origin         |
//! | `p`            | lsi, poincare, decay                 | `[2]`, decay `[1.5,2,4]`|
//! | `q`            | hyper                                | `[1.5, 2]`              |
//! | `gaps`         | hyper, decay                         | kind-specific           |
//! | `anchors`      | decay                                | `[interval_start + 20]` |
//! | `battery`      | lsi, poincare, hyper                 | 20                      |
//! | `battery_seed` | lsi, poincare, hyper                 | 1                       |
//! | `outer`        | hyper, decay (Monte Carlo engine)    | 1000                    |
//! | `inner`        | hyper, decay (Monte Carlo engine)    | 64                      |
//! | `radius`       | audit                                | 10                      |
//! | `target_omega` | decay                                | none                    |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub model: ModelSection,
    #[serde(default)]
    pub constants: Option<ConstantsSection>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<Experiment>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub catalog: String,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub eta0: f64,
    pub lambda: f64,
    pub r0: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_dt() -> f64 {
    5e-3
}
fn default_paths() -> usize {
    20_000
}
fn one_u64() -> u64 {
    1
}
fn default_scheme() -> String {
    "euler".into()
}
fn default_tol() -> f64 {
    1e-3
}

impl Default for SimSection {
    fn default() -> Self {
        Self { dt: default_dt(), paths: default_paths(), seed: 1, scheme: default_scheme(), tol: default_tol() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Audit,
    Simulate,
    Measure,
    Lsi,
    Poincare,
    Hyper,
    Decay,
    Limit,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Audit => "audit",
            Kind::Simulate => "simulate",
            Kind::Measure => "measure",
            Kind::Lsi => "lsi",
            Kind::Poincare => "poincare",
            Kind::Hyper => "hyper",
            Kind::Decay => "decay",
            Kind::Limit => "limit",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub id: String,
    pub kind: Kind,
    pub t: Option<f64>,
    pub s: Option<f64>,
    pub x: Option<Vec<f64>>,
    pub times: Option<Vec<f64>>,
    pub p: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub gaps: Option<Vec<f64>>,
    pub anchors: Option<Vec<f64>>,
    pub battery: Option<usize>,
    pub battery_seed: Option<u64>,
    pub outer: Option<usize>,
    pub inner: Option<usize>,
    pub radius: Option<f64>,
    pub target_omega: Option<f64>,
}

impl Experiment {
    /// An experiment of `kind` with every parameter at its default.
    pub fn defaults(kind: Kind) -> Self {
        Self {
            id: kind.as_str().to_string(),
            kind,
            t: None,
            s: None,
            x: None,
            times: None,
            p: None,
            q: None,
            gaps: None,
            anchors: None,
            battery: None,
            battery_seed: None,
            outer: None,
            inner: None,
            radius: None,
            target_omega: None,
        }
    }
}

/// A parse or validation failure, located in the source when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub file: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{}:{l}:{c}: {}", self.file, self.message),
            _ => write!(f, "{}: {}", self.file, self.message),
        }
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.chars().count(), |nl| before[nl + 1..].chars().count()) + 1;
    (line, col)
}

fn valid_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

pub fn parse(src: &str, file: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = toml::from_str(src).map_err(|e| {
        let (line, column) = match e.span() {
            Some(span) => {
                let (l, c) = line_col(src, span.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        ScenarioError { file: file.to_string(), line, column, message: e.message().to_string() }
    })?;
    let fail = |message: String| ScenarioError { file: file.to_string(), line: None, column: None, message };
    if !valid_ident(&scenario.name) {
        return Err(fail(format!("scenario name `{}` must match [A-Za-z0-9_-]+", scenario.name)));
    }
    let mut seen = std::collections::BTreeSet::new();
    for e in &scenario.experiments {
        if !valid_ident(&e.id) {
            return Err(fail(format!("experiment id `{}` must match [A-Za-z0-9_-]+", e.id)));
        }
        if !seen.insert(e.id.as_str()) {
            return Err(fail(format!("duplicate experiment id `{}`", e.id)));
        }
    }
    if !matches!(scenario.sim.scheme.as_str(), "euler" | "semi_implicit") {
        return Err(fail(format!("unknown scheme `{}` (expected euler or semi_implicit)", scenario.sim.scheme)));
    }
    Ok(scenario)
}

pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    let file = path.display().to_string();
    let src = std::fs::read_to_string(path).map_err(|e| ScenarioError {
        file: file.clone(),
        line: None,
        column: None,
        message: e.to_string(),
    })?;
    parse(&src, &file)
}
