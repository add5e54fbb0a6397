//! Experiment configuration: a TOML document with a top-level `kind` and one
//! table of parameters named after it.

use std::fmt;
use std::path::{Path, PathBuf};

use kinetic_qsd::diagnostics::PhaseSet;
use kinetic_qsd::integrate::IntegratorConfig;
use kinetic_qsd::model::{CompactSet, CoefficientModel, CylindricalDomain, ModelConfig, Region};
use kinetic_qsd::qsd::{HistogramSpec, InitialDistribution};
use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    FlemingViot,
    ConditionedMc,
    LyapunovVerify,
    HarnackScan,
    ExitLaw,
    MollifyReport,
    F2Probe,
    MomentScan,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::Simulate,
        Kind::FlemingViot,
        Kind::ConditionedMc,
        Kind::LyapunovVerify,
        Kind::HarnackScan,
        Kind::ExitLaw,
        Kind::MollifyReport,
        Kind::F2Probe,
        Kind::MomentScan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::FlemingViot => "fleming-viot",
            Kind::ConditionedMc => "conditioned-mc",
            Kind::LyapunovVerify => "lyapunov-verify",
            Kind::HarnackScan => "harnack-scan",
            Kind::ExitLaw => "exit-law",
            Kind::MollifyReport => "mollify-report",
            Kind::F2Probe => "f2-probe",
            Kind::MomentScan => "moment-scan",
        }
    }

    /// Whether the experiment steps trajectories and so needs `[integrator]`.
    pub fn simulates(self) -> bool {
        !matches!(self, Kind::LyapunovVerify | Kind::MollifyReport)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub initial: InitialDistribution,
    #[serde(default = "one")]
    pub n_samples: usize,
    /// Output times of the survival curve (needs `n_samples >= 100`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival_points: Option<usize>,
}

/// Survival-slope estimate of the decay rate, run alongside a particle system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossCheck {
    pub n_samples: usize,
    pub horizon: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Time step of the survival run; defaults to the integrator's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Agreement is required within this many combined standard errors.
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
}

fn default_points() -> usize {
    201
}

fn default_sigmas() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlemingViotParams {
    pub initial: InitialDistribution,
    pub n_particles: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramSpec>,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<CrossCheck>,
}

fn default_pilot() -> usize {
    1000
}

fn default_expected() -> f64 {
    100.0
}

fn default_tv_budget() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionedMcParams {
    pub initial: InitialDistribution,
    pub t: f64,
    pub n_samples: usize,
    #[serde(default = "default_pilot")]
    pub pilot_samples: usize,
    #[serde(default = "default_expected")]
    pub min_expected_survivors: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramSpec>,
    /// `qsd.json` of an earlier fleming-viot run to compare against in TV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    #[serde(default = "default_tv_budget")]
    pub tv_budget: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    Bounded,
    Hamiltonian,
}

fn default_margin() -> f64 {
    1.1
}

fn default_verify_points() -> usize {
    201
}

fn default_random_points() -> usize {
    100_000
}

fn default_radius() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovParams {
    pub construction: Construction,
    pub lambda: f64,
    /// Drift-condition constants; the nonconservative catalog entry supplies its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_drift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_drift: Option<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Nodes per axis of the verification grids.
    #[serde(default = "default_verify_points")]
    pub verify_points: usize,
    /// Half-width of the Hamiltonian verification box `[-r, r]^{2d}`.
    #[serde(default = "default_radius")]
    pub verify_radius: f64,
    /// Random points for the `1 <= phi <= 2 beta - 1` check (bounded construction).
    #[serde(default = "default_random_points")]
    pub random_points: usize,
}

fn default_max_variation() -> f64 {
    2.0
}

fn default_grid_points() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DobrushinParams {
    pub t1: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShortTimeParams {
    pub times: Vec<f64>,
    pub delta: f64,
    /// Paths per start; defaults to the scan's `n_samples`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Bound on the largest exit probability at the smallest time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthParams {
    pub times: Vec<f64>,
    pub alpha2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackParams {
    /// Target set `A`.
    pub set: PhaseSet,
    pub compact: CompactSet,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    pub times: Vec<f64>,
    pub lag: f64,
    pub n_samples: usize,
    /// Largest admissible ratio between the biggest and smallest Harnack ratio.
    #[serde(default = "default_max_variation")]
    pub max_variation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dobrushin: Option<DobrushinParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub short_time: Option<ShortTimeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthParams>,
}

/// Starting law built from a Fleming-Viot estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FvSource {
    pub initial: InitialDistribution,
    pub n_particles: usize,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramSpec>,
}

fn default_level() -> f64 {
    0.01
}

fn default_reps() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitLawParams {
    /// Start from a fixed law ...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialDistribution>,
    /// ... or from a Fleming-Viot estimate of the QSD.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fleming_viot: Option<FvSource>,
    pub n_samples: usize,
    #[serde(default)]
    pub negative_control: bool,
    #[serde(default = "default_reps")]
    pub bootstrap_reps: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_order() -> usize {
    kinetic_qsd::model::mollify::DEFAULT_ORDER
}

fn default_mollify_grid() -> usize {
    9
}

fn default_slack() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifyParams {
    pub indices: Vec<u32>,
    pub compact: CompactSet,
    #[serde(default = "default_mollify_grid")]
    pub grid_points: usize,
    #[serde(default = "default_order")]
    pub order: usize,
    /// Panels per axis of the `L^1` quadrature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_panels: Option<usize>,
    #[serde(default = "default_slack")]
    pub relative_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Psi {
    Constant,
    /// `H^^{n_lambda}` from the Hamiltonian construction.
    Hamiltonian {
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha_drift: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta_drift: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct F2Params {
    pub psi: Psi,
    pub compact: CompactSet,
    pub starts: Vec<Phase>,
    pub t2: f64,
    pub alpha1: f64,
    pub n_samples: usize,
}

fn default_band() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentParams {
    pub indices: Vec<u32>,
    pub start: Phase,
    pub horizon: f64,
    pub n_samples: usize,
    #[serde(default = "default_band")]
    pub band: f64,
    #[serde(default = "default_order")]
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub model: ModelConfig,
    /// Defaults to all of phase space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateParams>,
    #[serde(default, rename = "fleming-viot", skip_serializing_if = "Option::is_none")]
    pub fleming_viot: Option<FlemingViotParams>,
    #[serde(default, rename = "conditioned-mc", skip_serializing_if = "Option::is_none")]
    pub conditioned_mc: Option<ConditionedMcParams>,
    #[serde(default, rename = "lyapunov-verify", skip_serializing_if = "Option::is_none")]
    pub lyapunov_verify: Option<LyapunovParams>,
    #[serde(default, rename = "harnack-scan", skip_serializing_if = "Option::is_none")]
    pub harnack_scan: Option<HarnackParams>,
    #[serde(default, rename = "exit-law", skip_serializing_if = "Option::is_none")]
    pub exit_law: Option<ExitLawParams>,
    #[serde(default, rename = "mollify-report", skip_serializing_if = "Option::is_none")]
    pub mollify_report: Option<MollifyParams>,
    #[serde(default, rename = "f2-probe", skip_serializing_if = "Option::is_none")]
    pub f2_probe: Option<F2Params>,
    #[serde(default, rename = "moment-scan", skip_serializing_if = "Option::is_none")]
    pub moment_scan: Option<MomentParams>,
}

/// One offending key and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub key: String,
    pub reason: String,
}

impl Problem {
    fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.reason)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("invalid configuration:\n{}", list(.0))]
    Invalid(Vec<Problem>),
}

fn list(problems: &[Problem]) -> String {
    problems.iter().map(|p| format!("  {p}")).collect::<Vec<_>>().join("\n")
}

fn join_path(path: &serde_path_to_error::Path) -> Vec<String> {
    path.iter()
        .filter_map(|s| match s {
            Segment::Map { key } => Some(key.clone()),
            Segment::Seq { index } => Some(index.to_string()),
            _ => None,
        })
        .collect()
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

/// Removes `key` from the deepest table along `path` that holds it.
fn remove_key(root: &mut toml::Value, path: &[String], key: &str) -> Option<Vec<String>> {
    let mut chain: Vec<&String> = Vec::new();
    let mut found: Option<usize> = None;
    {
        let mut cur = &*root;
        if cur.get(key).is_some() {
            found = Some(0);
        }
        for (depth, seg) in path.iter().enumerate() {
            let next = match cur {
                toml::Value::Table(t) => t.get(seg),
                toml::Value::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get(i)),
                _ => None,
            };
            let Some(next) = next else { break };
            chain.push(seg);
            cur = next;
            if cur.get(key).is_some() {
                found = Some(depth + 1);
            }
        }
    }
    let depth = found?;
    let mut cur = root;
    for seg in &path[..depth] {
        cur = match cur {
            toml::Value::Table(t) => t.get_mut(seg)?,
            toml::Value::Array(a) => a.get_mut(seg.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    cur.as_table_mut()?.remove(key)?;
    let mut full: Vec<String> = path[..depth].to_vec();
    full.push(key.to_string());
    Some(full)
}

/// Deserializes `value` and validates it, collecting every unknown key and
/// every semantic problem before giving up.
fn from_value(mut value: toml::Value) -> Result<ExperimentConfig, ConfigError> {
    let mut problems = Vec::new();
    for _ in 0..256 {
        match serde_path_to_error::deserialize::<_, ExperimentConfig>(value.clone()) {
            Ok(cfg) => {
                problems.extend(cfg.problems());
                return if problems.is_empty() { Ok(cfg) } else { Err(ConfigError::Invalid(problems)) };
            }
            Err(e) => {
                let path = join_path(e.path());
                let message = e.inner().to_string();
                let message = message.lines().next().unwrap_or("").trim().to_string();
                if let Some(key) = unknown_field(&message) {
                    if let Some(full) = remove_key(&mut value, &path, &key) {
                        problems.push(Problem::new(full.join("."), "unknown key"));
                        continue;
                    }
                }
                let key = if path.is_empty() { "<root>".to_string() } else { path.join(".") };
                problems.push(Problem::new(key, message));
                return Err(ConfigError::Invalid(problems));
            }
        }
    }
    Err(ConfigError::Invalid(problems))
}

/// Parses a TOML config file, or the `config` entry of a `manifest.json`.
pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let syntax = |message: String| ConfigError::Syntax {
        path: path.to_path_buf(),
        message,
    };
    let value: toml::Value = if path.extension().is_some_and(|e| e == "json") {
        let manifest: serde_json::Value = serde_json::from_str(&text).map_err(|e| syntax(e.to_string()))?;
        let cfg = manifest
            .get("config")
            .ok_or_else(|| syntax("manifest has no `config` entry".into()))?;
        toml::Value::try_from(cfg).map_err(|e| syntax(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| syntax(e.to_string()))?
    };
    from_value(value)
}

pub fn parse_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let value: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Syntax {
        path: PathBuf::from("<string>"),
        message: e.to_string(),
    })?;
    from_value(value)
}

fn positive(out: &mut Vec<Problem>, key: String, x: f64) {
    if !(x > 0.0 && x.is_finite()) {
        out.push(Problem::new(key, "must be positive and finite"));
    }
}

fn at_least(out: &mut Vec<Problem>, key: String, n: usize, min: usize) {
    if n < min {
        out.push(Problem::new(key, format!("must be at least {min}")));
    }
}

fn times(out: &mut Vec<Problem>, key: String, ts: &[f64]) {
    if ts.is_empty() {
        out.push(Problem::new(key, "at least one time is required"));
    } else if ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        out.push(Problem::new(key, "times must be positive and finite"));
    }
}

impl ExperimentConfig {
    fn table(&self) -> String {
        self.kind.name().to_string()
    }

    pub fn build_model(&self) -> kinetic_qsd::error::Result<CoefficientModel> {
        self.model.build()
    }

    pub fn build_domain(&self, dim: usize) -> kinetic_qsd::error::Result<CylindricalDomain> {
        match &self.domain {
            Some(r) => CylindricalDomain::new(r.clone()),
            None => Ok(CylindricalDomain::full_space(dim)),
        }
    }

    fn present(&self, kind: Kind) -> bool {
        match kind {
            Kind::Simulate => self.simulate.is_some(),
            Kind::FlemingViot => self.fleming_viot.is_some(),
            Kind::ConditionedMc => self.conditioned_mc.is_some(),
            Kind::LyapunovVerify => self.lyapunov_verify.is_some(),
            Kind::HarnackScan => self.harnack_scan.is_some(),
            Kind::ExitLaw => self.exit_law.is_some(),
            Kind::MollifyReport => self.mollify_report.is_some(),
            Kind::F2Probe => self.f2_probe.is_some(),
            Kind::MomentScan => self.moment_scan.is_some(),
        }
    }

    /// Every semantic problem, keyed by its TOML path.
    pub fn problems(&self) -> Vec<Problem> {
        let mut out = Vec::new();
        let t = self.table();
        for k in Kind::ALL {
            if k != self.kind && self.present(k) {
                out.push(Problem::new(k.name(), format!("table does not belong to kind `{}`", self.kind)));
            }
        }
        if !self.present(self.kind) {
            out.push(Problem::new(t.clone(), "missing parameter table for this kind"));
        }
        let model = match self.build_model() {
            Ok(m) => Some(m),
            Err(e) => {
                out.push(Problem::new("model", e.to_string()));
                None
            }
        };
        let dim = self.model.catalog.dim();
        let domain = match self.build_domain(dim.max(1)) {
            Ok(d) => Some(d),
            Err(e) => {
                out.push(Problem::new("domain", e.to_string()));
                None
            }
        };
        if let Some(d) = &domain {
            if d.dim() != dim {
                out.push(Problem::new("domain", format!("dimension {} differs from the model's {dim}", d.dim())));
            }
        }
        match &self.integrator {
            Some(i) => {
                for (k, reason) in i.problems() {
                    out.push(Problem::new(format!("integrator.{k}"), reason));
                }
            }
            None if self.kind.simulates() => out.push(Problem::new("integrator", "required for this kind")),
            None => {}
        }
        let key = |k: &str| format!("{t}.{k}");
        let initial = |out: &mut Vec<Problem>, k: String, init: &InitialDistribution| {
            if let Some(d) = &domain {
                if let Err(e) = init.validate(d) {
                    out.push(Problem::new(k, e.to_string()));
                }
            }
        };
        let hist = |out: &mut Vec<Problem>, k: String, h: &Option<HistogramSpec>| {
            if let Some(h) = h {
                if let Err(e) = h.validate() {
                    out.push(Problem::new(k, e.to_string()));
                } else if h.dim() != dim {
                    out.push(Problem::new(k, "dimension differs from the model"));
                }
            } else if domain.as_ref().is_some_and(|d| d.bounding_box().is_none()) {
                out.push(Problem::new(k, "required when the domain is unbounded"));
            }
        };
        let compact = |out: &mut Vec<Problem>, k: String, c: &CompactSet| {
            let checked = match c {
                CompactSet::Exhaustion { k } => CompactSet::exhaustion(*k),
                CompactSet::Boxes { q_lo, q_hi, p_lo, p_hi } => {
                    CompactSet::boxes(q_lo.clone(), q_hi.clone(), p_lo.clone(), p_hi.clone())
                }
            };
            match checked {
                Err(e) => out.push(Problem::new(k, e.to_string())),
                Ok(CompactSet::Boxes { q_lo, .. }) if q_lo.len() != dim => {
                    out.push(Problem::new(k, "dimension differs from the model"))
                }
                Ok(_) => {}
            }
        };
        let horizon = self.integrator.as_ref().map(|i| i.max_time);
        match self.kind {
            Kind::Simulate => {
                if let Some(s) = &self.simulate {
                    initial(&mut out, key("initial"), &s.initial);
                    at_least(&mut out, key("n_samples"), s.n_samples, 1);
                    if let Some(p) = s.survival_points {
                        at_least(&mut out, key("survival_points"), p, 2);
                        at_least(&mut out, key("n_samples"), s.n_samples, 100);
                    }
                }
            }
            Kind::FlemingViot => {
                if let Some(f) = &self.fleming_viot {
                    initial(&mut out, key("initial"), &f.initial);
                    at_least(&mut out, key("n_particles"), f.n_particles, 2);
                    at_least(&mut out, key("record_every"), f.record_every, 1);
                    hist(&mut out, key("histogram"), &f.histogram);
                    if let (Some(b), Some(h)) = (f.burn_in, horizon) {
                        if !(b >= 0.0 && b < h) {
                            out.push(Problem::new(key("burn_in"), "must lie in [0, integrator.max_time)"));
                        }
                    }
                    if let Some(c) = &f.cross_check {
                        at_least(&mut out, key("cross_check.n_samples"), c.n_samples, 100);
                        at_least(&mut out, key("cross_check.points"), c.points, 11);
                        positive(&mut out, key("cross_check.horizon"), c.horizon);
                        positive(&mut out, key("cross_check.sigmas"), c.sigmas);
                        if let Some(dt) = c.dt {
                            positive(&mut out, key("cross_check.dt"), dt);
                        }
                    }
                }
            }
            Kind::ConditionedMc => {
                if let Some(c) = &self.conditioned_mc {
                    initial(&mut out, key("initial"), &c.initial);
                    if !(c.t >= 0.0 && c.t.is_finite()) {
                        out.push(Problem::new(key("t"), "must be finite and non-negative"));
                    }
                    at_least(&mut out, key("n_samples"), c.n_samples, 1);
                    hist(&mut out, key("histogram"), &c.histogram);
                    positive(&mut out, key("tv_budget"), c.tv_budget);
                    if let Some(m) = c.max_samples {
                        if m < c.n_samples {
                            out.push(Problem::new(key("max_samples"), "must be at least n_samples"));
                        }
                    }
                }
            }
            Kind::LyapunovVerify => {
                if let Some(l) = &self.lyapunov_verify {
                    positive(&mut out, key("lambda"), l.lambda);
                    at_least(&mut out, key("verify_points"), l.verify_points, 2);
                    if l.margin < 1.0 {
                        out.push(Problem::new(key("margin"), "must be at least 1"));
                    }
                    match l.construction {
                        Construction::Bounded => {
                            if domain.as_ref().is_some_and(|d| d.sup_norm().is_none()) {
                                out.push(Problem::new("domain", "the bounded construction needs a bounded region"));
                            }
                        }
                        Construction::Hamiltonian => {
                            if model.as_ref().is_some_and(|m| m.langevin().is_none()) {
                                out.push(Problem::new("model", "the Hamiltonian construction needs a Langevin model"));
                            }
                            let given = l.alpha_drift.is_some() && l.beta_drift.is_some();
                            if !given && self.model.catalog.drift_constants().is_none() {
                                out.push(Problem::new(key("alpha_drift"), "required for this model"));
                            }
                            positive(&mut out, key("verify_radius"), l.verify_radius);
                        }
                    }
                }
            }
            Kind::HarnackScan => {
                if let Some(h) = &self.harnack_scan {
                    if let Err(e) = h.set.validate(dim) {
                        out.push(Problem::new(key("set"), e.to_string()));
                    }
                    compact(&mut out, key("compact"), &h.compact);
                    at_least(&mut out, key("grid_points"), h.grid_points, 1);
                    times(&mut out, key("times"), &h.times);
                    positive(&mut out, key("lag"), h.lag);
                    if !(h.max_variation >= 1.0) {
                        out.push(Problem::new(key("max_variation"), "must be at least 1"));
                    }
                    at_least(&mut out, key("n_samples"), h.n_samples, 1);
                    if h.times.len() > 32 {
                        out.push(Problem::new(key("times"), "at most 32 times"));
                    }
                    if let Some(d) = &h.dobrushin {
                        positive(&mut out, key("dobrushin.t1"), d.t1);
                        at_least(&mut out, key("dobrushin.bins"), d.bins, 1);
                    }
                    if let Some(s) = &h.short_time {
                        times(&mut out, key("short_time.times"), &s.times);
                        positive(&mut out, key("short_time.delta"), s.delta);
                        if let Some(n) = s.n_samples {
                            at_least(&mut out, key("short_time.n_samples"), n, 1);
                        }
                        if let Some(t) = s.threshold {
                            if !(t > 0.0 && t <= 1.0) {
                                out.push(Problem::new(key("short_time.threshold"), "must lie in (0, 1]"));
                            }
                        }
                    }
                    if let Some(g) = &h.growth {
                        times(&mut out, key("growth.times"), &g.times);
                    }
                }
            }
            Kind::ExitLaw => {
                if let Some(e) = &self.exit_law {
                    match (&e.initial, &e.fleming_viot) {
                        (Some(i), None) => initial(&mut out, key("initial"), i),
                        (None, Some(f)) => {
                            initial(&mut out, key("fleming_viot.initial"), &f.initial);
                            at_least(&mut out, key("fleming_viot.n_particles"), f.n_particles, 2);
                            positive(&mut out, key("fleming_viot.horizon"), f.horizon);
                            hist(&mut out, key("fleming_viot.histogram"), &f.histogram);
                        }
                        _ => out.push(Problem::new(key("initial"), "exactly one of `initial` and `fleming_viot` is required")),
                    }
                    at_least(&mut out, key("n_samples"), e.n_samples, 1000);
                    if !(e.level > 0.0 && e.level < 1.0) {
                        out.push(Problem::new(key("level"), "must lie in (0, 1)"));
                    }
                    at_least(&mut out, key("bootstrap_reps"), e.bootstrap_reps, 1);
                }
            }
            Kind::MollifyReport => {
                if let Some(m) = &self.mollify_report {
                    if m.indices.is_empty() || m.indices.windows(2).any(|w| w[0] >= w[1]) || m.indices[0] == 0 {
                        out.push(Problem::new(key("indices"), "must be a non-empty increasing list of positive integers"));
                    }
                    compact(&mut out, key("compact"), &m.compact);
                    at_least(&mut out, key("grid_points"), m.grid_points, 1);
                    at_least(&mut out, key("order"), m.order, 2);
                    if self.model.mollify.is_some() {
                        out.push(Problem::new("model.mollify", "the report mollifies the base model itself"));
                    }
                }
            }
            Kind::F2Probe => {
                if let Some(f) = &self.f2_probe {
                    compact(&mut out, key("compact"), &f.compact);
                    if f.starts.is_empty() {
                        out.push(Problem::new(key("starts"), "at least one start is required"));
                    }
                    for (i, s) in f.starts.iter().enumerate() {
                        if s.q.len() != dim || s.p.len() != dim {
                            out.push(Problem::new(format!("{t}.starts.{i}"), "dimension differs from the model"));
                        }
                    }
                    positive(&mut out, key("t2"), f.t2);
                    if !(f.alpha1 >= 0.0) {
                        out.push(Problem::new(key("alpha1"), "must be non-negative"));
                    }
                    at_least(&mut out, key("n_samples"), f.n_samples, 2);
                    if let Psi::Hamiltonian { lambda, alpha_drift, beta_drift } = &f.psi {
                        positive(&mut out, key("psi.lambda"), *lambda);
                        if model.as_ref().is_some_and(|m| m.langevin().is_none()) {
                            out.push(Problem::new("model", "a Hamiltonian psi needs a Langevin model"));
                        }
                        let given = alpha_drift.is_some() && beta_drift.is_some();
                        if !given && self.model.catalog.drift_constants().is_none() {
                            out.push(Problem::new(key("psi.alpha_drift"), "required for this model"));
                        }
                    }
                }
            }
            Kind::MomentScan => {
                if let Some(m) = &self.moment_scan {
                    if m.indices.is_empty() || m.indices.contains(&0) {
                        out.push(Problem::new(key("indices"), "must be a non-empty list of positive integers"));
                    }
                    if m.start.q.len() != dim || m.start.p.len() != dim {
                        out.push(Problem::new(key("start"), "dimension differs from the model"));
                    }
                    positive(&mut out, key("horizon"), m.horizon);
                    at_least(&mut out, key("n_samples"), m.n_samples, 2);
                    if !(m.band >= 0.0) {
                        out.push(Problem::new(key("band"), "must be non-negative"));
                    }
                    if self.model.mollify.is_some() {
                        out.push(Problem::new("model.mollify", "the scan mollifies the base model itself"));
                    }
                }
            }
        }
        out
    }

    /// Applies command-line overrides and fills the resolved seed.
    pub fn resolve(&mut self, seed: Option<u64>, output_dir: Option<PathBuf>) {
        let s = seed
            .or(self.seed)
            .or(self.integrator.as_ref().map(|i| i.seed))
            .unwrap_or(0);
        self.seed = Some(s);
        if let Some(i) = &mut self.integrator {
            i.seed = s;
        }
        if output_dir.is_some() {
            self.output_dir = output_dir;
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize to TOML")
    }
}
