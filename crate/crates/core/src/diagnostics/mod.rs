//! Statistical and numerical probes of the qualitative claims: memoryless exit
//! law, Harnack ratios, minorization and Lyapunov surrogates, moment bounds
//! and short-time exit estimates.
//!
//! Each probe is a falsification attempt at a fixed resolution. Reports carry
//! the integrator settings and sample sizes needed to re-run them exactly.

pub mod dobrushin;
pub mod exit_law;
pub mod f2;
pub mod harnack;
pub mod moments;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::IntegratorConfig;

pub use dobrushin::{dobrushin_probe, DobrushinReport};
pub use exit_law::{analyze_exits, exit_law_battery, ExitLawOptions, ExitLawReport, ExitSample};
pub use f2::{f2_lyapunov_probe, F2Report, F2Row};
pub use harnack::{
    harnack_ratio_scan, occupation_growth, short_time_exit_scan, GrowthRow, HarnackReport, HarnackRow, PhaseSet,
    ShortTimeReport, ShortTimeRow,
};
pub use moments::{moment_bound_scan, MomentReport, MomentRow};

/// Default significance level of every battery.
pub const LEVEL: f64 = 0.01;
/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

/// Overall outcome of a probe, with the process exit status it maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 2,
            Verdict::Inconclusive => 3,
        }
    }

    pub fn from_bool(passed: bool) -> Self {
        if passed {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Worst of two verdicts (fail over inconclusive over pass).
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }
}

/// Settings sufficient to reproduce a Monte Carlo report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub stream_id: u64,
    pub dt: f64,
    pub scheme: String,
    pub n_samples: usize,
}

impl Provenance {
    pub fn new(cfg: &IntegratorConfig, n_samples: usize) -> Self {
        Self {
            seed: cfg.seed,
            stream_id: cfg.stream_id,
            dt: cfg.dt,
            scheme: format!("{:?}", cfg.scheme),
            n_samples,
        }
    }
}

/// One statistical test outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestReport {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    /// Level the p-value is compared against (after Bonferroni correction).
    pub level: f64,
    pub passed: bool,
    /// Margin to the decision threshold, for tests without a p-value.
    pub slack: Option<f64>,
    pub sample_size: usize,
    /// False for tests that are reported but do not enter the verdict.
    pub decisive: bool,
    pub provenance: Option<Provenance>,
}

impl StatTestReport {
    /// A p-value test; `expect_reject` flips the pass criterion (negative controls).
    pub fn from_p_value(
        name: impl Into<String>,
        statistic: f64,
        p: f64,
        level: f64,
        sample_size: usize,
        expect_reject: bool,
    ) -> Self {
        let rejected = p < level;
        Self {
            test_name: name.into(),
            statistic,
            p_value: Some(p.clamp(0.0, 1.0)),
            level,
            passed: rejected == expect_reject,
            slack: None,
            sample_size,
            decisive: true,
            provenance: None,
        }
    }
}

pub(crate) fn require(cond: bool, name: &str, reason: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::param(name, reason))
    }
}

/// Binomial standard error of a proportion.
pub(crate) fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n.max(1) as f64).sqrt()
}
