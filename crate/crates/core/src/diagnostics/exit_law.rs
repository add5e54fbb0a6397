use serde::{Deserialize, Serialize};

use super::stats::{
    chi_square_independence, ks_exponential_refit, ks_test, normal_two_sided, truncated_exp_cdf,
};
use super::{require, Provenance, StatTestReport, Verdict, LEVEL};
use crate::error::{Error, Result};
use crate::integrate::{exit_times, IntegratorConfig};
use crate::model::{CoefficientModel, CylindricalDomain, KineticState, Region};
use crate::qsd::StartLaw;
use crate::rng::{purpose_stream, Purpose};

/// Fewest exits the battery will analyze.
pub const MIN_EXITS: usize = 100;
/// `(s, t)` pairs of the memorylessness check.
pub const MEMORYLESS_PAIRS: [(f64, f64); 3] = [(1.0, 1.0), (1.0, 2.0), (2.0, 2.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitLawOptions {
    /// `max_time` is the observation horizon; later exits are censored.
    pub integrator: IntegratorConfig,
    pub n_samples: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Expect the exponential fit to be rejected (deterministic-exit control).
    #[serde(default)]
    pub negative_control: bool,
    #[serde(default = "default_reps")]
    pub bootstrap_reps: usize,
    /// Rate to test in the plug-in KS variant, e.g. a kill-rate estimate.
    #[serde(default)]
    pub lambda_plugin: Option<f64>,
}

fn default_level() -> f64 {
    LEVEL
}

fn default_reps() -> usize {
    500
}

impl ExitLawOptions {
    pub fn new(integrator: IntegratorConfig, n_samples: usize) -> Self {
        Self {
            integrator,
            n_samples,
            level: LEVEL,
            negative_control: false,
            bootstrap_reps: default_reps(),
            lambda_plugin: None,
        }
    }
}

/// Exit times (from the start) and exit categories of the paths that left
/// before `horizon`, plus the number censored at `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    pub times: Vec<f64>,
    pub categories: Vec<usize>,
    pub n_categories: usize,
    pub censored: usize,
    pub horizon: f64,
}

impl ExitSample {
    pub fn total(&self) -> usize {
        self.times.len() + self.censored
    }

    /// `P^(tau > t)` over all paths, censored ones counted as survivors.
    fn survivors(&self, t: f64) -> usize {
        self.censored + self.times.iter().filter(|&&x| x > t).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitLawReport {
    pub tests: Vec<StatTestReport>,
    pub exits: usize,
    pub censored: usize,
    pub survival_fraction: f64,
    pub lambda_refit: f64,
    pub lambda_plugin: Option<f64>,
    /// Exit category x time quartile counts.
    pub contingency: Vec<Vec<u64>>,
    pub negative_control: bool,
    pub verdict: Verdict,
    pub provenance: Option<Provenance>,
}

/// Category of an exit position: side of an interval, face of a box, one of
/// eight angular sectors of a ball (two sides in `d = 1`), or a single class.
pub fn exit_category(domain: &CylindricalDomain, q: &[f64]) -> (usize, usize) {
    match domain.region() {
        Region::Interval { lo, hi } => (usize::from(q[0] > 0.5 * (lo + hi)), 2),
        Region::Ball { center, .. } if center.len() == 1 => (usize::from(q[0] > center[0]), 2),
        Region::Ball { center, .. } => {
            let a = (q[1] - center[1]).atan2(q[0] - center[0]) + std::f64::consts::PI;
            (((a / (2.0 * std::f64::consts::PI) * 8.0) as usize).min(7), 8)
        }
        Region::Box { lo, hi } => {
            let mut best = (f64::INFINITY, 0);
            for i in 0..lo.len() {
                for (k, d) in [(0, (q[i] - lo[i]).abs()), (1, (hi[i] - q[i]).abs())] {
                    if d < best.0 {
                        best = (d, 2 * i + k);
                    }
                }
            }
            (best.1, 2 * lo.len())
        }
        Region::HalfSpace { .. } | Region::FullSpace { .. } => (0, 1),
    }
}

/// Runs the exit-law tests on a sample. With `negative_control` only the
/// re-fitted KS test is decisive and it passes when it rejects.
pub fn analyze_exits(sample: &ExitSample, options: &ExitLawOptions) -> Result<ExitLawReport> {
    let exits = sample.times.len();
    let n = sample.total();
    if exits < MIN_EXITS {
        return Err(Error::InsufficientExits {
            exits,
            survival_fraction: sample.censored as f64 / n.max(1) as f64,
        });
    }
    let nc = options.negative_control;
    let mut rng = purpose_stream(options.integrator.seed, options.integrator.stream_id, Purpose::Bootstrap);
    let (rate, d, p) = ks_exponential_refit(&sample.times, sample.censored, sample.horizon, options.bootstrap_reps, &mut rng);
    let mut tests = vec![StatTestReport::from_p_value("ks-exponential-refit", d, p, options.level, exits, nc)];

    if let Some(lp) = options.lambda_plugin {
        let (d, p) = ks_test(&sample.times, truncated_exp_cdf(lp, sample.horizon));
        let mut r = StatTestReport::from_p_value("ks-exponential-plugin", d, p, options.level, exits, nc);
        r.decisive = false;
        tests.push(r);
    }

    let mut sorted = sample.times.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let cuts: Vec<f64> = (1..4).map(|k| sorted[(k * exits / 4).min(exits - 1)]).collect();
    let mut table = vec![vec![0u64; 4]; sample.n_categories];
    for (&t, &c) in sample.times.iter().zip(&sample.categories) {
        let quart = cuts.iter().filter(|&&x| t > x).count();
        table[c][quart] += 1;
    }
    let (x2, dof, p) = chi_square_independence(&table);
    let mut chi = StatTestReport::from_p_value("chi-square-category-quartile", x2, p, options.level, exits, false);
    chi.decisive = !nc && dof > 0;
    tests.push(chi);

    for (s, t) in MEMORYLESS_PAIRS {
        if s + t > sample.horizon {
            continue;
        }
        let (ns, nst, nt) = (sample.survivors(s), sample.survivors(s + t), sample.survivors(t));
        let pt = nt as f64 / n as f64;
        let r = if ns > 0 { nst as f64 / ns as f64 } else { f64::NAN };
        let var = r * (1.0 - r) / ns.max(1) as f64 + pt * (1.0 - pt) / n as f64;
        let z = if var > 0.0 { (r - pt) / var.sqrt() } else { 0.0 };
        let mut m = StatTestReport::from_p_value(
            format!("memoryless-s{s}-t{t}"),
            z,
            normal_two_sided(z),
            options.level,
            ns,
            false,
        );
        m.decisive = !nc && ns >= 30;
        tests.push(m);
    }

    let m = tests.iter().filter(|t| t.decisive).count().max(1);
    for t in tests.iter_mut().filter(|t| t.decisive) {
        t.level = options.level / m as f64;
        let rejected = t.p_value.unwrap() < t.level;
        t.passed = rejected == (nc && t.test_name == "ks-exponential-refit");
    }
    let verdict = Verdict::from_bool(tests.iter().filter(|t| t.decisive).all(|t| t.passed));
    Ok(ExitLawReport {
        tests,
        exits,
        censored: sample.censored,
        survival_fraction: sample.censored as f64 / n as f64,
        lambda_refit: rate,
        lambda_plugin: options.lambda_plugin,
        contingency: table,
        negative_control: nc,
        verdict,
        provenance: None,
    })
}

/// Simulates `n_samples` paths from `start` and runs [`analyze_exits`].
pub fn exit_law_battery(
    start: &StartLaw,
    model: &CoefficientModel,
    domain: &CylindricalDomain,
    options: &ExitLawOptions,
) -> Result<ExitLawReport> {
    require(options.n_samples >= 1000, "n_samples", "at least 1000 samples are required")?;
    require(options.level > 0.0 && options.level < 1.0, "level", "must lie in (0, 1)")?;
    let cfg = &options.integrator;
    let starts = (0..options.n_samples)
        .map(|i| {
            let s = start.sample(domain, &mut purpose_stream(cfg.seed, cfg.stream_id + i as u64, Purpose::Initial))?;
            Ok(KineticState { t: 0.0, ..s })
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes = exit_times(&starts, model, domain, cfg)?;
    let mut sample = ExitSample {
        times: Vec::new(),
        categories: Vec::new(),
        n_categories: exit_category(domain, &starts[0].q).1,
        censored: 0,
        horizon: cfg.max_time,
    };
    for o in &outcomes {
        match o.exit() {
            Some(rec) => {
                sample.times.push(rec.exit_time);
                sample.categories.push(exit_category(domain, &rec.exit_state.q).0);
            }
            None => sample.censored += 1,
        }
    }
    let mut report = analyze_exits(&sample, options)?;
    report.provenance = Some(Provenance::new(cfg, options.n_samples));
    for t in &mut report.tests {
        t.provenance = report.provenance.clone();
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::stats::ks_test;
    use crate::model::catalog::ModelSpec;
    use crate::qsd::InitialDistribution;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::Exp1;

    fn synthetic(seed: u64, n: usize, rate: f64, horizon: f64) -> ExitSample {
        let mut rng = stream(seed, 0);
        let mut s = ExitSample {
            times: vec![],
            categories: vec![],
            n_categories: 2,
            censored: 0,
            horizon,
        };
        for _ in 0..n {
            let t: f64 = rng.sample::<f64, _>(Exp1) / rate;
            if t > horizon {
                s.censored += 1;
            } else {
                s.times.push(t);
                s.categories.push(rng.gen_range(0..2));
            }
        }
        s
    }

    fn opts(seed: u64) -> ExitLawOptions {
        let mut o = ExitLawOptions::new(IntegratorConfig::new(0.01, 10.0, seed), 1000);
        o.bootstrap_reps = 100;
        o
    }

    #[test]
    fn exact_exponential_passes() {
        let r = analyze_exits(&synthetic(3, 5000, 0.7, 10.0), &opts(3)).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!((r.lambda_refit - 0.7).abs() < 0.05);
    }

    #[test]
    fn p_values_are_uniform_under_the_null() {
        let mut ks_p = Vec::new();
        let mut chi_p = Vec::new();
        let mut mem_p = Vec::new();
        for rep in 0..200 {
            let mut o = opts(rep);
            o.lambda_plugin = Some(0.7);
            let r = analyze_exits(&synthetic(1000 + rep, 400, 0.7, 10.0), &o).unwrap();
            let get = |name: &str| r.tests.iter().find(|t| t.test_name == name).unwrap().p_value.unwrap();
            ks_p.push(get("ks-exponential-plugin"));
            chi_p.push(get("chi-square-category-quartile"));
            mem_p.push(get("memoryless-s1-t1"));
        }
        for (name, ps) in [("ks", ks_p), ("chi", chi_p), ("memoryless", mem_p)] {
            let (_, p) = ks_test(&ps, |x| x.clamp(0.0, 1.0));
            assert!(p > 0.001, "{name} p-values not uniform: {p}");
        }
    }

    #[test]
    fn deterministic_exit_is_rejected_in_negative_control() {
        let m = ModelSpec::FreeTransport { dim: 1, sigma: 0.0 }.build().unwrap();
        let dom = CylindricalDomain::interval(-1.0, 1.0).unwrap();
        let start = StartLaw::Law(InitialDistribution::point(vec![0.0], vec![1.0]));
        let mut o = ExitLawOptions::new(IntegratorConfig::new(0.01, 5.0, 0), 1000);
        o.bootstrap_reps = 100;
        o.negative_control = true;
        let r = exit_law_battery(&start, &m, &dom, &o).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.tests[0].p_value.unwrap() < 0.01);
        o.negative_control = false;
        assert_eq!(exit_law_battery(&start, &m, &dom, &o).unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn too_few_exits_is_an_error() {
        let mut s = synthetic(1, 1000, 0.001, 1.0);
        s.times.truncate(5);
        assert!(matches!(analyze_exits(&s, &opts(1)), Err(Error::InsufficientExits { .. })));
    }

    #[test]
    fn categories() {
        let ball = CylindricalDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(exit_category(&ball, &[1.0, 0.01]).0, 4);
        assert_eq!(exit_category(&ball, &[-1.0, -0.01]).0, 0);
        let cube = CylindricalDomain::cuboid(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(exit_category(&cube, &[0.5, 2.0]), (3, 4));
    }
}
