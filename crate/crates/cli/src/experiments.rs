//! One runner per experiment kind. Each writes its artifacts and returns the
//! verdict plus the lines of `summary.txt`.

use std::path::Path;

use kinetic_qsd::diagnostics::{
    dobrushin_probe, exit_law_battery, f2_lyapunov_probe, harnack_ratio_scan, moment_bound_scan, occupation_growth,
    short_time_exit_scan, ExitLawOptions, PhaseSet, Verdict,
};
use kinetic_qsd::error::Error;
use kinetic_qsd::integrate::{exit_times, IntegratorConfig, Outcome, SurvivalCurve};
use kinetic_qsd::lyapunov::{
    bounded_lyapunov_build, delta_feasible, hamiltonian_lyapunov_build, shell_grid, verify_drift_inequality,
    BoundedOptions, DriftReport, HamiltonianLyapunov, HamiltonianOptions, SmoothFunction, TestFunction,
};
use kinetic_qsd::model::mollify::{BoxQuadrature, ConvergenceOptions};
use kinetic_qsd::model::state::{linspace, tensor};
use kinetic_qsd::model::{
    audit_coefficients, mollifier_convergence_report, mollify, CoefficientModel, CompactSet, CylindricalDomain,
    KineticState, MollifierKernel, PhaseGrid,
};
use kinetic_qsd::qsd::histogram::DEFAULT_BINS;
use kinetic_qsd::qsd::{
    conditioned_mc, estimate_decay_rate, fleming_viot_run, start_from_estimate, ConditionedOptions, FvOptions,
    Histogram, HistogramSpec, InitialDistribution, QsdEstimate, StartLaw,
};
use kinetic_qsd::rng::{purpose_stream, Purpose};
use rand::Rng;
use serde::Serialize;

use crate::artifacts::{indexed, num, Output};
use crate::config::*;

/// Stream offset of auxiliary runs (cross-checks, QSD sources) so that they
/// never share physics streams with the main run.
pub const AUX_STREAM: u64 = 1 << 40;

/// Momentum half-width of the default histogram window.
const DEFAULT_P_RANGE: f64 = 4.0;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{stage}: {source}")]
    Engine { stage: &'static str, source: Error },
    #[error("writing artifacts: {0}")]
    Io(#[from] std::io::Error),
    #[error("{stage}: {message}")]
    Input { stage: &'static str, message: String },
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, RunError>;
}

impl<T> Stage<T> for Result<T, Error> {
    fn stage(self, stage: &'static str) -> Result<T, RunError> {
        self.map_err(|source| RunError::Engine { stage, source })
    }
}

pub struct Finished {
    pub verdict: Verdict,
    pub summary: Vec<String>,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    model: CoefficientModel,
    domain: CylindricalDomain,
    out: &'a mut Output,
    verbose: bool,
}

impl Ctx<'_> {
    fn integrator(&self) -> IntegratorConfig {
        self.cfg.integrator.clone().expect("validated: integrator present")
    }

    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("[{}] {msg}", self.cfg.kind);
        }
    }

    fn histogram(&self, spec: &Option<HistogramSpec>) -> Result<HistogramSpec, RunError> {
        match spec {
            Some(s) => Ok(s.clone()),
            None => HistogramSpec::for_domain(&self.domain, f64::INFINITY, DEFAULT_P_RANGE, DEFAULT_BINS)
                .stage("histogram"),
        }
    }
}

pub fn run(cfg: &ExperimentConfig, out: &mut Output, verbose: bool) -> Result<Finished, RunError> {
    let model = cfg.build_model().stage("model")?;
    let domain = cfg.build_domain(model.dim()).stage("domain")?;
    let mut ctx = Ctx {
        cfg,
        model,
        domain,
        out,
        verbose,
    };
    match cfg.kind {
        Kind::Simulate => simulate(&mut ctx, cfg.simulate.as_ref().unwrap()),
        Kind::FlemingViot => fleming_viot(&mut ctx, cfg.fleming_viot.as_ref().unwrap()),
        Kind::ConditionedMc => conditioned(&mut ctx, cfg.conditioned_mc.as_ref().unwrap()),
        Kind::LyapunovVerify => lyapunov(&mut ctx, cfg.lyapunov_verify.as_ref().unwrap()),
        Kind::HarnackScan => harnack(&mut ctx, cfg.harnack_scan.as_ref().unwrap()),
        Kind::ExitLaw => exit_law(&mut ctx, cfg.exit_law.as_ref().unwrap()),
        Kind::MollifyReport => mollify_report(&mut ctx, cfg.mollify_report.as_ref().unwrap()),
        Kind::F2Probe => f2(&mut ctx, cfg.f2_probe.as_ref().unwrap()),
        Kind::MomentScan => moments(&mut ctx, cfg.moment_scan.as_ref().unwrap()),
    }
}

fn verdict_line(v: Verdict) -> String {
    format!("verdict: {}", serde_json::to_value(v).unwrap().as_str().unwrap_or("?"))
}

/// Starting points `0..n` drawn from `law`, sample `i` on the `Initial` stream `stream_id + i`.
fn sample_starts(
    law: &InitialDistribution,
    domain: &CylindricalDomain,
    cfg: &IntegratorConfig,
    n: usize,
) -> Result<Vec<KineticState>, RunError> {
    (0..n)
        .map(|i| {
            let s = law.sample(domain, &mut purpose_stream(cfg.seed, cfg.stream_id + i as u64, Purpose::Initial))?;
            Ok(KineticState { t: 0.0, ..s })
        })
        .collect::<Result<Vec<_>, Error>>()
        .stage("initial law")
}

fn survival_csv(out: &mut Output, name: &str, curve: &SurvivalCurve) -> std::io::Result<()> {
    let rows: Vec<Vec<String>> = (0..curve.times.len())
        .map(|k| {
            vec![
                num(curve.times[k]),
                num(curve.p_hat[k]),
                num(curve.ci_lo[k]),
                num(curve.ci_hi[k]),
            ]
        })
        .collect();
    out.csv(name, &["t", "p_hat", "ci_lo", "ci_hi"].map(String::from), &rows)
}

fn simulate(ctx: &mut Ctx, p: &SimulateParams) -> Result<Finished, RunError> {
    let cfg = ctx.integrator();
    let starts = sample_starts(&p.initial, &ctx.domain, &cfg, p.n_samples)?;
    ctx.log(&format!("simulating {} paths", starts.len()));
    let outcomes = exit_times(&starts, &ctx.model, &ctx.domain, &cfg).stage("simulation")?;
    let d = ctx.model.dim();
    let mut header = vec!["sample_id".to_string(), "exit_time".to_string()];
    header.extend(indexed("exit_q", d));
    header.extend(indexed("exit_p", d));
    header.extend(["classification".to_string(), "survived_flag".to_string()]);
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut exits = 0usize;
    let mut tangential = 0usize;
    for (i, o) in outcomes.iter().enumerate() {
        let mut r = vec![i.to_string()];
        match o {
            Outcome::Exited(rec) => {
                exits += 1;
                let class = serde_json::to_value(rec.classification).unwrap();
                let class = class.as_str().unwrap_or("").to_string();
                if class == "tangential" {
                    tangential += 1;
                }
                r.push(num(rec.exit_time));
                r.extend(rec.exit_state.q.iter().chain(&rec.exit_state.p).map(|x| num(*x)));
                r.push(class);
                r.push("false".into());
            }
            Outcome::Survived(s) => {
                r.push(String::new());
                r.extend(s.q.iter().chain(&s.p).map(|x| num(*x)));
                r.push(String::new());
                r.push("true".into());
            }
        }
        rows.push(r);
    }
    ctx.out.csv("exits.csv", &header, &rows)?;
    let mut summary = vec![
        format!("paths: {}", outcomes.len()),
        format!("exits: {exits} ({tangential} tangential)"),
        format!("survivors at t = {}: {}", cfg.max_time, outcomes.len() - exits),
    ];
    if let Some(points) = p.survival_points {
        let taus: Vec<f64> = outcomes.iter().map(Outcome::exit_time).collect();
        let curve = SurvivalCurve::from_exit_times(&linspace(0.0, cfg.max_time, points), &taus);
        survival_csv(ctx.out, "survival.csv", &curve)?;
        match estimate_decay_rate(&curve) {
            Ok(fit) => {
                summary.push(format!("survival-slope lambda0: {} +- {}", fit.lambda0_hat, fit.stderr));
                ctx.out.json("decay.json", &fit)?;
            }
            Err(e) => summary.push(format!("survival-slope lambda0: not estimated ({e})")),
        }
    }
    summary.push(verdict_line(Verdict::Pass));
    Ok(Finished {
        verdict: Verdict::Pass,
        summary,
    })
}

fn histogram_csv(out: &mut Output, name: &str, h: &Histogram) -> std::io::Result<()> {
    let d = h.spec.dim();
    let mut header = vec!["bin_id".to_string()];
    header.extend(indexed("q", d));
    header.extend(indexed("p", d));
    header.push("weight".into());
    let rows: Vec<Vec<String>> = h
        .weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mut r = vec![i.to_string()];
            r.extend(h.spec.bin_center(i).into_iter().map(num));
            r.push(num(*w));
            r
        })
        .collect();
    out.csv(name, &header, &rows)
}

#[derive(Serialize)]
struct CrossCheckReport {
    kill_rate: f64,
    kill_rate_stderr: f64,
    survival_slope: f64,
    survival_slope_stderr: f64,
    fit_window: (f64, f64),
    fallback: bool,
    difference_in_sigmas: f64,
    sigmas: f64,
    agree: bool,
    n_samples: usize,
    dt: f64,
    stream_offset: u64,
}

fn fleming_viot(ctx: &mut Ctx, p: &FlemingViotParams) -> Result<Finished, RunError> {
    let cfg = ctx.integrator();
    let mut opts = FvOptions::new(cfg.clone(), ctx.histogram(&p.histogram)?);
    opts.burn_in = p.burn_in;
    opts.record_every = p.record_every;
    opts.snapshot_times = p.snapshot_times.clone();
    ctx.log(&format!("{} particles to t = {}", p.n_particles, cfg.max_time));
    let start: StartLaw = p.initial.clone().into();
    let res = fleming_viot_run(&start, &ctx.model, &ctx.domain, p.n_particles, &opts).stage("fleming-viot")?;
    let est = &res.estimate;
    ctx.out.json("qsd.json", est)?;
    histogram_csv(ctx.out, "qsd_histogram.csv", &est.histogram)?;
    if !res.snapshots.is_empty() {
        let mut rows = Vec::new();
        for s in &res.snapshots {
            for (b, w) in s.histogram.weights.iter().enumerate() {
                rows.push(vec![s.epoch.to_string(), num(s.time), b.to_string(), num(*w)]);
            }
        }
        ctx.out.csv("snapshots.csv", &["epoch", "time", "bin_id", "weight"].map(String::from), &rows)?;
    }
    let mut summary = vec![
        format!("particles: {}, horizon: {}, burn-in: {}, dt: {}", p.n_particles, est.horizon, est.burn_in, est.dt),
        format!("kills: {} ({} after burn-in)", est.kill_count, est.kills_after_burn_in),
        format!("kill-rate lambda0: {} +- {}", est.lambda0_hat, est.lambda0_stderr),
        format!("histogram mass outside the window: {}", est.histogram.overflow),
    ];
    let mut verdict = Verdict::Pass;
    if let Some(c) = &p.cross_check {
        let mut scfg = cfg.clone().with_stream(cfg.stream_id + AUX_STREAM);
        scfg.max_time = c.horizon;
        if let Some(dt) = c.dt {
            scfg.dt = dt;
        }
        ctx.log(&format!("survival cross-check with {} paths", c.n_samples));
        let starts = sample_starts(&p.initial, &ctx.domain, &scfg, c.n_samples)?;
        let outcomes = exit_times(&starts, &ctx.model, &ctx.domain, &scfg).stage("cross-check")?;
        let taus: Vec<f64> = outcomes.iter().map(Outcome::exit_time).collect();
        let curve = SurvivalCurve::from_exit_times(&linspace(0.0, c.horizon, c.points), &taus);
        survival_csv(ctx.out, "survival.csv", &curve)?;
        let fit = estimate_decay_rate(&curve).stage("cross-check")?;
        let se = (est.lambda0_stderr.powi(2) + fit.stderr.powi(2)).sqrt();
        let z = (est.lambda0_hat - fit.lambda0_hat).abs() / se;
        let agree = z < c.sigmas;
        ctx.out.json(
            "cross_check.json",
            &CrossCheckReport {
                kill_rate: est.lambda0_hat,
                kill_rate_stderr: est.lambda0_stderr,
                survival_slope: fit.lambda0_hat,
                survival_slope_stderr: fit.stderr,
                fit_window: (fit.burn_in, fit.window_end),
                fallback: fit.fallback,
                difference_in_sigmas: z,
                sigmas: c.sigmas,
                agree,
                n_samples: c.n_samples,
                dt: scfg.dt,
                stream_offset: AUX_STREAM,
            },
        )?;
        summary.push(format!("survival-slope lambda0: {} +- {}", fit.lambda0_hat, fit.stderr));
        summary.push(format!(
            "cross-check: |difference| = {z:.3} combined SE ({} required below {})",
            if agree { "agree" } else { "disagree" },
            c.sigmas
        ));
        verdict = Verdict::from_bool(agree);
    }
    summary.push(verdict_line(verdict));
    Ok(Finished { verdict, summary })
}

#[derive(Serialize)]
struct Comparison {
    reference: String,
    total_variation: f64,
    budget: f64,
    passed: bool,
}

fn conditioned(ctx: &mut Ctx, p: &ConditionedMcParams) -> Result<Finished, RunError> {
    let mut cfg = ctx.integrator();
    cfg.max_time = p.t;
    let reference: Option<QsdEstimate> = match &p.reference {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| RunError::Input {
                stage: "reference",
                message: format!("{}: {e}", path.display()),
            })?;
            Some(serde_json::from_str(&text).map_err(|e| RunError::Input {
                stage: "reference",
                message: format!("{}: {e}", path.display()),
            })?)
        }
        None => None,
    };
    let spec = match (&p.histogram, &reference) {
        (None, Some(r)) => r.histogram.spec.clone(),
        _ => ctx.histogram(&p.histogram)?,
    };
    let mut opts = ConditionedOptions::new(cfg.clone(), spec, p.n_samples);
    opts.pilot_samples = p.pilot_samples;
    opts.min_expected_survivors = p.min_expected_survivors;
    opts.max_samples = p.max_samples;
    ctx.log(&format!("{} paths to t = {}", p.n_samples, p.t));
    let start: StartLaw = p.initial.clone().into();
    let law = conditioned_mc(&start, &ctx.model, &ctx.domain, &opts).stage("conditioned-mc")?;
    ctx.out.json("conditioned.json", &law)?;
    histogram_csv(ctx.out, "conditioned_histogram.csv", &law.histogram)?;
    let mut summary = vec![
        format!("t: {}, paths: {} (requested {})", law.time, law.n_samples, law.n_requested),
        format!("survivors: {} (fraction {})", law.survivors, law.survival_fraction),
    ];
    let mut verdict = Verdict::Pass;
    if let (Some(r), Some(path)) = (&reference, &p.reference) {
        let tv = law.histogram.total_variation(&r.histogram).stage("comparison")?;
        let passed = tv <= p.tv_budget;
        ctx.out.json(
            "comparison.json",
            &Comparison {
                reference: path.display().to_string(),
                total_variation: tv,
                budget: p.tv_budget,
                passed,
            },
        )?;
        summary.push(format!("TV distance to the reference: {tv} (budget {})", p.tv_budget));
        verdict = Verdict::from_bool(passed);
    }
    summary.push(verdict_line(verdict));
    Ok(Finished { verdict, summary })
}

#[derive(Serialize)]
struct BandCheck {
    points: usize,
    lower: f64,
    upper: f64,
    min: f64,
    max: f64,
    passed: bool,
}

#[derive(Serialize)]
struct BoundedReport {
    construction: kinetic_qsd::lyapunov::BoundedDomainLyapunov,
    band: BandCheck,
    shell: DriftReport,
    full: DriftReport,
    passed: bool,
}

#[derive(Serialize)]
struct HamiltonianReport {
    construction: HamiltonianLyapunov,
    delta_feasible: f64,
    drift_condition_passed: bool,
    outside_b_n: DriftReport,
    full: DriftReport,
    passed: bool,
}

fn lyapunov(ctx: &mut Ctx, p: &LyapunovParams) -> Result<Finished, RunError> {
    let d = ctx.model.dim();
    let mut summary = Vec::new();
    let passed = match p.construction {
        Construction::Bounded => {
            let opts = BoundedOptions {
                margin: p.margin,
                ..BoundedOptions::default()
            };
            ctx.log("building the bounded-domain function");
            let phi = bounded_lyapunov_build(&ctx.domain, &ctx.model, p.lambda, &opts).stage("construction")?;
            let (lo, hi) = ctx.domain.bounding_box().expect("validated: bounded region");
            let seed = ctx.cfg.seed.unwrap_or(0);
            let mut rng = purpose_stream(seed, 0, Purpose::Audit);
            let r_p = 3.0 * phi.p0;
            let (lower, upper) = (1.0, 2.0 * phi.beta - 1.0);
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            let mut drawn = 0;
            while drawn < p.random_points {
                let q: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
                if !ctx.domain.contains(&q) {
                    continue;
                }
                let mom: Vec<f64> = (0..d).map(|_| rng.gen_range(-r_p..r_p)).collect();
                let v = phi.value(&q, &mom);
                min = min.min(v);
                max = max.max(v);
                drawn += 1;
            }
            let band = BandCheck {
                points: drawn,
                lower,
                upper,
                min,
                max,
                passed: min >= lower && max <= upper,
            };
            let q_grid = ctx.domain.interior_grid(p.verify_points).stage("verification grid")?;
            let radii = linspace(phi.p0, 3.0 * phi.p0, p.verify_points);
            let shell_pts = shell_grid(&q_grid, &radii);
            let never = |_: &[f64], _: &[f64]| false;
            let shell = verify_drift_inequality(
                &phi,
                &ctx.model,
                p.lambda,
                &never,
                0.0,
                &shell_pts,
                &ctx.domain,
                &format!("{} q-nodes x {} radii in [p0, 3 p0] x +-axes", q_grid.len(), radii.len()),
            )
            .stage("shell check")?;
            let p_axis = linspace(-3.0 * phi.p0, 3.0 * phi.p0, p.verify_points);
            let p_nodes = tensor(&vec![p_axis; d]);
            let full_pts: Vec<(Vec<f64>, Vec<f64>)> = q_grid
                .iter()
                .flat_map(|q| p_nodes.iter().map(move |m| (q.clone(), m.clone())))
                .collect();
            let in_d = |_: &[f64], m: &[f64]| phi.in_d_lambda(m);
            let full = verify_drift_inequality(
                &phi,
                &ctx.model,
                p.lambda,
                &in_d,
                phi.c_lambda,
                &full_pts,
                &ctx.domain,
                &format!("{} q-nodes x [-3 p0, 3 p0]^d", q_grid.len()),
            )
            .stage("full check")?;
            summary.push(format!("beta: {}, p_a: {}, p0: {}, c_lambda: {}", phi.beta, phi.p_a, phi.p0, phi.c_lambda));
            summary.push(format!(
                "band [{lower}, {upper}] at {drawn} random points: min {min}, max {max} ({})",
                if band.passed { "ok" } else { "violated" }
            ));
            summary.push(format!(
                "shell check on {} points: {}",
                shell.grid_size,
                if shell.passed { "ok" } else { "violated" }
            ));
            summary.push(format!(
                "full inequality on {} points: {}",
                full.grid_size,
                if full.passed { "ok" } else { "violated" }
            ));
            let passed = band.passed && shell.passed && full.passed;
            ctx.out.json(
                "lyapunov.json",
                &BoundedReport {
                    construction: phi,
                    band,
                    shell,
                    full,
                    passed,
                },
            )?;
            passed
        }
        Construction::Hamiltonian => {
            let (a0, b0) = ctx.cfg.model.catalog.drift_constants().unwrap_or((f64::NAN, f64::NAN));
            let alpha = p.alpha_drift.unwrap_or(a0);
            let beta = p.beta_drift.unwrap_or(b0);
            let opts = HamiltonianOptions {
                drift_grid_radius: p.verify_radius,
                drift_grid_points: p.verify_points,
                margin: p.margin,
                ..HamiltonianOptions::default()
            };
            ctx.log("building the Hamiltonian function");
            let phi = hamiltonian_lyapunov_build(&ctx.model, alpha, beta, p.lambda, &opts).stage("construction")?;
            let gamma = phi.gamma;
            let delta = delta_feasible(gamma, alpha, beta).stage("construction")?;
            let axis = linspace(-p.verify_radius, p.verify_radius, p.verify_points);
            let nodes = tensor(&vec![axis; 2 * d]);
            let all: Vec<(Vec<f64>, Vec<f64>)> = nodes.into_iter().map(|x| (x[..d].to_vec(), x[d..].to_vec())).collect();
            let outside: Vec<(Vec<f64>, Vec<f64>)> = all.iter().filter(|(q, m)| !phi.in_b_n(q, m)).cloned().collect();
            let never = |_: &[f64], _: &[f64]| false;
            let spec = format!("[-{r}, {r}]^{} with {} nodes per axis", 2 * d, p.verify_points, r = p.verify_radius);
            let out_check = verify_drift_inequality(
                &phi,
                &ctx.model,
                p.lambda,
                &never,
                0.0,
                &outside,
                &ctx.domain,
                &format!("{spec}, outside B_n"),
            )
            .stage("outside-B_n check")?;
            let in_b = |q: &[f64], m: &[f64]| phi.in_b_n(q, m);
            let full = verify_drift_inequality(&phi, &ctx.model, p.lambda, &in_b, phi.c_n, &all, &ctx.domain, &spec)
                .stage("full check")?;
            summary.push(format!(
                "alpha: {alpha}, beta: {beta}, delta: {delta}, n: {}, kappa: {}",
                phi.n,
                phi.kappa()
            ));
            summary.push(format!("r_n: {}, c_n: {}", phi.r_n, phi.c_n));
            summary.push(format!(
                "drift condition on the grid: {}",
                if phi.drift_check.passed { "ok" } else { "violated" }
            ));
            summary.push(format!(
                "L phi <= -lambda phi outside B_n on {} points: {}",
                out_check.grid_size,
                if out_check.passed { "ok" } else { "violated" }
            ));
            summary.push(format!(
                "full inequality on {} points: {}",
                full.grid_size,
                if full.passed { "ok" } else { "violated" }
            ));
            let drift_ok = phi.drift_check.passed;
            let passed = drift_ok && out_check.passed && full.passed;
            let mut construction = phi;
            // The per-point drift slacks are bulky and already summarized.
            construction.drift_check.slacks.clear();
            ctx.out.json(
                "lyapunov.json",
                &HamiltonianReport {
                    construction,
                    delta_feasible: delta,
                    drift_condition_passed: drift_ok,
                    outside_b_n: out_check,
                    full,
                    passed,
                },
            )?;
            passed
        }
    };
    let verdict = Verdict::from_bool(passed);
    summary.push(format!("passed: {passed}"));
    summary.push(verdict_line(verdict));
    Ok(Finished { verdict, summary })
}

fn compact_starts(ctx: &Ctx, k: &CompactSet, n: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>, RunError> {
    let pts: Vec<(Vec<f64>, Vec<f64>)> = k
        .grid(&ctx.domain, n)
        .into_iter()
        .filter(|(q, _)| ctx.domain.contains(q))
        .collect();
    if pts.is_empty() {
        return Err(RunError::Input {
            stage: "compact grid",
            message: "no grid point lies inside the domain".into(),
        });
    }
    Ok(pts)
}

fn harnack(ctx: &mut Ctx, p: &HarnackParams) -> Result<Finished, RunError> {
    let cfg = ctx.integrator();
    let starts = compact_starts(ctx, &p.compact, p.grid_points)?;
    ctx.log(&format!("{} starts x {} paths", starts.len(), p.n_samples));
    let report = harnack_ratio_scan(&p.set, &starts, &ctx.model, &ctx.domain, &p.times, p.lag, p.n_samples, &cfg)
        .stage("harnack scan")?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                num(r.t),
                num(r.numerator),
                num(r.denominator),
                num(r.denominator_lower),
                r.ratio.map(num).unwrap_or_default(),
                r.ratio_stderr.map(num).unwrap_or_default(),
            ]
        })
        .collect();
    ctx.out.csv(
        "harnack.csv",
        &["t", "numerator", "denominator", "denominator_lower", "ratio", "ratio_stderr"].map(String::from),
        &rows,
    )?;
    let mut summary = vec![format!("starts: {}, paths per start: {}, lag: {}", starts.len(), p.n_samples, p.lag)];
    for r in &report.rows {
        summary.push(format!(
            "t = {}: ratio {} (denominator {} >= {} at 99%)",
            r.t,
            r.ratio.map(num).unwrap_or_else(|| "undetermined".into()),
            r.denominator,
            r.denominator_lower
        ));
    }
    let mut verdict = report.verdict;
    if let Some(v) = report.variation {
        let ok = v < p.max_variation;
        summary.push(format!("variation across t: {v} (required below {})", p.max_variation));
        verdict = verdict.and(Verdict::from_bool(ok));
    }
    ctx.out.json("harnack.json", &report)?;

    if let Some(dp) = &p.dobrushin {
        let (ql, qh, pl, ph) = p.compact.bounding_box(&ctx.domain);
        let reference = HistogramSpec::new(ql, qh, pl, ph, dp.bins).stage("dobrushin")?;
        let dcfg = cfg.clone().with_stream(cfg.stream_id + AUX_STREAM);
        let rep = dobrushin_probe(&starts, &reference, &ctx.model, &ctx.domain, dp.t1, p.n_samples, &dcfg)
            .stage("dobrushin")?;
        summary.push(format!("minorization at t1 = {}: c1 = {} ({} empty bins)", dp.t1, rep.c1, rep.zero_bins));
        verdict = verdict.and(rep.verdict);
        ctx.out.json("dobrushin.json", &rep)?;
    }
    if let Some(sp) = &p.short_time {
        let scfg = cfg.clone().with_stream(cfg.stream_id + 2 * AUX_STREAM);
        let n = sp.n_samples.unwrap_or(p.n_samples);
        let rep = short_time_exit_scan(&starts, &ctx.model, &ctx.domain, &sp.times, sp.delta, n, &scfg)
            .stage("short-time scan")?;
        for r in &rep.rows {
            summary.push(format!(
                "t = {}: max P(tau <= t) = {} (99% upper {}), max P(displacement >= {}) = {}",
                r.t, r.max_exit_probability, r.upper, sp.delta, r.max_displacement_probability
            ));
        }
        summary.push(format!("short-time maxima non-increasing as t decreases: {}", rep.monotone));
        let mut ok = rep.monotone;
        if let (Some(th), Some(last)) = (sp.threshold, rep.rows.last()) {
            let below = last.max_exit_probability < th;
            summary.push(format!("max exit probability at t = {}: {} (required below {th})", last.t, last.max_exit_probability));
            ok &= below;
        }
        verdict = verdict.and(Verdict::from_bool(ok));
        ctx.out.json("short_time.json", &rep)?;
    }
    if let Some(gp) = &p.growth {
        let gcfg = cfg.clone().with_stream(cfg.stream_id + 3 * AUX_STREAM);
        let k = match &p.compact {
            CompactSet::Boxes { q_lo, q_hi, p_lo, p_hi } => PhaseSet::Box {
                q_lo: q_lo.clone(),
                q_hi: q_hi.clone(),
                p_lo: p_lo.clone(),
                p_hi: p_hi.clone(),
            },
            CompactSet::Exhaustion { .. } => {
                let (q_lo, q_hi, p_lo, p_hi) = p.compact.bounding_box(&ctx.domain);
                PhaseSet::Box { q_lo, q_hi, p_lo, p_hi }
            }
        };
        let rows = occupation_growth(&k, &starts, &ctx.model, &ctx.domain, &gp.times, gp.alpha2, p.n_samples, &gcfg)
            .stage("growth")?;
        let csv_rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![num(r.t), r.start.to_string(), num(r.u), num(r.scaled)])
            .collect();
        ctx.out.csv("growth.csv", &["t", "start", "u", "scaled"].map(String::from), &csv_rows)?;
        summary.push(format!("growth diagnostic: {} rows in growth.csv", rows.len()));
    }
    summary.push(verdict_line(verdict));
    Ok(Finished { verdict, summary })
}

fn exit_law(ctx: &mut Ctx, p: &ExitLawParams) -> Result<Finished, RunError> {
    let cfg = ctx.integrator();
    let mut opts = ExitLawOptions::new(cfg.clone(), p.n_samples);
    opts.level = p.level;
    opts.negative_control = p.negative_control;
    opts.bootstrap_reps = p.bootstrap_reps;
    let mut summary = Vec::new();
    let start: StartLaw = match (&p.initial, &p.fleming_viot) {
        (Some(law), _) => law.clone().into(),
        (None, Some(src)) => {
            let mut fcfg = cfg.clone().with_stream(cfg.stream_id + AUX_STREAM);
            fcfg.max_time = src.horizon;
            let mut fopts = FvOptions::new(fcfg, ctx.histogram(&src.histogram)?);
            fopts.burn_in = src.burn_in;
            ctx.log(&format!("estimating the QSD with {} particles", src.n_particles));
            let res = fleming_viot_run(&src.initial.clone().into(), &ctx.model, &ctx.domain, src.n_particles, &fopts)
                .stage("fleming-viot source")?;
            ctx.out.json("qsd.json", &res.estimate)?;
            summary.push(format!(
                "QSD source: {} particles, kill-rate lambda0 {} +- {}",
                src.n_particles, res.estimate.lambda0_hat, res.estimate.lambda0_stderr
            ));
            opts.lambda_plugin = Some(res.estimate.lambda0_hat);
            StartLaw::Estimate(start_from_estimate(&res.estimate).stage("fleming-viot source")?)
        }
        (None, None) => unreachable!("validated: one start law"),
    };
    ctx.log(&format!("{} exit paths", p.n_samples));
    let report = exit_law_battery(&start, &ctx.model, &ctx.domain, &opts).stage("exit-law battery")?;
    summary.push(format!(
        "paths: {}, exits: {}, censored: {}, re-fitted rate: {}",
        p.n_samples, report.exits, report.censored, report.lambda_refit
    ));
    if p.negative_control {
        summary.push("negative control: passes when the exponential fit is rejected".into());
    }
    for t in &report.tests {
        summary.push(format!(
            "{}: statistic {}, p = {}, level {}, {}{}",
            t.test_name,
            t.statistic,
            t.p_value.map(num).unwrap_or_else(|| "-".into()),
            t.level,
            if t.passed { "pass" } else { "fail" },
            if t.decisive { "" } else { " (not decisive)" }
        ));
    }
    ctx.out.json("exit_law.json", &report)?;
    summary.push(verdict_line(report.verdict));
    Ok(Finished {
        verdict: report.verdict,
        summary,
    })
}

fn mollify_report(ctx: &mut Ctx, p: &MollifyParams) -> Result<Finished, RunError> {
    let grid = PhaseGrid::new(compact_starts(ctx, &p.compact, p.grid_points)?);
    let mut opts = ConvergenceOptions {
        order: p.order,
        relative_slack: p.relative_slack,
        ..ConvergenceOptions::default()
    };
    if let Some(panels) = p.l1_panels {
        opts.l1_quadrature = BoxQuadrature {
            panels: vec![panels],
            ..BoxQuadrature::default()
        };
    }
    ctx.log(&format!("mollifying over {} indices", p.indices.len()));
    let report = mollifier_convergence_report(&ctx.model, &p.indices, &grid, &p.compact, &ctx.domain, &opts)
        .stage("convergence report")?;
    let rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e| vec![e.n.to_string(), num(e.sigma_sup_discrepancy), num(e.drift_l1_discrepancy)])
        .collect();
    ctx.out.csv(
        "mollify.csv",
        &["n", "sigma_sup_discrepancy", "drift_l1_discrepancy"].map(String::from),
        &rows,
    )?;
    let mut audits = Vec::new();
    for &n in &p.indices {
        let k = MollifierKernel::new(n, p.order).stage("audit")?;
        let m = mollify(&ctx.model, &k).stage("audit")?;
        audits.push((n, audit_coefficients(&m, &grid).stage("audit")?));
    }
    ctx.out.json("mollify.json", &report)?;
    ctx.out.json("audits.json", &audits)?;
    let mut summary = Vec::new();
    for e in &report.entries {
        summary.push(format!(
            "n = {}: sup |sigma_n - sigma| = {}, L1 |F_n - F| = {}",
            e.n, e.sigma_sup_discrepancy, e.drift_l1_discrepancy
        ));
    }
    summary.push(format!(
        "sigma discrepancy non-increasing: {}, drift discrepancy non-increasing: {}",
        report.sigma_non_increasing, report.drift_non_increasing
    ));
    for (n, a) in &audits {
        let failed: Vec<&str> = a.checks.iter().filter(|c| !c.passed).map(|c| c.check.as_str()).collect();
        summary.push(format!(
            "audit n = {n}: {}",
            if failed.is_empty() { "all checks pass".to_string() } else { format!("failing {}", failed.join(", ")) }
        ));
    }
    let passed = report.sigma_non_increasing && report.drift_non_increasing && report.checks.iter().all(|c| c.passed);
    let verdict = Verdict::from_bool(passed);
    summary.push(verdict_line(verdict));
    Ok(Finished { verdict, summary })
}

fn f2(ctx: &mut Ctx, p: &F2Params) -> Result<Finished, RunError> {
    let cfg = ctx.integrator();
    let d = ctx.model.dim();
    let starts: Vec<(Vec<f64>, Vec<f64>)> = p.starts.iter().map(|s| (s.q.clone(), s.p.clone())).collect();
    let smooth;
    let ham;
    let psi: &dyn TestFunction = match &p.psi {
        Psi::Constant => {
            smooth = SmoothFunction::Constant { c: 1.0 }.bind(d);
            &smooth
        }
        Psi::Hamiltonian {
            lambda,
            alpha_drift,
            beta_drift,
        } => {
            let (a0, b0) = ctx.cfg.model.catalog.drift_constants().unwrap_or((f64::NAN, f64::NAN));
            let a = alpha_drift.unwrap_or(a0);
            let b = beta_drift.unwrap_or(b0);
            ham = hamiltonian_lyapunov_build(&ctx.model, a, b, *lambda, &HamiltonianOptions::default())
                .stage("psi construction")?;
            &ham
        }
    };
    ctx.log(&format!("{} starts x {} paths", starts.len(), p.n_samples));
    let report = f2_lyapunov_probe(psi, &p.compact, &ctx.model, &ctx.domain, p.t2, p.alpha1, &starts, p.n_samples, &cfg)
        .stage("f2 probe")?;
    let mut summary = vec![format!("psi: {}, t2: {}, alpha1: {}", report.function, p.t2, p.alpha1)];
    for r in &report.rows {
        summary.push(format!(
            "start q = {:?}, p = {:?}: estimate {} +- {}, bound {} ({})",
            r.q,
            r.p,
            r.estimate,
            r.stderr,
            r.bound,
            if r.passed { "ok" } else { "violated" }
        ));
    }
    ctx.out.json("f2.json", &report)?;
    summary.push(verdict_line(report.verdict));
    Ok(Finished {
        verdict: report.verdict,
        summary,
    })
}

fn moments(ctx: &mut Ctx, p: &MomentParams) -> Result<Finished, RunError> {
    let cfg = ctx.integrator();
    let family = p
        .indices
        .iter()
        .map(|&n| {
            let k = MollifierKernel::new(n, p.order)?;
            Ok((n as usize, mollify(&ctx.model, &k)?))
        })
        .collect::<Result<Vec<_>, Error>>()
        .stage("mollified family")?;
    let start = KineticState::new(p.start.q.clone(), p.start.p.clone()).stage("start")?;
    ctx.log(&format!("{} members x {} paths", family.len(), p.n_samples));
    let report = moment_bound_scan(&family, &start, p.horizon, p.n_samples, p.band, &cfg).stage("moment scan")?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| vec![r.index.to_string(), num(r.sup_square), num(r.stderr), num(r.end_square), num(r.end_stderr)])
        .collect();
    ctx.out.csv(
        "moments.csv",
        &["n", "sup_square", "stderr", "end_square", "end_stderr"].map(String::from),
        &rows,
    )?;
    let mut summary = vec![format!("horizon: {}, paths: {}", p.horizon, p.n_samples)];
    for r in &report.rows {
        summary.push(format!("n = {}: E[sup (|q| + |p|)^2] = {} +- {}", r.index, r.sup_square, r.stderr));
    }
    summary.push(format!("median: {}, band: +-{}", report.median, report.band));
    ctx.out.json("moments.json", &report)?;
    summary.push(verdict_line(report.verdict));
    Ok(Finished {
        verdict: report.verdict,
        summary,
    })
}

/// Resolves relative file references against the directory of the config file.
pub fn anchor_paths(cfg: &mut ExperimentConfig, base: &Path) {
    if let Some(c) = &mut cfg.conditioned_mc {
        if let Some(r) = &mut c.reference {
            if r.is_relative() {
                *r = base.join(&*r);
            }
        }
    }
}
