use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::histogram::{Histogram, HistogramAccumulator, HistogramSpec};
use super::StartLaw;
use crate::error::{Error, Result};
use crate::integrate::{check_start, IntegratorConfig, StepOutcome, Stepper, Walker};
use crate::model::{CoefficientModel, CylindricalDomain, KineticState};
use crate::rng::{purpose_stream, stream, Purpose};

pub const MIN_SURVIVORS: u64 = 30;

/// Options for sampling `Law(X_t | tau > t)`; `integrator.max_time` is `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionedOptions {
    pub integrator: IntegratorConfig,
    pub histogram: HistogramSpec,
    pub n_samples: usize,
    #[serde(default = "default_pilot")]
    pub pilot_samples: usize,
    /// The run is enlarged (up to `max_samples`) so that the pilot survival
    /// fraction predicts at least this many survivors.
    #[serde(default = "default_expected")]
    pub min_expected_survivors: f64,
    #[serde(default)]
    pub max_samples: Option<usize>,
    #[serde(default)]
    pub keep_states: bool,
}

fn default_pilot() -> usize {
    1000
}

fn default_expected() -> f64 {
    100.0
}

impl ConditionedOptions {
    pub fn new(integrator: IntegratorConfig, histogram: HistogramSpec, n_samples: usize) -> Self {
        Self {
            integrator,
            histogram,
            n_samples,
            pilot_samples: default_pilot(),
            min_expected_survivors: default_expected(),
            max_samples: None,
            keep_states: false,
        }
    }

    /// Integrator settings used for stepping; `t = 0` is allowed and takes no steps.
    fn stepping_config(&self) -> IntegratorConfig {
        let mut c = self.integrator.clone();
        if c.max_time == 0.0 {
            c.max_time = c.dt;
        }
        c
    }

    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = self.stepping_config().problems();
        if self.n_samples == 0 {
            out.push(("n_samples", "must be positive".into()));
        }
        if self.max_samples.is_some_and(|m| m < self.n_samples) {
            out.push(("max_samples", "must be at least n_samples".into()));
        }
        if let Err(e) = self.histogram.validate() {
            out.push(("histogram", e.to_string()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionedLaw {
    pub histogram: Histogram,
    pub time: f64,
    pub n_requested: usize,
    pub n_samples: usize,
    pub survivors: u64,
    pub survival_fraction: f64,
    /// Survival fraction of the pilot run, if one was made.
    pub pilot_fraction: Option<f64>,
    #[serde(skip)]
    pub states: Vec<KineticState>,
}

/// Runs one sample to time `t`; `None` if it left the domain first.
fn run_to<R: Rng>(
    stepper: &mut Stepper<'_>,
    s: &KineticState,
    rng: R,
    domain: &CylindricalDomain,
    cfg: &IntegratorConfig,
    n_steps: u64,
) -> Result<Option<KineticState>> {
    let mut w = Walker::new(s, rng);
    while w.steps < n_steps {
        if let StepOutcome::Exited(_) = w.advance(stepper, domain, cfg.crossing)? {
            return Ok(None);
        }
    }
    Ok(Some(w.state(cfg.dt)))
}

/// Monte Carlo estimate of the law of `X_t` given survival to `t`.
///
/// Sample `i` draws its start from the `Initial` stream and its path from the
/// physics stream, both at id `stream_id + i`. At `t = 0` no steps are taken
/// and the initial law is returned.
pub fn conditioned_mc(
    start: &StartLaw,
    model: &CoefficientModel,
    domain: &CylindricalDomain,
    options: &ConditionedOptions,
) -> Result<ConditionedLaw> {
    if let Some((field, reason)) = options.problems().into_iter().next() {
        return Err(Error::InvalidParameter { name: field.into(), reason });
    }
    let cfg = &options.integrator;
    let t = cfg.max_time;
    let n_steps = if t == 0.0 { 0 } else { cfg.steps_to(t) };
    let proto = Stepper::new(model, &options.stepping_config())?;

    let mut n = options.n_samples;
    let mut pilot_fraction = None;
    if n_steps > 0 && options.pilot_samples > 0 {
        let m = options.pilot_samples;
        let alive: Vec<bool> = (0..m)
            .into_par_iter()
            .map_init(
                || proto.clone(),
                |st, i| {
                    let mut rng = purpose_stream(cfg.seed, cfg.stream_id + i as u64, Purpose::Pilot);
                    let s = start.sample(domain, &mut rng)?;
                    check_start(&s, model, domain)?;
                    Ok(run_to(st, &s, rng, domain, cfg, n_steps)?.is_some())
                },
            )
            .collect::<Result<_>>()?;
        let f = alive.iter().filter(|&&a| a).count() as f64 / m as f64;
        pilot_fraction = Some(f);
        let cap = options.max_samples.unwrap_or(n);
        if (n as f64) * f < options.min_expected_survivors {
            let wanted = if f > 0.0 {
                (1.2 * options.min_expected_survivors / f).ceil() as usize
            } else {
                cap
            };
            n = wanted.clamp(n, cap);
        }
    }

    let outcomes: Vec<Option<KineticState>> = (0..n)
        .into_par_iter()
        .map_init(
            || proto.clone(),
            |st, i| {
                let id = cfg.stream_id + i as u64;
                let s = start.sample(domain, &mut purpose_stream(cfg.seed, id, Purpose::Initial))?;
                check_start(&s, model, domain)?;
                run_to(st, &s, stream(cfg.seed, id), domain, cfg, n_steps)
            },
        )
        .collect::<Result<_>>()?;

    let mut acc = HistogramAccumulator::new(options.histogram.clone());
    let mut states = Vec::new();
    let mut survivors = 0u64;
    for s in outcomes.into_iter().flatten() {
        acc.add(&s.q, &s.p, 1.0);
        survivors += 1;
        if options.keep_states {
            states.push(s);
        }
    }
    let fraction = survivors as f64 / n as f64;
    if survivors < MIN_SURVIVORS {
        return Err(Error::InsufficientSurvivors {
            survivors: survivors as usize,
            fraction,
        });
    }
    Ok(ConditionedLaw {
        histogram: acc.finish()?,
        time: t,
        n_requested: options.n_samples,
        n_samples: n,
        survivors,
        survival_fraction: fraction,
        pilot_fraction,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog::ModelSpec;
    use crate::qsd::InitialDistribution;

    fn spec() -> HistogramSpec {
        HistogramSpec::new(vec![-1.0], vec![1.0], vec![-2.0], vec![2.0], 8).unwrap()
    }

    fn harmonic() -> CoefficientModel {
        ModelSpec::HarmonicLangevin {
            dim: 1,
            omega: 1.0,
            gamma: 1.0,
            kt: 0.5,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn time_zero_returns_the_initial_law() {
        let dom = CylindricalDomain::interval(-1.0, 1.0).unwrap();
        let start = StartLaw::Law(InitialDistribution::point(vec![0.3], vec![-0.7]));
        let opts = ConditionedOptions::new(IntegratorConfig::new(0.01, 0.0, 1), spec(), 100);
        let law = conditioned_mc(&start, &harmonic(), &dom, &opts).unwrap();
        let bin = spec().bin_index(&[0.3], &[-0.7]).unwrap();
        assert_eq!(law.histogram.weights[bin], 1.0);
        assert_eq!(law.survivors, 100);
    }

    #[test]
    fn tiny_domain_reports_insufficient_survivors() {
        let dom = CylindricalDomain::interval(-0.01, 0.01).unwrap();
        let start = StartLaw::Law(InitialDistribution::point(vec![0.0], vec![1.0]));
        let mut opts = ConditionedOptions::new(IntegratorConfig::new(0.01, 1.0, 1), spec(), 200);
        opts.pilot_samples = 50;
        let err = conditioned_mc(&start, &harmonic(), &dom, &opts).unwrap_err();
        assert!(matches!(err, Error::InsufficientSurvivors { survivors: 0, .. }), "{err:?}");
    }

    #[test]
    fn pilot_enlarges_the_run() {
        let dom = CylindricalDomain::interval(-1.0, 1.0).unwrap();
        let start = StartLaw::Law(InitialDistribution::point(vec![0.0], vec![0.0]));
        let mut opts = ConditionedOptions::new(IntegratorConfig::new(0.01, 1.0, 1), spec(), 50);
        opts.max_samples = Some(400);
        let law = conditioned_mc(&start, &harmonic(), &dom, &opts).unwrap();
        assert!(law.n_samples > 50 && law.n_samples <= 400);
        let again = conditioned_mc(&start, &harmonic(), &dom, &opts).unwrap();
        assert_eq!(law, again);
    }
}
