use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exit::{check_start, run_walker, Outcome, Walker};
use super::{IntegratorConfig, Stepper};
use crate::error::{Error, Result};
use crate::model::state::linspace;
use crate::model::{CoefficientModel, CylindricalDomain, KineticState};
use crate::numeric::wilson_interval;
use crate::rng::stream;

/// Two-sided 95% normal quantile used for the survival bands.
const BAND_Z: f64 = 1.959_963_984_540_054;

/// Monte Carlo survival curve `t -> P(tau > t)` on a fixed time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub n_samples: u64,
    pub survivors: Vec<u64>,
    pub p_hat: Vec<f64>,
    /// Wilson 95% band.
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
}

impl SurvivalCurve {
    /// Builds the curve from exit times (`+inf` for survivors of the horizon).
    pub fn from_exit_times(times: &[f64], exit_times: &[f64]) -> Self {
        let n = exit_times.len() as u64;
        let mut sorted: Vec<f64> = exit_times.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let survivors: Vec<u64> = times
            .iter()
            .map(|&t| (sorted.len() - sorted.partition_point(|&x| x <= t)) as u64)
            .collect();
        Self::from_counts(times.to_vec(), n, survivors)
    }

    pub fn from_counts(times: Vec<f64>, n_samples: u64, survivors: Vec<u64>) -> Self {
        let n = n_samples.max(1) as f64;
        let p_hat = survivors.iter().map(|&s| s as f64 / n).collect();
        let (ci_lo, ci_hi) = survivors
            .iter()
            .map(|&s| wilson_interval(s, n_samples, BAND_Z))
            .unzip();
        Self {
            times,
            n_samples,
            survivors,
            p_hat,
            ci_lo,
            ci_hi,
        }
    }

    /// Exact curve values (no sampling noise), for synthetic inputs.
    pub fn exact(times: Vec<f64>, p: impl Fn(f64) -> f64, n_samples: u64) -> Self {
        let p_hat: Vec<f64> = times.iter().map(|&t| p(t)).collect();
        Self {
            survivors: p_hat.iter().map(|x| (x * n_samples as f64).round() as u64).collect(),
            ci_lo: p_hat.clone(),
            ci_hi: p_hat.clone(),
            times,
            n_samples,
            p_hat,
        }
    }
}

/// Simulates one trajectory per start, sample `i` on stream `stream_id + i`.
pub fn exit_times(
    starts: &[KineticState],
    model: &CoefficientModel,
    domain: &CylindricalDomain,
    config: &IntegratorConfig,
) -> Result<Vec<Outcome>> {
    for s in starts {
        check_start(s, model, domain)?;
    }
    let proto = Stepper::new(model, config)?;
    starts
        .par_iter()
        .enumerate()
        .map_init(
            || proto.clone(),
            |stepper, (i, s)| {
                let rng = stream(config.seed, config.stream_id + i as u64);
                run_walker(stepper, Walker::new(s, rng), domain, config).map(|(_, o)| o)
            },
        )
        .collect()
}

/// Estimates `P_x(tau > t)` on `n_points` equispaced times in `[0, max_time]`.
pub fn survival_probability(
    start: &KineticState,
    model: &CoefficientModel,
    domain: &CylindricalDomain,
    config: &IntegratorConfig,
    n_samples: usize,
    n_points: usize,
) -> Result<SurvivalCurve> {
    if n_samples < 100 {
        return Err(Error::param("n_samples", "at least 100 samples are required"));
    }
    if n_points < 2 {
        return Err(Error::param("n_points", "at least two output times are required"));
    }
    let starts = vec![start.clone(); n_samples];
    let outcomes = exit_times(&starts, model, domain, config)?;
    let taus: Vec<f64> = outcomes.iter().map(|o| o.exit_time() - start.t).collect();
    Ok(SurvivalCurve::from_exit_times(
        &linspace(0.0, config.max_time, n_points),
        &taus,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog::ModelSpec;

    #[test]
    fn full_space_survival_is_one() {
        let m = ModelSpec::FreeTransport { dim: 1, sigma: 1.0 }.build().unwrap();
        let s = KineticState::new(vec![0.0], vec![0.0]).unwrap();
        let cfg = IntegratorConfig::new(0.01, 1.0, 3);
        let c = survival_probability(&s, &m, &CylindricalDomain::full_space(1), &cfg, 200, 11).unwrap();
        assert!(c.p_hat.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn deterministic_transport_survives_until_distance() {
        let m = ModelSpec::FreeTransport { dim: 1, sigma: 0.0 }.build().unwrap();
        let s = KineticState::new(vec![0.0], vec![0.5]).unwrap();
        let cfg = IntegratorConfig::new(0.01, 3.0, 3);
        let c = survival_probability(&s, &m, &CylindricalDomain::interval(-1.0, 1.0).unwrap(), &cfg, 100, 31)
            .unwrap();
        for (t, p) in c.times.iter().zip(&c.p_hat) {
            if 0.5 * t < 1.0 - 1e-9 {
                assert_eq!(*p, 1.0);
            } else if 0.5 * t > 1.0 + 1e-9 {
                assert_eq!(*p, 0.0);
            }
        }
    }

    #[test]
    fn curve_is_non_increasing() {
        let m = ModelSpec::HarmonicLangevin {
            dim: 1,
            omega: 1.0,
            gamma: 1.0,
            kt: 0.5,
        }
        .build()
        .unwrap();
        let s = KineticState::new(vec![0.0], vec![0.0]).unwrap();
        let cfg = IntegratorConfig::new(0.01, 5.0, 9);
        let c = survival_probability(&s, &m, &CylindricalDomain::interval(-1.0, 1.0).unwrap(), &cfg, 400, 51)
            .unwrap();
        assert!(c.p_hat.windows(2).all(|w| w[1] <= w[0]));
        assert!(c.p_hat.last().unwrap() < &1.0);
    }

    #[test]
    fn too_few_samples_rejected() {
        let m = ModelSpec::FreeTransport { dim: 1, sigma: 0.0 }.build().unwrap();
        let s = KineticState::new(vec![0.0], vec![0.0]).unwrap();
        let cfg = IntegratorConfig::new(0.01, 1.0, 0);
        assert!(survival_probability(&s, &m, &CylindricalDomain::full_space(1), &cfg, 10, 5).is_err());
    }
}
