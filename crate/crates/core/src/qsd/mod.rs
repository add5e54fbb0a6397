//! Quasi-stationary distributions: Fleming–Viot particle systems,
//! conditioned Monte Carlo, and decay-rate estimation from survival curves.

pub mod conditioned;
pub mod decay;
pub mod fleming_viot;
pub mod histogram;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CylindricalDomain, KineticState};

pub use conditioned::{conditioned_mc, ConditionedLaw, ConditionedOptions};
pub use decay::{estimate_decay_rate, DecayEstimate};
pub use fleming_viot::{fleming_viot_run, FvOptions, FvResult, QsdEstimate, Snapshot};
pub use histogram::{Histogram, HistogramAccumulator, HistogramSampler, HistogramSpec};

/// Law of the starting point of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialDistribution {
    Point { q: Vec<f64>, p: Vec<f64> },
    /// Uniform on a box in phase space, restricted to `O x R^d`.
    Uniform {
        q_lo: Vec<f64>,
        q_hi: Vec<f64>,
        p_lo: Vec<f64>,
        p_hi: Vec<f64>,
    },
    /// Position fixed, momentum `N(0, sd^2 I)`.
    GaussianMomentum { q: Vec<f64>, sd: f64 },
}

impl InitialDistribution {
    pub fn point(q: Vec<f64>, p: Vec<f64>) -> Self {
        Self::Point { q, p }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Point { q, .. } | Self::GaussianMomentum { q, .. } => q.len(),
            Self::Uniform { q_lo, .. } => q_lo.len(),
        }
    }

    pub fn validate(&self, domain: &CylindricalDomain) -> Result<()> {
        let d = self.dim();
        if d != domain.dim() {
            return Err(Error::param("initial", "dimension differs from the domain"));
        }
        match self {
            Self::Point { q, p } => {
                if p.len() != d {
                    return Err(Error::param("initial.p", "dimension differs from q"));
                }
                if !domain.contains(q) {
                    return Err(Error::OutsideDomain { point: q.clone() });
                }
            }
            Self::GaussianMomentum { q, sd } => {
                if !(*sd >= 0.0 && sd.is_finite()) {
                    return Err(Error::param("initial.sd", "must be finite and non-negative"));
                }
                if !domain.contains(q) {
                    return Err(Error::OutsideDomain { point: q.clone() });
                }
            }
            Self::Uniform { q_lo, q_hi, p_lo, p_hi } => {
                if [q_hi.len(), p_lo.len(), p_hi.len()].iter().any(|&n| n != d) {
                    return Err(Error::param("initial", "box bounds must share one dimension"));
                }
                let ok = q_lo.iter().zip(q_hi).chain(p_lo.iter().zip(p_hi)).all(|(a, b)| a <= b);
                if !ok {
                    return Err(Error::param("initial", "box bounds must satisfy lo <= hi"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, domain: &CylindricalDomain, rng: &mut R) -> Result<KineticState> {
        match self {
            Self::Point { q, p } => KineticState::new(q.clone(), p.clone()),
            Self::GaussianMomentum { q, sd } => {
                let p = (0..q.len())
                    .map(|_| sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect();
                KineticState::new(q.clone(), p)
            }
            Self::Uniform { q_lo, q_hi, p_lo, p_hi } => {
                let draw = |rng: &mut R, a: f64, b: f64| if a < b { rng.gen_range(a..b) } else { a };
                for _ in 0..10_000 {
                    let q: Vec<f64> = q_lo.iter().zip(q_hi).map(|(a, b)| draw(rng, *a, *b)).collect();
                    if domain.contains(&q) {
                        let p = p_lo.iter().zip(p_hi).map(|(a, b)| draw(rng, *a, *b)).collect();
                        return KineticState::new(q, p);
                    }
                }
                Err(Error::Construction("initial box does not meet the domain".into()))
            }
        }
    }
}

/// Where particles start: a parametric law or a histogram estimate.
#[derive(Debug, Clone)]
pub enum StartLaw {
    Law(InitialDistribution),
    Estimate(HistogramSampler),
}

impl StartLaw {
    pub fn sample<R: Rng + ?Sized>(&self, domain: &CylindricalDomain, rng: &mut R) -> Result<KineticState> {
        match self {
            StartLaw::Law(l) => l.sample(domain, rng),
            StartLaw::Estimate(s) => s.sample(domain, rng),
        }
    }
}

impl From<InitialDistribution> for StartLaw {
    fn from(l: InitialDistribution) -> Self {
        StartLaw::Law(l)
    }
}

/// Sampler drawing starting points from a QSD estimate.
pub fn start_from_estimate(est: &QsdEstimate) -> Result<HistogramSampler> {
    HistogramSampler::new(&est.histogram)
}
