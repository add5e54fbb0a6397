//! Time stepping of the kinetic SDE and first-exit detection.
//!
//! `dq = p dt`, `dp = F(q, p) dt + sigma(q, p) dB`. Two schemes are provided:
//! Euler-Maruyama for general coefficients, and a BAOAB splitting with an
//! exact Ornstein-Uhlenbeck momentum step for Langevin models.

mod exit;
mod survival;

pub use exit::{
    simulate_until_exit, Classification, ExitRecord, Outcome, PathSummary, StepOutcome, Walker,
    TANGENTIAL_THRESHOLD,
};
pub(crate) use exit::check_start;
pub use survival::{exit_times, survival_probability, SurvivalCurve};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientModel, KineticState, LangevinModel};

/// Components beyond this magnitude count as a blow-up.
pub const BLOW_UP_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Splitting when the model has the Langevin form, Euler-Maruyama otherwise.
    #[default]
    Auto,
    EulerMaruyama,
    LangevinSplitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Crossing {
    #[default]
    SubstepInterpolation,
    EndpointOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub crossing: Crossing,
    pub max_time: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

impl IntegratorConfig {
    pub fn new(dt: f64, max_time: f64, seed: u64) -> Self {
        Self {
            dt,
            scheme: Scheme::Auto,
            crossing: Crossing::SubstepInterpolation,
            max_time,
            seed,
            stream_id: 0,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_crossing(mut self, crossing: Crossing) -> Self {
        self.crossing = crossing;
        self
    }

    pub fn with_stream(mut self, stream_id: u64) -> Self {
        self.stream_id = stream_id;
        self
    }

    /// Lists every offending field.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push(("dt", "time step must be positive and finite".to_string()));
        }
        if !(self.max_time > 0.0 && self.max_time.is_finite()) {
            out.push(("max_time", "horizon must be positive and finite".to_string()));
        } else if self.dt > self.max_time {
            out.push(("dt", "time step exceeds max_time".to_string()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().into_iter().next() {
            Some((name, reason)) => Err(Error::param(name, reason)),
            None => Ok(()),
        }
    }

    /// Number of whole steps needed to reach `t` (rounded to the nearest step).
    pub fn steps_to(&self, t: f64) -> u64 {
        (t / self.dt).round().max(0.0) as u64
    }
}

/// Scheme resolved against a concrete model.
#[derive(Debug, Clone)]
pub(crate) enum Resolved {
    Euler,
    Splitting { decay: f64, ou_sd: f64 },
}

/// Per-trajectory stepping kernel with preallocated buffers.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    model: &'a CoefficientModel,
    langevin: Option<&'a LangevinModel>,
    scheme: Resolved,
    dt: f64,
    sqrt_dt: f64,
    force: Vec<f64>,
    sigma: Vec<f64>,
    xi: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a CoefficientModel, config: &IntegratorConfig) -> Result<Self> {
        config.validate()?;
        let d = model.dim();
        let langevin = model.langevin();
        let scheme = match (config.scheme, langevin) {
            (Scheme::EulerMaruyama, _) | (Scheme::Auto, None) => Resolved::Euler,
            (Scheme::LangevinSplitting | Scheme::Auto, Some(l)) => {
                let decay = (-l.gamma * config.dt).exp();
                Resolved::Splitting {
                    decay,
                    ou_sd: (l.kt * (1.0 - decay * decay)).sqrt(),
                }
            }
            (Scheme::LangevinSplitting, None) => {
                return Err(Error::param(
                    "scheme",
                    "langevin-splitting requires a model of Langevin form",
                ))
            }
        };
        Ok(Self {
            model,
            langevin,
            scheme,
            dt: config.dt,
            sqrt_dt: config.dt.sqrt(),
            force: vec![0.0; d],
            sigma: vec![0.0; d * d],
            xi: vec![0.0; d],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    /// Advances `(q, p)` by one step using the supplied standard Gaussian draws.
    pub fn step_with_noise(&mut self, q: &mut [f64], p: &mut [f64], xi: &[f64]) {
        let d = q.len();
        let dt = self.dt;
        match self.scheme {
            Resolved::Euler => {
                self.model.drift(q, p, &mut self.force);
                self.model.diffusion(q, p, &mut self.sigma);
                for i in 0..d {
                    q[i] += p[i] * dt;
                }
                for i in 0..d {
                    let mut noise = 0.0;
                    for j in 0..d {
                        noise += self.sigma[i * d + j] * xi[j];
                    }
                    p[i] += self.force[i] * dt + noise * self.sqrt_dt;
                }
            }
            Resolved::Splitting { decay, ou_sd } => {
                let l = self.langevin.expect("splitting resolved without Langevin form");
                let h = 0.5 * dt;
                l.force(q, &mut self.force);
                for i in 0..d {
                    p[i] += h * self.force[i];
                    q[i] += h * p[i];
                    p[i] = decay * p[i] + ou_sd * xi[i];
                    q[i] += h * p[i];
                }
                l.force(q, &mut self.force);
                for i in 0..d {
                    p[i] += h * self.force[i];
                }
            }
        }
    }

    /// Advances `(q, p)` by one step, drawing the noise from `rng`.
    pub fn step_in_place<R: Rng + ?Sized>(&mut self, q: &mut [f64], p: &mut [f64], rng: &mut R) {
        let mut xi = std::mem::take(&mut self.xi);
        for x in xi.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        self.step_with_noise(q, p, &xi);
        self.xi = xi;
    }
}

pub(crate) fn blown_up(q: &[f64], p: &[f64]) -> bool {
    q.iter().chain(p).any(|x| !(x.abs() <= BLOW_UP_LIMIT))
}

/// One discrete update of `state`; the clock advances by `dt`.
pub fn step<R: Rng + ?Sized>(
    state: &KineticState,
    model: &CoefficientModel,
    config: &IntegratorConfig,
    rng: &mut R,
) -> Result<KineticState> {
    check_dim(state, model)?;
    let mut stepper = Stepper::new(model, config)?;
    let (mut q, mut p) = (state.q.clone(), state.p.clone());
    stepper.step_in_place(&mut q, &mut p, rng);
    finish(state, q, p, config.dt)
}

/// As [`step`] with explicit Gaussian draws `xi`.
pub fn step_with_noise(
    state: &KineticState,
    model: &CoefficientModel,
    config: &IntegratorConfig,
    xi: &[f64],
) -> Result<KineticState> {
    check_dim(state, model)?;
    if xi.len() != state.dim() {
        return Err(Error::param("xi", "noise dimension must match the state"));
    }
    let mut stepper = Stepper::new(model, config)?;
    let (mut q, mut p) = (state.q.clone(), state.p.clone());
    stepper.step_with_noise(&mut q, &mut p, xi);
    finish(state, q, p, config.dt)
}

fn finish(state: &KineticState, q: Vec<f64>, p: Vec<f64>, dt: f64) -> Result<KineticState> {
    if blown_up(&q, &p) {
        return Err(Error::BlowUp {
            time: state.t + dt,
            last: state.clone(),
        });
    }
    Ok(KineticState { q, p, t: state.t + dt })
}

pub(crate) fn check_dim(state: &KineticState, model: &CoefficientModel) -> Result<()> {
    if state.dim() != model.dim() {
        return Err(Error::param(
            "state",
            format!("dimension {} does not match model dimension {}", state.dim(), model.dim()),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog::ModelSpec;
    use crate::model::coefficients::{ClosureField, RegularityMetadata};
    use crate::rng::stream;

    fn free(sigma: f64) -> CoefficientModel {
        ModelSpec::FreeTransport { dim: 1, sigma }.build().unwrap()
    }

    #[test]
    fn free_transport_moves_position_only() {
        let s = KineticState::new(vec![0.3], vec![2.0]).unwrap();
        let cfg = IntegratorConfig::new(0.1, 1.0, 1);
        let out = step(&s, &free(0.0), &cfg, &mut stream(1, 0)).unwrap();
        assert_eq!(out.q, vec![0.3 + 2.0 * 0.1]);
        assert_eq!(out.p, vec![2.0]);
        assert!((out.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn euler_deterministic_limb() {
        let field = ClosureField::new(1, "-q", |q, _p, f| f[0] = -q[0], |_q, _p, s| s[0] = 1.0);
        let m = CoefficientModel::from_field(field, RegularityMetadata::isotropic(1.0, 0.0, 1.0)).unwrap();
        let s = KineticState::new(vec![1.0], vec![0.0]).unwrap();
        let cfg = IntegratorConfig::new(0.01, 1.0, 0).with_scheme(Scheme::EulerMaruyama);
        let out = step_with_noise(&s, &m, &cfg, &[0.0]).unwrap();
        assert_eq!(out.q, vec![1.0]);
        assert!((out.p[0] + 0.01).abs() < 1e-15);
    }

    #[test]
    fn splitting_requires_langevin_form() {
        let cfg = IntegratorConfig::new(0.01, 1.0, 0).with_scheme(Scheme::LangevinSplitting);
        assert!(Stepper::new(&free(1.0), &cfg).is_err());
    }

    #[test]
    fn splitting_momentum_is_exact_ou() {
        let m = ModelSpec::NonconservativeLangevin {
            dim: 1,
            potential: crate::model::Potential::Flat,
            ell: crate::model::Perturbation::Zero,
            gamma: 1.0,
            kt: 0.5,
            alpha_drift: 0.5,
            beta_drift: 0.0,
        }
        .build()
        .unwrap();
        let dt = 0.2;
        let cfg = IntegratorConfig::new(dt, 1.0, 0);
        let s = KineticState::new(vec![0.0], vec![1.5]).unwrap();
        let zero = step_with_noise(&s, &m, &cfg, &[0.0]).unwrap();
        assert!((zero.p[0] - (-dt).exp() * 1.5).abs() < 1e-15);
        let one = step_with_noise(&s, &m, &cfg, &[1.0]).unwrap();
        let sd = (0.5 * (1.0 - (-2.0 * dt).exp())).sqrt();
        assert!((one.p[0] - zero.p[0] - sd).abs() < 1e-15);
    }

    #[test]
    fn blow_up_carries_last_state() {
        let field = ClosureField::new(1, "cubic", |_q, p, f| f[0] = p[0].powi(3), |_q, _p, s| s[0] = 1.0);
        let m = CoefficientModel::from_field(field, RegularityMetadata::isotropic(1.0, 0.0, 1.0)).unwrap();
        let s = KineticState::new(vec![0.0], vec![1e5]).unwrap();
        let cfg = IntegratorConfig::new(0.1, 1.0, 0);
        match step_with_noise(&s, &m, &cfg, &[0.0]) {
            Err(Error::BlowUp { last, .. }) => assert_eq!(last, s),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn config_problems_name_fields() {
        let cfg = IntegratorConfig::new(-1.0, 1.0, 0);
        assert_eq!(cfg.problems()[0].0, "dt");
        let cfg = IntegratorConfig::new(2.0, 1.0, 0);
        assert_eq!(cfg.problems()[0].0, "dt");
    }
}
