use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{blown_up, check_dim, Crossing, IntegratorConfig, Stepper};
use crate::error::{Error, Result};
use crate::model::{CoefficientModel, CylindricalDomain, KineticState};
use crate::numeric::{dot, norm};

/// `|p . n| <= TANGENTIAL_THRESHOLD (1 + |p|)` classifies an exit as tangential.
pub const TANGENTIAL_THRESHOLD: f64 = 1e-8;
const BISECTION_STEPS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Outgoing,
    Tangential,
}

impl Classification {
    pub fn from_normal_velocity(pn: f64, p_norm: f64, threshold: f64) -> Self {
        if pn > threshold * (1.0 + p_norm) {
            Classification::Outgoing
        } else {
            Classification::Tangential
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub exit_time: f64,
    /// Position projected onto the boundary.
    pub exit_state: KineticState,
    pub classification: Classification,
    /// `p . n(q)` at the exit state.
    pub normal_velocity: f64,
    pub crossed_at_substep: bool,
    /// Set when sub-step root finding was requested but could not bracket the
    /// crossing, and the endpoint was used instead.
    pub root_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Exited(ExitRecord),
    Survived(KineticState),
}

impl Outcome {
    /// Exit time, `+inf` for survivors.
    pub fn exit_time(&self) -> f64 {
        match self {
            Outcome::Exited(r) => r.exit_time,
            Outcome::Survived(_) => f64::INFINITY,
        }
    }

    pub fn exit(&self) -> Option<&ExitRecord> {
        match self {
            Outcome::Exited(r) => Some(r),
            Outcome::Survived(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub steps: u64,
    pub final_time: f64,
    /// `max |q| + |p|` over the visited grid states.
    pub max_phase_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Inside,
    Exited(ExitRecord),
}

/// A single trajectory: position, momentum, step counter and its own stream.
/// The clock is `t0 + steps * dt`, so long runs accumulate no rounding drift.
#[derive(Debug, Clone)]
pub struct Walker<R> {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub t0: f64,
    pub steps: u64,
    pub rng: R,
    q_prev: Vec<f64>,
    p_prev: Vec<f64>,
}

impl<R: Rng> Walker<R> {
    pub fn new(state: &KineticState, rng: R) -> Self {
        Self {
            q: state.q.clone(),
            p: state.p.clone(),
            t0: state.t,
            steps: 0,
            rng,
            q_prev: state.q.clone(),
            p_prev: state.p.clone(),
        }
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.t0 + self.steps as f64 * dt
    }

    pub fn state(&self, dt: f64) -> KineticState {
        KineticState {
            q: self.q.clone(),
            p: self.p.clone(),
            t: self.time(dt),
        }
    }

    /// Overwrites the phase point, keeping the clock and the stream.
    pub fn set_phase(&mut self, q: &[f64], p: &[f64]) {
        self.q.copy_from_slice(q);
        self.p.copy_from_slice(p);
    }

    /// One step followed by the exit check against `domain`.
    pub fn advance(
        &mut self,
        stepper: &mut Stepper<'_>,
        domain: &CylindricalDomain,
        crossing: Crossing,
    ) -> Result<StepOutcome> {
        let dt = stepper.dt();
        self.q_prev.copy_from_slice(&self.q);
        self.p_prev.copy_from_slice(&self.p);
        stepper.step_in_place(&mut self.q, &mut self.p, &mut self.rng);
        if blown_up(&self.q, &self.p) {
            let last = KineticState {
                q: self.q_prev.clone(),
                p: self.p_prev.clone(),
                t: self.time(dt),
            };
            return Err(Error::BlowUp {
                time: self.time(dt) + dt,
                last,
            });
        }
        self.steps += 1;
        if domain.contains(&self.q) {
            return Ok(StepOutcome::Inside);
        }
        let t_prev = self.time(dt) - dt;
        Ok(StepOutcome::Exited(locate_exit(
            domain,
            &self.q_prev,
            &self.q,
            &self.p,
            t_prev,
            dt,
            crossing,
        )))
    }
}

/// Locates the crossing on `q(s) = q_old + s (q_new - q_old)`, `s in [0, 1]`.
/// The momentum attached to the exit state is the one carried by the
/// interpolant, `(q_new - q_old) / dt`.
pub(crate) fn locate_exit(
    domain: &CylindricalDomain,
    q_old: &[f64],
    q_new: &[f64],
    p_new: &[f64],
    t_old: f64,
    dt: f64,
    crossing: Crossing,
) -> ExitRecord {
    let lerp = |s: f64| -> Vec<f64> { q_old.iter().zip(q_new).map(|(a, b)| a + s * (b - a)).collect() };
    let bracketed = domain.signed_distance(q_old) > 0.0 && domain.signed_distance(q_new) <= 0.0;
    let (s, q, p, substep, fallback) = if crossing == Crossing::SubstepInterpolation && bracketed {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if domain.signed_distance(&lerp(mid)) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let p: Vec<f64> = q_old.iter().zip(q_new).map(|(a, b)| (b - a) / dt).collect();
        (s, lerp(s), p, true, false)
    } else {
        let fallback = crossing == Crossing::SubstepInterpolation;
        (1.0, q_new.to_vec(), p_new.to_vec(), false, fallback)
    };
    let q = domain.project(&q);
    let n = domain.outward_normal(&q);
    let pn = dot(&p, &n);
    let classification = Classification::from_normal_velocity(pn, norm(&p), TANGENTIAL_THRESHOLD);
    ExitRecord {
        exit_time: t_old + s * dt,
        exit_state: KineticState {
            q,
            p,
            t: t_old + s * dt,
        },
        classification,
        normal_velocity: pn,
        crossed_at_substep: substep,
        root_fallback: fallback,
    }
}

pub(crate) fn check_start(state: &KineticState, model: &CoefficientModel, domain: &CylindricalDomain) -> Result<()> {
    check_dim(state, model)?;
    if domain.dim() != state.dim() {
        return Err(Error::param("domain", "dimension does not match the state"));
    }
    if !domain.contains(&state.q) {
        return Err(Error::OutsideDomain {
            point: state.phase_point(),
        });
    }
    Ok(())
}

/// Steps `state` until it leaves `domain` or `config.max_time` is reached.
pub fn simulate_until_exit<R: Rng>(
    state: &KineticState,
    model: &CoefficientModel,
    domain: &CylindricalDomain,
    config: &IntegratorConfig,
    rng: R,
) -> Result<(PathSummary, Outcome)> {
    check_start(state, model, domain)?;
    let mut stepper = Stepper::new(model, config)?;
    run_walker(&mut stepper, Walker::new(state, rng), domain, config)
}

pub(crate) fn run_walker<R: Rng>(
    stepper: &mut Stepper<'_>,
    mut walker: Walker<R>,
    domain: &CylindricalDomain,
    config: &IntegratorConfig,
) -> Result<(PathSummary, Outcome)> {
    let n_max = config.steps_to(config.max_time);
    let mut max_norm = norm(&walker.q) + norm(&walker.p);
    while walker.steps < n_max {
        match walker.advance(stepper, domain, config.crossing)? {
            StepOutcome::Inside => {
                max_norm = max_norm.max(norm(&walker.q) + norm(&walker.p));
            }
            StepOutcome::Exited(rec) => {
                let summary = PathSummary {
                    steps: walker.steps,
                    final_time: rec.exit_time,
                    max_phase_norm: max_norm,
                };
                return Ok((summary, Outcome::Exited(rec)));
            }
        }
    }
    let state = walker.state(config.dt);
    Ok((
        PathSummary {
            steps: walker.steps,
            final_time: state.t,
            max_phase_norm: max_norm,
        },
        Outcome::Survived(state),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog::ModelSpec;
    use crate::rng::stream;

    fn transport() -> CoefficientModel {
        ModelSpec::FreeTransport { dim: 1, sigma: 0.0 }.build().unwrap()
    }

    fn unit() -> CylindricalDomain {
        CylindricalDomain::interval(-1.0, 1.0).unwrap()
    }

    #[test]
    fn deterministic_exit_at_one() {
        let s = KineticState::new(vec![0.0], vec![1.0]).unwrap();
        let cfg = IntegratorConfig::new(0.01, 5.0, 0);
        let (_, out) = simulate_until_exit(&s, &transport(), &unit(), &cfg, stream(0, 0)).unwrap();
        let rec = out.exit().unwrap().clone();
        assert!((rec.exit_time - 1.0).abs() < 1e-12, "{rec:?}");
        assert_eq!(rec.exit_state.q, vec![1.0]);
        assert_eq!(rec.classification, Classification::Outgoing);
        assert!(rec.crossed_at_substep);
    }

    #[test]
    fn crossing_located_within_step() {
        let s = KineticState::new(vec![0.95], vec![1.0]).unwrap();
        let cfg = IntegratorConfig::new(0.1, 5.0, 0);
        let (_, out) = simulate_until_exit(&s, &transport(), &unit(), &cfg, stream(0, 0)).unwrap();
        assert!((out.exit_time() - 0.05).abs() < 1e-12);
        let cfg = cfg.with_crossing(Crossing::EndpointOnly);
        let (_, out) = simulate_until_exit(&s, &transport(), &unit(), &cfg, stream(0, 0)).unwrap();
        assert!((out.exit_time() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn refinement_moves_deterministic_exit_by_at_most_dt() {
        let s = KineticState::new(vec![0.123], vec![-0.77]).unwrap();
        let exact = (1.123) / 0.77;
        for crossing in [Crossing::SubstepInterpolation, Crossing::EndpointOnly] {
            for dt in [0.1, 0.05, 0.01, 0.001] {
                let cfg = IntegratorConfig::new(dt, 5.0, 0).with_crossing(crossing);
                let (_, out) = simulate_until_exit(&s, &transport(), &unit(), &cfg, stream(0, 0)).unwrap();
                assert!((out.exit_time() - exact).abs() <= dt + 1e-12);
                if crossing == Crossing::SubstepInterpolation {
                    assert!((out.exit_time() - exact).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn full_space_survives() {
        let s = KineticState::new(vec![0.0], vec![3.0]).unwrap();
        let cfg = IntegratorConfig::new(0.1, 2.0, 0);
        let (summary, out) =
            simulate_until_exit(&s, &transport(), &CylindricalDomain::full_space(1), &cfg, stream(0, 0)).unwrap();
        assert_eq!(summary.steps, 20);
        match out {
            Outcome::Survived(st) => assert!((st.t - 2.0).abs() < 1e-12),
            _ => panic!("full space must not exit"),
        }
    }

    #[test]
    fn start_outside_rejected() {
        let s = KineticState::new(vec![2.0], vec![0.0]).unwrap();
        let cfg = IntegratorConfig::new(0.1, 2.0, 0);
        assert!(matches!(
            simulate_until_exit(&s, &transport(), &unit(), &cfg, stream(0, 0)),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn ball_exit_lands_on_sphere() {
        let d = CylindricalDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let m = ModelSpec::FreeTransport { dim: 2, sigma: 0.0 }.build().unwrap();
        let s = KineticState::new(vec![0.2, -0.1], vec![0.6, 0.8]).unwrap();
        let cfg = IntegratorConfig::new(0.07, 5.0, 0);
        let (_, out) = simulate_until_exit(&s, &m, &d, &cfg, stream(0, 0)).unwrap();
        let rec = out.exit().unwrap();
        assert!(d.signed_distance(&rec.exit_state.q).abs() < 1e-12);
        assert_eq!(rec.classification, Classification::Outgoing);
    }
}
