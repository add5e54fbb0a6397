use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{binomial_se, require, Provenance, Verdict, Z99};
use crate::error::{Error, Result};
use crate::integrate::{check_start, IntegratorConfig, StepOutcome, Stepper, Walker};
use crate::model::{CoefficientModel, CylindricalDomain, KineticState};
use crate::numeric::wilson_interval;
use crate::rng::stream;

/// Target set in phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhaseSet {
    Box {
        q_lo: Vec<f64>,
        q_hi: Vec<f64>,
        p_lo: Vec<f64>,
        p_hi: Vec<f64>,
    },
    /// Euclidean ball in `R^{2d}` around `(q, p)`.
    Ball { center: Vec<f64>, radius: f64 },
    /// All of `D`.
    Domain,
}

impl PhaseSet {
    pub fn contains(&self, q: &[f64], p: &[f64]) -> bool {
        match self {
            PhaseSet::Box { q_lo, q_hi, p_lo, p_hi } => {
                let inside = |x: &[f64], lo: &[f64], hi: &[f64]| {
                    x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v > a && v < b)
                };
                inside(q, q_lo, q_hi) && inside(p, p_lo, p_hi)
            }
            PhaseSet::Ball { center, radius } => {
                let r2: f64 = q.iter().chain(p).zip(center).map(|(x, c)| (x - c).powi(2)).sum();
                r2 < radius * radius
            }
            PhaseSet::Domain => true,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            PhaseSet::Box { q_lo, q_hi, p_lo, p_hi } => {
                require(
                    [q_lo.len(), q_hi.len(), p_lo.len(), p_hi.len()].iter().all(|&n| n == dim),
                    "set",
                    "box bounds must match the model dimension",
                )?;
                require(
                    q_lo.iter().zip(q_hi).chain(p_lo.iter().zip(p_hi)).all(|(a, b)| a < b),
                    "set",
                    "box bounds must satisfy lo < hi",
                )
            }
            PhaseSet::Ball { center, radius } => {
                require(center.len() == 2 * dim, "set.center", "must have 2d coordinates")?;
                require(*radius > 0.0, "set.radius", "must be positive")
            }
            PhaseSet::Domain => Ok(()),
        }
    }
}

/// For every start and checkpoint time, the number of paths that are still in
/// `D` and (if `set` is given) inside `set` at that time. Path `i` of start `j`
/// uses stream `stream_id + j * n + i`.
pub(crate) fn checkpoint_counts(
    starts: &[(Vec<f64>, Vec<f64>)],
    checkpoints: &[f64],
    set: Option<&PhaseSet>,
    model: &CoefficientModel,
    domain: &CylindricalDomain,
    cfg: &IntegratorConfig,
    n: usize,
) -> Result<Vec<Vec<u64>>> {
    require(!starts.is_empty(), "starts", "at least one start is required")?;
    require(n > 0, "n_samples", "must be positive")?;
    require(checkpoints.len() <= 64, "times", "at most 64 checkpoints")?;
    require(checkpoints.iter().all(|&t| t >= 0.0 && t.is_finite()), "times", "must be finite and non-negative")?;
    let states = starts
        .iter()
        .map(|(q, p)| {
            let s = KineticState::new(q.clone(), p.clone())?;
            check_start(&s, model, domain)?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..checkpoints.len()).collect();
    order.sort_by(|&a, &b| checkpoints[a].total_cmp(&checkpoints[b]));
    let steps: Vec<u64> = order.iter().map(|&k| cfg.steps_to(checkpoints[k])).collect();
    let proto = Stepper::new(model, cfg)?;
    let masks: Vec<u64> = (0..starts.len() * n)
        .into_par_iter()
        .map_init(
            || proto.clone(),
            |st, idx| {
                let mut w = Walker::new(&states[idx / n], stream(cfg.seed, cfg.stream_id + idx as u64));
                let mut mask = 0u64;
                for (slot, &target) in order.iter().zip(&steps) {
                    while w.steps < target {
                        if let StepOutcome::Exited(_) = w.advance(st, domain, cfg.crossing)? {
                            return Ok(mask);
                        }
                    }
                    if set.is_none_or(|a| a.contains(&w.q, &w.p)) {
                        mask |= 1 << slot;
                    }
                }
                Ok(mask)
            },
        )
        .collect::<Result<_>>()?;
    let mut counts = vec![vec![0u64; checkpoints.len()]; starts.len()];
    for (idx, m) in masks.iter().enumerate() {
        for (k, c) in counts[idx / n].iter_mut().enumerate() {
            *c += (m >> k) & 1;
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackRow {
    pub t: f64,
    /// `max_x u_A(t, x)` and its start index.
    pub numerator: f64,
    pub numerator_start: usize,
    /// `min_x u_A(t + T, x)` and its start index.
    pub denominator: f64,
    pub denominator_start: usize,
    /// Wilson 99% lower bound of the denominator.
    pub denominator_lower: f64,
    /// `None` while the denominator is not certified positive.
    pub ratio: Option<f64>,
    pub ratio_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub rows: Vec<HarnackRow>,
    pub lag: f64,
    /// `u_A` per start (rows) and checkpoint (columns, `t_i` then `t_i + T`).
    pub estimates: Vec<Vec<f64>>,
    /// Largest over smallest reported ratio.
    pub variation: Option<f64>,
    pub verdict: Verdict,
    pub provenance: Provenance,
}

/// Monte Carlo Harnack ratios `R(t) = max_x u_A(t, x) / min_x u_A(t + T, x)`
/// with `u_A(t, x) = P_x(t < tau, X_t in A)`. A denominator whose Wilson 99%
/// lower bound is zero makes the scan inconclusive.
pub fn harnack_ratio_scan(
    a: &PhaseSet,
    starts: &[(Vec<f64>, Vec<f64>)],
    model: &CoefficientModel,
    domain: &CylindricalDomain,
    times: &[f64],
    lag: f64,
    n_samples: usize,
    cfg: &IntegratorConfig,
) -> Result<HarnackReport> {
    a.validate(model.dim())?;
    require(lag > 0.0, "lag", "must be positive")?;
    require(!times.is_empty(), "times", "at least one time is required")?;
    let checkpoints: Vec<f64> = times.iter().copied().chain(times.iter().map(|t| t + lag)).collect();
    let counts = checkpoint_counts(starts, &checkpoints, Some(a), model, domain, cfg, n_samples)?;
    let n = n_samples as f64;
    let m = times.len();
    let mut rows = Vec::with_capacity(m);
    for (k, &t) in times.iter().enumerate() {
        let (jn, cn) = (0..starts.len()).map(|j| (j, counts[j][k])).max_by_key(|&(j, c)| (c, usize::MAX - j)).unwrap();
        let (jd, cd) = (0..starts.len()).map(|j| (j, counts[j][m + k])).min_by_key(|&(j, c)| (c, j)).unwrap();
        let (num, den) = (cn as f64 / n, cd as f64 / n);
        let lower = wilson_interval(cd, n_samples as u64, Z99).0;
        let (ratio, se) = if lower > 0.0 {
            let r = num / den;
            let rel = ((binomial_se(num, n_samples) / num.max(1e-300)).powi(2) + (binomial_se(den, n_samples) / den).powi(2)).sqrt();
            (Some(r), Some(r * rel))
        } else {
            (None, None)
        };
        rows.push(HarnackRow {
            t,
            numerator: num,
            numerator_start: jn,
            denominator: den,
            denominator_start: jd,
            denominator_lower: lower,
            ratio,
            ratio_stderr: se,
        });
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let complete = ratios.len() == rows.len();
    let variation = complete.then(|| {
        let max = ratios.iter().copied().fold(f64::MIN, f64::max);
        let min = ratios.iter().copied().fold(f64::MAX, f64::min);
        max / min
    });
    Ok(HarnackReport {
        rows,
        lag,
        estimates: counts.iter().map(|r| r.iter().map(|&c| c as f64 / n).collect()).collect(),
        variation,
        verdict: if complete { Verdict::Pass } else { Verdict::Inconclusive },
        provenance: Provenance::new(cfg, n_samples),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub t: f64,
    pub start: usize,
    pub u: f64,
    /// `exp(alpha2 t) u_K(t, x)`.
    pub scaled: f64,
}

/// Finite-horizon diagnostic `exp(alpha2 t) P_x(t < tau, X_t in K)`; the
/// limit behaviour is not asserted.
pub fn occupation_growth(
    k: &PhaseSet,
    starts: &[(Vec<f64>, Vec<f64>)],
    model: &CoefficientModel,
    domain: &CylindricalDomain,
    times: &[f64],
    alpha2: f64,
    n_samples: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<GrowthRow>> {
    k.validate(model.dim())?;
    let counts = checkpoint_counts(starts, times, Some(k), model, domain, cfg, n_samples)?;
    let mut rows = Vec::new();
    for (j, c) in counts.iter().enumerate() {
        for (i, &t) in times.iter().enumerate() {
            let u = c[i] as f64 / n_samples as f64;
            rows.push(GrowthRow {
                t,
                start: j,
                u,
                scaled: (alpha2 * t).exp() * u,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortTimeRow {
    pub t: f64,
    /// `max_x P_x(tau <= t)` and its start index.
    pub max_exit_probability: f64,
    pub argmax: usize,
    /// Wilson 99% upper bound at the maximizing start.
    pub upper: f64,
    /// `max_x P_x(sup_{s <= t} |X_s - x| >= delta)`, paths stopped at exit.
    pub max_displacement_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortTimeReport {
    /// Sorted by decreasing `t`.
    pub rows: Vec<ShortTimeRow>,
    pub delta: f64,
    /// Both maxima do not increase as `t` decreases, beyond the 99%
    /// binomial error.
    pub monotone: bool,
    pub provenance: Provenance,
}

/// Early-exit and displacement probabilities over a grid of starts. The
/// displacement is measured in the `|q| + |p|` norm on grid times.
pub fn short_time_exit_scan(
    starts: &[(Vec<f64>, Vec<f64>)],
    model: &CoefficientModel,
    domain: &CylindricalDomain,
    times: &[f64],
    delta: f64,
    n_samples: usize,
    cfg: &IntegratorConfig,
) -> Result<ShortTimeReport> {
    require(!times.is_empty() && times.len() <= 64, "times", "between one and 64 times are required")?;
    require(delta > 0.0, "delta", "must be positive")?;
    require(!starts.is_empty(), "starts", "at least one start is required")?;
    require(n_samples > 0, "n_samples", "must be positive")?;
    if times.iter().any(|&t| !(t > 0.0) || cfg.steps_to(t) == 0) {
        return Err(Error::param("times", "every time must be at least one step"));
    }
    let states = starts
        .iter()
        .map(|(q, p)| {
            let s = KineticState::new(q.clone(), p.clone())?;
            check_start(&s, model, domain)?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let steps: Vec<u64> = order.iter().map(|&k| cfg.steps_to(times[k])).collect();
    let proto = Stepper::new(model, cfg)?;
    let n = n_samples;
    // Per path: first checkpoint slot (in time order) by which it has exited,
    // and by which it has been displaced; `len` for never.
    let firsts: Vec<(usize, usize)> = (0..starts.len() * n)
        .into_par_iter()
        .map_init(
            || proto.clone(),
            |st, idx| {
                let x0 = &states[idx / n];
                let mut w = Walker::new(x0, stream(cfg.seed, cfg.stream_id + idx as u64));
                let never = steps.len();
                let mut displaced = never;
                for (slot, &target) in steps.iter().enumerate() {
                    while w.steps < target {
                        let out = w.advance(st, domain, cfg.crossing)?;
                        let dist = norm_diff(&w.q, &x0.q) + norm_diff(&w.p, &x0.p);
                        if dist >= delta && displaced == never {
                            displaced = slot;
                        }
                        if let StepOutcome::Exited(_) = out {
                            return Ok((slot, displaced));
                        }
                    }
                }
                Ok((never, displaced))
            },
        )
        .collect::<Result<_>>()?;
    let k = steps.len();
    let mut exits = vec![vec![0u64; k]; starts.len()];
    let mut moved = vec![vec![0u64; k]; starts.len()];
    for (idx, &(e, d)) in firsts.iter().enumerate() {
        for slot in e..k {
            exits[idx / n][slot] += 1;
        }
        for slot in d..k {
            moved[idx / n][slot] += 1;
        }
    }
    let nn = n as u64;
    let mut rows: Vec<ShortTimeRow> = (0..k)
        .map(|slot| {
            let (j, e) = (0..starts.len()).map(|j| (j, exits[j][slot])).max_by_key(|&(j, c)| (c, usize::MAX - j)).unwrap();
            let dmax = (0..starts.len()).map(|j| moved[j][slot]).max().unwrap();
            ShortTimeRow {
                t: times[order[slot]],
                max_exit_probability: e as f64 / n as f64,
                argmax: j,
                upper: wilson_interval(e, nn, Z99).1,
                max_displacement_probability: dmax as f64 / n as f64,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.t.total_cmp(&a.t));
    let within = |big: f64, small: f64| {
        small <= big + Z99 * (binomial_se(big, n).powi(2) + binomial_se(small, n).powi(2)).sqrt()
    };
    let monotone = rows.windows(2).all(|w| {
        within(w[0].max_exit_probability, w[1].max_exit_probability)
            && within(w[0].max_displacement_probability, w[1].max_displacement_probability)
    });
    Ok(ShortTimeReport {
        rows,
        delta,
        monotone,
        provenance: Provenance::new(cfg, n_samples),
    })
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog::ModelSpec;

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
    fn full_space_ratios_are_one() {
        let m = harmonic();
        let dom = CylindricalDomain::full_space(1);
        let starts = vec![(vec![0.0], vec![0.0]), (vec![1.0], vec![-1.0])];
        let cfg = IntegratorConfig::new(0.01, 1.0, 4);
        let r = harnack_ratio_scan(&PhaseSet::Domain, &starts, &m, &dom, &[0.5, 1.0], 0.5, 100, &cfg).unwrap();
        assert!(r.rows.iter().all(|row| row.ratio == Some(1.0)));
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn survival_ratio_at_least_one_for_a_single_start() {
        let m = harmonic();
        let dom = CylindricalDomain::interval(-1.0, 1.0).unwrap();
        let cfg = IntegratorConfig::new(0.01, 1.0, 5);
        let r = harnack_ratio_scan(&PhaseSet::Domain, &[(vec![0.2], vec![0.1])], &m, &dom, &[0.5, 1.0], 0.5, 400, &cfg).unwrap();
        for row in &r.rows {
            assert!(row.ratio.unwrap() >= 1.0);
        }
    }

    #[test]
    fn unreachable_target_is_inconclusive() {
        let m = ModelSpec::FreeTransport { dim: 1, sigma: 0.0 }.build().unwrap();
        let dom = CylindricalDomain::interval(-5.0, 5.0).unwrap();
        let a = PhaseSet::Box {
            q_lo: vec![-1.0],
            q_hi: vec![1.0],
            p_lo: vec![3.0],
            p_hi: vec![4.0],
        };
        let cfg = IntegratorConfig::new(0.01, 1.0, 0);
        let r = harnack_ratio_scan(&a, &[(vec![0.0], vec![0.0])], &m, &dom, &[0.5], 0.5, 50, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(r.rows[0].ratio.is_none());
    }

    #[test]
    fn short_time_exits_are_rare_and_monotone() {
        let m = harmonic();
        let dom = CylindricalDomain::interval(-2.0, 2.0).unwrap();
        let starts = vec![(vec![1.0], vec![1.0]), (vec![-1.0], vec![-1.0])];
        let cfg = IntegratorConfig::new(0.001, 1.0, 2);
        let r = short_time_exit_scan(&starts, &m, &dom, &[0.05, 0.5, 1.0], 0.5, 500, &cfg).unwrap();
        assert!(r.monotone);
        assert_eq!(r.rows.last().unwrap().max_exit_probability, 0.0);
        assert!(r.rows[0].max_exit_probability > 0.0);
        assert!(r.rows[2].max_displacement_probability < r.rows[0].max_displacement_probability);
    }
}
