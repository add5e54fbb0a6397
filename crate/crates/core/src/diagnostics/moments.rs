use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{require, Provenance, Verdict};
use crate::error::Result;
use crate::integrate::{check_start, IntegratorConfig, Stepper, Walker};
use crate::model::{CoefficientModel, CylindricalDomain, KineticState};
use crate::numeric::norm;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    /// Family index (mollification parameter).
    pub index: usize,
    /// `E[sup_{s <= t} (|q_s| + |p_s|)^2]` over grid times.
    pub sup_square: f64,
    pub stderr: f64,
    /// `E[|q_t|^2 + |p_t|^2]` at the horizon.
    pub end_square: f64,
    pub end_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub horizon: f64,
    pub rows: Vec<MomentRow>,
    pub median: f64,
    /// Relative half-width of the common band around the median.
    pub band: f64,
    pub verdict: Verdict,
    pub provenance: Provenance,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// Second moments of the running supremum for a family of models on all of
/// phase space. Every member reuses the same streams (path `i` on
/// `stream_id + i`). The family passes when every estimate lies within
/// `median (1 +- band)` up to three standard errors.
pub fn moment_bound_scan(
    family: &[(usize, CoefficientModel)],
    start: &KineticState,
    horizon: f64,
    n_samples: usize,
    band: f64,
    cfg: &IntegratorConfig,
) -> Result<MomentReport> {
    require(!family.is_empty(), "family", "at least one model is required")?;
    require(n_samples >= 2, "n_samples", "at least two samples are required")?;
    require(horizon > 0.0, "horizon", "must be positive")?;
    require(band >= 0.0, "band", "must be non-negative")?;
    let n_steps = cfg.steps_to(horizon);
    let mut rows = Vec::with_capacity(family.len());
    for (index, model) in family {
        let domain = CylindricalDomain::full_space(model.dim());
        check_start(start, model, &domain)?;
        let proto = Stepper::new(model, cfg)?;
        let pairs: Vec<(f64, f64)> = (0..n_samples)
            .into_par_iter()
            .map_init(
                || proto.clone(),
                |st, i| {
                    let mut w = Walker::new(start, stream(cfg.seed, cfg.stream_id + i as u64));
                    let mut sup = (norm(&w.q) + norm(&w.p)).powi(2);
                    while w.steps < n_steps {
                        w.advance(st, &domain, cfg.crossing)?;
                        sup = sup.max((norm(&w.q) + norm(&w.p)).powi(2));
                    }
                    let end = w.q.iter().chain(&w.p).map(|x| x * x).sum::<f64>();
                    Ok((sup, end))
                },
            )
            .collect::<Result<_>>()?;
        let (sups, ends): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (sup_square, stderr) = mean_se(&sups);
        let (end_square, end_stderr) = mean_se(&ends);
        rows.push(MomentRow {
            index: *index,
            sup_square,
            stderr,
            end_square,
            end_stderr,
        });
    }
    let mut sorted: Vec<f64> = rows.iter().map(|r| r.sup_square).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let k = sorted.len();
    let median = if k % 2 == 1 { sorted[k / 2] } else { 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]) };
    let passed = rows.iter().all(|r| {
        r.sup_square.is_finite()
            && r.sup_square - 3.0 * r.stderr <= median * (1.0 + band)
            && r.sup_square + 3.0 * r.stderr >= median * (1.0 - band)
    });
    Ok(MomentReport {
        horizon,
        rows,
        median,
        band,
        verdict: Verdict::from_bool(passed),
        provenance: Provenance::new(cfg, n_samples),
    })
}
