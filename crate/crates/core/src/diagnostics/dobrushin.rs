use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{require, Provenance, Verdict};
use crate::error::Result;
use crate::integrate::{check_start, IntegratorConfig, StepOutcome, Stepper, Walker};
use crate::model::{CoefficientModel, CylindricalDomain, KineticState};
use crate::qsd::HistogramSpec;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DobrushinReport {
    pub t1: f64,
    /// `min_x P_x(t1 < tau, X_t1 in bin)` per reference bin.
    pub bin_minima: Vec<f64>,
    /// Start index attaining each minimum.
    pub argmin: Vec<usize>,
    /// Mass of the bin minima: the minorization constant.
    pub c1: f64,
    /// Normalized bin minima (empty when `c1 = 0`).
    pub nu: Vec<f64>,
    pub zero_bins: usize,
    pub verdict: Verdict,
    pub provenance: Provenance,
}

/// Estimates the best minorization `P_x(t1 < tau, X_t1 in .) >= c1 nu` over
/// the starts, at the resolution of the reference binning of `K`. Path `i` of
/// start `j` uses stream `stream_id + j * n + i`.
pub fn dobrushin_probe(
    starts: &[(Vec<f64>, Vec<f64>)],
    reference: &HistogramSpec,
    model: &CoefficientModel,
    domain: &CylindricalDomain,
    t1: f64,
    n_samples: usize,
    cfg: &IntegratorConfig,
) -> Result<DobrushinReport> {
    require(!starts.is_empty(), "starts", "at least one start is required")?;
    require(n_samples > 0, "n_samples", "must be positive")?;
    require(t1 > 0.0, "t1", "must be positive")?;
    reference.validate()?;
    require(reference.dim() == model.dim(), "reference", "dimension differs from the model")?;
    let states = starts
        .iter()
        .map(|(q, p)| {
            let s = KineticState::new(q.clone(), p.clone())?;
            check_start(&s, model, domain)?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_steps = cfg.steps_to(t1);
    let proto = Stepper::new(model, cfg)?;
    let bins: Vec<Option<usize>> = (0..starts.len() * n_samples)
        .into_par_iter()
        .map_init(
            || proto.clone(),
            |st, idx| {
                let mut w = Walker::new(&states[idx / n_samples], stream(cfg.seed, cfg.stream_id + idx as u64));
                while w.steps < n_steps {
                    if let StepOutcome::Exited(_) = w.advance(st, domain, cfg.crossing)? {
                        return Ok(None);
                    }
                }
                Ok(reference.bin_index(&w.q, &w.p))
            },
        )
        .collect::<Result<_>>()?;
    let nb = reference.n_bins();
    let mut counts = vec![vec![0u64; nb]; starts.len()];
    for (idx, b) in bins.iter().enumerate() {
        if let Some(b) = b {
            counts[idx / n_samples][*b] += 1;
        }
    }
    let mut bin_minima = vec![0.0; nb];
    let mut argmin = vec![0usize; nb];
    for b in 0..nb {
        let (j, c) = (0..starts.len()).map(|j| (j, counts[j][b])).min_by_key(|&(j, c)| (c, j)).unwrap();
        bin_minima[b] = c as f64 / n_samples as f64;
        argmin[b] = j;
    }
    let c1: f64 = bin_minima.iter().sum();
    let nu = if c1 > 0.0 { bin_minima.iter().map(|m| m / c1).collect() } else { Vec::new() };
    Ok(DobrushinReport {
        t1,
        zero_bins: bin_minima.iter().filter(|&&m| m == 0.0).count(),
        bin_minima,
        argmin,
        c1,
        nu,
        verdict: if c1 > 0.0 { Verdict::Pass } else { Verdict::Inconclusive },
        provenance: Provenance::new(cfg, n_samples),
    })
}
