use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::histogram::{Histogram, HistogramAccumulator, HistogramSpec};
use super::StartLaw;
use crate::error::{Error, Result};
use crate::integrate::{check_start, IntegratorConfig, StepOutcome, Stepper, Walker};
use crate::model::{CoefficientModel, CylindricalDomain, KineticState};
use crate::rng::{purpose_stream, stream, Purpose, StreamRng};

pub const BOOTSTRAP_BLOCKS: usize = 20;
pub const BOOTSTRAP_REPLICATES: usize = 2000;

/// Run parameters besides the particle count. `integrator.max_time` is the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FvOptions {
    pub integrator: IntegratorConfig,
    /// Defaults to half the horizon.
    #[serde(default)]
    pub burn_in: Option<f64>,
    pub histogram: HistogramSpec,
    /// Epochs between histogram accumulations after burn-in.
    #[serde(default = "one")]
    pub record_every: usize,
    /// Times at which the instantaneous empirical law is stored.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn one() -> usize {
    1
}

impl FvOptions {
    pub fn new(integrator: IntegratorConfig, histogram: HistogramSpec) -> Self {
        Self {
            integrator,
            burn_in: None,
            histogram,
            record_every: 1,
            snapshot_times: Vec::new(),
        }
    }

    pub fn burn_in(&self) -> f64 {
        self.burn_in.unwrap_or(0.5 * self.integrator.max_time)
    }

    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = self.integrator.problems();
        let b = self.burn_in();
        if !(b >= 0.0 && b < self.integrator.max_time) {
            out.push(("burn_in", "must lie in [0, horizon)".into()));
        }
        if self.record_every == 0 {
            out.push(("record_every", "must be positive".into()));
        }
        if let Err(e) = self.histogram.validate() {
            out.push(("histogram", e.to_string()));
        }
        out
    }
}

/// Empirical law of the particle cloud at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: u64,
    pub time: f64,
    pub histogram: Histogram,
}

/// Time-averaged QSD estimate with the kill-rate estimate of `lambda_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsdEstimate {
    pub histogram: Histogram,
    pub lambda0_hat: f64,
    /// Block-bootstrap standard error of `lambda0_hat`.
    pub lambda0_stderr: f64,
    pub burn_in: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_particles: usize,
    pub kill_count: u64,
    pub kills_after_burn_in: u64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct FvResult {
    pub estimate: QsdEstimate,
    pub snapshots: Vec<Snapshot>,
    pub final_states: Vec<KineticState>,
    /// Kills per epoch after burn-in.
    pub kills_per_epoch: Vec<u32>,
}

/// Fleming–Viot system of `n_particles` walkers in `O x R^d`.
///
/// Each epoch is one integrator step. Particles that left during the epoch
/// are handled in ascending index order and jump onto the current position of
/// a survivor drawn uniformly from those that did not exit. If every particle
/// exits in the same epoch the run fails with [`Error::Extinction`].
pub fn fleming_viot_run(
    start: &StartLaw,
    model: &CoefficientModel,
    domain: &CylindricalDomain,
    n_particles: usize,
    options: &FvOptions,
) -> Result<FvResult> {
    if n_particles < 2 {
        return Err(Error::param("n_particles", "at least two particles are required"));
    }
    if let Some((field, reason)) = options.problems().into_iter().next() {
        return Err(Error::InvalidParameter { name: field.into(), reason });
    }
    if options.histogram.dim() != domain.dim() {
        return Err(Error::param("histogram", "dimension differs from the domain"));
    }
    let cfg = &options.integrator;
    let proto = Stepper::new(model, cfg)?;
    let mut walkers: Vec<Walker<StreamRng>> = Vec::with_capacity(n_particles);
    for i in 0..n_particles {
        let id = cfg.stream_id + i as u64;
        let s = start.sample(domain, &mut purpose_stream(cfg.seed, id, Purpose::Initial))?;
        check_start(&s, model, domain)?;
        walkers.push(Walker::new(&KineticState { t: 0.0, ..s }, stream(cfg.seed, id)));
    }

    let n_epochs = cfg.steps_to(cfg.max_time);
    let burn_in = options.burn_in();
    let first_recorded = cfg.steps_to(burn_in);
    let mut snap_epochs: Vec<u64> = options.snapshot_times.iter().map(|&t| cfg.steps_to(t)).collect();
    snap_epochs.sort_unstable();
    snap_epochs.dedup();
    let mut snapshots = Vec::new();
    let mut next_snap = 0usize;
    let mut take_snapshot = |epoch: u64, walkers: &[Walker<StreamRng>], out: &mut Vec<Snapshot>| -> Result<()> {
        while next_snap < snap_epochs.len() && snap_epochs[next_snap] == epoch {
            let mut acc = HistogramAccumulator::new(options.histogram.clone());
            for w in walkers {
                acc.add(&w.q, &w.p, 1.0);
            }
            out.push(Snapshot {
                epoch,
                time: epoch as f64 * cfg.dt,
                histogram: acc.finish()?,
            });
            next_snap += 1;
        }
        Ok(())
    };
    take_snapshot(0, &walkers, &mut snapshots)?;

    let mut resample_rng = purpose_stream(cfg.seed, cfg.stream_id, Purpose::Resampling);
    let mut acc = HistogramAccumulator::new(options.histogram.clone());
    let mut kill_count = 0u64;
    let mut kills_per_epoch = Vec::with_capacity((n_epochs - first_recorded.min(n_epochs)) as usize);
    let mut survivors = Vec::with_capacity(n_particles);
    let mut exited = Vec::with_capacity(n_particles);

    for epoch in 1..=n_epochs {
        let flags: Vec<bool> = walkers
            .par_iter_mut()
            .map_init(
                || proto.clone(),
                |st, w| w.advance(st, domain, cfg.crossing).map(|o| matches!(o, StepOutcome::Exited(_))),
            )
            .collect::<Result<_>>()?;
        survivors.clear();
        exited.clear();
        for (i, &f) in flags.iter().enumerate() {
            if f {
                exited.push(i);
            } else {
                survivors.push(i);
            }
        }
        if survivors.is_empty() {
            return Err(Error::Extinction {
                time: epoch as f64 * cfg.dt,
                kill_count,
            });
        }
        for &i in &exited {
            let j = survivors[resample_rng.gen_range(0..survivors.len())];
            let (q, p) = (walkers[j].q.clone(), walkers[j].p.clone());
            walkers[i].set_phase(&q, &p);
        }
        kill_count += exited.len() as u64;
        if epoch > first_recorded {
            kills_per_epoch.push(exited.len() as u32);
            if (epoch - first_recorded) % options.record_every as u64 == 0 {
                for w in &walkers {
                    acc.add(&w.q, &w.p, 1.0);
                }
            }
        }
        take_snapshot(epoch, &walkers, &mut snapshots)?;
    }

    let elapsed = (n_epochs - first_recorded) as f64 * cfg.dt;
    let kills_after: u64 = kills_per_epoch.iter().map(|&k| k as u64).sum();
    let scale = 1.0 / (n_particles as f64 * elapsed);
    let lambda0_hat = kills_after as f64 * scale;
    let lambda0_stderr = block_bootstrap_stderr(
        &kills_per_epoch,
        scale,
        &mut purpose_stream(cfg.seed, cfg.stream_id, Purpose::Bootstrap),
    );
    let histogram = acc.finish()?;
    Ok(FvResult {
        estimate: QsdEstimate {
            histogram,
            lambda0_hat,
            lambda0_stderr,
            burn_in,
            horizon: cfg.max_time,
            dt: cfg.dt,
            n_particles,
            kill_count,
            kills_after_burn_in: kills_after,
            seed: cfg.seed,
        },
        snapshots,
        final_states: walkers.iter().map(|w| w.state(cfg.dt)).collect(),
        kills_per_epoch,
    })
}

/// Standard error of `scale * sum(kills)` from resampling contiguous blocks.
pub(crate) fn block_bootstrap_stderr<R: Rng>(kills: &[u32], scale: f64, rng: &mut R) -> f64 {
    let b = BOOTSTRAP_BLOCKS.min(kills.len());
    if b < 2 {
        return f64::NAN;
    }
    let len = kills.len() / b;
    let totals: Vec<f64> = (0..b)
        .map(|k| kills[k * len..(k + 1) * len].iter().map(|&x| x as f64).sum())
        .collect();
    // Blocks cover b * len epochs; rescale to the full window.
    let stretch = kills.len() as f64 / (b * len) as f64;
    let reps: Vec<f64> = (0..BOOTSTRAP_REPLICATES)
        .map(|_| (0..b).map(|_| totals[rng.gen_range(0..b)]).sum::<f64>() * stretch * scale)
        .collect();
    let mean = reps.iter().sum::<f64>() / reps.len() as f64;
    (reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt()
}
