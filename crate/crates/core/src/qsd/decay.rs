use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::SurvivalCurve;

/// Fewest curve points a fit window may contain.
pub const MIN_FIT_POINTS: usize = 10;
/// Points need at least this many survivors to enter a fit.
pub const MIN_SURVIVORS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub lambda0_hat: f64,
    pub stderr: f64,
    /// Start of the fit window.
    pub burn_in: f64,
    pub window_end: f64,
    pub n_points: usize,
    /// True when no onset passed the stability test and the window starts
    /// halfway through the usable range.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy)]
struct Fit {
    slope: f64,
    stderr: f64,
}

/// Weighted least-squares slope of `log P` on points `lo..hi` of the curve.
///
/// Weights are `n P / (1 - P)`. The standard error accounts for the
/// correlation between the points: `log P(t_k)` is a sum of independent
/// log survival ratios, each with variance `(1 - r) / (n_{k-1} r)`.
fn wls(curve: &SurvivalCurve, idx: &[usize]) -> Fit {
    let n = curve.n_samples as f64;
    let weight = |k: usize| {
        let p = curve.p_hat[k];
        if p >= 1.0 {
            n * n
        } else {
            n * p / (1.0 - p)
        }
    };
    let w: Vec<f64> = idx.iter().map(|&k| weight(k)).collect();
    let sw: f64 = w.iter().sum();
    let tbar = idx.iter().zip(&w).map(|(&k, w)| w * curve.times[k]).sum::<f64>() / sw;
    let stt: f64 = idx.iter().zip(&w).map(|(&k, w)| w * (curve.times[k] - tbar).powi(2)).sum();
    let a: Vec<f64> = idx.iter().zip(&w).map(|(&k, w)| w * (curve.times[k] - tbar) / stt).collect();
    let slope = idx.iter().zip(&a).map(|(&k, a)| a * curve.p_hat[k].ln()).sum();
    // Increment j (between idx[j-1] and idx[j]) enters every later point.
    let mut var = 0.0;
    let mut tail: f64 = a.iter().sum();
    for j in 1..idx.len() {
        tail -= a[j - 1];
        let (k0, k1) = (idx[j - 1], idx[j]);
        let r = curve.p_hat[k1] / curve.p_hat[k0];
        let at_risk = curve.p_hat[k0] * n;
        if r < 1.0 {
            var += tail * tail * (1.0 - r) / (at_risk * r);
        }
    }
    Fit {
        slope,
        stderr: var.sqrt(),
    }
}

/// `lambda_0` from the exponential tail of a survival curve.
///
/// Points whose survivor count is below [`MIN_SURVIVORS`] are dropped. The fit
/// window starts at the earliest onset (within the first half of the usable
/// range) for which the slopes of both half-windows agree with the full-window
/// slope within one standard error. Without such an onset the window starts at
/// half the usable range; if its halves then disagree by more than three
/// combined standard errors the curve is reported as non-exponential.
pub fn estimate_decay_rate(curve: &SurvivalCurve) -> Result<DecayEstimate> {
    let usable: Vec<usize> = (0..curve.times.len())
        .filter(|&k| curve.survivors[k] >= MIN_SURVIVORS && curve.p_hat[k] > 0.0)
        .collect();
    if usable.iter().all(|&k| curve.p_hat[k] >= 1.0) && !usable.is_empty() {
        let last = *usable.last().unwrap();
        return Ok(DecayEstimate {
            lambda0_hat: 0.0,
            stderr: 0.0,
            burn_in: curve.times[usable[0]],
            window_end: curve.times[last],
            n_points: usable.len(),
            fallback: false,
        });
    }
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::NonExponential(format!(
            "only {} usable survival points",
            usable.len()
        )));
    }
    let t_end = curve.times[*usable.last().unwrap()];
    let t_start = curve.times[usable[0]];
    let half = t_start + 0.5 * (t_end - t_start);

    let finish = |from: usize, fit: Fit, fallback: bool| DecayEstimate {
        lambda0_hat: (-fit.slope).max(0.0),
        stderr: fit.stderr,
        burn_in: curve.times[usable[from]],
        window_end: t_end,
        n_points: usable.len() - from,
        fallback,
    };

    for from in 0..usable.len() {
        if curve.times[usable[from]] > half || usable.len() - from < MIN_FIT_POINTS {
            break;
        }
        let win = &usable[from..];
        let m = win.len() / 2;
        let full = wls(curve, win);
        let first = wls(curve, &win[..=m]);
        let second = wls(curve, &win[m..]);
        let tol = |f: Fit| f.stderr.max(1e-12 * full.slope.abs());
        if (first.slope - full.slope).abs() <= tol(first) && (second.slope - full.slope).abs() <= tol(second) {
            return Ok(finish(from, full, false));
        }
    }

    let from = usable.iter().position(|&k| curve.times[k] >= half).unwrap_or(0);
    let win = &usable[from..];
    if win.len() < MIN_FIT_POINTS {
        return Err(Error::NonExponential(format!(
            "fallback window holds {} points",
            win.len()
        )));
    }
    let m = win.len() / 2;
    let (first, second) = (wls(curve, &win[..=m]), wls(curve, &win[m..]));
    let combined = (first.stderr.powi(2) + second.stderr.powi(2)).sqrt();
    if (first.slope - second.slope).abs() > 3.0 * combined.max(1e-12 * first.slope.abs()) {
        return Err(Error::NonExponential(format!(
            "tail slopes {:.4e} and {:.4e} disagree",
            first.slope, second.slope
        )));
    }
    Ok(finish(from, wls(curve, win), true))
}
