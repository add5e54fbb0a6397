//! Grid audit of declared regularity metadata.
//!
//! Slacks are oriented so that a non-negative value means the declared
//! inequality holds at the witness: `bound - observed`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coefficients::CoefficientModel;
use super::state::{phase_norm, PhaseGrid};
use crate::error::{Error, Result};
use crate::numeric::{gram, norm, operator_norm};
use crate::rng::{purpose_stream, Purpose};

/// Number of random unit directions per point for the Rayleigh quotients,
/// on top of the coordinate axes.
pub const RANDOM_DIRECTIONS: usize = 16;
/// Absolute tolerance applied to every audit check.
pub const AUDIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub worst_slack: f64,
    /// Phase points `(q, p)` concatenated, witnessing the worst slack.
    pub witness: Vec<Vec<f64>>,
    pub passed: bool,
}

/// Largest observed `|F(x) - F(x')|` over grid pairs with `|x - x'| <= 1`.
/// No constant is declared for it, so it is reported but never fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub value: f64,
    pub witness: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub grid_size: usize,
    pub checks: Vec<CheckResult>,
    pub drift_oscillation: OscillationReport,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check == name)
    }
}

struct Sample {
    x: Vec<f64>,
    drift: Vec<f64>,
    sigma: Vec<f64>,
}

/// Audits ellipticity bounds, the anisotropic Hoelder bound and affine growth
/// against the model's declared metadata on `grid`.
pub fn audit_coefficients(model: &CoefficientModel, grid: &PhaseGrid) -> Result<AuditReport> {
    if grid.is_empty() {
        return Err(Error::param("grid", "must contain at least one point"));
    }
    let d = model.dim();
    if grid.dim() != Some(d) || grid.points.iter().any(|(q, p)| q.len() != d || p.len() != d) {
        return Err(Error::param("grid", format!("points must have dimension {d}")));
    }
    let meta = *model.metadata();
    let samples = grid
        .points
        .par_iter()
        .map(|(q, p)| {
            let (drift, sigma) = model.eval_checked(q, p)?;
            let mut x = q.clone();
            x.extend_from_slice(p);
            Ok(Sample { x, drift, sigma })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut directions: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    if d > 1 {
        let mut rng = purpose_stream(0, 0, Purpose::Audit);
        for _ in 0..RANDOM_DIRECTIONS {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = norm(&v);
            directions.push(v.into_iter().map(|x| x / n).collect());
        }
    }

    // Per-point extremes of the Rayleigh quotient and growth slack.
    let per_point: Vec<(f64, f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let g = gram(&s.sigma, d);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in &directions {
                let mut r = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        r += v[i] * g[i * d + j] * v[j];
                    }
                }
                lo = lo.min(r);
                hi = hi.max(r);
            }
            let growth = meta.a + meta.b * phase_norm(&s.x[..d], &s.x[d..]) - norm(&s.drift);
            (lo - meta.c1, meta.c2 - hi, growth)
        })
        .collect();

    let single = |name: &str, get: &dyn Fn(&(f64, f64, f64)) -> f64| {
        let (idx, slack) = argmin(per_point.iter().map(get));
        CheckResult {
            check: name.into(),
            worst_slack: slack,
            witness: vec![samples[idx].x.clone()],
            passed: slack >= -AUDIT_TOLERANCE,
        }
    };
    let lower = single("ellipticity-lower", &|t| t.0);
    let upper = single("ellipticity-upper", &|t| t.1);
    let growth = single("affine-growth", &|t| t.2);

    // Pairwise scans: row i against all j > i, reduced in index order.
    let rows: Vec<((f64, usize), (f64, usize))> = (0..samples.len())
        .into_par_iter()
        .map(|i| {
            let a = &samples[i];
            let mut holder = (f64::INFINITY, i);
            let mut osc = (f64::NEG_INFINITY, i);
            for (j, b) in samples.iter().enumerate().skip(i + 1) {
                let dq = dist(&a.x[..d], &b.x[..d]);
                let dp = dist(&a.x[d..], &b.x[d..]);
                let diff: Vec<f64> = a.sigma.iter().zip(&b.sigma).map(|(u, v)| u - v).collect();
                let bound = meta.c3 * (dq.powf(meta.alpha / 3.0) + dp.powf(meta.alpha));
                let slack = bound - operator_norm(&diff, d);
                if slack < holder.0 {
                    holder = (slack, j);
                }
                if dq + dp <= 1.0 {
                    let df = dist(&a.drift, &b.drift);
                    if df > osc.0 {
                        osc = (df, j);
                    }
                }
            }
            (holder, osc)
        })
        .collect();
    let mut holder = (f64::INFINITY, 0, 0);
    let mut osc = (0.0, 0, 0);
    for (i, ((hs, hj), (os, oj))) in rows.into_iter().enumerate() {
        if hs < holder.0 {
            holder = (hs, i, hj);
        }
        if os > osc.0 {
            osc = (os, i, oj);
        }
    }
    let holder_check = if samples.len() < 2 {
        CheckResult {
            check: "holder".into(),
            worst_slack: 0.0,
            witness: vec![],
            passed: true,
        }
    } else {
        CheckResult {
            check: "holder".into(),
            worst_slack: holder.0,
            witness: vec![samples[holder.1].x.clone(), samples[holder.2].x.clone()],
            passed: holder.0 >= -AUDIT_TOLERANCE,
        }
    };

    Ok(AuditReport {
        grid_size: samples.len(),
        checks: vec![lower, upper, holder_check, growth],
        drift_oscillation: OscillationReport {
            value: osc.0,
            witness: vec![samples[osc.1].x.clone(), samples[osc.2].x.clone()],
        },
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// First index attaining the minimum.
fn argmin(xs: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, x) in xs.enumerate() {
        if x < best.1 {
            best = (i, x);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::coefficients::{ConstantField, HolderDiffusion, LinearField, RegularityMetadata};

    fn holder_model(alpha: f64) -> CoefficientModel {
        let field = HolderDiffusion {
            dim: 1,
            kappa: 0.0,
            gamma: 0.0,
            base: 1.0,
            amp: 1.0,
            exponent: 0.5,
        };
        let meta = RegularityMetadata {
            alpha,
            c1: 1.0,
            c2: 4.0,
            c3: 1.0,
            a: 0.0,
            b: 0.0,
        };
        CoefficientModel::from_field(field, meta).unwrap()
    }

    #[test]
    fn identity_diffusion_is_exactly_elliptic() {
        let m = CoefficientModel::from_field(ConstantField::free(2, 1.0), RegularityMetadata::isotropic(1.0, 0.0, 0.0))
            .unwrap();
        let r = audit_coefficients(&m, &PhaseGrid::centered(2, 1.0, 1.0, 3)).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.check("ellipticity-lower").unwrap().worst_slack.abs() < 1e-15);
        assert!(r.check("ellipticity-upper").unwrap().worst_slack.abs() < 1e-15);
    }

    #[test]
    fn linear_drift_has_unit_growth() {
        let f = LinearField::new(vec![-1.0, -1.0], vec![0.0], vec![1.0]).unwrap();
        let m = CoefficientModel::from_field(f, RegularityMetadata::isotropic(1.0, 0.0, 1.0)).unwrap();
        let r = audit_coefficients(&m, &PhaseGrid::centered(1, 2.0, 2.0, 21)).unwrap();
        assert!(r.check("affine-growth").unwrap().passed);
        let tight = m.with_metadata(RegularityMetadata::isotropic(1.0, 0.0, 0.9)).unwrap();
        assert!(!audit_coefficients(&tight, &PhaseGrid::centered(1, 2.0, 2.0, 21))
            .unwrap()
            .check("affine-growth")
            .unwrap()
            .passed);
    }

    #[test]
    fn holder_exponent_half_passes_and_point_nine_fails_near_zero() {
        let grid = PhaseGrid::centered(1, 1.0, 1.0, 41);
        let ok = audit_coefficients(&holder_model(0.5), &grid).unwrap();
        assert!(ok.check("holder").unwrap().passed, "{ok:?}");
        let bad = audit_coefficients(&holder_model(0.9), &grid).unwrap();
        let h = bad.check("holder").unwrap();
        assert!(!h.passed);
        let p_near_zero = h.witness.iter().any(|x| x[1].abs() <= 0.05 + 1e-12);
        assert!(p_near_zero, "{h:?}");
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(audit_coefficients(&holder_model(0.5), &PhaseGrid::default()).is_err());
    }
}
