use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{require, Provenance, Verdict, Z99};
use crate::error::{Error, Result};
use crate::integrate::{check_start, IntegratorConfig, StepOutcome, Stepper, Walker};
use crate::lyapunov::TestFunction;
use crate::model::{CoefficientModel, CompactSet, CylindricalDomain, KineticState};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F2Row {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// `E_x[1{t2 < tau_K ^ tau} psi(X_t2)]`.
    pub estimate: f64,
    pub stderr: f64,
    /// `exp(-alpha1 t2) psi(x)`.
    pub bound: f64,
    pub slack: f64,
    /// Fraction of paths alive and outside `K` at `t2`.
    pub survival: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F2Report {
    pub function: String,
    pub t2: f64,
    pub alpha1: f64,
    pub rows: Vec<F2Row>,
    pub verdict: Verdict,
    pub provenance: Provenance,
}

/// Checks `E_x[1{t2 < tau_K ^ tau} psi(X_t2)] <= exp(-alpha1 t2) psi(x)` by
/// simulation, killing paths on entry into `K` (at grid times), on exit from
/// `D`, or at `t2`. A start passes when the estimate lies below the bound up to
/// the 99% Monte Carlo error.
pub fn f2_lyapunov_probe(
    psi: &dyn TestFunction,
    k: &CompactSet,
    model: &CoefficientModel,
    domain: &CylindricalDomain,
    t2: f64,
    alpha1: f64,
    starts: &[(Vec<f64>, Vec<f64>)],
    n_samples: usize,
    cfg: &IntegratorConfig,
) -> Result<F2Report> {
    require(t2 > 0.0, "t2", "must be positive")?;
    require(alpha1 >= 0.0, "alpha1", "must be non-negative")?;
    require(n_samples >= 2, "n_samples", "at least two samples are required")?;
    require(psi.dim() == model.dim(), "psi", "dimension differs from the model")?;
    let states = starts
        .iter()
        .map(|(q, p)| {
            let s = KineticState::new(q.clone(), p.clone())?;
            check_start(&s, model, domain)?;
            if k.contains(domain, q, p) {
                return Err(Error::param("starts", format!("start {q:?}, {p:?} lies in K")));
            }
            if !(psi.value(q, p) >= 1.0) {
                return Err(Error::param("psi", "must be at least 1 at every start"));
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_steps = cfg.steps_to(t2);
    let proto = Stepper::new(model, cfg)?;
    let values: Vec<f64> = (0..states.len() * n_samples)
        .into_par_iter()
        .map_init(
            || proto.clone(),
            |st, idx| {
                let mut w = Walker::new(&states[idx / n_samples], stream(cfg.seed, cfg.stream_id + idx as u64));
                while w.steps < n_steps {
                    if let StepOutcome::Exited(_) = w.advance(st, domain, cfg.crossing)? {
                        return Ok(0.0);
                    }
                    if k.contains(domain, &w.q, &w.p) {
                        return Ok(0.0);
                    }
                }
                Ok(psi.value(&w.q, &w.p))
            },
        )
        .collect::<Result<_>>()?;
    let decay = (-alpha1 * t2).exp();
    let rows: Vec<F2Row> = states
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let v = &values[j * n_samples..(j + 1) * n_samples];
            let n = n_samples as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let stderr = (var / n).sqrt();
            let bound = decay * psi.value(&s.q, &s.p);
            F2Row {
                q: s.q.clone(),
                p: s.p.clone(),
                estimate: mean,
                stderr,
                bound,
                slack: bound - mean,
                survival: v.iter().filter(|&&x| x > 0.0).count() as f64 / n,
                passed: mean - Z99 * stderr <= bound,
            }
        })
        .collect();
    Ok(F2Report {
        function: psi.name(),
        t2,
        alpha1,
        verdict: Verdict::from_bool(rows.iter().all(|r| r.passed)),
        rows,
        provenance: Provenance::new(cfg, n_samples),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::SmoothFunction;
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
    fn constant_psi_reduces_to_survival() {
        let m = harmonic();
        let dom = CylindricalDomain::interval(-2.0, 2.0).unwrap();
        let k = CompactSet::boxes(vec![-0.5], vec![0.5], vec![-0.5], vec![0.5]).unwrap();
        let psi = SmoothFunction::Constant { c: 1.0 }.bind(1);
        let cfg = IntegratorConfig::new(0.01, 1.0, 3);
        let r = f2_lyapunov_probe(&psi, &k, &m, &dom, 1.0, 0.0, &[(vec![1.5], vec![1.0])], 400, &cfg).unwrap();
        let row = &r.rows[0];
        assert_eq!(row.estimate, row.survival);
        assert!(row.estimate <= 1.0 && row.passed);
    }

    #[test]
    fn start_next_to_k_enters_immediately() {
        let m = ModelSpec::FreeTransport { dim: 1, sigma: 0.0 }.build().unwrap();
        let dom = CylindricalDomain::interval(-2.0, 2.0).unwrap();
        let k = CompactSet::boxes(vec![-0.5], vec![0.5], vec![-1.0], vec![1.0]).unwrap();
        let psi = SmoothFunction::Constant { c: 1.0 }.bind(1);
        let cfg = IntegratorConfig::new(0.01, 1.0, 0);
        let r = f2_lyapunov_probe(&psi, &k, &m, &dom, 1.0, 5.0, &[(vec![-0.51], vec![0.5])], 10, &cfg).unwrap();
        assert_eq!(r.rows[0].estimate, 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn start_inside_k_is_rejected() {
        let m = harmonic();
        let dom = CylindricalDomain::interval(-2.0, 2.0).unwrap();
        let k = CompactSet::boxes(vec![-0.5], vec![0.5], vec![-0.5], vec![0.5]).unwrap();
        let psi = SmoothFunction::Constant { c: 1.0 }.bind(1);
        let cfg = IntegratorConfig::new(0.01, 1.0, 0);
        assert!(f2_lyapunov_probe(&psi, &k, &m, &dom, 1.0, 0.0, &[(vec![0.0], vec![0.0])], 10, &cfg).is_err());
    }
}
