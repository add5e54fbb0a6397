//! Mollification of coefficient fields by a tensor-product bump kernel.
//!
//! The base kernel is `phi(y) = prod_i psi(y_i)` with
//! `psi(s) proportional to exp(-1 / (1 - s^2))` on `(-1, 1)`, and
//! `phi_n(y) = n^{2d} phi(n y)`. Convolutions are evaluated with a tensor
//! Gauss-Legendre rule whose 1-d weights `w_j psi(s_j)` are renormalized to sum
//! to one, so constants are reproduced exactly and, the nodes being
//! symmetric, so are affine fields.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::audit::CheckResult;
use super::coefficients::{CoefficientField, CoefficientModel, RegularityMetadata};
use super::compact::CompactSet;
use super::domain::CylindricalDomain;
use super::state::{tensor, PhaseGrid};
use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre, norm, operator_norm, CompensatedSum};

pub const DEFAULT_ORDER: usize = 16;

/// Unnormalized 1-d bump `exp(-1 / (1 - s^2))`.
pub fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifierKernel {
    /// Mollification index `n >= 1`; the support is `[-1/n, 1/n]^{2d}`.
    pub n: u32,
    pub order: usize,
    /// Nodes on `[-1, 1]`.
    pub nodes: Vec<f64>,
    /// Normalized 1-d weights, summing to one.
    pub weights: Vec<f64>,
    /// Relative discrepancy of the kernel mass between order `m` and `2m`
    /// rules; the declared quadrature tolerance.
    pub quadrature_tolerance: f64,
}

impl MollifierKernel {
    pub fn new(n: u32, order: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "mollification index must be at least 1"));
        }
        if order < 2 {
            return Err(Error::param("order", "quadrature order must be at least 2"));
        }
        let (nodes, w) = gauss_legendre(order);
        let raw: Vec<f64> = nodes.iter().zip(&w).map(|(s, w)| w * bump(*s)).collect();
        let mass: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|x| x / mass).collect();
        let (n2, w2) = gauss_legendre(2 * order);
        let mass2: f64 = n2.iter().zip(&w2).map(|(s, w)| w * bump(*s)).sum();
        Ok(Self {
            n,
            order,
            nodes,
            weights,
            quadrature_tolerance: ((mass - mass2) / mass2).abs().max(f64::EPSILON),
        })
    }

    pub fn with_default_order(n: u32) -> Result<Self> {
        Self::new(n, DEFAULT_ORDER)
    }

    /// Sup-norm radius of the support of `phi_n`.
    pub fn support_radius(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Offsets `y / n` and product weights of the tensor rule on `R^{2d}`.
    fn tensor_rule(&self, d: usize) -> (Vec<f64>, Vec<f64>) {
        let h = 1.0 / self.n as f64;
        let idx: Vec<f64> = (0..self.order).map(|i| i as f64).collect();
        let axes = vec![idx; 2 * d];
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        for multi in tensor(&axes) {
            let mut w = 1.0;
            for &i in &multi {
                let i = i as usize;
                offsets.push(self.nodes[i] * h);
                w *= self.weights[i];
            }
            weights.push(w);
        }
        (offsets, weights)
    }
}

/// `F_n = F * phi_n`, `sigma_n = sigma * phi_n`.
#[derive(Debug)]
pub struct MollifiedField {
    base: Arc<dyn CoefficientField>,
    n: u32,
    dim: usize,
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

impl MollifiedField {
    fn accumulate(
        &self,
        q: &[f64],
        p: &[f64],
        out: &mut [f64],
        width: usize,
        eval: impl Fn(&[f64], &[f64], &mut [f64]),
    ) {
        let d = self.dim;
        let mut qs = vec![0.0; d];
        let mut ps = vec![0.0; d];
        let mut tmp = vec![0.0; width];
        out.iter_mut().for_each(|x| *x = 0.0);
        for (k, w) in self.weights.iter().enumerate() {
            let y = &self.offsets[k * 2 * d..(k + 1) * 2 * d];
            for i in 0..d {
                qs[i] = q[i] - y[i];
                ps[i] = p[i] - y[d + i];
            }
            eval(&qs, &ps, &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += w * t;
            }
        }
    }
}

impl CoefficientField for MollifiedField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        self.accumulate(q, p, out, self.dim, |a, b, o| self.base.drift(a, b, o))
    }

    fn diffusion(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        self.accumulate(q, p, out, self.dim * self.dim, |a, b, o| self.base.diffusion(a, b, o))
    }

    fn describe(&self) -> String {
        format!("mollified(n={}, {})", self.n, self.base.describe())
    }
}

/// Returns the mollified model. Metadata: `a~ = a + b * r / n` where
/// `r = 2 sqrt(d)` bounds `|y| = |y_q| + |y_p|` on the unit support; `b`,
/// `c1`, `c2`, `c3` and `alpha` are carried over (audit re-checks them).
pub fn mollify(model: &CoefficientModel, kernel: &MollifierKernel) -> Result<CoefficientModel> {
    let d = model.dim();
    let (offsets, weights) = kernel.tensor_rule(d);
    let field = MollifiedField {
        base: model.field().clone(),
        n: kernel.n,
        dim: d,
        offsets,
        weights,
    };
    let m = model.metadata();
    let radius = 2.0 * (d as f64).sqrt();
    let meta = RegularityMetadata {
        a: m.a + m.b * radius / kernel.n as f64,
        ..*m
    };
    CoefficientModel::new(Arc::new(field), meta)
}

/// Composite Gauss-Legendre rule over a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxQuadrature {
    /// Panels per axis (length `2d`), or a single entry applied to every axis.
    pub panels: Vec<usize>,
    pub order: usize,
}

impl Default for BoxQuadrature {
    fn default() -> Self {
        Self {
            panels: vec![64],
            order: 4,
        }
    }
}

impl BoxQuadrature {
    /// Nodes and weights of the rule on `[lo, hi]` (dimension = `lo.len()`).
    pub fn rule(&self, lo: &[f64], hi: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let dims = lo.len();
        if self.order == 0 || self.panels.is_empty() || self.panels.iter().any(|&p| p == 0) {
            return Err(Error::param("panels", "panels and order must be positive"));
        }
        if self.panels.len() != 1 && self.panels.len() != dims {
            return Err(Error::param("panels", format!("expected 1 or {dims} entries")));
        }
        let (x, w) = gauss_legendre(self.order);
        let mut axes_x = Vec::with_capacity(dims);
        let mut axes_w = Vec::with_capacity(dims);
        for k in 0..dims {
            let panels = if self.panels.len() == 1 { self.panels[0] } else { self.panels[k] };
            let h = (hi[k] - lo[k]) / panels as f64;
            let mut ax = Vec::with_capacity(panels * self.order);
            let mut aw = Vec::with_capacity(panels * self.order);
            for j in 0..panels {
                let a = lo[k] + h * j as f64;
                for (xi, wi) in x.iter().zip(&w) {
                    ax.push(a + 0.5 * h * (xi + 1.0));
                    aw.push(0.5 * h * wi);
                }
            }
            axes_x.push(ax);
            axes_w.push(aw);
        }
        let points = tensor(&axes_x);
        let weights = tensor(&axes_w)
            .into_iter()
            .map(|ws| ws.iter().product())
            .collect();
        Ok((points, weights))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceEntry {
    pub n: u32,
    /// `max_grid || sigma_n - sigma ||` (operator norm).
    pub sigma_sup_discrepancy: f64,
    /// Quadrature estimate of `int_K |F_n - F|`.
    pub drift_l1_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub entries: Vec<ConvergenceEntry>,
    pub sigma_non_increasing: bool,
    pub drift_non_increasing: bool,
    pub quadrature_tolerance: f64,
    pub monotone_tolerance: f64,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    pub order: usize,
    pub l1_quadrature: BoxQuadrature,
    /// Allowed increase between consecutive entries, relative to the larger one.
    pub relative_slack: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            l1_quadrature: BoxQuadrature::default(),
            relative_slack: 1e-3,
        }
    }
}

/// Tracks `sigma_n -> sigma` uniformly on the grid and `F_n -> F` in `L^1(K)`
/// over an increasing family of mollification indices.
pub fn mollifier_convergence_report(
    model: &CoefficientModel,
    indices: &[u32],
    grid: &PhaseGrid,
    compact: &CompactSet,
    domain: &CylindricalDomain,
    options: &ConvergenceOptions,
) -> Result<ConvergenceReport> {
    if indices.is_empty() || indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("indices", "must be a non-empty increasing sequence"));
    }
    for (q, p) in &grid.points {
        if !compact.contains(domain, q, p) {
            let mut point = q.clone();
            point.extend_from_slice(p);
            return Err(Error::param("grid", format!("point {point:?} lies outside the compact set")));
        }
    }
    let d = model.dim();
    let (ql, qh, pl, ph) = compact.bounding_box(domain);
    let lo: Vec<f64> = ql.iter().chain(&pl).copied().collect();
    let hi: Vec<f64> = qh.iter().chain(&ph).copied().collect();
    let (nodes, node_w) = options.l1_quadrature.rule(&lo, &hi)?;
    let inside: Vec<bool> = nodes
        .iter()
        .map(|x| compact.contains(domain, &x[..d], &x[d..]))
        .collect();
    let base_sigma = grid
        .points
        .iter()
        .map(|(q, p)| model.eval_checked(q, p).map(|(_, s)| s))
        .collect::<Result<Vec<_>>>()?;
    let base_drift = nodes
        .iter()
        .zip(&inside)
        .map(|(x, &ins)| {
            if ins {
                model.eval_checked(&x[..d], &x[d..]).map(|(f, _)| f)
            } else {
                Ok(Vec::new())
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut entries = Vec::with_capacity(indices.len());
    let mut qtol: f64 = 0.0;
    for &n in indices {
        let kernel = MollifierKernel::new(n, options.order)?;
        qtol = qtol.max(kernel.quadrature_tolerance);
        let mollified = mollify(model, &kernel)?;
        let mut sup: f64 = 0.0;
        for ((q, p), s0) in grid.points.iter().zip(&base_sigma) {
            let (_, s) = mollified.eval_checked(q, p)?;
            let diff: Vec<f64> = s.iter().zip(s0).map(|(a, b)| a - b).collect();
            sup = sup.max(operator_norm(&diff, d));
        }
        let mut l1 = CompensatedSum::new();
        for ((x, w), (ins, f0)) in nodes.iter().zip(&node_w).zip(inside.iter().zip(&base_drift)) {
            if !ins {
                continue;
            }
            let (f, _) = mollified.eval_checked(&x[..d], &x[d..])?;
            let diff: Vec<f64> = f.iter().zip(f0).map(|(a, b)| a - b).collect();
            l1.add(w * norm(&diff));
        }
        entries.push(ConvergenceEntry {
            n,
            sigma_sup_discrepancy: sup,
            drift_l1_discrepancy: l1.value(),
        });
    }

    let abs_tol = 10.0 * qtol + 1e-12;
    let monotone = |get: &dyn Fn(&ConvergenceEntry) -> f64| -> (bool, f64, Vec<Vec<f64>>) {
        let mut worst = f64::INFINITY;
        let mut witness = Vec::new();
        for w in entries.windows(2) {
            let (a, b) = (get(&w[0]), get(&w[1]));
            let slack = a - b + abs_tol + options.relative_slack * a.max(b);
            if slack < worst {
                worst = slack;
                witness = vec![vec![w[0].n as f64, a], vec![w[1].n as f64, b]];
            }
        }
        if entries.len() < 2 {
            worst = 0.0;
        }
        (worst >= 0.0, worst, witness)
    };
    let (sigma_ok, sigma_slack, sigma_w) = monotone(&|e| e.sigma_sup_discrepancy);
    let (drift_ok, drift_slack, drift_w) = monotone(&|e| e.drift_l1_discrepancy);
    Ok(ConvergenceReport {
        checks: vec![
            CheckResult {
                check: "sigma-sup-non-increasing".into(),
                worst_slack: sigma_slack,
                witness: sigma_w,
                passed: sigma_ok,
            },
            CheckResult {
                check: "drift-l1-non-increasing".into(),
                worst_slack: drift_slack,
                witness: drift_w,
                passed: drift_ok,
            },
        ],
        entries,
        sigma_non_increasing: sigma_ok,
        drift_non_increasing: drift_ok,
        quadrature_tolerance: qtol,
        monotone_tolerance: abs_tol,
    })
}
