//! The generator `L = p . grad_q + F . grad_p + (1/2) sigma sigma^T : Hess_p`,
//! the two explicit Lyapunov constructions, and grid verification of the
//! drift inequality `L phi <= -lambda phi + c 1_D`.

mod bounded;
mod hamiltonian;
mod smooth;

pub use bounded::{bounded_lyapunov_build, bridge, shell_grid, BoundedDomainLyapunov, BoundedOptions, ShellReport};
pub use hamiltonian::{
    check_drift_condition, delta_feasible, hamiltonian_lyapunov_build, DriftConditionReport,
    HamiltonianLyapunov, HamiltonianOptions, power_for, quadratic_constant,
};
pub use smooth::SmoothFunction;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientModel, CylindricalDomain, KineticState};
use crate::numeric::{dot, gram};

/// Relative finite-difference step; the step on coordinate `x` is `FD_STEP (1 + |x|)`.
pub const FD_STEP: f64 = 1e-4;
pub const ANALYTIC_TOLERANCE: f64 = 1e-8;
pub const FD_TOLERANCE: f64 = 1e-4;

/// A scalar function on phase space, `C^1` in `q` and `C^2` in `p`.
/// Hessians are written row-major.
pub trait TestFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, q: &[f64], p: &[f64]) -> f64;
    fn grad_q(&self, q: &[f64], p: &[f64], out: &mut [f64]);
    fn grad_p(&self, q: &[f64], p: &[f64], out: &mut [f64]);
    fn hess_p(&self, q: &[f64], p: &[f64], out: &mut [f64]);

    /// Whether the derivatives are closed-form.
    fn analytic(&self) -> bool {
        true
    }

    fn name(&self) -> String;
}

/// Wraps a scalar function and supplies central-difference derivatives.
pub struct FiniteDifference<F> {
    dim: usize,
    name: String,
    f: F,
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Send + Sync> FiniteDifference<F> {
    pub fn new(dim: usize, name: impl Into<String>, f: F) -> Self {
        Self {
            dim,
            name: name.into(),
            f,
        }
    }
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Send + Sync> TestFunction for FiniteDifference<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, q: &[f64], p: &[f64]) -> f64 {
        (self.f)(q, p)
    }
    fn grad_q(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        fd_grad_q(&self.f, q, p, out)
    }
    fn grad_p(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        fd_grad_p(&self.f, q, p, out)
    }
    fn hess_p(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        fd_hess_p(&self.f, q, p, out)
    }
    fn analytic(&self) -> bool {
        false
    }
    fn name(&self) -> String {
        format!("fd({})", self.name)
    }
}

fn fd_step(x: f64) -> f64 {
    FD_STEP * (1.0 + x.abs())
}

pub fn fd_grad_q(f: &dyn Fn(&[f64], &[f64]) -> f64, q: &[f64], p: &[f64], out: &mut [f64]) {
    let mut x = q.to_vec();
    for i in 0..q.len() {
        let h = fd_step(q[i]);
        x[i] = q[i] + h;
        let fp = f(&x, p);
        x[i] = q[i] - h;
        let fm = f(&x, p);
        x[i] = q[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
}

pub fn fd_grad_p(f: &dyn Fn(&[f64], &[f64]) -> f64, q: &[f64], p: &[f64], out: &mut [f64]) {
    fd_grad_q(&|a: &[f64], b: &[f64]| f(b, a), p, q, out)
}

pub fn fd_hess_p(f: &dyn Fn(&[f64], &[f64]) -> f64, q: &[f64], p: &[f64], out: &mut [f64]) {
    let d = p.len();
    let mut x = p.to_vec();
    let f0 = f(q, p);
    for i in 0..d {
        let hi = fd_step(p[i]);
        x[i] = p[i] + hi;
        let fp = f(q, &x);
        x[i] = p[i] - hi;
        let fm = f(q, &x);
        x[i] = p[i];
        out[i * d + i] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = fd_step(p[j]);
            let mut corner = |si: f64, sj: f64| {
                x[i] = p[i] + si * hi;
                x[j] = p[j] + sj * hj;
                let v = f(q, &x);
                x[i] = p[i];
                x[j] = p[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * hi * hj);
            out[i * d + j] = v;
            out[j * d + i] = v;
        }
    }
}

/// The three terms of `L f` at `(q, p)`: transport `p . grad_q f`, drift
/// `F . grad_p f` and diffusion `(1/2) sigma sigma^T : Hess_p f`.
pub fn generator_terms(model: &CoefficientModel, f: &dyn TestFunction, q: &[f64], p: &[f64]) -> [f64; 3] {
    let d = q.len();
    let mut gq = vec![0.0; d];
    let mut gp = vec![0.0; d];
    let mut h = vec![0.0; d * d];
    let mut drift = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    f.grad_q(q, p, &mut gq);
    f.grad_p(q, p, &mut gp);
    f.hess_p(q, p, &mut h);
    model.drift(q, p, &mut drift);
    model.diffusion(q, p, &mut sigma);
    let a = gram(&sigma, d);
    let diffusion = 0.5 * a.iter().zip(&h).map(|(x, y)| x * y).sum::<f64>();
    [dot(p, &gq), dot(&drift, &gp), diffusion]
}

/// `L f (q, p)` without domain checks.
pub fn generator_value(model: &CoefficientModel, f: &dyn TestFunction, q: &[f64], p: &[f64]) -> f64 {
    generator_terms(model, f, q, p).iter().sum()
}

/// `L f (x)` for `x` in the interior of `D`.
pub fn generator_apply(
    model: &CoefficientModel,
    f: &dyn TestFunction,
    x: &KineticState,
    domain: &CylindricalDomain,
) -> Result<f64> {
    if x.dim() != model.dim() || f.dim() != model.dim() {
        return Err(Error::param("x", "dimension does not match the model"));
    }
    if !domain.contains(&x.q) {
        return Err(Error::OutsideDomain { point: x.phase_point() });
    }
    let v = generator_value(model, f, &x.q, &x.p);
    if !v.is_finite() {
        return Err(Error::Evaluation {
            what: "generator".into(),
            point: x.phase_point(),
        });
    }
    Ok(v)
}

/// `L f` computed from central-difference derivatives of `f.value` only.
pub fn generator_fd(model: &CoefficientModel, f: &dyn TestFunction, q: &[f64], p: &[f64]) -> f64 {
    let g = |a: &[f64], b: &[f64]| f.value(a, b);
    let fd = FiniteDifference::new(f.dim(), f.name(), g);
    generator_value(model, &fd, q, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// `(q, p)` concatenated.
    pub x: Vec<f64>,
    pub phi: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Pointwise tolerance is `relative * (1 + |phi|)`.
    pub relative: f64,
    pub analytic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub inequality: String,
    pub grid_spec: String,
    pub grid_size: usize,
    /// The three points with the largest `slack / (1 + |phi|)`.
    pub worst_slacks: Vec<Witness>,
    pub passed: bool,
    pub tolerances: Tolerances,
}

/// Checks `s(x) = L phi(x) + lambda phi(x) - c 1_{D_set}(x) <= tol(x)` on `grid`.
pub fn verify_drift_inequality(
    phi: &dyn TestFunction,
    model: &CoefficientModel,
    lambda: f64,
    d_set: &(dyn Fn(&[f64], &[f64]) -> bool + Sync),
    c_const: f64,
    grid: &[(Vec<f64>, Vec<f64>)],
    domain: &CylindricalDomain,
    grid_spec: &str,
) -> Result<DriftReport> {
    if let Some((q, p)) = grid.iter().find(|(q, _)| !domain.contains(q)) {
        let mut point = q.clone();
        point.extend_from_slice(p);
        return Err(Error::OutsideDomain { point });
    }
    let relative = if phi.analytic() { ANALYTIC_TOLERANCE } else { FD_TOLERANCE };
    let slacks: Vec<Witness> = grid
        .par_iter()
        .map(|(q, p)| {
            let v = phi.value(q, p);
            let l = generator_value(model, phi, q, p);
            let ind = if d_set(q, p) { 1.0 } else { 0.0 };
            let mut x = q.clone();
            x.extend_from_slice(p);
            if !(v.is_finite() && l.is_finite()) {
                return Err(Error::Evaluation {
                    what: "drift inequality".into(),
                    point: x,
                });
            }
            Ok(Witness {
                x,
                phi: v,
                slack: l + lambda * v - c_const * ind,
            })
        })
        .collect::<Result<_>>()?;
    let passed = slacks.iter().all(|w| w.slack <= relative * (1.0 + w.phi.abs()));
    Ok(DriftReport {
        inequality: format!("L phi + {lambda} phi - {c_const} 1_D <= 0 for {}", phi.name()),
        grid_spec: grid_spec.to_string(),
        grid_size: grid.len(),
        worst_slacks: worst_three(slacks),
        passed,
        tolerances: Tolerances {
            relative,
            analytic: phi.analytic(),
        },
    })
}

fn worst_three(mut slacks: Vec<Witness>) -> Vec<Witness> {
    let key = |w: &Witness| w.slack / (1.0 + w.phi.abs());
    // Stable sort keeps grid order among ties.
    slacks.sort_by(|a, b| key(b).total_cmp(&key(a)));
    slacks.truncate(3);
    slacks
}
