//! Polynomial Lyapunov functions for Langevin dynamics in unbounded domains:
//! `H = U + |p|^2/2 + (kappa/2) q.p + (kappa^2/4) |q|^2` with `kappa = gamma - delta`,
//! `H^ = 1 + H` and `phi = H^^n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generator_value, TestFunction};
use crate::error::{Error, Result};
use crate::model::state::{linspace, tensor};
use crate::model::{CoefficientModel, LangevinModel, Perturbation, Potential};
use crate::numeric::dot;

/// Largest `delta in (0, gamma)` with `delta (gamma - delta) / 2 <= alpha`,
/// `2 delta / (gamma - delta) <= alpha` and `beta^2 <= gamma (gamma - delta)`.
pub fn delta_feasible(gamma: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma", "must be positive"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha_drift", "must be positive"));
    }
    if !(beta >= 0.0 && beta < gamma) {
        return Err(Error::param("beta_drift", "must satisfy 0 <= beta < gamma"));
    }
    let upper = (alpha * gamma / (2.0 + alpha)).min(gamma - beta * beta / gamma);
    // delta (gamma - delta) <= 2 alpha fails only strictly between the roots.
    let disc = gamma * gamma - 8.0 * alpha;
    let delta = if disc <= 0.0 {
        upper
    } else {
        let (lo, hi) = ((gamma - disc.sqrt()) / 2.0, (gamma + disc.sqrt()) / 2.0);
        if upper >= hi {
            upper
        } else {
            upper.min(lo)
        }
    };
    if !(delta > 0.0 && delta < gamma) {
        return Err(Error::Construction(format!(
            "no feasible delta for gamma = {gamma}, alpha = {alpha}, beta = {beta}"
        )));
    }
    Ok(delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConditionReport {
    pub alpha_drift: f64,
    pub beta_drift: f64,
    pub grid_size: usize,
    /// Smallest `(grad U + l).q - alpha (|q|^2 + U) - |l|^2 / beta^2`.
    pub worst_slack: f64,
    pub witness: Vec<f64>,
    pub passed: bool,
    /// `(q, slack)` for every grid point.
    pub slacks: Vec<(Vec<f64>, f64)>,
}

/// Pointwise check of `(grad U + l).q >= alpha (|q|^2 + U) + |l|^2 / beta^2`.
/// With `beta = 0` the `l` term is dropped, which requires `l = 0`.
pub fn check_drift_condition(
    potential: &Potential,
    ell: &Perturbation,
    alpha: f64,
    beta: f64,
    grid: &[Vec<f64>],
) -> Result<DriftConditionReport> {
    if beta == 0.0 && !ell.is_zero() {
        return Err(Error::param("beta_drift", "beta = 0 is only admissible when l = 0"));
    }
    if grid.is_empty() {
        return Err(Error::param("grid", "must contain at least one point"));
    }
    let slacks: Vec<(Vec<f64>, f64)> = grid
        .iter()
        .map(|q| {
            let d = q.len();
            let mut g = vec![0.0; d];
            let mut l = vec![0.0; d];
            potential.gradient(q, &mut g);
            ell.eval(q, &mut l);
            let lhs: f64 = g.iter().zip(&l).zip(q).map(|((a, b), x)| (a + b) * x).sum();
            let u = potential.value(q);
            let l2 = dot(&l, &l);
            let penalty = if beta == 0.0 { 0.0 } else { l2 / (beta * beta) };
            (q.clone(), lhs - alpha * (dot(q, q) + u) - penalty)
        })
        .collect();
    let (witness, worst) = slacks
        .iter()
        .fold((slacks[0].0.clone(), f64::INFINITY), |acc, (q, s)| {
            if *s < acc.1 {
                (q.clone(), *s)
            } else {
                acc
            }
        });
    let scale = grid.iter().map(|q| dot(q, q) + potential.value(q)).fold(1.0, f64::max);
    Ok(DriftConditionReport {
        alpha_drift: alpha,
        beta_drift: beta,
        grid_size: grid.len(),
        worst_slack: worst,
        witness,
        passed: worst >= -1e-12 * scale,
        slacks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianOptions {
    /// The drift condition is checked on `[-r, r]^d`.
    pub drift_grid_radius: f64,
    pub drift_grid_points: usize,
    /// Nodes per axis of the grid over the bounding box of `B_n`.
    pub b_grid_points: usize,
    pub margin: f64,
}

impl Default for HamiltonianOptions {
    fn default() -> Self {
        Self {
            drift_grid_radius: 10.0,
            drift_grid_points: 201,
            b_grid_points: 201,
            margin: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianLyapunov {
    pub dim: usize,
    pub potential: Potential,
    pub ell: Perturbation,
    pub gamma: f64,
    pub kt: f64,
    /// `epsilon = gamma kT`.
    pub epsilon: f64,
    pub alpha_drift: f64,
    pub beta_drift: f64,
    pub delta: f64,
    pub n: u32,
    /// `|p + (kappa/2) q|^2 <= c H^`.
    pub c: f64,
    pub lambda: f64,
    /// `B_n = {H^ <= r_n}`.
    pub r_n: f64,
    pub c_n: f64,
    pub drift_check: DriftConditionReport,
}

impl HamiltonianLyapunov {
    /// The bare function `H^^n` with the given `delta`.
    pub fn function(l: &LangevinModel, delta: f64, n: u32) -> Self {
        Self {
            dim: l.dim,
            potential: l.potential,
            ell: l.ell,
            gamma: l.gamma,
            kt: l.kt,
            epsilon: l.epsilon(),
            alpha_drift: 0.0,
            beta_drift: 0.0,
            delta,
            n,
            c: quadratic_constant(l.gamma - delta),
            lambda: 0.0,
            r_n: 0.0,
            c_n: 0.0,
            drift_check: DriftConditionReport {
                alpha_drift: 0.0,
                beta_drift: 0.0,
                grid_size: 0,
                worst_slack: 0.0,
                witness: vec![],
                passed: true,
                slacks: vec![],
            },
        }
    }

    pub fn kappa(&self) -> f64 {
        self.gamma - self.delta
    }

    pub fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        let k = self.kappa();
        self.potential.value(q) + 0.5 * dot(p, p) + 0.5 * k * dot(q, p) + 0.25 * k * k * dot(q, q)
    }

    /// `H^ = 1 + H >= 1`.
    pub fn h_hat(&self, q: &[f64], p: &[f64]) -> f64 {
        1.0 + self.hamiltonian(q, p)
    }

    pub fn in_b_n(&self, q: &[f64], p: &[f64]) -> bool {
        self.h_hat(q, p) <= self.r_n
    }

    /// `n delta / 2`, the rate of the sharper bound outside `B_n`.
    pub fn rate(&self) -> f64 {
        self.n as f64 * self.delta / 2.0
    }

    fn grad_p_h(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let k = self.kappa();
        for i in 0..p.len() {
            out[i] = p[i] + 0.5 * k * q[i];
        }
    }
}

impl TestFunction for HamiltonianLyapunov {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, q: &[f64], p: &[f64]) -> f64 {
        self.h_hat(q, p).powi(self.n as i32)
    }

    fn grad_q(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let k = self.kappa();
        let n = self.n as f64;
        let scale = n * self.h_hat(q, p).powi(self.n as i32 - 1);
        self.potential.gradient(q, out);
        for i in 0..q.len() {
            out[i] = scale * (out[i] + 0.5 * k * p[i] + 0.5 * k * k * q[i]);
        }
    }

    fn grad_p(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let n = self.n as f64;
        let scale = n * self.h_hat(q, p).powi(self.n as i32 - 1);
        self.grad_p_h(q, p, out);
        out.iter_mut().for_each(|x| *x *= scale);
    }

    fn hess_p(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let d = p.len();
        let n = self.n as f64;
        let hh = self.h_hat(q, p);
        let a = n * hh.powi(self.n as i32 - 1);
        let b = if self.n >= 2 {
            n * (n - 1.0) * hh.powi(self.n as i32 - 2)
        } else {
            0.0
        };
        let mut g = vec![0.0; d];
        self.grad_p_h(q, p, &mut g);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = b * g[i] * g[j] + if i == j { a } else { 0.0 };
            }
        }
    }

    fn name(&self) -> String {
        format!("H^^{}(delta={})", self.n, self.delta)
    }
}

/// Largest generalized eigenvalue of `|p + (kappa/2) q|^2` against the
/// quadratic part of `H`, per coordinate pair `(q_i, p_i)`. Since `U >= 0`
/// this bounds `|p + (kappa/2) q|^2 / H^` everywhere.
pub fn quadratic_constant(kappa: f64) -> f64 {
    let a = [kappa * kappa / 4.0, kappa / 2.0, 1.0];
    let b = [kappa * kappa / 4.0, kappa / 4.0, 0.5];
    // det(A - t B) = c2 t^2 + c1 t + c0
    let c2 = b[0] * b[2] - b[1] * b[1];
    let c1 = -(a[0] * b[2] + a[2] * b[0] - 2.0 * a[1] * b[1]);
    let c0 = a[0] * a[2] - a[1] * a[1];
    let disc = (c1 * c1 - 4.0 * c2 * c0).max(0.0).sqrt();
    ((-c1 + disc) / (2.0 * c2)).max((-c1 - disc) / (2.0 * c2))
}

/// Smallest `n >= 1` with `n delta / 2 >= lambda`.
pub fn power_for(lambda: f64, delta: f64) -> u32 {
    let mut n = (2.0 * lambda / delta).ceil().max(1.0) as u32;
    while n > 1 && (n - 1) as f64 * delta / 2.0 >= lambda {
        n -= 1;
    }
    while (n as f64) * delta / 2.0 < lambda {
        n += 1;
    }
    n
}

fn grid_axis(d: usize, radius: f64, points: usize) -> Vec<Vec<f64>> {
    let per_axis = if d == 1 {
        points
    } else {
        points.min((2e5f64).powf(1.0 / d as f64) as usize).max(3)
    };
    tensor(&vec![linspace(-radius, radius, per_axis); d])
}

/// Assembles `phi_lambda = H^^{n_lambda}` for a Langevin model.
pub fn hamiltonian_lyapunov_build(
    model: &CoefficientModel,
    alpha_drift: f64,
    beta_drift: f64,
    lambda: f64,
    options: &HamiltonianOptions,
) -> Result<HamiltonianLyapunov> {
    let l = model
        .langevin()
        .ok_or_else(|| Error::param("model", "the Hamiltonian construction needs a Langevin model"))?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", "must be positive"));
    }
    let d = l.dim;
    let drift_grid = grid_axis(d, options.drift_grid_radius, options.drift_grid_points);
    let drift_check = check_drift_condition(&l.potential, &l.ell, alpha_drift, beta_drift, &drift_grid)?;
    if !drift_check.passed {
        return Err(Error::Construction(format!(
            "drift condition fails: slack {} at q = {:?}",
            drift_check.worst_slack, drift_check.witness
        )));
    }
    let delta = delta_feasible(l.gamma, alpha_drift, beta_drift)?;
    let n = power_for(lambda, delta);
    let mut phi = HamiltonianLyapunov::function(l, delta, n);
    phi.alpha_drift = alpha_drift;
    phi.beta_drift = beta_drift;
    phi.lambda = lambda;
    phi.drift_check = drift_check;
    let eps = phi.epsilon;
    phi.r_n = 2.0 * (delta + d as f64 * eps + phi.c * eps * (n as f64 - 1.0)) / delta;

    // H^ >= 1 + |p|^2/4 + |p + kappa q|^2/4 bounds B_n inside a box.
    let root = (phi.r_n - 1.0).max(0.0).sqrt();
    let p_max = 2.0 * root;
    let q_max = 4.0 * root / phi.kappa();
    let q_axis = linspace(-q_max, q_max, options.b_grid_points);
    let p_axis = linspace(-p_max, p_max, options.b_grid_points);
    let per_axis = |axis: &Vec<f64>| -> Vec<Vec<f64>> {
        if d == 1 {
            axis.iter().map(|x| vec![*x]).collect()
        } else {
            grid_axis(d, axis[axis.len() - 1], options.b_grid_points)
        }
    };
    let qs = per_axis(&q_axis);
    let ps = per_axis(&p_axis);
    let worst = qs
        .par_iter()
        .map(|q| {
            ps.iter()
                .filter(|p| phi.in_b_n(q, p))
                .map(|p| generator_value(model, &phi, q, p) + lambda * phi.value(q, p))
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    phi.c_n = options.margin * worst;
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::generator_fd;
    use crate::model::catalog::ModelSpec;

    #[test]
    fn delta_examples() {
        assert_eq!(delta_feasible(1.0, 10.0, 0.0).unwrap(), 5.0 / 6.0);
        assert_eq!(delta_feasible(1.0, 10.0, 0.5).unwrap(), 0.75);
        assert!(delta_feasible(1.0, 10.0, 1.0).is_err());
        let near = delta_feasible(1.0, 10.0, 1.0 - 1e-9).unwrap();
        assert!(near < 1e-8);
    }

    #[test]
    fn delta_satisfies_constraints() {
        for &(g, a, b) in &[(1.0, 0.5, 0.0), (3.0, 0.2, 1.0), (2.0, 0.4, 0.3), (1.0, 0.01, 0.5)] {
            let dl = delta_feasible(g, a, b).unwrap();
            assert!(dl * (g - dl) / 2.0 <= a * (1.0 + 1e-12));
            assert!(2.0 * dl / (g - dl) <= a * (1.0 + 1e-12));
            assert!(b * b <= g * (g - dl) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn quadratic_constant_is_two() {
        for k in [0.1, 0.8, 2.0, 7.5] {
            assert!((quadratic_constant(k) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn power_selection() {
        assert_eq!(power_for(0.05, 0.2), 1);
        assert_eq!(power_for(0.1, 0.2), 1);
        assert_eq!(power_for(1.0, 0.2), 10);
        let mut last = 1;
        for i in 1..200 {
            let n = power_for(i as f64 * 0.037, 0.3);
            assert!(n >= last);
            last = n;
        }
    }

    #[test]
    fn drift_condition_examples() {
        let grid: Vec<Vec<f64>> = linspace(-3.0, 3.0, 61).into_iter().map(|x| vec![x]).collect();
        let ok = check_drift_condition(&Potential::Harmonic { omega: 1.0 }, &Perturbation::Zero, 0.5, 0.0, &grid)
            .unwrap();
        assert!(ok.passed);
        for (q, s) in &ok.slacks {
            assert!((s - 0.25 * q[0] * q[0]).abs() < 1e-12);
        }
        let bad = check_drift_condition(&Potential::Flat, &Perturbation::Zero, 0.5, 0.0, &grid).unwrap();
        assert!(!bad.passed);
        assert!(check_drift_condition(&Potential::Flat, &Perturbation::Radial { b: 1.0 }, 0.5, 0.0, &grid).is_err());
    }

    #[test]
    fn harmonic_construction() {
        let m = ModelSpec::HarmonicLangevin {
            dim: 1,
            omega: 1.0,
            gamma: 1.0,
            kt: 0.5,
        }
        .build()
        .unwrap();
        let phi = hamiltonian_lyapunov_build(&m, 0.5, 0.0, 1.0, &HamiltonianOptions::default()).unwrap();
        assert_eq!(phi.delta, 0.2);
        assert_eq!(phi.n, 10);
        assert!((phi.r_n - 97.0).abs() < 1e-9);
        assert_eq!(phi.h_hat(&[0.0], &[0.0]), 1.0);
        // L H <= -delta H + d eps, and generator agrees with finite differences.
        let h1 = HamiltonianLyapunov::function(m.langevin().unwrap(), phi.delta, 1);
        for q in linspace(-10.0, 10.0, 21) {
            for p in linspace(-10.0, 10.0, 21) {
                let (q, p) = ([q], [p]);
                let l = generator_value(&m, &h1, &q, &p);
                assert!(l <= -phi.delta * h1.hamiltonian(&q, &p) + 0.5 + 1e-9);
                let fd = generator_fd(&m, &h1, &q, &p);
                assert!((l - fd).abs() <= 1e-5 * (1.0 + l.abs()));
            }
        }
    }
}
