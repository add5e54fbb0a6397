//! Bounded Lyapunov function for bounded position domains:
//! `phi(q, p) = beta - (q . p / |p|) g(|p|)`, `phi(q, 0) = beta`, with
//! `beta = 1 + sup_O |q|`, so that `1 <= phi <= 2 beta - 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generator_value, TestFunction};
use crate::error::{Error, Result};
use crate::model::state::linspace;
use crate::model::{CoefficientModel, CylindricalDomain};
use crate::numeric::{dot, norm};

/// `g` and its first two derivatives: `g(r) = r` on `[0, 1/2)`, `g = 1` on
/// `[1, inf)`, quintic Hermite interpolant on `[1/2, 1]` matching values and
/// two derivatives at both ends. With `t = 2r - 1`,
/// `g = 1/2 + t/2 + 2t^3 - 7t^4/2 + 3t^5/2`.
pub fn bridge(r: f64) -> (f64, f64, f64) {
    if r < 0.5 {
        (r, 1.0, 0.0)
    } else if r >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let t = 2.0 * r - 1.0;
        let g = 0.5 + 0.5 * t + 2.0 * t.powi(3) - 3.5 * t.powi(4) + 1.5 * t.powi(5);
        let g1 = 0.5 + 6.0 * t * t - 14.0 * t.powi(3) + 7.5 * t.powi(4);
        let g2 = 12.0 * t - 42.0 * t * t + 30.0 * t.powi(3);
        (g, 2.0 * g1, 4.0 * g2)
    }
}

/// `h(r) = g(r) / r` and two derivatives; `h = 1` near zero.
fn h_and_derivatives(r: f64) -> (f64, f64, f64) {
    if r < 0.5 {
        return (1.0, 0.0, 0.0);
    }
    let (g, g1, g2) = bridge(r);
    let h = g / r;
    let h1 = g1 / r - g / (r * r);
    let h2 = g2 / r - 2.0 * g1 / (r * r) + 2.0 * g / (r * r * r);
    (h, h1, h2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedOptions {
    /// Position grid nodes per axis inside `O`.
    pub q_grid: usize,
    pub p_scan_max: f64,
    /// Radii per shell scan, geometrically spaced in `[p_a, p_scan_max]`.
    pub shell_radii: usize,
    /// Momentum nodes per axis for the `D_lambda` grid.
    pub d_lambda_grid: usize,
    /// Multiplicative safety margin on `c_lambda`.
    pub margin: f64,
}

impl Default for BoundedOptions {
    fn default() -> Self {
        Self {
            q_grid: 64,
            p_scan_max: 1024.0,
            shell_radii: 48,
            d_lambda_grid: 129,
            margin: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellReport {
    /// `(candidate p_a, max over its shell of L phi + |p| / 2)`.
    pub candidates: Vec<(f64, f64)>,
    pub accepted: Option<f64>,
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedDomainLyapunov {
    pub dim: usize,
    pub beta: f64,
    pub p_a: f64,
    pub lambda: f64,
    pub p0: f64,
    pub c_lambda: f64,
    pub shell: ShellReport,
}

impl BoundedDomainLyapunov {
    /// Bare function for a given `beta`, with no construction data.
    pub fn function(dim: usize, beta: f64) -> Self {
        Self {
            dim,
            beta,
            p_a: 0.0,
            lambda: 0.0,
            p0: 0.0,
            c_lambda: 0.0,
            shell: ShellReport {
                candidates: vec![],
                accepted: None,
                grid_points: 0,
            },
        }
    }

    /// `p0(lambda) = 1 + p_a + 4 lambda beta`.
    pub fn p0_for(&self, lambda: f64) -> f64 {
        1.0 + self.p_a + 4.0 * lambda * self.beta
    }

    /// Membership in `D_lambda = {|p| <= p0}` (the `q` constraint is `O`).
    pub fn in_d_lambda(&self, p: &[f64]) -> bool {
        norm(p) <= self.p0
    }
}

impl TestFunction for BoundedDomainLyapunov {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, q: &[f64], p: &[f64]) -> f64 {
        let r = norm(p);
        if r == 0.0 {
            return self.beta;
        }
        let (h, _, _) = h_and_derivatives(r);
        self.beta - dot(q, p) * h
    }

    fn grad_q(&self, _q: &[f64], p: &[f64], out: &mut [f64]) {
        let (h, _, _) = h_and_derivatives(norm(p));
        for (o, x) in out.iter_mut().zip(p) {
            *o = -x * h;
        }
    }

    fn grad_p(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let r = norm(p);
        let (h, h1, _) = h_and_derivatives(r);
        let qp = dot(q, p);
        for i in 0..p.len() {
            let radial = if r > 0.0 { h1 * p[i] / r } else { 0.0 };
            out[i] = -q[i] * h - qp * radial;
        }
    }

    fn hess_p(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let d = p.len();
        let r = norm(p);
        let (_, h1, h2) = h_and_derivatives(r);
        if r < 0.5 {
            out.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        let qp = dot(q, p);
        for i in 0..d {
            for j in 0..d {
                let id = if i == j { 1.0 } else { 0.0 };
                let cross = h1 / r * (q[i] * p[j] + p[i] * q[j]);
                let radial = h2 * p[i] * p[j] / (r * r) + h1 * (id / r - p[i] * p[j] / (r * r * r));
                out[i * d + j] = -(cross + qp * radial);
            }
        }
    }

    fn name(&self) -> String {
        format!("bounded-phi(beta={})", self.beta)
    }
}

/// Unit momentum directions used by the shell scan.
fn directions(d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[i] = s;
            out.push(v);
        }
    }
    if d > 1 && d <= 4 {
        let scale = 1.0 / (d as f64).sqrt();
        for mask in 0..(1u32 << d) {
            out.push((0..d).map(|i| if mask >> i & 1 == 1 { -scale } else { scale }).collect());
        }
    }
    out
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Shell points `{(q, r u) : q in q_grid, r in radii, u in directions}`.
pub fn shell_grid(q_grid: &[Vec<f64>], radii: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let d = q_grid.first().map_or(1, |q| q.len());
    let dirs = directions(d);
    let mut out = Vec::with_capacity(q_grid.len() * radii.len() * dirs.len());
    for q in q_grid {
        for &r in radii {
            for u in &dirs {
                out.push((q.clone(), u.iter().map(|x| r * x).collect()));
            }
        }
    }
    out
}

/// Builds `phi` on a bounded domain: `p_a` is the smallest value of the grid
/// `{1, 2, 4, ..., p_scan_max}` with `L phi <= -|p| / 2` on its shell, and
/// `c_lambda = margin * max_{D_lambda grid} (L phi + lambda phi)^+`.
pub fn bounded_lyapunov_build(
    domain: &CylindricalDomain,
    model: &CoefficientModel,
    lambda: f64,
    options: &BoundedOptions,
) -> Result<BoundedDomainLyapunov> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", "must be positive"));
    }
    let sup = domain
        .sup_norm()
        .ok_or_else(|| Error::param("domain", "the bounded construction needs a bounded region"))?;
    let d = domain.dim();
    if d != model.dim() {
        return Err(Error::param("domain", "dimension does not match the model"));
    }
    let beta = 1.0 + sup;
    let per_axis = options.q_grid.min((1e5f64).powf(1.0 / d as f64) as usize).max(2);
    let q_grid = domain.interior_grid(per_axis)?;
    let mut phi = BoundedDomainLyapunov::function(d, beta);

    let mut candidates = Vec::new();
    let mut accepted = None;
    let mut candidate = 1.0;
    let mut grid_points = 0;
    while candidate <= options.p_scan_max {
        let shell = shell_grid(&q_grid, &geometric(candidate, options.p_scan_max, options.shell_radii));
        grid_points += shell.len();
        let worst = shell
            .par_iter()
            .map(|(q, p)| generator_value(model, &phi, q, p) + 0.5 * norm(p))
            .reduce(|| f64::NEG_INFINITY, f64::max);
        candidates.push((candidate, worst));
        if worst <= 0.0 {
            accepted = Some(candidate);
            break;
        }
        candidate *= 2.0;
    }
    let report = ShellReport {
        candidates,
        accepted,
        grid_points,
    };
    let Some(p_a) = accepted else {
        return Err(Error::Construction(format!(
            "no p_a <= {} with L phi <= -|p|/2 on its shell; scan: {:?}",
            options.p_scan_max, report.candidates
        )));
    };
    phi.p_a = p_a;
    phi.lambda = lambda;
    phi.p0 = phi.p0_for(lambda);
    phi.shell = report;

    let p_axis = linspace(-phi.p0, phi.p0, options.d_lambda_grid);
    let p_per_axis: Vec<Vec<f64>> = vec![p_axis; d];
    let p_nodes: Vec<Vec<f64>> = crate::model::state::tensor(&p_per_axis)
        .into_iter()
        .filter(|p| norm(p) <= phi.p0)
        .collect();
    let worst = q_grid
        .par_iter()
        .map(|q| {
            p_nodes
                .iter()
                .map(|p| generator_value(model, &phi, q, p) + lambda * phi.value(q, p))
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    phi.c_lambda = options.margin * worst;
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::{fd_grad_p, fd_grad_q, fd_hess_p};
    use crate::model::catalog::ModelSpec;

    #[test]
    fn bridge_is_c2_at_the_gluing_points() {
        let (a, b) = (bridge(0.5), bridge(0.5 - 1e-15));
        assert!((a.0 - b.0).abs() < 1e-10 && (a.1 - b.1).abs() < 1e-10 && (a.2 - b.2).abs() < 1e-10);
        let below = bridge(1.0 - 1e-13);
        let at = bridge(1.0);
        assert!((below.0 - at.0).abs() < 1e-10);
        assert!((below.1 - at.1).abs() < 1e-10);
        assert!((below.2 - at.2).abs() < 1e-10);
    }

    #[test]
    fn bridge_is_monotone_and_bounded() {
        for i in 0..=1000 {
            let r = 0.5 + 0.5 * i as f64 / 1000.0;
            let (g, g1, _) = bridge(r);
            assert!(g1 >= 0.0 && g <= 1.0 + 1e-15 && g >= 0.5);
        }
    }

    #[test]
    fn closed_form_values() {
        let phi = BoundedDomainLyapunov::function(1, 2.0);
        assert_eq!(phi.value(&[0.3], &[0.0]), 2.0);
        assert_eq!(phi.value(&[0.0], &[5.0]), 2.0);
        assert_eq!(phi.value(&[0.5], &[2.0]), 1.5);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let phi = BoundedDomainLyapunov::function(2, 2.5);
        let f = |q: &[f64], p: &[f64]| phi.value(q, p);
        for (q, p) in [
            (vec![0.3, -0.4], vec![0.2, 0.1]),
            (vec![0.7, 0.2], vec![0.5, 0.6]),
            (vec![-0.9, 0.1], vec![-0.3, 0.85]),
            (vec![0.2, 0.2], vec![3.0, -1.0]),
        ] {
            let (mut a, mut b) = (vec![0.0; 2], vec![0.0; 2]);
            phi.grad_q(&q, &p, &mut a);
            fd_grad_q(&f, &q, &p, &mut b);
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-7), "{a:?} {b:?}");
            phi.grad_p(&q, &p, &mut a);
            fd_grad_p(&f, &q, &p, &mut b);
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-7), "{a:?} {b:?}");
            let (mut h, mut hf) = (vec![0.0; 4], vec![0.0; 4]);
            phi.hess_p(&q, &p, &mut h);
            fd_hess_p(&f, &q, &p, &mut hf);
            assert!(h.iter().zip(&hf).all(|(x, y)| (x - y).abs() < 1e-5), "{h:?} {hf:?}");
        }
    }

    #[test]
    fn double_well_build_on_unit_interval() {
        let m = ModelSpec::DoubleWellLangevin {
            h: 1.0,
            q0: 1.0,
            gamma: 1.0,
            kt: 0.3,
        }
        .build()
        .unwrap();
        let dom = CylindricalDomain::interval(-1.0, 1.0).unwrap();
        let phi = bounded_lyapunov_build(&dom, &m, 1.0, &BoundedOptions::default()).unwrap();
        assert_eq!(phi.beta, 2.0);
        assert_eq!(phi.p_a, 1.0);
        assert_eq!(phi.p0, 1.0 + 1.0 + 8.0);
        assert!(phi.c_lambda > 0.0);
    }

    #[test]
    fn unbounded_domain_rejected() {
        let m = ModelSpec::FreeTransport { dim: 1, sigma: 1.0 }.build().unwrap();
        assert!(bounded_lyapunov_build(&CylindricalDomain::full_space(1), &m, 1.0, &BoundedOptions::default()).is_err());
    }
}
