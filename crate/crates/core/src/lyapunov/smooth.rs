use serde::{Deserialize, Serialize};

use super::TestFunction;

/// Smooth test functions with closed-form derivatives. `S_q = sum_i q_i`,
/// `S_p = sum_i p_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SmoothFunction {
    Constant { c: f64 },
    /// `|p|^2 / 2`.
    KineticEnergy,
    /// `q . p`.
    CrossTerm,
    /// `a |q|^2 / 2 + b q . p + c |p|^2 / 2`.
    Quadratic { a: f64, b: f64, c: f64 },
    /// `exp(u S_q + v S_p)`.
    ExpLinear { u: f64, v: f64 },
    /// `sin(k S_q) cos(k S_p)`.
    TrigProduct { k: f64 },
    /// `exp(-(|q|^2 + |p|^2) / (2 s^2))`.
    Gaussian { s: f64 },
    /// `|q|^2 / 2 + sum_i log cosh p_i`.
    LogCosh,
}

impl SmoothFunction {
    pub fn bind(&self, dim: usize) -> SmoothTest {
        SmoothTest { f: self.clone(), dim }
    }
}

/// A [`SmoothFunction`] at a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothTest {
    pub f: SmoothFunction,
    pub dim: usize,
}

fn sum(x: &[f64]) -> f64 {
    x.iter().sum()
}

fn sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

impl TestFunction for SmoothTest {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, q: &[f64], p: &[f64]) -> f64 {
        match self.f {
            SmoothFunction::Constant { c } => c,
            SmoothFunction::KineticEnergy => 0.5 * sq(p),
            SmoothFunction::CrossTerm => q.iter().zip(p).map(|(a, b)| a * b).sum(),
            SmoothFunction::Quadratic { a, b, c } => {
                0.5 * a * sq(q) + b * q.iter().zip(p).map(|(x, y)| x * y).sum::<f64>() + 0.5 * c * sq(p)
            }
            SmoothFunction::ExpLinear { u, v } => (u * sum(q) + v * sum(p)).exp(),
            SmoothFunction::TrigProduct { k } => (k * sum(q)).sin() * (k * sum(p)).cos(),
            SmoothFunction::Gaussian { s } => (-(sq(q) + sq(p)) / (2.0 * s * s)).exp(),
            SmoothFunction::LogCosh => 0.5 * sq(q) + p.iter().map(|x| x.cosh().ln()).sum::<f64>(),
        }
    }

    fn grad_q(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        for i in 0..q.len() {
            out[i] = match self.f {
                SmoothFunction::Constant { .. } | SmoothFunction::KineticEnergy => 0.0,
                SmoothFunction::CrossTerm => p[i],
                SmoothFunction::Quadratic { a, b, .. } => a * q[i] + b * p[i],
                SmoothFunction::ExpLinear { u, .. } => u * self.value(q, p),
                SmoothFunction::TrigProduct { k } => k * (k * sum(q)).cos() * (k * sum(p)).cos(),
                SmoothFunction::Gaussian { s } => -q[i] / (s * s) * self.value(q, p),
                SmoothFunction::LogCosh => q[i],
            };
        }
    }

    fn grad_p(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        for i in 0..p.len() {
            out[i] = match self.f {
                SmoothFunction::Constant { .. } => 0.0,
                SmoothFunction::KineticEnergy => p[i],
                SmoothFunction::CrossTerm => q[i],
                SmoothFunction::Quadratic { b, c, .. } => b * q[i] + c * p[i],
                SmoothFunction::ExpLinear { v, .. } => v * self.value(q, p),
                SmoothFunction::TrigProduct { k } => -k * (k * sum(q)).sin() * (k * sum(p)).sin(),
                SmoothFunction::Gaussian { s } => -p[i] / (s * s) * self.value(q, p),
                SmoothFunction::LogCosh => p[i].tanh(),
            };
        }
    }

    fn hess_p(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let d = p.len();
        for i in 0..d {
            for j in 0..d {
                let diag = if i == j { 1.0 } else { 0.0 };
                out[i * d + j] = match self.f {
                    SmoothFunction::Constant { .. } | SmoothFunction::CrossTerm => 0.0,
                    SmoothFunction::KineticEnergy => diag,
                    SmoothFunction::Quadratic { c, .. } => c * diag,
                    SmoothFunction::ExpLinear { v, .. } => v * v * self.value(q, p),
                    SmoothFunction::TrigProduct { k } => -k * k * (k * sum(q)).sin() * (k * sum(p)).cos(),
                    SmoothFunction::Gaussian { s } => {
                        let s2 = s * s;
                        self.value(q, p) * (p[i] * p[j] / (s2 * s2) - diag / s2)
                    }
                    SmoothFunction::LogCosh => diag * (1.0 - p[i].tanh().powi(2)),
                };
            }
        }
    }

    fn name(&self) -> String {
        format!("{:?}", self.f)
    }
}
