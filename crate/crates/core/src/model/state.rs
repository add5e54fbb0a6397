use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A phase-space point `(q, p)` with its clock time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl KineticState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        Self::at_time(q, p, 0.0)
    }

    pub fn at_time(q: Vec<f64>, p: Vec<f64>, t: f64) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::param("q", "dimension must be at least 1"));
        }
        if q.len() != p.len() {
            return Err(Error::param(
                "p",
                format!("dimension {} does not match q dimension {}", p.len(), q.len()),
            ));
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::param("t", "clock time must be finite and non-negative"));
        }
        if q.iter().chain(&p).any(|x| !x.is_finite()) {
            let mut point = q.clone();
            point.extend_from_slice(&p);
            return Err(Error::Evaluation {
                what: "state component".into(),
                point,
            });
        }
        Ok(Self { q, p, t })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// `(q, p)` concatenated.
    pub fn phase_point(&self) -> Vec<f64> {
        let mut x = self.q.clone();
        x.extend_from_slice(&self.p);
        x
    }

    /// Phase-space norm `|x| = |q| + |p|`.
    pub fn phase_norm(&self) -> f64 {
        phase_norm(&self.q, &self.p)
    }
}

pub fn phase_norm(q: &[f64], p: &[f64]) -> f64 {
    crate::numeric::norm(q) + crate::numeric::norm(p)
}

/// Finite set of phase-space sample points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub points: Vec<(Vec<f64>, Vec<f64>)>,
}

impl PhaseGrid {
    pub fn new(points: Vec<(Vec<f64>, Vec<f64>)>) -> Self {
        Self { points }
    }

    /// Tensor grid with `n` equispaced nodes (endpoints included) on each of
    /// the `2d` axes of the box `[q_lo, q_hi] x [p_lo, p_hi]`.
    pub fn product(q_lo: &[f64], q_hi: &[f64], p_lo: &[f64], p_hi: &[f64], n: usize) -> Self {
        let d = q_lo.len();
        let lo: Vec<f64> = q_lo.iter().chain(p_lo).copied().collect();
        let hi: Vec<f64> = q_hi.iter().chain(p_hi).copied().collect();
        let axes: Vec<Vec<f64>> = lo
            .iter()
            .zip(&hi)
            .map(|(&a, &b)| linspace(a, b, n))
            .collect();
        let points = tensor(&axes)
            .into_iter()
            .map(|x| (x[..d].to_vec(), x[d..].to_vec()))
            .collect();
        Self { points }
    }

    /// Square box `[-r_q, r_q]^d x [-r_p, r_p]^d`.
    pub fn centered(d: usize, r_q: f64, r_p: f64, n: usize) -> Self {
        Self::product(&vec![-r_q; d], &vec![r_q; d], &vec![-r_p; d], &vec![r_p; d], n)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(|(q, _)| q.len())
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (a + b)],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Cartesian product of axis node lists, last axis fastest.
pub fn tensor(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut x = prefix.clone();
                x.push(v);
                next.push(x);
            }
        }
        out = next;
    }
    out
}
