use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::norm;

/// Drift `F : R^{2d} -> R^d` and diffusion `sigma : R^{2d} -> R^{d x d}` of the
/// momentum equation. Diffusion matrices are written row-major.
///
/// Implementations are pure functions of `(q, p)`; callers are responsible for
/// checking outputs for finiteness.
pub trait CoefficientField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn drift(&self, q: &[f64], p: &[f64], out: &mut [f64]);
    fn diffusion(&self, q: &[f64], p: &[f64], out: &mut [f64]);

    /// `Some` when the field has the Langevin form `F(q,p) = F0(q) - gamma p`
    /// with `sigma = sqrt(2 gamma kT) I`.
    fn langevin(&self) -> Option<&LangevinModel> {
        None
    }

    fn describe(&self) -> String;
}

/// Declared regularity and growth constants of a coefficient model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityMetadata {
    /// Hoelder exponent in (0, 1).
    pub alpha: f64,
    /// Ellipticity lower bound.
    pub c1: f64,
    /// Ellipticity upper bound.
    pub c2: f64,
    /// Anisotropic Hoelder constant.
    pub c3: f64,
    /// Affine growth offset: `|F(x)| <= a + b |x|`.
    pub a: f64,
    pub b: f64,
}

impl RegularityMetadata {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", "must lie in (0, 1)"));
        }
        if !(self.c1 > 0.0) {
            return Err(Error::param("c1", "must be positive"));
        }
        if !(self.c2 >= self.c1) {
            return Err(Error::param("c2", "must be at least c1"));
        }
        for (name, v) in [("c3", self.c3), ("a", self.a), ("b", self.b)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Constants for a constant isotropic diffusion `s I`.
    pub fn isotropic(s: f64, a: f64, b: f64) -> Self {
        let s2 = (s * s).max(f64::MIN_POSITIVE);
        Self {
            alpha: 0.5,
            c1: s2,
            c2: s2,
            c3: 0.0,
            a,
            b,
        }
    }
}

/// A coefficient field together with its declared metadata.
#[derive(Clone)]
pub struct CoefficientModel {
    field: Arc<dyn CoefficientField>,
    meta: RegularityMetadata,
}

impl fmt::Debug for CoefficientModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientModel")
            .field("field", &self.field.describe())
            .field("meta", &self.meta)
            .finish()
    }
}

impl CoefficientModel {
    pub fn new(field: Arc<dyn CoefficientField>, meta: RegularityMetadata) -> Result<Self> {
        meta.validate()?;
        Ok(Self { field, meta })
    }

    /// Wraps a field whose diffusion may be degenerate (e.g. `sigma = 0`
    /// control cases). Metadata is still validated but not checked against
    /// the field.
    pub fn from_field<F: CoefficientField + 'static>(field: F, meta: RegularityMetadata) -> Result<Self> {
        Self::new(Arc::new(field), meta)
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn metadata(&self) -> &RegularityMetadata {
        &self.meta
    }

    pub fn with_metadata(&self, meta: RegularityMetadata) -> Result<Self> {
        Self::new(self.field.clone(), meta)
    }

    pub fn field(&self) -> &Arc<dyn CoefficientField> {
        &self.field
    }

    #[inline]
    pub fn drift(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        self.field.drift(q, p, out)
    }

    #[inline]
    pub fn diffusion(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        self.field.diffusion(q, p, out)
    }

    pub fn langevin(&self) -> Option<&LangevinModel> {
        self.field.langevin()
    }

    pub fn describe(&self) -> String {
        self.field.describe()
    }

    /// Evaluates `(F, sigma)` at `(q, p)`, failing on non-finite output.
    pub fn eval_checked(&self, q: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        let mut f = vec![0.0; d];
        let mut s = vec![0.0; d * d];
        self.drift(q, p, &mut f);
        if f.iter().any(|x| !x.is_finite()) {
            return Err(eval_error("drift", q, p));
        }
        self.diffusion(q, p, &mut s);
        if s.iter().any(|x| !x.is_finite()) {
            return Err(eval_error("diffusion", q, p));
        }
        Ok((f, s))
    }
}

pub(crate) fn eval_error(what: &str, q: &[f64], p: &[f64]) -> Error {
    let mut point = q.to_vec();
    point.extend_from_slice(p);
    Error::Evaluation {
        what: what.into(),
        point,
    }
}

fn write_isotropic(s: f64, d: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for i in 0..d {
        out[i * d + i] = s;
    }
}

/// Potentials `U >= 0` used by the Langevin catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Potential {
    /// `U = 0`.
    Flat,
    /// `U = omega^2 |q|^2 / 2`.
    Harmonic { omega: f64 },
    /// `U = h (|q|^2 - q0^2)^2`.
    DoubleWell { h: f64, q0: f64 },
    /// `U = |q|^4 / 4`.
    Quartic,
}

impl Potential {
    pub fn value(&self, q: &[f64]) -> f64 {
        let r2: f64 = q.iter().map(|x| x * x).sum();
        match *self {
            Potential::Flat => 0.0,
            Potential::Harmonic { omega } => 0.5 * omega * omega * r2,
            Potential::DoubleWell { h, q0 } => {
                let u = r2 - q0 * q0;
                h * u * u
            }
            Potential::Quartic => 0.25 * r2 * r2,
        }
    }

    pub fn gradient(&self, q: &[f64], out: &mut [f64]) {
        let r2: f64 = q.iter().map(|x| x * x).sum();
        let k = match *self {
            Potential::Flat => 0.0,
            Potential::Harmonic { omega } => omega * omega,
            Potential::DoubleWell { h, q0 } => 4.0 * h * (r2 - q0 * q0),
            Potential::Quartic => r2,
        };
        for (o, x) in out.iter_mut().zip(q) {
            *o = k * x;
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Potential::Harmonic { omega } if !(omega > 0.0 && omega.is_finite()) => {
                Err(Error::param("omega", "must be positive"))
            }
            Potential::DoubleWell { h, q0 } if !(h > 0.0 && h.is_finite() && q0.is_finite()) => {
                Err(Error::param("h", "double-well height must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Bounded-on-bounded-sets, possibly discontinuous, nonconservative fields `l(q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Perturbation {
    Zero,
    /// `l(q) = b q / (1 + |q|)`.
    Radial { b: f64 },
    /// `l(q)_i = b sign(q_i)`.
    Sign { b: f64 },
    /// `l(q) = b (-q_2, q_1) / (1 + |q|)` in `d = 2`; zero in the other components.
    Swirl { b: f64 },
}

impl Perturbation {
    pub fn eval(&self, q: &[f64], out: &mut [f64]) {
        match *self {
            Perturbation::Zero => out.iter_mut().for_each(|x| *x = 0.0),
            Perturbation::Radial { b } => {
                let s = b / (1.0 + norm(q));
                for (o, x) in out.iter_mut().zip(q) {
                    *o = s * x;
                }
            }
            Perturbation::Sign { b } => {
                for (o, x) in out.iter_mut().zip(q) {
                    *o = b * sign(*x);
                }
            }
            Perturbation::Swirl { b } => {
                out.iter_mut().for_each(|x| *x = 0.0);
                if q.len() >= 2 {
                    let s = b / (1.0 + norm(q));
                    out[0] = -s * q[1];
                    out[1] = s * q[0];
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Perturbation::Zero => true,
            Perturbation::Radial { b } | Perturbation::Sign { b } | Perturbation::Swirl { b } => {
                b == 0.0
            }
        }
    }

    /// `sup_q |l(q)|`.
    pub fn sup_norm(&self, d: usize) -> f64 {
        match *self {
            Perturbation::Zero => 0.0,
            Perturbation::Radial { b } | Perturbation::Swirl { b } => b.abs(),
            Perturbation::Sign { b } => b.abs() * (d as f64).sqrt(),
        }
    }
}

/// `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Langevin dynamics with unit mass:
/// `F(q, p) = -grad U(q) - l(q) - gamma p`, `sigma = sqrt(2 gamma kT) I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LangevinModel {
    pub dim: usize,
    pub potential: Potential,
    pub ell: Perturbation,
    pub gamma: f64,
    pub kt: f64,
}

impl LangevinModel {
    pub fn new(dim: usize, potential: Potential, ell: Perturbation, gamma: f64, kt: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param("gamma", "friction must be positive"));
        }
        if !(kt > 0.0 && kt.is_finite()) {
            return Err(Error::param("kt", "temperature must be positive"));
        }
        potential.validate()?;
        Ok(Self {
            dim,
            potential,
            ell,
            gamma,
            kt,
        })
    }

    /// Position-dependent part `F0(q) = -grad U(q) - l(q)`.
    pub fn force(&self, q: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut l = [0.0; 8];
        let mut lv;
        let l: &mut [f64] = if d <= 8 {
            &mut l[..d]
        } else {
            lv = vec![0.0; d];
            &mut lv
        };
        self.potential.gradient(q, out);
        self.ell.eval(q, l);
        for (o, li) in out.iter_mut().zip(l.iter()) {
            *o = -*o - li;
        }
    }

    /// `epsilon = gamma kT`, half the squared noise amplitude.
    pub fn epsilon(&self) -> f64 {
        self.gamma * self.kt
    }

    pub fn noise_amplitude(&self) -> f64 {
        (2.0 * self.gamma * self.kt).sqrt()
    }
}

impl CoefficientField for LangevinModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        self.force(q, out);
        for (o, pi) in out.iter_mut().zip(p) {
            *o -= self.gamma * pi;
        }
    }

    fn diffusion(&self, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        write_isotropic(self.noise_amplitude(), self.dim, out)
    }

    fn langevin(&self) -> Option<&LangevinModel> {
        Some(self)
    }

    fn describe(&self) -> String {
        format!(
            "langevin(d={}, U={:?}, l={:?}, gamma={}, kT={})",
            self.dim, self.potential, self.ell, self.gamma, self.kt
        )
    }
}

/// `F = c`, `sigma = S`, both constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantField {
    pub drift: Vec<f64>,
    /// Row-major `d x d`.
    pub sigma: Vec<f64>,
}

impl ConstantField {
    pub fn new(drift: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let d = drift.len();
        if d == 0 || sigma.len() != d * d {
            return Err(Error::param("sigma", "must be a d x d matrix matching the drift"));
        }
        Ok(Self { drift, sigma })
    }

    /// `F = 0`, `sigma = s I`; `s = 0` is free transport.
    pub fn free(d: usize, s: f64) -> Self {
        let mut sigma = vec![0.0; d * d];
        write_isotropic(s, d, &mut sigma);
        Self {
            drift: vec![0.0; d],
            sigma,
        }
    }
}

impl CoefficientField for ConstantField {
    fn dim(&self) -> usize {
        self.drift.len()
    }
    fn drift(&self, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.drift);
    }
    fn diffusion(&self, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.sigma);
    }
    fn describe(&self) -> String {
        format!("constant(F={:?}, sigma={:?})", self.drift, self.sigma)
    }
}

/// `F(x) = A x + c` with `A` a `d x 2d` matrix acting on `x = (q, p)`;
/// constant diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearField {
    pub matrix: Vec<f64>,
    pub offset: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl LinearField {
    pub fn new(matrix: Vec<f64>, offset: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let d = offset.len();
        if d == 0 || matrix.len() != 2 * d * d || sigma.len() != d * d {
            return Err(Error::param("matrix", "expected a d x 2d matrix and d x d sigma"));
        }
        Ok(Self {
            matrix,
            offset,
            sigma,
        })
    }
}

impl CoefficientField for LinearField {
    fn dim(&self) -> usize {
        self.offset.len()
    }
    fn drift(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let d = self.offset.len();
        for i in 0..d {
            let row = &self.matrix[i * 2 * d..(i + 1) * 2 * d];
            let mut s = self.offset[i];
            for j in 0..d {
                s += row[j] * q[j] + row[d + j] * p[j];
            }
            out[i] = s;
        }
    }
    fn diffusion(&self, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.sigma);
    }
    fn describe(&self) -> String {
        format!("linear(A={:?}, c={:?})", self.matrix, self.offset)
    }
}

/// Discontinuous drift `F_i = strength * sign(p_i)` with constant isotropic noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SignDrift {
    pub dim: usize,
    pub strength: f64,
    pub sigma: f64,
}

impl CoefficientField for SignDrift {
    fn dim(&self) -> usize {
        self.dim
    }
    fn drift(&self, _q: &[f64], p: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(p) {
            *o = self.strength * sign(*x);
        }
    }
    fn diffusion(&self, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        write_isotropic(self.sigma, self.dim, out)
    }
    fn describe(&self) -> String {
        format!("sign-drift(d={}, strength={}, sigma={})", self.dim, self.strength, self.sigma)
    }
}

/// `F = -kappa q - gamma p` with Hoelder-continuous isotropic diffusion
/// `sigma = (base + amp * min(|p|, 1)^exponent) I`.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderDiffusion {
    pub dim: usize,
    pub kappa: f64,
    pub gamma: f64,
    pub base: f64,
    pub amp: f64,
    pub exponent: f64,
}

impl CoefficientField for HolderDiffusion {
    fn dim(&self) -> usize {
        self.dim
    }
    fn drift(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            out[i] = -self.kappa * q[i] - self.gamma * p[i];
        }
    }
    fn diffusion(&self, _q: &[f64], p: &[f64], out: &mut [f64]) {
        let s = self.base + self.amp * norm(p).min(1.0).powf(self.exponent);
        write_isotropic(s, self.dim, out)
    }
    fn describe(&self) -> String {
        format!(
            "holder-diffusion(d={}, base={}, amp={}, exponent={})",
            self.dim, self.base, self.amp, self.exponent
        )
    }
}

type DriftFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// Field defined by closures; used for ad hoc models in tests and examples.
pub struct ClosureField {
    dim: usize,
    name: String,
    drift: Box<DriftFn>,
    diffusion: Box<DriftFn>,
}

impl ClosureField {
    pub fn new<F, S>(dim: usize, name: impl Into<String>, drift: F, diffusion: S) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        S: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            dim,
            name: name.into(),
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
        }
    }
}

impl fmt::Debug for ClosureField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClosureField({})", self.name)
    }
}

impl CoefficientField for ClosureField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn drift(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        (self.drift)(q, p, out)
    }
    fn diffusion(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        (self.diffusion)(q, p, out)
    }
    fn describe(&self) -> String {
        self.name.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn langevin_drift_matches_definition() {
        let m = LangevinModel::new(1, Potential::Harmonic { omega: 2.0 }, Perturbation::Zero, 0.5, 1.0)
            .unwrap();
        let mut f = [0.0];
        m.drift(&[1.0], &[2.0], &mut f);
        assert_eq!(f[0], -4.0 - 1.0);
        let mut s = [0.0];
        m.diffusion(&[0.0], &[0.0], &mut s);
        assert_eq!(s[0], 1.0);
    }

    #[test]
    fn double_well_gradient() {
        let u = Potential::DoubleWell { h: 1.0, q0: 1.0 };
        let mut g = [0.0];
        u.gradient(&[2.0], &mut g);
        assert_eq!(g[0], 4.0 * 3.0 * 2.0);
        assert_eq!(u.value(&[1.0]), 0.0);
        assert_eq!(u.value(&[0.0]), 1.0);
    }

    #[test]
    fn metadata_validation() {
        let mut m = RegularityMetadata::isotropic(1.0, 0.0, 1.0);
        assert!(m.validate().is_ok());
        m.alpha = 1.0;
        assert!(m.validate().is_err());
        m.alpha = 0.5;
        m.c2 = 0.5;
        assert!(m.validate().is_err());
    }

    #[test]
    fn eval_checked_names_point() {
        let f = ClosureField::new(1, "nan", |_, _, o| o[0] = f64::NAN, |_, _, o| o[0] = 1.0);
        let m = CoefficientModel::from_field(f, RegularityMetadata::isotropic(1.0, 0.0, 0.0)).unwrap();
        match m.eval_checked(&[0.5], &[1.5]) {
            Err(Error::Evaluation { point, .. }) => assert_eq!(point, vec![0.5, 1.5]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
