//! Built-in coefficient models, constructed from a name plus numeric parameters.

use serde::{Deserialize, Serialize};

use super::coefficients::{
    CoefficientModel, ConstantField, HolderDiffusion, LangevinModel, LinearField, Perturbation, Potential,
    RegularityMetadata, SignDrift,
};
use super::expression::ExpressionField;
use super::mollify::{mollify, MollifierKernel, DEFAULT_ORDER};
use crate::error::{Error, Result};
use crate::numeric::{gram, norm, symmetric_eigenvalues};

/// Position radius on which the declared growth constants of non-globally
/// Lipschitz potentials hold.
pub const GROWTH_RADIUS: f64 = 2.0;

fn one() -> usize {
    1
}

fn default_gamma() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `U = omega^2 |q|^2 / 2`.
    HarmonicLangevin {
        #[serde(default = "one")]
        dim: usize,
        omega: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        kt: f64,
    },
    /// `U = h (q^2 - q0^2)^2` in `d = 1`.
    DoubleWellLangevin {
        h: f64,
        q0: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        kt: f64,
    },
    /// `F = -grad U - l - gamma p`; `alpha_drift`, `beta_drift` are the constants of
    /// the drift condition `(grad U + l).q >= alpha (|q|^2 + U) + |l|^2 / beta^2`.
    NonconservativeLangevin {
        #[serde(default = "one")]
        dim: usize,
        potential: Potential,
        ell: Perturbation,
        #[serde(default = "default_gamma")]
        gamma: f64,
        kt: f64,
        alpha_drift: f64,
        beta_drift: f64,
    },
    /// `F = 0`, `sigma = sigma I` (`sigma = 0` gives deterministic transport).
    FreeTransport {
        #[serde(default = "one")]
        dim: usize,
        #[serde(default)]
        sigma: f64,
    },
    /// `F = c`, `sigma` constant row-major matrix.
    Constant { drift: Vec<f64>, sigma: Vec<f64> },
    /// `F_i = strength sign(p_i)`, `sigma I`.
    SignDrift {
        #[serde(default = "one")]
        dim: usize,
        strength: f64,
        sigma: f64,
    },
    /// `F = -kappa q - gamma p`, `sigma = (base + amp min(|p|,1)^exponent) I`.
    HolderDiffusion {
        #[serde(default = "one")]
        dim: usize,
        kappa: f64,
        gamma: f64,
        base: f64,
        amp: f64,
        exponent: f64,
    },
    /// `F = A (q, p) + c` with `A` row-major `d x 2d`, constant `sigma`.
    Linear { matrix: Vec<f64>, offset: Vec<f64>, sigma: Vec<f64> },
    /// Drift components and diffusion entries as expressions in `q0.., p0..`.
    Expression { drift: Vec<String>, diffusion: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifySpec {
    pub n: u32,
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    DEFAULT_ORDER
}

/// A catalog model with optional metadata override and mollification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub catalog: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<RegularityMetadata>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mollify: Option<MollifySpec>,
}

impl ModelConfig {
    pub fn new(catalog: ModelSpec) -> Self {
        Self {
            catalog,
            metadata: None,
            mollify: None,
        }
    }

    pub fn build(&self) -> Result<CoefficientModel> {
        let mut model = self.catalog.build()?;
        if let Some(meta) = self.metadata {
            model = model.with_metadata(meta)?;
        } else if matches!(self.catalog, ModelSpec::Expression { .. }) {
            return Err(Error::param("metadata", "expression models must declare their metadata"));
        }
        if let Some(m) = &self.mollify {
            model = mollify(&model, &MollifierKernel::new(m.n, m.order)?)?;
        }
        Ok(model)
    }
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::HarmonicLangevin { dim, .. }
            | ModelSpec::NonconservativeLangevin { dim, .. }
            | ModelSpec::FreeTransport { dim, .. }
            | ModelSpec::SignDrift { dim, .. }
            | ModelSpec::HolderDiffusion { dim, .. } => *dim,
            ModelSpec::DoubleWellLangevin { .. } => 1,
            ModelSpec::Constant { drift, .. } => drift.len(),
            ModelSpec::Linear { offset, .. } => offset.len(),
            ModelSpec::Expression { drift, .. } => drift.len(),
        }
    }

    /// The Langevin structure, when the model has one.
    pub fn langevin(&self) -> Result<Option<LangevinModel>> {
        Ok(match *self {
            ModelSpec::HarmonicLangevin { dim, omega, gamma, kt } => Some(LangevinModel::new(
                dim,
                Potential::Harmonic { omega },
                Perturbation::Zero,
                gamma,
                kt,
            )?),
            ModelSpec::DoubleWellLangevin { h, q0, gamma, kt } => Some(LangevinModel::new(
                1,
                Potential::DoubleWell { h, q0 },
                Perturbation::Zero,
                gamma,
                kt,
            )?),
            ModelSpec::NonconservativeLangevin {
                dim,
                potential,
                ell,
                gamma,
                kt,
                ..
            } => Some(LangevinModel::new(dim, potential, ell, gamma, kt)?),
            _ => None,
        })
    }

    /// Declared `(alpha_drift, beta_drift)` of the nonconservative entry.
    pub fn drift_constants(&self) -> Option<(f64, f64)> {
        match *self {
            ModelSpec::NonconservativeLangevin {
                alpha_drift,
                beta_drift,
                ..
            } => Some((alpha_drift, beta_drift)),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<CoefficientModel> {
        if self.dim() == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if let Some(l) = self.langevin()? {
            let meta = langevin_metadata(&l);
            return CoefficientModel::from_field(l, meta);
        }
        match self {
            ModelSpec::FreeTransport { dim, sigma } => {
                check_finite("sigma", *sigma)?;
                CoefficientModel::from_field(
                    ConstantField::free(*dim, *sigma),
                    RegularityMetadata::isotropic(*sigma, 0.0, 0.0),
                )
            }
            ModelSpec::Constant { drift, sigma } => {
                let f = ConstantField::new(drift.clone(), sigma.clone())?;
                let mut meta = matrix_metadata(sigma, drift.len());
                meta.a = norm(drift);
                CoefficientModel::from_field(f, meta)
            }
            ModelSpec::SignDrift { dim, strength, sigma } => {
                check_finite("strength", *strength)?;
                check_finite("sigma", *sigma)?;
                let meta = RegularityMetadata::isotropic(*sigma, strength.abs() * (*dim as f64).sqrt(), 0.0);
                CoefficientModel::from_field(
                    SignDrift {
                        dim: *dim,
                        strength: *strength,
                        sigma: *sigma,
                    },
                    meta,
                )
            }
            ModelSpec::HolderDiffusion {
                dim,
                kappa,
                gamma,
                base,
                amp,
                exponent,
            } => {
                if !(*base > 0.0 && *amp >= 0.0) {
                    return Err(Error::param("base", "requires base > 0 and amp >= 0"));
                }
                if !(*exponent > 0.0 && *exponent < 1.0) {
                    return Err(Error::param("exponent", "must lie in (0, 1)"));
                }
                let meta = RegularityMetadata {
                    alpha: *exponent,
                    c1: base * base,
                    c2: (base + amp) * (base + amp),
                    c3: *amp,
                    a: 0.0,
                    b: kappa.abs().max(gamma.abs()),
                };
                CoefficientModel::from_field(
                    HolderDiffusion {
                        dim: *dim,
                        kappa: *kappa,
                        gamma: *gamma,
                        base: *base,
                        amp: *amp,
                        exponent: *exponent,
                    },
                    meta,
                )
            }
            ModelSpec::Linear { matrix, offset, sigma } => {
                let d = offset.len();
                let f = LinearField::new(matrix.clone(), offset.clone(), sigma.clone())?;
                let mut meta = matrix_metadata(sigma, d);
                meta.a = norm(offset);
                // |A x|_2 <= ||A|| |x|_2 <= ||A|| (|q| + |p|)
                let ata: Vec<f64> = {
                    let mut g = vec![0.0; 4 * d * d];
                    for i in 0..2 * d {
                        for j in 0..2 * d {
                            g[i * 2 * d + j] = (0..d).map(|k| matrix[k * 2 * d + i] * matrix[k * 2 * d + j]).sum();
                        }
                    }
                    g
                };
                meta.b = symmetric_eigenvalues(&ata, 2 * d).last().copied().unwrap_or(0.0).max(0.0).sqrt();
                CoefficientModel::from_field(f, meta)
            }
            ModelSpec::Expression { drift, diffusion } => {
                let f = ExpressionField::new(drift, diffusion)?;
                // Placeholder; `ModelConfig::build` requires an explicit override.
                CoefficientModel::from_field(f, RegularityMetadata::isotropic(1.0, 0.0, 0.0))
            }
            _ => unreachable!("Langevin variants handled above"),
        }
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, "must be finite"))
    }
}

fn matrix_metadata(sigma: &[f64], d: usize) -> RegularityMetadata {
    let ev = symmetric_eigenvalues(&gram(sigma, d), d);
    let c1 = ev.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let c2 = ev.last().copied().unwrap_or(0.0).max(c1);
    RegularityMetadata {
        alpha: 0.5,
        c1,
        c2,
        c3: 0.0,
        a: 0.0,
        b: 0.0,
    }
}

/// `|F| <= sup_{|q| <= R} |grad U| + sup |l| + gamma |p|`; exact globally for
/// the harmonic and flat potentials, valid for `|q| <= GROWTH_RADIUS` otherwise.
fn langevin_metadata(l: &LangevinModel) -> RegularityMetadata {
    let s = l.noise_amplitude();
    let ell = l.ell.sup_norm(l.dim);
    let (a, b) = match l.potential {
        Potential::Flat => (ell, l.gamma),
        Potential::Harmonic { omega } => (ell, l.gamma.max(omega * omega)),
        Potential::DoubleWell { h, q0 } => {
            let r = GROWTH_RADIUS.max(q0.abs());
            (ell + 4.0 * h * r * (r * r + q0 * q0), l.gamma)
        }
        Potential::Quartic => (ell + GROWTH_RADIUS.powi(3), l.gamma),
    };
    RegularityMetadata::isotropic(s, a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub description: String,
    /// `(parameter, meaning)`.
    pub parameters: Vec<(String, String)>,
}

fn entry(name: &str, description: &str, params: &[(&str, &str)]) -> CatalogEntry {
    CatalogEntry {
        name: name.into(),
        description: description.into(),
        parameters: params.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
    }
}

/// Deterministic listing of the model catalog.
pub fn model_catalog() -> Vec<CatalogEntry> {
    vec![
        entry(
            "harmonic-langevin",
            "Langevin dynamics in U(q) = omega^2 |q|^2 / 2",
            &[
                ("dim", "dimension d (default 1)"),
                ("omega", "oscillator frequency > 0"),
                ("gamma", "friction > 0 (default 1)"),
                ("kt", "temperature kT > 0"),
            ],
        ),
        entry(
            "double-well-langevin",
            "Langevin dynamics in U(q) = h (q^2 - q0^2)^2, d = 1",
            &[
                ("h", "barrier height > 0"),
                ("q0", "well position"),
                ("gamma", "friction > 0 (default 1)"),
                ("kt", "temperature kT > 0"),
            ],
        ),
        entry(
            "nonconservative-langevin",
            "F(q, p) = -grad U(q) - l(q) - gamma p with a measurable nonconservative field l",
            &[
                ("dim", "dimension d (default 1)"),
                ("potential", "U: {type = flat | harmonic(omega) | double-well(h, q0) | quartic}"),
                ("ell", "l: {type = zero | radial(b) | sign(b) | swirl(b)}"),
                ("gamma", "friction > 0 (default 1)"),
                ("kt", "temperature kT > 0"),
                ("alpha_drift", "alpha in (grad U + l).q >= alpha (|q|^2 + U) + |l|^2 / beta^2"),
                ("beta_drift", "beta in the same inequality, 0 <= beta < gamma"),
            ],
        ),
        entry(
            "free-transport",
            "F = 0, sigma = s I (s = 0: deterministic transport)",
            &[("dim", "dimension d (default 1)"), ("sigma", "noise level s >= 0 (default 0)")],
        ),
        entry(
            "constant",
            "constant drift and diffusion",
            &[("drift", "vector c"), ("sigma", "row-major d x d matrix")],
        ),
        entry(
            "sign-drift",
            "discontinuous drift F_i = strength sign(p_i), sigma = s I",
            &[
                ("dim", "dimension d (default 1)"),
                ("strength", "drift magnitude"),
                ("sigma", "noise level s > 0"),
            ],
        ),
        entry(
            "holder-diffusion",
            "F = -kappa q - gamma p, sigma = (base + amp min(|p|, 1)^exponent) I",
            &[
                ("dim", "dimension d (default 1)"),
                ("kappa", "restoring strength"),
                ("gamma", "friction"),
                ("base", "noise floor > 0"),
                ("amp", "Hoelder amplitude >= 0"),
                ("exponent", "Hoelder exponent in (0, 1)"),
            ],
        ),
        entry(
            "linear",
            "F = A (q, p) + c, constant sigma",
            &[
                ("matrix", "row-major d x 2d matrix A"),
                ("offset", "vector c"),
                ("sigma", "row-major d x d matrix"),
            ],
        ),
        entry(
            "expression",
            "drift and diffusion given as arithmetic expressions in q0.., p0..; metadata required",
            &[
                ("drift", "d expressions"),
                ("diffusion", "d (diagonal) or d*d (row-major) expressions"),
            ],
        ),
    ]
}

/// Deterministic listing of the domain region types.
pub fn domain_catalog() -> Vec<CatalogEntry> {
    vec![
        entry("interval", "O = (lo, hi), d = 1", &[("lo", "left end"), ("hi", "right end")]),
        entry("ball", "open ball", &[("center", "vector"), ("radius", "radius > 0")]),
        entry("box", "open box prod (lo_i, hi_i)", &[("lo", "vector"), ("hi", "vector")]),
        entry(
            "half-space",
            "{q : normal . q < offset}",
            &[("normal", "nonzero vector"), ("offset", "scalar")],
        ),
        entry("full-space", "O = R^d, no exit", &[("dim", "dimension d")]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_names() {
        let names: Vec<String> = model_catalog().into_iter().map(|e| e.name).collect();
        for n in ["harmonic-langevin", "double-well-langevin", "nonconservative-langevin"] {
            assert!(names.iter().any(|x| x == n));
        }
        let nc = model_catalog().into_iter().find(|e| e.name == "nonconservative-langevin").unwrap();
        let params: Vec<&str> = nc.parameters.iter().map(|p| p.0.as_str()).collect();
        for p in ["potential", "ell", "alpha_drift", "beta_drift"] {
            assert!(params.contains(&p));
        }
    }

    #[test]
    fn harmonic_builds_langevin_form() {
        let m = ModelSpec::HarmonicLangevin {
            dim: 1,
            omega: 1.0,
            gamma: 1.0,
            kt: 0.5,
        }
        .build()
        .unwrap();
        assert!(m.langevin().is_some());
        assert_eq!(m.metadata().c1, 1.0);
        let (f, s) = m.eval_checked(&[1.0], &[2.0]).unwrap();
        assert_eq!(f, vec![-3.0]);
        assert_eq!(s, vec![1.0]);
    }

    #[test]
    fn expression_requires_metadata() {
        let spec = ModelSpec::Expression {
            drift: vec!["-q0".into()],
            diffusion: vec!["1".into()],
        };
        assert!(ModelConfig::new(spec.clone()).build().is_err());
        let mut cfg = ModelConfig::new(spec);
        cfg.metadata = Some(RegularityMetadata::isotropic(1.0, 0.0, 1.0));
        assert!(cfg.build().is_ok());
    }

    #[test]
    fn linear_growth_constant_is_operator_norm() {
        let m = ModelSpec::Linear {
            matrix: vec![-1.0, -1.0],
            offset: vec![0.0],
            sigma: vec![1.0],
        }
        .build()
        .unwrap();
        assert!((m.metadata().b - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ModelSpec::NonconservativeLangevin {
            dim: 1,
            potential: Potential::Quartic,
            ell: Perturbation::Radial { b: 0.5 },
            gamma: 1.0,
            kt: 0.5,
            alpha_drift: 0.1,
            beta_drift: 0.9,
        };
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&s).unwrap(), spec);
    }
}
