//! Coefficient fields with regularity metadata, cylindrical domains,
//! mollification and compact exhaustions.

pub mod audit;
pub mod catalog;
pub mod coefficients;
pub mod compact;
pub mod domain;
pub mod expression;
pub mod mollify;
pub mod state;

pub use audit::{audit_coefficients, AuditReport, CheckResult};
pub use catalog::{ModelConfig, ModelSpec};
pub use coefficients::{
    CoefficientField, CoefficientModel, LangevinModel, Perturbation, Potential, RegularityMetadata,
};
pub use compact::CompactSet;
pub use domain::{CylindricalDomain, Region};
pub use mollify::{mollifier_convergence_report, mollify, ConvergenceReport, MollifierKernel};
pub use state::{KineticState, PhaseGrid};
