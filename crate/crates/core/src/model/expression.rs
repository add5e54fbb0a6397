//! Coefficient fields described by arithmetic expressions in the variables
//! `q0..q{d-1}` and `p0..p{d-1}` (evaluated with `evalexpr`; integer literals
//! use integer arithmetic, so write `0.5` rather than `1/2`).

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node,
    Value,
};

use super::coefficients::CoefficientField;
use crate::error::{Error, Result};

#[derive(Debug)]
pub struct ExpressionField {
    dim: usize,
    sources: Vec<String>,
    drift: Vec<Node<DefaultNumericTypes>>,
    /// `d` diagonal entries or `d * d` row-major entries.
    diffusion: Vec<Node<DefaultNumericTypes>>,
    diagonal: bool,
}

impl ExpressionField {
    pub fn new(drift: &[String], diffusion: &[String]) -> Result<Self> {
        let d = drift.len();
        if d == 0 {
            return Err(Error::param("drift", "at least one component is required"));
        }
        let diagonal = match diffusion.len() {
            n if n == d => true,
            n if n == d * d => false,
            _ => {
                return Err(Error::param(
                    "diffusion",
                    format!("expected {d} diagonal or {} full entries", d * d),
                ))
            }
        };
        let parse = |s: &String, key: &str| {
            build_operator_tree::<DefaultNumericTypes>(s)
                .map_err(|e| Error::param(key, format!("cannot parse `{s}`: {e}")))
        };
        let drift_nodes = drift.iter().map(|s| parse(s, "drift")).collect::<Result<Vec<_>>>()?;
        let diff_nodes = diffusion
            .iter()
            .map(|s| parse(s, "diffusion"))
            .collect::<Result<Vec<_>>>()?;
        let field = Self {
            dim: d,
            sources: drift.iter().chain(diffusion).cloned().collect(),
            drift: drift_nodes,
            diffusion: diff_nodes,
            diagonal,
        };
        // Fail early on unknown identifiers.
        let zeros = vec![0.0; d];
        let ctx = field.context(&zeros, &zeros);
        for (node, src) in field.drift.iter().chain(&field.diffusion).zip(&field.sources) {
            node.eval_number_with_context(&ctx)
                .map_err(|e| Error::param("expression", format!("cannot evaluate `{src}`: {e}")))?;
        }
        Ok(field)
    }

    fn context(&self, q: &[f64], p: &[f64]) -> HashMapContext<DefaultNumericTypes> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for i in 0..self.dim {
            // Setting a fresh float variable cannot fail on a HashMapContext.
            let _ = ctx.set_value(format!("q{i}"), Value::Float(q[i]));
            let _ = ctx.set_value(format!("p{i}"), Value::Float(p[i]));
        }
        ctx
    }
}

impl CoefficientField for ExpressionField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let ctx = self.context(q, p);
        for (o, node) in out.iter_mut().zip(&self.drift) {
            *o = node.eval_number_with_context(&ctx).unwrap_or(f64::NAN);
        }
    }

    fn diffusion(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let ctx = self.context(q, p);
        let d = self.dim;
        if self.diagonal {
            out.iter_mut().for_each(|x| *x = 0.0);
            for (i, node) in self.diffusion.iter().enumerate() {
                out[i * d + i] = node.eval_number_with_context(&ctx).unwrap_or(f64::NAN);
            }
        } else {
            for (o, node) in out.iter_mut().zip(&self.diffusion) {
                *o = node.eval_number_with_context(&ctx).unwrap_or(f64::NAN);
            }
        }
    }

    fn describe(&self) -> String {
        format!("expression({})", self.sources.join("; "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_linear_drift() {
        let f = ExpressionField::new(&["-q0 - p0".into()], &["1.0".into()]).unwrap();
        let mut out = [0.0];
        f.drift(&[1.0], &[2.0], &mut out);
        assert_eq!(out[0], -3.0);
        f.diffusion(&[1.0], &[2.0], &mut out);
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn rejects_unknown_variable() {
        assert!(ExpressionField::new(&["x + 1".into()], &["1".into()]).is_err());
    }

    #[test]
    fn full_matrix_diffusion() {
        let f = ExpressionField::new(
            &["0".into(), "0".into()],
            &["1".into(), "q0".into(), "0".into(), "math::sqrt(2.0)".into()],
        )
        .unwrap();
        let mut s = [0.0; 4];
        f.diffusion(&[3.0, 0.0], &[0.0, 0.0], &mut s);
        assert_eq!(s, [1.0, 3.0, 0.0, 2f64.sqrt()]);
    }
}
