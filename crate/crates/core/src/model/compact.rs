use serde::{Deserialize, Serialize};

use super::domain::CylindricalDomain;
use crate::error::{Error, Result};
use crate::numeric::norm;

/// Compact subsets of `D` used by the Harnack and Lyapunov probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CompactSet {
    /// `K_k = {(q,p) in D : |q| <= k, d(q) >= 1/k, |p| <= k}`.
    Exhaustion { k: u32 },
    /// Closed product box `[q_lo, q_hi] x [p_lo, p_hi]`; must lie inside `D`.
    Boxes {
        q_lo: Vec<f64>,
        q_hi: Vec<f64>,
        p_lo: Vec<f64>,
        p_hi: Vec<f64>,
    },
}

impl CompactSet {
    pub fn exhaustion(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k", "exhaustion index must be at least 1"));
        }
        Ok(CompactSet::Exhaustion { k })
    }

    pub fn boxes(q_lo: Vec<f64>, q_hi: Vec<f64>, p_lo: Vec<f64>, p_hi: Vec<f64>) -> Result<Self> {
        let d = q_lo.len();
        if d == 0 || [q_hi.len(), p_lo.len(), p_hi.len()].iter().any(|&n| n != d) {
            return Err(Error::param("compact", "box bounds must share one dimension"));
        }
        if q_lo.iter().zip(&q_hi).chain(p_lo.iter().zip(&p_hi)).any(|(a, b)| !(a <= b)) {
            return Err(Error::param("compact", "box bounds must satisfy lo <= hi"));
        }
        Ok(CompactSet::Boxes { q_lo, q_hi, p_lo, p_hi })
    }

    /// Exact membership (closed conditions). Points outside `D` are never members.
    pub fn contains(&self, domain: &CylindricalDomain, q: &[f64], p: &[f64]) -> bool {
        if !domain.contains(q) {
            return false;
        }
        match self {
            CompactSet::Exhaustion { k } => {
                let k = *k as f64;
                norm(q) <= k && domain.signed_distance(q) >= 1.0 / k && norm(p) <= k
            }
            CompactSet::Boxes { q_lo, q_hi, p_lo, p_hi } => {
                within(q, q_lo, q_hi) && within(p, p_lo, p_hi)
            }
        }
    }

    /// Axis-aligned box containing the set, as `(q_lo, q_hi, p_lo, p_hi)`.
    pub fn bounding_box(&self, domain: &CylindricalDomain) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        match self {
            CompactSet::Exhaustion { k } => {
                let d = domain.dim();
                let k = *k as f64;
                let (mut lo, mut hi) = (vec![-k; d], vec![k; d]);
                if let Some((blo, bhi)) = domain.bounding_box() {
                    for i in 0..d {
                        lo[i] = lo[i].max(blo[i]);
                        hi[i] = hi[i].min(bhi[i]);
                    }
                }
                (lo, hi, vec![-k; d], vec![k; d])
            }
            CompactSet::Boxes { q_lo, q_hi, p_lo, p_hi } => {
                (q_lo.clone(), q_hi.clone(), p_lo.clone(), p_hi.clone())
            }
        }
    }

    /// Members of an `n`-per-axis tensor grid over the bounding box.
    pub fn grid(&self, domain: &CylindricalDomain, n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let (ql, qh, pl, ph) = self.bounding_box(domain);
        super::state::PhaseGrid::product(&ql, &qh, &pl, &ph, n)
            .points
            .into_iter()
            .filter(|(q, p)| self.contains(domain, q, p))
            .collect()
    }
}

fn within(x: &[f64], lo: &[f64], hi: &[f64]) -> bool {
    x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exhaustion_membership() {
        let o = CylindricalDomain::interval(-2.0, 2.0).unwrap();
        let k1 = CompactSet::exhaustion(1).unwrap();
        assert!(k1.contains(&o, &[0.0], &[1.0]));
        assert!(!k1.contains(&o, &[1.5], &[0.0]));
        let k2 = CompactSet::exhaustion(2).unwrap();
        assert!(k2.contains(&o, &[1.5], &[0.0]));
        assert!(!k2.contains(&o, &[1.6], &[0.0]));
        assert!(CompactSet::exhaustion(0).is_err());
    }

    #[test]
    fn box_grid_respects_domain() {
        let o = CylindricalDomain::interval(-1.0, 1.0).unwrap();
        let k = CompactSet::boxes(vec![-1.0], vec![0.5], vec![-1.0], vec![1.0]).unwrap();
        let g = k.grid(&o, 5);
        // q = -1 lies on the boundary and is excluded.
        assert!(g.iter().all(|(q, _)| q[0] > -1.0));
        assert_eq!(g.len(), 4 * 5);
    }

    proptest! {
        #[test]
        fn exhaustion_is_monotone(q in -3.0f64..3.0, q2 in -3.0f64..3.0, p in -6.0f64..6.0, k in 1u32..6) {
            let o = CylindricalDomain::ball(vec![0.0, 0.0], 2.5).unwrap();
            let a = CompactSet::exhaustion(k).unwrap();
            let b = CompactSet::exhaustion(k + 1).unwrap();
            let (qq, pp) = (vec![q, q2], vec![p, -p / 2.0]);
            if a.contains(&o, &qq, &pp) {
                prop_assert!(b.contains(&o, &qq, &pp));
            }
        }
    }
}
