//! Position-space regions `O` and the cylindrical domains `D = O x R^d` they define.
//!
//! Every region supplies a signed distance `d(q)` that is positive exactly on
//! `O`, and an outward unit normal. For boxes the signed distance is exact:
//! inside it is the distance to the nearest face, outside it is minus the
//! Euclidean distance to the box. At edges and corners the normal is the
//! normalized distance gradient when it exists (outside), otherwise the face
//! normal of the nearest (inside) or most-violated face, lowest axis first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Region {
    /// `(lo, hi)` in `d = 1`.
    Interval { lo: f64, hi: f64 },
    /// Open ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Open box `prod_i (lo_i, hi_i)`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{q : normal . q < offset}` with `normal` normalized on construction.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// `O = R^d`; never triggers an exit.
    FullSpace { dim: usize },
}

/// Cylindrical phase-space domain `D = O x R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CylindricalDomain {
    region: Region,
}

impl CylindricalDomain {
    pub fn new(region: Region) -> Result<Self> {
        let region = match region {
            Region::Interval { lo, hi } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::param("interval", "requires finite lo < hi"));
                }
                Region::Interval { lo, hi }
            }
            Region::Ball { center, radius } => {
                if center.is_empty() || !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::param("ball", "requires a center and a positive radius"));
                }
                Region::Ball { center, radius }
            }
            Region::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
                    return Err(Error::param("box", "requires lo_i < hi_i of equal dimension"));
                }
                Region::Box { lo, hi }
            }
            Region::HalfSpace { normal, offset } => {
                let n = norm(&normal);
                if normal.is_empty() || !(n > 0.0 && n.is_finite()) || !offset.is_finite() {
                    return Err(Error::param("half-space", "requires a nonzero normal"));
                }
                Region::HalfSpace {
                    normal: normal.iter().map(|x| x / n).collect(),
                    offset: offset / n,
                }
            }
            Region::FullSpace { dim } => {
                if dim == 0 {
                    return Err(Error::param("full-space", "dimension must be at least 1"));
                }
                Region::FullSpace { dim }
            }
        };
        Ok(Self { region })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(Region::Interval { lo, hi })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(Region::Ball { center, radius })
    }

    pub fn cuboid(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::new(Region::Box { lo, hi })
    }

    pub fn half_space(normal: Vec<f64>, offset: f64) -> Result<Self> {
        Self::new(Region::HalfSpace { normal, offset })
    }

    pub fn full_space(dim: usize) -> Self {
        Self {
            region: Region::FullSpace { dim: dim.max(1) },
        }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn dim(&self) -> usize {
        match &self.region {
            Region::Interval { .. } => 1,
            Region::Ball { center, .. } => center.len(),
            Region::Box { lo, .. } => lo.len(),
            Region::HalfSpace { normal, .. } => normal.len(),
            Region::FullSpace { dim } => *dim,
        }
    }

    pub fn is_full_space(&self) -> bool {
        matches!(self.region, Region::FullSpace { .. })
    }

    /// Signed distance to the boundary, positive inside `O`.
    pub fn signed_distance(&self, q: &[f64]) -> f64 {
        match &self.region {
            Region::Interval { lo, hi } => (q[0] - lo).min(hi - q[0]),
            Region::Ball { center, radius } => {
                let r: f64 = q.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                radius - r
            }
            Region::Box { lo, hi } => box_signed_distance(lo, hi, q),
            Region::HalfSpace { normal, offset } => offset - dot(normal, q),
            Region::FullSpace { .. } => f64::INFINITY,
        }
    }

    #[inline]
    pub fn contains(&self, q: &[f64]) -> bool {
        self.signed_distance(q) > 0.0
    }

    /// Outward unit normal associated with `q` (exact on the boundary).
    pub fn outward_normal(&self, q: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match &self.region {
            Region::Interval { lo, hi } => {
                if q[0] - lo <= hi - q[0] {
                    vec![-1.0]
                } else {
                    vec![1.0]
                }
            }
            Region::Ball { center, .. } => {
                let v: Vec<f64> = q.iter().zip(center).map(|(a, c)| a - c).collect();
                let r = norm(&v);
                if r > 0.0 {
                    v.iter().map(|x| x / r).collect()
                } else {
                    let mut e = vec![0.0; d];
                    e[0] = 1.0;
                    e
                }
            }
            Region::Box { lo, hi } => box_normal(lo, hi, q),
            Region::HalfSpace { normal, .. } => normal.clone(),
            Region::FullSpace { .. } => {
                let mut e = vec![0.0; d];
                e[0] = 1.0;
                e
            }
        }
    }

    /// Projection `q + d(q) n(q)` onto the boundary.
    pub fn project(&self, q: &[f64]) -> Vec<f64> {
        if self.is_full_space() {
            return q.to_vec();
        }
        if let Region::Box { lo, hi } = &self.region {
            if box_signed_distance(lo, hi, q) <= 0.0 {
                // Outside: the closest boundary point is the clamp.
                return q
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(x, (a, b))| x.clamp(*a, *b))
                    .collect();
            }
        }
        let dist = self.signed_distance(q);
        let n = self.outward_normal(q);
        let mut out: Vec<f64> = q.iter().zip(&n).map(|(x, ni)| x + dist * ni).collect();
        if let Region::Interval { lo, hi } = &self.region {
            // Snap to the exact endpoint.
            out[0] = if n[0] < 0.0 { *lo } else { *hi };
        }
        out
    }

    /// `sup_{q in O} |q|`, or `None` for unbounded regions.
    pub fn sup_norm(&self) -> Option<f64> {
        match &self.region {
            Region::Interval { lo, hi } => Some(lo.abs().max(hi.abs())),
            Region::Ball { center, radius } => Some(norm(center) + radius),
            Region::Box { lo, hi } => Some(
                lo.iter()
                    .zip(hi)
                    .map(|(a, b)| a.abs().max(b.abs()).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            ),
            Region::HalfSpace { .. } | Region::FullSpace { .. } => None,
        }
    }

    /// Axis-aligned bounding box of `O`, or `None` when unbounded.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.region {
            Region::Interval { lo, hi } => Some((vec![*lo], vec![*hi])),
            Region::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            Region::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            _ => None,
        }
    }

    /// Cell centers of an `n^d` grid on the bounding box that lie inside `O`.
    pub fn interior_grid(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        let (lo, hi) = self
            .bounding_box()
            .ok_or_else(|| Error::param("domain", "an interior grid needs a bounded region"))?;
        let axes: Vec<Vec<f64>> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| (0..n).map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64).collect())
            .collect();
        Ok(super::state::tensor(&axes)
            .into_iter()
            .filter(|q| self.contains(q))
            .collect())
    }
}

fn box_signed_distance(lo: &[f64], hi: &[f64], q: &[f64]) -> f64 {
    let mut inside = f64::INFINITY;
    let mut outside2 = 0.0;
    let mut is_out = false;
    for i in 0..lo.len() {
        let a = q[i] - lo[i];
        let b = hi[i] - q[i];
        inside = inside.min(a).min(b);
        let v = (-a).max(-b).max(0.0);
        if v > 0.0 {
            is_out = true;
        }
        outside2 += v * v;
    }
    if is_out {
        -outside2.sqrt()
    } else {
        inside
    }
}

fn box_normal(lo: &[f64], hi: &[f64], q: &[f64]) -> Vec<f64> {
    let d = lo.len();
    let excess: Vec<f64> = (0..d)
        .map(|i| {
            if q[i] < lo[i] {
                q[i] - lo[i]
            } else if q[i] > hi[i] {
                q[i] - hi[i]
            } else {
                0.0
            }
        })
        .collect();
    let e = norm(&excess);
    if e > 0.0 {
        return excess.iter().map(|x| x / e).collect();
    }
    // Inside or on the boundary: nearest face, lowest axis first on ties.
    let mut best = (f64::INFINITY, 0usize, 1.0);
    for i in 0..d {
        let a = q[i] - lo[i];
        let b = hi[i] - q[i];
        if a < best.0 {
            best = (a, i, -1.0);
        }
        if b < best.0 {
            best = (b, i, 1.0);
        }
    }
    let mut n = vec![0.0; d];
    n[best.1] = best.2;
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn domains() -> Vec<CylindricalDomain> {
        vec![
            CylindricalDomain::interval(-1.0, 2.0).unwrap(),
            CylindricalDomain::ball(vec![0.5, -0.5], 1.5).unwrap(),
            CylindricalDomain::cuboid(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap(),
            CylindricalDomain::half_space(vec![3.0, 4.0], 5.0).unwrap(),
        ]
    }

    #[test]
    fn interval_distance_and_normal() {
        let o = CylindricalDomain::interval(-1.0, 1.0).unwrap();
        assert_eq!(o.signed_distance(&[0.5]), 0.5);
        assert_eq!(o.signed_distance(&[1.5]), -0.5);
        assert_eq!(o.outward_normal(&[0.9]), vec![1.0]);
        assert_eq!(o.outward_normal(&[-1.2]), vec![-1.0]);
        assert_eq!(o.project(&[1.3]), vec![1.0]);
        assert_eq!(o.sup_norm(), Some(1.0));
    }

    #[test]
    fn box_corner_distance_is_euclidean() {
        let o = CylindricalDomain::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!((o.signed_distance(&[2.0, 2.0]) + 2f64.sqrt()).abs() < 1e-15);
        let n = o.outward_normal(&[2.0, 2.0]);
        assert!((n[0] - n[1]).abs() < 1e-15 && (norm(&n) - 1.0).abs() < 1e-15);
        // Exact corner: nearest face, lowest axis first.
        assert_eq!(o.outward_normal(&[1.0, 1.0]), vec![1.0, 0.0]);
        assert_eq!(o.project(&[2.0, 0.5]), vec![1.0, 0.5]);
    }

    #[test]
    fn full_space_never_exits() {
        let o = CylindricalDomain::full_space(2);
        assert_eq!(o.signed_distance(&[1e300, -1e300]), f64::INFINITY);
        assert!(o.contains(&[1e300, 0.0]));
        assert!(o.sup_norm().is_none());
    }

    #[test]
    fn invalid_regions_rejected() {
        assert!(CylindricalDomain::interval(1.0, 1.0).is_err());
        assert!(CylindricalDomain::ball(vec![0.0], 0.0).is_err());
        assert!(CylindricalDomain::cuboid(vec![0.0], vec![0.0, 1.0]).is_err());
        assert!(CylindricalDomain::half_space(vec![0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn interior_grid_is_inside() {
        let o = CylindricalDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let g = o.interior_grid(16).unwrap();
        assert!(!g.is_empty() && g.iter().all(|q| o.contains(q)));
    }

    proptest! {
        #[test]
        fn distance_sign_matches_membership(x in -4.0f64..4.0, y in -4.0f64..4.0) {
            for o in domains() {
                let q: Vec<f64> = if o.dim() == 1 { vec![x] } else { vec![x, y] };
                let dist = o.signed_distance(&q);
                prop_assert_eq!(dist > 0.0, o.contains(&q));
                let n = o.outward_normal(&q);
                prop_assert!((norm(&n) - 1.0).abs() < 1e-12);
                let b = o.project(&q);
                prop_assert!(o.signed_distance(&b).abs() < 1e-12);
            }
        }
    }
}
