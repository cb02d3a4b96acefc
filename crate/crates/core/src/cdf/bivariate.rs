//! Closed-form truncation bounds for `Pr(X ≤ q)` in two dimensions.
//!
//! On the line `βᵀx = r` write `x = rβ/‖β‖² + z c` with the unit normal
//! `c = (−β₂, β₁)/‖β‖`. Each constraint `xᵢ ≤ qᵢ` becomes
//! `z cᵢ ≤ qᵢ − rβᵢ/‖β‖²`, an upper bound on `z` when `cᵢ > 0`, a lower bound
//! when `cᵢ < 0` and a bound on `r` alone when `cᵢ = 0`. The feasible `z` is
//! therefore an interval whose ends are a max (lower) or min (upper) of at
//! most two affine functions of `r`.

use std::fmt;

use serde::Serialize;

use super::{radius_bounds, RadialBounds};
use crate::error::{check_dim, Error, Result};
use crate::sampling::Rotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundCase {
    #[serde(rename = "PP")]
    PosPos,
    #[serde(rename = "NP_out")]
    NegPosOutside,
    #[serde(rename = "NP_in")]
    NegPosInside,
    #[serde(rename = "PN")]
    PosNeg,
    #[serde(rename = "NN")]
    NegNeg,
    #[serde(rename = "B1_zero_pos")]
    FirstZeroPos,
    #[serde(rename = "B1_zero_neg")]
    FirstZeroNeg,
    #[serde(rename = "B2_zero_pos")]
    SecondZeroPos,
    #[serde(rename = "B2_zero_neg")]
    SecondZeroNeg,
    #[serde(rename = "ZERO_PROB")]
    ZeroProb,
}

impl fmt::Display for BoundCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::PosPos => "PP",
            Self::NegPosOutside => "NP_out",
            Self::NegPosInside => "NP_in",
            Self::PosNeg => "PN",
            Self::NegNeg => "NN",
            Self::FirstZeroPos => "B1_zero_pos",
            Self::FirstZeroNeg => "B1_zero_neg",
            Self::SecondZeroPos => "B2_zero_pos",
            Self::SecondZeroNeg => "B2_zero_neg",
            Self::ZeroProb => "ZERO_PROB",
        };
        f.write_str(s)
    }
}

/// `r ↦ slope·r + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Affine {
    pub slope: f64,
    pub intercept: f64,
}

impl Affine {
    pub fn at(&self, r: f64) -> f64 {
        self.slope * r + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BivariateBounds {
    pub case: BoundCase,
    pub radial: RadialBounds,
    /// The unit vector `c` defining `z = cᵀx`.
    pub direction: [f64; 2],
    /// `z_min(r)` is the largest of these, `−∞` when empty.
    pub lower: Vec<Affine>,
    /// `z_max(r)` is the smallest of these, `+∞` when empty.
    pub upper: Vec<Affine>,
}

impl BivariateBounds {
    pub fn z_min(&self, r: f64) -> f64 {
        self.lower.iter().map(|a| a.at(r)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn z_max(&self, r: f64) -> f64 {
        self.upper.iter().map(|a| a.at(r)).fold(f64::INFINITY, f64::min)
    }

    /// The interval for `z = Q₂x` under a given rotation, whose single row
    /// is `±c`.
    pub fn interval_for(&self, rotation: &Rotation, r: f64) -> (f64, f64) {
        let q2 = rotation.q2();
        let s = q2[(0, 0)] * self.direction[0] + q2[(0, 1)] * self.direction[1];
        if s >= 0.0 {
            (self.z_min(r), self.z_max(r))
        } else {
            (-self.z_max(r), -self.z_min(r))
        }
    }

    /// Corners of the feasible triangle on the axes `x₁ = q₁` and `x₂ = q₂`
    /// when both direction entries are nonzero.
    pub fn vertices(&self, beta: &[f64], q: &[f64]) -> Option<([f64; 2], [f64; 2])> {
        if beta[0] == 0.0 || beta[1] == 0.0 {
            return None;
        }
        Some((
            [q[0], -beta[0] * q[0] / beta[1]],
            [-beta[1] * q[1] / beta[0], q[1]],
        ))
    }
}

pub fn bivariate_bounds(beta: &[f64], q: &[f64]) -> Result<BivariateBounds> {
    check_dim(2, beta.len())?;
    check_dim(2, q.len())?;
    let (b1, b2) = (beta[0], beta[1]);
    if b1 == 0.0 && b2 == 0.0 {
        return Err(Error::InvalidParameter("direction vector is zero".into()));
    }
    let radial = radius_bounds(beta, q);
    let inside = b1 * q[0] + b2 * q[1] > 0.0;
    let case = if radial.r_max <= radial.r_min {
        BoundCase::ZeroProb
    } else {
        match (b1.partial_cmp(&0.0).unwrap(), b2.partial_cmp(&0.0).unwrap()) {
            (std::cmp::Ordering::Greater, std::cmp::Ordering::Greater) => BoundCase::PosPos,
            (std::cmp::Ordering::Less, std::cmp::Ordering::Greater) => {
                if inside {
                    BoundCase::NegPosInside
                } else {
                    BoundCase::NegPosOutside
                }
            }
            (std::cmp::Ordering::Greater, std::cmp::Ordering::Less) => BoundCase::PosNeg,
            (std::cmp::Ordering::Less, std::cmp::Ordering::Less) => BoundCase::NegNeg,
            (std::cmp::Ordering::Equal, std::cmp::Ordering::Greater) => BoundCase::FirstZeroPos,
            (std::cmp::Ordering::Equal, _) => BoundCase::FirstZeroNeg,
            (std::cmp::Ordering::Greater, _) => BoundCase::SecondZeroPos,
            (std::cmp::Ordering::Less, _) => BoundCase::SecondZeroNeg,
        }
    };
    let norm_sq = b1 * b1 + b2 * b2;
    let norm = norm_sq.sqrt();
    let c = [-b2 / norm, b1 / norm];
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for i in 0..2 {
        if c[i] == 0.0 {
            continue;
        }
        let piece = Affine {
            slope: -beta[i] / (norm_sq * c[i]),
            intercept: q[i] / c[i],
        };
        if c[i] > 0.0 {
            upper.push(piece);
        } else {
            lower.push(piece);
        }
    }
    Ok(BivariateBounds {
        case,
        radial,
        direction: c,
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_quadrant_triangle() {
        let b = bivariate_bounds(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(b.case, BoundCase::PosPos);
        assert_eq!(b.radial.r_max, 2.0);
        let (v1, v2) = b.vertices(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!((v1, v2), ([1.0, -1.0], [-1.0, 1.0]));
        let proj = |v: [f64; 2]| b.direction[0] * v[0] + b.direction[1] * v[1];
        assert!((b.z_min(0.0) - proj(v1)).abs() < 1e-15);
        assert!((b.z_max(0.0) - proj(v2)).abs() < 1e-15);
        // The apex r = βᵀq collapses the interval.
        assert!((b.z_min(2.0) - b.z_max(2.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_first_entry() {
        let b = bivariate_bounds(&[0.0, 1.0], &[3.0, 2.0]).unwrap();
        assert_eq!(b.case, BoundCase::FirstZeroPos);
        assert_eq!((b.radial.r_min, b.radial.r_max), (0.0, 2.0));
        assert_eq!(b.z_min(0.7), -3.0);
        assert_eq!(b.z_max(0.7), f64::INFINITY);
    }

    #[test]
    fn zero_probability_geometry() {
        let b = bivariate_bounds(&[1.0, 1.0], &[-1.0, -1.0]).unwrap();
        assert_eq!(b.case, BoundCase::ZeroProb);
        let b = bivariate_bounds(&[0.0, 2.0], &[1.0, -1.0]).unwrap();
        assert_eq!(b.case, BoundCase::ZeroProb);
    }

    #[test]
    fn case_labels() {
        let case = |b: [f64; 2], q: [f64; 2]| bivariate_bounds(&b, &q).unwrap().case;
        assert_eq!(case([-1.0, 1.0], [-1.0, 1.0]), BoundCase::NegPosInside);
        assert_eq!(case([-1.0, 1.0], [1.0, -1.0]), BoundCase::NegPosOutside);
        assert_eq!(case([1.0, -1.0], [1.0, 1.0]), BoundCase::PosNeg);
        assert_eq!(case([-1.0, -1.0], [-1.0, -3.0]), BoundCase::NegNeg);
        assert_eq!(case([0.0, -1.0], [1.0, -1.0]), BoundCase::FirstZeroNeg);
        assert_eq!(case([2.0, 0.0], [1.0, -1.0]), BoundCase::SecondZeroPos);
        assert_eq!(case([-2.0, 0.0], [1.0, -1.0]), BoundCase::SecondZeroNeg);
        assert_eq!(case([-1.0, -1.0], [-1.0, -3.0]).to_string(), "NN");
    }

    #[test]
    fn interval_is_ordered_on_its_range() {
        for (b, q) in [
            ([1.0, 2.0], [1.0, 0.5]),
            ([-1.0, 0.5], [2.0, 1.0]),
            ([0.3, -1.0], [-1.0, 1.0]),
            ([-1.0, -2.0], [-1.0, -1.0]),
        ] {
            let bb = bivariate_bounds(&b, &q).unwrap();
            let lo = bb.radial.r_min;
            let hi = if bb.radial.r_max.is_finite() { bb.radial.r_max } else { lo + 50.0 };
            for k in 0..100 {
                let r = lo + (hi - lo) * k as f64 / 99.0;
                let (a, c) = (bb.z_min(r), bb.z_max(r));
                if a.is_finite() && c.is_finite() {
                    assert!(a <= c + 1e-12, "{b:?} {q:?} r={r}");
                }
            }
        }
    }
}
