//! First homology of T²: integer matrices, asymptotic cycles, and the
//! GL₂(Z) action on oriented directions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::foliation::{Foliation, FoliationError, GridHomeomorphism, HalfLine, Sense, TraceOptions};
use crate::geom::Vec2;

/// Half the flat diameter of T²: length bound of a closing geodesic.
pub const CLOSING_BOUND: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomologyError {
    #[error("matrix [[{a}, {b}], [{c}, {d}]] has determinant {det}, expected ±1")]
    NotUnimodular { a: i64, b: i64, c: i64, d: i64, det: i64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CycleError {
    #[error("trace budget T_max = {t_max} must exceed 10 for a meaningful bound")]
    BudgetTooShort { t_max: f64 },
    #[error("inconclusive: displacement {norm} after arclength {length} is below 2D")]
    Inconclusive { length: f64, norm: f64 },
    #[error(transparent)]
    Foliation(#[from] FoliationError),
}

/// `[[a, b], [c, d]]` with determinant ±1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntMatrix {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl IntMatrix {
    pub const IDENTITY: IntMatrix = IntMatrix { a: 1, b: 0, c: 0, d: 1 };
    pub const DEHN_TWIST: IntMatrix = IntMatrix { a: 1, b: 1, c: 0, d: 1 };

    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Self, HomologyError> {
        let det = a * d - b * c;
        if det.abs() != 1 {
            return Err(HomologyError::NotUnimodular { a, b, c, d, det });
        }
        Ok(IntMatrix { a, b, c, d })
    }

    pub fn from_rows(r: [[i64; 2]; 2]) -> Result<Self, HomologyError> {
        Self::new(r[0][0], r[0][1], r[1][0], r[1][1])
    }

    pub fn rows(&self) -> [[i64; 2]; 2] {
        [[self.a, self.b], [self.c, self.d]]
    }

    pub fn det(&self) -> i64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> i64 {
        self.a + self.d
    }

    pub fn inverse(&self) -> IntMatrix {
        let s = self.det();
        IntMatrix {
            a: s * self.d,
            b: -s * self.b,
            c: -s * self.c,
            d: s * self.a,
        }
    }

    /// `self · o`.
    pub fn mul(&self, o: &IntMatrix) -> IntMatrix {
        IntMatrix {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    pub fn neg(&self) -> IntMatrix {
        IntMatrix {
            a: -self.a,
            b: -self.b,
            c: -self.c,
            d: -self.d,
        }
    }

    #[inline]
    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.a as f64 * v.x + self.b as f64 * v.y,
            self.c as f64 * v.x + self.d as f64 * v.y,
        )
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

/// The integer part `A` of the lift, `Φ(x + e_k) − Φ(x) = A·e_k`.
pub fn induced_h1(f: &GridHomeomorphism) -> IntMatrix {
    f.linear()
}

/// Image half-line of `l` under `A`.
pub fn act_on_halfline(a: &IntMatrix, l: &HalfLine) -> HalfLine {
    // |det A| = 1 keeps A·v non-zero
    HalfLine::from_vector(a.apply(l.vector())).expect("unimodular image of a unit vector")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionSample {
    pub length: f64,
    pub direction: HalfLine,
    /// `asin(D/|v|)`, or π when `|v| ≤ D`.
    pub bound: f64,
}

/// A direction with a rigorous angular error bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleEstimate {
    pub direction: HalfLine,
    pub length: f64,
    pub bound: f64,
    pub displacement: Vec2,
    /// Integer class of the arc closed by the shortest segment back to a
    /// lift of the base point.
    pub closed_class: [i64; 2],
    /// Directions at T/4 and T/2.
    pub intermediate: Vec<DirectionSample>,
}

impl CycleEstimate {
    pub fn agrees_with(&self, o: &CycleEstimate) -> bool {
        self.direction.angle_to(&o.direction) <= self.bound + o.bound
    }

    /// Whether `l` is within the bound of this estimate.
    pub fn contains(&self, l: &HalfLine) -> bool {
        self.direction.angle_to(l) <= self.bound
    }
}

fn angular_bound(norm: f64) -> f64 {
    if norm > CLOSING_BOUND {
        (CLOSING_BOUND / norm).asin()
    } else {
        std::f64::consts::PI
    }
}

/// Cycle estimate from the lifted displacement `v` of a leaf arc of length `length`.
pub fn cycle_from_displacement(v: Vec2, length: f64) -> Result<CycleEstimate, CycleError> {
    let norm = v.norm();
    if !(norm >= 2.0 * CLOSING_BOUND) {
        return Err(CycleError::Inconclusive { length, norm });
    }
    Ok(CycleEstimate {
        direction: HalfLine::from_vector(v).map_err(CycleError::Foliation)?,
        length,
        bound: angular_bound(norm),
        displacement: v,
        closed_class: [v.x.round() as i64, v.y.round() as i64],
        intermediate: Vec::new(),
    })
}

/// Asymptotic cycle of `f` estimated from the forward leaf through `q`.
pub fn asymptotic_cycle(
    f: &Foliation,
    q: Vec2,
    t_max: f64,
    opts: &TraceOptions,
) -> Result<CycleEstimate, CycleError> {
    if !(t_max > 10.0) || !t_max.is_finite() {
        return Err(CycleError::BudgetTooShort { t_max });
    }
    let mut leaf = f.leaf(q, Sense::Forward);
    let start = leaf.start();
    let lengths = [0.25 * t_max, 0.5 * t_max, t_max];
    let pts = leaf.points_at_lengths(&lengths, opts)?;
    let mut est = cycle_from_displacement(pts[2] - start, t_max)?;
    for k in 0..2 {
        let v = pts[k] - start;
        if let Ok(direction) = HalfLine::from_vector(v) {
            est.intermediate.push(DirectionSample {
                length: lengths[k],
                direction,
                bound: angular_bound(v.norm()),
            });
        }
    }
    Ok(est)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContinuedFraction {
    pub coeffs: Vec<u64>,
    /// The expansion hit an integer remainder to 1e-12 before `depth`.
    pub terminated: bool,
}

/// Continued-fraction coefficients `[a₁, a₂, …]` of `x = 1/(a₁ + 1/(a₂ + …))`.
pub fn continued_fraction(x: f64, depth: usize) -> ContinuedFraction {
    let mut coeffs = Vec::with_capacity(depth);
    let mut r = x - x.floor();
    let mut terminated = false;
    for _ in 0..depth.max(1) {
        if r < 1e-12 {
            terminated = true;
            break;
        }
        let y = 1.0 / r;
        let n = y.round();
        if (y - n).abs() < 1e-12 {
            coeffs.push(n as u64);
            terminated = true;
            break;
        }
        let a = y.floor();
        coeffs.push(a as u64);
        r = y - a;
    }
    ContinuedFraction { coeffs, terminated }
}
