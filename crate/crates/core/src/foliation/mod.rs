//! Concrete oriented foliations of T² and torus homeomorphisms.
//!
//! Every algorithm downstream consumes a foliation only through its leaves:
//! [`Foliation::leaf`] returns a parametrized lifted leaf that can be traced,
//! intersected with sections, or sampled for tangents.

mod format;
mod grid;
mod leaf;
mod section;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circle::{invert_degree_one, CircleError, CircleLift};
use crate::geom::Vec2;

pub use format::{read_grid, write_grid, FormatError, GridFormat};
pub use grid::{grid_compose, grid_invert, GridHomeomorphism};
pub use leaf::{Axis, Crossing, Leaf, LiftedPolyline, Sense, TraceOptions};
pub use section::{first_return, FirstReturn, Section, SectionOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FoliationError {
    #[error("direction vector must be non-zero and finite")]
    InvalidDirection,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid of resolution {n} needs {expected} samples, got {got}")]
    GridSize { n: usize, expected: usize, got: usize },
    #[error("grid displacement contains a non-finite sample at node {0}")]
    NonFiniteGrid(usize),
    #[error("grid map is not locally injective in cell ({i}, {j}): corner Jacobian determinant {det}")]
    NotLocallyInjective { i: usize, j: usize, det: f64 },
    #[error("grid map is not invertible at resolution {n}: node ({i}, {j}) residual {residual:e}")]
    NotInvertible { n: usize, i: usize, j: usize, residual: f64 },
    #[error("leaf from section knot {index} did not return within arclength {budget}")]
    NonSection { index: usize, budget: f64 },
    #[error("section is not transverse: first-return samples fail monotonicity at knot {index}")]
    TransversalityViolation { index: usize },
    #[error("leaf tracing step collapsed near parameter {0}")]
    StepUnderflow(f64),
    #[error(transparent)]
    Circle(#[from] CircleError),
}

/// Oriented direction in R², an element of P⁺(R²): `ψ` and `ψ + π` differ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfLine {
    c: f64,
    s: f64,
}

impl HalfLine {
    pub fn from_vector(v: Vec2) -> Result<Self, FoliationError> {
        let u = v.normalized().ok_or(FoliationError::InvalidDirection)?;
        Ok(HalfLine { c: u.x, s: u.y })
    }

    pub fn from_angle(psi: f64) -> Self {
        HalfLine {
            c: psi.cos(),
            s: psi.sin(),
        }
    }

    pub fn vector(&self) -> Vec2 {
        Vec2::new(self.c, self.s)
    }

    /// Angle in [0, 2π).
    pub fn angle(&self) -> f64 {
        let a = self.s.atan2(self.c);
        if a < 0.0 {
            a + std::f64::consts::TAU
        } else {
            a
        }
    }

    /// Unsigned angle between the two half-lines, in [0, π].
    pub fn angle_to(&self, o: &HalfLine) -> f64 {
        let (a, b) = (self.vector(), o.vector());
        a.cross(b).atan2(a.dot(b)).abs()
    }

    pub fn opposite(&self) -> HalfLine {
        HalfLine {
            c: -self.c,
            s: -self.s,
        }
    }

    /// Slope `s / c` of the underlying line.
    pub fn slope(&self) -> f64 {
        self.s / self.c
    }
}

#[derive(Clone, Debug)]
pub enum FoliationKind {
    Linear(HalfLine),
    /// Suspension of `T` along the horizontal direction: leaves cross the vertical
    /// circle `{0} × S¹` with first return `T`.
    SuspensionH(CircleLift),
    /// Coordinates swapped: leaves cross `S¹ × {0}` with first return `S`.
    SuspensionV(CircleLift),
    Pushforward {
        base: Box<Foliation>,
        map: Arc<GridHomeomorphism>,
        inverse: Arc<GridHomeomorphism>,
    },
}

/// An oriented foliation of T², carried with a single global orientation flag.
#[derive(Clone, Debug)]
pub struct Foliation {
    kind: FoliationKind,
    reversed: bool,
}

impl Foliation {
    pub fn linear(direction: HalfLine) -> Self {
        Foliation {
            kind: FoliationKind::Linear(direction),
            reversed: false,
        }
    }

    pub fn linear_from(v: Vec2) -> Result<Self, FoliationError> {
        Ok(Self::linear(HalfLine::from_vector(v)?))
    }

    pub fn suspension_h(t: CircleLift) -> Self {
        Foliation {
            kind: FoliationKind::SuspensionH(t),
            reversed: false,
        }
    }

    pub fn suspension_v(s: CircleLift) -> Self {
        Foliation {
            kind: FoliationKind::SuspensionV(s),
            reversed: false,
        }
    }

    /// `map_* base`; inverts the grid map for tracing.
    pub fn pushforward(base: Foliation, map: Arc<GridHomeomorphism>) -> Result<Self, FoliationError> {
        let inverse = Arc::new(grid_invert(&map)?);
        Ok(Self::pushforward_with_inverse(base, map, inverse))
    }

    pub fn pushforward_with_inverse(
        base: Foliation,
        map: Arc<GridHomeomorphism>,
        inverse: Arc<GridHomeomorphism>,
    ) -> Self {
        Foliation {
            kind: FoliationKind::Pushforward {
                base: Box::new(base),
                map,
                inverse,
            },
            reversed: false,
        }
    }

    /// Same leaves, opposite orientation.
    pub fn reversed(mut self) -> Self {
        self.reversed = !self.reversed;
        self
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    pub fn kind(&self) -> &FoliationKind {
        &self.kind
    }

    /// Leaf direction when the foliation is linear.
    pub fn linear_direction(&self) -> Option<HalfLine> {
        match &self.kind {
            FoliationKind::Linear(l) if self.reversed => Some(l.opposite()),
            FoliationKind::Linear(l) => Some(*l),
            _ => None,
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self.kind {
            FoliationKind::Linear(_) => "linear",
            FoliationKind::SuspensionH(_) => "suspension_h",
            FoliationKind::SuspensionV(_) => "suspension_v",
            FoliationKind::Pushforward { .. } => "pushforward",
        }
    }

    fn sign(&self, sense: Sense) -> f64 {
        let s = match sense {
            Sense::Forward => 1.0,
            Sense::Backward => -1.0,
        };
        if self.reversed {
            -s
        } else {
            s
        }
    }

    /// The leaf through the lifted point `start`, parametrized in the direction `sense`.
    pub fn leaf(&self, start: Vec2, sense: Sense) -> Leaf<'_> {
        Leaf::new(self, start, self.sign(sense))
    }

    /// Oriented unit tangent of the leaf through `p`.
    pub fn tangent(&self, p: Vec2) -> Vec2 {
        let t = match &self.kind {
            FoliationKind::Linear(l) => l.vector(),
            FoliationKind::SuspensionH(t) => {
                let (y0, y1) = strip_ends(t, p.x, p.y);
                Vec2::new(1.0, y1 - y0).normalized().unwrap()
            }
            FoliationKind::SuspensionV(s) => {
                let (x0, x1) = strip_ends(s, p.y, p.x);
                Vec2::new(x1 - x0, 1.0).normalized().unwrap()
            }
            FoliationKind::Pushforward { base, map, inverse } => {
                let z = inverse.apply(p);
                let tb = base.tangent(z);
                let j = map.jacobian(z);
                Vec2::new(j[0][0] * tb.x + j[0][1] * tb.y, j[1][0] * tb.x + j[1][1] * tb.y)
                    .normalized()
                    .unwrap_or(tb)
            }
        };
        if self.reversed {
            -t
        } else {
            t
        }
    }
}

/// For a suspension of `t`, the leaf through the point with "along" coordinate
/// `along` and "across" coordinate `across` meets the strip walls at these
/// two across-values.
fn strip_ends(t: &CircleLift, along: f64, across: f64) -> (f64, f64) {
    let frac = along - along.floor();
    let y0 = invert_degree_one(|y| (1.0 - frac) * y + frac * t.eval(y), across);
    (y0, t.eval(y0))
}

/// `min |sin ∠(tα, tβ)|` over a `grid × grid` sample of the torus.
pub fn transversality_margin(alpha: &Foliation, beta: &Foliation, grid: usize) -> f64 {
    let g = grid.max(1);
    let mut margin = f64::INFINITY;
    for j in 0..g {
        for i in 0..g {
            let p = Vec2::new(i as f64 / g as f64, j as f64 / g as f64);
            let s = alpha.tangent(p).cross(beta.tangent(p)).abs();
            margin = margin.min(s);
        }
    }
    margin.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homology::IntMatrix;

    #[test]
    fn halfline_keeps_orientation() {
        let l = HalfLine::from_vector(Vec2::new(0.0, 2.0)).unwrap();
        assert_eq!(l.vector(), Vec2::new(0.0, 1.0));
        assert!((l.angle_to(&l.opposite()) - std::f64::consts::PI).abs() < 1e-15);
        assert!(HalfLine::from_vector(Vec2::ZERO).is_err());
        assert!((HalfLine::from_angle(4.0).angle() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn margins_of_axis_lines() {
        let h = Foliation::linear_from(Vec2::new(1.0, 0.0)).unwrap();
        let v = Foliation::linear_from(Vec2::new(0.0, 1.0)).unwrap();
        assert_eq!(transversality_margin(&h, &v, 8), 1.0);
        assert_eq!(transversality_margin(&h, &h, 8), 0.0);
    }

    #[test]
    fn pushed_margin_stays_close() {
        // ψ(x, y) = (x + (0.1/2π) sin 2πy, y) has Lipschitz constant 0.1
        let a = Foliation::linear_from(Vec2::new(1.0, std::f64::consts::SQRT_2 - 1.0)).unwrap();
        let amp = 0.1 / std::f64::consts::TAU;
        let psi = GridHomeomorphism::from_fn(128, IntMatrix::IDENTITY, |p| {
            Vec2::new(amp * (std::f64::consts::TAU * p.y).sin(), 0.0)
        })
        .unwrap();
        let v = Foliation::linear_from(Vec2::new(0.0, 1.0)).unwrap();
        let pushed = Foliation::pushforward(v.clone(), Arc::new(psi)).unwrap();
        let base = transversality_margin(&a, &v, 64);
        let m = transversality_margin(&a, &pushed, 64);
        // dense-grid oracle for the pushed tangent field: J·(0,1) = (0.1 cos 2πy, 1)
        let mut oracle = f64::INFINITY;
        for j in 0..512 {
            let y = j as f64 / 512.0;
            let t = Vec2::new(0.1 * (std::f64::consts::TAU * y).cos(), 1.0).normalized().unwrap();
            oracle = oracle.min(a.tangent(Vec2::ZERO).cross(t).abs());
        }
        assert!(m >= base - 0.25);
        assert!((m - oracle).abs() < 5e-3, "{m} vs {oracle}");
    }

    #[test]
    fn suspension_tangent_follows_strip() {
        let t = CircleLift::rotation(0.3).unwrap();
        let f = Foliation::suspension_h(t);
        let tan = f.tangent(Vec2::new(0.4, 0.1));
        assert!((tan.y / tan.x - 0.3).abs() < 1e-12);
        assert!(f.clone().reversed().tangent(Vec2::new(0.4, 0.1)).x < 0.0);
    }
}
