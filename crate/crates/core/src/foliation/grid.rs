use std::f64::consts::TAU;

use rayon::prelude::*;

use super::FoliationError;
use crate::geom::{wrap_unit, Vec2};
use crate::homology::IntMatrix;

/// Residual at which the per-node inverse solve is accepted.
const INVERT_TOL: f64 = 1e-13;
const INVERT_MAX_ITER: usize = 80;

/// Torus self-map given by the lift `Φ(x) = A·x + u(x)`, with the Z²-periodic
/// displacement `u` sampled on an `n × n` grid and interpolated bilinearly.
///
/// Node `(i, j)` sits at `(i/n, j/n)` and is stored at index `j * n + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridHomeomorphism {
    n: usize,
    linear: IntMatrix,
    disp: Vec<Vec2>,
}

impl GridHomeomorphism {
    pub fn new(n: usize, linear: IntMatrix, disp: Vec<Vec2>) -> Result<Self, FoliationError> {
        if n == 0 || disp.len() != n * n {
            return Err(FoliationError::GridSize {
                n,
                expected: n * n,
                got: disp.len(),
            });
        }
        if let Some(k) = disp.iter().position(|d| !d.is_finite()) {
            return Err(FoliationError::NonFiniteGrid(k));
        }
        let g = GridHomeomorphism { n, linear, disp };
        g.check_local_injectivity()?;
        Ok(g)
    }

    /// Samples `displacement(node)` at every grid node.
    pub fn from_fn(
        n: usize,
        linear: IntMatrix,
        displacement: impl Fn(Vec2) -> Vec2 + Sync,
    ) -> Result<Self, FoliationError> {
        let disp = (0..n * n)
            .into_par_iter()
            .map(|k| displacement(node_position(n, k % n, k / n)))
            .collect();
        Self::new(n, linear, disp)
    }

    pub fn identity(n: usize) -> Self {
        GridHomeomorphism {
            n,
            linear: IntMatrix::IDENTITY,
            disp: vec![Vec2::ZERO; n * n],
        }
    }

    /// Constant displacement `c`.
    pub fn translation(n: usize, c: Vec2) -> Self {
        GridHomeomorphism {
            n,
            linear: IntMatrix::IDENTITY,
            disp: vec![c; n * n],
        }
    }

    /// `(x, y + b sin 2πx) ∘ (x + a sin 2πy, y)`, fixing the origin.
    pub fn shear(n: usize, a: f64, b: f64) -> Result<Self, FoliationError> {
        Self::from_fn(n, IntMatrix::IDENTITY, |p| shear_displacement(a, b, p))
    }

    /// Dehn-twist model `(x, y) ↦ (x + g(y), y)` with `g` rising by one across
    /// the band `[lo, hi]` and locally constant elsewhere; acts on H₁ by [[1,1],[0,1]].
    pub fn dehn_twist(n: usize, lo: f64, hi: f64) -> Result<Self, FoliationError> {
        if !(0.0..1.0).contains(&lo) || hi <= lo || hi > 1.0 {
            return Err(FoliationError::InvalidParameter(format!("twist band [{lo}, {hi}]")));
        }
        let g = move |y: f64| {
            let y = wrap_unit(y);
            if y <= lo {
                0.0
            } else if y >= hi {
                1.0
            } else {
                let t = (y - lo) / (hi - lo);
                t - (TAU * t).sin() / TAU
            }
        };
        Self::from_fn(n, IntMatrix::DEHN_TWIST, move |p| Vec2::new(g(p.y) - wrap_unit(p.y), 0.0))
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn linear(&self) -> IntMatrix {
        self.linear
    }

    pub fn displacements(&self) -> &[Vec2] {
        &self.disp
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        node_position(self.n, i, j)
    }

    pub fn node_displacement(&self, i: usize, j: usize) -> Vec2 {
        self.disp[j * self.n + i]
    }

    #[inline]
    fn cell(&self, p: Vec2) -> (usize, usize, f64, f64) {
        let nf = self.n as f64;
        let sx = wrap_unit(p.x) * nf;
        let sy = wrap_unit(p.y) * nf;
        let i = (sx as usize).min(self.n - 1);
        let j = (sy as usize).min(self.n - 1);
        (i, j, sx - i as f64, sy - j as f64)
    }

    #[inline]
    fn corners(&self, i: usize, j: usize) -> [Vec2; 4] {
        let n = self.n;
        let i1 = if i + 1 == n { 0 } else { i + 1 };
        let j1 = if j + 1 == n { 0 } else { j + 1 };
        [
            self.disp[j * n + i],
            self.disp[j * n + i1],
            self.disp[j1 * n + i],
            self.disp[j1 * n + i1],
        ]
    }

    /// `Φ + c`; derivatives are unchanged, so no injectivity re-check.
    pub fn translated(&self, c: Vec2) -> GridHomeomorphism {
        GridHomeomorphism {
            n: self.n,
            linear: self.linear,
            disp: self.disp.iter().map(|&u| u + c).collect(),
        }
    }

    /// Periodic displacement `u(p)`.
    #[inline]
    pub fn displacement(&self, p: Vec2) -> Vec2 {
        let (i, j, tx, ty) = self.cell(p);
        let [u00, u10, u01, u11] = self.corners(i, j);
        (1.0 - ty) * ((1.0 - tx) * u00 + tx * u10) + ty * ((1.0 - tx) * u01 + tx * u11)
    }

    /// The lift `Φ(p) = A p + u(p)`.
    #[inline]
    pub fn apply(&self, p: Vec2) -> Vec2 {
        self.linear.apply(p) + self.displacement(p)
    }

    /// Jacobian of the lift at `p`, row-major, one-sided on cell walls.
    pub fn jacobian(&self, p: Vec2) -> [[f64; 2]; 2] {
        let (i, j, tx, ty) = self.cell(p);
        self.cell_jacobian(i, j, tx, ty)
    }

    fn cell_jacobian(&self, i: usize, j: usize, tx: f64, ty: f64) -> [[f64; 2]; 2] {
        let nf = self.n as f64;
        let [u00, u10, u01, u11] = self.corners(i, j);
        let dx = nf * ((1.0 - ty) * (u10 - u00) + ty * (u11 - u01));
        let dy = nf * ((1.0 - tx) * (u01 - u00) + tx * (u11 - u10));
        let a = self.linear;
        [
            [a.a as f64 + dx.x, a.b as f64 + dy.x],
            [a.c as f64 + dx.y, a.d as f64 + dy.y],
        ]
    }

    /// On each cell the Jacobian determinant is bilinear in the cell
    /// coordinates, so its sign is controlled by the four corners.
    fn check_local_injectivity(&self) -> Result<(), FoliationError> {
        let sign = self.linear.det() as f64;
        for j in 0..self.n {
            for i in 0..self.n {
                for (tx, ty) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                    let m = self.cell_jacobian(i, j, tx, ty);
                    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                    if det * sign <= 0.0 || !det.is_finite() {
                        return Err(FoliationError::NotLocallyInjective { i, j, det });
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest operator norm of the Jacobian over cell corners.
    pub fn lipschitz_bound(&self) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.n {
            for i in 0..self.n {
                for (tx, ty) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                    best = best.max(operator_norm(self.cell_jacobian(i, j, tx, ty)));
                }
            }
        }
        best
    }

    /// `max |u|` over the nodes.
    pub fn sup_displacement(&self) -> f64 {
        self.disp.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }

    /// Sup over the nodes of the finer grid of `|Φ(x) - Ψ(x)|`, for maps with
    /// the same integer part.
    pub fn sup_distance(&self, other: &GridHomeomorphism) -> f64 {
        let fine = if self.n >= other.n { self } else { other };
        let n = fine.n;
        (0..n * n)
            .map(|k| {
                let p = node_position(n, k % n, k / n);
                (self.apply(p) - other.apply(p)).norm()
            })
            .fold(0.0, f64::max)
    }
}

#[inline]
fn node_position(n: usize, i: usize, j: usize) -> Vec2 {
    Vec2::new(i as f64 / n as f64, j as f64 / n as f64)
}

fn operator_norm(m: [[f64; 2]; 2]) -> f64 {
    // largest singular value of a 2×2 matrix
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    (0.5 * (s + (s * s - 4.0 * det * det).max(0.0).sqrt())).sqrt()
}

pub(crate) fn shear_displacement(a: f64, b: f64, p: Vec2) -> Vec2 {
    let dx = a * (TAU * p.y).sin();
    Vec2::new(dx, b * (TAU * (p.x + dx)).sin())
}

/// Samples `ψ⁻¹` at the grid nodes by solving `Φ(x) = node` per node
/// (fixed-point start, then damped Newton on the bilinear lift).
pub fn grid_invert(psi: &GridHomeomorphism) -> Result<GridHomeomorphism, FoliationError> {
    let n = psi.n;
    let inv_a = psi.linear.inverse();
    let rows: Vec<Result<Vec<Vec2>, FoliationError>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut out = Vec::with_capacity(n);
            let mut guess: Option<Vec2> = None;
            for i in 0..n {
                let y = node_position(n, i, j);
                let x = solve_node(psi, inv_a, y, guess).map_err(|residual| {
                    FoliationError::NotInvertible { n, i, j, residual }
                })?;
                guess = Some(x + Vec2::new(1.0 / n as f64, 0.0));
                out.push(x - inv_a.apply(y));
            }
            Ok(out)
        })
        .collect();
    let mut disp = Vec::with_capacity(n * n);
    for r in rows {
        disp.extend(r?);
    }
    GridHomeomorphism::new(n, inv_a, disp)
}

fn solve_node(psi: &GridHomeomorphism, inv_a: IntMatrix, y: Vec2, guess: Option<Vec2>) -> Result<Vec2, f64> {
    let fixed_point = |x: Vec2| inv_a.apply(y - psi.displacement(x));
    let mut x = match guess {
        Some(g) => g,
        None => {
            let mut x = inv_a.apply(y);
            for _ in 0..8 {
                x = fixed_point(x);
            }
            x
        }
    };
    let mut r = psi.apply(x) - y;
    for _ in 0..INVERT_MAX_ITER {
        if r.norm() <= INVERT_TOL {
            return Ok(x);
        }
        let m = psi.jacobian(x);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let step = if det.abs() > 1e-300 {
            Vec2::new(
                (m[1][1] * r.x - m[0][1] * r.y) / det,
                (-m[1][0] * r.x + m[0][0] * r.y) / det,
            )
        } else {
            x - fixed_point(x)
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = x - lambda * step;
            let rc = psi.apply(cand) - y;
            if rc.norm() < r.norm() {
                x = cand;
                r = rc;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // Newton stalls on a cell wall; fall back to a damped fixed-point step
            let cand = 0.5 * (x + fixed_point(x));
            let rc = psi.apply(cand) - y;
            if rc.norm() >= r.norm() {
                break;
            }
            x = cand;
            r = rc;
        }
    }
    if r.norm() <= INVERT_TOL {
        Ok(x)
    } else {
        Err(r.norm())
    }
}

/// Samples `φ₂ ∘ φ₁` on the finer of the two grids; integer parts multiply.
///
/// Off-node values are re-interpolated, so the result differs from the exact
/// composition by the O(n⁻²) bilinear bias for smooth inputs.
pub fn grid_compose(
    phi2: &GridHomeomorphism,
    phi1: &GridHomeomorphism,
) -> Result<GridHomeomorphism, FoliationError> {
    let n = phi1.n.max(phi2.n);
    let a = phi2.linear.mul(&phi1.linear);
    GridHomeomorphism::from_fn(n, a, |p| phi2.apply(phi1.apply(p)) - a.apply(p))
}
