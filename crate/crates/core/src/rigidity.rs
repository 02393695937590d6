//! Affine automorphisms of a linear bi-foliation and its integral symmetries.
//!
//! An affine `F = (F₁, F₂)` preserving the lines `y − δx = const` and
//! `y − δ′x = const` is pinned down by how it rescales and shifts the two
//! transverse coordinates:
//! `F₂ − δF₁ = a(y − δx) + b` and `F₂ − δ′F₁ = a′(y − δ′x) + b′`.

use serde::Serialize;
use thiserror::Error;

use crate::geom::Vec2;
use crate::homology::IntMatrix;

/// Entry-wise tolerance of the identity verdict.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Normalized cross-product residual accepted as an eigendirection.
pub const EIGEN_TOL: f64 = 1e-9;
pub const MAX_ENTRY_BOUND: i64 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RigidityError {
    #[error("slopes must differ (δ = δ′ = {0})")]
    DegenerateSlopes(f64),
    #[error("scale factors must be non-zero")]
    ZeroScale,
    #[error("parameters must be finite")]
    NonFinite,
    #[error("entry bound {0} outside 0..=12")]
    BoundOutOfRange(i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AffineBiFolAutomorphism {
    pub delta: f64,
    pub delta_prime: f64,
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
    /// `F₁(x, y) = f1[0]·x + f1[1]·y + f1[2]`.
    pub f1: [f64; 3],
    pub f2: [f64; 3],
    /// Linear part, row-major.
    pub m: [[f64; 2]; 2],
    pub translation: Vec2,
}

pub fn affine_from_slope_data(
    delta: f64,
    delta_prime: f64,
    a: f64,
    a_prime: f64,
    b: f64,
    b_prime: f64,
) -> Result<AffineBiFolAutomorphism, RigidityError> {
    if ![delta, delta_prime, a, a_prime, b, b_prime].iter().all(|v| v.is_finite()) {
        return Err(RigidityError::NonFinite);
    }
    if delta == delta_prime {
        return Err(RigidityError::DegenerateSlopes(delta));
    }
    if a == 0.0 || a_prime == 0.0 {
        return Err(RigidityError::ZeroScale);
    }
    let s = 1.0 / (delta - delta_prime);
    let m = [
        [s * (a * delta - a_prime * delta_prime), s * (a_prime - a)],
        [s * delta * delta_prime * (a - a_prime), s * (delta * a_prime - delta_prime * a)],
    ];
    let translation = Vec2::new(s * (b_prime - b), s * (delta * b_prime - delta_prime * b));
    Ok(AffineBiFolAutomorphism {
        delta,
        delta_prime,
        a,
        a_prime,
        b,
        b_prime,
        f1: [m[0][0], m[0][1], translation.x],
        f2: [m[1][0], m[1][1], translation.y],
        m,
        translation,
    })
}

impl AffineBiFolAutomorphism {
    pub fn apply(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            self.f1[0] * p.x + self.f1[1] * p.y + self.f1[2],
            self.f2[0] * p.x + self.f2[1] * p.y + self.f2[2],
        )
    }

    /// `self ∘ other`, for automorphisms of the same slope pair.
    pub fn compose(&self, other: &AffineBiFolAutomorphism) -> Result<AffineBiFolAutomorphism, RigidityError> {
        affine_from_slope_data(
            self.delta,
            self.delta_prime,
            self.a * other.a,
            self.a_prime * other.a_prime,
            self.a * other.b + self.b,
            self.a_prime * other.b_prime + self.b_prime,
        )
    }

    /// `M` rounded to integers when within `tol` of `GL₂(Z)`.
    pub fn integral_part(&self, tol: f64) -> Option<IntMatrix> {
        let r = self.m.map(|row| row.map(f64::round));
        let close = (0..2).all(|i| (0..2).all(|j| (self.m[i][j] - r[i][j]).abs() <= tol));
        if !close {
            return None;
        }
        IntMatrix::new(r[0][0] as i64, r[0][1] as i64, r[1][0] as i64, r[1][1] as i64).ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RigidityVerdict {
    /// `M = I` and zero translation, to 1e-12.
    pub is_identity: bool,
    /// `max |M − I|` entry-wise.
    pub m_deviation: f64,
    pub translation_norm: f64,
    /// Scales read back from `M`: `(M₁₁ + M₁₂δ′, M₁₁ + M₁₂δ)`.
    pub scales_from_m: (f64, f64),
    /// `M = I` forces `(a, a′) = (1, 1)` (checked when the origin must be fixed).
    pub theorem_consistent: bool,
    pub integral: Option<IntMatrix>,
}

pub fn rigidity_identity_check(auto: &AffineBiFolAutomorphism, require_origin_fixed: bool) -> RigidityVerdict {
    let m = &auto.m;
    let m_deviation = [m[0][0] - 1.0, m[0][1], m[1][0], m[1][1] - 1.0]
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    let translation_norm = auto.translation.norm();
    let m_identity = m_deviation <= IDENTITY_TOL;
    let scales_from_m = (
        m[0][0] + m[0][1] * auto.delta_prime,
        m[0][0] + m[0][1] * auto.delta,
    );
    let theorem_consistent = !(require_origin_fixed && m_identity)
        || ((scales_from_m.0 - 1.0).abs() <= IDENTITY_TOL && (scales_from_m.1 - 1.0).abs() <= IDENTITY_TOL);
    RigidityVerdict {
        is_identity: m_identity && translation_norm <= IDENTITY_TOL,
        m_deviation,
        translation_norm,
        scales_from_m,
        theorem_consistent,
        integral: auto.integral_part(IDENTITY_TOL),
    }
}

/// `|v × Av| / (|v| |Av|)` for `v = (1, slope)`.
pub fn eigen_residual(a: &IntMatrix, slope: f64) -> f64 {
    let v = Vec2::new(1.0, slope);
    let w = a.apply(v);
    v.cross(w).abs() / (v.norm() * w.norm())
}

/// All `A ∈ GL₂(Z)` with entries in `[−bound, bound]` having both `(1, δ)`
/// and `(1, δ′)` as eigendirections.
pub fn find_affine_symmetries(delta: f64, delta_prime: f64, bound: i64) -> Result<Vec<IntMatrix>, RigidityError> {
    if !(delta.is_finite() && delta_prime.is_finite()) {
        return Err(RigidityError::NonFinite);
    }
    if delta == delta_prime {
        return Err(RigidityError::DegenerateSlopes(delta));
    }
    if !(0..=MAX_ENTRY_BOUND).contains(&bound) {
        return Err(RigidityError::BoundOutOfRange(bound));
    }
    let mut out = Vec::new();
    let r = -bound..=bound;
    for a in r.clone() {
        for b in r.clone() {
            for c in r.clone() {
                for d in r.clone() {
                    let Ok(m) = IntMatrix::new(a, b, c, d) else { continue };
                    if eigen_residual(&m, delta) <= EIGEN_TOL && eigen_residual(&m, delta_prime) <= EIGEN_TOL {
                        out.push(m);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_scales_collapse_to_identity() {
        let f = affine_from_slope_data(0.7, -1.3, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(rigidity_identity_check(&f, true).is_identity);
        assert_eq!(f.apply(Vec2::new(0.3, 0.9)), Vec2::new(0.3, 0.9));
    }

    #[test]
    fn uniform_scaling_is_not_identity() {
        let f = affine_from_slope_data(1.5, -0.5, 2.0, 2.0, 0.0, 0.0).unwrap();
        let v = rigidity_identity_check(&f, true);
        assert!(!v.is_identity);
        assert!((f.m[0][0] - 2.0).abs() < 1e-15 && f.m[0][1].abs() < 1e-15);
        assert!((f.m[1][1] - 2.0).abs() < 1e-15 && f.m[1][0].abs() < 1e-15);
    }

    #[test]
    fn eigenpairs_cross_over() {
        // (1, δ) is scaled by a′, and (1, δ′) by a
        let f = affine_from_slope_data(0.4, -2.1, 1.7, 0.6, 0.0, 0.0).unwrap();
        let mv = |v: Vec2| Vec2::new(f.m[0][0] * v.x + f.m[0][1] * v.y, f.m[1][0] * v.x + f.m[1][1] * v.y);
        assert!((mv(Vec2::new(1.0, 0.4)) - 0.6 * Vec2::new(1.0, 0.4)).norm() < 1e-14);
        assert!((mv(Vec2::new(1.0, -2.1)) - 1.7 * Vec2::new(1.0, -2.1)).norm() < 1e-14);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            affine_from_slope_data(1.0, 1.0, 1.0, 1.0, 0.0, 0.0),
            Err(RigidityError::DegenerateSlopes(_))
        ));
        assert!(matches!(
            affine_from_slope_data(1.0, 2.0, 0.0, 1.0, 0.0, 0.0),
            Err(RigidityError::ZeroScale)
        ));
        assert!(matches!(find_affine_symmetries(0.1, 0.2, 13), Err(RigidityError::BoundOutOfRange(13))));
    }

    #[test]
    fn golden_pair_has_hyperbolic_symmetry() {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let syms = find_affine_symmetries(g, -(5f64.sqrt() + 1.0) / 2.0, 3).unwrap();
        let cat = IntMatrix::new(2, 1, 1, 1).unwrap();
        assert!(syms.contains(&cat));
        assert!(syms.contains(&IntMatrix::IDENTITY) && syms.contains(&IntMatrix::IDENTITY.neg()));
    }
}
