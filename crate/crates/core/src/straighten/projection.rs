use super::StraightenError;
use crate::foliation::HalfLine;
use crate::geom::Vec2;

/// Smallest `|sin ∠(dα0, dβ)|` accepted as non-parallel.
pub const PARALLEL_TOL: f64 = 1e-12;

/// Oblique projection onto the line `p + R·dα0` along `dβ`.
#[derive(Clone, Copy, Debug)]
pub struct ObliqueProjector {
    p: Vec2,
    alpha: Vec2,
    beta: Vec2,
    inv_cross: f64,
}

impl ObliqueProjector {
    pub fn new(p: Vec2, d_alpha: &HalfLine, d_beta: &HalfLine) -> Result<Self, StraightenError> {
        let (a, b) = (d_alpha.vector(), d_beta.vector());
        let c = a.cross(b);
        if c.abs() < PARALLEL_TOL {
            return Err(StraightenError::Parallel);
        }
        Ok(ObliqueProjector {
            p,
            alpha: a,
            beta: b,
            inv_cross: 1.0 / c,
        })
    }

    /// `x = p + μ·dα0 + ν·dβ ↦ p + μ·dα0`.
    #[inline]
    pub fn project(&self, x: Vec2) -> Vec2 {
        let mu = (x - self.p).cross(self.beta) * self.inv_cross;
        self.p + mu * self.alpha
    }

    /// Linear part: the `dα0` component of `v` in the frame `(dα0, dβ)`.
    #[inline]
    pub fn project_vector(&self, v: Vec2) -> Vec2 {
        (v.cross(self.beta) * self.inv_cross) * self.alpha
    }

    pub fn alpha(&self) -> Vec2 {
        self.alpha
    }

    pub fn beta(&self) -> Vec2 {
        self.beta
    }
}

/// The point of `p + R·dα0` reached from `x` by moving along `dβ`.
pub fn oblique_projection(p: Vec2, d_alpha: &HalfLine, d_beta: &HalfLine, x: Vec2) -> Result<Vec2, StraightenError> {
    Ok(ObliqueProjector::new(p, d_alpha, d_beta)?.project(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertical_projection_drops_height() {
        let h = HalfLine::from_vector(Vec2::new(1.0, 0.0)).unwrap();
        let v = HalfLine::from_vector(Vec2::new(0.0, 1.0)).unwrap();
        let x = Vec2::new(0.37, -2.5);
        assert_eq!(oblique_projection(Vec2::ZERO, &h, &v, x).unwrap(), Vec2::new(0.37, 0.0));
        assert!(matches!(oblique_projection(Vec2::ZERO, &h, &h, x), Err(StraightenError::Parallel)));
    }

    #[test]
    fn points_on_target_line_are_fixed() {
        let a = HalfLine::from_vector(Vec2::new(1.0, 0.3)).unwrap();
        let b = HalfLine::from_vector(Vec2::new(-0.2, 1.0)).unwrap();
        let p = Vec2::new(0.1, 0.2);
        let x = p + 3.7 * a.vector();
        assert!((oblique_projection(p, &a, &b, x).unwrap() - x).norm() < 1e-15);
    }
}
