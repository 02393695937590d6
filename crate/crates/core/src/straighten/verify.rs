use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::StraighteningParams;
use crate::foliation::{Foliation, GridHomeomorphism, HalfLine, Sense, TraceOptions};
use crate::geom::Vec2;
use crate::homology::induced_h1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub arc_length: f64,
    pub basepoint: Vec2,
    /// Pass threshold on both deviations.
    pub tolerance: f64,
    pub trace: TraceOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            n_samples: 64,
            seed: 0,
            arc_length: 0.5,
            basepoint: Vec2::ZERO,
            tolerance: 1e-2,
            trace: TraceOptions { max_step: 1.0 / 256.0 },
        }
    }
}

impl VerifyOptions {
    pub fn from_params(p: &StraighteningParams) -> Self {
        VerifyOptions {
            n_samples: p.verify_samples,
            seed: p.seed,
            basepoint: p.basepoint,
            ..Default::default()
        }
    }
}

/// Worst straightness of pushed leaf arcs of one foliation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FoliationResidual {
    /// Largest distance of a pushed vertex from its fitted line.
    pub max_perpendicular: f64,
    /// Largest angle between a fitted line (oriented by the arc) and the target.
    pub max_angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub alpha: FoliationResidual,
    pub beta: FoliationResidual,
    pub basepoint_residual: f64,
    pub h1_identity: bool,
    pub n_samples: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Principal-axis fit: `(unit direction oriented first → last, max perpendicular distance)`.
fn fit_line(pts: &[Vec2]) -> (Vec2, f64) {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut u = Vec2::new(theta.cos(), theta.sin());
    if u.dot(pts[pts.len() - 1] - pts[0]) < 0.0 {
        u = -u;
    }
    let perp = pts.iter().map(|p| (*p - c).cross(u).abs()).fold(0.0, f64::max);
    (u, perp)
}

fn residual(
    phi: &GridHomeomorphism,
    f: &Foliation,
    target: &HalfLine,
    seeds: &[Vec2],
    opts: &VerifyOptions,
) -> FoliationResidual {
    let per: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|&q| {
            let arc = f
                .leaf(q, Sense::Forward)
                .trace(opts.arc_length, &opts.trace)
                .map(|pl| pl.points)
                .unwrap_or_default();
            if arc.len() < 2 {
                return (f64::INFINITY, std::f64::consts::PI);
            }
            let pushed: Vec<Vec2> = arc.iter().map(|&p| phi.apply(p)).collect();
            let (u, perp) = fit_line(&pushed);
            let angle = HalfLine::from_vector(u).map_or(std::f64::consts::PI, |l| l.angle_to(target));
            (perp, angle)
        })
        .collect();
    FoliationResidual {
        max_perpendicular: per.iter().map(|r| r.0).fold(0.0, f64::max),
        max_angle: per.iter().map(|r| r.1).fold(0.0, f64::max),
    }
}

/// Check that `φ` carries `(α, β)` to lines of directions `targets`.
pub fn verify_conjugacy(
    phi: &GridHomeomorphism,
    alpha: &Foliation,
    beta: &Foliation,
    targets: (HalfLine, HalfLine),
    opts: &VerifyOptions,
) -> VerificationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let seeds: Vec<Vec2> = (0..opts.n_samples.max(1))
        .map(|_| Vec2::new(rng.gen::<f64>(), rng.gen::<f64>()))
        .collect();
    let a = residual(phi, alpha, &targets.0, &seeds, opts);
    let b = residual(phi, beta, &targets.1, &seeds, opts);
    let p = opts.basepoint;
    let basepoint_residual = (phi.apply(p) - p).norm();
    let h1_identity = induced_h1(phi).is_identity();
    let tol = opts.tolerance;
    let pass = a.max_perpendicular <= tol
        && a.max_angle <= tol
        && b.max_perpendicular <= tol
        && b.max_angle <= tol
        && basepoint_residual <= 1e-9
        && h1_identity;
    VerificationReport {
        alpha: a,
        beta: b,
        basepoint_residual,
        h1_identity,
        n_samples: seeds.len(),
        tolerance: tol,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_segment() {
        let pts: Vec<Vec2> = (0..10).map(|k| Vec2::new(-(k as f64), 0.5 * k as f64)).collect();
        let (u, perp) = fit_line(&pts);
        let expect = Vec2::new(-1.0, 0.5).normalized().unwrap();
        assert!((u - expect).norm() < 1e-14);
        assert!(perp < 1e-14);
    }

    #[test]
    fn identity_on_linear_pair_is_exact() {
        let da = HalfLine::from_vector(Vec2::new(1.0, 2f64.sqrt() - 1.0)).unwrap();
        let db = HalfLine::from_vector(Vec2::new(1.0, -(3f64.sqrt() - 1.0))).unwrap();
        let id = GridHomeomorphism::identity(16);
        let r = verify_conjugacy(&id, &Foliation::linear(da), &Foliation::linear(db), (da, db), &VerifyOptions::default());
        assert!(r.pass);
        assert!(r.alpha.max_angle < 1e-12 && r.beta.max_angle < 1e-12);
        assert!(r.alpha.max_perpendicular < 1e-12 && r.beta.max_perpendicular < 1e-12);
    }
}
