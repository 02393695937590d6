use std::sync::Arc;

use bifol::circle::CircleLift;
use bifol::foliation::{grid_invert, Foliation, GridHomeomorphism, HalfLine, Sense, TraceOptions};
use bifol::geom::Vec2;
use bifol::straighten::{
    oblique_projection, straighten_pipeline, straighten_suspension_beta, LeafSides, StraighteningParams,
    Stage, StraightenError, StraighteningResult,
};
use nalgebra::{Matrix2, Vector2, SVD};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(v: (f64, f64)) -> HalfLine {
    HalfLine::from_vector(Vec2::new(v.0, v.1)).unwrap()
}

fn direction() -> impl Strategy<Value = HalfLine> {
    (0.0..std::f64::consts::TAU).prop_map(HalfLine::from_angle)
}

/// Largest distance of `pts` from their total-least-squares line.
fn straightness(pts: &[Vec2]) -> f64 {
    let n = pts.len() as f64;
    let (cx, cy) = (pts.iter().map(|p| p.x).sum::<f64>() / n, pts.iter().map(|p| p.y).sum::<f64>() / n);
    let m = nalgebra::DMatrix::from_fn(pts.len(), 2, |i, j| if j == 0 { pts[i].x - cx } else { pts[i].y - cy });
    let svd = SVD::new(m, false, true);
    let vt = svd.v_t.unwrap();
    let k = if svd.singular_values[0] >= svd.singular_values[1] { 1 } else { 0 };
    let normal = (vt[(k, 0)], vt[(k, 1)]);
    pts.iter().map(|p| ((p.x - cx) * normal.0 + (p.y - cy) * normal.1).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn projection_is_idempotent(da in direction(), db in direction(), p in (-2.0..2.0f64, -2.0..2.0f64), x in (-5.0..5.0f64, -5.0..5.0f64)) {
        prop_assume!(da.vector().cross(db.vector()).abs() > 0.05);
        let p = Vec2::new(p.0, p.1);
        let once = oblique_projection(p, &da, &db, Vec2::new(x.0, x.1)).unwrap();
        let twice = oblique_projection(p, &da, &db, once).unwrap();
        prop_assert!((once - twice).norm() < 1e-12);
    }

    #[test]
    fn projection_matches_direct_solve(x in (-5.0..5.0f64, -5.0..5.0f64)) {
        let da = unit((1.0, 2f64.sqrt() - 1.0));
        let db = unit((1.0, -(3f64.sqrt() - 1.0)));
        let (a, b) = (da.vector(), db.vector());
        // x = s·a + t·b; the projection keeps s·a
        let m = Matrix2::new(a.x, b.x, a.y, b.y);
        let st = m.lu().solve(&Vector2::new(x.0, x.1)).unwrap();
        let got = oblique_projection(Vec2::ZERO, &da, &db, Vec2::new(x.0, x.1)).unwrap();
        prop_assert!((got.x - st[0] * a.x).abs() < 1e-13 && (got.y - st[0] * a.y).abs() < 1e-13);
    }
}

#[test]
fn arnold_suspension_is_straightened_by_stage_one() {
    let beta = Foliation::suspension_v(CircleLift::arnold(0.3, 0.8).unwrap());
    let params = StraighteningParams::default();
    let out = straighten_suspension_beta(&beta, &params).unwrap();
    assert!(out.phi.linear().is_identity());
    let opts = TraceOptions { max_step: 1.0 / 256.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..64 {
        let q = Vec2::new(rng.gen(), rng.gen());
        let arc = beta.leaf(q, Sense::Forward).trace(0.5, &opts).unwrap();
        let pushed: Vec<Vec2> = arc.points.iter().map(|&p| out.phi.apply(p)).collect();
        worst = worst.max(straightness(&pushed));
    }
    eprintln!("stage one straightness {worst:.3e}");
    assert!(worst <= 5e-3, "{worst}");
}

fn sheared_pair(n: usize, a: f64) -> (Foliation, Foliation, Arc<GridHomeomorphism>) {
    let psi = Arc::new(GridHomeomorphism::shear(n, a, a).unwrap());
    let inv = Arc::new(grid_invert(&psi).unwrap());
    let push = |v: (f64, f64)| Foliation::pushforward_with_inverse(Foliation::linear(unit(v)), psi.clone(), inv.clone());
    (push((1.0, 2f64.sqrt() - 1.0)), push((1.0, -(3f64.sqrt() - 1.0))), inv)
}

fn run(alpha: &Foliation, beta: &Foliation, n: usize, l: f64, sides: LeafSides) -> StraighteningResult {
    let params = StraighteningParams {
        resolution: n,
        leaf_budget: l,
        sides,
        ..Default::default()
    };
    let r = straighten_pipeline(alpha, beta, &params).unwrap();
    assert!(r.quality.basepoint_residual <= 1e-9);
    assert!(r.quality.h1_identity);
    r
}

fn pushed_line(v: (f64, f64)) -> Foliation {
    let psi = Arc::new(GridHomeomorphism::shear(256, 0.03, 0.03).unwrap());
    let inv = Arc::new(grid_invert(&psi).unwrap());
    Foliation::pushforward_with_inverse(Foliation::linear(unit(v)), psi, inv)
}

#[test]
fn closed_vertical_partner_is_refused() {
    let alpha = Foliation::suspension_h(CircleLift::arnold(0.3, 0.8).unwrap());
    let params = StraighteningParams::default();
    let Err(err) = straighten_pipeline(&alpha, &pushed_line((0.0, 1.0)), &params) else {
        panic!("closed leaves accepted");
    };
    assert_eq!(err.stage, Stage::Suspension);
    assert!(matches!(err.source, StraightenError::NonMinimal { which: "beta", .. }), "{err}");
}

#[test]
fn suspension_alpha_with_pushed_irrational_beta_verifies() {
    let alpha = Foliation::suspension_h(CircleLift::arnold(0.3, 0.8).unwrap());
    let beta = pushed_line((2f64.sqrt() - 1.0, 1.0));
    let r = run(&alpha, &beta, 256, 2000.0, LeafSides::Both);
    let v = &r.verification;
    eprintln!("suspension pair verification {v:?}, flags {:?}", r.quality.flags);
    for res in [v.alpha, v.beta] {
        assert!(res.max_perpendicular <= 1e-2 && res.max_angle <= 1e-2, "{res:?}");
    }
    assert!(v.pass);
}

#[test]
fn both_leaf_orientations_give_the_same_map() {
    let (alpha, beta, truth) = sheared_pair(128, 0.08 / 2f64.sqrt());
    let fwd = run(&alpha, &beta, 128, 1000.0, LeafSides::Forward);
    let bwd = run(&alpha, &beta, 128, 1000.0, LeafSides::Backward);
    let d = fwd.phi.sup_distance(&bwd.phi);
    let (ef, eb) = (fwd.phi.sup_distance(&truth), bwd.phi.sup_distance(&truth));
    eprintln!("orientations differ by {d:.3e}; errors {ef:.3e} {eb:.3e}; gaps {:.3e} {:.3e}", fwd.quality.max_gap, bwd.quality.max_gap);
    assert!(d <= fwd.quality.max_gap + bwd.quality.max_gap, "{d}");
}

#[test]
fn refinement_does_not_increase_residuals() {
    let a = 0.08 / 2f64.sqrt();
    let mut prev: Option<[f64; 5]> = None;
    for (n, l) in [(128, 1000.0), (256, 2000.0), (512, 4000.0)] {
        let (alpha, beta, truth) = sheared_pair(n, a);
        let r = run(&alpha, &beta, n, l, LeafSides::Both);
        let v = &r.verification;
        let cur = [
            v.alpha.max_perpendicular,
            v.alpha.max_angle,
            v.beta.max_perpendicular,
            v.beta.max_angle,
            r.phi.sup_distance(&truth),
        ];
        eprintln!("N={n} L={l}: {cur:?} fiber {:.1e}", r.quality.fiber_residual);
        // lifted coordinates reach |x| ~ L, so round-off scales with L
        assert!(r.quality.fiber_residual <= 16.0 * f64::EPSILON * l);
        if let Some(p) = prev {
            for k in 0..5 {
                assert!(cur[k] <= 1.2 * p[k], "residual {k}: {} -> {}", p[k], cur[k]);
            }
            assert!(cur[4] < p[4]);
        }
        prev = Some(cur);
    }
}
