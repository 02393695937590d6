use rayon::prelude::*;

use super::{
    check_margin, verify_conjugacy, LeafSides, ObliqueProjector, QualityFlag, QualityReport, StraightenError,
    StraighteningParams, StraighteningResult, VerifyOptions,
};
use crate::circle::{minimality_density, rotation_number_enclosure, RotationEnclosure};
use crate::foliation::{first_return, Foliation, GridHomeomorphism, HalfLine, Section, SectionOptions, Sense};
use crate::geom::Vec2;
use crate::homology::{cycle_from_displacement, induced_h1, CycleEstimate, IntMatrix};

/// Stage-two output: `φ₂` and its diagnostics.
pub struct HolonomyOutput {
    pub phi: GridHomeomorphism,
    /// Target direction `dα0` of the straightened α.
    pub direction: HalfLine,
    pub enclosure: Option<RotationEnclosure>,
    pub coarse_cycle: Option<CycleEstimate>,
    pub samples: usize,
    pub max_gap: f64,
    pub mean_gap: f64,
    pub fiber_residual: f64,
    pub flags: Vec<QualityFlag>,
}

/// Samples of the basepoint leaf, ordered along the leaf.
fn trace_basepoint_leaf(
    alpha: &Foliation,
    source: Vec2,
    params: &StraighteningParams,
) -> Result<(Vec<Vec2>, Vec2, Vec2), StraightenError> {
    let opts = params.trace_options();
    let l = params.leaf_budget;
    let fwd = match params.sides {
        LeafSides::Backward => None,
        _ => Some(alpha.leaf(source, Sense::Forward).trace(l, &opts)?),
    };
    let bwd = match params.sides {
        LeafSides::Forward => None,
        _ => Some(alpha.leaf(source, Sense::Backward).trace(l, &opts)?),
    };
    let mut pts = Vec::new();
    let (start, displacement) = match (&fwd, &bwd) {
        (Some(f), _) => (f.start(), f.end() - f.start()),
        (None, Some(b)) => (b.start(), b.start() - b.end()),
        (None, None) => unreachable!(),
    };
    if let Some(b) = bwd {
        pts.extend(b.points.iter().rev());
    }
    if let Some(f) = fwd {
        let skip = usize::from(!pts.is_empty());
        pts.extend(f.points.iter().skip(skip));
    }
    Ok((pts, start, displacement))
}

/// `dα0 = A(F_α)` from a rotation enclosure of a first return, or exactly
/// for linear α.
fn alpha_direction(
    alpha: &Foliation,
    coarse: &CycleEstimate,
    params: &StraighteningParams,
) -> Result<(HalfLine, Option<RotationEnclosure>), StraightenError> {
    if let Some(l) = alpha.linear_direction() {
        return Ok((l, None));
    }
    let d = coarse.direction.vector();
    let section = if d.x.abs() >= d.y.abs() {
        Section::Vertical(0.0)
    } else {
        Section::Horizontal(0.0)
    };
    let fr = first_return(
        alpha,
        section,
        &SectionOptions {
            knots: params.section_knots,
            budget: params.section_budget,
            trace: params.trace_options(),
        },
    )?;
    let mini = minimality_density(&fr.map, 0.0, params.minimality_iterations, params.minimality_epsilon);
    if !mini.pass {
        return Err(StraightenError::NonMinimal {
            which: "alpha",
            max_gap: mini.max_gap,
        });
    }
    let enc = rotation_number_enclosure(&fr.map, params.refine_iterations)?;
    let tau = enc.center();
    let side = fr.side as f64;
    let v = match section {
        Section::Vertical(_) => Vec2::new(side, tau),
        Section::Horizontal(_) => Vec2::new(tau, side),
    };
    Ok((HalfLine::from_vector(v)?, Some(enc)))
}

/// Uniform bucket grid over `[0,1)²` holding sample indices (CSR layout).
struct BucketIndex {
    b: usize,
    start: Vec<u32>,
    items: Vec<u32>,
    wrapped: Vec<Vec2>,
}

impl BucketIndex {
    fn new(pts: &[Vec2], b: usize) -> Self {
        let wrapped: Vec<Vec2> = pts.iter().map(|p| p.wrap()).collect();
        let cell = |p: Vec2| {
            let i = ((p.x * b as f64) as usize).min(b - 1);
            let j = ((p.y * b as f64) as usize).min(b - 1);
            j * b + i
        };
        let mut count = vec![0u32; b * b + 1];
        for p in &wrapped {
            count[cell(*p) + 1] += 1;
        }
        for k in 0..b * b {
            count[k + 1] += count[k];
        }
        let start = count.clone();
        let mut fill = count;
        let mut items = vec![0u32; wrapped.len()];
        for (k, p) in wrapped.iter().enumerate() {
            let c = cell(*p);
            items[fill[c] as usize] = k as u32;
            fill[c] += 1;
        }
        BucketIndex {
            b,
            start,
            items,
            wrapped,
        }
    }

    /// Nearest sample to the torus point `q` (a cell corner), with the
    /// min-image offset `q − sample`.
    fn nearest(&self, ci: usize, cj: usize, q: Vec2) -> Option<(usize, Vec2)> {
        let b = self.b as i64;
        let cell = 1.0 / self.b as f64;
        let mut best: Option<(usize, Vec2, f64)> = None;
        for r in 0..=(b / 2 + 1) {
            for dj in -r..=r {
                for di in -r..=r {
                    if di.abs() != r && dj.abs() != r {
                        continue;
                    }
                    let i = (ci as i64 + di).rem_euclid(b) as usize;
                    let j = (cj as i64 + dj).rem_euclid(b) as usize;
                    let c = j * self.b + i;
                    for &k in &self.items[self.start[c] as usize..self.start[c + 1] as usize] {
                        let d = (q - self.wrapped[k as usize]).min_image();
                        let n = d.norm();
                        if best.map_or(true, |(_, _, bn)| n < bn) {
                            best = Some((k as usize, d, n));
                        }
                    }
                }
            }
            // unsearched cells lie at least r cells away from the corner q
            if let Some((_, _, bn)) = best {
                if bn <= r as f64 * cell {
                    break;
                }
            }
        }
        best.map(|(k, d, _)| (k, d))
    }

    /// Nearest crossings of the line `q + r·db` with leaf segments
    /// `[pts[k], pts[k+1]]` on each side, as `(r, value at the crossing)`.
    /// Segments are at most `reach` long.
    fn bracket(
        &self,
        pts: &[Vec2],
        ci: usize,
        cj: usize,
        q: Vec2,
        db: Vec2,
        reach: f64,
        value: impl Fn(Vec2) -> f64,
    ) -> Option<((f64, f64), (f64, f64))> {
        let b = self.b as i64;
        let cell = 1.0 / self.b as f64;
        let (mut lo, mut hi): (Option<(f64, f64)>, Option<(f64, f64)>) = (None, None);
        for r in 0..=(b / 2 + 1) {
            for dj in -r..=r {
                for di in -r..=r {
                    if di.abs() != r && dj.abs() != r {
                        continue;
                    }
                    let i = (ci as i64 + di).rem_euclid(b) as usize;
                    let j = (cj as i64 + dj).rem_euclid(b) as usize;
                    let c = j * self.b + i;
                    for &k in &self.items[self.start[c] as usize..self.start[c + 1] as usize] {
                        let k = k as usize;
                        if k + 1 >= pts.len() {
                            continue;
                        }
                        let e = pts[k + 1] - pts[k];
                        let den = db.cross(e);
                        if den.abs() < 1e-14 {
                            continue;
                        }
                        let ql = pts[k] + (q - self.wrapped[k]).min_image();
                        let w = pts[k] - ql;
                        let s = w.cross(db) / den;
                        if !(0.0..1.0).contains(&s) {
                            continue;
                        }
                        let t = w.cross(e) / den;
                        let y = pts[k] + s * e;
                        if t <= 0.0 && lo.map_or(true, |(r0, _)| t > r0) {
                            lo = Some((t, value(y)));
                        }
                        if t >= 0.0 && hi.map_or(true, |(r1, _)| t < r1) {
                            hi = Some((t, value(y)));
                        }
                    }
                }
            }
            // a crossing from an unsearched cell lies beyond r·cell − reach
            if let (Some(l), Some(h)) = (lo, hi) {
                if (-l.0).max(h.0) <= r as f64 * cell - reach {
                    return Some((l, h));
                }
            }
        }
        lo.zip(hi)
    }
}

/// Stage two on an α whose partner β is linear of direction `d_beta`.
///
/// The α-leaf through `source` is slid along `d_beta` onto the `dα0`-line
/// through `source`; the result is then translated so that `Φ(source) = target`.
pub fn holonomy_straighten(
    alpha: &Foliation,
    d_beta: &HalfLine,
    source: Vec2,
    target: Vec2,
    params: &StraighteningParams,
) -> Result<HolonomyOutput, StraightenError> {
    params.validate()?;
    let (pts, start, displacement) = trace_basepoint_leaf(alpha, source, params)?;
    let coarse = cycle_from_displacement(displacement, params.leaf_budget)?;
    let (direction, enclosure) = alpha_direction(alpha, &coarse, params)?;
    let mut flags = Vec::new();
    let angle = direction.angle_to(&coarse.direction);
    if angle > coarse.bound {
        flags.push(QualityFlag::CycleRefinementDisagrees {
            angle,
            bound: coarse.bound,
        });
    }

    let proj = ObliqueProjector::new(start, &direction, d_beta)?;
    let db = proj.beta();
    let fiber_residual = pts
        .par_iter()
        .step_by(16)
        .map(|&x| (proj.project(x) - x).cross(db).abs())
        .reduce(|| 0.0, f64::max);

    let n = params.resolution;
    let index = BucketIndex::new(&pts, n);
    let nf = n as f64;
    let tangent = |k: usize| {
        let (a, b) = (k.saturating_sub(1), (k + 1).min(pts.len() - 1));
        (pts[b] - pts[a]).normalized().unwrap_or(direction.vector())
    };
    let reach = pts.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max);
    // φ̃ moves leaf points along dβ by this signed amount
    let shift = |y: Vec2| (proj.project(y) - y).dot(db);
    let nodes: Vec<(Vec2, f64)> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % n, idx / n);
            let q = Vec2::new(i as f64 / nf, j as f64 / nf);
            let (k, d) = index.nearest(i, j, q).expect("non-empty sample set");
            // φ maps the β-line through q to itself; interpolate its shift
            // between the leaf strands bracketing q on that line
            if let Some(((r0, c0), (r1, c1))) = index.bracket(&pts, i, j, q, db, reach, shift) {
                let w = if r1 - r0 > 0.0 { -r0 / (r1 - r0) } else { 0.0 };
                return (((1.0 - w) * c0 + w * c1) * db, d.norm());
            }
            // first-order fallback: d = a·dβ + b·t, φ̃(x + d) ≈ proj(x) + a·dβ + b·P(t)
            let x = pts[k];
            let t = tangent(k);
            let c = db.cross(t);
            let b = if c.abs() > 1e-12 { db.cross(d) / c } else { 0.0 };
            let u = proj.project(x) - x + b * (proj.project_vector(t) - t);
            (u, d.norm())
        })
        .collect();
    let max_gap = nodes.iter().map(|n| n.1).fold(0.0, f64::max);
    let mean_gap = nodes.iter().map(|n| n.1).sum::<f64>() / nodes.len() as f64;
    if max_gap > 10.0 * params.epsilon {
        return Err(StraightenError::Coverage {
            gap: max_gap,
            limit: 10.0 * params.epsilon,
        });
    }
    if max_gap > params.epsilon {
        flags.push(QualityFlag::GapAboveEpsilon {
            gap: max_gap,
            epsilon: params.epsilon,
        });
    }
    let heuristic = 2.0 / params.leaf_budget;
    if params.epsilon < heuristic {
        flags.push(QualityFlag::EpsilonBelowHeuristic {
            epsilon: params.epsilon,
            heuristic,
        });
    }
    let raw = GridHomeomorphism::new(n, IntMatrix::IDENTITY, nodes.into_iter().map(|n| n.0).collect())?;
    let phi = raw.translated(target - raw.apply(source));
    Ok(HolonomyOutput {
        phi,
        direction,
        enclosure,
        coarse_cycle: Some(coarse),
        samples: pts.len(),
        max_gap,
        mean_gap,
        fiber_residual,
        flags,
    })
}

/// Stage two as a standalone operation on `(α, β)` with β linear.
pub fn simultaneous_straighten(
    alpha: &Foliation,
    beta: &Foliation,
    params: &StraighteningParams,
) -> Result<StraighteningResult, StraightenError> {
    params.validate()?;
    let d_beta = beta.linear_direction().ok_or(StraightenError::BetaNotLinear)?;
    let margin = check_margin(alpha, beta, params)?;
    let p = params.basepoint;
    let out = holonomy_straighten(alpha, &d_beta, p, p, params)?;
    let h1 = induced_h1(&out.phi);
    let verification = verify_conjugacy(&out.phi, alpha, beta, (out.direction, d_beta), &VerifyOptions::from_params(params));
    let mut flags = out.flags;
    if !verification.pass {
        flags.push(QualityFlag::VerificationFailed);
    }
    Ok(StraighteningResult {
        quality: QualityReport {
            max_gap: out.max_gap,
            mean_gap: out.mean_gap,
            samples: out.samples,
            basepoint_residual: (out.phi.apply(p) - p).norm(),
            induced_h1: h1,
            h1_identity: h1.is_identity(),
            transversality_margin: margin,
            alpha_direction: out.direction,
            beta_direction: d_beta,
            alpha_enclosure: out.enclosure,
            alpha_coarse_cycle: out.coarse_cycle,
            fiber_residual: out.fiber_residual,
            flags,
        },
        phi: out.phi,
        suspension: None,
        verification,
    })
}


#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;
    use std::sync::Arc;

    use super::*;
    use crate::foliation::grid_invert;

    fn slopes() -> (HalfLine, HalfLine) {
        (
            HalfLine::from_vector(Vec2::new(1.0, 2f64.sqrt() - 1.0)).unwrap(),
            HalfLine::from_vector(Vec2::new(1.0, -(3f64.sqrt() - 1.0))).unwrap(),
        )
    }

    #[test]
    fn linear_pair_gives_identity() {
        let (da, db) = slopes();
        let params = StraighteningParams {
            resolution: 32,
            leaf_budget: 300.0,
            epsilon: 0.02,
            ..Default::default()
        };
        let r = simultaneous_straighten(&Foliation::linear(da), &Foliation::linear(db), &params).unwrap();
        assert!(r.phi.sup_displacement() < 1e-10, "{}", r.phi.sup_displacement());
        assert!(r.quality.basepoint_residual < 1e-12);
        assert!(r.verification.pass);
    }

    #[test]
    fn vertical_shear_is_undone() {
        // ψ(x, y) = (x, y + 0.08 sin 2πx) keeps every vertical line, so with
        // β vertical the normalized straightening is ψ⁻¹
        let n = 64;
        let psi = Arc::new(
            GridHomeomorphism::from_fn(n, IntMatrix::IDENTITY, |p| Vec2::new(0.0, 0.08 * (TAU * p.x).sin())).unwrap(),
        );
        let truth = grid_invert(&psi).unwrap();
        let (da, _) = slopes();
        let alpha = Foliation::pushforward(Foliation::linear(da), psi).unwrap();
        let beta = Foliation::linear_from(Vec2::new(0.0, 1.0)).unwrap();
        let params = StraighteningParams {
            resolution: n,
            leaf_budget: 600.0,
            section_knots: 1024,
            refine_iterations: 2_000_000,
            ..Default::default()
        };
        let r = simultaneous_straighten(&alpha, &beta, &params).unwrap();
        assert!(r.quality.alpha_direction.angle_to(&da) < 1e-5);
        let err = r.phi.sup_distance(&truth);
        assert!(err < 5e-3, "sup distance {err}");
        assert!(r.quality.fiber_residual < 1e-12);
        assert!(r.quality.basepoint_residual < 1e-12);
        assert!(r.verification.pass, "{:?}", r.verification);
    }
}
