use rayon::prelude::*;

use super::{StraightenError, StraighteningParams, SuspensionReport};
use crate::circle::{conjugacy_to_rotation, minimality_density, CircleError, CircleLift};
use crate::foliation::{Axis, Foliation, FoliationError, GridHomeomorphism, HalfLine, Sense};
use crate::geom::Vec2;
use crate::homology::IntMatrix;

pub struct SuspensionOutput {
    /// `φ₁`, preserving every horizontal circle.
    pub phi: GridHomeomorphism,
    pub report: SuspensionReport,
}

/// `min |t_β · e_y|` over the margin grid, with the common sign of `t_β · e_y`.
fn horizontal_margin(beta: &Foliation, grid: usize) -> (f64, i32) {
    let g = grid.max(1);
    let (mut margin, mut pos, mut neg) = (f64::INFINITY, false, false);
    for j in 0..g {
        for i in 0..g {
            let t = beta.tangent(Vec2::new(i as f64 / g as f64, j as f64 / g as f64));
            margin = margin.min(t.y.abs());
            pos |= t.y > 0.0;
            neg |= t.y < 0.0;
        }
    }
    match (pos, neg) {
        (true, false) => (margin, 1),
        (false, true) => (margin, -1),
        _ => (0.0, 0),
    }
}

/// Lifted x-coordinates where the upward β-leaf from `(x, 0)` meets `y = j/n`,
/// for `j = 0..=n`.
fn level_crossings(
    beta: &Foliation,
    x: f64,
    sense: Sense,
    n: usize,
    index: usize,
    params: &StraighteningParams,
) -> Result<Vec<f64>, FoliationError> {
    let opts = params.trace_options();
    let mut leaf = beta.leaf(Vec2::new(x, 0.0), sense);
    let mut st = leaf.begin(&opts);
    let mut out = Vec::with_capacity(n + 1);
    out.push(x);
    let mut next = 1;
    while next <= n {
        if st.cum > params.section_budget {
            return Err(FoliationError::NonSection {
                index,
                budget: params.section_budget,
            });
        }
        let prev = st;
        leaf.step(&mut st, &opts)?;
        if st.p.y < prev.p.y {
            return Err(FoliationError::TransversalityViolation { index });
        }
        while next <= n && st.p.y >= next as f64 / n as f64 {
            let level = next as f64 / n as f64;
            out.push(leaf.refine_crossing(Axis::Y, level, &prev, &st).point.x);
            next += 1;
        }
    }
    Ok(out)
}

/// Solve `X(x̃) = target` for the degree-one monotone map sampled at
/// `knots[k] ↦ row[k]`.
fn invert_row(knots: &[f64], row: &[f64], target: f64) -> f64 {
    let m = row.len();
    let c = (target - row[0]).floor();
    let t = target - c;
    let k = row.partition_point(|&v| v <= t).max(1);
    let (x0, v0, x1, v1) = if k >= m {
        (knots[m - 1], row[m - 1], knots[0] + 1.0, row[0] + 1.0)
    } else {
        (knots[k - 1], row[k - 1], knots[k], row[k])
    };
    let w = if v1 > v0 { (t - v0) / (v1 - v0) } else { 0.0 };
    c + x0 + w * (x1 - x0)
}

/// `φ₁` with `φ₁_* β` linear of direction `±(ρ(S), 1)`: the β-leaf from
/// `(x, 0)` is sent to the segment from `(h(x), 0)` to `(h(x) + τ, 1)`, the
/// point at height `y` going to height `y`.
pub fn straighten_suspension_beta(
    beta: &Foliation,
    params: &StraighteningParams,
) -> Result<SuspensionOutput, StraightenError> {
    params.validate()?;
    let (margin, up) = horizontal_margin(beta, params.margin_grid);
    if up == 0 || margin < params.transversality_threshold {
        return Err(StraightenError::BetaNotHandled { margin });
    }
    let sense = if up > 0 { Sense::Forward } else { Sense::Backward };
    let n = params.resolution;
    let m = params.section_knots;
    let knots: Vec<f64> = (0..m).map(|k| k as f64 / m as f64).collect();
    let rows: Vec<Vec<f64>> = knots
        .par_iter()
        .enumerate()
        .map(|(k, &x)| level_crossings(beta, x, sense, n, k, params))
        .collect::<Result<_, _>>()?;
    // levels[j][k]: crossing of level j/n by the leaf from knot k
    let levels: Vec<Vec<f64>> = (0..=n).map(|j| rows.iter().map(|r| r[j]).collect()).collect();

    let s = CircleLift::from_samples(knots.clone(), levels[n].clone()).map_err(|e| match e {
        CircleError::NonMonotone { index } => FoliationError::TransversalityViolation { index }.into(),
        other => StraightenError::Circle(other),
    })?;
    let minimality = minimality_density(&s, 0.0, params.minimality_iterations, params.minimality_epsilon);
    if !minimality.pass {
        return Err(StraightenError::NonMinimal {
            which: "beta",
            max_gap: minimality.max_gap,
        });
    }
    let conj = conjugacy_to_rotation(&s, params.orbit_length.max(params.conjugacy_resolution.pow(2)), params.conjugacy_resolution)?;
    let tau = conj.translation;
    let h = &conj.h;

    let nf = n as f64;
    let disp: Vec<Vec2> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % n, idx / n);
            let (x, y) = (i as f64 / nf, j as f64 / nf);
            let xt = if j == 0 { x } else { invert_row(&knots, &levels[j], x) };
            Vec2::new(h.eval(xt) + y * tau - x, 0.0)
        })
        .collect();
    let phi = GridHomeomorphism::new(n, IntMatrix::IDENTITY, disp)?;
    let direction = HalfLine::from_vector(up as f64 * Vec2::new(tau, 1.0)).map_err(StraightenError::Foliation)?;
    Ok(SuspensionOutput {
        phi,
        report: SuspensionReport {
            translation: tau,
            enclosure: conj.enclosure,
            conjugacy_residual: conj.residual(&s),
            minimality,
            direction,
            horizontal_margin: margin,
        },
    })
}
