use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Axis, Foliation, FoliationError, Sense, TraceOptions};
use crate::circle::{CircleError, CircleLift};
use crate::geom::Vec2;

/// A closed transversal circle of T².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    /// `{x = x₀}`, parametrized by `y`.
    Vertical(f64),
    /// `{y = y₀}`, parametrized by `x`.
    Horizontal(f64),
}

impl Section {
    fn axis(self) -> Axis {
        match self {
            Section::Vertical(_) => Axis::X,
            Section::Horizontal(_) => Axis::Y,
        }
    }

    fn level(self) -> f64 {
        match self {
            Section::Vertical(x) | Section::Horizontal(x) => x,
        }
    }

    /// Lifted point of the section at parameter `s`.
    pub fn point(self, s: f64) -> Vec2 {
        match self {
            Section::Vertical(x) => Vec2::new(x, s),
            Section::Horizontal(y) => Vec2::new(s, y),
        }
    }

    /// Section parameter of a lifted point on (a translate of) the section.
    pub fn param(self, p: Vec2) -> f64 {
        match self {
            Section::Vertical(_) => p.y,
            Section::Horizontal(_) => p.x,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SectionOptions {
    /// Uniform section samples.
    pub knots: usize,
    /// Arclength budget per return.
    pub budget: f64,
    pub trace: TraceOptions,
}

impl Default for SectionOptions {
    fn default() -> Self {
        SectionOptions {
            knots: 512,
            budget: 16.0,
            trace: TraceOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FirstReturn {
    pub map: CircleLift,
    /// +1 if forward leaves leave the section towards increasing coordinate.
    pub side: i32,
    /// Longest leaf arc needed for one return.
    pub max_return_length: f64,
}

/// Next crossing of the forward leaf from `start` with the translated
/// section, with the side it left towards.
fn one_return(
    f: &Foliation,
    section: Section,
    start: Vec2,
    index: usize,
    opts: &SectionOptions,
) -> Result<(i32, f64, f64), FoliationError> {
    let axis = section.axis();
    let level = section.level();
    let mut leaf = f.leaf(start, Sense::Forward);
    let mut st = leaf.begin(&opts.trace);
    let mut side = 0;
    let mut target = 0.0;
    let mut departed = false;
    while st.cum <= opts.budget {
        let prev = st;
        leaf.step(&mut st, &opts.trace)?;
        let c = axis.of(st.p) - level;
        if !departed {
            if c == 0.0 {
                continue;
            }
            side = if c > 0.0 { 1 } else { -1 };
            target = level + side as f64;
            departed = true;
        }
        if c * side as f64 <= 0.0 {
            // the leaf came back through the same lift of the section
            return Err(FoliationError::TransversalityViolation { index });
        }
        let d = axis.of(st.p) - target;
        if d * side as f64 >= 0.0 {
            let cr = leaf.refine_crossing(axis, target, &prev, &st);
            return Ok((side, section.param(cr.point), cr.arclength));
        }
    }
    Err(FoliationError::NonSection {
        index,
        budget: opts.budget,
    })
}

/// Sampled first-return map of the oriented leaves of `f` on `section`.
pub fn first_return(f: &Foliation, section: Section, opts: &SectionOptions) -> Result<FirstReturn, FoliationError> {
    let m = opts.knots.max(2);
    let knots: Vec<f64> = (0..m).map(|j| j as f64 / m as f64).collect();
    let rets: Vec<(i32, f64, f64)> = knots
        .par_iter()
        .enumerate()
        .map(|(j, &s)| one_return(f, section, section.point(s), j, opts))
        .collect::<Result<_, _>>()?;
    let side = rets[0].0;
    if let Some(j) = rets.iter().position(|r| r.0 != side) {
        return Err(FoliationError::TransversalityViolation { index: j });
    }
    let values: Vec<f64> = rets.iter().map(|r| r.1).collect();
    let max_return_length = rets.iter().map(|r| r.2).fold(0.0, f64::max);
    let map = CircleLift::from_samples(knots, values).map_err(|e| match e {
        CircleError::NonMonotone { index } => FoliationError::TransversalityViolation { index },
        other => FoliationError::Circle(other),
    })?;
    Ok(FirstReturn {
        map,
        side,
        max_return_length,
    })
}
