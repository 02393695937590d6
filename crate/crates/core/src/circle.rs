//! Orientation-preserving circle homeomorphisms, handled through their
//! degree-one lifts to the real line.
//!
//! A [`CircleLift`] keeps its integer translation part separate from the
//! "base" map so that iterating `F + d` and iterating `F` differ by exactly
//! `n * d`; rotation numbers are reported as [`RotationEnclosure`]s built from
//! the bound `|F^n(0) - n τ(F)| < 1`.

use std::f64::consts::TAU;

use serde::Serialize;
use thiserror::Error;

use crate::geom::wrap_unit;

/// Absolute tolerance of the bisection used to invert lifts.
pub const INVERSION_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircleError {
    #[error("iteration count must be at least 1, got {0}")]
    NonPositiveIterations(i64),
    #[error("sample data is not strictly monotone at knot {index}")]
    NonMonotone { index: usize },
    #[error("invalid circle map parameter: {0}")]
    InvalidParameter(String),
    #[error("orbit length {orbit} is below resolution^2 = {required}")]
    OrbitTooShort { orbit: usize, required: usize },
    #[error("empirical measure is degenerate: {empty} of {resolution} bins never visited (map is not minimal)")]
    NonMinimal { empty: usize, resolution: usize },
}

#[derive(Clone, Debug)]
enum Family {
    Rotation { theta: f64 },
    Arnold { theta: f64, k: f64 },
    Samples { knots: Vec<f64>, values: Vec<f64> },
    /// Outermost map first. Every part has a zero shift.
    Composition(Vec<CircleLift>),
    /// Inner map has a zero shift.
    Inverse(Box<CircleLift>),
}

/// Monotone degree-one lift `F` of a circle homeomorphism: `F(x + 1) = F(x) + 1`.
#[derive(Clone, Debug)]
pub struct CircleLift {
    family: Family,
    shift: i64,
}

impl CircleLift {
    /// Rigid rotation `x ↦ x + θ`. The integer part of `θ` is kept as the shift.
    pub fn rotation(theta: f64) -> Result<Self, CircleError> {
        if !theta.is_finite() {
            return Err(CircleError::InvalidParameter(format!("theta = {theta}")));
        }
        let shift = theta.floor();
        Ok(CircleLift {
            family: Family::Rotation { theta: theta - shift },
            shift: shift as i64,
        })
    }

    /// Arnold family `x ↦ x + θ + (K / 2π) sin(2πx)`, a homeomorphism for |K| < 1.
    pub fn arnold(theta: f64, k: f64) -> Result<Self, CircleError> {
        if !theta.is_finite() || !k.is_finite() || k.abs() >= 1.0 {
            return Err(CircleError::InvalidParameter(format!(
                "arnold map needs finite theta and |K| < 1, got theta = {theta}, K = {k}"
            )));
        }
        let shift = theta.floor();
        Ok(CircleLift {
            family: Family::Arnold { theta: theta - shift, k },
            shift: shift as i64,
        })
    }

    /// Piecewise-linear lift through `(knots[i], values[i])`, extended by
    /// `F(x + 1) = F(x) + 1`. Knots must be strictly increasing inside [0, 1).
    pub fn from_samples(knots: Vec<f64>, values: Vec<f64>) -> Result<Self, CircleError> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(CircleError::InvalidParameter(format!(
                "need matching non-empty knot/value arrays, got {} and {}",
                knots.len(),
                values.len()
            )));
        }
        if knots[0] < 0.0 || *knots.last().unwrap() >= 1.0 {
            return Err(CircleError::InvalidParameter("knots must lie in [0, 1)".into()));
        }
        if let Some(i) = knots.iter().chain(values.iter()).position(|v| !v.is_finite()) {
            return Err(CircleError::InvalidParameter(format!("non-finite sample at {i}")));
        }
        for i in 1..knots.len() {
            if knots[i] <= knots[i - 1] || values[i] <= values[i - 1] {
                return Err(CircleError::NonMonotone { index: i });
            }
        }
        if values[values.len() - 1] >= values[0] + 1.0 {
            return Err(CircleError::NonMonotone { index: values.len() });
        }
        Ok(CircleLift {
            family: Family::Samples { knots, values },
            shift: 0,
        })
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: &CircleLift, inner: &CircleLift) -> CircleLift {
        let mut parts = Vec::new();
        for f in [outer, inner] {
            match &f.family {
                Family::Composition(p) => parts.extend(p.iter().cloned()),
                _ => parts.push(f.unshifted()),
            }
        }
        CircleLift {
            family: Family::Composition(parts),
            shift: outer.shift + inner.shift,
        }
    }

    /// `g ∘ self ∘ g⁻¹`.
    pub fn conjugate_by(&self, g: &CircleLift) -> CircleLift {
        CircleLift::compose(g, &CircleLift::compose(self, &g.inverse()))
    }

    pub fn inverse(&self) -> CircleLift {
        let family = match &self.family {
            Family::Inverse(inner) => inner.family.clone(),
            Family::Rotation { theta } => Family::Rotation { theta: -theta },
            _ => Family::Inverse(Box::new(self.unshifted())),
        };
        CircleLift {
            family,
            shift: -self.shift,
        }
    }

    /// The lift `F + d`.
    pub fn shifted(&self, d: i64) -> CircleLift {
        CircleLift {
            family: self.family.clone(),
            shift: self.shift + d,
        }
    }

    pub fn shift(&self) -> i64 {
        self.shift
    }

    fn unshifted(&self) -> CircleLift {
        CircleLift {
            family: self.family.clone(),
            shift: 0,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Rotation { .. } => "rotation",
            Family::Arnold { .. } => "arnold",
            Family::Samples { .. } => "samples",
            Family::Composition(_) => "composition",
            Family::Inverse(_) => "inverse",
        }
    }

    /// Knots and values of a sampled lift (shift included in the values).
    pub fn samples(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.family {
            Family::Samples { knots, values } => Some((
                knots.clone(),
                values.iter().map(|v| v + self.shift as f64).collect(),
            )),
            _ => None,
        }
    }

    /// The base map (shift excluded) at an arbitrary real point.
    fn base(&self, x: f64) -> f64 {
        match &self.family {
            Family::Rotation { theta } => x + theta,
            Family::Arnold { theta, k } => {
                let n = x.floor();
                let f = x - n;
                n + f + theta + k / TAU * (TAU * f).sin()
            }
            Family::Samples { knots, values } => {
                let n = x.floor();
                n + interp_periodic(knots, values, x - n)
            }
            Family::Composition(parts) => parts.iter().rev().fold(x, |v, p| p.base(v)),
            Family::Inverse(inner) => invert_degree_one(|y| inner.base(y), x),
        }
    }

    /// F(x).
    pub fn eval(&self, x: f64) -> f64 {
        self.base(x) + self.shift as f64
    }

    /// F⁻¹(x), by bisection on a unit bracket.
    pub fn eval_inverse(&self, x: f64) -> f64 {
        self.base_inverse(x - self.shift as f64)
    }

    fn base_inverse(&self, x: f64) -> f64 {
        match &self.family {
            Family::Rotation { theta } => x - theta,
            Family::Inverse(inner) => inner.base(x),
            _ => invert_degree_one(|y| self.base(y), x),
        }
    }

    /// One step of the base map on the state `integer + fraction`.
    #[inline]
    fn step_base(&self, int: &mut i64, frac: &mut f64) {
        let y = self.base(*frac);
        let fl = y.floor();
        *int += fl as i64;
        *frac = y - fl;
    }

    #[inline]
    fn step_base_inverse(&self, int: &mut i64, frac: &mut f64) {
        let y = self.base_inverse(*frac);
        let fl = y.floor();
        *int += fl as i64;
        *frac = y - fl;
    }

    /// Iterate the base map `n` times from `x`, returning `(integer, fraction)`.
    fn iterate_base(&self, n: i64, x: f64) -> (i64, f64) {
        let fl = x.floor();
        let mut int = fl as i64;
        let mut frac = x - fl;
        if n >= 0 {
            for _ in 0..n {
                self.step_base(&mut int, &mut frac);
            }
        } else {
            for _ in 0..(-n) {
                self.step_base_inverse(&mut int, &mut frac);
            }
        }
        (int, frac)
    }

    /// Orbit of `x` under the circle map, reduced to [0, 1).
    pub fn circle_orbit(&self, x: f64, len: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(len);
        let mut int = 0i64;
        let mut frac = wrap_unit(x);
        for _ in 0..len {
            out.push(frac);
            self.step_base(&mut int, &mut frac);
        }
        out
    }
}

/// Inverse of a continuous strictly increasing `f` with `f(y + 1) = f(y) + 1`.
pub fn invert_degree_one(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let n = x.floor();
    let xf = x - n;
    let mut lo = xf - (f(xf) - xf);
    while f(lo) > xf {
        lo -= 1.0;
    }
    while f(lo + 1.0) < xf {
        lo += 1.0;
    }
    let mut hi = lo + 1.0;
    // bisect to adjacent floats, well past the 1e-14 contract
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < xf {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    debug_assert!(hi - lo <= INVERSION_TOL);
    let y = if xf - f(lo) < f(hi) - xf { lo } else { hi };
    n + y
}

fn interp_periodic(knots: &[f64], values: &[f64], f: f64) -> f64 {
    let m = knots.len();
    // index of the last knot <= f
    let i = knots.partition_point(|&k| k <= f);
    let (x0, v0, x1, v1) = if i == 0 {
        (knots[m - 1] - 1.0, values[m - 1] - 1.0, knots[0], values[0])
    } else if i == m {
        (knots[m - 1], values[m - 1], knots[0] + 1.0, values[0] + 1.0)
    } else {
        (knots[i - 1], values[i - 1], knots[i], values[i])
    };
    v0 + (f - x0) * (v1 - v0) / (x1 - x0)
}

/// F^n(x) for any integer n; negative powers use the numeric inverse.
pub fn iterate_lift(f: &CircleLift, n: i64, x: f64) -> f64 {
    let (int, frac) = f.iterate_base(n, x);
    (int + n * f.shift) as f64 + frac
}

/// Interval guaranteed to contain the translation number τ(F).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RotationEnclosure {
    pub lo: f64,
    pub hi: f64,
    pub iterations: u64,
}

impl RotationEnclosure {
    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }

    pub fn overlaps(&self, o: &RotationEnclosure) -> bool {
        self.lo <= o.hi && o.lo <= self.hi
    }

    /// Enclosure of the rotation number ρ = [τ]: shifted by the integer that
    /// puts the center in [0, 1).
    pub fn reduced(&self) -> RotationEnclosure {
        let m = self.center().floor();
        RotationEnclosure {
            lo: self.lo - m,
            hi: self.hi - m,
            iterations: self.iterations,
        }
    }

    /// Overlap as circle intervals (mod 1).
    pub fn overlaps_mod1(&self, o: &RotationEnclosure) -> bool {
        let a = self.reduced();
        let b = o.reduced();
        [-1.0, 0.0, 1.0].iter().any(|d| a.lo <= b.hi + d && b.lo + d <= a.hi)
    }
}

/// `[(F^n(0) - 1)/n, (F^n(0) + 1)/n]`, the integer shift of the lift added exactly.
pub fn rotation_number_enclosure(f: &CircleLift, n: i64) -> Result<RotationEnclosure, CircleError> {
    if n <= 0 {
        return Err(CircleError::NonPositiveIterations(n));
    }
    let (int, frac) = f.iterate_base(n, 0.0);
    Ok(enclosure_from_state(int, frac, n, f.shift))
}

fn enclosure_from_state(int: i64, frac: f64, n: i64, shift: i64) -> RotationEnclosure {
    let nf = n as f64;
    let a = int as f64 + frac;
    let d = shift as f64;
    RotationEnclosure {
        lo: (a - 1.0) / nf + d,
        hi: (a + 1.0) / nf + d,
        iterations: n as u64,
    }
}

/// Sampled monotone degree-one circle map on a uniform knot grid.
#[derive(Clone, Debug, Serialize)]
pub struct MonotoneCircleMap {
    /// `values[j] = h(j / resolution)`, with one extra entry `values[0] + 1`.
    values: Vec<f64>,
}

impl MonotoneCircleMap {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self, CircleError> {
        if values.is_empty() {
            return Err(CircleError::InvalidParameter("empty knot array".into()));
        }
        for i in 1..values.len() {
            if values[i] < values[i - 1] {
                return Err(CircleError::NonMonotone { index: i });
            }
        }
        let last = values[0] + 1.0;
        if *values.last().unwrap() > last {
            return Err(CircleError::NonMonotone { index: values.len() });
        }
        values.push(last);
        Ok(MonotoneCircleMap { values })
    }

    pub fn resolution(&self) -> usize {
        self.values.len() - 1
    }

    /// Knot values `h(j / resolution)` for `j = 0..=resolution`.
    pub fn knot_values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let res = self.resolution();
        let n = x.floor();
        let s = (x - n) * res as f64;
        let i = (s.floor() as usize).min(res - 1);
        let t = s - i as f64;
        n + self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    /// Largest deviation `|h(x) - x|` over the knots.
    pub fn distance_to_identity(&self) -> f64 {
        let res = self.resolution() as f64;
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| (v - j as f64 / res).abs())
            .fold(0.0, f64::max)
    }
}

/// Output of [`conjugacy_to_rotation`].
#[derive(Clone, Debug)]
pub struct Conjugacy {
    /// h with `h ∘ F ≈ h + τ`, `h(0) = 0`.
    pub h: MonotoneCircleMap,
    /// Center of the orbit's rotation enclosure, reduced to [0, 1).
    pub rotation: f64,
    /// Center of the unreduced enclosure, the translation number τ of the lift.
    pub translation: f64,
    pub enclosure: RotationEnclosure,
    pub orbit_length: usize,
}

impl Conjugacy {
    /// `max_j dist_{R/Z}(h(F(x_j)), h(x_j) + τ)` over the knots of `h`.
    pub fn residual(&self, f: &CircleLift) -> f64 {
        conjugacy_residual(f, &self.h, self.translation)
    }
}

pub fn conjugacy_residual(f: &CircleLift, h: &MonotoneCircleMap, tau: f64) -> f64 {
    let res = h.resolution();
    (0..res)
        .map(|j| {
            let x = j as f64 / res as f64;
            crate::geom::min_image(h.eval(f.eval(x)) - h.eval(x) - tau).abs()
        })
        .fold(0.0, f64::max)
}

/// Empirical cumulative distribution of the orbit of 0, sampled at
/// `resolution` knots: an approximation of the conjugacy to `R_ρ`.
pub fn conjugacy_to_rotation(
    f: &CircleLift,
    orbit_length: usize,
    resolution: usize,
) -> Result<Conjugacy, CircleError> {
    if resolution < 2 {
        return Err(CircleError::InvalidParameter(format!("resolution {resolution} < 2")));
    }
    let required = resolution.saturating_mul(resolution);
    if orbit_length < required {
        return Err(CircleError::OrbitTooShort {
            orbit: orbit_length,
            required,
        });
    }
    let mut bins = vec![0u64; resolution];
    let mut int = 0i64;
    let mut frac = 0.0f64;
    let r = resolution as f64;
    for _ in 0..orbit_length {
        let b = ((frac * r) as usize).min(resolution - 1);
        bins[b] += 1;
        f.step_base(&mut int, &mut frac);
    }
    let empty = bins.iter().filter(|&&c| c == 0).count();
    if empty > 0 {
        return Err(CircleError::NonMinimal { empty, resolution });
    }
    let total = orbit_length as f64;
    let mut acc = 0u64;
    let mut values = Vec::with_capacity(resolution);
    for c in &bins {
        values.push(acc as f64 / total);
        acc += c;
    }
    let enclosure = enclosure_from_state(int, frac, orbit_length as i64, f.shift);
    let h = MonotoneCircleMap::from_values(values)?;
    Ok(Conjugacy {
        h,
        rotation: wrap_unit(enclosure.center()),
        translation: enclosure.center(),
        enclosure,
        orbit_length,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MinimalityReport {
    pub max_gap: f64,
    pub pass: bool,
}

/// Largest circular gap between the first `n` orbit points of `x0`.
pub fn minimality_density(f: &CircleLift, x0: f64, n: usize, eps: f64) -> MinimalityReport {
    if n < 2 {
        return MinimalityReport {
            max_gap: 1.0,
            pass: 1.0 <= eps,
        };
    }
    let mut pts = f.circle_orbit(x0, n);
    pts.sort_by(|a, b| a.total_cmp(b));
    let mut max_gap = pts[0] + 1.0 - pts[n - 1];
    for w in pts.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    MinimalityReport {
        max_gap,
        pass: max_gap <= eps,
    }
}

/// Arnold map with parameter `k` whose translation number is `target`
/// (bisection on θ, using `n`-step enclosure centers).
pub fn arnold_with_translation(k: f64, target: f64, n: i64) -> Result<CircleLift, CircleError> {
    let tau = |theta: f64| -> Result<f64, CircleError> {
        Ok(rotation_number_enclosure(&CircleLift::arnold(theta, k)?, n)?.center())
    };
    // |τ - θ| <= |K| / 2π < 0.16
    let mut lo = target - 0.2;
    let mut hi = target + 0.2;
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if tau(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    CircleLift::arnold(0.5 * (lo + hi), k)
}
