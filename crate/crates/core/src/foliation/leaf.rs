use super::{Foliation, FoliationError, FoliationKind, GridHomeomorphism};
use crate::circle::{invert_degree_one, CircleLift};
use crate::geom::Vec2;

/// Direction of travel relative to the foliation's orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Forward,
    Backward,
}

impl Sense {
    pub fn from_sign(sign: i32) -> Sense {
        if sign >= 0 {
            Sense::Forward
        } else {
            Sense::Backward
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    #[inline]
    pub fn of(self, p: Vec2) -> f64 {
        match self {
            Axis::X => p.x,
            Axis::Y => p.y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    /// Largest flat distance between consecutive polyline vertices.
    pub max_step: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            max_step: 1.0 / 1024.0,
        }
    }
}

impl TraceOptions {
    /// `1 / (4n)`, the step matched to an `n × n` grid map.
    pub fn for_resolution(n: usize) -> Self {
        TraceOptions {
            max_step: 1.0 / (4.0 * n as f64),
        }
    }
}

/// A traced leaf segment in the universal cover.
#[derive(Clone, Debug, Default)]
pub struct LiftedPolyline {
    pub points: Vec<Vec2>,
    /// Cumulative flat arclength at each vertex.
    pub arclength: Vec<f64>,
}

impl LiftedPolyline {
    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point at arclength `l`, linear along the polyline.
    pub fn point_at_length(&self, l: f64) -> Vec2 {
        let k = self.arclength.partition_point(|&a| a < l);
        if k == 0 {
            return self.points[0];
        }
        if k >= self.points.len() {
            return self.end();
        }
        let (a0, a1) = (self.arclength[k - 1], self.arclength[k]);
        let t = if a1 > a0 { (l - a0) / (a1 - a0) } else { 1.0 };
        self.points[k - 1] + t * (self.points[k] - self.points[k - 1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub param: f64,
    pub point: Vec2,
    pub arclength: f64,
}

/// One lifted leaf with its own forward parameter `s ≥ 0`.
///
/// The parameter is arclength for linear leaves, the along-coordinate for
/// suspensions, and the base parameter for pushforwards.
pub struct Leaf<'a> {
    curve: Curve<'a>,
    start: Vec2,
}

enum Curve<'a> {
    Line { origin: Vec2, dir: Vec2 },
    Strip(Strip<'a>),
    Pushed { base: Box<Curve<'a>>, map: &'a GridHomeomorphism },
}

/// Leaf of a suspension: straight across each unit strip of the "along"
/// coordinate, joining the strip-wall values `Y_m` and `Y_{m+1} = T(Y_m)`.
struct Strip<'a> {
    lift: &'a CircleLift,
    swapped: bool,
    along0: f64,
    sign: f64,
    n0: i64,
    fwd: Vec<f64>,
    bwd: Vec<f64>,
}

impl<'a> Strip<'a> {
    fn new(lift: &'a CircleLift, swapped: bool, start: Vec2, sign: f64) -> Self {
        let (along, across) = if swapped { (start.y, start.x) } else { (start.x, start.y) };
        let n0 = along.floor();
        let t0 = along - n0;
        let y0 = if t0 == 0.0 {
            across
        } else {
            invert_degree_one(|y| (1.0 - t0) * y + t0 * lift.eval(y), across)
        };
        Strip {
            lift,
            swapped,
            along0: along,
            sign,
            n0: n0 as i64,
            fwd: vec![y0],
            bwd: Vec::new(),
        }
    }

    fn wall(&mut self, m: i64) -> f64 {
        let idx = m - self.n0;
        if idx >= 0 {
            let idx = idx as usize;
            while self.fwd.len() <= idx {
                let y = self.lift.eval(*self.fwd.last().unwrap());
                self.fwd.push(y);
            }
            self.fwd[idx]
        } else {
            let k = (-idx - 1) as usize;
            while self.bwd.len() <= k {
                let prev = *self.bwd.last().unwrap_or(&self.fwd[0]);
                self.bwd.push(self.lift.eval_inverse(prev));
            }
            self.bwd[k]
        }
    }

    fn point(&mut self, s: f64) -> Vec2 {
        let along = self.along0 + self.sign * s;
        let m = along.floor();
        let t = along - m;
        let y0 = self.wall(m as i64);
        let across = if t == 0.0 {
            y0
        } else {
            let y1 = self.wall(m as i64 + 1);
            (1.0 - t) * y0 + t * y1
        };
        if self.swapped {
            Vec2::new(across, along)
        } else {
            Vec2::new(along, across)
        }
    }

    fn next_break(&self, s: f64) -> f64 {
        let along = self.along0 + self.sign * s;
        let b = if self.sign > 0.0 { along.floor() + 1.0 } else { along.ceil() - 1.0 };
        (b - self.along0) * self.sign
    }
}

impl<'a> Curve<'a> {
    fn build(f: &'a Foliation, start: Vec2, sign: f64) -> Curve<'a> {
        match &f.kind {
            FoliationKind::Linear(l) => Curve::Line {
                origin: start,
                dir: sign * l.vector(),
            },
            FoliationKind::SuspensionH(t) => Curve::Strip(Strip::new(t, false, start, sign)),
            FoliationKind::SuspensionV(s) => Curve::Strip(Strip::new(s, true, start, sign)),
            FoliationKind::Pushforward { base, map, inverse } => {
                let z = inverse.apply(start);
                let base_sign = if base.reversed { -sign } else { sign };
                Curve::Pushed {
                    base: Box::new(Curve::build(base, z, base_sign)),
                    map,
                }
            }
        }
    }

    fn point(&mut self, s: f64) -> Vec2 {
        match self {
            Curve::Line { origin, dir } => *origin + s * *dir,
            Curve::Strip(st) => st.point(s),
            Curve::Pushed { base, map } => map.apply(base.point(s)),
        }
    }

    fn next_break(&self, s: f64) -> Option<f64> {
        match self {
            Curve::Line { .. } => None,
            Curve::Strip(st) => Some(st.next_break(s)),
            Curve::Pushed { base, .. } => base.next_break(s),
        }
    }
}

/// Position of a walk along a leaf.
#[derive(Clone, Copy, Debug)]
pub(crate) struct StepState {
    pub s: f64,
    pub p: Vec2,
    pub cum: f64,
    ds: f64,
}

impl<'a> Leaf<'a> {
    pub(super) fn new(f: &'a Foliation, start: Vec2, sign: f64) -> Self {
        let mut curve = Curve::build(f, start, sign);
        // pushforward starts are reconstructed through the inverse grid map
        let start = curve.point(0.0);
        Leaf { curve, start }
    }

    /// Lifted start point (for pushforwards, `Φ(Φ⁻¹(q))`).
    pub fn start(&self) -> Vec2 {
        self.start
    }

    pub fn point(&mut self, s: f64) -> Vec2 {
        self.curve.point(s)
    }

    pub(crate) fn begin(&self, opts: &TraceOptions) -> StepState {
        StepState {
            s: 0.0,
            p: self.start,
            cum: 0.0,
            ds: opts.max_step,
        }
    }

    /// Advance by one polyline vertex, at most `max_step` away, landing
    /// exactly on strip walls.
    pub(crate) fn step(&mut self, st: &mut StepState, opts: &TraceOptions) -> Result<(), FoliationError> {
        let h = opts.max_step;
        let brk = self.curve.next_break(st.s).filter(|&b| b > st.s);
        loop {
            let mut s1 = st.s + st.ds;
            let mut clipped = false;
            if let Some(b) = brk {
                if b <= s1 {
                    s1 = b;
                    clipped = true;
                }
            }
            let p1 = self.curve.point(s1);
            let seg = (p1 - st.p).norm();
            if seg > h * (1.0 + 1e-9) {
                st.ds = (s1 - st.s) * (0.9 * h / seg).min(0.5);
                if st.ds <= 1e-15 * (1.0 + st.s.abs()) {
                    return Err(FoliationError::StepUnderflow(st.s));
                }
                continue;
            }
            if !clipped && seg < 0.5 * h {
                st.ds *= 1.5;
            }
            st.s = s1;
            st.p = p1;
            st.cum += seg;
            return Ok(());
        }
    }

    /// Polyline following the leaf for flat arclength exactly `length`.
    pub fn trace(&mut self, length: f64, opts: &TraceOptions) -> Result<LiftedPolyline, FoliationError> {
        let mut st = self.begin(opts);
        let cap = (length / opts.max_step * 1.1) as usize + 2;
        let mut out = LiftedPolyline {
            points: Vec::with_capacity(cap),
            arclength: Vec::with_capacity(cap),
        };
        out.points.push(st.p);
        out.arclength.push(0.0);
        while st.cum < length {
            let prev = st;
            self.step(&mut st, opts)?;
            if st.cum >= length {
                let target = length - prev.cum;
                let (mut lo, mut hi) = (prev.s, st.s);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if (self.curve.point(mid) - prev.p).norm() < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let p = self.curve.point(hi);
                out.points.push(p);
                out.arclength.push(length);
                return Ok(out);
            }
            out.points.push(st.p);
            out.arclength.push(st.cum);
        }
        Ok(out)
    }

    /// Points at the given increasing arclengths, without storing the polyline.
    pub fn points_at_lengths(&mut self, lengths: &[f64], opts: &TraceOptions) -> Result<Vec<Vec2>, FoliationError> {
        let mut st = self.begin(opts);
        let mut out = Vec::with_capacity(lengths.len());
        for &l in lengths {
            while st.cum < l {
                let prev = st;
                self.step(&mut st, opts)?;
                if st.cum >= l {
                    let target = l - prev.cum;
                    let (mut lo, mut hi) = (prev.s, st.s);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if (self.curve.point(mid) - prev.p).norm() < target {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    // restart the walk exactly at the clipped point
                    st.s = hi;
                    st.p = self.curve.point(hi);
                    st.cum = l;
                }
            }
            out.push(st.p);
        }
        Ok(out)
    }

    /// Refine a sign change of `coord - level` between two walk states.
    pub(crate) fn refine_crossing(
        &mut self,
        axis: Axis,
        level: f64,
        prev: &StepState,
        cur: &StepState,
    ) -> Crossing {
        let f0 = axis.of(prev.p) - level;
        let (mut lo, mut hi) = (prev.s, cur.s);
        let mut p_hi = cur.p;
        if axis.of(cur.p) != level {
            for _ in 0..120 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let p = self.curve.point(mid);
                let f = axis.of(p) - level;
                if f == 0.0 {
                    hi = mid;
                    p_hi = p;
                    break;
                }
                if (f > 0.0) == (f0 > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                    p_hi = p;
                }
            }
        }
        let mut point = p_hi;
        match axis {
            Axis::X => point.x = level,
            Axis::Y => point.y = level,
        }
        Crossing {
            param: hi,
            point,
            arclength: prev.cum + (point - prev.p).norm(),
        }
    }

    /// First point after the start where the leaf meets `{axis = level}`,
    /// searched up to arclength `max_len`.
    pub fn find_crossing(
        &mut self,
        axis: Axis,
        level: f64,
        max_len: f64,
        opts: &TraceOptions,
    ) -> Result<Option<Crossing>, FoliationError> {
        let mut st = self.begin(opts);
        let f0 = axis.of(st.p) - level;
        if f0 == 0.0 {
            return Ok(Some(Crossing {
                param: 0.0,
                point: st.p,
                arclength: 0.0,
            }));
        }
        while st.cum <= max_len {
            let prev = st;
            self.step(&mut st, opts)?;
            let f = axis.of(st.p) - level;
            if f == 0.0 || (f > 0.0) != (f0 > 0.0) {
                return Ok(Some(self.refine_crossing(axis, level, &prev, &st)));
            }
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::homology::IntMatrix;

    fn opts() -> TraceOptions {
        TraceOptions::default()
    }

    #[test]
    fn horizontal_line_trace() {
        let f = Foliation::linear_from(Vec2::new(1.0, 0.0)).unwrap();
        let pl = f.leaf(Vec2::new(0.5, 0.5), Sense::Forward).trace(2.0, &opts()).unwrap();
        assert!((pl.end() - Vec2::new(2.5, 0.5)).norm() < 1e-12);
        assert!((pl.length() - 2.0).abs() < 1e-15);
        for w in pl.points.windows(2) {
            assert!((w[1] - w[0]).norm() <= opts().max_step * (1.0 + 1e-9));
        }
        for w in pl.arclength.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn suspension_first_crossing_of_rotation() {
        let theta = 0.3;
        let f = Foliation::suspension_h(CircleLift::rotation(theta).unwrap());
        let y = 0.42;
        let mut leaf = f.leaf(Vec2::new(0.0, y), Sense::Forward);
        let c = leaf.find_crossing(Axis::X, 1.0, 5.0, &opts()).unwrap().unwrap();
        assert!((c.point - Vec2::new(1.0, y + theta)).norm() < 1e-14);
        // backward leaves go to x = -1
        let mut back = f.leaf(Vec2::new(0.0, y), Sense::Backward);
        let c = back.find_crossing(Axis::X, -1.0, 5.0, &opts()).unwrap().unwrap();
        assert!((c.point - Vec2::new(-1.0, y - theta)).norm() < 1e-14);
    }

    #[test]
    fn suspension_leaf_is_straight_in_strips() {
        let t = CircleLift::arnold(0.3, 0.8).unwrap();
        let f = Foliation::suspension_h(t.clone());
        let mut leaf = f.leaf(Vec2::new(0.25, 0.1), Sense::Forward);
        let p = leaf.point(0.75);
        let q = leaf.point(1.5);
        assert_eq!(p.x, 1.0);
        assert!((q.y - ((1.0 - 0.75) * p.y + 0.75 * t.eval(p.y))).abs() < 1e-12);
    }

    #[test]
    fn pushforward_trace_is_pushed_straight_trace() {
        let base = Foliation::linear_from(Vec2::new(1.0, 0.0)).unwrap();
        let psi = Arc::new(GridHomeomorphism::shear(64, 0.05, 0.0).unwrap());
        let f = Foliation::pushforward(base.clone(), psi.clone()).unwrap();
        let q = psi.apply(Vec2::new(0.3, 0.6));
        let mut leaf = f.leaf(q, Sense::Forward);
        let straight = base.leaf(Vec2::new(0.3, 0.6), Sense::Forward).trace(1.0, &opts()).unwrap();
        let pts: Vec<Vec2> = (0..50).map(|k| leaf.point(k as f64 * 0.02)).collect();
        for (k, p) in pts.iter().enumerate() {
            let z = straight.point_at_length(k as f64 * 0.02);
            assert!((*p - psi.apply(z)).norm() < 1e-12);
        }
    }

    #[test]
    fn arclength_is_additive() {
        let f = Foliation::suspension_h(CircleLift::arnold(0.3, 0.8).unwrap());
        let mut leaf = f.leaf(Vec2::new(0.1, 0.2), Sense::Forward);
        let whole = leaf.trace(3.0, &opts()).unwrap();
        let first = f.leaf(Vec2::new(0.1, 0.2), Sense::Forward).trace(1.2, &opts()).unwrap();
        let rest = f.leaf(first.end(), Sense::Forward).trace(1.8, &opts()).unwrap();
        assert!((whole.end() - rest.end()).norm() < 2.0 * opts().max_step);
    }

    #[test]
    fn dehn_twisted_vertical_leaf_shifts_by_one() {
        let v = Foliation::linear_from(Vec2::new(0.0, 1.0)).unwrap();
        let d = Arc::new(GridHomeomorphism::dehn_twist(128, 0.25, 0.75).unwrap());
        assert_eq!(d.linear(), IntMatrix::DEHN_TWIST);
        let f = Foliation::pushforward(v, d).unwrap();
        let mut leaf = f.leaf(Vec2::new(0.3, 0.0), Sense::Forward);
        let c = leaf.find_crossing(Axis::Y, 1.0, 5.0, &opts()).unwrap().unwrap();
        assert!((c.point - Vec2::new(1.3, 1.0)).norm() < 1e-12);
    }
}
