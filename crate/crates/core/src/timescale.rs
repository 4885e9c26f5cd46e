//! Time scales: nonempty closed subsets of the real line, stored as a sorted
//! list of disjoint closed intervals (isolated points are degenerate intervals)
//! with an optional periodic tail.
//!
//! Besides the jump operators and graininess this module provides the pieces
//! of calculus the rest of the crate needs: the delta integral, regressivity
//! checks, the `circle_plus` group operation and the time-scale exponential
//! `e_p(t, t0)` for constant `p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used for membership tests and endpoint snapping.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Default absolute tolerance for adaptive quadrature on continuous pieces.
pub const QUADRATURE_TOL: f64 = 1e-10;

const MAX_EXPANDED_COPIES: u64 = 1_000_000;

/// A closed interval `[start, end]`; `start == end` is an isolated point and
/// `end == +inf` marks a half-line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Self {
        Segment { start, end }
    }

    pub fn point(t: f64) -> Self {
        Segment { start: t, end: t }
    }

    pub fn is_point(&self) -> bool {
        self.start == self.end
    }

    fn shifted(&self, by: f64) -> Self {
        Segment::new(self.start + by, self.end + by)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PeriodicTail {
    /// Copy 0 of the block, in absolute coordinates.
    block: Vec<Segment>,
    period: f64,
    /// Index of the first copy that lives in the tail; earlier copies were
    /// merged into the explicit segments.
    first: u64,
}

impl PeriodicTail {
    fn copy_segment(&self, k: u64, j: usize) -> Segment {
        self.block[j].shifted(k as f64 * self.period)
    }

    fn start(&self) -> f64 {
        self.copy_segment(self.first, 0).start
    }
}

/// A normalized time scale. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeScale {
    segments: Vec<Segment>,
    tail: Option<PeriodicTail>,
}

/// Raw time-scale element, in the form accepted on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Element {
    Interval([Endpoint; 2]),
    Point(f64),
    Grid(GridSpec),
    Periodic(PeriodicSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: Endpoint,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSpec {
    pub block: Vec<Element>,
    pub period: f64,
    pub repeat: Repeat,
}

/// A finite endpoint or the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoint {
    Finite(f64),
    Named(String),
}

impl Endpoint {
    fn value(&self) -> Result<f64> {
        match self {
            Endpoint::Finite(x) => Ok(*x),
            Endpoint::Named(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
                other => Err(Error::InvalidTimeScale(format!("unrecognized endpoint {other:?}"))),
            },
        }
    }
}

impl From<f64> for Endpoint {
    fn from(x: f64) -> Self {
        if x == f64::INFINITY {
            Endpoint::Named("inf".into())
        } else {
            Endpoint::Finite(x)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Repeat {
    Times(u64),
    Named(String),
}

/// On-disk form: either a bare array of elements or `{"elements": [...]}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TimeScaleFile {
    Bare(Vec<Element>),
    Wrapped { elements: Vec<Element> },
}

impl TimeScaleFile {
    pub fn into_elements(self) -> Vec<Element> {
        match self {
            TimeScaleFile::Bare(v) | TimeScaleFile::Wrapped { elements: v } => v,
        }
    }
}

/// Classification flags of a point. `isolated` and `dense` are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PointClass {
    pub right_scattered: bool,
    pub right_dense: bool,
    pub left_scattered: bool,
    pub left_dense: bool,
}

impl PointClass {
    pub fn is_isolated(&self) -> bool {
        self.left_scattered && self.right_scattered
    }

    pub fn is_dense(&self) -> bool {
        self.left_dense && self.right_dense
    }
}

/// One step of a walk across the time scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece {
    /// Continuous stretch `[from, to]` with `to > from`.
    Flow { from: f64, to: f64 },
    /// Jump from the right-scattered point `at` to `to = sigma(at)`.
    Jump { at: f64, to: f64 },
}

impl Piece {
    pub fn mu(&self) -> f64 {
        match *self {
            Piece::Flow { .. } => 0.0,
            Piece::Jump { at, to } => to - at,
        }
    }
}

/// Graininess over a horizon: every right-scattered point with its jump size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrainFunction {
    pub jumps: Vec<(f64, f64)>,
    pub has_dense: bool,
    pub mu_star: f64,
}

impl GrainFunction {
    /// Sorted distinct graininess values, `0` included when the horizon has
    /// right-dense points.
    pub fn distinct_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.jumps.iter().map(|&(_, m)| m).collect();
        if self.has_dense {
            v.push(0.0);
        }
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
        v
    }
}

/// Sign and log-magnitude of `e_p(t, t0)`; `sign == 0` when some factor
/// `1 + mu p` vanished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpParts {
    pub sign: i8,
    pub log_abs: f64,
}

impl ExpParts {
    pub fn value(&self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => f64::from(s) * self.log_abs.exp(),
        }
    }
}

/// `p + q + p q mu`.
pub fn circle_plus(p: f64, q: f64, mu_t: f64) -> f64 {
    p + q + p * q * mu_t
}

fn merge_segments(mut segs: Vec<Segment>) -> Vec<Segment> {
    segs.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let mut out: Vec<Segment> = Vec::with_capacity(segs.len());
    for s in segs {
        match out.last_mut() {
            Some(last) if s.start <= last.end + MEMBERSHIP_TOL => {
                if s.end > last.end {
                    last.end = s.end;
                }
            }
            _ => out.push(s),
        }
    }
    out
}

fn check_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTimeScale(format!("{what} must be finite, got {x}")))
    }
}

struct Expanded {
    segments: Vec<Segment>,
    tail: Option<(Vec<Segment>, f64)>,
}

fn expand(elements: &[Element], allow_tail: bool) -> Result<Expanded> {
    let mut segments = Vec::new();
    let mut tail: Option<(Vec<Segment>, f64)> = None;
    let mut set_tail = |t: (Vec<Segment>, f64)| -> Result<()> {
        if !allow_tail {
            return Err(Error::InvalidTimeScale(
                "infinite repetition is not allowed inside a periodic block".into(),
            ));
        }
        if tail.replace(t).is_some() {
            return Err(Error::InvalidTimeScale("at most one infinite periodic tail is supported".into()));
        }
        Ok(())
    };

    for el in elements {
        match el {
            Element::Interval([a, b]) => {
                let (a, b) = (a.value()?, b.value()?);
                check_finite(a, "interval start")?;
                if b.is_nan() || b < a {
                    return Err(Error::InvalidTimeScale(format!("interval [{a}, {b}] has end < start")));
                }
                if b.is_infinite() && !allow_tail {
                    return Err(Error::InvalidTimeScale("half-line inside a periodic block".into()));
                }
                segments.push(Segment::new(a, b));
            }
            Element::Point(t) => {
                check_finite(*t, "point")?;
                segments.push(Segment::point(*t));
            }
            Element::Grid(GridSpec { start, stop, step }) => {
                check_finite(*start, "grid start")?;
                check_finite(*step, "grid step")?;
                if *step <= 0.0 {
                    return Err(Error::InvalidTimeScale(format!("grid step must be positive, got {step}")));
                }
                let stop = stop.value()?;
                if stop.is_nan() || stop < *start {
                    return Err(Error::InvalidTimeScale(format!("grid stop {stop} < start {start}")));
                }
                if stop.is_infinite() {
                    set_tail((vec![Segment::point(*start)], *step))?;
                } else {
                    let count = ((stop - start) / step + 1e-9).floor() as u64;
                    if count > MAX_EXPANDED_COPIES {
                        return Err(Error::InvalidTimeScale(format!("grid has too many points ({count})")));
                    }
                    segments.extend((0..=count).map(|k| Segment::point(start + k as f64 * step)));
                }
            }
            Element::Periodic(PeriodicSpec { block, period, repeat }) => {
                check_finite(*period, "period")?;
                if *period <= 0.0 {
                    return Err(Error::InvalidTimeScale(format!("period must be positive, got {period}")));
                }
                let inner = expand(block, false)?;
                let block = merge_segments(inner.segments);
                if block.is_empty() {
                    return Err(Error::InvalidTimeScale("empty periodic block".into()));
                }
                match repeat {
                    Repeat::Times(n) => {
                        if *n > MAX_EXPANDED_COPIES {
                            return Err(Error::InvalidTimeScale(format!("too many repeats ({n})")));
                        }
                        for k in 0..*n {
                            segments.extend(block.iter().map(|s| s.shifted(k as f64 * period)));
                        }
                    }
                    Repeat::Named(s) if matches!(s.trim().to_ascii_lowercase().as_str(), "inf" | "infinity") => {
                        let span = block[block.len() - 1].end - block[0].start;
                        if span + MEMBERSHIP_TOL >= *period {
                            if block.len() == 1 {
                                // Copies of a long interval tile a half-line.
                                segments.push(Segment::new(block[0].start, f64::INFINITY));
                            } else {
                                return Err(Error::InvalidTimeScale(
                                    "periodic block is wider than its period".into(),
                                ));
                            }
                        } else {
                            set_tail((block, *period))?;
                        }
                    }
                    Repeat::Named(s) => {
                        return Err(Error::InvalidTimeScale(format!("unrecognized repeat {s:?}")));
                    }
                }
            }
        }
    }
    Ok(Expanded { segments, tail })
}

impl TimeScale {
    /// Builds the normalized (sorted, disjoint, merged) form of the union of
    /// `elements`.
    pub fn normalize(elements: &[Element]) -> Result<Self> {
        let Expanded { mut segments, tail } = expand(elements, true)?;
        if segments.is_empty() && tail.is_none() {
            return Err(Error::InvalidTimeScale("a time scale must be nonempty".into()));
        }

        let tail = match tail {
            None => None,
            Some((block, period)) => {
                let base = block[0].start;
                let half_line = segments
                    .iter()
                    .filter(|s| s.end.is_infinite())
                    .map(|s| s.start)
                    .fold(f64::INFINITY, f64::min);
                // Copies starting at or before `limit` are merged explicitly.
                let limit = if half_line.is_finite() {
                    half_line
                } else {
                    segments.iter().map(|s| s.end).fold(f64::NEG_INFINITY, f64::max)
                };
                let first = if limit < base {
                    0
                } else {
                    ((limit - base) / period).floor() as u64 + 1
                };
                if first > MAX_EXPANDED_COPIES {
                    return Err(Error::InvalidTimeScale("periodic tail starts too far out".into()));
                }
                let mut first = first;
                // Float guard so the first tail copy lies strictly beyond `limit`.
                while block[0].start + first as f64 * period <= limit {
                    first += 1;
                }
                for k in 0..first {
                    segments.extend(block.iter().map(|s| s.shifted(k as f64 * period)));
                }
                if half_line.is_finite() {
                    None
                } else {
                    Some(PeriodicTail { block, period, first })
                }
            }
        };

        let segments = merge_segments(segments);
        Ok(TimeScale { segments, tail })
    }

    /// Convenience constructor from plain segments.
    pub fn from_segments(segs: &[(f64, f64)]) -> Result<Self> {
        let elements: Vec<Element> = segs
            .iter()
            .map(|&(a, b)| {
                if a == b {
                    Element::Point(a)
                } else {
                    Element::Interval([Endpoint::from(a), Endpoint::from(b)])
                }
            })
            .collect();
        Self::normalize(&elements)
    }

    /// The real interval `[a, b]` (use `f64::INFINITY` for a half-line).
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::from_segments(&[(a, b)])
    }

    /// The unbounded grid `{start + k h : k >= 0}`.
    pub fn grid(start: f64, step: f64) -> Result<Self> {
        Self::normalize(&[Element::Grid(GridSpec { start, stop: Endpoint::from(f64::INFINITY), step })])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_unbounded_above(&self) -> bool {
        self.tail.is_some() || self.segments.last().is_some_and(|s| s.end.is_infinite())
    }

    pub fn inf(&self) -> f64 {
        self.segment(0).map(|s| s.start).unwrap_or(f64::NAN)
    }

    pub fn sup(&self) -> f64 {
        if self.is_unbounded_above() {
            f64::INFINITY
        } else {
            self.segments.last().map(|s| s.end).unwrap_or(f64::NAN)
        }
    }

    fn segment(&self, idx: usize) -> Option<Segment> {
        if idx < self.segments.len() {
            return Some(self.segments[idx]);
        }
        let tail = self.tail.as_ref()?;
        let rel = idx - self.segments.len();
        let m = tail.block.len();
        Some(tail.copy_segment(tail.first + (rel / m) as u64, rel % m))
    }

    fn tail_index(&self, copy: u64, j: usize) -> usize {
        let tail = self.tail.as_ref().expect("tail index without tail");
        self.segments.len() + (copy - tail.first) as usize * tail.block.len() + j
    }

    fn contains_in(seg: &Segment, t: f64) -> bool {
        seg.start - MEMBERSHIP_TOL <= t && t <= seg.end + MEMBERSHIP_TOL
    }

    fn locate_in(segs: &[Segment], t: f64) -> Option<usize> {
        // First segment whose end (with tolerance) is >= t.
        let i = segs.partition_point(|s| s.end + MEMBERSHIP_TOL < t);
        (i < segs.len() && Self::contains_in(&segs[i], t)).then_some(i)
    }

    /// Index of the segment containing `t`, if any.
    fn locate(&self, t: f64) -> Option<usize> {
        if !t.is_finite() {
            return None;
        }
        if let Some(i) = Self::locate_in(&self.segments, t) {
            return Some(i);
        }
        let tail = self.tail.as_ref()?;
        if t < tail.start() - MEMBERSHIP_TOL {
            return None;
        }
        let base = tail.block[0].start;
        let k = ((t - base) / tail.period).floor().max(tail.first as f64) as u64;
        for copy in [k.saturating_sub(1).max(tail.first), k, k + 1] {
            let shift = copy as f64 * tail.period;
            let shifted: Vec<Segment> = tail.block.iter().map(|s| s.shifted(shift)).collect();
            if let Some(j) = Self::locate_in(&shifted, t) {
                return Some(self.tail_index(copy, j));
            }
        }
        None
    }

    fn locate_or_err(&self, t: f64) -> Result<usize> {
        self.locate(t).ok_or(Error::NotInTimeScale(t))
    }

    pub fn contains(&self, t: f64) -> bool {
        self.locate(t).is_some()
    }

    /// Canonical representative of `t`: segment endpoints within tolerance
    /// are snapped onto the endpoint.
    pub fn snap(&self, t: f64) -> Result<f64> {
        let seg = self.segment(self.locate_or_err(t)?).expect("located segment");
        Ok(if (t - seg.start).abs() <= MEMBERSHIP_TOL {
            seg.start
        } else if (t - seg.end).abs() <= MEMBERSHIP_TOL {
            seg.end
        } else {
            t
        })
    }

    fn at_right_end(seg: &Segment, t: f64) -> bool {
        seg.end.is_finite() && t >= seg.end - MEMBERSHIP_TOL
    }

    fn at_left_end(seg: &Segment, t: f64) -> bool {
        t <= seg.start + MEMBERSHIP_TOL
    }

    /// Forward jump: `inf {s in T : s > t}`, or `t` itself at `sup T`.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        let idx = self.locate_or_err(t)?;
        let seg = self.segment(idx).expect("located segment");
        if !Self::at_right_end(&seg, t) {
            return Ok(t);
        }
        Ok(match self.segment(idx + 1) {
            Some(next) => next.start,
            None => seg.end,
        })
    }

    /// Backward jump: `sup {s in T : s < t}`, or `t` itself at `inf T`.
    pub fn rho(&self, t: f64) -> Result<f64> {
        let idx = self.locate_or_err(t)?;
        let seg = self.segment(idx).expect("located segment");
        if !Self::at_left_end(&seg, t) {
            return Ok(t);
        }
        Ok(match idx.checked_sub(1).and_then(|i| self.segment(i)) {
            Some(prev) => prev.end,
            None => seg.start,
        })
    }

    /// Graininess `sigma(t) - t`.
    pub fn mu(&self, t: f64) -> Result<f64> {
        let s = self.sigma(t)?;
        let t = self.snap(t)?;
        Ok((s - t).max(0.0))
    }

    pub fn classify(&self, t: f64) -> Result<PointClass> {
        let t = self.snap(t)?;
        let right_scattered = self.sigma(t)? > t;
        let left_scattered = self.rho(t)? < t;
        Ok(PointClass {
            right_scattered,
            right_dense: !right_scattered,
            left_scattered,
            left_dense: !left_scattered,
        })
    }

    /// Decomposes `[t0, t1]` into continuous flows and jumps, in order.
    /// Requires `t0 <= t1`, both in the time scale and finite.
    pub fn walk(&self, t0: f64, t1: f64) -> Result<Vec<Piece>> {
        let i0 = self.locate_or_err(t0)?;
        let i1 = self.locate_or_err(t1)?;
        let (t0, t1) = (self.snap(t0)?, self.snap(t1)?);
        if t1 < t0 {
            return Err(Error::EmptyHorizon { t0, tf: t1 });
        }
        let mut out = Vec::new();
        for idx in i0..=i1 {
            let seg = self.segment(idx).expect("segment in range");
            let from = if idx == i0 { t0 } else { seg.start };
            let to = if idx == i1 { t1 } else { seg.end };
            if to > from {
                out.push(Piece::Flow { from, to });
            }
            if idx < i1 {
                let next = self.segment(idx + 1).expect("next segment");
                out.push(Piece::Jump { at: seg.end, to: next.start });
            }
        }
        Ok(out)
    }

    /// Graininess over the horizon `[t0, tf]` (`tf` may be `+inf`). For an
    /// infinite horizon over a periodic tail one period of the tail is
    /// enumerated, which covers every graininess value it produces.
    pub fn grain(&self, t0: f64, tf: f64) -> Result<GrainFunction> {
        if tf.is_nan() || tf < t0 {
            return Err(Error::EmptyHorizon { t0, tf });
        }
        let end = if tf.is_infinite() {
            match (&self.tail, self.segments.last()) {
                (Some(tail), _) => {
                    // End of the tail copy after the one holding t0.
                    let m = tail.block.len();
                    let k = if t0 <= tail.start() {
                        tail.first
                    } else {
                        (((t0 - tail.block[0].start) / tail.period).floor() as u64).max(tail.first)
                    };
                    tail.copy_segment(k + 1, m - 1).end
                }
                (None, Some(last)) if last.end.is_infinite() => last.start.max(t0),
                (None, Some(last)) => last.end,
                (None, None) => unreachable!("nonempty time scale"),
            }
        } else {
            tf
        };
        let mut jumps = Vec::new();
        let mut has_dense = false;
        for piece in self.walk(t0, end)? {
            match piece {
                Piece::Flow { .. } => has_dense = true,
                Piece::Jump { at, to } => jumps.push((at, to - at)),
            }
        }
        let end = self.snap(end)?;
        let last_mu = self.mu(end)?;
        if last_mu > 0.0 {
            jumps.push((end, last_mu));
        }
        if tf.is_infinite() && self.segments.last().is_some_and(|s| s.end.is_infinite()) {
            has_dense = true;
        }
        let mu_star = jumps.iter().map(|&(_, m)| m).fold(0.0, f64::max);
        Ok(GrainFunction { jumps, has_dense, mu_star })
    }

    /// `1 + mu(t) p(t) != 0` at every right-scattered point of the horizon.
    pub fn is_regressive(&self, p: impl Fn(f64) -> f64, t0: f64, tf: f64) -> Result<bool> {
        let g = self.grain(t0, tf)?;
        Ok(g.jumps.iter().all(|&(t, m)| 1.0 + m * p(t) != 0.0))
    }

    /// `1 + mu(t) p(t) > 0` at every right-scattered point of the horizon.
    pub fn is_positive_regressive(&self, p: impl Fn(f64) -> f64, t0: f64, tf: f64) -> Result<bool> {
        let g = self.grain(t0, tf)?;
        Ok(g.jumps.iter().all(|&(t, m)| 1.0 + m * p(t) > 0.0))
    }

    /// Sign and log-magnitude of `e_p(t, t0)` for `t >= t0`.
    pub fn exp_parts(&self, p: f64, t: f64, t0: f64) -> Result<ExpParts> {
        let mut sign: i8 = 1;
        let mut log_abs = 0.0;
        for piece in self.walk(t0, t)? {
            match piece {
                Piece::Flow { from, to } => log_abs += p * (to - from),
                Piece::Jump { at, to } => {
                    let factor = 1.0 + (to - at) * p;
                    if factor == 0.0 {
                        return Ok(ExpParts { sign: 0, log_abs: f64::NEG_INFINITY });
                    }
                    if factor < 0.0 {
                        sign = -sign;
                    }
                    log_abs += factor.abs().ln();
                }
            }
        }
        Ok(ExpParts { sign, log_abs })
    }

    /// Time-scale exponential `e_p(t, t0)` for constant `p`. For `t < t0`
    /// returns `1 / e_p(t0, t)`.
    pub fn exp_ts(&self, p: f64, t: f64, t0: f64) -> Result<f64> {
        let (lo, hi, invert) = if t >= t0 { (t0, t, false) } else { (t, t0, true) };
        let parts = self.exp_parts(p, hi, lo)?;
        if parts.sign == 0 {
            let bad = self
                .walk(lo, hi)?
                .into_iter()
                .find_map(|pc| match pc {
                    Piece::Jump { at, to } if 1.0 + (to - at) * p == 0.0 => Some((at, to - at)),
                    _ => None,
                })
                .unwrap_or((lo, 0.0));
            return Err(Error::NotRegressive { p, t: bad.0, mu: bad.1 });
        }
        let parts = if invert { ExpParts { sign: parts.sign, log_abs: -parts.log_abs } } else { parts };
        Ok(parts.value())
    }

    /// Delta integral of `f` over `[a, b)`: jumps contribute `mu(s) f(s)`,
    /// continuous pieces are integrated by adaptive Simpson to `tol`.
    pub fn delta_integral(&self, f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
        if b < a {
            return Ok(-self.delta_integral(f, b, a, tol)?);
        }
        let mut total = 0.0;
        for piece in self.walk(a, b)? {
            match piece {
                Piece::Jump { at, to } => total += (to - at) * f(at),
                Piece::Flow { from, to } => total += adaptive_simpson(&f, from, to, tol)?,
            }
        }
        Ok(total)
    }
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Option<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let err = left + right - whole;
        if !err.is_finite() {
            return None;
        }
        if err.abs() <= 15.0 * tol || depth == 0 {
            if depth == 0 && err.abs() > 15.0 * tol {
                return None;
            }
            return Some(left + right + err / 15.0);
        }
        Some(
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
        )
    }

    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48).ok_or(Error::QuadratureFailed { a, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_and_two() -> TimeScale {
        TimeScale::from_segments(&[(0.0, 1.0), (2.0, 2.0)]).unwrap()
    }

    #[test]
    fn normalize_merges_touching_and_overlapping() {
        let ts = TimeScale::from_segments(&[(0.0, 1.0), (1.0, 2.0)]).unwrap();
        assert_eq!(ts.segments(), &[Segment::new(0.0, 2.0)]);
        let ts = TimeScale::from_segments(&[(5.0, 5.0), (0.0, 1.0)]).unwrap();
        assert_eq!(ts.segments(), &[Segment::new(0.0, 1.0), Segment::point(5.0)]);
        let ts = TimeScale::from_segments(&[(0.0, 2.0), (1.0, 3.0)]).unwrap();
        assert_eq!(ts.segments(), &[Segment::new(0.0, 3.0)]);
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert!(TimeScale::normalize(&[]).is_err());
        assert!(TimeScale::from_segments(&[(f64::NAN, 1.0)]).is_err());
        assert!(TimeScale::from_segments(&[(2.0, 1.0)]).is_err());
        assert!(TimeScale::from_segments(&[(f64::NEG_INFINITY, 1.0)]).is_err());
        assert!(TimeScale::from_segments(&[(0.0, f64::INFINITY)]).unwrap().is_unbounded_above());
    }

    #[test]
    fn jump_operators_on_interval_plus_point() {
        let ts = unit_and_two();
        assert_eq!(ts.sigma(1.0).unwrap(), 2.0);
        assert_eq!(ts.sigma(0.5).unwrap(), 0.5);
        assert_eq!(ts.sigma(2.0).unwrap(), 2.0);
        assert_eq!(ts.rho(2.0).unwrap(), 1.0);
        assert_eq!(ts.rho(0.5).unwrap(), 0.5);
        assert_eq!(ts.rho(0.0).unwrap(), 0.0);
        assert_eq!(ts.mu(1.0).unwrap(), 1.0);
        assert_eq!(ts.mu(0.3).unwrap(), 0.0);
        assert!(matches!(ts.sigma(1.5), Err(Error::NotInTimeScale(_))));
    }

    #[test]
    fn graininess_on_uniform_grid() {
        let ts = TimeScale::grid(0.0, 1.0).unwrap();
        for t in [0.0, 1.0, 7.0, 1234.0] {
            assert_eq!(ts.mu(t).unwrap(), 1.0);
        }
        assert!(!ts.contains(0.5));
    }

    #[test]
    fn classification_rows() {
        let ts = unit_and_two();
        let c = ts.classify(2.0).unwrap();
        // sigma(sup T) = sup T, so the maximum is formally right-dense.
        assert!(c.left_scattered && c.right_dense && !c.is_isolated());
        assert!(ts.classify(0.5).unwrap().is_dense());
        let c = ts.classify(1.0).unwrap();
        assert!(c.left_dense && c.right_scattered);

        let grid = TimeScale::grid(0.0, 0.5).unwrap();
        assert!(grid.classify(1.0).unwrap().is_isolated());
    }

    #[test]
    fn circle_plus_examples() {
        assert_eq!(circle_plus(0.0, 3.0, 0.5), 3.0);
        assert_eq!(circle_plus(1.0, 1.0, 1.0), 3.0);
        // -b (+) L a / (1 - b mu) collapses to L a - b.
        let (b, l, a, mu) = (0.8, 1.5, 0.3, 0.4);
        let q = l * a / (1.0 - b * mu);
        assert_relative_eq!(circle_plus(-b, q, mu), l * a - b, max_relative = 1e-14);
    }

    #[test]
    fn regressivity_examples() {
        let grid = TimeScale::grid(0.0, 1.0).unwrap();
        assert!(grid.is_regressive(|_| -2.0, 0.0, 5.0).unwrap());
        assert!(!grid.is_positive_regressive(|_| -2.0, 0.0, 5.0).unwrap());
        assert!(!grid.is_regressive(|_| -1.0, 0.0, 5.0).unwrap());
        let line = TimeScale::interval(0.0, 10.0).unwrap();
        assert!(line.is_regressive(|_| -1e6, 0.0, 10.0).unwrap());
        assert!(matches!(line.is_regressive(|_| 1.0, 3.0, 1.0), Err(Error::EmptyHorizon { .. })));
    }

    #[test]
    fn exp_examples() {
        let line = TimeScale::interval(0.0, 10.0).unwrap();
        assert_relative_eq!(line.exp_ts(-0.5, 3.0, 1.0).unwrap(), (-1.0f64).exp(), max_relative = 1e-15);
        let grid = TimeScale::grid(0.0, 1.0).unwrap();
        assert_relative_eq!(grid.exp_ts(2.0, 4.0, 1.0).unwrap(), 27.0, max_relative = 1e-14);
        let ts = unit_and_two();
        for p in [-0.7, 0.3, 2.5] {
            assert_relative_eq!(ts.exp_ts(p, 2.0, 0.0).unwrap(), p.exp() * (1.0 + p), max_relative = 1e-14);
        }
        assert!(matches!(grid.exp_ts(-1.0, 3.0, 0.0), Err(Error::NotRegressive { .. })));
        // sign tracking through a negative factor
        assert_relative_eq!(grid.exp_ts(-3.0, 3.0, 0.0).unwrap(), -8.0, max_relative = 1e-14);
    }

    #[test]
    fn delta_integral_examples() {
        let grid = TimeScale::from_segments(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).unwrap();
        assert_relative_eq!(grid.delta_integral(|t| t, 0.0, 3.0, QUADRATURE_TOL).unwrap(), 3.0);
        let line = TimeScale::interval(0.0, 2.0).unwrap();
        assert_relative_eq!(line.delta_integral(|t| t, 0.0, 2.0, QUADRATURE_TOL).unwrap(), 2.0, epsilon = 1e-12);
        let mixed = TimeScale::from_segments(&[(0.0, 1.0), (1.5, 1.5), (2.0, 3.0)]).unwrap();
        assert_relative_eq!(mixed.delta_integral(|_| 1.0, 0.0, 3.0, QUADRATURE_TOL).unwrap(), 3.0, epsilon = 1e-12);
        // x^2 on [0,1] plus 0.5*1 + 0.5*1.5^2 on the jumps
        let expected = 1.0 / 3.0 + 0.5 * 1.0 + 0.5 * 2.25;
        assert_relative_eq!(
            mixed.delta_integral(|t| t * t, 0.0, 2.0, QUADRATURE_TOL).unwrap(),
            expected,
            epsilon = 1e-10
        );
    }

    #[test]
    fn periodic_tail_queries() {
        // P_{1,1}: [2k, 2k+1], k >= 0
        let ts = TimeScale::normalize(&[Element::Periodic(PeriodicSpec {
            block: vec![Element::Interval([Endpoint::Finite(0.0), Endpoint::Finite(1.0)])],
            period: 2.0,
            repeat: Repeat::Named("inf".into()),
        })])
        .unwrap();
        assert!(ts.is_unbounded_above());
        assert_eq!(ts.sigma(1001.0).unwrap(), 1002.0);
        assert_eq!(ts.rho(1002.0).unwrap(), 1001.0);
        assert_eq!(ts.mu(1000.5).unwrap(), 0.0);
        assert!(!ts.contains(1001.5));
        let g = ts.grain(0.0, f64::INFINITY).unwrap();
        assert_eq!(g.distinct_values(), vec![0.0, 1.0]);
        assert_eq!(g.mu_star, 1.0);
    }

    #[test]
    fn periodic_tail_merges_with_explicit_elements() {
        let ts = TimeScale::normalize(&[
            Element::Interval([Endpoint::Finite(0.0), Endpoint::Finite(3.2)]),
            Element::Grid(GridSpec { start: 0.0, stop: Endpoint::Named("inf".into()), step: 1.0 }),
        ])
        .unwrap();
        assert_eq!(ts.sigma(3.2).unwrap(), 4.0);
        assert_eq!(ts.sigma(4.0).unwrap(), 5.0);
        assert_eq!(ts.mu(2.0).unwrap(), 0.0);
        assert_relative_eq!(ts.mu(3.2).unwrap(), 0.8, max_relative = 1e-12);
    }

    #[test]
    fn json_forms() {
        let raw = r#"[{"interval":[0,1]},{"point":2},{"grid":{"start":3,"stop":5,"step":0.5}},
                      {"periodic":{"block":[{"point":0}],"period":1,"repeat":3}}]"#;
        let els: Vec<Element> = serde_json::from_str(raw).unwrap();
        let ts = TimeScale::normalize(&els).unwrap();
        assert_eq!(ts.segments().len(), 1 + 1 + 5 + 0);
        assert!(ts.contains(4.5) && !ts.contains(5.5));
        let wrapped: TimeScaleFile = serde_json::from_str(r#"{"elements":[{"interval":[0,"inf"]}]}"#).unwrap();
        assert!(TimeScale::normalize(&wrapped.into_elements()).unwrap().is_unbounded_above());
    }

    fn mixed_scale() -> impl Strategy<Value = TimeScale> {
        prop::collection::vec((0.05f64..1.0, 0.0f64..1.0, prop::bool::ANY), 1..8).prop_map(|parts| {
            let mut t = 0.0;
            let mut segs = Vec::new();
            for (gap, len, point) in parts {
                let len = if point { 0.0 } else { len };
                segs.push((t, t + len));
                t += len + gap;
            }
            TimeScale::from_segments(&segs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn exp_identity_and_semigroup(ts in mixed_scale(), p in -0.9f64..3.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let pts: Vec<f64> = ts.segments().iter().flat_map(|s| [s.start, 0.5 * (s.start + s.end), s.end]).collect();
            let pick = |x: f64| pts[((x * pts.len() as f64) as usize).min(pts.len() - 1)];
            let (mut r, mut t) = (pick(a), pick(b));
            if r > t { std::mem::swap(&mut r, &mut t); }
            let s = pts.iter().copied().find(|&s| s >= r && s <= t).unwrap_or(r);
            prop_assert_eq!(ts.exp_ts(p, t, t).unwrap(), 1.0);
            let lhs = ts.exp_ts(p, t, s).unwrap() * ts.exp_ts(p, s, r).unwrap();
            let rhs = ts.exp_ts(p, t, r).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
            // gaps are < 1 and p > -1, so p is positively regressive here
            prop_assert!(rhs > 0.0);
        }

        #[test]
        fn exp_delta_derivative_at_scattered_points(ts in mixed_scale(), p in -0.9f64..3.0) {
            let t0 = ts.inf();
            for seg in ts.segments() {
                let t = seg.end;
                let mu = ts.mu(t).unwrap();
                if mu == 0.0 { continue; }
                let e_t = ts.exp_ts(p, t, t0).unwrap();
                let e_s = ts.exp_ts(p, t + mu, t0).unwrap();
                prop_assert!(((e_s - e_t) / mu - p * e_t).abs() <= 1e-12 * e_t.abs().max(1.0) / mu.min(1.0));
            }
        }

        #[test]
        fn delta_integral_of_one_is_length(ts in mixed_scale(), a in 0.0f64..1.0) {
            let (lo, hi) = (ts.inf(), ts.sup());
            let mid = ts.snap(ts.segments()[((a * ts.segments().len() as f64) as usize).min(ts.segments().len() - 1)].start).unwrap();
            let whole = ts.delta_integral(|_| 1.0, lo, hi, QUADRATURE_TOL).unwrap();
            prop_assert!((whole - (hi - lo)).abs() <= 1e-12);
            let split = ts.delta_integral(|t| t.sin(), lo, mid, QUADRATURE_TOL).unwrap()
                + ts.delta_integral(|t| t.sin(), mid, hi, QUADRATURE_TOL).unwrap();
            let joint = ts.delta_integral(|t| t.sin(), lo, hi, QUADRATURE_TOL).unwrap();
            prop_assert!((split - joint).abs() <= 1e-9);
        }

        #[test]
        fn circle_plus_group_laws(p in -5.0f64..5.0, q in -5.0f64..5.0, r in -5.0f64..5.0, mu in 0.0f64..2.0) {
            prop_assert_eq!(circle_plus(p, 0.0, mu), p);
            prop_assert_eq!(circle_plus(p, q, mu), circle_plus(q, p, mu));
            let l = circle_plus(circle_plus(p, q, mu), r, mu);
            let rr = circle_plus(p, circle_plus(q, r, mu), mu);
            prop_assert!((l - rr).abs() <= 1e-9 * (1.0 + l.abs()));
        }
    }
}
