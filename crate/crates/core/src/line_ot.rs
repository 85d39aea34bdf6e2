//! Optimal transport on the real line through quantile functions.
//!
//! Measures are finite sums of atoms and piecewise-constant densities, so
//! their quantile functions are piecewise linear and every integral below
//! is evaluated in closed form over a merged breakpoint partition.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, MASS_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineAtom {
    pub x: f64,
    pub mass: f64,
}

/// Constant `density` on `[a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinePiece {
    pub a: f64,
    pub b: f64,
    pub density: f64,
}

impl LinePiece {
    pub fn mass(&self) -> f64 {
        self.density * (self.b - self.a)
    }
}

/// A compactly supported probability measure on the line.
///
/// Kept in canonical form: atoms sorted with distinct positions, pieces
/// sorted, non-overlapping, with positive density, and adjacent pieces of
/// equal density merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineMeasure {
    atoms: Vec<LineAtom>,
    pieces: Vec<LinePiece>,
}

fn mass_tolerance(items: usize) -> f64 {
    MASS_TOL.max(items as f64 * 4.0 * f64::EPSILON)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

impl LineMeasure {
    /// Validates and canonicalizes. Total mass must be 1 within 1e-12.
    pub fn new(atoms: Vec<LineAtom>, pieces: Vec<LinePiece>) -> Result<Self> {
        let m = Self::canonicalize(atoms, pieces)?;
        let total = m.total_mass();
        let n = m.atoms.len() + m.pieces.len();
        if (total - 1.0).abs() > mass_tolerance(n) {
            return Err(Error::InvalidMeasure(format!("total mass {total} differs from 1")));
        }
        Ok(m)
    }

    /// Like [`LineMeasure::new`] but rescales to mass 1, accepting any
    /// positive total.
    pub fn normalized(atoms: Vec<LineAtom>, pieces: Vec<LinePiece>) -> Result<Self> {
        let m = Self::canonicalize(atoms, pieces)?;
        let total = m.total_mass();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("measure has no mass".into()));
        }
        Ok(LineMeasure {
            atoms: m.atoms.iter().map(|a| LineAtom { x: a.x, mass: a.mass / total }).collect(),
            pieces: m.pieces.iter().map(|p| LinePiece { a: p.a, b: p.b, density: p.density / total }).collect(),
        })
    }

    fn canonicalize(mut atoms: Vec<LineAtom>, mut pieces: Vec<LinePiece>) -> Result<Self> {
        for a in &atoms {
            if !a.x.is_finite() || !a.mass.is_finite() || a.mass < 0.0 {
                return Err(Error::InvalidMeasure(format!("bad atom {a:?}")));
            }
        }
        for p in &pieces {
            if !(p.a.is_finite() && p.b.is_finite() && p.density.is_finite()) || p.density < 0.0 {
                return Err(Error::InvalidMeasure(format!("bad piece {p:?}")));
            }
            if !(p.a < p.b) {
                return Err(Error::InvalidMeasure(format!("empty piece [{}, {})", p.a, p.b)));
            }
        }
        atoms.retain(|a| a.mass > 0.0);
        atoms.sort_by(|p, q| p.x.total_cmp(&q.x));
        let mut merged: Vec<LineAtom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.x == a.x => last.mass += a.mass,
                _ => merged.push(a),
            }
        }
        pieces.retain(|p| p.density > 0.0);
        pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
        let mut joined: Vec<LinePiece> = Vec::with_capacity(pieces.len());
        for p in pieces {
            if let Some(last) = joined.last_mut() {
                if p.a < last.b {
                    return Err(Error::InvalidMeasure(format!(
                        "overlapping pieces [{}, {}) and [{}, {})",
                        last.a, last.b, p.a, p.b
                    )));
                }
                if p.a == last.b && close(p.density, last.density, 1e-12) {
                    // keep the mass exact when merging
                    let mass = last.mass() + p.mass();
                    last.b = p.b;
                    last.density = mass / (last.b - last.a);
                    continue;
                }
            }
            joined.push(p);
        }
        Ok(LineMeasure { atoms: merged, pieces: joined })
    }

    pub fn dirac(x: f64) -> Self {
        LineMeasure { atoms: vec![LineAtom { x, mass: 1.0 }], pieces: vec![] }
    }

    /// Uniform probability on `[a, b]`.
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidMeasure(format!("uniform needs a < b, got [{a}, {b}]")));
        }
        Ok(LineMeasure { atoms: vec![], pieces: vec![LinePiece { a, b, density: 1.0 / (b - a) }] })
    }

    /// Atomic measure from `(position, mass)` pairs.
    pub fn discrete(points: &[(f64, f64)]) -> Result<Self> {
        Self::new(points.iter().map(|&(x, mass)| LineAtom { x, mass }).collect(), vec![])
    }

    pub fn atoms(&self) -> &[LineAtom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[LinePiece] {
        &self.pieces
    }

    pub fn is_atomless(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum::<f64>() + self.pieces.iter().map(LinePiece::mass).sum::<f64>()
    }

    /// Pushforward under `x -> x + shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        LineMeasure {
            atoms: self.atoms.iter().map(|a| LineAtom { x: a.x + shift, mass: a.mass }).collect(),
            pieces: self
                .pieces
                .iter()
                .map(|p| LinePiece { a: p.a + shift, b: p.b + shift, density: p.density })
                .collect(),
        }
    }

    /// Atom and piece data agree within `tol` (relative).
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.atoms.len() == other.atoms.len()
            && self.pieces.len() == other.pieces.len()
            && self.atoms.iter().zip(&other.atoms).all(|(p, q)| close(p.x, q.x, tol) && close(p.mass, q.mass, tol))
            && self
                .pieces
                .iter()
                .zip(&other.pieces)
                .all(|(p, q)| close(p.a, q.a, tol) && close(p.b, q.b, tol) && close(p.density, q.density, tol))
    }
}

impl<'de> Deserialize<'de> for LineMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            #[serde(default)]
            atoms: Vec<LineAtom>,
            #[serde(default)]
            pieces: Vec<LinePiece>,
        }
        let raw = Raw::deserialize(d)?;
        let m = LineMeasure::canonicalize(raw.atoms, raw.pieces).map_err(serde::de::Error::custom)?;
        // serialized numbers are rounded, so accept a looser total and rescale
        let total = m.total_mass();
        if (total - 1.0).abs() > 1e-9 {
            return Err(serde::de::Error::custom(format!("total mass {total} differs from 1")));
        }
        LineMeasure::normalized(m.atoms, m.pieces).map_err(serde::de::Error::custom)
    }
}

/// The right-continuous CDF `m((-inf, x])`.
pub fn cdf_eval(m: &LineMeasure, x: f64) -> f64 {
    let atoms: f64 = m.atoms.iter().take_while(|a| a.x <= x).map(|a| a.mass).sum();
    let dens: f64 = m.pieces.iter().take_while(|p| p.a < x).map(|p| p.density * (x.min(p.b) - p.a)).sum();
    (atoms + dens).min(1.0)
}

/// One linear piece of a quantile function on `[t0, t1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileSegment {
    pub t0: f64,
    pub t1: f64,
    /// Value at `t0`.
    pub v0: f64,
    /// Left limit at `t1`.
    pub v1: f64,
}

impl QuantileSegment {
    pub fn slope(&self) -> f64 {
        (self.v1 - self.v0) / (self.t1 - self.t0)
    }

    fn at(&self, t: f64) -> f64 {
        if t <= self.t0 {
            self.v0
        } else if t >= self.t1 {
            self.v1
        } else {
            self.v0 + (self.v1 - self.v0) * ((t - self.t0) / (self.t1 - self.t0))
        }
    }

    fn sub(&self, s0: f64, s1: f64) -> QuantileSegment {
        QuantileSegment { t0: s0, t1: s1, v0: self.at(s0), v1: self.at(s1) }
    }

    /// `∫ v(t)^2 dt` over the segment.
    fn square_integral(&self) -> f64 {
        linear_square_integral(self.t1 - self.t0, self.v0, self.v1)
    }
}

/// Exact `∫ f^2` for `f` linear from `a` to `b` over an interval of length `dt`.
fn linear_square_integral(dt: f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let delta = b - a;
    dt * (mid * mid + delta * delta / 12.0)
}

/// A nondecreasing, right-continuous, piecewise-linear function on `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFn {
    segments: Vec<QuantileSegment>,
}

impl QuantileFn {
    /// Builds from contiguous segments covering `[0, 1)`; rejects any
    /// decrease, within a segment or across a breakpoint.
    pub fn from_segments(segments: Vec<QuantileSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidQuantile("no segments".into()));
        }
        if segments[0].t0 != 0.0 || (segments.last().unwrap().t1 - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidQuantile("segments must cover [0, 1)".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.t0 < s.t1) || !s.v0.is_finite() || !s.v1.is_finite() {
                return Err(Error::InvalidQuantile(format!("degenerate segment {s:?}")));
            }
            if s.v1 < s.v0 {
                return Err(Error::InvalidQuantile(format!("decreasing segment {s:?}")));
            }
            if let Some(next) = segments.get(i + 1) {
                if next.t0 != s.t1 {
                    return Err(Error::InvalidQuantile("segments are not contiguous".into()));
                }
                if next.v0 < s.v1 - 1e-12 * (1.0 + s.v1.abs()) {
                    return Err(Error::InvalidQuantile(format!("decreasing jump at t = {}", s.t1)));
                }
            }
        }
        let mut q = QuantileFn { segments };
        q.segments.last_mut().unwrap().t1 = 1.0;
        q.simplify();
        Ok(q)
    }

    /// Constant function (the quantile of a Dirac mass).
    pub fn constant(a: f64) -> Self {
        QuantileFn { segments: vec![QuantileSegment { t0: 0.0, t1: 1.0, v0: a, v1: a }] }
    }

    /// Breakpoints as `(t, value, right slope)`.
    pub fn knots(&self) -> Vec<(f64, f64, f64)> {
        self.segments.iter().map(|s| (s.t0, s.v0, s.slope())).collect()
    }

    pub fn segments(&self) -> &[QuantileSegment] {
        &self.segments
    }

    /// Right-continuous evaluation; `t = 0` and `t = 1` give the boundary limits.
    pub fn eval(&self, t: f64) -> f64 {
        if t >= 1.0 {
            return self.segments.last().unwrap().v1;
        }
        let i = self.segments.partition_point(|s| s.t1 <= t);
        self.segments[i.min(self.segments.len() - 1)].at(t)
    }

    /// Boundary values `(q(0+), q(1-))`.
    pub fn bounds(&self) -> (f64, f64) {
        (self.segments[0].v0, self.segments.last().unwrap().v1)
    }

    fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().map(|s| s.t0)
    }

    /// Merges neighbours that continue the same line.
    fn simplify(&mut self) {
        let mut out: Vec<QuantileSegment> = Vec::with_capacity(self.segments.len());
        for s in self.segments.drain(..) {
            if let Some(last) = out.last_mut() {
                let joined = QuantileSegment { t0: last.t0, t1: s.t1, v0: last.v0, v1: s.v1 };
                let tol = 1e-13 * (1.0 + joined.v0.abs().max(joined.v1.abs()));
                if s.v0 == last.v1
                    && (joined.at(last.t1) - last.v1).abs() <= tol
                    && (last.v1 == last.v0) == (s.v1 == s.v0)
                {
                    *last = joined;
                    continue;
                }
            }
            out.push(s);
        }
        self.segments = out;
    }

    /// Pointwise `sum_i w_i q_i` over the merged partition.
    pub fn weighted_sum(terms: &[(f64, &QuantileFn)]) -> Result<QuantileFn> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("empty quantile combination".into()));
        }
        let cuts = merged_breakpoints(terms.iter().map(|(_, q)| *q));
        let mut cursors = vec![0usize; terms.len()];
        let mut segments = Vec::with_capacity(cuts.len());
        for w in cuts.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            let mut v0 = 0.0;
            let mut v1 = 0.0;
            for (k, (weight, q)) in terms.iter().enumerate() {
                let seg = q.segment_covering(&mut cursors[k], s0);
                let sub = seg.sub(s0, s1);
                v0 += weight * sub.v0;
                v1 += weight * sub.v1;
            }
            segments.push(QuantileSegment { t0: s0, t1: s1, v0, v1: v1.max(v0) });
        }
        let mut q = QuantileFn { segments };
        q.simplify();
        Ok(q)
    }

    fn segment_covering(&self, cursor: &mut usize, t: f64) -> &QuantileSegment {
        while *cursor + 1 < self.segments.len() && self.segments[*cursor].t1 <= t {
            *cursor += 1;
        }
        &self.segments[*cursor]
    }

    /// Pointwise `median(lo, q(t), hi)`.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<QuantileFn> {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("clamp needs lo < hi, got [{lo}, {hi}]")));
        }
        let mut segments = Vec::with_capacity(self.segments.len() + 2);
        for s in &self.segments {
            let mut cuts = vec![s.t0];
            for level in [lo, hi] {
                if s.v0 < level && level < s.v1 {
                    let t = s.t0 + (level - s.v0) / (s.v1 - s.v0) * (s.t1 - s.t0);
                    if t > s.t0 && t < s.t1 {
                        cuts.push(t);
                    }
                }
            }
            cuts.push(s.t1);
            for w in cuts.windows(2) {
                let sub = s.sub(w[0], w[1]);
                segments.push(QuantileSegment {
                    t0: w[0],
                    t1: w[1],
                    v0: sub.v0.clamp(lo, hi),
                    v1: sub.v1.clamp(lo, hi),
                });
            }
        }
        // crossing points computed in floating point may leave a sliver
        // slightly outside [lo, hi]; the clamp above already pins values
        let mut q = QuantileFn { segments };
        q.simplify();
        Ok(q)
    }

    /// Exact `∫_0^1 (q - r)^2 dt`.
    pub fn squared_distance(&self, other: &QuantileFn) -> f64 {
        let cuts = merged_breakpoints([self, other]);
        let (mut ca, mut cb) = (0, 0);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let a = self.segment_covering(&mut ca, w[0]).sub(w[0], w[1]);
            let b = other.segment_covering(&mut cb, w[0]).sub(w[0], w[1]);
            total += linear_square_integral(w[1] - w[0], a.v0 - b.v0, a.v1 - b.v1);
        }
        total
    }

    /// Exact `∫_0^1 q^2 dt`.
    pub fn second_moment(&self) -> f64 {
        self.segments.iter().map(QuantileSegment::square_integral).sum()
    }
}

fn merged_breakpoints<'a>(qs: impl IntoIterator<Item = &'a QuantileFn>) -> Vec<f64> {
    let mut cuts: Vec<f64> = qs.into_iter().flat_map(|q| q.breakpoints()).collect();
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

/// The quantile function `t -> inf { x : F(x) > t }`.
pub fn quantile(m: &LineMeasure) -> QuantileFn {
    enum Item {
        Atom(f64, f64),
        Piece(f64, f64, f64),
    }
    // split pieces at interior atoms so items are ordered by position
    let mut items: Vec<(f64, u8, Item)> = Vec::new();
    for a in &m.atoms {
        items.push((a.x, 0, Item::Atom(a.x, a.mass)));
    }
    for p in &m.pieces {
        let mut start = p.a;
        for a in m.atoms.iter().filter(|a| p.a < a.x && a.x < p.b) {
            items.push((start, 1, Item::Piece(start, a.x, p.density)));
            start = a.x;
        }
        items.push((start, 1, Item::Piece(start, p.b, p.density)));
    }
    items.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut segments = Vec::with_capacity(items.len());
    let mut t = 0.0;
    for (_, _, item) in &items {
        let (v0, v1, mass) = match *item {
            Item::Atom(x, mass) => (x, x, mass),
            Item::Piece(a, b, density) => (a, b, density * (b - a)),
        };
        if mass <= 0.0 {
            continue;
        }
        segments.push(QuantileSegment { t0: t, t1: t + mass, v0, v1 });
        t += mass;
    }
    if let Some(last) = segments.last_mut() {
        last.t1 = 1.0;
    }
    let mut q = QuantileFn { segments };
    q.simplify();
    q
}

/// The measure whose quantile is `q`: the pushforward of Lebesgue on `(0, 1)`.
pub fn measure_from_quantile(q: &QuantileFn) -> Result<LineMeasure> {
    let mut atoms = Vec::new();
    let mut pieces: Vec<LinePiece> = Vec::new();
    for s in &q.segments {
        let mass = s.t1 - s.t0;
        if s.v1 < s.v0 {
            return Err(Error::InvalidQuantile(format!("decreasing segment {s:?}")));
        }
        if s.v1 == s.v0 {
            atoms.push(LineAtom { x: s.v0, mass });
            continue;
        }
        let mut a = s.v0;
        // absorb rounding overlap with the previous piece
        if let Some(prev) = pieces.last() {
            if a < prev.b {
                if prev.b - a > 1e-12 * (1.0 + a.abs()) {
                    return Err(Error::InvalidQuantile(format!("decreasing jump at t = {}", s.t0)));
                }
                a = prev.b;
            }
        }
        if s.v1 <= a {
            atoms.push(LineAtom { x: a, mass });
        } else {
            pieces.push(LinePiece { a, b: s.v1, density: mass / (s.v1 - a) });
        }
    }
    LineMeasure::new(atoms, pieces)
}

/// `(inf supp, sup supp)`.
pub fn support_bounds(m: &LineMeasure) -> (f64, f64) {
    quantile(m).bounds()
}

/// Squared W2 distance via the quantile isometry.
pub fn w2_line_squared(m1: &LineMeasure, m2: &LineMeasure) -> f64 {
    quantile(m1).squared_distance(&quantile(m2))
}

pub fn w2_line(m1: &LineMeasure, m2: &LineMeasure) -> f64 {
    w2_line_squared(m1, m2).sqrt()
}

fn check_weights(problem: &[(f64, LineMeasure)]) -> Result<()> {
    if problem.is_empty() {
        return Err(Error::InvalidArgument("empty barycenter problem".into()));
    }
    if problem.iter().any(|(w, _)| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be positive".into()));
    }
    let total: f64 = problem.iter().map(|(w, _)| w).sum();
    if (total - 1.0).abs() > mass_tolerance(problem.len()) {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// The weighted average of the input quantile functions.
pub fn barycenter_quantile(problem: &[(f64, LineMeasure)]) -> Result<QuantileFn> {
    check_weights(problem)?;
    let qs: Vec<QuantileFn> = problem.iter().map(|(_, m)| quantile(m)).collect();
    let terms: Vec<(f64, &QuantileFn)> = problem.iter().map(|(w, _)| *w).zip(&qs).collect();
    QuantileFn::weighted_sum(&terms)
}

/// The unique barycenter of a finitely supported law on the line.
pub fn barycenter_line(problem: &[(f64, LineMeasure)]) -> Result<LineMeasure> {
    measure_from_quantile(&barycenter_quantile(problem)?)
}

/// `sum_i w_i W2^2(m, m_i)`.
pub fn line_objective(problem: &[(f64, LineMeasure)], m: &LineMeasure) -> f64 {
    let q = quantile(m);
    problem.iter().map(|(w, mi)| w * q.squared_distance(&quantile(mi))).sum()
}

/// `∫ [sum_i w_i q_i^2 - (sum_i w_i q_i)^2] dt`, the minimal objective value.
pub fn dispersion(problem: &[(f64, LineMeasure)]) -> Result<f64> {
    let mean = barycenter_quantile(problem)?;
    let spread: f64 = problem.iter().map(|(w, m)| w * quantile(m).second_moment()).sum();
    Ok((spread - mean.second_moment()).max(0.0))
}

/// A finitely supported coupling on the line, entries `(x, y, mass)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinePlan {
    pub entries: Vec<(f64, f64, f64)>,
}

impl LinePlan {
    pub fn cost(&self) -> f64 {
        self.entries.iter().map(|(x, y, m)| m * (x - y) * (x - y)).sum()
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }
}

/// The monotone (optimal) coupling between two atomic measures.
pub fn monotone_plan(m1: &LineMeasure, m2: &LineMeasure) -> Result<LinePlan> {
    if !m1.pieces.is_empty() || !m2.pieces.is_empty() {
        return Err(Error::InvalidArgument("monotone_plan needs atomic measures".into()));
    }
    let (q1, q2) = (quantile(m1), quantile(m2));
    let cuts = merged_breakpoints([&q1, &q2]);
    let (mut c1, mut c2) = (0, 0);
    let mut entries: Vec<(f64, f64, f64)> = Vec::new();
    for w in cuts.windows(2) {
        let x = q1.segment_covering(&mut c1, w[0]).v0;
        let y = q2.segment_covering(&mut c2, w[0]).v0;
        let mass = w[1] - w[0];
        match entries.last_mut() {
            Some(last) if last.0 == x && last.1 == y => last.2 += mass,
            _ => entries.push((x, y, mass)),
        }
    }
    Ok(LinePlan { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uni(a: f64, b: f64) -> LineMeasure {
        LineMeasure::uniform(a, b).unwrap()
    }

    fn mixed() -> LineMeasure {
        LineMeasure::new(vec![LineAtom { x: 0.0, mass: 0.5 }], vec![LinePiece { a: 0.0, b: 1.0, density: 0.5 }])
            .unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(LineMeasure::discrete(&[(0.0, 0.5)]).is_err());
        assert!(LineMeasure::new(
            vec![],
            vec![LinePiece { a: 0.0, b: 1.0, density: 0.5 }, LinePiece { a: 0.5, b: 1.5, density: 0.5 }]
        )
        .is_err());
        assert!(LineMeasure::new(vec![], vec![LinePiece { a: 1.0, b: 1.0, density: 1.0 }]).is_err());
        assert!(LineMeasure::discrete(&[(0.0, -0.5), (1.0, 1.5)]).is_err());
    }

    #[test]
    fn canonical_form_merges() {
        let m = LineMeasure::new(
            vec![LineAtom { x: 2.0, mass: 0.25 }, LineAtom { x: 2.0, mass: 0.25 }],
            vec![LinePiece { a: 0.5, b: 1.0, density: 0.5 }, LinePiece { a: 0.0, b: 0.5, density: 0.5 }],
        )
        .unwrap();
        assert_eq!(m.atoms(), &[LineAtom { x: 2.0, mass: 0.5 }]);
        assert_eq!(m.pieces(), &[LinePiece { a: 0.0, b: 1.0, density: 0.5 }]);
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(cdf_eval(&uni(0.0, 1.0), 0.5), 0.5);
        assert_eq!(cdf_eval(&LineMeasure::dirac(0.0), 0.0), 1.0);
        assert_eq!(cdf_eval(&LineMeasure::dirac(0.0), -1e-300), 0.0);
        assert_eq!(cdf_eval(&mixed(), 0.5), 0.75);
    }

    #[test]
    fn quantile_examples() {
        let q = quantile(&uni(0.0, 1.0));
        for t in [0.0, 0.1, 0.5, 0.9] {
            assert_eq!(q.eval(t), t);
        }
        let q = quantile(&LineMeasure::dirac(3.5));
        assert_eq!(q, QuantileFn::constant(3.5));
        let q = quantile(&LineMeasure::discrete(&[(0.0, 0.5), (1.0, 0.5)]).unwrap());
        assert_eq!(q.eval(0.25), 0.0);
        assert_eq!(q.eval(0.4999), 0.0);
        assert_eq!(q.eval(0.5), 1.0);
        assert_eq!(q.eval(0.99), 1.0);
    }

    #[test]
    fn quantile_of_atom_inside_piece() {
        let m =
            LineMeasure::new(vec![LineAtom { x: 0.5, mass: 0.5 }], vec![LinePiece { a: 0.0, b: 1.0, density: 0.5 }])
                .unwrap();
        let q = quantile(&m);
        assert_eq!(q.eval(0.25), 0.5);
        assert_eq!(q.eval(0.5), 0.5);
        assert_eq!(q.eval(0.75), 0.5);
        assert!((q.eval(0.875) - 0.75).abs() < 1e-15);
        assert!(measure_from_quantile(&q).unwrap().approx_eq(&m, 1e-12));
    }

    #[test]
    fn measure_from_quantile_examples() {
        let id = QuantileFn::from_segments(vec![QuantileSegment { t0: 0.0, t1: 1.0, v0: 0.0, v1: 1.0 }]).unwrap();
        assert_eq!(measure_from_quantile(&id).unwrap(), uni(0.0, 1.0));
        assert_eq!(measure_from_quantile(&QuantileFn::constant(2.0)).unwrap(), LineMeasure::dirac(2.0));
        let q = QuantileFn::from_segments(vec![
            QuantileSegment { t0: 0.0, t1: 0.25, v0: 0.0, v1: 0.0 },
            QuantileSegment { t0: 0.25, t1: 0.75, v0: 0.0, v1: 1.0 },
            QuantileSegment { t0: 0.75, t1: 1.0, v0: 1.0, v1: 1.0 },
        ])
        .unwrap();
        let m = measure_from_quantile(&q).unwrap();
        assert_eq!(m.atoms(), &[LineAtom { x: 0.0, mass: 0.25 }, LineAtom { x: 1.0, mass: 0.25 }]);
        assert_eq!(m.pieces(), &[LinePiece { a: 0.0, b: 1.0, density: 0.5 }]);
    }

    #[test]
    fn decreasing_quantiles_rejected() {
        let down = vec![QuantileSegment { t0: 0.0, t1: 1.0, v0: 1.0, v1: 0.0 }];
        assert!(QuantileFn::from_segments(down).is_err());
        let jump = vec![
            QuantileSegment { t0: 0.0, t1: 0.5, v0: 1.0, v1: 1.0 },
            QuantileSegment { t0: 0.5, t1: 1.0, v0: 0.0, v1: 0.0 },
        ];
        assert!(QuantileFn::from_segments(jump).is_err());
    }

    #[test]
    fn support_bound_examples() {
        assert_eq!(support_bounds(&uni(0.0, 1.0)), (0.0, 1.0));
        assert_eq!(support_bounds(&LineMeasure::dirac(-2.0)), (-2.0, -2.0));
        let m =
            LineMeasure::new(vec![LineAtom { x: 0.0, mass: 0.5 }], vec![LinePiece { a: 2.0, b: 3.0, density: 0.5 }])
                .unwrap();
        assert_eq!(support_bounds(&m), (0.0, 3.0));
    }

    #[test]
    fn w2_examples() {
        assert!((w2_line(&uni(0.0, 1.0), &uni(1.0, 2.0)) - 1.0).abs() < 1e-15);
        assert_eq!(w2_line(&LineMeasure::dirac(0.0), &LineMeasure::dirac(3.0)), 3.0);
        let d = w2_line(&uni(0.0, 1.0), &LineMeasure::dirac(0.0));
        assert!((d - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn w2_against_fine_atomic_approximation() {
        // 200 equal atoms at cell centres approximate uniform[0,1]; their
        // squared distance to δ_0 is sum ((k+1/2)/n)^2 / n = 1/3 - 1/(12 n^2)
        let n = 200;
        let pts: Vec<(f64, f64)> = (0..n).map(|k| ((k as f64 + 0.5) / n as f64, 1.0 / n as f64)).collect();
        let approx = LineMeasure::discrete(&pts).unwrap();
        let exact = 1.0 / 3.0 - 1.0 / (12.0 * (n * n) as f64);
        assert!((w2_line_squared(&approx, &LineMeasure::dirac(0.0)) - exact).abs() < 1e-12);
    }

    #[test]
    fn barycenter_examples() {
        let b = barycenter_line(&[(0.5, uni(0.0, 1.0)), (0.5, uni(2.0, 3.0))]).unwrap();
        assert!(b.approx_eq(&uni(1.0, 2.0), 1e-14));
        let b = barycenter_line(&[
            (1.0 / 3.0, LineMeasure::dirac(1.0)),
            (1.0 / 3.0, LineMeasure::dirac(2.0)),
            (1.0 / 3.0, LineMeasure::dirac(6.0)),
        ])
        .unwrap();
        assert_eq!(b.atoms().len(), 1);
        assert!((b.atoms()[0].x - 3.0).abs() < 1e-14);
        let b = barycenter_line(&[(0.5, LineMeasure::dirac(0.0)), (0.5, uni(0.0, 1.0))]).unwrap();
        assert!(b.approx_eq(&uni(0.0, 0.5), 1e-14));
    }

    #[test]
    fn dispersion_examples() {
        let p = [(0.5, LineMeasure::dirac(0.0)), (0.5, LineMeasure::dirac(2.0))];
        assert_eq!(dispersion(&p).unwrap(), 1.0);
        assert_eq!(line_objective(&p, &LineMeasure::dirac(1.0)), 1.0);
        assert_eq!(dispersion(&[(1.0, mixed())]).unwrap(), 0.0);
        let p = [(0.5, uni(0.0, 1.0)), (0.5, uni(2.0, 3.0))];
        // quantiles t and 2 + t sit at constant distance 1 from their mean
        assert!((dispersion(&p).unwrap() - 1.0).abs() < 1e-14);
        let b = barycenter_line(&p).unwrap();
        assert!((line_objective(&p, &b) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn clamp_examples() {
        let q = QuantileFn::from_segments(vec![QuantileSegment { t0: 0.0, t1: 1.0, v0: -0.5, v1: 1.5 }]).unwrap();
        let c = q.clamp(0.0, 1.0).unwrap();
        assert_eq!(
            c.segments(),
            &[
                QuantileSegment { t0: 0.0, t1: 0.25, v0: 0.0, v1: 0.0 },
                QuantileSegment { t0: 0.25, t1: 0.75, v0: 0.0, v1: 1.0 },
                QuantileSegment { t0: 0.75, t1: 1.0, v0: 1.0, v1: 1.0 },
            ]
        );
        let inside = quantile(&uni(0.2, 0.7));
        assert_eq!(inside.clamp(0.0, 1.0).unwrap(), inside);
        let below = quantile(&uni(-3.0, -1.0));
        assert_eq!(below.clamp(0.0, 1.0).unwrap(), QuantileFn::constant(0.0));
        assert!(q.clamp(1.0, 1.0).is_err());
    }

    #[test]
    fn monotone_plan_pairs_in_order() {
        let a = LineMeasure::discrete(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let b = LineMeasure::discrete(&[(2.0, 0.25), (3.0, 0.75)]).unwrap();
        let plan = monotone_plan(&a, &b).unwrap();
        assert_eq!(plan.entries, vec![(0.0, 2.0, 0.25), (0.0, 3.0, 0.25), (1.0, 3.0, 0.5)]);
        assert!((plan.cost() - w2_line_squared(&a, &b)).abs() < 1e-14);
        assert!(monotone_plan(&uni(0.0, 1.0), &b).is_err());
    }

    fn arb_measure() -> impl Strategy<Value = LineMeasure> {
        (
            prop::collection::vec((-5.0..5.0f64, 0.01..1.0f64), 0..5),
            prop::collection::vec((0.05..1.0f64, 0.01..1.0f64), 0..4),
            -5.0..5.0f64,
        )
            .prop_filter_map("needs mass", |(atoms, widths, start)| {
                let mut pieces = Vec::new();
                let mut x = start;
                for (i, (w, d)) in widths.iter().enumerate() {
                    // leave a gap after every other piece
                    if i % 2 == 1 {
                        x += 0.3;
                    }
                    pieces.push(LinePiece { a: x, b: x + w, density: *d });
                    x += w;
                }
                let atoms = atoms.into_iter().map(|(x, mass)| LineAtom { x, mass }).collect();
                LineMeasure::normalized(atoms, pieces).ok()
            })
    }

    proptest! {
        #[test]
        fn round_trip(m in arb_measure()) {
            let back = measure_from_quantile(&quantile(&m)).unwrap();
            prop_assert!(back.approx_eq(&m, 1e-9), "{m:?} vs {back:?}");
        }

        #[test]
        fn quantile_inverts_cdf(m in arb_measure(), t in 0.001..0.999f64) {
            let q = quantile(&m);
            let x = q.eval(t);
            // generalized inverse: F(x) >= t, and F is below t just left of x
            prop_assert!(cdf_eval(&m, x) >= t - 1e-9);
            prop_assert!(cdf_eval(&m, x - 1e-7) <= t + 1e-9);
        }

        #[test]
        fn w2_is_a_metric(a in arb_measure(), b in arb_measure(), c in arb_measure()) {
            let ab = w2_line(&a, &b);
            prop_assert!((ab - w2_line(&b, &a)).abs() < 1e-12);
            prop_assert!(w2_line(&a, &a) < 1e-12);
            prop_assert!(w2_line(&a, &c) <= ab + w2_line(&b, &c) + 1e-9);
        }

        #[test]
        fn barycenter_attains_dispersion(a in arb_measure(), b in arb_measure(), w in 0.05..0.95f64) {
            let p = [(w, a), (1.0 - w, b)];
            let bary = barycenter_line(&p).unwrap();
            prop_assert!((line_objective(&p, &bary) - dispersion(&p).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn atomless_input_gives_atomless_barycenter(a in arb_measure(), w in 0.05..0.95f64) {
            let p = [(w, a), (1.0 - w, uni(-1.0, 2.0))];
            prop_assert!(barycenter_line(&p).unwrap().is_atomless());
        }

        #[test]
        fn clamp_stays_in_range(m in arb_measure(), lo in -3.0..0.0f64, width in 0.1..4.0f64) {
            let c = quantile(&m).clamp(lo, lo + width).unwrap();
            let (a, b) = c.bounds();
            prop_assert!(a >= lo && b <= lo + width);
            let back = measure_from_quantile(&c).unwrap();
            prop_assert!((back.total_mass() - 1.0).abs() < 1e-12);
        }
    }
}
