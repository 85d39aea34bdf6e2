//! Wasserstein-2 transport between measures on a metric graph.
//!
//! Densities live on edges and are discretized onto cell centres before any
//! transport is solved; plans between finitely supported measures are
//! exact optima of the transportation LP.

use crate::exec::{self, ExecMode};
use crate::metric_graph::{GraphPoint, MetricGraph, OrientedEdge};
use crate::transport::solve_transport;
use crate::{Error, Result, COST_TOL, MARGINAL_TOL, MASS_TOL};

/// Constant `density` (against arc length) on offsets `[a, b)` of `edge`,
/// offsets measured from the edge's `u` end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePiece {
    pub edge: usize,
    pub a: f64,
    pub b: f64,
    pub density: f64,
}

impl EdgePiece {
    pub fn mass(&self) -> f64 {
        self.density * (self.b - self.a)
    }
}

/// A probability measure on a graph: atoms plus piecewise-constant edge densities.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMeasure {
    atoms: Vec<(GraphPoint, f64)>,
    pieces: Vec<EdgePiece>,
}

fn mass_tolerance(items: usize) -> f64 {
    MASS_TOL.max(items as f64 * 4.0 * f64::EPSILON)
}

impl GraphMeasure {
    pub fn new(g: &MetricGraph, atoms: Vec<(GraphPoint, f64)>, pieces: Vec<EdgePiece>) -> Result<Self> {
        let m = Self::checked(g, atoms, pieces)?;
        let total = m.total_mass();
        if (total - 1.0).abs() > mass_tolerance(m.atoms.len() + m.pieces.len()) {
            return Err(Error::InvalidMeasure(format!("total mass {total} differs from 1")));
        }
        Ok(m)
    }

    /// Accepts any positive total and rescales it to 1.
    pub fn normalized(g: &MetricGraph, atoms: Vec<(GraphPoint, f64)>, pieces: Vec<EdgePiece>) -> Result<Self> {
        let mut m = Self::checked(g, atoms, pieces)?;
        let total = m.total_mass();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("measure has no mass".into()));
        }
        m.atoms.iter_mut().for_each(|(_, w)| *w /= total);
        m.pieces.iter_mut().for_each(|p| p.density /= total);
        Ok(m)
    }

    fn checked(g: &MetricGraph, atoms: Vec<(GraphPoint, f64)>, mut pieces: Vec<EdgePiece>) -> Result<Self> {
        let mut merged: Vec<(GraphPoint, f64)> = Vec::with_capacity(atoms.len());
        let mut atoms = atoms;
        for (p, w) in &atoms {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::InvalidMeasure(format!("bad atom mass {w}")));
            }
            check_point(g, p)?;
        }
        atoms.retain(|(_, w)| *w > 0.0);
        atoms.sort_by_key(|a| a.0);
        for (p, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == p => last.1 += w,
                _ => merged.push((p, w)),
            }
        }
        for p in &pieces {
            if p.edge >= g.edge_count() {
                return Err(Error::InvalidMeasure(format!("piece on unknown edge {}", p.edge)));
            }
            let len = g.edge(p.edge).length;
            if !(p.a.is_finite() && p.b.is_finite() && p.density.is_finite()) || p.density < 0.0 {
                return Err(Error::InvalidMeasure(format!("bad piece {p:?}")));
            }
            if !(0.0 <= p.a && p.a < p.b && p.b <= len) {
                return Err(Error::InvalidMeasure(format!(
                    "piece [{}, {}) outside edge `{}` of length {len}",
                    p.a,
                    p.b,
                    g.edge(p.edge).id
                )));
            }
        }
        pieces.retain(|p| p.density > 0.0);
        pieces.sort_by(|x, y| x.edge.cmp(&y.edge).then(x.a.total_cmp(&y.a)));
        for w in pieces.windows(2) {
            if w[0].edge == w[1].edge && w[1].a < w[0].b {
                return Err(Error::InvalidMeasure(format!("overlapping pieces on edge `{}`", g.edge(w[0].edge).id)));
            }
        }
        Ok(GraphMeasure { atoms: merged, pieces })
    }

    pub fn dirac(p: GraphPoint) -> Self {
        GraphMeasure { atoms: vec![(p, 1.0)], pieces: vec![] }
    }

    /// Uniform probability on offsets `[a, b]` of `edge`.
    pub fn uniform_on_edge(g: &MetricGraph, edge: usize, a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidMeasure(format!("uniform needs a < b, got [{a}, {b}]")));
        }
        Self::new(g, vec![], vec![EdgePiece { edge, a, b, density: 1.0 / (b - a) }])
    }

    pub fn atoms(&self) -> &[(GraphPoint, f64)] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[EdgePiece] {
        &self.pieces
    }

    pub fn is_atomless(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn max_density(&self) -> f64 {
        self.pieces.iter().map(|p| p.density).fold(0.0, f64::max)
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>() + self.pieces.iter().map(EdgePiece::mass).sum::<f64>()
    }
}

fn check_point(g: &MetricGraph, p: &GraphPoint) -> Result<()> {
    match *p {
        GraphPoint::Vertex(v) if v < g.vertex_count() => Ok(()),
        GraphPoint::Edge { edge, offset } if edge < g.edge_count() && offset > 0.0 && offset < g.edge(edge).length => {
            Ok(())
        }
        _ => Err(Error::InvalidPoint(format!("{p:?} is not a canonical point of the graph"))),
    }
}

/// A finitely supported probability measure with distinct, sorted support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<GraphPoint>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Sorts and merges; weights must be nonnegative and sum to 1.
    pub fn new(pairs: Vec<(GraphPoint, f64)>) -> Result<Self> {
        let m = Self::merged(pairs)?;
        let total: f64 = m.weights.iter().sum();
        if (total - 1.0).abs() > mass_tolerance(m.weights.len()) {
            return Err(Error::InvalidMeasure(format!("total mass {total} differs from 1")));
        }
        Ok(m)
    }

    /// Sorts, merges and rescales to total mass 1.
    pub fn normalized(pairs: Vec<(GraphPoint, f64)>) -> Result<Self> {
        let mut m = Self::merged(pairs)?;
        let total: f64 = m.weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("measure has no mass".into()));
        }
        m.weights.iter_mut().for_each(|w| *w /= total);
        Ok(m)
    }

    fn merged(mut pairs: Vec<(GraphPoint, f64)>) -> Result<Self> {
        if pairs.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidMeasure("weights must be finite and nonnegative".into()));
        }
        pairs.retain(|(_, w)| *w > 0.0);
        pairs.sort_by_key(|p| p.0);
        let mut points: Vec<GraphPoint> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (p, w) in pairs {
            if points.last() == Some(&p) {
                *weights.last_mut().unwrap() += w;
            } else {
                points.push(p);
                weights.push(w);
            }
        }
        Ok(DiscreteMeasure { points, weights })
    }

    pub fn dirac(p: GraphPoint) -> Self {
        DiscreteMeasure { points: vec![p], weights: vec![1.0] }
    }

    pub fn points(&self) -> &[GraphPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (GraphPoint, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    /// Weight at `p`, zero off the support.
    pub fn mass_at(&self, p: &GraphPoint) -> f64 {
        self.points.binary_search(p).map(|i| self.weights[i]).unwrap_or(0.0)
    }

    /// The measure as a graph measure made only of atoms.
    pub fn to_graph_measure(&self) -> GraphMeasure {
        GraphMeasure { atoms: self.iter().collect(), pieces: vec![] }
    }
}

/// Replaces every density piece by atoms at the centres of
/// `ceil(length / h)` equal cells; atoms are kept as they are.
pub fn discretize(g: &MetricGraph, m: &GraphMeasure, h: f64) -> Result<DiscreteMeasure> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {h}")));
    }
    let mut pairs: Vec<(GraphPoint, f64)> = m.atoms.clone();
    for p in &m.pieces {
        let n = (((p.b - p.a) / h) - 1e-9).ceil().max(1.0) as usize;
        let width = (p.b - p.a) / n as f64;
        let mass = p.density * width;
        for k in 0..n {
            let centre = p.a + (k as f64 + 0.5) * width;
            pairs.push((g.edge_point(p.edge, centre)?, mass));
        }
    }
    DiscreteMeasure::new(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub source: GraphPoint,
    pub target: GraphPoint,
    pub mass: f64,
}

/// A finitely supported coupling with its cached cost `sum mass * d^2`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransportPlan {
    pub entries: Vec<PlanEntry>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn from_entries(g: &MetricGraph, entries: Vec<PlanEntry>) -> Self {
        let cost = entries
            .iter()
            .map(|e| {
                let d = g.distance(&e.source, &e.target);
                e.mass * d * d
            })
            .sum();
        TransportPlan { entries, cost }
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.mass).sum()
    }

    /// First marginal as sorted `(point, mass)` pairs (not normalized).
    pub fn source_marginal(&self) -> Vec<(GraphPoint, f64)> {
        marginal(self.entries.iter().map(|e| (e.source, e.mass)))
    }

    pub fn target_marginal(&self) -> Vec<(GraphPoint, f64)> {
        marginal(self.entries.iter().map(|e| (e.target, e.mass)))
    }

    /// Largest deviation of either marginal from the given measures.
    pub fn marginal_residual(&self, source: &DiscreteMeasure, target: &DiscreteMeasure) -> f64 {
        fn dev(got: &[(GraphPoint, f64)], want: &DiscreteMeasure) -> f64 {
            let mut worst: f64 = 0.0;
            for (p, w) in want.iter() {
                let have = got.binary_search_by(|x| x.0.cmp(&p)).map(|i| got[i].1).unwrap_or(0.0);
                worst = worst.max((have - w).abs());
            }
            for (p, w) in got {
                if want.mass_at(p) == 0.0 {
                    worst = worst.max(*w);
                }
            }
            worst
        }
        dev(&self.source_marginal(), source).max(dev(&self.target_marginal(), target))
    }
}

fn marginal(items: impl Iterator<Item = (GraphPoint, f64)>) -> Vec<(GraphPoint, f64)> {
    let mut v: Vec<(GraphPoint, f64)> = items.collect();
    v.sort_by_key(|p| p.0);
    let mut out: Vec<(GraphPoint, f64)> = Vec::with_capacity(v.len());
    for (p, w) in v {
        match out.last_mut() {
            Some(last) if last.0 == p => last.1 += w,
            _ => out.push((p, w)),
        }
    }
    out
}

/// Row-major matrix of squared distances.
pub fn squared_distance_matrix(g: &MetricGraph, from: &[GraphPoint], to: &[GraphPoint], mode: ExecMode) -> Vec<f64> {
    exec::map(mode, from, |x| {
        to.iter()
            .map(|y| {
                let d = g.distance(x, y);
                d * d
            })
            .collect::<Vec<f64>>()
    })
    .concat()
}

/// Squared W2 distance and an optimal plan.
pub fn w2_graph(g: &MetricGraph, m1: &DiscreteMeasure, m2: &DiscreteMeasure) -> Result<(f64, TransportPlan)> {
    w2_graph_with(g, m1, m2, ExecMode::Sequential)
}

/// As [`w2_graph`], building the cost matrix under the given execution mode.
pub fn w2_graph_with(
    g: &MetricGraph,
    m1: &DiscreteMeasure,
    m2: &DiscreteMeasure,
    mode: ExecMode,
) -> Result<(f64, TransportPlan)> {
    if m1.is_empty() || m2.is_empty() {
        return Err(Error::InvalidMeasure("empty measure".into()));
    }
    let cost = squared_distance_matrix(g, &m1.points, &m2.points, mode);
    let sol = solve_transport(&m1.weights, &m2.weights, &cost)?;
    let entries: Vec<PlanEntry> =
        sol.flows.iter().map(|&(i, j, mass)| PlanEntry { source: m1.points[i], target: m2.points[j], mass }).collect();
    let plan = TransportPlan { entries, cost: sol.cost };
    let residual = plan.marginal_residual(m1, m2);
    if residual > MARGINAL_TOL {
        return Err(Error::Internal(format!("plan marginal residual {residual:e}")));
    }
    Ok((sol.cost, plan))
}

/// Which family of geodesics leaving the base edge carries a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BranchTag {
    /// Geodesic stays inside the base edge.
    E,
    /// Geodesic leaves through the head.
    Plus,
    /// Geodesic leaves through the tail.
    Minus,
}

impl BranchTag {
    pub const ALL: [BranchTag; 3] = [BranchTag::E, BranchTag::Plus, BranchTag::Minus];

    pub fn name(&self) -> &'static str {
        match self {
            BranchTag::E => "E",
            BranchTag::Plus => "PLUS",
            BranchTag::Minus => "MINUS",
        }
    }
}

/// Classifies the pair `(x, y)` with `x` on the oriented edge `e`; when
/// several classes realize the distance the order E, PLUS, MINUS decides.
pub fn classify_pair(g: &MetricGraph, e: OrientedEdge, x: &GraphPoint, y: &GraphPoint) -> Result<BranchTag> {
    let s = e
        .offset_along(g, x)
        .ok_or_else(|| Error::InvalidArgument(format!("source {} is not on {}", g.format_point(x), e.describe(g))))?;
    let len = e.length(g);
    let d = g.distance(x, y);
    let tol = COST_TOL * (1.0 + d);
    if let Some(t) = e.offset_along(g, y) {
        if ((s - t).abs() - d).abs() <= tol {
            return Ok(BranchTag::E);
        }
    }
    let tail = GraphPoint::Vertex(e.tail(g));
    let head_vertex = e.head(g);
    let head = GraphPoint::Vertex(head_vertex);
    let leaves_through_head = if s < len {
        ((len - s) + g.distance(&head, y) - d).abs() <= tol
    } else {
        // from the head itself the test above is always true; require a
        // geodesic that starts on an edge other than e
        g.incident_edges(head_vertex).iter().any(|&f| {
            if f == e.edge {
                return false;
            }
            let edge = g.edge(f);
            let out = if edge.u == head_vertex { OrientedEdge::forward(f) } else { OrientedEdge::backward(f) };
            // y may sit on f itself, reached without crossing its far end
            if let Some(t) = out.offset_along(g, y) {
                if (t - d).abs() <= tol {
                    return true;
                }
            }
            let next = GraphPoint::Vertex(edge.other(head_vertex).expect("incident"));
            (edge.length + g.distance(&next, y) - d).abs() <= tol
        })
    };
    if leaves_through_head {
        return Ok(BranchTag::Plus);
    }
    if (s + g.distance(&tail, y) - d).abs() <= tol {
        return Ok(BranchTag::Minus);
    }
    Err(Error::Unclassifiable(format!(
        "no geodesic class realizes d({}, {}) = {d}",
        g.format_point(x),
        g.format_point(y)
    )))
}

/// A plan split by geodesic class; the parts sum to the original plan.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecomposedPlan {
    pub e: TransportPlan,
    pub plus: TransportPlan,
    pub minus: TransportPlan,
}

impl DecomposedPlan {
    pub fn part(&self, tag: BranchTag) -> &TransportPlan {
        match tag {
            BranchTag::E => &self.e,
            BranchTag::Plus => &self.plus,
            BranchTag::Minus => &self.minus,
        }
    }

    fn part_mut(&mut self, tag: BranchTag) -> &mut TransportPlan {
        match tag {
            BranchTag::E => &mut self.e,
            BranchTag::Plus => &mut self.plus,
            BranchTag::Minus => &mut self.minus,
        }
    }
}

pub fn decompose_plan(g: &MetricGraph, e: OrientedEdge, plan: &TransportPlan) -> Result<DecomposedPlan> {
    if !g.is_edge_minimizing(e.edge) {
        return Err(Error::NonMinimizingEdge(e.describe(g)));
    }
    let mut out = DecomposedPlan::default();
    for entry in &plan.entries {
        let tag = classify_pair(g, e, &entry.source, &entry.target)?;
        let d = g.distance(&entry.source, &entry.target);
        let part = out.part_mut(tag);
        part.entries.push(*entry);
        part.cost += entry.mass * d * d;
    }
    Ok(out)
}

/// Output of [`restrict`]: the split `m = lambda mu1 + (1 - lambda) mu2`
/// and the matching split of `nu` along one optimal plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    pub lambda: f64,
    pub mu1: DiscreteMeasure,
    pub mu2: DiscreteMeasure,
    pub nu1: DiscreteMeasure,
    pub nu2: DiscreteMeasure,
    /// `g_1 pi` rescaled to a probability coupling of `mu1` and `nu1`.
    pub plan1: TransportPlan,
    pub plan2: TransportPlan,
    pub plan: TransportPlan,
}

/// Splits `nu` along an optimal plan from `m` according to the sub-measure
/// `part1 <= m`.
pub fn restrict(
    g: &MetricGraph,
    m: &DiscreteMeasure,
    part1: &[(GraphPoint, f64)],
    nu: &DiscreteMeasure,
) -> Result<Restriction> {
    let part1 = marginal(part1.iter().copied());
    let lambda: f64 = part1.iter().map(|p| p.1).sum();
    if !(lambda > MASS_TOL && lambda < 1.0 - MASS_TOL) {
        return Err(Error::InvalidArgument(format!("split mass {lambda} must lie strictly in (0, 1)")));
    }
    let mut first = vec![0.0; m.len()];
    for (p, w) in &part1 {
        if *w < 0.0 {
            return Err(Error::InvalidArgument("negative split mass".into()));
        }
        let i = m
            .points
            .binary_search(p)
            .map_err(|_| Error::InvalidArgument(format!("split puts mass off the support at {p:?}")))?;
        if *w > m.weights[i] * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "split mass {w} exceeds measure mass {} at {p:?}",
                m.weights[i]
            )));
        }
        first[i] = w.min(m.weights[i]);
    }
    let (_, plan) = w2_graph(g, m, nu)?;
    let mut e1 = Vec::new();
    let mut e2 = Vec::new();
    for entry in &plan.entries {
        let i = m.points.binary_search(&entry.source).expect("plan source lies in the support");
        let share = first[i] / m.weights[i];
        let (a, b) = (entry.mass * share, entry.mass * (1.0 - share));
        if a > 0.0 {
            e1.push(PlanEntry { mass: a / lambda, ..*entry });
        }
        if b > 0.0 {
            e2.push(PlanEntry { mass: b / (1.0 - lambda), ..*entry });
        }
    }
    let mu1 = DiscreteMeasure::normalized(m.iter().zip(&first).map(|((p, _), f)| (p, *f)).collect())?;
    let mu2 = DiscreteMeasure::normalized(m.iter().zip(&first).map(|((p, w), f)| (p, (w - f).max(0.0))).collect())?;
    let plan1 = TransportPlan::from_entries(g, e1);
    let plan2 = TransportPlan::from_entries(g, e2);
    let nu1 = DiscreteMeasure::normalized(plan1.target_marginal())?;
    let nu2 = DiscreteMeasure::normalized(plan2.target_marginal())?;
    Ok(Restriction { lambda, mu1, mu2, nu1, nu2, plan1, plan2, plan })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric_graph::fixtures::*;
    use proptest::prelude::*;

    fn pt(g: &MetricGraph, lit: &str) -> GraphPoint {
        g.parse_point(lit).unwrap()
    }

    fn dm(g: &MetricGraph, items: &[(&str, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(items.iter().map(|(l, w)| (pt(g, l), *w)).collect()).unwrap()
    }

    #[test]
    fn discretize_examples() {
        let t = tripod();
        let d = discretize(&t, &GraphMeasure::dirac(pt(&t, "v:o")), 0.1).unwrap();
        assert_eq!(d, DiscreteMeasure::dirac(pt(&t, "v:o")));

        let m = GraphMeasure::new(&t, vec![], vec![EdgePiece { edge: 0, a: 0.5, b: 1.0, density: 2.0 }]).unwrap();
        let d = discretize(&t, &m, 0.25).unwrap();
        assert_eq!(d, dm(&t, &[("b1:0.625", 0.5), ("b1:0.875", 0.5)]));

        let m = GraphMeasure::new(
            &t,
            vec![(pt(&t, "v:t2"), 0.25)],
            vec![EdgePiece { edge: 2, a: 0.0, b: 0.75, density: 1.0 }],
        )
        .unwrap();
        let d = discretize(&t, &m, 0.1).unwrap();
        assert_eq!(d.len(), 9);
        assert!((d.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(d.mass_at(&pt(&t, "v:t2")), 0.25);
    }

    #[test]
    fn graph_measure_validation() {
        let t = tripod();
        let bad = GraphMeasure::new(&t, vec![], vec![EdgePiece { edge: 0, a: 0.5, b: 1.5, density: 1.0 }]);
        assert!(bad.is_err());
        let overlap = GraphMeasure::new(
            &t,
            vec![],
            vec![
                EdgePiece { edge: 0, a: 0.0, b: 0.6, density: 1.0 },
                EdgePiece { edge: 0, a: 0.5, b: 0.9, density: 1.0 },
            ],
        );
        assert!(overlap.is_err());
        assert!(GraphMeasure::new(&t, vec![(pt(&t, "v:o"), 0.5)], vec![]).is_err());
    }

    #[test]
    fn w2_examples() {
        let s = segment(1.0);
        let (c, plan) = w2_graph(&s, &dm(&s, &[("v:L", 1.0)]), &dm(&s, &[("v:R", 1.0)])).unwrap();
        assert_eq!(c, 1.0);
        assert_eq!(plan.entries.len(), 1);

        let t = tripod();
        let (c, _) = w2_graph(&t, &dm(&t, &[("v:t1", 1.0)]), &dm(&t, &[("v:t2", 1.0)])).unwrap();
        assert_eq!(c.sqrt(), 2.0);

        let (c, plan) = w2_graph(&s, &dm(&s, &[("v:L", 0.5), ("v:R", 0.5)]), &dm(&s, &[("seg:0.5", 1.0)])).unwrap();
        assert_eq!(c, 0.25);
        assert_eq!(c.sqrt(), 0.5);
        assert_eq!(plan.entries.len(), 2);
    }

    #[test]
    fn classify_examples() {
        let t = tripod();
        let e = OrientedEdge::forward(t.edge_index("b1").unwrap());
        assert_eq!(classify_pair(&t, e, &pt(&t, "b1:0.7"), &pt(&t, "b2:0.6")).unwrap(), BranchTag::Minus);
        assert_eq!(classify_pair(&t, e, &pt(&t, "b1:0.3"), &pt(&t, "b1:0.8")).unwrap(), BranchTag::E);
        assert_eq!(classify_pair(&t, e, &pt(&t, "b1:0.3"), &pt(&t, "v:t1")).unwrap(), BranchTag::E);
        assert!(classify_pair(&t, e, &pt(&t, "b2:0.3"), &pt(&t, "v:t1")).is_err());

        let g = triangle();
        let e = OrientedEdge::forward(g.edge_index("e_AB").unwrap());
        assert_eq!(classify_pair(&g, e, &pt(&g, "e_AB:0.9"), &pt(&g, "v:C")).unwrap(), BranchTag::Plus);
        assert_eq!(classify_pair(&g, e, &pt(&g, "e_AB:0.1"), &pt(&g, "v:C")).unwrap(), BranchTag::Minus);
        // from the head, a geodesic back across the edge leaves through the tail
        let t = tripod();
        let e1 = OrientedEdge::forward(0);
        assert_eq!(classify_pair(&t, e1, &pt(&t, "v:t1"), &pt(&t, "b2:0.5")).unwrap(), BranchTag::Minus);
        assert_eq!(classify_pair(&t, e1, &pt(&t, "v:o"), &pt(&t, "b2:0.5")).unwrap(), BranchTag::Minus);
        assert_eq!(classify_pair(&g, e, &pt(&g, "v:B"), &pt(&g, "v:C")).unwrap(), BranchTag::Plus);
        assert_eq!(classify_pair(&g, e, &pt(&g, "v:A"), &pt(&g, "e_BC:0.5")).unwrap(), BranchTag::Plus);
        // equidistant: PLUS wins over MINUS
        assert_eq!(classify_pair(&g, e, &pt(&g, "e_AB:0.5"), &pt(&g, "v:C")).unwrap(), BranchTag::Plus);
        // reversed orientation swaps the exits
        let r = OrientedEdge::backward(e.edge);
        assert_eq!(classify_pair(&g, r, &pt(&g, "e_AB:0.9"), &pt(&g, "v:C")).unwrap(), BranchTag::Minus);
    }

    #[test]
    fn decompose_examples() {
        let t = tripod();
        let e = OrientedEdge::forward(0);
        let base = dm(&t, &[("b1:0.75", 1.0)]);
        let (_, plan) = w2_graph(&t, &base, &dm(&t, &[("b2:0.6", 1.0)])).unwrap();
        let parts = decompose_plan(&t, e, &plan).unwrap();
        assert_eq!(parts.minus.mass(), 1.0);
        assert!(parts.e.entries.is_empty() && parts.plus.entries.is_empty());

        let (_, plan) = w2_graph(&t, &base, &dm(&t, &[("b1:0.2", 0.5), ("b1:0.9", 0.5)])).unwrap();
        assert_eq!(decompose_plan(&t, e, &plan).unwrap().e.mass(), 1.0);

        let (_, plan) = w2_graph(&t, &base, &dm(&t, &[("b1:0.2", 0.5), ("b2:0.5", 0.5)])).unwrap();
        let parts = decompose_plan(&t, e, &plan).unwrap();
        assert_eq!((parts.e.mass(), parts.plus.mass(), parts.minus.mass()), (0.5, 0.0, 0.5));
        assert!((parts.e.cost + parts.plus.cost + parts.minus.cost - plan.cost).abs() < 1e-15);

        let off = TransportPlan::from_entries(
            &t,
            vec![PlanEntry { source: pt(&t, "b2:0.5"), target: pt(&t, "v:o"), mass: 1.0 }],
        );
        assert!(decompose_plan(&t, e, &off).is_err());
    }

    #[test]
    fn restrict_examples() {
        let s = segment(4.0);
        let m = dm(&s, &[("seg:0.5", 0.5), ("seg:1", 0.5)]);
        let nu = dm(&s, &[("seg:2", 0.5), ("seg:3", 0.5)]);
        let r = restrict(&s, &m, &[(pt(&s, "seg:0.5"), 0.5)], &nu).unwrap();
        assert_eq!(r.lambda, 0.5);
        assert_eq!(r.nu1, dm(&s, &[("seg:2", 1.0)]));
        assert_eq!(r.nu2, dm(&s, &[("seg:3", 1.0)]));

        // proportional split leaves nu unchanged
        let part: Vec<_> = m.iter().map(|(p, w)| (p, 0.3 * w)).collect();
        let r = restrict(&s, &m, &part, &nu).unwrap();
        assert_eq!(r.nu1, nu);
        assert_eq!(r.nu2, nu);

        // identity plan when nu = m
        let m3 = dm(&s, &[("seg:0.5", 0.25), ("seg:1", 0.25), ("seg:2", 0.5)]);
        let r = restrict(&s, &m3, &[(pt(&s, "seg:2"), 0.5)], &m3).unwrap();
        assert_eq!(r.nu1, r.mu1);
        assert_eq!(r.nu2, r.mu2);

        assert!(restrict(&s, &m, &[(pt(&s, "seg:0.5"), 0.6)], &nu).is_err());
        assert!(restrict(&s, &m, &[(pt(&s, "seg:0.5"), 0.5), (pt(&s, "seg:1"), 0.5)], &nu).is_err());
        assert!(restrict(&s, &m, &[(pt(&s, "seg:3"), 0.1)], &nu).is_err());
    }

    fn arb_discrete(g: MetricGraph, max: usize) -> impl Strategy<Value = DiscreteMeasure> {
        let edges = g.edge_count();
        prop::collection::vec((0..edges, 0.0..1.0f64, 0.01..1.0f64), 1..max).prop_map(move |items| {
            let pairs = items
                .into_iter()
                .map(|(e, u, w)| {
                    let len = g.edge(e).length;
                    (g.edge_point(e, (u * 16.0).round() / 16.0 * len).unwrap(), w)
                })
                .collect();
            DiscreteMeasure::normalized(pairs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn plan_marginals_and_cost(a in arb_discrete(triangle(), 8), b in arb_discrete(triangle(), 8)) {
            let g = triangle();
            let (c, plan) = w2_graph(&g, &a, &b).unwrap();
            prop_assert!(plan.marginal_residual(&a, &b) <= 1e-10);
            let recomputed = TransportPlan::from_entries(&g, plan.entries.clone()).cost;
            prop_assert!((c - recomputed).abs() < 1e-12);
            let (c2, _) = w2_graph(&g, &b, &a).unwrap();
            prop_assert!((c - c2).abs() < 1e-9);
        }

        #[test]
        fn decomposition_is_additive(a in arb_discrete(segment(1.0), 4), b in arb_discrete(square_with_chord(), 8)) {
            let g = square_with_chord();
            let e = OrientedEdge::forward(g.edge_index("s_AB").unwrap());
            // move the base measure onto s_AB
            let base = DiscreteMeasure::normalized(
                a.iter().map(|(p, w)| {
                    let off = match p { GraphPoint::Vertex(v) => v as f64, GraphPoint::Edge { offset, .. } => offset };
                    (e.point_at(&g, off).unwrap(), w)
                }).collect()
            ).unwrap();
            let (_, plan) = w2_graph(&g, &base, &b).unwrap();
            let parts = decompose_plan(&g, e, &plan).unwrap();
            let total = parts.e.mass() + parts.plus.mass() + parts.minus.mass();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn restriction_parts_recombine(a in arb_discrete(tripod(), 6), b in arb_discrete(tripod(), 6)) {
            let g = tripod();
            prop_assume!(a.len() >= 2);
            let part = vec![(a.points()[0], a.weights()[0])];
            let lambda = a.weights()[0];
            prop_assume!(lambda < 0.99);
            let r = restrict(&g, &a, &part, &b).unwrap();
            for (p, w) in b.iter() {
                let mixed = r.lambda * r.nu1.mass_at(&p) + (1.0 - r.lambda) * r.nu2.mass_at(&p);
                prop_assert!((mixed - w).abs() < 1e-12);
            }
            let (c1, _) = w2_graph(&g, &r.mu1, &r.nu1).unwrap();
            prop_assert!((c1 - r.plan1.cost).abs() < 1e-9);
            let (c2, _) = w2_graph(&g, &r.mu2, &r.nu2).unwrap();
            prop_assert!((c2 - r.plan2.cost).abs() < 1e-9);
        }
    }
}
