//! Unfolding measures on a graph onto the real line around a base edge.
//!
//! Fix a minimizing oriented edge `e` of length `l` and a base measure on
//! `e`. Every target point `y` is reached from the edge by geodesics of one
//! of three kinds, and each kind has its own 1-Lipschitz coordinate:
//!
//! * inside `e`: `h_E(y) = d(tail, y)`, landing in `[0, l]`;
//! * out through the head: `h_+(y) = l + d(head, y)`, landing in `[l, inf)`;
//! * out through the tail: `h_-(y) = -d(tail, y)`, landing in `(-inf, 0]`.
//!
//! The map `phi` classifies an optimal plan from the base measure and
//! pushes each part of the target through its coordinate.

use crate::exec::ExecMode;
use crate::line_ot::{LineAtom, LineMeasure, LinePlan};
use crate::metric_graph::{GraphPoint, MetricGraph, OrientedEdge};
use crate::ot_core::{decompose_plan, w2_graph_with, DecomposedPlan, DiscreteMeasure};
use crate::{Error, Result, COST_TOL, SNAP_TOL};

pub use crate::ot_core::BranchTag;

/// A minimizing oriented edge with a base measure supported on it.
#[derive(Debug, Clone)]
pub struct CoverContext<'g> {
    graph: &'g MetricGraph,
    edge: OrientedEdge,
    base: DiscreteMeasure,
}

impl<'g> CoverContext<'g> {
    pub fn new(graph: &'g MetricGraph, edge: OrientedEdge, base: DiscreteMeasure) -> Result<Self> {
        if edge.edge >= graph.edge_count() {
            return Err(Error::InvalidArgument(format!("unknown edge index {}", edge.edge)));
        }
        if !graph.is_edge_minimizing(edge.edge) {
            return Err(Error::NonMinimizingEdge(edge.describe(graph)));
        }
        if let Some(p) = base.points().iter().find(|p| edge.offset_along(graph, p).is_none()) {
            return Err(Error::InvalidMeasure(format!(
                "base measure has mass at {} off {}",
                graph.format_point(p),
                edge.describe(graph)
            )));
        }
        Ok(CoverContext { graph, edge, base })
    }

    pub fn graph(&self) -> &'g MetricGraph {
        self.graph
    }

    pub fn edge(&self) -> OrientedEdge {
        self.edge
    }

    pub fn base(&self) -> &DiscreteMeasure {
        &self.base
    }

    pub fn length(&self) -> f64 {
        self.edge.length(self.graph)
    }

    fn tail(&self) -> GraphPoint {
        GraphPoint::Vertex(self.edge.tail(self.graph))
    }

    fn head(&self) -> GraphPoint {
        GraphPoint::Vertex(self.edge.head(self.graph))
    }

    /// The base measure as a measure on `[0, l]` (offsets from the tail).
    pub fn base_on_line(&self) -> Result<LineMeasure> {
        let atoms = self
            .base
            .iter()
            .map(|(p, w)| LineAtom { x: self.edge.offset_along(self.graph, &p).expect("checked in new"), mass: w })
            .collect();
        LineMeasure::normalized(atoms, vec![])
    }
}

/// The coordinate of `y` for the geodesic family `tag`.
pub fn h_eval(ctx: &CoverContext<'_>, tag: BranchTag, y: &GraphPoint) -> f64 {
    let g = ctx.graph;
    match tag {
        BranchTag::E => g.distance(&ctx.tail(), y),
        BranchTag::Plus => ctx.length() + g.distance(&ctx.head(), y),
        BranchTag::Minus => -g.distance(&ctx.tail(), y),
    }
}

/// `phi(nu)` together with the classified plan it was built from.
#[derive(Debug, Clone)]
pub struct PhiOutput {
    pub measure: LineMeasure,
    pub parts: DecomposedPlan,
    /// Squared W2 distance from the base measure to `nu`.
    pub cost: f64,
}

impl PhiOutput {
    /// Target marginal of one class as `(point, mass)` pairs, not normalized.
    pub fn class_part(&self, tag: BranchTag) -> Vec<(GraphPoint, f64)> {
        self.parts.part(tag).target_marginal()
    }

    /// `h_tag` pushforward of that class part, as line atoms.
    pub fn class_image(&self, ctx: &CoverContext<'_>, tag: BranchTag) -> Vec<(f64, f64)> {
        self.class_part(tag).iter().map(|(p, w)| (h_eval(ctx, tag, p), *w)).collect()
    }
}

pub fn phi(ctx: &CoverContext<'_>, nu: &DiscreteMeasure) -> Result<LineMeasure> {
    Ok(phi_decomposed(ctx, nu, ExecMode::Sequential)?.measure)
}

pub fn phi_decomposed(ctx: &CoverContext<'_>, nu: &DiscreteMeasure, mode: ExecMode) -> Result<PhiOutput> {
    let (cost, plan) = w2_graph_with(ctx.graph, &ctx.base, nu, mode)?;
    let parts = decompose_plan(ctx.graph, ctx.edge, &plan)?;
    // Each target keeps its exact weight in nu, shared among the classes
    // reaching it in proportion to the plan flows. Solver rounding in the
    // flows then never shows up in the image.
    let mut flows = vec![[0.0f64; 3]; nu.len()];
    for (c, tag) in BranchTag::ALL.into_iter().enumerate() {
        for entry in &parts.part(tag).entries {
            let j = nu.points().binary_search(&entry.target).expect("plan target lies in the support");
            flows[j][c] += entry.mass;
        }
    }
    let mut atoms = Vec::with_capacity(plan.entries.len());
    for (j, (y, w)) in nu.iter().enumerate() {
        let total: f64 = flows[j].iter().sum();
        for (c, tag) in BranchTag::ALL.into_iter().enumerate() {
            if flows[j][c] > 0.0 {
                let mass = if flows[j][c] == total { w } else { w * flows[j][c] / total };
                atoms.push(LineAtom { x: h_eval(ctx, tag, &y), mass });
            }
        }
    }
    let measure = LineMeasure::new(atoms, vec![])?;
    Ok(PhiOutput { measure, parts, cost })
}

/// The vertex whose distance defines `h_tag`.
fn anchor(ctx: &CoverContext<'_>, tag: BranchTag) -> usize {
    match tag {
        BranchTag::Plus => ctx.edge.head(ctx.graph),
        BranchTag::E | BranchTag::Minus => ctx.edge.tail(ctx.graph),
    }
}

/// Images under `h_tag` of the vertices and of the two-way points seen
/// from the anchor vertex; multiplicities can only change at these values.
pub fn exceptional_values(ctx: &CoverContext<'_>, tag: BranchTag) -> Vec<f64> {
    let g = ctx.graph;
    let mut pts: Vec<GraphPoint> = (0..g.vertex_count()).map(GraphPoint::Vertex).collect();
    for (edge, offset) in g.cut_points_from(anchor(ctx, tag)) {
        pts.push(GraphPoint::Edge { edge, offset });
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| h_eval(ctx, tag, p)).collect();
    vals.sort_by(f64::total_cmp);
    vals.dedup_by(|a, b| (*a - *b).abs() <= SNAP_TOL);
    vals
}

/// Number of points `y` in the branch domain of `tag` with `h_tag(y) = x`.
///
/// The domain is the closed base edge for `E` and the rest of the graph
/// (the closed edge removed) for `PLUS` and `MINUS`. Values within 1e-9 of
/// an exceptional value are rejected.
pub fn preimage_count(ctx: &CoverContext<'_>, tag: BranchTag, x_tilde: f64) -> Result<usize> {
    if !x_tilde.is_finite() {
        return Err(Error::InvalidArgument(format!("bad level {x_tilde}")));
    }
    if exceptional_values(ctx, tag).iter().any(|v| (v - x_tilde).abs() <= COST_TOL) {
        return Err(Error::Exceptional(x_tilde));
    }
    let g = ctx.graph;
    let len = ctx.length();
    let r = match tag {
        BranchTag::E => return Ok(usize::from(0.0 < x_tilde && x_tilde < len)),
        BranchTag::Plus => x_tilde - len,
        BranchTag::Minus => -x_tilde,
    };
    if r <= 0.0 {
        return Ok(0);
    }
    let src = anchor(ctx, tag);
    let mut count = 0;
    for (ei, f) in g.edges().iter().enumerate() {
        if ei == ctx.edge.edge {
            continue;
        }
        // distance from src along f is the tent min(t + p, (L - t) + q)
        let (p, q, l) = (g.vertex_distance(src, f.u), g.vertex_distance(src, f.v), f.length);
        let peak = 0.5 * (q + l - p);
        let rising = r - p;
        let falling = q + l - r;
        let rising_ok = rising > 0.0 && rising < l && rising <= peak;
        let falling_ok = falling > 0.0 && falling < l && falling >= peak;
        count += match (rising_ok, falling_ok) {
            (true, true) if (rising - falling).abs() <= SNAP_TOL => 1,
            (a, b) => usize::from(a) + usize::from(b),
        };
    }
    Ok(count)
}

/// A coupling on `R x G`, entries `(x, y, mass)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LiftedPlan {
    pub entries: Vec<(f64, GraphPoint, f64)>,
}

impl LiftedPlan {
    /// `(Id, h_tag)` pushforward back to the line.
    pub fn project(&self, ctx: &CoverContext<'_>, tag: BranchTag) -> LinePlan {
        LinePlan { entries: self.entries.iter().map(|(x, y, m)| (*x, h_eval(ctx, tag, y), *m)).collect() }
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }
}

/// Lifts a plan on the line to `R x G` through `h_tag`: the mass sent to
/// `y~` is shared among the points of `nu` with image `y~`, in proportion
/// to their weights.
///
/// `nu` may be any finite measure (for instance one class part), it need
/// not be normalized.
pub fn lift_line_plan(
    ctx: &CoverContext<'_>,
    tag: BranchTag,
    theta: &LinePlan,
    nu: &[(GraphPoint, f64)],
) -> Result<LiftedPlan> {
    let images: Vec<(f64, GraphPoint, f64)> =
        nu.iter().filter(|(_, w)| *w > 0.0).map(|(p, w)| (h_eval(ctx, tag, p), *p, *w)).collect();
    let mut entries = Vec::new();
    for &(x, y_tilde, mass) in &theta.entries {
        if mass <= 0.0 {
            continue;
        }
        let fibre: Vec<&(f64, GraphPoint, f64)> =
            images.iter().filter(|(v, _, _)| (v - y_tilde).abs() <= SNAP_TOL * (1.0 + y_tilde.abs())).collect();
        let total: f64 = fibre.iter().map(|f| f.2).sum();
        if fibre.is_empty() || total <= 0.0 {
            return Err(Error::InvalidArgument(format!("no support point of nu maps to {y_tilde}")));
        }
        for (_, y, w) in fibre {
            entries.push((x, *y, mass * w / total));
        }
    }
    Ok(LiftedPlan { entries })
}
