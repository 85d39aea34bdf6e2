//! Wasserstein barycenters of finitely many measures on a graph.
//!
//! Two independent solvers:
//!
//! * [`solve_lp`]: one linear program over a candidate support, coupling
//!   the unknown barycenter to every input at once. Exact for the
//!   discretized problem and used as ground truth.
//! * [`solve_edge_fixed_point`]: for a barycenter carried by one edge,
//!   iterates "unfold the inputs onto the line around the current guess,
//!   average quantiles, clamp to the edge".
//!
//! [`regularity_report`] checks that a computed barycenter has no mass
//! concentrations inside edges beyond what a density could produce.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};

use crate::branched_cover::{phi_decomposed, CoverContext};
use crate::exec::{self, ExecMode};
use crate::line_ot::{barycenter_quantile, measure_from_quantile, quantile, w2_line, LineAtom, LineMeasure};
use crate::metric_graph::{GraphPoint, MetricGraph, OrientedEdge};
use crate::ot_core::{discretize, squared_distance_matrix, w2_graph_with, DiscreteMeasure, GraphMeasure};
use crate::{Error, Result, MASS_TOL};

/// Default bound on LP coupling variables (`candidates x input atoms`).
pub const DEFAULT_SUPPORT_CAP: usize = 200_000;

/// A weighted family of measures on one graph, with its grid spacing.
#[derive(Debug, Clone)]
pub struct BarycenterProblem {
    graph: MetricGraph,
    measures: Vec<(f64, GraphMeasure)>,
    grid: f64,
    discretized: Vec<DiscreteMeasure>,
}

impl BarycenterProblem {
    pub fn new(graph: MetricGraph, measures: Vec<(f64, GraphMeasure)>, grid: f64) -> Result<Self> {
        if measures.is_empty() {
            return Err(Error::InvalidArgument("no input measures".into()));
        }
        if measures.iter().any(|(w, _)| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument("weights must be positive".into()));
        }
        let total: f64 = measures.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > MASS_TOL.max(measures.len() as f64 * 4.0 * f64::EPSILON) {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        if !(grid.is_finite() && grid > 0.0) {
            return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {grid}")));
        }
        let discretized = measures.iter().map(|(_, m)| discretize(&graph, m, grid)).collect::<Result<Vec<_>>>()?;
        Ok(BarycenterProblem { graph, measures, grid, discretized })
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn measures(&self) -> &[(f64, GraphMeasure)] {
        &self.measures
    }

    pub fn grid(&self) -> f64 {
        self.grid
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.measures.iter().map(|(w, _)| *w)
    }

    /// The inputs on their spacing-`grid` cells.
    pub fn discretized(&self) -> &[DiscreteMeasure] {
        &self.discretized
    }

    /// Same inputs on another grid.
    pub fn with_grid(&self, grid: f64) -> Result<Self> {
        Self::new(self.graph.clone(), self.measures.clone(), grid)
    }

    /// Number of grid cells on an edge of length `len`.
    fn cells(&self, len: f64) -> usize {
        ((len / self.grid) - 1e-9).ceil().max(1.0) as usize
    }
}

/// `sum_i w_i W2^2(mu, nu_i)` against the discretized inputs.
pub fn objective(problem: &BarycenterProblem, mu: &DiscreteMeasure) -> Result<f64> {
    objective_with(problem, mu, ExecMode::Sequential)
}

pub fn objective_with(problem: &BarycenterProblem, mu: &DiscreteMeasure, mode: ExecMode) -> Result<f64> {
    let costs = exec::map(mode, &problem.discretized, |nu| {
        w2_graph_with(&problem.graph, mu, nu, ExecMode::Sequential).map(|(c, _)| c)
    });
    let mut total = 0.0;
    for (w, c) in problem.weights().zip(costs) {
        total += w * c?;
    }
    Ok(total)
}

/// Vertices, the spacing-`grid` nodes of every edge, and the support points
/// of the discretized inputs, sorted and distinct.
pub fn candidate_support(problem: &BarycenterProblem) -> Vec<GraphPoint> {
    let g = &problem.graph;
    let mut pts: Vec<GraphPoint> = (0..g.vertex_count()).map(GraphPoint::Vertex).collect();
    for (ei, e) in g.edges().iter().enumerate() {
        let n = problem.cells(e.length);
        for k in 1..n {
            let offset = e.length * k as f64 / n as f64;
            pts.push(GraphPoint::Edge { edge: ei, offset });
        }
    }
    for nu in &problem.discretized {
        pts.extend_from_slice(nu.points());
    }
    pts.sort();
    pts.dedup();
    pts
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub mu: DiscreteMeasure,
    pub objective: f64,
    pub candidates: usize,
    pub variables: usize,
}

pub fn solve_lp(problem: &BarycenterProblem) -> Result<LpSolution> {
    solve_lp_with_cap(problem, DEFAULT_SUPPORT_CAP)
}

pub fn solve_lp_with_cap(problem: &BarycenterProblem, cap: usize) -> Result<LpSolution> {
    solve_lp_on_support(problem, &candidate_support(problem), cap, ExecMode::default())
}

/// The barycenter LP restricted to the given candidate points.
pub fn solve_lp_on_support(
    problem: &BarycenterProblem,
    candidates: &[GraphPoint],
    cap: usize,
    mode: ExecMode,
) -> Result<LpSolution> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("empty candidate support".into()));
    }
    let k = candidates.len();
    let atoms: usize = problem.discretized.iter().map(DiscreteMeasure::len).sum();
    let variables = k * atoms;
    if variables > cap {
        return Err(Error::SupportCapExceeded { size: variables, cap });
    }
    let costs: Vec<Vec<f64>> = exec::map(mode, &problem.discretized, |nu| {
        squared_distance_matrix(&problem.graph, candidates, nu.points(), ExecMode::Sequential)
    });

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    // vars[i][y * m_i + z]: mass moved from candidate y to atom z of input i
    let mut vars = Vec::with_capacity(problem.discretized.len());
    for ((w, nu), cost) in problem.weights().zip(&problem.discretized).zip(&costs) {
        let m = nu.len();
        let v: Vec<_> = (0..k * m).map(|idx| lp.add_var(w * cost[idx], (0.0, f64::INFINITY))).collect();
        vars.push(v);
    }
    for (i, nu) in problem.discretized.iter().enumerate() {
        let m = nu.len();
        for (z, &mass) in nu.weights().iter().enumerate() {
            let terms: Vec<_> = (0..k).map(|y| (vars[i][y * m + z], 1.0)).collect();
            lp.add_constraint(&terms, ComparisonOp::Eq, mass);
        }
    }
    // every input sees the same first marginal
    let m0 = problem.discretized[0].len();
    for (i, nu) in problem.discretized.iter().enumerate().skip(1) {
        let m = nu.len();
        for y in 0..k {
            let mut terms: Vec<_> = (0..m0).map(|z| (vars[0][y * m0 + z], 1.0)).collect();
            terms.extend((0..m).map(|z| (vars[i][y * m + z], -1.0)));
            lp.add_constraint(&terms, ComparisonOp::Eq, 0.0);
        }
    }
    let solution = match lp.solve() {
        Ok(SolveOutcome::Solution(s)) => s,
        Ok(other) => return Err(Error::Solver(format!("LP solver stopped: {other:?}"))),
        Err(e) => return Err(Error::Solver(format!("LP solver failed: {e}"))),
    };
    let pairs: Vec<(GraphPoint, f64)> = (0..k)
        .map(|y| {
            let mass: f64 = (0..m0).map(|z| solution[vars[0][y * m0 + z]]).sum();
            (candidates[y], if mass > 1e-13 { mass } else { 0.0 })
        })
        .collect();
    let mu = DiscreteMeasure::normalized(pairs)?;
    Ok(LpSolution { mu, objective: solution.objective(), candidates: k, variables })
}

/// Pointwise clamp of a quantile function to `[lo, hi]`.
pub fn clamp_quantile(q: &crate::line_ot::QuantileFn, lo: f64, hi: f64) -> Result<crate::line_ot::QuantileFn> {
    q.clamp(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixedPointInit {
    /// Equal mass on every grid node of the edge.
    #[default]
    Uniform,
    /// All mass at the tail vertex.
    TailDirac,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub max_iter: usize,
    /// Stop once successive iterates are this close in W2; defaults to
    /// `1e-6 * length`.
    pub eps: Option<f64>,
    pub init: FixedPointInit,
    pub mode: ExecMode,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { max_iter: 200, eps: None, init: FixedPointInit::Uniform, mode: ExecMode::default() }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub mu: DiscreteMeasure,
    /// `mu` in tail offsets.
    pub mu_line: LineMeasure,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// W2 size of every step taken.
    pub steps: Vec<f64>,
}

/// Grid on the oriented edge used by the fixed-point iteration: the
/// spacing-`grid` nodes plus the offsets of input atoms lying on the edge.
pub fn edge_grid(problem: &BarycenterProblem, e: OrientedEdge) -> Vec<f64> {
    let g = &problem.graph;
    let len = e.length(g);
    let n = problem.cells(len);
    let mut xs: Vec<f64> = (0..=n).map(|k| len * k as f64 / n as f64).collect();
    for nu in &problem.discretized {
        xs.extend(nu.points().iter().filter_map(|p| e.offset_along(g, p)));
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Moves a measure on `[grid[0], grid[last]]` onto the grid points by
/// linear interpolation, which keeps the mass and the mean.
pub fn project_to_grid(m: &LineMeasure, grid: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let mut mass = vec![0.0; grid.len()];
    let mut spread = |x: f64, w: f64| {
        let x = x.clamp(lo, hi);
        match grid.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(k) => mass[k] += w,
            Err(k) => {
                let (a, b) = (grid[k - 1], grid[k]);
                let right = (x - a) / (b - a);
                mass[k - 1] += w * (1.0 - right);
                mass[k] += w * right;
            }
        }
    };
    for atom in m.atoms() {
        spread(atom.x, atom.mass);
    }
    for p in m.pieces() {
        // a hat function is linear on each grid cell, so its integral over a
        // sub-interval is the value at the midpoint times the length
        let start = grid.partition_point(|&g| g <= p.a).saturating_sub(1);
        for k in start..grid.len() - 1 {
            let (s, t) = (p.a.max(grid[k]), p.b.min(grid[k + 1]));
            if grid[k] >= p.b {
                break;
            }
            if t > s {
                spread(0.5 * (s + t), p.density * (t - s));
            }
        }
        if p.a < lo || p.b > hi {
            return Err(Error::Internal(format!("piece [{}, {}) outside the edge grid", p.a, p.b)));
        }
    }
    Ok(mass)
}

fn line_to_edge(g: &MetricGraph, e: OrientedEdge, grid: &[f64], mass: &[f64]) -> Result<DiscreteMeasure> {
    let pairs = grid
        .iter()
        .zip(mass)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&x, &w)| Ok((e.point_at(g, x)?, w)))
        .collect::<Result<Vec<_>>>()?;
    DiscreteMeasure::normalized(pairs)
}

fn grid_line_measure(grid: &[f64], mass: &[f64]) -> Result<LineMeasure> {
    LineMeasure::normalized(
        grid.iter().zip(mass).filter(|(_, &w)| w > 0.0).map(|(&x, &w)| LineAtom { x, mass: w }).collect(),
        vec![],
    )
}

/// One unfolding step: the clamped barycenter of the unfolded inputs
/// around `base` (before projection to the grid), and the objective of `base`.
pub fn clamped_barycenter(
    problem: &BarycenterProblem,
    e: OrientedEdge,
    base: &DiscreteMeasure,
    mode: ExecMode,
) -> Result<(LineMeasure, f64)> {
    let ctx = CoverContext::new(&problem.graph, e, base.clone())?;
    let unfolded = exec::map(mode, &problem.discretized, |nu| phi_decomposed(&ctx, nu, ExecMode::Sequential));
    let mut line_problem = Vec::with_capacity(unfolded.len());
    let mut objective = 0.0;
    for (w, out) in problem.weights().zip(unfolded) {
        let out = out?;
        objective += w * out.cost;
        line_problem.push((w, out.measure));
    }
    // renormalize weights so the line barycenter accepts them exactly
    let total: f64 = line_problem.iter().map(|p| p.0).sum();
    line_problem.iter_mut().for_each(|p| p.0 /= total);
    let q = barycenter_quantile(&line_problem)?;
    let clamped = clamp_quantile(&q, 0.0, e.length(&problem.graph))?;
    Ok((measure_from_quantile(&clamped)?, objective))
}

/// W2 distance (on the edge, in tail offsets) between `mu` and the clamped
/// barycenter of the inputs unfolded around `mu`. Zero exactly at a fixed
/// point of the unfolding map.
pub fn fixed_point_residual(problem: &BarycenterProblem, e: OrientedEdge, mu: &DiscreteMeasure) -> Result<f64> {
    let (next, _) = clamped_barycenter(problem, e, mu, ExecMode::Sequential)?;
    let ctx = CoverContext::new(&problem.graph, e, mu.clone())?;
    Ok(w2_line(&ctx.base_on_line()?, &next))
}

pub fn solve_edge_fixed_point(
    problem: &BarycenterProblem,
    e: OrientedEdge,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    let g = &problem.graph;
    if e.edge >= g.edge_count() {
        return Err(Error::InvalidArgument(format!("unknown edge index {}", e.edge)));
    }
    if !g.is_edge_minimizing(e.edge) {
        return Err(Error::NonMinimizingEdge(e.describe(g)));
    }
    let len = e.length(g);
    let eps = opts.eps.unwrap_or(1e-6 * len);
    let grid = edge_grid(problem, e);
    let mut mass = match opts.init {
        FixedPointInit::Uniform => vec![1.0 / grid.len() as f64; grid.len()],
        FixedPointInit::TailDirac => {
            let mut m = vec![0.0; grid.len()];
            m[0] = 1.0;
            m
        }
    };
    let mut current = line_to_edge(g, e, &grid, &mass)?;
    let mut current_line = grid_line_measure(&grid, &mass)?;
    let mut best: Option<(f64, DiscreteMeasure, LineMeasure)> = None;
    let mut steps = Vec::new();
    for iter in 1..=opts.max_iter {
        let (next_line, obj) = clamped_barycenter(problem, e, &current, opts.mode)?;
        if best.as_ref().is_none_or(|b| obj < b.0) {
            best = Some((obj, current.clone(), current_line.clone()));
        }
        mass = project_to_grid(&next_line, &grid)?;
        let next = line_to_edge(g, e, &grid, &mass)?;
        let projected = grid_line_measure(&grid, &mass)?;
        let step = w2_line(&current_line, &projected);
        steps.push(step);
        current = next;
        current_line = projected;
        if step <= eps {
            let objective = objective_with(problem, &current, opts.mode)?;
            return Ok(FixedPointResult {
                mu: current,
                mu_line: current_line,
                iterations: iter,
                converged: true,
                objective,
                steps,
            });
        }
    }
    let final_obj = objective_with(problem, &current, opts.mode)?;
    let (objective, mu, mu_line) = match best {
        Some(b) if b.0 < final_obj => b,
        _ => (final_obj, current, current_line),
    };
    Ok(FixedPointResult { mu, mu_line, iterations: opts.max_iter, converged: false, objective, steps })
}

/// Mass of a computed barycenter inside one grid cell of an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMass {
    pub edge: usize,
    /// Cell `[a, b)` in offsets from the edge's `u` end.
    pub a: f64,
    pub b: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// No input is atomless, so interior atoms are allowed.
    HypothesisNotMet,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::HypothesisNotMet => "HYPOTHESIS_NOT_MET",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegularityReport {
    /// Interior cells whose mass exceeds `atom_tol`.
    pub interior_atoms: Vec<CellMass>,
    pub vertex_masses: Vec<(usize, f64)>,
    /// Largest interior cell mass divided by its width.
    pub max_interior_density: f64,
    pub atom_tol: f64,
    /// Total weight of the atomless inputs.
    pub atomless_weight: f64,
    pub verdict: Verdict,
    pub cells: Vec<CellMass>,
}

/// Default interior threshold: five times the most a density can put in
/// one cell. A barycenter's density is at most `D / lambda` when inputs of
/// total weight `lambda` have density at most `D`.
pub fn default_atom_tol(problem: &BarycenterProblem) -> Option<f64> {
    let (weight, dmax) = atomless_stats(problem);
    (weight > 0.0).then(|| 5.0 * problem.grid * dmax / weight)
}

fn atomless_stats(problem: &BarycenterProblem) -> (f64, f64) {
    problem
        .measures
        .iter()
        .filter(|(_, m)| m.is_atomless())
        .fold((0.0, 0.0f64), |(w, d), (lw, m)| (w + lw, d.max(m.max_density())))
}

pub fn regularity_report(problem: &BarycenterProblem, mu: &DiscreteMeasure, atom_tol: Option<f64>) -> RegularityReport {
    let g = &problem.graph;
    let (atomless_weight, _) = atomless_stats(problem);
    let tol = atom_tol.or_else(|| default_atom_tol(problem)).unwrap_or(0.0);
    let mut cells: Vec<CellMass> = Vec::new();
    for (ei, e) in g.edges().iter().enumerate() {
        let n = problem.cells(e.length);
        let w = e.length / n as f64;
        cells.extend((0..n).map(|k| CellMass {
            edge: ei,
            a: w * k as f64,
            b: if k + 1 == n { e.length } else { w * (k + 1) as f64 },
            mass: 0.0,
        }));
    }
    let mut vertex = vec![0.0; g.vertex_count()];
    for (p, w) in mu.iter() {
        match p {
            GraphPoint::Vertex(v) => vertex[v] += w,
            GraphPoint::Edge { edge, offset } => {
                let first = cells.partition_point(|c| c.edge < edge);
                let n = cells[first..].iter().take_while(|c| c.edge == edge).count();
                let k = cells[first..first + n].partition_point(|c| c.b <= offset).min(n - 1);
                cells[first + k].mass += w;
            }
        }
    }
    let interior_atoms: Vec<CellMass> = cells.iter().filter(|c| c.mass > tol).copied().collect();
    let max_interior_density = cells.iter().map(|c| c.mass / (c.b - c.a)).fold(0.0, f64::max);
    let verdict = if atomless_weight <= 0.0 {
        Verdict::HypothesisNotMet
    } else if interior_atoms.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    RegularityReport {
        interior_atoms,
        vertex_masses: vertex.into_iter().enumerate().filter(|(_, w)| *w > 0.0).collect(),
        max_interior_density,
        atom_tol: tol,
        atomless_weight,
        verdict,
        cells,
    }
}

/// Checks the fixed point in quantile form: `mu`'s quantile against the
/// clamped averaged quantile, at every breakpoint of either.
pub fn quantile_gap(problem: &BarycenterProblem, e: OrientedEdge, mu: &DiscreteMeasure) -> Result<f64> {
    let (next, _) = clamped_barycenter(problem, e, mu, ExecMode::Sequential)?;
    let ctx = CoverContext::new(&problem.graph, e, mu.clone())?;
    let (qa, qb) = (quantile(&ctx.base_on_line()?), quantile(&next));
    let mut ts: Vec<f64> = qa.knots().iter().chain(qb.knots().iter()).map(|k| k.0).collect();
    ts.sort_by(f64::total_cmp);
    // breakpoints that differ only by rounding would open a sliver where the
    // two step functions disagree by a whole jump
    ts.push(1.0);
    ts.dedup_by(|b, a| *b - *a < 1e-9);
    Ok(ts
        .windows(2)
        .map(|w| {
            let t = 0.5 * (w[0] + w[1]);
            (qa.eval(t) - qb.eval(t)).abs()
        })
        .fold(0.0, f64::max))
}
