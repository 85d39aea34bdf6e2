//! Finite metric graphs and their length distance.
//!
//! Edges are stored with the orientation given at construction time
//! (`u -> v`); a point in an edge interior is addressed by its offset from
//! `u`. Offsets equal to (or within [`SNAP_TOL`] of) an edge end are always
//! stored as the corresponding vertex, so every point of the graph has a
//! single canonical representation.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, GraphError, Result, SNAP_TOL};

/// Serialized form of a graph: `{"vertices": [..], "edges": [{"id", "u", "v", "length"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDescription {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDescription {
    pub id: String,
    pub u: String,
    pub v: String,
    pub length: f64,
}

impl GraphDescription {
    /// Convenience builder used by tests and examples.
    pub fn new<V, E>(vertices: V, edges: E) -> Self
    where
        V: IntoIterator,
        V::Item: Into<String>,
        E: IntoIterator<Item = (&'static str, &'static str, &'static str, f64)>,
    {
        GraphDescription {
            vertices: vertices.into_iter().map(Into::into).collect(),
            edges: edges
                .into_iter()
                .map(|(id, u, v, length)| EdgeDescription {
                    id: id.to_string(),
                    u: u.to_string(),
                    v: v.to_string(),
                    length,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub u: usize,
    pub v: usize,
    pub length: f64,
}

impl Edge {
    /// The endpoint of this edge that is not `w`, if `w` is an endpoint.
    pub fn other(&self, w: usize) -> Option<usize> {
        if w == self.u {
            Some(self.v)
        } else if w == self.v {
            Some(self.u)
        } else {
            None
        }
    }
}

/// A connected, finite graph whose edges are segments of positive length.
///
/// Immutable after [`MetricGraph::build`]; all-pairs vertex distances are
/// computed once at construction.
#[derive(Debug, Clone)]
pub struct MetricGraph {
    vertex_names: Vec<String>,
    vertex_lookup: HashMap<String, usize>,
    edges: Vec<Edge>,
    edge_lookup: HashMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
    vertex_dist: Vec<f64>,
    min_length: f64,
}

/// A location on a metric graph in canonical form.
///
/// `Edge` points always have `0 < offset < length` with the offset measured
/// from the edge's `u` endpoint. Construct points through
/// [`MetricGraph::vertex_point`] or [`MetricGraph::edge_point`].
#[derive(Debug, Clone, Copy)]
pub enum GraphPoint {
    Vertex(usize),
    Edge { edge: usize, offset: f64 },
}

impl PartialEq for GraphPoint {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for GraphPoint {}

impl PartialOrd for GraphPoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GraphPoint {
    fn cmp(&self, other: &Self) -> Ordering {
        use GraphPoint::*;
        match (self, other) {
            (Vertex(a), Vertex(b)) => a.cmp(b),
            (Vertex(_), Edge { .. }) => Ordering::Less,
            (Edge { .. }, Vertex(_)) => Ordering::Greater,
            (Edge { edge: e1, offset: o1 }, Edge { edge: e2, offset: o2 }) => e1.cmp(e2).then_with(|| o1.total_cmp(o2)),
        }
    }
}

impl GraphPoint {
    pub fn is_vertex(&self) -> bool {
        matches!(self, GraphPoint::Vertex(_))
    }
}

/// An edge together with a choice of direction.
///
/// `tail` is the endpoint identified with offset 0 and `head` the one
/// identified with offset `length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OrientedEdge {
    pub edge: usize,
    pub reversed: bool,
}

impl OrientedEdge {
    pub fn forward(edge: usize) -> Self {
        OrientedEdge { edge, reversed: false }
    }

    pub fn backward(edge: usize) -> Self {
        OrientedEdge { edge, reversed: true }
    }

    pub fn tail(&self, g: &MetricGraph) -> usize {
        let e = g.edge(self.edge);
        if self.reversed {
            e.v
        } else {
            e.u
        }
    }

    pub fn head(&self, g: &MetricGraph) -> usize {
        let e = g.edge(self.edge);
        if self.reversed {
            e.u
        } else {
            e.v
        }
    }

    pub fn length(&self, g: &MetricGraph) -> f64 {
        g.edge(self.edge).length
    }

    /// Offset of `p` measured from the tail, or `None` if `p` is not on the
    /// closed edge.
    pub fn offset_along(&self, g: &MetricGraph, p: &GraphPoint) -> Option<f64> {
        let len = self.length(g);
        match *p {
            GraphPoint::Vertex(w) if w == self.tail(g) => Some(0.0),
            GraphPoint::Vertex(w) if w == self.head(g) => Some(len),
            GraphPoint::Vertex(_) => None,
            GraphPoint::Edge { edge, offset } if edge == self.edge => {
                Some(if self.reversed { len - offset } else { offset })
            }
            GraphPoint::Edge { .. } => None,
        }
    }

    /// The point at distance `along` from the tail.
    pub fn point_at(&self, g: &MetricGraph, along: f64) -> Result<GraphPoint> {
        let len = self.length(g);
        let offset = if self.reversed { len - along } else { along };
        g.edge_point(self.edge, offset)
    }

    pub fn describe(&self, g: &MetricGraph) -> String {
        let e = g.edge(self.edge);
        format!("{}({}->{})", e.id, g.vertex_name(self.tail(g)), g.vertex_name(self.head(g)))
    }
}

/// One traversed piece of a geodesic, inside a single edge.
///
/// Offsets are measured from the edge's `u` endpoint; `forward` means the
/// piece is traversed towards `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStep {
    pub edge: usize,
    pub forward: bool,
    pub start: f64,
    pub end: f64,
}

impl PathStep {
    pub fn length(&self) -> f64 {
        (self.end - self.start).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPath {
    pub from: GraphPoint,
    pub to: GraphPoint,
    pub steps: Vec<PathStep>,
    /// Equal to `distance(from, to)`.
    pub length: f64,
}

impl GeodesicPath {
    pub fn step_length_sum(&self) -> f64 {
        self.steps.iter().map(PathStep::length).sum()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

fn relative_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= SNAP_TOL * (1.0 + a.abs().max(b.abs()))
}

impl MetricGraph {
    /// Validates a description and precomputes vertex distances.
    pub fn build(desc: &GraphDescription) -> Result<Self, GraphError> {
        if desc.vertices.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut vertex_lookup = HashMap::new();
        for (i, name) in desc.vertices.iter().enumerate() {
            if vertex_lookup.insert(name.clone(), i).is_some() {
                return Err(GraphError::DuplicateVertex(name.clone()));
            }
        }
        let n = desc.vertices.len();
        let mut edges = Vec::with_capacity(desc.edges.len());
        let mut edge_lookup = HashMap::new();
        let mut adjacency = vec![Vec::new(); n];
        for ed in &desc.edges {
            if edge_lookup.contains_key(&ed.id) {
                return Err(GraphError::DuplicateEdge(ed.id.clone()));
            }
            let find = |name: &String| {
                vertex_lookup
                    .get(name)
                    .copied()
                    .ok_or_else(|| GraphError::UnknownVertex { edge: ed.id.clone(), vertex: name.clone() })
            };
            let u = find(&ed.u)?;
            let v = find(&ed.v)?;
            if !(ed.length.is_finite() && ed.length > 0.0) {
                return Err(GraphError::NonPositiveLength { edge: ed.id.clone(), length: ed.length });
            }
            if u == v {
                return Err(GraphError::SelfLoop(ed.id.clone()));
            }
            let idx = edges.len();
            edge_lookup.insert(ed.id.clone(), idx);
            adjacency[u].push(idx);
            adjacency[v].push(idx);
            edges.push(Edge { id: ed.id.clone(), u, v, length: ed.length });
        }
        if let Some(w) = (0..n).find(|&w| adjacency[w].is_empty()) {
            return Err(GraphError::IsolatedVertex(desc.vertices[w].clone()));
        }
        let min_length = edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min);

        let mut g = MetricGraph {
            vertex_names: desc.vertices.clone(),
            vertex_lookup,
            edges,
            edge_lookup,
            adjacency,
            vertex_dist: vec![f64::INFINITY; n * n],
            min_length,
        };
        for s in 0..n {
            let row = g.dijkstra(s);
            if let Some(t) = row.iter().position(|d| d.is_infinite()) {
                return Err(GraphError::Disconnected(g.vertex_names[t].clone(), g.vertex_names[s].clone()));
            }
            // keep the matrix exactly symmetric: the lower-indexed source wins
            for (t, &d) in row.iter().enumerate().skip(s) {
                g.vertex_dist[s * n + t] = d;
                g.vertex_dist[t * n + s] = d;
            }
        }
        Ok(g)
    }

    fn dijkstra(&self, source: usize) -> Vec<f64> {
        let n = self.vertex_names.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapItem(0.0, source));
        while let Some(HeapItem(d, w)) = heap.pop() {
            if d > dist[w] {
                continue;
            }
            for &ei in &self.adjacency[w] {
                let e = &self.edges[ei];
                let next = e.other(w).expect("adjacency is consistent");
                let nd = d + e.length;
                if nd < dist[next] {
                    dist[next] = nd;
                    heap.push(HeapItem(nd, next));
                }
            }
        }
        dist
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    pub fn incident_edges(&self, vertex: usize) -> &[usize] {
        &self.adjacency[vertex]
    }

    pub fn vertex_name(&self, idx: usize) -> &str {
        &self.vertex_names[idx]
    }

    pub fn vertex_index(&self, name: &str) -> Option<usize> {
        self.vertex_lookup.get(name).copied()
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edge_lookup.get(id).copied()
    }

    /// The constant `c`: the smallest edge length.
    pub fn min_edge_length(&self) -> f64 {
        self.min_length
    }

    pub fn vertex_distance(&self, a: usize, b: usize) -> f64 {
        self.vertex_dist[a * self.vertex_names.len() + b]
    }

    /// An upper bound on the diameter: every point is within half an edge
    /// of a vertex.
    pub fn diameter_bound(&self) -> f64 {
        let max_vv = self.vertex_dist.iter().copied().fold(0.0, f64::max);
        let max_len = self.edges.iter().map(|e| e.length).fold(0.0, f64::max);
        max_vv + max_len
    }

    pub fn to_description(&self) -> GraphDescription {
        GraphDescription {
            vertices: self.vertex_names.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDescription {
                    id: e.id.clone(),
                    u: self.vertex_names[e.u].clone(),
                    v: self.vertex_names[e.v].clone(),
                    length: e.length,
                })
                .collect(),
        }
    }

    pub fn vertex_point(&self, name: &str) -> Result<GraphPoint> {
        self.vertex_index(name)
            .map(GraphPoint::Vertex)
            .ok_or_else(|| Error::InvalidPoint(format!("unknown vertex `{name}`")))
    }

    /// Canonical point at `offset` from the `u` end of `edge`.
    pub fn edge_point(&self, edge: usize, offset: f64) -> Result<GraphPoint> {
        let e = self.edges.get(edge).ok_or_else(|| Error::InvalidPoint(format!("unknown edge index {edge}")))?;
        if !offset.is_finite() || offset < -SNAP_TOL || offset > e.length + SNAP_TOL {
            return Err(Error::InvalidPoint(format!("offset {offset} outside [0, {}] on edge `{}`", e.length, e.id)));
        }
        if offset <= SNAP_TOL {
            Ok(GraphPoint::Vertex(e.u))
        } else if offset >= e.length - SNAP_TOL {
            Ok(GraphPoint::Vertex(e.v))
        } else {
            Ok(GraphPoint::Edge { edge, offset })
        }
    }

    /// Parses `v:<vertex>` or `<edge>:<offset>` (offset from `u`).
    pub fn parse_point(&self, literal: &str) -> Result<GraphPoint> {
        if let Some(name) = literal.strip_prefix("v:") {
            return self.vertex_point(name);
        }
        let (id, off) = literal
            .rsplit_once(':')
            .ok_or_else(|| Error::InvalidPoint(format!("malformed point literal `{literal}`")))?;
        let edge = self.edge_index(id).ok_or_else(|| Error::InvalidPoint(format!("unknown edge `{id}`")))?;
        let offset: f64 = off.trim().parse().map_err(|_| Error::InvalidPoint(format!("bad offset in `{literal}`")))?;
        self.edge_point(edge, offset)
    }

    pub fn format_point(&self, p: &GraphPoint) -> String {
        match *p {
            GraphPoint::Vertex(w) => format!("v:{}", self.vertex_names[w]),
            GraphPoint::Edge { edge, offset } => {
                format!("{}:{}", self.edges[edge].id, crate::io::round_sig(offset))
            }
        }
    }

    /// Exits from `p` to the vertex skeleton: `(vertex, distance along the edge)`.
    fn exits(&self, p: &GraphPoint) -> ([(usize, f64); 2], usize) {
        match *p {
            GraphPoint::Vertex(w) => ([(w, 0.0), (w, 0.0)], 1),
            GraphPoint::Edge { edge, offset } => {
                let e = &self.edges[edge];
                ([(e.u, offset), (e.v, e.length - offset)], 2)
            }
        }
    }

    /// The length distance between two canonical points.
    ///
    /// Exactly symmetric: every candidate is `(exit_x + exit_y) + d(a, b)`
    /// with a symmetric vertex matrix.
    pub fn distance(&self, x: &GraphPoint, y: &GraphPoint) -> f64 {
        if x == y {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        if let (GraphPoint::Edge { edge: e1, offset: s }, GraphPoint::Edge { edge: e2, offset: t }) = (x, y) {
            if e1 == e2 {
                best = (s - t).abs();
            }
        }
        let (ex, nx) = self.exits(x);
        let (ey, ny) = self.exits(y);
        for &(a, ca) in &ex[..nx] {
            for &(b, cb) in &ey[..ny] {
                let cand = (ca + cb) + self.vertex_distance(a, b);
                if cand < best {
                    best = cand;
                }
            }
        }
        best
    }

    fn step_key(&self, step: &PathStep) -> (&str, bool) {
        // forward sorts before backward
        (self.edges[step.edge].id.as_str(), !step.forward)
    }

    fn compare_paths(&self, a: &[PathStep], b: &[PathStep]) -> Ordering {
        for (sa, sb) in a.iter().zip(b) {
            let ord = self.step_key(sa).cmp(&self.step_key(sb));
            if ord != Ordering::Equal {
                return ord;
            }
        }
        a.len().cmp(&b.len())
    }

    /// Lexicographically smallest shortest vertex-to-vertex step sequence.
    fn vertex_path(&self, a: usize, b: usize) -> Vec<PathStep> {
        let mut steps = Vec::new();
        let mut cur = a;
        while cur != b {
            let remaining = self.vertex_distance(cur, b);
            let mut best: Option<PathStep> = None;
            for &ei in &self.adjacency[cur] {
                let e = &self.edges[ei];
                let next = e.other(cur).expect("incident");
                if !relative_eq(e.length + self.vertex_distance(next, b), remaining) {
                    continue;
                }
                let forward = cur == e.u;
                let step = PathStep {
                    edge: ei,
                    forward,
                    start: if forward { 0.0 } else { e.length },
                    end: if forward { e.length } else { 0.0 },
                };
                let better = match &best {
                    None => true,
                    Some(prev) => self.step_key(&step) < self.step_key(prev),
                };
                if better {
                    best = Some(step);
                }
            }
            let step = best.expect("some incident edge lies on a shortest path");
            cur = self.edges[step.edge].other(cur).expect("incident");
            steps.push(step);
            debug_assert!(steps.len() <= self.vertex_count());
        }
        steps
    }

    /// A geodesic from `x` to `y`; ties go to the lexicographically smallest
    /// `(edge id, direction)` sequence, with forward before backward.
    pub fn shortest_path(&self, x: &GraphPoint, y: &GraphPoint) -> GeodesicPath {
        let length = self.distance(x, y);
        let mut path = GeodesicPath { from: *x, to: *y, steps: Vec::new(), length };
        if x == y {
            return path;
        }
        let mut candidates: Vec<Vec<PathStep>> = Vec::new();
        if let (GraphPoint::Edge { edge: e1, offset: s }, GraphPoint::Edge { edge: e2, offset: t }) = (x, y) {
            if e1 == e2 && relative_eq((s - t).abs(), length) {
                candidates.push(vec![PathStep { edge: *e1, forward: t > s, start: *s, end: *t }]);
            }
        }
        let (ex, nx) = self.exits(x);
        let (ey, ny) = self.exits(y);
        for &(a, ca) in &ex[..nx] {
            for &(b, cb) in &ey[..ny] {
                let cand = (ca + cb) + self.vertex_distance(a, b);
                if !relative_eq(cand, length) {
                    continue;
                }
                let mut steps = Vec::new();
                if let GraphPoint::Edge { edge, offset } = *x {
                    let e = &self.edges[edge];
                    let to_v = a == e.v;
                    steps.push(PathStep { edge, forward: to_v, start: offset, end: if to_v { e.length } else { 0.0 } });
                }
                steps.extend(self.vertex_path(a, b));
                if let GraphPoint::Edge { edge, offset } = *y {
                    let e = &self.edges[edge];
                    let from_u = b == e.u;
                    steps.push(PathStep {
                        edge,
                        forward: from_u,
                        start: if from_u { 0.0 } else { e.length },
                        end: offset,
                    });
                }
                candidates.push(steps);
            }
        }
        path.steps = candidates
            .into_iter()
            .min_by(|a, b| self.compare_paths(a, b))
            .expect("at least one route realizes the distance");
        path
    }

    /// Whether the edge is itself a geodesic between its endpoints.
    pub fn is_edge_minimizing(&self, edge: usize) -> bool {
        let e = &self.edges[edge];
        self.vertex_distance(e.u, e.v) >= e.length * (1.0 - SNAP_TOL)
    }

    pub fn all_edges_minimizing(&self) -> bool {
        (0..self.edges.len()).all(|e| self.is_edge_minimizing(e))
    }

    /// Interior points reached from `vertex` by two geodesics leaving their
    /// edge through different endpoints. At most one per edge.
    ///
    /// Returns `(edge index, offset from u)`.
    pub fn cut_points_from(&self, vertex: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (ei, e) in self.edges.iter().enumerate() {
            let da = self.vertex_distance(vertex, e.u);
            let db = self.vertex_distance(vertex, e.v);
            let x = 0.5 * (db + e.length - da);
            if x > SNAP_TOL * e.length.max(1.0) && x < e.length - SNAP_TOL * e.length.max(1.0) {
                out.push((ei, x));
            }
        }
        out
    }

    /// Distance from a vertex to the point at offset `t` of `edge`, for
    /// `t` in `[0, length]`.
    pub fn vertex_to_offset(&self, vertex: usize, edge: usize, t: f64) -> f64 {
        let e = &self.edges[edge];
        let via_u = t + self.vertex_distance(vertex, e.u);
        let via_v = (e.length - t) + self.vertex_distance(vertex, e.v);
        via_u.min(via_v)
    }
}

impl fmt::Display for MetricGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MetricGraph({} vertices, {} edges, c = {})", self.vertex_count(), self.edge_count(), self.min_length)
    }
}

/// Small named graphs used throughout tests, benches and examples.
pub mod fixtures {
    use super::*;

    /// Triangle `A, B, C` with unit edges `e_AB`, `e_BC`, `e_CA`.
    pub fn triangle() -> MetricGraph {
        MetricGraph::build(&GraphDescription::new(
            ["A", "B", "C"],
            [("e_AB", "A", "B", 1.0), ("e_BC", "B", "C", 1.0), ("e_CA", "C", "A", 1.0)],
        ))
        .expect("triangle is valid")
    }

    /// Three unit branches `b1, b2, b3` from the center `o` to tips `t1, t2, t3`.
    pub fn tripod() -> MetricGraph {
        MetricGraph::build(&GraphDescription::new(
            ["o", "t1", "t2", "t3"],
            [("b1", "o", "t1", 1.0), ("b2", "o", "t2", 1.0), ("b3", "o", "t3", 1.0)],
        ))
        .expect("tripod is valid")
    }

    /// Unit square cycle `A-B-C-D-A`.
    pub fn square() -> MetricGraph {
        MetricGraph::build(&GraphDescription::new(
            ["A", "B", "C", "D"],
            [("s_AB", "A", "B", 1.0), ("s_BC", "B", "C", 1.0), ("s_CD", "C", "D", 1.0), ("s_DA", "D", "A", 1.0)],
        ))
        .expect("square is valid")
    }

    /// Unit square with a chord `A-C` of length 1.5; every edge is minimizing.
    pub fn square_with_chord() -> MetricGraph {
        MetricGraph::build(&GraphDescription::new(
            ["A", "B", "C", "D"],
            [
                ("s_AB", "A", "B", 1.0),
                ("s_BC", "B", "C", 1.0),
                ("s_CD", "C", "D", 1.0),
                ("s_DA", "D", "A", 1.0),
                ("chord", "A", "C", 1.5),
            ],
        ))
        .expect("square with chord is valid")
    }

    /// Regular pentagon with unit edges `p0..p4`.
    pub fn pentagon() -> MetricGraph {
        MetricGraph::build(&GraphDescription::new(
            ["P0", "P1", "P2", "P3", "P4"],
            [
                ("p0", "P0", "P1", 1.0),
                ("p1", "P1", "P2", 1.0),
                ("p2", "P2", "P3", 1.0),
                ("p3", "P3", "P4", 1.0),
                ("p4", "P4", "P0", 1.0),
            ],
        ))
        .expect("pentagon is valid")
    }

    /// A single edge `seg` from `L` to `R`.
    pub fn segment(length: f64) -> MetricGraph {
        MetricGraph::build(&GraphDescription {
            vertices: vec!["L".into(), "R".into()],
            edges: vec![EdgeDescription { id: "seg".into(), u: "L".into(), v: "R".into(), length }],
        })
        .expect("segment is valid")
    }
}
