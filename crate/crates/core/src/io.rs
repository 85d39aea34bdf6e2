//! JSON and CSV formats.
//!
//! Graph: `{"vertices": [..], "edges": [{"id", "u", "v", "length"}]}`.
//! Graph measure: `{"atoms": [{"point": "v:o", "mass"}], "pieces": [{"edge", "a", "b", "density"}]}`.
//! Line measure: `{"atoms": [{"x", "mass"}], "pieces": [{"a", "b", "density"}]}`.
//! Problem: `{"graph": <graph or path>, "measures": [{"weight", "measure"}], "grid"}`.
//!
//! Emitted numbers are rounded to 12 significant digits. Parsed measures and
//! weights may be off from total 1 by up to 1e-9 (rounded output) and are
//! rescaled in that case.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::barycenter::{BarycenterProblem, RegularityReport};
use crate::line_ot::{LineAtom, LineMeasure, LinePiece};
use crate::metric_graph::{GraphDescription, MetricGraph};
use crate::ot_core::{DiscreteMeasure, EdgePiece, GraphMeasure};
use crate::{Error, Result, MASS_TOL};

/// Largest deviation of a parsed total from 1 that is silently rescaled.
pub const PARSE_MASS_TOL: f64 = 1e-9;

/// `x` rounded to 12 significant digits (and `-0` folded into `0`).
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    let r: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::FileNotFound { path: path.display().to_string(), reason: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn from_value<T: for<'de> Deserialize<'de>>(v: &Value, what: &str) -> Result<T> {
    T::deserialize(v).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

pub fn parse_graph(v: &Value) -> Result<MetricGraph> {
    let desc: GraphDescription = from_value(v, "graph")?;
    Ok(MetricGraph::build(&desc)?)
}

pub fn load_graph(path: &Path) -> Result<MetricGraph> {
    parse_graph(&read_json(path)?)
}

pub fn graph_to_json(g: &MetricGraph) -> Value {
    serde_json::to_value(g.to_description()).expect("graph description serializes")
}

#[derive(Deserialize)]
struct RawGraphMeasure {
    #[serde(default)]
    atoms: Vec<RawGraphAtom>,
    #[serde(default)]
    pieces: Vec<RawGraphPiece>,
}

#[derive(Deserialize)]
struct RawGraphAtom {
    point: String,
    mass: f64,
}

#[derive(Deserialize, Serialize)]
struct RawGraphPiece {
    edge: String,
    a: f64,
    b: f64,
    density: f64,
}

fn check_total(total: f64) -> Result<bool> {
    if (total - 1.0).abs() <= MASS_TOL {
        Ok(false)
    } else if (total - 1.0).abs() <= PARSE_MASS_TOL {
        Ok(true)
    } else {
        Err(Error::InvalidMeasure(format!("total mass {total} differs from 1")))
    }
}

pub fn parse_graph_measure(g: &MetricGraph, v: &Value) -> Result<GraphMeasure> {
    let raw: RawGraphMeasure = from_value(v, "measure")?;
    let atoms = raw.atoms.iter().map(|a| Ok((g.parse_point(&a.point)?, a.mass))).collect::<Result<Vec<_>>>()?;
    let pieces = raw
        .pieces
        .iter()
        .map(|p| {
            let edge =
                g.edge_index(&p.edge).ok_or_else(|| Error::InvalidMeasure(format!("unknown edge `{}`", p.edge)))?;
            Ok(EdgePiece { edge, a: p.a, b: p.b, density: p.density })
        })
        .collect::<Result<Vec<_>>>()?;
    let total = atoms.iter().map(|a| a.1).sum::<f64>() + pieces.iter().map(EdgePiece::mass).sum::<f64>();
    if check_total(total)? {
        GraphMeasure::normalized(g, atoms, pieces)
    } else {
        GraphMeasure::new(g, atoms, pieces)
    }
}

pub fn load_graph_measure(g: &MetricGraph, path: &Path) -> Result<GraphMeasure> {
    parse_graph_measure(g, &read_json(path)?)
}

/// Parses a graph measure that must be made of atoms only.
pub fn parse_discrete_measure(g: &MetricGraph, v: &Value) -> Result<DiscreteMeasure> {
    let m = parse_graph_measure(g, v)?;
    if !m.pieces().is_empty() {
        return Err(Error::InvalidMeasure("expected atoms only".into()));
    }
    DiscreteMeasure::new(m.atoms().to_vec())
}

pub fn graph_measure_to_json(g: &MetricGraph, m: &GraphMeasure) -> Value {
    let atoms: Vec<Value> =
        m.atoms().iter().map(|(p, w)| json!({"point": g.format_point(p), "mass": round_sig(*w)})).collect();
    let pieces: Vec<Value> = m
        .pieces()
        .iter()
        .map(|p| {
            json!({
                "edge": g.edge(p.edge).id,
                "a": round_sig(p.a),
                "b": round_sig(p.b),
                "density": round_sig(p.density),
            })
        })
        .collect();
    json!({"atoms": atoms, "pieces": pieces})
}

pub fn discrete_measure_to_json(g: &MetricGraph, m: &DiscreteMeasure) -> Value {
    graph_measure_to_json(g, &m.to_graph_measure())
}

pub fn parse_line_measure(v: &Value) -> Result<LineMeasure> {
    #[derive(Deserialize)]
    struct Raw {
        #[serde(default)]
        atoms: Vec<LineAtom>,
        #[serde(default)]
        pieces: Vec<LinePiece>,
    }
    let raw: Raw = from_value(v, "line measure")?;
    let total = raw.atoms.iter().map(|a| a.mass).sum::<f64>() + raw.pieces.iter().map(LinePiece::mass).sum::<f64>();
    if check_total(total)? {
        LineMeasure::normalized(raw.atoms, raw.pieces)
    } else {
        LineMeasure::new(raw.atoms, raw.pieces)
    }
}

pub fn line_measure_to_json(m: &LineMeasure) -> Value {
    let atoms: Vec<Value> = m.atoms().iter().map(|a| json!({"x": round_sig(a.x), "mass": round_sig(a.mass)})).collect();
    let pieces: Vec<Value> = m
        .pieces()
        .iter()
        .map(|p| json!({"a": round_sig(p.a), "b": round_sig(p.b), "density": round_sig(p.density)}))
        .collect();
    json!({"atoms": atoms, "pieces": pieces})
}

/// Parses a problem file; `base_dir` resolves a graph given as a path, and
/// `grid` overrides the file's grid spacing.
pub fn parse_problem(v: &Value, base_dir: &Path, grid: Option<f64>) -> Result<BarycenterProblem> {
    let obj = v.as_object().ok_or_else(|| Error::Parse("problem must be a JSON object".into()))?;
    let graph = match obj.get("graph") {
        Some(Value::String(path)) => {
            let p = PathBuf::from(path);
            load_graph(&if p.is_absolute() { p } else { base_dir.join(p) })?
        }
        Some(g @ Value::Object(_)) => parse_graph(g)?,
        _ => return Err(Error::Parse("problem needs a `graph` object or path".into())),
    };
    let items = obj
        .get("measures")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("problem needs a `measures` array".into()))?;
    let mut measures = Vec::with_capacity(items.len());
    for item in items {
        let weight = item
            .get("weight")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Parse("every measure needs a numeric `weight`".into()))?;
        let m = item.get("measure").ok_or_else(|| Error::Parse("every entry needs a `measure`".into()))?;
        measures.push((weight, parse_graph_measure(&graph, m)?));
    }
    let total: f64 = measures.iter().map(|m| m.0).sum();
    if (total - 1.0).abs() > PARSE_MASS_TOL {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
    }
    if (total - 1.0).abs() > MASS_TOL {
        measures.iter_mut().for_each(|m| m.0 /= total);
    }
    let grid = match grid {
        Some(h) => h,
        None => obj
            .get("grid")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Parse("problem needs a numeric `grid` (or pass one)".into()))?,
    };
    BarycenterProblem::new(graph, measures, grid)
}

pub fn load_problem(path: &Path, grid: Option<f64>) -> Result<BarycenterProblem> {
    let v = read_json(path)?;
    parse_problem(&v, path.parent().unwrap_or(Path::new(".")), grid)
}

pub fn problem_to_json(p: &BarycenterProblem) -> Value {
    let g = p.graph();
    let measures: Vec<Value> = p
        .measures()
        .iter()
        .map(|(w, m)| json!({"weight": round_sig(*w), "measure": graph_measure_to_json(g, m)}))
        .collect();
    json!({"graph": graph_to_json(g), "measures": measures, "grid": round_sig(p.grid())})
}

pub fn report_to_json(g: &MetricGraph, r: &RegularityReport) -> Value {
    let cell = |c: &crate::barycenter::CellMass| json!({"edge": g.edge(c.edge).id, "a": round_sig(c.a), "b": round_sig(c.b), "mass": round_sig(c.mass)});
    json!({
        "verdict": r.verdict.name(),
        "atom_tol": round_sig(r.atom_tol),
        "atomless_weight": round_sig(r.atomless_weight),
        "max_interior_density": round_sig(r.max_interior_density),
        "interior_atoms": r.interior_atoms.iter().map(cell).collect::<Vec<_>>(),
        "vertex_masses": r
            .vertex_masses
            .iter()
            .map(|(v, w)| json!({"vertex": g.vertex_name(*v), "mass": round_sig(*w)}))
            .collect::<Vec<_>>(),
    })
}

/// Per-cell masses: `edge,a,b,mass,density`.
pub fn report_to_csv(g: &MetricGraph, r: &RegularityReport) -> String {
    let mut out = String::from("edge,a,b,mass,density\n");
    for c in &r.cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            g.edge(c.edge).id,
            round_sig(c.a),
            round_sig(c.b),
            round_sig(c.mass),
            round_sig(c.mass / (c.b - c.a))
        ));
    }
    out
}
