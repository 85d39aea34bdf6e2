//! `mgbary`: distances, transport plans and barycenters on metric graphs.
//!
//! Results go to stdout (or `--output`) as JSON. Failures print
//! `{"error": code, "detail": text}` to stderr and exit with status 1.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mgbary_core::barycenter::{
    regularity_report, solve_edge_fixed_point, solve_lp_with_cap, BarycenterProblem, FixedPointInit, FixedPointOptions,
    DEFAULT_SUPPORT_CAP,
};
use mgbary_core::branched_cover::{phi, CoverContext};
use mgbary_core::io::{
    discrete_measure_to_json, line_measure_to_json, load_graph, load_graph_measure, load_problem,
    parse_discrete_measure, read_json, report_to_csv, report_to_json, round_sig,
};
use mgbary_core::metric_graph::{MetricGraph, OrientedEdge};
use mgbary_core::ot_core::{discretize, w2_graph, DiscreteMeasure};
use mgbary_core::{Error, Result};
use serde_json::{json, Value};

/// Environment variable overriding the LP size guard.
const SUPPORT_CAP_VAR: &str = "MGBARY_SUPPORT_CAP";

#[derive(Parser, Debug)]
#[command(name = "mgbary", version, about = "Optimal transport and Wasserstein barycenters on metric graphs")]
struct Cli {
    /// Worker threads for the parallel loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a graph, measures on it, or a whole problem file.
    Validate {
        #[arg(long, required_unless_present = "problem")]
        graph: Option<PathBuf>,
        #[arg(long, requires = "graph")]
        measure: Vec<PathBuf>,
        #[arg(long, conflicts_with = "graph")]
        problem: Option<PathBuf>,
    },
    /// Distance between two points, e.g. `v:A` or `e_BC:0.5`.
    Dist {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
    /// Quadratic Wasserstein distance and an optimal plan.
    W2 {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        to: PathBuf,
        /// Cell width used to discretize densities.
        #[arg(long, default_value_t = 0.01)]
        grid: f64,
    },
    /// Unfold a measure onto the line around an oriented edge.
    Phi {
        #[arg(long)]
        graph: PathBuf,
        /// Edge id; oriented from its `u` end unless `--reverse`.
        #[arg(long)]
        edge: String,
        #[arg(long)]
        reverse: bool,
        /// Base measure, supported on the edge.
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        grid: f64,
    },
    /// Barycenter of the measures in a problem file.
    Bary {
        #[arg(long)]
        problem: PathBuf,
        /// Overrides the problem's grid spacing.
        #[arg(long)]
        grid: Option<f64>,
        #[arg(long, value_enum, default_value_t = Method::Lp)]
        method: Method,
        /// Edge for the fixed-point method.
        #[arg(long, required_if_eq("method", "fixed-point"))]
        edge: Option<String>,
        #[arg(long)]
        reverse: bool,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        #[arg(long, value_enum, default_value_t = Init::Uniform)]
        init: Init,
    },
    /// Regularity report of a barycenter (the LP one unless `--measure`).
    Report {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        grid: Option<f64>,
        /// A computed barycenter to inspect instead of solving the LP.
        #[arg(long)]
        measure: Option<PathBuf>,
        #[arg(long)]
        atom_tol: Option<f64>,
        /// Also write per-cell masses as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Lp,
    FixedPoint,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Init {
    Uniform,
    Tail,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("invalid-argument", e.to_string().trim_end()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.code(), &e.to_string()),
    }
}

fn fail(code: &str, detail: &str) -> ExitCode {
    eprintln!("{}", json!({"error": code, "detail": detail}));
    ExitCode::FAILURE
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        set_threads(n)?;
    }
    let out = match cli.command {
        Command::Validate { graph, measure, problem } => validate(graph, &measure, problem)?,
        Command::Dist { graph, from, to } => {
            let g = load_graph(&graph)?;
            let (x, y) = (g.parse_point(&from)?, g.parse_point(&to)?);
            json!(round_sig(g.distance(&x, &y)))
        }
        Command::W2 { graph, from, to, grid } => {
            let g = load_graph(&graph)?;
            let a = load_discrete(&g, &from, grid)?;
            let b = load_discrete(&g, &to, grid)?;
            let (cost, plan) = w2_graph(&g, &a, &b)?;
            let entries: Vec<Value> = plan
                .entries
                .iter()
                .map(|e| {
                    json!({"source": g.format_point(&e.source), "target": g.format_point(&e.target), "mass": round_sig(e.mass)})
                })
                .collect();
            json!({"w2": round_sig(cost.max(0.0).sqrt()), "cost": round_sig(cost), "plan": entries})
        }
        Command::Phi { graph, edge, reverse, base, measure, grid } => {
            let g = load_graph(&graph)?;
            let e = oriented(&g, &edge, reverse)?;
            let ctx = CoverContext::new(&g, e, load_discrete(&g, &base, grid)?)?;
            line_measure_to_json(&phi(&ctx, &load_discrete(&g, &measure, grid)?)?)
        }
        Command::Bary { problem, grid, method, edge, reverse, eps, max_iter, init } => {
            let p = load_problem(&problem, grid)?;
            match method {
                Method::Lp => {
                    let sol = solve_lp_with_cap(&p, support_cap()?)?;
                    json!({
                        "method": "lp",
                        "grid": round_sig(p.grid()),
                        "objective": round_sig(sol.objective),
                        "candidates": sol.candidates,
                        "variables": sol.variables,
                        "measure": discrete_measure_to_json(p.graph(), &sol.mu),
                    })
                }
                Method::FixedPoint => {
                    let edge = edge.expect("clap requires --edge for the fixed-point method");
                    let e = oriented(p.graph(), &edge, reverse)?;
                    let init = match init {
                        Init::Uniform => FixedPointInit::Uniform,
                        Init::Tail => FixedPointInit::TailDirac,
                    };
                    let opts = FixedPointOptions { max_iter, eps, init, ..FixedPointOptions::default() };
                    let res = solve_edge_fixed_point(&p, e, &opts)?;
                    json!({
                        "method": "fixed-point",
                        "edge": edge,
                        "reverse": reverse,
                        "grid": round_sig(p.grid()),
                        "objective": round_sig(res.objective),
                        "iterations": res.iterations,
                        "converged": res.converged,
                        "measure": discrete_measure_to_json(p.graph(), &res.mu),
                    })
                }
            }
        }
        Command::Report { problem, grid, measure, atom_tol, csv } => {
            let p = load_problem(&problem, grid)?;
            let mu = match measure {
                Some(path) => barycenter_file(&p, &path)?,
                None => solve_lp_with_cap(&p, support_cap()?)?.mu,
            };
            let report = regularity_report(&p, &mu, atom_tol);
            if let Some(path) = csv {
                write_file(&path, &report_to_csv(p.graph(), &report))?;
            }
            report_to_json(p.graph(), &report)
        }
    };
    let text = serde_json::to_string_pretty(&out).expect("JSON values serialize") + "\n";
    match cli.output {
        Some(path) => write_file(&path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn validate(graph: Option<PathBuf>, measures: &[PathBuf], problem: Option<PathBuf>) -> Result<Value> {
    let (g, count) = match problem {
        Some(path) => {
            let p = load_problem(&path, None)?;
            let n = p.measures().len();
            (p.graph().clone(), n)
        }
        None => {
            let g = load_graph(graph.as_deref().expect("clap requires --graph without --problem"))?;
            for path in measures {
                load_graph_measure(&g, path)?;
            }
            (g, measures.len())
        }
    };
    let non_minimizing: Vec<&str> =
        (0..g.edge_count()).filter(|&e| !g.is_edge_minimizing(e)).map(|e| g.edge(e).id.as_str()).collect();
    Ok(json!({
        "valid": true,
        "vertices": g.vertex_count(),
        "edges": g.edge_count(),
        "measures": count,
        "non_minimizing_edges": non_minimizing,
    }))
}

fn oriented(g: &MetricGraph, id: &str, reverse: bool) -> Result<OrientedEdge> {
    let e = g.edge_index(id).ok_or_else(|| Error::InvalidArgument(format!("unknown edge `{id}`")))?;
    Ok(if reverse { OrientedEdge::backward(e) } else { OrientedEdge::forward(e) })
}

fn load_discrete(g: &MetricGraph, path: &Path, grid: f64) -> Result<DiscreteMeasure> {
    discretize(g, &load_graph_measure(g, path)?, grid)
}

/// A barycenter file is either a bare measure or the output of `bary`.
fn barycenter_file(p: &BarycenterProblem, path: &Path) -> Result<DiscreteMeasure> {
    let v = read_json(path)?;
    let m = v.get("measure").unwrap_or(&v);
    parse_discrete_measure(p.graph(), m)
}

fn support_cap() -> Result<usize> {
    match std::env::var(SUPPORT_CAP_VAR) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{SUPPORT_CAP_VAR} must be a positive integer, got `{s}`"))),
        Err(_) => Ok(DEFAULT_SUPPORT_CAP),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::FileNotFound { path: path.display().to_string(), reason: e.to_string() })
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("cannot size the thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_: usize) -> Result<()> {
    // sequential build: nothing to size
    Ok(())
}
