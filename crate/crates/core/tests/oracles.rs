//! Cross-checks against independent brute-force computations.

use mgbary_core::barycenter::{candidate_support, objective_with, solve_lp_on_support, BarycenterProblem};
use mgbary_core::branched_cover::{
    exceptional_values, h_eval, lift_line_plan, phi_decomposed, preimage_count, BranchTag, CoverContext,
};
use mgbary_core::exec::ExecMode;
use mgbary_core::line_ot::LinePlan;
use mgbary_core::metric_graph::fixtures::*;
use mgbary_core::metric_graph::{GraphPoint, MetricGraph, OrientedEdge};
use mgbary_core::ot_core::{squared_distance_matrix, w2_graph, w2_graph_with, DiscreteMeasure, GraphMeasure};
use mgbary_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn point(g: &MetricGraph, r: &mut ChaCha8Rng) -> GraphPoint {
    let edge = r.random_range(0..g.edge_count());
    let k = r.random_range(0..=32u32);
    g.edge_point(edge, g.edge(edge).length * f64::from(k) / 32.0).unwrap()
}

fn vertex_distances(g: &MetricGraph) -> Vec<Vec<f64>> {
    let n = g.vertex_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in g.edges() {
        d[e.u][e.v] = d[e.u][e.v].min(e.length);
        d[e.v][e.u] = d[e.v][e.u].min(e.length);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }
        }
    }
    d
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn graph_w2_matches_best_permutation() {
    // equal-weight measures with n atoms: some optimal plan is a permutation
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for g in [triangle(), tripod(), square_with_chord(), pentagon()] {
        for _ in 0..40 {
            let n = r.random_range(1..=6);
            let xs: Vec<GraphPoint> = (0..n).map(|_| point(&g, &mut r)).collect();
            let ys: Vec<GraphPoint> = (0..n).map(|_| point(&g, &mut r)).collect();
            let w = 1.0 / n as f64;
            let a = DiscreteMeasure::normalized(xs.iter().map(|&p| (p, w)).collect()).unwrap();
            let b = DiscreteMeasure::normalized(ys.iter().map(|&p| (p, w)).collect()).unwrap();
            let brute = permutations(n)
                .iter()
                .map(|perm| perm.iter().enumerate().map(|(i, &j)| w * g.distance(&xs[i], &ys[j]).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            let (cost, plan) = w2_graph(&g, &a, &b).unwrap();
            assert!((cost - brute).abs() < 1e-9, "{cost} vs {brute}");
            assert!(plan.marginal_residual(&a, &b) < 1e-10);
        }
    }
}

/// Counts solutions of `h(y) = level` on one edge by sign changes of the
/// sampled distance profile from `anchor`.
fn sampled_crossings(g: &MetricGraph, d: &[Vec<f64>], anchor: usize, edge: usize, r: f64) -> usize {
    let e = g.edge(edge);
    let samples = 4000;
    let at = |t: f64| (t + d[anchor][e.u]).min(e.length - t + d[anchor][e.v]) - r;
    // levels near vertex images are skipped by the caller, so no crossing
    // sits at an edge end
    let mut count = 0;
    let mut prev = at(0.0);
    for k in 1..=samples {
        let cur = at(e.length * k as f64 / samples as f64);
        if (prev < 0.0) != (cur < 0.0) {
            count += 1;
        }
        prev = cur;
    }
    count
}

#[test]
fn preimage_count_matches_sampling() {
    let mut r = ChaCha8Rng::seed_from_u64(12);
    for g in [triangle(), tripod(), square_with_chord(), pentagon()] {
        let d = vertex_distances(&g);
        for edge in 0..g.edge_count() {
            for e in [OrientedEdge::forward(edge), OrientedEdge::backward(edge)] {
                let base = DiscreteMeasure::dirac(e.point_at(&g, 0.0).unwrap());
                let ctx = CoverContext::new(&g, e, base).unwrap();
                for tag in [BranchTag::Plus, BranchTag::Minus] {
                    let anchor = if tag == BranchTag::Plus { e.head(&g) } else { e.tail(&g) };
                    let bad = exceptional_values(&ctx, tag);
                    for _ in 0..25 {
                        let radius: f64 = r.random_range(0.01..3.5);
                        let level = if tag == BranchTag::Plus { e.length(&g) + radius } else { -radius };
                        if bad.iter().any(|v| (v - level).abs() < 1e-3) {
                            continue;
                        }
                        let want: usize = (0..g.edge_count())
                            .filter(|&f| f != edge)
                            .map(|f| sampled_crossings(&g, &d, anchor, f, radius))
                            .sum();
                        assert_eq!(preimage_count(&ctx, tag, level).unwrap(), want, "{tag:?} level {level} on {edge}");
                    }
                }
            }
        }
    }
}

#[test]
fn exceptional_levels_are_rejected() {
    let g = square_with_chord();
    let e = OrientedEdge::forward(0);
    let ctx = CoverContext::new(&g, e, DiscreteMeasure::dirac(e.point_at(&g, 0.5).unwrap())).unwrap();
    for tag in BranchTag::ALL {
        for v in exceptional_values(&ctx, tag) {
            assert!(matches!(preimage_count(&ctx, tag, v), Err(Error::Exceptional(_))));
        }
    }
}

#[test]
fn lifted_class_plans_reproduce_the_classified_plan() {
    let mut r = ChaCha8Rng::seed_from_u64(13);
    for g in [triangle(), tripod(), square_with_chord()] {
        for _ in 0..40 {
            let edge = r.random_range(0..g.edge_count());
            let e = if r.random_bool(0.5) { OrientedEdge::forward(edge) } else { OrientedEdge::backward(edge) };
            let base = DiscreteMeasure::normalized(
                (0..r.random_range(1..=4))
                    .map(|_| (e.point_at(&g, e.length(&g) * f64::from(r.random_range(0..=8u32)) / 8.0).unwrap(), 1.0))
                    .collect(),
            )
            .unwrap();
            let nu =
                DiscreteMeasure::normalized((0..r.random_range(1..=6)).map(|_| (point(&g, &mut r), 1.0)).collect())
                    .unwrap();
            let ctx = CoverContext::new(&g, e, base).unwrap();
            let out = phi_decomposed(&ctx, &nu, ExecMode::Sequential).unwrap();
            let mut total = 0.0;
            for tag in BranchTag::ALL {
                let part = out.parts.part(tag);
                let theta = LinePlan {
                    entries: part
                        .entries
                        .iter()
                        .map(|en| (e.offset_along(&g, &en.source).unwrap(), h_eval(&ctx, tag, &en.target), en.mass))
                        .collect(),
                };
                let lifted = lift_line_plan(&ctx, tag, &theta, &out.class_part(tag)).unwrap();
                assert!((lifted.mass() - part.mass()).abs() < 1e-12);
                // along a geodesic family the line cost is the graph cost
                let graph_cost: f64 = lifted
                    .entries
                    .iter()
                    .map(|(x, y, m)| m * g.distance(&e.point_at(&g, *x).unwrap(), y).powi(2))
                    .sum();
                assert!((graph_cost - theta.cost()).abs() < 1e-9, "{tag:?}: {graph_cost} vs {}", theta.cost());
                let projected = lifted.project(&ctx, tag);
                assert!((projected.cost() - theta.cost()).abs() < 1e-12);
                total += graph_cost;
            }
            assert!((total - out.cost).abs() < 1e-9);
        }
    }
}

#[test]
fn parallel_and_sequential_agree() {
    let mut r = ChaCha8Rng::seed_from_u64(14);
    let g = square_with_chord();
    let xs: Vec<GraphPoint> = (0..40).map(|_| point(&g, &mut r)).collect();
    let ys: Vec<GraphPoint> = (0..30).map(|_| point(&g, &mut r)).collect();
    assert_eq!(
        squared_distance_matrix(&g, &xs, &ys, ExecMode::Sequential),
        squared_distance_matrix(&g, &xs, &ys, ExecMode::Parallel)
    );
    let a = DiscreteMeasure::normalized(xs.iter().map(|&p| (p, 1.0)).collect()).unwrap();
    let b = DiscreteMeasure::normalized(ys.iter().map(|&p| (p, 1.0)).collect()).unwrap();
    let s = w2_graph_with(&g, &a, &b, ExecMode::Sequential).unwrap();
    let p = w2_graph_with(&g, &a, &b, ExecMode::Parallel).unwrap();
    assert_eq!(s.0, p.0);
    assert_eq!(s.1, p.1);

    let inputs = (0..3).map(|i| (1.0 / 3.0, GraphMeasure::uniform_on_edge(&g, i, 0.25, 0.75).unwrap())).collect();
    let problem = BarycenterProblem::new(g.clone(), inputs, 0.125).unwrap();
    assert_eq!(
        objective_with(&problem, &a, ExecMode::Sequential).unwrap(),
        objective_with(&problem, &a, ExecMode::Parallel).unwrap()
    );
    let cand = candidate_support(&problem);
    let ls = solve_lp_on_support(&problem, &cand, 1_000_000, ExecMode::Sequential).unwrap();
    let lp = solve_lp_on_support(&problem, &cand, 1_000_000, ExecMode::Parallel).unwrap();
    assert_eq!(ls.mu, lp.mu);
    assert_eq!(ls.objective, lp.objective);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w2_graph_is_a_metric_on_small_measures(
        seed in any::<u64>(),
    ) {
        let g = square_with_chord();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut m = || DiscreteMeasure::normalized(
            (0..r.random_range(1..=4)).map(|_| (point(&g, &mut r), f64::from(r.random_range(1..=5u32)))).collect()
        ).unwrap();
        let (a, b, c) = (m(), m(), m());
        let d = |x: &DiscreteMeasure, y: &DiscreteMeasure| w2_graph(&g, x, y).unwrap().0.max(0.0).sqrt();
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-9);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
        prop_assert!(d(&a, &a) < 1e-9);
    }
}
