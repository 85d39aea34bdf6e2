//! Exact solver for the balanced transportation problem.
//!
//! Primal simplex on the transportation tableau: a spanning-tree basis of
//! `n + m - 1` cells, dual potentials from the tree, Dantzig pricing with a
//! switch to Bland's rule while the objective stalls, so the run cannot
//! cycle on degenerate instances. Pivot choices depend only on the input,
//! which makes the returned plan deterministic.

use std::collections::VecDeque;

use crate::{Error, Result, MARGINAL_TOL};

/// Consecutive degenerate pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    /// `(row, column, flow)` with positive flow, in row-major order.
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

struct Basis {
    rows: usize,
    cols: usize,
    // cells in the basis with their flow; a cell is (row, col)
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    // adjacency over the bipartite tree: node ids rows then cols
    adj: Vec<Vec<usize>>,
}

impl Basis {
    fn node_col(&self, j: usize) -> usize {
        self.rows + j
    }

    fn rebuild_adjacency(&mut self) {
        for a in &mut self.adj {
            a.clear();
        }
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            let cj = self.node_col(j);
            self.adj[i].push(k);
            self.adj[cj].push(k);
        }
    }

    fn other_end(&self, k: usize, node: usize) -> usize {
        let (i, j) = self.cells[k];
        if node == i {
            self.node_col(j)
        } else {
            i
        }
    }

    /// Potentials with `u_0 = 0` and `u_i + v_j = c_ij` on basic cells.
    fn potentials(&self, cost: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.rows + self.cols;
        let mut pot = vec![f64::NAN; n];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0]);
        while let Some(node) = queue.pop_front() {
            for &k in &self.adj[node] {
                let next = self.other_end(k, node);
                if pot[next].is_nan() {
                    let (i, j) = self.cells[k];
                    pot[next] = cost[i * self.cols + j] - pot[node];
                    queue.push_back(next);
                }
            }
        }
        let v = pot.split_off(self.rows);
        (pot, v)
    }

    /// Basis cells on the tree path from row `i` to column `j`, in order.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let n = self.rows + self.cols;
        let mut via = vec![usize::MAX; n];
        let start = i;
        let target = self.node_col(j);
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &k in &self.adj[node] {
                let next = self.other_end(k, node);
                if !seen[next] {
                    seen[next] = true;
                    via[next] = k;
                    queue.push_back(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = target;
        while node != start {
            let k = via[node];
            cells.push(k);
            node = self.other_end(k, node);
        }
        // cells now run from the column end back towards row i
        cells
    }
}

/// North-west corner rule: a feasible tree basis with exactly `n + m - 1` cells.
fn northwest_corner(supply: &[f64], demand: &[f64]) -> (Vec<(usize, usize)>, Vec<f64>) {
    let (n, m) = (supply.len(), demand.len());
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let mut cells = Vec::with_capacity(n + m - 1);
    let mut flow = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let q = s[i].min(d[j]);
        cells.push((i, j));
        flow.push(q);
        s[i] -= q;
        d[j] -= q;
        if i == n - 1 && j == m - 1 {
            break;
        }
        // move down when the row is used up, unless only columns remain
        if j == m - 1 || (i < n - 1 && s[i] <= d[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }
    (cells, flow)
}

/// Minimizes `sum c_ij x_ij` subject to row sums `supply` and column sums
/// `demand`. `cost` is row-major `supply.len() x demand.len()`.
///
/// Totals must agree within [`MARGINAL_TOL`]; the demand is rescaled to the
/// supply total before solving.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportSolution> {
    let (n, m) = (supply.len(), demand.len());
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("empty transport marginal".into()));
    }
    if cost.len() != n * m {
        return Err(Error::InvalidArgument("cost matrix has the wrong size".into()));
    }
    if supply.iter().chain(demand).any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidArgument("marginals must be finite and nonnegative".into()));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("costs must be finite".into()));
    }
    let ts: f64 = supply.iter().sum();
    let td: f64 = demand.iter().sum();
    if (ts - td).abs() > MARGINAL_TOL {
        return Err(Error::InvalidArgument(format!("unbalanced marginals: {ts} vs {td}")));
    }
    let demand: Vec<f64> = demand.iter().map(|d| d * ts / td).collect();

    let (cells, flow) = northwest_corner(supply, &demand);
    let mut basis = Basis { rows: n, cols: m, cells, flow, adj: vec![Vec::new(); n + m] };
    basis.rebuild_adjacency();

    let scale = cost.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1.0);
    let eps = 1e-12 * scale;
    let mut in_basis = vec![false; n * m];
    for &(i, j) in &basis.cells {
        in_basis[i * m + j] = true;
    }
    let max_iter = 50 * (n + m) * (n + m) + 1000;
    let mut stalled = 0usize;
    let mut iter = 0usize;
    loop {
        iter += 1;
        if iter > max_iter {
            return Err(Error::Solver(format!("transport simplex exceeded {max_iter} pivots")));
        }
        let (u, v) = basis.potentials(cost);
        let bland = stalled >= STALL_LIMIT;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -eps;
        'scan: for i in 0..n {
            for j in 0..m {
                if in_basis[i * m + j] {
                    continue;
                }
                let reduced = cost[i * m + j] - u[i] - v[j];
                if reduced < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = reduced;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };

        // cycle: entering cell (+), then the path from column ej back to
        // row ei alternating -, +, -, ...
        let path = basis.path(ei, ej);
        let mut leave = usize::MAX;
        let mut theta = f64::INFINITY;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let f = basis.flow[k];
                let (ci, cj) = basis.cells[k];
                let better = f < theta || (f == theta && (ci, cj) < basis.cells[leave]);
                if better {
                    theta = f;
                    leave = k;
                }
            }
        }
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis.flow[k] -= theta;
            } else {
                basis.flow[k] += theta;
            }
        }
        stalled = if theta > 0.0 { 0 } else { stalled + 1 };
        let (li, lj) = basis.cells[leave];
        in_basis[li * m + lj] = false;
        in_basis[ei * m + ej] = true;
        basis.cells[leave] = (ei, ej);
        basis.flow[leave] = theta;
        basis.rebuild_adjacency();
    }

    let mut flows: Vec<(usize, usize, f64)> =
        basis.cells.iter().zip(&basis.flow).filter(|(_, &f)| f > 1e-15).map(|(&(i, j), &f)| (i, j, f)).collect();
    flows.sort_by_key(|f| (f.0, f.1));

    let mut row = vec![0.0; n];
    let mut col = vec![0.0; m];
    for &(i, j, f) in &flows {
        row[i] += f;
        col[j] += f;
    }
    let residual =
        row.iter().zip(supply).chain(col.iter().zip(&demand)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if residual > MARGINAL_TOL {
        return Err(Error::Internal(format!("transport marginal residual {residual:e}")));
    }
    let cost_value = flows.iter().map(|&(i, j, f)| f * cost[i * m + j]).sum();
    Ok(TransportSolution { flows, cost: cost_value })
}
