//! Exact balanced transport on a dense bipartite graph via the
//! transportation simplex. Sized for desk-scale instances (up to a few
//! hundred atoms per side); returns primal flows and dual potentials.

use crate::error::{Error, Result};

#[derive(Debug)]
pub(crate) struct TransportSolution {
    /// Row-major `m x n` flow matrix.
    pub flow: Vec<f64>,
    /// Row potentials.
    pub u: Vec<f64>,
    /// Column potentials.
    pub v: Vec<f64>,
    pub objective: f64,
}

/// Solves `min sum c_ij f_ij` over `f >= 0` with row sums `supply` and
/// column sums `demand`. Requires strictly positive marginals with equal
/// totals (the caller rescales).
pub(crate) fn solve_transport(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
) -> Result<TransportSolution> {
    let m = supply.len();
    let n = demand.len();
    debug_assert_eq!(cost.len(), m * n);
    let cost_scale = 1.0 + cost.iter().fold(0.0_f64, |acc, &c| acc.max(c.abs()));
    let tol = 1e-11 * cost_scale;

    let mut flow = vec![0.0; m * n];
    let mut basic = vec![false; m * n];

    // Northwest-corner initial basis: m + n - 1 cells forming a spanning
    // tree of the bipartite row/column graph.
    {
        let mut rs = supply.to_vec();
        let mut rd = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let q = rs[i].min(rd[j]);
            flow[i * n + j] = q;
            basic[i * n + j] = true;
            rs[i] -= q;
            rd[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if rs[i] <= rd[j] && i < m - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let max_pivots = 200 * (m + n) * (m + n) + 1000;
    let mut degenerate_streak = 0usize;
    let mut bland = false;

    for _pivot in 0..max_pivots {
        let (u, v) = compute_duals(m, n, &basic, cost)?;

        // Entering cell: most negative reduced cost (Bland's rule once a
        // degenerate streak suggests cycling).
        let mut entering: Option<(usize, usize)> = None;
        let mut best_rc = -tol;
        'scan: for i in 0..m {
            for j in 0..n {
                if basic[i * n + j] {
                    continue;
                }
                let rc = cost[i * n + j] - u[i] - v[j];
                if rc < best_rc {
                    best_rc = rc;
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                }
            }
        }
        let (ei, ej) = match entering {
            Some(cell) => cell,
            None => {
                let objective = flow
                    .iter()
                    .zip(cost)
                    .map(|(f, c)| f * c)
                    .sum();
                return Ok(TransportSolution { flow, u, v, objective });
            }
        };

        // The unique cycle created by the entering cell: node path from
        // column ej back to row ei through the basis tree.
        let path = tree_path(m, n, &basic, m + ej, ei)?;
        // Cells along the path alternate signs starting with "-".
        let mut minus_cells: Vec<(usize, usize)> = Vec::new();
        let mut plus_cells: Vec<(usize, usize)> = Vec::new();
        for (k, pair) in path.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            let (ri, cj) = if a < m { (a, b - m) } else { (b, a - m) };
            if k % 2 == 0 {
                minus_cells.push((ri, cj));
            } else {
                plus_cells.push((ri, cj));
            }
        }
        let mut theta = f64::INFINITY;
        let mut leaving = minus_cells[0];
        for &(ri, cj) in &minus_cells {
            let f = flow[ri * n + cj];
            if f < theta || (f == theta && (ri, cj) < leaving) {
                theta = f;
                leaving = (ri, cj);
            }
        }
        flow[ei * n + ej] += theta;
        for &(ri, cj) in &minus_cells {
            flow[ri * n + cj] -= theta;
            if flow[ri * n + cj] < 0.0 {
                flow[ri * n + cj] = 0.0;
            }
        }
        for &(ri, cj) in &plus_cells {
            flow[ri * n + cj] += theta;
        }
        basic[ei * n + ej] = true;
        basic[leaving.0 * n + leaving.1] = false;

        if theta <= 0.0 {
            degenerate_streak += 1;
            if degenerate_streak > 50 {
                bland = true;
            }
        } else {
            degenerate_streak = 0;
        }
    }

    let objective = flow.iter().zip(cost).map(|(f, c)| f * c).sum();
    Err(Error::NonConvergence {
        best: objective,
        iterations: max_pivots,
    })
}

/// Potentials from the basis tree: `u_i + v_j = c_ij` on basic cells,
/// anchored at `u_0 = 0`.
fn compute_duals(m: usize, n: usize, basic: &[bool], cost: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let total = m + n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); total];
    for i in 0..m {
        for j in 0..n {
            if basic[i * n + j] {
                adj[i].push(m + j);
                adj[m + j].push(i);
            }
        }
    }
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    let mut seen = vec![false; total];
    let mut stack = vec![0usize];
    u[0] = 0.0;
    seen[0] = true;
    while let Some(node) = stack.pop() {
        for &next in &adj[node] {
            if seen[next] {
                continue;
            }
            seen[next] = true;
            if next < m {
                u[next] = cost[next * n + (node - m)] - v[node - m];
            } else {
                v[next - m] = cost[node * n + (next - m)] - u[node];
            }
            stack.push(next);
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::NumericalInstability(
            "transport basis tree is disconnected".into(),
        ));
    }
    Ok((u, v))
}

/// Node path between `from` and `to` in the basis tree (nodes `0..m` are
/// rows, `m..m+n` columns).
fn tree_path(m: usize, n: usize, basic: &[bool], from: usize, to: usize) -> Result<Vec<usize>> {
    let total = m + n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); total];
    for i in 0..m {
        for j in 0..n {
            if basic[i * n + j] {
                adj[i].push(m + j);
                adj[m + j].push(i);
            }
        }
    }
    let mut parent = vec![usize::MAX; total];
    let mut seen = vec![false; total];
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(from);
    seen[from] = true;
    while let Some(node) = queue.pop_front() {
        if node == to {
            break;
        }
        for &next in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                parent[next] = node;
                queue.push_back(next);
            }
        }
    }
    if !seen[to] {
        return Err(Error::NumericalInstability(
            "transport basis tree lost connectivity".into(),
        ));
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = parent[cur];
        path.push(cur);
    }
    path.reverse();
    Ok(path)
}
