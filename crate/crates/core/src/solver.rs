//! Convex semi-coupling solver for 2-homogeneous unbalanced-transport
//! costs, specialized to the Hellinger-Kantorovich distance and the
//! marginal Hellinger-Wasserstein cost, with a brute-force grid oracle for
//! tiny instances.
//!
//! For atomic marginals the optimization runs over pairs of nonnegative
//! matrices `(a, b)` indexed by the support product: `a`'s rows sum to the
//! first measure's masses, `b`'s columns to the second's, and the objective
//! is the sum of a per-pair convexified cost `cost(a_ij, b_ij, d_ij)` in
//! mass coordinates. The solver alternates exact row-wise minimization in
//! `a` and column-wise minimization in `b` on a smoothed objective (the
//! square roots are replaced by `sqrt(. + eps)` with `eps` annealed), then
//! finishes with a projected-gradient polish on the exact objective.
//!
//! Each solve is single-threaded and self-contained; distinct solves may
//! run concurrently.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::space::FiniteMetricSpace;
use crate::VERTEX_EPS;

/// A per-pair cost in mass coordinates: `(a >= 0, b >= 0, d >= 0) -> cost`,
/// jointly convex and 1-homogeneous in `(a, b)` for each fixed `d`.
#[derive(Clone)]
pub struct PairCost {
    kind: PairKind,
}

#[derive(Clone)]
enum PairKind {
    Hk,
    Whe,
    Custom(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for PairCost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            PairKind::Hk => write!(f, "PairCost::hk"),
            PairKind::Whe => write!(f, "PairCost::whe"),
            PairKind::Custom(_) => write!(f, "PairCost::custom"),
        }
    }
}

impl PairCost {
    /// Hellinger-Kantorovich pair cost
    /// `a + b - 2 sqrt(a b) cos(d ∧ pi/2)`, the squared truncated cone
    /// distance between `[x0, sqrt(a)]` and `[x1, sqrt(b)]`.
    pub fn hk() -> Self {
        PairCost { kind: PairKind::Hk }
    }

    /// Marginal Hellinger-Wasserstein pair cost: the convex envelope
    /// `(sqrt(a) - sqrt(b))^2 + b d^2` when `b d^4 <= a`, and
    /// `a + b - a / d^2` otherwise (the second branch needs `d > 0`; at
    /// `d = 0` the condition is vacuous and the first branch applies).
    pub fn whe() -> Self {
        PairCost { kind: PairKind::Whe }
    }

    /// A user-supplied pair cost. The generic solver path uses projected
    /// gradients with numerical derivatives, so the evaluator should be
    /// smooth off the axes.
    pub fn custom(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        PairCost {
            kind: PairKind::Custom(Arc::new(f)),
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self.kind, PairKind::Custom(_))
    }

    /// Exact cost value.
    pub fn eval(&self, a: f64, b: f64, d: f64) -> f64 {
        match &self.kind {
            PairKind::Hk => a + b - 2.0 * (a * b).sqrt() * d.min(FRAC_PI_2).cos(),
            PairKind::Whe => {
                if d == 0.0 || b * d.powi(4) <= a {
                    let sa = a.sqrt();
                    let sb = b.sqrt();
                    (sa - sb) * (sa - sb) + b * d * d
                } else {
                    a + b - a / (d * d)
                }
            }
            PairKind::Custom(f) => f(a, b, d),
        }
    }

    /// Smoothed cost: square roots replaced by `sqrt(. + eps)`.
    fn eval_smoothed(&self, a: f64, b: f64, d: f64, eps: f64) -> f64 {
        match &self.kind {
            PairKind::Hk => a + b - 2.0 * (a * b + eps).sqrt() * d.min(FRAC_PI_2).cos(),
            PairKind::Whe => {
                if d == 0.0 || b * d.powi(4) <= a {
                    a + b - 2.0 * (a * b + eps).sqrt() + b * d * d
                } else {
                    a + b - a / (d * d)
                }
            }
            PairKind::Custom(f) => f(a, b, d),
        }
    }

    /// Subgradient of the exact cost (floored square roots near the axes).
    fn grad(&self, a: f64, b: f64, d: f64) -> (f64, f64) {
        const FLOOR: f64 = 1e-30;
        match &self.kind {
            PairKind::Hk => {
                let c = d.min(FRAC_PI_2).cos();
                let s = (a * b + FLOOR).sqrt();
                (1.0 - c * b / s, 1.0 - c * a / s)
            }
            PairKind::Whe => {
                if d == 0.0 || b * d.powi(4) <= a {
                    let s = (a * b + FLOOR).sqrt();
                    (1.0 - b / s, 1.0 + d * d - a / s)
                } else {
                    (1.0 - 1.0 / (d * d), 1.0)
                }
            }
            PairKind::Custom(f) => {
                let h = 1e-7 * (1.0 + a.abs() + b.abs());
                let ga = (f(a + h, b, d) - f((a - h).max(0.0), b, d))
                    / (a + h - (a - h).max(0.0));
                let gb = (f(a, b + h, d) - f(a, (b - h).max(0.0), d))
                    / (b + h - (b - h).max(0.0));
                (ga, gb)
            }
        }
    }
}

/// Options for [`solve_uot`].
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Target relative accuracy, recorded in reports.
    pub tol: f64,
    /// Sweep budget across all annealing stages.
    pub max_iter: usize,
    /// Smoothing levels for the annealed block-coordinate phase.
    pub epsilon_schedule: Vec<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-7,
            max_iter: 100_000,
            epsilon_schedule: vec![1e-4, 1e-6, 1e-8, 1e-10, 1e-12],
        }
    }
}

/// A semi-coupling: matrices `(a, b)` over support pairs. Row sums of `a`
/// reproduce the first marginal's masses, column sums of `b` the second's.
/// A `None` row or column stands for the cone vertex and carries zero mass
/// on its own side; it appears only when a marginal is null.
#[derive(Debug, Clone)]
pub struct SemiCoupling {
    pub rows: Vec<Option<usize>>,
    pub cols: Vec<Option<usize>>,
    /// Row-major `rows.len() x cols.len()`.
    pub a: Vec<f64>,
    /// Row-major `rows.len() x cols.len()`.
    pub b: Vec<f64>,
}

impl SemiCoupling {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    /// Largest violation of the marginal constraints.
    pub fn marginal_violation(&self, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> f64 {
        let (m, n) = self.shape();
        let mut worst = 0.0_f64;
        for (i, row) in self.rows.iter().enumerate() {
            let target = row.map_or(0.0, |x| mu0.mass_at(x));
            let sum: f64 = (0..n).map(|j| self.a[i * n + j]).sum();
            worst = worst.max((sum - target).abs());
        }
        for (j, col) in self.cols.iter().enumerate() {
            let target = col.map_or(0.0, |y| mu1.mass_at(y));
            let sum: f64 = (0..m).map(|i| self.b[i * n + j]).sum();
            worst = worst.max((sum - target).abs());
        }
        worst
    }
}

/// Result of [`solve_uot`].
#[derive(Debug, Clone)]
pub struct UotSolution {
    /// Exact objective at the returned feasible plan.
    pub value: f64,
    pub plan: SemiCoupling,
    /// Block-coordinate sweeps plus polish iterations consumed.
    pub sweeps: usize,
}

struct Instance {
    rows: Vec<Option<usize>>,
    cols: Vec<Option<usize>>,
    m0: Vec<f64>,
    m1: Vec<f64>,
    /// Base distances per support pair (0 against the vertex).
    dist: Vec<f64>,
    mass_scale: f64,
}

fn build_instance(
    space: &FiniteMetricSpace,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
) -> Result<Instance> {
    mu0.check_space(space)?;
    mu1.check_space(space)?;
    let mut rows: Vec<Option<usize>> = mu0.support().into_iter().map(Some).collect();
    let mut cols: Vec<Option<usize>> = mu1.support().into_iter().map(Some).collect();
    let mut m0: Vec<f64> = mu0.atoms().iter().map(|&(_, m)| m).collect();
    let mut m1: Vec<f64> = mu1.atoms().iter().map(|&(_, m)| m).collect();
    if rows.is_empty() && !cols.is_empty() {
        rows.push(None);
        m0.push(0.0);
    }
    if cols.is_empty() && !rows.is_empty() {
        cols.push(None);
        m1.push(0.0);
    }
    let dist = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .map(|(r, c)| match (r, c) {
            (Some(x), Some(y)) => space.dist(x, y),
            _ => 0.0,
        })
        .collect();
    let mass_scale = (mu0.total_mass() + mu1.total_mass()).max(VERTEX_EPS);
    Ok(Instance {
        rows,
        cols,
        m0,
        m1,
        dist,
        mass_scale,
    })
}

/// Minimizes `sum_ij cost(a_ij, b_ij, d_ij)` over semi-couplings of the
/// two measures. The returned value is the exact objective at the final
/// feasible plan; marginal feasibility is enforced within `1e-9`.
pub fn solve_uot(
    space: &FiniteMetricSpace,
    cost: &PairCost,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    opts: &SolveOptions,
) -> Result<UotSolution> {
    let inst = build_instance(space, mu0, mu1)?;
    if inst.rows.is_empty() && inst.cols.is_empty() {
        return Ok(UotSolution {
            value: 0.0,
            plan: SemiCoupling {
                rows: Vec::new(),
                cols: Vec::new(),
                a: Vec::new(),
                b: Vec::new(),
            },
            sweeps: 0,
        });
    }
    let (m, n) = (inst.rows.len(), inst.cols.len());

    // Deterministic product initialization; uniform rows/columns when the
    // opposite marginal is null.
    let t0: f64 = inst.m0.iter().sum();
    let t1: f64 = inst.m1.iter().sum();
    let mut a = vec![0.0; m * n];
    let mut b = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            a[i * n + j] = if t1 > 0.0 {
                inst.m0[i] * inst.m1[j] / t1
            } else {
                inst.m0[i] / n as f64
            };
            b[i * n + j] = if t0 > 0.0 {
                inst.m1[j] * inst.m0[i] / t0
            } else {
                inst.m1[j] / m as f64
            };
        }
    }

    let mut sweeps = 0usize;
    if !cost.is_custom() {
        // Annealed block-coordinate descent with exact row/column minima.
        // The schedule ends at eps = 0: there the exact block minima keep
        // every coupled cell strictly positive, so the descent cannot get
        // trapped on a face of the feasible polytope; re-mixing with the
        // product plan at each stage start reopens cells an earlier stage
        // may have zeroed.
        let scale2 = inst.mass_scale * inst.mass_scale;
        let init_a = a.clone();
        let init_b = b.clone();
        let schedule: Vec<f64> = opts
            .epsilon_schedule
            .iter()
            .map(|&e| e * scale2)
            .chain([0.0])
            .collect();
        for &eps in &schedule {
            const REMIX: f64 = 1e-2;
            for k in 0..m * n {
                a[k] = (1.0 - REMIX) * a[k] + REMIX * init_a[k];
                b[k] = (1.0 - REMIX) * b[k] + REMIX * init_b[k];
            }
            let mut prev = objective_smoothed(cost, &a, &b, &inst.dist, eps);
            let mut flat_streak = 0;
            loop {
                for i in 0..m {
                    minimize_row(cost, &mut a, &b, &inst.dist, i, n, inst.m0[i], eps);
                }
                for j in 0..n {
                    minimize_col(cost, &a, &mut b, &inst.dist, j, m, n, inst.m1[j], eps);
                }
                sweeps += 1;
                let cur = objective_smoothed(cost, &a, &b, &inst.dist, eps);
                let rel = (prev - cur).abs() / (1.0 + cur.abs());
                prev = cur;
                if rel < 1e-12 {
                    flat_streak += 1;
                    if flat_streak >= 10 {
                        break;
                    }
                } else {
                    flat_streak = 0;
                }
                if sweeps >= opts.max_iter {
                    let value = objective_exact(cost, &a, &b, &inst.dist);
                    return Err(Error::NonConvergence {
                        best: value,
                        iterations: sweeps,
                    });
                }
            }
        }
    }

    // Projected-gradient polish on the exact objective.
    sweeps += polish(cost, &mut a, &mut b, &inst, opts);

    let value = objective_exact(cost, &a, &b, &inst.dist);
    let plan = SemiCoupling {
        rows: inst.rows,
        cols: inst.cols,
        a,
        b,
    };
    Ok(UotSolution { value, plan, sweeps })
}

fn objective_exact(cost: &PairCost, a: &[f64], b: &[f64], dist: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(dist)
        .map(|((&a, &b), &d)| cost.eval(a, b, d))
        .sum()
}

fn objective_smoothed(cost: &PairCost, a: &[f64], b: &[f64], dist: &[f64], eps: f64) -> f64 {
    a.iter()
        .zip(b)
        .zip(dist)
        .map(|((&a, &b), &d)| cost.eval_smoothed(a, b, d, eps))
        .sum()
}

/// Exact minimization of one row of `a` with `b` fixed: a separable convex
/// problem under `sum_j a_ij = target`, solved by bisection on the KKT
/// multiplier.
fn minimize_row(
    cost: &PairCost,
    a: &mut [f64],
    b: &[f64],
    dist: &[f64],
    i: usize,
    n: usize,
    target: f64,
    eps: f64,
) {
    let row = i * n;
    if target <= 0.0 {
        a[row..row + n].fill(0.0);
        return;
    }
    let inv = |j: usize, lam: f64| -> f64 {
        let bj = b[row + j];
        let d = dist[row + j];
        match cost.kind {
            PairKind::Hk => {
                let cb = d.min(FRAC_PI_2).cos() * bj;
                if cb <= 0.0 || lam >= 1.0 {
                    return if cb > 0.0 { f64::INFINITY } else { 0.0 };
                }
                let s = cb / (1.0 - lam);
                ((s * s - eps) / bj).max(0.0)
            }
            PairKind::Whe => {
                if bj <= 0.0 {
                    return 0.0;
                }
                if lam >= 1.0 {
                    return f64::INFINITY;
                }
                let s = bj / (1.0 - lam);
                let v = ((s * s - eps) / bj).max(0.0);
                if d == 0.0 {
                    v
                } else {
                    let sigma = 1.0 - 1.0 / (d * d);
                    if lam < sigma {
                        0.0
                    } else {
                        v.max(bj * d.powi(4))
                    }
                }
            }
            PairKind::Custom(_) => unreachable!("custom costs use the gradient path"),
        }
    };
    // Entries whose inverse grows without bound as the multiplier
    // approaches the slope ceiling.
    let unbounded: Vec<usize> = (0..n)
        .filter(|&j| {
            let bj = b[row + j];
            let d = dist[row + j];
            match cost.kind {
                PairKind::Hk => d.min(FRAC_PI_2).cos() * bj > 0.0,
                PairKind::Whe => bj > 0.0,
                PairKind::Custom(_) => false,
            }
        })
        .collect();
    if unbounded.is_empty() {
        // Flat objective in this row: distribute uniformly.
        let share = target / n as f64;
        a[row..row + n].fill(share);
        return;
    }
    let mut hi = f64::NEG_INFINITY;
    let mut coupling = 0.0;
    let mut sigma_min = f64::INFINITY;
    for &j in &unbounded {
        let bj = b[row + j];
        let d = dist[row + j];
        let entry_hi = match cost.kind {
            PairKind::Hk => {
                let cb = d.min(FRAC_PI_2).cos() * bj;
                coupling += cb * cb / bj;
                1.0 - cb / (target * bj + eps).sqrt()
            }
            PairKind::Whe => {
                coupling += bj;
                let lam_grow = 1.0 - bj / (target * bj + eps).sqrt();
                if d > 0.0 {
                    let sigma = 1.0 - 1.0 / (d * d);
                    sigma_min = sigma_min.min(sigma);
                    if bj * d.powi(4) >= target {
                        sigma
                    } else {
                        lam_grow
                    }
                } else {
                    lam_grow
                }
            }
            PairKind::Custom(_) => unreachable!(),
        };
        hi = hi.max(entry_hi);
    }
    // Below this multiplier every smooth inverse stays under the target
    // even with eps = 0.
    let lo = (1.0 - (coupling / target + 1.0).sqrt()).min(sigma_min) - 1.0;
    let out = waterfill(target, n, lo, hi, inv);
    a[row..row + n].copy_from_slice(&out);
}

/// Exact minimization of one column of `b` with `a` fixed.
fn minimize_col(
    cost: &PairCost,
    a: &[f64],
    b: &mut [f64],
    dist: &[f64],
    j: usize,
    m: usize,
    n: usize,
    target: f64,
    eps: f64,
) {
    if target <= 0.0 {
        for i in 0..m {
            b[i * n + j] = 0.0;
        }
        return;
    }
    let inv = |i: usize, lam: f64| -> f64 {
        let ai = a[i * n + j];
        let d = dist[i * n + j];
        match cost.kind {
            PairKind::Hk => {
                let ca = d.min(FRAC_PI_2).cos() * ai;
                if ca <= 0.0 || lam >= 1.0 {
                    return if ca > 0.0 { f64::INFINITY } else { 0.0 };
                }
                let s = ca / (1.0 - lam);
                ((s * s - eps) / ai).max(0.0)
            }
            PairKind::Whe => {
                if ai <= 0.0 {
                    return 0.0;
                }
                let g = 1.0 + d * d;
                if lam >= g {
                    return f64::INFINITY;
                }
                let s = ai / (g - lam);
                let v = ((s * s - eps) / ai).max(0.0);
                if d == 0.0 {
                    v
                } else {
                    v.min(ai / d.powi(4))
                }
            }
            PairKind::Custom(_) => unreachable!(),
        }
    };
    let mut caps = 0.0_f64;
    let mut hi = f64::NEG_INFINITY;
    let mut coupling = 0.0;
    let mut g_min = f64::INFINITY;
    let mut any_unbounded = false;
    for i in 0..m {
        let ai = a[i * n + j];
        let d = dist[i * n + j];
        match cost.kind {
            PairKind::Hk => {
                let ca = d.min(FRAC_PI_2).cos() * ai;
                if ca > 0.0 {
                    any_unbounded = true;
                    coupling += ca * ca / ai;
                    g_min = g_min.min(1.0);
                    hi = hi.max(1.0 - ca / (target * ai + eps).sqrt());
                }
            }
            PairKind::Whe => {
                if ai <= 0.0 {
                    continue;
                }
                coupling += ai;
                g_min = g_min.min(1.0 + d * d);
                if d == 0.0 {
                    any_unbounded = true;
                    hi = hi.max(1.0 - ai / (target * ai + eps).sqrt());
                } else {
                    caps += ai / d.powi(4);
                    // The entry reaches its cap strictly below slope 1.
                    hi = hi.max(1.0 - 1e-12);
                }
            }
            PairKind::Custom(_) => unreachable!(),
        }
    }
    if !any_unbounded && caps < target {
        // Beyond the per-entry caps the cost is linear with unit slope, so
        // any placement of the excess is optimal; spread it uniformly.
        let mut base: Vec<f64> = (0..m).map(|i| inv(i, 1.0 - 1e-12)).collect();
        let excess = target - base.iter().sum::<f64>();
        if excess > 0.0 {
            for v in base.iter_mut() {
                *v += excess / m as f64;
            }
        }
        for i in 0..m {
            b[i * n + j] = base[i];
        }
        return;
    }
    let lo = if g_min.is_finite() {
        g_min - (coupling / target + 1.0).sqrt() - 1.0
    } else {
        -1.0
    };
    let hi = if hi.is_finite() { hi } else { 1.0 - 1e-12 };
    let out = waterfill(target, m, lo, hi, inv);
    for i in 0..m {
        b[i * n + j] = out[i];
    }
}

/// Bisection on the KKT multiplier for a separable convex block with a
/// fixed-sum constraint. `inv(j, lambda)` must be nondecreasing in
/// `lambda` (jumps allowed); jump entries absorb the residual.
fn waterfill(
    target: f64,
    n: usize,
    mut lo: f64,
    mut hi: f64,
    inv: impl Fn(usize, f64) -> f64,
) -> Vec<f64> {
    let total = |lam: f64| -> f64 { (0..n).map(|j| inv(j, lam)).sum() };
    // Widen until the bracket is valid.
    let mut guard = 0;
    while total(lo) > target && guard < 200 {
        lo -= (hi - lo).abs().max(1.0);
        guard += 1;
    }
    while total(hi) < target && guard < 400 {
        hi += (hi - lo).abs().max(1e-6);
        guard += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let base: Vec<f64> = (0..n).map(|j| inv(j, lo)).collect();
    let upper: Vec<f64> = (0..n).map(|j| inv(j, hi)).collect();
    let mut out = base.clone();
    let mut deficit = target - out.iter().sum::<f64>();
    if deficit > 0.0 {
        // Fill jump entries (flat stretches of the block objective) in
        // index order; ties in value are immaterial for the objective.
        for j in 0..n {
            if deficit <= 0.0 {
                break;
            }
            let gap = (upper[j] - base[j]).max(0.0);
            let add = gap.min(deficit);
            out[j] += add;
            deficit -= add;
        }
    }
    // Exact-sum fixup on the largest entry.
    let sum: f64 = out.iter().sum();
    let residual = target - sum;
    if residual != 0.0 {
        if let Some(k) = (0..n).max_by(|&x, &y| out[x].total_cmp(&out[y])) {
            out[k] = (out[k] + residual).max(0.0);
        }
    }
    out
}

/// Projected-gradient descent on the exact objective; returns iterations
/// used.
fn polish(cost: &PairCost, a: &mut [f64], b: &mut [f64], inst: &Instance, opts: &SolveOptions) -> usize {
    let (m, n) = (inst.rows.len(), inst.cols.len());
    let mut cur = objective_exact(cost, a, b, &inst.dist);
    let mut step = 0.25 * inst.mass_scale;
    let mut flat_streak = 0;
    let max_polish = 4000.min(opts.max_iter);
    for it in 0..max_polish {
        let mut ga = vec![0.0; m * n];
        let mut gb = vec![0.0; m * n];
        for k in 0..m * n {
            let (da, db) = cost.grad(a[k], b[k], inst.dist[k]);
            ga[k] = da.clamp(-1e6, 1e6);
            gb[k] = db.clamp(-1e6, 1e6);
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut ta = vec![0.0; m * n];
            let mut tb = vec![0.0; m * n];
            for k in 0..m * n {
                ta[k] = a[k] - step * ga[k];
                tb[k] = b[k] - step * gb[k];
            }
            for i in 0..m {
                project_simplex(&mut ta[i * n..(i + 1) * n], inst.m0[i]);
            }
            for j in 0..n {
                let mut col: Vec<f64> = (0..m).map(|i| tb[i * n + j]).collect();
                project_simplex(&mut col, inst.m1[j]);
                for i in 0..m {
                    tb[i * n + j] = col[i];
                }
            }
            let trial = objective_exact(cost, &ta, &tb, &inst.dist);
            if trial < cur {
                a.copy_from_slice(&ta);
                b.copy_from_slice(&tb);
                let rel = (cur - trial) / (1.0 + trial.abs());
                cur = trial;
                improved = true;
                step *= 1.3;
                if rel < 1e-12 {
                    flat_streak += 1;
                } else {
                    flat_streak = 0;
                }
                break;
            }
            step *= 0.5;
        }
        if !improved || flat_streak >= 10 {
            return it + 1;
        }
    }
    max_polish
}

/// Euclidean projection onto the scaled simplex `{x >= 0, sum x = s}`.
fn project_simplex(x: &mut [f64], s: f64) {
    if x.is_empty() {
        return;
    }
    if s <= 0.0 {
        x.fill(0.0);
        return;
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|p, q| q.total_cmp(p));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    let mut k = 0;
    for (idx, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - s) / (idx + 1) as f64;
        if u - t > 0.0 {
            tau = t;
            k = idx + 1;
        }
    }
    debug_assert!(k > 0);
    for v in x.iter_mut() {
        *v = (*v - tau).max(0.0);
    }
    // Exact-sum fixup against projection rounding.
    let sum: f64 = x.iter().sum();
    let residual = s - sum;
    if residual != 0.0 {
        if let Some(kmax) = (0..x.len()).max_by(|&p, &q| x[p].total_cmp(&x[q])) {
            x[kmax] = (x[kmax] + residual).max(0.0);
        }
    }
}

/// Squared Hellinger-Kantorovich distance via [`solve_uot`] squared root.
///
/// `hk_distance` returns the distance itself; its square is the optimal
/// value of the semi-coupling program with the [`PairCost::hk`] cost.
pub fn hk_distance(
    space: &FiniteMetricSpace,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
) -> Result<f64> {
    let sol = solve_uot(space, &PairCost::hk(), mu0, mu1, &SolveOptions::default())?;
    Ok(sol.value.max(0.0).sqrt())
}

/// Result of [`whe_cost`].
#[derive(Debug, Clone)]
pub struct WheSolution {
    /// The optimal value `inf_nu He_2^2(mu0, nu) + W_2^2(nu, mu1)`.
    pub value: f64,
    pub plan: SemiCoupling,
    /// The interpolating measure reconstructed from the plan: it satisfies
    /// `He_2^2(mu0, nu_star) + W_2^2(nu_star, mu1) = value` at the optimum.
    pub nu_star: DiscreteMeasure,
}

/// The marginal Hellinger-Wasserstein cost between two measures, with the
/// optimal semi-coupling and the reconstructed interpolating measure.
///
/// Per support pair carrying masses `(a, b)` at base distance `d`, the
/// transported part of the interpolant is `s = min(b, a / d^4)` sitting at
/// the first marginal's point (all of `b` when `d = 0`), and the rest of
/// `b` stays put on the second marginal's point.
pub fn whe_cost(
    space: &FiniteMetricSpace,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
) -> Result<WheSolution> {
    let sol = solve_uot(space, &PairCost::whe(), mu0, mu1, &SolveOptions::default())?;
    let (m, n) = sol.plan.shape();
    let tiny = VERTEX_EPS * (1.0 + mu0.total_mass() + mu1.total_mass());
    let mut atoms: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let a = sol.plan.a[i * n + j];
            let b = sol.plan.b[i * n + j];
            if b <= 0.0 {
                continue;
            }
            let (Some(x), Some(y)) = (sol.plan.rows[i], sol.plan.cols[j]) else {
                if let Some(y) = sol.plan.cols[j] {
                    atoms.push((y, b));
                }
                continue;
            };
            let d = space.dist(x, y);
            let transported = if a <= tiny {
                0.0
            } else if d == 0.0 {
                b
            } else {
                b.min(a / d.powi(4))
            };
            if transported > 0.0 {
                atoms.push((x, transported));
            }
            if b - transported > 0.0 {
                atoms.push((y, b - transported));
            }
        }
    }
    let nu_star = DiscreteMeasure::new(space, &atoms)?;
    Ok(WheSolution {
        value: sol.value,
        plan: sol.plan,
        nu_star,
    })
}

/// Result of the brute-force oracle.
#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub value: f64,
    /// Largest objective change between the best lattice point and its
    /// neighbors at the final refinement level; a local modulus-of-
    /// continuity indicator for the reported minimum.
    pub local_modulus: f64,
}

/// Exhaustive zooming grid search over feasible semi-couplings for
/// supports of at most two atoms per side. `grid` is the number of lattice
/// points per free parameter and per refinement level (the total cell
/// count per level is capped at 10^6).
pub fn brute_force_uot(
    space: &FiniteMetricSpace,
    cost: &PairCost,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    grid: usize,
) -> Result<BruteForceResult> {
    let inst = build_instance(space, mu0, mu1)?;
    let (m, n) = (inst.rows.len(), inst.cols.len());
    if m == 0 && n == 0 {
        return Ok(BruteForceResult {
            value: 0.0,
            local_modulus: 0.0,
        });
    }
    if m > 2 || n > 2 {
        return Err(Error::SupportTooLarge(m, n));
    }
    if grid < 3 {
        return Err(Error::InvalidParameter(
            "grid resolution must be at least 3".into(),
        ));
    }
    // Free split fractions: one per row of `a` when there are two columns,
    // one per column of `b` when there are two rows.
    let row_free = n == 2;
    let col_free = m == 2;
    let k = if row_free { m } else { 0 } + if col_free { n } else { 0 };
    if k == 0 {
        // Everything pinned by the marginals.
        let mut value = 0.0;
        for i in 0..m {
            for j in 0..n {
                value += cost.eval(inst.m0[i], inst.m1[j], inst.dist[i * n + j]);
            }
        }
        return Ok(BruteForceResult {
            value,
            local_modulus: 0.0,
        });
    }
    if (grid as f64).powi(k as i32) > 1e6 {
        return Err(Error::InvalidParameter(format!(
            "grid resolution {grid}^{k} exceeds the 10^6 cell budget"
        )));
    }

    let evaluate = |t: &[f64]| -> f64 {
        let mut a = [[0.0_f64; 2]; 2];
        let mut b = [[0.0_f64; 2]; 2];
        let mut idx = 0;
        for i in 0..m {
            if row_free {
                a[i][0] = t[idx] * inst.m0[i];
                a[i][1] = (1.0 - t[idx]) * inst.m0[i];
                idx += 1;
            } else {
                a[i][0] = inst.m0[i];
            }
        }
        for j in 0..n {
            if col_free {
                b[0][j] = t[idx] * inst.m1[j];
                b[1][j] = (1.0 - t[idx]) * inst.m1[j];
                idx += 1;
            } else {
                b[0][j] = inst.m1[j];
            }
        }
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..n {
                total += cost.eval(a[i][j], b[i][j], inst.dist[i * n + j]);
            }
        }
        total
    };

    // Beam search over candidate windows. Two coverage hazards drive the
    // design: the convexified costs have square-root cusps against the
    // faces of the split simplex (the minimizer can sit in a dip of width
    // ~1e-2 that a uniform lattice never samples), and narrow valleys
    // along which a single zooming window loses the optimal basin. The
    // opening level therefore evaluates a uniform lattice augmented with
    // geometrically spaced points near both faces of every parameter, and
    // each later level re-expands the best few separated cells.
    const BEAM: usize = 8;
    let mut axis0: Vec<f64> = (0..17).map(|c| c as f64 / 16.0).collect();
    for e in [1e-5, 1e-4, 1e-3, 1e-2, 0.05] {
        axis0.push(e);
        axis0.push(1.0 - e);
    }
    axis0.sort_by(f64::total_cmp);
    let mut centers: Vec<Vec<f64>> = vec![vec![0.5; k]];
    let mut half_width = 0.5_f64;
    let mut best = f64::INFINITY;
    let mut best_t = vec![0.5; k];
    for level in 0..48 {
        let axis_len = if level == 0 { axis0.len() } else { grid };
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
        for center in &centers {
            let mut counter = vec![0usize; k];
            let mut t = vec![0.0; k];
            'cells: loop {
                for (dim, &c) in counter.iter().enumerate() {
                    t[dim] = if level == 0 {
                        axis0[c]
                    } else {
                        let lo = (center[dim] - half_width).max(0.0);
                        let hi = (center[dim] + half_width).min(1.0);
                        lo + (hi - lo) * c as f64 / (grid - 1) as f64
                    };
                }
                scored.push((evaluate(&t), t.clone()));
                for dim in 0..k {
                    counter[dim] += 1;
                    if counter[dim] < axis_len {
                        continue 'cells;
                    }
                    counter[dim] = 0;
                }
                break;
            }
        }
        scored.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1[0].total_cmp(&y.1[0])));
        if scored[0].0 < best {
            best = scored[0].0;
            best_t = scored[0].1.clone();
        }
        let next_width = if level == 0 {
            1.0 / 16.0
        } else {
            2.0 * half_width * 2.0 / (grid - 1) as f64
        };
        // A wide beam is only needed while the windows are coarse enough
        // to straddle distinct basins; cap it so a level stays inside the
        // cell budget at high requested resolutions.
        let beam_cap = ((1.2e6 / (grid as f64).powi(k as i32)) as usize).clamp(2, BEAM);
        let beam = if level < 3 || next_width > 1e-3 { beam_cap } else { 2 };
        let mut next: Vec<Vec<f64>> = Vec::new();
        for (_, t) in &scored {
            let separated = next.iter().all(|kept| {
                kept.iter()
                    .zip(t)
                    .any(|(a, b)| (a - b).abs() > next_width)
            });
            if separated {
                next.push(t.clone());
                if next.len() == beam {
                    break;
                }
            }
        }
        centers = next;
        half_width = next_width;
        if half_width < 1e-9 {
            break;
        }
    }
    // Multiscale pattern polish: geometric step sweeps along coordinates
    // and coordinate pairs (with independent deltas) chase the square-root
    // dips that sit between lattice points. Every surviving beam center is
    // polished: a runner-up basin can hide a dip the incumbent's cannot
    // reach by coordinate moves.
    const DELTAS: [f64; 14] = [
        0.25, 0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6, 1e-7, 1e-8,
    ];
    let polish_from = |start: &[f64]| -> (f64, Vec<f64>) {
        let mut cur_t = start.to_vec();
        let mut cur = evaluate(&cur_t);
        for _round in 0..100 {
            let mut improved = false;
            for dim in 0..k {
                for delta in DELTAS {
                    for sign in [-1.0, 1.0] {
                        let mut probe = cur_t.clone();
                        probe[dim] = (probe[dim] + sign * delta).clamp(0.0, 1.0);
                        let v = evaluate(&probe);
                        if v < cur {
                            cur = v;
                            cur_t = probe;
                            improved = true;
                        }
                    }
                }
            }
            for d0 in 0..k {
                for d1 in (d0 + 1)..k {
                    for delta0 in DELTAS {
                        for delta1 in DELTAS {
                            for signs in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                                let mut probe = cur_t.clone();
                                probe[d0] = (probe[d0] + signs.0 * delta0).clamp(0.0, 1.0);
                                probe[d1] = (probe[d1] + signs.1 * delta1).clamp(0.0, 1.0);
                                let v = evaluate(&probe);
                                if v < cur {
                                    cur = v;
                                    cur_t = probe;
                                    improved = true;
                                }
                            }
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        (cur, cur_t)
    };
    let mut starts: Vec<Vec<f64>> = vec![best_t.clone()];
    starts.extend(centers.iter().cloned());
    for start in starts {
        let (v, t) = polish_from(&start);
        if v < best {
            best = v;
            best_t = t;
        }
    }

    // Neighbor probe for the local modulus of continuity.
    let cell = (2.0 * half_width).max(1e-13);
    let mut local_modulus = 0.0_f64;
    for dim in 0..k {
        for sign in [-1.0, 1.0] {
            let mut probe = best_t.clone();
            probe[dim] = (probe[dim] + sign * cell).clamp(0.0, 1.0);
            local_modulus = local_modulus.max((evaluate(&probe) - best).abs());
        }
    }
    Ok(BruteForceResult {
        value: best,
        local_modulus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn segment(d: f64) -> FiniteMetricSpace {
        FiniteMetricSpace::build_euclidean(vec![vec![0.0], vec![d]]).unwrap()
    }

    fn hk_dirac_sq(m0: f64, m1: f64, d: f64) -> f64 {
        m0 + m1 - 2.0 * (m0 * m1).sqrt() * d.min(FRAC_PI_2).cos()
    }

    #[test]
    fn identical_measures_have_zero_cost() {
        let s = segment(1.0);
        let mu = DiscreteMeasure::new(&s, &[(0, 1.0), (1, 0.5)]).unwrap();
        for cost in [PairCost::hk(), PairCost::whe()] {
            let sol = solve_uot(&s, &cost, &mu, &mu, &SolveOptions::default()).unwrap();
            assert!(sol.value.abs() < 1e-10, "{cost:?}: {}", sol.value);
            assert!(sol.plan.marginal_violation(&mu, &mu) < 1e-9);
        }
    }

    #[test]
    fn null_right_marginal_costs_total_mass() {
        let s = segment(1.0);
        let mu = DiscreteMeasure::new(&s, &[(0, 1.0), (1, 0.5)]).unwrap();
        let null = DiscreteMeasure::null(&s);
        for cost in [PairCost::hk(), PairCost::whe()] {
            let sol = solve_uot(&s, &cost, &mu, &null, &SolveOptions::default()).unwrap();
            assert!((sol.value - 1.5).abs() < 1e-10);
        }
    }

    #[test]
    fn hk_diracs_right_angle() {
        let s = segment(FRAC_PI_2);
        let mu0 = DiscreteMeasure::dirac(&s, 0, 1.0).unwrap();
        let mu1 = DiscreteMeasure::dirac(&s, 1, 1.0).unwrap();
        let sol = solve_uot(&s, &PairCost::hk(), &mu0, &mu1, &SolveOptions::default()).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hk_same_point_masses() {
        // HK^2(1 delta_x, 4 delta_x) = (1 - 2)^2 = 1.
        let s = segment(1.0);
        let mu0 = DiscreteMeasure::dirac(&s, 0, 1.0).unwrap();
        let mu1 = DiscreteMeasure::dirac(&s, 0, 4.0).unwrap();
        let hk = hk_distance(&s, &mu0, &mu1).unwrap();
        assert!((hk * hk - 1.0).abs() < 1e-12);
    }

    #[test]
    fn whe_dirac_both_branches() {
        // First branch at d = 1: (1-1)^2 + 1 = 1.
        let s = segment(1.0);
        let mu0 = DiscreteMeasure::dirac(&s, 0, 1.0).unwrap();
        let mu1 = DiscreteMeasure::dirac(&s, 1, 1.0).unwrap();
        let sol = whe_cost(&s, &mu0, &mu1).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-10);

        // Second branch at d = 2: 1 + 1 - 1/4 = 1.75 with the split
        // interpolant (1/16) delta_x + (15/16) delta_y.
        let s = segment(2.0);
        let mu0 = DiscreteMeasure::dirac(&s, 0, 1.0).unwrap();
        let mu1 = DiscreteMeasure::dirac(&s, 1, 1.0).unwrap();
        let sol = whe_cost(&s, &mu0, &mu1).unwrap();
        assert!((sol.value - 1.75).abs() < 1e-10);
        assert!((sol.nu_star.mass_at(0) - 1.0 / 16.0).abs() < 1e-9);
        assert!((sol.nu_star.mass_at(1) - 15.0 / 16.0).abs() < 1e-9);
    }

    #[test]
    fn whe_null_first_marginal() {
        let s = segment(1.0);
        let null = DiscreteMeasure::null(&s);
        let mu1 = DiscreteMeasure::new(&s, &[(0, 0.4), (1, 0.6)]).unwrap();
        let sol = whe_cost(&s, &null, &mu1).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-10);
        assert_eq!(sol.nu_star, mu1);
    }

    #[test]
    fn oracle_agrees_on_diracs() {
        for &(m0, m1, d) in &[(1.0, 1.0, FRAC_PI_2), (0.25, 4.0, 0.5), (2.0, 0.5, PI)] {
            let s = segment(d);
            let mu0 = DiscreteMeasure::dirac(&s, 0, m0).unwrap();
            let mu1 = DiscreteMeasure::dirac(&s, 1, m1).unwrap();
            let oracle = brute_force_uot(&s, &PairCost::hk(), &mu0, &mu1, 9).unwrap();
            assert!((oracle.value - hk_dirac_sq(m0, m1, d)).abs() < 1e-9);
        }
    }

    #[test]
    fn solver_matches_oracle_on_two_by_two() {
        let s = FiniteMetricSpace::build_euclidean(vec![
            vec![0.0],
            vec![0.8],
            vec![1.7],
            vec![2.1],
        ])
        .unwrap();
        let mu0 = DiscreteMeasure::new(&s, &[(0, 0.7), (2, 1.2)]).unwrap();
        let mu1 = DiscreteMeasure::new(&s, &[(1, 0.9), (3, 0.4)]).unwrap();
        for cost in [PairCost::hk(), PairCost::whe()] {
            let sol = solve_uot(&s, &cost, &mu0, &mu1, &SolveOptions::default()).unwrap();
            let oracle = brute_force_uot(&s, &cost, &mu0, &mu1, 9).unwrap();
            assert!(
                (sol.value - oracle.value).abs() < 1e-4,
                "{cost:?}: solver {} vs oracle {}",
                sol.value,
                oracle.value
            );
            assert!(sol.plan.marginal_violation(&mu0, &mu1) < 1e-9);
        }
    }

    #[test]
    fn whe_reconstruction_closes_the_loop() {
        let s = FiniteMetricSpace::build_euclidean(vec![vec![0.0], vec![0.5], vec![1.3]]).unwrap();
        let mu0 = DiscreteMeasure::new(&s, &[(0, 1.0), (1, 0.5)]).unwrap();
        let mu1 = DiscreteMeasure::new(&s, &[(1, 0.3), (2, 0.9)]).unwrap();
        let sol = whe_cost(&s, &mu0, &mu1).unwrap();
        let he = crate::classical::hellinger(2.0, &mu0, &sol.nu_star).unwrap();
        let (w, _) = crate::classical::wasserstein(2.0, &s, &sol.nu_star, &mu1).unwrap();
        let recomposed = he * he + w * w;
        assert!(
            (recomposed - sol.value).abs() <= 1e-6 * (1.0 + sol.value),
            "recomposed {recomposed} vs value {}",
            sol.value
        );
        // The part of the interpolant singular w.r.t. mu0 stays put: it
        // sits on atoms of mu1.
        let (_, singular) = crate::measure::lebesgue_decompose(&sol.nu_star, &mu0).unwrap();
        for &(i, _) in singular.atoms() {
            assert!(mu1.mass_at(i) > 0.0, "singular atom at {i} off supp(mu1)");
        }
    }

    #[test]
    fn pair_costs_are_one_homogeneous_and_midpoint_convex() {
        let samples = [
            (0.3, 0.7, 0.4),
            (1.5, 0.2, 2.0),
            (0.0, 1.0, 1.0),
            (2.0, 0.0, 0.3),
            (1.0, 1.0, 0.0),
        ];
        for cost in [PairCost::hk(), PairCost::whe()] {
            for &(a, b, d) in &samples {
                let v = cost.eval(a, b, d);
                for lam in [0.5, 2.0, 7.5] {
                    let scaled = cost.eval(lam * a, lam * b, d);
                    assert!(
                        (scaled - lam * v).abs() < 1e-12 * (1.0 + scaled.abs()),
                        "{cost:?} not 1-homogeneous at ({a}, {b}, {d})"
                    );
                }
            }
            for &(a0, b0, d) in &samples {
                for &(a1, b1, _) in &samples {
                    let mid = cost.eval(0.5 * (a0 + a1), 0.5 * (b0 + b1), d);
                    let avg = 0.5 * cost.eval(a0, b0, d) + 0.5 * cost.eval(a1, b1, d);
                    assert!(
                        mid <= avg + 1e-12,
                        "{cost:?} fails midpoint convexity at d = {d}"
                    );
                }
            }
        }
    }

    #[test]
    fn ten_atom_instances_stay_feasible_and_consistent() {
        // Larger supports: the solver must stay feasible, respect the
        // HK^2 <= 2 WHe bound, and beat the independent product plan.
        let coords: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64) * 0.17]).collect();
        let s = FiniteMetricSpace::build_euclidean(coords).unwrap();
        let mu0 = DiscreteMeasure::new(
            &s,
            &(0..10).map(|i| (i, 0.2 + (i % 4) as f64 * 0.3)).collect::<Vec<_>>(),
        )
        .unwrap();
        let mu1 = DiscreteMeasure::new(
            &s,
            &(10..20).map(|i| (i, 0.1 + (i % 5) as f64 * 0.25)).collect::<Vec<_>>(),
        )
        .unwrap();
        let hk = solve_uot(&s, &PairCost::hk(), &mu0, &mu1, &SolveOptions::default()).unwrap();
        let whe = solve_uot(&s, &PairCost::whe(), &mu0, &mu1, &SolveOptions::default()).unwrap();
        assert!(hk.plan.marginal_violation(&mu0, &mu1) < 1e-9);
        assert!(whe.plan.marginal_violation(&mu0, &mu1) < 1e-9);
        assert!(hk.value <= 2.0 * whe.value + 1e-8);
        // The independent product semi-coupling is feasible, so the
        // optimum cannot exceed its cost.
        let (t0, t1) = (mu0.total_mass(), mu1.total_mass());
        let mut product_cost = 0.0;
        for &(x, ma) in mu0.atoms() {
            for &(y, mb) in mu1.atoms() {
                product_cost += PairCost::hk().eval(ma * mb / t1, mb * ma / t0, s.dist(x, y));
            }
        }
        assert!(hk.value <= product_cost + 1e-10);
    }

    #[test]
    fn non_convergence_carries_incumbent() {
        let s = segment(1.0);
        let mu0 = DiscreteMeasure::new(&s, &[(0, 1.0), (1, 0.5)]).unwrap();
        let mu1 = DiscreteMeasure::new(&s, &[(0, 0.2), (1, 1.1)]).unwrap();
        let opts = SolveOptions {
            max_iter: 3,
            ..SolveOptions::default()
        };
        match solve_uot(&s, &PairCost::hk(), &mu0, &mu1, &opts) {
            Err(Error::NonConvergence { best, .. }) => assert!(best.is_finite()),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
