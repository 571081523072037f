//! The metric infimal-convolution machinery: N-path energies, min-plus
//! dynamic programming over finite candidate sets, the Dirac-path energy
//! minimizer with its Lagrange system, and the geodesic-discretization
//! convergence experiment.
//!
//! An N-path interleaves measures `mu_0, nu_1, mu_1, ..., nu_N, mu_N`; its
//! energy is `N * sum_i (He_2^2(mu_{i-1}, nu_i) + W_2^2(nu_i, mu_i))`.
//! Chaining the one-step minima and letting `N` grow recovers the squared
//! Hellinger-Kantorovich distance between the endpoints.

use std::f64::consts::FRAC_PI_2;

use crate::classical::{hellinger, wasserstein};
use crate::cone::{cone_geodesic, ConePoint};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::solver::{hk_distance, whe_cost};
use crate::space::FiniteMetricSpace;

/// A sequence `mu_0, ..., mu_N` with interleaved `nu_1, ..., nu_N`.
#[derive(Debug, Clone)]
pub struct NPath {
    pub mu: Vec<DiscreteMeasure>,
    pub nu: Vec<DiscreteMeasure>,
}

impl NPath {
    pub fn new(mu: Vec<DiscreteMeasure>, nu: Vec<DiscreteMeasure>) -> Result<Self> {
        if nu.is_empty() || mu.len() != nu.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "an N-path needs N + 1 outer and N inner measures, got {} and {}",
                mu.len(),
                nu.len()
            )));
        }
        Ok(NPath { mu, nu })
    }

    pub fn n(&self) -> usize {
        self.nu.len()
    }
}

/// One step's contribution to the path energy.
#[derive(Debug, Clone, Copy)]
pub struct EnergyStep {
    pub he_sq: f64,
    pub w_sq: f64,
}

/// Energy of an N-path together with the endpoint reference value.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub n: usize,
    /// `N * sum_i (He^2 + W^2)`; infinite when a Wasserstein step is
    /// infeasible.
    pub value: f64,
    pub steps: Vec<EnergyStep>,
    /// Squared Hellinger-Kantorovich distance between the endpoints.
    pub reference: f64,
    /// `value - reference`.
    pub gap: f64,
    /// `reference / 2`: the energy of any N-path is bounded below by half
    /// the squared endpoint distance.
    pub lower_bound: f64,
}

/// Exact energy of an N-path, with the per-step breakdown and the
/// endpoint Hellinger-Kantorovich reference.
pub fn path_energy(space: &FiniteMetricSpace, path: &NPath) -> Result<EnergyReport> {
    let n = path.n();
    let mut steps = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 1..=n {
        let he = hellinger(2.0, &path.mu[i - 1], &path.nu[i - 1])?;
        let (w, _) = wasserstein(2.0, space, &path.nu[i - 1], &path.mu[i])?;
        let step = EnergyStep {
            he_sq: he * he,
            w_sq: w * w,
        };
        total += step.he_sq + step.w_sq;
        steps.push(step);
    }
    let value = n as f64 * total;
    let hk = hk_distance(space, &path.mu[0], &path.mu[n])?;
    let reference = hk * hk;
    Ok(EnergyReport {
        n,
        value,
        steps,
        reference,
        gap: value - reference,
        lower_bound: reference / 2.0,
    })
}

/// A dense square matrix of squared costs over a finite candidate set.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(CostMatrix { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..n * n).map(|k| f(k / n, k % n)).collect();
        CostMatrix { n, data }
    }

    /// Entrywise squared distances of a space (virtual points included).
    pub fn squared_metric(space: &FiniteMetricSpace) -> Self {
        Self::from_fn(space.len(), |i, j| {
            let d = space.dist(i, j);
            d * d
        })
    }

    /// The squared discrete metric: 0 on the diagonal, 1 off it.
    pub fn discrete(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 0.0 } else { 1.0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn check_index(&self, z: usize) -> Result<()> {
        if z >= self.n {
            return Err(Error::PointOutOfRange {
                index: z,
                len: self.n,
            });
        }
        Ok(())
    }
}

fn minplus_product(x: &[f64], y: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; n * n];
    for i in 0..n {
        for k in 0..n {
            let xik = x[i * n + k];
            if !xik.is_finite() {
                continue;
            }
            let row = k * n;
            for j in 0..n {
                let cand = xik + y[row + j];
                if cand < out[i * n + j] {
                    out[i * n + j] = cand;
                }
            }
        }
    }
    out
}

/// Minimal N-path energy over a finite candidate set:
/// `N * (M^{(x) N})[z0][z1]` where `M[x][x'] = min_y (c1sq[x][y] + c2sq[y][x'])`
/// and the power is taken in min-plus arithmetic. Exact over the candidate
/// set and deterministic (ties resolve to the smallest intermediate index).
pub fn minplus_infconv(
    c1sq: &CostMatrix,
    c2sq: &CostMatrix,
    z0: usize,
    z1: usize,
    n_steps: usize,
) -> Result<f64> {
    if c1sq.n != c2sq.n {
        return Err(Error::DimensionMismatch {
            expected: c1sq.n,
            got: c2sq.n,
        });
    }
    c1sq.check_index(z0)?;
    c1sq.check_index(z1)?;
    if n_steps == 0 {
        return Err(Error::InvalidParameter("step count must be positive".into()));
    }
    let n = c1sq.n;
    if n_steps == 1 {
        let mut best = f64::INFINITY;
        for y in 0..n {
            let cand = c1sq.get(z0, y) + c2sq.get(y, z1);
            if cand < best {
                best = cand;
            }
        }
        return Ok(best);
    }
    let m = minplus_product(&c1sq.data, &c2sq.data, n);
    let mut power = m.clone();
    for _ in 1..n_steps {
        power = minplus_product(&power, &m, n);
    }
    Ok(n_steps as f64 * power[z0 * n + z1])
}

/// Per-N chained self-minimization of a single squared cost.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// `costsq[z0][z1]`, the value a stable cost reproduces.
    pub base: f64,
    /// `(N, F_N)` rows, where `F_N = N * min over N-chains of the summed
    /// squared cost`.
    pub rows: Vec<(usize, f64)>,
}

/// Chains a single squared cost against itself: for each `N` in `n_list`
/// reports `F_N = N * (costsq^{(x) N})[z0][z1]`. For a length distance the
/// rows reproduce `base` at every `N`; for the discrete metric they grow
/// linearly.
pub fn stability_probe(
    costsq: &CostMatrix,
    z0: usize,
    z1: usize,
    n_list: &[usize],
) -> Result<StabilityReport> {
    costsq.check_index(z0)?;
    costsq.check_index(z1)?;
    let n = costsq.n;
    for i in 0..n {
        if costsq.get(i, i) != 0.0 {
            return Err(Error::InvalidParameter(
                "stability probe requires a null diagonal".into(),
            ));
        }
        for j in 0..n {
            if (costsq.get(i, j) - costsq.get(j, i)).abs() > 1e-12 {
                return Err(Error::InvalidParameter(
                    "stability probe requires a symmetric cost".into(),
                ));
            }
        }
    }
    let max_n = n_list.iter().copied().max().unwrap_or(0);
    let mut rows = Vec::with_capacity(n_list.len());
    let mut power = costsq.data.clone();
    for k in 1..=max_n {
        if k > 1 {
            power = minplus_product(&power, &costsq.data, n);
        }
        if n_list.contains(&k) {
            rows.push((k, k as f64 * power[z0 * n + z1]));
        }
    }
    Ok(StabilityReport {
        base: costsq.get(z0, z1),
        rows,
    })
}

/// State of the Dirac-path energy minimizer: radii `r_0, ..., r_N`, spatial
/// steps `d_1, ..., d_N` summing to the prescribed distance, and the
/// multiplier of the step-sum constraint.
///
/// At an interior optimum the state satisfies
/// `r_i (2 + d_i^2) = r_{i-1} + r_{i+1}` and `2 r_i^2 d_i = lambda`.
#[derive(Debug, Clone)]
pub struct FnState {
    pub radii: Vec<f64>,
    pub steps: Vec<f64>,
    pub lambda: f64,
}

impl FnState {
    /// Largest residual of the stationarity system at this state.
    pub fn stationarity_residual(&self, total_step: f64) -> f64 {
        let n = self.steps.len();
        let mut worst = (self.steps.iter().sum::<f64>() - total_step).abs();
        for i in 1..n {
            let r = self.radii[i];
            let lhs = r * (2.0 + self.steps[i - 1] * self.steps[i - 1]);
            worst = worst.max((lhs - self.radii[i - 1] - self.radii[i + 1]).abs());
        }
        for i in 1..=n {
            let r = self.radii[i];
            worst = worst.max((2.0 * r * r * self.steps[i - 1] - self.lambda).abs());
        }
        worst
    }
}

/// The Dirac-path energy `N * sum_i (|r_i - r_{i-1}|^2 + r_i^2 d_i^2)`.
pub fn fn_energy(radii: &[f64], steps: &[f64]) -> f64 {
    let n = steps.len();
    debug_assert_eq!(radii.len(), n + 1);
    let sum: f64 = (1..=n)
        .map(|i| {
            let dr = radii[i] - radii[i - 1];
            dr * dr + radii[i] * radii[i] * steps[i - 1] * steps[i - 1]
        })
        .sum();
    n as f64 * sum
}

/// Minimizes the Dirac-path energy over positive interior radii and
/// nonnegative spatial steps summing to `d`, for fixed endpoint radii.
///
/// The solver bisects on the step multiplier: for each candidate the
/// stationarity system is solved by alternating an exact tridiagonal
/// update of the radii with the explicit step update, and the multiplier
/// is adjusted until the steps sum to `d`. A projected-gradient fallback
/// with deterministic random restarts covers the rare case where the
/// shooting residual stays large.
pub fn dirac_fn_min(r0: f64, r_n: f64, d: f64, n: usize) -> Result<(f64, FnState)> {
    if !(r0 > 0.0) || !(r_n > 0.0) {
        return Err(Error::Domain(
            "endpoint radii must be strictly positive".into(),
        ));
    }
    if d < 0.0 || !d.is_finite() {
        return Err(Error::Domain(format!("spatial distance {d} is invalid")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("step count must be positive".into()));
    }
    if n == 1 {
        // No interior radii: the single step is pinned to d.
        let state = FnState {
            radii: vec![r0, r_n],
            steps: vec![d],
            lambda: 2.0 * r_n * r_n * d,
        };
        return Ok(((r_n - r0) * (r_n - r0) + r_n * r_n * d * d, state));
    }
    if d == 0.0 {
        // The linear interpolant is the unique minimizer.
        let radii: Vec<f64> = (0..=n)
            .map(|i| r0 + (i as f64 / n as f64) * (r_n - r0))
            .collect();
        let steps = vec![0.0; n];
        let value = fn_energy(&radii, &steps);
        return Ok((value, FnState { radii, steps, lambda: 0.0 }));
    }

    let shoot = |lambda: f64| -> Option<FnState> {
        let mut radii: Vec<f64> = (0..=n)
            .map(|i| r0 + (i as f64 / n as f64) * (r_n - r0))
            .collect();
        let mut steps = vec![0.0; n];
        let scale = r0.max(r_n);
        // Alternation warm-up: exact tridiagonal radii update against the
        // explicit step update.
        for _ in 0..200 {
            for i in 1..=n {
                let r = radii[i];
                if r <= 1e-300 {
                    return None;
                }
                steps[i - 1] = lambda / (2.0 * r * r);
            }
            let before = radii.clone();
            solve_radii_tridiagonal(&mut radii, &steps);
            if radii[1..n].iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
                return None;
            }
            let change = radii
                .iter()
                .zip(&before)
                .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
            if change < 1e-15 * (1.0 + scale) {
                break;
            }
        }
        // Newton on the reduced radii system
        // F_i = 2 r_i + lambda^2 / (4 r_i^3) - r_{i-1} - r_{i+1},
        // with a Levenberg shift: near vertex passages (tiny radii under a
        // large step budget) the Jacobian diagonal 2 - 3 lambda^2 / (4 r^4)
        // turns negative and the plain step is useless.
        let residual = |r: &[f64]| -> Vec<f64> {
            (1..n)
                .map(|i| {
                    2.0 * r[i] + lambda * lambda / (4.0 * r[i].powi(3)) - r[i - 1] - r[i + 1]
                })
                .collect()
        };
        let norm2 = |f: &[f64]| -> f64 { f.iter().map(|v| v * v).sum() };
        let mut shift = 0.0_f64;
        for _ in 0..200 {
            let f = residual(&radii);
            if f.iter().all(|v| v.abs() < 1e-14 * (1.0 + scale)) {
                break;
            }
            let base = norm2(&f);
            let diag_raw: Vec<f64> = (1..n)
                .map(|i| 2.0 - 0.75 * lambda * lambda / radii[i].powi(4))
                .collect();
            let mut stepped = false;
            for _attempt in 0..12 {
                let delta = match shifted_tridiagonal_step(&diag_raw, shift, &f) {
                    Some(delta) => delta,
                    None => {
                        shift = if shift == 0.0 { 1.0 } else { shift * 10.0 };
                        continue;
                    }
                };
                let mut t = 1.0;
                for _ in 0..25 {
                    let trial: Vec<f64> = (0..=n)
                        .map(|i| {
                            if i == 0 || i == n {
                                radii[i]
                            } else {
                                (radii[i] + t * delta[i - 1]).max(1e-12 * (1.0 + scale))
                            }
                        })
                        .collect();
                    if norm2(&residual(&trial)) < base {
                        radii = trial;
                        stepped = true;
                        break;
                    }
                    t *= 0.5;
                }
                if stepped {
                    shift *= 0.25;
                    break;
                }
                shift = if shift == 0.0 { 1.0 } else { shift * 10.0 };
            }
            if !stepped {
                break;
            }
        }
        for i in 1..=n {
            steps[i - 1] = lambda / (2.0 * radii[i] * radii[i]);
        }
        Some(FnState {
            radii,
            steps,
            lambda,
        })
    };
    let step_sum = |state: &Option<FnState>| -> f64 {
        state
            .as_ref()
            .map_or(f64::INFINITY, |s| s.steps.iter().sum())
    };

    // Bracket the multiplier, then bisect on the monotone step sum.
    let mut lo = 0.0_f64;
    let mut hi = 2.0 * (r0.min(r_n)).powi(2) * d / n as f64;
    let mut guard = 0;
    while step_sum(&shoot(hi)) < d && guard < 200 {
        hi *= 2.0;
        guard += 1;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if step_sum(&shoot(mid)) >= d {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut best: Option<(f64, FnState)> = None;
    if let Some(state) = shoot(hi) {
        let value = fn_energy(&state.radii, &state.steps);
        best = Some((value, state));
    }

    let scale = r0.max(r_n);
    let residual_ok = best
        .as_ref()
        .map(|(_, s)| s.stationarity_residual(d) <= 1e-8 * (1.0 + scale))
        .unwrap_or(false);
    if !residual_ok {
        let fallback = projected_descent_fn(r0, r_n, d, n);
        best = match best {
            Some((v, s)) if v <= fallback.0 => Some((v, s)),
            _ => Some(fallback),
        };
    }
    let (mut value, mut state) = best.expect("at least one candidate state exists");
    // Full-system Newton polish: the shooting path assumes the step sum is
    // monotone in the multiplier and the gradient fallback stops short of
    // stationarity, so finish on the joint system in (radii, steps,
    // multiplier).
    if state.stationarity_residual(d) > 1e-10 * (1.0 + scale) {
        if let Some(polished) = kkt_polish(r0, r_n, d, n, &state) {
            let polished_value = fn_energy(&polished.radii, &polished.steps);
            if polished_value <= value + 1e-9 * (1.0 + value)
                && polished.stationarity_residual(d) < state.stationarity_residual(d)
            {
                value = polished_value;
                state = polished;
            }
        }
    }
    Ok((value, state))
}

/// Damped Newton with a Levenberg shift on the full stationarity system:
/// unknowns `(r_1..r_{N-1}, d_1..d_N, lambda)`, equations
/// `r_i (2 + d_i^2) = r_{i-1} + r_{i+1}`, `2 r_i^2 d_i = lambda`, and
/// `sum d_i = d`. Returns a state only when the residual drops below
/// `1e-10` at the returned point.
fn kkt_polish(r0: f64, r_n: f64, d: f64, n: usize, start: &FnState) -> Option<FnState> {
    use nalgebra::{DMatrix, DVector};
    let scale = r0.max(r_n);
    let unknowns = (n - 1) + n + 1;
    let pack = |state: &FnState| -> DVector<f64> {
        let mut x = DVector::zeros(unknowns);
        for i in 1..n {
            x[i - 1] = state.radii[i];
        }
        for i in 0..n {
            x[n - 1 + i] = state.steps[i];
        }
        x[unknowns - 1] = state.lambda;
        x
    };
    let unpack = |x: &DVector<f64>| -> FnState {
        let mut radii = vec![r0; n + 1];
        radii[n] = r_n;
        for i in 1..n {
            radii[i] = x[i - 1];
        }
        let steps: Vec<f64> = (0..n).map(|i| x[n - 1 + i]).collect();
        FnState {
            radii,
            steps,
            lambda: x[unknowns - 1],
        }
    };
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let s = unpack(x);
        let mut f = DVector::zeros(unknowns);
        for i in 1..n {
            let di = s.steps[i - 1];
            f[i - 1] = s.radii[i] * (2.0 + di * di) - s.radii[i - 1] - s.radii[i + 1];
        }
        for i in 1..=n {
            f[n - 1 + i - 1] = 2.0 * s.radii[i] * s.radii[i] * s.steps[i - 1] - s.lambda;
        }
        f[unknowns - 1] = s.steps.iter().sum::<f64>() - d;
        f
    };
    let mut x = pack(start);
    let mut shift = 0.0_f64;
    for _ in 0..80 {
        let f = residual(&x);
        if f.amax() < 1e-12 * (1.0 + scale) {
            break;
        }
        let s = unpack(&x);
        let mut jac = DMatrix::zeros(unknowns, unknowns);
        for i in 1..n {
            let row = i - 1;
            let di = s.steps[i - 1];
            jac[(row, i - 1)] = 2.0 + di * di;
            if i > 1 {
                jac[(row, i - 2)] = -1.0;
            }
            if i < n - 1 {
                jac[(row, i)] = -1.0;
            }
            jac[(row, n - 1 + i - 1)] = 2.0 * s.radii[i] * di;
        }
        for i in 1..=n {
            let row = n - 1 + i - 1;
            if i < n {
                jac[(row, i - 1)] = 4.0 * s.radii[i] * s.steps[i - 1];
            }
            jac[(row, n - 1 + i - 1)] = 2.0 * s.radii[i] * s.radii[i];
            jac[(row, unknowns - 1)] = -1.0;
        }
        for i in 0..n {
            jac[(unknowns - 1, n - 1 + i)] = 1.0;
        }
        let base = f.norm_squared();
        let mut stepped = false;
        for _attempt in 0..12 {
            let mut shifted = jac.clone();
            for k in 0..unknowns {
                shifted[(k, k)] += shift;
            }
            let Some(delta) = shifted.lu().solve(&(-&f)) else {
                shift = if shift == 0.0 { 1e-8 } else { shift * 10.0 };
                continue;
            };
            let mut t = 1.0;
            for _ in 0..30 {
                let mut trial = &x + t * &delta;
                for i in 0..n - 1 {
                    trial[i] = trial[i].max(1e-12 * (1.0 + scale));
                }
                for i in 0..n {
                    trial[n - 1 + i] = trial[n - 1 + i].max(0.0);
                }
                if residual(&trial).norm_squared() < base {
                    x = trial;
                    stepped = true;
                    break;
                }
                t *= 0.5;
            }
            if stepped {
                shift *= 0.25;
                break;
            }
            shift = if shift == 0.0 { 1e-8 } else { shift * 10.0 };
        }
        if !stepped {
            break;
        }
    }
    let state = unpack(&x);
    if state.stationarity_residual(d) <= 1e-10 * (1.0 + scale) {
        Some(state)
    } else {
        None
    }
}


/// One Newton direction for the radii system: solves
/// `(J + shift I) delta = -f` with `J` tridiagonal (unit off-diagonals,
/// diagonal `diag_raw`). Returns `None` on a vanishing pivot.
fn shifted_tridiagonal_step(diag_raw: &[f64], shift: f64, f: &[f64]) -> Option<Vec<f64>> {
    let unknowns = diag_raw.len();
    let mut diag: Vec<f64> = diag_raw.iter().map(|d| d + shift).collect();
    let mut rhs: Vec<f64> = f.iter().map(|v| -v).collect();
    for k in 1..unknowns {
        if diag[k - 1].abs() < 1e-12 {
            return None;
        }
        let w = -1.0 / diag[k - 1];
        diag[k] += w;
        rhs[k] -= w * rhs[k - 1];
    }
    if diag[unknowns - 1].abs() < 1e-12 {
        return None;
    }
    let mut delta = vec![0.0; unknowns];
    delta[unknowns - 1] = rhs[unknowns - 1] / diag[unknowns - 1];
    for k in (0..unknowns - 1).rev() {
        delta[k] = (rhs[k] + delta[k + 1]) / diag[k];
    }
    Some(delta)
}

/// Exact minimization of the energy over interior radii for fixed steps:
/// the stationarity system is tridiagonal and diagonally dominant.
fn solve_radii_tridiagonal(radii: &mut [f64], steps: &[f64]) {
    let n = steps.len();
    if n < 2 {
        return;
    }
    let unknowns = n - 1;
    let mut diag: Vec<f64> = (1..n).map(|i| 2.0 + steps[i - 1] * steps[i - 1]).collect();
    let mut rhs = vec![0.0; unknowns];
    rhs[0] += radii[0];
    rhs[unknowns - 1] += radii[n];
    // Thomas elimination with off-diagonals equal to -1.
    for k in 1..unknowns {
        let w = -1.0 / diag[k - 1];
        diag[k] += w;
        rhs[k] -= w * rhs[k - 1];
    }
    let mut x = vec![0.0; unknowns];
    x[unknowns - 1] = rhs[unknowns - 1] / diag[unknowns - 1];
    for k in (0..unknowns - 1).rev() {
        x[k] = (rhs[k] + x[k + 1]) / diag[k];
    }
    radii[1..n].copy_from_slice(&x);
}

/// Deterministic splitmix64 for the fallback restarts.
struct SplitMix(u64);

impl SplitMix {
    fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn projected_descent_fn(r0: f64, r_n: f64, d: f64, n: usize) -> (f64, FnState) {
    let mut best_value = f64::INFINITY;
    let mut best_state = FnState {
        radii: vec![r0; n + 1],
        steps: vec![d / n as f64; n],
        lambda: 0.0,
    };
    let scale = r0.max(r_n);
    for restart in 0..5 {
        let mut rng = SplitMix(0x5eed_0000 + restart as u64);
        let mut radii: Vec<f64> = (0..=n)
            .map(|i| {
                let base = r0 + (i as f64 / n as f64) * (r_n - r0);
                if i == 0 || i == n || restart == 0 {
                    base
                } else {
                    (base * (0.5 + rng.next_f64())).max(1e-9)
                }
            })
            .collect();
        let mut steps: Vec<f64> = (0..n)
            .map(|_| {
                if restart == 0 {
                    d / n as f64
                } else {
                    rng.next_f64()
                }
            })
            .collect();
        project_to_scaled_simplex(&mut steps, d);
        let mut value = fn_energy(&radii, &steps);
        let mut step_size = 0.1 * scale / n as f64;
        for _ in 0..20_000 {
            let mut grad_r = vec![0.0; n + 1];
            let mut grad_d = vec![0.0; n];
            for i in 1..=n {
                let dr = radii[i] - radii[i - 1];
                grad_r[i] += 2.0 * dr + 2.0 * radii[i] * steps[i - 1] * steps[i - 1];
                grad_r[i - 1] -= 2.0 * dr;
                grad_d[i - 1] = 2.0 * radii[i] * radii[i] * steps[i - 1];
            }
            let mut improved = false;
            for _ in 0..30 {
                let mut tr = radii.clone();
                for i in 1..n {
                    tr[i] = (radii[i] - step_size * grad_r[i]).max(1e-12);
                }
                let mut td: Vec<f64> = steps
                    .iter()
                    .zip(&grad_d)
                    .map(|(s, g)| s - step_size * g)
                    .collect();
                project_to_scaled_simplex(&mut td, d);
                let trial = fn_energy(&tr, &td);
                if trial < value {
                    radii = tr;
                    steps = td;
                    let rel = (value - trial) / (1.0 + trial);
                    value = trial;
                    step_size *= 1.3;
                    improved = rel > 1e-14;
                    break;
                }
                step_size *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if value < best_value {
            let lambda = (1..=n)
                .map(|i| 2.0 * radii[i] * radii[i] * steps[i - 1])
                .sum::<f64>()
                / n as f64;
            best_value = value;
            best_state = FnState {
                radii,
                steps,
                lambda,
            };
        }
    }
    (best_value, best_state)
}

fn project_to_scaled_simplex(x: &mut [f64], s: f64) {
    if x.is_empty() || s <= 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|p, q| q.total_cmp(p));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (idx, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - s) / (idx + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    for v in x.iter_mut() {
        *v = (*v - tau).max(0.0);
    }
}

/// Endpoint classes the geodesic-discretization experiment understands:
/// null or single-atom measures.
fn dirac_data(mu: &DiscreteMeasure) -> Result<Option<(usize, f64)>> {
    match mu.atoms() {
        [] => Ok(None),
        [(x, m)] => Ok(Some((*x, *m))),
        _ => Err(Error::UnsupportedEndpoints(
            "endpoints must be null or single-atom measures".into(),
        )),
    }
}

/// Builds the measure-path discretization of the Hellinger-Kantorovich
/// geodesic between Dirac (or null) endpoints and evaluates its N-path
/// energy through one-step marginal problems, for every `N` in `n_list`.
///
/// For base distance `d <= pi/2` the rotational cone geodesic between
/// `[x0, sqrt(m0)]` and `[x1, sqrt(m1)]` is pushed to masses; for
/// `d > pi/2` the endpoint masses die and regrow along the two-atom path
/// `(1-t)^2 m0 delta_x0 + t^2 m1 delta_x1`.
pub fn geodesic_energy_experiment(
    space: &mut FiniteMetricSpace,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    n_list: &[usize],
) -> Result<Vec<EnergyReport>> {
    let a0 = dirac_data(mu0)?;
    let a1 = dirac_data(mu1)?;
    let two_atom_path = match (a0, a1) {
        (Some((x0, _)), Some((x1, _))) => space.dist(x0, x1) > FRAC_PI_2,
        _ => false,
    };

    let mut reports = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n == 0 {
            return Err(Error::InvalidParameter("step count must be positive".into()));
        }
        let mut sigma: Vec<DiscreteMeasure> = Vec::with_capacity(n + 1);
        sigma.push(mu0.clone());
        for i in 1..n {
            let t = i as f64 / n as f64;
            let measure = if two_atom_path {
                let (x0, m0) = a0.expect("two-atom path has Dirac endpoints");
                let (x1, m1) = a1.expect("two-atom path has Dirac endpoints");
                DiscreteMeasure::new(
                    space,
                    &[(x0, (1.0 - t) * (1.0 - t) * m0), (x1, t * t * m1)],
                )?
            } else {
                let y0 = match a0 {
                    Some((x, m)) => ConePoint::new(x, m.sqrt()),
                    None => ConePoint::vertex(),
                };
                let y1 = match a1 {
                    Some((x, m)) => ConePoint::new(x, m.sqrt()),
                    None => ConePoint::vertex(),
                };
                let geo = cone_geodesic(space, &y0, &y1)?;
                let p = geo.eval(space, t)?;
                match p.x() {
                    Some(x) => DiscreteMeasure::dirac(space, x, p.mass())?,
                    None => DiscreteMeasure::null(space),
                }
            };
            sigma.push(measure);
        }
        sigma.push(mu1.clone());

        let mut nu = Vec::with_capacity(n);
        for i in 1..=n {
            nu.push(whe_cost(space, &sigma[i - 1], &sigma[i])?.nu_star);
        }
        let path = NPath::new(sigma, nu)?;
        reports.push(path_energy(space, &path)?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment(d: f64) -> FiniteMetricSpace {
        FiniteMetricSpace::build_euclidean(vec![vec![0.0], vec![d]]).unwrap()
    }

    #[test]
    fn constant_path_has_zero_energy() {
        let s = segment(1.0);
        let z = DiscreteMeasure::new(&s, &[(0, 1.0), (1, 0.5)]).unwrap();
        let path = NPath::new(vec![z.clone(), z.clone(), z.clone()], vec![z.clone(), z.clone()])
            .unwrap();
        let report = path_energy(&s, &path).unwrap();
        assert_eq!(report.value, 0.0);
        assert_eq!(report.reference, 0.0);
    }

    #[test]
    fn one_step_path_with_whe_minimizer_matches_whe() {
        let s = segment(1.0);
        let mu0 = DiscreteMeasure::dirac(&s, 0, 1.0).unwrap();
        let mu1 = DiscreteMeasure::dirac(&s, 1, 1.0).unwrap();
        let sol = whe_cost(&s, &mu0, &mu1).unwrap();
        let path = NPath::new(vec![mu0, mu1], vec![sol.nu_star]).unwrap();
        let report = path_energy(&s, &path).unwrap();
        assert!((report.value - sol.value).abs() < 1e-9);
        assert!(report.value >= report.lower_bound - 1e-9);
    }

    #[test]
    fn infeasible_wasserstein_step_propagates_infinity() {
        let s = segment(1.0);
        let mu0 = DiscreteMeasure::dirac(&s, 0, 1.0).unwrap();
        let nu = DiscreteMeasure::dirac(&s, 0, 2.0).unwrap();
        let mu1 = DiscreteMeasure::dirac(&s, 1, 1.0).unwrap();
        let path = NPath::new(vec![mu0, mu1.clone()], vec![nu]).unwrap();
        let report = path_energy(&s, &path).unwrap();
        assert!(report.value.is_infinite());
    }

    #[test]
    fn minplus_zero_on_identical_endpoints() {
        let c = CostMatrix::discrete(4);
        for n in [1, 2, 8] {
            assert_eq!(minplus_infconv(&c, &c, 2, 2, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn minplus_discrete_metric_grows_linearly() {
        let c = CostMatrix::discrete(3);
        for n in 1..=16 {
            let v = minplus_infconv(&c, &c, 0, 2, n).unwrap();
            assert!(v >= n as f64 - 1e-12, "N = {n}: {v}");
        }
    }

    #[test]
    fn minplus_path_graph_one_step_halves() {
        // A fine grid on [0, 1]: one He/W-style step through the midpoint
        // costs half the squared distance.
        let coords: Vec<Vec<f64>> = (0..=100).map(|i| vec![i as f64 / 100.0]).collect();
        let s = FiniteMetricSpace::build_euclidean(coords).unwrap();
        let c = CostMatrix::squared_metric(&s);
        let v = minplus_infconv(&c, &c, 0, 100, 1).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn minplus_monotone_in_costs() {
        let c = CostMatrix::discrete(3);
        let smaller = CostMatrix::from_fn(3, |i, j| 0.5 * c.get(i, j));
        for n in [1, 3, 7] {
            let lo = minplus_infconv(&smaller, &c, 0, 2, n).unwrap();
            let hi = minplus_infconv(&c, &c, 0, 2, n).unwrap();
            assert!(lo <= hi + 1e-12);
        }
    }

    #[test]
    fn minplus_swap_inequality() {
        // value_{c1,c2}(N) >= N/(N+1) * value_{c2,c1}(N+1).
        let n_pts = 5;
        let c1 = CostMatrix::from_fn(n_pts, |i, j| ((i as f64 - j as f64) / 2.0).powi(2));
        let c2 = CostMatrix::from_fn(n_pts, |i, j| if i == j { 0.0 } else { 0.7 });
        for n in 1..6 {
            let v12 = minplus_infconv(&c1, &c2, 0, 4, n).unwrap();
            let v21 = minplus_infconv(&c2, &c1, 0, 4, n + 1).unwrap();
            assert!(
                v12 >= n as f64 / (n + 1) as f64 * v21 - 1e-12,
                "N = {n}: {v12} vs {v21}"
            );
        }
    }

    #[test]
    fn length_route_bounds_the_chained_value() {
        // Pairing a length metric with anything, the chained value never
        // exceeds the length metric's squared distance (walk one cost,
        // stand still on the other) plus grid slack.
        let coords: Vec<Vec<f64>> = (0..=50).map(|i| vec![i as f64 / 50.0]).collect();
        let s = FiniteMetricSpace::build_euclidean(coords).unwrap();
        let rho2 = CostMatrix::squared_metric(&s);
        let disc = CostMatrix::discrete(s.len());
        let slack = 2.0 * (1.0 / 50.0_f64).powi(2);
        for n in [1, 2, 4, 8] {
            let v = minplus_infconv(&rho2, &disc, 0, 50, n).unwrap();
            assert!(v <= 1.0 + n as f64 * slack, "N = {n}: {v}");
            let w = minplus_infconv(&disc, &rho2, 0, 50, n).unwrap();
            assert!(w <= 1.0 + n as f64 * slack, "swapped N = {n}: {w}");
        }
    }

    #[test]
    fn energy_report_value_matches_breakdown() {
        let s = segment(0.7);
        let mu0 = DiscreteMeasure::dirac(&s, 0, 1.0).unwrap();
        let mu1 = DiscreteMeasure::dirac(&s, 1, 0.5).unwrap();
        let nu = whe_cost(&s, &mu0, &mu1).unwrap().nu_star;
        let path = NPath::new(vec![mu0, mu1], vec![nu]).unwrap();
        let report = path_energy(&s, &path).unwrap();
        let breakdown: f64 = report.steps.iter().map(|st| st.he_sq + st.w_sq).sum();
        assert!((report.value - report.n as f64 * breakdown).abs() <= 1e-12);
    }

    #[test]
    fn stability_of_path_graph_metric() {
        let coords: Vec<Vec<f64>> = (0..=20).map(|i| vec![i as f64 / 20.0]).collect();
        let s = FiniteMetricSpace::build_euclidean(coords).unwrap();
        let c = CostMatrix::squared_metric(&s);
        let report = stability_probe(&c, 0, 20, &[1, 2, 4, 5]).unwrap();
        for &(n, f_n) in &report.rows {
            // Exact when the grid contains the equispaced chain points.
            assert!(
                (f_n - report.base).abs() < 1e-12,
                "N = {n}: {f_n} vs {}",
                report.base
            );
        }
    }

    #[test]
    fn stability_discrete_metric_diverges() {
        let c = CostMatrix::discrete(3);
        let report = stability_probe(&c, 0, 1, &[1, 4, 9]).unwrap();
        for &(n, f_n) in &report.rows {
            assert!(f_n >= n as f64);
        }
        let same = stability_probe(&c, 2, 2, &[3]).unwrap();
        assert_eq!(same.rows[0].1, 0.0);
    }

    #[test]
    fn fn_min_zero_distance_is_linear_interpolant() {
        let (value, state) = dirac_fn_min(1.0, 2.0, 0.0, 8).unwrap();
        assert!((value - 1.0).abs() < 1e-12);
        for (i, &r) in state.radii.iter().enumerate() {
            assert!((r - (1.0 + i as f64 / 8.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn fn_min_single_step_closed_form() {
        let (value, _) = dirac_fn_min(1.0, 2.0, 0.7, 1).unwrap();
        assert!((value - (1.0 + 4.0 * 0.49)).abs() < 1e-12);
    }

    #[test]
    fn fn_min_approaches_the_cone_distance() {
        // r0 = rN = 1, d = 1: the limit is 2 - 2 cos(1).
        let target = 2.0 - 2.0 * 1.0_f64.cos();
        let (v64, state) = dirac_fn_min(1.0, 1.0, 1.0, 64).unwrap();
        assert!((v64 - target).abs() < 0.02, "{v64} vs {target}");
        assert!(state.stationarity_residual(1.0) < 1e-8);
        let (v256, _) = dirac_fn_min(1.0, 1.0, 1.0, 256).unwrap();
        assert!((v256 - target).abs() <= (v64 - target).abs() + 1e-12);
    }

    #[test]
    fn fn_min_nonincreasing_in_n() {
        let mut last = f64::INFINITY;
        for n in [1, 2, 4, 8, 16, 32] {
            let (v, _) = dirac_fn_min(0.8, 1.3, 0.9, n).unwrap();
            assert!(v <= last + 1e-10, "N = {n}: {v} > {last}");
            last = v;
        }
    }

    #[test]
    fn fn_min_respects_radius_and_step_box() {
        let (r0, r_n, d) = (1.0, 1.5, 1.2);
        let n = 16;
        let (value, state) = dirac_fn_min(r0, r_n, d, n).unwrap();
        let budget = (r0 - r_n) * (r0 - r_n) + r0 * r_n * d.min(FRAC_PI_2).powi(2);
        assert!(value <= budget + 1e-9);
        let r_lo = (1.0 - std::f64::consts::PI / 4.0) * r0.min(r_n);
        for &r in &state.radii[1..n] {
            assert!(r >= r_lo - 1e-9 && r <= r0.max(r_n) + 1e-9);
        }
        let d_cap = (1.0 / (n as f64).sqrt()) * (std::f64::consts::PI / (2.0 - FRAC_PI_2))
            * (r0 * r_n).sqrt()
            / r0.min(r_n);
        for &s in &state.steps {
            assert!(s <= d_cap + 1e-9);
        }
    }

    #[test]
    fn experiment_identical_endpoints_has_zero_energy() {
        let mut s = segment(1.0);
        let mu = DiscreteMeasure::dirac(&s, 0, 1.0).unwrap();
        let reports = geodesic_energy_experiment(&mut s, &mu.clone(), &mu, &[1, 4]).unwrap();
        for r in reports {
            assert!(r.value.abs() < 1e-12);
        }
    }

    #[test]
    fn experiment_converges_below_right_angle() {
        let mut s = segment(1.0);
        let mu0 = DiscreteMeasure::dirac(&s, 0, 1.0).unwrap();
        let mu1 = DiscreteMeasure::dirac(&s, 1, 1.0).unwrap();
        let reports = geodesic_energy_experiment(&mut s, &mu0, &mu1, &[4, 16, 64]).unwrap();
        let target = 2.0 - 2.0 * 1.0_f64.cos();
        assert!((reports[0].reference - target).abs() < 1e-9);
        let gaps: Vec<f64> = reports.iter().map(|r| r.gap.abs()).collect();
        assert!(gaps[2] <= 0.02, "gap at N = 64: {}", gaps[2]);
        assert!(gaps[2] <= gaps[0] + 1e-12);
        for r in &reports {
            assert!(r.value >= r.lower_bound - 1e-9);
        }
    }

    #[test]
    fn experiment_runs_on_the_graph_backend() {
        // A two-edge chain of total length 1: the rotational geodesic
        // interpolates through virtual points on the edges.
        let mut s =
            FiniteMetricSpace::build_graph_metric(&[(0, 1, 0.5), (1, 2, 0.5)], 3).unwrap();
        let mu0 = DiscreteMeasure::dirac(&s, 0, 1.0).unwrap();
        let mu1 = DiscreteMeasure::dirac(&s, 2, 1.0).unwrap();
        let reports = geodesic_energy_experiment(&mut s, &mu0, &mu1, &[4, 16]).unwrap();
        let target = 2.0 - 2.0 * 1.0_f64.cos();
        assert!((reports[0].reference - target).abs() < 1e-9);
        assert!(reports[1].gap.abs() <= reports[0].gap.abs() + 1e-12);
        assert!(reports[1].gap.abs() < 0.01, "gap at N = 16: {}", reports[1].gap);
    }

    #[test]
    fn experiment_two_atom_path_beyond_right_angle() {
        let mut s = segment(2.0);
        let mu0 = DiscreteMeasure::dirac(&s, 0, 1.0).unwrap();
        let mu1 = DiscreteMeasure::dirac(&s, 1, 1.0).unwrap();
        let reports = geodesic_energy_experiment(&mut s, &mu0, &mu1, &[16, 64]).unwrap();
        assert!((reports[0].reference - 2.0).abs() < 1e-9);
        assert!(reports[1].gap.abs() <= 0.05, "gap at N = 64: {}", reports[1].gap);
    }

    #[test]
    fn experiment_rejects_multi_atom_endpoints() {
        let mut s = segment(1.0);
        let mu0 = DiscreteMeasure::new(&s, &[(0, 1.0), (1, 1.0)]).unwrap();
        let mu1 = DiscreteMeasure::dirac(&s, 1, 1.0).unwrap();
        assert!(matches!(
            geodesic_energy_experiment(&mut s, &mu0, &mu1, &[2]),
            Err(Error::UnsupportedEndpoints(_))
        ));
    }
}
