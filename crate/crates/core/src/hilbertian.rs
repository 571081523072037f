//! Inf-convolution of Hilbertian norms: parallel addition of positive-
//! definite forms, the one-step quadratic minimizer, and a grid check that
//! the metric construction matches the convex closed form.
//!
//! For positive-definite matrices the chained minimization collapses to a
//! single step, with value `v^T (A^{-1} + B^{-1})^{-1} v` attained at
//! `z = (A + B)^{-1} B v`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::infconv::{minplus_infconv, CostMatrix};

/// Dimension cap: this is desk-scale verification, not a linear-algebra
/// library.
const MAX_DIM: usize = 16;

/// A dense symmetric positive-definite matrix of dimension at most 16.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates symmetry (to `1e-12` relative) and positive definiteness
    /// (by attempted Cholesky factorization).
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "dimension {dim} outside 1..={MAX_DIM}"
            )));
        }
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
        }
        let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
        Self::from_matrix(m)
    }

    fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        let dim = m.nrows();
        let scale = 1.0 + m.amax();
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite(format!(
                        "asymmetry at ({i}, {j})"
                    )));
                }
            }
        }
        if Cholesky::new(m.clone()).is_none() {
            return Err(Error::NotPositiveDefinite(
                "Cholesky factorization failed".into(),
            ));
        }
        Ok(SpdMatrix { m })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    /// The quadratic form `v^T M v`.
    pub fn quad(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        (v.transpose() * &self.m * &v)[(0, 0)]
    }

    fn cholesky(&self) -> Cholesky<f64, nalgebra::Dyn> {
        Cholesky::new(self.m.clone()).expect("validated at construction")
    }
}

fn check_dims(a: &SpdMatrix, b: &SpdMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// The parallel sum `(A^{-1} + B^{-1})^{-1}`, computed through the
/// numerically stable form `B - B (A + B)^{-1} B` and cross-checked against
/// the direct inverse route to `1e-10` relative.
pub fn parallel_sum(a: &SpdMatrix, b: &SpdMatrix) -> Result<SpdMatrix> {
    check_dims(a, b)?;
    let apb = a.as_matrix() + b.as_matrix();
    let chol = Cholesky::new(apb)
        .ok_or_else(|| Error::NotPositiveDefinite("A + B is not positive definite".into()))?;
    // Stable route: solve (A + B) X = B, then B - B X.
    let x = chol.solve(b.as_matrix());
    let stable = b.as_matrix() - b.as_matrix() * x;
    // Cross-check route with explicit inverses.
    let a_inv = a.cholesky().inverse();
    let b_inv = b.cholesky().inverse();
    let direct = Cholesky::new(a_inv + b_inv)
        .ok_or_else(|| {
            Error::NotPositiveDefinite("A^{-1} + B^{-1} is not positive definite".into())
        })?
        .inverse();
    let diff = (&stable - &direct).norm();
    if diff > 1e-10 * (1.0 + stable.norm()) {
        return Err(Error::NumericalInstability(format!(
            "parallel-sum routes disagree by {diff:e}"
        )));
    }
    // Symmetrize away matrix-product round-off before revalidating.
    let sym = (&stable + stable.transpose()) * 0.5;
    SpdMatrix::from_matrix(sym)
        .map_err(|_| Error::NotPositiveDefinite("parallel sum lost definiteness".into()))
}

/// Minimizes `z^T A z + (v - z)^T B (v - z)` over `z`. Returns the value
/// and the minimizer `z = (A + B)^{-1} B v`; the value equals
/// `v^T (A^{-1} + B^{-1})^{-1} v`.
pub fn one_step_quadratic(a: &SpdMatrix, b: &SpdMatrix, v: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dims(a, b)?;
    if v.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: v.len(),
        });
    }
    let v = DVector::from_column_slice(v);
    let apb = a.as_matrix() + b.as_matrix();
    let chol = Cholesky::new(apb)
        .ok_or_else(|| Error::NotPositiveDefinite("A + B is not positive definite".into()))?;
    let z = chol.solve(&(b.as_matrix() * &v));
    let w = &v - &z;
    let value = (z.transpose() * a.as_matrix() * &z)[(0, 0)]
        + (w.transpose() * b.as_matrix() * &w)[(0, 0)];
    Ok((value, z.as_slice().to_vec()))
}

/// Grid parameters for [`grid_metric_check`]: lattice step and the margin
/// added around the box spanned by `0` and `v`.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub step: f64,
    pub margin: f64,
}

/// Outcome of the grid check.
#[derive(Debug, Clone)]
pub struct GridCheckReport {
    /// One-step chained minimum over the lattice.
    pub metric_value: f64,
    /// `v^T (A^{-1} + B^{-1})^{-1} v`.
    pub closed_form: f64,
    /// `metric_value - closed_form` (nonnegative up to round-off).
    pub gap: f64,
    /// `lambda_max(A + B) * m * (step / 2)^2`: the exact quadratic
    /// over-shoot of snapping the continuum minimizer to the lattice.
    pub predicted_slack: f64,
    /// Set when the gap exceeds ten times the predicted slack.
    pub coarse: bool,
}

/// Runs the min-plus chained minimization at `N = 1` between the quadratic
/// forms of `A` and `B` over a lattice covering a neighborhood of the
/// segment `[0, v]`, and reports the gap to the parallel-sum closed form.
///
/// One step suffices: the closed form is itself a norm, hence a stable
/// (length-induced) cost.
pub fn grid_metric_check(
    a: &SpdMatrix,
    b: &SpdMatrix,
    v: &[f64],
    grid: &GridSpec,
) -> Result<GridCheckReport> {
    check_dims(a, b)?;
    let dim = a.dim();
    if dim > 2 {
        return Err(Error::InvalidParameter(
            "grid check supports dimensions 1 and 2".into(),
        ));
    }
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    if !(grid.step > 0.0) {
        return Err(Error::InvalidParameter("grid step must be positive".into()));
    }

    // Axis lattices anchored at 0, covering [min(0, v_k), max(0, v_k)]
    // plus the margin.
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for k in 0..dim {
        let lo = v[k].min(0.0) - grid.margin;
        let hi = v[k].max(0.0) + grid.margin;
        let j_lo = (lo / grid.step).ceil() as i64;
        let j_hi = (hi / grid.step).floor() as i64;
        axes.push((j_lo..=j_hi).map(|j| j as f64 * grid.step).collect());
    }
    let mut points: Vec<Vec<f64>> = Vec::new();
    match dim {
        1 => {
            for &x in &axes[0] {
                points.push(vec![x]);
            }
        }
        _ => {
            for &x in &axes[0] {
                for &y in &axes[1] {
                    points.push(vec![x, y]);
                }
            }
        }
    }
    let find = |target: &[f64], points: &[Vec<f64>]| -> Option<usize> {
        points.iter().position(|p| {
            p.iter()
                .zip(target)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()))
        })
    };
    let z0 = find(&vec![0.0; dim], &points).expect("origin lies on the lattice");
    let z1 = match find(v, &points) {
        Some(idx) => idx,
        None => {
            points.push(v.to_vec());
            points.len() - 1
        }
    };
    if points.len() > 1500 {
        return Err(Error::InvalidParameter(format!(
            "lattice of {} points exceeds the budget; use a coarser step",
            points.len()
        )));
    }

    let form = |m: &SpdMatrix, p: &[f64], q: &[f64]| -> f64 {
        let diff: Vec<f64> = p.iter().zip(q).map(|(x, y)| y - x).collect();
        m.quad(&diff)
    };
    let n = points.len();
    let c1 = CostMatrix::from_fn(n, |i, j| form(a, &points[i], &points[j]));
    let c2 = CostMatrix::from_fn(n, |i, j| form(b, &points[i], &points[j]));
    let metric_value = minplus_infconv(&c1, &c2, z0, z1, 1)?;

    let closed_form = parallel_sum(a, b)?.quad(v);
    let gap = metric_value - closed_form;
    let apb = a.as_matrix() + b.as_matrix();
    let lambda_max = match dim {
        1 => apb[(0, 0)],
        _ => {
            let tr = apb[(0, 0)] + apb[(1, 1)];
            let det = apb[(0, 0)] * apb[(1, 1)] - apb[(0, 1)] * apb[(1, 0)];
            0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt())
        }
    };
    let predicted_slack = lambda_max * dim as f64 * (grid.step / 2.0) * (grid.step / 2.0);
    Ok(GridCheckReport {
        metric_value,
        closed_form,
        gap,
        predicted_slack,
        coarse: gap > 10.0 * predicted_slack,
    })
}
