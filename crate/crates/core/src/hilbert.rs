//! Discretized L2[0,1] arithmetic.
//!
//! A [`Grid`] fixes the design points and quadrature weights, and therefore
//! the inner product `<u, v> = sum_j w_j u_j v_j`. Curves and operators carry
//! a shared reference to their grid; every binary operation checks that both
//! operands live on the same grid.
//!
//! Operators are stored as kernel matrices `K` acting through the quadrature,
//! `(A u)(t_i) = sum_j w_j K(i, j) u(t_j)`, so that `u ⊗ v` has kernel
//! `u_i v_j` and the Hilbert-Schmidt inner product is
//! `sum_{i,j} w_i w_j K_A(i, j) K_B(i, j)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative factor applied to a caller-supplied norm scale to obtain the
/// numerical zero threshold used by [`sign`].
pub const ZERO_SCALE: f64 = 1e-12;

/// Design points on (0, 1] with positive quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::InvalidArgument("grid points must lie in (0, 1]".into()));
        }
        if points.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidArgument("grid points must be strictly increasing".into()));
        }
        if weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::InvalidArgument("quadrature weights must be positive".into()));
        }
        Ok(Grid { points, weights })
    }

    /// Right-endpoint rectangle rule: `t_j = j/m`, `w_j = 1/m`.
    pub fn equidistant(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("grid size m must be >= 2, got {m}")));
        }
        let points = (1..=m).map(|j| j as f64 / m as f64).collect();
        let weights = vec![1.0 / m as f64; m];
        Ok(Grid { points, weights })
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when the grid is the right-endpoint equidistant rule.
    pub fn is_equidistant(&self) -> bool {
        let m = self.m() as f64;
        self.points
            .iter()
            .enumerate()
            .all(|(j, &t)| (t - (j + 1) as f64 / m).abs() <= 1e-12)
            && self.weights.iter().all(|&w| (w - 1.0 / m).abs() <= 1e-15)
    }
}

/// Shared-ownership equidistant grid with `m` points.
pub fn make_equidistant_grid(m: usize) -> Result<Arc<Grid>> {
    Grid::equidistant(m).map(Arc::new)
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

pub(crate) fn check_grids(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if same_grid(a, b) {
        Ok(())
    } else {
        Err(Error::IncompatibleGrids(format!(
            "grid of size {} vs grid of size {}",
            a.m(),
            b.m()
        )))
    }
}

/// Grid shared by every curve of a non-empty sample.
pub fn sample_grid(sample: &[Curve]) -> Result<Arc<Grid>> {
    let first = sample
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty sample".into()))?;
    for c in &sample[1..] {
        check_grids(&first.grid, &c.grid)?;
    }
    Ok(first.grid.clone())
}

/// `sum_j w_j a_j b_j` without grid checks.
#[inline]
pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// One functional observation sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.m() {
            return Err(Error::InvalidArgument(format!(
                "curve has {} values but grid has {} points",
                values.len(),
                grid.m()
            )));
        }
        Ok(Curve { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let m = grid.m();
        Curve { grid, values: vec![0.0; m] }
    }

    pub fn constant(grid: Arc<Grid>, level: f64) -> Self {
        let m = grid.m();
        Curve { grid, values: vec![level; m] }
    }

    /// Evaluates `f` at every design point.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Curve { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        norm(self)
    }

    pub fn scale(&self, c: f64) -> Curve {
        Curve {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &Curve) -> Result<Curve> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Curve) -> Result<Curve> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self + c * other`
    pub fn axpy(&self, c: f64, other: &Curve) -> Result<Curve> {
        self.zip_with(other, |a, b| a + c * b)
    }

    fn zip_with(&self, other: &Curve, f: impl Fn(f64, f64) -> f64) -> Result<Curve> {
        check_grids(&self.grid, &other.grid)?;
        Ok(Curve {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

/// `<u, v> = sum_j w_j u_j v_j`.
pub fn inner(u: &Curve, v: &Curve) -> Result<f64> {
    check_grids(&u.grid, &v.grid)?;
    Ok(weighted_dot(u.grid.weights(), &u.values, &v.values))
}

pub fn norm(u: &Curve) -> f64 {
    weighted_dot(u.grid.weights(), &u.values, &u.values).sqrt()
}

/// Functional sign `u / ||u||`, or the zero curve when `||u|| <= eps0`.
pub fn sign(u: &Curve, eps0: f64) -> Curve {
    let r = norm(u);
    if r > eps0 && r > 0.0 {
        u.scale(1.0 / r)
    } else {
        Curve::zeros(u.grid.clone())
    }
}

/// Zero threshold for [`sign`] given a set of norms: [`ZERO_SCALE`] times
/// their median.
pub fn zero_threshold(norms: &[f64]) -> f64 {
    if norms.is_empty() {
        return 0.0;
    }
    ZERO_SCALE * median_of(norms)
}

pub(crate) fn median_of(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Kernel representation of a Hilbert-Schmidt operator on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct HSOperator {
    grid: Arc<Grid>,
    kernel: DMatrix<f64>,
}

impl HSOperator {
    pub fn from_kernel(grid: Arc<Grid>, kernel: DMatrix<f64>) -> Result<Self> {
        let m = grid.m();
        if kernel.nrows() != m || kernel.ncols() != m {
            return Err(Error::InvalidArgument(format!(
                "kernel is {}x{} but grid has {} points",
                kernel.nrows(),
                kernel.ncols(),
                m
            )));
        }
        Ok(HSOperator { grid, kernel })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let m = grid.m();
        HSOperator { grid, kernel: DMatrix::zeros(m, m) }
    }

    /// The identity, with kernel `δ_ij / w_j`.
    pub fn identity(grid: Arc<Grid>) -> Self {
        let m = grid.m();
        let kernel = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 / grid.weights()[j] } else { 0.0 });
        HSOperator { grid, kernel }
    }

    /// Kernel `k(s, t)` evaluated on the design points.
    pub fn from_fn(grid: Arc<Grid>, k: impl Fn(f64, f64) -> f64) -> Self {
        let m = grid.m();
        let p = grid.points();
        let kernel = DMatrix::from_fn(m, m, |i, j| k(p[i], p[j]));
        HSOperator { grid, kernel }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn into_kernel(self) -> DMatrix<f64> {
        self.kernel
    }

    pub fn m(&self) -> usize {
        self.grid.m()
    }

    pub fn apply(&self, u: &Curve) -> Result<Curve> {
        apply(self, u)
    }

    pub fn add(&self, other: &HSOperator) -> Result<HSOperator> {
        check_grids(&self.grid, &other.grid)?;
        Ok(HSOperator { grid: self.grid.clone(), kernel: &self.kernel + &other.kernel })
    }

    pub fn sub(&self, other: &HSOperator) -> Result<HSOperator> {
        check_grids(&self.grid, &other.grid)?;
        Ok(HSOperator { grid: self.grid.clone(), kernel: &self.kernel - &other.kernel })
    }

    pub fn scale(&self, c: f64) -> HSOperator {
        HSOperator { grid: self.grid.clone(), kernel: &self.kernel * c }
    }

    pub fn adjoint(&self) -> HSOperator {
        HSOperator { grid: self.grid.clone(), kernel: self.kernel.transpose() }
    }

    /// Kernel of `self ∘ other`: `sum_k K_A(i, k) w_k K_B(k, j)`.
    pub fn compose(&self, other: &HSOperator) -> Result<HSOperator> {
        check_grids(&self.grid, &other.grid)?;
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(self.grid.weights()));
        Ok(HSOperator {
            grid: self.grid.clone(),
            kernel: &self.kernel * w * &other.kernel,
        })
    }

    /// `sum_j w_j K(j, j)`.
    pub fn trace(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .enumerate()
            .map(|(j, w)| w * self.kernel[(j, j)])
            .sum()
    }

    pub fn hs_norm(&self) -> f64 {
        hs_norm(self)
    }

    /// Largest `|K(i, j) - K(j, i)|` relative to `max(1, max |K|)`.
    pub fn asymmetry(&self) -> f64 {
        let m = self.m();
        let scale = self.kernel.amax().max(1.0);
        let mut worst = 0.0_f64;
        for i in 0..m {
            for j in (i + 1)..m {
                worst = worst.max((self.kernel[(i, j)] - self.kernel[(j, i)]).abs());
            }
        }
        worst / scale
    }
}

/// Rank-one operator `u ⊗ v : w ↦ <v, w> u`.
pub fn tensor(u: &Curve, v: &Curve) -> Result<HSOperator> {
    check_grids(&u.grid, &v.grid)?;
    let m = u.len();
    let kernel = DMatrix::from_fn(m, m, |i, j| u.values[i] * v.values[j]);
    Ok(HSOperator { grid: u.grid.clone(), kernel })
}

pub fn apply(a: &HSOperator, u: &Curve) -> Result<Curve> {
    check_grids(&a.grid, &u.grid)?;
    let w = a.grid.weights();
    let m = a.m();
    let values = (0..m)
        .map(|i| (0..m).map(|j| w[j] * a.kernel[(i, j)] * u.values[j]).sum())
        .collect();
    Ok(Curve { grid: a.grid.clone(), values })
}

/// `<A, B>_F = sum_{i,j} w_i w_j K_A(i, j) K_B(i, j)`.
pub fn hs_inner(a: &HSOperator, b: &HSOperator) -> Result<f64> {
    check_grids(&a.grid, &b.grid)?;
    Ok(hs_inner_unchecked(a.grid.weights(), &a.kernel, &b.kernel))
}

pub(crate) fn hs_inner_unchecked(w: &[f64], a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let m = w.len();
    let mut total = 0.0;
    for j in 0..m {
        let col: f64 = (0..m).map(|i| w[i] * a[(i, j)] * b[(i, j)]).sum();
        total += w[j] * col;
    }
    total
}

pub fn hs_norm(a: &HSOperator) -> f64 {
    hs_inner_unchecked(a.grid.weights(), &a.kernel, &a.kernel).max(0.0).sqrt()
}
