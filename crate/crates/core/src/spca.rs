//! Spherical principal components: eigen-analysis of sign operators.
//!
//! Eigenfunctions are orthonormal in the grid inner product. The weighted
//! problem `∫ K(s, t) φ(t) dt = λ φ(s)` is symmetrized as
//! `B = W^{1/2} K W^{1/2}`, solved with a dense symmetric eigensolver, and
//! mapped back through `W^{-1/2}`.
//!
//! Indices in this module are zero-based: component `0` is the leading one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{check_grids, inner, tensor, Curve, Grid, HSOperator};
use crate::rng::stream_rng;
use std::sync::Arc;

/// Maximum relative kernel asymmetry accepted by [`eigendecompose`].
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Relative eigen-gap below which an eigenvalue is treated as repeated.
pub const GAP_TOL: f64 = 1e-10;
/// `|<est, reference>|` at or below this is an ambiguous alignment.
pub const ALIGN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    /// Non-increasing.
    pub values: Vec<f64>,
    pub functions: Vec<Curve>,
    /// Trace of the decomposed operator.
    pub op_trace: f64,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Share of the operator trace carried by the leading `k` eigenvalues.
    pub fn explained_fraction(&self, k: usize) -> f64 {
        if self.op_trace == 0.0 {
            return 0.0;
        }
        self.values.iter().take(k).sum::<f64>() / self.op_trace
    }

    pub fn grid(&self) -> Option<&Arc<Grid>> {
        self.functions.first().map(|f| f.grid())
    }
}

/// Leading `k` eigenpairs of a self-adjoint operator.
pub fn eigendecompose(a: &HSOperator, k: usize) -> Result<EigenSystem> {
    let m = a.m();
    if k == 0 || k > m {
        return Err(Error::InvalidArgument(format!("k must lie in 1..={m}, got {k}")));
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSelfAdjoint(asym));
    }
    let grid = a.grid().clone();
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let kernel = a.kernel();
    let b = DMatrix::from_fn(m, m, |i, j| {
        0.5 * sqrt_w[i] * sqrt_w[j] * (kernel[(i, j)] + kernel[(j, i)])
    });
    let eig = SymmetricEigen::try_new(b, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });

    let mut values = Vec::with_capacity(k);
    let mut functions = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        values.push(eig.eigenvalues[idx]);
        let v = eig.eigenvectors.column(idx);
        let mut phi: Vec<f64> = v.iter().zip(&sqrt_w).map(|(x, s)| x / s).collect();
        orient(&mut phi);
        functions.push(Curve::new(grid.clone(), phi)?);
    }
    Ok(EigenSystem { values, functions, op_trace: a.trace() })
}

/// Fixes the sign so that the first clearly nonzero coordinate is positive.
fn orient(phi: &mut [f64]) {
    let scale = phi.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if let Some(first) = phi.iter().find(|x| x.abs() > 1e-8 * scale) {
        if *first < 0.0 {
            phi.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Returns `est` or `-est`, whichever has positive inner product with
/// `reference`.
pub fn align_sign(est: &Curve, reference: &Curve) -> Result<Curve> {
    let ip = inner(est, reference)?;
    if ip.abs() <= ALIGN_TOL {
        return Err(Error::AmbiguousAlignment(ip.abs()));
    }
    Ok(if ip > 0.0 { est.clone() } else { est.scale(-1.0) })
}

/// `sum_{j in indices} φ_j ⊗ φ_j`.
pub fn eigenprojection(system: &EigenSystem, indices: &[usize]) -> Result<HSOperator> {
    let grid = system
        .grid()
        .ok_or_else(|| Error::InvalidArgument("empty eigensystem".into()))?
        .clone();
    let mut out = HSOperator::zeros(grid);
    for &j in indices {
        let phi = system.functions.get(j).ok_or_else(|| {
            Error::InvalidArgument(format!("index {j} out of range (have {})", system.len()))
        })?;
        out = out.add(&tensor(phi, phi)?)?;
    }
    Ok(out)
}

/// `sum_{l < k, l != i} (λ_i - λ_l)^{-1} φ_l ⊗ φ_l`.
pub fn resolvent_delta(system: &EigenSystem, i: usize, k: usize) -> Result<HSOperator> {
    if k > system.len() || i >= k {
        return Err(Error::InvalidArgument(format!(
            "need i < k <= {}, got i = {i}, k = {k}",
            system.len()
        )));
    }
    let grid = system.functions[i].grid().clone();
    let li = system.values[i];
    let scale = li.abs().max(f64::MIN_POSITIVE);
    for l in 0..k {
        if l != i {
            let gap = (li - system.values[l]).abs() / scale;
            if gap <= GAP_TOL {
                return Err(Error::DegenerateEigenvalue { index: i, gap });
            }
        }
    }
    let mut out = HSOperator::zeros(grid);
    for l in (0..k).filter(|&l| l != i) {
        let phi = &system.functions[l];
        check_grids(out.grid(), phi.grid())?;
        out = out.add(&tensor(phi, phi)?.scale(1.0 / (li - system.values[l])))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShrinkageEstimate {
    pub factors: Vec<f64>,
    /// Monte Carlo standard error of each factor.
    pub std_errors: Vec<f64>,
    pub reps: usize,
}

/// Monte Carlo estimate of `λ_l E[ξ_l² / sum_j λ_j ξ_j²]` for i.i.d. standard
/// Gaussian `ξ`: the eigenvalues of the sign operator of an elliptical
/// process with scatter eigenvalues `λ`.
pub fn shrinkage_factor_mc(eigenvalues: &[f64], reps: usize, seed: u64) -> Result<Vec<f64>> {
    shrinkage_factor_mc_with_se(eigenvalues, reps, seed).map(|e| e.factors)
}

pub fn shrinkage_factor_mc_with_se(eigenvalues: &[f64], reps: usize, seed: u64) -> Result<ShrinkageEstimate> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be >= 1".into()));
    }
    if eigenvalues.is_empty() || eigenvalues.iter().any(|&l| !(l.is_finite() && l >= 0.0)) {
        return Err(Error::InvalidArgument("eigenvalues must be finite and non-negative".into()));
    }
    if eigenvalues.iter().all(|&l| l == 0.0) {
        return Err(Error::InvalidArgument("eigenvalues must not all be zero".into()));
    }
    let q = eigenvalues.len();
    let mut rng = stream_rng(seed, 0);
    let mut sum = vec![0.0; q];
    let mut sum_sq = vec![0.0; q];
    let mut terms = vec![0.0; q];
    let mut done = 0;
    while done < reps {
        let mut denom = 0.0;
        for (t, &l) in terms.iter_mut().zip(eigenvalues) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *t = l * z * z;
            denom += *t;
        }
        if denom == 0.0 {
            continue;
        }
        for ((s, ss), t) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&terms) {
            let r = t / denom;
            *s += r;
            *ss += r * r;
        }
        done += 1;
    }
    let n = reps as f64;
    let factors: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_errors = factors
        .iter()
        .zip(&sum_sq)
        .map(|(mean, ss)| {
            let var = (ss / n - mean * mean).max(0.0);
            if reps > 1 {
                (var * n / (n - 1.0) / n).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(ShrinkageEstimate { factors, std_errors, reps })
}

/// Kernel of an operator with the given eigenpairs, `sum_j λ_j φ_j ⊗ φ_j`.
pub fn synthesize(values: &[f64], functions: &[Curve]) -> Result<HSOperator> {
    let grid = functions
        .first()
        .ok_or_else(|| Error::InvalidArgument("no eigenfunctions".into()))?
        .grid()
        .clone();
    let m = grid.m();
    let mut kernel = DMatrix::<f64>::zeros(m, m);
    for (&l, phi) in values.iter().zip(functions) {
        check_grids(&grid, phi.grid())?;
        let v = DVector::from_column_slice(phi.values());
        kernel += l * &v * v.transpose();
    }
    HSOperator::from_kernel(grid, kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{hs_norm, make_equidistant_grid, norm, sign};

    #[test]
    fn rank_one_operator() {
        let g = make_equidistant_grid(6).unwrap();
        let s = sign(&Curve::from_fn(g.clone(), |t| 1.0 - 2.0 * t), 0.0);
        let a = tensor(&s, &s).unwrap();
        let sys = eigendecompose(&a, 1).unwrap();
        assert!((sys.values[0] - 1.0).abs() < 1e-12);
        let phi = align_sign(&sys.functions[0], &s).unwrap();
        for (x, y) in phi.values().iter().zip(s.values()) {
            assert!((x - y).abs() < 1e-10);
        }
        let p = eigenprojection(&sys, &[0]).unwrap();
        assert!(hs_norm(&p.sub(&a).unwrap()) < 1e-10);
    }

    #[test]
    fn zero_operator_has_zero_spectrum() {
        let g = make_equidistant_grid(5).unwrap();
        let sys = eigendecompose(&HSOperator::zeros(g), 5).unwrap();
        assert!(sys.values.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(sys.explained_fraction(3), 0.0);
    }

    #[test]
    fn eigendecompose_validates() {
        let g = make_equidistant_grid(3).unwrap();
        let a = HSOperator::from_fn(g.clone(), |s, t| s * t);
        assert!(matches!(eigendecompose(&a, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(eigendecompose(&a, 4), Err(Error::InvalidArgument(_))));
        let skew = HSOperator::from_fn(g, |s, t| s - t);
        assert!(matches!(eigendecompose(&skew, 1), Err(Error::NotSelfAdjoint(_))));
    }

    #[test]
    fn eigendecompose_is_deterministic() {
        let g = make_equidistant_grid(20).unwrap();
        let a = HSOperator::from_fn(g, |s, t| (-(s - t).abs() / 0.2).exp());
        assert_eq!(eigendecompose(&a, 5).unwrap(), eigendecompose(&a, 5).unwrap());
    }

    #[test]
    fn align_sign_cases() {
        let g = make_equidistant_grid(2).unwrap();
        let r = Curve::new(g.clone(), vec![1.0, 0.0]).unwrap();
        assert_eq!(align_sign(&r.scale(-1.0), &r).unwrap(), r);
        assert_eq!(align_sign(&r, &r).unwrap(), r);
        let perp = Curve::new(g, vec![0.0, 1.0]).unwrap();
        assert!(matches!(align_sign(&perp, &r), Err(Error::AmbiguousAlignment(_))));
    }

    fn two_level_system() -> EigenSystem {
        let g = make_equidistant_grid(4).unwrap();
        let e1 = Curve::new(g.clone(), vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        let e2 = Curve::new(g.clone(), vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        EigenSystem { values: vec![2.0, 1.0], functions: vec![e1, e2], op_trace: 3.0 }
    }

    #[test]
    fn projection_edge_cases() {
        let sys = two_level_system();
        let empty = eigenprojection(&sys, &[]).unwrap();
        assert_eq!(hs_norm(&empty), 0.0);
        assert!(matches!(eigenprojection(&sys, &[2]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn resolvent_two_levels() {
        let sys = two_level_system();
        let d = resolvent_delta(&sys, 0, 2).unwrap();
        let want = tensor(&sys.functions[1], &sys.functions[1]).unwrap();
        assert!(hs_norm(&d.sub(&want).unwrap()) < 1e-15);
        let out = d.apply(&sys.functions[0]).unwrap();
        assert!(norm(&out) < 1e-15);
        assert!(resolvent_delta(&sys, 2, 2).is_err());
        assert!(resolvent_delta(&sys, 0, 3).is_err());
    }

    #[test]
    fn resolvent_rejects_near_degenerate() {
        let mut sys = two_level_system();
        sys.values = vec![1.0, 1.0 + 1e-12];
        assert!(matches!(
            resolvent_delta(&sys, 0, 2),
            Err(Error::DegenerateEigenvalue { .. })
        ));
    }

    #[test]
    fn shrinkage_rank_one_is_exact() {
        let f = shrinkage_factor_mc(&[3.0, 0.0, 0.0], 100, 1).unwrap();
        assert_eq!(f, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn shrinkage_validation() {
        assert!(shrinkage_factor_mc(&[0.0, 0.0], 10, 1).is_err());
        assert!(shrinkage_factor_mc(&[1.0, -1.0], 10, 1).is_err());
        assert!(shrinkage_factor_mc(&[1.0], 0, 1).is_err());
        assert!(shrinkage_factor_mc(&[], 10, 1).is_err());
    }

    #[test]
    fn shrinkage_sums_to_one() {
        let f = shrinkage_factor_mc(&[4.0, 2.0, 1.0, 0.5], 5000, 9).unwrap();
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shrinkage_exchangeable_pair() {
        let reps = 40_000;
        let f = shrinkage_factor_mc(&[1.0, 1.0], reps, 2).unwrap();
        let tol = 2.0 / (reps as f64).sqrt();
        assert!((f[0] - 0.5).abs() < tol);
        assert!((f[1] - 0.5).abs() < tol);
    }
}
