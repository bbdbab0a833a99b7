//! Two-sample tests for equality of sign covariance operators (and of
//! ordinary covariance operators), calibrated by a weighted chi-square
//! bootstrap.
//!
//! The test statistic is `n ||Γ̂_2 - Γ̂_1||_HS^2` with `n = n_1 + n_2`. Its null
//! law is approximated by `sum_l θ_l Z_l^2`, where the weights `θ_l` are the
//! eigenvalues of the estimated covariance of the operator estimators,
//! projected onto the leading `M` eigenfunctions of the pooled operator.
//! Projected rank-one terms are embedded into `R^{M(M+1)/2}` by
//! half-vectorization with off-diagonal entries scaled by `√2`, which keeps
//! Euclidean norms equal to Hilbert-Schmidt norms. By default the statistic
//! that is calibrated is the one restricted to those same `M` directions,
//! see [`StatisticScope`].

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{check_grids, hs_norm, sample_grid, weighted_dot, Curve, HSOperator};
use crate::location::spatial_median;
use crate::rng::stream_rng;
use crate::signcov::{mean_outer_kernel, sign_cov, sign_curves};
use crate::spca::eigendecompose;

pub const DEFAULT_NB: usize = 5000;

/// Draws generated per RNG stream in [`bootstrap_null`].
const BOOTSTRAP_BLOCK: usize = 256;

/// Relative size (against the pooled trace) below which a pooled eigenvalue
/// is not counted as positive.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMode {
    /// Spatial sign operators about per-sample spatial medians.
    Sign,
    /// Covariance operators about per-sample means.
    Classical,
    /// Covariance operators with θ taken from the Gaussian fourth-moment
    /// structure of the pooled eigenvalues. Experimental.
    #[serde(alias = "classical_gauss")]
    ClassicalGauss,
}

impl TestMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TestMode::Sign => "sign",
            TestMode::Classical => "classical",
            TestMode::ClassicalGauss => "classical-gauss",
        }
    }
}

impl std::fmt::Display for TestMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TestMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign" => Ok(TestMode::Sign),
            "classical" => Ok(TestMode::Classical),
            "classical-gauss" | "classical_gauss" => Ok(TestMode::ClassicalGauss),
            other => Err(Error::InvalidArgument(format!("unknown test mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSpectrum {
    /// Non-negative, non-increasing, length `q_n`.
    pub thetas: Vec<f64>,
    /// Number of projection directions.
    pub m: usize,
    /// `M (M + 1) / 2`
    pub q_n: usize,
    /// Negative eigenvalue estimates that were clipped to zero.
    pub n_clipped: usize,
    /// Trace of the weighted covariance matrix before clipping.
    pub upsilon_trace: f64,
    /// Fraction of the pooled operator's trace captured by the `M`
    /// projection directions.
    pub explained_fraction: f64,
    /// `n ||P (Γ̂_2 - Γ̂_1) P||^2_HS` with `P` the projection onto the `M`
    /// pooled directions.
    pub projected_statistic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub mode: TestMode,
    pub scope: StatisticScope,
    /// The statistic compared against `null_draws`, per `scope`.
    pub statistic: f64,
    /// `n ||Γ̂_2 - Γ̂_1||^2_HS` on the full grid.
    pub full_statistic: f64,
    pub spectrum: ThetaSpectrum,
    pub null_draws: Vec<f64>,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub centers: (Curve, Curve),
}

/// `n ||Γ̂^S_2 - Γ̂^S_1||^2_HS` with `n = n_1 + n_2`.
pub fn statistic_sign(sample1: &[Curve], sample2: &[Curve], center1: &Curve, center2: &Curve) -> Result<f64> {
    let g1 = sample_grid(sample1)?;
    let g2 = sample_grid(sample2)?;
    check_grids(&g1, &g2)?;
    let a = sign_cov(sample1, center1)?.operator;
    let b = sign_cov(sample2, center2)?.operator;
    let n = (sample1.len() + sample2.len()) as f64;
    Ok(n * hs_norm(&b.sub(&a)?).powi(2))
}

pub fn sample_mean(sample: &[Curve]) -> Result<Curve> {
    let grid = sample_grid(sample)?;
    let mut acc = vec![0.0; grid.m()];
    for x in sample {
        for (a, v) in acc.iter_mut().zip(x.values()) {
            *a += v;
        }
    }
    let n = sample.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Curve::new(grid, acc)
}

/// Sample covariance operator `(1/n) sum_i (X_i - X̄) ⊗ (X_i - X̄)`.
pub fn covariance_operator(sample: &[Curve]) -> Result<HSOperator> {
    let mean = sample_mean(sample)?;
    covariance_about(sample, &mean)
}

fn covariance_about(sample: &[Curve], center: &Curve) -> Result<HSOperator> {
    let grid = sample_grid(sample)?;
    check_grids(&grid, center.grid())?;
    let residuals: Vec<Vec<f64>> = sample
        .iter()
        .map(|x| x.values().iter().zip(center.values()).map(|(a, b)| a - b).collect())
        .collect();
    let kernel = mean_outer_kernel(residuals.iter().map(|r| r.as_slice()), grid.m(), sample.len());
    HSOperator::from_kernel(grid, kernel)
}

/// `n ||Γ̂_1 - Γ̂_2||^2_HS` for sample covariance operators.
pub fn statistic_classical(sample1: &[Curve], sample2: &[Curve]) -> Result<f64> {
    let a = covariance_operator(sample1)?;
    let b = covariance_operator(sample2)?;
    let n = (sample1.len() + sample2.len()) as f64;
    Ok(n * hs_norm(&a.sub(&b)?).powi(2))
}

/// Upper-triangular half-vectorization `(A_00, √2 A_01, ..., A_11, ...)` of a
/// symmetric matrix, ordered row by row.
pub fn half_vectorize(a: &DMatrix<f64>) -> Vec<f64> {
    let m = a.nrows();
    let mut out = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        out.push(a[(i, i)]);
        for j in (i + 1)..m {
            out.push(std::f64::consts::SQRT_2 * a[(i, j)]);
        }
    }
    out
}

/// Half-vectorization of `p pᵀ` without forming the matrix.
fn half_vectorize_outer(p: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for i in 0..p.len() {
        out.push(p[i] * p[i]);
        for j in (i + 1)..p.len() {
            out.push(std::f64::consts::SQRT_2 * p[i] * p[j]);
        }
    }
}

/// Residual curves whose rank-one products define the operator estimator in
/// `mode`: signs about the center, or raw residuals.
fn building_blocks(sample: &[Curve], center: &Curve, mode: TestMode) -> Result<Vec<Vec<f64>>> {
    match mode {
        TestMode::Sign => {
            let (signs, _) = sign_curves(sample, center)?;
            Ok(signs.into_iter().map(Curve::into_values).collect())
        }
        TestMode::Classical | TestMode::ClassicalGauss => {
            let grid = sample_grid(sample)?;
            check_grids(&grid, center.grid())?;
            Ok(sample
                .iter()
                .map(|x| x.values().iter().zip(center.values()).map(|(a, b)| a - b).collect())
                .collect())
        }
    }
}

/// `(1/n_i) sum_j (h_j - h̄)(h_j - h̄)ᵀ` over half-vectorized score products.
fn score_covariance(blocks: &[Vec<f64>], basis: &[Curve], w: &[f64], q: usize) -> (DMatrix<f64>, Vec<f64>) {
    let n = blocks.len();
    let mut h = DMatrix::<f64>::zeros(q, n);
    let mut scores = vec![0.0; basis.len()];
    let mut hv = Vec::with_capacity(q);
    for (col, b) in blocks.iter().enumerate() {
        for (s, psi) in scores.iter_mut().zip(basis) {
            *s = weighted_dot(w, psi.values(), b);
        }
        half_vectorize_outer(&scores, &mut hv);
        h.column_mut(col).copy_from_slice(&hv);
    }
    let mut means = Vec::with_capacity(q);
    for r in 0..q {
        let mean = h.row(r).sum() / n as f64;
        h.row_mut(r).add_scalar_mut(-mean);
        means.push(mean);
    }
    ((&h * h.transpose()) / n as f64, means)
}

/// Estimates the weights `θ` of the weighted chi-square null law.
pub fn estimate_theta_spectrum(
    sample1: &[Curve],
    sample2: &[Curve],
    center1: &Curve,
    center2: &Curve,
    m_components: usize,
    mode: TestMode,
) -> Result<ThetaSpectrum> {
    let grid = sample_grid(sample1)?;
    check_grids(&grid, &sample_grid(sample2)?)?;
    let m = grid.m();
    if m_components == 0 || m_components > m {
        return Err(Error::InvalidArgument(format!(
            "M must lie in 1..={m}, got {m_components}"
        )));
    }
    let (n1, n2) = (sample1.len(), sample2.len());
    if n1 < 2 || n2 < 2 {
        return Err(Error::InvalidArgument(format!(
            "each sample needs at least 2 observations, got {n1} and {n2}"
        )));
    }
    let n = (n1 + n2) as f64;

    let b1 = building_blocks(sample1, center1, mode)?;
    let b2 = building_blocks(sample2, center2, mode)?;
    let pooled_kernel = mean_outer_kernel(b1.iter().chain(&b2).map(|v| v.as_slice()), m, n1 + n2);
    let pooled = HSOperator::from_kernel(grid.clone(), pooled_kernel)?;
    let system = eigendecompose(&pooled, m_components)?;
    let threshold = RANK_TOL * system.op_trace.max(0.0);
    let available = system.values.iter().filter(|&&l| l > threshold && l > 0.0).count();
    if available < m_components {
        return Err(Error::InsufficientRank { requested: m_components, available });
    }
    let explained_fraction = system.explained_fraction(m_components);
    let q = m_components * (m_components + 1) / 2;

    let w = grid.weights();
    let (u1, mean1) = score_covariance(&b1, &system.functions, w, q);
    let (u2, mean2) = score_covariance(&b2, &system.functions, w, q);
    let projected_statistic = n * mean1.iter().zip(&mean2).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let upsilon = match mode {
        TestMode::ClassicalGauss => {
            let weight = n / n1 as f64 + n / n2 as f64;
            let lam = &system.values;
            let diag: Vec<f64> = (0..m_components)
                .flat_map(|a| (a..m_components).map(move |b| (a, b)))
                .map(|(a, b)| 2.0 * lam[a] * lam[b] * weight)
                .collect();
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
        }
        TestMode::Sign | TestMode::Classical => u1 * (n / n1 as f64) + u2 * (n / n2 as f64),
    };
    let upsilon_trace = upsilon.trace();
    let eig = SymmetricEigen::try_new(upsilon, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("eigensolver failed on weighted covariance".into()))?;
    let mut thetas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let n_clipped = thetas.iter().filter(|&&t| t < 0.0).count();
    thetas.iter_mut().for_each(|t| *t = t.max(0.0));
    thetas.sort_by(|a, b| b.total_cmp(a));

    Ok(ThetaSpectrum {
        thetas,
        m: m_components,
        q_n: q,
        n_clipped,
        upsilon_trace,
        explained_fraction,
        projected_statistic,
    })
}

/// `n_b` independent draws of `sum_j θ_j Z_j^2`.
///
/// Draws are produced in fixed-size blocks, block `b` using stream `b` of
/// `seed`, so the output does not depend on the number of worker threads.
pub fn bootstrap_null(spectrum: &ThetaSpectrum, n_b: usize, seed: u64) -> Vec<f64> {
    let thetas = &spectrum.thetas;
    let blocks = n_b.div_ceil(BOOTSTRAP_BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let len = BOOTSTRAP_BLOCK.min(n_b - b * BOOTSTRAP_BLOCK);
            let mut rng = stream_rng(seed, b as u64);
            (0..len)
                .map(|_| {
                    thetas
                        .iter()
                        .map(|t| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            t * z * z
                        })
                        .sum::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Share of null draws at or above `statistic`.
pub fn p_value(statistic: f64, null_draws: &[f64]) -> f64 {
    if null_draws.is_empty() {
        return f64::NAN;
    }
    null_draws.iter().filter(|&&d| d >= statistic).count() as f64 / null_draws.len() as f64
}

/// Which version of the statistic is compared against the bootstrap null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticScope {
    /// `n ||P (Γ̂_2 - Γ̂_1) P||^2` on the `M` pooled directions that also
    /// define the θ spectrum.
    #[default]
    Projected,
    /// `n ||Γ̂_2 - Γ̂_1||^2` on the full grid. The projected θ spectrum
    /// misses the variance outside the `M` directions, so this version
    /// over-rejects unless `M` captures nearly all of it.
    Full,
}

impl std::str::FromStr for StatisticScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projected" => Ok(StatisticScope::Projected),
            "full" => Ok(StatisticScope::Full),
            other => Err(Error::InvalidArgument(format!("unknown statistic scope {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub m_components: usize,
    pub n_b: usize,
    pub mode: TestMode,
    pub seed: u64,
    pub scope: StatisticScope,
}

impl TestOptions {
    pub fn new(m_components: usize, n_b: usize, mode: TestMode, seed: u64) -> Self {
        TestOptions { m_components, n_b, mode, seed, scope: StatisticScope::default() }
    }
}

/// Full test: centers, statistic, θ spectrum, bootstrap null and p-value,
/// calibrating the projected statistic.
pub fn run_test(
    sample1: &[Curve],
    sample2: &[Curve],
    m_components: usize,
    n_b: usize,
    mode: TestMode,
    seed: u64,
) -> Result<TestResult> {
    run_test_with(sample1, sample2, &TestOptions::new(m_components, n_b, mode, seed))
}

pub fn run_test_with(sample1: &[Curve], sample2: &[Curve], opts: &TestOptions) -> Result<TestResult> {
    if opts.n_b == 0 {
        return Err(Error::InvalidArgument("N_b must be >= 1".into()));
    }
    let g = sample_grid(sample1)?;
    check_grids(&g, &sample_grid(sample2)?)?;
    let (center1, center2, full_statistic) = match opts.mode {
        TestMode::Sign => {
            let c1 = spatial_median(sample1)?.estimate;
            let c2 = spatial_median(sample2)?.estimate;
            let t = statistic_sign(sample1, sample2, &c1, &c2)?;
            (c1, c2, t)
        }
        TestMode::Classical | TestMode::ClassicalGauss => {
            let c1 = sample_mean(sample1)?;
            let c2 = sample_mean(sample2)?;
            let t = statistic_classical(sample1, sample2)?;
            (c1, c2, t)
        }
    };
    let spectrum = estimate_theta_spectrum(sample1, sample2, &center1, &center2, opts.m_components, opts.mode)?;
    let statistic = match opts.scope {
        StatisticScope::Projected => spectrum.projected_statistic,
        StatisticScope::Full => full_statistic,
    };
    let null_draws = bootstrap_null(&spectrum, opts.n_b, opts.seed);
    let p = p_value(statistic, &null_draws);
    Ok(TestResult {
        mode: opts.mode,
        scope: opts.scope,
        statistic,
        full_statistic,
        spectrum,
        null_draws,
        p_value: p,
        n1: sample1.len(),
        n2: sample2.len(),
        centers: (center1, center2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{make_equidistant_grid, Grid};
    use std::sync::Arc;

    fn curve(g: &Arc<Grid>, v: &[f64]) -> Curve {
        Curve::new(g.clone(), v.to_vec()).unwrap()
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("sign".parse::<TestMode>().unwrap(), TestMode::Sign);
        assert_eq!("classical-gauss".parse::<TestMode>().unwrap(), TestMode::ClassicalGauss);
        assert!("other".parse::<TestMode>().is_err());
        assert_eq!(TestMode::Classical.to_string(), "classical");
    }

    #[test]
    fn orthogonal_single_signs() {
        // n = 2, ||s2⊗s2 - s1⊗s1||^2 = 1 + 1 - 2<s1,s2>^2 = 2
        let g = make_equidistant_grid(2).unwrap();
        let zero = Curve::zeros(g.clone());
        let a = curve(&g, &[3.0, 0.0]);
        let b = curve(&g, &[0.0, 0.5]);
        let t = statistic_sign(std::slice::from_ref(&a), std::slice::from_ref(&b), &zero, &zero).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        let t_swapped = statistic_sign(&[b], &[a], &zero, &zero).unwrap();
        assert!((t - t_swapped).abs() < 1e-15);
    }

    #[test]
    fn identical_samples_give_zero() {
        let g = make_equidistant_grid(3).unwrap();
        let s = vec![curve(&g, &[1.0, 2.0, 0.0]), curve(&g, &[0.0, -1.0, 1.0]), curve(&g, &[2.0, 0.5, 0.5])];
        let c = Curve::zeros(g);
        assert_eq!(statistic_sign(&s, &s, &c, &c).unwrap(), 0.0);
        assert_eq!(statistic_classical(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn constant_samples_have_zero_thetas() {
        let g = make_equidistant_grid(3).unwrap();
        let a = curve(&g, &[1.0, 2.0, 3.0]);
        let s = vec![a.clone(), a.clone()];
        let c = Curve::zeros(g);
        let spec = estimate_theta_spectrum(&s, &s, &c, &c, 1, TestMode::Sign).unwrap();
        assert_eq!(spec.q_n, 1);
        assert_eq!(spec.thetas, vec![0.0]);
    }

    #[test]
    fn spectrum_validation() {
        let g = make_equidistant_grid(3).unwrap();
        let s = vec![curve(&g, &[1.0, 0.0, 0.0]), curve(&g, &[0.0, 1.0, 0.0])];
        let c = Curve::zeros(g.clone());
        assert!(matches!(
            estimate_theta_spectrum(&s, &s, &c, &c, 4, TestMode::Sign),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            estimate_theta_spectrum(&s, &s, &c, &c, 3, TestMode::Sign),
            Err(Error::InsufficientRank { requested: 3, available: 2 })
        ));
        assert!(matches!(
            estimate_theta_spectrum(&s[..1], &s, &c, &c, 1, TestMode::Sign),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn half_vectorization_layout() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let r2 = std::f64::consts::SQRT_2;
        assert_eq!(half_vectorize(&a), vec![1.0, 2.0 * r2, 3.0 * r2, 4.0, 5.0 * r2, 6.0]);
        let mut out = Vec::new();
        half_vectorize_outer(&[1.0, -2.0], &mut out);
        assert_eq!(out, vec![1.0, -2.0 * r2, 4.0]);
    }

    #[test]
    fn zero_spectrum_draws_are_zero() {
        let spec = ThetaSpectrum {
            thetas: vec![0.0; 3],
            m: 2,
            q_n: 3,
            n_clipped: 0,
            upsilon_trace: 0.0,
            explained_fraction: 1.0,
            projected_statistic: 0.0,
        };
        assert!(bootstrap_null(&spec, 1000, 4).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn p_value_counts_ties() {
        assert_eq!(p_value(1.0, &[0.5, 1.0, 2.0, 0.1]), 0.5);
        assert_eq!(p_value(0.0, &[0.0, 0.0]), 1.0);
    }

    #[test]
    fn run_test_rejects_zero_draws() {
        let g = make_equidistant_grid(3).unwrap();
        let s = vec![curve(&g, &[1.0, 0.0, 0.0]), curve(&g, &[0.0, 1.0, 0.0])];
        assert!(run_test(&s, &s, 1, 0, TestMode::Sign, 1).is_err());
    }
}
