//! Sample spatial sign covariance operator and the empirical operators that
//! describe how it reacts to a perturbation of the center.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{check_grids, hs_norm, norm, sample_grid, sign, tensor, zero_threshold, Curve, HSOperator};
use crate::location::MedianResult;

#[derive(Debug, Clone, PartialEq)]
pub struct SignCovResult {
    /// `(1/n) sum_i s(X_i - center) ⊗ s(X_i - center)`
    pub operator: HSOperator,
    pub center: Curve,
    pub n_zero_residuals: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignCovDiagnostics {
    pub trace: f64,
    pub hs_norm: f64,
    pub n_zero_residuals: usize,
}

impl SignCovResult {
    pub fn diagnostics(&self) -> SignCovDiagnostics {
        SignCovDiagnostics {
            trace: self.operator.trace(),
            hs_norm: hs_norm(&self.operator),
            n_zero_residuals: self.n_zero_residuals,
        }
    }
}

/// Signs `s(X_i - center)` of every observation, and how many were zero.
pub fn sign_curves(sample: &[Curve], center: &Curve) -> Result<(Vec<Curve>, usize)> {
    let grid = sample_grid(sample)?;
    check_grids(&grid, center.grid())?;
    let residuals: Vec<Curve> = sample.iter().map(|x| x.sub(center)).collect::<Result<_>>()?;
    let norms: Vec<f64> = residuals.iter().map(norm).collect();
    let eps0 = zero_threshold(&norms);
    let signs: Vec<Curve> = residuals.iter().map(|r| sign(r, eps0)).collect();
    let zeros = signs.iter().filter(|s| s.is_zero()).count();
    Ok((signs, zeros))
}

/// Kernel `(1/n) sum_i v_i(s) v_i(t)` accumulated observation by observation.
pub(crate) fn mean_outer_kernel<'a>(rows: impl Iterator<Item = &'a [f64]>, m: usize, n: usize) -> DMatrix<f64> {
    let mut kernel = DMatrix::<f64>::zeros(m, m);
    for v in rows {
        for j in 0..m {
            let vj = v[j];
            for i in 0..=j {
                kernel[(i, j)] += v[i] * vj;
            }
        }
    }
    let n = n as f64;
    for j in 0..m {
        for i in 0..=j {
            let x = kernel[(i, j)] / n;
            kernel[(i, j)] = x;
            kernel[(j, i)] = x;
        }
    }
    kernel
}

/// Sample spatial sign covariance operator about `center`.
pub fn sign_cov(sample: &[Curve], center: &Curve) -> Result<SignCovResult> {
    let (signs, n_zero_residuals) = sign_curves(sample, center)?;
    let grid = center.grid().clone();
    let kernel = mean_outer_kernel(signs.iter().map(|s| s.values()), grid.m(), sample.len());
    Ok(SignCovResult {
        operator: HSOperator::from_kernel(grid, kernel)?,
        center: center.clone(),
        n_zero_residuals,
    })
}

/// Residuals `X_i - center` with their norms, rejecting any at the zero
/// threshold.
fn regular_residuals(sample: &[Curve], center: &Curve) -> Result<Vec<(Curve, f64)>> {
    let grid = sample_grid(sample)?;
    check_grids(&grid, center.grid())?;
    let residuals: Vec<Curve> = sample.iter().map(|x| x.sub(center)).collect::<Result<_>>()?;
    let norms: Vec<f64> = residuals.iter().map(norm).collect();
    let eps0 = zero_threshold(&norms);
    for (index, &r) in norms.iter().enumerate() {
        if !(r > eps0 && r > 0.0) {
            return Err(Error::DegenerateObservation { index, norm: r });
        }
    }
    Ok(residuals.into_iter().zip(norms).collect())
}

/// `(1/n) sum_i <r_i, u> / ||r_i||^4 · r_i ⊗ r_i` with `r_i = X_i - center`.
pub fn empirical_f(sample: &[Curve], center: &Curve, u: &Curve) -> Result<HSOperator> {
    let residuals = regular_residuals(sample, center)?;
    check_grids(center.grid(), u.grid())?;
    let grid = center.grid().clone();
    let w = grid.weights();
    let m = grid.m();
    let mut kernel = DMatrix::<f64>::zeros(m, m);
    for (r, nr) in &residuals {
        let coef = crate::hilbert::weighted_dot(w, r.values(), u.values()) / nr.powi(4);
        if coef == 0.0 {
            continue;
        }
        let rv = r.values();
        for j in 0..m {
            for i in 0..m {
                kernel[(i, j)] += coef * rv[i] * rv[j];
            }
        }
    }
    kernel /= residuals.len() as f64;
    HSOperator::from_kernel(grid, kernel)
}

/// `ē = (1/n) sum_i (X_i - center) / ||X_i - center||^2`.
pub fn mean_inverse_residual(sample: &[Curve], center: &Curve) -> Result<Curve> {
    let residuals = regular_residuals(sample, center)?;
    let mut acc = vec![0.0; center.len()];
    for (r, nr) in &residuals {
        let inv = 1.0 / (nr * nr);
        for (a, v) in acc.iter_mut().zip(r.values()) {
            *a += inv * v;
        }
    }
    let n = residuals.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Curve::new(center.grid().clone(), acc)
}

/// `½ (u ⊗ ē + ē ⊗ u)`.
pub fn empirical_s(sample: &[Curve], center: &Curve, u: &Curve) -> Result<HSOperator> {
    let e = mean_inverse_residual(sample, center)?;
    let a = tensor(u, &e)?;
    let b = tensor(&e, u)?;
    Ok(a.add(&b)?.scale(0.5))
}

/// `2 F - 2 S` evaluated at direction `u`.
pub fn empirical_g(sample: &[Curve], center: &Curve, u: &Curve) -> Result<HSOperator> {
    let f = empirical_f(sample, center, u)?;
    let s = empirical_s(sample, center, u)?;
    Ok(f.sub(&s)?.scale(2.0))
}

/// First-order change of the sign operator at the estimated median when the
/// center moves by `displacement`: `G(displacement)` evaluated about the
/// median estimate.
pub fn shift_correction(
    sample: &[Curve],
    median: &MedianResult,
    sign_cov_at_median: &SignCovResult,
    displacement: &Curve,
) -> Result<HSOperator> {
    check_grids(median.estimate.grid(), sign_cov_at_median.center.grid())?;
    if sign_cov_at_median.center != median.estimate {
        return Err(Error::InvalidArgument(
            "sign operator was not computed at the median estimate".into(),
        ));
    }
    empirical_g(sample, &median.estimate, displacement)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{hs_norm, make_equidistant_grid};

    fn curve(g: &std::sync::Arc<crate::hilbert::Grid>, v: &[f64]) -> Curve {
        Curve::new(g.clone(), v.to_vec()).unwrap()
    }

    #[test]
    fn single_observation() {
        let g = make_equidistant_grid(3).unwrap();
        let c = Curve::zeros(g.clone());
        let x = curve(&g, &[1.0, -2.0, 0.5]);
        let res = sign_cov(std::slice::from_ref(&x), &c).unwrap();
        let s = sign(&x, 0.0);
        let expected = tensor(&s, &s).unwrap();
        assert!(hs_norm(&res.operator.sub(&expected).unwrap()) < 1e-14);
        assert!((res.operator.trace() - 1.0).abs() < 1e-12);
        assert!((hs_norm(&res.operator) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair() {
        let g = make_equidistant_grid(4).unwrap();
        let c = curve(&g, &[0.1, 0.2, 0.3, 0.4]);
        let v = curve(&g, &[1.0, 0.0, -1.0, 2.0]);
        let sample = vec![c.add(&v).unwrap(), c.sub(&v).unwrap()];
        let res = sign_cov(&sample, &c).unwrap();
        let nv2 = norm(&v).powi(2);
        for i in 0..4 {
            for j in 0..4 {
                let want = v.values()[i] * v.values()[j] / nv2;
                assert!((res.operator.kernel()[(i, j)] - want).abs() < 1e-12);
            }
        }
        assert!((res.operator.trace() - 1.0).abs() < 1e-12);

        let s_op = empirical_s(&sample, &c, &v).unwrap();
        assert!(hs_norm(&s_op) < 1e-12);
    }

    #[test]
    fn zero_residuals_counted() {
        let g = make_equidistant_grid(3).unwrap();
        let c = curve(&g, &[1.0, 1.0, 1.0]);
        let sample = vec![c.clone(), curve(&g, &[0.0, 1.0, 2.0]), curve(&g, &[3.0, 1.0, 2.0])];
        let res = sign_cov(&sample, &c).unwrap();
        assert_eq!(res.n_zero_residuals, 1);
        assert!((res.operator.trace() - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            empirical_f(&sample, &c, &c),
            Err(Error::DegenerateObservation { index: 0, .. })
        ));
    }

    #[test]
    fn empirical_f_rank_one_case() {
        let g = make_equidistant_grid(4).unwrap();
        let c = Curve::zeros(g.clone());
        let r = curve(&g, &[0.5, 1.0, -1.5, 2.0]);
        let f = empirical_f(std::slice::from_ref(&r), &c, &r).unwrap();
        let s = sign(&r, 0.0);
        let want = tensor(&s, &s).unwrap();
        assert!(hs_norm(&f.sub(&want).unwrap()) < 1e-12);
        let zero = empirical_f(std::slice::from_ref(&r), &c, &Curve::zeros(g)).unwrap();
        assert_eq!(hs_norm(&zero), 0.0);
    }

    #[test]
    fn empirical_g_symmetric_pair_is_twice_f() {
        let g = make_equidistant_grid(4).unwrap();
        let c = Curve::zeros(g.clone());
        let v = curve(&g, &[1.0, 2.0, 0.0, -1.0]);
        let sample = vec![v.clone(), v.scale(-1.0)];
        let gop = empirical_g(&sample, &c, &v).unwrap();
        let fop = empirical_f(&sample, &c, &v).unwrap();
        assert!(hs_norm(&gop.sub(&fop.scale(2.0)).unwrap()) < 1e-12);
        assert_eq!(hs_norm(&empirical_g(&sample, &c, &Curve::zeros(g)).unwrap()), 0.0);
    }

    #[test]
    fn shift_correction_requires_matching_center() {
        let g = make_equidistant_grid(3).unwrap();
        let sample = vec![
            curve(&g, &[1.0, 0.0, 0.0]),
            curve(&g, &[0.0, 1.0, 0.0]),
            curve(&g, &[0.0, 0.0, 1.0]),
            curve(&g, &[-1.0, -1.0, -1.0]),
        ];
        let med = crate::location::spatial_median(&sample).unwrap();
        let sc = sign_cov(&sample, &med.estimate).unwrap();
        let zero = shift_correction(&sample, &med, &sc, &Curve::zeros(g.clone())).unwrap();
        assert_eq!(hs_norm(&zero), 0.0);
        let other = sign_cov(&sample, &Curve::zeros(g.clone())).unwrap();
        assert!(shift_correction(&sample, &med, &other, &Curve::zeros(g)).is_err());
    }
}
