use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use sscov::hilbert::{apply, hs_inner, hs_norm, inner, make_equidistant_grid, norm, sign, tensor, Curve, Grid, HSOperator};

fn curve_on(grid: &Arc<Grid>, values: Vec<f64>) -> Curve {
    Curve::new(grid.clone(), values).unwrap()
}

fn values(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, m)
}

fn sized_curves() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (2usize..=10).prop_flat_map(|m| (Just(m), values(m), values(m)))
}

fn kernel(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, m * m)
}

fn op(grid: &Arc<Grid>, k: &[f64]) -> HSOperator {
    let m = grid.m();
    HSOperator::from_kernel(grid.clone(), DMatrix::from_row_slice(m, m, k)).unwrap()
}

proptest! {
    #[test]
    fn sign_has_unit_norm((m, u, _) in sized_curves()) {
        let g = make_equidistant_grid(m).unwrap();
        let u = curve_on(&g, u);
        prop_assume!(norm(&u) > 1e-6);
        prop_assert!((norm(&sign(&u, 1e-12)) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn tensor_norm_factorizes((m, u, v) in sized_curves()) {
        let g = make_equidistant_grid(m).unwrap();
        let (u, v) = (curve_on(&g, u), curve_on(&g, v));
        let want = norm(&u) * norm(&v);
        let got = hs_norm(&tensor(&u, &v).unwrap());
        prop_assert!((got - want).abs() <= 1e-10 * want.max(1e-300));
    }

    #[test]
    fn tensor_applies_as_rank_one((m, u, v) in sized_curves(), w in values(10)) {
        let g = make_equidistant_grid(m).unwrap();
        let (u, v) = (curve_on(&g, u), curve_on(&g, v));
        let w = curve_on(&g, w[..m].to_vec());
        let got = apply(&tensor(&u, &v).unwrap(), &w).unwrap();
        let c = inner(&v, &w).unwrap();
        for (a, b) in got.values().iter().zip(u.values()) {
            prop_assert!((a - c * b).abs() <= 1e-12 * (c * b).abs().max(1.0));
        }
    }

    #[test]
    fn hs_inner_is_an_inner_product(m in 2usize..=6, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = make_equidistant_grid(m).unwrap();
        let mut draw = || -> Vec<f64> { (0..m * m).map(|_| rng.random_range(-3.0..3.0)).collect() };
        let (a, b, c) = (op(&g, &draw()), op(&g, &draw()), op(&g, &draw()));
        let (x, y) = (1.7, -0.4);
        let ab = hs_inner(&a, &b).unwrap();
        prop_assert!((ab - hs_inner(&b, &a).unwrap()).abs() <= 1e-12 * ab.abs().max(1.0));
        let lhs = hs_inner(&a.scale(x).add(&b.scale(y)).unwrap(), &c).unwrap();
        let rhs = x * hs_inner(&a, &c).unwrap() + y * hs_inner(&b, &c).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        prop_assert!(hs_inner(&a, &a).unwrap() > 0.0);
    }

    #[test]
    fn triangle_inequality(k1 in kernel(5), k2 in kernel(5)) {
        let g = make_equidistant_grid(5).unwrap();
        let (a, b) = (op(&g, &k1), op(&g, &k2));
        prop_assert!(hs_norm(&a.add(&b).unwrap()) <= hs_norm(&a) + hs_norm(&b) + 1e-12);
    }

    #[test]
    fn apply_is_additive(k1 in kernel(4), k2 in kernel(4), u in values(4)) {
        let g = make_equidistant_grid(4).unwrap();
        let (a, b) = (op(&g, &k1), op(&g, &k2));
        let u = curve_on(&g, u);
        let sum = apply(&a.add(&b).unwrap(), &u).unwrap();
        let sep = apply(&a, &u).unwrap().add(&apply(&b, &u).unwrap()).unwrap();
        // direct arithmetic oracle
        for i in 0..4 {
            let direct: f64 = (0..4).map(|j| 0.25 * (k1[i * 4 + j] + k2[i * 4 + j]) * u.values()[j]).sum();
            prop_assert!((sum.values()[i] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            prop_assert!((sum.values()[i] - sep.values()[i]).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }
}

#[test]
fn hs_inner_is_basis_independent() {
    // Brute force over the L2-orthonormal basis e_l = δ_l / sqrt(w_l):
    // <A, B>_F = sum_l <A e_l, B e_l>.
    let g = make_equidistant_grid(5).unwrap();
    let ka: Vec<f64> = (0..25).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
    let kb: Vec<f64> = (0..25).map(|i| ((i * 5 % 13) as f64 - 6.0) / 4.0).collect();
    let (a, b) = (op(&g, &ka), op(&g, &kb));
    let mut brute = 0.0;
    for l in 0..5 {
        let mut e = vec![0.0; 5];
        e[l] = 1.0 / g.weights()[l].sqrt();
        let e = curve_on(&g, e);
        brute += inner(&apply(&a, &e).unwrap(), &apply(&b, &e).unwrap()).unwrap();
    }
    assert!((brute - hs_inner(&a, &b).unwrap()).abs() <= 1e-10);

    // A second orthonormal basis: a rotation of the first in coordinates 0,1.
    let (c, s) = (0.6f64, 0.8f64);
    let mut rotated = 0.0;
    for l in 0..5 {
        let mut e = vec![0.0; 5];
        match l {
            0 => {
                e[0] = c / g.weights()[0].sqrt();
                e[1] = s / g.weights()[1].sqrt();
            }
            1 => {
                e[0] = -s / g.weights()[0].sqrt();
                e[1] = c / g.weights()[1].sqrt();
            }
            _ => e[l] = 1.0 / g.weights()[l].sqrt(),
        }
        let e = curve_on(&g, e);
        rotated += inner(&apply(&a, &e).unwrap(), &apply(&b, &e).unwrap()).unwrap();
    }
    assert!((rotated - brute).abs() <= 1e-10);
}

#[test]
fn quadrature_of_identity_function() {
    let mut prev_err = f64::INFINITY;
    for m in [10, 100, 1000] {
        let g = make_equidistant_grid(m).unwrap();
        let u = Curve::from_fn(g, |t| t);
        let val = inner(&u, &u).unwrap();
        let direct: f64 = (1..=m).map(|j| (j as f64 / m as f64).powi(2) / m as f64).sum();
        assert!((val - direct).abs() <= 1e-14);
        let err = (val - 1.0 / 3.0).abs();
        assert!(err < prev_err);
        prev_err = err;
    }
    let g = make_equidistant_grid(100).unwrap();
    let u = Curve::from_fn(g, |t| t);
    let direct: f64 = (1..=100).map(|j| (j as f64 / 100.0).powi(2) / 100.0).sum();
    assert_eq!(inner(&u, &u).unwrap(), direct);
}
