//! Robust functional data analysis with spatial sign covariance operators.
//!
//! Curves are sampled on a shared [`Grid`] whose quadrature weights define
//! the L2 inner product. On top of that the crate provides
//!
//! * spatial median estimators ([`location`]),
//! * the sample spatial sign covariance operator and its center-perturbation
//!   operators ([`signcov`]),
//! * spherical principal components ([`spca`]),
//! * a two-sample test for equality of sign (or covariance) operators with a
//!   weighted chi-square bootstrap ([`twosample`]),
//! * seeded generators for the Brownian-motion Monte Carlo designs
//!   ([`simgen`]).

pub mod error;
pub mod hilbert;
pub mod io;
pub mod location;
pub mod rng;
pub mod signcov;
pub mod simgen;
pub mod spca;
pub mod twosample;

pub use error::{Error, Result};
pub use hilbert::{
    apply, hs_inner, hs_norm, inner, make_equidistant_grid, norm, sign, tensor, Curve, Grid, HSOperator,
};
pub use location::{spatial_median, spatial_median_asgd, spatial_median_weiszfeld, MedianResult};
pub use signcov::{empirical_f, empirical_g, empirical_s, shift_correction, sign_cov, SignCovResult};
pub use simgen::{Model, SimDesign};
pub use spca::{align_sign, eigendecompose, eigenprojection, resolvent_delta, shrinkage_factor_mc, EigenSystem};
pub use twosample::{
    bootstrap_null, estimate_theta_spectrum, run_test, run_test_with, statistic_classical, statistic_sign,
    StatisticScope, TestMode, TestOptions, TestResult, ThetaSpectrum,
};
