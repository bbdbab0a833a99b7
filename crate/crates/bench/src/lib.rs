//! Fixtures shared by the criterion benchmarks.

use sscov::simgen::SimDesign;
use sscov::Curve;

/// Two null-design samples of the size used in the Monte Carlo study.
pub fn null_samples(n: usize, m: usize, seed: u64) -> (Vec<Curve>, Vec<Curve>) {
    SimDesign::null(n, n, m, seed)
        .generate(0)
        .expect("valid null design")
}
