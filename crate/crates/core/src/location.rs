//! Spatial (L1) median of a functional sample.
//!
//! Two estimators are provided: a Weiszfeld fixed-point iteration, which is
//! the default, and a single-pass averaged stochastic gradient scheme.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{median_of, sample_grid, zero_threshold, Curve};
use crate::rng::stream_rng;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_STEP_C: f64 = 1.0;
pub const DEFAULT_STEP_GAMMA: f64 = 0.6;

/// Slack allowed on the per-step objective decrease.
const OBJECTIVE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MedianResult {
    pub estimate: Curve,
    pub iterations: usize,
    /// For Weiszfeld, `converged` implies `final_step <= tol`. The averaged
    /// stochastic gradient estimator always completes its pass and reports
    /// `converged = true`.
    pub converged: bool,
    /// Relative L2 size of the last accepted step.
    pub final_step: f64,
    /// `(1/n) sum_i ||X_i - estimate||`.
    pub objective: f64,
    /// Objective at the starting point and after each accepted Weiszfeld
    /// step; empty for the averaged gradient estimator.
    pub objective_history: Vec<f64>,
}

/// Diagnostics record emitted alongside a median estimate.
#[derive(Debug, Clone, Serialize)]
pub struct MedianDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub final_step: f64,
}

impl MedianResult {
    pub fn diagnostics(&self) -> MedianDiagnostics {
        MedianDiagnostics {
            iterations: self.iterations,
            converged: self.converged,
            objective: self.objective,
            final_step: self.final_step,
        }
    }
}

/// Empirical spatial-median objective `(1/n) sum_i ||X_i - mu||`.
pub fn objective(sample: &[Curve], mu: &Curve) -> Result<f64> {
    let grid = sample_grid(sample)?;
    crate::hilbert::check_grids(&grid, mu.grid())?;
    let w = grid.weights();
    let total: f64 = sample.iter().map(|x| residual_norm(w, x.values(), mu.values())).sum();
    Ok(total / sample.len() as f64)
}

#[inline]
fn residual_norm(w: &[f64], x: &[f64], mu: &[f64]) -> f64 {
    w.iter()
        .zip(x)
        .zip(mu)
        .map(|((w, x), m)| {
            let d = x - m;
            w * d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Pointwise median across observations at each design point.
pub fn coordinatewise_median(sample: &[Curve]) -> Result<Curve> {
    let grid = sample_grid(sample)?;
    let mut column = vec![0.0; sample.len()];
    let values = (0..grid.m())
        .map(|j| {
            for (slot, x) in column.iter_mut().zip(sample) {
                *slot = x.values()[j];
            }
            median_of(&column)
        })
        .collect();
    Curve::new(grid, values)
}

/// Weiszfeld iteration for the spatial median, started at the coordinatewise
/// median.
///
/// Observations whose residual is within the zero threshold of the current
/// iterate are dropped from that update. A step that would increase the
/// objective (possible only after such an exclusion) is rejected and the
/// current iterate is returned as converged.
pub fn spatial_median_weiszfeld(sample: &[Curve], tol: f64, max_iter: usize) -> Result<MedianResult> {
    let grid = sample_grid(sample)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let w = grid.weights();
    let m = grid.m();

    let mut mu = coordinatewise_median(sample)?.into_values();
    let mut dists: Vec<f64> = sample.iter().map(|x| residual_norm(w, x.values(), &mu)).collect();
    let eps0 = zero_threshold(&dists);
    let mut obj = dists.iter().sum::<f64>() / sample.len() as f64;
    let mut history = vec![obj];

    let mut iterations = 0;
    let mut converged = false;
    let mut final_step = f64::INFINITY;
    let mut next = vec![0.0; m];

    for k in 1..=max_iter {
        next.iter_mut().for_each(|v| *v = 0.0);
        let mut denom = 0.0;
        for (x, &d) in sample.iter().zip(&dists) {
            if d > eps0 && d > 0.0 {
                let inv = 1.0 / d;
                denom += inv;
                for (acc, xv) in next.iter_mut().zip(x.values()) {
                    *acc += inv * xv;
                }
            }
        }
        if denom == 0.0 {
            // every observation sits on the iterate
            converged = true;
            final_step = 0.0;
            break;
        }
        next.iter_mut().for_each(|v| *v /= denom);

        let next_dists: Vec<f64> = sample.iter().map(|x| residual_norm(w, x.values(), &next)).collect();
        let next_obj = next_dists.iter().sum::<f64>() / sample.len() as f64;
        if next_obj > obj + OBJECTIVE_SLACK * obj.max(1.0) {
            converged = true;
            final_step = 0.0;
            break;
        }

        let step = residual_norm(w, &next, &mu);
        let scale = residual_norm(w, &mu, &vec![0.0; m]).max(1.0);
        final_step = step / scale;

        std::mem::swap(&mut mu, &mut next);
        dists = next_dists;
        obj = next_obj;
        history.push(obj);
        iterations = k;

        if final_step <= tol {
            converged = true;
            break;
        }
    }

    Ok(MedianResult {
        estimate: Curve::new(grid, mu)?,
        iterations,
        converged,
        final_step,
        objective: obj,
        objective_history: history,
    })
}

/// [`spatial_median_weiszfeld`] with the default tolerance and iteration cap.
pub fn spatial_median(sample: &[Curve]) -> Result<MedianResult> {
    spatial_median_weiszfeld(sample, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Averaged stochastic gradient estimate of the spatial median.
///
/// One pass over the sample in an order shuffled by `seed`, with steps
/// `mu_{k+1} = mu_k + c k^{-gamma} s(X_{k+1} - mu_k)`. Returns the running
/// average of the iterates, starting from the coordinatewise median.
pub fn spatial_median_asgd(sample: &[Curve], step_c: f64, step_gamma: f64, seed: u64) -> Result<MedianResult> {
    let grid = sample_grid(sample)?;
    if sample.len() < 2 {
        return Err(Error::InvalidArgument("averaged gradient median needs n >= 2".into()));
    }
    if !(step_c.is_finite() && step_c > 0.0) {
        return Err(Error::InvalidArgument(format!("step_c must be positive, got {step_c}")));
    }
    if !(step_gamma > 0.5 && step_gamma < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "step_gamma must lie in (1/2, 1), got {step_gamma}"
        )));
    }
    let w = grid.weights();

    let mut mu = coordinatewise_median(sample)?.into_values();
    let init_dists: Vec<f64> = sample.iter().map(|x| residual_norm(w, x.values(), &mu)).collect();
    let eps0 = zero_threshold(&init_dists);
    let mut avg = mu.clone();

    let mut order: Vec<usize> = (0..sample.len()).collect();
    order.shuffle(&mut stream_rng(seed, 0));

    let mut final_step = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        let k = k + 1;
        let x = sample[idx].values();
        let d = residual_norm(w, x, &mu);
        if d > eps0 && d > 0.0 {
            let gain = step_c * (k as f64).powf(-step_gamma) / d;
            for (m, xv) in mu.iter_mut().zip(x) {
                *m += gain * (xv - *m);
            }
        }
        let mut step_sq = 0.0;
        for ((a, m), wj) in avg.iter_mut().zip(&mu).zip(w) {
            let delta = (m - *a) / (k + 1) as f64;
            *a += delta;
            step_sq += wj * delta * delta;
        }
        let scale = residual_norm(w, &avg, &vec![0.0; avg.len()]).max(1.0);
        final_step = step_sq.sqrt() / scale;
    }

    let estimate = Curve::new(grid, avg)?;
    let objective = objective(sample, &estimate)?;
    Ok(MedianResult {
        estimate,
        iterations: sample.len(),
        converged: true,
        final_step,
        objective,
        objective_history: Vec::new(),
    })
}
