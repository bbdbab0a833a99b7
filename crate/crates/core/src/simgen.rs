//! Seeded process generators for the Monte Carlo study.
//!
//! Replication `r` of a [`SimDesign`] draws everything (both samples and the
//! contamination) from stream `r` of the design seed, see [`crate::rng`].

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{make_equidistant_grid, Curve, Grid};
use crate::rng::{stream_rng, StreamRng};

/// Range parameter of the exponential kernel used by model 2.
pub const MODEL2_RANGE: f64 = 0.2;
const JITTERS: [f64; 3] = [1e-10, 1e-9, 1e-8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Two independent Brownian motion samples.
    #[serde(alias = "null")]
    NullBm,
    /// `X_2 = Y_1 + δ_n Y_2^2`, `Y_1, Y_2` independent Brownian motions.
    Model1,
    /// `X_2 = Y_1 + δ_n Y_2`, `Y_2` Gaussian with kernel `exp(-|s-t|/0.2)`.
    Model2,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::NullBm => "null",
            Model::Model1 => "model1",
            Model::Model2 => "model2",
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "null" | "null_bm" => Ok(Model::NullBm),
            "model1" => Ok(Model::Model1),
            "model2" => Ok(Model::Model2),
            other => Err(Error::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

fn default_epsilon() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub model: Model,
    /// `Δ`; the perturbation size is `δ_n = Δ n^{-1/4}` with `n = n1 + n2`.
    #[serde(default)]
    pub delta: f64,
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    #[serde(default)]
    pub contaminated: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimDesign {
    /// Null design with clean samples.
    pub fn null(n1: usize, n2: usize, m: usize, seed: u64) -> Self {
        SimDesign {
            model: Model::NullBm,
            delta: 0.0,
            n1,
            n2,
            m,
            contaminated: false,
            epsilon: default_epsilon(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::InvalidArgument(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::InvalidArgument("sample sizes must be positive".into()));
        }
        if self.m < 2 {
            return Err(Error::InvalidArgument(format!("m must be >= 2, got {}", self.m)));
        }
        Ok(())
    }

    pub fn delta_n(&self) -> f64 {
        match self.model {
            Model::NullBm => 0.0,
            Model::Model1 | Model::Model2 => self.delta * ((self.n1 + self.n2) as f64).powf(-0.25),
        }
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        make_equidistant_grid(self.m)
    }

    /// Both samples for replication `replication`.
    pub fn generate(&self, replication: u64) -> Result<(Vec<Curve>, Vec<Curve>)> {
        self.validate()?;
        let grid = self.grid()?;
        let mut rng = stream_rng(self.seed, replication);
        let sample1 = brownian_motions(&grid, self.n1, &mut rng);
        let delta_n = self.delta_n();
        let sample2 = if delta_n == 0.0 {
            brownian_motions(&grid, self.n2, &mut rng)
        } else {
            match self.model {
                Model::NullBm => unreachable!("null design has δ_n = 0"),
                Model::Model1 => {
                    let y1 = brownian_motions(&grid, self.n2, &mut rng);
                    let y2 = brownian_motions(&grid, self.n2, &mut rng);
                    combine(&y1, &y2, |a, b| a + delta_n * b * b)?
                }
                Model::Model2 => {
                    let y1 = brownian_motions(&grid, self.n2, &mut rng);
                    let factor = exponential_kernel_factor(&grid, MODEL2_RANGE)?;
                    let y2 = gaussian_from_factor(&grid, &factor, self.n2, &mut rng);
                    combine(&y1, &y2, |a, b| a + delta_n * b)?
                }
            }
        };
        if self.contaminated {
            let c1 = contaminate_with(&sample1, self.epsilon, &mut rng)?;
            let c2 = contaminate_with(&sample2, self.epsilon, &mut rng)?;
            Ok((c1, c2))
        } else {
            Ok((sample1, sample2))
        }
    }
}

fn combine(a: &[Curve], b: &[Curve], f: impl Fn(f64, f64) -> f64) -> Result<Vec<Curve>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let v = x.values().iter().zip(y.values()).map(|(&p, &q)| f(p, q)).collect();
            Curve::new(x.grid().clone(), v)
        })
        .collect()
}

/// Brownian paths on `grid` via cumulative Gaussian increments with variance
/// equal to the spacing (`t_0 = 0`).
pub fn brownian_motions<R: Rng + ?Sized>(grid: &Arc<Grid>, count: usize, rng: &mut R) -> Vec<Curve> {
    let sd: Vec<f64> = grid
        .points()
        .iter()
        .scan(0.0, |prev, &t| {
            let h = t - *prev;
            *prev = t;
            Some(h.sqrt())
        })
        .collect();
    (0..count)
        .map(|_| {
            let mut w = 0.0;
            let values = sd
                .iter()
                .map(|s| {
                    let z: f64 = StandardNormal.sample(rng);
                    w += s * z;
                    w
                })
                .collect();
            Curve::new(grid.clone(), values).expect("length matches grid")
        })
        .collect()
}

/// `count` standard Brownian motions on the equidistant grid with `m` points.
pub fn gen_bm(m: usize, count: usize, seed: u64) -> Result<Vec<Curve>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".into()));
    }
    let grid = make_equidistant_grid(m)?;
    Ok(brownian_motions(&grid, count, &mut stream_rng(seed, 0)))
}

pub fn gen_model1(design: &SimDesign) -> Result<(Vec<Curve>, Vec<Curve>)> {
    if design.model != Model::Model1 {
        return Err(Error::InvalidArgument(format!("expected model1 design, got {}", design.model)));
    }
    design.generate(0)
}

pub fn gen_model2(design: &SimDesign) -> Result<(Vec<Curve>, Vec<Curve>)> {
    if design.model != Model::Model2 {
        return Err(Error::InvalidArgument(format!("expected model2 design, got {}", design.model)));
    }
    design.generate(0)
}

/// Lower Cholesky factor of `[exp(-|t_i - t_j| / range)]`, with diagonal
/// jitter escalated from 1e-10 to 1e-8 if needed.
pub fn exponential_kernel_factor(grid: &Arc<Grid>, range: f64) -> Result<DMatrix<f64>> {
    let p = grid.points();
    let m = grid.m();
    let base = DMatrix::from_fn(m, m, |i, j| (-(p[i] - p[j]).abs() / range).exp());
    for jitter in JITTERS {
        let k = &base + DMatrix::identity(m, m) * jitter;
        if let Some(ch) = Cholesky::new(k) {
            return Ok(ch.l());
        }
    }
    Err(Error::NumericalFailure(
        "Cholesky factorization failed after jitter escalation".into(),
    ))
}

/// Zero-mean Gaussian curves `L z` for a precomputed kernel factor `L`.
pub fn gaussian_from_factor<R: Rng + ?Sized>(
    grid: &Arc<Grid>,
    factor: &DMatrix<f64>,
    count: usize,
    rng: &mut R,
) -> Vec<Curve> {
    let m = grid.m();
    (0..count)
        .map(|_| {
            let z = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
            let y = factor * z;
            Curve::new(grid.clone(), y.as_slice().to_vec()).expect("length matches grid")
        })
        .collect()
}

/// Draws from the model 2 perturbation process `Y_2`.
pub fn gen_exponential_gp(m: usize, count: usize, seed: u64) -> Result<Vec<Curve>> {
    let grid = make_equidistant_grid(m)?;
    let factor = exponential_kernel_factor(&grid, MODEL2_RANGE)?;
    Ok(gaussian_from_factor(&grid, &factor, count, &mut stream_rng(seed, 0)))
}

/// Scales each curve, with probability `epsilon`, by an independent
/// `|standard Cauchy|` multiplier.
pub fn contaminate(sample: &[Curve], epsilon: f64, seed: u64) -> Result<Vec<Curve>> {
    contaminate_with(sample, epsilon, &mut stream_rng(seed, 0))
}

pub fn contaminate_with(sample: &[Curve], epsilon: f64, rng: &mut StreamRng) -> Result<Vec<Curve>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok(sample
        .iter()
        .map(|x| {
            let hit = rng.random::<f64>() < epsilon;
            if hit {
                let u: f64 = rng.random();
                let v = (std::f64::consts::PI * (u - 0.5)).tan().abs();
                x.scale(v)
            } else {
                x.clone()
            }
        })
        .collect())
}

/// Elliptical t-process `X = V Y`, `Y` a Brownian motion and
/// `V = sqrt(k / C)`, `C ~ χ²_k`.
pub fn gen_elliptical_t(m: usize, count: usize, df: f64, seed: u64) -> Result<Vec<Curve>> {
    if !(df.is_finite() && df >= 1.0) {
        return Err(Error::InvalidArgument(format!("degrees of freedom must be >= 1, got {df}")));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".into()));
    }
    let grid = make_equidistant_grid(m)?;
    let chi = ChiSquared::new(df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = stream_rng(seed, 0);
    let ys = brownian_motions(&grid, count, &mut rng);
    Ok(ys
        .into_iter()
        .map(|y| {
            let c: f64 = chi.sample(&mut rng);
            y.scale((df / c).sqrt())
        })
        .collect())
}
