//! Argument definitions and subcommand handlers.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sscov::hilbert::Curve;
use sscov::io::{read_curve_csv, read_sample_csv, write_curve_csv, write_kernel_csv, write_matrix, write_sample_csv};
use sscov::location::{DEFAULT_MAX_ITER, DEFAULT_STEP_C, DEFAULT_STEP_GAMMA, DEFAULT_TOL};
use sscov::twosample::DEFAULT_NB;
use sscov::{
    eigendecompose, run_test_with, sign_cov, spatial_median_asgd, spatial_median_weiszfeld, Model, SimDesign,
    StatisticScope, TestMode, TestOptions,
};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::experiment::{classify_size, run_experiment};

#[derive(Debug, Parser)]
#[command(name = "sscov", version, about = "Spatial sign covariance analyses for functional data")]
pub struct Cli {
    /// Master seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MedianMethod {
    Weiszfeld,
    Asgd,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spatial median of a sample.
    Median {
        sample: PathBuf,
        #[arg(long, value_enum, default_value = "weiszfeld")]
        method: MedianMethod,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
        #[arg(long, default_value_t = DEFAULT_STEP_C)]
        step_c: f64,
        #[arg(long, default_value_t = DEFAULT_STEP_GAMMA)]
        step_gamma: f64,
    },
    /// Spatial sign covariance kernel about a center (default: the spatial median).
    Signcov {
        sample: PathBuf,
        #[arg(long)]
        center: Option<PathBuf>,
    },
    /// Spherical principal components of the sign covariance operator.
    Spca {
        sample: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        center: Option<PathBuf>,
    },
    /// Two-sample test for equal sign (or classical) covariance operators.
    Test2 {
        sample1: PathBuf,
        sample2: PathBuf,
        #[arg(long, default_value = "sign")]
        mode: TestMode,
        #[arg(long = "M", default_value_t = 10)]
        m_components: usize,
        #[arg(long, default_value_t = DEFAULT_NB)]
        nb: usize,
        #[arg(long, default_value = "projected")]
        statistic: StatisticScope,
        /// Also write the bootstrap null draws to this CSV file.
        #[arg(long)]
        null_draws: Option<PathBuf>,
    },
    /// Draw two samples from a simulation design.
    Simulate {
        #[arg(long, default_value = "null")]
        model: Model,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 100)]
        n1: usize,
        #[arg(long, default_value_t = 100)]
        n2: usize,
        #[arg(long, default_value_t = 100)]
        m: usize,
        /// Contamination probability; omit for clean samples.
        #[arg(long)]
        contaminate: Option<f64>,
        #[arg(long, default_value_t = 0)]
        replication: u64,
    },
    /// Monte Carlo experiment from a TOML or JSON configuration.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
}

fn out_dir(cli_out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = cli_out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn emit_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(dir.join(name), format!("{text}\n"))?;
    // a closed stdout (e.g. piped into `head`) is not an error
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn center_for(sample: &[Curve], path: &Option<PathBuf>) -> Result<Curve> {
    match path {
        Some(p) => Ok(read_curve_csv(p, sample[0].grid().clone())?),
        None => Ok(spatial_median_weiszfeld(sample, DEFAULT_TOL, DEFAULT_MAX_ITER)?.estimate),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::InvalidConfig("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    }
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Median { sample, method, tol, max_iter, step_c, step_gamma } => {
            let dir = out_dir(&cli.out)?;
            let x = read_sample_csv(&sample)?;
            let res = match method {
                MedianMethod::Weiszfeld => spatial_median_weiszfeld(&x, tol, max_iter)?,
                MedianMethod::Asgd => spatial_median_asgd(&x, step_c, step_gamma, seed)?,
            };
            write_curve_csv(&dir.join("median.csv"), &res.estimate)?;
            emit_json(&dir, "median.json", &res.diagnostics())
        }
        Command::Signcov { sample, center } => {
            let dir = out_dir(&cli.out)?;
            let x = read_sample_csv(&sample)?;
            let c = center_for(&x, &center)?;
            let res = sign_cov(&x, &c)?;
            write_kernel_csv(&dir.join("signcov_kernel.csv"), res.operator.kernel())?;
            emit_json(&dir, "signcov.json", &res.diagnostics())
        }
        Command::Spca { sample, k, center } => {
            let dir = out_dir(&cli.out)?;
            let x = read_sample_csv(&sample)?;
            let c = center_for(&x, &center)?;
            let op = sign_cov(&x, &c)?.operator;
            let sys = eigendecompose(&op, k)?;
            write_matrix(File::create(dir.join("eigenvalues.csv"))?, sys.values.iter().map(std::slice::from_ref))?;
            write_matrix(File::create(dir.join("eigenfunctions.csv"))?, sys.functions.iter().map(|f| f.values()))?;
            #[derive(Serialize)]
            struct Summary {
                trace: f64,
                eigenvalues: Vec<f64>,
                explained_fraction: Vec<f64>,
            }
            let summary = Summary {
                trace: sys.op_trace,
                explained_fraction: (1..=sys.len()).map(|j| sys.explained_fraction(j)).collect(),
                eigenvalues: sys.values.clone(),
            };
            emit_json(&dir, "spca.json", &summary)
        }
        Command::Test2 { sample1, sample2, mode, m_components, nb, statistic, null_draws } => {
            let dir = out_dir(&cli.out)?;
            let x1 = read_sample_csv(&sample1)?;
            let x2 = read_sample_csv(&sample2)?;
            let mut opts = TestOptions::new(m_components, nb, mode, seed);
            opts.scope = statistic;
            let res = run_test_with(&x1, &x2, &opts)?;
            if let Some(path) = null_draws {
                write_matrix(File::create(path)?, res.null_draws.iter().map(std::slice::from_ref))?;
            }
            #[derive(Serialize)]
            struct Report<'a> {
                mode: TestMode,
                statistic_scope: StatisticScope,
                statistic: f64,
                full_statistic: f64,
                p_value: f64,
                thetas: &'a [f64],
                #[serde(rename = "M")]
                m: usize,
                q_n: usize,
                n_clipped: usize,
                explained_fraction: f64,
                n1: usize,
                n2: usize,
                #[serde(rename = "N_b")]
                n_b: usize,
                seed: u64,
            }
            let report = Report {
                mode,
                statistic_scope: res.scope,
                statistic: res.statistic,
                full_statistic: res.full_statistic,
                p_value: res.p_value,
                thetas: &res.spectrum.thetas,
                m: res.spectrum.m,
                q_n: res.spectrum.q_n,
                n_clipped: res.spectrum.n_clipped,
                explained_fraction: res.spectrum.explained_fraction,
                n1: res.n1,
                n2: res.n2,
                n_b: nb,
                seed,
            };
            emit_json(&dir, "test2.json", &report)
        }
        Command::Simulate { model, delta, n1, n2, m, contaminate, replication } => {
            let dir = out_dir(&cli.out)?;
            let mut design = SimDesign { model, delta, ..SimDesign::null(n1, n2, m, seed) };
            if let Some(eps) = contaminate {
                design.contaminated = true;
                design.epsilon = eps;
            }
            design.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
            let (s1, s2) = design.generate(replication)?;
            write_sample_csv(&dir.join("sample1.csv"), &s1)?;
            write_sample_csv(&dir.join("sample2.csv"), &s2)?;
            emit_json(&dir, "design.json", &design)
        }
        Command::Experiment { config } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(dir) = cli.out {
                cfg.output_dir = dir;
            }
            if let Some(s) = cli.seed {
                cfg.design.seed = s;
            }
            let out = run_experiment(&cfg)?;
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "model,delta,M,mode,contaminated,rejection_freq,size_class");
            for row in &out.rejection {
                let class = if row.delta == 0.0 {
                    format!("{:?}", classify_size(row.rejection_freq, row.replications, cfg.alpha, 0.01)).to_lowercase()
                } else {
                    "-".into()
                };
                let _ = writeln!(
                    stdout,
                    "{},{},{},{},{},{},{}",
                    row.model, row.delta, row.m, row.mode, row.contaminated, row.rejection_freq, class
                );
            }
            eprintln!(
                "{} replications ({} resumed) written to {}",
                out.records.len(),
                out.resumed,
                out.output_dir.display()
            );
            Ok(())
        }
    }
}
