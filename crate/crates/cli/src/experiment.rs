//! Monte Carlo experiments: parallel seeded replications, an append-only
//! checkpoint, and the rejection / explained-variance tables.
//!
//! Replication `r` of a sweep cell draws its samples from stream `r` of the
//! design seed, so it can be regenerated in isolation. The bootstrap for the
//! `k`-th (mode, M) pair of that replication uses seed
//! `child_seed(child_seed(seed, r), k)`. Results are merged in replication
//! order, so neither the worker count nor a resume changes any table.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sscov::rng::child_seed;
use sscov::{run_test_with, SimDesign, TestMode, TestOptions};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{ExperimentConfig, Fixture};
use crate::error::{CliError, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.jsonl";
pub const CHECKPOINT_CONFIG_FILE: &str = "checkpoint.config.json";
pub const REJECTION_FILE: &str = "rejection_table.csv";
pub const EXPLAINED_FILE: &str = "explained_variance.csv";
pub const LONG_FILE: &str = "results_long.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub mode: TestMode,
    #[serde(rename = "M")]
    pub m: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub explained_fraction: f64,
}

/// Everything computed for one replication of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub cell: usize,
    pub replication: usize,
    pub delta: f64,
    pub contaminated: bool,
    pub outcomes: Vec<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub model: String,
    pub delta: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub mode: String,
    pub contaminated: bool,
    pub rejection_freq: f64,
    pub replications: usize,
    #[serde(rename = "N_b")]
    pub n_b: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedRow {
    pub model: String,
    pub delta: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub mode: String,
    pub contaminated: bool,
    pub explained_fraction: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub model: String,
    pub delta: f64,
    pub contaminated: bool,
    pub replication: usize,
    pub mode: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rejection: Vec<RejectionRow>,
    pub explained: Vec<ExplainedRow>,
    pub records: Vec<ReplicationRecord>,
    /// Replications taken from an existing checkpoint.
    pub resumed: usize,
    pub alpha: f64,
    pub output_dir: PathBuf,
}

impl ExperimentOutput {
    pub fn rejection_freq(&self, mode: TestMode, m: usize, delta: f64, contaminated: bool) -> Option<f64> {
        self.rejection
            .iter()
            .find(|r| r.mode == mode.as_str() && r.m == m && r.delta == delta && r.contaminated == contaminated)
            .map(|r| r.rejection_freq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Accurate,
    Conservative,
    Liberal,
}

/// `α ± z_{1-γ/2} sqrt(α(1-α)/N)`.
pub fn size_band(n: usize, alpha: f64, gamma: f64) -> (f64, f64) {
    let z = Normal::standard().inverse_cdf(1.0 - gamma / 2.0);
    let half = z * (alpha * (1.0 - alpha) / n as f64).sqrt();
    (alpha - half, alpha + half)
}

/// Classifies an empirical size against the binomial band of [`size_band`].
pub fn classify_size(pi_n: f64, n: usize, alpha: f64, gamma: f64) -> SizeClass {
    let (lo, hi) = size_band(n, alpha, gamma);
    if pi_n < lo {
        SizeClass::Conservative
    } else if pi_n > hi {
        SizeClass::Liberal
    } else {
        SizeClass::Accurate
    }
}

/// A (Δ, contamination) combination of the sweep.
#[derive(Debug, Clone)]
struct Cell {
    design: SimDesign,
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &contaminated in &cfg.contamination_levels() {
        for &delta in &cfg.deltas() {
            out.push(Cell { design: SimDesign { delta, contaminated, ..cfg.design.clone() } });
        }
    }
    out
}

fn run_replication(cfg: &ExperimentConfig, modes: &[TestMode], index: usize, cell: &Cell, r: usize) -> Result<ReplicationRecord> {
    let (s1, s2) = cell.design.generate(r as u64)?;
    let s2 = match cfg.fixture {
        Fixture::Simulated => s2,
        Fixture::Identical => s1.clone(),
    };
    let rep_seed = child_seed(cfg.design.seed, r as u64);
    let mut outcomes = Vec::with_capacity(modes.len() * cfg.m_list.len());
    for &mode in modes {
        for &m in &cfg.m_list {
            let k = outcomes.len() as u64;
            let mut opts = TestOptions::new(m, cfg.n_b, mode, child_seed(rep_seed, k));
            opts.scope = cfg.scope;
            let res = run_test_with(&s1, &s2, &opts)?;
            outcomes.push(Outcome {
                mode,
                m,
                statistic: res.statistic,
                p_value: res.p_value,
                explained_fraction: res.spectrum.explained_fraction,
            });
        }
    }
    Ok(ReplicationRecord {
        cell: index,
        replication: r,
        delta: cell.design.delta,
        contaminated: cell.design.contaminated,
        outcomes,
    })
}

/// The parts of the configuration a checkpoint must agree with.
fn fingerprint(cfg: &ExperimentConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("output_dir");
        obj.remove("chunk_size");
        obj.remove("replications");
    }
    v
}

/// Reads the valid records of a checkpoint. A torn final line (from an
/// interrupted write) is dropped and the file rewritten without it.
fn load_checkpoint(path: &Path) -> Result<Vec<ReplicationRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut records = Vec::new();
    let mut torn = false;
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ReplicationRecord>(&line) {
            Ok(rec) => records.push(rec),
            Err(_) => torn = true,
        }
    }
    if torn {
        let mut f = File::create(path)?;
        for rec in &records {
            writeln!(f, "{}", serde_json::to_string(rec)?)?;
        }
        f.sync_all()?;
    }
    Ok(records)
}

fn prepare_checkpoint(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<ReplicationRecord>> {
    std::fs::create_dir_all(dir)?;
    let cfg_path = dir.join(CHECKPOINT_CONFIG_FILE);
    let fp = fingerprint(cfg);
    if cfg_path.exists() {
        let old: serde_json::Value = serde_json::from_reader(File::open(&cfg_path)?)?;
        if old != fp {
            return Err(CliError::InvalidConfig(format!(
                "{} belongs to a different configuration; use a fresh output_dir",
                dir.display()
            )));
        }
    } else {
        serde_json::to_writer_pretty(File::create(&cfg_path)?, &fp)?;
    }
    load_checkpoint(&dir.join(CHECKPOINT_FILE))
}

/// Runs every (Δ, contamination, mode, M) cell of the configuration,
/// resuming from `output_dir` if it holds a checkpoint of the same
/// configuration, and writes the three tables there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    let cells = cells(cfg);
    let modes = cfg.unique_modes();

    let mut done: BTreeMap<(usize, usize), ReplicationRecord> = BTreeMap::new();
    for rec in prepare_checkpoint(cfg, &dir)? {
        if rec.cell < cells.len() && rec.replication < cfg.replications {
            done.insert((rec.cell, rec.replication), rec);
        }
    }
    let resumed = done.len();

    let pending: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replications).map(move |r| (c, r)))
        .filter(|key| !done.contains_key(key))
        .collect();

    let mut log = OpenOptions::new().create(true).append(true).open(dir.join(CHECKPOINT_FILE))?;
    for chunk in pending.chunks(cfg.chunk_size) {
        let results: Vec<Result<ReplicationRecord>> = chunk
            .par_iter()
            .map(|&(c, r)| run_replication(cfg, &modes, c, &cells[c], r))
            .collect();
        for res in results {
            let rec = res?;
            writeln!(log, "{}", serde_json::to_string(&rec)?)?;
            done.insert((rec.cell, rec.replication), rec);
        }
        log.flush()?;
    }
    log.sync_all()?;

    let records: Vec<ReplicationRecord> = done.into_values().collect();
    let out = tabulate(cfg, &cells, &modes, records, resumed);
    write_tables(&out)?;
    Ok(out)
}

fn tabulate(
    cfg: &ExperimentConfig,
    cells: &[Cell],
    modes: &[TestMode],
    records: Vec<ReplicationRecord>,
    resumed: usize,
) -> ExperimentOutput {
    let model = cfg.design.model.to_string();
    let mut rejection = Vec::new();
    let mut explained = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        let recs: Vec<&ReplicationRecord> = records.iter().filter(|r| r.cell == c).collect();
        for &mode in modes {
            for &m in &cfg.m_list {
                let hits: Vec<&Outcome> = recs
                    .iter()
                    .flat_map(|r| r.outcomes.iter())
                    .filter(|o| o.mode == mode && o.m == m)
                    .collect();
                let n = hits.len();
                let rejections = hits.iter().filter(|o| o.p_value < cfg.alpha).count();
                let ev = hits.iter().map(|o| o.explained_fraction).sum::<f64>() / n as f64;
                rejection.push(RejectionRow {
                    model: model.clone(),
                    delta: cell.design.delta,
                    m,
                    mode: mode.to_string(),
                    contaminated: cell.design.contaminated,
                    rejection_freq: rejections as f64 / n as f64,
                    replications: n,
                    n_b: cfg.n_b,
                    seed: cfg.design.seed,
                });
                explained.push(ExplainedRow {
                    model: model.clone(),
                    delta: cell.design.delta,
                    m,
                    mode: mode.to_string(),
                    contaminated: cell.design.contaminated,
                    explained_fraction: ev,
                    replications: n,
                    seed: cfg.design.seed,
                });
            }
        }
    }
    ExperimentOutput { rejection, explained, records, resumed, alpha: cfg.alpha, output_dir: cfg.output_dir.clone() }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_tables(out: &ExperimentOutput) -> Result<()> {
    let dir = &out.output_dir;
    write_csv(&dir.join(REJECTION_FILE), &out.rejection)?;
    write_csv(&dir.join(EXPLAINED_FILE), &out.explained)?;
    let model = out.rejection.first().map(|r| r.model.clone()).unwrap_or_default();
    let long: Vec<LongRow> = out
        .records
        .iter()
        .flat_map(|rec| {
            let model = model.clone();
            rec.outcomes.iter().map(move |o| LongRow {
                model: model.clone(),
                delta: rec.delta,
                contaminated: rec.contaminated,
                replication: rec.replication,
                mode: o.mode.to_string(),
                m: o.m,
                statistic: o.statistic,
                p_value: o.p_value,
                rejected: o.p_value < out.alpha,
            })
        })
        .collect();
    write_csv(&dir.join(LONG_FILE), &long)
}
