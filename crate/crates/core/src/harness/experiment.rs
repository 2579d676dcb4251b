//! Multi-epoch benchmark: each epoch regenerates and recleans the data,
//! rebuilds the model and runs a batch of seeded plans.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cleaning::clean_dataset;
use crate::clock::Stopwatch;
use crate::datagen::{generate_dataset, Dataset};
use crate::dynamics::{self, CostWeight};
use crate::planner::{extract_path, plan, PlanResult};
use crate::surrogate::{Query, SurrogateModel};

use super::config::{derive_seed, stream, ExperimentConfig};
use super::{io, HarnessError};

/// Median squared distance between each held-out entry's end state and the
/// state reached by integrating the model's unperturbed steering prediction.
/// Diverging predictions count as infinite error. `None` for an empty set.
pub fn steering_error(model: &SurrogateModel, held_out: &Dataset, dt: f64, w: CostWeight) -> Option<f64> {
    let mut errors: Vec<f64> = held_out
        .entries
        .par_iter()
        .map(|e| {
            let p = model.predict_steering(&Query::from(e));
            match dynamics::integrate(e.x0, p.costate(), p.t_f, dt, w, None) {
                Ok(t) => {
                    let d = t.endpoint().distance(&e.x1);
                    d * d
                }
                Err(_) => f64::INFINITY,
            }
        })
        .collect();
    median(&mut errors)
}

/// Lower quartile, median and upper quartile (linear interpolation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
        })
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(quantile_sorted(values, 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub epoch: usize,
    pub run: usize,
    pub seed: u64,
    pub success: bool,
    pub nodes: usize,
    pub iterations: usize,
    pub wall_time: f64,
    pub min_cost_seen: f64,
    pub max_cost_seen: f64,
}

impl RunRecord {
    pub fn from_result(epoch: usize, run: usize, seed: u64, r: &PlanResult) -> Self {
        Self {
            epoch,
            run,
            seed,
            success: r.success,
            nodes: r.tree.len(),
            iterations: r.iterations_used,
            wall_time: r.wall_time,
            min_cost_seen: r.stats.min_cost_seen,
            max_cost_seen: r.stats.max_cost_seen,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub raw_entries: usize,
    pub train_entries: usize,
    pub clean_entries: usize,
    pub held_out_entries: usize,
    pub generate_secs: f64,
    pub clean_secs: f64,
    pub model_secs: f64,
    pub validity_threshold: f64,
    pub steering_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub runs: usize,
    pub success_rate: f64,
    /// Planning wall time of successful runs.
    pub plan_time: Option<Quartiles>,
    /// Node count of all runs.
    pub nodes: Option<Quartiles>,
    pub steering_error: Option<f64>,
    /// Generation plus cleaning time.
    pub offline_secs: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub epochs: Vec<GroupMetrics>,
    pub pooled: GroupMetrics,
}

fn group(epochs: &[&EpochRecord], runs: &[&RunRecord]) -> GroupMetrics {
    let successes: Vec<f64> = runs.iter().filter(|r| r.success).map(|r| r.wall_time).collect();
    let nodes: Vec<f64> = runs.iter().map(|r| r.nodes as f64).collect();
    let mut steer: Vec<f64> = epochs.iter().filter_map(|e| e.steering_error).collect();
    let offline: Vec<f64> = epochs.iter().map(|e| e.generate_secs + e.clean_secs).collect();
    GroupMetrics {
        runs: runs.len(),
        success_rate: if runs.is_empty() {
            0.0
        } else {
            successes.len() as f64 / runs.len() as f64
        },
        plan_time: Quartiles::of(&successes),
        nodes: Quartiles::of(&nodes),
        steering_error: median(&mut steer),
        offline_secs: Quartiles::of(&offline),
    }
}

impl MetricsReport {
    /// Aggregates stored records; independent of record order.
    pub fn from_records(epochs: &[EpochRecord], runs: &[RunRecord]) -> Self {
        let mut ids: Vec<usize> = epochs.iter().map(|e| e.epoch).collect();
        ids.sort_unstable();
        ids.dedup();
        let per_epoch = ids
            .iter()
            .map(|&id| {
                let es: Vec<&EpochRecord> = epochs.iter().filter(|e| e.epoch == id).collect();
                let mut rs: Vec<&RunRecord> = runs.iter().filter(|r| r.epoch == id).collect();
                rs.sort_by_key(|r| r.run);
                group(&es, &rs)
            })
            .collect();
        let mut all_runs: Vec<&RunRecord> = runs.iter().collect();
        all_runs.sort_by_key(|r| (r.epoch, r.run));
        let all_epochs: Vec<&EpochRecord> = epochs.iter().collect();
        Self {
            epochs: per_epoch,
            pooled: group(&all_epochs, &all_runs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub report: MetricsReport,
    pub epochs: Vec<EpochRecord>,
    pub runs: Vec<RunRecord>,
}

/// Offline phase of one epoch: generate, split off held-out simulations,
/// clean the rest and build the model.
pub fn prepare_epoch(cfg: &ExperimentConfig, epoch: usize) -> Result<(SurrogateModel, Dataset, EpochRecord), HarnessError> {
    let mut gen = cfg.gen.clone();
    gen.seed = derive_seed(cfg.seed, stream::GENERATE, epoch as u64);
    let started = Stopwatch::start();
    let raw = generate_dataset(&gen)?;
    let generate_secs = started.seconds();

    let (train, held_out) = if cfg.holdout_fraction > 0.0 {
        raw.split_by_simulation(cfg.holdout_fraction, derive_seed(cfg.seed, stream::SPLIT, epoch as u64))
    } else {
        (raw.clone(), Dataset::default())
    };
    let mut clean = cfg.clean;
    clean.seed = derive_seed(cfg.seed, stream::CLEAN, epoch as u64);
    let started = Stopwatch::start();
    let cleaned = clean_dataset(&train, &clean)?;
    let clean_secs = started.seconds();

    let started = Stopwatch::start();
    let model = SurrogateModel::build(&cleaned, &cfg.surrogate)?;
    let model_secs = started.seconds();
    let steering_error = steering_error(&model, &held_out, cfg.gen.dt, cfg.gen.w);
    let record = EpochRecord {
        epoch,
        raw_entries: raw.len(),
        train_entries: train.len(),
        clean_entries: cleaned.len(),
        held_out_entries: held_out.len(),
        generate_secs,
        clean_secs,
        model_secs,
        validity_threshold: model.validity_threshold(),
        steering_error,
    };
    Ok((model, held_out, record))
}

/// Seeded planning runs of one epoch against a shared model.
pub fn run_epoch_plans(cfg: &ExperimentConfig, epoch: usize, model: &SurrogateModel) -> Vec<(RunRecord, PlanResult)> {
    (0..cfg.runs_per_epoch)
        .into_par_iter()
        .map(|run| {
            let mut pc = cfg.planner;
            pc.seed = derive_seed(cfg.seed, stream::PLAN, (epoch * cfg.runs_per_epoch + run) as u64);
            let result = plan(&pc, model);
            (RunRecord::from_result(epoch, run, pc.seed, &result), result)
        })
        .collect()
}

/// Runs every epoch and, when `out_dir` is given, writes the report, the
/// per-run and per-epoch records, boxplot-ready timing data and the tree of
/// the first successful run of each epoch.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutcome, HarnessError> {
    let mut epochs = Vec::with_capacity(cfg.n_epochs);
    let mut runs = Vec::with_capacity(cfg.n_epochs * cfg.runs_per_epoch);
    for epoch in 0..cfg.n_epochs {
        let (model, _, record) = prepare_epoch(cfg, epoch)?;
        let results = run_epoch_plans(cfg, epoch, &model);
        if let Some(dir) = out_dir {
            if let Some((_, r)) = results.iter().find(|(_, r)| r.success) {
                let trees = dir.join("trees");
                io::write_tree(&r.tree, &trees.join(format!("epoch{epoch:02}_tree.csv")))?;
                io::write_path(&extract_path(&r.tree, *r.path.last().expect("successful run has a path")), &trees.join(format!("epoch{epoch:02}_path.csv")))?;
                io::write_dense_edges(&r.tree, cfg.gen.dt, cfg.gen.w, &trees.join(format!("epoch{epoch:02}_edges.csv")))?;
            }
        }
        runs.extend(results.into_iter().map(|(rec, _)| rec));
        epochs.push(record);
    }
    let report = MetricsReport::from_records(&epochs, &runs);
    if let Some(dir) = out_dir {
        write_outputs(dir, &report, &epochs, &runs)?;
    }
    Ok(ExperimentOutcome { report, epochs, runs })
}

fn write_outputs(dir: &Path, report: &MetricsReport, epochs: &[EpochRecord], runs: &[RunRecord]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| HarnessError::Format(e.to_string()))?;
    let path = dir.join("report.json");
    std::fs::write(&path, json).map_err(|e| HarnessError::io(&path, e))?;
    write_csv(&dir.join("runs.csv"), runs)?;
    write_csv(&dir.join("epochs.csv"), epochs)?;

    let path = dir.join("plan_times.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?);
    let io_err = |e| HarnessError::io(&path, e);
    writeln!(f, "epoch,run,success,wall_time,nodes").map_err(io_err)?;
    for r in runs {
        writeln!(f, "{},{},{},{},{}", r.epoch, r.run, r.success, r.wall_time, r.nodes).map_err(io_err)?;
    }
    f.flush().map_err(io_err)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Format(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    read_csv(path)
}

pub fn read_epochs(path: &Path) -> Result<Vec<EpochRecord>, HarnessError> {
    read_csv(path)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Format(e.to_string()))?;
    r.deserialize().map(|row| row.map_err(|e| HarnessError::Format(e.to_string()))).collect()
}
