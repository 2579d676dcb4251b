//! Flat-file formats: datasets, planning trees, paths and dense edge
//! trajectories, all as comma-separated text with a header line.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, DatasetEntry, SteeringParams};
use crate::dynamics::{self, CostWeight, State};
use crate::planner::{PathStep, Tree};

use super::HarnessError;

pub const DATASET_HEADER: &str = "theta0,omega0,theta1,omega1,cost,lam_theta0,lam_omega0,t_f,sim_id";
pub const TREE_HEADER: &str = "node_id,parent_id,theta,omega,edge_cost,lam_theta0,lam_omega0,t_f";
pub const PATH_HEADER: &str = "step,node_id,theta,omega,lam_theta0,lam_omega0,t_f";
pub const DENSE_HEADER: &str = "node_id,parent_id,time,theta,omega";

#[derive(Debug, Serialize, Deserialize)]
struct EntryRecord {
    theta0: f64,
    omega0: f64,
    theta1: f64,
    omega1: f64,
    cost: f64,
    lam_theta0: f64,
    lam_omega0: f64,
    t_f: f64,
    sim_id: u64,
}

impl From<&DatasetEntry> for EntryRecord {
    fn from(e: &DatasetEntry) -> Self {
        Self {
            theta0: e.x0.theta,
            omega0: e.x0.omega,
            theta1: e.x1.theta,
            omega1: e.x1.omega,
            cost: e.cost,
            lam_theta0: e.params.lam_theta0,
            lam_omega0: e.params.lam_omega0,
            t_f: e.params.t_f,
            sim_id: e.sim_id,
        }
    }
}

impl From<EntryRecord> for DatasetEntry {
    fn from(r: EntryRecord) -> Self {
        Self {
            x0: State::new(r.theta0, r.omega0),
            x1: State::new(r.theta1, r.omega1),
            cost: r.cost,
            params: SteeringParams::new(r.lam_theta0, r.lam_omega0, r.t_f),
            sim_id: r.sim_id,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, HarnessError> {
    File::open(path).map(BufReader::new).map_err(|e| HarnessError::io(path, e))
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Format(e.to_string())
}

pub fn write_dataset_to<W: Write>(data: &Dataset, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for e in data.iter() {
        w.serialize(EntryRecord::from(e)).map_err(csv_err)?;
    }
    if data.is_empty() {
        w.write_record(DATASET_HEADER.split(',')).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::Format(e.to_string()))
}

pub fn read_dataset_from<R: Read>(input: R) -> Result<Dataset, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.join(",") != DATASET_HEADER {
        return Err(HarnessError::Format(format!("unexpected dataset header `{}`", header.join(","))));
    }
    let mut entries = Vec::new();
    for rec in r.deserialize::<EntryRecord>() {
        let e = DatasetEntry::from(rec.map_err(csv_err)?);
        if !(e.x0.is_finite() && e.x1.is_finite() && e.cost.is_finite() && e.params.is_valid()) {
            return Err(HarnessError::Format(format!("invalid dataset entry {}", entries.len() + 1)));
        }
        entries.push(e);
    }
    Ok(Dataset::new(entries))
}

pub fn write_dataset(data: &Dataset, path: &Path) -> Result<(), HarnessError> {
    write_dataset_to(data, create(path)?)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, HarnessError> {
    read_dataset_from(open(path)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_tree_to<W: Write>(tree: &Tree, mut out: W) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Format(e.to_string());
    writeln!(out, "{TREE_HEADER}").map_err(io)?;
    for (id, n) in tree.nodes.iter().enumerate() {
        let p = n.edge_params;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            id,
            n.parent.map(|p| p.to_string()).unwrap_or_default(),
            n.state.theta,
            n.state.omega,
            n.edge_cost,
            opt(p.map(|p| p.lam_theta0)),
            opt(p.map(|p| p.lam_omega0)),
            opt(p.map(|p| p.t_f)),
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_tree(tree: &Tree, path: &Path) -> Result<(), HarnessError> {
    write_tree_to(tree, create(path)?)
}

pub fn write_path_to<W: Write>(path: &[PathStep], mut out: W) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Format(e.to_string());
    writeln!(out, "{PATH_HEADER}").map_err(io)?;
    for (i, s) in path.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i,
            s.node,
            s.state.theta,
            s.state.omega,
            opt(s.params.map(|p| p.lam_theta0)),
            opt(s.params.map(|p| p.lam_omega0)),
            opt(s.params.map(|p| p.t_f)),
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_path(path: &[PathStep], file: &Path) -> Result<(), HarnessError> {
    write_path_to(path, create(file)?)
}

/// Re-integrates every edge and writes its sampled trajectory, for plotting
/// curved edges.
pub fn write_dense_edges_to<W: Write>(tree: &Tree, dt: f64, w: CostWeight, mut out: W) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Format(e.to_string());
    writeln!(out, "{DENSE_HEADER}").map_err(io)?;
    for (id, n) in tree.nodes.iter().enumerate() {
        let (Some(parent), Some(p)) = (n.parent, n.edge_params) else {
            continue;
        };
        let from = tree.nodes[parent].state;
        let traj = dynamics::integrate(from, p.costate(), p.t_f, dt, w, None).map_err(|e| HarnessError::Format(e.to_string()))?;
        for s in &traj.samples {
            writeln!(out, "{},{},{},{},{}", id, parent, s.time, s.state.theta, s.state.omega).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn write_dense_edges(tree: &Tree, dt: f64, w: CostWeight, path: &Path) -> Result<(), HarnessError> {
    write_dense_edges_to(tree, dt, w, create(path)?)
}
