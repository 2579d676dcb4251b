use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kinolearn::cleaning::{clean_with_report, CleanConfig};
use kinolearn::datagen::generate_dataset;
use kinolearn::harness::{config::FlatConfig, experiment, io, HarnessError};
use kinolearn::planner::{extract_path, plan};
use kinolearn::{Dataset, State, SurrogateModel};

#[derive(Parser)]
#[command(name = "kinolearn", version, about = "Learning-based kinodynamic RRT for the pendulum")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat TOML config; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample optimal trajectories into a dataset file
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of simulations
        #[arg(long)]
        n_sims: Option<usize>,
    },
    /// Remove locally suboptimal entries from a dataset
    Clean {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        d: Option<f64>,
        #[arg(long)]
        k_max: Option<usize>,
        /// Challenge every pair instead of sampling
        #[arg(long)]
        exhaustive: bool,
    },
    /// Grow a tree from start to goal using a (cleaned) dataset
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// "theta,omega"
        #[arg(long, allow_hyphen_values = true)]
        start: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        goal: Option<String>,
        /// Output directory for tree.csv, path.csv and summary.json
        #[arg(long)]
        out: PathBuf,
        /// Also write the integrated trajectory of every edge
        #[arg(long)]
        dense: bool,
    },
    /// Multi-epoch benchmark: generate, clean and plan per epoch
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Print dataset and model statistics as JSON
    Inspect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Print the effective configuration
    Config {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<FlatConfig> {
    let mut cfg = match &common.config {
        Some(p) => FlatConfig::load(p)?,
        None => FlatConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn parse_state(text: &str) -> Result<State> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [t, w] = parts.as_slice() else {
        bail!("expected \"theta,omega\", got `{text}`");
    };
    let s = State::new(t.parse().context("theta")?, w.parse().context("omega")?);
    if !s.is_finite() {
        bail!("non-finite state `{text}`");
    }
    Ok(s)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Generate { common, out, n_sims } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = n_sims {
                cfg.n_sims = n;
            }
            cfg.validate()?;
            let started = std::time::Instant::now();
            let data = generate_dataset(&cfg.gen(cfg.seed))?;
            let secs = started.elapsed().as_secs_f64();
            io::write_dataset(&data, &out)?;
            Ok(json!({"entries": data.len(), "simulations": data.simulation_count(), "seconds": secs, "out": out}))
        }
        Command::Clean { common, input, out, d, k_max, exhaustive } => {
            let cfg = load_config(&common)?;
            let clean = CleanConfig {
                d: d.unwrap_or(cfg.clean_d),
                k_max: k_max.unwrap_or(cfg.k_max),
                seed: cfg.seed,
                exhaustive,
            };
            let data = io::read_dataset(&input)?;
            let started = std::time::Instant::now();
            let report = clean_with_report(&data, &clean)?;
            let secs = started.elapsed().as_secs_f64();
            let cleaned: Dataset = report.kept.iter().map(|&i| data.entries[i]).collect();
            io::write_dataset(&cleaned, &out)?;
            Ok(json!({"input": data.len(), "kept": cleaned.len(), "removed": report.removals.len(), "iterations": report.iterations, "seconds": secs, "out": out}))
        }
        Command::Plan { common, dataset, start, goal, out, dense } => {
            let cfg = load_config(&common)?;
            let mut pc = cfg.planner(cfg.seed);
            if let Some(s) = start {
                pc.x_init = parse_state(&s)?;
            }
            if let Some(g) = goal {
                pc.x_goal = parse_state(&g)?;
            }
            let data = io::read_dataset(&dataset)?;
            let model = SurrogateModel::build(&data, &cfg.surrogate())?;
            let r = plan(&pc, &model);
            io::write_tree(&r.tree, &out.join("tree.csv"))?;
            let path = r.path.last().map(|&g| extract_path(&r.tree, g)).unwrap_or_default();
            io::write_path(&path, &out.join("path.csv"))?;
            if dense {
                io::write_dense_edges(&r.tree, pc.dt, pc.w, &out.join("edges.csv"))?;
            }
            let summary = json!({
                "success": r.success,
                "nodes": r.tree.len(),
                "path_length": path.len(),
                "iterations": r.iterations_used,
                "wall_time": r.wall_time,
                "path_cost": path.last().map(|s| r.tree.nodes[s.node].cost_to_come),
                "stats": r.stats,
            });
            write_json(&out.join("summary.json"), &summary)?;
            if !r.success {
                bail!(PlanFailed(r.tree.len()));
            }
            Ok(summary)
        }
        Command::Bench { common, out, epochs, runs } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(r) = runs {
                cfg.runs_per_epoch = r;
            }
            cfg.validate()?;
            let outcome = experiment::run_experiment(&cfg.experiment(), Some(&out))?;
            Ok(serde_json::to_value(&outcome.report)?)
        }
        Command::Inspect { common, dataset } => {
            let cfg = load_config(&common)?;
            let data = io::read_dataset(&dataset)?;
            let model = SurrogateModel::build(&data, &cfg.surrogate())?;
            let costs: Vec<f64> = data.iter().map(|e| e.cost).collect();
            let dom = model.param_domain();
            Ok(json!({
                "entries": data.len(),
                "simulations": data.simulation_count(),
                "cost": experiment::Quartiles::of(&costs),
                "validity_threshold": model.validity_threshold(),
                "param_domain": {
                    "lam_theta0": [dom.lam_theta0.lo, dom.lam_theta0.hi],
                    "lam_omega0": [dom.lam_omega0.lo, dom.lam_omega0.hi],
                    "t_f": [dom.t_f.lo, dom.t_f.hi],
                },
            }))
        }
        Command::Config { common } => {
            let cfg = load_config(&common)?;
            print!("{}", cfg.to_toml_string());
            Ok(serde_json::Value::Null)
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("no path found within {0} nodes")]
struct PlanFailed(usize);

fn kind(e: &anyhow::Error) -> &'static str {
    if let Some(h) = e.downcast_ref::<HarnessError>() {
        h.kind()
    } else if e.is::<PlanFailed>() {
        "plan_failed"
    } else if e.is::<kinolearn::datagen::DatagenError>() {
        "datagen"
    } else if e.is::<kinolearn::cleaning::CleanError>() {
        "clean"
    } else if e.is::<kinolearn::surrogate::SurrogateError>() {
        "surrogate"
    } else {
        "input"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({"error": kind(&e), "message": format!("{e:#}")}));
            ExitCode::FAILURE
        }
    }
}
