//! WebAssembly bindings for the browser demo. Every export returns a JSON
//! string; the `*_json` functions hold the logic and run natively too.

use serde_json::json;
use wasm_bindgen::prelude::*;

use kinolearn::cleaning::{clean_dataset, synthetic::BiasedEnvelope, CleanConfig};
use kinolearn::datagen::{generate_dataset, sample_costate, GenConfig};
use kinolearn::dynamics::{self, hamiltonian_drift, optimal_hamiltonian, CostWeight};
use kinolearn::planner::{extract_path, plan};
use kinolearn::{PlannerConfig, State, SurrogateConfig, SurrogateModel};

const DT: f64 = 0.01;

/// Integrates the optimal trajectory from `(theta, omega)` whose initial
/// costate has direction angle `phi`.
pub fn shoot_json(theta: f64, omega: f64, phi: f64, t_f: f64) -> Result<String, String> {
    let w = CostWeight::default();
    let x0 = State::new(theta, omega);
    let lam = sample_costate(&x0, phi, w).map_err(|e| e.to_string())?;
    let traj = dynamics::integrate(x0, lam, t_f, DT, w, None).map_err(|e| e.to_string())?;
    let points: Vec<[f64; 3]> = traj.samples.iter().map(|s| [s.time, s.state.theta, s.state.omega]).collect();
    Ok(json!({
        "lam_theta": lam.lam_theta,
        "lam_omega": lam.lam_omega,
        "h0": optimal_hamiltonian(&x0, &lam, w),
        "drift": hamiltonian_drift(&traj, w),
        "cost": traj.cost(),
        "points": points,
    })
    .to_string())
}

/// Cleans the synthetic biased-envelope benchmark and returns both the raw
/// and the kept `(coordinate, cost)` pairs.
pub fn clean_demo_json(seed: u64, k_max: usize, exhaustive: bool) -> Result<String, String> {
    let bench = BiasedEnvelope {
        n_points: 600,
        ..BiasedEnvelope::default()
    };
    let raw = bench.generate(seed);
    let cfg = CleanConfig {
        k_max: k_max.max(1),
        seed,
        exhaustive,
        ..CleanConfig::default()
    };
    let kept = clean_dataset(&raw, &cfg).map_err(|e| e.to_string())?;
    let pairs = |d: &kinolearn::Dataset| -> Vec<[f64; 2]> { d.iter().map(|e| [BiasedEnvelope::coordinate(e), e.cost]).collect() };
    let (lo, hi) = bench.domain;
    let envelope: Vec<[f64; 2]> = (0..=200).map(|i| lo + (hi - lo) * i as f64 / 200.0).map(|s| [s, bench.envelope(s)]).collect();
    Ok(json!({
        "raw": pairs(&raw),
        "kept": pairs(&kept),
        "envelope": envelope,
        "band": bench.band(),
        "biased_region": [bench.biased_region.0, bench.biased_region.1],
    })
    .to_string())
}

/// A cleaned dataset with its surrogate model, built once and planned
/// against repeatedly.
#[wasm_bindgen]
pub struct Demo {
    model: SurrogateModel,
}

impl Demo {
    pub fn build(n_sims: usize, seed: u64) -> Result<Demo, String> {
        let gen = GenConfig {
            n_sims,
            seed,
            ..GenConfig::default()
        };
        let raw = generate_dataset(&gen).map_err(|e| e.to_string())?;
        let clean = clean_dataset(
            &raw,
            &CleanConfig {
                seed,
                ..CleanConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let model = SurrogateModel::build(&clean, &SurrogateConfig::default()).map_err(|e| e.to_string())?;
        Ok(Demo { model })
    }

    /// Plans from `(theta, omega)` to the upright equilibrium. Edges come back as
    /// densely sampled polylines.
    pub fn plan_json(&self, theta: f64, omega: f64, seed: u64, max_nodes: usize) -> String {
        let cfg = PlannerConfig {
            x_init: State::new(theta, omega),
            max_nodes: max_nodes.max(1),
            seed,
            ..PlannerConfig::default()
        };
        let r = plan(&cfg, &self.model);
        let edges: Vec<Vec<[f64; 2]>> = r.tree.nodes[1..]
            .iter()
            .filter_map(|n| {
                let (parent, p) = (n.parent?, n.edge_params?);
                let t = dynamics::integrate(r.tree.nodes[parent].state, p.costate(), p.t_f, cfg.dt, cfg.w, None).ok()?;
                Some(t.samples.iter().map(|s| [s.state.theta, s.state.omega]).collect())
            })
            .collect();
        let path: Vec<[f64; 2]> = r
            .path
            .last()
            .map(|&g| extract_path(&r.tree, g).iter().map(|s| [s.state.theta, s.state.omega]).collect())
            .unwrap_or_default();
        let path_cost = r.path.last().map(|&g| r.tree.nodes[g].cost_to_come);
        json!({
            "success": r.success,
            "nodes": r.tree.len(),
            "iterations": r.iterations_used,
            "path_cost": path_cost,
            "edges": edges,
            "path": path,
            "goal": [cfg.x_goal.theta, cfg.x_goal.omega],
            "goal_radius": cfg.goal_radius,
        })
        .to_string()
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n_sims: u32, seed: u32) -> Result<Demo, JsError> {
        Demo::build(n_sims as usize, seed as u64).map_err(|e| JsError::new(&e))
    }

    pub fn entries(&self) -> usize {
        self.model.len()
    }

    pub fn validity_threshold(&self) -> f64 {
        self.model.validity_threshold()
    }

    pub fn plan(&self, theta: f64, omega: f64, seed: u32, max_nodes: u32) -> String {
        self.plan_json(theta, omega, seed as u64, max_nodes as usize)
    }
}

#[wasm_bindgen]
pub fn shoot(theta: f64, omega: f64, phi: f64, t_f: f64) -> Result<String, JsError> {
    shoot_json(theta, omega, phi, t_f).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn clean_demo(seed: u32, k_max: u32, exhaustive: bool) -> Result<String, JsError> {
    clean_demo_json(seed as u64, k_max as usize, exhaustive).map_err(|e| JsError::new(&e))
}

