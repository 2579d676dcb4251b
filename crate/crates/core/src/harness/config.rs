//! Flat key-value experiment configuration.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cleaning::CleanConfig;
use crate::datagen::{GenConfig, Interval};
use crate::dynamics::{CostWeight, State};
use crate::planner::PlannerConfig;
use crate::surrogate::{SurrogateConfig, ThresholdPolicy};

use super::HarnessError;

/// Every tunable of the pipeline as a single flat table. Missing keys take
/// their default; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatConfig {
    // data generation
    pub n_sims: usize,
    pub dt: f64,
    pub cost_cap: f64,
    pub state_cap: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub w: f64,
    pub harvest_stride: usize,
    // cleaning
    pub clean_d: f64,
    pub k_max: usize,
    // surrogate
    pub k: usize,
    /// When set, overrides the calibrated validity threshold.
    pub validity_threshold: Option<f64>,
    pub threshold_percentile: f64,
    pub threshold_scale: f64,
    pub cost_floor: f64,
    pub cost_ceiling: f64,
    // planner
    pub start_theta: f64,
    pub start_omega: f64,
    pub goal_theta: f64,
    pub goal_omega: f64,
    pub goal_radius: f64,
    pub goal_bias: f64,
    pub sigma: f64,
    pub sigma_goal: f64,
    pub max_nodes: usize,
    pub max_iterations: usize,
    pub decimals: u32,
    // experiment
    pub epochs: usize,
    pub runs_per_epoch: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for FlatConfig {
    fn default() -> Self {
        Self {
            n_sims: 40_000,
            dt: 0.01,
            cost_cap: 2.0,
            state_cap: 1.5,
            theta_min: -1.5 * PI,
            theta_max: FRAC_PI_2,
            omega_min: -PI,
            omega_max: PI,
            phi_min: -FRAC_PI_2,
            phi_max: 1.5 * PI,
            w: 1.0,
            harvest_stride: 10,
            clean_d: 0.05,
            k_max: 5000,
            k: 3,
            validity_threshold: None,
            threshold_percentile: 99.5,
            threshold_scale: 1.5,
            cost_floor: 1e-5,
            cost_ceiling: 1e5,
            start_theta: -PI,
            start_omega: 0.0,
            goal_theta: 0.0,
            goal_omega: 0.0,
            goal_radius: 0.2,
            goal_bias: 0.1,
            sigma: FRAC_PI_4,
            sigma_goal: FRAC_PI_2,
            max_nodes: 2000,
            max_iterations: 50_000,
            decimals: 2,
            epochs: 10,
            runs_per_epoch: 300,
            holdout_fraction: 0.05,
            seed: 0,
        }
    }
}

impl FlatConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::Config(m.to_string()));
        if CostWeight::new(self.w).is_err() {
            return fail("w must be positive");
        }
        if !(self.clean_d > 0.0) || self.k_max == 0 {
            return fail("clean_d must be positive and k_max at least 1");
        }
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.goal_bias) || !(self.goal_radius > 0.0) {
            return fail("goal_bias must be in [0, 1] and goal_radius positive");
        }
        if !(self.sigma > 0.0 && self.sigma_goal > 0.0) {
            return fail("sigma and sigma_goal must be positive");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return fail("holdout_fraction must be in [0, 1)");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        self.gen(0).validate().map_err(|e| HarnessError::Config(e.to_string()))
    }

    fn weight(&self) -> CostWeight {
        CostWeight::new(self.w).unwrap_or_default()
    }

    pub fn gen(&self, seed: u64) -> GenConfig {
        GenConfig {
            n_sims: self.n_sims,
            dt: self.dt,
            cost_cap: self.cost_cap,
            state_cap: self.state_cap,
            theta_range: Interval::new(self.theta_min, self.theta_max),
            omega_range: Interval::new(self.omega_min, self.omega_max),
            phi_range: Interval::new(self.phi_min, self.phi_max),
            w: self.weight(),
            harvest_stride: self.harvest_stride,
            seed,
        }
    }

    pub fn clean(&self, seed: u64) -> CleanConfig {
        CleanConfig {
            d: self.clean_d,
            k_max: self.k_max,
            seed,
            exhaustive: false,
        }
    }

    pub fn surrogate(&self) -> SurrogateConfig {
        SurrogateConfig {
            k: self.k,
            threshold: match self.validity_threshold {
                Some(threshold) => ThresholdPolicy::Fixed { threshold },
                None => ThresholdPolicy::Calibrated {
                    percentile: self.threshold_percentile,
                    scale: self.threshold_scale,
                },
            },
            cost_floor: self.cost_floor,
            cost_ceiling: self.cost_ceiling,
            dt: self.dt,
        }
    }

    pub fn planner(&self, seed: u64) -> PlannerConfig {
        PlannerConfig {
            x_init: State::new(self.start_theta, self.start_omega),
            x_goal: State::new(self.goal_theta, self.goal_omega),
            goal_radius: self.goal_radius,
            goal_bias: self.goal_bias,
            sigma: self.sigma,
            sigma_goal: self.sigma_goal,
            max_nodes: self.max_nodes,
            max_iterations: self.max_iterations,
            decimals: self.decimals,
            theta_bounds: Interval::new(self.theta_min, self.theta_max),
            omega_bounds: Interval::new(self.omega_min, self.omega_max),
            dt: self.dt,
            w: self.weight(),
            seed,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            n_epochs: self.epochs,
            runs_per_epoch: self.runs_per_epoch,
            gen: self.gen(0),
            clean: self.clean(0),
            surrogate: self.surrogate(),
            planner: self.planner(0),
            holdout_fraction: self.holdout_fraction,
            seed: self.seed,
        }
    }
}

/// Structured experiment description. Per-epoch and per-run seeds are
/// derived from `seed`; the seeds inside the sub-configs are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_epochs: usize,
    pub runs_per_epoch: usize,
    pub gen: GenConfig,
    pub clean: CleanConfig,
    pub surrogate: SurrogateConfig,
    pub planner: PlannerConfig,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        FlatConfig::default().experiment()
    }
}

/// Stream tags for [`derive_seed`].
pub mod stream {
    pub const GENERATE: u64 = 1;
    pub const CLEAN: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const PLAN: u64 = 4;
}

/// Mixes a master seed with a stream tag and an index (splitmix64 finalizer).
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
