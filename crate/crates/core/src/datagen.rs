//! Raw dataset generation by sampling initial states and constraint-satisfying
//! costates, then integrating the optimality ODEs until a cap fires.
//!
//! Every `harvest_stride` integration steps of a simulation produce one
//! [`DatasetEntry`], so a single simulation contributes a family of segments
//! sharing the same start state and initial costate.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, CostWeight, Costate, DynamicsError, State, StopRule};

/// Learned action representation: initial costate plus segment duration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SteeringParams {
    pub lam_theta0: f64,
    pub lam_omega0: f64,
    pub t_f: f64,
}

impl SteeringParams {
    pub fn new(lam_theta0: f64, lam_omega0: f64, t_f: f64) -> Self {
        Self {
            lam_theta0,
            lam_omega0,
            t_f,
        }
    }

    pub fn costate(&self) -> Costate {
        Costate::new(self.lam_theta0, self.lam_omega0)
    }

    pub fn is_valid(&self) -> bool {
        self.lam_theta0.is_finite() && self.lam_omega0.is_finite() && self.t_f.is_finite() && self.t_f > 0.0
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.lam_theta0, self.lam_omega0, self.t_f]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// One optimal segment from `x0` to `x1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub x0: State,
    pub x1: State,
    pub cost: f64,
    pub params: SteeringParams,
    /// Index of the simulation that produced the entry.
    pub sim_id: u64,
}

impl DatasetEntry {
    /// Query-space coordinates `(theta0, omega0, theta1, omega1)`.
    pub fn query(&self) -> [f64; 4] {
        [self.x0.theta, self.x0.omega, self.x1.theta, self.x1.omega]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn new(entries: Vec<DatasetEntry>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DatasetEntry> {
        self.entries.iter()
    }

    /// Number of distinct simulation ids.
    pub fn simulation_count(&self) -> usize {
        let mut ids: Vec<u64> = self.entries.iter().map(|e| e.sim_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Splits off the entries of roughly `fraction` of the simulations.
    /// Returns `(kept, held_out)`; no simulation id appears in both halves.
    pub fn split_by_simulation(&self, fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut ids: Vec<u64> = self.entries.iter().map(|e| e.sim_id).collect();
        ids.sort_unstable();
        ids.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let held: std::collections::HashSet<u64> =
            ids.into_iter().filter(|_| rng.random::<f64>() < fraction).collect();
        let (out, keep): (Vec<_>, Vec<_>) = self.entries.iter().partition(|e| held.contains(&e.sim_id));
        (Dataset::new(keep), Dataset::new(out))
    }
}

impl FromIterator<DatasetEntry> for Dataset {
    fn from_iter<I: IntoIterator<Item = DatasetEntry>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Half-open sampling interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(self.lo..self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_sims: usize,
    pub dt: f64,
    pub cost_cap: f64,
    pub state_cap: f64,
    pub theta_range: Interval,
    pub omega_range: Interval,
    pub phi_range: Interval,
    pub w: CostWeight,
    pub harvest_stride: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_sims: 40_000,
            dt: 0.01,
            cost_cap: 2.0,
            state_cap: 1.5,
            theta_range: Interval::new(-1.5 * PI, FRAC_PI_2),
            omega_range: Interval::new(-PI, PI),
            phi_range: Interval::new(-FRAC_PI_2, 1.5 * PI),
            w: CostWeight::default(),
            harvest_stride: 10,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            cost_cap: self.cost_cap,
            state_cap: self.state_cap,
        }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |what: &str| Err(DatagenError::InvalidConfig(what.to_string()));
        if self.n_sims == 0 {
            return bad("n_sims must be positive");
        }
        if self.harvest_stride == 0 {
            return bad("harvest_stride must be at least 1");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.cost_cap > 0.0 && self.state_cap > 0.0) {
            return bad("caps must be positive");
        }
        if !(self.theta_range.is_valid() && self.omega_range.is_valid() && self.phi_range.is_valid()) {
            return bad("sampling ranges must be non-empty");
        }
        Ok(())
    }

    /// Horizon long enough for the cost cap to fire, since cost grows at
    /// least at rate `w`.
    fn horizon(&self) -> f64 {
        self.cost_cap / self.w.get() + 2.0 * self.dt
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatagenError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("generation produced no dataset entries")]
    EmptyDataset,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Why a costate draw was disregarded.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum CostateRejection {
    #[error("phi too close to a singularity of tan")]
    Singular,
    #[error("negative discriminant {0}")]
    NegativeDiscriminant(f64),
    #[error("constraint residual {0} too large")]
    Residual(f64),
}

/// Largest admissible `|H*(x0, lam0)|` for a sampled costate.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-9;

/// Costate satisfying `H*(x0, lam) = 0`, parametrized by the angle `phi`.
///
/// `lam_theta = tan(phi)` and `lam_omega` is the root of
/// `lam^2 - 2 sin(theta0) lam - 2 (w + tan(phi) omega0) = 0` picked by the
/// sign of `cos(phi)`.
pub fn sample_costate(x0: &State, phi: f64, w: CostWeight) -> Result<Costate, CostateRejection> {
    let cos = phi.cos();
    if cos.abs() < 1e-9 {
        return Err(CostateRejection::Singular);
    }
    let lam_theta = phi.tan();
    let s = x0.theta.sin();
    let c = w.get() + lam_theta * x0.omega;
    let disc = s * s + 2.0 * c;
    if !(disc >= 0.0) {
        return Err(CostateRejection::NegativeDiscriminant(disc));
    }
    let sign = cos.signum();
    let root = sign * disc.sqrt();
    // s + root cancels when the signs differ; use the product of the roots
    // (-2c) to recover that branch accurately.
    let lam_omega = if s * sign >= 0.0 {
        s + root
    } else {
        let other = s - root;
        if other == 0.0 {
            s + root
        } else {
            -2.0 * c / other
        }
    };
    let lam = Costate::new(lam_theta, lam_omega);
    let residual = dynamics::optimal_hamiltonian(x0, &lam, w);
    if !lam.is_finite() || !(residual.abs() <= CONSTRAINT_TOLERANCE) {
        return Err(CostateRejection::Residual(residual));
    }
    Ok(lam)
}

/// Integrates one simulation from `(x0, lam0)` under the caps and harvests its
/// intermediate points.
pub fn simulate(
    x0: State,
    lam0: Costate,
    sim_id: u64,
    cfg: &GenConfig,
) -> Result<Vec<DatasetEntry>, DynamicsError> {
    let stop = cfg.stop_rule();
    let traj = dynamics::integrate(x0, lam0, cfg.horizon(), cfg.dt, cfg.w, Some(&stop))?;
    Ok(traj
        .samples
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(i, _)| i % cfg.harvest_stride == 0)
        .map(|(_, s)| DatasetEntry {
            x0,
            x1: s.state,
            cost: s.running_cost,
            params: SteeringParams::new(lam0.lam_theta, lam0.lam_omega, s.time),
            sim_id,
        })
        .collect())
}

/// Random generator for simulation `index` of a run seeded with `seed`.
/// Independent of how simulations are spread over workers.
pub fn simulation_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `(x0, lam0)` for one simulation, redrawing on costate rejection.
pub fn draw_initial_condition<R: Rng + ?Sized>(cfg: &GenConfig, rng: &mut R) -> (State, Costate) {
    loop {
        let x0 = State::new(cfg.theta_range.sample(rng), cfg.omega_range.sample(rng));
        let phi = cfg.phi_range.sample(rng);
        if let Ok(lam) = sample_costate(&x0, phi, cfg.w) {
            return (x0, lam);
        }
    }
}

pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset, DatagenError> {
    cfg.validate()?;
    let chunks: Vec<Vec<DatasetEntry>> = (0..cfg.n_sims as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = simulation_rng(cfg.seed, i);
            let (x0, lam0) = draw_initial_condition(cfg, &mut rng);
            // A draw whose integration blows up yields no entries.
            simulate(x0, lam0, i, cfg).unwrap_or_default()
        })
        .collect();
    let entries: Vec<DatasetEntry> = chunks.into_iter().flatten().collect();
    if entries.is_empty() {
        return Err(DatagenError::EmptyDataset);
    }
    Ok(Dataset::new(entries))
}
