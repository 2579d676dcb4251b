//! Learning-based kinodynamic RRT for the torque-driven pendulum.
//!
//! The offline phase samples optimal trajectories by integrating the
//! state/costate equations from constraint-satisfying initial costates
//! ([`datagen`]), removes local-optimum bias ([`cleaning`]) and fits
//! k-nearest-neighbour surrogates for cost-to-go, steering and query validity
//! ([`surrogate`]). The online phase grows an RRT that selects nodes by the
//! learned cost and steers with the learned costates ([`planner`]).

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cleaning;
pub mod clock;
pub mod datagen;
pub mod dynamics;
pub mod harness;
pub mod index;
pub mod planner;
pub mod surrogate;

pub use datagen::{Dataset, DatasetEntry, GenConfig, SteeringParams};
pub use dynamics::{CostWeight, Costate, State};
pub use planner::{PlanResult, PlannerConfig};
pub use surrogate::{Query, SurrogateConfig, SurrogateModel};
