//! Pendulum optimal-control problem and its fixed-step integrator.
//!
//! The pendulum state is `(theta, omega)` with dynamics
//! `theta' = omega`, `omega' = sin(theta) + u`, so `theta = 0` is the upright
//! (unstable) equilibrium and `theta = -pi` hangs down. The running cost is
//! `w + u^2 / 2`. Minimizing the Hamiltonian over `u` gives `u* = -lam_omega`,
//! and the state, costate and accumulated cost are integrated together with
//! classical RK4.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pendulum configuration point. The angle is never wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub theta: f64,
    pub omega: f64,
}

impl State {
    pub const fn new(theta: f64, omega: f64) -> Self {
        Self { theta, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.omega.is_finite()
    }

    /// Euclidean distance over raw coordinates.
    pub fn distance(&self, other: &State) -> f64 {
        (self.theta - other.theta).hypot(self.omega - other.omega)
    }
}

/// Lagrange multipliers of the dynamics constraint.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Costate {
    pub lam_theta: f64,
    pub lam_omega: f64,
}

impl Costate {
    pub const fn new(lam_theta: f64, lam_omega: f64) -> Self {
        Self {
            lam_theta,
            lam_omega,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lam_theta.is_finite() && self.lam_omega.is_finite()
    }
}

/// Weight of elapsed time in the running cost. Always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CostWeight(f64);

impl CostWeight {
    pub fn new(w: f64) -> Result<Self, DynamicsError> {
        if w.is_finite() && w > 0.0 {
            Ok(Self(w))
        } else {
            Err(DynamicsError::InvalidWeight(w))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for CostWeight {
    fn default() -> Self {
        Self(1.0)
    }
}

impl TryFrom<f64> for CostWeight {
    type Error = DynamicsError;

    fn try_from(w: f64) -> Result<Self, Self::Error> {
        Self::new(w)
    }
}

impl From<CostWeight> for f64 {
    fn from(w: CostWeight) -> f64 {
        w.0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("cost weight must be finite and positive, got {0}")]
    InvalidWeight(f64),
    #[error("invalid integration horizon: t_f = {t_f}, dt = {dt}")]
    InvalidHorizon { t_f: f64, dt: f64 },
    #[error("non-finite initial condition")]
    NonFiniteInput,
    #[error("integration diverged at step {step} (t = {time})")]
    Diverged { step: usize, time: f64 },
}

/// Time derivative of the state, costate and accumulated cost under the
/// optimal input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedDerivative {
    pub dx: (f64, f64),
    pub dlam: (f64, f64),
    pub dcost: f64,
}

/// An input-affine system with a cost quadratic in the input, described by
/// its optimal Hamiltonian and the derived optimality ODEs.
pub trait OptimalControlSystem {
    fn state_derivative(&self, x: &State, u: f64) -> (f64, f64);
    fn optimal_input(&self, lam: &Costate) -> f64;
    fn optimal_hamiltonian(&self, x: &State, lam: &Costate) -> f64;
    fn augmented_derivative(&self, x: &State, lam: &Costate) -> AugmentedDerivative;
}

/// Torque-driven pendulum with running cost `w + u^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pendulum {
    pub weight: CostWeight,
}

impl Pendulum {
    pub fn new(weight: CostWeight) -> Self {
        Self { weight }
    }
}

impl OptimalControlSystem for Pendulum {
    fn state_derivative(&self, x: &State, u: f64) -> (f64, f64) {
        state_derivative(x, u)
    }

    fn optimal_input(&self, lam: &Costate) -> f64 {
        optimal_input(lam)
    }

    fn optimal_hamiltonian(&self, x: &State, lam: &Costate) -> f64 {
        optimal_hamiltonian(x, lam, self.weight)
    }

    fn augmented_derivative(&self, x: &State, lam: &Costate) -> AugmentedDerivative {
        augmented_derivative(x, lam, self.weight)
    }
}

pub fn state_derivative(x: &State, u: f64) -> (f64, f64) {
    (x.omega, x.theta.sin() + u)
}

pub fn optimal_input(lam: &Costate) -> f64 {
    -lam.lam_omega
}

/// `H*(x, lam) = w + lam_theta * omega + lam_omega * sin(theta) - lam_omega^2 / 2`.
pub fn optimal_hamiltonian(x: &State, lam: &Costate, w: CostWeight) -> f64 {
    w.get() + lam.lam_theta * x.omega + lam.lam_omega * x.theta.sin()
        - 0.5 * lam.lam_omega * lam.lam_omega
}

pub fn augmented_derivative(x: &State, lam: &Costate, w: CostWeight) -> AugmentedDerivative {
    let (sin, cos) = x.theta.sin_cos();
    AugmentedDerivative {
        dx: (x.omega, sin - lam.lam_omega),
        dlam: (-lam.lam_omega * cos, -lam.lam_theta),
        dcost: w.get() + 0.5 * lam.lam_omega * lam.lam_omega,
    }
}

/// Early-termination caps on accumulated cost and on the distance travelled
/// from the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub cost_cap: f64,
    pub state_cap: f64,
}

impl StopRule {
    pub fn fires(&self, x0: &State, x: &State, cost: f64) -> bool {
        cost > self.cost_cap || x0.distance(x) > self.state_cap
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub time: f64,
    pub state: State,
    pub costate: Costate,
    pub running_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub dt: f64,
    /// Time of the last stored sample.
    pub final_time: f64,
    /// Set when a [`StopRule`] cut the integration short. The sample that
    /// violated the caps is not stored.
    pub stopped_early: bool,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory always holds its initial sample")
    }

    pub fn endpoint(&self) -> State {
        self.last().state
    }

    pub fn cost(&self) -> f64 {
        self.last().running_cost
    }

    /// Number of integration steps taken (samples minus the initial one).
    pub fn steps(&self) -> usize {
        self.samples.len() - 1
    }
}

/// Number of RK4 steps needed to reach `t_f`; tolerant to the rounding of
/// `t_f` values that are integer multiples of `dt`.
pub fn step_count(t_f: f64, dt: f64) -> usize {
    ((t_f / dt) - 1e-9).ceil().max(1.0) as usize
}

#[derive(Clone, Copy)]
struct Augmented {
    x: State,
    lam: Costate,
    cost: f64,
}

fn rk4_step<S: OptimalControlSystem>(sys: &S, y: &Augmented, h: f64) -> Augmented {
    let eval = |y: &Augmented| sys.augmented_derivative(&y.x, &y.lam);
    let shift = |y: &Augmented, d: &AugmentedDerivative, s: f64| Augmented {
        x: State::new(y.x.theta + s * d.dx.0, y.x.omega + s * d.dx.1),
        lam: Costate::new(y.lam.lam_theta + s * d.dlam.0, y.lam.lam_omega + s * d.dlam.1),
        cost: y.cost + s * d.dcost,
    };
    let k1 = eval(y);
    let k2 = eval(&shift(y, &k1, 0.5 * h));
    let k3 = eval(&shift(y, &k2, 0.5 * h));
    let k4 = eval(&shift(y, &k3, h));
    let c = h / 6.0;
    let comb = |a: f64, b: f64, cc: f64, d: f64| c * (a + 2.0 * b + 2.0 * cc + d);
    Augmented {
        x: State::new(
            y.x.theta + comb(k1.dx.0, k2.dx.0, k3.dx.0, k4.dx.0),
            y.x.omega + comb(k1.dx.1, k2.dx.1, k3.dx.1, k4.dx.1),
        ),
        lam: Costate::new(
            y.lam.lam_theta + comb(k1.dlam.0, k2.dlam.0, k3.dlam.0, k4.dlam.0),
            y.lam.lam_omega + comb(k1.dlam.1, k2.dlam.1, k3.dlam.1, k4.dlam.1),
        ),
        cost: y.cost + comb(k1.dcost, k2.dcost, k3.dcost, k4.dcost),
    }
}

/// Integrates the optimality ODEs of `sys` from `(x0, lam0)` over `[0, t_f]`
/// with fixed step `dt`. The final step is shortened to land on `t_f`.
pub fn integrate_system<S: OptimalControlSystem>(
    sys: &S,
    x0: State,
    lam0: Costate,
    t_f: f64,
    dt: f64,
    stop: Option<&StopRule>,
) -> Result<Trajectory, DynamicsError> {
    if !(t_f.is_finite() && dt.is_finite() && t_f > 0.0 && dt > 0.0 && dt <= t_f * (1.0 + 1e-9)) {
        return Err(DynamicsError::InvalidHorizon { t_f, dt });
    }
    if !(x0.is_finite() && lam0.is_finite()) {
        return Err(DynamicsError::NonFiniteInput);
    }
    let n = step_count(t_f, dt);
    let mut samples = Vec::with_capacity(n + 1);
    let mut y = Augmented {
        x: x0,
        lam: lam0,
        cost: 0.0,
    };
    samples.push(TrajectorySample {
        time: 0.0,
        state: x0,
        costate: lam0,
        running_cost: 0.0,
    });
    let mut stopped_early = false;
    for step in 1..=n {
        let mut h = dt;
        let mut time = step as f64 * dt;
        if step == n {
            let last = t_f - (n - 1) as f64 * dt;
            if (last - dt).abs() > 1e-12 {
                h = last;
            }
            time = t_f;
        }
        y = rk4_step(sys, &y, h);
        if !(y.x.is_finite() && y.lam.is_finite() && y.cost.is_finite()) {
            return Err(DynamicsError::Diverged { step, time });
        }
        if let Some(rule) = stop {
            if rule.fires(&x0, &y.x, y.cost) {
                stopped_early = true;
                break;
            }
        }
        samples.push(TrajectorySample {
            time,
            state: y.x,
            costate: y.lam,
            running_cost: y.cost,
        });
    }
    let final_time = samples.last().map(|s| s.time).unwrap_or(0.0);
    Ok(Trajectory {
        samples,
        dt,
        final_time,
        stopped_early,
    })
}

/// Pendulum convenience wrapper around [`integrate_system`].
pub fn integrate(
    x0: State,
    lam0: Costate,
    t_f: f64,
    dt: f64,
    w: CostWeight,
    stop: Option<&StopRule>,
) -> Result<Trajectory, DynamicsError> {
    integrate_system(&Pendulum::new(w), x0, lam0, t_f, dt, stop)
}

/// Largest deviation of `H*` from its initial value along a trajectory.
pub fn hamiltonian_drift(traj: &Trajectory, w: CostWeight) -> f64 {
    let first = &traj.samples[0];
    let h0 = optimal_hamiltonian(&first.state, &first.costate, w);
    traj.samples
        .iter()
        .map(|s| (optimal_hamiltonian(&s.state, &s.costate, w) - h0).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

    fn w1() -> CostWeight {
        CostWeight::default()
    }

    #[test]
    fn state_derivative_examples() {
        assert_eq!(state_derivative(&State::new(0.0, 0.0), 0.0), (0.0, 0.0));
        let (a, b) = state_derivative(&State::new(FRAC_PI_2, 1.0), 0.0);
        assert_abs_diff_eq!(a, 1.0);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-15);
        let (a, b) = state_derivative(&State::new(FRAC_PI_6, 2.0), 0.5);
        assert_abs_diff_eq!(a, 2.0);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn optimal_input_is_negated_velocity_costate() {
        assert_eq!(optimal_input(&Costate::new(5.0, 0.0)), 0.0);
        assert_eq!(optimal_input(&Costate::new(0.0, 2.0)), -2.0);
        assert_eq!(optimal_input(&Costate::new(-1.0, -0.5)), 0.5);
    }

    #[test]
    fn optimal_input_minimizes_full_hamiltonian() {
        let x = State::new(0.3, -0.7);
        let lam = Costate::new(0.4, 1.3);
        let full = |u: f64| 1.0 + 0.5 * u * u + lam.lam_theta * x.omega + lam.lam_omega * (x.theta.sin() + u);
        let u_star = optimal_input(&lam);
        for du in [-0.1, -1e-3, 1e-3, 0.1] {
            assert!(full(u_star) < full(u_star + du));
        }
        assert_abs_diff_eq!(full(u_star), optimal_hamiltonian(&x, &lam, w1()), epsilon = 1e-14);
    }

    #[test]
    fn hamiltonian_examples() {
        assert_eq!(optimal_hamiltonian(&State::new(0.0, 0.0), &Costate::new(0.0, 0.0), w1()), 1.0);
        assert_eq!(optimal_hamiltonian(&State::new(0.0, 2.0), &Costate::new(1.0, 0.0), w1()), 3.0);
        // root of the quadratic 1 + l - l^2/2 = 0
        let root = 1.0 + 3f64.sqrt();
        let h = optimal_hamiltonian(&State::new(FRAC_PI_2, 0.0), &Costate::new(0.0, root), w1());
        assert_abs_diff_eq!(h, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn augmented_derivative_examples() {
        let d = augmented_derivative(&State::new(0.0, 0.0), &Costate::new(0.0, 0.0), w1());
        assert_eq!(d.dx, (0.0, 0.0));
        assert_eq!(d.dlam, (-0.0, -0.0));
        assert_eq!(d.dcost, 1.0);

        let d = augmented_derivative(&State::new(FRAC_PI_2, 1.0), &Costate::new(1.0, 2.0), w1());
        assert_abs_diff_eq!(d.dx.0, 1.0);
        assert_abs_diff_eq!(d.dx.1, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dlam.0, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dlam.1, -1.0);
        assert_abs_diff_eq!(d.dcost, 3.0);
    }

    #[test]
    fn weight_must_be_positive() {
        assert!(CostWeight::new(0.0).is_err());
        assert!(CostWeight::new(-1.0).is_err());
        assert!(CostWeight::new(f64::NAN).is_err());
        assert_eq!(CostWeight::new(2.5).unwrap().get(), 2.5);
    }

    #[test]
    fn integrate_equilibrium_accumulates_time_cost() {
        let traj = integrate(State::default(), Costate::default(), 1.0, 0.01, w1(), None).unwrap();
        assert_eq!(traj.steps(), 100);
        assert_eq!(traj.endpoint(), State::new(0.0, 0.0));
        assert_abs_diff_eq!(traj.cost(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(traj.final_time, 1.0);
        assert!(!traj.stopped_early);
    }

    #[test]
    fn integrate_truncates_last_step_onto_final_time() {
        let traj = integrate(State::default(), Costate::default(), 0.105, 0.01, w1(), None).unwrap();
        assert_eq!(traj.steps(), 11);
        assert_eq!(traj.final_time, 0.105);
        assert_abs_diff_eq!(traj.cost(), 0.105, epsilon = 1e-14);
        let times: Vec<f64> = traj.samples.iter().map(|s| s.time).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn integrate_rejects_bad_horizon() {
        let x = State::default();
        let l = Costate::default();
        assert!(matches!(integrate(x, l, 0.0, 0.01, w1(), None), Err(DynamicsError::InvalidHorizon { .. })));
        assert!(matches!(integrate(x, l, 1.0, 0.0, w1(), None), Err(DynamicsError::InvalidHorizon { .. })));
        assert!(matches!(integrate(x, l, 0.01, 0.02, w1(), None), Err(DynamicsError::InvalidHorizon { .. })));
        assert!(matches!(
            integrate(State::new(f64::NAN, 0.0), l, 1.0, 0.01, w1(), None),
            Err(DynamicsError::NonFiniteInput)
        ));
    }

    #[test]
    fn integrate_reports_divergence_step() {
        // lam_omega grows like -lam_theta * t; huge values overflow quickly
        let err = integrate(State::new(0.0, 1e300), Costate::new(1e300, 1e300), 1.0, 0.01, w1(), None)
            .unwrap_err();
        assert!(matches!(err, DynamicsError::Diverged { step: 1, .. }));
    }

    #[test]
    fn stop_rule_drops_violating_sample() {
        let rule = StopRule {
            cost_cap: 0.5,
            state_cap: 10.0,
        };
        let traj = integrate(State::default(), Costate::default(), 1.0, 0.01, w1(), Some(&rule)).unwrap();
        assert!(traj.stopped_early);
        assert!(traj.cost() <= 0.5);
        // cost after 50 steps sits on the cap up to rounding
        assert!((49..=50).contains(&traj.steps()));
    }

    #[test]
    fn downward_swing_matches_fine_reference() {
        // lam from the closed-form costate root at phi = 0: lam_theta = 0,
        // lam_omega = sin(-pi) + sqrt(sin^2(-pi) + 2)
        let x0 = State::new(-PI, 0.0);
        let s = x0.theta.sin();
        let lam0 = Costate::new(0.0, s + (s * s + 2.0).sqrt());
        let coarse = integrate(x0, lam0, 1.5, 0.01, w1(), None).unwrap();
        let fine = integrate(x0, lam0, 1.5, 1e-4, w1(), None).unwrap();
        assert!(coarse.endpoint().distance(&fine.endpoint()) < 1e-5);
        assert!((coarse.cost() - fine.cost()).abs() < 1e-5);
        assert!(hamiltonian_drift(&coarse, w1()) < 1e-6);
    }

    #[test]
    fn running_cost_matches_trapezoid_of_input_energy() {
        let x0 = State::new(-2.0, 0.4);
        let lam0 = Costate::new(0.3, -0.9);
        let traj = integrate(x0, lam0, 1.7, 0.01, w1(), None).unwrap();
        let quad: f64 = traj
            .samples
            .windows(2)
            .map(|p| {
                let a = 0.5 * p[0].costate.lam_omega.powi(2);
                let b = 0.5 * p[1].costate.lam_omega.powi(2);
                0.5 * (a + b) * (p[1].time - p[0].time)
            })
            .sum();
        assert_abs_diff_eq!(traj.cost(), 1.7 + quad, epsilon = 1e-4);
    }
}
