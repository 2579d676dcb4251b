//! Learning-based RRT: nodes are selected by the learned cost-to-go among
//! those with a valid query, and expanded by integrating the perturbed,
//! quantized steering prediction.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clock::Stopwatch;
use crate::datagen::{Interval, SteeringParams};
use crate::dynamics::{self, CostWeight, DynamicsError, State};
use crate::surrogate::{ParamDomain, Prediction, Query, SurrogateModel};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub state: State,
    pub parent: Option<NodeId>,
    pub edge_params: Option<SteeringParams>,
    pub edge_cost: f64,
    pub cost_to_come: f64,
    /// Sampled target the expansion was aiming for.
    pub target: Option<State>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn with_root(state: State) -> Self {
        Self {
            nodes: vec![TreeNode {
                state,
                parent: None,
                edge_params: None,
                edge_cost: 0.0,
                cost_to_come: 0.0,
                target: None,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub x_init: State,
    pub x_goal: State,
    pub goal_radius: f64,
    pub goal_bias: f64,
    pub sigma: f64,
    pub sigma_goal: f64,
    pub max_nodes: usize,
    pub max_iterations: usize,
    /// Steering parameters are rounded to this many decimals.
    pub decimals: u32,
    pub theta_bounds: Interval,
    pub omega_bounds: Interval,
    pub dt: f64,
    pub w: CostWeight,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            x_init: State::new(-PI, 0.0),
            x_goal: State::new(0.0, 0.0),
            goal_radius: 0.2,
            goal_bias: 0.1,
            sigma: FRAC_PI_4,
            sigma_goal: FRAC_PI_2,
            max_nodes: 2000,
            max_iterations: 50_000,
            decimals: 2,
            theta_bounds: Interval::new(-1.5 * PI, FRAC_PI_2),
            omega_bounds: Interval::new(-PI, PI),
            dt: 0.01,
            w: CostWeight::default(),
            seed: 0,
        }
    }
}

/// Counters collected during a planning run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub skipped_iterations: usize,
    pub expansions: usize,
    pub diverged_expansions: usize,
    pub goal_draws: usize,
    /// Number of cost-to-go predictions consulted for node selection.
    pub cost_queries: u64,
    pub min_cost_seen: f64,
    pub max_cost_seen: f64,
}

impl Default for PlanStats {
    fn default() -> Self {
        Self {
            skipped_iterations: 0,
            expansions: 0,
            diverged_expansions: 0,
            goal_draws: 0,
            cost_queries: 0,
            min_cost_seen: f64::INFINITY,
            max_cost_seen: f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub tree: Tree,
    /// Node ids from the root to the node inside the goal region; empty on
    /// failure.
    pub path: Vec<NodeId>,
    pub iterations_used: usize,
    pub wall_time: f64,
    pub success: bool,
    pub stats: PlanStats,
}

/// With probability `goal_bias` the goal, otherwise a uniform draw from the
/// sampling bounds. The flag is true for goal draws.
pub fn sample_target<R: Rng + ?Sized>(cfg: &PlannerConfig, rng: &mut R) -> (State, bool) {
    if rng.random::<f64>() < cfg.goal_bias {
        (cfg.x_goal, true)
    } else {
        (State::new(cfg.theta_bounds.sample(rng), cfg.omega_bounds.sample(rng)), false)
    }
}

/// Among nodes with a valid query towards `target`, the one with the lowest
/// predicted cost (ties to the lower id).
pub fn nearest_valid(tree: &Tree, model: &SurrogateModel, target: &State) -> Option<(NodeId, Prediction)> {
    nearest_valid_tracked(tree, model, target, &mut PlanStats::default())
}

fn nearest_valid_tracked(
    tree: &Tree,
    model: &SurrogateModel,
    target: &State,
    stats: &mut PlanStats,
) -> Option<(NodeId, Prediction)> {
    let mut best: Option<(NodeId, Prediction)> = None;
    for (id, node) in tree.nodes.iter().enumerate() {
        let Some(pred) = model.assess(&Query::new(node.state, *target)) else {
            continue;
        };
        stats.cost_queries += 1;
        stats.min_cost_seen = stats.min_cost_seen.min(pred.cost);
        stats.max_cost_seen = stats.max_cost_seen.max(pred.cost);
        if best.is_none_or(|(_, b)| pred.cost < b.cost) {
            best = Some((id, pred));
        }
    }
    best
}

/// Draw from `N(mean, sigma)` restricted to `bounds`.
pub fn truncated_normal<R: Rng + ?Sized>(mean: f64, sigma: f64, bounds: Interval, rng: &mut R) -> f64 {
    let centre = mean.clamp(bounds.lo, bounds.hi);
    let Ok(normal) = Normal::new(centre, sigma) else {
        return centre;
    };
    for _ in 0..10_000 {
        let v = normal.sample(rng);
        if bounds.contains(v) {
            return v;
        }
    }
    // the window carries negligible mass; a uniform draw keeps full support
    rng.random_range(bounds.lo..=bounds.hi)
}

/// Rounds to `decimals` places without leaving `bounds`.
pub fn quantize(v: f64, decimals: u32, bounds: Interval) -> f64 {
    let f = 10f64.powi(decimals as i32);
    let mut q = (v * f).round() / f;
    if q > bounds.hi {
        q = (v * f).floor() / f;
    }
    if q < bounds.lo {
        q = (v * f).ceil() / f;
    }
    q
}

/// Truncated-normal perturbation of each steering parameter followed by
/// rounding; the duration is floored at `dt`.
pub fn perturb_and_quantize<R: Rng + ?Sized>(
    params: &SteeringParams,
    sigma: f64,
    domain: &ParamDomain,
    decimals: u32,
    dt: f64,
    rng: &mut R,
) -> SteeringParams {
    let bounds = domain.bounds();
    let mut out = [0.0; 3];
    for ((o, mean), b) in out.iter_mut().zip(params.to_array()).zip(bounds) {
        *o = quantize(truncated_normal(mean, sigma, b, rng), decimals, b);
    }
    let mut p = SteeringParams::from_array(out);
    p.t_f = p.t_f.max(dt);
    p
}

/// Integrates from `parent` under `params` and appends the endpoint.
pub fn expand(
    tree: &mut Tree,
    parent: NodeId,
    params: SteeringParams,
    dt: f64,
    w: CostWeight,
    target: Option<State>,
) -> Result<NodeId, DynamicsError> {
    let from = tree.nodes[parent];
    let traj = dynamics::integrate(from.state, params.costate(), params.t_f, dt, w, None)?;
    let edge_cost = traj.cost();
    tree.nodes.push(TreeNode {
        state: traj.endpoint(),
        parent: Some(parent),
        edge_params: Some(params),
        edge_cost,
        cost_to_come: from.cost_to_come + edge_cost,
        target,
    });
    Ok(tree.nodes.len() - 1)
}

pub fn plan(cfg: &PlannerConfig, model: &SurrogateModel) -> PlanResult {
    let started = Stopwatch::start();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tree = Tree::with_root(cfg.x_init);
    let mut stats = PlanStats::default();
    let mut goal_node = (cfg.x_init.distance(&cfg.x_goal) <= cfg.goal_radius).then_some(0);
    let mut iterations = 0;
    while goal_node.is_none() && iterations < cfg.max_iterations && tree.len() < cfg.max_nodes {
        iterations += 1;
        let (target, is_goal) = sample_target(cfg, &mut rng);
        if is_goal {
            stats.goal_draws += 1;
        }
        let Some((nearest, pred)) = nearest_valid_tracked(&tree, model, &target, &mut stats) else {
            stats.skipped_iterations += 1;
            continue;
        };
        let sigma = if is_goal { cfg.sigma_goal } else { cfg.sigma };
        let params = perturb_and_quantize(&pred.steering, sigma, model.param_domain(), cfg.decimals, cfg.dt, &mut rng);
        match expand(&mut tree, nearest, params, cfg.dt, cfg.w, Some(target)) {
            Ok(id) => {
                stats.expansions += 1;
                if tree.nodes[id].state.distance(&cfg.x_goal) <= cfg.goal_radius {
                    goal_node = Some(id);
                }
            }
            Err(_) => stats.diverged_expansions += 1,
        }
    }
    let path = goal_node.map(|g| path_ids(&tree, g)).unwrap_or_default();
    PlanResult {
        tree,
        path,
        iterations_used: iterations,
        wall_time: started.seconds(),
        success: goal_node.is_some(),
        stats,
    }
}

fn path_ids(tree: &Tree, goal: NodeId) -> Vec<NodeId> {
    let mut ids = vec![goal];
    let mut cur = goal;
    while let Some(p) = tree.nodes[cur].parent {
        ids.push(p);
        cur = p;
    }
    ids.reverse();
    ids
}

/// One waypoint of an extracted path; `params` steers from the previous
/// waypoint and is `None` at the root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStep {
    pub node: NodeId,
    pub state: State,
    pub params: Option<SteeringParams>,
}

pub fn extract_path(tree: &Tree, goal: NodeId) -> Vec<PathStep> {
    path_ids(tree, goal)
        .into_iter()
        .map(|id| PathStep {
            node: id,
            state: tree.nodes[id].state,
            params: tree.nodes[id].edge_params,
        })
        .collect()
}

/// Executes a path's steering sequence open-loop from its first state and
/// returns the state reached after each segment.
pub fn replay_path(path: &[PathStep], dt: f64, w: CostWeight) -> Result<Vec<State>, DynamicsError> {
    let mut states = Vec::with_capacity(path.len());
    let Some(first) = path.first() else {
        return Ok(states);
    };
    let mut x = first.state;
    states.push(x);
    for step in &path[1..] {
        let p = step.params.expect("non-root path steps carry steering params");
        x = dynamics::integrate(x, p.costate(), p.t_f, dt, w, None)?.endpoint();
        states.push(x);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, sample_costate, Dataset, DatasetEntry, GenConfig};
    use crate::surrogate::{SurrogateConfig, ThresholdPolicy};

    fn small_model(n_sims: usize, seed: u64) -> SurrogateModel {
        let data = generate_dataset(&GenConfig {
            n_sims,
            seed,
            ..GenConfig::default()
        })
        .unwrap();
        SurrogateModel::build(&data, &SurrogateConfig::default()).unwrap()
    }

    #[test]
    fn goal_bias_one_always_returns_goal() {
        let cfg = PlannerConfig {
            goal_bias: 1.0,
            ..PlannerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert_eq!(sample_target(&cfg, &mut rng), (cfg.x_goal, true));
        }
    }

    #[test]
    fn goal_bias_frequency() {
        let cfg = PlannerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..100_000).filter(|_| sample_target(&cfg, &mut rng).1).count();
        assert!((9_000..=11_000).contains(&hits), "{hits}");
    }

    /// Kolmogorov-Smirnov statistic of `xs` against Uniform(lo, hi).
    fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let f = (x - lo) / (hi - lo);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn unbiased_targets_are_uniform() {
        let cfg = PlannerConfig {
            goal_bias: 0.0,
            ..PlannerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws: Vec<State> = (0..100_000).map(|_| sample_target(&cfg, &mut rng).0).collect();
        let crit = 1.628 / (draws.len() as f64).sqrt(); // alpha = 0.01
        let b = cfg.theta_bounds;
        assert!(ks_uniform(draws.iter().map(|s| s.theta).collect(), b.lo, b.hi) < crit);
        let b = cfg.omega_bounds;
        assert!(ks_uniform(draws.iter().map(|s| s.omega).collect(), b.lo, b.hi) < crit);
    }

    fn domain() -> ParamDomain {
        ParamDomain {
            lam_theta0: Interval::new(-3.0, 3.0),
            lam_omega0: Interval::new(-4.0, 4.0),
            t_f: Interval::new(-0.1, 2.1),
        }
    }

    #[test]
    fn vanishing_noise_only_rounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = SteeringParams::new(0.123_456, -1.987_6, 0.444_4);
        let q = perturb_and_quantize(&p, 1e-12, &domain(), 2, 0.01, &mut rng);
        assert_eq!(q, SteeringParams::new(0.12, -1.99, 0.44));
    }

    #[test]
    fn perturbation_respects_domain_and_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = domain();
        let p = SteeringParams::new(3.0, -4.0, 0.0);
        for _ in 0..20_000 {
            let q = perturb_and_quantize(&p, FRAC_PI_4, &d, 2, 0.01, &mut rng);
            assert!(q.lam_theta0 <= 3.0 && q.lam_omega0 >= -4.0);
            assert!(q.t_f >= 0.01);
            for v in q.to_array() {
                assert!(((v * 100.0).round() - v * 100.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn perturbation_mean_is_centred() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = domain();
        let p = SteeringParams::new(0.0, 1.0, 1.0);
        let n = 100_000;
        let mut sum = [0.0; 3];
        for _ in 0..n {
            let q = perturb_and_quantize(&p, FRAC_PI_4, &d, 2, 0.01, &mut rng);
            for (s, v) in sum.iter_mut().zip(q.to_array()) {
                *s += v;
            }
        }
        let mean = sum.map(|s| s / n as f64);
        // central in a symmetric window: the truncated mean equals the centre
        assert!((mean[0] - 0.0).abs() < 0.02 * 1.0);
        assert!((mean[1] - 1.0).abs() < 0.02 * 1.0);
        assert!((mean[2] - 1.0).abs() < 0.02 * 1.0);
    }

    #[test]
    fn expand_appends_integrated_endpoint() {
        let mut tree = Tree::with_root(State::default());
        let lam = sample_costate(&State::default(), 0.0, CostWeight::default()).unwrap();
        let params = SteeringParams::new(lam.lam_theta, lam.lam_omega, 0.5);
        let id = expand(&mut tree, 0, params, 0.01, CostWeight::default(), None).unwrap();
        let replay = dynamics::integrate(State::default(), lam, 0.5, 0.01, CostWeight::default(), None).unwrap();
        let node = tree.node(id);
        assert_eq!(node.state, replay.endpoint());
        assert_eq!(node.edge_cost, replay.cost());
        assert_eq!(node.cost_to_come, node.edge_cost);
        let id2 = expand(&mut tree, id, params, 0.01, CostWeight::default(), None).unwrap();
        assert_eq!(tree.node(id2).cost_to_come, tree.node(id).cost_to_come + tree.node(id2).edge_cost);

        let mut again = Tree::with_root(State::default());
        expand(&mut again, 0, params, 0.01, CostWeight::default(), None).unwrap();
        assert_eq!(again.nodes[1], tree.nodes[1]);
    }

    #[test]
    fn diverging_expansion_leaves_tree_unchanged() {
        let mut tree = Tree::with_root(State::new(0.0, 1e300));
        let before = tree.clone();
        let params = SteeringParams::new(1e300, 1e300, 1.0);
        assert!(expand(&mut tree, 0, params, 0.01, CostWeight::default(), None).is_err());
        assert_eq!(tree, before);
    }

    #[test]
    fn nearest_valid_matches_exhaustive_oracle() {
        let model = small_model(400, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let mut tree = Tree::with_root(State::new(rng.random_range(-4.0..1.0), rng.random_range(-2.0..2.0)));
            for _ in 0..9 {
                let p = tree.nodes[0].state;
                tree.nodes.push(TreeNode {
                    state: State::new(p.theta + rng.random_range(-0.5..0.5), p.omega + rng.random_range(-0.5..0.5)),
                    ..tree.nodes[0]
                });
            }
            let target = State::new(tree.nodes[0].state.theta + 0.3, tree.nodes[0].state.omega);
            let oracle = tree
                .nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| model.is_valid(&Query::new(n.state, target)))
                .map(|(i, n)| (i, model.predict_cost(&Query::new(n.state, target))))
                .fold(None, |acc: Option<(usize, f64)>, (i, c)| match acc {
                    Some((_, bc)) if bc <= c => acc,
                    _ => Some((i, c)),
                });
            assert_eq!(nearest_valid(&tree, &model, &target).map(|(i, _)| i), oracle.map(|(i, _)| i));
        }
    }

    #[test]
    fn single_node_and_invalid_targets() {
        let model = small_model(300, 8);
        let e = model.entries()[0];
        let tree = Tree::with_root(e.x0);
        assert_eq!(nearest_valid(&tree, &model, &e.x1).map(|(i, _)| i), Some(0));
        let far = State::new(e.x0.theta + 20.0, 0.0);
        assert!(nearest_valid(&tree, &model, &far).is_none());
    }

    #[test]
    fn start_inside_goal_region_succeeds_immediately() {
        let model = small_model(100, 9);
        let cfg = PlannerConfig {
            x_init: State::new(0.05, 0.0),
            ..PlannerConfig::default()
        };
        let r = plan(&cfg, &model);
        assert!(r.success);
        assert_eq!(r.path, vec![0]);
        assert_eq!(r.iterations_used, 0);
        assert_eq!(extract_path(&r.tree, 0).len(), 1);
    }

    #[test]
    fn extract_path_orders_root_first() {
        let mut tree = Tree::with_root(State::default());
        let p = SteeringParams::new(0.0, 2f64.sqrt(), 0.2);
        let a = expand(&mut tree, 0, p, 0.01, CostWeight::default(), None).unwrap();
        let b = expand(&mut tree, a, p, 0.01, CostWeight::default(), None).unwrap();
        let path = extract_path(&tree, b);
        assert_eq!(path.iter().map(|s| s.node).collect::<Vec<_>>(), vec![0, a, b]);
        assert!(path[0].params.is_none());
        let replayed = replay_path(&path, 0.01, CostWeight::default()).unwrap();
        for (s, r) in path.iter().zip(&replayed) {
            assert!(s.state.distance(r) <= 1e-9);
        }
    }

    #[test]
    fn starved_model_fails_by_budget() {
        // every stored segment starts and ends near the initial state
        let x0 = State::new(-PI, 0.0);
        let entries: Vec<DatasetEntry> = (0..50)
            .map(|i| DatasetEntry {
                x0,
                x1: State::new(-PI + 0.001 * i as f64, 0.0),
                cost: 0.1,
                params: SteeringParams::new(0.0, 0.0, 0.01),
                sim_id: i,
            })
            .collect();
        let model = SurrogateModel::build(
            &Dataset::new(entries),
            &SurrogateConfig {
                threshold: ThresholdPolicy::Fixed { threshold: 0.2 },
                ..SurrogateConfig::default()
            },
        )
        .unwrap();
        let cfg = PlannerConfig {
            max_iterations: 2000,
            max_nodes: 200,
            ..PlannerConfig::default()
        };
        let r = plan(&cfg, &model);
        assert!(!r.success);
        assert!(r.path.is_empty());
        assert_eq!(r.iterations_used, r.stats.skipped_iterations + r.stats.expansions + r.stats.diverged_expansions);
        for n in &r.tree.nodes[1..] {
            let parent = r.tree.node(n.parent.unwrap());
            assert!(model.is_valid(&Query::new(parent.state, n.target.unwrap())));
        }
    }

    #[test]
    fn planning_is_seed_deterministic() {
        let model = small_model(2000, 10);
        let cfg = PlannerConfig {
            max_nodes: 150,
            seed: 77,
            ..PlannerConfig::default()
        };
        let a = plan(&cfg, &model);
        let b = plan(&cfg, &model);
        assert_eq!(a.tree, b.tree);
        assert_eq!(a.path, b.path);
        assert_eq!(a.iterations_used, b.iterations_used);
    }
}
