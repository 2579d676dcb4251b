//! Heuristic comparison planner: Euclidean nearest node, uniformly random
//! steering parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clock::Stopwatch;
use crate::datagen::SteeringParams;
use crate::planner::{expand, extract_path, quantize, sample_target, NodeId, PlanResult, PlanStats, PlannerConfig, Tree};
use crate::surrogate::ParamDomain;

/// RRT with the learned planner's target sampling and goal test, but the
/// node closest in state space and parameters drawn uniformly from `domain`.
pub fn baseline_plan(cfg: &PlannerConfig, domain: &ParamDomain) -> PlanResult {
    let started = Stopwatch::start();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tree = Tree::with_root(cfg.x_init);
    let mut stats = PlanStats::default();
    let mut goal_node = (cfg.x_init.distance(&cfg.x_goal) <= cfg.goal_radius).then_some(0);
    let mut iterations = 0;
    let bounds = domain.bounds();
    while goal_node.is_none() && iterations < cfg.max_iterations && tree.len() < cfg.max_nodes {
        iterations += 1;
        let (target, is_goal) = sample_target(cfg, &mut rng);
        if is_goal {
            stats.goal_draws += 1;
        }
        let nearest: NodeId = tree
            .nodes
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.state.distance(&target).total_cmp(&b.state.distance(&target)))
            .map(|(id, _)| id)
            .expect("tree has a root");
        let mut p = [0.0; 3];
        for (v, b) in p.iter_mut().zip(bounds) {
            *v = quantize(b.sample(&mut rng), cfg.decimals, b);
        }
        let mut params = SteeringParams::from_array(p);
        params.t_f = params.t_f.max(cfg.dt);
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
    let path = goal_node.map(|g| extract_path(&tree, g).iter().map(|s| s.node).collect()).unwrap_or_default();
    PlanResult {
        tree,
        path,
        iterations_used: iterations,
        wall_time: started.seconds(),
        success: goal_node.is_some(),
        stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Interval;
    use crate::dynamics::State;

    fn domain() -> ParamDomain {
        ParamDomain {
            lam_theta0: Interval::new(-5.0, 5.0),
            lam_omega0: Interval::new(-5.0, 5.0),
            t_f: Interval::new(0.01, 1.0),
        }
    }

    #[test]
    fn adjacent_goal_with_full_bias_succeeds_quickly() {
        let cfg = PlannerConfig {
            x_init: State::new(0.05, 0.0),
            goal_bias: 1.0,
            seed: 3,
            ..PlannerConfig::default()
        };
        let r = baseline_plan(&cfg, &domain());
        assert!(r.success);
        assert_eq!(r.tree.len(), 1);
    }

    #[test]
    fn edges_are_quantized_and_in_domain() {
        let cfg = PlannerConfig {
            max_nodes: 50,
            seed: 9,
            ..PlannerConfig::default()
        };
        let d = domain();
        let r = baseline_plan(&cfg, &d);
        for n in &r.tree.nodes[1..] {
            let p = n.edge_params.unwrap();
            assert!(d.contains(&p));
            for v in p.to_array() {
                assert!(((v * 100.0).round() - v * 100.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = PlannerConfig {
            max_nodes: 80,
            seed: 21,
            ..PlannerConfig::default()
        };
        let a = baseline_plan(&cfg, &domain());
        let b = baseline_plan(&cfg, &domain());
        assert_eq!(a.tree, b.tree);
        assert_eq!(a.iterations_used, b.iterations_used);
    }
}
