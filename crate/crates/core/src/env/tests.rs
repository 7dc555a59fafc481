use super::*;
use crate::dynamics::DynamicsModel;
use crate::game::{stag_hunt, JointPolicy, MarkovGame, PolicyShape};

fn stag_hunt_eval(beta: f64) -> (MarkovGame<f64>, GoalEvaluator<f64>) {
    let game = stag_hunt::<f64>();
    let ev = SteeringObjective::new(GoalKind::TotalUtility, beta, 10.0).with_shift(-10.0).prepare(&game).unwrap();
    (game, ev)
}

#[test]
fn zero_horizon_is_initial_policy() {
    let (game, ev) = stag_hunt_eval(1.0);
    let model = DynamicsModel::exact_npg(0.01);
    let ctx = RolloutContext { game: &game, model: &model, evaluator: &ev, horizon: 0 };
    let start = JointPolicy::from_first_action_probs(game.policy_shape(), &[0.3, 0.6]).unwrap();
    let traj = rollout(&ctx, &ZeroStrategy, &start, 1, None).unwrap();
    assert_eq!(traj.policies.len(), 1);
    assert_eq!(traj.steering_cost(), 0.0);
    assert!((traj.steering_gap() - ev.gap(&game, &start).unwrap()).abs() < 1e-15);
}

#[test]
fn unsteered_stag_hunt_falls_to_gather() {
    let (game, ev) = stag_hunt_eval(1.0);
    let model = DynamicsModel::exact_npg(0.01);
    let ctx = RolloutContext { game: &game, model: &model, evaluator: &ev, horizon: 500 };
    let start = JointPolicy::from_first_action_probs(game.policy_shape(), &[0.3, 0.3]).unwrap();
    let traj = rollout(&ctx, &ZeroStrategy, &start, 1, None).unwrap();
    assert_eq!(traj.steering_cost(), 0.0);
    for n in 0..2 {
        assert!(traj.terminal().block(n, 0, 0)[0] < 0.01);
    }
    assert_eq!(traj.goals.len(), 501);
    traj.verify_costs(&game, 1e-10).unwrap();
}

#[test]
fn out_of_range_rewards_are_clamped_and_counted() {
    let (game, ev) = stag_hunt_eval(1.0);
    let model = DynamicsModel::exact_npg(0.01);
    let ctx = RolloutContext { game: &game, model: &model, evaluator: &ev, horizon: 3 };
    let shape = game.policy_shape();
    let table = crate::game::AgentTable::from_data(shape, vec![vec![20.0, -1.0], vec![0.5, 0.5]]).unwrap();
    let psi = ConstantStrategy(SteeringReward::from_table(table));
    let start = JointPolicy::uniform(shape);
    let traj = rollout(&ctx, &psi, &start, 1, None).unwrap();
    assert_eq!(traj.clamped, 6);
    assert!(traj.rewards.iter().all(|u| u.validate(10.0).is_ok()));
    // cost per step: 0.5 * 10 + 0.5 * 0.5 + 0.5 * 0.5 under the first policy
    assert!((traj.costs[0] - 5.5).abs() < 1e-12);
}

#[test]
fn gather_basin_objective() {
    let (game, ev) = stag_hunt_eval(2.0);
    let model = DynamicsModel::exact_npg(0.01);
    let start = JointPolicy::from_first_action_probs(game.policy_shape(), &[0.1, 0.1]).unwrap();
    let res = evaluate_objective(&ZeroStrategy, &[model], &game, 500, &ev, &[start], 1, 0).unwrap();
    assert!((res.objective - 2.0 * (4.0 - 10.0)).abs() < 1e-3);
}

#[test]
fn duplicate_models_average_to_either() {
    let (game, ev) = stag_hunt_eval(1.0);
    let model = DynamicsModel::noisy_lr(0.05, 0.02);
    let start = JointPolicy::uniform(game.policy_shape());
    let one = evaluate_objective(&ZeroStrategy, &[model.clone()], &game, 20, &ev, &[start.clone()], 4, 5).unwrap();
    let two = evaluate_objective(&ZeroStrategy, &[model.clone(), model], &game, 20, &ev, &[start], 4, 5).unwrap();
    assert_eq!(two.per_model[0].objective.mean, one.per_model[0].objective.mean);
    assert!(two.per_model[1].objective.mean.is_finite());
}

#[test]
fn empty_class_rejected() {
    let (game, ev) = stag_hunt_eval(1.0);
    let start = JointPolicy::uniform(game.policy_shape());
    assert!(evaluate_objective(&ZeroStrategy, &[], &game, 1, &ev, &[start], 1, 0).is_err());
}

#[test]
fn pareto_examples() {
    assert!(dominators(&[vec![(0.1, 5.0)]])[0].is_empty());
    let same = dominators(&[vec![(0.1, 5.0)], vec![(0.1, 5.0)]]);
    assert!(same.iter().all(Vec::is_empty));
    let d = dominators(&[vec![(0.1, 5.0)], vec![(0.2, 6.0)]]);
    assert!(d[0].is_empty());
    assert_eq!(d[1], vec![0]);
    // trade-offs are not dominance
    let t = dominators(&[vec![(0.1, 6.0)], vec![(0.2, 5.0)]]);
    assert!(t.iter().all(Vec::is_empty));
}

#[test]
fn grid_values() {
    let shape = PolicyShape::new(1, 1, vec![2, 2]);
    let g1 = init_grid::<f64>(&shape, 1).unwrap();
    assert_eq!(g1.len(), 1);
    assert_eq!(g1[0].block(0, 0, 0)[0], 0.5);
    let g2 = init_grid::<f64>(&shape, 2).unwrap();
    let firsts: Vec<(f64, f64)> = g2.iter().map(|p| (p.block(0, 0, 0)[0], p.block(1, 0, 0)[0])).collect();
    assert_eq!(firsts, vec![(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]);
    let g5 = init_grid::<f64>(&shape, 5).unwrap();
    assert_eq!(g5.len(), 25);
    let xs: Vec<f64> = g5.iter().map(|p| p.block(0, 0, 0)[0]).collect();
    assert!((xs.iter().cloned().fold(1.0, f64::min) - 0.1).abs() < 1e-15);
    assert!((xs.iter().cloned().fold(0.0, f64::max) - 0.9).abs() < 1e-15);
    assert!(init_grid::<f64>(&PolicyShape::new(1, 1, vec![2, 3]), 2).is_err());
}

#[test]
fn summary_interval() {
    let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(s.mean, 2.5);
    let sd = (5.0f64 / 3.0).sqrt();
    assert!((s.sd - sd).abs() < 1e-12);
    assert!((s.ci95 - 1.96 * sd / 2.0).abs() < 1e-12);
}

#[test]
fn rollouts_are_seed_deterministic() {
    let (game, ev) = stag_hunt_eval(1.0);
    let model = DynamicsModel::noisy_lr(0.05, 0.05);
    let ctx = RolloutContext { game: &game, model: &model, evaluator: &ev, horizon: 50 };
    let psi = UniformRandomStrategy { u_max: 1.0 };
    let start = JointPolicy::uniform(game.policy_shape());
    let a = rollout(&ctx, &psi, &start, 42, None).unwrap();
    let b = rollout(&ctx, &psi, &start, 42, None).unwrap();
    let c = rollout(&ctx, &psi, &start, 43, None).unwrap();
    assert_eq!(a.terminal(), b.terminal());
    assert_eq!(a.costs, b.costs);
    assert_ne!(a.terminal(), c.terminal());
}
