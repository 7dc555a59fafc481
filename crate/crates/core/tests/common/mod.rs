//! Randomized invariants over small generated games, shared by the property tests
//! and the acceptance run.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::Rng;

use steering::belief::{belief_update, mle_estimate, BeliefState, BeliefTracker, ModelClass, StepObservation};
use steering::construct::reward_from_direction;
use steering::dynamics::{dual_of_policy, policy_of_dual, step_dynamics, DynamicsModel, MirrorMap, Threshold};
use steering::env::{
    random_interior_policy, rollout, GoalKind, RolloutContext, SteeringObjective, SteeringReward, UniformRandomStrategy,
};
use steering::game::{own_action_values, AgentTable, GameSpec, JointPolicy, MarkovGame, RewardSource};
use steering::rng::stream;
use steering::scalar::expectation;

#[derive(Clone, Debug)]
pub struct Dims {
    pub actions: Vec<usize>,
    pub horizon: usize,
    pub states: usize,
    pub seed: u64,
}

pub fn dims() -> impl Strategy<Value = Dims> {
    (prop::collection::vec(1usize..=3, 1..=3), 1usize..=3, 1usize..=3, any::<u64>())
        .prop_map(|(actions, horizon, states, seed)| Dims { actions, horizon, states, seed })
}

/// Dense random transitions, rewards in [-1, 1] with about a third set to zero.
pub fn random_game(d: &Dims) -> MarkovGame<f64> {
    let mut rng = stream(d.seed, &[7]);
    let joint: usize = d.actions.iter().product();
    let transition = (0..d.horizon)
        .map(|_| {
            (0..d.states)
                .map(|_| {
                    (0..joint)
                        .map(|_| {
                            let w: Vec<f64> = (0..d.states).map(|_| rng.random::<f64>() + 1e-3).collect();
                            let z: f64 = w.iter().sum();
                            w.into_iter().map(|x| x / z).collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let rewards = (0..d.actions.len())
        .map(|_| {
            (0..d.horizon)
                .map(|_| {
                    (0..d.states)
                        .map(|_| {
                            (0..joint)
                                .map(|_| if rng.random::<f64>() < 0.33 { 0.0 } else { rng.random_range(-1.0..1.0) })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let spec = GameSpec {
        num_agents: d.actions.len(),
        horizon: d.horizon,
        num_states: d.states,
        initial_state: 0,
        actions_per_agent: d.actions.clone(),
        transition,
        rewards,
        reward_range: None,
    };
    MarkovGame::from_spec(&spec).unwrap()
}

pub fn random_table(game: &MarkovGame<f64>, seed: u64, lo: f64, hi: f64) -> AgentTable<f64> {
    let mut rng = stream(seed, &[9]);
    let shape = game.policy_shape();
    let data =
        (0..shape.num_agents()).map(|n| (0..shape.agent_len(n)).map(|_| rng.random_range(lo..hi)).collect()).collect();
    AgentTable::from_data(shape, data).unwrap()
}

/// Expected return of each agent by walking every state/action path forward.
pub fn enumerate_returns(game: &MarkovGame<f64>, pi: &JointPolicy<f64>, u: Option<&SteeringReward<f64>>) -> Vec<f64> {
    fn walk(
        game: &MarkovGame<f64>,
        pi: &JointPolicy<f64>,
        u: Option<&SteeringReward<f64>>,
        h: usize,
        s: usize,
        prob: f64,
        out: &mut [f64],
    ) {
        if h == game.horizon() {
            return;
        }
        for j in 0..game.joint_count() {
            let acts = game.decode_joint(j);
            let pj = prob * acts.iter().enumerate().map(|(n, &a)| pi.block(n, h, s)[a]).product::<f64>();
            for (n, o) in out.iter_mut().enumerate() {
                let extra = u.map_or(0.0, |u| u.table().block(n, h, s)[acts[n]]);
                *o += pj * (game.reward(n, h, s, j) + extra);
            }
            for (next, &p) in game.transition_row(h, s, j).iter().enumerate() {
                if p > 0.0 {
                    walk(game, pi, u, h + 1, next, pj * p, out);
                }
            }
        }
    }
    let mut out = vec![0.0; game.num_agents()];
    walk(game, pi, u, 0, game.initial_state(), 1.0, &mut out);
    out
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new(config).run(&strategy, test).map_err(|e| e.to_string())
}

pub fn values_match_path_enumeration(cases: u32) -> Result<(), String> {
    check(cases, dims(), |d| {
        let game = random_game(&d);
        let pi = random_interior_policy::<f64>(game.policy_shape(), 0.05, &mut stream(d.seed, &[1]));
        let u = SteeringReward::from_table(random_table(&game, d.seed, 0.0, 2.0));
        let want = enumerate_returns(&game, &pi, Some(&u));
        let got = own_action_values(&game, &pi, RewardSource::GamePlus(&u)).unwrap().returns;
        for (g, w) in got.iter().zip(&want) {
            prop_assert!(close(*g, *w, 1e-10), "{g} vs {w}");
        }
        Ok(())
    })
}

pub fn returns_are_linear_in_steering_reward(cases: u32) -> Result<(), String> {
    check(cases, (dims(), -3.0f64..3.0, -3.0f64..3.0), |(d, a, b)| {
        let game = random_game(&d);
        let pi = random_interior_policy::<f64>(game.policy_shape(), 0.05, &mut stream(d.seed, &[1]));
        let u1 = random_table(&game, d.seed, 0.0, 1.0);
        let u2 = random_table(&game, d.seed ^ 1, 0.0, 1.0);
        let mix = SteeringReward::from_table(u1.zip_with(&u2, |x, y| a * x + b * y).unwrap());
        let (u1, u2) = (SteeringReward::from_table(u1), SteeringReward::from_table(u2));
        let ret = |src| own_action_values(&game, &pi, src).unwrap().returns;
        let r1 = ret(RewardSource::SteeringOnly(&u1));
        let r2 = ret(RewardSource::SteeringOnly(&u2));
        let rm = ret(RewardSource::SteeringOnly(&mix));
        let base = ret(RewardSource::Game);
        let plus = ret(RewardSource::GamePlus(&u1));
        for n in 0..game.num_agents() {
            prop_assert!(close(rm[n], a * r1[n] + b * r2[n], 1e-10));
            prop_assert!(close(plus[n], base[n] + r1[n], 1e-10));
        }
        Ok(())
    })
}

pub fn projection_inverts_dual(cases: u32) -> Result<(), String> {
    check(cases, (dims(), any::<bool>()), |(d, euclid)| {
        let game = random_game(&d);
        let shape = game.policy_shape();
        let map = if euclid { MirrorMap::SquaredEuclidean } else { MirrorMap::NegativeEntropy };
        let pi = random_interior_policy::<f64>(shape, 0.05, &mut stream(d.seed, &[1]));
        let reference = random_interior_policy::<f64>(shape, 0.05, &mut stream(d.seed, &[2]));
        let theta = dual_of_policy(&pi, map, &reference).unwrap();
        for (n, h, s) in shape.blocks() {
            prop_assert!(expectation(reference.block(n, h, s), theta.block(n, h, s)).abs() < 1e-10);
        }
        let back = policy_of_dual(&theta, map).unwrap();
        prop_assert!(back.sup_distance(&pi) < 1e-10);
        Ok(())
    })
}

pub fn projection_ignores_per_state_shift(cases: u32) -> Result<(), String> {
    check(cases, (dims(), any::<bool>()), |(d, euclid)| {
        let game = random_game(&d);
        let shape = game.policy_shape();
        let map = if euclid { MirrorMap::SquaredEuclidean } else { MirrorMap::NegativeEntropy };
        let theta = steering::dynamics::DualVariables::from_table(random_table(&game, d.seed, -4.0, 4.0));
        let mut shifted = theta.table().clone();
        let mut rng = stream(d.seed, &[3]);
        for (n, h, s) in shape.blocks().collect::<Vec<_>>() {
            let c: f64 = rng.random_range(-10.0..10.0);
            shifted.block_mut(n, h, s).iter_mut().for_each(|x| *x += c);
        }
        let a = policy_of_dual(&theta, map).unwrap();
        let b = policy_of_dual(&steering::dynamics::DualVariables::from_table(shifted), map).unwrap();
        prop_assert!(a.sup_distance(&b) < 1e-10);
        Ok(())
    })
}

pub fn npg_step_ignores_constant_reward_shift(cases: u32) -> Result<(), String> {
    check(cases, (dims(), 0.0f64..5.0), |(d, c)| {
        let game = random_game(&d);
        let model = DynamicsModel::exact_npg(0.3);
        let pi = random_interior_policy::<f64>(game.policy_shape(), 0.05, &mut stream(d.seed, &[1]));
        let u = random_table(&game, d.seed, 0.0, 1.0);
        let agent = (d.seed as usize) % game.num_agents();
        let mut v = u.clone();
        v.agent_mut(agent).iter_mut().for_each(|x| *x += c);
        let step = |t: AgentTable<f64>| {
            step_dynamics(&model, &game, &pi, &SteeringReward::from_table(t), &mut stream(0, &[])).unwrap().policy
        };
        prop_assert!(step(u).sup_distance(&step(v)) < 1e-10);
        Ok(())
    })
}

pub fn constructed_reward_has_state_free_expectation(cases: u32) -> Result<(), String> {
    check(cases, dims(), |d| {
        let game = random_game(&d);
        let shape = game.policy_shape().clone();
        let pi = random_interior_policy::<f64>(&shape, 0.2, &mut stream(d.seed, &[1]));
        let nu = random_table(&game, d.seed, -3.0, 3.0);
        let u = reward_from_direction(&game, &pi, &nu).unwrap();
        prop_assert!(u.table().iter().all(|x| x >= 0.0));
        for n in 0..shape.num_agents() {
            for h in 0..shape.horizon {
                let first = expectation(pi.block(n, h, 0), u.table().block(n, h, 0));
                for s in 1..shape.num_states {
                    prop_assert!(close(expectation(pi.block(n, h, s), u.table().block(n, h, s)), first, 1e-10));
                }
            }
        }
        let adv = own_action_values(&game, &pi, RewardSource::GamePlus(&u)).unwrap().adv;
        for (n, h, s) in shape.blocks() {
            let block = nu.block(n, h, s);
            let mean = expectation(pi.block(n, h, s), block);
            for (a, x) in adv.block(n, h, s).iter().zip(block) {
                prop_assert!(close(*a, x - mean, 1e-9));
            }
        }
        Ok(())
    })
}

pub fn posterior_stays_normalized(cases: u32) -> Result<(), String> {
    check(
        cases,
        (
            prop::collection::vec(prop::collection::vec(0.0f64..3.0, 1..=4), 1..=4),
            prop::collection::vec((0.0f64..1.0, 0.0f64..3.0, 0.0f64..3.0), 1..=8),
        ),
        |(thresholds, steps)| {
            let class =
                ModelClass::factored(thresholds.iter().map(|c| c.iter().map(|&t| Threshold(t)).collect()).collect());
            let game = steering::game::make_coop_game::<f64>(thresholds.len(), 2.0, 1.0).unwrap();
            let mut belief = BeliefState::uniform(&class);
            for &(zero, rate, gap) in &steps {
                let rate = if zero < 0.2 { 0.0 } else { rate };
                let obs =
                    StepObservation::Rates { rates: vec![rate; thresholds.len()], gaps: vec![gap; thresholds.len()] };
                belief = belief_update(&belief, &obs, &class, &game).unwrap();
                for w in belief.components() {
                    prop_assert!(w.iter().all(|&x| x >= 0.0));
                    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
            Ok(())
        },
    )
}

pub fn sequential_updates_equal_batch(cases: u32) -> Result<(), String> {
    check(
        cases,
        (
            prop::collection::vec((0.1f64..2.0, 0.05f64..1.0), 1..=5),
            prop::collection::vec((0.0f64..1.0, 0.0f64..3.0), 1..=10),
        ),
        |(models, steps)| {
            let class = ModelClass::explicit(models.iter().map(|&(m, s)| DynamicsModel::noisy_lr(m, s)).collect());
            let game = steering::game::stag_hunt::<f64>();
            let obs: Vec<StepObservation> = steps
                .iter()
                .map(|&(zero, rate)| {
                    let rate = if zero < 0.2 { 0.0 } else { rate };
                    StepObservation::Rates { rates: vec![rate, rate * 0.5], gaps: vec![1.0, 2.0] }
                })
                .collect();
            let mut sequential = BeliefState::uniform(&class);
            for o in &obs {
                sequential = belief_update(&sequential, o, &class, &game).unwrap();
            }
            let batch = BeliefState::uniform(&class)
                .update(&mle_estimate(&obs, &class, &game).unwrap().log_likelihoods)
                .unwrap();
            for (a, b) in sequential.components()[0].iter().zip(&batch.components()[0]) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            Ok(())
        },
    )
}

pub fn rollouts_repeat_under_a_seed(cases: u32) -> Result<(), String> {
    check(cases, (dims(), 1usize..6), |(d, steps)| {
        let game = random_game(&d);
        let model = DynamicsModel::noisy_lr(0.8, 0.4);
        let class = ModelClass::explicit(vec![model.clone(), DynamicsModel::noisy_lr(0.3, 0.4)]);
        let ev = SteeringObjective::new(GoalKind::TotalUtility, 1.0, 2.0).prepare(&game).unwrap();
        let ctx = RolloutContext { game: &game, model: &model, evaluator: &ev, horizon: steps };
        let start = random_interior_policy::<f64>(game.policy_shape(), 0.05, &mut stream(d.seed, &[1]));
        let psi = UniformRandomStrategy { u_max: 2.0 };
        let run = || {
            let mut tracker = BeliefTracker::new(class.clone(), &game).with_truth(vec![0]).unwrap();
            rollout(&ctx, &psi, &start, d.seed, Some(&mut tracker)).unwrap()
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(&a.policies, &b.policies);
        prop_assert_eq!(&a.rewards, &b.rewards);
        prop_assert_eq!(&a.rates, &b.rates);
        prop_assert_eq!(&a.beliefs, &b.beliefs);
        prop_assert_eq!(&a.costs, &b.costs);
        Ok(())
    })
}

pub type Suite = (&'static str, fn(u32) -> Result<(), String>);

pub const SUITES: &[Suite] = &[
    ("value oracle", values_match_path_enumeration),
    ("linearity", returns_are_linear_in_steering_reward),
    ("projection round trip", projection_inverts_dual),
    ("projection shift invariance", projection_ignores_per_state_shift),
    ("update shift invariance", npg_step_ignores_constant_reward_shift),
    ("constructed u expectation", constructed_reward_has_state_free_expectation),
    ("belief normalization", posterior_stays_normalized),
    ("sequential = batch bayes", sequential_updates_equal_batch),
    ("seed determinism", rollouts_repeat_under_a_seed),
];
