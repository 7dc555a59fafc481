//! Randomized invariants, 1000 cases each.

mod common;

const CASES: u32 = 1000;

#[test]
fn values_match_path_enumeration() {
    common::values_match_path_enumeration(CASES).unwrap();
}

#[test]
fn returns_are_linear_in_steering_reward() {
    common::returns_are_linear_in_steering_reward(CASES).unwrap();
}

#[test]
fn projection_inverts_dual() {
    common::projection_inverts_dual(CASES).unwrap();
}

#[test]
fn projection_ignores_per_state_shift() {
    common::projection_ignores_per_state_shift(CASES).unwrap();
}

#[test]
fn npg_step_ignores_constant_reward_shift() {
    common::npg_step_ignores_constant_reward_shift(CASES).unwrap();
}

#[test]
fn constructed_reward_has_state_free_expectation() {
    common::constructed_reward_has_state_free_expectation(CASES).unwrap();
}

#[test]
fn posterior_stays_normalized() {
    common::posterior_stays_normalized(CASES).unwrap();
}

#[test]
fn sequential_updates_equal_batch() {
    common::sequential_updates_equal_batch(CASES).unwrap();
}

#[test]
fn rollouts_repeat_under_a_seed() {
    common::rollouts_repeat_under_a_seed(CASES).unwrap();
}
