use proptest::prelude::*;

use rqn_core::envs::{EnvConfig, Environment, Pos, PredatorPrey, PredatorPreyConfig, StepResult};

fn all_envs() -> Vec<EnvConfig> {
    vec![
        EnvConfig::Matrix,
        EnvConfig::PredatorPrey(PredatorPreyConfig::default()),
        EnvConfig::PredatorPrey(PredatorPreyConfig {
            n_predators: 4,
            n_prey: 2,
            capture_penalty: -0.1,
        }),
        EnvConfig::Switch,
        EnvConfig::Checkers,
    ]
}

/// Plays `actions` (wrapped per agent into the action range) until the
/// episode ends; returns every step result, starting with the reset.
fn play(env: &mut dyn Environment, seed: u64, actions: &[usize]) -> Vec<StepResult> {
    let spec = env.spec().clone();
    let mut out = vec![env.reset(seed)];
    let mut k = 0;
    loop {
        let joint: Vec<usize> = (0..spec.num_agents)
            .map(|i| actions[(k + i) % actions.len()] % spec.num_actions)
            .collect();
        k += spec.num_agents;
        let step = env.step(&joint).unwrap();
        let done = step.done();
        out.push(step);
        if done {
            return out;
        }
        assert!(out.len() <= spec.episode_limit + 1, "ran past the step limit");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn team_reward_is_the_sum_of_agent_credits(seed in any::<u64>(), actions in prop::collection::vec(0usize..8, 1..64)) {
        for cfg in all_envs() {
            let mut env = cfg.build().unwrap();
            for step in play(env.as_mut(), seed, &actions).iter().skip(1) {
                prop_assert!(step.reward.is_finite());
                prop_assert_eq!(step.agent_rewards.len(), env.spec().num_agents);
                let sum: f64 = step.agent_rewards.iter().sum();
                prop_assert!((step.reward - sum).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seed_and_actions_determine_the_trajectory(seed in any::<u64>(), actions in prop::collection::vec(0usize..8, 1..64)) {
        for cfg in all_envs() {
            let mut a = cfg.build().unwrap();
            let mut b = cfg.build().unwrap();
            let first = play(a.as_mut(), seed, &actions);
            // A different episode in between must not leak into the replay.
            play(b.as_mut(), seed.wrapping_add(1), &actions);
            let second = play(b.as_mut(), seed, &actions);
            prop_assert_eq!(first, second);
        }
    }

    #[test]
    fn episodes_never_exceed_the_step_limit(seed in any::<u64>(), actions in prop::collection::vec(0usize..8, 1..64)) {
        for cfg in all_envs() {
            let mut env = cfg.build().unwrap();
            let limit = env.spec().episode_limit;
            let steps = play(env.as_mut(), seed, &actions);
            prop_assert!(steps.len() - 1 <= limit);
            let last = steps.last().unwrap();
            prop_assert!(last.terminal != last.truncated);
            prop_assert!(steps[..steps.len() - 1].iter().all(|s| !s.done()));
            for s in &steps {
                prop_assert_eq!(s.observations.len(), env.spec().num_agents);
                prop_assert!(s.observations.iter().all(|o| o.len() == env.spec().obs_dim));
                prop_assert_eq!(s.state.len(), env.spec().state_dim);
            }
        }
    }

    /// Moving the prey between two cells that no predator can see leaves
    /// every observation unchanged.
    #[test]
    fn predator_observations_are_local(cells in prop::collection::vec((0i32..7, 0i32..7), 4)) {
        let pos: Vec<Pos> = cells.iter().map(|&(r, c)| Pos::new(r, c)).collect();
        let predators = [pos[0], pos[1]];
        let visible = |p: Pos| predators.iter().any(|q| (q.row - p.row).abs() <= 1 && (q.col - p.col).abs() <= 1);
        prop_assume!(predators[0] != predators[1]);
        prop_assume!(pos[2] != pos[3] && !visible(pos[2]) && !visible(pos[3]));
        let mut env = PredatorPrey::new(PredatorPreyConfig::default()).unwrap();
        env.reset(0);
        let a = env.set_positions(&predators, &[pos[2]]).unwrap();
        let b = env.set_positions(&predators, &[pos[3]]).unwrap();
        prop_assert_eq!(a.observations, b.observations);
        prop_assert_ne!(a.state, b.state);
    }
}

#[test]
fn visible_prey_changes_the_observation() {
    let mut env = PredatorPrey::new(PredatorPreyConfig::default()).unwrap();
    env.reset(0);
    let predators = [Pos::new(0, 0), Pos::new(6, 6)];
    let far = env.set_positions(&predators, &[Pos::new(3, 3)]).unwrap();
    let near = env.set_positions(&predators, &[Pos::new(1, 1)]).unwrap();
    assert_ne!(far.observations[0], near.observations[0]);
    assert_eq!(far.observations[1], near.observations[1]);
}

#[test]
fn four_predator_reset_is_reproducible() {
    let cfg = PredatorPreyConfig {
        n_predators: 4,
        n_prey: 1,
        capture_penalty: 0.0,
    };
    let mut a = PredatorPrey::new(cfg.clone()).unwrap();
    let mut b = PredatorPrey::new(cfg).unwrap();
    a.reset(42);
    b.reset(42);
    assert_eq!(a.predators(), b.predators());
    assert_eq!(a.prey(), b.prey());
}

#[test]
fn matrix_reset_gives_constant_observations() {
    let mut env = EnvConfig::Matrix.build().unwrap();
    let a = env.reset(1);
    let b = env.reset(2);
    assert_eq!(a.observations, b.observations);
    assert_eq!(a.observations[0], a.observations[1]);
    assert!(!a.done());
}
