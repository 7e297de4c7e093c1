//! Two-agent, three-action, one-step cooperative matrix game.

use super::{check_joint_action, DecPomdpSpec, EnvConfig, Environment, StepResult};
use crate::error::Result;

/// Row: action of agent 0, column: action of agent 1 (`A`, `B`, `C`).
pub const PAYOFF: [[f64; 3]; 3] = [[8.0, -12.0, -12.0], [-12.0, 0.0, 0.0], [-12.0, 0.0, 0.0]];

pub fn matrix_payoff(a0: usize, a1: usize) -> f64 {
    PAYOFF[a0][a1]
}

#[derive(Debug, Clone)]
pub struct MatrixGame {
    spec: DecPomdpSpec,
    done: bool,
}

impl Default for MatrixGame {
    fn default() -> Self {
        Self::new()
    }
}

impl MatrixGame {
    pub fn new() -> Self {
        Self {
            spec: DecPomdpSpec {
                num_agents: 2,
                num_actions: 3,
                obs_dim: 1,
                state_dim: 1,
                episode_limit: 1,
                gamma: 1.0,
            },
            done: false,
        }
    }

    fn observe(&self, agent_rewards: Vec<f64>, terminal: bool) -> StepResult {
        StepResult::from_parts(vec![vec![1.0]; 2], vec![1.0], agent_rewards, terminal, false)
    }
}

impl Environment for MatrixGame {
    fn spec(&self) -> &DecPomdpSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> StepResult {
        self.done = false;
        self.observe(vec![0.0; 2], false)
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult> {
        check_joint_action(&self.spec, self.done, joint_action)?;
        self.done = true;
        // The payoff is a team reward; it is credited to agent 0 alone so the
        // per-agent components still sum to it.
        let payoff = matrix_payoff(joint_action[0], joint_action[1]);
        Ok(self.observe(vec![payoff, 0.0], true))
    }

    fn config(&self) -> EnvConfig {
        EnvConfig::Matrix
    }
}
