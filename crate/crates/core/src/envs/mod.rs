//! Cooperative Dec-POMDP environments behind one [`Environment`] trait.
//!
//! Every environment is a deterministic state machine: the reset seed and the
//! sequence of joint actions fully determine a trajectory, including any
//! stochastic prey motion.

mod checkers;
mod grid;
mod matrix;
mod predator_prey;
mod switch;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkers::Checkers;
pub use grid::{Move, Pos};
pub use matrix::{matrix_payoff, MatrixGame, PAYOFF};
pub use predator_prey::{PredatorPrey, PredatorPreyConfig, CAPTURE};
pub use switch::Switch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecPomdpSpec {
    pub num_agents: usize,
    pub num_actions: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub episode_limit: usize,
    pub gamma: f64,
}

impl DecPomdpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 || self.num_actions == 0 || self.episode_limit == 0 {
            return Err(Error::Config(format!("degenerate environment spec {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub state: Vec<f64>,
    /// Team reward: the sum of `agent_rewards`.
    pub reward: f64,
    pub agent_rewards: Vec<f64>,
    /// The task itself ended (goal reached, prey all caught, ...).
    pub terminal: bool,
    /// The episode hit its step limit without a terminal event.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }

    pub(crate) fn from_parts(
        observations: Vec<Vec<f64>>,
        state: Vec<f64>,
        agent_rewards: Vec<f64>,
        terminal: bool,
        truncated: bool,
    ) -> Self {
        let reward = agent_rewards.iter().sum();
        Self {
            observations,
            state,
            reward,
            agent_rewards,
            terminal,
            truncated,
        }
    }
}

pub trait Environment: Send {
    fn spec(&self) -> &DecPomdpSpec;

    fn reset(&mut self, seed: u64) -> StepResult;

    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult>;

    fn config(&self) -> EnvConfig;
}

/// Environment selection, as written in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Matrix,
    PredatorPrey(PredatorPreyConfig),
    Switch,
    Checkers,
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Matrix => "matrix",
            EnvConfig::PredatorPrey(_) => "predator_prey",
            EnvConfig::Switch => "switch",
            EnvConfig::Checkers => "checkers",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::Matrix => Box::new(MatrixGame::new()),
            EnvConfig::PredatorPrey(cfg) => Box::new(PredatorPrey::new(cfg.clone())?),
            EnvConfig::Switch => Box::new(Switch::new()),
            EnvConfig::Checkers => Box::new(Checkers::new()),
        })
    }
}

/// Shared argument checks for `step`.
pub(crate) fn check_joint_action(spec: &DecPomdpSpec, done: bool, joint: &[usize]) -> Result<()> {
    if done {
        return Err(Error::StepAfterTerminal);
    }
    if joint.len() != spec.num_agents {
        return Err(Error::JointActionArity {
            expected: spec.num_agents,
            got: joint.len(),
        });
    }
    for (agent, &action) in joint.iter().enumerate() {
        if action >= spec.num_actions {
            return Err(Error::InvalidAction {
                agent,
                action,
                num_actions: spec.num_actions,
            });
        }
    }
    Ok(())
}
