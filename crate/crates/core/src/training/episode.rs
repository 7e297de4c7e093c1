use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One complete episode. Observation and state vectors carry one extra entry
/// for the state reached after the last action, so `observations.len() ==
/// actions.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// `observations[t][i]`: agent `i`'s observation before acting at step `t`.
    pub observations: Vec<Vec<Vec<f64>>>,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<usize>>,
    /// Team reward per step.
    pub rewards: Vec<f64>,
    /// The last step ended the task (as opposed to hitting the step limit).
    pub terminated: bool,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Index of the final step.
    pub fn terminal_index(&self) -> Option<usize> {
        self.len().checked_sub(1)
    }

    /// Whether step `t` ends the episode without a bootstrap term.
    pub fn is_terminal_step(&self, t: usize) -> bool {
        self.terminated && Some(t) == self.terminal_index()
    }

    pub fn validate(&self, num_agents: usize) -> Result<()> {
        let len = self.len();
        if len == 0 {
            return Err(Error::Empty("episode with no steps"));
        }
        if self.observations.len() != len + 1 || self.states.len() != len + 1 || self.rewards.len() != len {
            return Err(Error::Shape(format!(
                "episode of {len} steps has {} observations, {} states, {} rewards",
                self.observations.len(),
                self.states.len(),
                self.rewards.len()
            )));
        }
        let agents_ok = self.observations.iter().all(|o| o.len() == num_agents)
            && self.actions.iter().all(|a| a.len() == num_agents);
        if !agents_ok {
            return Err(Error::Shape(format!("episode rows must hold {num_agents} agents")));
        }
        Ok(())
    }
}
