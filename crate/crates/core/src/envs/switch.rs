//! Two agents swap sides of a 3x7 map through a one-cell-wide corridor.
//!
//! ```text
//! 0 . # # # . 1
//! . . . . . . .
//! . . # # # . .
//! ```
//!
//! Each agent earns +5 on first reaching the other's start cell and then stays
//! there. Agents still travelling pay -0.1 per step.

use super::grid::{Bounds, Move, Pos};
use super::{check_joint_action, DecPomdpSpec, EnvConfig, Environment, StepResult};
use crate::error::Result;

pub const ROWS: i32 = 3;
pub const COLS: i32 = 7;
pub const EPISODE_LIMIT: usize = 50;
pub const GOAL_REWARD: f64 = 5.0;
pub const STEP_PENALTY: f64 = -0.1;

const STARTS: [Pos; 2] = [Pos::new(0, 0), Pos::new(0, 6)];

#[derive(Debug, Clone)]
pub struct Switch {
    spec: DecPomdpSpec,
    bounds: Bounds,
    agents: [Pos; 2],
    arrived: [bool; 2],
    t: usize,
    done: bool,
}

impl Default for Switch {
    fn default() -> Self {
        Self::new()
    }
}

impl Switch {
    pub fn new() -> Self {
        Self {
            spec: DecPomdpSpec {
                num_agents: 2,
                num_actions: 5,
                obs_dim: 3,
                state_dim: 6,
                episode_limit: EPISODE_LIMIT,
                gamma: 0.99,
            },
            bounds: Bounds {
                rows: ROWS,
                cols: COLS,
            },
            agents: STARTS,
            arrived: [false; 2],
            t: 0,
            done: false,
        }
    }

    pub fn goal(agent: usize) -> Pos {
        STARTS[1 - agent]
    }

    pub fn is_wall(p: Pos) -> bool {
        (p.row == 0 || p.row == 2) && (2..=4).contains(&p.col)
    }

    pub fn positions(&self) -> [Pos; 2] {
        self.agents
    }

    pub fn set_positions(&mut self, agents: [Pos; 2]) {
        self.agents = agents;
        for i in 0..2 {
            self.arrived[i] = agents[i] == Self::goal(i);
        }
        self.done = self.arrived.iter().all(|&a| a);
    }

    fn observe(&self, agent_rewards: Vec<f64>, terminal: bool, truncated: bool) -> StepResult {
        let observations = (0..2)
            .map(|i| {
                let [r, c] = self.bounds.normalized(self.agents[i]);
                vec![r, c, if self.arrived[i] { 1.0 } else { 0.0 }]
            })
            .collect();
        let mut state = Vec::with_capacity(6);
        for i in 0..2 {
            state.extend(self.bounds.normalized(self.agents[i]));
            state.push(if self.arrived[i] { 1.0 } else { 0.0 });
        }
        StepResult::from_parts(observations, state, agent_rewards, terminal, truncated)
    }
}

impl Environment for Switch {
    fn spec(&self) -> &DecPomdpSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> StepResult {
        self.agents = STARTS;
        self.arrived = [false; 2];
        self.t = 0;
        self.done = false;
        self.observe(vec![0.0; 2], false, false)
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult> {
        check_joint_action(&self.spec, self.done, joint_action)?;
        self.t += 1;
        let mut rewards = vec![0.0; 2];
        for i in 0..2 {
            if self.arrived[i] {
                continue;
            }
            rewards[i] += STEP_PENALTY;
            let mv = Move::from_action(joint_action[i]).unwrap_or(Move::Stay);
            let target = mv.apply(self.agents[i]);
            let blocked = !self.bounds.contains(target)
                || Self::is_wall(target)
                || target == self.agents[1 - i];
            if !blocked {
                self.agents[i] = target;
            }
            if self.agents[i] == Self::goal(i) {
                self.arrived[i] = true;
                rewards[i] += GOAL_REWARD;
            }
        }
        let terminal = self.arrived.iter().all(|&a| a);
        let truncated = !terminal && self.t >= self.spec.episode_limit;
        self.done = terminal || truncated;
        Ok(self.observe(rewards, terminal, truncated))
    }

    fn config(&self) -> EnvConfig {
        EnvConfig::Switch
    }
}
