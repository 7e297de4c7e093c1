//! Two agents on a 3x8 board of apples and lemons laid out as a checkerboard
//! in columns 1..8. Entering an apple pays +1, a lemon -1; both are consumed.

use super::grid::{encode_window, Bounds, Move, Pos};
use super::{check_joint_action, DecPomdpSpec, EnvConfig, Environment, StepResult};
use crate::error::Result;

pub const ROWS: i32 = 3;
pub const COLS: i32 = 8;
pub const EPISODE_LIMIT: usize = 50;
pub const APPLE_REWARD: f64 = 1.0;
pub const LEMON_REWARD: f64 = -1.0;
pub const STEP_PENALTY: f64 = -0.01;
pub const OBS_RADIUS: i32 = 1;

const STARTS: [Pos; 2] = [Pos::new(0, 0), Pos::new(2, 0)];
const CH_WALL: usize = 0;
const CH_AGENT: usize = 1;
const CH_APPLE: usize = 2;
const CH_LEMON: usize = 3;
const CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Item {
    Empty,
    Apple,
    Lemon,
}

#[derive(Debug, Clone)]
pub struct Checkers {
    spec: DecPomdpSpec,
    bounds: Bounds,
    agents: [Pos; 2],
    items: Vec<Item>,
    t: usize,
    done: bool,
}

impl Default for Checkers {
    fn default() -> Self {
        Self::new()
    }
}

impl Checkers {
    pub fn new() -> Self {
        let cells = (ROWS * COLS) as usize;
        let window = (2 * OBS_RADIUS + 1) as usize;
        let mut env = Self {
            spec: DecPomdpSpec {
                num_agents: 2,
                num_actions: 5,
                obs_dim: 2 + window * window * CHANNELS,
                state_dim: 4 + 2 * cells,
                episode_limit: EPISODE_LIMIT,
                gamma: 0.99,
            },
            bounds: Bounds {
                rows: ROWS,
                cols: COLS,
            },
            agents: STARTS,
            items: Vec::new(),
            t: 0,
            done: false,
        };
        env.items = Self::initial_items();
        env
    }

    fn initial_items() -> Vec<Item> {
        (0..ROWS)
            .flat_map(|r| {
                (0..COLS).map(move |c| match c {
                    0 => Item::Empty,
                    _ if (r + c) % 2 == 0 => Item::Apple,
                    _ => Item::Lemon,
                })
            })
            .collect()
    }

    fn idx(&self, p: Pos) -> usize {
        (p.row * self.bounds.cols + p.col) as usize
    }

    pub fn item(&self, p: Pos) -> Item {
        if self.bounds.contains(p) {
            self.items[self.idx(p)]
        } else {
            Item::Empty
        }
    }

    pub fn set_item(&mut self, p: Pos, item: Item) {
        let i = self.idx(p);
        self.items[i] = item;
    }

    pub fn apples_left(&self) -> usize {
        self.items.iter().filter(|&&i| i == Item::Apple).count()
    }

    pub fn positions(&self) -> [Pos; 2] {
        self.agents
    }

    pub fn set_positions(&mut self, agents: [Pos; 2]) {
        self.agents = agents;
    }

    fn observe(&self, agent_rewards: Vec<f64>, terminal: bool, truncated: bool) -> StepResult {
        let observations = (0..2)
            .map(|i| {
                let me = self.agents[i];
                let mut obs = Vec::with_capacity(self.spec.obs_dim);
                obs.extend(self.bounds.normalized(me));
                encode_window(&mut obs, me, OBS_RADIUS, CHANNELS, |p| {
                    if !self.bounds.contains(p) {
                        Some(CH_WALL)
                    } else if p == self.agents[1 - i] {
                        Some(CH_AGENT)
                    } else {
                        match self.item(p) {
                            Item::Apple => Some(CH_APPLE),
                            Item::Lemon => Some(CH_LEMON),
                            Item::Empty => None,
                        }
                    }
                });
                obs
            })
            .collect();
        let mut state = Vec::with_capacity(self.spec.state_dim);
        for p in self.agents {
            state.extend(self.bounds.normalized(p));
        }
        state.extend(self.items.iter().map(|&i| f64::from(u8::from(i == Item::Apple))));
        state.extend(self.items.iter().map(|&i| f64::from(u8::from(i == Item::Lemon))));
        StepResult::from_parts(observations, state, agent_rewards, terminal, truncated)
    }
}

impl Environment for Checkers {
    fn spec(&self) -> &DecPomdpSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> StepResult {
        self.agents = STARTS;
        self.items = Self::initial_items();
        self.t = 0;
        self.done = false;
        self.observe(vec![0.0; 2], false, false)
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult> {
        check_joint_action(&self.spec, self.done, joint_action)?;
        self.t += 1;
        let mut rewards = vec![STEP_PENALTY; 2];
        for i in 0..2 {
            let mv = Move::from_action(joint_action[i]).unwrap_or(Move::Stay);
            let target = mv.apply(self.agents[i]);
            if mv == Move::Stay || !self.bounds.contains(target) || target == self.agents[1 - i] {
                continue;
            }
            self.agents[i] = target;
            let cell = self.idx(target);
            rewards[i] += match self.items[cell] {
                Item::Apple => APPLE_REWARD,
                Item::Lemon => LEMON_REWARD,
                Item::Empty => 0.0,
            };
            self.items[cell] = Item::Empty;
        }
        let terminal = self.apples_left() == 0;
        let truncated = !terminal && self.t >= self.spec.episode_limit;
        self.done = terminal || truncated;
        Ok(self.observe(rewards, terminal, truncated))
    }

    fn config(&self) -> EnvConfig {
        EnvConfig::Checkers
    }
}
