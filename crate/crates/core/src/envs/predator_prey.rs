//! Predators on a 7x7 grid must surround and jointly capture randomly moving
//! prey. A capture needs at least two adjacent predators choosing [`CAPTURE`]
//! in the same step.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{encode_window, Bounds, Move, Pos};
use super::{check_joint_action, DecPomdpSpec, EnvConfig, Environment, StepResult};
use crate::error::{Error, Result};

pub const GRID: i32 = 7;
pub const EPISODE_LIMIT: usize = 50;
pub const OBS_RADIUS: i32 = 1;
/// Action index of the capture attempt; `0..5` are the moves.
pub const CAPTURE: usize = 5;
pub const STEP_PENALTY: f64 = -0.01;
pub const CAPTURE_REWARD: f64 = 5.0;

const CH_WALL: usize = 0;
const CH_PREDATOR: usize = 1;
const CH_PREY: usize = 2;
const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredatorPreyConfig {
    pub n_predators: usize,
    pub n_prey: usize,
    /// Credited to every agent for each prey that exactly one predator tried
    /// to capture this step.
    pub capture_penalty: f64,
}

impl Default for PredatorPreyConfig {
    fn default() -> Self {
        Self {
            n_predators: 2,
            n_prey: 1,
            capture_penalty: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PredatorPrey {
    cfg: PredatorPreyConfig,
    spec: DecPomdpSpec,
    bounds: Bounds,
    predators: Vec<Pos>,
    prey: Vec<Pos>,
    alive: Vec<bool>,
    t: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl PredatorPrey {
    pub fn new(cfg: PredatorPreyConfig) -> Result<Self> {
        if cfg.n_predators < 2 || cfg.n_prey == 0 {
            return Err(Error::Config(format!(
                "predator_prey needs >= 2 predators and >= 1 prey, got {cfg:?}"
            )));
        }
        if cfg.n_predators + cfg.n_prey > (GRID * GRID) as usize {
            return Err(Error::Config("too many entities for the grid".into()));
        }
        let window = (2 * OBS_RADIUS + 1) as usize;
        let spec = DecPomdpSpec {
            num_agents: cfg.n_predators,
            num_actions: 6,
            obs_dim: 2 + window * window * CHANNELS,
            state_dim: 2 * cfg.n_predators + 3 * cfg.n_prey,
            episode_limit: EPISODE_LIMIT,
            gamma: 0.99,
        };
        Ok(Self {
            bounds: Bounds {
                rows: GRID,
                cols: GRID,
            },
            predators: Vec::new(),
            prey: Vec::new(),
            alive: Vec::new(),
            t: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(0),
            spec,
            cfg,
        })
    }

    pub fn predators(&self) -> &[Pos] {
        &self.predators
    }

    pub fn prey(&self) -> &[Pos] {
        &self.prey
    }

    pub fn prey_alive(&self) -> &[bool] {
        &self.alive
    }

    /// Places every entity explicitly (all prey alive), keeping the step
    /// counter and prey RNG. Used for scripted scenarios.
    pub fn set_positions(&mut self, predators: &[Pos], prey: &[Pos]) -> Result<StepResult> {
        if predators.len() != self.cfg.n_predators || prey.len() != self.cfg.n_prey {
            return Err(Error::Config("entity count does not match config".into()));
        }
        let all: Vec<Pos> = predators.iter().chain(prey).copied().collect();
        for (i, p) in all.iter().enumerate() {
            if !self.bounds.contains(*p) || all[..i].contains(p) {
                return Err(Error::Config(format!("invalid or overlapping position {p:?}")));
            }
        }
        self.predators = predators.to_vec();
        self.prey = prey.to_vec();
        self.alive = vec![true; prey.len()];
        self.done = false;
        Ok(self.observe(vec![0.0; self.cfg.n_predators], false, false))
    }

    fn occupied(&self, p: Pos) -> bool {
        self.predators.contains(&p)
            || self
                .prey
                .iter()
                .zip(&self.alive)
                .any(|(q, &alive)| alive && *q == p)
    }

    fn free_for_move(&self, p: Pos) -> bool {
        self.bounds.contains(p) && !self.occupied(p)
    }

    fn observation(&self, agent: usize) -> Vec<f64> {
        let me = self.predators[agent];
        let mut obs = Vec::with_capacity(self.spec.obs_dim);
        obs.extend(self.bounds.normalized(me));
        encode_window(&mut obs, me, OBS_RADIUS, CHANNELS, |p| {
            if !self.bounds.contains(p) {
                Some(CH_WALL)
            } else if self
                .predators
                .iter()
                .enumerate()
                .any(|(j, q)| j != agent && *q == p)
            {
                Some(CH_PREDATOR)
            } else if self.prey.iter().zip(&self.alive).any(|(q, &a)| a && *q == p) {
                Some(CH_PREY)
            } else {
                None
            }
        });
        obs
    }

    fn state(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.spec.state_dim);
        for p in &self.predators {
            s.extend(self.bounds.normalized(*p));
        }
        for (p, &alive) in self.prey.iter().zip(&self.alive) {
            if alive {
                s.extend(self.bounds.normalized(*p));
                s.push(1.0);
            } else {
                s.extend([0.0, 0.0, 0.0]);
            }
        }
        s
    }

    fn observe(&self, agent_rewards: Vec<f64>, terminal: bool, truncated: bool) -> StepResult {
        let observations = (0..self.cfg.n_predators)
            .map(|i| self.observation(i))
            .collect();
        StepResult::from_parts(observations, self.state(), agent_rewards, terminal, truncated)
    }

    /// Fewest steps in which two predators can stand on distinct cells
    /// adjacent to the (single, static) prey and capture it, found by BFS
    /// from each predator. `None` unless exactly one prey is alive.
    pub fn shortest_capture_steps(&self) -> Option<usize> {
        let alive: Vec<Pos> = self
            .prey
            .iter()
            .zip(&self.alive)
            .filter(|(_, &a)| a)
            .map(|(p, _)| *p)
            .collect();
        let [prey] = alive.as_slice() else {
            return None;
        };
        let targets: Vec<Pos> = prey
            .neighbours()
            .into_iter()
            .filter(|p| self.bounds.contains(*p))
            .collect();
        let dists: Vec<Vec<Option<usize>>> = self
            .predators
            .iter()
            .map(|&start| {
                let d = self.bfs(start, *prey);
                targets.iter().map(|t| d(*t)).collect()
            })
            .collect();
        let mut best: Option<usize> = None;
        for i in 0..dists.len() {
            for j in 0..dists.len() {
                if i == j {
                    continue;
                }
                for a in 0..targets.len() {
                    for b in 0..targets.len() {
                        if a == b {
                            continue;
                        }
                        if let (Some(da), Some(db)) = (dists[i][a], dists[j][b]) {
                            let cost = da.max(db) + 1;
                            best = Some(best.map_or(cost, |c| c.min(cost)));
                        }
                    }
                }
            }
        }
        best
    }

    /// Return of an episode that captures the single prey in
    /// [`shortest_capture_steps`](Self::shortest_capture_steps) steps.
    pub fn optimal_return(&self) -> Option<f64> {
        let steps = self.shortest_capture_steps()?;
        let n = self.cfg.n_predators as f64;
        Some(n * CAPTURE_REWARD + n * STEP_PENALTY * steps as f64)
    }

    fn bfs(&self, start: Pos, blocked: Pos) -> impl Fn(Pos) -> Option<usize> {
        let bounds = self.bounds;
        let idx = move |p: Pos| (p.row * bounds.cols + p.col) as usize;
        let mut dist = vec![None; (bounds.rows * bounds.cols) as usize];
        dist[idx(start)] = Some(0usize);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let d = dist[idx(p)].unwrap();
            for q in p.neighbours() {
                if bounds.contains(q) && q != blocked && dist[idx(q)].is_none() {
                    dist[idx(q)] = Some(d + 1);
                    queue.push_back(q);
                }
            }
        }
        move |p: Pos| {
            if bounds.contains(p) {
                dist[idx(p)]
            } else {
                None
            }
        }
    }
}

impl Environment for PredatorPrey {
    fn spec(&self) -> &DecPomdpSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.t = 0;
        self.done = false;
        let mut cells: Vec<Pos> = (0..GRID)
            .flat_map(|r| (0..GRID).map(move |c| Pos::new(r, c)))
            .collect();
        let mut take = |rng: &mut ChaCha8Rng| cells.swap_remove(rng.gen_range(0..cells.len()));
        self.predators = (0..self.cfg.n_predators)
            .map(|_| take(&mut self.rng))
            .collect();
        self.prey = (0..self.cfg.n_prey).map(|_| take(&mut self.rng)).collect();
        self.alive = vec![true; self.cfg.n_prey];
        self.observe(vec![0.0; self.cfg.n_predators], false, false)
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult> {
        check_joint_action(&self.spec, self.done, joint_action)?;
        self.t += 1;
        let n = self.cfg.n_predators;
        let mut rewards = vec![STEP_PENALTY; n];

        for (i, &action) in joint_action.iter().enumerate() {
            if let Some(mv) = Move::from_action(action) {
                let target = mv.apply(self.predators[i]);
                if mv != Move::Stay && self.free_for_move(target) {
                    self.predators[i] = target;
                }
            }
        }

        for k in 0..self.prey.len() {
            if !self.alive[k] {
                continue;
            }
            let attempts = joint_action
                .iter()
                .zip(&self.predators)
                .filter(|(&a, p)| a == CAPTURE && p.manhattan(self.prey[k]) == 1)
                .count();
            let credit = match attempts {
                0 => 0.0,
                1 => self.cfg.capture_penalty,
                _ => {
                    self.alive[k] = false;
                    CAPTURE_REWARD
                }
            };
            for r in &mut rewards {
                *r += credit;
            }
        }

        for k in 0..self.prey.len() {
            if !self.alive[k] {
                continue;
            }
            let mv = Move::ALL[self.rng.gen_range(0..Move::ALL.len())];
            let target = mv.apply(self.prey[k]);
            if mv != Move::Stay && self.free_for_move(target) {
                self.prey[k] = target;
            }
        }

        let terminal = self.alive.iter().all(|a| !a);
        let truncated = !terminal && self.t >= self.spec.episode_limit;
        self.done = terminal || truncated;
        Ok(self.observe(rewards, terminal, truncated))
    }

    fn config(&self) -> EnvConfig {
        EnvConfig::PredatorPrey(self.cfg.clone())
    }
}
