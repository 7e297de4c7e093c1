//! Per-agent recurrent Q-network shared by all agents, plus decentralized
//! action selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, GruCell, Linear, Matrix, ParamStore, Var};

pub const HIDDEN_WIDTH: usize = 64;

/// `Linear -> ReLU -> GRU -> Linear`, one parameter set for every agent.
/// Inputs are `[observation, last action one-hot, agent id one-hot]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentNetwork {
    pub fc_in: Linear,
    pub gru: GruCell,
    pub fc_out: Linear,
    pub obs_dim: usize,
    pub num_actions: usize,
    pub num_agents: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState(pub Vec<f64>);

impl HiddenState {
    pub fn zeros() -> Self {
        Self(vec![0.0; HIDDEN_WIDTH])
    }
}

impl AgentNetwork {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        obs_dim: usize,
        num_actions: usize,
        num_agents: usize,
        rng: &mut R,
    ) -> Self {
        let in_dim = obs_dim + num_actions + num_agents;
        Self {
            fc_in: Linear::new(store, "agent.fc_in", in_dim, HIDDEN_WIDTH, rng),
            gru: GruCell::new(store, "agent.gru", HIDDEN_WIDTH, HIDDEN_WIDTH, rng),
            fc_out: Linear::new(store, "agent.fc_out", HIDDEN_WIDTH, num_actions, rng),
            obs_dim,
            num_actions,
            num_agents,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.obs_dim + self.num_actions + self.num_agents
    }

    /// Writes one input row; `last_action` is `None` at the first step.
    pub fn encode_input(
        &self,
        row: &mut [f64],
        obs: &[f64],
        last_action: Option<usize>,
        agent_id: usize,
    ) -> Result<()> {
        if obs.len() != self.obs_dim || row.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "agent input: observation {} (expected {}), row {} (expected {})",
                obs.len(),
                self.obs_dim,
                row.len(),
                self.input_dim()
            )));
        }
        if agent_id >= self.num_agents || last_action.is_some_and(|a| a >= self.num_actions) {
            return Err(Error::Shape(format!(
                "agent id {agent_id} / last action {last_action:?} out of range"
            )));
        }
        row.fill(0.0);
        row[..self.obs_dim].copy_from_slice(obs);
        if let Some(a) = last_action {
            row[self.obs_dim + a] = 1.0;
        }
        row[self.obs_dim + self.num_actions + agent_id] = 1.0;
        Ok(())
    }

    /// One recurrent step for a batch of rows. Returns `(q, h')` with shapes
    /// `(rows, num_actions)` and `(rows, 64)`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, inputs: Var, h: Var) -> Result<(Var, Var)> {
        let x = self.fc_in.forward(g, store, inputs)?;
        let x = g.relu(x);
        let h_next = self.gru.step(g, store, x, h)?;
        let q = self.fc_out.forward(g, store, h_next)?;
        Ok((q, h_next))
    }

    /// Q-values of a single agent, without recording anything for training.
    pub fn q_values(
        &self,
        store: &ParamStore,
        obs: &[f64],
        last_action: Option<usize>,
        agent_id: usize,
        h: &HiddenState,
    ) -> Result<(Vec<f64>, HiddenState)> {
        let (q, h) = self.step_agents(
            store,
            &[obs.to_vec()],
            &[last_action],
            &[agent_id],
            std::slice::from_ref(h),
        )?;
        Ok((q.into_iter().next().unwrap(), h.into_iter().next().unwrap()))
    }

    /// Evaluates several agents at once (one row each).
    pub fn step_agents(
        &self,
        store: &ParamStore,
        observations: &[Vec<f64>],
        last_actions: &[Option<usize>],
        agent_ids: &[usize],
        hidden: &[HiddenState],
    ) -> Result<(Vec<Vec<f64>>, Vec<HiddenState>)> {
        let rows = observations.len();
        if last_actions.len() != rows || agent_ids.len() != rows || hidden.len() != rows {
            return Err(Error::Shape("step_agents: ragged inputs".into()));
        }
        let mut inputs = Matrix::zeros((rows, self.input_dim()));
        let mut h = Matrix::zeros((rows, HIDDEN_WIDTH));
        for r in 0..rows {
            let row = inputs.row_mut(r).into_slice().expect("standard layout");
            self.encode_input(row, &observations[r], last_actions[r], agent_ids[r])?;
            if hidden[r].0.len() != HIDDEN_WIDTH {
                return Err(Error::Shape(format!(
                    "hidden state width {} != {HIDDEN_WIDTH}",
                    hidden[r].0.len()
                )));
            }
            h.row_mut(r).assign(&ndarray::ArrayView1::from(&hidden[r].0));
        }
        let mut g = Graph::new();
        let x = g.constant(inputs);
        let hv = g.constant(h);
        let (q, h_next) = self.forward(&mut g, store, x, hv)?;
        let qs = g.value(q).rows().into_iter().map(|r| r.to_vec()).collect();
        let hs = g
            .value(h_next)
            .rows()
            .into_iter()
            .map(|r| HiddenState(r.to_vec()))
            .collect();
        Ok((qs, hs))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in q.iter().enumerate() {
        match best {
            Some(b) if q[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Epsilon-greedy choice over one agent's own Q-vector.
pub fn select_action<R: Rng>(q: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if q.is_empty() {
        return Err(Error::Empty("select_action: no actions"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let explore = rng.gen::<f64>() < epsilon;
    if explore {
        Ok(rng.gen_range(0..q.len()))
    } else {
        Ok(argmax(q).expect("non-empty"))
    }
}

/// Linear decay from `start` to `min` over `anneal_steps` environment steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub min: f64,
    pub anneal_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self {
            start: epsilon,
            min: epsilon,
            anneal_steps: 0,
        }
    }

    pub fn epsilon_at(&self, env_step: u64) -> f64 {
        if self.anneal_steps == 0 || env_step >= self.anneal_steps {
            return self.min;
        }
        let frac = env_step as f64 / self.anneal_steps as f64;
        self.start + (self.min - self.start) * frac
    }
}
