//! Evaluation and target networks, TD targets and one gradient step per call.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::TrainBatch;
use crate::agent::{argmax, AgentNetwork, HiddenState, HIDDEN_WIDTH};
use crate::envs::DecPomdpSpec;
use crate::error::{Error, Result};
use crate::mixers::{
    action_counts, qtran_losses, rqn_features_graph, rqn_mix, theorem::joint_action, Mixer, MixerKind,
    QtranWeights,
};
use crate::nn::{Graph, Matrix, Optimizer, OptimizerConfig, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub optimizer: OptimizerConfig,
    pub qtran: QtranWeights,
    /// Treat the mean/max trajectory features as constants, so the
    /// estimation network's gradient does not reach the agent network
    /// through them.
    pub rqn_detach_features: bool,
}

impl LearnerConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        Self {
            gamma,
            optimizer: OptimizerConfig::default(),
            qtran: QtranWeights::default(),
            rqn_detach_features: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainStats {
    /// Total loss that was minimized.
    pub loss: f64,
    pub grad_norm: f64,
    /// QTRAN-base consistency terms, absent for other mixers.
    pub opt_loss: Option<f64>,
    pub nopt_loss: Option<f64>,
}

/// Graph handles of an assembled loss.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub opt: Option<Var>,
    pub nopt: Option<Var>,
}

/// Agent network plus mixer with their evaluation parameters `params` and
/// frozen copies `target_params` (same layout, so a sync is a value copy).
#[derive(Debug, Clone)]
pub struct Learner {
    pub spec: DecPomdpSpec,
    pub agent: AgentNetwork,
    pub mixer: Mixer,
    pub params: ParamStore,
    pub target_params: ParamStore,
    pub config: LearnerConfig,
    optimizer: Optimizer,
    syncs: u64,
    train_steps: u64,
    target_estimation_calls: u64,
}

struct Unrolled {
    /// Per time step: `(B*N, |A|)` Q-values and `(B*N, 64)` hidden states.
    q: Vec<Var>,
    h: Vec<Var>,
}

impl Learner {
    pub fn new(kind: MixerKind, spec: DecPomdpSpec, config: LearnerConfig, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let agent = AgentNetwork::new(&mut params, spec.obs_dim, spec.num_actions, spec.num_agents, &mut rng);
        let mixer = Mixer::new(kind, &mut params, &spec, &mut rng);
        let optimizer = Optimizer::new(config.optimizer, &params);
        Ok(Self {
            target_params: params.clone(),
            spec,
            agent,
            mixer,
            params,
            config,
            optimizer,
            syncs: 0,
            train_steps: 0,
            target_estimation_calls: 0,
        })
    }

    pub fn kind(&self) -> MixerKind {
        self.mixer.kind()
    }

    pub fn syncs(&self) -> u64 {
        self.syncs
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Estimation-network forward passes made while building TD targets.
    pub fn target_estimation_calls(&self) -> u64 {
        self.target_estimation_calls
    }

    /// Estimation-network forward passes so far (0 for non-RQN mixers).
    pub fn estimation_calls(&self) -> u64 {
        match &self.mixer {
            Mixer::Rqn(net) => net.forward_calls(),
            _ => 0,
        }
    }

    /// Copies the evaluation parameters into the target networks.
    pub fn sync_targets(&mut self) -> Result<()> {
        self.target_params.copy_values_from(&self.params)?;
        self.syncs += 1;
        Ok(())
    }

    /// Agent-network inputs for steps `0..=max_len`, one `(B*N, in)` matrix
    /// each; row `b*N + i` is agent `i` of episode `b`.
    fn step_inputs(&self, batch: &TrainBatch) -> Result<Vec<Matrix>> {
        let (n, bsz) = (self.spec.num_agents, batch.batch_size());
        let zeros = vec![0.0; self.spec.obs_dim];
        let mut out = Vec::with_capacity(batch.max_len + 1);
        for t in 0..=batch.max_len {
            let mut m = Matrix::zeros((bsz * n, self.agent.input_dim()));
            for (b, ep) in batch.episodes.iter().enumerate() {
                for i in 0..n {
                    let row = m.row_mut(b * n + i).into_slice().expect("standard layout");
                    if t <= ep.len() {
                        let last = t.checked_sub(1).map(|p| ep.actions[p][i]);
                        self.agent.encode_input(row, &ep.observations[t][i], last, i)?;
                    } else {
                        self.agent.encode_input(row, &zeros, None, i)?;
                    }
                }
            }
            out.push(m);
        }
        Ok(out)
    }

    fn unroll(&self, g: &mut Graph, store: &ParamStore, inputs: &[Matrix]) -> Result<Unrolled> {
        let rows = inputs.first().map_or(0, Matrix::nrows);
        let mut h = g.constant(Matrix::zeros((rows, HIDDEN_WIDTH)));
        let mut out = Unrolled {
            q: Vec::with_capacity(inputs.len()),
            h: Vec::with_capacity(inputs.len()),
        };
        for x in inputs {
            let xv = g.constant(x.clone());
            let (q, h_next) = self.agent.forward(g, store, xv, h)?;
            out.q.push(q);
            out.h.push(h_next);
            h = h_next;
        }
        Ok(out)
    }

    /// Global states for rows `t*B + b`, `t in offset..offset + max_len`.
    fn states(&self, batch: &TrainBatch, offset: usize) -> Matrix {
        let bsz = batch.batch_size();
        let mut m = Matrix::zeros((batch.rows(), self.spec.state_dim));
        for t in 0..batch.max_len {
            for (b, ep) in batch.episodes.iter().enumerate() {
                if let Some(s) = ep.states.get(t + offset) {
                    if t + offset <= ep.len() {
                        m.row_mut(t * bsz + b).assign(&ndarray::ArrayView1::from(s));
                    }
                }
            }
        }
        m
    }

    /// Taken actions at step `t` in row order `b*N + i` (0 on padding).
    fn actions_at(&self, batch: &TrainBatch, t: usize) -> Vec<usize> {
        let n = self.spec.num_agents;
        let mut out = Vec::with_capacity(batch.batch_size() * n);
        for ep in &batch.episodes {
            for i in 0..n {
                out.push(if t < ep.len() { ep.actions[t][i] } else { 0 });
            }
        }
        out
    }

    fn greedy_rows(q: &Matrix) -> Vec<usize> {
        q.rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().expect("standard layout")).unwrap_or(0))
            .collect()
    }

    /// `(B*N, 1)` column to `(B, N)`.
    fn per_episode(&self, g: &mut Graph, col: Var, bsz: usize) -> Result<Var> {
        g.reshape(col, bsz, self.spec.num_agents)
    }

    /// Sum of the agents' hidden states per episode: `(B*N, 64) -> (B, 64)`.
    fn hidden_sum(&self, g: &mut Graph, h: Var, bsz: usize) -> Result<Var> {
        let n = self.spec.num_agents;
        let groups: Vec<Option<usize>> = (0..bsz * n).map(|r| Some(r / n)).collect();
        let mean = g.group_mean(h, &groups, bsz)?;
        Ok(g.affine(mean, n as f64, 0.0))
    }

    fn joint_counts(&self, actions: &[usize], bsz: usize) -> Vec<Vec<usize>> {
        let n = self.spec.num_agents;
        (0..bsz).map(|b| actions[b * n..(b + 1) * n].to_vec()).collect()
    }

    /// `y = R + gamma * (1 - terminal) * next`, where `next` is the target
    /// networks' joint value of the greedy next action. For VDN and RQN it is
    /// the plain sum of per-agent maxima; the estimation network is not used.
    /// Returns a `(max_len * B, 1)` column (zeros on padding).
    pub fn td_targets(&self, batch: &TrainBatch) -> Result<Matrix> {
        let inputs = self.step_inputs(batch)?;
        self.td_targets_from(batch, &inputs)
    }

    fn td_targets_from(&self, batch: &TrainBatch, inputs: &[Matrix]) -> Result<Matrix> {
        let (bsz, len, n) = (batch.batch_size(), batch.max_len, self.spec.num_agents);
        let store = &self.target_params;
        let mut g = Graph::new();
        let un = self.unroll(&mut g, store, inputs)?;

        // next[t*B + b]: joint target value at step t + 1
        let next: Vec<f64> = match &self.mixer {
            Mixer::Vdn | Mixer::Rqn(_) => {
                let mut v = Vec::with_capacity(len * bsz);
                for t in 0..len {
                    let q = g.value(un.q[t + 1]);
                    for b in 0..bsz {
                        let s: f64 = (0..n)
                            .map(|i| q.row(b * n + i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
                            .sum();
                        v.push(s);
                    }
                }
                v
            }
            Mixer::Qmix(mixer) => {
                let mut maxima = Vec::with_capacity(len);
                for t in 0..len {
                    let q = g.value(un.q[t + 1]);
                    let m = Matrix::from_shape_fn((bsz, n), |(b, i)| {
                        q.row(b * n + i).iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    });
                    maxima.push(g.constant(m));
                }
                let qmax = g.concat_rows(&maxima)?;
                let s = g.constant(self.states(batch, 1));
                let out = mixer.mix(&mut g, store, qmax, s)?;
                g.value(out).column(0).to_vec()
            }
            Mixer::Qtran(heads) => {
                let mut hsums = Vec::with_capacity(len);
                let mut joints = Vec::with_capacity(len * bsz);
                for t in 0..len {
                    let greedy = Self::greedy_rows(g.value(un.q[t + 1]));
                    joints.extend(self.joint_counts(&greedy, bsz));
                    hsums.push(self.hidden_sum(&mut g, un.h[t + 1], bsz)?);
                }
                let hsum = g.concat_rows(&hsums)?;
                let counts = g.constant(action_counts(&joints, self.spec.num_actions));
                let s = g.constant(self.states(batch, 1));
                let out = heads.joint_q(&mut g, store, s, hsum, counts)?;
                g.value(out).column(0).to_vec()
            }
        };

        let gamma = self.config.gamma;
        let mut y = Matrix::zeros((len * bsz, 1));
        for t in 0..len {
            for (b, ep) in batch.episodes.iter().enumerate() {
                if t < ep.len() {
                    let boot = if ep.is_terminal_step(t) { 0.0 } else { gamma * next[t * bsz + b] };
                    y[[t * bsz + b, 0]] = ep.rewards[t] + boot;
                }
            }
        }
        Ok(y)
    }

    /// Records the training loss against fixed `targets` on `g`, reading
    /// parameters from `store`.
    pub fn loss_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &TrainBatch,
        targets: Matrix,
    ) -> Result<LossParts> {
        let inputs = self.step_inputs(batch)?;
        self.loss_graph_from(g, store, batch, &inputs, targets)
    }

    fn loss_graph_from(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &TrainBatch,
        inputs: &[Matrix],
        targets: Matrix,
    ) -> Result<LossParts> {
        let (bsz, len) = (batch.batch_size(), batch.max_len);
        let mask = batch.mask();
        let un = self.unroll(g, store, &inputs[..len])?;
        let mut chosen_steps = Vec::with_capacity(len);
        for t in 0..len {
            let c = g.gather_cols(un.q[t], &self.actions_at(batch, t))?;
            chosen_steps.push(self.per_episode(g, c, bsz)?);
        }
        let chosen = g.concat_rows(&chosen_steps)?;

        let plain = |g: &mut Graph, pred: Var| -> Result<LossParts> {
            Ok(LossParts {
                total: g.masked_mse(pred, targets.clone(), &mask)?,
                opt: None,
                nopt: None,
            })
        };
        match &self.mixer {
            Mixer::Vdn => {
                let pred = g.sum_cols(chosen);
                plain(g, pred)
            }
            Mixer::Rqn(net) => {
                let rows = batch.episode_of_row();
                let src = if self.config.rqn_detach_features { g.detach(chosen) } else { chosen };
                let feats = rqn_features_graph(g, src, &rows, bsz)?;
                let phi = net.factors(g, store, feats)?;
                let broadcast: Vec<usize> = (0..batch.rows()).map(|r| r % bsz).collect();
                let pred = rqn_mix(g, chosen, phi, &broadcast)?;
                plain(g, pred)
            }
            Mixer::Qmix(mixer) => {
                let s = g.constant(self.states(batch, 0));
                let pred = mixer.mix(g, store, chosen, s)?;
                plain(g, pred)
            }
            Mixer::Qtran(heads) => {
                let mut hsums = Vec::with_capacity(len);
                let mut greedy_steps = Vec::with_capacity(len);
                let mut taken = Vec::with_capacity(len * bsz);
                let mut greedy = Vec::with_capacity(len * bsz);
                for t in 0..len {
                    hsums.push(self.hidden_sum(g, un.h[t], bsz)?);
                    let gr = Self::greedy_rows(g.value(un.q[t]));
                    let c = g.gather_cols(un.q[t], &gr)?;
                    greedy_steps.push(self.per_episode(g, c, bsz)?);
                    taken.extend(self.joint_counts(&self.actions_at(batch, t), bsz));
                    greedy.extend(self.joint_counts(&gr, bsz));
                }
                let hsum = g.concat_rows(&hsums)?;
                let greedy_q = g.concat_rows(&greedy_steps)?;
                let s = g.constant(self.states(batch, 0));
                let a = self.spec.num_actions;
                let taken_counts = g.constant(action_counts(&taken, a));
                let greedy_counts = g.constant(action_counts(&greedy, a));
                let joint_taken = heads.joint_q(g, store, s, hsum, taken_counts)?;
                let joint_greedy = heads.joint_q(g, store, s, hsum, greedy_counts)?;
                let value = heads.state_value(g, store, s, hsum)?;
                let sum_taken = g.sum_cols(chosen);
                let sum_greedy = g.sum_cols(greedy_q);
                let l = qtran_losses(
                    g,
                    joint_taken,
                    joint_greedy,
                    sum_taken,
                    sum_greedy,
                    value,
                    targets,
                    &mask,
                    self.config.qtran,
                )?;
                Ok(LossParts {
                    total: l.total,
                    opt: Some(l.opt),
                    nopt: Some(l.nopt),
                })
            }
        }
    }

    /// Loss on `batch` under the current parameters, without updating.
    pub fn loss(&self, batch: &TrainBatch) -> Result<f64> {
        let inputs = self.step_inputs(batch)?;
        let targets = self.td_targets_from(batch, &inputs)?;
        let mut g = Graph::new();
        let parts = self.loss_graph_from(&mut g, &self.params, batch, &inputs, targets)?;
        Ok(g.scalar(parts.total))
    }

    /// One gradient step on `batch`.
    pub fn train_step(&mut self, batch: &TrainBatch) -> Result<TrainStats> {
        let inputs = self.step_inputs(batch)?;
        let before = self.estimation_calls();
        let targets = self.td_targets_from(batch, &inputs)?;
        self.target_estimation_calls += self.estimation_calls() - before;

        let mut g = Graph::new();
        let parts = self.loss_graph_from(&mut g, &self.params, batch, &inputs, targets)?;
        let loss = g.scalar(parts.total);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "{} loss at train step {}",
                self.kind(),
                self.train_steps
            )));
        }
        g.backward(parts.total, &mut self.params)?;
        let grad_norm = self.optimizer.step(&mut self.params)?;
        self.train_steps += 1;
        Ok(TrainStats {
            loss,
            grad_norm,
            opt_loss: parts.opt.map(|v| g.scalar(v)),
            nopt_loss: parts.nopt.map(|v| g.scalar(v)),
        })
    }

    /// Joint values of every joint action at the first step of an episode
    /// (zero hidden state, no previous action), as seen by the mixer.
    /// Indexed with agent 0 as the most significant digit.
    pub fn first_step_joint_values(&self, observations: &[Vec<f64>], state: &[f64]) -> Result<Vec<f64>> {
        let (n, a) = (self.spec.num_agents, self.spec.num_actions);
        if observations.len() != n {
            return Err(Error::JointActionArity {
                expected: n,
                got: observations.len(),
            });
        }
        let ids: Vec<usize> = (0..n).collect();
        let (q, h) = self.agent.step_agents(
            &self.params,
            observations,
            &vec![None; n],
            &ids,
            &vec![HiddenState::zeros(); n],
        )?;
        let total = a.checked_pow(n as u32).ok_or(Error::Unsupported("joint action space too large".into()))?;
        let joints: Vec<Vec<usize>> = (0..total).map(|idx| joint_action(idx, n, a)).collect();
        let chosen: Vec<Vec<f64>> = joints
            .iter()
            .map(|j| j.iter().enumerate().map(|(i, &ai)| q[i][ai]).collect())
            .collect();

        let mut g = Graph::new();
        let cq = g.constant(crate::mixers::matrix_from_rows(&chosen)?);
        let out = match &self.mixer {
            Mixer::Vdn => g.sum_cols(cq),
            Mixer::Rqn(net) => {
                let groups: Vec<Option<usize>> = (0..total).map(Some).collect();
                let feats = rqn_features_graph(&mut g, cq, &groups, total)?;
                let phi = net.factors(&mut g, &self.params, feats)?;
                let rows: Vec<usize> = (0..total).collect();
                rqn_mix(&mut g, cq, phi, &rows)?
            }
            Mixer::Qmix(mixer) => {
                let s = g.constant(Matrix::from_shape_fn((total, state.len()), |(_, c)| state[c]));
                mixer.mix(&mut g, &self.params, cq, s)?
            }
            Mixer::Qtran(heads) => {
                let hsum: Vec<f64> = (0..HIDDEN_WIDTH).map(|k| h.iter().map(|hi| hi.0[k]).sum()).collect();
                let hs = g.constant(Matrix::from_shape_fn((total, HIDDEN_WIDTH), |(_, c)| hsum[c]));
                let s = g.constant(Matrix::from_shape_fn((total, state.len()), |(_, c)| state[c]));
                let counts = g.constant(action_counts(&joints, a));
                heads.joint_q(&mut g, &self.params, s, hs, counts)?
            }
        };
        Ok(g.value(out).column(0).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Environment, MatrixGame};
    use crate::training::EpisodeRecord;

    fn matrix_episode(a0: usize, a1: usize) -> EpisodeRecord {
        EpisodeRecord {
            observations: vec![vec![vec![1.0]; 2]; 2],
            states: vec![vec![1.0]; 2],
            actions: vec![vec![a0, a1]],
            rewards: vec![crate::envs::matrix_payoff(a0, a1)],
            terminated: true,
        }
    }

    fn learner(kind: MixerKind, gamma: f64) -> Learner {
        Learner::new(kind, MatrixGame::new().spec().clone(), LearnerConfig::with_gamma(gamma), 0).unwrap()
    }

    #[test]
    fn terminal_step_target_is_reward() {
        for kind in MixerKind::ALL {
            let l = learner(kind, 0.99);
            let batch = TrainBatch::new(vec![matrix_episode(0, 0)], None).unwrap();
            assert_eq!(l.td_targets(&batch).unwrap()[[0, 0]], 8.0);
        }
    }

    #[test]
    fn matrix_loss_from_zero_prediction() {
        let mut l = learner(MixerKind::Vdn, 1.0);
        l.params.value_mut(l.agent.fc_out.weight).fill(0.0);
        l.params.value_mut(l.agent.fc_out.bias).fill(0.0);
        let batch = TrainBatch::new(vec![matrix_episode(0, 0)], None).unwrap();
        assert_eq!(l.loss(&batch).unwrap(), 64.0);
    }

    #[test]
    fn sync_makes_targets_identical() {
        let mut l = learner(MixerKind::Qmix, 1.0);
        let batch = TrainBatch::new(vec![matrix_episode(1, 2), matrix_episode(0, 0)], None).unwrap();
        for _ in 0..3 {
            l.train_step(&batch).unwrap();
        }
        assert_ne!(l.params.flat_values(), l.target_params.flat_values());
        l.sync_targets().unwrap();
        assert_eq!(l.params.flat_values(), l.target_params.flat_values());
        assert_eq!(l.syncs(), 1);
    }

    #[test]
    fn untrained_zero_output_table_is_zero_for_additive_mixers() {
        for kind in [MixerKind::Vdn, MixerKind::Rqn] {
            let mut l = learner(kind, 1.0);
            l.params.value_mut(l.agent.fc_out.weight).fill(0.0);
            l.params.value_mut(l.agent.fc_out.bias).fill(0.0);
            if let Mixer::Rqn(net) = &l.mixer {
                let (w, b) = (net.mlp.out.weight, net.mlp.out.bias);
                l.params.value_mut(w).fill(0.0);
                l.params.value_mut(b).fill(0.0);
            }
            let table = l.first_step_joint_values(&[vec![1.0], vec![1.0]], &[1.0]).unwrap();
            assert_eq!(table, vec![0.0; 9]);
        }
    }
}
