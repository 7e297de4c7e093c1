//! QTRAN-base heads: a joint action-value network `f_r` and a state-value
//! network `f_v` next to the shared per-agent networks.
//!
//! Both heads read `[state, sum_i h_i]`; `f_r` also reads the summed one-hot
//! encoding of the joint action.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::HIDDEN_WIDTH;
use crate::error::{Error, Result};
use crate::nn::{Graph, Linear, Matrix, ParamStore, Var};

pub const HEAD_WIDTH: usize = 64;

/// `Linear -> ReLU -> Linear -> ReLU -> Linear(1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueHead {
    pub l1: Linear,
    pub l2: Linear,
    pub l3: Linear,
}

impl ValueHead {
    fn new<R: Rng>(store: &mut ParamStore, name: &str, in_dim: usize, rng: &mut R) -> Self {
        Self {
            l1: Linear::new(store, &format!("{name}.0"), in_dim, HEAD_WIDTH, rng),
            l2: Linear::new(store, &format!("{name}.1"), HEAD_WIDTH, HEAD_WIDTH, rng),
            l3: Linear::new(store, &format!("{name}.2"), HEAD_WIDTH, 1, rng),
        }
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.l1.forward(g, store, x)?;
        let h = g.relu(h);
        let h = self.l2.forward(g, store, h)?;
        let h = g.relu(h);
        self.l3.forward(g, store, h)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QtranHeads {
    pub joint: ValueHead,
    pub value: ValueHead,
    pub num_actions: usize,
    pub state_dim: usize,
}

impl QtranHeads {
    pub fn new<R: Rng>(store: &mut ParamStore, num_actions: usize, state_dim: usize, rng: &mut R) -> Self {
        Self {
            joint: ValueHead::new(store, "qtran.joint", state_dim + HIDDEN_WIDTH + num_actions, rng),
            value: ValueHead::new(store, "qtran.value", state_dim + HIDDEN_WIDTH, rng),
            num_actions,
            state_dim,
        }
    }

    /// `f_r(tau, a)`: `state (rows, S)`, `hidden_sum (rows, 64)`,
    /// `action_counts (rows, |A|)` holding summed one-hot actions.
    pub fn joint_q(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        state: Var,
        hidden_sum: Var,
        action_counts: Var,
    ) -> Result<Var> {
        if g.shape(action_counts).1 != self.num_actions {
            return Err(Error::Shape("qtran: action encoding width".into()));
        }
        let x = g.concat_cols(&[state, hidden_sum, action_counts])?;
        self.joint.forward(g, store, x)
    }

    /// `f_v(tau)`.
    pub fn state_value(&self, g: &mut Graph, store: &ParamStore, state: Var, hidden_sum: Var) -> Result<Var> {
        let x = g.concat_cols(&[state, hidden_sum])?;
        self.value.forward(g, store, x)
    }
}

/// Summed one-hot encoding of each row's joint action.
pub fn action_counts(joint_actions: &[Vec<usize>], num_actions: usize) -> Matrix {
    let mut m = Matrix::zeros((joint_actions.len(), num_actions));
    for (r, joint) in joint_actions.iter().enumerate() {
        for &a in joint {
            m[[r, a]] += 1.0;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QtranWeights {
    pub lambda_opt: f64,
    pub lambda_nopt: f64,
}

impl Default for QtranWeights {
    fn default() -> Self {
        Self {
            lambda_opt: 1.0,
            lambda_nopt: 1.0,
        }
    }
}

/// Graph handles of the three QTRAN-base loss terms and their weighted sum.
#[derive(Debug, Clone, Copy)]
pub struct QtranLosses {
    pub td: Var,
    pub opt: Var,
    pub nopt: Var,
    pub total: Var,
}

/// Inputs per row (all `(rows, 1)`):
/// - `joint_taken`: `f_r` at the taken joint action,
/// - `joint_greedy`: `f_r` at the individually greedy joint action,
/// - `sum_q_taken` / `sum_q_greedy`: `sum_i Q_i` at those actions,
/// - `value`: `f_v`.
///
/// `f_r` is detached inside the two consistency terms, so it is fit by the
/// TD term alone.
#[allow(clippy::too_many_arguments)]
pub fn qtran_losses(
    g: &mut Graph,
    joint_taken: Var,
    joint_greedy: Var,
    sum_q_taken: Var,
    sum_q_greedy: Var,
    value: Var,
    targets: Matrix,
    mask: &[f64],
    weights: QtranWeights,
) -> Result<QtranLosses> {
    let td = g.masked_mse(joint_taken, targets, mask)?;
    let zeros = Matrix::zeros(g.shape(joint_taken));

    let jg = g.detach(joint_greedy);
    let opt_gap = g.sub(sum_q_greedy, jg)?;
    let opt_gap = g.add(opt_gap, value)?;
    let opt = g.masked_mse(opt_gap, zeros.clone(), mask)?;

    let jt = g.detach(joint_taken);
    let nopt_gap = g.sub(sum_q_taken, jt)?;
    let nopt_gap = g.add(nopt_gap, value)?;
    let nopt_gap = g.min_zero(nopt_gap);
    let nopt = g.masked_mse(nopt_gap, zeros, mask)?;

    let opt_w = g.affine(opt, weights.lambda_opt, 0.0);
    let nopt_w = g.affine(nopt, weights.lambda_nopt, 0.0);
    let total = g.add(td, opt_w)?;
    let total = g.add(total, nopt_w)?;
    Ok(QtranLosses { td, opt, nopt, total })
}
