//! Monotonic mixing network whose weights are generated from the global state
//! by hypernetworks and passed through `abs` before use.
//!
//! ```text
//! hidden = elu(q |W1(s)| + b1(s))          W1: N x 32
//! Q_tot  = hidden |W2(s)| + V(s)           W2: 32 x 1
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, Linear, Mlp2, ParamStore, Var};

pub const MIXING_WIDTH: usize = 32;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QmixMixer {
    pub hyper_w1: Mlp2,
    pub hyper_w2: Mlp2,
    pub hyper_b1: Linear,
    pub hyper_v: Mlp2,
    pub num_agents: usize,
    pub state_dim: usize,
}

impl QmixMixer {
    pub fn new<R: Rng>(store: &mut ParamStore, num_agents: usize, state_dim: usize, rng: &mut R) -> Self {
        let w = MIXING_WIDTH;
        Self {
            hyper_w1: Mlp2::new(store, "qmix.hyper_w1", state_dim, w, num_agents * w, rng),
            hyper_w2: Mlp2::new(store, "qmix.hyper_w2", state_dim, w, w, rng),
            hyper_b1: Linear::new(store, "qmix.hyper_b1", state_dim, w, rng),
            hyper_v: Mlp2::new(store, "qmix.hyper_v", state_dim, w, 1, rng),
            num_agents,
            state_dim,
        }
    }

    /// `q`: `(rows, N)` chosen Q-values, `state`: `(rows, S)`. Returns `(rows, 1)`.
    pub fn mix(&self, g: &mut Graph, store: &ParamStore, q: Var, state: Var) -> Result<Var> {
        let (sq, ss) = (g.shape(q), g.shape(state));
        if sq.1 != self.num_agents || ss.1 != self.state_dim || sq.0 != ss.0 {
            return Err(Error::Shape(format!(
                "qmix: q {sq:?}, state {ss:?}, expected (*, {}) and (*, {})",
                self.num_agents, self.state_dim
            )));
        }
        let w1 = self.hyper_w1.forward(g, store, state)?;
        let w1 = g.abs(w1);
        let b1 = self.hyper_b1.forward(g, store, state)?;
        let hidden = g.row_vec_mat(q, w1, MIXING_WIDTH)?;
        let hidden = g.add(hidden, b1)?;
        let hidden = g.elu(hidden);
        let w2 = self.hyper_w2.forward(g, store, state)?;
        let w2 = g.abs(w2);
        let out = g.row_vec_mat(hidden, w2, 1)?;
        let v = self.hyper_v.forward(g, store, state)?;
        g.add(out, v)
    }

    /// Single-row evaluation outside any training graph.
    pub fn mix_values(&self, store: &ParamStore, q: &[f64], state: &[f64]) -> Result<f64> {
        let mut g = Graph::new();
        let qv = g.row(q);
        let sv = g.row(state);
        let out = self.mix(&mut g, store, qv, sv)?;
        Ok(g.scalar(out))
    }

    /// Smallest forward-difference estimate of `d Q_tot / d q_i` over
    /// `samples` random `(q, state)` draws.
    pub fn min_partial<R: Rng>(&self, store: &ParamStore, samples: usize, rng: &mut R) -> Result<f64> {
        const STEP: f64 = 1e-4;
        let mut worst = f64::INFINITY;
        for _ in 0..samples {
            let q: Vec<f64> = (0..self.num_agents).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let s: Vec<f64> = (0..self.state_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let base = self.mix_values(store, &q, &s)?;
            for i in 0..self.num_agents {
                let mut up = q.clone();
                up[i] += STEP;
                worst = worst.min((self.mix_values(store, &up, &s)? - base) / STEP);
            }
        }
        Ok(worst)
    }
}
