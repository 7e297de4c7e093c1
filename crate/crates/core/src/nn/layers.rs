//! Linear, GRU and small MLP blocks built on [`Graph`].
//!
//! Activations are row-major batches: a `(rows, features)` matrix holds one
//! sample per row, so weights are stored as `(in, out)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), in_dim, out_dim, in_dim, rng);
        let bias = store.add_uniform(format!("{name}.bias"), 1, out_dim, in_dim, rng);
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// `x W + b` for every row of `x`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let cols = g.shape(x).1;
        if cols != self.in_dim {
            return Err(Error::Shape(format!(
                "linear expects {} inputs, got {cols}",
                self.in_dim
            )));
        }
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }
}

/// Gated recurrent unit with gates ordered `[reset, update, candidate]`.
///
/// ```text
/// r  = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
/// z  = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
/// n  = tanh(x W_in + b_in + r * (h W_hn + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w_ih = store.add_uniform(format!("{name}.w_ih"), in_dim, 3 * hidden, hidden, rng);
        let w_hh = store.add_uniform(format!("{name}.w_hh"), hidden, 3 * hidden, hidden, rng);
        let b_ih = store.add_uniform(format!("{name}.b_ih"), 1, 3 * hidden, hidden, rng);
        let b_hh = store.add_uniform(format!("{name}.b_hh"), 1, 3 * hidden, hidden, rng);
        Self {
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            in_dim,
            hidden,
        }
    }

    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        let (sx, sh) = (g.shape(x), g.shape(h));
        if sh.1 != self.hidden || sx.1 != self.in_dim || sx.0 != sh.0 {
            return Err(Error::Shape(format!(
                "gru step: input {sx:?}, hidden {sh:?}, expected (*, {}) and (*, {})",
                self.in_dim, self.hidden
            )));
        }
        let hd = self.hidden;
        let w_ih = g.param(store, self.w_ih);
        let w_hh = g.param(store, self.w_hh);
        let b_ih = g.param(store, self.b_ih);
        let b_hh = g.param(store, self.b_hh);
        let gi = g.matmul(x, w_ih)?;
        let gi = g.add_row(gi, b_ih)?;
        let gh = g.matmul(h, w_hh)?;
        let gh = g.add_row(gh, b_hh)?;

        let gi_rz = g.slice_cols(gi, 0, 2 * hd)?;
        let gh_rz = g.slice_cols(gh, 0, 2 * hd)?;
        let rz = g.add(gi_rz, gh_rz)?;
        let rz = g.sigmoid(rz);
        let r = g.slice_cols(rz, 0, hd)?;
        let z = g.slice_cols(rz, hd, 2 * hd)?;

        let gi_n = g.slice_cols(gi, 2 * hd, 3 * hd)?;
        let gh_n = g.slice_cols(gh, 2 * hd, 3 * hd)?;
        let rn = g.mul(r, gh_n)?;
        let n = g.add(gi_n, rn)?;
        let n = g.tanh(n);

        let one_minus_z = g.affine(z, -1.0, 1.0);
        let keep_new = g.mul(one_minus_z, n)?;
        let keep_old = g.mul(z, h)?;
        g.add(keep_new, keep_old)
    }
}

/// `Linear -> ReLU -> Linear`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp2 {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp2 {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            hidden: Linear::new(store, &format!("{name}.0"), in_dim, hidden, rng),
            out: Linear::new(store, &format!("{name}.1"), hidden, out_dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.hidden.forward(g, store, x)?;
        let h = g.relu(h);
        self.out.forward(g, store, h)
    }
}
