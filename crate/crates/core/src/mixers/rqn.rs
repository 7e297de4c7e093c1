//! Residual Q-network: a per-episode additive factor for every agent.
//!
//! For each episode the mean and the max of every agent's chosen-action
//! Q-trajectory feed a small unconstrained MLP (`2N -> 64 -> N`). Its output
//! `phi_i` is added to every step of that agent's trajectory before the VDN
//! sum: `Q+_tot = sum_i (Q_i + phi_i)`.

use std::cell::Cell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, Matrix, Mlp2, ParamStore, Var};

pub const ESTIMATION_WIDTH: usize = 64;

/// Per-agent trajectory statistics of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationFeatures {
    pub mean: Vec<f64>,
    pub max: Vec<f64>,
}

impl EstimationFeatures {
    /// `[mean_1..mean_N, max_1..max_N]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.mean.iter().chain(&self.max).copied().collect()
    }
}

/// Mean and max of each agent's chosen-action Q-values over the valid steps
/// of one episode. `trajectory[t][i]` is agent `i` at step `t`.
pub fn rqn_features(trajectory: &[Vec<f64>]) -> Result<EstimationFeatures> {
    let first = trajectory.first().ok_or(Error::Empty("rqn_features: empty episode"))?;
    let n = first.len();
    if n == 0 || trajectory.iter().any(|step| step.len() != n) {
        return Err(Error::Shape("rqn_features: ragged trajectory".into()));
    }
    let steps = trajectory.len() as f64;
    let mut mean = vec![0.0; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    for step in trajectory {
        for i in 0..n {
            mean[i] += step[i];
            max[i] = max[i].max(step[i]);
        }
    }
    mean.iter_mut().for_each(|m| *m /= steps);
    Ok(EstimationFeatures { mean, max })
}

/// Recorded form of [`rqn_features`] over a `(rows, N)` matrix of chosen
/// Q-values; `episode_of_row[r]` is `None` for padded rows. Output is
/// `(episodes, 2N)`.
pub fn rqn_features_graph(
    g: &mut Graph,
    chosen_q: Var,
    episode_of_row: &[Option<usize>],
    episodes: usize,
) -> Result<Var> {
    let mean = g.group_mean(chosen_q, episode_of_row, episodes)?;
    let max = g.group_max(chosen_q, episode_of_row, episodes)?;
    g.concat_cols(&[mean, max])
}

/// `Q+_tot` per row: `sum_i (Q_i + phi_i)` with `phi` broadcast from the
/// row's episode.
pub fn rqn_mix(g: &mut Graph, chosen_q: Var, phi: Var, episode_of_row: &[usize]) -> Result<Var> {
    let (rows, n) = g.shape(chosen_q);
    if episode_of_row.len() != rows || g.shape(phi).1 != n {
        return Err(Error::Shape(format!(
            "rqn_mix: q {:?}, phi {:?}, {} row labels",
            g.shape(chosen_q),
            g.shape(phi),
            episode_of_row.len()
        )));
    }
    let phi_rows = g.gather_rows(phi, episode_of_row)?;
    let adjusted = g.add(chosen_q, phi_rows)?;
    Ok(g.sum_cols(adjusted))
}

/// The estimation network `f(mean, max; theta) -> phi`. Weights are not sign
/// constrained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationNetwork {
    pub mlp: Mlp2,
    pub num_agents: usize,
    #[serde(skip)]
    calls: Cell<u64>,
}

impl EstimationNetwork {
    pub fn new<R: Rng>(store: &mut ParamStore, num_agents: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp2::new(
                store,
                "rqn.estimation",
                2 * num_agents,
                ESTIMATION_WIDTH,
                num_agents,
                rng,
            ),
            num_agents,
            calls: Cell::new(0),
        }
    }

    /// Number of forward passes so far.
    pub fn forward_calls(&self) -> u64 {
        self.calls.get()
    }

    /// `(episodes, 2N)` features to `(episodes, N)` factors.
    pub fn factors(&self, g: &mut Graph, store: &ParamStore, features: Var) -> Result<Var> {
        let cols = g.shape(features).1;
        if cols != 2 * self.num_agents {
            return Err(Error::Shape(format!(
                "estimation network expects {} features, got {cols}",
                2 * self.num_agents
            )));
        }
        self.calls.set(self.calls.get() + 1);
        self.mlp.forward(g, store, features)
    }

    /// Factors for a single episode's features, outside any training graph.
    pub fn factors_for(&self, store: &ParamStore, features: &EstimationFeatures) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let x = g.row(&features.to_vec());
        let phi = self.factors(&mut g, store, x)?;
        Ok(g.value(phi).row(0).to_vec())
    }
}

/// Plain-number form of [`rqn_mix`] for one step.
pub fn rqn_mix_values(q: &[f64], phi: &[f64]) -> Result<f64> {
    if q.len() != phi.len() {
        return Err(Error::Shape(format!("{} Q-values, {} factors", q.len(), phi.len())));
    }
    Ok(q.iter().zip(phi).map(|(q, p)| q + p).sum())
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Matrix::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::Shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn feature_examples() {
        let f = rqn_features(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert_eq!((f.mean[0], f.max[0]), (2.0, 3.0));
        let f = rqn_features(&[vec![4.0]]).unwrap();
        assert_eq!((f.mean[0], f.max[0]), (4.0, 4.0));
        let f = rqn_features(&[vec![-1.0], vec![-5.0]]).unwrap();
        assert_eq!((f.mean[0], f.max[0]), (-3.0, -1.0));
        assert!(rqn_features(&[]).is_err());
    }

    #[test]
    fn feature_order_is_means_then_maxes() {
        let f = rqn_features(&[vec![1.0, 10.0], vec![3.0, 20.0]]).unwrap();
        assert_eq!(f.to_vec(), vec![2.0, 15.0, 3.0, 20.0]);
    }

    #[test]
    fn mix_examples() {
        assert_eq!(rqn_mix_values(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 3.0);
        assert_eq!(rqn_mix_values(&[1.0, 2.0], &[10.0, -10.0]).unwrap(), 3.0);
    }

    #[test]
    fn zero_final_layer_outputs_bias() {
        let mut store = ParamStore::new();
        let net = EstimationNetwork::new(&mut store, 2, &mut ChaCha8Rng::seed_from_u64(0));
        store.value_mut(net.mlp.out.weight).fill(0.0);
        store.value_mut(net.mlp.out.bias).assign(&ndarray::array![[0.5, -1.5]]);
        let f = rqn_features(&[vec![3.0, -2.0]]).unwrap();
        assert_eq!(net.factors_for(&store, &f).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn output_has_one_factor_per_agent() {
        for n in [2, 4] {
            let mut store = ParamStore::new();
            let net = EstimationNetwork::new(&mut store, n, &mut ChaCha8Rng::seed_from_u64(1));
            let f = rqn_features(&[vec![0.5; n], vec![1.5; n]]).unwrap();
            let phi = net.factors_for(&store, &f).unwrap();
            assert_eq!(phi.len(), n);
            assert_eq!(phi, net.factors_for(&store, &f).unwrap());
        }
    }

    #[test]
    fn graph_features_and_mix_match_plain_versions() {
        let mut g = Graph::new();
        let q = matrix_from_rows(&[vec![1.0, 4.0], vec![3.0, -2.0], vec![9.0, 9.0], vec![0.5, 0.25]])
            .unwrap();
        let qv = g.constant(q);
        let episodes = [Some(0), Some(0), None, Some(1)];
        let feats = rqn_features_graph(&mut g, qv, &episodes, 2).unwrap();
        assert_eq!(
            g.value(feats).row(0).to_vec(),
            rqn_features(&[vec![1.0, 4.0], vec![3.0, -2.0]]).unwrap().to_vec()
        );
        let phi = g.constant(matrix_from_rows(&[vec![1.0, -1.0], vec![0.5, 0.5]]).unwrap());
        let mixed = rqn_mix(&mut g, qv, phi, &[0, 0, 0, 1]).unwrap();
        assert_eq!(g.value(mixed).column(0).to_vec(), vec![5.0, 1.0, 18.0, 1.75]);
    }

    #[test]
    fn forward_calls_are_counted() {
        let mut store = ParamStore::new();
        let net = EstimationNetwork::new(&mut store, 2, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(net.forward_calls(), 0);
        let f = rqn_features(&[vec![1.0, 1.0]]).unwrap();
        net.factors_for(&store, &f).unwrap();
        net.factors_for(&store, &f).unwrap();
        assert_eq!(net.forward_calls(), 2);
    }
}
