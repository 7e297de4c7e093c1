//! Joint-value factorization heads and the tabular IGM oracles.

mod qmix;
mod qtran;
mod rqn;
pub mod theorem;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::DecPomdpSpec;
use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub use qmix::{QmixMixer, MIXING_WIDTH};
pub use qtran::{action_counts, qtran_losses, QtranHeads, QtranLosses, QtranWeights, ValueHead, HEAD_WIDTH};
pub use rqn::{
    rqn_features, rqn_features_graph, rqn_mix, rqn_mix_values, EstimationFeatures, EstimationNetwork,
    ESTIMATION_WIDTH,
};
pub(crate) use rqn::matrix_from_rows;

/// Additive factorization: the sum of the chosen per-agent values.
pub fn vdn_mix(q: &[f64]) -> f64 {
    q.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixerKind {
    Vdn,
    Qmix,
    Qtran,
    Rqn,
}

impl MixerKind {
    pub const ALL: [MixerKind; 4] = [MixerKind::Vdn, MixerKind::Qmix, MixerKind::Qtran, MixerKind::Rqn];

    pub fn name(self) -> &'static str {
        match self {
            MixerKind::Vdn => "vdn",
            MixerKind::Qmix => "qmix",
            MixerKind::Qtran => "qtran",
            MixerKind::Rqn => "rqn",
        }
    }

    /// Whether the mixer reads the global state vector.
    pub fn uses_state(self) -> bool {
        matches!(self, MixerKind::Qmix | MixerKind::Qtran)
    }
}

impl fmt::Display for MixerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MixerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MixerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}' (expected vdn, qmix, qtran or rqn)")))
    }
}

/// Mixer parameters, registered in the same store as the agent network.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mixer {
    Vdn,
    Qmix(QmixMixer),
    Qtran(QtranHeads),
    Rqn(EstimationNetwork),
}

impl Mixer {
    pub fn new<R: Rng>(kind: MixerKind, store: &mut ParamStore, spec: &DecPomdpSpec, rng: &mut R) -> Self {
        match kind {
            MixerKind::Vdn => Mixer::Vdn,
            MixerKind::Qmix => Mixer::Qmix(QmixMixer::new(store, spec.num_agents, spec.state_dim, rng)),
            MixerKind::Qtran => Mixer::Qtran(QtranHeads::new(store, spec.num_actions, spec.state_dim, rng)),
            MixerKind::Rqn => Mixer::Rqn(EstimationNetwork::new(store, spec.num_agents, rng)),
        }
    }

    pub fn kind(&self) -> MixerKind {
        match self {
            Mixer::Vdn => MixerKind::Vdn,
            Mixer::Qmix(_) => MixerKind::Qmix,
            Mixer::Qtran(_) => MixerKind::Qtran,
            Mixer::Rqn(_) => MixerKind::Rqn,
        }
    }
}
