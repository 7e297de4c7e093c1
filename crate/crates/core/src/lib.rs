//! Cooperative multi-agent value factorization: recurrent per-agent
//! Q-networks mixed by VDN, QMIX, QTRAN-base or a residual Q-network, with
//! built-in grid environments and an experiment harness.

pub mod agent;
pub mod config;
pub mod envs;
pub mod error;
pub mod harness;
pub mod mixers;
pub mod nn;
pub mod training;

pub use config::{Overrides, Preset, RunConfig};
pub use error::{Error, Result};
pub use mixers::MixerKind;
