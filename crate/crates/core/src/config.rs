//! Run configuration: defaults from a preset, overridden by a JSON file,
//! overridden by individual flags.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::EpsilonSchedule;
use crate::envs::{EnvConfig, PredatorPreyConfig};
use crate::error::{Error, Result};
use crate::mixers::{MixerKind, QtranWeights};
use crate::nn::OptimizerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algo: MixerKind,
    pub env: EnvConfig,
    pub episodes: u64,
    pub seed: u64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub epsilon: EpsilonSchedule,
    /// `None` uses the environment's own discount.
    pub gamma: Option<f64>,
    /// In episodes.
    pub target_sync_interval: u64,
    /// In episodes.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub optimizer: OptimizerConfig,
    pub qtran: QtranWeights,
    pub rqn_detach_features: bool,
    pub out: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Table1,
    Table2,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Preset::Table1),
            "table2" => Ok(Preset::Table2),
            _ => Err(Error::Config(format!("unknown preset '{s}' (expected table1 or table2)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Table1 => "table1",
            Preset::Table2 => "table2",
        })
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            algo: MixerKind::Rqn,
            env: EnvConfig::PredatorPrey(PredatorPreyConfig::default()),
            episodes: 5000,
            seed: 0,
            buffer_capacity: 5000,
            batch_size: 32,
            epsilon: EpsilonSchedule {
                start: 1.0,
                min: 0.05,
                anneal_steps: 50_000,
            },
            gamma: None,
            target_sync_interval: 200,
            eval_interval: 100,
            eval_episodes: 20,
            optimizer: OptimizerConfig::default(),
            qtran: QtranWeights::default(),
            rqn_detach_features: false,
            out: None,
        };
        match preset {
            Preset::Table1 => base,
            Preset::Table2 => Self {
                buffer_capacity: 100_000,
                epsilon: EpsilonSchedule {
                    start: 1.0,
                    min: 0.1,
                    anneal_steps: 2_000_000,
                },
                ..base
            },
        }
    }

    /// The one-step matrix-game regime: full exploration and a small buffer.
    pub fn matrix_regime(algo: MixerKind, seed: u64) -> Self {
        Self {
            algo,
            env: EnvConfig::Matrix,
            episodes: 20_000,
            seed,
            buffer_capacity: 500,
            epsilon: EpsilonSchedule::constant(1.0),
            ..Self::preset(Preset::Table1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.buffer_capacity == 0 || self.batch_size == 0 {
            return fail("buffer capacity and batch size must be positive".into());
        }
        if self.batch_size > self.buffer_capacity {
            return fail(format!(
                "batch size {} exceeds buffer capacity {}",
                self.batch_size, self.buffer_capacity
            ));
        }
        let e = self.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.min) || e.min > e.start {
            return fail(format!("invalid epsilon schedule {e:?}"));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return fail(format!("gamma {g} outside [0, 1]"));
            }
        }
        if self.target_sync_interval == 0 || self.eval_interval == 0 || self.eval_episodes == 0 {
            return fail("sync interval, eval interval and eval episodes must be positive".into());
        }
        if !(self.optimizer.lr > 0.0) {
            return fail(format!("learning rate {} must be positive", self.optimizer.lr));
        }
        if let EnvConfig::PredatorPrey(pp) = &self.env {
            if pp.n_predators < 2 || pp.n_prey == 0 {
                return fail(format!("predator_prey needs >= 2 predators and >= 1 prey, got {pp:?}"));
            }
        }
        Ok(())
    }

    /// `preset` defaults, then keys of `file` (a JSON object, possibly
    /// partial), then `flags`.
    pub fn resolve(preset: Preset, file: Option<&str>, flags: &Overrides) -> Result<Self> {
        let mut value = serde_json::to_value(Self::preset(preset))?;
        if let Some(text) = file {
            let patch: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
            if !patch.is_object() {
                return Err(Error::Config("config file must hold a JSON object".into()));
            }
            merge(&mut value, patch);
        }
        let mut cfg = Self::from_value(value)?;
        flags.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    /// Strict deserialization. Environments without parameters accept no key
    /// besides `name`, which serde cannot enforce on unit variants.
    pub fn from_value(value: Value) -> Result<Self> {
        if let Some(env) = value.get("env").and_then(Value::as_object) {
            let unit = matches!(env.get("name").and_then(Value::as_str), Some("matrix" | "switch" | "checkers"));
            if let Some(extra) = env.keys().find(|k| unit && *k != "name") {
                return Err(Error::Config(format!("config: unknown env key '{extra}'")));
            }
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("config: {e}")))
    }
}

/// Recursive object merge; the environment object is replaced whole when
/// its `name` changes.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let replace = k == "env" && b.get(&k).and_then(|e| e.get("name")) != v.get("name");
                match b.get_mut(&k) {
                    Some(slot) if !replace => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Individual command-line overrides; `None` leaves the value alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub algo: Option<MixerKind>,
    pub env: Option<String>,
    pub episodes: Option<u64>,
    pub seed: Option<u64>,
    pub buffer: Option<usize>,
    pub batch: Option<usize>,
    pub eps_min: Option<f64>,
    pub eps_anneal: Option<u64>,
    pub epsilon_fixed: Option<f64>,
    pub capture_penalty: Option<f64>,
    pub n_predators: Option<usize>,
    pub out: Option<String>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(name) = &self.env {
            if name != cfg.env.name() {
                cfg.env = match name.as_str() {
                    "matrix" => EnvConfig::Matrix,
                    "predator_prey" => EnvConfig::PredatorPrey(PredatorPreyConfig::default()),
                    "switch" => EnvConfig::Switch,
                    "checkers" => EnvConfig::Checkers,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown environment '{other}' (expected matrix, predator_prey, switch or checkers)"
                        )))
                    }
                };
            }
        }
        if self.capture_penalty.is_some() || self.n_predators.is_some() {
            let EnvConfig::PredatorPrey(pp) = &mut cfg.env else {
                return Err(Error::Config(
                    "--capture-penalty and --n-predators only apply to predator_prey".into(),
                ));
            };
            if let Some(p) = self.capture_penalty {
                pp.capture_penalty = p;
            }
            if let Some(n) = self.n_predators {
                pp.n_predators = n;
            }
        }
        if let Some(a) = self.algo {
            cfg.algo = a;
        }
        if let Some(v) = self.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.buffer {
            cfg.buffer_capacity = v;
        }
        if let Some(v) = self.batch {
            cfg.batch_size = v;
        }
        if let Some(v) = self.eps_min {
            cfg.epsilon.min = v;
        }
        if let Some(v) = self.eps_anneal {
            cfg.epsilon.anneal_steps = v;
        }
        if let Some(v) = self.epsilon_fixed {
            cfg.epsilon = EpsilonSchedule::constant(v);
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_tables() {
        let t1 = RunConfig::preset(Preset::Table1);
        assert_eq!((t1.buffer_capacity, t1.batch_size), (5000, 32));
        assert_eq!((t1.epsilon.start, t1.epsilon.min, t1.epsilon.anneal_steps), (1.0, 0.05, 50_000));
        let t2 = RunConfig::preset(Preset::Table2);
        assert_eq!((t2.buffer_capacity, t2.epsilon.min, t2.epsilon.anneal_steps), (100_000, 0.1, 2_000_000));
        t1.validate().unwrap();
        t2.validate().unwrap();
    }

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let file = r#"{"episodes": 300, "seed": 4, "buffer_capacity": 64}"#;
        let flags = Overrides {
            seed: Some(9),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Preset::Table1, Some(file), &flags).unwrap();
        assert_eq!((cfg.episodes, cfg.seed, cfg.buffer_capacity, cfg.batch_size), (300, 9, 64, 32));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let none = Overrides::default();
        assert!(RunConfig::resolve(Preset::Table1, Some(r#"{"episodez": 3}"#), &none).is_err());
        assert!(RunConfig::resolve(Preset::Table1, Some(r#"{"epsilon": {"floor": 0.1}}"#), &none).is_err());
        assert!(RunConfig::resolve(Preset::Table1, Some(r#"{"env": {"name": "matrix", "size": 3}}"#), &none).is_err());
    }

    #[test]
    fn env_switch_via_file_and_flags() {
        let none = Overrides::default();
        let cfg = RunConfig::resolve(Preset::Table1, Some(r#"{"env": {"name": "switch"}}"#), &none).unwrap();
        assert_eq!(cfg.env, EnvConfig::Switch);
        let flags = Overrides {
            env: Some("predator_prey".into()),
            n_predators: Some(4),
            capture_penalty: Some(-0.1),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Preset::Table2, Some(r#"{"env": {"name": "switch"}}"#), &flags).unwrap();
        assert_eq!(
            cfg.env,
            EnvConfig::PredatorPrey(PredatorPreyConfig {
                n_predators: 4,
                n_prey: 1,
                capture_penalty: -0.1
            })
        );
        let bad = Overrides {
            env: Some("combat".into()),
            ..Default::default()
        };
        assert!(RunConfig::resolve(Preset::Table1, None, &bad).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let cfg = RunConfig::matrix_regime(MixerKind::Qtran, 3);
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back = RunConfig::resolve(Preset::Table2, Some(&json), &Overrides::default()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut cfg = RunConfig::preset(Preset::Table1);
        cfg.batch_size = 10_000;
        assert!(cfg.validate().is_err());
        let flags = Overrides {
            epsilon_fixed: Some(1.5),
            ..Default::default()
        };
        assert!(RunConfig::resolve(Preset::Table1, None, &flags).is_err());
    }
}
