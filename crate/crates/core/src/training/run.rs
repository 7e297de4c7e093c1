//! The sequential training loop: act, store, sample, train, sync, evaluate.

use rand::RngCore;
use serde::Serialize;

use super::buffer::ReplayBuffer;
use super::learner::{Learner, LearnerConfig};
use super::rollout::run_episode;
use crate::config::RunConfig;
use crate::error::Result;
use crate::harness::{evaluate, probe_phi, seed_stream, EvalRecord, PhiSnapshot, SeedStream};
use crate::mixers::Mixer;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub episodes: u64,
    pub env_steps: u64,
    pub train_steps: u64,
    /// Episodes after which no update happened because the buffer held
    /// fewer episodes than one batch.
    pub skipped_updates: u64,
    pub target_syncs: u64,
    /// Estimation-network forward passes spent on TD targets.
    pub target_estimation_calls: u64,
    /// Smallest finite-difference slope of the QMIX mixer seen at any
    /// evaluation point.
    pub min_monotonic_slope: Option<f64>,
    pub last_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub learner: Learner,
    pub evals: Vec<EvalRecord>,
    pub phi_trace: Vec<PhiSnapshot>,
    pub stats: RunStats,
}

/// Evaluation episodes reuse one fixed seed so that points are comparable.
pub fn eval_seed(run_seed: u64) -> u64 {
    seed_stream(run_seed, SeedStream::EvalEnv).next_u64()
}

pub fn probe_seed(run_seed: u64) -> u64 {
    seed_stream(run_seed, SeedStream::Probe).next_u64()
}

pub fn new_learner(cfg: &RunConfig) -> Result<Learner> {
    cfg.validate()?;
    let spec = cfg.env.build()?.spec().clone();
    let lc = LearnerConfig {
        gamma: cfg.gamma.unwrap_or(spec.gamma),
        optimizer: cfg.optimizer,
        qtran: cfg.qtran,
        rqn_detach_features: cfg.rqn_detach_features,
    };
    Learner::new(cfg.algo, spec, lc, seed_stream(cfg.seed, SeedStream::Init).next_u64())
}

/// Runs `cfg.episodes` training episodes. `on_eval` sees every evaluation
/// record as it is produced.
pub fn train(cfg: &RunConfig, on_eval: &mut dyn FnMut(&EvalRecord)) -> Result<RunOutcome> {
    let mut learner = new_learner(cfg)?;
    let mut env = cfg.env.build()?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    let mut explore_rng = seed_stream(cfg.seed, SeedStream::Explore);
    let mut sample_rng = seed_stream(cfg.seed, SeedStream::Sample);
    let mut env_seed_rng = seed_stream(cfg.seed, SeedStream::TrainEnv);
    let mut mono_rng = seed_stream(cfg.seed, SeedStream::MonotonicityProbe);
    let (eval_seed, probe_seed) = (eval_seed(cfg.seed), probe_seed(cfg.seed));

    let mut stats = RunStats::default();
    let mut evals = Vec::new();
    let mut phi_trace = Vec::new();

    for episode in 1..=cfg.episodes {
        let epsilon = cfg.epsilon.epsilon_at(stats.env_steps);
        let rollout = run_episode(&learner, env.as_mut(), env_seed_rng.next_u64(), epsilon, &mut explore_rng)?;
        stats.env_steps += rollout.episode.len() as u64;
        buffer.store_episode(rollout.episode);

        if buffer.can_sample(cfg.batch_size) {
            let batch = buffer.sample_batch(cfg.batch_size, &mut sample_rng)?;
            stats.last_loss = Some(learner.train_step(&batch)?.loss);
        } else {
            stats.skipped_updates += 1;
        }
        if episode % cfg.target_sync_interval == 0 {
            learner.sync_targets()?;
        }
        if episode % cfg.eval_interval == 0 {
            let record = EvalRecord {
                episode,
                eval_reward: evaluate(&learner, &cfg.env, cfg.eval_episodes, eval_seed)?,
            };
            if let Some(phi) = probe_phi(&learner, &cfg.env, probe_seed)? {
                phi_trace.push(PhiSnapshot { episode, phi });
            }
            if let Mixer::Qmix(m) = &learner.mixer {
                let slope = m.min_partial(&learner.params, 20, &mut mono_rng)?;
                stats.min_monotonic_slope = Some(stats.min_monotonic_slope.map_or(slope, |s: f64| s.min(slope)));
            }
            on_eval(&record);
            evals.push(record);
        }
    }
    stats.episodes = cfg.episodes;
    stats.train_steps = learner.train_steps();
    stats.target_syncs = learner.syncs();
    stats.target_estimation_calls = learner.target_estimation_calls();
    Ok(RunOutcome {
        learner,
        evals,
        phi_trace,
        stats,
    })
}
