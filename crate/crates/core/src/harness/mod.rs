//! Evaluation protocol, metric post-processing and the matrix-game
//! reconstruction.

pub mod io;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvConfig, Environment, PredatorPrey, PredatorPreyConfig};
use crate::error::{Error, Result};
use crate::training::{run_episode, Learner};

/// Mean evaluation return recorded after `episode` training episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub episode: u64,
    pub eval_reward: f64,
}

/// Estimation factors on the probe episode after `episode` training episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSnapshot {
    pub episode: u64,
    pub phi: Vec<f64>,
}

/// Independent seed streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Init = 0,
    Explore = 1,
    Sample = 2,
    TrainEnv = 3,
    EvalEnv = 4,
    Probe = 5,
    MonotonicityProbe = 6,
}

pub fn seed_stream(seed: u64, stream: SeedStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Reset seeds of the `n` evaluation episodes for `seed`.
pub fn eval_env_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = seed_stream(seed, SeedStream::EvalEnv);
    (0..n).map(|_| rng.next_u64()).collect()
}

/// Mean undiscounted team return of `n_episodes` greedy episodes. Only reads
/// the learner.
pub fn evaluate(learner: &Learner, env: &EnvConfig, n_episodes: usize, seed: u64) -> Result<f64> {
    if n_episodes == 0 {
        return Err(Error::Empty("evaluate: zero episodes"));
    }
    let mut env = env.build()?;
    // greedy selection still draws from this generator, without effect
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for env_seed in eval_env_seeds(seed, n_episodes) {
        total += run_episode(learner, env.as_mut(), env_seed, 0.0, &mut rng)?.episode.total_reward();
    }
    Ok(total / n_episodes as f64)
}

/// Estimation factors of an RQN learner on the greedy episode played from
/// `probe_seed`. `None` for other mixers.
pub fn probe_phi(learner: &Learner, env: &EnvConfig, probe_seed: u64) -> Result<Option<Vec<f64>>> {
    let crate::mixers::Mixer::Rqn(net) = &learner.mixer else {
        return Ok(None);
    };
    let mut env = env.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let rollout = run_episode(learner, env.as_mut(), probe_seed, 0.0, &mut rng)?;
    let feats = crate::mixers::rqn_features(&rollout.chosen_q)?;
    Ok(Some(net.factors_for(&learner.params, &feats)?))
}

/// Element `k` is the mean of the last `min(k + 1, 10)` raw values.
pub fn smooth_cma10(series: &[f64]) -> Result<Vec<f64>> {
    const WINDOW: usize = 10;
    if series.is_empty() {
        return Err(Error::Empty("smooth_cma10: empty series"));
    }
    Ok((0..series.len())
        .map(|k| {
            let lo = (k + 1).saturating_sub(WINDOW);
            let w = &series[lo..=k];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    /// Normal-approximation 95% half-width: `1.96 * sd / sqrt(n)` with the
    /// sample standard deviation.
    pub half_width: Vec<f64>,
}

pub fn aggregate_seeds(runs: &[Vec<f64>]) -> Result<Aggregate> {
    if runs.len() < 2 {
        return Err(Error::Config(format!("aggregation needs at least 2 runs, got {}", runs.len())));
    }
    let len = runs[0].len();
    if runs.iter().any(|r| r.len() != len) {
        return Err(Error::Shape("runs have different lengths".into()));
    }
    let n = runs.len() as f64;
    let mut agg = Aggregate {
        mean: Vec::with_capacity(len),
        half_width: Vec::with_capacity(len),
    };
    for k in 0..len {
        let mean = runs.iter().map(|r| r[k]).sum::<f64>() / n;
        let var = runs.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        agg.mean.push(mean);
        agg.half_width.push(1.96 * var.sqrt() / n.sqrt());
    }
    Ok(agg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiStability {
    /// Population std over the tail divided by the whole-run range (0 when
    /// the range is 0).
    pub tail_ratio: f64,
    /// Least-squares slope over the tail, per snapshot, divided by the range.
    pub tail_slope_ratio: f64,
}

/// Per-agent stability of the estimation factors. `trace[k][i]` is agent
/// `i` at snapshot `k`.
pub fn phi_stability(trace: &[Vec<f64>], tail_fraction: f64) -> Result<Vec<PhiStability>> {
    const MIN_SNAPSHOTS: usize = 20;
    if trace.len() < MIN_SNAPSHOTS {
        return Err(Error::Config(format!(
            "phi_stability needs >= {MIN_SNAPSHOTS} snapshots, got {}",
            trace.len()
        )));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Config(format!("tail fraction {tail_fraction} outside (0, 1]")));
    }
    let n = trace[0].len();
    if trace.iter().any(|s| s.len() != n) {
        return Err(Error::Shape("phi snapshots of different widths".into()));
    }
    let tail_len = ((trace.len() as f64 * tail_fraction).ceil() as usize).clamp(2, trace.len());
    let tail = &trace[trace.len() - tail_len..];
    Ok((0..n)
        .map(|i| {
            let all = trace.iter().map(|s| s[i]);
            let lo = all.clone().fold(f64::INFINITY, f64::min);
            let hi = all.fold(f64::NEG_INFINITY, f64::max);
            let range = hi - lo;
            if range == 0.0 {
                return PhiStability {
                    tail_ratio: 0.0,
                    tail_slope_ratio: 0.0,
                };
            }
            let ys: Vec<f64> = tail.iter().map(|s| s[i]).collect();
            let m = ys.len() as f64;
            let y_mean = ys.iter().sum::<f64>() / m;
            let sd = (ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / m).sqrt();
            let x_mean = (m - 1.0) / 2.0;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (k, y) in ys.iter().enumerate() {
                let dx = k as f64 - x_mean;
                sxy += dx * (y - y_mean);
                sxx += dx * dx;
            }
            PhiStability {
                tail_ratio: sd / range,
                tail_slope_ratio: (sxy / sxx).abs() / range,
            }
        })
        .collect())
}

/// Joint values of the one-step game for every joint action,
/// `table[a0][a1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionTable(pub Vec<Vec<f64>>);

impl ReconstructionTable {
    pub fn get(&self, a0: usize, a1: usize) -> f64 {
        self.0[a0][a1]
    }

    pub fn max_abs_error(&self, reference: &[[f64; 3]; 3]) -> f64 {
        let mut worst = 0.0f64;
        for (row, ref_row) in self.0.iter().zip(reference) {
            for (v, r) in row.iter().zip(ref_row) {
                worst = worst.max((v - r).abs());
            }
        }
        worst
    }

    /// Largest deviation from the best additive fit `r_i + c_j`, computed
    /// from the double-centred residual.
    pub fn additive_residual(&self) -> f64 {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, Vec::len);
        let grand = self.0.iter().flatten().sum::<f64>() / (rows * cols) as f64;
        let row_mean: Vec<f64> = self.0.iter().map(|r| r.iter().sum::<f64>() / cols as f64).collect();
        let col_mean: Vec<f64> = (0..cols)
            .map(|j| self.0.iter().map(|r| r[j]).sum::<f64>() / rows as f64)
            .collect();
        let mut worst = 0.0f64;
        for i in 0..rows {
            for j in 0..cols {
                worst = worst.max((self.0[i][j] - row_mean[i] - col_mean[j] + grand).abs());
            }
        }
        worst
    }
}

/// The mixer's joint value of every joint action of the matrix game.
pub fn reconstruct_qtot(learner: &Learner, env: &EnvConfig) -> Result<ReconstructionTable> {
    if *env != EnvConfig::Matrix {
        return Err(Error::Unsupported(format!(
            "reconstruction needs the matrix game, not {}",
            env.name()
        )));
    }
    let mut game = env.build()?;
    let first = game.reset(0);
    let flat = learner.first_step_joint_values(&first.observations, &first.state)?;
    let a = learner.spec.num_actions;
    Ok(ReconstructionTable(flat.chunks(a).map(<[f64]>::to_vec).collect()))
}

/// Mean optimal return over the initial states reached from `seeds`, with the
/// prey held still (single-prey predator-prey only).
pub fn predator_prey_optimum(cfg: &PredatorPreyConfig, seeds: &[u64]) -> Result<f64> {
    if seeds.is_empty() {
        return Err(Error::Empty("predator_prey_optimum: no seeds"));
    }
    let mut env = PredatorPrey::new(cfg.clone())?;
    let mut total = 0.0;
    for &s in seeds {
        env.reset(s);
        total += env
            .optimal_return()
            .ok_or_else(|| Error::Unsupported("oracle needs exactly one prey".into()))?;
    }
    Ok(total / seeds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_examples() {
        assert_eq!(smooth_cma10(&[3.0; 4]).unwrap(), vec![3.0; 4]);
        assert_eq!(smooth_cma10(&[0.0, 10.0]).unwrap(), vec![0.0, 5.0]);
        let mut s = vec![1.0; 10];
        s.extend([0.0; 10]);
        let out = smooth_cma10(&s).unwrap();
        assert_eq!(out[19], 0.0);
        assert!((out[14] - 0.5).abs() < 1e-12);
        assert!(smooth_cma10(&[]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let same = aggregate_seeds(&vec![vec![1.0, 2.0]; 3]).unwrap();
        assert_eq!(same.half_width, vec![0.0, 0.0]);
        let agg = aggregate_seeds(&[vec![0.0, 0.0], vec![2.0, 2.0], vec![4.0, 4.0]]).unwrap();
        assert_eq!(agg.mean, vec![2.0, 2.0]);
        // sample sd of {0, 2, 4} is 2
        let hand = 1.96 * 2.0 / 3f64.sqrt();
        assert!((agg.half_width[0] - hand).abs() < 1e-12);
        assert!(aggregate_seeds(&[vec![1.0]]).is_err());
        assert!(aggregate_seeds(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn stability_examples() {
        let constant: Vec<Vec<f64>> = (0..30).map(|_| vec![0.3, -1.0]).collect();
        for s in phi_stability(&constant, 0.1).unwrap() {
            assert_eq!((s.tail_ratio, s.tail_slope_ratio), (0.0, 0.0));
        }
        // linear drift over 100 snapshots: tail std ~ 0.1 * sqrt(1/12)
        let drift: Vec<Vec<f64>> = (0..100).map(|k| vec![k as f64 / 99.0]).collect();
        let s = phi_stability(&drift, 0.1).unwrap()[0];
        let closed_form = 0.1 * (1.0f64 / 12.0).sqrt();
        assert!((s.tail_ratio - closed_form).abs() < 0.003, "{s:?}");
        assert!((s.tail_slope_ratio - 1.0 / 99.0).abs() < 1e-9);
        assert!(phi_stability(&constant[..5], 0.1).is_err());
    }

    #[test]
    fn additive_structure() {
        let t = ReconstructionTable(vec![vec![1.0, 2.0, 3.0], vec![11.0, 12.0, 13.0], vec![-1.0, 0.0, 1.0]]);
        assert!(t.additive_residual() < 1e-12);
        let payoff = ReconstructionTable(crate::envs::PAYOFF.iter().map(|r| r.to_vec()).collect());
        assert!(payoff.additive_residual() > 1.0);
        assert_eq!(payoff.max_abs_error(&crate::envs::PAYOFF), 0.0);
    }

    #[test]
    fn eval_seeds_are_stable() {
        assert_eq!(eval_env_seeds(3, 5), eval_env_seeds(3, 5));
        assert_ne!(eval_env_seeds(3, 5), eval_env_seeds(4, 5));
    }
}
