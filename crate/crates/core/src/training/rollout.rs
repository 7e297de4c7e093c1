use rand::Rng;

use super::episode::EpisodeRecord;
use super::learner::Learner;
use crate::agent::{select_action, HiddenState};
use crate::envs::Environment;
use crate::error::{Error, Result};

/// One played episode plus the chosen-action Q-values of every agent at every
/// step (`chosen_q[t][i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub episode: EpisodeRecord,
    pub chosen_q: Vec<Vec<f64>>,
}

/// Plays one episode with decentralized epsilon-greedy agents. Each agent
/// sees only its own observation history.
pub fn run_episode<R: Rng>(
    learner: &Learner,
    env: &mut dyn Environment,
    env_seed: u64,
    epsilon: f64,
    rng: &mut R,
) -> Result<Rollout> {
    let spec = env.spec().clone();
    if spec.num_agents != learner.spec.num_agents || spec.obs_dim != learner.spec.obs_dim {
        return Err(Error::Config("environment does not match the learner".into()));
    }
    let n = spec.num_agents;
    let ids: Vec<usize> = (0..n).collect();
    let first = env.reset(env_seed);
    let mut episode = EpisodeRecord {
        observations: vec![first.observations],
        states: vec![first.state],
        actions: Vec::new(),
        rewards: Vec::new(),
        terminated: false,
    };
    let mut chosen_q = Vec::new();
    let mut hidden = vec![HiddenState::zeros(); n];
    let mut last: Vec<Option<usize>> = vec![None; n];

    for _ in 0..spec.episode_limit {
        let obs = episode.observations.last().expect("non-empty");
        let (q, h) = learner.agent.step_agents(&learner.params, obs, &last, &ids, &hidden)?;
        let actions = q
            .iter()
            .map(|qi| select_action(qi, epsilon, rng))
            .collect::<Result<Vec<_>>>()?;
        chosen_q.push(actions.iter().zip(&q).map(|(&a, qi)| qi[a]).collect());
        let step = env.step(&actions)?;
        let (done, terminal) = (step.done(), step.terminal);
        episode.observations.push(step.observations);
        episode.states.push(step.state);
        episode.rewards.push(step.reward);
        last = actions.iter().copied().map(Some).collect();
        episode.actions.push(actions);
        hidden = h;
        if done {
            episode.terminated = terminal;
            return Ok(Rollout { episode, chosen_q });
        }
    }
    Err(Error::Unsupported(format!(
        "environment ran past its episode limit of {}",
        spec.episode_limit
    )))
}
