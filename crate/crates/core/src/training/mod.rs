//! Replay storage, loss assembly per mixer, target networks and the
//! training loop.

mod batch;
mod buffer;
mod episode;
mod learner;
mod rollout;
mod run;

pub use batch::TrainBatch;
pub use buffer::ReplayBuffer;
pub use episode::EpisodeRecord;
pub use learner::{Learner, LearnerConfig, LossParts, TrainStats};
pub use rollout::{run_episode, Rollout};
pub use run::{eval_seed, new_learner, probe_seed, train, RunOutcome, RunStats};
