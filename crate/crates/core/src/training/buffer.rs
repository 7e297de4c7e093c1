use std::collections::VecDeque;

use rand::Rng;

use super::batch::TrainBatch;
use super::episode::EpisodeRecord;
use crate::error::{Error, Result};

/// FIFO store of whole episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    episodes: VecDeque<EpisodeRecord>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay buffer capacity must be positive".into()));
        }
        Ok(Self {
            episodes: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Appends, evicting the oldest episode once full.
    pub fn store_episode(&mut self, episode: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }

    pub fn can_sample(&self, batch_size: usize) -> bool {
        batch_size > 0 && self.len() >= batch_size
    }

    /// Buffer positions of a uniform sample without replacement.
    pub fn sample_indices<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if !self.can_sample(batch_size) {
            return Err(Error::BufferTooSmall {
                have: self.len(),
                need: batch_size.max(1),
            });
        }
        Ok(rand::seq::index::sample(rng, self.len(), batch_size).into_vec())
    }

    pub fn sample_batch<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<TrainBatch> {
        let idx = self.sample_indices(batch_size, rng)?;
        TrainBatch::new(idx.into_iter().map(|i| self.episodes[i].clone()).collect(), None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tagged(tag: f64, len: usize) -> EpisodeRecord {
        EpisodeRecord {
            observations: vec![vec![vec![tag]]; len + 1],
            states: vec![vec![tag]; len + 1],
            actions: vec![vec![0]; len],
            rewards: vec![tag; len],
            terminated: true,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(2).unwrap();
        for tag in [1.0, 2.0, 3.0] {
            buf.store_episode(tagged(tag, 1));
        }
        let tags: Vec<f64> = buf.iter().map(|e| e.rewards[0]).collect();
        assert_eq!(tags, vec![2.0, 3.0]);
        buf.store_episode(tagged(4.0, 1));
        let tags: Vec<f64> = buf.iter().map(|e| e.rewards[0]).collect();
        assert_eq!(tags, vec![3.0, 4.0]);
    }

    #[test]
    fn single_episode_round_trip() {
        let mut buf = ReplayBuffer::new(5).unwrap();
        buf.store_episode(tagged(7.0, 2));
        let batch = buf.sample_batch(1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(batch.episodes[0], tagged(7.0, 2));
    }

    #[test]
    fn too_small_to_sample() {
        let mut buf = ReplayBuffer::new(5).unwrap();
        buf.store_episode(tagged(1.0, 1));
        assert!(!buf.can_sample(32));
        assert!(matches!(
            buf.sample_batch(2, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::BufferTooSmall { have: 1, need: 2 })
        ));
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn sampling_is_without_replacement() {
        let mut buf = ReplayBuffer::new(40).unwrap();
        for k in 0..40 {
            buf.store_episode(tagged(k as f64, 1));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut idx = buf.sample_indices(32, &mut rng).unwrap();
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), 32);
        }
    }
}
