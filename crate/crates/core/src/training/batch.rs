use super::episode::EpisodeRecord;
use crate::error::{Error, Result};

/// Episodes padded to a common length. Rows of every per-step quantity are
/// laid out time-major: `row = t * batch_size + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub episodes: Vec<EpisodeRecord>,
    pub max_len: usize,
}

impl TrainBatch {
    /// `pad_to` forces a padded length beyond the longest episode.
    pub fn new(episodes: Vec<EpisodeRecord>, pad_to: Option<usize>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Empty("batch without episodes"));
        }
        if let Some(e) = episodes.iter().find(|e| e.is_empty()) {
            e.validate(0)?;
        }
        let longest = episodes.iter().map(EpisodeRecord::len).max().unwrap_or(0);
        let max_len = pad_to.unwrap_or(longest);
        if max_len < longest {
            return Err(Error::Shape(format!("cannot pad {longest} steps to {max_len}")));
        }
        Ok(Self { episodes, max_len })
    }

    pub fn batch_size(&self) -> usize {
        self.episodes.len()
    }

    pub fn rows(&self) -> usize {
        self.max_len * self.batch_size()
    }

    pub fn is_valid(&self, t: usize, b: usize) -> bool {
        t < self.episodes[b].len()
    }

    /// 1 for real steps, 0 for padding.
    pub fn mask(&self) -> Vec<f64> {
        let mut m = Vec::with_capacity(self.rows());
        for t in 0..self.max_len {
            for b in 0..self.batch_size() {
                m.push(if self.is_valid(t, b) { 1.0 } else { 0.0 });
            }
        }
        m
    }

    /// Episode index of each row, `None` on padding.
    pub fn episode_of_row(&self) -> Vec<Option<usize>> {
        let mut out = Vec::with_capacity(self.rows());
        for t in 0..self.max_len {
            for b in 0..self.batch_size() {
                out.push(self.is_valid(t, b).then_some(b));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode(len: usize) -> EpisodeRecord {
        EpisodeRecord {
            observations: vec![vec![vec![0.0]]; len + 1],
            states: vec![vec![0.0]; len + 1],
            actions: vec![vec![0]; len],
            rewards: vec![0.0; len],
            terminated: false,
        }
    }

    #[test]
    fn equal_lengths_are_all_valid() {
        let b = TrainBatch::new(vec![episode(5), episode(5)], None).unwrap();
        assert_eq!(b.max_len, 5);
        assert!(b.mask().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn shorter_episode_is_masked() {
        let b = TrainBatch::new(vec![episode(3), episode(7)], None).unwrap();
        assert_eq!(b.max_len, 7);
        let masked = (0..7).filter(|&t| !b.is_valid(t, 0)).count();
        assert_eq!(masked, 4);
        assert_eq!(b.mask().iter().filter(|&&m| m == 0.0).count(), 4);
        assert_eq!(b.episode_of_row()[3 * 2], None);
        assert_eq!(b.episode_of_row()[3 * 2 + 1], Some(1));
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(TrainBatch::new(vec![], None).is_err());
        assert!(TrainBatch::new(vec![episode(0)], None).is_err());
        assert!(TrainBatch::new(vec![episode(4)], Some(2)).is_err());
    }
}
