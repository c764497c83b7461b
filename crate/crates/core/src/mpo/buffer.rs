//! FIFO replay storage of transitions tagged by episode, sampled as
//! contiguous fixed-length windows that never straddle two episodes.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::HybridAction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// residual action for the residual agent, full action otherwise
    pub action: HybridAction,
    pub behavior_logprob_torque: f64,
    pub behavior_prob_gear: f64,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        let p = self.behavior_prob_gear;
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParam {
                name: "behavior_prob_gear",
                reason: format!("must lie in (0, 1], got {p}"),
            });
        }
        if !(-1..=1).contains(&self.action.gear_cmd) {
            return Err(Error::InvalidParam {
                name: "gear_cmd",
                reason: format!("got {}", self.action.gear_cmd),
            });
        }
        let scalars = [
            ("action torque", self.action.torque),
            ("behavior log-prob", self.behavior_logprob_torque),
            ("reward", self.reward),
        ];
        for (what, v) in scalars {
            if !v.is_finite() {
                return Err(Error::NonFinite { what, value: v });
            }
        }
        for (what, xs) in [("state", &self.state), ("next state", &self.next_state)] {
            if let Some(v) = xs.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what, value: *v });
            }
        }
        Ok(())
    }
}

/// Up to `L` consecutive transitions of one episode, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegment {
    pub steps: Vec<Transition>,
}

impl TrajectorySegment {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    episodes: VecDeque<u64>,
    // (episode id, stored length) in storage order
    runs: VecDeque<(u64, usize)>,
    current: u64,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 1 << 20;

    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::new(),
            episodes: VecDeque::new(),
            runs: VecDeque::new(),
            current: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Later pushes belong to a new episode.
    pub fn end_episode(&mut self) {
        if self.runs.back().is_some_and(|r| r.0 == self.current) {
            self.current += 1;
        }
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        t.validate()?;
        if self.items.len() == self.capacity {
            self.items.pop_front();
            self.episodes.pop_front();
            let front = self.runs.front_mut().expect("runs track items");
            front.1 -= 1;
            if front.1 == 0 {
                self.runs.pop_front();
            }
        }
        let done = t.done;
        self.items.push_back(t);
        self.episodes.push_back(self.current);
        match self.runs.back_mut() {
            Some(r) if r.0 == self.current => r.1 += 1,
            _ => self.runs.push_back((self.current, 1)),
        }
        if done {
            self.end_episode();
        }
        Ok(())
    }

    /// Number of distinct length-`l` windows inside single episodes.
    pub fn window_count(&self, l: usize) -> usize {
        self.runs
            .iter()
            .map(|&(_, n)| (n + 1).saturating_sub(l))
            .sum()
    }

    /// Storage offset of a uniformly chosen valid window start.
    pub fn sample_start<R: Rng + ?Sized>(&self, l: usize, rng: &mut R) -> Result<usize> {
        let windows = self.window_count(l);
        if l == 0 || windows == 0 {
            return Err(Error::NotReady {
                windows,
                len: self.items.len(),
            });
        }
        let starts = self.items.len() + 1 - l;
        loop {
            let i = rng.random_range(0..starts);
            if self.episodes[i] == self.episodes[i + l - 1] {
                return Ok(i);
            }
        }
    }

    pub fn segment_at(&self, start: usize, l: usize) -> TrajectorySegment {
        TrajectorySegment {
            steps: self.items.range(start..start + l).cloned().collect(),
        }
    }

    /// `count` independently drawn windows of length `l`.
    pub fn sample_segments<R: Rng + ?Sized>(
        &self,
        count: usize,
        l: usize,
        rng: &mut R,
    ) -> Result<Vec<TrajectorySegment>> {
        (0..count)
            .map(|_| Ok(self.segment_at(self.sample_start(l, rng)?, l)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(tag: f64, done: bool) -> Transition {
        Transition {
            state: vec![tag],
            action: HybridAction {
                torque: 0.0,
                gear_cmd: 0,
            },
            behavior_logprob_torque: 0.0,
            behavior_prob_gear: 1.0 / 3.0,
            reward: -tag,
            next_state: vec![tag + 1.0],
            done,
        }
    }

    #[test]
    fn short_buffer_is_not_ready() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..10 {
            b.push(tr(i as f64, false)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            b.sample_segments(1, 15, &mut rng),
            Err(Error::NotReady { windows: 0, len: 10 })
        ));
    }

    #[test]
    fn single_window_every_time() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..15 {
            b.push(tr(i as f64, false)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in b.sample_segments(20, 15, &mut rng).unwrap() {
            let tags: Vec<f64> = s.steps.iter().map(|t| t.state[0]).collect();
            assert_eq!(tags, (0..15).map(|i| i as f64).collect::<Vec<_>>());
        }
    }

    #[test]
    fn windows_stay_within_episodes() {
        let mut b = ReplayBuffer::new(1000);
        let mut tag = 0.0;
        for len in [7, 20, 3, 16, 40] {
            for k in 0..len {
                b.push(tr(tag, k == len - 1)).unwrap();
                tag += 1.0;
            }
        }
        assert_eq!(b.window_count(5), 3 + 16 + 0 + 12 + 36);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in b.sample_segments(2000, 5, &mut rng).unwrap() {
            for w in s.steps.windows(2) {
                assert_eq!(w[1].state[0], w[0].state[0] + 1.0);
                assert!(!w[0].done);
            }
        }
    }

    #[test]
    fn eviction_keeps_episode_bookkeeping() {
        let mut b = ReplayBuffer::new(10);
        for i in 0..8 {
            b.push(tr(i as f64, i == 7)).unwrap();
        }
        for i in 8..14 {
            b.push(tr(i as f64, false)).unwrap();
        }
        assert_eq!(b.len(), 10);
        // episodes now hold 4 and 6 transitions
        assert_eq!(b.window_count(4), 1 + 3);
        assert_eq!(b.window_count(7), 0);
    }

    #[test]
    fn explicit_episode_breaks() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..10 {
            b.push(tr(i as f64, false)).unwrap();
        }
        b.end_episode();
        b.end_episode();
        for i in 10..20 {
            b.push(tr(i as f64, false)).unwrap();
        }
        assert_eq!(b.window_count(10), 2);
        assert_eq!(b.window_count(11), 0);
    }

    #[test]
    fn rejects_invalid_transitions() {
        let mut b = ReplayBuffer::new(4);
        let mut t = tr(0.0, false);
        t.behavior_prob_gear = 0.0;
        assert!(b.push(t).is_err());
        let mut t = tr(0.0, false);
        t.reward = f64::NAN;
        assert!(b.push(t).is_err());
        assert!(b.is_empty());
    }

    #[test]
    fn window_starts_are_uniform() {
        // two episodes give 30 + 11 valid starts
        let mut b = ReplayBuffer::new(1000);
        for i in 0..44 {
            b.push(tr(i as f64, i == 43)).unwrap();
        }
        for i in 44..69 {
            b.push(tr(i as f64, false)).unwrap();
        }
        let l = 15;
        let k = b.window_count(l);
        assert_eq!(k, 30 + 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12345);
        let draws = 100_000;
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..draws {
            *counts.entry(b.sample_start(l, &mut rng).unwrap()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), k);
        let expected = draws as f64 / k as f64;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square 0.999 quantile with 40 degrees of freedom
        assert!(chi2 < 73.40, "chi2 = {chi2}");
    }
}
