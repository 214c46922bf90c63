//! Bounded FIFO replay of real environment transitions.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng;

use crate::error::{check_dim, Result, SrlError};
use crate::scalar::Scalar;
use crate::transition::{Batch, Transition, WindowBatch};

/// Ring buffer of transitions stored column-wise.
///
/// Besides the transition itself every slot remembers which episode it came
/// from and its offset inside that episode, so contiguous windows can be cut
/// out for multi-step model training.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<T>,
    actions: Vec<T>,
    rewards: Vec<T>,
    next_states: Vec<T>,
    dones: Vec<bool>,
    truncated: Vec<bool>,
    episode: Vec<u64>,
    offset: Vec<u32>,
    head: usize,
    len: usize,
    current_episode: u64,
    current_offset: u32,
    total_pushed: u64,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            truncated: Vec::new(),
            episode: Vec::new(),
            offset: Vec::new(),
            head: 0,
            len: 0,
            current_episode: 0,
            current_offset: 0,
            total_pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Number of transitions ever accepted, including evicted ones.
    pub fn total_pushed(&self) -> u64 {
        self.total_pushed
    }

    /// Appends `t`, evicting the oldest entry once full.
    pub fn push(&mut self, t: &Transition<T>) -> Result<()> {
        check_dim("transition state", self.state_dim, t.state.len())?;
        check_dim("transition next_state", self.state_dim, t.next_state.len())?;
        check_dim("transition action", self.action_dim, t.action.len())?;
        if !t.is_finite() {
            return Err(SrlError::NonFinite("transition pushed to replay".into()));
        }

        let (ds, da) = (self.state_dim, self.action_dim);
        if self.len < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.next_states.extend_from_slice(&t.next_state);
            self.dones.push(t.done);
            self.truncated.push(t.truncated);
            self.episode.push(self.current_episode);
            self.offset.push(self.current_offset);
            self.len += 1;
        } else {
            let i = self.head;
            self.states[i * ds..(i + 1) * ds].copy_from_slice(&t.state);
            self.actions[i * da..(i + 1) * da].copy_from_slice(&t.action);
            self.rewards[i] = t.reward;
            self.next_states[i * ds..(i + 1) * ds].copy_from_slice(&t.next_state);
            self.dones[i] = t.done;
            self.truncated[i] = t.truncated;
            self.episode[i] = self.current_episode;
            self.offset[i] = self.current_offset;
        }
        self.head = (self.head + 1) % self.capacity;
        self.total_pushed += 1;

        if t.ends_episode() {
            self.current_episode += 1;
            self.current_offset = 0;
        } else {
            self.current_offset += 1;
        }
        Ok(())
    }

    /// Marks the next push as the start of a new episode. Needed when an
    /// episode is abandoned without a terminal or truncated transition.
    pub fn break_episode(&mut self) {
        if self.current_offset != 0 {
            self.current_episode += 1;
            self.current_offset = 0;
        }
    }

    fn physical(&self, logical: usize) -> usize {
        if self.len < self.capacity {
            logical
        } else {
            (self.head + logical) % self.capacity
        }
    }

    /// Transition `i`, counted from the oldest stored entry.
    pub fn get(&self, i: usize) -> Option<Transition<T>> {
        if i >= self.len {
            return None;
        }
        let p = self.physical(i);
        let (ds, da) = (self.state_dim, self.action_dim);
        Some(Transition {
            state: self.states[p * ds..(p + 1) * ds].to_vec(),
            action: self.actions[p * da..(p + 1) * da].to_vec(),
            reward: self.rewards[p],
            next_state: self.next_states[p * ds..(p + 1) * ds].to_vec(),
            done: self.dones[p],
            truncated: self.truncated[p],
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Transition<T>> + '_ {
        (0..self.len).map(move |i| self.get(i).expect("in range"))
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch<T>> {
        if self.len < n || n == 0 {
            return Err(SrlError::InsufficientData {
                available: self.len,
                requested: n,
            });
        }
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len)).collect();
        Ok(self.gather(&idx))
    }

    /// Like [`Self::sample`], plus the action executed just before each
    /// sampled state (zeros at an episode start). Consumes the same draws.
    pub fn sample_with_previous<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Batch<T>, Array2<T>)> {
        if self.len < n || n == 0 {
            return Err(SrlError::InsufficientData {
                available: self.len,
                requested: n,
            });
        }
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len)).collect();
        let da = self.action_dim;
        let mut prev = Array2::zeros((n, da));
        for (row, &p) in idx.iter().enumerate() {
            if self.offset[p] == 0 {
                continue;
            }
            let q = if p == 0 { self.len - 1 } else { p - 1 };
            if q != p && self.episode[q] == self.episode[p] && self.offset[q] + 1 == self.offset[p] {
                for (k, &v) in self.actions[q * da..(q + 1) * da].iter().enumerate() {
                    prev[[row, k]] = v;
                }
            }
        }
        Ok((self.gather(&idx), prev))
    }

    /// Physical slot indices drawn uniformly; exposed for frequency tests.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.len)).collect()
    }

    fn gather(&self, idx: &[usize]) -> Batch<T> {
        let n = idx.len();
        let (ds, da) = (self.state_dim, self.action_dim);
        let mut states = Vec::with_capacity(n * ds);
        let mut actions = Vec::with_capacity(n * da);
        let mut rewards = Vec::with_capacity(n);
        let mut next_states = Vec::with_capacity(n * ds);
        let mut dones = Vec::with_capacity(n);
        for &p in idx {
            states.extend_from_slice(&self.states[p * ds..(p + 1) * ds]);
            actions.extend_from_slice(&self.actions[p * da..(p + 1) * da]);
            rewards.push(self.rewards[p]);
            next_states.extend_from_slice(&self.next_states[p * ds..(p + 1) * ds]);
            dones.push(if self.dones[p] { T::one() } else { T::zero() });
        }
        Batch {
            states: Array2::from_shape_vec((n, ds), states).unwrap(),
            actions: Array2::from_shape_vec((n, da), actions).unwrap(),
            rewards: Array2::from_shape_vec((n, 1), rewards).unwrap(),
            next_states: Array2::from_shape_vec((n, ds), next_states).unwrap(),
            dones: Array2::from_shape_vec((n, 1), dones).unwrap(),
        }
    }

    /// Whether logical entries `start..start + h` are consecutive steps of one episode.
    pub fn is_window(&self, start: usize, h: usize) -> bool {
        if h == 0 || start + h > self.len {
            return false;
        }
        let p0 = self.physical(start);
        let (ep, off) = (self.episode[p0], self.offset[p0]);
        (1..h).all(|k| {
            let p = self.physical(start + k);
            self.episode[p] == ep && self.offset[p] == off + k as u32
        })
    }

    /// Logical start indices of every valid `h`-step window, oldest first.
    pub fn window_starts(&self, h: usize) -> Vec<usize> {
        (0..self.len).filter(|&s| self.is_window(s, h)).collect()
    }

    /// The `h` transitions of the window beginning at logical index `start`.
    pub fn window(&self, start: usize, h: usize) -> Option<Vec<Transition<T>>> {
        self.is_window(start, h)
            .then(|| (start..start + h).map(|i| self.get(i).unwrap()).collect())
    }

    /// `n` contiguous `h`-step windows, starts drawn uniformly among valid ones
    /// by rejection.
    pub fn sample_windows<R: Rng + ?Sized>(
        &self,
        n: usize,
        h: usize,
        rng: &mut R,
    ) -> Result<WindowBatch<T>> {
        if self.len < h + n.min(1) || h == 0 {
            return Err(SrlError::InsufficientData {
                available: self.len,
                requested: h,
            });
        }
        let mut starts = Vec::with_capacity(n);
        let mut tries = 0usize;
        while starts.len() < n {
            let s = rng.random_range(0..=self.len - h);
            if self.is_window(s, h) {
                starts.push(s);
            }
            tries += 1;
            if tries > 1000 * n.max(1) {
                return Err(SrlError::InsufficientData {
                    available: starts.len(),
                    requested: n,
                });
            }
        }
        Ok(self.gather_windows(&starts, h))
    }

    fn gather_windows(&self, starts: &[usize], h: usize) -> WindowBatch<T> {
        let n = starts.len();
        let (ds, da) = (self.state_dim, self.action_dim);
        let mut observations = Vec::with_capacity(h + 1);
        let mut actions = Vec::with_capacity(h);
        for k in 0..=h {
            let mut obs = Vec::with_capacity(n * ds);
            for &s in starts {
                let p = if k < h {
                    self.physical(s + k)
                } else {
                    self.physical(s + h - 1)
                };
                let src = if k < h { &self.states } else { &self.next_states };
                obs.extend_from_slice(&src[p * ds..(p + 1) * ds]);
            }
            observations.push(Array2::from_shape_vec((n, ds), obs).unwrap());
            if k < h {
                let mut act = Vec::with_capacity(n * da);
                for &s in starts {
                    let p = self.physical(s + k);
                    act.extend_from_slice(&self.actions[p * da..(p + 1) * da]);
                }
                actions.push(Array2::from_shape_vec((n, da), act).unwrap());
            }
        }
        WindowBatch {
            observations,
            actions,
        }
    }
}

/// Secondary store of fixed-length contiguous segments, filled as
/// transitions arrive. It holds the same windows that
/// [`ReplayBuffer::window_starts`] recovers from the primary buffer.
#[derive(Clone, Debug)]
pub struct SegmentBuffer<T> {
    horizon: usize,
    capacity: usize,
    pending: VecDeque<Transition<T>>,
    segments: VecDeque<Vec<Transition<T>>>,
}

impl<T: Scalar> SegmentBuffer<T> {
    pub fn new(horizon: usize, capacity: usize) -> Self {
        assert!(horizon > 0 && capacity > 0);
        Self {
            horizon,
            capacity,
            pending: VecDeque::with_capacity(horizon),
            segments: VecDeque::new(),
        }
    }

    pub fn observe(&mut self, t: &Transition<T>) {
        self.pending.push_back(t.clone());
        if self.pending.len() > self.horizon {
            self.pending.pop_front();
        }
        if self.pending.len() == self.horizon {
            if self.segments.len() == self.capacity {
                self.segments.pop_front();
            }
            self.segments.push_back(self.pending.iter().cloned().collect());
        }
        if t.ends_episode() {
            self.pending.clear();
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = &Vec<Transition<T>>> {
        self.segments.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn previous_actions_follow_episodes() {
        let mut b = ReplayBuffer::<f64>::new(4, 1, 1);
        for i in 0..6 {
            let done = i == 2;
            b.push(&Transition::new(vec![i as f64], vec![10.0 + i as f64], 0.0, vec![i as f64 + 1.0], done))
                .unwrap();
        }
        let mut rng = crate::rng::seeded(0);
        for _ in 0..50 {
            let (batch, prev) = b.sample_with_previous(3, &mut rng).unwrap();
            for r in 0..3 {
                let s = batch.states[[r, 0]] as usize;
                // state 3 starts an episode; the predecessor of 2 was evicted
                let expect = if s <= 3 { 0.0 } else { 10.0 + s as f64 - 1.0 };
                assert_eq!(prev[[r, 0]], expect, "state {s}");
            }
        }
        let mut a = crate::rng::seeded(9);
        let mut c = crate::rng::seeded(9);
        assert_eq!(b.sample(3, &mut a).unwrap(), b.sample_with_previous(3, &mut c).unwrap().0);
    }
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn tr(x: f64) -> Transition<f64> {
        Transition::new(vec![x, x + 0.5], vec![x], -x, vec![x + 1.0, x + 1.5], false)
    }

    #[test]
    fn push_to_empty_buffer() {
        let mut b = ReplayBuffer::new(3, 2, 1);
        b.push(&tr(0.0)).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn overflow_evicts_oldest() {
        let mut b = ReplayBuffer::new(3, 2, 1);
        for i in 0..4 {
            b.push(&tr(i as f64)).unwrap();
        }
        assert_eq!(b.len(), 3);
        let stored: Vec<f64> = b.iter().map(|t| t.action[0]).collect();
        assert_eq!(stored, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn wrong_action_dimension_is_rejected() {
        let mut b = ReplayBuffer::new(3, 2, 1);
        let mut t = tr(0.0);
        t.action.push(0.0);
        assert!(matches!(b.push(&t), Err(SrlError::Dimension { .. })));
        assert!(b.is_empty());
    }

    #[test]
    fn sampling_from_single_item() {
        let mut b = ReplayBuffer::new(3, 2, 1);
        b.push(&tr(7.0)).unwrap();
        let batch = b.sample(1, &mut seeded(0)).unwrap();
        assert_eq!(batch.to_transitions()[0], tr(7.0));
    }

    #[test]
    fn undersized_buffer_refuses_to_sample() {
        let mut b = ReplayBuffer::new(10, 2, 1);
        b.push(&tr(0.0)).unwrap();
        assert!(matches!(
            b.sample(2, &mut seeded(0)),
            Err(SrlError::InsufficientData { available: 1, requested: 2 })
        ));
    }

    #[test]
    fn same_seed_same_batch() {
        let mut b = ReplayBuffer::new(100, 2, 1);
        for i in 0..50 {
            b.push(&tr(i as f64)).unwrap();
        }
        let x = b.sample(16, &mut seeded(9)).unwrap();
        let y = b.sample(16, &mut seeded(9)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn sampling_frequencies_are_uniform() {
        // Pearson chi-square over 10^4 slots and ~10^5 draws; the statistic
        // has mean df and standard deviation sqrt(2 df).
        let items = 10_000;
        let mut b = ReplayBuffer::new(items, 2, 1);
        for i in 0..items {
            b.push(&tr(i as f64)).unwrap();
        }
        let mut rng = seeded(2024);
        let mut counts = vec![0u32; items];
        let batches = 400;
        for _ in 0..batches {
            for p in b.sample_indices(256, &mut rng) {
                counts[p] += 1;
            }
        }
        let draws = (batches * 256) as f64;
        let expected = draws / items as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let df = (items - 1) as f64;
        assert!((chi2 - df).abs() < 4.0 * (2.0 * df).sqrt(), "chi2 {chi2}");
    }

    fn episode_stream(lengths: &[usize]) -> Vec<Transition<f64>> {
        let mut out = Vec::new();
        let mut x = 0.0;
        for &len in lengths {
            for k in 0..len {
                let t = tr(x).with_truncated(k + 1 == len);
                out.push(t);
                x += 1.0;
            }
        }
        out
    }

    #[test]
    fn windows_never_cross_episodes() {
        let mut b = ReplayBuffer::new(100, 2, 1);
        for t in episode_stream(&[3, 7, 2]) {
            b.push(&t).unwrap();
        }
        assert_eq!(b.window_starts(5), vec![3, 4, 5]);
        assert!(b.window(0, 5).is_none());
    }

    #[test]
    fn segment_buffer_matches_primary_windows() {
        let h = 5;
        let stream = episode_stream(&[12, 4, 9, 5, 20]);
        let mut primary = ReplayBuffer::new(1000, 2, 1);
        let mut secondary = SegmentBuffer::new(h, 1000);
        for t in &stream {
            primary.push(t).unwrap();
            secondary.observe(t);
        }
        let from_primary: Vec<Vec<Transition<f64>>> = primary
            .window_starts(h)
            .into_iter()
            .map(|s| primary.window(s, h).unwrap())
            .collect();
        let from_secondary: Vec<Vec<Transition<f64>>> = secondary.segments().cloned().collect();
        assert_eq!(from_primary, from_secondary);
    }

    #[test]
    fn window_batch_layout() {
        let mut b = ReplayBuffer::new(100, 2, 1);
        for t in episode_stream(&[30]) {
            b.push(&t).unwrap();
        }
        let w = b.sample_windows(4, 3, &mut seeded(1)).unwrap();
        assert_eq!(w.observations.len(), 4);
        assert_eq!(w.actions.len(), 3);
        for i in 0..4 {
            // obs at offset k+1 is the successor of obs at k in this stream
            for k in 0..3 {
                assert_eq!(w.observations[k + 1][[i, 0]], w.observations[k][[i, 0]] + 1.0);
                assert_eq!(w.actions[k][[i, 0]], w.observations[k][[i, 0]]);
            }
        }
    }

    proptest! {
        #[test]
        fn fifo_keeps_last_capacity_items(cap in 1usize..20, k in 0usize..60) {
            let mut b = ReplayBuffer::new(cap, 2, 1);
            for i in 0..k {
                b.push(&tr(i as f64)).unwrap();
            }
            let stored: Vec<f64> = b.iter().map(|t| t.action[0]).collect();
            let expected: Vec<f64> = (k.saturating_sub(cap)..k).map(|i| i as f64).collect();
            prop_assert_eq!(stored, expected);
        }
    }
}
