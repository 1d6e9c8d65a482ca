use rand::Rng;

use super::STATE_DIM;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition<S> {
    pub state: [S; STATE_DIM],
    pub action: usize,
    pub reward: S,
    pub next_state: [S; STATE_DIM],
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    storage: Vec<T>,
    cursor: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, storage: Vec::with_capacity(capacity.min(1 << 16)), cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Index the next insertion will write to.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn push(&mut self, item: T) {
        if self.storage.len() < self.capacity {
            self.storage.push(item);
        } else {
            self.storage[self.cursor] = item;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn clear(&mut self) {
        self.storage.clear();
        self.cursor = 0;
    }

    /// Contents from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &T> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.cursor };
        self.storage[split..].iter().chain(&self.storage[..split])
    }

    /// `n` indices drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&T> {
        (0..n).map(|_| &self.storage[rng.random_range(0..self.storage.len())]).collect()
    }
}

impl<S: Scalar> Transition<S> {
    pub fn new(state: &[f64; STATE_DIM], action: usize, reward: f64, next: &[f64; STATE_DIM], terminal: bool) -> Self {
        Transition { state: state.map(S::of), action, reward: S::of(reward), next_state: next.map(S::of), terminal }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn ring_keeps_most_recent(capacity in 1usize..50, n in 0usize..200) {
            let mut buf = ReplayBuffer::new(capacity);
            for i in 0..n {
                buf.push(i);
            }
            let kept: Vec<usize> = buf.iter_oldest_first().copied().collect();
            let expected: Vec<usize> = (n.saturating_sub(capacity)..n).collect();
            prop_assert_eq!(kept, expected);
            prop_assert!(buf.len() <= capacity);
        }
    }

    #[test]
    fn clear_resets_cursor() {
        let mut buf = ReplayBuffer::new(3);
        (0..5).for_each(|i| buf.push(i));
        assert_eq!(buf.cursor(), 2);
        buf.clear();
        assert!(buf.is_empty());
        assert_eq!(buf.cursor(), 0);
    }
}
