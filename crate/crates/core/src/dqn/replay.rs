use std::collections::VecDeque;

use rand::Rng;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T: Scalar> {
    pub state: Vec<T>,
    pub action: usize,
    pub reward: T,
    pub next_state: Vec<T>,
}

/// Fixed-capacity experience store; the oldest transition is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T: Scalar> {
    capacity: usize,
    entries: VecDeque<Transition<T>>,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, entries: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, t: Transition<T>) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition<T>> {
        if self.entries.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.entries[rng.random_range(0..self.entries.len())]).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::sim_rng;

    fn tr(i: usize) -> Transition<f64> {
        Transition { state: vec![i as f64], action: i % 9, reward: -(i as f64), next_state: vec![0.0] }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(tr(i));
        }
        assert_eq!(b.len(), 3);
        let kept: Vec<f64> = b.iter().map(|t| t.state[0]).collect();
        assert_eq!(kept, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling() {
        let mut b = ReplayBuffer::new(10);
        let mut rng = sim_rng(1, 0);
        assert!(b.sample(4, &mut rng).is_empty());
        for i in 0..10 {
            b.push(tr(i));
        }
        let s = b.sample(32, &mut rng);
        assert_eq!(s.len(), 32);
    }
}
