use rand::Rng;

use crate::sim::Observation;
use crate::{Error, Result};

/// Binary sum tree over a fixed number of leaves. Every internal node holds
/// the sum of its children, so prefix-sum search and updates are O(log n).
#[derive(Clone, Debug)]
pub struct SumTree {
    leaves: usize,
    base: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(leaves: usize) -> Self {
        let base = leaves.max(1).next_power_of_two();
        Self {
            leaves,
            base,
            nodes: vec![0.0; 2 * base],
        }
    }

    pub fn len(&self) -> usize {
        self.leaves
    }

    pub fn is_empty(&self) -> bool {
        self.leaves == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.base + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        assert!(i < self.leaves, "leaf {i} out of range");
        let mut n = self.base + i;
        self.nodes[n] = value;
        while n > 1 {
            n /= 2;
            self.nodes[n] = self.nodes[2 * n] + self.nodes[2 * n + 1];
        }
    }

    /// Leaf whose cumulative range contains `mass`. Never returns an empty
    /// leaf while the total is positive.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut n = 1;
        while n < self.base {
            let left = 2 * n;
            if mass < self.nodes[left] || self.nodes[left + 1] <= 0.0 {
                n = left;
            } else {
                mass -= self.nodes[left];
                n = left + 1;
            }
        }
        n - self.base
    }

    /// Internal nodes equal the sum of their children.
    pub fn is_consistent(&self) -> bool {
        (1..self.base).all(|n| self.nodes[n] == self.nodes[2 * n] + self.nodes[2 * n + 1])
    }
}

/// `action` is the unshaped policy output in normalised units.
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: Observation,
    pub action: [f32; 2],
    pub reward: f32,
    pub next: Observation,
    pub terminal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub indices: Vec<usize>,
    /// Importance weights, normalised so the largest in the batch is 1.
    pub weights: Vec<f64>,
}

/// `(N·P)^−β`, the importance weight of an item drawn with probability `P`
/// from `N`.
pub fn importance_weight(p: f64, n: usize, beta: f64) -> f64 {
    (n as f64 * p).powf(-beta)
}

/// Ring buffer of transitions sampled in proportion to `priority^α`.
#[derive(Clone, Debug)]
pub struct PrioritizedReplay {
    items: Vec<Transition>,
    next: usize,
    capacity: usize,
    tree: SumTree,
    alpha: f64,
    warmup: usize,
    max_priority: f64,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize, alpha: f64, warmup: usize) -> Self {
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            capacity,
            tree: SumTree::new(capacity),
            alpha,
            warmup,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Largest priority seen so far; new transitions enter with it.
    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    pub fn push(&mut self, t: Transition) -> usize {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[slot] = t;
        }
        self.tree.set(slot, self.max_priority.powf(self.alpha));
        self.next = (self.next + 1) % self.capacity;
        slot
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    pub fn ready(&self) -> bool {
        self.items.len() > self.warmup
    }

    /// Stratified draw of `k` indices: the priority mass is cut into `k`
    /// equal segments and one index is drawn from each.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, beta: f64, rng: &mut R) -> Result<Sample> {
        if !self.ready() {
            return Err(Error::NotWarmedUp {
                len: self.items.len(),
                warmup: self.warmup,
            });
        }
        let total = self.tree.total();
        let seg = total / k as f64;
        let n = self.items.len();
        let indices: Vec<usize> = (0..k)
            .map(|i| {
                let u = seg * (i as f64 + rng.random::<f64>());
                self.tree.find(u.min(total)).min(n - 1)
            })
            .collect();
        let raw: Vec<f64> = indices
            .iter()
            .map(|&i| importance_weight(self.probability(i), n, beta))
            .collect();
        let max = raw.iter().cloned().fold(0.0, f64::max);
        Ok(Sample {
            weights: raw.iter().map(|w| w / max).collect(),
            indices,
        })
    }

    /// Sets raw priorities (already including the ε floor).
    pub fn update_priorities(&mut self, indices: &[usize], priorities: &[f64]) {
        for (&i, &p) in indices.iter().zip(priorities) {
            debug_assert!(p > 0.0 && p.is_finite());
            self.max_priority = self.max_priority.max(p);
            self.tree.set(i, p.powf(self.alpha));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn find_walks_cumulative_ranges() {
        let mut t = SumTree::new(3);
        t.set(0, 1.0);
        t.set(1, 0.0);
        t.set(2, 3.0);
        assert_eq!(t.total(), 4.0);
        assert_eq!(t.find(0.5), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(3.99), 2);
        // Mass at or past the total still lands on a non-empty leaf.
        assert_eq!(t.find(4.0), 2);
    }

    #[test]
    fn weight_ratio_is_probability_ratio_at_full_correction() {
        let (p_min, p_max) = (0.25, 0.75);
        let ratio = importance_weight(p_min, 2, 1.0) / importance_weight(p_max, 2, 1.0);
        assert!((ratio - p_max / p_min).abs() < 1e-12);
    }
}
