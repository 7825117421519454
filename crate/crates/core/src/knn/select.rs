//! Per-query top-k bookkeeping for the screened search.
//!
//! Screening values are approximate. Every row whose screening value is
//! within the error margin of the current k-th best is kept as a candidate,
//! so the true k nearest rows always survive to the exact re-ranking step.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    value: f32,
    index: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Screening values are never NaN; total_cmp keeps the ordering total anyway.
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// How far above the current k-th screening value a row may be and still
/// belong to the exact top k.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Slack {
    Absolute(f32),
    Relative { factor: f32, floor: f32 },
}

impl Slack {
    fn limit(self, kth: f32) -> f32 {
        match self {
            Slack::Absolute(m) => kth + m,
            Slack::Relative { factor, floor } => kth * factor + floor,
        }
    }
}

pub(crate) struct Candidates {
    k: usize,
    slack: Slack,
    heap: BinaryHeap<Entry>,
    pool: Vec<Entry>,
    limit: f32,
    prune_at: usize,
}

impl Candidates {
    pub(crate) fn new(k: usize, slack: Slack) -> Self {
        Candidates {
            k,
            slack,
            heap: BinaryHeap::with_capacity(k + 1),
            pool: Vec::with_capacity(4 * k + 64),
            limit: f32::INFINITY,
            prune_at: 4 * k + 64,
        }
    }

    /// Offers screening values for consecutive rows starting at `first`.
    #[inline]
    pub(crate) fn offer_block(&mut self, first: usize, values: &[f32]) {
        for (offset, &value) in values.iter().enumerate() {
            if value <= self.limit {
                self.insert(Entry {
                    value,
                    index: (first + offset) as u32,
                });
            }
        }
    }

    #[cold]
    fn insert(&mut self, entry: Entry) {
        self.pool.push(entry);
        if self.heap.len() < self.k {
            self.heap.push(entry);
            if self.heap.len() == self.k {
                self.refresh_limit();
            }
        } else if entry < *self.heap.peek().expect("heap is full") {
            self.heap.pop();
            self.heap.push(entry);
            self.refresh_limit();
        }
        if self.pool.len() > self.prune_at {
            self.prune();
            // many near-ties: let the pool grow geometrically
            self.prune_at = self.prune_at.max(2 * self.pool.len());
        }
    }

    fn refresh_limit(&mut self) {
        let kth = self.heap.peek().expect("heap is full").value;
        self.limit = self.slack.limit(kth);
    }

    fn prune(&mut self) {
        let limit = self.limit;
        self.pool.retain(|e| e.value <= limit);
    }

    /// Rows that may belong to the exact top k, in ascending row order.
    pub(crate) fn finish(&mut self) -> impl Iterator<Item = usize> + '_ {
        self.prune();
        self.pool.iter().map(|e| e.index as usize)
    }
}
