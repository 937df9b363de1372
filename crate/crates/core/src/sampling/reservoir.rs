//! Weighted reservoir sampling (A-Res).
//!
//! Every item gets a key `k = u^{1/w}` with `u ~ U(0, 1)` and weight `w`; the
//! reservoir keeps the items with the largest keys. Keys are stored as
//! `ln(u) / w`, which orders identically and does not underflow for heavy
//! items. The smallest key sits at the top of a min-heap so each offer costs
//! `O(log n)`. Equal keys evict the older entry first.
//!
//! For graph clusters the weight is the cluster size and the uniform comes
//! from the stream `(seed, [RESERVOIR, cluster index])`, so reservoir
//! contents depend only on the seed and the sequence of clusters offered.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{second_stage, ClusterDraw, SamplingError};
use crate::kg::{DeltaBatch, Frame, KnowledgeGraph};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key {
    log_key: f64,
    seq: u64,
    slot: usize,
}

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, o: &Self) -> Ordering {
        self.log_key.total_cmp(&o.log_key).then(self.seq.cmp(&o.seq))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Log-key `ln(u)/w` for a uniform `u` in `(0, 1)`.
pub fn log_key(u: f64, weight: f64) -> f64 {
    u.ln() / weight
}

/// A generic A-Res reservoir over items of type `T`.
#[derive(Debug, Clone)]
pub struct AResReservoir<T> {
    capacity: usize,
    items: Vec<(T, f64)>,
    heap: BinaryHeap<Reverse<Key>>,
    seq: u64,
}

impl<T> AResReservoir<T> {
    pub fn new(capacity: usize) -> Result<Self, SamplingError> {
        if capacity == 0 {
            return Err(SamplingError::Capacity);
        }
        Ok(AResReservoir { capacity, items: Vec::with_capacity(capacity), heap: BinaryHeap::new(), seq: 0 })
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

    /// Smallest log-key held, if full.
    pub fn threshold(&self) -> Option<f64> {
        (self.items.len() == self.capacity).then(|| self.heap.peek().map(|k| k.0.log_key)).flatten()
    }

    /// Offer an item with a precomputed log-key.
    ///
    /// Returns `Ok(evicted)` when admitted (with the displaced item if the
    /// reservoir was full) and `Err(item)` when rejected.
    pub fn offer(&mut self, item: T, log_key: f64) -> Result<Option<T>, T> {
        self.seq += 1;
        if self.items.len() < self.capacity {
            let slot = self.items.len();
            self.items.push((item, log_key));
            self.heap.push(Reverse(Key { log_key, seq: self.seq, slot }));
            return Ok(None);
        }
        let min = self.heap.peek().expect("full reservoir").0;
        if log_key <= min.log_key {
            return Err(item);
        }
        self.heap.pop();
        let old = std::mem::replace(&mut self.items[min.slot], (item, log_key));
        self.heap.push(Reverse(Key { log_key, seq: self.seq, slot: min.slot }));
        Ok(Some(old.0))
    }

    /// Offer with weight `w` and a uniform drawn from `rng`.
    pub fn offer_weighted<R: Rng + ?Sized>(&mut self, item: T, weight: f64, rng: &mut R) -> Result<Option<T>, T> {
        let u: f64 = rng.random();
        // u = 0 has probability 2^-53; treat it as the smallest possible key
        self.offer(item, if u > 0.0 { log_key(u, weight) } else { f64::NEG_INFINITY })
    }

    pub fn items(&self) -> impl Iterator<Item = &T> {
        self.items.iter().map(|(t, _)| t)
    }

    pub fn items_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.items.iter_mut().map(|(t, _)| t)
    }

    pub fn keyed(&self) -> impl Iterator<Item = (&T, f64)> {
        self.items.iter().map(|(t, k)| (t, *k))
    }
}

/// A reservoir slot: a cluster, its second-stage subsample and labels once
/// annotated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirEntry {
    pub draw: ClusterDraw,
    pub log_key: f64,
}

impl ReservoirEntry {
    /// The A-Res key `u^{1/w}` in `(0, 1)`.
    pub fn key(&self) -> f64 {
        self.log_key.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    /// Graph cluster indices that entered the reservoir.
    pub admitted: Vec<usize>,
    pub evicted: Vec<ReservoirEntry>,
}

/// The reservoir of clusters used for incremental evaluation.
#[derive(Debug, Clone)]
pub struct ReservoirState {
    inner: AResReservoir<ReservoirEntry>,
    m: usize,
    seed: u64,
    clusters_seen: usize,
}

/// Log-key of graph cluster `c` under `seed`.
pub fn cluster_log_key(g: &KnowledgeGraph, c: usize, seed: u64) -> f64 {
    let u: f64 = rng::stream(seed, &[tag::RESERVOIR, c as u64]).random();
    if u > 0.0 {
        log_key(u, g.cluster_size(c) as f64)
    } else {
        f64::NEG_INFINITY
    }
}

/// All clusters of a frame with their log-keys, largest key first.
pub fn ares_ranking<F: Frame + ?Sized>(frame: &F, seed: u64) -> Vec<(usize, f64)> {
    let g = frame.graph();
    let mut ranked: Vec<(usize, f64)> = (0..frame.cluster_count())
        .map(|k| {
            let c = frame.cluster(k);
            (c, cluster_log_key(g, c, seed))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

impl ReservoirState {
    /// The `capacity` clusters of `frame` with the largest keys.
    pub fn seed<F: Frame + ?Sized>(frame: &F, capacity: usize, m: usize, seed: u64) -> Result<Self, SamplingError> {
        let ranked = ares_ranking(frame, seed);
        let take = capacity.min(ranked.len());
        Self::from_ranked(frame, &ranked[..take], capacity, m, seed)
    }

    /// Fill from an explicit, already ranked list of `(cluster, log_key)`.
    pub fn from_ranked<F: Frame + ?Sized>(
        frame: &F,
        ranked: &[(usize, f64)],
        capacity: usize,
        m: usize,
        seed: u64,
    ) -> Result<Self, SamplingError> {
        if m == 0 {
            return Err(SamplingError::BadM);
        }
        let mut st =
            ReservoirState { inner: AResReservoir::new(capacity)?, m, seed, clusters_seen: frame.cluster_count() };
        for &(c, k) in ranked {
            let draw = st.subsample(frame, c);
            let _ = st.inner.offer(ReservoirEntry { draw, log_key: k }, k);
        }
        Ok(st)
    }

    fn subsample<F: Frame + ?Sized>(&self, frame: &F, c: usize) -> ClusterDraw {
        let mut rng = rng::stream(self.seed, &[tag::SECOND_STAGE, c as u64]);
        second_stage(frame, c, self.m, &mut rng)
    }

    /// Offer clusters `clusters` of `g` in order.
    pub fn update(&mut self, g: &KnowledgeGraph, clusters: impl IntoIterator<Item = usize>) -> UpdateReport {
        let frame = g.population();
        let mut report = UpdateReport { admitted: Vec::new(), evicted: Vec::new() };
        for c in clusters {
            self.clusters_seen += 1;
            let k = cluster_log_key(g, c, self.seed);
            if self.inner.threshold().is_some_and(|t| k <= t) {
                continue;
            }
            let entry = ReservoirEntry { draw: self.subsample(&frame, c), log_key: k };
            if let Ok(evicted) = self.inner.offer(entry, k) {
                report.admitted.push(c);
                report.evicted.extend(evicted);
            }
        }
        report
    }

    /// Offer every group of `d`, looked up in `g` (which must already
    /// contain `d` in independent mode).
    pub fn update_with_delta(&mut self, g: &KnowledgeGraph, d: &DeltaBatch) -> UpdateReport {
        let clusters: Vec<usize> = d
            .groups()
            .iter()
            .map(|(e, _)| g.find_cluster(e, d.batch_id).expect("delta applied in independent mode"))
            .collect();
        self.update(g, clusters)
    }

    pub fn capacity(&self) -> usize {
        self.inner.capacity()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed_value(&self) -> u64 {
        self.seed
    }

    pub fn clusters_seen(&self) -> usize {
        self.clusters_seen
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ReservoirEntry> {
        self.inner.items()
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = &mut ReservoirEntry> {
        self.inner.items_mut()
    }

    /// Smallest key held, as `u^{1/w}`.
    pub fn min_key(&self) -> Option<f64> {
        self.inner.keyed().map(|(_, k)| k).min_by(f64::total_cmp).map(f64::exp)
    }

    pub fn entity_ids(&self) -> Vec<Arc<str>> {
        self.entries().map(|e| e.draw.entity_id.clone()).collect()
    }
}
