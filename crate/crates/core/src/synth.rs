//! Synthetic graphs and update streams.
//!
//! Cluster sizes follow a discretised lognormal, which gives the long right
//! tail typical of entity-centric graphs (many entities with a handful of
//! facts, a few with hundreds). Triples are placeholders: the estimators
//! only ever look at cluster structure and labels.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::kg::{DeltaBatch, EntityCluster, KnowledgeGraph, ObjectKind, Triple};
use crate::rng::{self, tag};

/// Lognormal cluster-size law, `size = max(1, round(X))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeLaw {
    pub mu: f64,
    pub sigma: f64,
    pub max: usize,
}

impl SizeLaw {
    /// Mean cluster size close to 9.2 with a heavy tail.
    pub const MOVIE_LIKE: SizeLaw = SizeLaw { mu: 1.42, sigma: 1.25, max: 2_000 };

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let x: f64 = LogNormal::new(self.mu, self.sigma).expect("valid lognormal").sample(rng);
        (x.round() as usize).clamp(1, self.max)
    }

    /// Draw sizes until their sum reaches `triples`; the last one is trimmed.
    pub fn sizes_for(&self, triples: usize, seed: u64) -> Vec<usize> {
        let mut rng = rng::stream(seed, &[tag::SYNTH, 0]);
        let mut out = Vec::new();
        let mut left = triples;
        while left > 0 {
            let s = self.sample(&mut rng).min(left);
            out.push(s);
            left -= s;
        }
        out
    }
}

fn cluster(entity: &Arc<str>, batch: u64, size: usize) -> EntityCluster {
    EntityCluster::new(entity.clone(), batch, triples(entity, size, 0)).expect("non-empty cluster")
}

fn triples(entity: &Arc<str>, size: usize, from: usize) -> Vec<Triple> {
    (from..from + size)
        .map(|j| Triple {
            subject: entity.clone(),
            predicate: format!("p{}", j % 17),
            object: format!("o{j}"),
            object_kind: ObjectKind::Data,
        })
        .collect()
}

/// A graph with the given cluster sizes and entity ids `e0, e1, …`.
pub fn graph_from_sizes(sizes: &[usize]) -> KnowledgeGraph {
    let clusters = sizes.iter().enumerate().map(|(i, &s)| cluster(&Arc::from(format!("e{i}")), 0, s)).collect();
    KnowledgeGraph::from_clusters(clusters).expect("at least one cluster")
}

/// A graph of about `triples` triples with sizes from `law`.
pub fn graph(law: SizeLaw, triples: usize, seed: u64) -> KnowledgeGraph {
    graph_from_sizes(&law.sizes_for(triples, seed))
}

/// An update of exactly `triples` triples.
///
/// A share `enrich` of the groups extends entities already in `g` (each at
/// most once per batch); the rest introduce fresh entities.
pub fn delta(
    g: &KnowledgeGraph,
    batch_id: u64,
    law: SizeLaw,
    triples_total: usize,
    enrich: f64,
    seed: u64,
) -> DeltaBatch {
    let mut rng = rng::stream(seed, &[tag::SYNTH, batch_id, 1]);
    let mut used = std::collections::HashSet::new();
    let mut groups = Vec::new();
    let mut left = triples_total;
    let mut fresh = 0usize;
    while left > 0 {
        let size = law.sample(&mut rng).min(left);
        left -= size;
        let existing = if rng.random::<f64>() < enrich {
            let c = rng.random_range(0..g.cluster_count());
            let e = g.cluster(c).entity_id().clone();
            used.insert(e.clone()).then_some(e)
        } else {
            None
        };
        let entity = existing.unwrap_or_else(|| {
            fresh += 1;
            Arc::from(format!("d{batch_id}_{fresh}"))
        });
        groups.push((entity.clone(), triples(&entity, size, 100_000)));
    }
    DeltaBatch::from_groups(batch_id, groups).expect("valid groups")
}
