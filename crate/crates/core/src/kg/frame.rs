//! Sampling frames: the set of clusters a design draws from.
//!
//! A frame is either a contiguous run of clusters ([`Population`], used for
//! the whole graph, a graph prefix, or a single delta batch) or an explicit
//! list ([`Subset`], used for strata). Either way, a uniform triple index in
//! `0..triple_count()` maps to a cluster with probability proportional to its
//! size, which is how PPS draws are made.

use super::KnowledgeGraph;

pub trait Frame: Sync {
    fn graph(&self) -> &KnowledgeGraph;
    fn cluster_count(&self) -> usize;
    fn triple_count(&self) -> usize;
    /// Graph index of the `k`-th cluster in the frame.
    fn cluster(&self, k: usize) -> usize;
    /// Map a frame-local triple index to `(graph cluster index, index within cluster)`.
    fn locate(&self, t: usize) -> (usize, usize);

    fn size_of(&self, k: usize) -> usize {
        self.graph().cluster_size(self.cluster(k))
    }

    /// Graph cluster indices in frame order.
    fn cluster_indices(&self) -> Vec<usize> {
        (0..self.cluster_count()).map(|k| self.cluster(k)).collect()
    }
}

/// Clusters `start..end` of a graph.
#[derive(Debug, Clone, Copy)]
pub struct Population<'g> {
    graph: &'g KnowledgeGraph,
    start: usize,
    end: usize,
}

impl<'g> Population<'g> {
    pub fn new(graph: &'g KnowledgeGraph, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= graph.cluster_count(), "cluster range {start}..{end} out of bounds");
        Population { graph, start, end }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    /// Global triple positions covered by this frame.
    pub fn positions(&self) -> std::ops::Range<usize> {
        self.graph.offset(self.start)..self.graph.offset(self.end)
    }
}

impl Frame for Population<'_> {
    fn graph(&self) -> &KnowledgeGraph {
        self.graph
    }

    fn cluster_count(&self) -> usize {
        self.end - self.start
    }

    fn triple_count(&self) -> usize {
        self.graph.offset(self.end) - self.graph.offset(self.start)
    }

    fn cluster(&self, k: usize) -> usize {
        debug_assert!(k < self.cluster_count());
        self.start + k
    }

    fn locate(&self, t: usize) -> (usize, usize) {
        debug_assert!(t < self.triple_count());
        self.graph.locate(self.graph.offset(self.start) + t)
    }
}

/// An explicit list of clusters, e.g. one stratum.
#[derive(Debug, Clone)]
pub struct Subset<'g> {
    graph: &'g KnowledgeGraph,
    clusters: Vec<usize>,
    prefix: Vec<usize>,
}

impl<'g> Subset<'g> {
    pub fn new(graph: &'g KnowledgeGraph, clusters: Vec<usize>) -> Self {
        let mut prefix = Vec::with_capacity(clusters.len() + 1);
        prefix.push(0);
        let mut acc = 0;
        for &c in &clusters {
            acc += graph.cluster_size(c);
            prefix.push(acc);
        }
        Subset { graph, clusters, prefix }
    }

    pub fn clusters(&self) -> &[usize] {
        &self.clusters
    }
}

impl Frame for Subset<'_> {
    fn graph(&self) -> &KnowledgeGraph {
        self.graph
    }

    fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    fn triple_count(&self) -> usize {
        *self.prefix.last().unwrap()
    }

    fn cluster(&self, k: usize) -> usize {
        self.clusters[k]
    }

    fn locate(&self, t: usize) -> (usize, usize) {
        debug_assert!(t < self.triple_count());
        let k = self.prefix.partition_point(|&o| o <= t) - 1;
        (self.clusters[k], t - self.prefix[k])
    }
}
