//! The knowledge graph as a collection of entity clusters.
//!
//! A graph is a list of [`EntityCluster`]s. Every triple has a *position*:
//! its index in cluster-major order (`offset(cluster) + index within cluster`).
//! Labels, draws and annotation caches all speak in positions, so they stay
//! valid as long as the cluster list is only ever appended to, which is what
//! [`DeltaMode::Independent`] does.

mod frame;
mod parse;
mod snapshot;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use frame::{Frame, Population, Subset};
pub use parse::{ingest, ingest_labeled, parse_delta, parse_graph, parse_labeled_graph, read_delta, InputFormat};
pub use snapshot::{decode_snapshot, encode_snapshot, restore, snapshot, SNAPSHOT_VERSION};

/// Errors raised while building, parsing or persisting a graph.
#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("empty graph")]
    EmptyGraph,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("snapshot version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("snapshot checksum mismatch")]
    Checksum,
    #[error("malformed snapshot: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whether a triple's object names an entity or holds an atomic value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Entity,
    Data,
}

impl ObjectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectKind::Entity => "entity",
            ObjectKind::Data => "data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub subject: Arc<str>,
    pub predicate: String,
    pub object: String,
    pub object_kind: ObjectKind,
}

impl Triple {
    pub fn new(
        subject: impl Into<Arc<str>>,
        predicate: impl Into<String>,
        object: impl Into<String>,
        object_kind: ObjectKind,
    ) -> Self {
        Triple { subject: subject.into(), predicate: predicate.into(), object: object.into(), object_kind }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.predicate, self.object)
    }
}

/// All triples sharing one subject, in ingestion order.
///
/// `batch_id` is 0 for the base graph. Clusters appended in independent mode
/// carry the id of the delta batch that created them, so one entity can own
/// several clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityCluster {
    entity_id: Arc<str>,
    batch_id: u64,
    triples: Vec<Triple>,
}

impl EntityCluster {
    pub fn new(entity_id: impl Into<Arc<str>>, batch_id: u64, triples: Vec<Triple>) -> Result<Self, GraphError> {
        let entity_id = entity_id.into();
        if entity_id.is_empty() {
            return Err(GraphError::InvalidTriple("empty subject".into()));
        }
        if triples.is_empty() {
            return Err(GraphError::InvalidTriple(format!("cluster {entity_id} has no triples")));
        }
        if let Some(t) = triples.iter().find(|t| t.subject != entity_id) {
            return Err(GraphError::InvalidTriple(format!("triple {t} does not belong to cluster {entity_id}")));
        }
        Ok(EntityCluster { entity_id, batch_id, triples })
    }

    pub fn entity_id(&self) -> &Arc<str> {
        &self.entity_id
    }

    pub fn batch_id(&self) -> u64 {
        self.batch_id
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn size(&self) -> usize {
        self.triples.len()
    }
}

/// A batch of triple insertions grouped by subject.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeltaBatch {
    pub batch_id: u64,
    groups: Vec<(Arc<str>, Vec<Triple>)>,
}

impl DeltaBatch {
    pub fn new(batch_id: u64) -> Self {
        DeltaBatch { batch_id, groups: Vec::new() }
    }

    /// Build from groups; every group must be non-empty and share its subject.
    pub fn from_groups(batch_id: u64, groups: Vec<(Arc<str>, Vec<Triple>)>) -> Result<Self, GraphError> {
        for (e, ts) in &groups {
            // reuse the cluster invariants
            EntityCluster::new(e.clone(), batch_id, ts.clone())?;
        }
        Ok(DeltaBatch { batch_id, groups })
    }

    /// Group loose triples by subject, keeping first-appearance order.
    pub fn from_triples(batch_id: u64, triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut groups: Vec<(Arc<str>, Vec<Triple>)> = Vec::new();
        let mut at: HashMap<Arc<str>, usize> = HashMap::new();
        for t in triples {
            let slot = *at.entry(t.subject.clone()).or_insert_with(|| {
                groups.push((t.subject.clone(), Vec::new()));
                groups.len() - 1
            });
            groups[slot].1.push(t);
        }
        DeltaBatch { batch_id, groups }
    }

    pub fn groups(&self) -> &[(Arc<str>, Vec<Triple>)] {
        &self.groups
    }

    pub fn triple_count(&self) -> usize {
        self.groups.iter().map(|(_, ts)| ts.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// How a delta is folded into a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaMode {
    /// Append each group to the entity's base cluster, creating it if absent.
    Merge,
    /// Append each group as a fresh cluster tagged with the batch id.
    Independent,
}

/// Cluster identity: entity id plus the batch that created the cluster.
pub type ClusterKey = (Arc<str>, u64);

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    clusters: Vec<EntityCluster>,
    offsets: Vec<usize>,
    id_index: HashMap<ClusterKey, usize>,
    entity_ordinal: Vec<u32>,
    ordinals: HashMap<Arc<str>, u32>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.clusters == other.clusters
    }
}

impl Eq for KnowledgeGraph {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub clusters: usize,
    pub triples: usize,
    pub mean_cluster_size: f64,
    pub size_histogram: BTreeMap<usize, usize>,
}

impl KnowledgeGraph {
    /// Build a graph from clusters. Cluster keys must be unique.
    pub fn from_clusters(clusters: Vec<EntityCluster>) -> Result<Self, GraphError> {
        if clusters.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        let mut g = KnowledgeGraph {
            clusters: Vec::with_capacity(clusters.len()),
            offsets: vec![0],
            id_index: HashMap::with_capacity(clusters.len()),
            entity_ordinal: Vec::with_capacity(clusters.len()),
            ordinals: HashMap::new(),
        };
        for c in clusters {
            g.push_cluster(c)?;
        }
        Ok(g)
    }

    fn push_cluster(&mut self, c: EntityCluster) -> Result<(), GraphError> {
        let key = (c.entity_id.clone(), c.batch_id);
        if self.id_index.contains_key(&key) {
            return Err(GraphError::InvalidTriple(format!(
                "duplicate cluster {} in batch {}",
                c.entity_id, c.batch_id
            )));
        }
        let next = self.ordinals.len() as u32;
        let ord = *self.ordinals.entry(c.entity_id.clone()).or_insert(next);
        self.id_index.insert(key, self.clusters.len());
        self.entity_ordinal.push(ord);
        self.offsets.push(self.offsets.last().copied().unwrap_or(0) + c.size());
        self.clusters.push(c);
        Ok(())
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn triple_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Number of distinct entity ids (can be below the cluster count after
    /// independent-mode deltas).
    pub fn entity_count(&self) -> usize {
        self.ordinals.len()
    }

    pub fn clusters(&self) -> &[EntityCluster] {
        &self.clusters
    }

    pub fn cluster(&self, index: usize) -> &EntityCluster {
        &self.clusters[index]
    }

    pub fn cluster_size(&self, index: usize) -> usize {
        self.offsets[index + 1] - self.offsets[index]
    }

    /// Position of the first triple of `cluster`.
    pub fn offset(&self, cluster: usize) -> usize {
        self.offsets[cluster]
    }

    /// Prefix sums of cluster sizes, `len == cluster_count + 1`.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Map a triple position to `(cluster, index within cluster)`.
    pub fn locate(&self, position: usize) -> (usize, usize) {
        debug_assert!(position < self.triple_count());
        let cluster = self.offsets.partition_point(|&o| o <= position) - 1;
        (cluster, position - self.offsets[cluster])
    }

    pub fn triple(&self, position: usize) -> &Triple {
        let (c, j) = self.locate(position);
        &self.clusters[c].triples[j]
    }

    pub fn find_cluster(&self, entity_id: &str, batch_id: u64) -> Option<usize> {
        let key: (Arc<str>, u64) = (Arc::from(entity_id), batch_id);
        self.id_index.get(&key).copied()
    }

    /// Dense per-entity ordinal, shared by every cluster of the same entity.
    pub fn entity_ordinal(&self, cluster: usize) -> u32 {
        self.entity_ordinal[cluster]
    }

    pub fn population(&self) -> Population<'_> {
        Population::new(self, 0, self.cluster_count())
    }

    pub fn stats(&self) -> GraphStats {
        let mut size_histogram = BTreeMap::new();
        for i in 0..self.cluster_count() {
            *size_histogram.entry(self.cluster_size(i)).or_insert(0) += 1;
        }
        GraphStats {
            clusters: self.cluster_count(),
            triples: self.triple_count(),
            mean_cluster_size: self.triple_count() as f64 / self.cluster_count() as f64,
            size_histogram,
        }
    }

    /// Fold a delta into the graph, producing the next version.
    pub fn with_delta(mut self, delta: &DeltaBatch, mode: DeltaMode) -> Result<Self, GraphError> {
        match mode {
            DeltaMode::Independent => {
                for (e, ts) in &delta.groups {
                    self.push_cluster(EntityCluster::new(e.clone(), delta.batch_id, ts.clone())?)?;
                }
            }
            DeltaMode::Merge => {
                let mut touched = false;
                for (e, ts) in &delta.groups {
                    match self.id_index.get(&(e.clone(), 0)) {
                        Some(&i) => {
                            self.clusters[i].triples.extend(ts.iter().cloned());
                            touched = true;
                        }
                        None => self.push_cluster(EntityCluster::new(e.clone(), 0, ts.clone())?)?,
                    }
                }
                if touched {
                    self.rebuild_offsets();
                }
            }
        }
        Ok(self)
    }

    fn rebuild_offsets(&mut self) {
        self.offsets.clear();
        self.offsets.push(0);
        let mut acc = 0;
        for c in &self.clusters {
            acc += c.size();
            self.offsets.push(acc);
        }
    }

    /// Hex SHA-256 over the canonical snapshot body.
    pub fn checksum(&self) -> String {
        let body = snapshot::encode_body(self);
        hex(&Sha256::digest(&body))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
