//! The iterative evaluation loop: draw a batch, collect labels, re-estimate,
//! stop once the margin of error is small enough.
//!
//! Labels come from an [`Annotator`]. Every position is requested at most
//! once per [`LabelCache`]; repeated cluster draws reuse cached labels, so
//! the cost footprint counts unique work while the estimators still count
//! each draw.

mod backend;
mod session;

use std::collections::{HashMap, HashSet};

use crate::cost::SampleFootprint;
use crate::estimate::{est_rcs, est_srs, est_stratified, est_twcs, est_wcs, Estimate, EstimateError};
use crate::kg::{Frame, KnowledgeGraph};
use crate::sampling::{ClusterDraw, DesignKind};

pub use backend::{FileAnnotator, OracleAnnotator};
pub use session::{
    resume, run_static, CostReport, DesignSpec, Session, SessionArchive, SessionConfig, SessionError, Status,
    ARCHIVE_VERSION,
};

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("annotator timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("annotator returned {got} labels for {asked} requests")]
    Count { asked: usize, got: usize },
    #[error("annotator failed: {0}")]
    Failed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Source of triple labels. One label per requested position, in order.
pub trait Annotator {
    fn annotate(&mut self, g: &KnowledgeGraph, positions: &[usize]) -> Result<Vec<bool>, AnnotateError>;
}

/// Labels collected so far, plus the entities they touched.
#[derive(Debug, Clone, Default)]
pub struct LabelCache {
    labels: HashMap<usize, bool>,
    entities: HashSet<u32>,
}

impl LabelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, position: usize) -> Option<bool> {
        self.labels.get(&position).copied()
    }

    pub fn contains(&self, position: usize) -> bool {
        self.labels.contains_key(&position)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Record a label. Returns false if the position was already known.
    pub fn insert(&mut self, g: &KnowledgeGraph, position: usize, label: bool) -> bool {
        if self.labels.contains_key(&position) {
            return false;
        }
        self.labels.insert(position, label);
        self.entities.insert(g.entity_ordinal(g.locate(position).0));
        true
    }

    pub fn footprint(&self) -> SampleFootprint {
        SampleFootprint { unique_entities: self.entities.len(), triples: self.labels.len() }
    }

    /// Positions of `draws` with no cached label, deduplicated, in first-seen order.
    pub fn missing<'a>(&self, draws: impl IntoIterator<Item = &'a ClusterDraw>) -> Vec<usize> {
        let mut seen = HashSet::new();
        draws
            .into_iter()
            .flat_map(|d| d.drawn.iter().copied())
            .filter(|&t| !self.contains(t) && seen.insert(t))
            .collect()
    }

    /// Fill `labels` of every draw whose positions are all cached.
    pub fn fill(&self, draws: &mut [ClusterDraw]) {
        for d in draws {
            if d.labels.is_none() {
                d.labels = d.drawn.iter().map(|&t| self.get(t)).collect();
            }
        }
    }

    /// Request every missing label from `annotator` and fill the draws.
    /// Returns the footprint of the newly labelled work.
    pub fn annotate(
        &mut self,
        g: &KnowledgeGraph,
        draws: &mut [ClusterDraw],
        annotator: &mut dyn Annotator,
    ) -> Result<SampleFootprint, AnnotateError> {
        let before = self.footprint();
        let asked = self.missing(draws.iter());
        if !asked.is_empty() {
            let got = annotator.annotate(g, &asked)?;
            if got.len() != asked.len() {
                return Err(AnnotateError::Count { asked: asked.len(), got: got.len() });
            }
            for (&t, &l) in asked.iter().zip(&got) {
                self.insert(g, t, l);
            }
        }
        self.fill(draws);
        let after = self.footprint();
        Ok(SampleFootprint {
            unique_entities: after.unique_entities - before.unique_entities,
            triples: after.triples - before.triples,
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.labels.iter().map(|(&t, &l)| (t, l))
    }
}

/// Distinct entities and positions touched by `draws`.
pub fn footprint_of<'a>(g: &KnowledgeGraph, draws: impl IntoIterator<Item = &'a ClusterDraw>) -> SampleFootprint {
    let mut ents = HashSet::new();
    let mut pos = HashSet::new();
    for d in draws {
        ents.insert(g.entity_ordinal(d.cluster));
        pos.extend(d.drawn.iter().copied());
    }
    SampleFootprint { unique_entities: ents.len(), triples: pos.len() }
}

/// Estimate from labelled draws of a single (unstratified) design over `frame`.
pub fn estimate_draws<F: Frame + ?Sized>(
    design: DesignKind,
    frame: &F,
    draws: &[ClusterDraw],
    alpha: f64,
) -> Result<Estimate, EstimateError> {
    let n_triples = draws.iter().map(|d| d.drawn.len()).sum();
    let fp = footprint_of(frame.graph(), draws);
    let est = match design {
        DesignKind::Srs => {
            let labels: Vec<bool> = draws.iter().flat_map(|d| labels_of(d).iter().copied()).collect();
            est_srs(&labels, alpha)
        }
        DesignKind::Rcs => {
            let taus: Vec<usize> = draws.iter().map(correct_of).collect();
            let sizes: Vec<usize> = draws.iter().map(|d| d.cluster_size).collect();
            est_rcs(&taus, &sizes, frame.cluster_count(), frame.triple_count(), alpha)
        }
        DesignKind::Wcs => est_wcs(&accuracies(draws), n_triples, alpha),
        DesignKind::Twcs => est_twcs(&accuracies(draws), n_triples, alpha),
        DesignKind::StratifiedTwcs => {
            panic!("stratified draws need stratum weights; use estimate_stratified")
        }
    }?;
    Ok(est.with_footprint(fp))
}

/// Stratified TWCS estimate: one TWCS estimate per stratum, combined with
/// `weights`. Draws are routed by their `stratum` tag.
pub fn estimate_stratified(
    g: &KnowledgeGraph,
    weights: &[f64],
    draws: &[ClusterDraw],
    alpha: f64,
) -> Result<(Estimate, Vec<Estimate>), EstimateError> {
    let mut per: Vec<Vec<ClusterDraw>> = vec![Vec::new(); weights.len()];
    for d in draws {
        per[d.stratum.expect("stratified draw carries its stratum")].push(d.clone());
    }
    let parts: Vec<Estimate> = per
        .iter()
        .map(|ds| {
            if ds.is_empty() {
                return Ok(Estimate::new(0.0, f64::INFINITY, alpha, 0, 0));
            }
            let n_triples = ds.iter().map(|d| d.drawn.len()).sum();
            Ok(est_twcs(&accuracies(ds), n_triples, alpha)?.with_footprint(footprint_of(g, ds)))
        })
        .collect::<Result<_, EstimateError>>()?;
    let pairs: Vec<(f64, &Estimate)> = weights.iter().copied().zip(&parts).collect();
    let mut combined = est_stratified(&pairs, alpha)?;
    combined.footprint = footprint_of(g, draws);
    Ok((combined, parts))
}

fn labels_of(d: &ClusterDraw) -> &[bool] {
    d.labels.as_deref().expect("draw is labelled")
}

fn correct_of(d: &ClusterDraw) -> usize {
    labels_of(d).iter().filter(|&&l| l).count()
}

fn accuracies(draws: &[ClusterDraw]) -> Vec<f64> {
    draws.iter().map(|d| correct_of(d) as f64 / d.drawn.len() as f64).collect()
}
