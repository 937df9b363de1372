use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{estimate_draws, estimate_stratified, AnnotateError, Annotator, LabelCache};
use crate::cost::{self, CostParams, Requirement, SampleFootprint};
use crate::estimate::{stratified_stopping_variance, Estimate, EstimateError};
use crate::kg::{Frame, KnowledgeGraph};
use crate::rng;
use crate::sampling::{
    rcs_draw, srs_draw_excluding, twcs_draw, wcs_draw, DesignKind, DrawBatch, SamplingDesign, SamplingError,
};
use crate::stratify::{allocate, cum_sqrt_f, StratifyError};

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Stratify(#[from] StratifyError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error("archive was written for graph {expected}, but this graph is {found}")]
    Checksum { expected: String, found: String },
    #[error("archive version {found} is not supported (expected {ARCHIVE_VERSION})")]
    Version { found: u32 },
    #[error("position {0} was not requested by the pending batch")]
    Unrequested(usize),
    #[error("session aborted: {0}")]
    Aborted(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Sampling,
    AwaitingAnnotations,
    Satisfied,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub design: SamplingDesign,
    pub requirement: Requirement,
    pub cost: CostParams,
    pub seed: u64,
    /// Primary units per batch: triples for SRS, cluster draws otherwise.
    pub batch_size: usize,
    /// Units required before the stopping rule may fire.
    pub min_units: usize,
    pub max_batches: usize,
}

impl SessionConfig {
    pub fn new(design: SamplingDesign, requirement: Requirement, cost: CostParams, seed: u64) -> Self {
        SessionConfig { design, requirement, cost, seed, batch_size: 10, min_units: 30, max_batches: 100_000 }
    }

    pub fn validate(&self, g: &KnowledgeGraph) -> Result<(), SessionError> {
        self.design.validate()?;
        if self.batch_size == 0 {
            return Err(SessionError::Config("batch size must be at least 1".into()));
        }
        if self.max_batches == 0 {
            return Err(SessionError::Config("max batches must be at least 1".into()));
        }
        if let SamplingDesign::StratifiedTwcs { strata, .. } = &self.design {
            if strata.membership.len() != g.cluster_count() {
                return Err(SessionError::Config(format!(
                    "strata cover {} clusters but the graph has {}",
                    strata.membership.len(),
                    g.cluster_count()
                )));
            }
        }
        Ok(())
    }
}

/// A design as a user states it: a kind, plus `m` and a stratum count
/// where the kind takes them. Strata are cut by cumulative √F on size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata: Option<usize>,
}

impl DesignSpec {
    pub fn resolve(&self, g: &KnowledgeGraph) -> Result<SamplingDesign, SessionError> {
        let kind = self.kind.as_str();
        let needs_m = matches!(self.kind, DesignKind::Twcs | DesignKind::StratifiedTwcs);
        let m = match (needs_m, self.m) {
            (true, Some(m)) if m >= 1 => m,
            (true, _) => return Err(SessionError::Config(format!("{kind} needs a second-stage size m >= 1"))),
            (false, Some(_)) => {
                return Err(SessionError::Config(format!("m only applies to twcs designs, not {kind}")))
            }
            (false, None) => 0,
        };
        if self.strata.is_some() && self.kind != DesignKind::StratifiedTwcs {
            return Err(SessionError::Config(format!("strata only apply to stratified_twcs, not {kind}")));
        }
        Ok(match self.kind {
            DesignKind::Srs => SamplingDesign::Srs,
            DesignKind::Rcs => SamplingDesign::Rcs,
            DesignKind::Wcs => SamplingDesign::Wcs,
            DesignKind::Twcs => SamplingDesign::Twcs { m },
            DesignKind::StratifiedTwcs => {
                let h =
                    self.strata.ok_or_else(|| SessionError::Config("stratified_twcs needs a stratum count".into()))?;
                SamplingDesign::StratifiedTwcs { m, strata: cum_sqrt_f(g, h)? }
            }
        })
    }
}

/// Work done and its modeled price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub footprint: SampleFootprint,
    pub seconds: f64,
    pub hours: f64,
    pub units: usize,
    pub batches: usize,
}

impl CostReport {
    pub fn new(footprint: SampleFootprint, cp: CostParams, units: usize, batches: usize) -> Self {
        let seconds = cost::cost(footprint, cp);
        CostReport { footprint, seconds, hours: cost::hours(seconds), units, batches }
    }
}

/// Everything needed to rebuild a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionArchive {
    pub version: u32,
    pub id: String,
    pub graph_checksum: String,
    pub config: SessionConfig,
    pub status: Status,
    pub abort_reason: Option<String>,
    pub batches: Vec<DrawBatch>,
    pub pending: Option<DrawBatch>,
    /// Every collected label as `(position, label)`, sorted by position.
    pub labels: Vec<(usize, bool)>,
}

impl SessionArchive {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SessionError> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        let a: SessionArchive = serde_json::from_slice(&std::fs::read(path)?)?;
        if a.version != ARCHIVE_VERSION {
            return Err(SessionError::Version { found: a.version });
        }
        Ok(a)
    }
}

/// A static evaluation in progress.
///
/// Drive it with [`Session::run`], or step by step: [`Session::step`]
/// draws a batch, [`Session::pending_requests`] lists the triples still
/// unlabelled, and [`Session::submit`] feeds labels back. A batch is folded
/// into the estimate only once all of its triples are labelled.
#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    graph_checksum: String,
    config: SessionConfig,
    batches: Vec<DrawBatch>,
    pending: Option<DrawBatch>,
    cache: LabelCache,
    estimate: Option<Estimate>,
    strata: Vec<Estimate>,
    status: Status,
    abort_reason: Option<String>,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        g: &KnowledgeGraph,
        graph_checksum: impl Into<String>,
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        config.validate(g)?;
        Ok(Session {
            id: id.into(),
            graph_checksum: graph_checksum.into(),
            config,
            batches: Vec::new(),
            pending: None,
            cache: LabelCache::new(),
            estimate: None,
            strata: Vec::new(),
            status: Status::Sampling,
            abort_reason: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn abort_reason(&self) -> Option<&str> {
        self.abort_reason.as_deref()
    }

    pub fn estimate(&self) -> Option<&Estimate> {
        self.estimate.as_ref()
    }

    /// Per-stratum estimates of a stratified design.
    pub fn stratum_estimates(&self) -> &[Estimate] {
        &self.strata
    }

    pub fn batches(&self) -> &[DrawBatch] {
        &self.batches
    }

    pub fn pending(&self) -> Option<&DrawBatch> {
        self.pending.as_ref()
    }

    pub fn cache(&self) -> &LabelCache {
        &self.cache
    }

    pub fn footprint(&self) -> SampleFootprint {
        self.cache.footprint()
    }

    pub fn units(&self) -> usize {
        self.estimate.as_ref().map_or(0, |e| e.n_units)
    }

    pub fn cost_report(&self) -> CostReport {
        CostReport::new(self.footprint(), self.config.cost, self.units(), self.batches.len())
    }

    /// Margin of error the stopping rule compares against `epsilon`.
    pub fn stopping_moe(&self) -> f64 {
        let Some(e) = &self.estimate else { return f64::INFINITY };
        if self.strata.is_empty() {
            return e.stopping_moe();
        }
        let SamplingDesign::StratifiedTwcs { strata, .. } = &self.config.design else { unreachable!() };
        let pairs: Vec<(f64, &Estimate)> = strata.weights.iter().copied().zip(&self.strata).collect();
        self.config.requirement.z() * stratified_stopping_variance(&pairs).sqrt()
    }

    pub fn abort(&mut self, reason: impl Into<String>) {
        self.status = Status::Aborted;
        self.abort_reason = Some(reason.into());
    }

    /// Advance as far as possible without labels: draw the next batch if
    /// none is pending, and fold it in right away if the cache already
    /// answers every triple.
    pub fn step<F: Frame + ?Sized>(&mut self, frame: &F) -> Result<Status, SessionError> {
        match self.status {
            Status::Satisfied | Status::AwaitingAnnotations => return Ok(self.status),
            Status::Aborted => {
                self.status = Status::Sampling;
                self.abort_reason = None;
            }
            Status::Sampling => {}
        }
        if self.pending.is_none() {
            if self.batches.len() >= self.config.max_batches {
                self.abort(format!("stopping rule not met after {} batches", self.batches.len()));
                return Ok(self.status);
            }
            let batch = self.draw(frame)?;
            if batch.draws.is_empty() {
                self.abort("sampling frame exhausted before the stopping rule was met");
                return Ok(self.status);
            }
            self.pending = Some(batch);
        }
        self.status = Status::AwaitingAnnotations;
        self.try_complete(frame)
    }

    /// Triples of the pending batch that still need a label.
    pub fn pending_requests(&self) -> Vec<usize> {
        self.pending.as_ref().map_or_else(Vec::new, |b| self.cache.missing(b.draws.iter()))
    }

    /// Record labels for pending triples. Labels for triples already known
    /// are ignored, which makes resubmission harmless.
    pub fn submit<F: Frame + ?Sized>(&mut self, frame: &F, labels: &[(usize, bool)]) -> Result<Status, SessionError> {
        let wanted: HashSet<usize> = self.pending.as_ref().map_or_else(HashSet::new, |b| b.positions().collect());
        if let Some(&(t, _)) = labels.iter().find(|(t, _)| !wanted.contains(t) && !self.cache.contains(*t)) {
            return Err(SessionError::Unrequested(t));
        }
        for &(t, l) in labels {
            self.cache.insert(frame.graph(), t, l);
        }
        if self.status == Status::AwaitingAnnotations {
            self.try_complete(frame)
        } else {
            Ok(self.status)
        }
    }

    /// Run to completion against `annotator`. A satisfied session returns at once.
    pub fn run<F: Frame + ?Sized>(
        &mut self,
        frame: &F,
        annotator: &mut dyn Annotator,
    ) -> Result<&Estimate, SessionError> {
        loop {
            match self.step(frame)? {
                Status::Satisfied => break,
                Status::Aborted => return Err(SessionError::Aborted(self.abort_reason.clone().unwrap_or_default())),
                Status::Sampling => continue,
                Status::AwaitingAnnotations => {
                    let asked = self.pending_requests();
                    let got = match annotator.annotate(frame.graph(), &asked) {
                        Ok(got) if got.len() == asked.len() => got,
                        Ok(got) => {
                            let e = AnnotateError::Count { asked: asked.len(), got: got.len() };
                            self.abort(e.to_string());
                            return Err(e.into());
                        }
                        Err(e) => {
                            self.abort(e.to_string());
                            return Err(e.into());
                        }
                    };
                    let labels: Vec<(usize, bool)> = asked.into_iter().zip(got).collect();
                    self.submit(frame, &labels)?;
                }
            }
        }
        Ok(self.estimate.as_ref().expect("satisfied sessions have an estimate"))
    }

    fn draw<F: Frame + ?Sized>(&self, frame: &F) -> Result<DrawBatch, SessionError> {
        let c = &self.config;
        let b = self.batches.len() as u64;
        let n = c.batch_size;
        Ok(match &c.design {
            SamplingDesign::Srs => {
                let taken: HashSet<usize> = self.batches.iter().flat_map(|b| b.positions()).collect();
                srs_draw_excluding(frame, n, c.seed, b, &taken)
            }
            SamplingDesign::Rcs => rcs_draw(frame, n, c.seed, b)?,
            SamplingDesign::Wcs => wcs_draw(frame, n, c.seed, b)?,
            SamplingDesign::Twcs { m } => twcs_draw(frame, n, *m, c.seed, b)?,
            SamplingDesign::StratifiedTwcs { m, strata } => {
                let g = frame.graph();
                let n = n.max(2 * strata.h);
                let alloc = if self.strata.is_empty() {
                    allocate(&strata.weights, n, None)?
                } else {
                    let sds: Vec<f64> =
                        self.strata.iter().map(|e| (e.n_units as f64 * e.stopping_variance()).sqrt()).collect();
                    allocate(&strata.weights, n, Some(&sds))?
                };
                let mut draws = Vec::with_capacity(n);
                for (h, frame_h) in strata.frames(g).iter().enumerate() {
                    if alloc[h] == 0 {
                        continue;
                    }
                    let part = twcs_draw(frame_h, alloc[h], *m, rng::derive(c.seed, &[h as u64]), b)?;
                    draws.extend(part.draws.into_iter().map(|mut d| {
                        d.stratum = Some(h);
                        d
                    }));
                }
                DrawBatch { design: DesignKind::StratifiedTwcs, m: Some(*m), draws, seed: c.seed, batch_index: b }
            }
        })
    }

    fn try_complete<F: Frame + ?Sized>(&mut self, frame: &F) -> Result<Status, SessionError> {
        let Some(batch) = self.pending.as_mut() else { return Ok(self.status) };
        if !self.cache.missing(batch.draws.iter()).is_empty() {
            return Ok(self.status);
        }
        self.cache.fill(&mut batch.draws);
        let batch = self.pending.take().expect("checked above");
        self.batches.push(batch);
        self.recompute(frame)?;
        let e = self.estimate.as_ref().expect("just computed");
        self.status = if e.n_units >= self.config.min_units && self.stopping_moe() <= self.config.requirement.epsilon {
            Status::Satisfied
        } else {
            Status::Sampling
        };
        Ok(self.status)
    }

    /// Rebuild the estimate from archived batches.
    fn recompute<F: Frame + ?Sized>(&mut self, frame: &F) -> Result<(), SessionError> {
        if self.batches.is_empty() {
            self.estimate = None;
            self.strata.clear();
            return Ok(());
        }
        let alpha = self.config.requirement.alpha;
        let draws: Vec<_> = self.batches.iter().flat_map(|b| b.draws.iter().cloned()).collect();
        match &self.config.design {
            SamplingDesign::StratifiedTwcs { strata, .. } => {
                let (est, parts) = estimate_stratified(frame.graph(), &strata.weights, &draws, alpha)?;
                self.estimate = Some(est);
                self.strata = parts;
            }
            d => self.estimate = Some(estimate_draws(d.kind(), frame, &draws, alpha)?),
        }
        Ok(())
    }

    pub fn to_archive(&self) -> SessionArchive {
        let mut labels: Vec<(usize, bool)> = self.cache.entries().collect();
        labels.sort_unstable();
        SessionArchive {
            version: ARCHIVE_VERSION,
            id: self.id.clone(),
            graph_checksum: self.graph_checksum.clone(),
            config: self.config.clone(),
            status: self.status,
            abort_reason: self.abort_reason.clone(),
            batches: self.batches.clone(),
            pending: self.pending.clone(),
            labels,
        }
    }
}

/// Rebuild a session from its archive. The graph must be the one the
/// archive was written for.
pub fn resume<F: Frame + ?Sized>(archive: SessionArchive, frame: &F) -> Result<Session, SessionError> {
    if archive.version != ARCHIVE_VERSION {
        return Err(SessionError::Version { found: archive.version });
    }
    let g = frame.graph();
    let found = g.checksum();
    if found != archive.graph_checksum {
        return Err(SessionError::Checksum { expected: archive.graph_checksum, found });
    }
    let mut s = Session::new(archive.id, g, archive.graph_checksum, archive.config)?;
    for (t, l) in archive.labels {
        s.cache.insert(g, t, l);
    }
    s.batches = archive.batches;
    s.pending = archive.pending;
    s.status = match archive.status {
        Status::Aborted if s.pending.is_some() => Status::AwaitingAnnotations,
        Status::Aborted => Status::Sampling,
        st => st,
    };
    s.recompute(frame)?;
    Ok(s)
}

/// Evaluate `frame` from scratch until the requirement is met.
pub fn run_static<F: Frame + ?Sized>(
    frame: &F,
    config: SessionConfig,
    annotator: &mut dyn Annotator,
) -> Result<(Estimate, CostReport, Session), SessionError> {
    let g = frame.graph();
    let id = format!("s{:016x}", rng::derive(config.seed, &[rng::tag::BATCH]));
    let mut s = Session::new(id, g, g.checksum(), config)?;
    let est = s.run(frame, annotator)?.clone();
    Ok((est, s.cost_report(), s))
}
