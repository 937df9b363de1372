//! Accuracy tracking on a graph that grows in batches.
//!
//! The graph handed to the evaluators already holds every batch, appended
//! in independent mode, so the state after step `i` is the cluster prefix
//! `0..ends[i]` and the delta of step `i` is `ends[i-1]..ends[i]`.
//!
//! * [`RsEvaluator`] keeps an A-Res reservoir of clusters. The base sample
//!   is the top of the key ranking, consumed batch by batch until the
//!   requirement holds; its length fixes the capacity. On each update the
//!   new clusters are offered to the reservoir, newly admitted ones are
//!   annotated, and if the margin is still too wide, extra TWCS draws from
//!   the whole current graph are pooled with the reservoir for that step.
//! * [`SsEvaluator`] keeps one stratum per batch. Old strata are reused as
//!   they are; only the new batch is sampled, until the combined margin fits.
//! * [`BaselineEvaluator`] starts over at every step.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::cost::{self, CostParams, Requirement, SampleFootprint};
use crate::estimate::{est_stratified, est_twcs, stratified_stopping_variance, Estimate, EstimateError};
use crate::kg::{Frame, KnowledgeGraph, Population};
use crate::orchestrator::{footprint_of, AnnotateError, Annotator, LabelCache, Session, SessionConfig, SessionError};
use crate::rng::{self, tag};
use crate::sampling::reservoir::ares_ranking;
use crate::sampling::{twcs_draw, ClusterDraw, ReservoirState, SamplingDesign, SamplingError};

#[derive(Debug, thiserror::Error)]
pub enum EvolveError {
    #[error("invalid evolving setup: {0}")]
    Config(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error("every cluster of the base graph is in the sample and the requirement still fails")]
    Exhausted,
    #[error("step {0}: requirement not met after the iteration limit")]
    Unsatisfiable(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Rs,
    Ss,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Rs => "rs",
            Method::Ss => "ss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub requirement: Requirement,
    pub cost: CostParams,
    /// Second-stage size.
    pub m: usize,
    pub seed: u64,
    /// Clusters per batch of a from-scratch evaluation.
    pub batch_size: usize,
    pub min_units: usize,
    /// Upper bound on the draws added in one incremental iteration.
    pub batch_cap: usize,
    /// Re-draw the base stratum at every update (SS only).
    pub refresh_base: bool,
    pub max_iterations: usize,
}

impl EvolveConfig {
    pub fn new(requirement: Requirement, cost: CostParams, m: usize, seed: u64) -> Self {
        EvolveConfig {
            requirement,
            cost,
            m,
            seed,
            batch_size: 10,
            min_units: 30,
            batch_cap: 30,
            refresh_base: false,
            max_iterations: 10_000,
        }
    }

    fn session(&self, seed: u64) -> SessionConfig {
        let mut c = SessionConfig::new(SamplingDesign::Twcs { m: self.m }, self.requirement, self.cost, seed);
        c.batch_size = self.batch_size;
        c.min_units = self.min_units;
        c
    }

    fn target_variance(&self) -> f64 {
        let z = self.requirement.z();
        (self.requirement.epsilon / z).powi(2)
    }

    fn satisfied(&self, units: usize, stopping_variance: f64) -> bool {
        units >= self.min_units && self.requirement.z() * stopping_variance.sqrt() <= self.requirement.epsilon
    }
}

/// What one evaluation step produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: usize,
    pub clusters: usize,
    pub triples: usize,
    pub estimate: Estimate,
    /// Margin used by the stopping rule (zero variances floored).
    pub stopping_moe: f64,
    /// Work first done at this step.
    pub new_work: SampleFootprint,
    pub step_seconds: f64,
    pub cumulative_seconds: f64,
    /// Reservoir admissions (RS only).
    pub admitted: usize,
    /// Extra draws beyond the carried-over sample.
    pub added_units: usize,
}

fn annotate_draws(
    g: &KnowledgeGraph,
    cache: &mut LabelCache,
    draws: &mut [ClusterDraw],
    annotator: &mut dyn Annotator,
) -> Result<(), AnnotateError> {
    cache.annotate(g, draws, annotator).map(|_| ())
}

fn accuracy(d: &ClusterDraw) -> f64 {
    d.accuracy().expect("draw is labelled")
}

fn pooled_twcs<'a>(
    draws: impl Iterator<Item = &'a ClusterDraw>,
    alpha: f64,
    g: &KnowledgeGraph,
) -> Result<Estimate, EstimateError> {
    let draws: Vec<&ClusterDraw> = draws.collect();
    let accs: Vec<f64> = draws.iter().map(|d| accuracy(d)).collect();
    let n_triples = draws.iter().map(|d| d.drawn.len()).sum();
    Ok(est_twcs(&accs, n_triples, alpha)?.with_footprint(footprint_of(g, draws.iter().copied())))
}

/// Draws still needed to bring a per-draw variance `s2` under `headroom`
/// at weight `w`, given `n` draws so far. One round at most doubles the
/// sample, since `s2` from a handful of draws is mostly noise.
fn predicted_extra(n: usize, s2: f64, w: f64, headroom: f64, cap: usize) -> usize {
    let cap = cap.min(n.max(1));
    if headroom <= 0.0 || !s2.is_finite() {
        return cap;
    }
    let need = (w * w * s2 / headroom).ceil();
    let extra = if need.is_finite() { (need as usize).saturating_sub(n) } else { cap };
    extra.clamp(1, cap)
}

#[derive(Debug, Clone)]
struct Tally {
    cp: CostParams,
    before: SampleFootprint,
    cumulative: f64,
}

impl Tally {
    fn new(cp: CostParams) -> Self {
        Tally { cp, before: SampleFootprint::default(), cumulative: 0.0 }
    }

    /// Close a step whose total work is now `now`.
    fn close(&mut self, now: SampleFootprint) -> (SampleFootprint, f64, f64) {
        let new = SampleFootprint {
            unique_entities: now.unique_entities - self.before.unique_entities,
            triples: now.triples - self.before.triples,
        };
        self.before = now;
        let secs = cost::cost(new, self.cp);
        self.cumulative += secs;
        (new, secs, self.cumulative)
    }
}

fn check_end(g: &KnowledgeGraph, prev: usize, end: usize) -> Result<(), EvolveError> {
    if end < prev || end > g.cluster_count() {
        return Err(EvolveError::Config(format!("step end {end} must lie in {prev}..={}", g.cluster_count())));
    }
    Ok(())
}

/// Reservoir-based incremental evaluation.
#[derive(Debug, Clone)]
pub struct RsEvaluator {
    cfg: EvolveConfig,
    reservoir: ReservoirState,
    topups: Vec<ClusterDraw>,
    cache: LabelCache,
    tally: Tally,
    end: usize,
    step: usize,
}

impl RsEvaluator {
    /// Evaluate the base graph (clusters `0..base_end`) from the A-Res ranking.
    pub fn base(
        g: &KnowledgeGraph,
        base_end: usize,
        cfg: EvolveConfig,
        annotator: &mut dyn Annotator,
    ) -> Result<(Self, StepOutcome), EvolveError> {
        check_end(g, 0, base_end)?;
        if cfg.batch_size == 0 || cfg.m == 0 {
            return Err(EvolveError::Config("batch size and m must be positive".into()));
        }
        let frame = Population::new(g, 0, base_end);
        let ranked = ares_ranking(&frame, cfg.seed);
        let mut cache = LabelCache::new();
        let mut taken = 0;
        let reservoir = loop {
            if taken == ranked.len() {
                return Err(EvolveError::Exhausted);
            }
            taken = (taken + cfg.batch_size).min(ranked.len());
            let mut st = ReservoirState::from_ranked(&frame, &ranked[..taken], taken, cfg.m, cfg.seed)?;
            let mut draws: Vec<ClusterDraw> = st.entries().map(|e| e.draw.clone()).collect();
            annotate_draws(g, &mut cache, &mut draws, annotator)?;
            st.entries_mut().for_each(|e| cache.fill(std::slice::from_mut(&mut e.draw)));
            let est = pooled_twcs(st.entries().map(|e| &e.draw), cfg.requirement.alpha, g)?;
            if cfg.satisfied(est.n_units, est.stopping_variance()) {
                break st;
            }
        };
        let mut me = RsEvaluator {
            cfg,
            reservoir,
            topups: Vec::new(),
            cache,
            tally: Tally::new(cfg.cost),
            end: base_end,
            step: 0,
        };
        let out = me.outcome(g, 0, 0)?;
        Ok((me, out))
    }

    pub fn reservoir(&self) -> &ReservoirState {
        &self.reservoir
    }

    pub fn cache(&self) -> &LabelCache {
        &self.cache
    }

    fn estimate(&self, g: &KnowledgeGraph) -> Result<Estimate, EstimateError> {
        pooled_twcs(self.reservoir.entries().map(|e| &e.draw).chain(&self.topups), self.cfg.requirement.alpha, g)
    }

    fn outcome(&mut self, g: &KnowledgeGraph, admitted: usize, added: usize) -> Result<StepOutcome, EvolveError> {
        let estimate = self.estimate(g)?;
        let (new_work, step_seconds, cumulative_seconds) = self.tally.close(self.cache.footprint());
        Ok(StepOutcome {
            step: self.step,
            clusters: self.end,
            triples: g.offset(self.end),
            stopping_moe: self.cfg.requirement.z() * estimate.stopping_variance().sqrt(),
            estimate,
            new_work,
            step_seconds,
            cumulative_seconds,
            admitted,
            added_units: added,
        })
    }

    /// Fold in clusters `previous end..end` and re-establish the requirement.
    pub fn step(
        &mut self,
        g: &KnowledgeGraph,
        end: usize,
        annotator: &mut dyn Annotator,
    ) -> Result<StepOutcome, EvolveError> {
        check_end(g, self.end, end)?;
        self.step += 1;
        let report = self.reservoir.update(g, self.end..end);
        self.end = end;
        self.topups.clear();

        let mut fresh: Vec<ClusterDraw> =
            self.reservoir.entries().filter(|e| e.draw.labels.is_none()).map(|e| e.draw.clone()).collect();
        annotate_draws(g, &mut self.cache, &mut fresh, annotator)?;
        let cache = &self.cache;
        self.reservoir.entries_mut().for_each(|e| cache.fill(std::slice::from_mut(&mut e.draw)));

        let frame = Population::new(g, 0, end);
        let step_seed = rng::derive(self.cfg.seed, &[tag::STEP, self.step as u64]);
        let mut added = 0;
        for round in 0.. {
            let est = self.estimate(g)?;
            let s2 = est.stopping_variance();
            if self.cfg.satisfied(est.n_units, s2) {
                break;
            }
            if round >= self.cfg.max_iterations {
                return Err(EvolveError::Unsatisfiable(self.step));
            }
            let extra = predicted_extra(
                est.n_units,
                est.n_units as f64 * s2,
                1.0,
                self.cfg.target_variance(),
                self.cfg.batch_cap,
            );
            let mut batch = twcs_draw(&frame, extra, self.cfg.m, step_seed, round as u64)?;
            annotate_draws(g, &mut self.cache, &mut batch.draws, annotator)?;
            added += batch.draws.len();
            self.topups.extend(batch.draws);
        }
        self.outcome(g, report.admitted.len(), added)
    }
}

/// One stratum of the stratified ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// `base` or `delta-<step>`.
    pub label: String,
    pub clusters: Range<usize>,
    pub mass: usize,
    pub draws: Vec<ClusterDraw>,
    pub estimate: Estimate,
}

/// The strata of the stratified procedure: the base graph and every delta.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StratumLedger {
    pub entries: Vec<LedgerEntry>,
}

impl StratumLedger {
    pub fn total_mass(&self) -> usize {
        self.entries.iter().map(|e| e.mass).sum()
    }

    pub fn weights(&self) -> Vec<f64> {
        let total = self.total_mass() as f64;
        self.entries.iter().map(|e| e.mass as f64 / total).collect()
    }

    fn pairs(&self) -> Vec<(f64, &Estimate)> {
        self.weights().into_iter().zip(self.entries.iter().map(|e| &e.estimate)).collect()
    }

    pub fn combined(&self, alpha: f64) -> Result<Estimate, EstimateError> {
        est_stratified(&self.pairs(), alpha)
    }

    pub fn stopping_variance(&self) -> f64 {
        stratified_stopping_variance(&self.pairs())
    }

    /// Recompute every stratum estimate from its archived draws and combine.
    pub fn recompute(&self, g: &KnowledgeGraph, alpha: f64) -> Result<Estimate, EstimateError> {
        let fresh: Vec<Estimate> =
            self.entries.iter().map(|e| pooled_twcs(e.draws.iter(), alpha, g)).collect::<Result<_, _>>()?;
        let pairs: Vec<(f64, &Estimate)> = self.weights().into_iter().zip(&fresh).collect();
        est_stratified(&pairs, alpha)
    }

    pub fn units(&self) -> usize {
        self.entries.iter().map(|e| e.estimate.n_units).sum()
    }
}

/// Stratified incremental evaluation.
#[derive(Debug, Clone)]
pub struct SsEvaluator {
    cfg: EvolveConfig,
    ledger: StratumLedger,
    cache: LabelCache,
    tally: Tally,
    end: usize,
    step: usize,
}

impl SsEvaluator {
    /// Evaluate the base graph (clusters `0..base_end`) with static TWCS.
    pub fn base(
        g: &KnowledgeGraph,
        base_end: usize,
        cfg: EvolveConfig,
        annotator: &mut dyn Annotator,
    ) -> Result<(Self, StepOutcome), EvolveError> {
        check_end(g, 0, base_end)?;
        let mut me = SsEvaluator {
            cfg,
            ledger: StratumLedger::default(),
            cache: LabelCache::new(),
            tally: Tally::new(cfg.cost),
            end: base_end,
            step: 0,
        };
        let base = me.evaluate_base(g, cfg.seed, annotator)?;
        me.ledger.entries.push(base);
        let out = me.outcome(g, 0)?;
        Ok((me, out))
    }

    fn evaluate_base(
        &mut self,
        g: &KnowledgeGraph,
        seed: u64,
        annotator: &mut dyn Annotator,
    ) -> Result<LedgerEntry, EvolveError> {
        let base_end = self.ledger.entries.first().map_or(self.end, |e| e.clusters.end);
        let frame = Population::new(g, 0, base_end);
        let mut s = Session::new("base", g, "", self.cfg.session(seed))?;
        // route labels through the shared cache so repeated work is not paid twice
        let mut via = CachedAnnotator { g, cache: &mut self.cache, inner: annotator };
        let estimate = s.run(&frame, &mut via)?.clone();
        Ok(LedgerEntry {
            label: "base".into(),
            clusters: 0..base_end,
            mass: frame.triple_count(),
            draws: s.batches().iter().flat_map(|b| b.draws.iter().cloned()).collect(),
            estimate,
        })
    }

    pub fn ledger(&self) -> &StratumLedger {
        &self.ledger
    }

    pub fn cache(&self) -> &LabelCache {
        &self.cache
    }

    fn outcome(&mut self, g: &KnowledgeGraph, added: usize) -> Result<StepOutcome, EvolveError> {
        let estimate = self.ledger.combined(self.cfg.requirement.alpha)?;
        let (new_work, step_seconds, cumulative_seconds) = self.tally.close(self.cache.footprint());
        Ok(StepOutcome {
            step: self.step,
            clusters: self.end,
            triples: g.offset(self.end),
            stopping_moe: self.cfg.requirement.z() * self.ledger.stopping_variance().sqrt(),
            estimate,
            new_work,
            step_seconds,
            cumulative_seconds,
            admitted: 0,
            added_units: added,
        })
    }

    pub fn step(
        &mut self,
        g: &KnowledgeGraph,
        end: usize,
        annotator: &mut dyn Annotator,
    ) -> Result<StepOutcome, EvolveError> {
        check_end(g, self.end, end)?;
        self.step += 1;
        let start = self.end;
        self.end = end;
        let step_seed = rng::derive(self.cfg.seed, &[tag::STEP, self.step as u64]);
        if self.cfg.refresh_base {
            let base = self.evaluate_base(g, rng::derive(step_seed, &[0]), annotator)?;
            self.ledger.entries[0] = base;
        }
        if start == end {
            return self.outcome(g, 0);
        }
        let frame = Population::new(g, start, end);
        self.ledger.entries.push(LedgerEntry {
            label: format!("delta-{}", self.step),
            clusters: start..end,
            mass: frame.triple_count(),
            draws: Vec::new(),
            estimate: Estimate::new(0.0, f64::INFINITY, self.cfg.requirement.alpha, 0, 0),
        });
        let last = self.ledger.entries.len() - 1;
        let alpha = self.cfg.requirement.alpha;
        let mut added = 0;
        for round in 0.. {
            let n = self.ledger.entries[last].draws.len();
            if n >= 2 && self.cfg.satisfied(self.ledger.units(), self.ledger.stopping_variance()) {
                break;
            }
            if round >= self.cfg.max_iterations {
                return Err(EvolveError::Unsatisfiable(self.step));
            }
            let extra = if n < 2 {
                2 - n
            } else {
                let w = self.ledger.weights();
                let others: f64 = self
                    .ledger
                    .entries
                    .iter()
                    .zip(&w)
                    .take(last)
                    .map(|(e, w)| w * w * e.estimate.stopping_variance())
                    .sum();
                let own = &self.ledger.entries[last].estimate;
                let s2 = own.n_units as f64 * own.stopping_variance();
                predicted_extra(n, s2, w[last], self.cfg.target_variance() - others, self.cfg.batch_cap)
            };
            let mut batch = twcs_draw(&frame, extra, self.cfg.m, step_seed, round as u64 + 1)?;
            annotate_draws(g, &mut self.cache, &mut batch.draws, annotator)?;
            added += batch.draws.len();
            let entry = &mut self.ledger.entries[last];
            entry.draws.extend(batch.draws);
            entry.estimate = pooled_twcs(entry.draws.iter(), alpha, g)?;
        }
        self.outcome(g, added)
    }
}

/// Answers from a shared cache first, asking `inner` only for new positions.
struct CachedAnnotator<'a, 'b> {
    g: &'a KnowledgeGraph,
    cache: &'a mut LabelCache,
    inner: &'b mut dyn Annotator,
}

impl Annotator for CachedAnnotator<'_, '_> {
    fn annotate(&mut self, g: &KnowledgeGraph, positions: &[usize]) -> Result<Vec<bool>, AnnotateError> {
        let missing: Vec<usize> = positions.iter().copied().filter(|&t| !self.cache.contains(t)).collect();
        if !missing.is_empty() {
            let got = self.inner.annotate(g, &missing)?;
            if got.len() != missing.len() {
                return Err(AnnotateError::Count { asked: missing.len(), got: got.len() });
            }
            for (t, l) in missing.into_iter().zip(got) {
                self.cache.insert(self.g, t, l);
            }
        }
        Ok(positions.iter().map(|&t| self.cache.get(t).expect("just cached")).collect())
    }
}

/// Fresh static TWCS at every step.
#[derive(Debug, Clone)]
pub struct BaselineEvaluator {
    cfg: EvolveConfig,
    cumulative: f64,
    step: usize,
    end: usize,
}

impl BaselineEvaluator {
    pub fn base(
        g: &KnowledgeGraph,
        base_end: usize,
        cfg: EvolveConfig,
        annotator: &mut dyn Annotator,
    ) -> Result<(Self, StepOutcome), EvolveError> {
        check_end(g, 0, base_end)?;
        let mut me = BaselineEvaluator { cfg, cumulative: 0.0, step: 0, end: 0 };
        let out = me.evaluate(g, base_end, cfg.seed, annotator)?;
        Ok((me, out))
    }

    fn evaluate(
        &mut self,
        g: &KnowledgeGraph,
        end: usize,
        seed: u64,
        annotator: &mut dyn Annotator,
    ) -> Result<StepOutcome, EvolveError> {
        self.end = end;
        let frame = Population::new(g, 0, end);
        let mut s = Session::new("baseline", g, "", self.cfg.session(seed))?;
        let estimate = s.run(&frame, annotator)?.clone();
        let new_work = s.footprint();
        let secs = cost::cost(new_work, self.cfg.cost);
        self.cumulative += secs;
        Ok(StepOutcome {
            step: self.step,
            clusters: end,
            triples: g.offset(end),
            stopping_moe: s.stopping_moe(),
            added_units: estimate.n_units,
            estimate,
            new_work,
            step_seconds: secs,
            cumulative_seconds: self.cumulative,
            admitted: 0,
        })
    }

    pub fn step(
        &mut self,
        g: &KnowledgeGraph,
        end: usize,
        annotator: &mut dyn Annotator,
    ) -> Result<StepOutcome, EvolveError> {
        check_end(g, self.end, end)?;
        self.step += 1;
        let seed = rng::derive(self.cfg.seed, &[tag::STEP, self.step as u64]);
        self.evaluate(g, end, seed, annotator)
    }
}

/// Per-step outcomes of one evolving run; entry 0 is the base evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveTrace {
    pub method: Method,
    pub steps: Vec<StepOutcome>,
}

/// Evaluate the base `0..ends[0]` and then every update `ends[i-1]..ends[i]`.
pub fn run_evolving(
    g: &KnowledgeGraph,
    ends: &[usize],
    method: Method,
    cfg: EvolveConfig,
    annotator: &mut dyn Annotator,
) -> Result<EvolveTrace, EvolveError> {
    let (&base, rest) = ends.split_first().ok_or_else(|| EvolveError::Config("no base graph given".into()))?;
    let mut steps = Vec::with_capacity(ends.len());
    match method {
        Method::Rs => {
            let (mut ev, first) = RsEvaluator::base(g, base, cfg, annotator)?;
            steps.push(first);
            for &e in rest {
                steps.push(ev.step(g, e, annotator)?);
            }
        }
        Method::Ss => {
            let (mut ev, first) = SsEvaluator::base(g, base, cfg, annotator)?;
            steps.push(first);
            for &e in rest {
                steps.push(ev.step(g, e, annotator)?);
            }
        }
        Method::Baseline => {
            let (mut ev, first) = BaselineEvaluator::base(g, base, cfg, annotator)?;
            steps.push(first);
            for &e in rest {
                steps.push(ev.step(g, e, annotator)?);
            }
        }
    }
    Ok(EvolveTrace { method, steps })
}
