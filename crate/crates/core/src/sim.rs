//! Seeded experiment harnesses: repeated static evaluations, second-stage
//! sweeps and evolving-graph replays. Trial `i` of a run with seed `s`
//! samples with seed `derive(s, [TRIAL, i])`, so any single trial can be
//! replayed on its own. Trials run in parallel.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{self, optimal_m, AccuracyProfile, CostError, CostParams, Requirement};
use crate::evolve::{run_evolving, EvolveConfig, EvolveError, EvolveTrace, Method};
use crate::kg::{parse_labeled_graph, DeltaMode, InputFormat, KnowledgeGraph};
use crate::labels::{Generator, LabelSource};
use crate::orchestrator::{OracleAnnotator, Session, SessionConfig, SessionError};
use crate::report::Summary;
use crate::rng::{self, tag};
use crate::sampling::SamplingDesign;
use crate::synth::{self, SizeLaw};

/// The bundled sports-domain fixture: 817 entities, 1,860 triples, gold
/// labels with 91% accuracy and a long-tailed cluster-size histogram.
pub const NELL_FIXTURE_TSV: &str = include_str!("../fixtures/nell_sports.tsv");

pub fn nell_fixture() -> (KnowledgeGraph, LabelSource) {
    let (g, labels) =
        parse_labeled_graph(NELL_FIXTURE_TSV.as_bytes(), InputFormat::Tsv).expect("bundled fixture parses");
    let labels = labels.expect("bundled fixture carries labels");
    (g, LabelSource::fixture(labels))
}

pub fn trial_seed(seed: u64, i: usize) -> u64 {
    rng::derive(seed, &[tag::TRIAL, i as u64])
}

/// Outcome of one static evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticTrial {
    pub seed: u64,
    pub mu_hat: f64,
    pub moe: f64,
    pub stopping_moe: f64,
    pub units: usize,
    pub unique_entities: usize,
    pub triples: usize,
    pub seconds: f64,
}

impl StaticTrial {
    pub fn hours(&self) -> f64 {
        cost::hours(self.seconds)
    }
}

/// `trials` independent static evaluations of `g` with the settings of
/// `template` (its seed is replaced per trial).
pub fn static_trials(
    g: &KnowledgeGraph,
    ls: &LabelSource,
    template: &SessionConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<StaticTrial>, SessionError> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut cfg = template.clone();
            cfg.seed = trial_seed(seed, i);
            let mut s = Session::new(format!("trial-{i}"), g, "", cfg.clone())?;
            let est = s.run(&g.population(), &mut OracleAnnotator::new(ls))?.clone();
            let report = s.cost_report();
            Ok(StaticTrial {
                seed: cfg.seed,
                mu_hat: est.mu_hat,
                moe: est.moe,
                stopping_moe: s.stopping_moe(),
                units: est.n_units,
                unique_entities: report.footprint.unique_entities,
                triples: report.footprint.triples,
                seconds: report.seconds,
            })
        })
        .collect()
}

/// Table-style aggregate of static trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticSummary {
    pub estimate: Summary,
    pub hours: Summary,
    pub units: Summary,
}

impl StaticSummary {
    pub fn of(trials: &[StaticTrial]) -> Self {
        let col = |f: fn(&StaticTrial) -> f64| Summary::of(&trials.iter().map(f).collect::<Vec<_>>());
        StaticSummary { estimate: col(|t| t.mu_hat), hours: col(|t| t.hours()), units: col(|t| t.units as f64) }
    }
}

/// One point of a cost-versus-m sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub mean_hours: f64,
    pub std_hours: f64,
    pub mean_estimate: f64,
    /// Units and cost predicted from the true accuracy profile.
    pub predicted_units: usize,
    pub predicted_hours: f64,
}

/// Mean TWCS cost for each second-stage size in `ms`, next to the cost the
/// variance model predicts.
pub fn m_sweep(
    g: &KnowledgeGraph,
    ls: &LabelSource,
    req: Requirement,
    cp: CostParams,
    ms: RangeInclusive<usize>,
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>, SweepError> {
    let plan = optimal_m(&AccuracyProfile::of_graph(g, ls), req, cp, ms.clone())?;
    ms.map(|m| {
        let cfg = SessionConfig::new(SamplingDesign::Twcs { m }, req, cp, seed);
        let s = StaticSummary::of(&static_trials(g, ls, &cfg, trials, rng::derive(seed, &[m as u64]))?);
        let p = plan.sweep.iter().find(|c| c.m == m).expect("sweep covers the range");
        Ok(SweepRow {
            m,
            mean_hours: s.hours.mean,
            std_hours: s.hours.std,
            mean_estimate: s.estimate.mean,
            predicted_units: p.n,
            predicted_hours: cost::hours(p.cost),
        })
    })
    .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// A base graph followed by a sequence of updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolvingSetup {
    pub base_triples: usize,
    pub base_accuracy: f64,
    /// `(size as a fraction of the base, accuracy)` per update.
    pub updates: Vec<(f64, f64)>,
    /// Share of update groups that extend existing entities.
    pub enrich: f64,
    pub law: SizeLaw,
    pub seed: u64,
}

impl EvolvingSetup {
    pub fn new(base_triples: usize, updates: Vec<(f64, f64)>, seed: u64) -> Self {
        EvolvingSetup { base_triples, base_accuracy: 0.9, updates, enrich: 0.3, law: SizeLaw::MOVIE_LIKE, seed }
    }

    /// The full graph (updates appended as independent clusters), its REM
    /// labels, and the cluster count after the base and after each update.
    pub fn build(&self) -> (KnowledgeGraph, LabelSource, Vec<usize>) {
        let mut g = synth::graph(self.law, self.base_triples, self.seed);
        let rem = |acc: f64| Generator::Rem { r_eps: 1.0 - acc };
        let mut ls =
            LabelSource::generate(&g, rem(self.base_accuracy), rng::derive(self.seed, &[0])).expect("valid error rate");
        let mut ends = vec![g.cluster_count()];
        for (i, &(frac, acc)) in self.updates.iter().enumerate() {
            let b = i as u64 + 1;
            let size = ((self.base_triples as f64 * frac).round() as usize).max(1);
            let d = synth::delta(&g, b, self.law, size, self.enrich, rng::derive(self.seed, &[b, 1]));
            g = g.with_delta(&d, DeltaMode::Independent).expect("independent deltas always apply");
            ls.extend(&g, rem(acc), rng::derive(self.seed, &[b, 2])).expect("valid error rate");
            ends.push(g.cluster_count());
        }
        (g, ls, ends)
    }
}

/// `trials` replays of one evolving method.
pub fn evolving_trials(
    g: &KnowledgeGraph,
    ls: &LabelSource,
    ends: &[usize],
    method: Method,
    template: EvolveConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<EvolveTrace>, EvolveError> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut cfg = template;
            cfg.seed = trial_seed(seed, i);
            run_evolving(g, ends, method, cfg, &mut OracleAnnotator::new(ls))
        })
        .collect()
}

/// One row of an evolving trace series: mean over trials at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub triples: usize,
    pub true_accuracy: f64,
    pub mean_estimate: f64,
    pub std_estimate: f64,
    pub mean_step_hours: f64,
    pub mean_cumulative_hours: f64,
}

pub fn trace_rows(traces: &[EvolveTrace], ls: &LabelSource) -> Vec<TraceRow> {
    let steps = traces.first().map_or(0, |t| t.steps.len());
    (0..steps)
        .map(|k| {
            let at: Vec<_> = traces.iter().map(|t| &t.steps[k]).collect();
            let est = Summary::of(&at.iter().map(|s| s.estimate.mu_hat).collect::<Vec<_>>());
            let mean =
                |f: fn(&crate::evolve::StepOutcome) -> f64| at.iter().map(|s| f(s)).sum::<f64>() / at.len() as f64;
            TraceRow {
                step: k,
                triples: at[0].triples,
                true_accuracy: ls.accuracy_of(0..at[0].triples),
                mean_estimate: est.mean,
                std_estimate: est.std,
                mean_step_hours: cost::hours(mean(|s| s.step_seconds)),
                mean_cumulative_hours: cost::hours(mean(|s| s.cumulative_seconds)),
            }
        })
        .collect()
}
