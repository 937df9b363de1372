//! Annotation cost model and sample-size planning.
//!
//! Annotating a sample costs `c1` seconds per distinct entity (identifying
//! it) plus `c2` seconds per triple (validating one fact about it):
//!
//! ```text
//! cost = |E'|·c1 + |G'|·c2
//! ```
//!
//! For two-stage weighted cluster sampling with at most `m` triples per
//! drawn cluster, the single-draw variance is
//!
//! ```text
//! V(m) = Σ π_i (μ_i − μ)²  +  (1/m) Σ_{M_i > m} π_i (M_i − m)/(M_i − 1) μ_i (1 − μ_i)
//! ```
//!
//! with `π_i = M_i / M`. [`optimal_m`] searches `m` for the cheapest
//! design that meets a margin-of-error requirement.

use std::io::Read;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::kg::{Frame, KnowledgeGraph};
use crate::labels::LabelSource;
use crate::normal;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("cost fit needs at least two observations with independent (entities, triples) rows")]
    RankDeficient,
    #[error("cost fit has no non-negative solution")]
    NoPositiveSolution,
    #[error("empty m range")]
    EmptyRange,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Seconds to identify one entity.
    pub c1: f64,
    /// Seconds to validate one triple.
    pub c2: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { c1: 45.0, c2: 25.0 }
    }
}

impl CostParams {
    pub fn new(c1: f64, c2: f64) -> Result<Self, CostError> {
        let ok = |c: f64| c.is_finite() && c >= 0.0;
        if !ok(c1) || !ok(c2) || c1 + c2 == 0.0 {
            return Err(CostError::InvalidParam(format!(
                "c1 and c2 must be finite, non-negative and not both zero (got {c1}, {c2})"
            )));
        }
        Ok(CostParams { c1, c2 })
    }

    /// `c1=…\nc2=…\n`
    pub fn to_key_values(&self) -> String {
        format!("c1={}\nc2={}\n", self.c1, self.c2)
    }

    pub fn from_key_values(text: &str) -> Result<Self, CostError> {
        let (mut c1, mut c2) = (None, None);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| CostError::Parse { line: i + 1, message: m.into() };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key=value"))?;
            let v: f64 = v.trim().parse().map_err(|_| err("value is not a number"))?;
            match k.trim() {
                "c1" => c1 = Some(v),
                "c2" => c2 = Some(v),
                other => return Err(err(&format!("unknown key {other:?}"))),
            }
        }
        match (c1, c2) {
            (Some(c1), Some(c2)) => CostParams::new(c1, c2),
            _ => Err(CostError::Parse { line: 0, message: "both c1 and c2 are required".into() }),
        }
    }
}

/// Distinct entities and triples an annotator has to look at.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFootprint {
    pub unique_entities: usize,
    pub triples: usize,
}

impl Add for SampleFootprint {
    type Output = SampleFootprint;
    fn add(self, o: Self) -> Self {
        SampleFootprint { unique_entities: self.unique_entities + o.unique_entities, triples: self.triples + o.triples }
    }
}

impl AddAssign for SampleFootprint {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Target margin of error `epsilon` at confidence `1 − alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub epsilon: f64,
    pub alpha: f64,
}

impl Default for Requirement {
    fn default() -> Self {
        Requirement { epsilon: 0.05, alpha: 0.05 }
    }
}

impl Requirement {
    pub fn new(epsilon: f64, alpha: f64) -> Result<Self, CostError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(CostError::InvalidParam(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CostError::InvalidParam(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Requirement { epsilon, alpha })
    }

    pub fn z(&self) -> f64 {
        normal::z_two_sided(self.alpha)
    }

    /// Units needed for a single-draw variance `v`.
    pub fn units_for_variance(&self, v: f64) -> usize {
        let z = self.z();
        (v * z * z / (self.epsilon * self.epsilon)).ceil() as usize
    }
}

/// Modeled annotation time in seconds.
pub fn cost(fp: SampleFootprint, cp: CostParams) -> f64 {
    fp.unique_entities as f64 * cp.c1 + fp.triples as f64 * cp.c2
}

pub fn hours(seconds: f64) -> f64 {
    seconds / 3600.0
}

/// One timed annotation session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostObservation {
    pub unique_entities: f64,
    pub triples: f64,
    pub seconds: f64,
}

/// Least-squares fit of `(c1, c2)`, clipping a negative coefficient to zero.
pub fn fit_params(obs: &[CostObservation]) -> Result<CostParams, CostError> {
    if obs.len() < 2 {
        return Err(CostError::RankDeficient);
    }
    let (mut see, mut set, mut stt, mut ses, mut sts) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for o in obs {
        see += o.unique_entities * o.unique_entities;
        set += o.unique_entities * o.triples;
        stt += o.triples * o.triples;
        ses += o.unique_entities * o.seconds;
        sts += o.triples * o.seconds;
    }
    let det = see * stt - set * set;
    if det.abs() <= 1e-12 * (see * stt).max(f64::MIN_POSITIVE) {
        return Err(CostError::RankDeficient);
    }
    let c1 = (ses * stt - sts * set) / det;
    let c2 = (sts * see - ses * set) / det;
    if c1 >= 0.0 && c2 >= 0.0 {
        return CostParams::new(c1, c2);
    }

    let sse = |c1: f64, c2: f64| {
        obs.iter().map(|o| (c1 * o.unique_entities + c2 * o.triples - o.seconds).powi(2)).sum::<f64>()
    };
    let only_c1 = if see > 0.0 { ses / see } else { -1.0 };
    let only_c2 = if stt > 0.0 { sts / stt } else { -1.0 };
    let mut best: Option<(f64, CostParams)> = None;
    for (a, b) in [(only_c1, 0.0), (0.0, only_c2)] {
        if a >= 0.0 && b >= 0.0 && a + b > 0.0 {
            let e = sse(a, b);
            if best.map_or(true, |(be, _)| e < be) {
                best = Some((e, CostParams { c1: a, c2: b }));
            }
        }
    }
    best.map(|(_, p)| p).ok_or(CostError::NoPositiveSolution)
}

/// Read `entities,triples,seconds` rows; a non-numeric first row is a header.
pub fn read_observations<R: Read>(reader: R) -> Result<Vec<CostObservation>, CostError> {
    let mut rdr =
        csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| CostError::Parse { line, message: e.to_string() })?;
        if rec.len() != 3 {
            return Err(CostError::Parse { line, message: format!("expected 3 columns, found {}", rec.len()) });
        }
        let nums: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match nums {
            Ok(v) => out.push(CostObservation { unique_entities: v[0], triples: v[1], seconds: v[2] }),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(CostError::Parse { line, message: e.to_string() }),
        }
    }
    Ok(out)
}

/// Expected distinct entities among `n_s` triples drawn from `frame`:
/// `Σ_i 1 − (1 − M_i/M)^{n_s}`.
///
/// This is the with-replacement expression; for without-replacement draws
/// it slightly underestimates.
pub fn expected_unique_entities<F: Frame + ?Sized>(frame: &F, n_s: usize) -> f64 {
    let m = frame.triple_count() as f64;
    (0..frame.cluster_count()).map(|k| 1.0 - (1.0 - frame.size_of(k) as f64 / m).powi(n_s as i32)).sum()
}

/// Triples SRS needs to reach the requirement, given an accuracy estimate.
///
/// When `mu_hat` is 0 or 1 the variance `μ(1−μ)` is replaced by
/// `1 / (4·max(n, 1))` where `n` is the current sample size.
pub fn srs_required_n(mu_hat: f64, current_n: usize, req: Requirement) -> usize {
    let mut v = mu_hat * (1.0 - mu_hat);
    if v <= 0.0 {
        v = 0.25 / current_n.max(1) as f64;
    }
    req.units_for_variance(v)
}

/// Per-cluster accuracies weighted by first-stage selection probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyProfile {
    /// `(cluster size, cluster accuracy, selection mass)`
    pub entries: Vec<(usize, f64, f64)>,
}

impl AccuracyProfile {
    /// Exact profile of a frame under full labels.
    pub fn from_labels<F: Frame + ?Sized>(frame: &F, ls: &LabelSource) -> Self {
        let g = frame.graph();
        let m = frame.triple_count() as f64;
        let entries = (0..frame.cluster_count())
            .map(|k| {
                let c = frame.cluster(k);
                let size = g.cluster_size(c);
                (size, ls.cluster_accuracy(g, c), size as f64 / m)
            })
            .collect();
        AccuracyProfile { entries }
    }

    /// Sizes only, every cluster assumed to be a coin flip.
    pub fn prior<F: Frame + ?Sized>(frame: &F) -> Self {
        let m = frame.triple_count() as f64;
        let entries = (0..frame.cluster_count()).map(|k| {
            let size = frame.size_of(k);
            (size, 0.5, size as f64 / m)
        });
        AccuracyProfile { entries: entries.collect() }
    }

    /// Pilot profile from PPS draws: `(cluster size, observed accuracy)`, each
    /// carrying mass `1/n`.
    pub fn from_draws(draws: &[(usize, f64)]) -> Self {
        let w = 1.0 / draws.len() as f64;
        AccuracyProfile { entries: draws.iter().map(|&(s, a)| (s, a, w)).collect() }
    }

    pub fn of_graph(g: &KnowledgeGraph, ls: &LabelSource) -> Self {
        Self::from_labels(&g.population(), ls)
    }

    pub fn mean(&self) -> f64 {
        let (num, den) = self.entries.iter().fold((0.0, 0.0), |(n, d), &(_, a, w)| (n + w * a, d + w));
        num / den
    }

    pub fn max_size(&self) -> usize {
        self.entries.iter().map(|e| e.0).max().unwrap_or(1)
    }
}

/// Single-draw variance of the two-stage estimator at second-stage size `m`.
pub fn twcs_variance(profile: &AccuracyProfile, m: usize) -> Result<f64, CostError> {
    if m < 1 {
        return Err(CostError::InvalidParam("m must be at least 1".into()));
    }
    let total: f64 = profile.entries.iter().map(|e| e.2).sum();
    let mu = profile.mean();
    let (mut between, mut within) = (0.0, 0.0);
    for &(size, a, w) in &profile.entries {
        let w = w / total;
        between += w * (a - mu) * (a - mu);
        if size > m {
            within += w * (size - m) as f64 / (size - 1) as f64 * a * (1.0 - a);
        }
    }
    Ok(between + within / m as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MChoice {
    pub m: usize,
    pub n: usize,
    pub variance: f64,
    /// Predicted seconds, `n · (c1 + m·c2)`.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalM {
    pub best: MChoice,
    pub sweep: Vec<MChoice>,
}

/// Linear search over `m_range` for the cheapest second-stage size.
/// Ties go to the smaller `m`.
pub fn optimal_m(
    profile: &AccuracyProfile,
    req: Requirement,
    cp: CostParams,
    m_range: std::ops::RangeInclusive<usize>,
) -> Result<OptimalM, CostError> {
    let (lo, hi) = (*m_range.start(), *m_range.end());
    if lo < 1 || lo > hi {
        return Err(CostError::EmptyRange);
    }
    let mut sweep = Vec::with_capacity(hi - lo + 1);
    for m in lo..=hi {
        let variance = twcs_variance(profile, m)?;
        let n = req.units_for_variance(variance).max(1);
        sweep.push(MChoice { m, n, variance, cost: n as f64 * (cp.c1 + m as f64 * cp.c2) });
    }
    let mut best = sweep[0].clone();
    for c in &sweep[1..] {
        if c.cost < best.cost {
            best = c.clone();
        }
    }
    Ok(OptimalM { best, sweep })
}

/// Modeled SRS cost: `n` from the exact accuracy, entities from
/// [`expected_unique_entities`].
pub fn srs_predicted_cost<F: Frame + ?Sized>(frame: &F, mu: f64, req: Requirement, cp: CostParams) -> (usize, f64) {
    let n = srs_required_n(mu, 0, req);
    (n, expected_unique_entities(frame, n) * cp.c1 + n as f64 * cp.c2)
}
