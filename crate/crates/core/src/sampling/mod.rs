//! Sampling designs.
//!
//! | design | primary unit | first stage | second stage |
//! |---|---|---|---|
//! | SRS | triple | uniform, without replacement | none |
//! | RCS | cluster | uniform, with replacement | every triple |
//! | WCS | cluster | ∝ size, with replacement | every triple |
//! | TWCS | cluster | ∝ size, with replacement | `min(M_i, m)` triples without replacement |
//!
//! PPS draws pick a uniform triple index in the frame and take the cluster
//! that owns it, which selects cluster `i` with probability exactly
//! `M_i / M`. Each draw `k` of batch `b` reads its own stream
//! `(seed, [DRAW, b, k])`, so batches can be replayed independently.

pub mod reservoir;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kg::Frame;
use crate::rng::{self, tag, Stream};
use crate::stratify::StrataSpec;

pub use reservoir::{AResReservoir, ReservoirEntry, ReservoirState, UpdateReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("cannot draw {requested} triples from a frame of {available}")]
    TooMany { requested: usize, available: usize },
    #[error("sample size must be at least 1")]
    Empty,
    #[error("second-stage size m must be at least 1")]
    BadM,
    #[error("reservoir capacity must be at least 1")]
    Capacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Srs,
    Rcs,
    Wcs,
    Twcs,
    StratifiedTwcs,
}

impl DesignKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DesignKind::Srs => "srs",
            DesignKind::Rcs => "rcs",
            DesignKind::Wcs => "wcs",
            DesignKind::Twcs => "twcs",
            DesignKind::StratifiedTwcs => "stratified_twcs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingDesign {
    Srs,
    Rcs,
    Wcs,
    Twcs { m: usize },
    StratifiedTwcs { m: usize, strata: StrataSpec },
}

impl SamplingDesign {
    pub fn kind(&self) -> DesignKind {
        match self {
            SamplingDesign::Srs => DesignKind::Srs,
            SamplingDesign::Rcs => DesignKind::Rcs,
            SamplingDesign::Wcs => DesignKind::Wcs,
            SamplingDesign::Twcs { .. } => DesignKind::Twcs,
            SamplingDesign::StratifiedTwcs { .. } => DesignKind::StratifiedTwcs,
        }
    }

    pub fn m(&self) -> Option<usize> {
        match self {
            SamplingDesign::Twcs { m } | SamplingDesign::StratifiedTwcs { m, .. } => Some(*m),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        match self.m() {
            Some(0) => Err(SamplingError::BadM),
            _ => Ok(()),
        }
    }
}

/// One primary sampling unit: a cluster (or, under SRS, the triples of one
/// cluster that happened to be drawn).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDraw {
    pub cluster: usize,
    pub entity_id: Arc<str>,
    pub cluster_size: usize,
    /// Global triple positions, distinct.
    pub drawn: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<usize>,
}

impl ClusterDraw {
    pub fn correct(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().filter(|&&x| x).count())
    }

    /// Mean label of the drawn triples.
    pub fn accuracy(&self) -> Option<f64> {
        self.correct().map(|c| c as f64 / self.drawn.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawBatch {
    pub design: DesignKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub draws: Vec<ClusterDraw>,
    pub seed: u64,
    pub batch_index: u64,
}

impl DrawBatch {
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.draws.iter().flat_map(|d| d.drawn.iter().copied())
    }

    pub fn is_labelled(&self) -> bool {
        self.draws.iter().all(|d| d.labels.is_some())
    }
}

fn draw_stream(seed: u64, batch_index: u64, k: usize) -> Stream {
    rng::stream(seed, &[tag::DRAW, batch_index, k as u64])
}

fn whole_cluster<F: Frame + ?Sized>(frame: &F, c: usize) -> ClusterDraw {
    let g = frame.graph();
    let off = g.offset(c);
    let size = g.cluster_size(c);
    ClusterDraw {
        cluster: c,
        entity_id: g.cluster(c).entity_id().clone(),
        cluster_size: size,
        drawn: (off..off + size).collect(),
        labels: None,
        stratum: None,
    }
}

/// Graph cluster index drawn with probability `M_i / M` over the frame.
pub fn pps_cluster<F: Frame + ?Sized, R: Rng + ?Sized>(frame: &F, rng: &mut R) -> usize {
    frame.locate(rng.random_range(0..frame.triple_count())).0
}

/// `min(M_c, m)` distinct positions of cluster `c`, uniformly.
pub fn second_stage<F: Frame + ?Sized, R: Rng + ?Sized>(frame: &F, c: usize, m: usize, rng: &mut R) -> ClusterDraw {
    let g = frame.graph();
    let size = g.cluster_size(c);
    if m >= size {
        return whole_cluster(frame, c);
    }
    let off = g.offset(c);
    let mut drawn: Vec<usize> = index::sample(rng, size, m).into_iter().map(|j| off + j).collect();
    drawn.sort_unstable();
    ClusterDraw {
        cluster: c,
        entity_id: g.cluster(c).entity_id().clone(),
        cluster_size: size,
        drawn,
        labels: None,
        stratum: None,
    }
}

/// One TWCS unit: a PPS cluster, then its second-stage subsample.
pub fn twcs_unit<F: Frame + ?Sized, R: Rng + ?Sized>(frame: &F, m: usize, rng: &mut R) -> ClusterDraw {
    let c = pps_cluster(frame, rng);
    second_stage(frame, c, m, rng)
}

fn group_positions<F: Frame + ?Sized>(frame: &F, picks: impl IntoIterator<Item = usize>) -> Vec<ClusterDraw> {
    let g = frame.graph();
    let mut draws: Vec<ClusterDraw> = Vec::new();
    let mut at: HashMap<usize, usize> = HashMap::new();
    for t in picks {
        let (c, j) = frame.locate(t);
        let slot = *at.entry(c).or_insert_with(|| {
            draws.push(ClusterDraw {
                cluster: c,
                entity_id: g.cluster(c).entity_id().clone(),
                cluster_size: g.cluster_size(c),
                drawn: Vec::new(),
                labels: None,
                stratum: None,
            });
            draws.len() - 1
        });
        draws[slot].drawn.push(g.offset(c) + j);
    }
    draws
}

fn global_position<F: Frame + ?Sized>(frame: &F, t: usize) -> usize {
    let (c, j) = frame.locate(t);
    frame.graph().offset(c) + j
}

/// `n_s` distinct triples, grouped into one draw per touched cluster in
/// order of first appearance.
pub fn srs_draw<F: Frame + ?Sized>(
    frame: &F,
    n_s: usize,
    seed: u64,
    batch_index: u64,
) -> Result<DrawBatch, SamplingError> {
    if n_s > frame.triple_count() {
        return Err(SamplingError::TooMany { requested: n_s, available: frame.triple_count() });
    }
    let mut rng = draw_stream(seed, batch_index, 0);
    let picks = index::sample(&mut rng, frame.triple_count(), n_s);
    Ok(DrawBatch { design: DesignKind::Srs, m: None, draws: group_positions(frame, picks), seed, batch_index })
}

/// Like [`srs_draw`] but skipping global positions in `taken`, so that
/// successive batches never repeat a triple. Returns fewer than `n_s`
/// triples only when the frame runs out.
pub fn srs_draw_excluding<F: Frame + ?Sized>(
    frame: &F,
    n_s: usize,
    seed: u64,
    batch_index: u64,
    taken: &HashSet<usize>,
) -> DrawBatch {
    let total = frame.triple_count();
    let free = total.saturating_sub(taken.len());
    let mut rng = draw_stream(seed, batch_index, 0);
    let picks: Vec<usize> = if n_s >= free || free * 4 < total {
        let open: Vec<usize> = (0..total).filter(|&t| !taken.contains(&global_position(frame, t))).collect();
        let k = n_s.min(open.len());
        index::sample(&mut rng, open.len(), k).into_iter().map(|i| open[i]).collect()
    } else {
        let mut chosen = HashSet::new();
        let mut picks = Vec::with_capacity(n_s);
        while picks.len() < n_s {
            let t = rng.random_range(0..total);
            if !taken.contains(&global_position(frame, t)) && chosen.insert(t) {
                picks.push(t);
            }
        }
        picks
    };
    DrawBatch { design: DesignKind::Srs, m: None, draws: group_positions(frame, picks), seed, batch_index }
}

/// `n` clusters uniformly with replacement, all triples of each.
pub fn rcs_draw<F: Frame + ?Sized>(
    frame: &F,
    n: usize,
    seed: u64,
    batch_index: u64,
) -> Result<DrawBatch, SamplingError> {
    if n == 0 {
        return Err(SamplingError::Empty);
    }
    let draws = (0..n)
        .map(|k| {
            let mut rng = draw_stream(seed, batch_index, k);
            whole_cluster(frame, frame.cluster(rng.random_range(0..frame.cluster_count())))
        })
        .collect();
    Ok(DrawBatch { design: DesignKind::Rcs, m: None, draws, seed, batch_index })
}

/// `n` clusters with probability ∝ size, with replacement, all triples of each.
pub fn wcs_draw<F: Frame + ?Sized>(
    frame: &F,
    n: usize,
    seed: u64,
    batch_index: u64,
) -> Result<DrawBatch, SamplingError> {
    if n == 0 {
        return Err(SamplingError::Empty);
    }
    let draws = (0..n)
        .map(|k| {
            let mut rng = draw_stream(seed, batch_index, k);
            whole_cluster(frame, pps_cluster(frame, &mut rng))
        })
        .collect();
    Ok(DrawBatch { design: DesignKind::Wcs, m: None, draws, seed, batch_index })
}

/// `n` two-stage units with second-stage size `m`.
pub fn twcs_draw<F: Frame + ?Sized>(
    frame: &F,
    n: usize,
    m: usize,
    seed: u64,
    batch_index: u64,
) -> Result<DrawBatch, SamplingError> {
    if n == 0 {
        return Err(SamplingError::Empty);
    }
    if m == 0 {
        return Err(SamplingError::BadM);
    }
    let draws = (0..n)
        .map(|k| {
            let mut rng = draw_stream(seed, batch_index, k);
            twcs_unit(frame, m, &mut rng)
        })
        .collect();
    Ok(DrawBatch { design: DesignKind::Twcs, m: Some(m), draws, seed, batch_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{KnowledgeGraph, Subset};
    use crate::synth::graph_from_sizes;

    fn toy() -> KnowledgeGraph {
        graph_from_sizes(&[1, 2, 3])
    }

    fn within_3_sigma(hits: usize, trials: usize, p: f64) -> bool {
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        (hits as f64 - trials as f64 * p).abs() <= 3.0 * sd.max(1e-9)
    }

    #[test]
    fn srs_exhaustive_and_deterministic() {
        let g = toy();
        let b = srs_draw(&g.population(), 6, 1, 0).unwrap();
        let mut pos: Vec<usize> = b.positions().collect();
        pos.sort_unstable();
        assert_eq!(pos, (0..6).collect::<Vec<_>>());
        assert_eq!(srs_draw(&g.population(), 3, 9, 2).unwrap(), srs_draw(&g.population(), 3, 9, 2).unwrap());
        let big = graph_from_sizes(&[5; 40]);
        assert_ne!(
            srs_draw(&big.population(), 20, 9, 2).unwrap().draws,
            srs_draw(&big.population(), 20, 9, 3).unwrap().draws
        );
        assert!(matches!(srs_draw(&g.population(), 7, 1, 0), Err(SamplingError::TooMany { .. })));
    }

    #[test]
    fn srs_excluding_never_repeats() {
        let g = graph_from_sizes(&[1, 2, 3, 4]);
        let p = g.population();
        let mut taken = HashSet::new();
        for b in 0..4 {
            let batch = srs_draw_excluding(&p, 3, 5, b, &taken);
            for t in batch.positions() {
                assert!(taken.insert(t), "position {t} drawn twice");
            }
        }
        assert_eq!(taken.len(), 10);
        assert_eq!(srs_draw_excluding(&p, 3, 5, 9, &taken).positions().count(), 0);
        let sub = Subset::new(&g, vec![3]);
        let only = srs_draw_excluding(&sub, 10, 1, 0, &HashSet::new());
        assert_eq!(only.positions().collect::<Vec<_>>().len(), 4);
        assert!(only.positions().all(|t| (6..10).contains(&t)));
    }

    #[test]
    fn srs_single_triple_is_uniform() {
        let g = toy();
        let trials = 100_000;
        let mut hits = [0usize; 6];
        for b in 0..trials {
            let d = srs_draw(&g.population(), 1, 4, b).unwrap();
            hits[d.draws[0].drawn[0]] += 1;
        }
        assert!(hits.iter().all(|&h| within_3_sigma(h, trials as usize, 1.0 / 6.0)), "{hits:?}");
    }

    #[test]
    fn rcs_is_uniform_over_clusters() {
        let one = graph_from_sizes(&[4]);
        let b = rcs_draw(&one.population(), 3, 1, 0).unwrap();
        assert!(b.draws.iter().all(|d| d.cluster == 0 && d.drawn.len() == 4));
        assert_eq!(rcs_draw(&one.population(), 0, 1, 0), Err(SamplingError::Empty));

        let g = toy();
        let b = rcs_draw(&g.population(), 100_000, 5, 0).unwrap();
        let mut hits = [0usize; 3];
        b.draws.iter().for_each(|d| hits[d.cluster] += 1);
        assert!(hits.iter().all(|&h| within_3_sigma(h, 100_000, 1.0 / 3.0)), "{hits:?}");
    }

    #[test]
    fn wcs_is_proportional_to_size() {
        let g = toy();
        let b = wcs_draw(&g.population(), 100_000, 6, 0).unwrap();
        let mut hits = [0usize; 3];
        b.draws.iter().for_each(|d| hits[d.cluster] += 1);
        for (i, &h) in hits.iter().enumerate() {
            assert!(within_3_sigma(h, 100_000, (i + 1) as f64 / 6.0), "{hits:?}");
        }
        assert!(b.draws.iter().all(|d| d.drawn.len() == d.cluster_size));
    }

    #[test]
    fn twcs_shapes() {
        let g = toy();
        let b = twcs_draw(&g.population(), 50, 1, 3, 0).unwrap();
        assert!(b.draws.iter().all(|d| d.drawn.len() == 1));
        let full = twcs_draw(&g.population(), 50, 3, 3, 0).unwrap();
        assert_eq!(
            full.draws.iter().map(|d| d.cluster).collect::<Vec<_>>(),
            wcs_draw(&g.population(), 50, 3, 0).unwrap().draws.iter().map(|d| d.cluster).collect::<Vec<_>>()
        );
        assert!(full.draws.iter().all(|d| d.drawn.len() == d.cluster_size));
        assert_eq!(twcs_draw(&g.population(), 5, 0, 3, 0), Err(SamplingError::BadM));
    }

    #[test]
    fn twcs_inclusion_matches_closed_form() {
        // P(position t of cluster i in one draw) = M_i/M · min(m, M_i)/M_i
        let g = toy();
        let p = g.population();
        let trials = 1_000_000usize;
        let mut rng = rng::stream(77, &[1]);
        let mut hits = [0usize; 6];
        for _ in 0..trials {
            let d = twcs_unit(&p, 2, &mut rng);
            let mut seen = d.drawn.clone();
            seen.dedup();
            assert_eq!(seen.len(), d.drawn.len());
            d.drawn.iter().for_each(|&t| hits[t] += 1);
        }
        for t in 0..6 {
            let size = g.cluster_size(g.locate(t).0) as f64;
            let expect = size / 6.0 * size.min(2.0) / size;
            assert!(within_3_sigma(hits[t], trials, expect), "t={t} {hits:?}");
        }
    }

    #[test]
    fn first_stage_goodness_of_fit() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let sizes = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        let g = graph_from_sizes(&sizes);
        let b = twcs_draw(&g.population(), 100_000, 3, 8, 0).unwrap();
        let mut hits = [0f64; 10];
        b.draws.iter().for_each(|d| hits[d.cluster] += 1.0);
        let chi2: f64 = sizes
            .iter()
            .zip(hits)
            .map(|(&s, h)| {
                let e = 100_000.0 * s as f64 / 55.0;
                (h - e) * (h - e) / e
            })
            .sum();
        let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(chi2);
        assert!(p > 0.001, "chi2={chi2} p={p}");
    }

    #[test]
    fn subset_frames_restrict_draws() {
        let g = toy();
        let s = Subset::new(&g, vec![0, 2]);
        let b = wcs_draw(&s, 2_000, 1, 0).unwrap();
        assert!(b.draws.iter().all(|d| d.cluster != 1));
    }
}
