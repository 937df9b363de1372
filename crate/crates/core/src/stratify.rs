//! Stratification of clusters and allocation of units across strata.
//!
//! * [`cum_sqrt_f`] cuts the cluster-size histogram where the cumulative
//!   square root of frequency crosses equal steps (Dalenius–Hodges).
//! * [`oracle_strata`] sorts clusters by their true accuracy and cuts into
//!   groups of equal triple mass, snapping each cut to the nearest place
//!   where accuracy actually changes.
//! * [`evolving_batches`] makes one stratum per delta batch.
//!
//! Stratum weights are triple masses `W_h = M[h] / M`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kg::{Frame, KnowledgeGraph, Subset};
use crate::labels::LabelSource;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StratifyError {
    #[error("stratum count must be at least 1")]
    NoStrata,
    #[error("{requested} strata requested but only {distinct} distinct cluster sizes exist")]
    TooManyStrata { requested: usize, distinct: usize },
    #[error("labels do not cover the graph")]
    MissingLabels,
    #[error("cannot allocate {n} units over {h} strata with at least 2 each")]
    TooFewUnits { n: usize, h: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrataMethod {
    SizeCumSqrtF,
    OracleAccuracy,
    EvolvingBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataSpec {
    pub method: StrataMethod,
    pub h: usize,
    /// Upper edge of every stratum but the last: a cluster size, an accuracy,
    /// or a batch id, depending on `method`.
    pub boundaries: Vec<f64>,
    pub weights: Vec<f64>,
    /// Stratum of every graph cluster.
    pub membership: Vec<u32>,
}

impl StrataSpec {
    fn build(g: &KnowledgeGraph, method: StrataMethod, boundaries: Vec<f64>, membership: Vec<u32>) -> Self {
        let h = boundaries.len() + 1;
        let mut mass = vec![0usize; h];
        for (c, &s) in membership.iter().enumerate() {
            mass[s as usize] += g.cluster_size(c);
        }
        let total = g.triple_count() as f64;
        StrataSpec { method, h, boundaries, weights: mass.iter().map(|&m| m as f64 / total).collect(), membership }
    }

    /// Graph cluster indices in stratum `h`.
    pub fn members(&self, h: usize) -> Vec<usize> {
        self.membership.iter().enumerate().filter(|(_, &s)| s as usize == h).map(|(c, _)| c).collect()
    }

    pub fn frames<'g>(&self, g: &'g KnowledgeGraph) -> Vec<Subset<'g>> {
        (0..self.h).map(|h| Subset::new(g, self.members(h))).collect()
    }

    pub fn stratum_of(&self, cluster: usize) -> usize {
        self.membership[cluster] as usize
    }
}

/// Drop empty strata and renumber.
fn compact(boundaries: Vec<f64>, membership: &mut [u32]) -> Vec<f64> {
    let h = boundaries.len() + 1;
    let mut used = vec![false; h];
    membership.iter().for_each(|&s| used[s as usize] = true);
    let mut remap = vec![0u32; h];
    let mut next = 0;
    let mut kept = Vec::new();
    for s in 0..h {
        remap[s] = next;
        if used[s] {
            if s < h - 1 && used[s + 1..].iter().any(|&u| u) {
                kept.push(boundaries[s]);
            }
            next += 1;
        }
    }
    membership.iter_mut().for_each(|s| *s = remap[*s as usize]);
    // boundaries of trailing strata that vanished were skipped above; a kept
    // stratum's edge is the edge of the last original stratum merged into it
    kept
}

/// Cumulative-√F stratification on cluster size.
///
/// A size value whose cumulative interval straddles a cut goes to the lower
/// stratum. Strata left empty by very frequent values are dropped, so the
/// result may have fewer than `h` strata.
pub fn cum_sqrt_f(g: &KnowledgeGraph, h: usize) -> Result<StrataSpec, StratifyError> {
    if h == 0 {
        return Err(StratifyError::NoStrata);
    }
    let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
    for c in 0..g.cluster_count() {
        *freq.entry(g.cluster_size(c)).or_insert(0) += 1;
    }
    if h > freq.len() {
        return Err(StratifyError::TooManyStrata { requested: h, distinct: freq.len() });
    }
    let total: f64 = freq.values().map(|&f| (f as f64).sqrt()).sum();
    let step = total / h as f64;
    let mut stratum_of_size = BTreeMap::new();
    let mut upper = vec![0usize; h];
    let mut acc = 0.0;
    for (&size, &f) in &freq {
        let s = ((acc / step + 1e-9).floor() as usize).min(h - 1);
        stratum_of_size.insert(size, s as u32);
        upper[s] = size;
        acc += (f as f64).sqrt();
    }
    let mut membership: Vec<u32> = (0..g.cluster_count()).map(|c| stratum_of_size[&g.cluster_size(c)]).collect();
    let boundaries = compact(upper[..h - 1].iter().map(|&u| u as f64).collect(), &mut membership);
    Ok(StrataSpec::build(g, StrataMethod::SizeCumSqrtF, boundaries, membership))
}

/// Stratify by true cluster accuracy into groups of about equal triple mass.
pub fn oracle_strata(g: &KnowledgeGraph, ls: &LabelSource, h: usize) -> Result<StrataSpec, StratifyError> {
    if h == 0 {
        return Err(StratifyError::NoStrata);
    }
    if ls.len() != g.triple_count() {
        return Err(StratifyError::MissingLabels);
    }
    let acc: Vec<f64> = (0..g.cluster_count()).map(|c| ls.cluster_accuracy(g, c)).collect();
    let mut order: Vec<usize> = (0..g.cluster_count()).collect();
    order.sort_by(|&a, &b| acc[a].total_cmp(&acc[b]).then(a.cmp(&b)));

    // cumulative mass after each sorted cluster, and the indices after which μ changes
    let mut cum = Vec::with_capacity(order.len());
    let mut run = 0usize;
    for &c in &order {
        run += g.cluster_size(c);
        cum.push(run);
    }
    let change: Vec<usize> = (0..order.len() - 1).filter(|&i| acc[order[i]] != acc[order[i + 1]]).collect();
    let total = g.triple_count() as f64;
    let targets: Vec<f64> = (1..h).map(|j| total * j as f64 / h as f64).collect();

    let mut cuts: Vec<usize> = if change.is_empty() {
        targets.iter().map(|&t| cum.partition_point(|&m| (m as f64) < t).min(order.len() - 1)).collect()
    } else {
        targets
            .iter()
            .map(|&t| {
                *change
                    .iter()
                    .min_by(|&&a, &&b| (cum[a] as f64 - t).abs().total_cmp(&(cum[b] as f64 - t).abs()))
                    .unwrap()
            })
            .collect()
    };
    cuts.sort_unstable();
    cuts.dedup();
    cuts.retain(|&i| i + 1 < order.len());

    let mut membership = vec![0u32; g.cluster_count()];
    let mut s = 0u32;
    let mut next_cut = cuts.iter().peekable();
    for (i, &c) in order.iter().enumerate() {
        membership[c] = s;
        if next_cut.peek() == Some(&&i) {
            next_cut.next();
            s += 1;
        }
    }
    let boundaries = cuts.iter().map(|&i| acc[order[i]]).collect();
    Ok(StrataSpec::build(g, StrataMethod::OracleAccuracy, boundaries, membership))
}

/// One stratum per batch id, in increasing batch order.
pub fn evolving_batches(g: &KnowledgeGraph) -> StrataSpec {
    let ids: Vec<u64> = {
        let mut v: Vec<u64> = g.clusters().iter().map(|c| c.batch_id()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let membership = g.clusters().iter().map(|c| ids.binary_search(&c.batch_id()).unwrap() as u32).collect();
    let boundaries = ids[..ids.len() - 1].iter().map(|&b| b as f64).collect();
    StrataSpec::build(g, StrataMethod::EvolvingBatch, boundaries, membership)
}

/// Spread `n` units over strata: Neyman (`∝ W_h σ_h`) when standard
/// deviations are given and not all zero, proportional otherwise. Every
/// stratum gets at least 2; leftovers go by largest fractional part.
pub fn allocate(weights: &[f64], n: usize, sds: Option<&[f64]>) -> Result<Vec<usize>, StratifyError> {
    let h = weights.len();
    if h == 0 {
        return Err(StratifyError::NoStrata);
    }
    if n < 2 * h {
        return Err(StratifyError::TooFewUnits { n, h });
    }
    let mut score: Vec<f64> = match sds {
        Some(s) if s.iter().zip(weights).any(|(&sd, &w)| sd * w > 0.0) => {
            weights.iter().zip(s).map(|(&w, &sd)| w * sd).collect()
        }
        _ => weights.to_vec(),
    };
    if score.iter().all(|&x| x <= 0.0) {
        score = vec![1.0; h];
    }

    let mut fixed = vec![false; h];
    let mut ideal = vec![0.0; h];
    loop {
        let free_n = n as f64 - 2.0 * fixed.iter().filter(|&&f| f).count() as f64;
        let free_score: f64 = (0..h).filter(|&i| !fixed[i]).map(|i| score[i]).sum();
        let mut changed = false;
        for i in 0..h {
            if fixed[i] {
                ideal[i] = 2.0;
                continue;
            }
            ideal[i] = if free_score > 0.0 { free_n * score[i] / free_score } else { 0.0 };
            if ideal[i] < 2.0 {
                fixed[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut out: Vec<usize> = ideal.iter().map(|&x| x.floor() as usize).collect();
    let mut left = n - out.iter().sum::<usize>();
    let mut by_frac: Vec<usize> = (0..h).collect();
    by_frac.sort_by(|&a, &b| (ideal[b] - ideal[b].floor()).total_cmp(&(ideal[a] - ideal[a].floor())).then(a.cmp(&b)));
    for &i in by_frac.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    Ok(out)
}

/// Mass-weighted variance of cluster accuracies within a frame.
pub fn accuracy_spread<F: Frame + ?Sized>(frame: &F, ls: &LabelSource) -> f64 {
    let g = frame.graph();
    let m = frame.triple_count() as f64;
    let pts: Vec<(f64, f64)> = (0..frame.cluster_count())
        .map(|k| {
            let c = frame.cluster(k);
            (g.cluster_size(c) as f64 / m, ls.cluster_accuracy(g, c))
        })
        .collect();
    let mean: f64 = pts.iter().map(|(w, a)| w * a).sum();
    pts.iter().map(|(w, a)| w * (a - mean) * (a - mean)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{gen_bmm, BmmParams};
    use crate::synth::{graph, graph_from_sizes, SizeLaw};
    use proptest::prelude::*;

    #[test]
    fn cum_sqrt_f_by_hand() {
        let g = graph_from_sizes(&[1, 1, 1, 1, 2, 3]);
        let s = cum_sqrt_f(&g, 2).unwrap();
        assert_eq!(s.membership, vec![0, 0, 0, 0, 1, 1]);
        assert_eq!(s.boundaries, vec![1.0]);
        assert_eq!(s.weights, vec![4.0 / 9.0, 5.0 / 9.0]);

        let one = cum_sqrt_f(&g, 1).unwrap();
        assert_eq!((one.h, one.weights.clone()), (1, vec![1.0]));

        let flat = graph_from_sizes(&[2, 2, 2]);
        assert!(matches!(cum_sqrt_f(&flat, 2), Err(StratifyError::TooManyStrata { .. })));
    }

    #[test]
    fn dominant_value_collapses_strata() {
        // √f = {10, 1, 1}: the first value spans both cuts at 4 and 8
        let mut sizes = vec![1; 100];
        sizes.extend([2, 3]);
        let g = graph_from_sizes(&sizes);
        let s = cum_sqrt_f(&g, 3).unwrap();
        assert_eq!(s.h, 2);
        assert_eq!(s.members(1), vec![100, 101]);
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_separates_bimodal_accuracy() {
        let g = graph_from_sizes(&[2, 3, 1, 4, 2]);
        let ls =
            LabelSource::fixture(vec![true, true, false, false, false, true, true, true, true, true, false, false]);
        let s = oracle_strata(&g, &ls, 2).unwrap();
        assert_eq!(s.members(0), vec![1, 4]);
        assert_eq!(s.members(1), vec![0, 2, 3]);
    }

    #[test]
    fn oracle_with_constant_accuracy_cuts_by_mass() {
        let g = graph_from_sizes(&[1, 1, 1, 1]);
        let s = oracle_strata(&g, &LabelSource::fixture(vec![true; 4]), 2).unwrap();
        assert_eq!(s.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn oracle_reduces_spread_on_bmm() {
        let g = graph(SizeLaw::MOVIE_LIKE, 60_000, 3);
        let ls = gen_bmm(&g, BmmParams::default(), 4).unwrap();
        let s = oracle_strata(&g, &ls, 4).unwrap();
        let total = accuracy_spread(&g.population(), &ls);
        for f in s.frames(&g) {
            assert!(accuracy_spread(&f, &ls) < total);
        }
    }

    #[test]
    fn evolving_strata_follow_batches() {
        use crate::kg::{DeltaBatch, DeltaMode, ObjectKind, Triple};
        let g = graph_from_sizes(&[1, 2]);
        let d = DeltaBatch::from_triples(4, vec![Triple::new("e0", "q", "z", ObjectKind::Data)]);
        let g = g.with_delta(&d, DeltaMode::Independent).unwrap();
        let s = evolving_batches(&g);
        assert_eq!(s.membership, vec![0, 0, 1]);
        assert_eq!(s.weights, vec![0.75, 0.25]);
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate(&[0.5, 0.5], 10, Some(&[0.3, 0.3])).unwrap(), vec![5, 5]);
        assert_eq!(allocate(&[0.9, 0.1], 10, Some(&[0.4, 0.4])).unwrap(), vec![8, 2]);
        assert_eq!(allocate(&[1.0], 17, None).unwrap(), vec![17]);
        assert_eq!(allocate(&[0.5, 0.5], 3, None), Err(StratifyError::TooFewUnits { n: 3, h: 2 }));
        // Neyman moves units to the noisier stratum
        let a = allocate(&[0.5, 0.5], 40, Some(&[0.1, 0.3])).unwrap();
        assert_eq!(a, vec![10, 30]);
    }

    proptest! {
        #[test]
        fn allocation_is_exact_and_floored(
            w in prop::collection::vec(0.0f64..1.0, 1..8),
            sd in prop::collection::vec(0.0f64..0.5, 8),
            extra in 0usize..200,
        ) {
            let total: f64 = w.iter().sum::<f64>() + 1e-9;
            let w: Vec<f64> = w.iter().map(|x| (x + 1e-9 / w.len() as f64) / total).collect();
            let n = 2 * w.len() + extra;
            let a = allocate(&w, n, Some(&sd[..w.len()])).unwrap();
            prop_assert_eq!(a.iter().sum::<usize>(), n);
            prop_assert!(a.iter().all(|&x| x >= 2));
        }

        #[test]
        fn strata_partition_every_cluster(sizes in prop::collection::vec(1usize..30, 2..60), h in 1usize..5) {
            let g = graph_from_sizes(&sizes);
            if let Ok(s) = cum_sqrt_f(&g, h) {
                prop_assert_eq!(s.membership.len(), sizes.len());
                let all: usize = (0..s.h).map(|i| s.members(i).len()).sum();
                prop_assert_eq!(all, sizes.len());
                prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(s.boundaries.windows(2).all(|b| b[0] < b[1]));
                prop_assert!(s.weights.iter().all(|&w| w > 0.0));
            }
        }

        #[test]
        fn oracle_strata_never_increase_spread(
            sizes in prop::collection::vec(1usize..12, 2..40),
            bits in prop::collection::vec(any::<bool>(), 500),
            h in 1usize..5,
        ) {
            let g = graph_from_sizes(&sizes);
            let ls = LabelSource::fixture(bits[..g.triple_count()].to_vec());
            let s = oracle_strata(&g, &ls, h).unwrap();
            let within: f64 = s.frames(&g).iter().zip(&s.weights).map(|(f, w)| w * accuracy_spread(f, &ls)).sum();
            prop_assert!(within <= accuracy_spread(&g.population(), &ls) + 1e-12);
        }
    }
}
