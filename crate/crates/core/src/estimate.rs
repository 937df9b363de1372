//! Point estimates, variances and Normal confidence intervals.
//!
//! | design | point estimate | variance estimate |
//! |---|---|---|
//! | SRS | `x̄` over triple labels | `x̄(1 − x̄)/n` |
//! | RCS | `N/(M n) · Σ τ_k` | `Σ ((N/M) τ_k − μ̂)² / (n(n−1))` |
//! | WCS, TWCS | mean of per-draw accuracies | `Σ (μ_k − μ̂)² / (n(n−1))` |
//! | stratified | `Σ W_h μ̂_h` | `Σ W_h² var_h` |
//!
//! `τ_k` is the number of correct triples in draw `k`. The point formulas
//! are generic over [`Scalar`] so tests can evaluate them in exact rational
//! arithmetic.
//!
//! With fewer than two units the variance is undefined and reported as
//! `+∞`, so a stopping rule can never fire on a single draw.

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::cost::SampleFootprint;
use crate::normal;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimateError {
    #[error("no sample units")]
    Empty,
    #[error("stratum weights sum to {0}, not 1")]
    Weights(f64),
    #[error("stratum {0} has no defined variance (fewer than two units)")]
    UndefinedStratum(usize),
}

/// Numbers the point estimators can run on.
pub trait Scalar: Num + Clone + FromPrimitive {}
impl<T: Num + Clone + FromPrimitive> Scalar for T {}

fn lift<S: Scalar>(x: usize) -> S {
    S::from_usize(x).expect("count fits the scalar type")
}

/// Mean of a non-empty slice.
pub fn mean<S: Scalar>(xs: &[S]) -> S {
    let n = lift::<S>(xs.len());
    xs.iter().cloned().fold(S::zero(), |a, b| a + b) / n
}

pub fn srs_point<S: Scalar>(labels: &[bool]) -> S {
    lift::<S>(labels.iter().filter(|&&l| l).count()) / lift::<S>(labels.len())
}

/// `N/(M n) · Σ τ_k` for correct counts `taus` from a graph of `n_clusters`
/// clusters and `n_triples` triples.
pub fn rcs_point<S: Scalar>(taus: &[usize], n_clusters: usize, n_triples: usize) -> S {
    let sum = lift::<S>(taus.iter().sum());
    lift::<S>(n_clusters) * sum / (lift::<S>(n_triples) * lift::<S>(taus.len()))
}

/// Mean of `correct/drawn` over draws; serves WCS and TWCS.
pub fn cluster_mean_point<S: Scalar>(draws: &[(usize, usize)]) -> S {
    let accs: Vec<S> = draws.iter().map(|&(c, n)| lift::<S>(c) / lift::<S>(n)).collect();
    mean(&accs)
}

pub fn stratified_point<S: Scalar>(parts: &[(S, S)]) -> S {
    parts.iter().cloned().fold(S::zero(), |a, (w, mu)| a + w * mu)
}

/// Serde helper: non-finite floats become `null` and come back as `+∞`.
mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mu_hat: f64,
    #[serde(with = "lenient_f64")]
    pub variance_hat: f64,
    #[serde(with = "lenient_f64")]
    pub moe: f64,
    /// `mu_hat ± moe`, clipped to `[0, 1]`.
    pub ci: (f64, f64),
    pub alpha: f64,
    pub n_units: usize,
    pub n_triples: usize,
    pub footprint: SampleFootprint,
    /// Zero estimated variance: every unit agreed.
    pub degenerate: bool,
}

impl Estimate {
    pub fn new(mu_hat: f64, variance_hat: f64, alpha: f64, n_units: usize, n_triples: usize) -> Self {
        let moe = normal::z_two_sided(alpha) * variance_hat.sqrt();
        Estimate {
            mu_hat,
            variance_hat,
            moe,
            ci: ((mu_hat - moe).clamp(0.0, 1.0), (mu_hat + moe).clamp(0.0, 1.0)),
            alpha,
            n_units,
            n_triples,
            footprint: SampleFootprint::default(),
            degenerate: variance_hat == 0.0,
        }
    }

    pub fn with_footprint(mut self, fp: SampleFootprint) -> Self {
        self.footprint = fp;
        self
    }

    /// `mu_hat ± moe` without clipping.
    pub fn raw_interval(&self) -> (f64, f64) {
        (self.mu_hat - self.moe, self.mu_hat + self.moe)
    }

    /// MoE used for stopping. A zero variance is replaced by `(n−1)/n³`,
    /// the variance of a proportion over the same `n` units with one of
    /// them flipped, so a run of agreeing units cannot stop on its own.
    pub fn stopping_moe(&self) -> f64 {
        normal::z_two_sided(self.alpha) * self.stopping_variance().sqrt()
    }

    /// Stopping-rule variance, see [`Estimate::stopping_moe`].
    pub fn stopping_variance(&self) -> f64 {
        if self.degenerate {
            let n = self.n_units as f64;
            (n - 1.0) / (n * n * n)
        } else {
            self.variance_hat
        }
    }
}

fn between_variance(xs: &[f64], centre: f64) -> f64 {
    if xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let n = xs.len() as f64;
    xs.iter().map(|x| (x - centre) * (x - centre)).sum::<f64>() / (n * (n - 1.0))
}

pub fn est_srs(labels: &[bool], alpha: f64) -> Result<Estimate, EstimateError> {
    if labels.is_empty() {
        return Err(EstimateError::Empty);
    }
    let n = labels.len();
    let mu: f64 = srs_point(labels);
    let var = if n < 2 { f64::INFINITY } else { mu * (1.0 - mu) / n as f64 };
    Ok(Estimate::new(mu, var, alpha, n, n))
}

/// `taus` are correct counts per draw, `sizes` the drawn cluster sizes.
pub fn est_rcs(
    taus: &[usize],
    sizes: &[usize],
    n_clusters: usize,
    n_triples: usize,
    alpha: f64,
) -> Result<Estimate, EstimateError> {
    if taus.is_empty() {
        return Err(EstimateError::Empty);
    }
    let n = taus.len();
    let mu: f64 = rcs_point(taus, n_clusters, n_triples);
    let scale = n_clusters as f64 / n_triples as f64;
    let scaled: Vec<f64> = taus.iter().map(|&t| scale * t as f64).collect();
    let var = if n < 2 { f64::INFINITY } else { between_variance(&scaled, mu) };
    Ok(Estimate::new(mu, var, alpha, n, sizes.iter().sum()))
}

/// Hansen–Hurwitz estimate from per-draw cluster accuracies.
pub fn est_wcs(accuracies: &[f64], n_triples: usize, alpha: f64) -> Result<Estimate, EstimateError> {
    if accuracies.is_empty() {
        return Err(EstimateError::Empty);
    }
    let n = accuracies.len();
    let mu = accuracies.iter().sum::<f64>() / n as f64;
    let var = if n < 2 { f64::INFINITY } else { between_variance(accuracies, mu) };
    Ok(Estimate::new(mu, var, alpha, n, n_triples))
}

/// Two-stage estimate from per-draw second-stage accuracies.
pub fn est_twcs(accuracies: &[f64], n_triples: usize, alpha: f64) -> Result<Estimate, EstimateError> {
    est_wcs(accuracies, n_triples, alpha)
}

/// Combine independent stratum estimates with weights summing to one.
pub fn est_stratified(strata: &[(f64, &Estimate)], alpha: f64) -> Result<Estimate, EstimateError> {
    if strata.is_empty() {
        return Err(EstimateError::Empty);
    }
    let wsum: f64 = strata.iter().map(|s| s.0).sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(EstimateError::Weights(wsum));
    }
    if let Some(i) = strata.iter().position(|(w, e)| *w > 0.0 && !e.variance_hat.is_finite()) {
        return Err(EstimateError::UndefinedStratum(i));
    }
    let mu = strata.iter().map(|(w, e)| w * e.mu_hat).sum();
    let var = strata.iter().map(|(w, e)| w * w * e.variance_hat).sum();
    let mut out = Estimate::new(
        mu,
        var,
        alpha,
        strata.iter().map(|s| s.1.n_units).sum(),
        strata.iter().map(|s| s.1.n_triples).sum(),
    );
    out.footprint = strata.iter().fold(SampleFootprint::default(), |a, s| a + s.1.footprint);
    // a stratum that merely has not varied yet is not evidence of zero variance overall
    out.degenerate = strata.iter().all(|(w, e)| *w == 0.0 || e.degenerate);
    Ok(out)
}

/// Stopping-rule variance of a stratified combination, applying the
/// zero-variance floor stratum by stratum.
pub fn stratified_stopping_variance(strata: &[(f64, &Estimate)]) -> f64 {
    strata.iter().map(|(w, e)| w * w * e.stopping_variance()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    #[test]
    fn srs_examples() {
        let all = est_srs(&[true; 40], 0.05).unwrap();
        assert_eq!((all.mu_hat, all.moe, all.degenerate), (1.0, 0.0, true));
        let flipped = est_srs(&[[true; 39].as_slice(), &[false]].concat(), 0.05).unwrap();
        assert!((all.stopping_moe() - flipped.moe).abs() < 1e-15);
        assert!(all.stopping_moe() < 0.05 && est_srs(&[true; 30], 0.05).unwrap().stopping_moe() > 0.05);

        let mut labels = vec![true; 153];
        labels.extend([false; 21]);
        let e = est_srs(&labels, 0.05).unwrap();
        assert!((e.mu_hat - 0.879).abs() < 0.001);
        let hand = 1.959_963_984_540_054 * (e.mu_hat * (1.0 - e.mu_hat) / 174.0).sqrt();
        assert!((e.moe - hand).abs() < 1e-12);
        assert!((e.moe - 0.0485).abs() < 0.0005);

        let half = est_srs(&[true, false], 0.05).unwrap();
        assert_eq!((half.mu_hat, half.variance_hat), (0.5, 0.125));
        assert_eq!(est_srs(&[], 0.05), Err(EstimateError::Empty));
    }

    #[test]
    fn rcs_examples() {
        let e = est_rcs(&[3, 3, 3], &[3, 3, 3], 4, 12, 0.05).unwrap();
        assert_eq!(e.mu_hat, 1.0);
        let one = est_rcs(&[2], &[3], 3, 6, 0.05).unwrap();
        assert!(one.moe.is_infinite());
        assert_eq!(est_rcs(&[], &[], 3, 6, 0.05), Err(EstimateError::Empty));
    }

    #[test]
    fn wcs_examples() {
        let same = est_wcs(&[0.7, 0.7, 0.7], 9, 0.05).unwrap();
        assert_eq!((same.variance_hat, same.degenerate), (0.0, true));
        let two = est_wcs(&[0.5, 1.0], 4, 0.05).unwrap();
        assert_eq!((two.mu_hat, two.variance_hat), (0.75, 0.0625));
        let t = est_twcs(&[1.0, 0.5, 1.0, 0.5], 8, 0.05).unwrap();
        assert_eq!(t.mu_hat, 0.75);
        assert!(est_twcs(&[0.4], 1, 0.05).unwrap().moe.is_infinite());
    }

    #[test]
    fn stratified_examples() {
        let a = Estimate::new(0.8, 0.001, 0.05, 30, 30);
        let b = Estimate::new(0.6, 0.002, 0.05, 30, 30);
        let s = est_stratified(&[(0.5, &a), (0.5, &b)], 0.05).unwrap();
        assert!((s.mu_hat - 0.7).abs() < 1e-15);
        assert!((s.variance_hat - 0.25 * 0.003).abs() < 1e-15);

        let solo = est_stratified(&[(1.0, &a)], 0.05).unwrap();
        assert_eq!((solo.mu_hat, solo.variance_hat), (a.mu_hat, a.variance_hat));

        let g = Estimate::new(0.9, 0.0, 0.05, 30, 30);
        let d = Estimate::new(0.8, 0.0, 0.05, 30, 30);
        let c = est_stratified(&[(100.0 / 150.0, &g), (50.0 / 150.0, &d)], 0.05).unwrap();
        assert!((c.mu_hat - 2.6 / 3.0).abs() < 1e-12);
        assert_eq!(c.moe, 0.0);

        assert!(matches!(est_stratified(&[(0.5, &a)], 0.05), Err(EstimateError::Weights(_))));
        let undefined = Estimate::new(0.5, f64::INFINITY, 0.05, 1, 1);
        assert_eq!(est_stratified(&[(0.5, &a), (0.5, &undefined)], 0.05), Err(EstimateError::UndefinedStratum(1)));
    }

    #[test]
    fn exact_points() {
        type Q = Ratio<i128>;
        assert_eq!(srs_point::<Q>(&[true, false, true]), Q::new(2, 3));
        assert_eq!(rcs_point::<Q>(&[1, 2], 3, 6), Q::new(3 * 3, 6 * 2));
        assert_eq!(cluster_mean_point::<Q>(&[(1, 2), (2, 3)]), Q::new(7, 12));
        assert_eq!(stratified_point(&[(Q::new(2, 3), Q::new(9, 10)), (Q::new(1, 3), Q::new(4, 5))]), Q::new(13, 15));
    }

    #[test]
    fn json_keeps_infinite_moe_as_null() {
        let e = est_wcs(&[0.4], 1, 0.05).unwrap();
        let s = serde_json::to_string(&e).unwrap();
        assert!(s.contains("\"moe\":null"));
        let back: Estimate = serde_json::from_str(&s).unwrap();
        assert!(back.moe.is_infinite());
    }

    proptest! {
        #[test]
        fn moe_shrinks_with_n(p in 0.01f64..0.99, n in 2usize..5000) {
            let a = Estimate::new(p, p * (1.0 - p) / n as f64, 0.05, n, n);
            let b = Estimate::new(p, p * (1.0 - p) / (n + 1) as f64, 0.05, n + 1, n + 1);
            prop_assert!(b.moe <= a.moe);
        }

        #[test]
        fn stratified_variance_bounded_by_worst(parts in prop::collection::vec((0.01f64..1.0, 0.0f64..0.1), 1..6)) {
            let total: f64 = parts.iter().map(|p| p.0).sum();
            let ests: Vec<Estimate> = parts.iter().map(|&(_, v)| Estimate::new(0.5, v, 0.05, 10, 10)).collect();
            let strata: Vec<(f64, &Estimate)> = parts.iter().zip(&ests).map(|(p, e)| (p.0 / total, e)).collect();
            let s = est_stratified(&strata, 0.05).unwrap();
            let worst = parts.iter().map(|p| p.1).fold(0.0, f64::max);
            prop_assert!(s.variance_hat <= worst + 1e-15);
        }

        #[test]
        fn reported_ci_is_clipped(mu in 0.0f64..=1.0, v in 0.0f64..1.0) {
            let e = Estimate::new(mu, v, 0.05, 10, 10);
            prop_assert!(0.0 <= e.ci.0 && e.ci.1 <= 1.0 && e.ci.0 <= e.ci.1);
        }
    }
}
