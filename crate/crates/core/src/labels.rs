//! Triple correctness labels.
//!
//! A [`LabelSource`] holds one `bool` per triple position. Labels come from a
//! fixture or from one of two generators:
//!
//! * **REM** (random error model): every triple is wrong with a fixed
//!   probability `r_eps`.
//! * **BMM** (binomial mixture model): cluster `i` gets a correctness
//!   probability `p_i` that rises with its size, and its triples are
//!   Bernoulli(`p_i`).
//!
//! Generators draw from one stream per cluster index, so the labels of a
//! cluster do not change when clusters are appended after it. An evolving
//! graph can therefore be labelled segment by segment with
//! [`LabelSource::extend`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kg::KnowledgeGraph;
use crate::rng::{self, tag};

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("labels cover {found} of {expected} triples; first missing positions {missing:?}")]
    Coverage { expected: usize, found: usize, missing: Vec<usize> },
    #[error("labels must start at a cluster boundary, position {0} is inside a cluster")]
    Misaligned(usize),
    #[error("label file was written for graph {found}, not {expected}")]
    GraphMismatch { found: String, expected: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Fixture,
    Rem,
    Bmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmmParams {
    /// Size threshold below which clusters are coin flips.
    pub k: usize,
    /// Slope of the sigmoid in cluster size.
    pub c: f64,
    /// Standard deviation of the per-cluster noise.
    pub sigma: f64,
}

impl Default for BmmParams {
    fn default() -> Self {
        BmmParams { k: 3, c: 0.01, sigma: 0.1 }
    }
}

impl BmmParams {
    pub fn validate(&self) -> Result<(), LabelError> {
        if self.k < 1 {
            return Err(LabelError::InvalidParam("k must be at least 1".into()));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(LabelError::InvalidParam(format!("c must be finite and non-negative, got {}", self.c)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(LabelError::InvalidParam(format!("sigma must be finite and non-negative, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Noise-free correctness probability of a cluster of `size` triples.
    pub fn base_probability(&self, size: usize) -> f64 {
        if size < self.k {
            0.5
        } else {
            1.0 / (1.0 + (-self.c * (size - self.k) as f64).exp())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Generator {
    Rem { r_eps: f64 },
    Bmm(BmmParams),
}

impl Generator {
    pub fn validate(&self) -> Result<(), LabelError> {
        match self {
            Generator::Rem { r_eps } if !(0.0..=1.0).contains(r_eps) => {
                Err(LabelError::InvalidParam(format!("r_eps must lie in [0, 1], got {r_eps}")))
            }
            Generator::Rem { .. } => Ok(()),
            Generator::Bmm(p) => p.validate(),
        }
    }

    pub fn provenance(&self) -> Provenance {
        match self {
            Generator::Rem { .. } => Provenance::Rem,
            Generator::Bmm(_) => Provenance::Bmm,
        }
    }

    /// Labels for one cluster.
    fn cluster(&self, index: usize, size: usize, seed: u64) -> Vec<bool> {
        match *self {
            Generator::Rem { r_eps } => {
                let mut rng = rng::stream(seed, &[tag::REM, index as u64]);
                (0..size).map(|_| rng.random::<f64>() >= r_eps).collect()
            }
            Generator::Bmm(p) => {
                let mut rng = rng::stream(seed, &[tag::BMM, index as u64]);
                let eps = if p.sigma > 0.0 {
                    Normal::new(0.0, p.sigma).expect("validated sigma").sample(&mut rng)
                } else {
                    0.0
                };
                let p_hat = (p.base_probability(size) + eps).clamp(0.0, 1.0);
                (0..size).map(|_| rng.random::<f64>() < p_hat).collect()
            }
        }
    }
}

/// Generator applied to clusters `first_cluster..` with its own seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub first_cluster: usize,
    pub generator: Generator,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSource {
    labels: Vec<bool>,
    provenance: Provenance,
    segments: Vec<Segment>,
}

impl LabelSource {
    pub fn fixture(labels: Vec<bool>) -> Self {
        LabelSource { labels, provenance: Provenance::Fixture, segments: Vec::new() }
    }

    /// Label every cluster of `g` with one generator.
    pub fn generate(g: &KnowledgeGraph, generator: Generator, seed: u64) -> Result<Self, LabelError> {
        let mut ls = LabelSource { labels: Vec::new(), provenance: generator.provenance(), segments: Vec::new() };
        ls.extend(g, generator, seed)?;
        Ok(ls)
    }

    /// Label the clusters of `g` not yet covered.
    pub fn extend(&mut self, g: &KnowledgeGraph, generator: Generator, seed: u64) -> Result<(), LabelError> {
        generator.validate()?;
        let start = self.labels.len();
        let first = g.offsets().partition_point(|&o| o < start);
        if first > g.cluster_count() || g.offset(first) != start {
            return Err(LabelError::Misaligned(start));
        }
        let chunks: Vec<Vec<bool>> =
            (first..g.cluster_count()).into_par_iter().map(|i| generator.cluster(i, g.cluster_size(i), seed)).collect();
        self.labels.extend(chunks.into_iter().flatten());
        self.segments.push(Segment { first_cluster: first, generator, seed });
        Ok(())
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, position: usize) -> bool {
        self.labels[position]
    }

    pub fn covers(&self, g: &KnowledgeGraph) -> Result<(), LabelError> {
        if self.labels.len() == g.triple_count() {
            return Ok(());
        }
        Err(LabelError::Coverage {
            expected: g.triple_count(),
            found: self.labels.len(),
            missing: (self.labels.len()..g.triple_count()).take(10).collect(),
        })
    }

    /// Correct triples in cluster `c`.
    pub fn cluster_correct(&self, g: &KnowledgeGraph, c: usize) -> usize {
        self.labels[g.offset(c)..g.offset(c + 1)].iter().filter(|&&l| l).count()
    }

    pub fn cluster_accuracy(&self, g: &KnowledgeGraph, c: usize) -> f64 {
        self.cluster_correct(g, c) as f64 / g.cluster_size(c) as f64
    }

    /// Fraction of correct triples over a position range.
    pub fn accuracy_of(&self, positions: std::ops::Range<usize>) -> f64 {
        let n = positions.len();
        self.labels[positions].iter().filter(|&&l| l).count() as f64 / n as f64
    }

    /// Write `position<TAB>label` rows under a graph-checksum header.
    pub fn write_tsv(&self, g: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<(), LabelError> {
        self.covers(g)?;
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# graph-checksum: {}", g.checksum())?;
        writeln!(w, "position\tlabel")?;
        for (i, &l) in self.labels.iter().enumerate() {
            writeln!(w, "{i}\t{}", l as u8)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a file written by [`LabelSource::write_tsv`] for graph `g`.
    pub fn read_tsv(g: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<Self, LabelError> {
        let mut labels = vec![None; g.triple_count()];
        let expected = g.checksum();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if let Some(sum) = line.strip_prefix("# graph-checksum:") {
                let sum = sum.trim();
                if sum != expected {
                    return Err(LabelError::GraphMismatch { found: sum.into(), expected });
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') || line.starts_with("position") {
                continue;
            }
            let err = |message: &str| LabelError::Parse { line: lineno, message: message.into() };
            let (pos, label) = line.split_once('\t').ok_or_else(|| err("expected position<TAB>label"))?;
            let pos: usize = pos.trim().parse().map_err(|_| err("bad position"))?;
            let label = match label.trim() {
                "1" => true,
                "0" => false,
                _ => return Err(err("label must be 0 or 1")),
            };
            *labels.get_mut(pos).ok_or_else(|| err("position beyond graph"))? = Some(label);
        }
        let missing: Vec<usize> = labels.iter().enumerate().filter(|(_, l)| l.is_none()).map(|(i, _)| i).collect();
        if !missing.is_empty() {
            return Err(LabelError::Coverage {
                expected: g.triple_count(),
                found: g.triple_count() - missing.len(),
                missing: missing.into_iter().take(10).collect(),
            });
        }
        Ok(LabelSource::fixture(labels.into_iter().map(Option::unwrap).collect()))
    }
}

pub fn gen_rem(g: &KnowledgeGraph, r_eps: f64, seed: u64) -> Result<LabelSource, LabelError> {
    LabelSource::generate(g, Generator::Rem { r_eps }, seed)
}

pub fn gen_bmm(g: &KnowledgeGraph, params: BmmParams, seed: u64) -> Result<LabelSource, LabelError> {
    LabelSource::generate(g, Generator::Bmm(params), seed)
}

/// Exact fraction of correct triples in `g`.
pub fn true_accuracy(g: &KnowledgeGraph, ls: &LabelSource) -> Result<f64, LabelError> {
    ls.covers(g)?;
    Ok(ls.accuracy_of(0..g.triple_count()))
}
