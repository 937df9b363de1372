use std::path::Path;

use kgacc::kg::{self, InputFormat, KnowledgeGraph};
use kgacc::labels::{BmmParams, Generator, LabelSource};
use kgacc::sim;
use kgacc::synth::{self, SizeLaw};

use crate::args::{Format, GraphArgs, LabelArgs, Model};
use crate::error::{Classify, CliError, CliResult};

pub struct Loaded {
    pub graph: KnowledgeGraph,
    /// Labels that came with the input: the fixture, or a TSV label column.
    pub embedded: Option<LabelSource>,
}

pub fn format_of(path: &Path, f: Option<Format>) -> InputFormat {
    match f {
        Some(Format::Tsv) => InputFormat::Tsv,
        Some(Format::Ntriples) => InputFormat::NtriplesLike,
        None => InputFormat::from_path(path),
    }
}

fn is_snapshot(path: &Path) -> CliResult<bool> {
    use std::io::Read;
    let mut magic = [0u8; 4];
    let mut f = std::fs::File::open(path).input(format!("cannot open {}", path.display()))?;
    let n = f.read(&mut magic).input(format!("cannot read {}", path.display()))?;
    Ok(n == 4 && &magic == b"KGSN")
}

/// Read triples or a snapshot, with any labels the input carries.
pub fn read_graph(path: &Path, format: Option<Format>) -> CliResult<Loaded> {
    if is_snapshot(path)? {
        let graph = kg::restore(path).input(format!("cannot restore snapshot {}", path.display()))?;
        return Ok(Loaded { graph, embedded: None });
    }
    let (graph, labels) =
        kg::ingest_labeled(path, format_of(path, format)).input(format!("cannot ingest {}", path.display()))?;
    Ok(Loaded { graph, embedded: labels.map(LabelSource::fixture) })
}

pub fn load_graph(a: &GraphArgs) -> CliResult<Loaded> {
    if let Some(p) = &a.graph {
        return read_graph(p, a.format);
    }
    if a.fixture.is_some() {
        let (graph, labels) = sim::nell_fixture();
        return Ok(Loaded { graph, embedded: Some(labels) });
    }
    if let Some(n) = a.synthetic {
        if n == 0 {
            return Err(CliError::config("--synthetic needs at least one triple"));
        }
        return Ok(Loaded { graph: synth::graph(SizeLaw::MOVIE_LIKE, n, a.graph_seed), embedded: None });
    }
    Err(CliError::config("no graph given; pass --graph PATH, --fixture nell or --synthetic TRIPLES"))
}

pub fn generator(a: &LabelArgs) -> Option<Generator> {
    a.model.map(|m| match m {
        Model::Rem => Generator::Rem { r_eps: a.r_eps },
        Model::Bmm => Generator::Bmm(BmmParams { k: a.bmm_k, c: a.bmm_c, sigma: a.bmm_sigma }),
    })
}

/// Where the ground truth comes from, for the config echo.
pub fn label_origin(a: &LabelArgs, loaded: &Loaded) -> Option<String> {
    if let Some(p) = &a.labels {
        Some(p.display().to_string())
    } else if let Some(g) = generator(a) {
        Some(serde_json::to_string(&g).expect("generator serializes"))
    } else {
        loaded.embedded.as_ref().map(|_| "embedded".to_string())
    }
}

/// Ground truth for `g`: a label file, a generator, or the input's own labels.
pub fn labels(a: &LabelArgs, g: &KnowledgeGraph, embedded: Option<&LabelSource>) -> CliResult<Option<LabelSource>> {
    if let Some(p) = &a.labels {
        return LabelSource::read_tsv(g, p).input(format!("cannot read labels {}", p.display())).map(Some);
    }
    if let Some(gen) = generator(a) {
        gen.validate().config("invalid label model")?;
        return LabelSource::generate(g, gen, a.label_seed).config("invalid label model").map(Some);
    }
    Ok(embedded.cloned())
}

pub fn require_labels(ls: Option<LabelSource>, why: &str) -> CliResult<LabelSource> {
    ls.ok_or_else(|| {
        CliError::config(format!(
            "{why} needs ground truth; pass --labels FILE, --model rem|bmm, --fixture nell, or a TSV with a label column"
        ))
    })
}
