use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kgacc::evolve::Method;
use kgacc::sampling::DesignKind;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "kgacc", version, about = "Estimate knowledge-graph accuracy from a small annotated sample")]
pub struct Cli {
    /// Directory for reports, CSV series and archives.
    #[arg(long, global = true, env = "KGACC_OUT", default_value = "kgacc-out")]
    pub out: PathBuf,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse triples into a checksummed binary snapshot.
    Ingest(IngestArgs),
    /// Synthesize ground-truth labels for a graph.
    GenLabels(GenLabelsArgs),
    /// Run one static evaluation until the margin of error is met.
    Evaluate(EvaluateArgs),
    /// Evaluate a base graph and then each update incrementally.
    Evolve(EvolveArgs),
    /// Fit per-entity and per-triple annotation costs from timings.
    FitCost(FitCostArgs),
    /// Find the cheapest second-stage size for TWCS.
    OptimalM(OptimalMArgs),
    /// Repeat seeded evaluations and summarize cost and estimate.
    Simulate(SimulateArgs),
    /// Serve annotation tasks over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Tsv,
    Ntriples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Merge,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Fixture {
    Nell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Rem,
    Bmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Srs,
    Rcs,
    Wcs,
    Twcs,
    #[value(name = "stratified-twcs")]
    StratifiedTwcs,
}

impl From<Design> for DesignKind {
    fn from(d: Design) -> Self {
        match d {
            Design::Srs => DesignKind::Srs,
            Design::Rcs => DesignKind::Rcs,
            Design::Wcs => DesignKind::Wcs,
            Design::Twcs => DesignKind::Twcs,
            Design::StratifiedTwcs => DesignKind::StratifiedTwcs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Rs,
    Ss,
    Baseline,
    All,
}

impl MethodArg {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Rs => vec![Method::Rs],
            MethodArg::Ss => vec![Method::Ss],
            MethodArg::Baseline => vec![Method::Baseline],
            MethodArg::All => vec![Method::Baseline, Method::Rs, Method::Ss],
        }
    }
}

/// `--m 5` or `--m auto`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum MArg {
    Fixed(usize),
    #[serde(serialize_with = "auto")]
    Auto,
}

fn auto<S: serde::Serializer>(s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str("auto")
}

impl FromStr for MArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(MArg::Auto);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected a positive integer or `auto`, got {s:?}")),
            Ok(m) => Ok(MArg::Fixed(m)),
        }
    }
}

/// `SIZE:ACCURACY`, the update size as a fraction of the base graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpdateSpec {
    pub size: f64,
    pub accuracy: f64,
}

impl FromStr for UpdateSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected SIZE:ACCURACY such as 0.2:0.9, got {s:?}");
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let size: f64 = a.trim().parse().map_err(|_| bad())?;
        let accuracy: f64 = b.trim().parse().map_err(|_| bad())?;
        if !(size > 0.0 && size.is_finite()) || !(0.0..=1.0).contains(&accuracy) {
            return Err(format!("update size must be positive and accuracy within [0, 1], got {s:?}"));
        }
        Ok(UpdateSpec { size, accuracy })
    }
}

/// `m=LO..HI`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Sweep {
    pub lo: usize,
    pub hi: usize,
}

impl FromStr for Sweep {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected m=LO..HI such as m=1..20, got {s:?}");
        let range = s.strip_prefix("m=").ok_or_else(bad)?;
        let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
        let lo: usize = lo.parse().map_err(|_| bad())?;
        let hi: usize = hi.trim_start_matches('=').parse().map_err(|_| bad())?;
        if lo == 0 || lo > hi {
            return Err(format!("sweep range must satisfy 1 <= LO <= HI, got {s:?}"));
        }
        Ok(Sweep { lo, hi })
    }
}

/// `NAME=PATH`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NamedGraph {
    pub name: String,
    pub path: PathBuf,
}

impl FromStr for NamedGraph {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once('=') {
            Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok(NamedGraph { name: n.into(), path: p.into() }),
            _ => Err(format!("expected NAME=PATH, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GraphArgs {
    /// Triples as TSV or N-Triples, or a snapshot written by `ingest`.
    #[arg(long, group = "source")]
    pub graph: Option<PathBuf>,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Use a bundled fixture, which carries its own labels.
    #[arg(long, value_enum, group = "source")]
    pub fixture: Option<Fixture>,
    /// Generate a synthetic graph with this many triples.
    #[arg(long, group = "source", value_name = "TRIPLES")]
    pub synthetic: Option<usize>,
    /// Seed for `--synthetic`.
    #[arg(long, default_value_t = 0)]
    pub graph_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LabelArgs {
    /// Labels written by `gen-labels`.
    #[arg(long, conflicts_with = "model")]
    pub labels: Option<PathBuf>,
    /// Generate labels with a random-error or binomial-mixture model.
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    /// Error rate of the random-error model.
    #[arg(long, default_value_t = 0.1)]
    pub r_eps: f64,
    /// Binomial-mixture size threshold.
    #[arg(long, default_value_t = 3)]
    pub bmm_k: usize,
    /// Binomial-mixture slope.
    #[arg(long, default_value_t = 0.01)]
    pub bmm_c: f64,
    /// Binomial-mixture noise.
    #[arg(long, default_value_t = 0.1)]
    pub bmm_sigma: f64,
    /// Seed for generated labels.
    #[arg(long, default_value_t = 0)]
    pub label_seed: u64,
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct ReqArgs {
    /// Target margin of error.
    #[arg(long, visible_alias = "epsilon", default_value_t = 0.05)]
    pub moe: f64,
    /// One minus the confidence level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Seconds to identify one entity.
    #[arg(long, default_value_t = 45.0)]
    pub c1: f64,
    /// Seconds to validate one triple.
    #[arg(long, default_value_t = 25.0)]
    pub c2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct DesignArgs {
    #[arg(long, value_enum, default_value = "twcs")]
    pub design: Design,
    /// Second-stage size for twcs designs, or `auto`.
    #[arg(long)]
    pub m: Option<MArg>,
    /// Number of size strata for stratified-twcs.
    #[arg(long)]
    pub strata: Option<usize>,
    /// Largest m considered by `--m auto`.
    #[arg(long, default_value_t = 20)]
    pub m_max: usize,
    /// Units per batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    /// Base triples.
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Update files, applied in the order given.
    #[arg(long = "delta")]
    pub deltas: Vec<PathBuf>,
    /// How updates join existing entities.
    #[arg(long, value_enum, default_value = "independent")]
    pub mode: Mode,
    /// Snapshot path; defaults to `<out>/graph.kgs`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenLabelsArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    /// Label file path; defaults to `<out>/labels.tsv`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Answer from ground-truth labels.
    Oracle,
    /// Write `tasks.tsv` and wait for `labels.tsv` in the task directory.
    Files,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub req: ReqArgs,
    #[arg(long, value_enum, default_value = "oracle")]
    pub backend: Backend,
    /// Directory the files backend exchanges tasks and labels in; defaults to `<out>/tasks`.
    #[arg(long)]
    pub task_dir: Option<PathBuf>,
    /// Give up waiting for a labels file after this many seconds.
    #[arg(long, default_value_t = 86_400)]
    pub timeout_secs: u64,
    /// Pilot draws taken to choose m under `--m auto`.
    #[arg(long, default_value_t = 30)]
    pub pilot: usize,
    /// Continue a session archived by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub req: ReqArgs,
    /// Directory of update files, applied in file-name order.
    #[arg(long, conflicts_with = "update")]
    pub updates: Option<PathBuf>,
    /// Synthetic update as SIZE:ACCURACY; repeat for a sequence. Needs `--synthetic`.
    #[arg(long)]
    pub update: Vec<UpdateSpec>,
    /// Accuracy of the synthetic base graph.
    #[arg(long, default_value_t = 0.9)]
    pub base_accuracy: f64,
    #[arg(long, value_enum, default_value = "all")]
    pub method: MethodArg,
    /// Second-stage size, or `auto` for the best m of the base graph.
    #[arg(long, default_value = "auto")]
    pub m: MArg,
    #[arg(long, default_value_t = 20)]
    pub m_max: usize,
    /// Re-draw the base stratum at every update (ss).
    #[arg(long)]
    pub refresh_base: bool,
    /// Most draws one incremental round may add.
    #[arg(long, default_value_t = 30)]
    pub batch_cap: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitCostArgs {
    /// CSV of `entities,triples,seconds` rows.
    pub observations: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimalMArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub req: ReqArgs,
    #[arg(long, default_value_t = 20)]
    pub m_max: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub req: ReqArgs,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Sweep the TWCS second-stage size instead, e.g. `m=1..20`.
    #[arg(long, conflicts_with = "update")]
    pub sweep: Option<Sweep>,
    /// Replay evolving runs over these synthetic updates (SIZE:ACCURACY). Needs `--synthetic`.
    #[arg(long)]
    pub update: Vec<UpdateSpec>,
    #[arg(long, default_value_t = 0.9)]
    pub base_accuracy: f64,
    #[arg(long, value_enum, default_value = "all")]
    pub method: MethodArg,
    #[arg(long)]
    pub refresh_base: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ServeArgs {
    /// A graph to offer, as NAME=PATH; repeatable.
    #[arg(long = "graph")]
    pub graphs: Vec<NamedGraph>,
    /// Offer the bundled fixture as `nell`.
    #[arg(long)]
    pub fixture: bool,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Seconds a leased task stays reserved.
    #[arg(long, default_value_t = 900)]
    pub lease_secs: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn value_parsers() {
        assert_eq!("auto".parse::<MArg>(), Ok(MArg::Auto));
        assert_eq!("7".parse::<MArg>(), Ok(MArg::Fixed(7)));
        assert!("0".parse::<MArg>().is_err());
        assert_eq!("m=1..20".parse::<Sweep>(), Ok(Sweep { lo: 1, hi: 20 }));
        assert_eq!("m=2..=4".parse::<Sweep>(), Ok(Sweep { lo: 2, hi: 4 }));
        assert!("m=5..2".parse::<Sweep>().is_err());
        assert_eq!("0.2:0.9".parse::<UpdateSpec>(), Ok(UpdateSpec { size: 0.2, accuracy: 0.9 }));
        assert!("0.2:1.5".parse::<UpdateSpec>().is_err());
        assert!("toy".parse::<NamedGraph>().is_err());
        assert_eq!(serde_json::to_value(MArg::Auto).unwrap(), "auto");
        assert_eq!(serde_json::to_value(MArg::Fixed(3)).unwrap(), 3);
    }
}
