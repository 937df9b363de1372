use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use kgacc::cost::{self, optimal_m, AccuracyProfile, CostParams, MChoice, Requirement};
use kgacc::evolve::{run_evolving, EvolveConfig, EvolveTrace};
use kgacc::kg::{self, DeltaMode, KnowledgeGraph, Population};
use kgacc::labels::LabelSource;
use kgacc::orchestrator::{
    self, AnnotateError, Annotator, CostReport, DesignSpec, FileAnnotator, LabelCache, OracleAnnotator, Session,
    SessionArchive, SessionConfig, SessionError,
};
use kgacc::report::{write_csv, write_json};
use kgacc::rng;
use kgacc::sampling::{twcs_draw, DesignKind};
use kgacc::sim::{self, EvolvingSetup, StaticSummary};
use kgacc_service::{AppState, Board, SystemClock};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::error::{Class, Classify, CliError, CliResult};
use crate::inputs::{self, Loaded};

/// Second-stage size of the pilot behind `--m auto`.
const PILOT_M: usize = 5;
const PILOT_TAG: u64 = 0x5049_4c54;

/// The resolved settings of a run, echoed into every report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph_checksum: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<Backend>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostParams>,
    /// Every flag as parsed.
    pub args: Value,
}

pub struct Ctx {
    pub out: PathBuf,
    pub argv: Vec<String>,
}

impl Ctx {
    fn config(&self, subcommand: &str, args: &impl Serialize) -> RunConfig {
        RunConfig {
            subcommand: subcommand.into(),
            argv: self.argv.clone(),
            out: self.out.clone(),
            args: serde_json::to_value(args).expect("arguments serialize"),
            ..RunConfig::default()
        }
    }

    fn prepare(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out).io(format!("cannot create output directory {}", self.out.display()))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn json(&self, name: &str, value: &impl Serialize) -> CliResult<PathBuf> {
        let p = self.path(name);
        write_json(&p, value).io(format!("cannot write {}", p.display()))?;
        Ok(p)
    }

    fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> CliResult<PathBuf> {
        let p = self.path(name);
        write_csv(&p, rows).io(format!("cannot write {}", p.display()))?;
        Ok(p)
    }
}

fn describe(a: &GraphArgs) -> String {
    match (&a.graph, a.fixture, a.synthetic) {
        (Some(p), _, _) => p.display().to_string(),
        (_, Some(_), _) => "fixture:nell".into(),
        (_, _, Some(n)) => format!("synthetic:{n}:seed={}", a.graph_seed),
        _ => String::new(),
    }
}

fn requirement(r: &ReqArgs) -> CliResult<(Requirement, CostParams)> {
    let req = Requirement::new(r.moe, r.alpha).config("invalid --moe/--alpha")?;
    let cp = CostParams::new(r.c1, r.c2).config("invalid --c1/--c2")?;
    Ok((req, cp))
}

fn session_err(e: SessionError, what: &str) -> CliError {
    let class = match &e {
        SessionError::Config(_) => Class::Config,
        SessionError::Checksum { .. } | SessionError::Version { .. } | SessionError::Json(_) => Class::Input,
        SessionError::Io(_) => Class::Io,
        _ => Class::Evaluation,
    };
    CliError::new(class, anyhow::Error::new(e).context(what.to_string()))
}

fn echo_requirement(a: &ReqArgs, cfg: &mut RunConfig, req: Requirement, cp: CostParams) {
    cfg.epsilon = Some(req.epsilon);
    cfg.alpha = Some(req.alpha);
    cfg.seed = Some(a.seed);
    cfg.cost = Some(cp);
}

fn m_range(m_max: usize) -> CliResult<std::ops::RangeInclusive<usize>> {
    if m_max == 0 {
        return Err(CliError::config("--m-max must be at least 1"));
    }
    Ok(1..=m_max)
}

pub fn ingest(ctx: &Ctx, a: &IngestArgs) -> CliResult<()> {
    ctx.prepare()?;
    let mut cfg = ctx.config("ingest", a);
    let Loaded { graph: mut g, embedded } = inputs::read_graph(&a.input, a.format)?;
    let mode = match a.mode {
        Mode::Merge => DeltaMode::Merge,
        Mode::Independent => DeltaMode::Independent,
    };
    for (i, p) in a.deltas.iter().enumerate() {
        let d = kg::read_delta(p, inputs::format_of(p, a.format), i as u64 + 1)
            .input(format!("cannot read update {}", p.display()))?;
        g = g.with_delta(&d, mode).input(format!("cannot apply update {}", p.display()))?;
    }
    let snap = a.output.clone().unwrap_or_else(|| ctx.path("graph.kgs"));
    kg::snapshot(&g, &snap).io(format!("cannot write snapshot {}", snap.display()))?;
    let checksum = g.checksum();
    cfg.graph = Some(a.input.display().to_string());
    cfg.graph_checksum = Some(checksum.clone());

    let mut label_file = None;
    if let (Some(ls), true) = (embedded, a.deltas.is_empty()) {
        let p = ctx.path("labels.tsv");
        ls.write_tsv(&g, &p).io(format!("cannot write {}", p.display()))?;
        label_file = Some(p);
    }
    let stats = g.stats();
    ctx.json(
        "ingest.json",
        &json!({ "config": cfg, "snapshot": snap, "checksum": checksum, "labels": label_file, "stats": stats }),
    )?;
    println!(
        "ingested {} triples in {} clusters ({} entities) -> {}",
        stats.triples,
        stats.clusters,
        g.entity_count(),
        snap.display()
    );
    if let Some(p) = label_file {
        println!("labels from the input -> {}", p.display());
    }
    Ok(())
}

pub fn gen_labels(ctx: &Ctx, a: &GenLabelsArgs) -> CliResult<()> {
    ctx.prepare()?;
    let mut cfg = ctx.config("gen-labels", a);
    let loaded = inputs::load_graph(&a.graph)?;
    if a.labels.model.is_none() && a.labels.labels.is_none() && loaded.embedded.is_none() {
        return Err(CliError::config("gen-labels needs --model rem|bmm"));
    }
    let g = &loaded.graph;
    let ls = inputs::require_labels(inputs::labels(&a.labels, g, loaded.embedded.as_ref())?, "gen-labels")?;
    cfg.graph = Some(describe(&a.graph));
    cfg.graph_checksum = Some(g.checksum());
    cfg.labels = inputs::label_origin(&a.labels, &loaded);
    cfg.seed = Some(a.labels.label_seed);
    let p = a.output.clone().unwrap_or_else(|| ctx.path("labels.tsv"));
    ls.write_tsv(g, &p).io(format!("cannot write {}", p.display()))?;
    let acc = ls.accuracy_of(0..g.triple_count());
    ctx.json(
        "gen-labels.json",
        &json!({ "config": cfg, "labels": p, "provenance": ls.provenance(), "segments": ls.segments(), "accuracy": acc }),
    )?;
    println!("{} labels at accuracy {acc:.4} -> {}", g.triple_count(), p.display());
    Ok(())
}

/// Answers pilot triples from memory and everything else from `inner`.
struct Primed<'a> {
    pilot: &'a LabelCache,
    inner: &'a mut dyn Annotator,
}

impl Annotator for Primed<'_> {
    fn annotate(&mut self, g: &KnowledgeGraph, positions: &[usize]) -> Result<Vec<bool>, AnnotateError> {
        let missing: Vec<usize> = positions.iter().copied().filter(|&t| !self.pilot.contains(t)).collect();
        let got = if missing.is_empty() { Vec::new() } else { self.inner.annotate(g, &missing)? };
        let mut fresh = got.into_iter();
        positions
            .iter()
            .map(|&t| match self.pilot.get(t) {
                Some(l) => Ok(l),
                None => fresh.next().ok_or(AnnotateError::Count { asked: missing.len(), got: 0 }),
            })
            .collect()
    }
}

#[derive(Debug, Serialize)]
struct Pilot {
    draws: usize,
    m: usize,
    footprint: cost::SampleFootprint,
    chosen: MChoice,
}

fn pilot_m(
    g: &KnowledgeGraph,
    annotator: &mut dyn Annotator,
    n: usize,
    m_max: usize,
    req: Requirement,
    cp: CostParams,
    seed: u64,
) -> CliResult<(LabelCache, Pilot)> {
    if n < 2 {
        return Err(CliError::config("--pilot must be at least 2 draws"));
    }
    let frame = g.population();
    let mut batch = twcs_draw(&frame, n, PILOT_M, rng::derive(seed, &[PILOT_TAG]), 0).eval("pilot draw failed")?;
    let mut cache = LabelCache::new();
    cache.annotate(g, &mut batch.draws, annotator).eval("pilot annotation failed")?;
    let obs: Vec<(usize, f64)> =
        batch.draws.iter().map(|d| (d.cluster_size, d.accuracy().expect("pilot is labelled"))).collect();
    let plan = optimal_m(&AccuracyProfile::from_draws(&obs), req, cp, m_range(m_max)?).eval("cannot choose m")?;
    let footprint = cache.footprint();
    Ok((cache, Pilot { draws: n, m: PILOT_M, footprint, chosen: plan.best }))
}

pub fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> CliResult<()> {
    ctx.prepare()?;
    let mut cfg = ctx.config("evaluate", a);
    let loaded = inputs::load_graph(&a.graph)?;
    let g = &loaded.graph;
    let frame = g.population();
    let (req, cp) = requirement(&a.req)?;
    echo_requirement(&a.req, &mut cfg, req, cp);
    cfg.graph = Some(describe(&a.graph));
    cfg.graph_checksum = Some(g.checksum());
    cfg.backend = Some(a.backend);
    let ls = inputs::labels(&a.labels, g, loaded.embedded.as_ref())?;
    cfg.labels = ls.as_ref().and_then(|_| inputs::label_origin(&a.labels, &loaded));

    let mut oracle;
    let mut files;
    let annotator: &mut dyn Annotator = match a.backend {
        Backend::Oracle => {
            oracle = OracleAnnotator::new(ls.as_ref().ok_or_else(|| {
                CliError::config("the oracle backend needs ground truth; pass --labels, --model or --fixture")
            })?);
            &mut oracle
        }
        Backend::Files => {
            let dir = a.task_dir.clone().unwrap_or_else(|| ctx.path("tasks"));
            files = FileAnnotator::new(dir, Duration::from_millis(250), Duration::from_secs(a.timeout_secs));
            println!(
                "waiting for labels: tasks in {}, answers in {}",
                files.tasks_path().display(),
                files.labels_path().display()
            );
            &mut files
        }
    };

    let mut pilot = None;
    let mut pilot_cache = LabelCache::new();
    let mut session = match &a.resume {
        Some(p) => {
            let archive = SessionArchive::load(p).map_err(|e| session_err(e, "cannot load archive"))?;
            orchestrator::resume(archive, &frame).map_err(|e| session_err(e, "cannot resume archive"))?
        }
        None => {
            let m = match (a.design.design, a.design.m) {
                (Design::Twcs | Design::StratifiedTwcs, Some(MArg::Auto)) => {
                    let (cache, p) = pilot_m(g, annotator, a.pilot, a.design.m_max, req, cp, a.req.seed)?;
                    pilot_cache = cache;
                    let m = p.chosen.m;
                    pilot = Some(p);
                    Some(m)
                }
                (_, Some(MArg::Auto)) => return Err(CliError::config("--m auto applies to twcs designs only")),
                (_, Some(MArg::Fixed(m))) => Some(m),
                (_, None) => None,
            };
            let spec = DesignSpec { kind: DesignKind::from(a.design.design), m, strata: a.design.strata };
            cfg.design = Some(spec);
            let design = spec.resolve(g).map_err(|e| session_err(e, "invalid design"))?;
            let mut sc = SessionConfig::new(design, req, cp, a.req.seed);
            if let Some(b) = a.design.batch_size {
                sc.batch_size = b;
            }
            let id = format!("eval-{:016x}", rng::derive(a.req.seed, &[PILOT_TAG, 1]));
            Session::new(id, g, g.checksum(), sc).map_err(|e| session_err(e, "invalid session"))?
        }
    };

    let archive_path = ctx.path("session.json");
    let outcome = {
        let mut via = Primed { pilot: &pilot_cache, inner: annotator };
        session.run(&frame, &mut via).cloned()
    };
    session.to_archive().save(&archive_path).map_err(|e| session_err(e, "cannot write archive"))?;
    let est = outcome
        .map_err(|e| session_err(e, &format!("evaluation stopped; resume with --resume {}", archive_path.display())))?;

    let report = session.cost_report();
    let mut all = pilot_cache.clone();
    for (t, l) in session.cache().entries() {
        all.insert(g, t, l);
    }
    let total = CostReport::new(all.footprint(), cp, report.units, report.batches);
    let truth = ls.as_ref().map(|l| l.accuracy_of(0..g.triple_count()));
    let body = json!({
        "config": cfg,
        "session": session.config(),
        "status": session.status(),
        "estimate": est,
        "stopping_moe": session.stopping_moe(),
        "strata": session.stratum_estimates(),
        "cost": report,
        "pilot": pilot,
        "total_cost": total,
        "true_accuracy": truth,
        "archive": archive_path,
    });
    let p = ctx.json("report.json", &body)?;
    println!(
        "accuracy {:.4} ± {:.4} ({:.0}% CI [{:.4}, {:.4}])",
        est.mu_hat,
        est.moe,
        100.0 * (1.0 - est.alpha),
        est.ci.0,
        est.ci.1
    );
    println!(
        "{} units, {} entities, {} triples, {:.2} h{}",
        est.n_units,
        total.footprint.unique_entities,
        total.footprint.triples,
        total.hours,
        pilot.as_ref().map_or(String::new(), |p| format!(" (m = {} from a {}-draw pilot)", p.chosen.m, p.draws))
    );
    println!("report -> {}", p.display());
    Ok(())
}

fn m_for_base(
    g: &KnowledgeGraph,
    ls: &LabelSource,
    base_end: usize,
    m: MArg,
    m_max: usize,
    req: Requirement,
    cp: CostParams,
) -> CliResult<usize> {
    match m {
        MArg::Fixed(m) => Ok(m),
        MArg::Auto => {
            let profile = AccuracyProfile::from_labels(&Population::new(g, 0, base_end), ls);
            Ok(optimal_m(&profile, req, cp, m_range(m_max)?).eval("cannot choose m")?.best.m)
        }
    }
}

fn synthetic_setup(a: &GraphArgs, updates: &[UpdateSpec], base_accuracy: f64) -> CliResult<EvolvingSetup> {
    let n = a
        .synthetic
        .ok_or_else(|| CliError::config("--update needs a synthetic base graph; pass --synthetic TRIPLES"))?;
    if !(0.0..=1.0).contains(&base_accuracy) {
        return Err(CliError::config("--base-accuracy must lie in [0, 1]"));
    }
    let mut s = EvolvingSetup::new(n, updates.iter().map(|u| (u.size, u.accuracy)).collect(), a.graph_seed);
    s.base_accuracy = base_accuracy;
    Ok(s)
}

#[derive(Debug, Serialize)]
struct TraceCsv {
    step: usize,
    clusters: usize,
    triples: usize,
    true_accuracy: f64,
    mu_hat: f64,
    moe: f64,
    stopping_moe: f64,
    units: usize,
    new_entities: usize,
    new_triples: usize,
    step_hours: f64,
    cumulative_hours: f64,
    admitted: usize,
    added_units: usize,
}

fn trace_csv(t: &EvolveTrace, ls: &LabelSource) -> Vec<TraceCsv> {
    t.steps
        .iter()
        .map(|s| TraceCsv {
            step: s.step,
            clusters: s.clusters,
            triples: s.triples,
            true_accuracy: ls.accuracy_of(0..s.triples),
            mu_hat: s.estimate.mu_hat,
            moe: s.estimate.moe,
            stopping_moe: s.stopping_moe,
            units: s.estimate.n_units,
            new_entities: s.new_work.unique_entities,
            new_triples: s.new_work.triples,
            step_hours: cost::hours(s.step_seconds),
            cumulative_hours: cost::hours(s.cumulative_seconds),
            admitted: s.admitted,
            added_units: s.added_units,
        })
        .collect()
}

pub fn evolve(ctx: &Ctx, a: &EvolveArgs) -> CliResult<()> {
    ctx.prepare()?;
    let mut cfg = ctx.config("evolve", a);
    let (req, cp) = requirement(&a.req)?;
    echo_requirement(&a.req, &mut cfg, req, cp);
    cfg.backend = Some(Backend::Oracle);
    cfg.graph = Some(describe(&a.graph));

    let (g, ls, ends) = if !a.update.is_empty() {
        let setup = synthetic_setup(&a.graph, &a.update, a.base_accuracy)?;
        cfg.labels = Some(format!("rem: base {}, updates as given", a.base_accuracy));
        setup.build()
    } else if let Some(dir) = &a.updates {
        let Loaded { graph: mut g, .. } = inputs::load_graph(&a.graph)?;
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .input(format!("cannot list {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(CliError::new(Class::Input, anyhow::anyhow!("no update files in {}", dir.display())));
        }
        let mut ends = vec![g.cluster_count()];
        for (i, p) in files.iter().enumerate() {
            let d = kg::read_delta(p, inputs::format_of(p, a.graph.format), i as u64 + 1)
                .input(format!("cannot read update {}", p.display()))?;
            g = g.with_delta(&d, DeltaMode::Independent).input(format!("cannot apply update {}", p.display()))?;
            ends.push(g.cluster_count());
        }
        if a.labels.labels.is_none() && a.labels.model.is_none() {
            return Err(CliError::config(
                "evolve over update files needs --labels FILE (for the updated graph) or --model rem|bmm",
            ));
        }
        let ls = inputs::labels(&a.labels, &g, None)?.expect("label source given");
        cfg.labels =
            a.labels.labels.as_ref().map(|p| p.display().to_string()).or_else(|| {
                inputs::generator(&a.labels).map(|g| serde_json::to_string(&g).expect("generator serializes"))
            });
        (g, ls, ends)
    } else {
        return Err(CliError::config("evolve needs --updates DIR or at least one --update SIZE:ACCURACY"));
    };
    cfg.graph_checksum = Some(g.checksum());

    let m = m_for_base(&g, &ls, ends[0], a.m, a.m_max, req, cp)?;
    let mut ec = EvolveConfig::new(req, cp, m, a.req.seed);
    ec.refresh_base = a.refresh_base;
    ec.batch_cap = a.batch_cap;
    if a.batch_cap == 0 {
        return Err(CliError::config("--batch-cap must be at least 1"));
    }

    let mut traces = Vec::new();
    for method in a.method.methods() {
        let t = run_evolving(&g, &ends, method, ec, &mut OracleAnnotator::new(&ls))
            .eval(format!("{} evaluation failed", method.as_str()))?;
        ctx.csv(&format!("trace_{}.csv", method.as_str()), &trace_csv(&t, &ls))?;
        traces.push(t);
    }
    let p = ctx.json("evolve.json", &json!({ "config": cfg, "m": m, "ends": ends, "evolve": ec, "traces": traces }))?;

    println!("m = {m}; {} updates over a base of {} clusters", ends.len() - 1, ends[0]);
    println!("{:>9}  {:>5}  {:>9}  {:>9}  {:>9}", "method", "step", "estimate", "truth", "hours");
    for t in &traces {
        for s in &t.steps {
            println!(
                "{:>9}  {:>5}  {:>9.4}  {:>9.4}  {:>9.3}",
                t.method.as_str(),
                s.step,
                s.estimate.mu_hat,
                ls.accuracy_of(0..s.triples),
                cost::hours(s.cumulative_seconds)
            );
        }
    }
    println!("report -> {}", p.display());
    Ok(())
}

pub fn fit_cost(ctx: &Ctx, a: &FitCostArgs) -> CliResult<()> {
    ctx.prepare()?;
    let cfg = ctx.config("fit-cost", a);
    let f = fs::File::open(&a.observations).input(format!("cannot open {}", a.observations.display()))?;
    let obs = cost::read_observations(f).input(format!("cannot parse {}", a.observations.display()))?;
    let fit = cost::fit_params(&obs).eval("cannot fit cost parameters")?;
    let rmse = (obs.iter().map(|o| (fit.c1 * o.unique_entities + fit.c2 * o.triples - o.seconds).powi(2)).sum::<f64>()
        / obs.len() as f64)
        .sqrt();
    let p =
        ctx.json("cost.json", &json!({ "config": cfg, "cost": fit, "observations": obs.len(), "rmse_seconds": rmse }))?;
    print!("{}", fit.to_key_values());
    println!("fit over {} observations, rmse {rmse:.2} s -> {}", obs.len(), p.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepCsv {
    m: usize,
    n: usize,
    variance: f64,
    seconds: f64,
    hours: f64,
}

pub fn optimal_m_cmd(ctx: &Ctx, a: &OptimalMArgs) -> CliResult<()> {
    ctx.prepare()?;
    let mut cfg = ctx.config("optimal-m", a);
    let loaded = inputs::load_graph(&a.graph)?;
    let g = &loaded.graph;
    let (req, cp) = requirement(&a.req)?;
    echo_requirement(&a.req, &mut cfg, req, cp);
    cfg.graph = Some(describe(&a.graph));
    cfg.graph_checksum = Some(g.checksum());
    let ls = inputs::labels(&a.labels, g, loaded.embedded.as_ref())?;
    cfg.labels = ls.as_ref().and_then(|_| inputs::label_origin(&a.labels, &loaded));
    let (profile, source) = match &ls {
        Some(ls) => (AccuracyProfile::of_graph(g, ls), "labels"),
        None => (AccuracyProfile::prior(&g.population()), "prior"),
    };
    let plan = optimal_m(&profile, req, cp, m_range(a.m_max)?).eval("cannot choose m")?;
    let rows: Vec<SweepCsv> = plan
        .sweep
        .iter()
        .map(|c| SweepCsv { m: c.m, n: c.n, variance: c.variance, seconds: c.cost, hours: cost::hours(c.cost) })
        .collect();
    ctx.csv("optimal_m_sweep.csv", &rows)?;
    let (srs_n, srs_seconds) = match &ls {
        Some(_) => {
            let (n, s) = cost::srs_predicted_cost(&g.population(), profile.mean(), req, cp);
            (Some(n), Some(s))
        }
        None => (None, None),
    };
    let p = ctx.json(
        "optimal_m.json",
        &json!({
            "config": cfg,
            "profile": source,
            "best": plan.best,
            "sweep": plan.sweep,
            "srs_units": srs_n,
            "srs_hours": srs_seconds.map(cost::hours),
        }),
    )?;
    if source == "prior" {
        println!("no labels given: every cluster assumed to be a coin flip");
    }
    println!(
        "m* = {} with {} units, predicted {:.2} h{}",
        plan.best.m,
        plan.best.n,
        cost::hours(plan.best.cost),
        srs_seconds.map_or(String::new(), |s| format!(" (SRS {:.2} h)", cost::hours(s)))
    );
    println!("report -> {}", p.display());
    Ok(())
}

pub fn simulate(ctx: &Ctx, a: &SimulateArgs) -> CliResult<()> {
    ctx.prepare()?;
    let mut cfg = ctx.config("simulate", a);
    let (req, cp) = requirement(&a.req)?;
    echo_requirement(&a.req, &mut cfg, req, cp);
    cfg.backend = Some(Backend::Oracle);
    cfg.graph = Some(describe(&a.graph));
    if a.trials == 0 {
        return Err(CliError::config("--trials must be at least 1"));
    }

    if !a.update.is_empty() {
        let setup = synthetic_setup(&a.graph, &a.update, a.base_accuracy)?;
        let (g, ls, ends) = setup.build();
        cfg.graph_checksum = Some(g.checksum());
        let m = m_for_base(&g, &ls, ends[0], a.design.m.unwrap_or(MArg::Auto), a.design.m_max, req, cp)?;
        let mut ec = EvolveConfig::new(req, cp, m, a.req.seed);
        ec.refresh_base = a.refresh_base;
        let mut summary = Vec::new();
        println!("m = {m}; {} trials", a.trials);
        for method in a.method.methods() {
            let traces = sim::evolving_trials(&g, &ls, &ends, method, ec, a.trials, a.req.seed)
                .eval(format!("{} replay failed", method.as_str()))?;
            let rows = sim::trace_rows(&traces, &ls);
            ctx.csv(&format!("traces_{}.csv", method.as_str()), &rows)?;
            let last = rows.last().expect("at least the base step");
            println!(
                "{:>9}: final estimate {:.4} (truth {:.4}), cumulative {:.3} h",
                method.as_str(),
                last.mean_estimate,
                last.true_accuracy,
                last.mean_cumulative_hours
            );
            summary.push(json!({ "method": method, "steps": rows }));
        }
        let p = ctx.json(
            "simulate.json",
            &json!({ "config": cfg, "setup": setup, "m": m, "ends": ends, "methods": summary }),
        )?;
        println!("report -> {}", p.display());
        return Ok(());
    }

    let loaded = inputs::load_graph(&a.graph)?;
    let g = &loaded.graph;
    cfg.graph_checksum = Some(g.checksum());
    let ls = inputs::require_labels(inputs::labels(&a.labels, g, loaded.embedded.as_ref())?, "simulate")?;
    cfg.labels = inputs::label_origin(&a.labels, &loaded);
    let truth = ls.accuracy_of(0..g.triple_count());

    if let Some(sw) = a.sweep {
        let rows = sim::m_sweep(g, &ls, req, cp, sw.lo..=sw.hi, a.trials, a.req.seed).eval("sweep failed")?;
        ctx.csv("sweep.csv", &rows)?;
        let best = rows.iter().min_by(|x, y| x.mean_hours.total_cmp(&y.mean_hours)).expect("non-empty sweep");
        let p = ctx.json(
            "simulate.json",
            &json!({ "config": cfg, "true_accuracy": truth, "sweep": rows, "best_m": best.m }),
        )?;
        println!("{:>4}  {:>10}  {:>10}  {:>10}", "m", "hours", "std", "predicted");
        for r in &rows {
            println!("{:>4}  {:>10.3}  {:>10.3}  {:>10.3}", r.m, r.mean_hours, r.std_hours, r.predicted_hours);
        }
        println!("cheapest m = {} at {:.3} h -> {}", best.m, best.mean_hours, p.display());
        return Ok(());
    }

    let m = match (a.design.design, a.design.m) {
        (Design::Twcs | Design::StratifiedTwcs, Some(MArg::Auto)) => Some(
            optimal_m(&AccuracyProfile::of_graph(g, &ls), req, cp, m_range(a.design.m_max)?)
                .eval("cannot choose m")?
                .best
                .m,
        ),
        (_, Some(MArg::Auto)) => return Err(CliError::config("--m auto applies to twcs designs only")),
        (_, Some(MArg::Fixed(m))) => Some(m),
        (_, None) => None,
    };
    let spec = DesignSpec { kind: DesignKind::from(a.design.design), m, strata: a.design.strata };
    cfg.design = Some(spec);
    let design = spec.resolve(g).map_err(|e| session_err(e, "invalid design"))?;
    let mut sc = SessionConfig::new(design, req, cp, a.req.seed);
    if let Some(b) = a.design.batch_size {
        sc.batch_size = b;
    }
    sc.validate(g).map_err(|e| session_err(e, "invalid session"))?;
    let trials = sim::static_trials(g, &ls, &sc, a.trials, a.req.seed).map_err(|e| session_err(e, "trial failed"))?;
    ctx.csv("trials.csv", &trials)?;
    let s = StaticSummary::of(&trials);
    let covered = trials.iter().filter(|t| (t.mu_hat - truth).abs() <= t.moe).count() as f64 / trials.len() as f64;
    let p = ctx.json(
        "simulate.json",
        &json!({ "config": cfg, "session": sc, "true_accuracy": truth, "summary": s, "coverage": covered }),
    )?;
    println!("{} trials of {}{}", a.trials, spec.kind.as_str(), m.map_or(String::new(), |m| format!(" (m = {m})")));
    println!("estimate {} (truth {truth:.4}), CI coverage {:.1}%", s.estimate, 100.0 * covered);
    println!("cost {} h, {} units", s.hours, s.units);
    println!("report -> {}", p.display());
    Ok(())
}

pub fn serve(a: &ServeArgs) -> CliResult<()> {
    let mut board = Board::new(Duration::from_secs(a.lease_secs));
    if a.lease_secs == 0 {
        return Err(CliError::config("--lease-secs must be at least 1"));
    }
    for ng in &a.graphs {
        board.add_graph(ng.name.clone(), Arc::new(inputs::read_graph(&ng.path, None)?.graph));
    }
    if a.fixture {
        board.add_graph("nell", Arc::new(sim::nell_fixture().0));
    }
    let names = board.graph_names();
    if names.is_empty() {
        return Err(CliError::config("serve needs at least one --graph NAME=PATH or --fixture"));
    }
    let rt = tokio::runtime::Runtime::new().io("cannot start the runtime")?;
    println!("serving {} on http://{}", names.join(", "), a.addr);
    rt.block_on(kgacc_service::serve(a.addr, AppState::new(board, Arc::new(SystemClock))))
        .io(format!("cannot serve on {}", a.addr))
}
