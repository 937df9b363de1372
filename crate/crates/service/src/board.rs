//! Sessions and their task queues. Every state change goes through one
//! [`Board`], which the HTTP layer keeps behind a single lock.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::time::{Duration, SystemTime};

use kgacc::cost::{CostParams, Requirement};
use kgacc::kg::KnowledgeGraph;
use kgacc::orchestrator::{DesignSpec, Session, SessionConfig, SessionError, Status};
use serde::{Deserialize, Serialize};

use crate::clock::unix_ms;

pub const DEFAULT_LEASE: Duration = Duration::from_secs(15 * 60);
/// Sibling triples shown next to a task, beyond the sampled ones.
pub const SIBLINGS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum BoardError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("unknown graph {0}")]
    UnknownGraph(String),
    #[error("{0}")]
    Invalid(String),
    #[error("task {task} has {expected} items but {got} labels were sent")]
    Incomplete { task: String, expected: usize, got: usize },
    #[error("the lease on task {0} has expired")]
    LeaseExpired(String),
    #[error("task {0} is leased to another annotator")]
    LeasedElsewhere(String),
    #[error("task {0} is not leased; fetch it from tasks/next first")]
    NotLeased(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewSession {
    pub graph: String,
    #[serde(flatten)]
    pub design: DesignSpec,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cost: Option<CostParams>,
    #[serde(default)]
    pub batch_size: Option<usize>,
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_alpha() -> f64 {
    0.05
}

impl NewSession {
    /// The orchestrator config this request stands for.
    pub fn config(&self, g: &KnowledgeGraph) -> Result<SessionConfig, BoardError> {
        let req = Requirement::new(self.epsilon, self.alpha).map_err(|e| BoardError::Invalid(e.to_string()))?;
        let cost = match self.cost {
            Some(c) => CostParams::new(c.c1, c.c2).map_err(|e| BoardError::Invalid(e.to_string()))?,
            None => CostParams::default(),
        };
        let design = self.design.resolve(g).map_err(|e| BoardError::Invalid(e.to_string()))?;
        let mut cfg = SessionConfig::new(design, req, cost, self.seed);
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        cfg.validate(g).map_err(|e| BoardError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskState {
    Open,
    Leased { annotator: String, expires: SystemTime },
    Submitted { annotator: String, labels: Vec<bool> },
}

#[derive(Debug, Clone)]
pub struct Task {
    pub id: String,
    pub session: String,
    pub batch: u64,
    pub cluster: usize,
    /// Global positions to label, ascending.
    pub items: Vec<usize>,
    pub context: Vec<usize>,
    pub state: TaskState,
}

struct Entry {
    graph_name: String,
    graph: Arc<KnowledgeGraph>,
    session: Session,
    tasks: Vec<String>,
    /// Batch index the current tasks were cut from.
    tasked_batch: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripleView {
    pub position: usize,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub object_kind: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaseView {
    pub annotator: String,
    pub expires_at_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemView {
    #[serde(flatten)]
    pub triple: TripleView,
    pub label: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub session_id: String,
    pub batch: u64,
    pub entity_id: String,
    pub hint: String,
    pub context: Vec<TripleView>,
    pub items: Vec<ItemView>,
    pub status: String,
    pub lease: Option<LeaseView>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub task_id: String,
    /// True when the task had already been submitted and this call changed nothing.
    pub duplicate: bool,
    pub session_status: Status,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub batches: usize,
    pub tasks_total: usize,
    pub tasks_open: usize,
    pub tasks_leased: usize,
    pub tasks_submitted: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateView {
    pub session_id: String,
    pub graph: String,
    pub status: Status,
    pub mu_hat: Option<f64>,
    pub moe: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub stopping_moe: Option<f64>,
    pub n_units: usize,
    pub n_triples: usize,
    pub unique_entities: usize,
    pub annotated_triples: usize,
    pub cost_hours: f64,
    pub progress: Progress,
    pub config: SessionConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub status: Status,
    pub tasks: usize,
}

pub struct Board {
    graphs: HashMap<String, Arc<KnowledgeGraph>>,
    sessions: HashMap<String, Entry>,
    tasks: HashMap<String, Task>,
    next_session: u64,
    next_task: u64,
    lease: Duration,
}

impl Board {
    pub fn new(lease: Duration) -> Self {
        Board {
            graphs: HashMap::new(),
            sessions: HashMap::new(),
            tasks: HashMap::new(),
            next_session: 1,
            next_task: 1,
            lease,
        }
    }

    pub fn add_graph(&mut self, name: impl Into<String>, g: Arc<KnowledgeGraph>) {
        self.graphs.insert(name.into(), g);
    }

    pub fn graph_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.graphs.keys().cloned().collect();
        v.sort();
        v
    }

    pub fn create(&mut self, req: &NewSession) -> Result<Created, BoardError> {
        let g = self.graphs.get(&req.graph).cloned().ok_or_else(|| BoardError::UnknownGraph(req.graph.clone()))?;
        let cfg = req.config(&g)?;
        let id = format!("s{:04}", self.next_session);
        let session = Session::new(id.clone(), &g, g.checksum(), cfg)?;
        self.next_session += 1;
        let entry = Entry { graph_name: req.graph.clone(), graph: g, session, tasks: Vec::new(), tasked_batch: None };
        self.sessions.insert(id.clone(), entry);
        self.advance(&id)?;
        let e = &self.sessions[&id];
        Ok(Created { session_id: id, status: e.session.status(), tasks: e.tasks.len() })
    }

    /// Lease the oldest open task of a session to `annotator`.
    pub fn next_task(
        &mut self,
        session: &str,
        annotator: &str,
        now: SystemTime,
    ) -> Result<Option<TaskView>, BoardError> {
        let entry = self.sessions.get(session).ok_or_else(|| BoardError::UnknownSession(session.into()))?;
        let ids = entry.tasks.clone();
        for id in &ids {
            let t = self.tasks.get_mut(id).expect("listed tasks exist");
            expire(t, now);
            if t.state == TaskState::Open {
                t.state = TaskState::Leased { annotator: annotator.into(), expires: now + self.lease };
                return Ok(Some(self.view(id)?));
            }
        }
        Ok(None)
    }

    pub fn submit(
        &mut self,
        task: &str,
        annotator: &str,
        labels: &[bool],
        now: SystemTime,
    ) -> Result<SubmitOutcome, BoardError> {
        let t = self.tasks.get_mut(task).ok_or_else(|| BoardError::UnknownTask(task.into()))?;
        let session = t.session.clone();
        match &t.state {
            TaskState::Submitted { .. } => {
                let status = self.sessions[&session].session.status();
                return Ok(SubmitOutcome { task_id: task.into(), duplicate: true, session_status: status });
            }
            TaskState::Open => return Err(BoardError::NotLeased(task.into())),
            TaskState::Leased { annotator: holder, expires } => {
                if holder != annotator {
                    if *expires <= now {
                        return Err(BoardError::NotLeased(task.into()));
                    }
                    return Err(BoardError::LeasedElsewhere(task.into()));
                }
                if *expires <= now {
                    return Err(BoardError::LeaseExpired(task.into()));
                }
            }
        }
        if labels.len() != t.items.len() {
            return Err(BoardError::Incomplete { task: task.into(), expected: t.items.len(), got: labels.len() });
        }
        let pairs: Vec<(usize, bool)> = t.items.iter().copied().zip(labels.iter().copied()).collect();
        t.state = TaskState::Submitted { annotator: annotator.into(), labels: labels.to_vec() };

        let entry = self.sessions.get_mut(&session).expect("task belongs to a session");
        let g = entry.graph.clone();
        entry.session.submit(&g.population(), &pairs)?;
        self.advance(&session)?;
        Ok(SubmitOutcome {
            task_id: task.into(),
            duplicate: false,
            session_status: self.sessions[&session].session.status(),
        })
    }

    pub fn task(&self, id: &str) -> Result<TaskView, BoardError> {
        self.view(id)
    }

    pub fn estimate(&self, session: &str, now: SystemTime) -> Result<EstimateView, BoardError> {
        let e = self.sessions.get(session).ok_or_else(|| BoardError::UnknownSession(session.into()))?;
        let s = &e.session;
        let est = s.estimate();
        let report = s.cost_report();
        let mut progress = Progress { batches: s.batches().len(), tasks_total: e.tasks.len(), ..Progress::default() };
        for id in &e.tasks {
            match &self.tasks[id].state {
                TaskState::Open => progress.tasks_open += 1,
                TaskState::Leased { expires, .. } if *expires <= now => progress.tasks_open += 1,
                TaskState::Leased { .. } => progress.tasks_leased += 1,
                TaskState::Submitted { .. } => progress.tasks_submitted += 1,
            }
        }
        Ok(EstimateView {
            session_id: session.into(),
            graph: e.graph_name.clone(),
            status: s.status(),
            mu_hat: est.map(|e| e.mu_hat),
            moe: est.map(|e| e.moe).filter(|m| m.is_finite()),
            ci: est.map(|e| e.ci),
            stopping_moe: Some(s.stopping_moe()).filter(|m| m.is_finite()),
            n_units: est.map_or(0, |e| e.n_units),
            n_triples: est.map_or(0, |e| e.n_triples),
            unique_entities: report.footprint.unique_entities,
            annotated_triples: report.footprint.triples,
            cost_hours: report.hours,
            progress,
            config: s.config().clone(),
        })
    }

    /// The orchestrator session behind `id`.
    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id).map(|e| &e.session)
    }

    /// Step the session until it waits for labels or is done, and cut
    /// tasks for a newly pending batch.
    fn advance(&mut self, id: &str) -> Result<(), BoardError> {
        let entry = self.sessions.get_mut(id).expect("caller checked");
        let g = entry.graph.clone();
        let frame = g.population();
        loop {
            match entry.session.step(&frame)? {
                Status::Sampling => continue,
                Status::Satisfied | Status::Aborted => return Ok(()),
                Status::AwaitingAnnotations => break,
            }
        }
        let batch = entry.session.pending().expect("awaiting a batch").batch_index;
        if entry.tasked_batch == Some(batch) {
            return Ok(());
        }
        entry.tasked_batch = Some(batch);

        let sampled: BTreeSet<usize> =
            entry.session.batches().iter().chain(entry.session.pending()).flat_map(|b| b.positions()).collect();
        // group the missing labels by cluster, in order of first request
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for t in entry.session.pending_requests() {
            let c = g.locate(t).0;
            match groups.iter_mut().find(|(k, _)| *k == c) {
                Some((_, items)) => items.push(t),
                None => groups.push((c, vec![t])),
            }
        }
        for (c, mut items) in groups {
            items.sort_unstable();
            items.dedup();
            let ordinal = g.entity_ordinal(c);
            let mut context: Vec<usize> = sampled
                .iter()
                .copied()
                .filter(|&t| g.entity_ordinal(g.locate(t).0) == ordinal && items.binary_search(&t).is_err())
                .collect();
            let off = g.offset(c);
            context.extend(
                (off..off + g.cluster_size(c))
                    .filter(|t| !sampled.contains(t) && items.binary_search(t).is_err())
                    .take(SIBLINGS),
            );
            let tid = format!("t{:06}", self.next_task);
            self.next_task += 1;
            entry.tasks.push(tid.clone());
            self.tasks.insert(
                tid.clone(),
                Task { id: tid, session: id.into(), batch, cluster: c, items, context, state: TaskState::Open },
            );
        }
        Ok(())
    }

    fn view(&self, id: &str) -> Result<TaskView, BoardError> {
        let t = self.tasks.get(id).ok_or_else(|| BoardError::UnknownTask(id.into()))?;
        let g = &self.sessions[&t.session].graph;
        let triple = |p: usize| {
            let x = g.triple(p);
            TripleView {
                position: p,
                subject: x.subject.to_string(),
                predicate: x.predicate.clone(),
                object: x.object.clone(),
                object_kind: x.object_kind.as_str().into(),
            }
        };
        let (status, lease, labels) = match &t.state {
            TaskState::Open => ("open", None, None),
            TaskState::Leased { annotator, expires } => {
                ("leased", Some(LeaseView { annotator: annotator.clone(), expires_at_ms: unix_ms(*expires) }), None)
            }
            TaskState::Submitted { labels, .. } => ("submitted", None, Some(labels)),
        };
        let entity = g.cluster(t.cluster).entity_id().to_string();
        Ok(TaskView {
            task_id: t.id.clone(),
            session_id: t.session.clone(),
            batch: t.batch,
            hint: format!(
                "Identify {entity} first, then check each of the {} facts below against a source about that entity.",
                t.items.len()
            ),
            entity_id: entity,
            context: t.context.iter().map(|&p| triple(p)).collect(),
            items: t
                .items
                .iter()
                .enumerate()
                .map(|(i, &p)| ItemView { triple: triple(p), label: labels.map(|l| l[i]) })
                .collect(),
            status: status.into(),
            lease,
        })
    }
}

fn expire(t: &mut Task, now: SystemTime) {
    if matches!(&t.state, TaskState::Leased { expires, .. } if *expires <= now) {
        t.state = TaskState::Open;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kgacc::labels::LabelSource;
    use kgacc::orchestrator::{run_static, OracleAnnotator};
    use kgacc::sampling::DesignKind;
    use kgacc::synth::graph_from_sizes;

    fn board() -> (Board, LabelSource) {
        let g = graph_from_sizes(&[5, 1, 2, 3, 8, 1, 4]);
        let labels = (0..g.triple_count()).map(|t| t % 4 != 1).collect();
        let mut b = Board::new(DEFAULT_LEASE);
        b.add_graph("toy", Arc::new(g));
        (b, LabelSource::fixture(labels))
    }

    fn req(m: usize) -> NewSession {
        NewSession {
            graph: "toy".into(),
            design: DesignSpec { kind: DesignKind::Twcs, m: Some(m), strata: None },
            epsilon: 0.1,
            alpha: 0.05,
            seed: 3,
            cost: None,
            batch_size: None,
        }
    }

    fn t0() -> SystemTime {
        SystemTime::UNIX_EPOCH + Duration::from_secs(1_000)
    }

    #[test]
    fn tasks_are_entity_grouped() {
        let (mut b, _) = board();
        let s = b.create(&req(5)).unwrap().session_id;
        let mut seen = BTreeSet::new();
        while let Some(t) = b.next_task(&s, "a", t0()).unwrap() {
            assert!(t.items.iter().all(|i| i.triple.subject == t.entity_id));
            assert!(t.context.iter().all(|c| c.subject == t.entity_id));
            assert!(t.items.iter().all(|i| !t.context.iter().any(|c| c.position == i.triple.position)));
            assert!(seen.insert(t.entity_id.clone()), "one task per entity and batch");
        }
        // the five-triple cluster, drawn with m = 5, is one task of five items
        let g = graph_from_sizes(&[5, 1, 2, 3, 8, 1, 4]);
        let five = g.cluster(0).entity_id().to_string();
        if seen.contains(&five) {
            let id = b.sessions[&s].tasks.iter().find(|id| b.tasks[*id].cluster == 0).unwrap().clone();
            assert_eq!(b.task(&id).unwrap().items.len(), 5);
        }
    }

    #[test]
    fn driving_by_hand_matches_the_oracle_backend() {
        let (mut b, ls) = board();
        let s = b.create(&req(2)).unwrap().session_id;
        while let Some(t) = b.next_task(&s, "a", t0()).unwrap() {
            let labels: Vec<bool> = t.items.iter().map(|i| ls.get(i.triple.position)).collect();
            b.submit(&t.task_id, "a", &labels, t0()).unwrap();
        }
        let view = b.estimate(&s, t0()).unwrap();
        assert_eq!(view.status, Status::Satisfied);
        let g = graph_from_sizes(&[5, 1, 2, 3, 8, 1, 4]);
        let (est, report, _) =
            run_static(&g.population(), view.config.clone(), &mut OracleAnnotator::new(&ls)).unwrap();
        assert_eq!(view.mu_hat, Some(est.mu_hat));
        assert_eq!(view.moe, Some(est.moe));
        assert_eq!(view.cost_hours, report.hours);
    }

    #[test]
    fn lease_rules() {
        let (mut b, _) = board();
        let s = b.create(&req(3)).unwrap().session_id;
        let t = b.next_task(&s, "a", t0()).unwrap().unwrap();
        let n = t.items.len();
        assert!(matches!(b.submit(&t.task_id, "b", &vec![true; n], t0()), Err(BoardError::LeasedElsewhere(_))));
        assert!(matches!(b.submit(&t.task_id, "a", &vec![true; n + 1], t0()), Err(BoardError::Incomplete { .. })));
        let late = t0() + DEFAULT_LEASE;
        assert!(matches!(b.submit(&t.task_id, "a", &vec![true; n], late), Err(BoardError::LeaseExpired(_))));
        // the expired task goes back to the front of the queue
        let again = b.next_task(&s, "b", late).unwrap().unwrap();
        assert_eq!(again.task_id, t.task_id);
        let first = b.submit(&t.task_id, "b", &vec![true; n], late).unwrap();
        assert!(!first.duplicate);
        let second = b.submit(&t.task_id, "b", &vec![false; n], late).unwrap();
        assert!(second.duplicate);
        assert_eq!(b.task(&t.task_id).unwrap().items[0].label, Some(true));
        assert!(matches!(b.submit("t999999", "a", &[], late), Err(BoardError::UnknownTask(_))));
        assert!(matches!(b.next_task("s9999", "a", late), Err(BoardError::UnknownSession(_))));
    }

    #[test]
    fn bad_requests() {
        let (mut b, _) = board();
        let mut r = req(3);
        r.graph = "nope".into();
        assert!(matches!(b.create(&r), Err(BoardError::UnknownGraph(_))));
        let mut r = req(3);
        r.epsilon = 0.0;
        assert!(matches!(b.create(&r), Err(BoardError::Invalid(_))));
        let mut r = req(3);
        r.design.kind = DesignKind::Srs;
        assert!(matches!(b.create(&r), Err(BoardError::Invalid(_))));
    }
}
