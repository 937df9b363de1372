use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use super::{AnnotateError, Annotator};
use crate::kg::KnowledgeGraph;
use crate::labels::LabelSource;

/// Answers from known labels.
#[derive(Debug, Clone)]
pub struct OracleAnnotator<'a> {
    labels: &'a LabelSource,
    requests: usize,
}

impl<'a> OracleAnnotator<'a> {
    pub fn new(labels: &'a LabelSource) -> Self {
        OracleAnnotator { labels, requests: 0 }
    }

    /// Triples asked for so far.
    pub fn requests(&self) -> usize {
        self.requests
    }
}

impl Annotator for OracleAnnotator<'_> {
    fn annotate(&mut self, _g: &KnowledgeGraph, positions: &[usize]) -> Result<Vec<bool>, AnnotateError> {
        self.requests += positions.len();
        Ok(positions.iter().map(|&t| self.labels.get(t)).collect())
    }
}

/// Round trip through files: writes `tasks.tsv`, then waits for someone to
/// drop a `labels.tsv` (`position<TAB>label` lines) covering every task.
/// A consumed labels file is renamed to `labels.<round>.done`.
#[derive(Debug, Clone)]
pub struct FileAnnotator {
    dir: PathBuf,
    poll: Duration,
    timeout: Duration,
    round: usize,
}

impl FileAnnotator {
    pub fn new(dir: impl Into<PathBuf>, poll: Duration, timeout: Duration) -> Self {
        FileAnnotator { dir: dir.into(), poll, timeout, round: 0 }
    }

    pub fn tasks_path(&self) -> PathBuf {
        self.dir.join("tasks.tsv")
    }

    pub fn labels_path(&self) -> PathBuf {
        self.dir.join("labels.tsv")
    }

    fn write_tasks(&self, g: &KnowledgeGraph, positions: &[usize]) -> std::io::Result<()> {
        let mut out = String::from("# position\tsubject\tpredicate\tobject\n");
        for &t in positions {
            let tr = g.triple(t);
            out.push_str(&format!("{t}\t{}\t{}\t{}\n", tr.subject, tr.predicate, tr.object));
        }
        fs::create_dir_all(&self.dir)?;
        fs::write(self.tasks_path(), out)
    }

    fn read_labels(&self) -> Result<Option<HashMap<usize, bool>>, AnnotateError> {
        let text = match fs::read_to_string(self.labels_path()) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut out = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || {
                AnnotateError::Failed(format!("labels.tsv line {}: expected `position<TAB>label`, got {line:?}", i + 1))
            };
            let (pos, lab) = line.split_once('\t').ok_or_else(bad)?;
            let pos: usize = pos.trim().parse().map_err(|_| bad())?;
            let lab = match lab.trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad()),
            };
            out.insert(pos, lab);
        }
        Ok(Some(out))
    }
}

impl Annotator for FileAnnotator {
    fn annotate(&mut self, g: &KnowledgeGraph, positions: &[usize]) -> Result<Vec<bool>, AnnotateError> {
        self.write_tasks(g, positions)?;
        let start = Instant::now();
        loop {
            if let Some(found) = self.read_labels()? {
                if positions.iter().all(|t| found.contains_key(t)) {
                    fs::rename(self.labels_path(), self.dir.join(format!("labels.{}.done", self.round)))?;
                    self.round += 1;
                    return Ok(positions.iter().map(|t| found[t]).collect());
                }
            }
            if start.elapsed() >= self.timeout {
                return Err(AnnotateError::Timeout(self.timeout));
            }
            std::thread::sleep(self.poll);
        }
    }
}
