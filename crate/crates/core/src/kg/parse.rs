//! TSV and N-Triples-like readers.
//!
//! TSV columns are `subject, predicate, object[, object_kind[, label]]`.
//! Blank lines and lines starting with `#` are skipped, as is a leading
//! header row whose first field is `subject`. The label column belongs to
//! [`crate::labels`] and is ignored here. When `object_kind` is missing the
//! object counts as an entity iff it occurs as a subject somewhere in the
//! same input.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DeltaBatch, EntityCluster, GraphError, KnowledgeGraph, ObjectKind, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    Tsv,
    NtriplesLike,
}

impl InputFormat {
    /// Guess from a file extension; anything unknown is TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("nt") | Some("ntriples") => InputFormat::NtriplesLike,
            _ => InputFormat::Tsv,
        }
    }
}

struct Record {
    subject: String,
    predicate: String,
    object: String,
    kind: Option<ObjectKind>,
    label: Option<bool>,
}

pub fn ingest(path: impl AsRef<Path>, format: InputFormat) -> Result<KnowledgeGraph, GraphError> {
    parse_graph(BufReader::new(File::open(path)?), format)
}

pub fn parse_graph<R: Read>(reader: R, format: InputFormat) -> Result<KnowledgeGraph, GraphError> {
    parse_labeled_graph(reader, format).map(|(g, _)| g)
}

/// Like [`ingest`], also returning the TSV label column in position order
/// when every record carries one.
pub fn ingest_labeled(
    path: impl AsRef<Path>,
    format: InputFormat,
) -> Result<(KnowledgeGraph, Option<Vec<bool>>), GraphError> {
    parse_labeled_graph(BufReader::new(File::open(path)?), format)
}

pub fn parse_labeled_graph<R: Read>(
    reader: R,
    format: InputFormat,
) -> Result<(KnowledgeGraph, Option<Vec<bool>>), GraphError> {
    let records = read_records(reader, format)?;
    let labeled = !records.is_empty() && records.iter().all(|r| r.label.is_some());
    let groups = group(records);
    if groups.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let labels = labeled.then(|| groups.iter().flat_map(|(_, ts)| ts.iter().map(|(_, l)| l.unwrap())).collect());
    let clusters = groups
        .into_iter()
        .map(|(e, ts)| EntityCluster::new(e, 0, ts.into_iter().map(|(t, _)| t).collect()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((KnowledgeGraph::from_clusters(clusters)?, labels))
}

pub fn read_delta(path: impl AsRef<Path>, format: InputFormat, batch_id: u64) -> Result<DeltaBatch, GraphError> {
    parse_delta(BufReader::new(File::open(path)?), format, batch_id)
}

pub fn parse_delta<R: Read>(reader: R, format: InputFormat, batch_id: u64) -> Result<DeltaBatch, GraphError> {
    let groups = group(read_records(reader, format)?)
        .into_iter()
        .map(|(e, ts)| (e, ts.into_iter().map(|(t, _)| t).collect()))
        .collect();
    DeltaBatch::from_groups(batch_id, groups)
}

type Group = (Arc<str>, Vec<(Triple, Option<bool>)>);

fn group(records: Vec<Record>) -> Vec<Group> {
    let subjects: HashSet<&str> = records.iter().map(|r| r.subject.as_str()).collect();
    let kinds: Vec<ObjectKind> = records
        .iter()
        .map(|r| {
            r.kind.unwrap_or(if subjects.contains(r.object.as_str()) { ObjectKind::Entity } else { ObjectKind::Data })
        })
        .collect();

    let mut groups: Vec<Group> = Vec::new();
    let mut at: HashMap<String, usize> = HashMap::new();
    for (r, kind) in records.into_iter().zip(kinds) {
        let slot = match at.get(&r.subject) {
            Some(&i) => i,
            None => {
                groups.push((Arc::from(r.subject.as_str()), Vec::new()));
                at.insert(r.subject, groups.len() - 1);
                groups.len() - 1
            }
        };
        let subject = groups[slot].0.clone();
        let t = Triple { subject, predicate: r.predicate, object: r.object, object_kind: kind };
        groups[slot].1.push((t, r.label));
    }
    groups
}

fn read_records<R: Read>(reader: R, format: InputFormat) -> Result<Vec<Record>, GraphError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec = match format {
            InputFormat::Tsv => {
                if out.is_empty() && trimmed.split('\t').next() == Some("subject") {
                    continue;
                }
                tsv_record(trimmed)
            }
            InputFormat::NtriplesLike => nt_record(trimmed),
        };
        out.push(rec.map_err(|message| GraphError::Parse { line: lineno, message })?);
    }
    Ok(out)
}

fn tsv_record(line: &str) -> Result<Record, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 3 {
        return Err(format!("expected at least 3 tab-separated fields, found {}", fields.len()));
    }
    if fields.len() > 5 {
        return Err(format!("expected at most 5 tab-separated fields, found {}", fields.len()));
    }
    let subject = fields[0].trim();
    if subject.is_empty() {
        return Err("empty subject".into());
    }
    if fields[1].trim().is_empty() {
        return Err("empty predicate".into());
    }
    let kind = match fields.get(3).map(|s| s.trim()) {
        None | Some("") => None,
        Some("entity") | Some("e") => Some(ObjectKind::Entity),
        Some("data") | Some("d") => Some(ObjectKind::Data),
        Some(other) => return Err(format!("unknown object kind {other:?}")),
    };
    let label = match fields.get(4).map(|s| s.trim()) {
        None | Some("") => None,
        Some("1") | Some("true") => Some(true),
        Some("0") | Some("false") => Some(false),
        Some(other) => return Err(format!("label must be 0 or 1, found {other:?}")),
    };
    Ok(Record {
        subject: subject.to_string(),
        predicate: fields[1].trim().to_string(),
        object: fields[2].to_string(),
        kind,
        label,
    })
}

/// `<s> <p> <o> .` or `<s> <p> "literal"[@lang|^^<type>] .`; `_:b` blank nodes allowed.
fn nt_record(line: &str) -> Result<Record, String> {
    let mut rest = line.trim();
    let (subject, r) = nt_node(rest)?;
    rest = r.trim_start();
    let (predicate, r) = nt_node(rest)?;
    rest = r.trim_start();
    let (object, kind, r) = if rest.starts_with('"') {
        let (lit, r) = nt_literal(rest)?;
        (lit, ObjectKind::Data, r)
    } else {
        let (node, r) = nt_node(rest)?;
        (node, ObjectKind::Entity, r)
    };
    let tail = r.trim();
    if tail != "." {
        return Err(format!("expected terminating '.', found {tail:?}"));
    }
    if subject.is_empty() {
        return Err("empty subject".into());
    }
    Ok(Record { subject, predicate, object, kind: Some(kind), label: None })
}

fn nt_node(s: &str) -> Result<(String, &str), String> {
    if let Some(r) = s.strip_prefix('<') {
        let end = r.find('>').ok_or("unterminated IRI")?;
        Ok((r[..end].to_string(), &r[end + 1..]))
    } else if s.starts_with("_:") {
        let end = s.find(char::is_whitespace).unwrap_or(s.len());
        Ok((s[..end].to_string(), &s[end..]))
    } else {
        Err(format!("expected IRI or blank node at {:?}", s.chars().take(20).collect::<String>()))
    }
}

fn nt_literal(s: &str) -> Result<(String, &str), String> {
    let mut out = String::new();
    let mut chars = s[1..].char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some((_, 'n')) => out.push('\n'),
                Some((_, 't')) => out.push('\t'),
                Some((_, 'r')) => out.push('\r'),
                Some((_, other)) => out.push(other),
                None => return Err("dangling escape".into()),
            },
            '"' => {
                let mut rest = &s[1 + i + 1..];
                if let Some(r) = rest.strip_prefix("^^") {
                    let (_, r) = nt_node(r)?;
                    rest = r;
                } else if let Some(r) = rest.strip_prefix('@') {
                    let end = r.find(char::is_whitespace).unwrap_or(r.len());
                    rest = &r[end..];
                }
                return Ok((out, rest));
            }
            c => out.push(c),
        }
    }
    Err("unterminated literal".into())
}
