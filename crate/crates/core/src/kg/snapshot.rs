//! Binary graph snapshots.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"KGSN"
//! version u16
//! body    clusters u64, triples u64, then per cluster:
//!           batch_id u64, entity_id str, size u32,
//!           per triple: predicate str, object str, kind u8 (0 entity, 1 data)
//! digest  32-byte SHA-256 of `body`
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes. The subject of every
//! triple is the cluster's entity id and is not repeated.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{EntityCluster, GraphError, KnowledgeGraph, ObjectKind, Triple};

pub const SNAPSHOT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"KGSN";

pub(crate) fn encode_body(g: &KnowledgeGraph) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + g.triple_count() * 24);
    out.extend_from_slice(&(g.cluster_count() as u64).to_le_bytes());
    out.extend_from_slice(&(g.triple_count() as u64).to_le_bytes());
    for c in g.clusters() {
        out.extend_from_slice(&c.batch_id().to_le_bytes());
        put_str(&mut out, c.entity_id());
        out.extend_from_slice(&(c.size() as u32).to_le_bytes());
        for t in c.triples() {
            put_str(&mut out, &t.predicate);
            put_str(&mut out, &t.object);
            out.push(match t.object_kind {
                ObjectKind::Entity => 0,
                ObjectKind::Data => 1,
            });
        }
    }
    out
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_snapshot(g: &KnowledgeGraph) -> Vec<u8> {
    let body = encode_body(g);
    let mut out = Vec::with_capacity(body.len() + 38);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&body);
    out.extend_from_slice(&Sha256::digest(&body));
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<KnowledgeGraph, GraphError> {
    if bytes.len() < 6 + 16 + 32 || &bytes[..4] != MAGIC {
        return Err(GraphError::Malformed("missing header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SNAPSHOT_VERSION {
        return Err(GraphError::VersionMismatch { found: version, expected: SNAPSHOT_VERSION });
    }
    let (body, digest) = bytes[6..].split_at(bytes.len() - 6 - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(GraphError::Checksum);
    }

    let mut r = Reader { buf: body, at: 0 };
    let n = r.u64()? as usize;
    let m = r.u64()? as usize;
    let mut clusters = Vec::with_capacity(n);
    for _ in 0..n {
        let batch = r.u64()?;
        let entity: Arc<str> = Arc::from(r.str()?);
        let size = r.u32()? as usize;
        let mut triples = Vec::with_capacity(size);
        for _ in 0..size {
            let predicate = r.str()?.to_string();
            let object = r.str()?.to_string();
            let object_kind = match r.u8()? {
                0 => ObjectKind::Entity,
                1 => ObjectKind::Data,
                k => return Err(GraphError::Malformed(format!("bad object kind {k}"))),
            };
            triples.push(Triple { subject: entity.clone(), predicate, object, object_kind });
        }
        clusters.push(EntityCluster::new(entity, batch, triples)?);
    }
    if r.at != body.len() {
        return Err(GraphError::Malformed("trailing bytes".into()));
    }
    let g = KnowledgeGraph::from_clusters(clusters)?;
    if g.triple_count() != m {
        return Err(GraphError::Malformed("triple count mismatch".into()));
    }
    Ok(g)
}

pub fn snapshot(g: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    if g.triple_count() == 0 {
        return Err(GraphError::EmptyGraph);
    }
    fs::write(path, encode_snapshot(g))?;
    Ok(())
}

pub fn restore(path: impl AsRef<Path>) -> Result<KnowledgeGraph, GraphError> {
    decode_snapshot(&fs::read(path)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GraphError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| GraphError::Malformed("truncated".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, GraphError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, GraphError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, GraphError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<&'a str, GraphError> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|e| GraphError::Malformed(e.to_string()))
    }
}
