//! Binary graph snapshots.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! header  : b"CSKG" | version u32 | dim u32 | interaction_rate f64 | nodes u64 | edges u64
//! node    : len u32 | id u32 | type u8 | key | name | description
//!           | attr_count u32 (key, value)* | emb_len u32 | f32* | has_profile u8 [profile json]
//! edge    : len u32 | source u32 | target u32 | type u8 | weight f64 | description
//! trailer : b"END!"
//! ```
//!
//! Strings are `len u32 | utf-8 bytes`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Edge, EdgeKey, EdgeType, GraphError, KnowledgeGraph, Node, NodeId, NodeType};

const MAGIC: &[u8; 4] = b"CSKG";
const TRAILER: &[u8; 4] = b"END!";
pub const SNAPSHOT_VERSION: u32 = 1;
const MAX_RECORD: u32 = 1 << 28;

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.write_u32::<LE>(s.len() as u32).unwrap();
    buf.extend_from_slice(s.as_bytes());
}

fn get_str(r: &mut Cursor<&[u8]>) -> Result<String, GraphError> {
    let len = r.read_u32::<LE>().map_err(truncated)? as usize;
    let pos = r.position() as usize;
    let bytes = r
        .get_ref()
        .get(pos..pos + len)
        .ok_or_else(|| GraphError::Format("string overruns record".into()))?;
    r.set_position((pos + len) as u64);
    String::from_utf8(bytes.to_vec()).map_err(|e| GraphError::Format(e.to_string()))
}

fn truncated(e: std::io::Error) -> GraphError {
    GraphError::Format(format!("truncated snapshot: {e}"))
}

fn encode_node(n: &Node) -> Vec<u8> {
    let mut b = Vec::with_capacity(64 + n.embedding.len() * 4);
    b.write_u32::<LE>(n.id.0).unwrap();
    b.write_u8(n.node_type.code()).unwrap();
    put_str(&mut b, &n.key);
    put_str(&mut b, &n.name);
    put_str(&mut b, &n.description);
    b.write_u32::<LE>(n.attributes.len() as u32).unwrap();
    for (k, v) in &n.attributes {
        put_str(&mut b, k);
        put_str(&mut b, v);
    }
    b.write_u32::<LE>(n.embedding.len() as u32).unwrap();
    for x in &n.embedding {
        b.write_f32::<LE>(*x).unwrap();
    }
    match &n.profile {
        Some(p) => {
            b.write_u8(1).unwrap();
            put_str(&mut b, &serde_json::to_string(p).expect("profile serializes"));
        }
        None => b.write_u8(0).unwrap(),
    }
    b
}

fn decode_node(bytes: &[u8]) -> Result<Node, GraphError> {
    let mut r = Cursor::new(bytes);
    let id = NodeId(r.read_u32::<LE>().map_err(truncated)?);
    let code = r.read_u8().map_err(truncated)?;
    let node_type = NodeType::from_code(code).ok_or_else(|| GraphError::Format(format!("node type {code}")))?;
    let key = get_str(&mut r)?;
    let name = get_str(&mut r)?;
    let description = get_str(&mut r)?;
    let n_attr = r.read_u32::<LE>().map_err(truncated)?;
    let mut attributes = std::collections::BTreeMap::new();
    for _ in 0..n_attr {
        let k = get_str(&mut r)?;
        let v = get_str(&mut r)?;
        attributes.insert(k, v);
    }
    let n_emb = r.read_u32::<LE>().map_err(truncated)? as usize;
    if n_emb * 4 > bytes.len() {
        return Err(GraphError::Format("embedding overruns record".into()));
    }
    let mut embedding = vec![0f32; n_emb];
    r.read_f32_into::<LE>(&mut embedding).map_err(truncated)?;
    let profile = match r.read_u8().map_err(truncated)? {
        0 => None,
        1 => Some(
            serde_json::from_str(&get_str(&mut r)?).map_err(|e| GraphError::Format(format!("profile json: {e}")))?,
        ),
        other => return Err(GraphError::Format(format!("profile flag {other}"))),
    };
    if r.position() as usize != bytes.len() {
        return Err(GraphError::Format("trailing bytes in node record".into()));
    }
    Ok(Node {
        id,
        node_type,
        key,
        name,
        description,
        embedding,
        attributes,
        profile,
    })
}

fn encode_edge(e: &Edge) -> Vec<u8> {
    let mut b = Vec::with_capacity(32 + e.description.len());
    b.write_u32::<LE>(e.key.source.0).unwrap();
    b.write_u32::<LE>(e.key.target.0).unwrap();
    b.write_u8(e.key.edge_type.code()).unwrap();
    b.write_f64::<LE>(e.weight).unwrap();
    put_str(&mut b, &e.description);
    b
}

fn decode_edge(bytes: &[u8]) -> Result<Edge, GraphError> {
    let mut r = Cursor::new(bytes);
    let source = NodeId(r.read_u32::<LE>().map_err(truncated)?);
    let target = NodeId(r.read_u32::<LE>().map_err(truncated)?);
    let code = r.read_u8().map_err(truncated)?;
    let edge_type = EdgeType::from_code(code).ok_or_else(|| GraphError::Format(format!("edge type {code}")))?;
    let weight = r.read_f64::<LE>().map_err(truncated)?;
    let description = get_str(&mut r)?;
    if r.position() as usize != bytes.len() {
        return Err(GraphError::Format("trailing bytes in edge record".into()));
    }
    Ok(Edge {
        key: EdgeKey {
            source,
            target,
            edge_type,
        },
        description,
        weight,
    })
}

fn write_record<W: Write>(w: &mut W, payload: &[u8]) -> std::io::Result<()> {
    w.write_u32::<LE>(payload.len() as u32)?;
    w.write_all(payload)
}

fn read_record<R: Read>(r: &mut R) -> Result<Vec<u8>, GraphError> {
    let len = r.read_u32::<LE>().map_err(truncated)?;
    if len > MAX_RECORD {
        return Err(GraphError::Format(format!("record length {len} too large")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf)
}

impl KnowledgeGraph {
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<(), GraphError> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(SNAPSHOT_VERSION)?;
        w.write_u32::<LE>(self.dim as u32)?;
        w.write_f64::<LE>(self.interaction_rate)?;
        w.write_u64::<LE>(self.nodes.len() as u64)?;
        w.write_u64::<LE>(self.edges.len() as u64)?;
        for n in &self.nodes {
            write_record(w, &encode_node(n))?;
        }
        for e in self.edges.values() {
            write_record(w, &encode_edge(e))?;
        }
        w.write_all(TRAILER)?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Self, GraphError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(GraphError::Format("bad magic".into()));
        }
        let version = r.read_u32::<LE>().map_err(truncated)?;
        if version != SNAPSHOT_VERSION {
            return Err(GraphError::Format(format!("unsupported version {version}")));
        }
        let dim = r.read_u32::<LE>().map_err(truncated)? as usize;
        let rate = r.read_f64::<LE>().map_err(truncated)?;
        let n_nodes = r.read_u64::<LE>().map_err(truncated)?;
        let n_edges = r.read_u64::<LE>().map_err(truncated)?;
        let mut nodes = Vec::new();
        for _ in 0..n_nodes {
            nodes.push(decode_node(&read_record(r)?)?);
        }
        let mut edges = Vec::new();
        for _ in 0..n_edges {
            edges.push(decode_edge(&read_record(r)?)?);
        }
        let mut trailer = [0u8; 4];
        r.read_exact(&mut trailer).map_err(truncated)?;
        if &trailer != TRAILER {
            return Err(GraphError::Format("bad trailer".into()));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(GraphError::Format("data after trailer".into()));
        }
        KnowledgeGraph::from_parts(dim, rate, nodes, edges)
    }

    /// Writes atomically (temp file + rename).
    pub fn snapshot(&self, path: &Path) -> Result<(), GraphError> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_snapshot(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn restore(path: &Path) -> Result<Self, GraphError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_snapshot(&mut r)
    }
}
