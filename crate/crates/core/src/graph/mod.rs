//! Embedded multi-relational knowledge graph.
//!
//! Nodes carry an embedding of the configured dimension; item nodes are also
//! held in an exact cosine [`VectorIndex`] and a TF-IDF [`TextIndex`]. There is
//! at most one edge per `(source, target, edge type)` and all weights stay in
//! `[0, 1]`. Ties are always broken by ascending [`NodeId`].

mod snapshot;
mod text_index;
mod vector_index;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::enrichment::{normalize_entity_name, RawItem, SemanticProfile};

pub use snapshot::SNAPSHOT_VERSION;
pub use text_index::TextIndex;
pub use vector_index::VectorIndex;

pub type SharedGraph = Arc<RwLock<KnowledgeGraph>>;

/// Default learning rate for interaction weight updates.
pub const DEFAULT_INTERACTION_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeType {
    Item,
    Entity,
    User,
    VarkPref,
    Goal,
}

impl NodeType {
    pub const ALL: [NodeType; 5] = [
        NodeType::Item,
        NodeType::Entity,
        NodeType::User,
        NodeType::VarkPref,
        NodeType::Goal,
    ];

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeType {
    HasGenre,
    Mentions,
    RelatedTo,
    PrerequisiteOf,
    SimilarTo,
    Interacted,
    Prefers,
    HasGoal,
}

impl EdgeType {
    pub const ALL: [EdgeType; 8] = [
        EdgeType::HasGenre,
        EdgeType::Mentions,
        EdgeType::RelatedTo,
        EdgeType::PrerequisiteOf,
        EdgeType::SimilarTo,
        EdgeType::Interacted,
        EdgeType::Prefers,
        EdgeType::HasGoal,
    ];

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    /// Edge types linking an item to the entities that describe it.
    pub fn is_item_entity(self) -> bool {
        matches!(self, EdgeType::HasGenre | EdgeType::Mentions | EdgeType::PrerequisiteOf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub node_type: NodeType,
    /// Stable external key, e.g. `item:1`, `entity:comedy`, `user:u42`.
    pub key: String,
    pub name: String,
    pub description: String,
    pub embedding: Vec<f32>,
    pub attributes: BTreeMap<String, String>,
    pub profile: Option<SemanticProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeKey {
    pub source: NodeId,
    pub target: NodeId,
    pub edge_type: EdgeType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub key: EdgeKey,
    pub description: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightChange {
    pub key: EdgeKey,
    pub old: f64,
    pub new: f64,
}

/// What a mutation changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphDelta {
    pub added_nodes: Vec<NodeId>,
    pub added_edges: Vec<EdgeKey>,
    pub updated_weights: Vec<WeightChange>,
    pub removed_edges: Vec<EdgeKey>,
}

impl GraphDelta {
    pub fn is_empty(&self) -> bool {
        self.added_nodes.is_empty()
            && self.added_edges.is_empty()
            && self.updated_weights.is_empty()
            && self.removed_edges.is_empty()
    }

    pub fn merge(&mut self, other: GraphDelta) {
        self.added_nodes.extend(other.added_nodes);
        self.added_edges.extend(other.added_edges);
        self.updated_weights.extend(other.updated_weights);
        self.removed_edges.extend(other.removed_edges);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {0} already exists")]
    DuplicateNode(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn item_key(item_id: &str) -> String {
    format!("item:{item_id}")
}

pub fn entity_key(name: &str) -> String {
    format!("entity:{}", normalize_entity_name(name))
}

pub fn user_key(user_id: &str) -> String {
    format!("user:{user_id}")
}

fn clamp_unit(w: f64) -> f64 {
    if w.is_nan() {
        0.0
    } else {
        w.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    dim: usize,
    interaction_rate: f64,
    nodes: Vec<Node>,
    by_key: HashMap<String, NodeId>,
    edges: BTreeMap<EdgeKey, Edge>,
    out_adj: Vec<BTreeSet<(EdgeType, NodeId)>>,
    in_adj: Vec<BTreeSet<(EdgeType, NodeId)>>,
    vectors: VectorIndex,
    text: TextIndex,
}

impl PartialEq for KnowledgeGraph {
    /// Graph equality: same dimension, rate, nodes and edges. Indices are
    /// derived data and not compared.
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.interaction_rate.to_bits() == other.interaction_rate.to_bits()
            && self.nodes == other.nodes
            && self.edges == other.edges
    }
}

impl KnowledgeGraph {
    pub fn new(dim: usize) -> Self {
        Self::with_interaction_rate(dim, DEFAULT_INTERACTION_RATE)
    }

    pub fn with_interaction_rate(dim: usize, interaction_rate: f64) -> Self {
        Self {
            dim,
            interaction_rate,
            nodes: Vec::new(),
            by_key: HashMap::new(),
            edges: BTreeMap::new(),
            out_adj: Vec::new(),
            in_adj: Vec::new(),
            vectors: VectorIndex::new(dim),
            text: TextIndex::default(),
        }
    }

    pub fn into_shared(self) -> SharedGraph {
        Arc::new(RwLock::new(self))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interaction_rate(&self) -> f64 {
        self.interaction_rate
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0 as usize)
    }

    pub fn node_by_key(&self, key: &str) -> Option<&Node> {
        self.by_key.get(key).and_then(|id| self.node(*id))
    }

    pub fn id_of(&self, key: &str) -> Option<NodeId> {
        self.by_key.get(key).copied()
    }

    pub fn item_id(&self, item_id: &str) -> Option<NodeId> {
        self.id_of(&item_key(item_id))
    }

    pub fn entity_id(&self, name: &str) -> Option<NodeId> {
        self.id_of(&entity_key(name))
    }

    pub fn edge(&self, key: &EdgeKey) -> Option<&Edge> {
        self.edges.get(key)
    }

    pub fn weight(&self, source: NodeId, target: NodeId, edge_type: EdgeType) -> Option<f64> {
        self.edges
            .get(&EdgeKey {
                source,
                target,
                edge_type,
            })
            .map(|e| e.weight)
    }

    pub fn item_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.node_type == NodeType::Item)
            .map(|n| n.id)
    }

    pub fn item_count(&self) -> usize {
        self.vectors.len()
    }

    /// External item id (the part after `item:`).
    pub fn external_item_id(&self, id: NodeId) -> Option<&str> {
        self.node(id)
            .filter(|n| n.node_type == NodeType::Item)
            .and_then(|n| n.key.strip_prefix("item:"))
    }

    pub fn profile(&self, id: NodeId) -> Option<&SemanticProfile> {
        self.node(id).and_then(|n| n.profile.as_ref())
    }

    pub fn out_edges(&self, id: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.out_adj
            .get(id.0 as usize)
            .into_iter()
            .flatten()
            .filter_map(move |(t, target)| {
                self.edges.get(&EdgeKey {
                    source: id,
                    target: *target,
                    edge_type: *t,
                })
            })
    }

    pub fn in_edges(&self, id: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.in_adj
            .get(id.0 as usize)
            .into_iter()
            .flatten()
            .filter_map(move |(t, source)| {
                self.edges.get(&EdgeKey {
                    source: *source,
                    target: id,
                    edge_type: *t,
                })
            })
    }

    /// Entity nodes attached to an item (either direction), with edge weight.
    /// When several edges link the same pair the largest weight is reported.
    pub fn item_entities(&self, item: NodeId) -> BTreeMap<NodeId, f64> {
        let mut out = BTreeMap::new();
        let edges = self
            .out_edges(item)
            .map(|e| (e.key.target, e))
            .chain(self.in_edges(item).map(|e| (e.key.source, e)));
        for (other, e) in edges {
            if e.key.edge_type.is_item_entity() && self.node(other).map(|n| n.node_type) == Some(NodeType::Entity) {
                let w = out.entry(other).or_insert(0.0f64);
                *w = w.max(e.weight);
            }
        }
        out
    }

    /// Items attached to an entity, with edge weight.
    pub fn entity_items(&self, entity: NodeId) -> BTreeMap<NodeId, f64> {
        let mut out = BTreeMap::new();
        let edges = self
            .in_edges(entity)
            .map(|e| (e.key.source, e))
            .chain(self.out_edges(entity).map(|e| (e.key.target, e)));
        for (other, e) in edges {
            if e.key.edge_type.is_item_entity() && self.node(other).map(|n| n.node_type) == Some(NodeType::Item) {
                let w = out.entry(other).or_insert(0.0f64);
                *w = w.max(e.weight);
            }
        }
        out
    }

    fn check_dim(&self, v: &[f32]) -> Result<(), GraphError> {
        if v.len() != self.dim {
            return Err(GraphError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Adds a node, or returns the existing id for `key` (with `false`).
    pub fn ensure_node(
        &mut self,
        node_type: NodeType,
        key: &str,
        name: &str,
        description: &str,
        embedding: Vec<f32>,
    ) -> Result<(NodeId, bool), GraphError> {
        if let Some(id) = self.id_of(key) {
            return Ok((id, false));
        }
        self.check_dim(&embedding)?;
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            id,
            node_type,
            key: key.to_string(),
            name: name.to_string(),
            description: description.to_string(),
            embedding,
            attributes: BTreeMap::new(),
            profile: None,
        });
        self.by_key.insert(key.to_string(), id);
        self.out_adj.push(BTreeSet::new());
        self.in_adj.push(BTreeSet::new());
        Ok((id, true))
    }

    pub fn set_embedding(&mut self, id: NodeId, embedding: Vec<f32>) -> Result<(), GraphError> {
        self.check_dim(&embedding)?;
        let node = self
            .nodes
            .get_mut(id.0 as usize)
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))?;
        if node.node_type == NodeType::Item {
            self.vectors.upsert(id, &embedding);
        }
        node.embedding = embedding;
        Ok(())
    }

    pub fn set_attribute(&mut self, id: NodeId, key: &str, value: &str) -> Result<(), GraphError> {
        let node = self
            .nodes
            .get_mut(id.0 as usize)
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))?;
        node.attributes.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Creates or re-weights an edge. Returns what changed, if anything.
    pub fn upsert_edge(
        &mut self,
        key: EdgeKey,
        weight: f64,
        description: &str,
        delta: &mut GraphDelta,
    ) -> Result<(), GraphError> {
        for end in [key.source, key.target] {
            if self.node(end).is_none() {
                return Err(GraphError::UnknownNode(end.to_string()));
            }
        }
        let weight = clamp_unit(weight);
        match self.edges.get_mut(&key) {
            Some(edge) => {
                if edge.weight.to_bits() != weight.to_bits() {
                    delta.updated_weights.push(WeightChange {
                        key,
                        old: edge.weight,
                        new: weight,
                    });
                    edge.weight = weight;
                }
            }
            None => {
                self.edges.insert(
                    key,
                    Edge {
                        key,
                        description: description.to_string(),
                        weight,
                    },
                );
                self.out_adj[key.source.0 as usize].insert((key.edge_type, key.target));
                self.in_adj[key.target.0 as usize].insert((key.edge_type, key.source));
                delta.added_edges.push(key);
            }
        }
        Ok(())
    }

    fn remove_edge(&mut self, key: &EdgeKey, delta: &mut GraphDelta) {
        if self.edges.remove(key).is_some() {
            self.out_adj[key.source.0 as usize].remove(&(key.edge_type, key.target));
            self.in_adj[key.target.0 as usize].remove(&(key.edge_type, key.source));
            delta.removed_edges.push(*key);
        }
    }

    fn ensure_entity(
        &mut self,
        name: &str,
        description: &str,
        kind: &str,
        embedding: &[f32],
        embedder: &dyn Embedder,
        delta: &mut GraphDelta,
    ) -> Result<NodeId, GraphError> {
        let key = entity_key(name);
        if let Some(id) = self.id_of(&key) {
            return Ok(id);
        }
        let emb = if embedding.len() == self.dim {
            embedding.to_vec()
        } else {
            embedder.embed(&format!("{name} {description}"))
        };
        let (id, _) = self.ensure_node(NodeType::Entity, &key, name, description, emb)?;
        self.set_attribute(id, "kind", kind)?;
        delta.added_nodes.push(id);
        Ok(id)
    }

    /// Inserts or updates an item and links it to its profile's entities.
    ///
    /// Item→entity relations become `HAS_GENRE` (for that predicate) or
    /// `MENTIONS` edges weighted by confidence; entities without a relation
    /// to the item get a `MENTIONS` edge at weight 1. Entity↔entity relations
    /// become `RELATED_TO` / `PREREQUISITE_OF` edges; listed prerequisites
    /// become entities with a `PREREQUISITE_OF` edge into the item.
    pub fn upsert_item(
        &mut self,
        item: &RawItem,
        profile: &SemanticProfile,
        embedder: &dyn Embedder,
    ) -> Result<(NodeId, GraphDelta), GraphError> {
        if embedder.dim() != self.dim {
            return Err(GraphError::DimensionMismatch {
                expected: self.dim,
                got: embedder.dim(),
            });
        }
        let text = item_text(&item.title, profile);
        let embedding = embedder.embed(&text);
        self.check_dim(&embedding)?;

        let mut delta = GraphDelta::default();
        let key = item_key(&item.item_id);
        let (id, created) = self.ensure_node(
            NodeType::Item,
            &key,
            &item.title,
            item.description.as_deref().unwrap_or(""),
            embedding.clone(),
        )?;
        if created {
            delta.added_nodes.push(id);
        }
        {
            let node = &mut self.nodes[id.0 as usize];
            node.name = item.title.clone();
            node.description = item.description.clone().unwrap_or_default();
            node.embedding = embedding.clone();
            node.profile = Some(profile.clone());
            node.attributes.insert("year".into(), item.year.to_string());
            node.attributes.insert("genres".into(), item.genres.join("|"));
            node.attributes
                .insert("complexity".into(), profile.complexity.to_string());
        }
        self.vectors.upsert(id, &embedding);
        self.text.upsert(id, &text);

        let mut wanted: BTreeMap<EdgeKey, (f64, String)> = BTreeMap::new();
        let mut entity_ids: HashMap<String, NodeId> = HashMap::new();
        for e in &profile.entities {
            let eid = self.ensure_entity(&e.name, &e.description, &e.kind, &e.embedding, embedder, &mut delta)?;
            entity_ids.insert(normalize_entity_name(&e.name), eid);
        }
        let mut linked: BTreeSet<NodeId> = BTreeSet::new();
        for r in &profile.relations {
            let subj_is_item = r.subject == profile.item_id;
            let obj_is_item = r.object == profile.item_id;
            let resolve = |n: &str| entity_ids.get(&normalize_entity_name(n)).copied();
            let (edge_type, source, target) = match (subj_is_item, obj_is_item) {
                (true, false) => {
                    let Some(ent) = resolve(&r.object) else { continue };
                    let t = if r.predicate == crate::enrichment::HAS_GENRE {
                        EdgeType::HasGenre
                    } else {
                        EdgeType::Mentions
                    };
                    linked.insert(ent);
                    (t, id, ent)
                }
                (false, true) => {
                    let Some(ent) = resolve(&r.subject) else { continue };
                    linked.insert(ent);
                    let t = if r.predicate.contains("PREREQ") {
                        EdgeType::PrerequisiteOf
                    } else {
                        EdgeType::Mentions
                    };
                    if t == EdgeType::PrerequisiteOf {
                        (t, ent, id)
                    } else {
                        (t, id, ent)
                    }
                }
                (false, false) => {
                    let (Some(s), Some(o)) = (resolve(&r.subject), resolve(&r.object)) else {
                        continue;
                    };
                    let t = if r.predicate.contains("PREREQ") {
                        EdgeType::PrerequisiteOf
                    } else {
                        EdgeType::RelatedTo
                    };
                    (t, s, o)
                }
                (true, true) => continue,
            };
            let k = EdgeKey {
                source,
                target,
                edge_type,
            };
            let entry = wanted.entry(k).or_insert((0.0, r.predicate.clone()));
            entry.0 = entry.0.max(r.confidence);
        }
        for (norm, eid) in &entity_ids {
            if !linked.contains(eid) {
                let k = EdgeKey {
                    source: id,
                    target: *eid,
                    edge_type: EdgeType::Mentions,
                };
                wanted.entry(k).or_insert((1.0, format!("mentions {norm}")));
            }
        }
        for prereq in &profile.prerequisites {
            let eid = self.ensure_entity(prereq, prereq, "prerequisite", &[], embedder, &mut delta)?;
            let k = EdgeKey {
                source: eid,
                target: id,
                edge_type: EdgeType::PrerequisiteOf,
            };
            wanted.entry(k).or_insert((1.0, "prerequisite".into()));
        }

        // Drop item-entity edges the new profile no longer supports.
        let stale: Vec<EdgeKey> = self
            .out_edges(id)
            .chain(self.in_edges(id))
            .map(|e| e.key)
            .filter(|k| k.edge_type.is_item_entity() && !wanted.contains_key(k))
            .collect();
        for k in stale {
            self.remove_edge(&k, &mut delta);
        }
        for (k, (w, desc)) in wanted {
            self.upsert_edge(k, w, &desc, &mut delta)?;
        }
        Ok((id, delta))
    }

    /// Adds symmetric `SIMILAR_TO` edges between items whose entity
    /// neighbourhoods overlap in at least `min_shared` entities, weighted by
    /// the Jaccard index of the neighbourhoods.
    ///
    /// With `max_hops == 2` the neighbourhood is the item's direct entities;
    /// every further pair of hops also follows one `RELATED_TO` /
    /// `PREREQUISITE_OF` step between entities.
    pub fn infer_implicit_edges(&mut self, max_hops: usize, min_shared: usize) -> Result<GraphDelta, GraphError> {
        if max_hops < 2 {
            return Err(GraphError::InvalidArgument(format!(
                "max_hops must be at least 2, got {max_hops}"
            )));
        }
        let min_shared = min_shared.max(1);
        let items: Vec<NodeId> = self.item_ids().collect();
        let neighbourhoods: HashMap<NodeId, BTreeSet<NodeId>> = items
            .iter()
            .map(|&i| (i, self.entity_neighbourhood(i, max_hops)))
            .collect();

        let mut by_entity: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for &i in &items {
            for e in &neighbourhoods[&i] {
                by_entity.entry(*e).or_default().push(i);
            }
        }
        let mut shared: HashMap<(NodeId, NodeId), usize> = HashMap::new();
        for members in by_entity.values() {
            for (x, &a) in members.iter().enumerate() {
                for &b in &members[x + 1..] {
                    *shared.entry((a.min(b), a.max(b))).or_default() += 1;
                }
            }
        }
        let mut pairs: Vec<((NodeId, NodeId), usize)> = shared.into_iter().filter(|(_, n)| *n >= min_shared).collect();
        pairs.sort();

        let mut delta = GraphDelta::default();
        for ((a, b), n) in pairs {
            let union = neighbourhoods[&a].len() + neighbourhoods[&b].len() - n;
            let w = n as f64 / union as f64;
            for (s, t) in [(a, b), (b, a)] {
                self.upsert_edge(
                    EdgeKey {
                        source: s,
                        target: t,
                        edge_type: EdgeType::SimilarTo,
                    },
                    w,
                    "shared entities",
                    &mut delta,
                )?;
            }
        }
        Ok(delta)
    }

    fn entity_neighbourhood(&self, item: NodeId, max_hops: usize) -> BTreeSet<NodeId> {
        let mut frontier: BTreeSet<NodeId> = self.item_entities(item).into_keys().collect();
        let mut seen = frontier.clone();
        let mut hops = 2;
        while hops + 2 <= max_hops && !frontier.is_empty() {
            let mut next = BTreeSet::new();
            for &e in &frontier {
                for edge in self.out_edges(e).chain(self.in_edges(e)) {
                    if !matches!(edge.key.edge_type, EdgeType::RelatedTo | EdgeType::PrerequisiteOf) {
                        continue;
                    }
                    let other = if edge.key.source == e {
                        edge.key.target
                    } else {
                        edge.key.source
                    };
                    if self.node(other).map(|n| n.node_type) == Some(NodeType::Entity) && seen.insert(other) {
                        next.insert(other);
                    }
                }
            }
            frontier = next;
            hops += 2;
        }
        seen
    }

    /// Exact cosine top-k over item nodes.
    pub fn knn_items(
        &self,
        query: &[f32],
        k: usize,
        filter: Option<&dyn Fn(&Node) -> bool>,
    ) -> Result<Vec<(NodeId, f64)>, GraphError> {
        self.check_dim(query)?;
        if k == 0 {
            return Err(GraphError::InvalidArgument("k must be at least 1".into()));
        }
        Ok(match filter {
            Some(f) => {
                let pred = |id: NodeId| self.node(id).is_some_and(f);
                self.vectors.search(query, k, Some(&pred))
            }
            None => self.vectors.search(query, k, None),
        })
    }

    pub fn item_similarity(&self, item: NodeId, query: &[f32]) -> Option<f64> {
        self.vectors.similarity_to(item, query)
    }

    /// Items scored by summed edge weight over the named entities. Unknown
    /// names are skipped.
    pub fn items_for_entities<S: AsRef<str>>(&self, names: &[S], limit: usize) -> Vec<(NodeId, f64)> {
        let mut scores: BTreeMap<NodeId, f64> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for name in names {
            let Some(eid) = self.entity_id(name.as_ref()) else {
                continue;
            };
            if !seen.insert(eid) {
                continue;
            }
            for (item, w) in self.entity_items(eid) {
                *scores.entry(item).or_default() += w;
            }
        }
        let mut out: Vec<(NodeId, f64)> = scores.into_iter().collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out.truncate(limit.max(1));
        out
    }

    pub fn text_similarity(&self, query: &str, item: NodeId) -> f64 {
        self.text.similarity(query, item)
    }

    pub fn text_search(&self, query: &str, limit: usize) -> Vec<(NodeId, f64)> {
        self.text.search(query, limit)
    }

    /// Records a user–item interaction of strength `s ∈ [-1, 1]`.
    ///
    /// A new `INTERACTED` edge starts at `0.5 + 0.5·s`; an existing one moves
    /// by `η·s`. `PREFERS` edges from the user to the item's entities move by
    /// `η/2·s` (created only for positive signals). Weights are clamped to
    /// `[0, 1]`.
    pub fn apply_interaction(&mut self, user: NodeId, item: NodeId, signal: f64) -> Result<GraphDelta, GraphError> {
        for (id, want) in [(user, NodeType::User), (item, NodeType::Item)] {
            match self.node(id) {
                Some(n) if n.node_type == want => {}
                _ => return Err(GraphError::UnknownNode(id.to_string())),
            }
        }
        let s = signal.clamp(-1.0, 1.0);
        let eta = self.interaction_rate;
        let mut delta = GraphDelta::default();
        let key = EdgeKey {
            source: user,
            target: item,
            edge_type: EdgeType::Interacted,
        };
        let w = match self.weight(user, item, EdgeType::Interacted) {
            Some(w) => w + eta * s,
            None => 0.5 + 0.5 * s,
        };
        self.upsert_edge(key, w, "interaction", &mut delta)?;

        let step = eta / 2.0 * s;
        for (entity, _) in self.item_entities(item) {
            let key = EdgeKey {
                source: user,
                target: entity,
                edge_type: EdgeType::Prefers,
            };
            match self.weight(user, entity, EdgeType::Prefers) {
                Some(w) => self.upsert_edge(key, w + step, "engagement", &mut delta)?,
                None if step > 0.0 => self.upsert_edge(key, step, "engagement", &mut delta)?,
                None => {}
            }
        }
        Ok(delta)
    }

    /// Checks every edge invariant; returns the first violation.
    pub fn validate(&self) -> Result<(), String> {
        for (k, e) in &self.edges {
            if e.key != *k {
                return Err(format!("edge key mismatch at {k:?}"));
            }
            if !(0.0..=1.0).contains(&e.weight) {
                return Err(format!("weight {} out of range on {k:?}", e.weight));
            }
            if self.node(k.source).is_none() || self.node(k.target).is_none() {
                return Err(format!("dangling edge {k:?}"));
            }
        }
        for n in &self.nodes {
            if n.embedding.len() != self.dim {
                return Err(format!("node {} has wrong embedding length", n.key));
            }
            if n.node_type == NodeType::Item && n.profile.is_none() {
                return Err(format!("item {} lacks a profile", n.key));
            }
        }
        Ok(())
    }

    /// Rebuilds adjacency and indices from nodes and edges.
    fn from_parts(dim: usize, interaction_rate: f64, nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut g = Self::with_interaction_rate(dim, interaction_rate);
        for (i, node) in nodes.into_iter().enumerate() {
            if node.id.0 as usize != i {
                return Err(GraphError::Format(format!("node id {} out of order", node.id)));
            }
            if node.embedding.len() != dim {
                return Err(GraphError::Format(format!("node {} embedding length", node.key)));
            }
            if g.by_key.insert(node.key.clone(), node.id).is_some() {
                return Err(GraphError::Format(format!("duplicate key {}", node.key)));
            }
            if node.node_type == NodeType::Item {
                g.vectors.upsert(node.id, &node.embedding);
                let text = match &node.profile {
                    Some(p) => item_text(&node.name, p),
                    None => node.name.clone(),
                };
                g.text.upsert(node.id, &text);
            }
            g.nodes.push(node);
            g.out_adj.push(BTreeSet::new());
            g.in_adj.push(BTreeSet::new());
        }
        for e in edges {
            let k = e.key;
            if g.node(k.source).is_none() || g.node(k.target).is_none() {
                return Err(GraphError::Format(format!("dangling edge {k:?}")));
            }
            if !(0.0..=1.0).contains(&e.weight) {
                return Err(GraphError::Format(format!("edge weight {} out of range", e.weight)));
            }
            g.out_adj[k.source.0 as usize].insert((k.edge_type, k.target));
            g.in_adj[k.target.0 as usize].insert((k.edge_type, k.source));
            if g.edges.insert(k, e).is_some() {
                return Err(GraphError::Format(format!("duplicate edge {k:?}")));
            }
        }
        Ok(g)
    }
}

/// Text used for an item's embedding and text-index document.
pub fn item_text(title: &str, profile: &SemanticProfile) -> String {
    let mut text = title.to_string();
    for e in &profile.entities {
        text.push(' ');
        text.push_str(&e.name);
    }
    text
}
