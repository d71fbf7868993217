//! Exact cosine nearest-neighbour index over item embeddings.

use std::collections::HashMap;

use super::NodeId;

#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<NodeId>,
    vectors: Vec<f32>,
    norms: Vec<f64>,
    position: HashMap<NodeId, usize>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn upsert(&mut self, id: NodeId, vector: &[f32]) {
        debug_assert_eq!(vector.len(), self.dim);
        let norm = vector.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
        match self.position.get(&id) {
            Some(&pos) => {
                self.vectors[pos * self.dim..(pos + 1) * self.dim].copy_from_slice(vector);
                self.norms[pos] = norm;
            }
            None => {
                self.position.insert(id, self.ids.len());
                self.ids.push(id);
                self.vectors.extend_from_slice(vector);
                self.norms.push(norm);
            }
        }
    }

    fn similarity(&self, pos: usize, query: &[f32], query_norm: f64) -> f64 {
        let norm = self.norms[pos];
        if norm == 0.0 || query_norm == 0.0 {
            return 0.0;
        }
        let row = &self.vectors[pos * self.dim..(pos + 1) * self.dim];
        let dot: f64 = row.iter().zip(query).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        (dot / (norm * query_norm)).clamp(-1.0, 1.0)
    }

    /// Similarity of a single indexed vector to `query`.
    pub fn similarity_to(&self, id: NodeId, query: &[f32]) -> Option<f64> {
        let pos = *self.position.get(&id)?;
        Some(self.similarity(pos, query, l2(query)))
    }

    /// Top `k` by cosine similarity, descending, ties by ascending id.
    pub fn search(&self, query: &[f32], k: usize, filter: Option<&dyn Fn(NodeId) -> bool>) -> Vec<(NodeId, f64)> {
        let qn = l2(query);
        let mut scored: Vec<(NodeId, f64)> = self
            .ids
            .iter()
            .enumerate()
            .filter(|(_, id)| filter.is_none_or(|f| f(**id)))
            .map(|(pos, id)| (*id, self.similarity(pos, query, qn)))
            .collect();
        let cmp = |a: &(NodeId, f64), b: &(NodeId, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if k < scored.len() {
            scored.select_nth_unstable_by(k, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        scored
    }
}

fn l2(v: &[f32]) -> f64 {
    v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt()
}
