//! Token-level inverted index with TF-IDF cosine scoring.

use std::collections::{BTreeMap, HashMap};

use super::NodeId;
use crate::embed::tokenize;

#[derive(Debug, Clone, Default)]
pub struct TextIndex {
    docs: HashMap<NodeId, HashMap<String, u32>>,
    df: HashMap<String, u32>,
    postings: HashMap<String, Vec<NodeId>>,
}

impl TextIndex {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn upsert(&mut self, id: NodeId, text: &str) {
        self.remove(id);
        let mut tf: HashMap<String, u32> = HashMap::new();
        for t in tokenize(text) {
            *tf.entry(t).or_default() += 1;
        }
        for term in tf.keys() {
            *self.df.entry(term.clone()).or_default() += 1;
            self.postings.entry(term.clone()).or_default().push(id);
        }
        self.docs.insert(id, tf);
    }

    pub fn remove(&mut self, id: NodeId) {
        if let Some(old) = self.docs.remove(&id) {
            for term in old.keys() {
                if let Some(df) = self.df.get_mut(term) {
                    *df -= 1;
                    if *df == 0 {
                        self.df.remove(term);
                    }
                }
                if let Some(p) = self.postings.get_mut(term) {
                    p.retain(|x| *x != id);
                    if p.is_empty() {
                        self.postings.remove(term);
                    }
                }
            }
        }
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    fn weights(&self, tf: &HashMap<String, u32>) -> BTreeMap<String, f64> {
        tf.iter().map(|(t, c)| (t.clone(), *c as f64 * self.idf(t))).collect()
    }

    fn query_weights(&self, query: &str) -> BTreeMap<String, f64> {
        let mut tf: HashMap<String, u32> = HashMap::new();
        for t in tokenize(query) {
            *tf.entry(t).or_default() += 1;
        }
        self.weights(&tf)
    }

    fn cosine(q: &BTreeMap<String, f64>, d: &BTreeMap<String, f64>) -> f64 {
        let dot: f64 = q.iter().filter_map(|(t, w)| d.get(t).map(|dw| w * dw)).sum();
        let nq = q.values().map(|w| w * w).sum::<f64>().sqrt();
        let nd = d.values().map(|w| w * w).sum::<f64>().sqrt();
        if nq == 0.0 || nd == 0.0 {
            0.0
        } else {
            (dot / (nq * nd)).clamp(0.0, 1.0)
        }
    }

    /// TF-IDF cosine between free text and an indexed document, in [0, 1].
    pub fn similarity(&self, query: &str, id: NodeId) -> f64 {
        let Some(doc) = self.docs.get(&id) else {
            return 0.0;
        };
        Self::cosine(&self.query_weights(query), &self.weights(doc))
    }

    /// Documents sharing at least one token with `query`, best first.
    pub fn search(&self, query: &str, limit: usize) -> Vec<(NodeId, f64)> {
        let q = self.query_weights(query);
        let mut candidates: Vec<NodeId> = q
            .keys()
            .filter_map(|t| self.postings.get(t))
            .flatten()
            .copied()
            .collect();
        candidates.sort();
        candidates.dedup();
        let mut scored: Vec<(NodeId, f64)> = candidates
            .into_iter()
            .map(|id| (id, Self::cosine(&q, &self.weights(&self.docs[&id]))))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(limit);
        scored
    }
}
