//! User profiles: questionnaire scoring, onboarding into the graph, and the
//! slow drift of embeddings and learning-style vectors under feedback.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::graph::{user_key, EdgeKey, EdgeType, GraphDelta, GraphError, KnowledgeGraph, NodeId, NodeType};
use crate::vark::{Channel, VarkVector};

pub const QUESTION_COUNT: usize = 16;
pub const DEFAULT_EMBEDDING_RATE: f64 = 0.1;
pub const DEFAULT_DRIFT_RATE: f64 = 0.05;
/// Past VARK vectors retained per user.
pub const DRIFT_HISTORY: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("expected {QUESTION_COUNT} answers, got {0}")]
    InvalidAnswerCount(usize),
    #[error("invalid answer {0:?}")]
    InvalidAnswer(String),
    #[error("user {0} already exists")]
    DuplicateUser(String),
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("profile store line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Goal {
    Purchase,
    Entertainment,
    Research,
    Learning,
}

impl Goal {
    pub const ALL: [Goal; 4] = [Goal::Purchase, Goal::Entertainment, Goal::Research, Goal::Learning];

    pub fn as_str(self) -> &'static str {
        match self {
            Goal::Purchase => "PURCHASE",
            Goal::Entertainment => "ENTERTAINMENT",
            Goal::Research => "RESEARCH",
            Goal::Learning => "LEARNING",
        }
    }

    pub fn one_hot(self) -> [f64; 4] {
        let mut v = [0.0; 4];
        v[self as usize] = 1.0;
        v
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Goal {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Goal::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ProfileError::InvalidParameter(format!("unknown goal {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Gender {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "F")]
    Female,
    #[default]
    #[serde(rename = "X")]
    Unspecified,
}

/// MovieLens-style demographics: age bracket code (1, 18, 25, 35, 45, 50,
/// 56), gender and occupation code (0–20).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Demographics {
    pub age: u8,
    pub gender: Gender,
    pub occupation: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub demographics: Demographics,
    pub goal: Goal,
    pub vark: VarkVector,
    pub embedding: Vec<f32>,
}

/// One questionnaire item with an option per channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Question {
    pub text: String,
    pub options: Vec<(Channel, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Questionnaire {
    pub questions: Vec<Question>,
}

static BUILTIN_QUESTIONNAIRE: LazyLock<Questionnaire> = LazyLock::new(|| {
    Questionnaire::parse(include_str!("../data/vark_questionnaire.tsv")).expect("bundled questionnaire is well-formed")
});

impl Questionnaire {
    pub fn builtin() -> &'static Questionnaire {
        &BUILTIN_QUESTIONNAIRE
    }

    /// Parses `question<TAB>V:opt<TAB>A:opt<TAB>R:opt<TAB>K:opt` lines.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ProfileError> {
        let mut questions = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fmt_err = |message: String| ProfileError::Format { line: n + 1, message };
            let mut fields = line.split('\t');
            let text = fields.next().unwrap_or_default().trim().to_string();
            let mut options = Vec::new();
            for f in fields {
                let (tag, opt) = f
                    .split_once(':')
                    .ok_or_else(|| fmt_err(format!("option {f:?} lacks a channel tag")))?;
                let ch = tag
                    .trim()
                    .chars()
                    .next()
                    .and_then(Channel::from_letter)
                    .ok_or_else(|| fmt_err(format!("bad channel tag {tag:?}")))?;
                options.push((ch, opt.trim().to_string()));
            }
            let mut seen: Vec<Channel> = options.iter().map(|o| o.0).collect();
            seen.sort();
            seen.dedup();
            if options.len() != 4 || seen.len() != 4 {
                return Err(fmt_err("expected one option per channel".into()));
            }
            questions.push(Question { text, options });
        }
        if questions.len() != QUESTION_COUNT {
            return Err(ProfileError::InvalidAnswerCount(questions.len()));
        }
        Ok(Self { questions })
    }
}

/// Parses answers given as letters, e.g. `"VVARKK..."` or `"V,A,R,K,..."`.
pub fn parse_answers(s: &str) -> Result<Vec<Channel>, ProfileError> {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| Channel::from_letter(c).ok_or_else(|| ProfileError::InvalidAnswer(c.to_string())))
        .collect()
}

/// Fraction of answers per channel.
pub fn score_questionnaire(answers: &[Channel]) -> Result<VarkVector, ProfileError> {
    if answers.len() != QUESTION_COUNT {
        return Err(ProfileError::InvalidAnswerCount(answers.len()));
    }
    let mut counts = [0u32; 4];
    for a in answers {
        counts[a.index()] += 1;
    }
    // Counts over 16 are dyadic, so the division is exact and sums to 1.
    Ok(
        VarkVector::from_weights(counts.map(|c| c as f64 / QUESTION_COUNT as f64))
            .expect("counts are non-negative with positive total"),
    )
}

/// Unit-norm random embedding from a seeded standard normal.
pub fn initial_embedding(dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Some(u) = normalize(&v) {
            return u;
        }
    }
}

fn normalize(v: &[f64]) -> Option<Vec<f32>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    Some(v.iter().map(|x| (x / n) as f32).collect())
}

pub fn vark_key(channel: Channel) -> String {
    format!("vark:{}", channel.letter())
}

pub fn goal_key(goal: Goal) -> String {
    format!("goal:{}", goal.as_str())
}

/// Adds the user node with its goal and learning-style edges.
///
/// Goal and VARK_PREF nodes are created on first use with zero embeddings;
/// they only anchor edges.
pub fn create_user(
    graph: &mut KnowledgeGraph,
    user_id: &str,
    demographics: Demographics,
    goal: Goal,
    vark: VarkVector,
    seed: u64,
) -> Result<(UserProfile, NodeId, GraphDelta), ProfileError> {
    let key = user_key(user_id);
    if graph.id_of(&key).is_some() {
        return Err(ProfileError::DuplicateUser(user_id.to_string()));
    }
    let dim = graph.dim();
    let embedding = initial_embedding(dim, seed);
    let mut delta = GraphDelta::default();
    let (uid, _) = graph.ensure_node(NodeType::User, &key, user_id, "", embedding.clone())?;
    delta.added_nodes.push(uid);
    graph.set_attribute(uid, "goal", goal.as_str())?;
    graph.set_attribute(uid, "age", &demographics.age.to_string())?;
    graph.set_attribute(uid, "occupation", &demographics.occupation.to_string())?;

    let (gid, created) = graph.ensure_node(
        NodeType::Goal,
        &goal_key(goal),
        goal.as_str(),
        "consumption goal",
        vec![0.0; dim],
    )?;
    if created {
        delta.added_nodes.push(gid);
    }
    graph.upsert_edge(
        EdgeKey {
            source: uid,
            target: gid,
            edge_type: EdgeType::HasGoal,
        },
        1.0,
        "stated goal",
        &mut delta,
    )?;
    write_vark_edges(graph, uid, &vark, &mut delta)?;

    Ok((
        UserProfile {
            user_id: user_id.to_string(),
            demographics,
            goal,
            vark,
            embedding,
        },
        uid,
        delta,
    ))
}

/// Sets the user's PREFERS edges to the four VARK_PREF nodes.
pub fn write_vark_edges(
    graph: &mut KnowledgeGraph,
    user: NodeId,
    vark: &VarkVector,
    delta: &mut GraphDelta,
) -> Result<(), ProfileError> {
    let dim = graph.dim();
    for ch in Channel::ALL {
        let (vid, created) = graph.ensure_node(
            NodeType::VarkPref,
            &vark_key(ch),
            ch.label(),
            "learning style",
            vec![0.0; dim],
        )?;
        if created {
            delta.added_nodes.push(vid);
        }
        graph.upsert_edge(
            EdgeKey {
                source: user,
                target: vid,
                edge_type: EdgeType::Prefers,
            },
            vark.get(ch),
            "learning style",
            delta,
        )?;
    }
    Ok(())
}

/// `normalize((1-λ)·e_u + λ·s·e_i)`; unchanged if the blend vanishes.
pub fn update_embedding(user: &[f32], item: &[f32], signal: f64, rate: f64) -> Result<Vec<f32>, ProfileError> {
    if user.len() != item.len() {
        return Err(ProfileError::DimensionMismatch {
            expected: user.len(),
            got: item.len(),
        });
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(ProfileError::InvalidParameter(format!("rate {rate} outside (0, 1]")));
    }
    let s = signal.clamp(-1.0, 1.0);
    let blend: Vec<f64> = user
        .iter()
        .zip(item)
        .map(|(u, i)| (1.0 - rate) * *u as f64 + rate * s * *i as f64)
        .collect();
    Ok(normalize(&blend).unwrap_or_else(|| user.to_vec()))
}

/// `normalize((1-ρ)·vark + ρ·engagement)`; unchanged for all-zero engagement.
///
/// Engagement is first scaled onto the simplex, so the result is a convex
/// combination of two simplex points and moves at most `2ρ` in L1.
pub fn refine_vark(vark: &VarkVector, engagement: [f64; 4], rate: f64) -> VarkVector {
    let engagement = engagement.map(|e| if e.is_finite() { e.clamp(0.0, 1.0) } else { 0.0 });
    let total: f64 = engagement.iter().sum();
    if total == 0.0 {
        return *vark;
    }
    let rate = rate.clamp(0.0, 1.0);
    let cur = vark.components();
    let mut w = [0.0; 4];
    for i in 0..4 {
        w[i] = (1.0 - rate) * cur[i] + rate * engagement[i] / total;
    }
    VarkVector::from_weights(w).unwrap_or(*vark)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredProfile {
    pub profile: UserProfile,
    /// Previous VARK vectors, oldest first.
    pub vark_history: VecDeque<VarkVector>,
}

/// In-memory profile table with a JSON-lines sidecar file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileStore {
    users: BTreeMap<String, StoredProfile>,
}

impl ProfileStore {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn get(&self, user_id: &str) -> Option<&StoredProfile> {
        self.users.get(user_id)
    }

    pub fn profile(&self, user_id: &str) -> Option<&UserProfile> {
        self.users.get(user_id).map(|s| &s.profile)
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredProfile> {
        self.users.values()
    }

    pub fn insert(&mut self, profile: UserProfile) -> Result<(), ProfileError> {
        if self.users.contains_key(&profile.user_id) {
            return Err(ProfileError::DuplicateUser(profile.user_id));
        }
        self.users.insert(
            profile.user_id.clone(),
            StoredProfile {
                profile,
                vark_history: VecDeque::new(),
            },
        );
        Ok(())
    }

    pub fn set_embedding(&mut self, user_id: &str, embedding: Vec<f32>) -> Result<(), ProfileError> {
        let s = self.entry(user_id)?;
        s.profile.embedding = embedding;
        Ok(())
    }

    /// Replaces the VARK vector, pushing the old one onto the bounded history.
    pub fn set_vark(&mut self, user_id: &str, vark: VarkVector) -> Result<(), ProfileError> {
        let s = self.entry(user_id)?;
        if s.vark_history.len() == DRIFT_HISTORY {
            s.vark_history.pop_front();
        }
        s.vark_history.push_back(s.profile.vark);
        s.profile.vark = vark;
        Ok(())
    }

    /// Replaces the VARK vector and discards the drift history.
    pub fn reset_vark(&mut self, user_id: &str, vark: VarkVector) -> Result<(), ProfileError> {
        let s = self.entry(user_id)?;
        s.vark_history.clear();
        s.profile.vark = vark;
        Ok(())
    }

    fn entry(&mut self, user_id: &str) -> Result<&mut StoredProfile, ProfileError> {
        self.users
            .get_mut(user_id)
            .ok_or_else(|| ProfileError::UnknownUser(user_id.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ProfileError> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            for s in self.users.values() {
                serde_json::to_writer(&mut w, s).map_err(std::io::Error::other)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let mut store = Self::default();
        for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: StoredProfile = serde_json::from_str(&line).map_err(|e| ProfileError::Format {
                line: n + 1,
                message: e.to_string(),
            })?;
            store.users.insert(s.profile.user_id.clone(), s);
        }
        Ok(store)
    }
}
