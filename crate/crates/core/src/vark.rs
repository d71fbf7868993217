//! The four-channel VARK preference vector (Visual, Auditory, Reading/Writing,
//! Kinesthetic), always a point on the probability simplex.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Tolerance for the simplex sum.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "V")]
    Visual,
    #[serde(rename = "A")]
    Auditory,
    #[serde(rename = "R")]
    Reading,
    #[serde(rename = "K")]
    Kinesthetic,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::Visual,
        Channel::Auditory,
        Channel::Reading,
        Channel::Kinesthetic,
    ];

    pub fn index(self) -> usize {
        match self {
            Channel::Visual => 0,
            Channel::Auditory => 1,
            Channel::Reading => 2,
            Channel::Kinesthetic => 3,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Channel::Visual => 'V',
            Channel::Auditory => 'A',
            Channel::Reading => 'R',
            Channel::Kinesthetic => 'K',
        }
    }

    pub fn from_letter(c: char) -> Option<Channel> {
        match c.to_ascii_uppercase() {
            'V' => Some(Channel::Visual),
            'A' => Some(Channel::Auditory),
            'R' => Some(Channel::Reading),
            'K' => Some(Channel::Kinesthetic),
            _ => None,
        }
    }

    /// Lowercase adjective used in explanations ("visual", "auditory", ...).
    pub fn label(self) -> &'static str {
        match self {
            Channel::Visual => "visual",
            Channel::Auditory => "auditory",
            Channel::Reading => "reading/writing",
            Channel::Kinesthetic => "kinesthetic",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum VarkError {
    #[error("VARK weights must be finite and non-negative, got {0:?}")]
    InvalidWeights([f64; 4]),
    #[error("VARK weights sum to zero")]
    ZeroMass,
}

/// Preference strengths over the four channels. Components are non-negative
/// and sum to 1 within [`SIMPLEX_TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VarkRepr", into = "VarkRepr")]
pub struct VarkVector([f64; 4]);

#[derive(Serialize, Deserialize)]
struct VarkRepr {
    v: f64,
    a: f64,
    r: f64,
    k: f64,
}

impl TryFrom<VarkRepr> for VarkVector {
    type Error = VarkError;

    fn try_from(r: VarkRepr) -> Result<Self, Self::Error> {
        VarkVector::from_weights([r.v, r.a, r.r, r.k])
    }
}

impl From<VarkVector> for VarkRepr {
    fn from(v: VarkVector) -> Self {
        let [v, a, r, k] = v.0;
        VarkRepr { v, a, r, k }
    }
}

impl VarkVector {
    pub const UNIFORM: VarkVector = VarkVector([0.25; 4]);

    /// Normalizes arbitrary non-negative weights onto the simplex.
    pub fn from_weights(w: [f64; 4]) -> Result<Self, VarkError> {
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(VarkError::InvalidWeights(w));
        }
        let sum: f64 = w.iter().sum();
        if sum <= 0.0 {
            return Err(VarkError::ZeroMass);
        }
        // Already on the simplex: keep the exact bits so re-parsing is lossless.
        if (sum - 1.0).abs() <= 1e-12 && w.iter().all(|x| *x <= 1.0) {
            return Ok(VarkVector(w));
        }
        Ok(VarkVector(w.map(|x| x / sum)))
    }

    /// Like [`VarkVector::from_weights`] but degrades to uniform instead of failing.
    pub fn from_weights_or_uniform(w: [f64; 4]) -> Self {
        Self::from_weights(w).unwrap_or(Self::UNIFORM)
    }

    pub fn components(&self) -> [f64; 4] {
        self.0
    }

    pub fn get(&self, channel: Channel) -> f64 {
        self.0[channel.index()]
    }

    pub fn dot(&self, other: &VarkVector) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    /// The unique strongest channel, or `None` when the maximum is shared.
    pub fn dominant(&self) -> Option<Channel> {
        dominant_of(&self.0)
    }

    /// Strongest channel with ties resolved in V, A, R, K order.
    pub fn argmax(&self) -> Channel {
        let mut best = Channel::Visual;
        for c in Channel::ALL {
            if self.get(c) > self.get(best) {
                best = c;
            }
        }
        best
    }

    pub fn l1_distance(&self, other: &VarkVector) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).abs()).sum()
    }

    /// True when the simplex invariants hold.
    pub fn is_valid(&self) -> bool {
        let sum: f64 = self.0.iter().sum();
        self.0.iter().all(|x| (0.0..=1.0).contains(x)) && (sum - 1.0).abs() <= SIMPLEX_TOLERANCE
    }
}

impl Default for VarkVector {
    fn default() -> Self {
        Self::UNIFORM
    }
}

pub(crate) fn dominant_of(w: &[f64; 4]) -> Option<Channel> {
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut winners = Channel::ALL
        .into_iter()
        .filter(|c| (w[c.index()] - max).abs() <= SIMPLEX_TOLERANCE);
    let first = winners.next()?;
    if winners.next().is_some() {
        None
    } else {
        Some(first)
    }
}
