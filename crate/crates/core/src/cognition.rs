//! Per-session cognitive state: capacity, attention, preferred complexity
//! and presentation weights.

use serde::{Deserialize, Serialize};

use crate::profiling::Goal;
use crate::vark::{Channel, VarkVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Device {
    Mobile,
    Desktop,
    Tablet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Pace {
    Fast,
    Moderate,
    Careful,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionContext {
    pub hour: u8,
    /// 0 = Monday.
    #[serde(default)]
    pub day_of_week: u8,
    pub device: Device,
    #[serde(default)]
    pub session_minutes: f64,
    #[serde(default)]
    pub items_viewed: u32,
    pub pace: Pace,
    #[serde(default)]
    pub stated_goal: Option<Goal>,
    #[serde(default)]
    pub available_minutes: Option<f64>,
}

impl Default for SessionContext {
    fn default() -> Self {
        Self {
            hour: 10,
            day_of_week: 0,
            device: Device::Desktop,
            session_minutes: 0.0,
            items_viewed: 0,
            pace: Pace::Moderate,
            stated_goal: None,
            available_minutes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CognitiveState {
    pub capacity: f64,
    pub attention: f64,
    pub complexity_pref: f64,
    /// Channel weights scaled so the largest is 1.
    pub presentation: [f64; 4],
}

impl CognitiveState {
    pub fn presentation_mode(&self) -> Channel {
        crate::vark::VarkVector::from_weights_or_uniform(self.presentation).argmax()
    }

    pub fn is_valid(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        unit(self.capacity)
            && unit(self.attention)
            && unit(self.complexity_pref)
            && self.presentation.iter().all(|x| unit(*x))
    }
}

/// Factor tables. Every constant here is a tunable default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CognitionConfig {
    /// Time-of-day factor for [0,6), [6,12), [12,18), [18,24).
    pub time_of_day: [f64; 4],
    pub session_slope: f64,
    pub session_floor: f64,
    pub device_mobile: f64,
    pub device_tablet: f64,
    pub device_desktop: f64,
    pub pace_fast: f64,
    pub pace_moderate: f64,
    pub pace_careful: f64,
    pub goal_learning: f64,
    pub goal_research: f64,
    pub goal_purchase: f64,
    pub goal_entertainment: f64,
    pub goal_unstated: f64,
    pub mobile_visual_boost: f64,
    pub mobile_reading_damp: f64,
}

impl Default for CognitionConfig {
    fn default() -> Self {
        Self {
            time_of_day: [0.6, 1.0, 0.9, 0.8],
            session_slope: 0.01,
            session_floor: 0.3,
            device_mobile: 0.5,
            device_tablet: 0.7,
            device_desktop: 0.9,
            pace_fast: 0.6,
            pace_moderate: 0.8,
            pace_careful: 1.0,
            goal_learning: 1.0,
            goal_research: 0.9,
            goal_purchase: 0.7,
            goal_entertainment: 0.6,
            goal_unstated: 0.8,
            mobile_visual_boost: 1.2,
            mobile_reading_damp: 0.8,
        }
    }
}

impl CognitionConfig {
    pub fn time_factor(&self, hour: u8) -> f64 {
        self.time_of_day[(hour.min(23) / 6) as usize]
    }

    pub fn session_factor(&self, session_minutes: f64) -> f64 {
        let m = if session_minutes.is_finite() {
            session_minutes.max(0.0)
        } else {
            0.0
        };
        (1.0 - self.session_slope * m).max(self.session_floor)
    }

    /// `α_t · β_s`.
    pub fn capacity(&self, hour: u8, session_minutes: f64) -> f64 {
        (self.time_factor(hour) * self.session_factor(session_minutes)).clamp(0.0, 1.0)
    }

    fn device_factor(&self, d: Device) -> f64 {
        match d {
            Device::Mobile => self.device_mobile,
            Device::Tablet => self.device_tablet,
            Device::Desktop => self.device_desktop,
        }
    }

    fn pace_factor(&self, p: Pace) -> f64 {
        match p {
            Pace::Fast => self.pace_fast,
            Pace::Moderate => self.pace_moderate,
            Pace::Careful => self.pace_careful,
        }
    }

    fn goal_factor(&self, g: Option<Goal>) -> f64 {
        match g {
            Some(Goal::Learning) => self.goal_learning,
            Some(Goal::Research) => self.goal_research,
            Some(Goal::Purchase) => self.goal_purchase,
            Some(Goal::Entertainment) => self.goal_entertainment,
            None => self.goal_unstated,
        }
    }

    pub fn estimate_state(&self, ctx: &SessionContext, vark: &VarkVector) -> CognitiveState {
        let capacity = self.capacity(ctx.hour, ctx.session_minutes);
        let attention = (self.device_factor(ctx.device) * self.pace_factor(ctx.pace)).clamp(0.0, 1.0);
        let complexity_pref = (capacity * self.goal_factor(ctx.stated_goal)).clamp(0.0, 1.0);
        let mut pres = vark.components();
        if ctx.device == Device::Mobile {
            pres[Channel::Visual.index()] *= self.mobile_visual_boost;
            pres[Channel::Reading.index()] *= self.mobile_reading_damp;
        }
        let max = pres.iter().cloned().fold(0.0f64, f64::max);
        let presentation = if max > 0.0 {
            pres.map(|x| (x / max).clamp(0.0, 1.0))
        } else {
            [1.0; 4]
        };
        CognitiveState {
            capacity,
            attention,
            complexity_pref,
            presentation,
        }
    }
}

pub fn capacity(hour: u8, session_minutes: f64) -> f64 {
    CognitionConfig::default().capacity(hour, session_minutes)
}

pub fn estimate_state(ctx: &SessionContext, vark: &VarkVector) -> CognitiveState {
    CognitionConfig::default().estimate_state(ctx, vark)
}

/// Inclusive complexity range on the 1–5 scale suited to the state.
pub fn complexity_band(state: &CognitiveState) -> (u8, u8) {
    let pref = state.complexity_pref.clamp(0.0, 1.0);
    let max = (1.0 + 4.0 * pref).round().clamp(1.0, 5.0) as u8;
    (max.saturating_sub(2).max(1), max)
}
