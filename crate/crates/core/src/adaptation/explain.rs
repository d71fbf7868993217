//! Per-item explanations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::enrichment::{normalize_entity_name, SemanticProfile};
use crate::profiling::UserProfile;
use crate::provider::{DecodingParams, GenerationProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationSource {
    Template,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub text: String,
    pub source: ExplanationSource,
    /// A provider was configured but its answer could not be used.
    pub degraded: bool,
}

fn clean(s: &str) -> String {
    s.chars()
        .filter(|c| !matches!(c, '.' | '!' | '?'))
        .collect::<String>()
        .trim()
        .to_string()
}

/// The first profile entity the user is interested in, else the first entity.
fn pick_entity(item: &SemanticProfile, interests: &[String]) -> Option<(String, bool)> {
    let named = || item.entities.iter().filter(|e| !clean(&e.name).is_empty());
    named()
        .find(|e| interests.contains(&normalize_entity_name(&e.name)))
        .map(|e| (clean(&e.name), true))
        .or_else(|| named().next().map(|e| (clean(&e.name), false)))
}

/// Three-sentence template naming the dominant channel (or the goal when
/// the profile has none), an entity and the goal or complexity.
pub fn template_explanation(title: &str, item: &SemanticProfile, user: &UserProfile, interests: &[String]) -> String {
    let goal = user.goal.as_str().to_lowercase();
    let title = match clean(title) {
        t if t.is_empty() => "This title".to_string(),
        t => t,
    };
    let mut text = String::new();
    match user.vark.dominant() {
        Some(ch) => {
            let fit = item.vark_alignment.get(ch);
            let _ = write!(
                text,
                "Matches your {} preference: {title} puts {:.0}% of its style on that channel.",
                ch.label(),
                fit * 100.0
            );
        }
        None => {
            let _ = write!(text, "{title} was picked for your {goal} goal.");
        }
    }
    match pick_entity(item, interests) {
        Some((name, true)) => {
            let _ = write!(text, " It features {}, which lines up with your interests.", name);
        }
        Some((name, false)) => {
            let _ = write!(text, " It centres on {}.", name);
        }
        None => {
            let _ = write!(text, " It stands on its own without background knowledge.");
        }
    }
    if user.vark.dominant().is_some() {
        let _ = write!(
            text,
            " At complexity {} of 5 it suits a {goal} session.",
            item.complexity
        );
    } else {
        let _ = write!(
            text,
            " Its complexity is {} of 5 and it balances all four learning styles.",
            item.complexity
        );
    }
    text
}

/// Prompt asking a provider for a short personalised explanation.
pub fn build_explanation_prompt(
    title: &str,
    item: &SemanticProfile,
    user: &UserProfile,
    interests: &[String],
) -> String {
    let ents: Vec<&str> = item.entities.iter().take(6).map(|e| e.name.as_str()).collect();
    let v = user.vark.components();
    format!(
        "Write a 2-3 sentence explanation of why this item is recommended to this user. \
Reference their learning style and a relevant entity or prerequisite, in a natural tone.\n\
Item: {title}\nEntities: {}\nPrerequisites: {}\nComplexity: {}\n\
User goal: {}\nUser VARK: V={:.2} A={:.2} R={:.2} K={:.2}\nUser interests: {}\n",
        ents.join(", "),
        if item.prerequisites.is_empty() {
            "none".to_string()
        } else {
            item.prerequisites.join(", ")
        },
        item.complexity,
        user.goal,
        v[0],
        v[1],
        v[2],
        v[3],
        interests.join(", "),
    )
}

/// Splits on sentence terminators; keeps at most `max` sentences.
fn first_sentences(text: &str, max: usize) -> (String, usize) {
    let mut out = String::new();
    let mut count = 0;
    let mut current = String::new();
    for c in text.chars() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            let s = current.trim();
            if s.len() > 1 {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(s);
                count += 1;
                if count == max {
                    return (out, count);
                }
            }
            current.clear();
        }
    }
    (out, count)
}

/// Counts sentences ended by `.`, `!` or `?`.
pub fn sentence_count(text: &str) -> usize {
    first_sentences(text, usize::MAX).1
}

pub fn generate_explanation(
    title: &str,
    item: &SemanticProfile,
    user: &UserProfile,
    interests: &[String],
    provider: Option<&dyn GenerationProvider>,
) -> Explanation {
    let template = || template_explanation(title, item, user, interests);
    let Some(p) = provider else {
        return Explanation {
            text: template(),
            source: ExplanationSource::Template,
            degraded: false,
        };
    };
    let prompt = build_explanation_prompt(title, item, user, interests);
    match p.generate(&prompt, &DecodingParams::EXPLANATION) {
        Ok(raw) => {
            let (text, n) = first_sentences(raw.trim(), 3);
            if n >= 2 {
                return Explanation {
                    text,
                    source: ExplanationSource::Provider,
                    degraded: false,
                };
            }
            tracing::debug!(provider = p.identity(), "explanation too short, using template");
        }
        Err(e) => tracing::warn!(provider = p.identity(), error = %e, "explanation provider failed"),
    }
    Explanation {
        text: template(),
        source: ExplanationSource::Template,
        degraded: true,
    }
}
