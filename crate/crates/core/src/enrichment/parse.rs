//! Lenient parsing of free-text profile responses, plus the canonical
//! rendering the parser reads back exactly.
//!
//! Responses are split into the six numbered sections the prompt asks for.
//! Each section is then read line by line with forgiving patterns; anything
//! unrecognized is ignored. Only a missing complexity or an empty entity list
//! is fatal.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;

use super::{normalize_entity_name, Entity, Relation, SemanticProfile};
use crate::vark::VarkVector;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("empty response")]
    Empty,
    #[error("no complexity value in 1-5 found")]
    NoComplexity,
    #[error("no entities found")]
    NoEntities,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Entities,
    Relations,
    Complexity,
    Prerequisites,
    Audience,
    Vark,
}

static HEADING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:#{1,6}\s*)?(?:\*\*)?\s*(?:([1-6])\s*[.):]\s*)?(?:\*\*)?\s*(.+?)\s*$").unwrap()
});
static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]+|\d+[.)]|[a-z][.)])\s*").unwrap());
static RANGE_1_5: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(?\s*\b1\s*[-–]\s*5\b\s*\)?").unwrap());
static DIGIT_1_5: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([1-5])\b").unwrap());
static GLOBAL_COMPLEXITY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:complexity|difficulty)[^0-9\n]{0,40}?\b([1-5])\b").unwrap());
static VARK_SECTION_WEIGHT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(visual|auditory|aural|read(?:ing)?(?:\s*/\s*writing)?|kinesthetic|kinaesthetic|v|a|r|k)\b\s*(?:[:=(]|-\s)?\s*(\d+(?:\.\d+)?|\.\d+|high|medium|moderate|low|none)\s*(%)?",
    )
    .unwrap()
});
static VARK_GLOBAL_WEIGHT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(visual|auditory|aural|reading(?:\s*/\s*writing)?|kinesthetic|kinaesthetic)\b\s*(?:[:=(]|-\s)\s*(\d+(?:\.\d+)?|\.\d+|high|medium|moderate|low|none)",
    )
    .unwrap()
});
static TRAILING_CONFIDENCE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\s*[\(\[]?\s*(?:conf(?:idence)?\s*[:=]?\s*)?(\d+(?:\.\d+)?|\.\d+)\s*[\)\]]?\s*$").unwrap()
});

fn classify_heading(text: &str) -> Option<Section> {
    let t = text.to_lowercase();
    if t.contains("relationship") || t.starts_with("relations") {
        Some(Section::Relations)
    } else if t.contains("entit") || t.contains("concepts") {
        Some(Section::Entities)
    } else if t.contains("complexity") || t.contains("difficulty") {
        Some(Section::Complexity)
    } else if t.contains("background") || t.contains("prerequisite") {
        Some(Section::Prerequisites)
    } else if t.contains("audience") {
        Some(Section::Audience)
    } else if t.contains("learning style") || t.contains("alignment") || t.contains("vark") {
        Some(Section::Vark)
    } else {
        None
    }
}

/// A line is a heading when it carries explicit heading markup (a 1-6
/// number, `#`, bold, or a trailing colon) and names a known section.
/// Returns the section and any inline content after the heading's colon.
fn heading(line: &str) -> Option<(Section, Option<String>)> {
    let trimmed = line.trim();
    if trimmed.starts_with('-') || trimmed.starts_with('*') && !trimmed.starts_with("**") {
        return None;
    }
    let caps = HEADING.captures(trimmed)?;
    let numbered = caps.get(1).is_some();
    let body = caps.get(2)?.as_str().trim_end_matches("**");
    let (title, rest) = match body.find(':') {
        Some(i) => (&body[..i], Some(body[i + 1..].trim().trim_start_matches("**").trim())),
        None => (body, None),
    };
    // "Complexity: 4" style labels count as headings when the label is short.
    let labelled = rest.is_some() && title.split_whitespace().count() <= 4;
    let marked =
        numbered || labelled || trimmed.starts_with('#') || trimmed.starts_with("**") || trimmed.ends_with(':');
    if !marked {
        return None;
    }
    let section = classify_heading(title)?;
    Some((section, rest.filter(|r| !r.is_empty()).map(str::to_string)))
}

fn strip_bullet(line: &str) -> &str {
    match BULLET.find(line) {
        Some(m) => line[m.end()..].trim(),
        None => line.trim(),
    }
}

fn is_none_marker(s: &str) -> bool {
    matches!(
        s.trim().trim_end_matches('.').to_lowercase().as_str(),
        "" | "none" | "n/a" | "na" | "no special background" | "nothing"
    )
}

fn clean_name(s: &str) -> String {
    s.trim()
        .trim_matches(|c| c == '*' || c == '"' || c == '`' || c == '\'')
        .trim()
        .to_string()
}

fn parse_entity_line(line: &str) -> Option<Entity> {
    let line = strip_bullet(line);
    if is_none_marker(line) {
        return None;
    }
    let separators = [": ", " - ", " – ", " — "];
    let split = separators
        .iter()
        .filter_map(|s| line.find(s).map(|i| (i, s.len())))
        .min_by_key(|(i, _)| *i);
    let (head, description) = match split {
        Some((i, len)) => (&line[..i], line[i + len..].trim()),
        None => (line.trim_end_matches(':'), ""),
    };
    let head = head.trim();
    let (name, kind) = match head.strip_suffix(']').or_else(|| head.strip_suffix(')')) {
        Some(inner) => match inner.rfind(['[', '(']) {
            Some(open) => (&inner[..open], inner[open + 1..].trim()),
            None => (head, ""),
        },
        None => (head, ""),
    };
    let name = clean_name(name);
    if is_none_marker(&name) {
        return None;
    }
    let kind = if kind.is_empty() {
        "concept".to_string()
    } else {
        kind.to_lowercase()
    };
    Some(Entity {
        name,
        kind,
        description: description.to_string(),
        embedding: Vec::new(),
    })
}

fn split_relation(line: &str) -> Option<(String, String, String, Option<f64>)> {
    let line = strip_bullet(line);
    let line = line.strip_prefix('(').and_then(|l| l.strip_suffix(')')).unwrap_or(line);
    let parts: Vec<&str> = if line.contains('|') {
        line.split('|').collect()
    } else if line.contains("->") {
        line.split("->").collect()
    } else if line.matches(',').count() >= 2 {
        line.split(',').collect()
    } else {
        return None;
    };
    let mut parts: Vec<String> = parts.iter().map(|p| p.trim().to_string()).collect();
    parts.retain(|p| !p.is_empty());
    let mut confidence = None;
    if parts.len() >= 4 {
        let last = parts.pop()?;
        confidence = TRAILING_CONFIDENCE
            .captures(&last)
            .and_then(|c| c[1].parse::<f64>().ok());
    } else if parts.len() == 3 {
        // "B (0.9)" style confidence glued to the object.
        let obj = parts[2].clone();
        if let Some(c) = TRAILING_CONFIDENCE.captures(&obj) {
            let whole = c.get(0).unwrap();
            let stripped = obj[..whole.start()].trim();
            if !stripped.is_empty() && (obj.contains('(') || obj.contains('[')) {
                confidence = c[1].parse::<f64>().ok();
                parts[2] = stripped.to_string();
            }
        }
    }
    if parts.len() != 3 {
        return None;
    }
    let predicate = parts[1]
        .trim_matches(|c: char| c == '-' || c == '>' || c.is_whitespace())
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
        .to_uppercase();
    if predicate.is_empty() {
        return None;
    }
    Some((clean_name(&parts[0]), predicate, clean_name(&parts[2]), confidence))
}

fn weight_token(raw: &str, percent: bool) -> Option<f64> {
    let w = match raw.to_lowercase().as_str() {
        "high" => 3.0,
        "medium" | "moderate" => 2.0,
        "low" => 1.0,
        "none" => 0.0,
        num => num.parse::<f64>().ok()?,
    };
    Some(if percent { w / 100.0 } else { w })
}

fn channel_index(label: &str) -> Option<usize> {
    let l = label.to_lowercase();
    match l.chars().next()? {
        'v' => Some(0),
        'a' => Some(1),
        'r' => Some(2),
        'k' => Some(3),
        _ => None,
    }
}

fn extract_vark(text: &str, pattern: &Regex) -> Option<[f64; 4]> {
    let mut weights = [None; 4];
    for caps in pattern.captures_iter(text) {
        let Some(idx) = channel_index(&caps[1]) else {
            continue;
        };
        if weights[idx].is_some() {
            continue;
        }
        weights[idx] = weight_token(&caps[2], caps.get(3).is_some());
    }
    if weights.iter().all(Option::is_none) {
        None
    } else {
        Some(weights.map(|w| w.unwrap_or(0.0)))
    }
}

fn extract_complexity(text: &str) -> Option<u8> {
    let cleaned = RANGE_1_5.replace_all(text, " ");
    DIGIT_1_5.captures(&cleaned).and_then(|c| c[1].parse::<u8>().ok())
}

/// Parser bound to one item. Relation endpoints referring to the item itself
/// (by id, by any alias such as its title, or as "this item") are rewritten
/// to the item id.
#[derive(Debug, Clone)]
pub struct ProfileParser {
    item_id: String,
    aliases: HashSet<String>,
}

impl ProfileParser {
    pub fn new(item_id: &str) -> Self {
        let aliases = [item_id, "item", "this item", "the item"]
            .iter()
            .map(|a| normalize_entity_name(a))
            .collect();
        Self {
            item_id: item_id.to_string(),
            aliases,
        }
    }

    pub fn with_alias(mut self, alias: &str) -> Self {
        self.aliases.insert(normalize_entity_name(alias));
        self
    }

    pub fn parse(&self, text: &str) -> Result<SemanticProfile, ParseError> {
        if text.trim().is_empty() {
            return Err(ParseError::Empty);
        }

        let mut sections: Vec<(Section, Vec<String>)> = Vec::new();
        for line in text.lines() {
            if let Some((section, inline)) = heading(line) {
                sections.push((section, inline.into_iter().collect()));
            } else if let Some((_, lines)) = sections.last_mut() {
                if !line.trim().is_empty() {
                    lines.push(line.to_string());
                }
            }
        }
        let lines_of = |wanted: Section| -> Vec<&str> {
            sections
                .iter()
                .filter(|(s, _)| *s == wanted)
                .flat_map(|(_, l)| l.iter().map(String::as_str))
                .collect()
        };

        let complexity = {
            let section_text = lines_of(Section::Complexity).join("\n");
            extract_complexity(&section_text)
                .or_else(|| {
                    let cleaned = RANGE_1_5.replace_all(text, " ");
                    GLOBAL_COMPLEXITY
                        .captures(&cleaned)
                        .and_then(|c| c[1].parse::<u8>().ok())
                })
                .ok_or(ParseError::NoComplexity)?
        };

        let mut entities: Vec<Entity> = Vec::new();
        let mut seen = HashSet::new();
        for line in lines_of(Section::Entities) {
            if let Some(e) = parse_entity_line(line) {
                let key = normalize_entity_name(&e.name);
                if !self.aliases.contains(&key) && seen.insert(key) {
                    entities.push(e);
                }
            }
        }
        if entities.is_empty() {
            return Err(ParseError::NoEntities);
        }

        let resolve = |name: &str| -> Option<String> {
            let key = normalize_entity_name(name);
            if self.aliases.contains(&key) {
                return Some(self.item_id.clone());
            }
            entities
                .iter()
                .find(|e| normalize_entity_name(&e.name) == key)
                .map(|e| e.name.clone())
        };
        let mut relations = Vec::new();
        for line in lines_of(Section::Relations) {
            let Some((s, predicate, o, conf)) = split_relation(line) else {
                continue;
            };
            let (Some(subject), Some(object)) = (resolve(&s), resolve(&o)) else {
                continue;
            };
            if subject == object {
                continue;
            }
            let confidence = conf.unwrap_or(1.0);
            let confidence = if confidence > 1.0 && confidence <= 100.0 {
                confidence / 100.0
            } else {
                confidence
            }
            .clamp(0.0, 1.0);
            relations.push(Relation {
                subject,
                predicate,
                object,
                confidence,
            });
        }

        let list = |section: Section| -> Vec<String> {
            let mut out = Vec::new();
            for line in lines_of(section) {
                let body = strip_bullet(line);
                let items: Vec<&str> = if BULLET.is_match(line) {
                    vec![body]
                } else {
                    body.split([',', ';']).collect()
                };
                for item in items {
                    let item = item.trim().trim_end_matches('.').trim();
                    if !is_none_marker(item) && !out.iter().any(|o: &String| o == item) {
                        out.push(item.to_string());
                    }
                }
            }
            out
        };
        let prerequisites = list(Section::Prerequisites);
        let audience = list(Section::Audience);

        let vark_text = lines_of(Section::Vark).join("\n");
        let weights =
            extract_vark(&vark_text, &VARK_SECTION_WEIGHT).or_else(|| extract_vark(text, &VARK_GLOBAL_WEIGHT));
        let vark_alignment = weights
            .map(VarkVector::from_weights_or_uniform)
            .unwrap_or(VarkVector::UNIFORM);

        Ok(SemanticProfile {
            item_id: self.item_id.clone(),
            entities,
            relations,
            complexity,
            prerequisites,
            audience,
            vark_alignment,
        })
    }
}

/// Parses a provider response for `item_id` without title aliases.
pub fn parse_profile_response(item_id: &str, text: &str) -> Result<SemanticProfile, ParseError> {
    ProfileParser::new(item_id).parse(text)
}

/// Canonical response text for a profile. Entity embeddings are not rendered.
pub fn render_profile(profile: &SemanticProfile) -> String {
    let mut out = String::new();
    out.push_str("1. Key entities and concepts with descriptions\n");
    for e in &profile.entities {
        if e.description.is_empty() {
            let _ = writeln!(out, "- {} [{}]", e.name, e.kind);
        } else {
            let _ = writeln!(out, "- {} [{}]: {}", e.name, e.kind, e.description);
        }
    }
    out.push_str("2. Entity relationships\n");
    for r in &profile.relations {
        let _ = writeln!(
            out,
            "- {} | {} | {} | {}",
            r.subject, r.predicate, r.object, r.confidence
        );
    }
    out.push_str("3. Complexity level (1-5) with justification\n");
    let _ = writeln!(out, "Complexity: {}", profile.complexity);
    out.push_str("4. Required background knowledge\n");
    if profile.prerequisites.is_empty() {
        out.push_str("- none\n");
    }
    for p in &profile.prerequisites {
        let _ = writeln!(out, "- {p}");
    }
    out.push_str("5. Target audience characteristics\n");
    for a in &profile.audience {
        let _ = writeln!(out, "- {a}");
    }
    out.push_str("6. Learning style alignment (V/A/R/K)\n");
    let [v, a, r, k] = profile.vark_alignment.components();
    let _ = writeln!(out, "V: {v}\nA: {a}\nR: {r}\nK: {k}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
1. Key entities and concepts with descriptions
- **Woody** (character): a pull-string cowboy doll
- Buzz Lightyear (character): a space ranger action figure
- Friendship (theme) - loyalty between rival toys
- woody: duplicate mention that should be dropped
2. Entity relationships
- Woody | rivals with | Buzz Lightyear | 0.9
- Toy Story | features | Woody (0.8)
- Woody -> embodies -> Friendship
- Ghost | haunts | Woody | 0.5
3. Complexity level (1-5) with justification
3 - layered themes but accessible to children
4. Required background knowledge
None
5. Target audience characteristics
Families, children, animation fans
6. Learning style alignment (V/A/R/K)
V: 0.5
A: 0.1
R: 0.2
K: 0.2
";

    #[test]
    fn parses_well_formed_fixture() {
        let p = ProfileParser::new("1").with_alias("Toy Story").parse(FIXTURE).unwrap();
        let names: Vec<_> = p.entities.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["Woody", "Buzz Lightyear", "Friendship"]);
        assert_eq!(p.entities[0].kind, "character");
        assert_eq!(p.entities[2].description, "loyalty between rival toys");
        assert_eq!(p.complexity, 3);
        assert_eq!(p.vark_alignment.components(), [0.5, 0.1, 0.2, 0.2]);
        assert!(p.prerequisites.is_empty());
        assert_eq!(p.audience, ["Families", "children", "animation fans"]);

        assert_eq!(p.relations.len(), 3, "{:?}", p.relations);
        assert_eq!(p.relations[0].predicate, "RIVALS_WITH");
        assert_eq!(p.relations[0].confidence, 0.9);
        assert_eq!(p.relations[1].subject, "1");
        assert_eq!(p.relations[1].object, "Woody");
        assert_eq!(p.relations[1].confidence, 0.8);
        assert_eq!(p.relations[2].confidence, 1.0);
        p.validate().unwrap();
    }

    #[test]
    fn alignment_weights_are_normalized() {
        let text = "1. Entities\n- Drama\n3. Complexity: 2\n6. Learning style alignment\nV: 2\nA: 1\nR: 1\nK: 1\n";
        let p = parse_profile_response("x", text).unwrap();
        let c = p.vark_alignment.components();
        for (got, want) in c.iter().zip([0.4, 0.2, 0.2, 0.2]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn qualitative_and_percent_alignment() {
        let text = "1. Entities\n- Drama\n3. Complexity: 4\n6. Learning style alignment (V/A/R/K)\nVisual: high, Auditory: low, Reading: medium, Kinesthetic: none\n";
        let p = parse_profile_response("x", text).unwrap();
        assert_eq!(p.complexity, 4);
        let c = p.vark_alignment.components();
        assert!((c[0] - 0.5).abs() < 1e-12 && (c[3]).abs() < 1e-12);

        let pct = "## Entities\n- Drama\n## Complexity\nLevel 2 of 5\n## VARK alignment\nV 40%, A 10%, R 30%, K 20%\n";
        let p = parse_profile_response("x", pct).unwrap();
        assert_eq!(p.complexity, 2);
        assert!((p.vark_alignment.get(crate::vark::Channel::Reading) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn refusal_is_parse_error() {
        assert_eq!(
            parse_profile_response("x", "I cannot analyze this."),
            Err(ParseError::NoComplexity)
        );
        assert_eq!(parse_profile_response("x", "  \n"), Err(ParseError::Empty));
        assert_eq!(
            parse_profile_response("x", "3. Complexity level (1-5) with justification\n4\n"),
            Err(ParseError::NoEntities)
        );
    }

    #[test]
    fn range_in_heading_is_not_the_value() {
        let text = "1. Key entities\n- Drama\n3. Complexity level (1-5) with justification\nProbably a 4.\n";
        assert_eq!(parse_profile_response("x", text).unwrap().complexity, 4);
    }

    #[test]
    fn missing_alignment_defaults_uniform() {
        let text = "1. Entities\n- Drama\nComplexity: 5\n";
        let p = parse_profile_response("x", text).unwrap();
        assert_eq!(p.complexity, 5);
        assert_eq!(p.vark_alignment, VarkVector::UNIFORM);
    }

    #[test]
    fn inline_heading_content() {
        let text = "1. Key entities: Space, Robots\n3. Complexity level (1-5) with justification: 2 because simple\n";
        let p = parse_profile_response("x", text).unwrap();
        assert_eq!(p.complexity, 2);
        // Comma lists on the heading line are one entity per line, so this
        // reads as a single entity named "Space, Robots".
        assert_eq!(p.entities.len(), 1);
    }
}
