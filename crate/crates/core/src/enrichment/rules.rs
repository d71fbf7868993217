//! Rule-based enrichment from genres and release year.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use serde::Deserialize;

use super::{normalize_entity_name, Entity, RawItem, Relation, SemanticProfile};
use crate::vark::VarkVector;

const BUILTIN_RULES: &str = include_str!("../../data/genre_rules.toml");

#[derive(Debug, Clone, Deserialize)]
pub struct GenreRule {
    pub vark: [f64; 4],
    pub complexity: u8,
    #[serde(default)]
    pub audience: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct RulesFile {
    version: u32,
    default: GenreRule,
    genres: BTreeMap<String, GenreRule>,
}

/// Genre → (VARK weight row, complexity, audience) lookup table.
#[derive(Debug, Clone)]
pub struct GenreRules {
    pub version: u32,
    default: GenreRule,
    by_genre: BTreeMap<String, GenreRule>,
}

static BUILTIN: LazyLock<GenreRules> =
    LazyLock::new(|| GenreRules::from_toml(BUILTIN_RULES).expect("shipped genre rules parse"));

impl GenreRules {
    pub fn builtin() -> &'static GenreRules {
        &BUILTIN
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        let file: RulesFile = toml::from_str(text)?;
        Ok(Self {
            version: file.version,
            default: file.default,
            by_genre: file
                .genres
                .into_iter()
                .map(|(k, v)| (normalize_entity_name(&k), v))
                .collect(),
        })
    }

    /// Unknown genres use the default row.
    pub fn rule(&self, genre: &str) -> &GenreRule {
        self.by_genre
            .get(&normalize_entity_name(genre))
            .unwrap_or(&self.default)
    }

    pub fn known_genres(&self) -> impl Iterator<Item = &str> {
        self.by_genre.keys().map(String::as_str)
    }
}

pub const HAS_GENRE: &str = "HAS_GENRE";

/// Deterministic enrichment using the shipped rule table.
pub fn deterministic_enrich(item: &RawItem) -> SemanticProfile {
    deterministic_enrich_with(item, GenreRules::builtin())
}

pub fn deterministic_enrich_with(item: &RawItem, rules: &GenreRules) -> SemanticProfile {
    let mut entities: Vec<Entity> = Vec::new();
    let mut relations = Vec::new();
    let mut genre_rules = Vec::new();
    for genre in &item.genres {
        let name = genre.trim();
        if name.is_empty() || entities.iter().any(|e| e.name.eq_ignore_ascii_case(name)) {
            continue;
        }
        entities.push(Entity {
            name: name.to_string(),
            kind: "genre".to_string(),
            description: format!("Genre: {name}"),
            embedding: Vec::new(),
        });
        relations.push(Relation {
            subject: item.item_id.clone(),
            predicate: HAS_GENRE.to_string(),
            object: name.to_string(),
            confidence: 1.0,
        });
        genre_rules.push(rules.rule(name));
    }
    if item.year > 0 {
        let decade = item.year.div_euclid(10) * 10;
        entities.push(Entity {
            name: format!("{decade}s"),
            kind: "decade".to_string(),
            description: format!("Released in the {decade}s"),
            embedding: Vec::new(),
        });
    }

    let (complexity, vark_alignment) = if genre_rules.is_empty() {
        (rules.default.complexity, VarkVector::UNIFORM)
    } else {
        let mut sum = [0.0; 4];
        for r in &genre_rules {
            for (s, w) in sum.iter_mut().zip(r.vark) {
                *s += w;
            }
        }
        let mean = genre_rules.iter().map(|r| r.complexity as f64).sum::<f64>() / genre_rules.len() as f64;
        (
            (mean.round() as u8).clamp(1, 5),
            VarkVector::from_weights_or_uniform(sum),
        )
    };

    let mut audience: Vec<String> = Vec::new();
    for r in genre_rules
        .iter()
        .copied()
        .chain(std::iter::once(&rules.default).filter(|_| genre_rules.is_empty()))
    {
        for a in &r.audience {
            if !audience.contains(a) {
                audience.push(a.clone());
            }
        }
    }

    SemanticProfile {
        item_id: item.item_id.clone(),
        entities,
        relations,
        complexity,
        prerequisites: Vec::new(),
        audience,
        vark_alignment,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vark::Channel;

    fn item(genres: &[&str], year: i32) -> RawItem {
        RawItem {
            item_id: "1".into(),
            title: "Toy Story (1995)".into(),
            genres: genres.iter().map(|g| g.to_string()).collect(),
            year,
            description: None,
        }
    }

    #[test]
    fn toy_story_entities_and_relations() {
        let p = deterministic_enrich(&item(&["Animation", "Children's", "Comedy"], 1995));
        let names: Vec<_> = p.entities.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["Animation", "Children's", "Comedy", "1990s"]);
        assert_eq!(p.entities[0].kind, "genre");
        assert_eq!(p.relations.len(), 3);
        assert!(p
            .relations
            .iter()
            .all(|r| r.predicate == HAS_GENRE && r.confidence == 1.0 && r.subject == "1"));
        // Rows: Animation .55/.15/.05/.25, Children's .40/.20/.10/.30,
        // Comedy .25/.40/.15/.20 -> sums 1.20/.75/.30/.75 over 3.0.
        let c = p.vark_alignment.components();
        for (got, want) in c.iter().zip([0.4, 0.25, 0.1, 0.25]) {
            assert!((got - want).abs() < 1e-12, "{c:?}");
        }
        assert_eq!(p.vark_alignment.dominant(), Some(Channel::Visual));
        // Complexity rows 1, 1, 2 -> mean 1.33 -> 1.
        assert_eq!(p.complexity, 1);
        p.validate().unwrap();
    }

    #[test]
    fn no_genres_is_uniform_complexity_three() {
        let p = deterministic_enrich(&item(&[], 1995));
        assert_eq!(p.vark_alignment, VarkVector::UNIFORM);
        assert_eq!(p.complexity, 3);
        assert_eq!(p.entities.len(), 1);
        assert!(p.relations.is_empty());
    }

    #[test]
    fn documentary_row_read_from_table() {
        let p = deterministic_enrich(&item(&["Documentary"], 2000));
        let c = p.vark_alignment.components();
        for (got, want) in c.iter().zip([0.3, 0.2, 0.4, 0.1]) {
            assert!((got - want).abs() < 1e-12, "{c:?}");
        }
        assert_eq!(p.complexity, 4);
    }

    #[test]
    fn unknown_genre_uses_default_row() {
        let p = deterministic_enrich(&item(&["Telenovela"], 1990));
        assert_eq!(p.vark_alignment, VarkVector::UNIFORM);
        assert_eq!(p.complexity, 3);
    }

    #[test]
    fn builtin_table_is_well_formed() {
        let rules = GenreRules::builtin();
        assert_eq!(rules.known_genres().count(), 18);
        for g in rules.known_genres() {
            let r = rules.rule(g);
            assert!((1..=5).contains(&r.complexity));
            assert!(VarkVector::from_weights(r.vark).is_ok());
        }
    }

    #[test]
    fn pure_function_over_repeated_calls() {
        let it = item(&["Sci-Fi", "War"], 1979);
        let first = serde_json::to_vec(&deterministic_enrich(&it)).unwrap();
        for _ in 0..1000 {
            assert_eq!(serde_json::to_vec(&deterministic_enrich(&it)).unwrap(), first);
        }
    }
}
