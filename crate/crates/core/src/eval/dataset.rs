//! MovieLens-1M style files: `users.dat`, `movies.dat`, `ratings.dat`,
//! latin-1 encoded, `::` delimited.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::enrichment::RawItem;
use crate::profiling::Gender;

pub const USERS_FILE: &str = "users.dat";
pub const MOVIES_FILE: &str = "movies.dat";
pub const RATINGS_FILE: &str = "ratings.dat";

/// Build fails above this malformed-line fraction.
pub const MAX_MALFORMED_FRACTION: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlUser {
    pub id: u32,
    pub gender: Gender,
    pub age: u8,
    pub occupation: u8,
    pub zip: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlMovie {
    pub id: u32,
    pub title: String,
    pub year: i32,
    pub genres: Vec<String>,
}

impl MlMovie {
    pub fn to_raw_item(&self) -> RawItem {
        RawItem {
            item_id: self.id.to_string(),
            title: self.title.clone(),
            genres: self.genres.clone(),
            year: self.year,
            description: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlRating {
    pub user: u32,
    pub movie: u32,
    pub rating: u8,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub lines: usize,
    pub malformed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Sorted by id.
    pub users: Vec<MlUser>,
    /// Sorted by id.
    pub movies: Vec<MlMovie>,
    pub ratings: Vec<MlRating>,
    pub stats: LoadStats,
}

impl Dataset {
    pub fn user(&self, id: u32) -> Option<&MlUser> {
        self.users
            .binary_search_by_key(&id, |u| u.id)
            .ok()
            .map(|i| &self.users[i])
    }

    pub fn movie(&self, id: u32) -> Option<&MlMovie> {
        self.movies
            .binary_search_by_key(&id, |m| m.id)
            .ok()
            .map(|i| &self.movies[i])
    }

    /// Checks that ratings reference known users and movies and lie in 1..=5.
    pub fn validate(&self) -> Result<(), String> {
        for r in &self.ratings {
            if !(1..=5).contains(&r.rating) {
                return Err(format!("rating {} out of range", r.rating));
            }
            if self.user(r.user).is_none() || self.movie(r.movie).is_none() {
                return Err(format!("rating {}→{} has a dangling endpoint", r.user, r.movie));
            }
        }
        Ok(())
    }
}

fn latin1(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| b as char).collect()
}

fn read_latin1(dir: &Path, name: &str) -> Result<String, EvalError> {
    let path = dir.join(name);
    match std::fs::read(&path) {
        Ok(b) => Ok(latin1(&b)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(EvalError::MissingFile(path)),
        Err(e) => Err(e.into()),
    }
}

static YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\((\d{4})\)\s*$").expect("valid regex"));

/// `1::Toy Story (1995)::Animation|Children's|Comedy`
pub fn parse_movie_line(line: &str) -> Option<MlMovie> {
    let mut parts = line.splitn(3, "::");
    let id = parts.next()?.trim().parse().ok()?;
    let title = parts.next()?.trim().to_string();
    let genres_raw = parts.next()?.trim();
    if title.is_empty() {
        return None;
    }
    let year = YEAR.captures(&title).and_then(|c| c[1].parse().ok()).unwrap_or(0);
    let genres = genres_raw
        .split('|')
        .map(str::trim)
        .filter(|g| !g.is_empty() && *g != "(no genres listed)")
        .map(String::from)
        .collect();
    Some(MlMovie {
        id,
        title,
        year,
        genres,
    })
}

/// `UserID::Gender::Age::Occupation::Zip`
pub fn parse_user_line(line: &str) -> Option<MlUser> {
    let p: Vec<&str> = line.split("::").collect();
    if p.len() != 5 {
        return None;
    }
    let gender = match p[1].trim() {
        "M" => Gender::Male,
        "F" => Gender::Female,
        _ => return None,
    };
    Some(MlUser {
        id: p[0].trim().parse().ok()?,
        gender,
        age: p[2].trim().parse().ok()?,
        occupation: p[3].trim().parse().ok()?,
        zip: p[4].trim().to_string(),
    })
}

/// `UserID::MovieID::Rating::Timestamp`; ratings outside 1..=5 are rejected.
pub fn parse_rating_line(line: &str) -> Option<MlRating> {
    let p: Vec<&str> = line.split("::").collect();
    if p.len() != 4 {
        return None;
    }
    let rating: u8 = p[2].trim().parse().ok()?;
    if !(1..=5).contains(&rating) {
        return None;
    }
    Some(MlRating {
        user: p[0].trim().parse().ok()?,
        movie: p[1].trim().parse().ok()?,
        rating,
        timestamp: p[3].trim().parse().ok()?,
    })
}

fn parse_lines<T>(text: &str, parse: impl Fn(&str) -> Option<T>, stats: &mut LoadStats) -> Vec<T> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        match parse(line) {
            Some(v) => out.push(v),
            None => stats.malformed += 1,
        }
    }
    out
}

/// Loads the three data files. Malformed lines (including ratings that
/// reference unknown users or movies, and duplicate ids) are skipped and
/// counted.
pub fn load_movielens(dir: &Path) -> Result<Dataset, EvalError> {
    let users_text = read_latin1(dir, USERS_FILE)?;
    let movies_text = read_latin1(dir, MOVIES_FILE)?;
    let ratings_text = read_latin1(dir, RATINGS_FILE)?;
    let mut stats = LoadStats::default();

    let mut users = parse_lines(&users_text, parse_user_line, &mut stats);
    let mut movies = parse_lines(&movies_text, parse_movie_line, &mut stats);
    users.sort_by_key(|u| u.id);
    movies.sort_by_key(|m| m.id);
    let before = users.len() + movies.len();
    users.dedup_by_key(|u| u.id);
    movies.dedup_by_key(|m| m.id);
    stats.malformed += before - users.len() - movies.len();

    let user_ids: BTreeSet<u32> = users.iter().map(|u| u.id).collect();
    let movie_ids: BTreeSet<u32> = movies.iter().map(|m| m.id).collect();
    let ratings = parse_lines(
        &ratings_text,
        |l| parse_rating_line(l).filter(|r| user_ids.contains(&r.user) && movie_ids.contains(&r.movie)),
        &mut stats,
    );

    if stats.lines > 0 && stats.malformed as f64 > MAX_MALFORMED_FRACTION * stats.lines as f64 {
        return Err(EvalError::TooManyMalformedLines {
            malformed: stats.malformed,
            total: stats.lines,
        });
    }
    if stats.malformed > 0 {
        tracing::warn!(
            malformed = stats.malformed,
            total = stats.lines,
            "skipped malformed lines"
        );
    }
    tracing::info!(
        users = users.len(),
        movies = movies.len(),
        ratings = ratings.len(),
        "loaded dataset"
    );
    Ok(Dataset {
        users,
        movies,
        ratings,
        stats,
    })
}

fn to_latin1(s: &str) -> Vec<u8> {
    s.chars()
        .map(|c| if (c as u32) < 256 { c as u8 } else { b'?' })
        .collect()
}

/// Writes the dataset in the same layout `load_movielens` reads.
pub fn write_movielens(ds: &Dataset, dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    let mut s = String::new();
    for u in &ds.users {
        let g = match u.gender {
            Gender::Female => "F",
            _ => "M",
        };
        let _ = writeln!(s, "{}::{}::{}::{}::{}", u.id, g, u.age, u.occupation, u.zip);
    }
    std::fs::write(dir.join(USERS_FILE), to_latin1(&s))?;
    s.clear();
    for m in &ds.movies {
        let _ = writeln!(s, "{}::{}::{}", m.id, m.title, m.genres.join("|"));
    }
    std::fs::write(dir.join(MOVIES_FILE), to_latin1(&s))?;
    s.clear();
    for r in &ds.ratings {
        let _ = writeln!(s, "{}::{}::{}::{}", r.user, r.movie, r.rating, r.timestamp);
    }
    std::fs::write(dir.join(RATINGS_FILE), to_latin1(&s))?;
    Ok(())
}

/// Label used in the demographic pseudo-profile text.
pub fn age_label(code: u8) -> &'static str {
    match code {
        1 => "under 18",
        18 => "18-24",
        25 => "25-34",
        35 => "35-44",
        45 => "45-49",
        50 => "50-55",
        56 => "56+",
        _ => "unknown age",
    }
}

pub fn occupation_label(code: u8) -> &'static str {
    const LABELS: [&str; 21] = [
        "other",
        "academic/educator",
        "artist",
        "clerical/admin",
        "college/grad student",
        "customer service",
        "doctor/health care",
        "executive/managerial",
        "farmer",
        "homemaker",
        "K-12 student",
        "lawyer",
        "programmer",
        "retired",
        "sales/marketing",
        "scientist",
        "self-employed",
        "technician/engineer",
        "tradesman/craftsman",
        "unemployed",
        "writer",
    ];
    LABELS.get(code as usize).copied().unwrap_or("other")
}

/// "age bracket + gender + occupation label".
pub fn demographic_text(u: &MlUser) -> String {
    let g = match u.gender {
        Gender::Male => "male",
        Gender::Female => "female",
        Gender::Unspecified => "person",
    };
    format!("{} {} {}", age_label(u.age), g, occupation_label(u.occupation))
}
