//! Group-key similarity used to pick merge targets for small groups.

use crate::groups::{Group, GroupKey};

pub const DEFAULT_MIN_SIMILARITY: f64 = 0.6;

/// A similarity backend. Must be symmetric and return values in `[0, 1]`.
pub trait Similarity: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Initialism rule, then normalized Levenshtein over folded keys.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultSimilarity;

impl Similarity for DefaultSimilarity {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        key_similarity(a, b)
    }
}

pub fn key_similarity(a: &str, b: &str) -> f64 {
    if a == b || is_initialism(a, b) || is_initialism(b, a) {
        return 1.0;
    }
    let fa = fold(a);
    let fb = fold(b);
    let longest = fa.chars().count().max(fb.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(&fa, &fb) as f64 / longest as f64
}

fn fold(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

/// `short` is an all-caps abbreviation whose letters spell the initials of
/// `long`'s words, either all of them or only the capitalized ones (so
/// "USA" matches "United States of America").
fn is_initialism(short: &str, long: &str) -> bool {
    let letters: Vec<char> = short.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() < 2 || letters.iter().any(|c| !c.is_uppercase()) {
        return false;
    }
    if short.chars().count() >= long.chars().count() {
        return false;
    }
    let words: Vec<&str> = long.split_whitespace().collect();
    if words.len() < 2 {
        return false;
    }
    let initials = |capitalized_only: bool| -> String {
        words
            .iter()
            .filter_map(|w| w.chars().find(|c| c.is_alphabetic()))
            .filter(|c| !capitalized_only || c.is_uppercase())
            .flat_map(char::to_lowercase)
            .collect()
    };
    let abbrev: String = letters.iter().flat_map(|c| c.to_lowercase()).collect();
    abbrev == initials(false) || abbrev == initials(true)
}

/// Best merge destination for a small group: highest similarity at or
/// above `min_similarity`, ties broken by larger group then smaller key.
pub fn suggest_merge_target<'a>(
    small: &Group,
    candidates: &'a [Group],
    min_similarity: f64,
    similarity: &dyn Similarity,
) -> Option<&'a Group> {
    let GroupKey::Value(small_key) = &small.key else {
        return None;
    };
    candidates
        .iter()
        .filter_map(|c| match &c.key {
            GroupKey::Value(k) if k != small_key => Some((similarity.similarity(small_key, k), c, k)),
            _ => None,
        })
        .filter(|(s, _, _)| *s >= min_similarity)
        .max_by(|(sa, ga, ka), (sb, gb, kb)| {
            sa.total_cmp(sb)
                .then(ga.rows.len().cmp(&gb.rows.len()))
                .then(kb.cmp(ka))
        })
        .map(|(_, g, _)| g)
}
