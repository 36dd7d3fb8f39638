//! Whitespace tokenization shared by every module that counts or matches
//! words: length floors, keyword rules, template headers and the
//! faithfulness check.

use std::collections::{BTreeMap, BTreeSet};

/// Splits on Unicode whitespace, lowercases, and trims non-alphanumeric
/// characters from both ends of every token. Tokens that become empty are
/// dropped.
///
/// ```
/// use untangle::tokenize;
/// assert_eq!(tokenize("Outpatient copay rules."), ["outpatient", "copay", "rules"]);
/// assert!(tokenize("  ...  ").is_empty());
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_lowercase())
            }
        })
        .collect()
}

pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// Token multiset as a sorted count map.
pub fn token_bag(text: &str) -> BTreeMap<String, usize> {
    let mut bag = BTreeMap::new();
    for tok in tokenize(text) {
        *bag.entry(tok).or_insert(0) += 1;
    }
    bag
}

/// `true` when every token of `inner` occurs in `outer` at least as often.
pub fn bag_contains(outer: &BTreeMap<String, usize>, inner: &BTreeMap<String, usize>) -> bool {
    inner
        .iter()
        .all(|(tok, n)| outer.get(tok).copied().unwrap_or(0) >= *n)
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}
