//! The context-dependent loss scored alongside EI when choosing among
//! candidate restructurings.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::segment::Fragment;
use crate::text::{jaccard, token_set};

use super::ContextProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub dependency: f64,
    pub query_alignment: f64,
    pub signpost: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            dependency: 1.0,
            query_alignment: 1.0,
            signpost: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Share of dependency groups split across fragments.
    pub split_dependencies: f64,
    /// One minus the mean best header match of the example queries.
    pub query_misalignment: f64,
    /// Share of signposted regions not kept as a fragment of their own.
    pub broken_signposts: f64,
    pub total: f64,
}

/// Scores a candidate restructuring. Every component lies in `[0, 1]`;
/// empty inputs contribute 0.
pub fn context_loss(
    fragments: &[Fragment],
    headers: &[String],
    psi: &ContextProfile,
    weights: &LossWeights,
) -> LossBreakdown {
    let fragment_of = |seg: usize| {
        fragments
            .iter()
            .position(|f| f.segment_indices().contains(&seg))
    };
    let split = psi
        .dependency_groups
        .iter()
        .filter(|group| {
            let owners: BTreeSet<Option<usize>> = group.iter().map(|&s| fragment_of(s)).collect();
            owners.len() >= 2
        })
        .count();
    let a = ratio(split, psi.dependency_groups.len());

    let b = if psi.example_queries.is_empty() {
        0.0
    } else {
        let header_tokens: Vec<BTreeSet<String>> = headers.iter().map(|h| token_set(h)).collect();
        let total: f64 = psi
            .example_queries
            .iter()
            .map(|q| {
                let qt = token_set(&q.text);
                header_tokens
                    .iter()
                    .map(|h| jaccard(&qt, h))
                    .fold(0.0, f64::max)
            })
            .sum();
        1.0 - total / psi.example_queries.len() as f64
    };

    let broken = psi
        .signposted_regions
        .iter()
        .filter(|&&span| !fragments.iter().any(|f| f.span() == span))
        .count();
    let c = ratio(broken, psi.signposted_regions.len());

    LossBreakdown {
        split_dependencies: a,
        query_misalignment: b,
        broken_signposts: c,
        total: weights.dependency * a + weights.query_alignment * b + weights.signpost * c,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ExampleQuery;

    fn frag(start: usize, end: usize) -> Fragment {
        Fragment {
            doc_id: "d".into(),
            start,
            end,
            text: String::new(),
            token_count: 0,
            depth: 0,
            boundary_confidence: 1.0,
        }
    }

    #[test]
    fn empty_profile_is_zero() {
        let l = context_loss(&[frag(1, 3)], &["h".into()], &ContextProfile::default(), &LossWeights::default());
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn one_of_two_groups_split() {
        let psi = ContextProfile {
            dependency_groups: vec![vec![0, 1], vec![2, 3]],
            ..Default::default()
        };
        let frags = [frag(1, 2), frag(3, 3), frag(4, 4)];
        let l = context_loss(&frags, &[], &psi, &LossWeights::default());
        assert_eq!(l.split_dependencies, 0.5);
        assert_eq!(l.total, 0.5);
    }

    #[test]
    fn query_and_signpost_components() {
        let psi = ContextProfile {
            example_queries: vec![
                ExampleQuery {
                    text: "copay visit".into(),
                    tag: None,
                },
                ExampleQuery {
                    text: "zzz".into(),
                    tag: None,
                },
            ],
            signposted_regions: vec![(1, 2), (3, 4)],
            ..Default::default()
        };
        let frags = [frag(1, 2), frag(3, 3), frag(4, 4)];
        let headers = ["copay visit".to_string(), "other".to_string()];
        let l = context_loss(&frags, &headers, &psi, &LossWeights::default());
        assert_eq!(l.query_misalignment, 0.5);
        assert_eq!(l.broken_signposts, 0.5);
        assert_eq!(l.total, 1.0);
    }
}
