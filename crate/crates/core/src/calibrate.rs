//! Threshold calibration against human boundary annotations.
//!
//! The protocol: gate the annotations on inter-annotator agreement
//! (kappa > 0.80), sweep `theta` over a fixed grid scoring micro-averaged
//! boundary F1 against the consensus, pick `theta*` from the best plateau,
//! confirm it on a disjoint holdout, and set `alpha` to the nearest-rank
//! 90th percentile of cross-topic segment similarities.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::metrics::{check_gaps, cohen_kappa, nearest_rank_percentile, norms, SegmentationScore};
use crate::model::Document;
use crate::segment::{detect_boundaries, similarity_profile, BoundarySet, SimilarityProfile};

/// Minimum agreement for an annotation set to be trusted.
pub const KAPPA_GATE: f64 = 0.80;

/// Calibration corpora smaller than this trigger a warning.
pub const RECOMMENDED_MIN_DOCS: usize = 20;

/// Boundary annotations for one document, one gap list per annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocAnnotation {
    pub doc_id: String,
    pub annotators: Vec<Vec<usize>>,
}

impl DocAnnotation {
    /// Gaps marked by a strict majority of annotators.
    pub fn consensus(&self) -> BoundarySet {
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for ann in &self.annotators {
            for g in ann.iter().copied().collect::<BTreeSet<_>>() {
                *votes.entry(g).or_insert(0) += 1;
            }
        }
        let need = self.annotators.len() / 2 + 1;
        BoundarySet::new(
            votes
                .into_iter()
                .filter(|(_, v)| *v >= need)
                .map(|(g, _)| g)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationGate {
    pub kappa: f64,
    pub kappa_pass: bool,
    pub consensus: BTreeMap<String, BoundarySet>,
}

fn find_doc<'a>(docs: &'a [Document], id: &str) -> Result<&'a Document> {
    docs.iter()
        .find(|d| d.id == id)
        .ok_or_else(|| Error::InvalidConfig(format!("annotations refer to unknown document {id:?}")))
}

/// Agreement over all gaps of all annotated documents, concatenated.
///
/// With two annotators kappa is computed directly; with more it is the mean
/// over annotator pairs (up to the smallest annotator count of any
/// document).
pub fn gate_annotations(annotations: &[DocAnnotation], docs: &[Document]) -> Result<AnnotationGate> {
    if annotations.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    let mut raters = usize::MAX;
    for ann in annotations {
        if ann.annotators.len() < 2 {
            return Err(Error::TooFewAnnotators(ann.doc_id.clone()));
        }
        raters = raters.min(ann.annotators.len());
    }
    let mut marks: Vec<Vec<bool>> = vec![Vec::new(); raters];
    let mut consensus = BTreeMap::new();
    for ann in annotations {
        let doc = find_doc(docs, &ann.doc_id)?;
        let gaps = doc.len().saturating_sub(1);
        for (r, gap_list) in ann.annotators.iter().enumerate() {
            let set = check_gaps(gap_list, doc.len())?;
            if r < raters {
                marks[r].extend((1..=gaps).map(|g| set.contains(&g)));
            }
        }
        consensus.insert(ann.doc_id.clone(), ann.consensus());
    }
    let mut total = 0.0;
    let mut pairs = 0;
    for a in 0..raters {
        for b in a + 1..raters {
            total += cohen_kappa(&marks[a], &marks[b])?;
            pairs += 1;
        }
    }
    let kappa = total / pairs as f64;
    Ok(AnnotationGate {
        kappa,
        kappa_pass: kappa > KAPPA_GATE,
        consensus,
    })
}

/// Inclusive `theta` grid. The default is 0.50 to 0.90 in steps of 0.02.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for ThetaGrid {
    fn default() -> Self {
        ThetaGrid {
            min: 0.50,
            max: 0.90,
            step: 0.02,
        }
    }
}

impl ThetaGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.min > 0.0 && self.max < 1.0 && self.min <= self.max) {
            return Err(Error::InvalidConfig(format!(
                "theta grid [{}, {}] step {} must lie in (0, 1) with a positive step",
                self.min, self.max, self.step
            )));
        }
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|i| ((self.min + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSweep {
    pub theta_star: f64,
    pub f1_at_theta_star: f64,
    /// Inclusive grid bounds of the plateau `theta_star` was taken from.
    pub plateau: (f64, f64),
    pub rows: Vec<SweepRow>,
}

/// One annotated document ready for scoring.
#[derive(Debug, Clone, Copy)]
pub struct LabeledDoc<'a> {
    pub doc: &'a Document,
    pub vectors: &'a [Embedding],
    pub truth: &'a BoundarySet,
}

struct Prepared<'a> {
    profile: SimilarityProfile,
    truth: &'a BoundarySet,
}

fn prepare<'a>(samples: &[LabeledDoc<'a>]) -> Result<Vec<Prepared<'a>>> {
    samples
        .iter()
        .map(|s| {
            if s.vectors.len() != s.doc.len() {
                return Err(Error::LengthMismatch {
                    left: s.doc.len(),
                    right: s.vectors.len(),
                });
            }
            check_gaps(s.truth.gaps(), s.doc.len())?;
            Ok(Prepared {
                profile: similarity_profile(s.vectors)?,
                truth: s.truth,
            })
        })
        .collect()
}

/// Micro-averaged boundary score: matches, detections and truths are pooled
/// over documents before computing precision and recall.
fn pooled_score(prepared: &[Prepared<'_>], theta: f64) -> Result<SegmentationScore> {
    let (mut matched, mut detected, mut truth) = (0, 0, 0);
    for p in prepared {
        let found = detect_boundaries(&p.profile, theta)?;
        matched += found.gaps().iter().filter(|g| p.truth.contains(**g)).count();
        detected += found.gaps().len();
        truth += p.truth.gaps().len();
    }
    Ok(SegmentationScore::from_counts(matched, detected, truth))
}

/// Index of the centre of the longest run of maximal F1 (earliest run on
/// ties, lower centre on even-length runs), plus the run bounds.
fn plateau_center(rows: &[SweepRow]) -> (usize, usize, usize) {
    let best = rows.iter().map(|r| r.f1).fold(f64::NEG_INFINITY, f64::max);
    let on_top = |r: &SweepRow| (r.f1 - best).abs() <= 1e-12;
    let mut best_run = (0, 0);
    let mut best_len = 0;
    let mut i = 0;
    while i < rows.len() {
        if on_top(&rows[i]) {
            let start = i;
            while i + 1 < rows.len() && on_top(&rows[i + 1]) {
                i += 1;
            }
            if i - start + 1 > best_len {
                best_len = i - start + 1;
                best_run = (start, i);
            }
        }
        i += 1;
    }
    let (lo, hi) = best_run;
    (lo + (hi - lo) / 2, lo, hi)
}

/// Scores every grid point and picks `theta*`. Refuses to run when the
/// annotation gate failed, unless `force` is set.
pub fn sweep_theta(
    samples: &[LabeledDoc<'_>],
    grid: &ThetaGrid,
    gate: &AnnotationGate,
    force: bool,
) -> Result<ThetaSweep> {
    if !gate.kappa_pass && !force {
        return Err(Error::CalibrationGateFailed { kappa: gate.kappa });
    }
    if samples.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    if samples.len() < RECOMMENDED_MIN_DOCS {
        warn!(
            "calibration set has {} documents; at least {RECOMMENDED_MIN_DOCS} are recommended",
            samples.len()
        );
    }
    let prepared = prepare(samples)?;
    let rows = grid
        .points()?
        .into_iter()
        .map(|theta| {
            let s = pooled_score(&prepared, theta)?;
            Ok(SweepRow {
                theta,
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (center, lo, hi) = plateau_center(&rows);
    Ok(ThetaSweep {
        theta_star: rows[center].theta,
        f1_at_theta_star: rows[center].f1,
        plateau: (rows[lo].theta, rows[hi].theta),
        rows,
    })
}

/// Micro-averaged F1 of `theta_star` on documents disjoint from the
/// calibration set.
pub fn validate_holdout(
    theta_star: f64,
    holdout: &[LabeledDoc<'_>],
    calibration_ids: &BTreeSet<String>,
) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    let overlap: Vec<String> = holdout
        .iter()
        .filter(|s| calibration_ids.contains(&s.doc.id))
        .map(|s| s.doc.id.clone())
        .collect();
    if !overlap.is_empty() {
        return Err(Error::OverlappingSets(overlap));
    }
    let prepared = prepare(holdout)?;
    Ok(pooled_score(&prepared, theta_star)?.f1)
}

/// Cosine similarities of every cross-topic segment pair in the corpus,
/// within and across documents. Unlabeled documents are skipped.
pub fn cross_topic_similarities(docs: &[(&Document, &[Embedding])]) -> Result<Vec<f64>> {
    let mut labels = Vec::new();
    let mut pooled: Vec<Embedding> = Vec::new();
    for (doc, vectors) in docs {
        let Some(topics) = doc.topics() else { continue };
        if topics.len() != vectors.len() {
            return Err(Error::LengthMismatch {
                left: topics.len(),
                right: vectors.len(),
            });
        }
        labels.extend(topics);
        pooled.extend(vectors.iter().cloned());
    }
    if let Some(first) = pooled.first() {
        if let Some(bad) = pooled.iter().find(|v| v.dim() != first.dim()) {
            return Err(Error::DimMismatch {
                expected: first.dim(),
                found: bad.dim(),
            });
        }
    }
    let ns = norms(&pooled)?;
    let mut sims = Vec::new();
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            if labels[i] != labels[j] {
                let d: f64 = pooled[i].0.iter().zip(&pooled[j].0).map(|(a, b)| a * b).sum();
                sims.push((d / (ns[i] * ns[j])).clamp(-1.0, 1.0));
            }
        }
    }
    Ok(sims)
}

/// `alpha` = nearest-rank 90th percentile of cross-topic similarities.
pub fn calibrate_alpha(docs: &[(&Document, &[Embedding])]) -> Result<f64> {
    let sims = cross_topic_similarities(docs)?;
    if sims.is_empty() {
        return Err(Error::NoCrossTopicPairs);
    }
    let alpha = nearest_rank_percentile(&sims, 90.0)?;
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(Error::AlphaDegenerate(alpha))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub theta_star: f64,
    pub f1_at_theta_star: f64,
    pub plateau: (f64, f64),
    pub sweep: Vec<SweepRow>,
    pub kappa: f64,
    pub kappa_pass: bool,
    /// `None` when the calibration corpus carries no topic labels.
    pub alpha: Option<f64>,
    pub holdout_f1: Option<f64>,
}

/// An annotated corpus with its segment vectors, aligned by position.
pub struct AnnotatedCorpus<'a> {
    pub docs: &'a [Document],
    pub vectors: &'a [Vec<Embedding>],
    pub annotations: &'a [DocAnnotation],
}

impl AnnotatedCorpus<'_> {
    fn labeled<'b>(&'b self, consensus: &'b BTreeMap<String, BoundarySet>) -> Result<Vec<LabeledDoc<'b>>> {
        if self.docs.len() != self.vectors.len() {
            return Err(Error::LengthMismatch {
                left: self.docs.len(),
                right: self.vectors.len(),
            });
        }
        self.docs
            .iter()
            .zip(self.vectors)
            .filter_map(|(doc, vectors)| {
                consensus.get(&doc.id).map(|truth| {
                    Ok(LabeledDoc {
                        doc,
                        vectors,
                        truth,
                    })
                })
            })
            .collect()
    }
}

/// Runs the whole protocol. The holdout's own agreement is reported in logs
/// but does not gate the run.
pub fn calibrate(
    calibration: &AnnotatedCorpus<'_>,
    holdout: Option<&AnnotatedCorpus<'_>>,
    grid: &ThetaGrid,
    force: bool,
) -> Result<CalibrationResult> {
    let gate = gate_annotations(calibration.annotations, calibration.docs)?;
    if !gate.kappa_pass {
        warn!("annotation agreement kappa = {:.4} is at or below {KAPPA_GATE}", gate.kappa);
    }
    let samples = calibration.labeled(&gate.consensus)?;
    let sweep = sweep_theta(&samples, grid, &gate, force)?;

    let holdout_f1 = match holdout {
        Some(h) => {
            let hgate = gate_annotations(h.annotations, h.docs)?;
            if !hgate.kappa_pass {
                warn!("holdout annotation agreement kappa = {:.4}", hgate.kappa);
            }
            let ids: BTreeSet<String> = samples.iter().map(|s| s.doc.id.clone()).collect();
            Some(validate_holdout(sweep.theta_star, &h.labeled(&hgate.consensus)?, &ids)?)
        }
        None => None,
    };

    let pairs: Vec<(&Document, &[Embedding])> = calibration
        .docs
        .iter()
        .zip(calibration.vectors)
        .map(|(d, v)| (d, v.as_slice()))
        .collect();
    let alpha = match calibrate_alpha(&pairs) {
        Ok(a) => Some(a),
        Err(Error::NoCrossTopicPairs) if calibration.docs.iter().all(|d| d.topics().is_none()) => {
            warn!("calibration corpus has no topic labels; alpha not calibrated");
            None
        }
        Err(e) => return Err(e),
    };

    Ok(CalibrationResult {
        theta_star: sweep.theta_star,
        f1_at_theta_star: sweep.f1_at_theta_star,
        plateau: sweep.plateau,
        sweep: sweep.rows,
        kappa: gate.kappa,
        kappa_pass: gate.kappa_pass,
        alpha,
        holdout_f1,
    })
}
