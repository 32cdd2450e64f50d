//! Vulnerability and detectability metrics.
//!
//! All values are fractions in `[0, 1]`; percentages exist only in rendered
//! reports. Similarity comparisons against a verification threshold `δ` are
//! strict (`score > δ` is a match, a tie is a non-match).
//!
//! Detector conventions: a higher detection score is more morph-like, and an
//! image is flagged as a morph when `score >= threshold`. Hence
//! BPCER(t) = share of bona fides with `score >= t` and
//! MACER(t) = share of morphs with `score < t`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassifierRecord, ImposterScoreSet, Label, MorphScoreSet};

/// BPCER operating points reported by default: 0.1%, 1% and 5%.
pub const DEFAULT_BPCER_TARGETS: [f64; 3] = [0.001, 0.01, 0.05];

/// FMR at which vulnerability is measured (0.1%).
pub const DEFAULT_TARGET_FMR: f64 = 0.001;

/// Verification threshold chosen for a target false match rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub delta: f64,
    pub target_fmr: f64,
    pub achieved_fmr: f64,
}

/// Share of impostor scores strictly above `delta`.
pub fn false_match_rate(impostors: &[f64], delta: f64) -> f64 {
    let above = impostors.iter().filter(|&&s| s > delta).count();
    above as f64 / impostors.len() as f64
}

/// Smallest observed impostor score `δ` whose FMR (share of impostor scores
/// strictly greater than `δ`) does not exceed `target_fmr`.
///
/// The maximum impostor score always qualifies (FMR 0), so the result is
/// always an observed score.
pub fn calibrate_threshold(impostors: &ImposterScoreSet, target_fmr: f64) -> Result<ThresholdCalibration> {
    if impostors.is_empty() {
        return Err(Error::InvalidInput("empty impostor set".into()));
    }
    if !(target_fmr > 0.0 && target_fmr < 1.0) {
        return Err(Error::InvalidInput(format!(
            "target FMR must lie in (0, 1), got {target_fmr}"
        )));
    }
    let mut sorted = impostors.scores().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut i = 0;
    while i < n {
        let candidate = sorted[i];
        // index one past the last occurrence of `candidate`
        let end = i + sorted[i..].partition_point(|&s| s <= candidate);
        let fmr = (n - end) as f64 / n as f64;
        if fmr <= target_fmr {
            return Ok(ThresholdCalibration {
                delta: candidate,
                target_fmr,
                achieved_fmr: fmr,
            });
        }
        i = end;
    }
    unreachable!("the largest impostor score has FMR 0")
}

/// Mated Morph Presentation Match Rate for single-sample subjects: the share
/// of morphs whose lowest subject similarity exceeds `delta`.
pub fn mmpmr(scores: &MorphScoreSet, delta: f64) -> Result<f64> {
    let mut matched = 0usize;
    for morph in scores.morphs() {
        let mut min = f64::INFINITY;
        for subject in &morph.subjects {
            if subject.scores.len() != 1 {
                return Err(Error::MultipleSamples {
                    morph_id: morph.morph_id.clone(),
                    subject_index: subject.subject_index,
                    samples: subject.scores.len(),
                });
            }
            min = min.min(subject.scores[0]);
        }
        if min > delta {
            matched += 1;
        }
    }
    Ok(matched as f64 / scores.morph_count() as f64)
}

/// ProdAvg-MMPMR: per morph, the product over subjects of the share of that
/// subject's samples matching above `delta`, averaged over morphs.
///
/// With one sample per subject every factor is 0 or 1 and the value equals
/// [`mmpmr`] exactly.
pub fn prodavg_mmpmr(scores: &MorphScoreSet, delta: f64) -> f64 {
    let total: f64 = scores
        .morphs()
        .iter()
        .map(|morph| {
            morph
                .subjects
                .iter()
                .map(|s| {
                    let hits = s.scores.iter().filter(|&&v| v > delta).count();
                    hits as f64 / s.scores.len() as f64
                })
                .product::<f64>()
        })
        .sum();
    total / scores.morph_count() as f64
}

/// One ROC operating point.
///
/// `false_accept_rate` is the share of bona fides flagged (`score >=
/// threshold`), i.e. BPCER; `false_reject_rate` is the share of morphs not
/// flagged, i.e. MACER.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub false_accept_rate: f64,
    pub false_reject_rate: f64,
}

/// Operating points at every distinct observed score plus `+∞`, in
/// ascending threshold order. The first point has rates `(1, 0)` and the
/// last `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<OperatingPoint>,
}

impl RocCurve {
    pub fn points(&self) -> &[OperatingPoint] {
        &self.points
    }
}

struct SplitScores {
    bona_fide: Vec<f64>,
    morph: Vec<f64>,
}

fn split_sorted(records: &[ClassifierRecord]) -> Result<SplitScores> {
    let mut bona_fide = Vec::new();
    let mut morph = Vec::new();
    for r in records {
        if !r.detection_score.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite detection score for {:?}",
                r.image_id
            )));
        }
        match r.label {
            Label::BonaFide => bona_fide.push(r.detection_score),
            Label::Morph => morph.push(r.detection_score),
        }
    }
    match (bona_fide.is_empty(), morph.is_empty()) {
        (true, true) => return Err(Error::SingleClass("no records")),
        (true, false) => return Err(Error::SingleClass("morph records")),
        (false, true) => return Err(Error::SingleClass("bona fide records")),
        _ => {}
    }
    bona_fide.sort_by(f64::total_cmp);
    morph.sort_by(f64::total_cmp);
    Ok(SplitScores { bona_fide, morph })
}

pub fn compute_roc(records: &[ClassifierRecord]) -> Result<RocCurve> {
    let SplitScores { bona_fide, morph } = split_sorted(records)?;
    let mut thresholds: Vec<f64> = bona_fide.iter().chain(&morph).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let n_bf = bona_fide.len() as f64;
    let n_m = morph.len() as f64;
    let points = thresholds
        .into_iter()
        .map(|t| {
            let bf_flagged = bona_fide.len() - bona_fide.partition_point(|&s| s < t);
            let morph_missed = morph.partition_point(|&s| s < t);
            OperatingPoint {
                threshold: t,
                false_accept_rate: bf_flagged as f64 / n_bf,
                false_reject_rate: morph_missed as f64 / n_m,
            }
        })
        .collect();
    Ok(RocCurve { points })
}

/// Equal error rate: where the two ROC rates cross, linearly interpolated
/// between the adjacent operating points that bracket the crossing.
pub fn equal_error_rate(records: &[ClassifierRecord]) -> Result<f64> {
    Ok(eer_from_roc(&compute_roc(records)?))
}

fn eer_from_roc(roc: &RocCurve) -> f64 {
    let pts = roc.points();
    let gap = |p: &OperatingPoint| p.false_accept_rate - p.false_reject_rate;
    // gap goes from +1 at the first point to -1 at the last
    let k = pts
        .iter()
        .position(|p| gap(p) <= 0.0)
        .expect("last ROC point has gap -1");
    let cur = &pts[k];
    if gap(cur) == 0.0 || k == 0 {
        return cur.false_accept_rate;
    }
    let prev = &pts[k - 1];
    let (g0, g1) = (gap(prev), gap(cur));
    let lambda = g0 / (g0 - g1);
    prev.false_accept_rate + lambda * (cur.false_accept_rate - prev.false_accept_rate)
}

/// How a BPCER target selects a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BpcerRule {
    /// Largest achievable BPCER not exceeding the target.
    #[default]
    AtMost,
    /// Smallest achievable BPCER at or above the target (sensitivity runs).
    AtLeast,
}

/// MACER at one BPCER target, with the threshold that realises it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpcerOperatingPoint {
    pub target: f64,
    pub threshold: f64,
    pub bpcer: f64,
    pub macer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorOperatingReport {
    pub eer: f64,
    /// Sorted by ascending target.
    pub macer_at_bpcer: Vec<BpcerOperatingPoint>,
}

impl DetectorOperatingReport {
    pub fn macer(&self, target: f64) -> Option<f64> {
        self.macer_at_bpcer
            .iter()
            .find(|p| p.target == target)
            .map(|p| p.macer)
    }

    pub fn macer_map(&self) -> BTreeMap<String, f64> {
        self.macer_at_bpcer
            .iter()
            .map(|p| (p.target.to_string(), p.macer))
            .collect()
    }
}

fn select_point(roc: &RocCurve, target: f64, rule: BpcerRule) -> OperatingPoint {
    let pts = roc.points();
    let idx = match rule {
        // BPCER is non-increasing along the curve: the first point under the
        // target has the largest qualifying BPCER and the smallest MACER.
        BpcerRule::AtMost => pts.iter().position(|p| p.false_accept_rate <= target),
        BpcerRule::AtLeast => {
            let best = pts
                .iter()
                .map(|p| p.false_accept_rate)
                .filter(|&b| b >= target)
                .fold(f64::INFINITY, f64::min);
            pts.iter().position(|p| p.false_accept_rate == best)
        }
    };
    pts[idx.expect("the ROC endpoints cover BPCER 0 and 1")]
}

/// EER plus MACER at each BPCER target in `(0, 1)`.
pub fn macer_at_bpcer(
    records: &[ClassifierRecord],
    bpcer_targets: &[f64],
    rule: BpcerRule,
) -> Result<DetectorOperatingReport> {
    if let Some(bad) = bpcer_targets.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::InvalidInput(format!(
            "BPCER target must lie in (0, 1), got {bad}"
        )));
    }
    let roc = compute_roc(records)?;
    let mut targets = bpcer_targets.to_vec();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    let macer_at_bpcer = targets
        .into_iter()
        .map(|target| {
            let p = select_point(&roc, target, rule);
            BpcerOperatingPoint {
                target,
                threshold: p.threshold,
                bpcer: p.false_accept_rate,
                macer: p.false_reject_rate,
            }
        })
        .collect();
    Ok(DetectorOperatingReport {
        eer: eer_from_roc(&roc),
        macer_at_bpcer,
    })
}

/// EMA decay scaled with batch size: `0.5^(batch_size / 1000)`.
pub fn ema_decay(batch_size: i64) -> Result<f64> {
    if batch_size < 1 {
        return Err(Error::InvalidInput(format!(
            "batch size must be positive, got {batch_size}"
        )));
    }
    Ok(0.5f64.powf(batch_size as f64 / 1000.0))
}
