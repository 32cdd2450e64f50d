//! Domain types shared across the toolkit.
//!
//! Everything here is immutable once constructed. Constructors validate the
//! invariants the metric and image code relies on, so downstream functions
//! only re-check what is specific to them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of points in a landmark set (68-point face annotation).
pub const LANDMARK_COUNT: usize = 68;

/// Whether an image is the digital original or was printed and re-scanned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MediaProvenance {
    #[serde(rename = "digital")]
    Digital,
    #[serde(rename = "print-scanned")]
    PrintScanned,
}

impl MediaProvenance {
    pub const ALL: [MediaProvenance; 2] = [MediaProvenance::Digital, MediaProvenance::PrintScanned];

    pub fn as_str(self) -> &'static str {
        match self {
            MediaProvenance::Digital => "digital",
            MediaProvenance::PrintScanned => "print-scanned",
        }
    }

    fn short(self) -> &'static str {
        match self {
            MediaProvenance::Digital => "D",
            MediaProvenance::PrintScanned => "PS",
        }
    }
}

impl fmt::Display for MediaProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MediaProvenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "digital" => Ok(MediaProvenance::Digital),
            "print-scanned" => Ok(MediaProvenance::PrintScanned),
            other => Err(Error::InvalidInput(format!(
                "unknown provenance {other:?} (expected \"digital\" or \"print-scanned\")"
            ))),
        }
    }
}

/// Provenance pairing of an attack: the morph's medium and the bona fide
/// reference's medium. Labelled `D-D`, `D-PS`, `PS-D`, `PS-PS` (morph first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScenarioConfig {
    pub morph_source: MediaProvenance,
    pub bona_fide_source: MediaProvenance,
}

impl ScenarioConfig {
    pub const DD: ScenarioConfig = ScenarioConfig::new(MediaProvenance::Digital, MediaProvenance::Digital);
    pub const DPS: ScenarioConfig =
        ScenarioConfig::new(MediaProvenance::Digital, MediaProvenance::PrintScanned);
    pub const PSD: ScenarioConfig =
        ScenarioConfig::new(MediaProvenance::PrintScanned, MediaProvenance::Digital);
    pub const PSPS: ScenarioConfig =
        ScenarioConfig::new(MediaProvenance::PrintScanned, MediaProvenance::PrintScanned);

    /// Row order of the vulnerability table.
    pub const VULNERABILITY_ORDER: [ScenarioConfig; 4] = [Self::DD, Self::DPS, Self::PSD, Self::PSPS];
    /// Row order of the detectability tables, which list PS-D before D-PS.
    pub const DETECTABILITY_ORDER: [ScenarioConfig; 4] = [Self::DD, Self::PSD, Self::DPS, Self::PSPS];

    pub const fn new(morph_source: MediaProvenance, bona_fide_source: MediaProvenance) -> Self {
        ScenarioConfig {
            morph_source,
            bona_fide_source,
        }
    }

    /// Every representable scenario, in vulnerability-table order.
    pub fn all() -> [ScenarioConfig; 4] {
        Self::VULNERABILITY_ORDER
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.morph_source.short(), self.bona_fide_source.short())
    }
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ScenarioConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::all()
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown scenario {s:?} (expected one of D-D, D-PS, PS-D, PS-PS)"
                ))
            })
    }
}

impl Serialize for ScenarioConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for ScenarioConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One FR similarity score between a morph and one probe sample of one of
/// its contributing subjects. Indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub morph_id: String,
    pub subject_index: u32,
    pub sample_index: u32,
    pub score: f64,
}

/// Scores of one contributing subject against one morph.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSamples {
    pub subject_index: u32,
    pub scores: Vec<f64>,
}

/// All subjects of one morph.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphEntry {
    pub morph_id: String,
    pub subjects: Vec<SubjectSamples>,
}

/// Validated collection of mated-morph similarity scores.
///
/// Records keep their input order; the grouped view (`morphs`) lists morphs
/// and subjects in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphScoreSet {
    records: Vec<SimilarityRecord>,
    morphs: Vec<MorphEntry>,
}

impl MorphScoreSet {
    pub fn new(records: Vec<SimilarityRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("morph score set: no records".into()));
        }
        let mut seen = HashSet::with_capacity(records.len());
        let mut morph_pos: HashMap<&str, usize> = HashMap::new();
        let mut subject_pos: Vec<HashMap<u32, usize>> = Vec::new();
        let mut morphs: Vec<MorphEntry> = Vec::new();

        for r in &records {
            if !r.score.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite score for ({}, {}, {})",
                    r.morph_id, r.subject_index, r.sample_index
                )));
            }
            if r.subject_index == 0 || r.sample_index == 0 {
                return Err(Error::InvalidInput(format!(
                    "subject and sample indices are 1-based, got ({}, {}, {})",
                    r.morph_id, r.subject_index, r.sample_index
                )));
            }
            if !seen.insert((r.morph_id.as_str(), r.subject_index, r.sample_index)) {
                return Err(Error::Duplicate(format!(
                    "(morph_id, subject_index, sample_index) = ({}, {}, {})",
                    r.morph_id, r.subject_index, r.sample_index
                )));
            }
            let m = *morph_pos.entry(r.morph_id.as_str()).or_insert_with(|| {
                morphs.push(MorphEntry {
                    morph_id: r.morph_id.clone(),
                    subjects: Vec::new(),
                });
                subject_pos.push(HashMap::new());
                morphs.len() - 1
            });
            let entry = &mut morphs[m];
            let n = *subject_pos[m].entry(r.subject_index).or_insert_with(|| {
                entry.subjects.push(SubjectSamples {
                    subject_index: r.subject_index,
                    scores: Vec::new(),
                });
                entry.subjects.len() - 1
            });
            entry.subjects[n].scores.push(r.score);
        }

        Ok(MorphScoreSet { records, morphs })
    }

    pub fn records(&self) -> &[SimilarityRecord] {
        &self.records
    }

    pub fn morphs(&self) -> &[MorphEntry] {
        &self.morphs
    }

    /// `M`: number of distinct morphs.
    pub fn morph_count(&self) -> usize {
        self.morphs.len()
    }

    fn morph(&self, morph_id: &str) -> Option<&MorphEntry> {
        self.morphs.iter().find(|m| m.morph_id == morph_id)
    }

    /// `N_m`: number of distinct subjects contributing to `morph_id`.
    pub fn subject_count(&self, morph_id: &str) -> Option<usize> {
        self.morph(morph_id).map(|m| m.subjects.len())
    }

    /// `I_m^n`: number of probe samples of subject `subject_index` for `morph_id`.
    pub fn sample_count(&self, morph_id: &str, subject_index: u32) -> Option<usize> {
        self.morph(morph_id)?
            .subjects
            .iter()
            .find(|s| s.subject_index == subject_index)
            .map(|s| s.scores.len())
    }

    /// `(morph_id, subject_index) -> I_m^n` for every pair, sorted by key.
    pub fn sample_counts(&self) -> BTreeMap<(String, u32), usize> {
        self.morphs
            .iter()
            .flat_map(|m| {
                m.subjects
                    .iter()
                    .map(move |s| ((m.morph_id.clone(), s.subject_index), s.scores.len()))
            })
            .collect()
    }
}

/// Similarity scores of non-mated (impostor) comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct ImposterScoreSet {
    scores: Vec<f64>,
}

impl ImposterScoreSet {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite impostor score {bad}")));
        }
        Ok(ImposterScoreSet { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Ground truth of a detector input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "bonafide")]
    BonaFide,
    #[serde(rename = "morph")]
    Morph,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::BonaFide => "bonafide",
            Label::Morph => "morph",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One S-MAD output: detection score (higher = more morph-like) and label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRecord {
    pub image_id: String,
    pub label: Label,
    pub detection_score: f64,
    pub morph_algorithm: Option<String>,
    pub provenance: MediaProvenance,
}

/// A 2D point in pixel coordinates; integer values are pixel centres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// 68 facial landmarks on a `width × height` canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point>,
    width: u32,
    height: u32,
}

impl LandmarkSet {
    /// Every point must lie in the half-open box `[0, width) × [0, height)`.
    pub fn new(points: Vec<Point>, width: u32, height: u32) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::Landmarks(format!(
                "expected {LANDMARK_COUNT} points, got {}",
                points.len()
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::Landmarks(format!("empty canvas {width}x{height}")));
        }
        for (k, p) in points.iter().enumerate() {
            let inside = p.x >= 0.0 && p.x < width as f64 && p.y >= 0.0 && p.y < height as f64;
            if !inside {
                return Err(Error::Landmarks(format!(
                    "point {k} at ({}, {}) out of bounds for {width}x{height}",
                    p.x, p.y
                )));
            }
        }
        Ok(LandmarkSet { points, width, height })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }
}

/// 8-bit interleaved RGB raster with optional pixels-per-inch metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
    ppi: Option<u32>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::Image(format!(
                "{width}x{height} RGB needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            data,
            ppi: None,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        ImageBuffer {
            width,
            height,
            data,
            ppi: None,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        ImageBuffer {
            width,
            height,
            data,
            ppi: None,
        }
    }

    pub fn with_ppi(mut self, ppi: Option<u32>) -> Result<Self> {
        if ppi == Some(0) {
            return Err(Error::Image("ppi must be positive".into()));
        }
        self.ppi = ppi;
        Ok(self)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn ppi(&self) -> Option<u32> {
        self.ppi
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn same_dimensions(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(m: &str, n: u32, i: u32, s: f64) -> SimilarityRecord {
        SimilarityRecord {
            morph_id: m.into(),
            subject_index: n,
            sample_index: i,
            score: s,
        }
    }

    #[test]
    fn provenance_strings_are_a_bijection() {
        for p in MediaProvenance::ALL {
            assert_eq!(p.as_str().parse::<MediaProvenance>().unwrap(), p);
            let json = serde_json::to_string(&p).unwrap();
            assert_eq!(json, format!("\"{}\"", p.as_str()));
            assert_eq!(serde_json::from_str::<MediaProvenance>(&json).unwrap(), p);
        }
        assert_ne!(MediaProvenance::Digital.as_str(), MediaProvenance::PrintScanned.as_str());
        assert!("printscanned".parse::<MediaProvenance>().is_err());
    }

    #[test]
    fn scenario_labels() {
        let labels: Vec<_> = ScenarioConfig::all().iter().map(|c| c.label()).collect();
        assert_eq!(labels, ["D-D", "D-PS", "PS-D", "PS-PS"]);
        for c in ScenarioConfig::all() {
            assert_eq!(c.label().parse::<ScenarioConfig>().unwrap(), c);
        }
        assert_eq!(ScenarioConfig::DPS.morph_source, MediaProvenance::Digital);
        assert_eq!(ScenarioConfig::DPS.bona_fide_source, MediaProvenance::PrintScanned);
        assert!("P-D".parse::<ScenarioConfig>().is_err());
    }

    #[test]
    fn derived_counts() {
        let set = MorphScoreSet::new(vec![rec("m1", 1, 1, 0.9), rec("m1", 2, 1, 0.8)]).unwrap();
        assert_eq!(set.morph_count(), 1);
        assert_eq!(set.subject_count("m1"), Some(2));
        assert_eq!(set.sample_count("m1", 1), Some(1));
        assert_eq!(set.sample_count("m1", 2), Some(1));
        assert_eq!(set.sample_count("m2", 1), None);
    }

    #[test]
    fn score_set_rejects_bad_records() {
        assert!(MorphScoreSet::new(vec![]).is_err());
        let dup = MorphScoreSet::new(vec![rec("m", 1, 1, 0.1), rec("m", 1, 1, 0.2)]);
        assert!(matches!(dup, Err(Error::Duplicate(_))));
        assert!(MorphScoreSet::new(vec![rec("m", 1, 1, f64::NAN)]).is_err());
        assert!(MorphScoreSet::new(vec![rec("m", 0, 1, 0.5)]).is_err());
    }

    #[test]
    fn landmark_bounds_are_half_open() {
        let mut pts = vec![Point::new(1.0, 1.0); LANDMARK_COUNT];
        assert!(LandmarkSet::new(pts.clone(), 10, 10).is_ok());
        pts[5] = Point::new(10.0, 0.0);
        let err = LandmarkSet::new(pts.clone(), 10, 10).unwrap_err();
        assert!(err.to_string().contains("out of bounds"), "{err}");
        pts[5] = Point::new(9.999, 0.0);
        assert!(LandmarkSet::new(pts.clone(), 10, 10).is_ok());
        pts.pop();
        let err = LandmarkSet::new(pts, 10, 10).unwrap_err();
        assert!(err.to_string().contains("expected 68 points"), "{err}");
    }

    #[test]
    fn image_buffer_size_checked() {
        assert!(ImageBuffer::new(2, 2, vec![0; 12]).is_ok());
        assert!(ImageBuffer::new(2, 2, vec![0; 11]).is_err());
        assert!(ImageBuffer::filled(1, 1, [1, 2, 3]).with_ppi(Some(0)).is_err());
        assert_eq!(ImageBuffer::filled(3, 2, [1, 2, 3]).pixel(2, 1), [1, 2, 3]);
    }
}
