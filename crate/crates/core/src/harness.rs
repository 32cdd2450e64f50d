//! Vulnerability and detectability studies driven by a JSON manifest.
//!
//! A manifest declares the axes of both result grids and binds score files
//! to grid cells. Cells without a binding, or whose files are missing or
//! single-class, are reported as absent with a reason; the run continues.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{
    self, BpcerOperatingPoint, BpcerRule, ThresholdCalibration, DEFAULT_BPCER_TARGETS, DEFAULT_TARGET_FMR,
};
use crate::model::ScenarioConfig;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Bona fide media a detector was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainingComposition {
    Digital,
    PrintScan,
    DigitalPlusPrintScan,
}

impl TrainingComposition {
    /// Column order of the detectability table.
    pub const TABLE_ORDER: [TrainingComposition; 3] = [
        TrainingComposition::Digital,
        TrainingComposition::DigitalPlusPrintScan,
        TrainingComposition::PrintScan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainingComposition::Digital => "digital",
            TrainingComposition::PrintScan => "print-scan",
            TrainingComposition::DigitalPlusPrintScan => "digital+print-scan",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            TrainingComposition::Digital => "Digital",
            TrainingComposition::PrintScan => "Print-Scan",
            TrainingComposition::DigitalPlusPrintScan => "Digital + Print-Scan",
        }
    }
}

impl fmt::Display for TrainingComposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainingComposition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::TABLE_ORDER
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown training composition {s:?} (expected digital, print-scan or digital+print-scan)"
                ))
            })
    }
}

impl Serialize for TrainingComposition {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for TrainingComposition {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Similarity scores of one vulnerability cell and the impostor scores used
/// to calibrate its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VulnerabilityBinding {
    pub dataset: String,
    pub algorithm: String,
    pub fr_system: String,
    pub scenario: ScenarioConfig,
    pub scores: PathBuf,
    pub impostors: PathBuf,
}

/// Classifier score files of one (training composition, algorithm) pair,
/// one per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectabilityBinding {
    pub training: TrainingComposition,
    pub algorithm: String,
    pub scores: BTreeMap<ScenarioConfig, PathBuf>,
}

fn default_target_fmr() -> f64 {
    DEFAULT_TARGET_FMR
}

fn default_bpcer_targets() -> Vec<f64> {
    DEFAULT_BPCER_TARGETS.to_vec()
}

fn default_scenarios() -> Vec<ScenarioConfig> {
    ScenarioConfig::all().to_vec()
}

fn default_compositions() -> Vec<TrainingComposition> {
    TrainingComposition::TABLE_ORDER.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationManifest {
    #[serde(default = "default_target_fmr")]
    pub target_fmr: f64,
    #[serde(default = "default_bpcer_targets")]
    pub bpcer_targets: Vec<f64>,
    #[serde(default)]
    pub bpcer_rule: BpcerRule,
    #[serde(default)]
    pub datasets: Vec<String>,
    pub morph_algorithms: Vec<String>,
    #[serde(default)]
    pub fr_systems: Vec<String>,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default = "default_compositions")]
    pub training_compositions: Vec<TrainingComposition>,
    #[serde(default)]
    pub vulnerability: Vec<VulnerabilityBinding>,
    #[serde(default)]
    pub detectability: Vec<DetectabilityBinding>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn check_declared(kind: &str, name: &str, declared: &[String]) -> Result<()> {
    if declared.iter().any(|d| d == name) {
        Ok(())
    } else {
        Err(Error::Manifest(format!("{kind} {name:?} is not declared")))
    }
}

fn check_unique<T: Ord + fmt::Debug>(kind: &str, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for item in items {
        if let Some(dup) = seen.replace(item) {
            return Err(Error::Manifest(format!("duplicate {kind} {dup:?}")));
        }
    }
    Ok(())
}

impl EvaluationManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::from_json(&text, base)
    }

    pub fn from_json(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut manifest: EvaluationManifest =
            serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        manifest.base_dir = base_dir;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_fmr > 0.0 && self.target_fmr < 1.0) {
            return Err(Error::Manifest(format!(
                "target_fmr must lie in (0, 1), got {}",
                self.target_fmr
            )));
        }
        if let Some(t) = self.bpcer_targets.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::Manifest(format!("BPCER target must lie in (0, 1), got {t}")));
        }
        check_unique("dataset", &self.datasets)?;
        check_unique("morph algorithm", &self.morph_algorithms)?;
        check_unique("FR system", &self.fr_systems)?;
        check_unique("scenario", &self.scenarios)?;
        check_unique("training composition", &self.training_compositions)?;
        check_unique("BPCER target", self.bpcer_targets.iter().map(|t| t.to_bits()))?;

        for b in &self.vulnerability {
            check_declared("dataset", &b.dataset, &self.datasets)?;
            check_declared("morph algorithm", &b.algorithm, &self.morph_algorithms)?;
            check_declared("FR system", &b.fr_system, &self.fr_systems)?;
            if !self.scenarios.contains(&b.scenario) {
                return Err(Error::Manifest(format!("scenario {} is not declared", b.scenario)));
            }
        }
        check_unique(
            "vulnerability binding",
            self.vulnerability
                .iter()
                .map(|b| (&b.algorithm, &b.dataset, &b.fr_system, b.scenario)),
        )?;

        for b in &self.detectability {
            check_declared("morph algorithm", &b.algorithm, &self.morph_algorithms)?;
            if !self.training_compositions.contains(&b.training) {
                return Err(Error::Manifest(format!("training composition {} is not declared", b.training)));
            }
            if let Some(s) = b.scores.keys().find(|s| !self.scenarios.contains(s)) {
                return Err(Error::Manifest(format!("scenario {s} is not declared")));
            }
        }
        check_unique(
            "detectability binding",
            self.detectability.iter().map(|b| (b.training, &b.algorithm)),
        )?;
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    fn scenarios_in(&self, order: [ScenarioConfig; 4]) -> Vec<ScenarioConfig> {
        order.into_iter().filter(|s| self.scenarios.contains(s)).collect()
    }

    fn compositions_in_table_order(&self) -> Vec<TrainingComposition> {
        TrainingComposition::TABLE_ORDER
            .into_iter()
            .filter(|c| self.training_compositions.contains(c))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityCell {
    pub algorithm: String,
    pub dataset: String,
    pub fr_system: String,
    pub scenario: ScenarioConfig,
    pub scores_file: PathBuf,
    pub impostor_file: PathBuf,
    pub calibration: ThresholdCalibration,
    pub prodavg_mmpmr: f64,
    /// `100 × prodavg_mmpmr`.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityCell {
    pub training: TrainingComposition,
    pub algorithm: String,
    pub scenario: ScenarioConfig,
    pub scores_file: PathBuf,
    pub eer: f64,
    pub macer_at_bpcer: Vec<BpcerOperatingPoint>,
    pub eer_percent: f64,
    /// MACER percentages in the order of `macer_at_bpcer`.
    pub macer_percent: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Vulnerability,
    Detectability,
}

/// A grid cell that could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsentCell {
    pub section: Section,
    pub algorithm: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fr_system: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingComposition>,
    pub scenario: ScenarioConfig,
    pub reason: String,
}

/// Declared grid axes, in table order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportAxes {
    pub datasets: Vec<String>,
    pub morph_algorithms: Vec<String>,
    pub fr_systems: Vec<String>,
    pub vulnerability_scenarios: Vec<ScenarioConfig>,
    pub detectability_scenarios: Vec<ScenarioConfig>,
    pub training_compositions: Vec<TrainingComposition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub toolkit_version: String,
    pub target_fmr: f64,
    pub bpcer_targets: Vec<f64>,
    pub bpcer_rule: BpcerRule,
    pub axes: ReportAxes,
    /// SHA-256 of every bound file that exists, keyed by the manifest path.
    pub input_digests: BTreeMap<PathBuf, String>,
    pub vulnerability: Vec<VulnerabilityCell>,
    pub detectability: Vec<DetectabilityCell>,
    pub absent: Vec<AbsentCell>,
}

impl MetricReport {
    pub fn is_complete(&self) -> bool {
        self.absent.is_empty()
    }
}

/// Outcome of one cell: computed, absent with a reason, or a fatal error.
enum Outcome<T> {
    Done(T),
    Absent(String),
}

fn missing(path: &Path, resolved: &Path) -> Option<String> {
    (!resolved.is_file()).then(|| format!("file not found: {}", path.display()))
}

fn vulnerability_cell(m: &EvaluationManifest, b: &VulnerabilityBinding) -> Result<Outcome<VulnerabilityCell>> {
    let scores_path = m.resolve(&b.scores);
    let impostor_path = m.resolve(&b.impostors);
    if let Some(reason) = missing(&b.scores, &scores_path).or_else(|| missing(&b.impostors, &impostor_path)) {
        return Ok(Outcome::Absent(reason));
    }
    let scores = io::load_similarity_scores(&scores_path)?;
    let impostors = io::load_impostor_scores(&impostor_path)?;
    let calibration = metrics::calibrate_threshold(&impostors, m.target_fmr)?;
    let value = metrics::prodavg_mmpmr(&scores, calibration.delta);
    Ok(Outcome::Done(VulnerabilityCell {
        algorithm: b.algorithm.clone(),
        dataset: b.dataset.clone(),
        fr_system: b.fr_system.clone(),
        scenario: b.scenario,
        scores_file: b.scores.clone(),
        impostor_file: b.impostors.clone(),
        calibration,
        prodavg_mmpmr: value,
        percent: 100.0 * value,
    }))
}

fn detectability_cell(
    m: &EvaluationManifest,
    training: TrainingComposition,
    algorithm: &str,
    scenario: ScenarioConfig,
    path: &Path,
) -> Result<Outcome<DetectabilityCell>> {
    let resolved = m.resolve(path);
    if let Some(reason) = missing(path, &resolved) {
        return Ok(Outcome::Absent(reason));
    }
    let records = io::load_classifier_scores(&resolved)?;
    let report = match metrics::macer_at_bpcer(&records, &m.bpcer_targets, m.bpcer_rule) {
        Ok(r) => r,
        Err(e @ Error::SingleClass(_)) => return Ok(Outcome::Absent(format!("{}: {e}", path.display()))),
        Err(e) => return Err(e),
    };
    Ok(Outcome::Done(DetectabilityCell {
        training,
        algorithm: algorithm.to_string(),
        scenario,
        scores_file: path.to_path_buf(),
        eer: report.eer,
        eer_percent: 100.0 * report.eer,
        macer_percent: report.macer_at_bpcer.iter().map(|p| 100.0 * p.macer).collect(),
        macer_at_bpcer: report.macer_at_bpcer,
    }))
}

/// Vulnerability grid: per declared (algorithm, dataset, FR system,
/// scenario), ProdAvg-MMPMR at the threshold calibrated on the bound
/// impostor scores. Returns computed cells and absent cells in grid order.
/// A manifest without vulnerability bindings yields neither.
pub fn run_vulnerability_study(m: &EvaluationManifest) -> Result<(Vec<VulnerabilityCell>, Vec<AbsentCell>)> {
    let mut keys = Vec::new();
    if m.vulnerability.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    for algorithm in &m.morph_algorithms {
        for scenario in m.scenarios_in(ScenarioConfig::VULNERABILITY_ORDER) {
            for dataset in &m.datasets {
                for fr in &m.fr_systems {
                    keys.push((algorithm, dataset, fr, scenario));
                }
            }
        }
    }
    let outcomes: Vec<Result<Outcome<VulnerabilityCell>>> = keys
        .par_iter()
        .map(|&(algorithm, dataset, fr, scenario)| {
            let binding = m.vulnerability.iter().find(|b| {
                &b.algorithm == algorithm && &b.dataset == dataset && &b.fr_system == fr && b.scenario == scenario
            });
            match binding {
                Some(b) => vulnerability_cell(m, b),
                None => Ok(Outcome::Absent("no binding".into())),
            }
        })
        .collect();

    let mut cells = Vec::new();
    let mut absent = Vec::new();
    for (&(algorithm, dataset, fr, scenario), outcome) in keys.iter().zip(outcomes) {
        match outcome? {
            Outcome::Done(c) => cells.push(c),
            Outcome::Absent(reason) => absent.push(AbsentCell {
                section: Section::Vulnerability,
                algorithm: algorithm.clone(),
                dataset: Some(dataset.clone()),
                fr_system: Some(fr.clone()),
                training: None,
                scenario,
                reason,
            }),
        }
    }
    Ok((cells, absent))
}

/// Detectability grid: per declared (algorithm, scenario, training
/// composition), EER and MACER at each BPCER target. A manifest without
/// detectability bindings yields no cells.
pub fn run_detectability_study(m: &EvaluationManifest) -> Result<(Vec<DetectabilityCell>, Vec<AbsentCell>)> {
    let mut keys = Vec::new();
    if m.detectability.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    for algorithm in &m.morph_algorithms {
        for scenario in m.scenarios_in(ScenarioConfig::DETECTABILITY_ORDER) {
            for training in m.compositions_in_table_order() {
                keys.push((algorithm, scenario, training));
            }
        }
    }
    let outcomes: Vec<Result<Outcome<DetectabilityCell>>> = keys
        .par_iter()
        .map(|&(algorithm, scenario, training)| {
            let path = m
                .detectability
                .iter()
                .find(|b| &b.algorithm == algorithm && b.training == training)
                .and_then(|b| b.scores.get(&scenario));
            match path {
                Some(p) => detectability_cell(m, training, algorithm, scenario, p),
                None => Ok(Outcome::Absent("no binding".into())),
            }
        })
        .collect();

    let mut cells = Vec::new();
    let mut absent = Vec::new();
    for (&(algorithm, scenario, training), outcome) in keys.iter().zip(outcomes) {
        match outcome? {
            Outcome::Done(c) => cells.push(c),
            Outcome::Absent(reason) => absent.push(AbsentCell {
                section: Section::Detectability,
                algorithm: algorithm.clone(),
                dataset: None,
                fr_system: None,
                training: Some(training),
                scenario,
                reason,
            }),
        }
    }
    Ok((cells, absent))
}

fn input_digests(m: &EvaluationManifest) -> Result<BTreeMap<PathBuf, String>> {
    let paths: BTreeSet<&PathBuf> = m
        .vulnerability
        .iter()
        .flat_map(|b| [&b.scores, &b.impostors])
        .chain(m.detectability.iter().flat_map(|b| b.scores.values()))
        .collect();
    paths
        .into_par_iter()
        .filter(|p| m.resolve(p).is_file())
        .map(|p| Ok((p.clone(), io::file_digest(&m.resolve(p))?)))
        .collect()
}

/// Runs both studies.
pub fn run_manifest(m: &EvaluationManifest) -> Result<MetricReport> {
    let (vulnerability, mut absent) = run_vulnerability_study(m)?;
    let (detectability, det_absent) = run_detectability_study(m)?;
    absent.extend(det_absent);
    let mut bpcer_targets = m.bpcer_targets.clone();
    bpcer_targets.sort_by(f64::total_cmp);
    Ok(MetricReport {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        target_fmr: m.target_fmr,
        bpcer_targets,
        bpcer_rule: m.bpcer_rule,
        axes: ReportAxes {
            datasets: m.datasets.clone(),
            morph_algorithms: m.morph_algorithms.clone(),
            fr_systems: m.fr_systems.clone(),
            vulnerability_scenarios: m.scenarios_in(ScenarioConfig::VULNERABILITY_ORDER),
            detectability_scenarios: m.scenarios_in(ScenarioConfig::DETECTABILITY_ORDER),
            training_compositions: m.compositions_in_table_order(),
        },
        input_digests: input_digests(m)?,
        vulnerability,
        detectability,
        absent,
    })
}
