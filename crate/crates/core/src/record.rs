//! Domain types shared by every stage of the pipeline.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gems::GemsLabel;

/// Spacing of the annotation and feature grids, in seconds (2 Hz).
pub const GRID_INTERVAL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Music,
    Visual,
    Audiovisual,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Music, Modality::Visual, Modality::Audiovisual];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Music => "music",
            Modality::Visual => "visual",
            Modality::Audiovisual => "audiovisual",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "music" => Ok(Modality::Music),
            "visual" => Ok(Modality::Visual),
            "audiovisual" => Ok(Modality::Audiovisual),
            other => Err(format!("unknown modality {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OverlayMode {
    #[serde(rename = "overlaid")]
    Overlaid,
    #[serde(rename = "side")]
    SideBySide,
    #[serde(rename = "na")]
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Arousal,
    Valence,
}

impl Dimension {
    pub const ALL: [Dimension; 2] = [Dimension::Arousal, Dimension::Valence];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Arousal => "arousal",
            Dimension::Valence => "valence",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "arousal" => Ok(Dimension::Arousal),
            "valence" => Ok(Dimension::Valence),
            other => Err(format!("unknown dimension {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Audio,
    Visual,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Audio => "audio",
            Channel::Visual => "visual",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Other,
    Undisclosed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub gender: Gender,
    pub years_musical_training: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
}

/// One cursor reading: time in seconds and the two affect coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Sample {
    pub t: f64,
    pub arousal: f64,
    pub valence: f64,
}

impl Sample {
    pub fn new(t: f64, arousal: f64, valence: f64) -> Self {
        Sample { t, arousal, valence }
    }

    pub fn get(&self, dimension: Dimension) -> f64 {
        match dimension {
            Dimension::Arousal => self.arousal,
            Dimension::Valence => self.valence,
        }
    }
}

impl From<[f64; 3]> for Sample {
    fn from([t, arousal, valence]: [f64; 3]) -> Self {
        Sample { t, arousal, valence }
    }
}

impl From<Sample> for [f64; 3] {
    fn from(s: Sample) -> Self {
        [s.t, s.arousal, s.valence]
    }
}

/// One participant's session on one media item in one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub participant_id: String,
    pub media_id: String,
    pub modality: Modality,
    pub overlay_mode: OverlayMode,
    pub samples: Vec<Sample>,
    pub familiar: bool,
    pub gems_labels: Vec<GemsLabel>,
    pub profile: AnnotatorProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonMonotonicTime { index: usize },
    NegativeTime { index: usize },
    NonFinite { index: usize },
    OutOfRange { index: usize, dimension: Dimension, value: f64 },
    EmptyLabels,
    DuplicateLabel { term: String },
    OverlayForMusic,
    TrainingYears { years: u32 },
    EmptyId { field: &'static str },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every invariant the record violates. Never aborts.
pub fn validate_record(rec: &AnnotationRecord) -> ValidationReport {
    let mut violations = Vec::new();
    if rec.participant_id.is_empty() {
        violations.push(Violation::EmptyId { field: "participant_id" });
    }
    if rec.media_id.is_empty() {
        violations.push(Violation::EmptyId { field: "media_id" });
    }
    for (index, s) in rec.samples.iter().enumerate() {
        if !(s.t.is_finite() && s.arousal.is_finite() && s.valence.is_finite()) {
            violations.push(Violation::NonFinite { index });
            continue;
        }
        if s.t < 0.0 {
            violations.push(Violation::NegativeTime { index });
        }
        if index > 0 && s.t <= rec.samples[index - 1].t {
            violations.push(Violation::NonMonotonicTime { index });
        }
        for dimension in Dimension::ALL {
            let value = s.get(dimension);
            if !(-1.0..=1.0).contains(&value) {
                violations.push(Violation::OutOfRange { index, dimension, value });
            }
        }
    }
    if rec.gems_labels.is_empty() {
        violations.push(Violation::EmptyLabels);
    }
    let mut seen = std::collections::HashSet::new();
    for l in &rec.gems_labels {
        if !seen.insert(*l) {
            violations.push(Violation::DuplicateLabel { term: l.term().to_string() });
        }
    }
    if rec.modality == Modality::Music && rec.overlay_mode != OverlayMode::NotApplicable {
        violations.push(Violation::OverlayForMusic);
    }
    if rec.profile.years_musical_training > 100 {
        violations.push(Violation::TrainingYears { years: rec.profile.years_musical_training });
    }
    ValidationReport { violations }
}

/// Per-item, per-channel feature time series on the 2 Hz grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub media_id: String,
    pub channel: Channel,
    pub timestamps: Vec<f64>,
    /// Row-major, one row per timestamp.
    pub values: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Checks the grid spacing, row widths and finiteness.
    pub fn check(&self) -> crate::Result<()> {
        use crate::Error;
        if self.values.len() != self.timestamps.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}: {} rows for {} timestamps",
                self.media_id,
                self.values.len(),
                self.timestamps.len()
            )));
        }
        for (k, t) in self.timestamps.iter().enumerate() {
            let expected = self.timestamps[0] + k as f64 * GRID_INTERVAL;
            if (t - expected).abs() > 1e-6 {
                return Err(Error::GridMismatch(format!(
                    "{}: timestamp {t} at row {k}, expected {expected}",
                    self.media_id
                )));
            }
        }
        for row in &self.values {
            if row.len() != self.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: row width {} but {} feature names",
                    self.media_id,
                    row.len(),
                    self.dim()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput("feature matrix"));
            }
        }
        Ok(())
    }
}

/// EWE target sequence for one (media, modality, dimension).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldStandard {
    pub media_id: String,
    pub modality: Modality,
    pub dimension: Dimension,
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
    pub annotator_weights: BTreeMap<String, f64>,
}

/// Population moments of a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceMoments {
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
}

impl SequenceMoments {
    /// `None` for an empty sequence.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Some(SequenceMoments { mean, variance, n })
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}
