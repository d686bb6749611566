//! The statistical battery run over an annotation corpus: median summaries,
//! normality, interface and modality effects, label contingency tests and
//! cross-modality trajectory correlations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::gold::resample_records;
use crate::error::{Error, Result};
use crate::gems::GemsLabel;
use crate::metrics::{mean_sd, pearson};
use crate::preprocess::{median, median_summary, ResampleConfig};
use crate::stats::{chi_square_contingency, kruskal_wallis, ks_one_sample, mann_whitney_u, Reference, TestResult};
use crate::record::{AnnotationRecord, Dimension, Gender, Modality, OverlayMode};

/// Musical training above this many years counts as trained.
pub const TRAINING_SPLIT_YEARS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyReport {
    pub u1: f64,
    pub u2: f64,
    pub n1: usize,
    pub n2: usize,
    pub result: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyReport {
    /// Row labels of the group-by-label table.
    pub groups: Vec<String>,
    /// Labels no group selected; dropped before testing.
    pub dropped_labels: Vec<String>,
    pub result: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub a: Modality,
    pub b: Modality,
    pub items: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Each entry is `Ok(report)` or the reason the test could not be run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Ok(T),
    Skipped(String),
}

impl<T> From<Result<T>> for Outcome<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Outcome::Ok(v),
            Err(e) => Outcome::Skipped(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionAnalysis {
    pub normality: Outcome<TestResult>,
    /// Overlaid versus side-by-side, visual and audiovisual records.
    pub overlay: Outcome<MannWhitneyReport>,
    pub modality: Outcome<TestResult>,
    pub modality_medians: BTreeMap<Modality, f64>,
    pub modality_correlations: Vec<PairCorrelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub records: usize,
    pub dimensions: BTreeMap<Dimension, DimensionAnalysis>,
    pub labels_by: BTreeMap<String, Outcome<ContingencyReport>>,
}

fn mw(g1: &[f64], g2: &[f64]) -> Result<MannWhitneyReport> {
    let r = mann_whitney_u(g1, g2)?;
    Ok(MannWhitneyReport { u1: r.u1, u2: r.u2, n1: g1.len(), n2: g2.len(), result: r.result })
}

/// Chi-square test on the (group × label) selection-count table.
pub fn label_contingency<K: Ord + ToString>(
    records: &[AnnotationRecord],
    group: impl Fn(&AnnotationRecord) -> Option<K>,
) -> Result<ContingencyReport> {
    let mut counts: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(k) = group(r) {
            let row = counts.entry(k).or_insert_with(|| vec![0.0; crate::gems::NUM_LABELS]);
            for l in &r.gems_labels {
                row[l.index()] += 1.0;
            }
        }
    }
    let keep: Vec<usize> =
        (0..crate::gems::NUM_LABELS).filter(|&j| counts.values().any(|row| row[j] > 0.0)).collect();
    let dropped_labels = GemsLabel::all().filter(|l| !keep.contains(&l.index())).map(|l| l.term().to_string()).collect();
    let table: Vec<Vec<f64>> = counts.values().map(|row| keep.iter().map(|&j| row[j]).collect()).collect();
    let result = chi_square_contingency(&table)?;
    Ok(ContingencyReport { groups: counts.keys().map(ToString::to_string).collect(), dropped_labels, result })
}

/// Per media item, the Pearson correlation between the unweighted mean
/// trajectories of two modalities, summarized across items.
fn modality_correlations(
    records: &[AnnotationRecord],
    traces: &[Vec<f64>],
) -> Vec<PairCorrelation> {
    let mut means: BTreeMap<(&str, Modality), (Vec<f64>, usize)> = BTreeMap::new();
    for (r, t) in records.iter().zip(traces) {
        let e = means.entry((r.media_id.as_str(), r.modality)).or_insert_with(|| (vec![0.0; t.len()], 0));
        e.0.iter_mut().zip(t).for_each(|(m, v)| *m += v);
        e.1 += 1;
    }
    for (m, k) in means.values_mut() {
        m.iter_mut().for_each(|v| *v /= *k as f64);
    }
    let pairs = [
        (Modality::Music, Modality::Audiovisual),
        (Modality::Visual, Modality::Audiovisual),
        (Modality::Music, Modality::Visual),
    ];
    let media: Vec<&str> = {
        let mut v: Vec<&str> = means.keys().map(|(m, _)| *m).collect();
        v.dedup();
        v
    };
    pairs
        .iter()
        .map(|&(a, b)| {
            let rs: Vec<f64> = media
                .iter()
                .filter_map(|id| {
                    let x = &means.get(&(*id, a))?.0;
                    let y = &means.get(&(*id, b))?.0;
                    pearson(x, y).ok()
                })
                .collect();
            let (mean, sd) = mean_sd(&rs);
            PairCorrelation { a, b, items: rs.len(), mean, sd }
        })
        .collect()
}

pub fn analyze(records: &[AnnotationRecord], resample: &ResampleConfig) -> Result<Analysis> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no annotation records"));
    }
    let seqs = resample_records(records, resample)?;
    let medians = seqs.iter().map(median_summary).collect::<Result<Vec<_>>>()?;

    let mut dimensions = BTreeMap::new();
    for dim in Dimension::ALL {
        let pick = |m: &(f64, f64)| if dim == Dimension::Arousal { m.0 } else { m.1 };
        let values: Vec<f64> = medians.iter().map(pick).collect();
        let normality = Reference::normal_fitted(&values).and_then(|r| ks_one_sample(&values, &r, true)).into();

        let by_overlay = |mode| -> Vec<f64> {
            records.iter().zip(&medians).filter(|(r, _)| r.overlay_mode == mode).map(|(_, m)| pick(m)).collect()
        };
        let overlay = mw(&by_overlay(OverlayMode::Overlaid), &by_overlay(OverlayMode::SideBySide)).into();

        let mut groups: BTreeMap<Modality, Vec<f64>> = BTreeMap::new();
        for (r, m) in records.iter().zip(&medians) {
            groups.entry(r.modality).or_default().push(pick(m));
        }
        let group_vec: Vec<Vec<f64>> = groups.values().cloned().collect();
        let modality = kruskal_wallis(&group_vec).into();
        let modality_medians = groups.iter().map(|(m, v)| (*m, median(v).unwrap_or(f64::NAN))).collect();

        let traces: Vec<Vec<f64>> = seqs.iter().map(|s| s.dimension(dim).to_vec()).collect();
        let modality_correlations = modality_correlations(records, &traces);
        dimensions.insert(dim, DimensionAnalysis { normality, overlay, modality, modality_medians, modality_correlations });
    }

    let mut labels_by = BTreeMap::new();
    labels_by.insert("modality".to_string(), label_contingency(records, |r| Some(r.modality.as_str())).into());
    labels_by.insert(
        "overlay".to_string(),
        label_contingency(records, |r| match r.overlay_mode {
            OverlayMode::Overlaid => Some("overlaid"),
            OverlayMode::SideBySide => Some("side"),
            OverlayMode::NotApplicable => None,
        })
        .into(),
    );
    labels_by.insert(
        "gender".to_string(),
        label_contingency(records, |r| match r.profile.gender {
            Gender::Female => Some("female"),
            Gender::Male => Some("male"),
            _ => None,
        })
        .into(),
    );
    labels_by.insert(
        "musical_training".to_string(),
        label_contingency(records, |r| {
            Some(if r.profile.years_musical_training > TRAINING_SPLIT_YEARS { "more_than_3_years" } else { "0_to_3_years" })
        })
        .into(),
    );
    labels_by.insert(
        "familiarity".to_string(),
        label_contingency(records, |r| Some(if r.familiar { "familiar" } else { "unfamiliar" })).into(),
    );

    Ok(Analysis { records: records.len(), dimensions, labels_by })
}
