//! Descriptive summaries of an annotation corpus.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::gold::resample_records;
use crate::error::{Error, Result};
use crate::gems::GemsLabel;
use crate::preprocess::ResampleConfig;
use crate::record::{AnnotationRecord, Modality};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectMeans {
    pub records: usize,
    pub samples: usize,
    pub mean_arousal: f64,
    pub mean_valence: f64,
    pub familiarity_rate: f64,
    /// Labels selected per annotation.
    pub mean_labels: f64,
    /// Distinct labels per media item, pooled over its annotators.
    pub mean_unique_labels_per_media: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub term: String,
    pub category: String,
    pub counts: BTreeMap<Modality, usize>,
    pub total: usize,
    /// Share of all selected labels.
    pub share_of_labels: f64,
    /// Share of annotations that selected this label.
    pub share_of_annotations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub media: usize,
    pub participants: usize,
    pub overall: AffectMeans,
    pub per_modality: BTreeMap<Modality, AffectMeans>,
    /// One row per GEMS term, in taxonomy order.
    pub labels: Vec<LabelRow>,
}

fn summarize(records: &[(&AnnotationRecord, &[f64], &[f64])]) -> AffectMeans {
    let samples: usize = records.iter().map(|(_, a, _)| a.len()).sum();
    let sum_a: f64 = records.iter().map(|r| r.1.iter().sum::<f64>()).sum();
    let sum_v: f64 = records.iter().map(|r| r.2.iter().sum::<f64>()).sum();
    let n = records.len() as f64;
    let mut unique: BTreeMap<&str, BTreeSet<GemsLabel>> = BTreeMap::new();
    for (r, _, _) in records {
        unique.entry(r.media_id.as_str()).or_default().extend(r.gems_labels.iter().copied());
    }
    AffectMeans {
        records: records.len(),
        samples,
        mean_arousal: sum_a / samples as f64,
        mean_valence: sum_v / samples as f64,
        familiarity_rate: records.iter().filter(|(r, _, _)| r.familiar).count() as f64 / n,
        mean_labels: records.iter().map(|(r, _, _)| r.gems_labels.len()).sum::<usize>() as f64 / n,
        mean_unique_labels_per_media: unique.values().map(BTreeSet::len).sum::<usize>() as f64 / unique.len() as f64,
    }
}

/// Means over every resampled 2 Hz point, label tallies and familiarity.
pub fn describe(records: &[AnnotationRecord], resample: &ResampleConfig) -> Result<Description> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no annotation records"));
    }
    let seqs = resample_records(records, resample)?;
    let all: Vec<(&AnnotationRecord, &[f64], &[f64])> =
        records.iter().zip(&seqs).map(|(r, s)| (r, s.arousal.as_slice(), s.valence.as_slice())).collect();
    let mut per_modality = BTreeMap::new();
    for m in Modality::ALL {
        let subset: Vec<_> = all.iter().filter(|(r, _, _)| r.modality == m).copied().collect();
        if !subset.is_empty() {
            per_modality.insert(m, summarize(&subset));
        }
    }

    let total_labels: usize = records.iter().map(|r| r.gems_labels.len()).sum();
    let labels = GemsLabel::all()
        .map(|l| {
            let mut counts: BTreeMap<Modality, usize> = per_modality.keys().map(|m| (*m, 0)).collect();
            for r in records.iter().filter(|r| r.gems_labels.contains(&l)) {
                *counts.entry(r.modality).or_default() += 1;
            }
            let total: usize = counts.values().sum();
            LabelRow {
                term: l.term().to_string(),
                category: l.category().name().to_string(),
                counts,
                total,
                share_of_labels: if total_labels > 0 { total as f64 / total_labels as f64 } else { 0.0 },
                share_of_annotations: total as f64 / records.len() as f64,
            }
        })
        .collect();

    Ok(Description {
        media: records.iter().map(|r| &r.media_id).collect::<BTreeSet<_>>().len(),
        participants: records.iter().map(|r| &r.participant_id).collect::<BTreeSet<_>>().len(),
        overall: summarize(&all),
        per_modality,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gems::gems_lookup;
    use crate::record::{AnnotatorProfile, Gender, OverlayMode, Sample};

    fn rec(media: &str, modality: Modality, arousal: f64, labels: &[&str], familiar: bool) -> AnnotationRecord {
        AnnotationRecord {
            participant_id: "p".into(),
            media_id: media.into(),
            modality,
            overlay_mode: OverlayMode::NotApplicable,
            samples: (0..5).map(|k| Sample::new(k as f64 * 0.5, arousal, -arousal)).collect(),
            familiar,
            gems_labels: labels.iter().map(|t| gems_lookup(t).unwrap()).collect(),
            profile: AnnotatorProfile { gender: Gender::Female, years_musical_training: 2, age: None },
        }
    }

    #[test]
    fn constant_record_mean() {
        let d = describe(&[rec("m", Modality::Music, 0.5, &["Calm"], false)], &ResampleConfig::default()).unwrap();
        assert_eq!(d.overall.mean_arousal, 0.5);
        assert_eq!(d.overall.mean_valence, -0.5);
        assert_eq!(d.overall.samples, 5);
    }

    #[test]
    fn label_tallies_and_rates() {
        let rs = [
            rec("a", Modality::Music, 0.2, &["Calm", "Sad"], true),
            rec("a", Modality::Visual, 0.0, &["Sad"], false),
            rec("b", Modality::Music, 0.4, &["Calm", "Tense", "Blue"], false),
        ];
        let d = describe(&rs, &ResampleConfig::default()).unwrap();
        assert!((d.overall.mean_labels - 2.0).abs() < 1e-12);
        assert!((d.overall.familiarity_rate - 1.0 / 3.0).abs() < 1e-12);
        let sad = d.labels.iter().find(|l| l.term == "Sad").unwrap();
        assert_eq!(sad.total, 2);
        assert_eq!(sad.counts[&Modality::Visual], 1);
        assert!((sad.share_of_labels - 2.0 / 6.0).abs() < 1e-12);
        assert!((d.per_modality[&Modality::Music].mean_arousal - 0.3).abs() < 1e-12);
        // Media "a" has {Calm, Sad}, media "b" has three labels.
        assert!((d.overall.mean_unique_labels_per_media - 2.5).abs() < 1e-12);
        assert_eq!(d.labels.len(), 27);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(describe(&[], &ResampleConfig::default()), Err(Error::EmptyInput(_))));
    }
}
