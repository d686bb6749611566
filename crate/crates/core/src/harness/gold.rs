//! Annotation records to resampled traces, EWE gold standards and agreement
//! tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregate::{ewe, inter_rater_agreement, AgreementReport, EweResult, GoldKey, Trace};
use crate::error::{Error, Result};
use crate::metrics::mean_sd;
use crate::preprocess::{resample, ResampleConfig, UniformSequence};
use crate::record::{AnnotationRecord, Dimension, Modality};

/// Longest annotation per media item, across modalities, so every gold of
/// one item shares a grid.
pub fn media_durations(records: &[AnnotationRecord]) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for r in records {
        let end = r.samples.last().map_or(0.0, |s| s.t);
        let d = out.entry(r.media_id.clone()).or_insert(0.0);
        *d = d.max(end);
    }
    out
}

/// Resamples every record onto the grid of its media item.
pub fn resample_records(records: &[AnnotationRecord], cfg: &ResampleConfig) -> Result<Vec<UniformSequence>> {
    let durations = media_durations(records);
    records
        .iter()
        .map(|r| {
            let d = durations[&r.media_id];
            resample(&r.samples, cfg, d.max(cfg.target_interval)).map_err(|e| {
                Error::Invalid(format!("{} / {} / {}: {e}", r.participant_id, r.media_id, r.modality))
            })
        })
        .collect()
}

/// Record indices grouped by (media, modality), in participant order.
fn groups(records: &[AnnotationRecord]) -> BTreeMap<(String, Modality), Vec<usize>> {
    let mut out: BTreeMap<(String, Modality), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        out.entry((r.media_id.clone(), r.modality)).or_default().push(i);
    }
    for idx in out.values_mut() {
        idx.sort_by(|a, b| records[*a].participant_id.cmp(&records[*b].participant_id));
    }
    out
}

/// One EWE per (media, modality, dimension) present in `records`.
pub fn build_golds(records: &[AnnotationRecord], cfg: &ResampleConfig) -> Result<BTreeMap<GoldKey, EweResult>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no annotation records"));
    }
    let seqs = resample_records(records, cfg)?;
    let mut out = BTreeMap::new();
    for ((media_id, modality), idx) in groups(records) {
        for dimension in Dimension::ALL {
            let traces: Vec<Trace<'_>> =
                idx.iter().map(|&i| Trace::new(&records[i].participant_id, seqs[i].dimension(dimension))).collect();
            let key = GoldKey { media_id: media_id.clone(), modality, dimension };
            let res = ewe(&key, &traces)?;
            out.insert(key, res);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementCell {
    pub modality: Modality,
    pub dimension: Dimension,
    pub annotations: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionAgreement {
    pub dimension: Dimension,
    pub annotations: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    /// Per-annotation scores pooled within each (modality, dimension).
    pub cells: Vec<AgreementCell>,
    /// Pooled over all modalities, per dimension.
    pub overall: Vec<DimensionAgreement>,
    pub items: BTreeMap<String, AgreementReport>,
    /// Items with fewer than two annotators, skipped.
    pub skipped: Vec<String>,
}

fn item_label(key: &GoldKey) -> String {
    format!("{}/{}/{}", key.media_id, key.modality, key.dimension)
}

/// Leave-one-out agreement per item, pooled into a modality by dimension table.
pub fn agreement_table(records: &[AnnotationRecord], cfg: &ResampleConfig) -> Result<AgreementTable> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no annotation records"));
    }
    let seqs = resample_records(records, cfg)?;
    let mut pooled: BTreeMap<(Modality, Dimension), Vec<f64>> = BTreeMap::new();
    let mut items = BTreeMap::new();
    let mut skipped = Vec::new();
    for ((media_id, modality), idx) in groups(records) {
        for dimension in Dimension::ALL {
            let key = GoldKey { media_id: media_id.clone(), modality, dimension };
            if idx.len() < 2 {
                skipped.push(item_label(&key));
                continue;
            }
            let traces: Vec<Trace<'_>> =
                idx.iter().map(|&i| Trace::new(&records[i].participant_id, seqs[i].dimension(dimension))).collect();
            let rep = inter_rater_agreement(&key, &traces)?;
            pooled.entry((modality, dimension)).or_default().extend(rep.per_annotator.values());
            items.insert(item_label(&key), rep);
        }
    }
    let cell = |modality, dimension, scores: &[f64]| {
        let (mean, sd) = mean_sd(scores);
        AgreementCell { modality, dimension, annotations: scores.len(), mean, sd }
    };
    let cells = pooled.iter().map(|((m, d), s)| cell(*m, *d, s)).collect();
    let overall = Dimension::ALL
        .iter()
        .filter_map(|d| {
            let all: Vec<f64> =
                pooled.iter().filter(|((_, dd), _)| dd == d).flat_map(|(_, s)| s.iter().copied()).collect();
            let (mean, sd) = mean_sd(&all);
            (!all.is_empty()).then_some(DimensionAgreement { dimension: *d, annotations: all.len(), mean, sd })
        })
        .collect();
    Ok(AgreementTable { cells, overall, items, skipped })
}
