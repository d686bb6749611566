//! Evaluator Weighted Estimator (EWE) gold standards and leave-one-out
//! inter-rater agreement.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ccc, mean_sd, pearson};
use crate::record::{Dimension, GoldStandard, Modality, GRID_INTERVAL};

/// One annotator's resampled sequence for a single dimension.
#[derive(Debug, Clone, Copy)]
pub struct Trace<'a> {
    pub participant_id: &'a str,
    pub values: &'a [f64],
}

impl<'a> Trace<'a> {
    pub fn new(participant_id: &'a str, values: &'a [f64]) -> Self {
        Trace { participant_id, values }
    }
}

/// Identifies the gold standard being built.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GoldKey {
    pub media_id: String,
    pub modality: Modality,
    pub dimension: Dimension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EweResult {
    pub gold: GoldStandard,
    /// Correlation with the unweighted mean before clamping; 0 where undefined.
    pub raw_weights: BTreeMap<String, f64>,
    /// Annotators whose weight was clamped to zero or undefined.
    pub excluded: BTreeSet<String>,
    /// Every weight was zero, so `gold` is the unweighted mean.
    pub fallback_mean: bool,
}

fn check_grid(traces: &[Trace<'_>]) -> Result<usize> {
    let Some(first) = traces.first() else {
        return Err(Error::EmptyInput("no annotations"));
    };
    let n = first.values.len();
    if n == 0 {
        return Err(Error::EmptyInput("empty annotation sequence"));
    }
    if let Some(t) = traces.iter().find(|t| t.values.len() != n) {
        return Err(Error::GridMismatch(format!(
            "annotation {} has {} points, expected {n}",
            t.participant_id,
            t.values.len()
        )));
    }
    let mut ids = BTreeSet::new();
    if let Some(t) = traces.iter().find(|t| !ids.insert(t.participant_id)) {
        return Err(Error::Invalid(format!("duplicate annotator {}", t.participant_id)));
    }
    Ok(n)
}

fn unweighted_mean(traces: &[Trace<'_>], n: usize) -> Vec<f64> {
    let mut mean = vec![0.0; n];
    for t in traces {
        for (m, v) in mean.iter_mut().zip(t.values) {
            *m += v;
        }
    }
    let k = traces.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    mean
}

/// Builds the EWE gold standard.
///
/// Each weight is the correlation of an annotation with the unweighted mean
/// of all annotations, computed once. Negative weights are clamped to zero
/// and constant sequences (undefined correlation) also get zero. If nothing
/// positive remains the unweighted mean is returned with `fallback_mean` set.
pub fn ewe(key: &GoldKey, traces: &[Trace<'_>]) -> Result<EweResult> {
    let n = check_grid(traces)?;
    let mean = unweighted_mean(traces, n);

    let mut raw_weights = BTreeMap::new();
    let mut excluded = BTreeSet::new();
    let mut positive: Vec<(&Trace<'_>, f64)> = Vec::new();
    for t in traces {
        // Undefined for a constant trace or mean, and for length-1 sequences.
        let w = pearson(t.values, &mean).unwrap_or(0.0);
        raw_weights.insert(t.participant_id.to_string(), w);
        if w > 0.0 {
            positive.push((t, w));
        } else {
            excluded.insert(t.participant_id.to_string());
        }
    }

    let total: f64 = positive.iter().map(|(_, w)| w).sum();
    let (values, annotator_weights, fallback_mean) = if total > 0.0 {
        let mut values = vec![0.0; n];
        let mut weights = BTreeMap::new();
        for (t, w) in &positive {
            let w = w / total;
            weights.insert(t.participant_id.to_string(), w);
            for (g, v) in values.iter_mut().zip(t.values) {
                *g += w * v;
            }
        }
        (values, weights, false)
    } else {
        (mean, BTreeMap::new(), true)
    };

    Ok(EweResult {
        gold: GoldStandard {
            media_id: key.media_id.clone(),
            modality: key.modality,
            dimension: key.dimension,
            timestamps: (0..n).map(|k| k as f64 * GRID_INTERVAL).collect(),
            values,
            annotator_weights,
        },
        raw_weights,
        excluded,
        fallback_mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub per_annotator: BTreeMap<String, f64>,
    pub mean: f64,
    pub sd: f64,
}

/// CCC of each annotation against the EWE of all the others.
pub fn inter_rater_agreement(key: &GoldKey, traces: &[Trace<'_>]) -> Result<AgreementReport> {
    if traces.len() < 2 {
        return Err(Error::TooFewAnnotators(traces.len()));
    }
    check_grid(traces)?;
    let mut per_annotator = BTreeMap::new();
    let mut others = Vec::with_capacity(traces.len() - 1);
    for (j, t) in traces.iter().enumerate() {
        others.clear();
        others.extend(traces.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, o)| *o));
        let loo = ewe(key, &others)?;
        let score = if t.values.len() < 2 { 0.0 } else { ccc(t.values, &loo.gold.values)? };
        per_annotator.insert(t.participant_id.to_string(), score);
    }
    let scores: Vec<f64> = per_annotator.values().copied().collect();
    let (mean, sd) = mean_sd(&scores);
    Ok(AgreementReport { per_annotator, mean, sd })
}
