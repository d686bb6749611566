//! Resampling of raw cursor traces onto the 2 Hz grid, per-sequence
//! summaries, training windows and feature standardization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{Dimension, FeatureMatrix, GoldStandard, Sample, GRID_INTERVAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMethod {
    #[default]
    Linear,
    HoldLast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub target_interval: f64,
    pub method: ResampleMethod,
    /// Fill grid points before the first sample with the first value. When
    /// off, those points sit at the origin of the affect plane.
    pub backfill: bool,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig { target_interval: GRID_INTERVAL, method: ResampleMethod::Linear, backfill: true }
    }
}

/// An arousal/valence trace on a uniform grid starting at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformSequence {
    pub interval: f64,
    pub arousal: Vec<f64>,
    pub valence: Vec<f64>,
}

impl UniformSequence {
    pub fn len(&self) -> usize {
        self.arousal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arousal.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.interval).collect()
    }

    pub fn dimension(&self, d: Dimension) -> &[f64] {
        match d {
            Dimension::Arousal => &self.arousal,
            Dimension::Valence => &self.valence,
        }
    }

    pub fn to_samples(&self) -> Vec<Sample> {
        self.timestamps()
            .into_iter()
            .zip(self.arousal.iter().zip(&self.valence))
            .map(|(t, (a, v))| Sample::new(t, *a, *v))
            .collect()
    }
}

/// Number of grid points in `[0, duration]`.
pub fn grid_len(duration: f64, interval: f64) -> usize {
    // Tolerate representation error so 60.0 / 0.5 lands on 120, not 119.
    (duration / interval + 1e-9).floor() as usize + 1
}

/// Resamples timestamped samples onto `k·interval` for `k = 0..=⌊duration/interval⌋`.
pub fn resample(samples: &[Sample], cfg: &ResampleConfig, duration: f64) -> Result<UniformSequence> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples to resample"));
    }
    if !(cfg.target_interval > 0.0) {
        return Err(Error::Invalid(format!("target_interval {} must be > 0", cfg.target_interval)));
    }
    if !(duration > 0.0) {
        return Err(Error::Invalid(format!("duration {duration} must be > 0")));
    }
    if let Some(index) = samples.windows(2).position(|w| !(w[1].t > w[0].t)) {
        return Err(Error::NonMonotonicTime { index: index + 1 });
    }

    let n = grid_len(duration, cfg.target_interval);
    let mut arousal = Vec::with_capacity(n);
    let mut valence = Vec::with_capacity(n);
    let first = samples[0];
    let last = samples[samples.len() - 1];
    // Index of the last sample with t <= τ; advances monotonically.
    let mut j = 0usize;
    for k in 0..n {
        let tau = k as f64 * cfg.target_interval;
        let (a, v) = if tau < first.t {
            if cfg.backfill {
                (first.arousal, first.valence)
            } else {
                (0.0, 0.0)
            }
        } else if tau >= last.t {
            (last.arousal, last.valence)
        } else {
            while samples[j + 1].t <= tau {
                j += 1;
            }
            let (s0, s1) = (samples[j], samples[j + 1]);
            match cfg.method {
                ResampleMethod::HoldLast => (s0.arousal, s0.valence),
                ResampleMethod::Linear => {
                    let w = (tau - s0.t) / (s1.t - s0.t);
                    (
                        s0.arousal + w * (s1.arousal - s0.arousal),
                        s0.valence + w * (s1.valence - s0.valence),
                    )
                }
            }
        };
        arousal.push(a);
        valence.push(v);
    }
    Ok(UniformSequence { interval: cfg.target_interval, arousal, valence })
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("median of empty sequence"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Per-dimension median of a sequence: `(arousal, valence)`.
pub fn median_summary(seq: &UniformSequence) -> Result<(f64, f64)> {
    Ok((median(&seq.arousal)?, median(&seq.valence)?))
}

/// A training pair: `seq_len` consecutive feature rows and the target at the
/// following step.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub rows: Vec<Vec<f64>>,
    pub target: f64,
}

/// Target indices for windows of `seq_len` strictly-past steps.
pub fn window_targets(len: usize, seq_len: usize) -> std::ops::Range<usize> {
    seq_len.min(len)..len
}

pub fn check_aligned(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-6) {
        return Err(Error::GridMismatch(format!(
            "{what}: grids differ ({} vs {} points)",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// One window per target index `k >= seq_len`, inputs rows `k-seq_len..k`.
pub fn window(features: &FeatureMatrix, target: &GoldStandard, seq_len: usize) -> Result<Vec<Window>> {
    if seq_len == 0 {
        return Err(Error::Invalid("seq_len must be >= 1".into()));
    }
    check_aligned(&features.timestamps, &target.timestamps, &features.media_id)?;
    Ok(window_targets(features.len(), seq_len)
        .map(|k| Window { rows: features.values[k - seq_len..k].to_vec(), target: target.values[k] })
        .collect())
}

/// Per-feature standardization statistics (population sd).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ZScore {
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<ZScore> {
        let mut rows = Vec::new();
        for fm in train {
            rows.extend(fm.values.iter().map(Vec::as_slice));
        }
        ZScore::fit_rows(&rows)
    }

    pub fn fit_rows(rows: &[&[f64]]) -> Result<ZScore> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptyInput("no training rows for standardization"));
        };
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::ShapeMismatch(format!("row width {} vs {d}", r.len())));
            }
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let sd = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(ZScore { mean, sd })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(x, (m, s))| (x - m) / if *s > 0.0 { *s } else { 1.0 })
            .collect()
    }

    pub fn apply(&self, fm: &FeatureMatrix) -> Result<FeatureMatrix> {
        if fm.dim() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{}: {} features, statistics for {}",
                fm.media_id,
                fm.dim(),
                self.dim()
            )));
        }
        let mut out = fm.clone();
        out.values = fm.values.iter().map(|r| self.apply_row(r)).collect();
        Ok(out)
    }
}

/// Fits statistics on `train` only and applies them to `apply_to`.
pub fn zscore_fit_apply(
    train: &[FeatureMatrix],
    apply_to: &[FeatureMatrix],
) -> Result<(Vec<FeatureMatrix>, ZScore)> {
    let z = ZScore::fit(train)?;
    let out = apply_to.iter().map(|fm| z.apply(fm)).collect::<Result<Vec<_>>>()?;
    Ok((out, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{Channel, Modality};
    use std::collections::BTreeMap;

    fn s(t: f64, v: f64) -> Sample {
        Sample::new(t, v, -v)
    }

    #[test]
    fn on_grid_is_identity() {
        let samples = [s(0.0, 0.1), s(0.5, 0.4), s(1.0, -0.3)];
        let out = resample(&samples, &ResampleConfig::default(), 1.0).unwrap();
        assert_eq!(out.arousal, vec![0.1, 0.4, -0.3]);
        assert_eq!(out.valence, vec![-0.1, -0.4, 0.3]);
        assert_eq!(out.timestamps(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn linear_midpoint() {
        let out = resample(&[s(0.0, 0.0), s(1.0, 1.0)], &ResampleConfig::default(), 1.0).unwrap();
        assert_eq!(out.arousal[1], 0.5);
    }

    #[test]
    fn backfill_and_hold() {
        let cfg = ResampleConfig::default();
        let out = resample(&[s(0.3, 0.2), s(0.8, 0.6)], &cfg, 2.0).unwrap();
        assert_eq!(out.arousal[0], 0.2);
        assert!((out.arousal[1] - (0.2 + 0.4 * 0.4)).abs() < 1e-12);
        assert_eq!(&out.arousal[2..], &[0.6, 0.6, 0.6]);
        let no_fill = ResampleConfig { backfill: false, ..cfg };
        assert_eq!(resample(&[s(0.3, 0.2)], &no_fill, 1.0).unwrap().arousal, vec![0.0, 0.2, 0.2]);
    }

    #[test]
    fn hold_last_method() {
        let cfg = ResampleConfig { method: ResampleMethod::HoldLast, ..Default::default() };
        let out = resample(&[s(0.0, 0.0), s(0.9, 1.0)], &cfg, 1.0).unwrap();
        assert_eq!(out.arousal, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn resample_errors() {
        let cfg = ResampleConfig::default();
        assert!(matches!(resample(&[], &cfg, 1.0), Err(Error::EmptyInput(_))));
        assert!(matches!(
            resample(&[s(0.0, 0.0), s(0.0, 0.1)], &cfg, 1.0),
            Err(Error::NonMonotonicTime { index: 1 })
        ));
    }

    #[test]
    fn sixty_seconds_gives_121_points() {
        let out = resample(&[s(0.0, 0.0)], &ResampleConfig::default(), 60.0).unwrap();
        assert_eq!(out.len(), 121);
    }

    #[test]
    fn medians() {
        let seq = |a: Vec<f64>| UniformSequence { interval: 0.5, valence: a.clone(), arousal: a };
        assert_eq!(median_summary(&seq(vec![0.1, 0.3, 0.2])).unwrap().0, 0.2);
        assert_eq!(median_summary(&seq(vec![0.0, 1.0])).unwrap().0, 0.5);
        assert_eq!(median_summary(&seq(vec![0.7; 5])).unwrap(), (0.7, 0.7));
        assert!(median(&[]).is_err());
    }

    fn fm(t: usize, d: usize) -> FeatureMatrix {
        FeatureMatrix {
            media_id: "m".into(),
            channel: Channel::Audio,
            timestamps: (0..t).map(|k| k as f64 * 0.5).collect(),
            values: (0..t).map(|k| vec![k as f64; d]).collect(),
            feature_names: (0..d).map(|i| format!("f{i}")).collect(),
        }
    }

    fn gold(t: usize) -> GoldStandard {
        GoldStandard {
            media_id: "m".into(),
            modality: Modality::Music,
            dimension: Dimension::Arousal,
            timestamps: (0..t).map(|k| k as f64 * 0.5).collect(),
            values: (0..t).map(|k| k as f64 / 10.0).collect(),
            annotator_weights: BTreeMap::new(),
        }
    }

    #[test]
    fn window_counts() {
        let w = window(&fm(6, 2), &gold(6), 4).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].target, 0.4);
        assert_eq!(w[0].rows, vec![vec![0.0; 2], vec![1.0; 2], vec![2.0; 2], vec![3.0; 2]]);
        assert_eq!(w[1].target, 0.5);
        assert_eq!(window(&fm(4, 2), &gold(4), 4).unwrap().len(), 0);
        assert_eq!(window(&fm(5, 1), &gold(5), 1).unwrap().len(), 4);
        assert!(matches!(window(&fm(5, 1), &gold(6), 1), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn zscore_examples() {
        let mut a = fm(2, 2);
        a.values = vec![vec![0.0, 3.0], vec![2.0, 3.0]];
        let mut b = fm(1, 2);
        b.values = vec![vec![4.0, 3.0]];
        let (out, z) = zscore_fit_apply(&[a.clone()], &[a, b]).unwrap();
        assert_eq!(z.mean, vec![1.0, 3.0]);
        assert_eq!(z.sd, vec![1.0, 0.0]);
        assert_eq!(out[0].values, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(out[1].values, vec![vec![3.0, 0.0]]);
        assert!(zscore_fit_apply(&[], &[]).is_err());
    }
}
