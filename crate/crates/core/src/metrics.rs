//! Agreement and error metrics. All moments are population moments
//! (divisor N).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::SequenceMoments;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub rmse: f64,
    pub ccc: f64,
}

fn check_lengths(a: &[f64], b: &[f64], min: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < min {
        return Err(Error::EmptyInput("sequence shorter than required"));
    }
    Ok(())
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|v| *v == values[0])
}

fn covariance(a: &[f64], ma: f64, b: &[f64], mb: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

/// Product-moment correlation.
pub fn pearson(r1: &[f64], r2: &[f64]) -> Result<f64> {
    check_lengths(r1, r2, 2)?;
    let m1 = SequenceMoments::of(r1).expect("non-empty");
    let m2 = SequenceMoments::of(r2).expect("non-empty");
    if is_constant(r1) || is_constant(r2) || m1.variance == 0.0 || m2.variance == 0.0 {
        return Err(Error::ConstantInput);
    }
    let r = covariance(r1, m1.mean, r2, m2.mean) / (m1.sd() * m2.sd());
    Ok(r.clamp(-1.0, 1.0))
}

/// Lin's concordance correlation coefficient.
///
/// Two constant sequences with the same value score 1; any other pair with a
/// constant side scores 0.
pub fn ccc(r1: &[f64], r2: &[f64]) -> Result<f64> {
    check_lengths(r1, r2, 2)?;
    let m1 = SequenceMoments::of(r1).expect("non-empty");
    let m2 = SequenceMoments::of(r2).expect("non-empty");
    let (c1, c2) = (is_constant(r1), is_constant(r2));
    if c1 || c2 || m1.variance == 0.0 || m2.variance == 0.0 {
        let same = c1 && c2 && r1[0] == r2[0];
        return Ok(if same { 1.0 } else { 0.0 });
    }
    // 2·Corr·σ1·σ2 is just twice the covariance.
    let cov = covariance(r1, m1.mean, r2, m2.mean);
    let gap = m1.mean - m2.mean;
    let value = 2.0 * cov / (m1.variance + m2.variance + gap * gap);
    Ok(value.clamp(-1.0, 1.0))
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth, 1)?;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

pub fn metric_pair(pred: &[f64], truth: &[f64]) -> Result<MetricPair> {
    Ok(MetricPair { rmse: rmse(pred, truth)?, ccc: ccc(pred, truth)? })
}

/// Mean and population standard deviation; `(NaN, NaN)` for an empty slice.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    match SequenceMoments::of(values) {
        Some(m) => (m.mean, m.sd()),
        None => (f64::NAN, f64::NAN),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        let x = [0.3, -0.1, 0.8, 0.2];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ConstantInput)));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn ccc_examples() {
        assert!((ccc(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((ccc(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap() - 4.0 / 7.0).abs() < 1e-12);
        assert!((ccc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ccc_constant_conventions() {
        assert_eq!(ccc(&[0.2, 0.2], &[0.2, 0.2]).unwrap(), 1.0);
        assert_eq!(ccc(&[0.2, 0.2], &[0.3, 0.3]).unwrap(), 0.0);
        assert_eq!(ccc(&[0.2, 0.2], &[0.1, 0.3]).unwrap(), 0.0);
        assert!(ccc(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((rmse(&[1.0, 2.0, 3.0], &[2.0, 4.0, 3.0]).unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(rmse(&[], &[]).is_err());
    }
}
