//! Goodness-of-fit, rank and contingency tests used to compare modalities,
//! interface modes and annotator groups.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::gems::{GemsLabel, NUM_LABELS};
use crate::metrics::pearson;
use crate::record::AnnotationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
    ChiSquareApprox,
    /// Asymptotic Kolmogorov distribution with a fully specified reference.
    KolmogorovAsymptotic,
    /// Reference parameters were estimated from the same data; the
    /// Kolmogorov p-value is only approximate (conservative).
    Lilliefors,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    pub method: TestMethod,
}

/// Ranks 1..=n with ties sharing their average rank. Also returns the sizes
/// of tie groups larger than one.
pub fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j hold ranks i+1..=j.
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Reference {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
}

impl Reference {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Reference::Normal { mean, sd } => 0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2)),
            Reference::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
        }
    }

    /// Normal reference with the sample mean and (N-1) standard deviation.
    pub fn normal_fitted(data: &[f64]) -> Result<Reference> {
        if data.len() < 2 {
            return Err(Error::EmptyInput("need two values to fit a normal"));
        }
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Reference::Normal { mean, sd: var.sqrt() })
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Reference::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Reference::Uniform { low, high } => low.is_finite() && high.is_finite() && high > low,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("bad reference distribution {self:?}")))
        }
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Theta-function form converges fast for small lambda.
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut s = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            s += (-(m * m) * pi2 / (8.0 * lambda * lambda)).exp();
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-16 {
                break;
            }
        }
        2.0 * s
    };
    p.clamp(0.0, 1.0)
}

/// One-sample KS test. `fitted` marks a reference whose parameters were
/// estimated from `data`.
pub fn ks_one_sample(data: &[f64], reference: &Reference, fitted: bool) -> Result<TestResult> {
    if data.is_empty() {
        return Err(Error::EmptyInput("ks test data"));
    }
    reference.validate()?;
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let f = reference.cdf(*x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    let p = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
    Ok(TestResult {
        statistic: d,
        p_value: p,
        df: None,
        method: if fitted { TestMethod::Lilliefors } else { TestMethod::KolmogorovAsymptotic },
    })
}

// ---------------------------------------------------------------------------
// Mann-Whitney U

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Pairs (x in group 1, y in group 2) with x > y, ties counting one half.
    pub u1: f64,
    pub u2: f64,
    /// `statistic` is `min(u1, u2)`; two-sided p-value.
    pub result: TestResult,
}

/// Largest pooled size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 10;

/// Null distribution counts of U for sizes (n1, n2): `counts[u]` is the
/// number of orderings producing U = u.
pub fn u_distribution(n1: usize, n2: usize) -> Vec<u64> {
    // f[i][j] over u, built by appending the largest element: if it belongs
    // to group 1 it beats all j elements of group 2.
    let max_u = n1 * n2;
    let mut table = vec![vec![Vec::<u64>::new(); n2 + 1]; n1 + 1];
    for i in 0..=n1 {
        for j in 0..=n2 {
            let mut f = vec![0u64; i * j + 1];
            if i == 0 || j == 0 {
                f[0] = 1;
            } else {
                for (u, slot) in f.iter_mut().enumerate() {
                    let from_x = if u >= j { table[i - 1][j].get(u - j).copied().unwrap_or(0) } else { 0 };
                    let from_y = table[i][j - 1].get(u).copied().unwrap_or(0);
                    *slot = from_x + from_y;
                }
            }
            table[i][j] = f;
        }
    }
    let out = std::mem::take(&mut table[n1][n2]);
    debug_assert_eq!(out.len(), max_u + 1);
    out
}

pub fn mann_whitney_u(group1: &[f64], group2: &[f64]) -> Result<MannWhitney> {
    if group1.is_empty() || group2.is_empty() {
        return Err(Error::EmptyInput("mann-whitney group"));
    }
    let (n1, n2) = (group1.len(), group2.len());
    let pooled: Vec<f64> = group1.iter().chain(group2).copied().collect();
    let (ranks, ties) = average_ranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let nn = (n1 * n2) as f64;
    let u2 = nn - u1;
    let mu = nn / 2.0;
    let n = n1 + n2;

    let result = if n <= EXACT_MAX_N && ties.is_empty() {
        let counts = u_distribution(n1, n2);
        let total: u64 = counts.iter().sum();
        let dev = (u1 - mu).abs();
        let extreme: u64 = counts
            .iter()
            .enumerate()
            .filter(|(u, _)| (*u as f64 - mu).abs() >= dev - 1e-9)
            .map(|(_, c)| *c)
            .sum();
        TestResult {
            statistic: u1.min(u2),
            p_value: (extreme as f64 / total as f64).min(1.0),
            df: None,
            method: TestMethod::Exact,
        }
    } else {
        let nf = n as f64;
        let var = nn / 12.0 * ((nf + 1.0) - tie_sum(&ties) / (nf * (nf - 1.0)));
        let p = if var <= 0.0 {
            1.0
        } else {
            let z = ((u1 - mu).abs() - 0.5).max(0.0) / var.sqrt();
            erfc(z / std::f64::consts::SQRT_2).min(1.0)
        };
        TestResult { statistic: u1.min(u2), p_value: p, df: None, method: TestMethod::NormalApprox }
    };
    Ok(MannWhitney { u1, u2, result })
}

// ---------------------------------------------------------------------------
// Kruskal-Wallis

fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(df / 2.0, x / 2.0).clamp(0.0, 1.0)
    }
}

pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::TooFewGroups { needed: 2, got: groups.len() });
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::EmptyInput("kruskal-wallis group"));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let (ranks, ties) = average_ranks(&pooled);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let df = (groups.len() - 1) as f64;
    let correction = 1.0 - tie_sum(&ties) / (n * n * n - n);
    let h = if correction <= 0.0 {
        0.0
    } else {
        ((12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction).max(0.0)
    };
    Ok(TestResult { statistic: h, p_value: chi_square_sf(h, df), df: Some(df), method: TestMethod::ChiSquareApprox })
}

// ---------------------------------------------------------------------------
// Contingency chi-square

pub fn chi_square_contingency(table: &[Vec<f64>]) -> Result<TestResult> {
    let r = table.len();
    let c = table.first().map_or(0, Vec::len);
    if r < 2 || c < 2 {
        return Err(Error::DegenerateTable(format!("{r}x{c} table; need at least 2x2")));
    }
    if table.iter().any(|row| row.len() != c) {
        return Err(Error::DegenerateTable("ragged rows".into()));
    }
    if table.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Invalid("counts must be finite and non-negative".into()));
    }
    let rows: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
    let cols: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    if rows.iter().chain(&cols).any(|s| *s <= 0.0) {
        return Err(Error::DegenerateTable("zero row or column total".into()));
    }
    let total: f64 = rows.iter().sum();
    let mut chi2 = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, obs) in row.iter().enumerate() {
            let expected = rows[i] * cols[j] / total;
            chi2 += (obs - expected) * (obs - expected) / expected;
        }
    }
    let df = ((r - 1) * (c - 1)) as f64;
    Ok(TestResult { statistic: chi2, p_value: chi_square_sf(chi2, df), df: Some(df), method: TestMethod::ChiSquareApprox })
}

// ---------------------------------------------------------------------------
// Label co-occurrence

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCorrelation {
    pub labels: Vec<String>,
    /// `matrix[i][j]`; `None` where either label's selection vector is constant.
    pub matrix: Vec<Vec<Option<f64>>>,
    /// Labels whose selection vector is constant (never or always chosen).
    pub absent: Vec<String>,
}

impl LabelCorrelation {
    pub fn get(&self, a: GemsLabel, b: GemsLabel) -> Option<f64> {
        self.matrix[a.index()][b.index()]
    }
}

/// Pearson correlation between binary label-selection vectors, one entry
/// per record.
pub fn label_cooccurrence(records: &[AnnotationRecord]) -> Result<LabelCorrelation> {
    if records.len() < 2 {
        return Err(Error::EmptyInput("need at least two records"));
    }
    let vectors: Vec<Vec<f64>> = GemsLabel::all()
        .map(|l| records.iter().map(|r| f64::from(u8::from(r.gems_labels.contains(&l)))).collect())
        .collect();
    let constant: Vec<bool> = vectors.iter().map(|v| v.iter().all(|x| *x == v[0])).collect();
    let mut matrix = vec![vec![None; NUM_LABELS]; NUM_LABELS];
    for i in 0..NUM_LABELS {
        if constant[i] {
            continue;
        }
        matrix[i][i] = Some(1.0);
        for j in (i + 1)..NUM_LABELS {
            if constant[j] {
                continue;
            }
            let r = pearson(&vectors[i], &vectors[j])?;
            matrix[i][j] = Some(r);
            matrix[j][i] = Some(r);
        }
    }
    Ok(LabelCorrelation {
        labels: GemsLabel::all().map(|l| l.term().to_string()).collect(),
        matrix,
        absent: GemsLabel::all().filter(|l| constant[l.index()]).map(|l| l.term().to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gems::gems_lookup;
    use crate::record::{AnnotatorProfile, Gender, Modality, OverlayMode};

    #[test]
    fn ranks_average_ties() {
        let (r, t) = average_ranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, vec![2]);
    }

    #[test]
    fn ks_examples() {
        let std_normal = Reference::Normal { mean: 0.0, sd: 1.0 };
        assert!((ks_one_sample(&[0.0], &std_normal, false).unwrap().statistic - 0.5).abs() < 1e-12);
        let uni = Reference::Uniform { low: 0.0, high: 1.0 };
        assert!((ks_one_sample(&[0.25, 0.75], &uni, false).unwrap().statistic - 0.25).abs() < 1e-12);
        for n in [1usize, 3, 10, 40] {
            let data: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
            let r = ks_one_sample(&data, &uni, false).unwrap();
            assert!((r.statistic - 0.5 / n as f64).abs() < 1e-12);
        }
        assert!(ks_one_sample(&[], &uni, false).is_err());
    }

    #[test]
    fn kolmogorov_sf_reference_values() {
        // Critical values of the limiting distribution.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.2238) - 0.10).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        // Both series agree near the switch point.
        let l = 1.18;
        let a = kolmogorov_sf(l - 1e-12);
        let b = kolmogorov_sf(l);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn ks_marks_fitted_reference() {
        let data = [0.1, 0.4, -0.3, 0.2, 0.0];
        let r = ks_one_sample(&data, &Reference::normal_fitted(&data).unwrap(), true).unwrap();
        assert_eq!(r.method, TestMethod::Lilliefors);
    }

    #[test]
    fn mann_whitney_examples() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u1, 0.0);
        assert_eq!(r.result.method, TestMethod::Exact);
        assert!((r.result.p_value - 1.0 / 3.0).abs() < 1e-12);
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.result.statistic, 0.0);
        assert!((r.result.p_value - 0.1).abs() < 1e-12);
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.u1, r.u2), (4.5, 4.5));
        assert!(r.result.p_value >= 0.99);
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn u_distribution_small() {
        assert_eq!(u_distribution(2, 2), vec![1, 1, 2, 1, 1]);
        assert_eq!(u_distribution(1, 3), vec![1, 1, 1, 1]);
        assert_eq!(u_distribution(3, 3).iter().sum::<u64>(), 20);
    }

    #[test]
    fn mann_whitney_normal_branch() {
        let a: Vec<f64> = (0..8).map(f64::from).collect();
        let b: Vec<f64> = (4..12).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.result.method, TestMethod::NormalApprox);
        assert_eq!(r.u1 + r.u2, 64.0);
        assert!(r.result.p_value > 0.0 && r.result.p_value < 0.1);
    }

    #[test]
    fn kruskal_examples() {
        let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]).unwrap();
        assert!((r.statistic - 7.2).abs() < 1e-12);
        assert_eq!(r.df, Some(2.0));
        // Survival of chi-square(2) is exp(-x/2).
        assert!((r.p_value - (-3.6f64).exp()).abs() < 1e-10);
        let r = kruskal_wallis(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = kruskal_wallis(&[vec![5.0, 5.0], vec![5.0]]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(matches!(kruskal_wallis(&[vec![1.0]]), Err(Error::TooFewGroups { .. })));
    }

    #[test]
    fn kruskal_two_groups_is_squared_z() {
        let a = [0.3, 1.7, 2.2, 5.1, 0.9];
        let b = [2.8, 3.3, 4.6, 6.0, 7.2, 0.1];
        let h = kruskal_wallis(&[a.to_vec(), b.to_vec()]).unwrap().statistic;
        let mw = mann_whitney_u(&a, &b).unwrap();
        let (n1, n2) = (5.0, 6.0);
        let z = (mw.u1 - n1 * n2 / 2.0) / (n1 * n2 * (n1 + n2 + 1.0) / 12.0f64).sqrt();
        assert!((h - z * z).abs() < 1e-12);
    }

    #[test]
    fn chi_square_examples() {
        let r = chi_square_contingency(&[vec![10.0, 10.0], vec![10.0, 10.0]]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = chi_square_contingency(&[vec![10.0, 20.0], vec![20.0, 10.0]]).unwrap();
        assert!((r.statistic - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.df, Some(1.0));
        let r = chi_square_contingency(&[vec![5.0, 0.0], vec![0.0, 5.0]]).unwrap();
        assert!((r.statistic - 10.0).abs() < 1e-12);
        // Survival of chi-square(1) at 10 = erfc(sqrt(5)).
        assert!((r.p_value - erfc(5.0f64.sqrt())).abs() < 1e-12);
        assert!(matches!(
            chi_square_contingency(&[vec![1.0, 0.0], vec![2.0, 0.0]]),
            Err(Error::DegenerateTable(_))
        ));
    }

    fn rec(labels: &[&str]) -> AnnotationRecord {
        AnnotationRecord {
            participant_id: "p".into(),
            media_id: "m".into(),
            modality: Modality::Music,
            overlay_mode: OverlayMode::NotApplicable,
            samples: vec![],
            familiar: false,
            gems_labels: labels.iter().map(|l| gems_lookup(l).unwrap()).collect(),
            profile: AnnotatorProfile { gender: Gender::Male, years_musical_training: 0, age: None },
        }
    }

    #[test]
    fn cooccurrence() {
        let recs = vec![
            rec(&["Sad", "Tearful", "Calm"]),
            rec(&["Joyful", "Calm"]),
            rec(&["Sad", "Tearful", "Calm"]),
            rec(&["Energetic", "Calm"]),
        ];
        let m = label_cooccurrence(&recs).unwrap();
        let l = |s| gems_lookup(s).unwrap();
        assert!((m.get(l("Sad"), l("Tearful")).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.get(l("Sad"), l("Sad")), Some(1.0));
        assert_eq!(m.get(l("Calm"), l("Sad")), None);
        assert!(m.absent.contains(&"Calm".to_string()));
        assert!(m.absent.contains(&"Moved".to_string()));
        assert!(m.get(l("Sad"), l("Joyful")).unwrap() < 0.0);
    }
}
