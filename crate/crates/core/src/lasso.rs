//! L1-regularized linear regression by cyclic coordinate descent, with
//! cross-validated regularization strength and coefficient-based feature
//! importance.
//!
//! The objective is `(1/(2N))·‖y − Xβ − b‖² + alpha·‖β‖₁` over z-scored
//! columns of X. Coefficients are reported in the original feature units.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::folds::shuffled_partition;
use crate::preprocess::ZScore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// Stop when the largest coordinate update in a sweep is below this
    /// (standardized units).
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig { tol: 1e-7, max_sweeps: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub feature_names: Vec<String>,
    pub standardization: ZScore,
    /// Coefficients on the z-scored design, as optimized.
    pub standardized_coefficients: Vec<f64>,
    pub sweeps: usize,
}

impl LassoModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict_row(r)).collect()
    }
}

/// The centered, standardized least-squares problem the solver works on.
#[derive(Debug, Clone)]
pub struct StandardizedProblem {
    /// Column-major z-scored design; columns with zero spread are all zero.
    pub columns: Vec<Vec<f64>>,
    pub y_centered: Vec<f64>,
    pub y_mean: f64,
    pub scaling: ZScore,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub beta: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective value after each sweep.
    pub history: Vec<f64>,
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

impl StandardizedProblem {
    pub fn new(x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
        }
        if x.len() < 2 {
            return Err(Error::EmptyInput("lasso needs at least 2 rows"));
        }
        if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("lasso design"));
        }
        let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let scaling = ZScore::fit_rows(&rows)?;
        let d = scaling.dim();
        let n = x.len();
        let mut columns = vec![vec![0.0; n]; d];
        for (i, r) in x.iter().enumerate() {
            for j in 0..d {
                if scaling.sd[j] > 0.0 {
                    columns[j][i] = (r[j] - scaling.mean[j]) / scaling.sd[j];
                }
            }
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let y_centered = y.iter().map(|v| v - y_mean).collect();
        Ok(StandardizedProblem { columns, y_centered, y_mean, scaling })
    }

    pub fn n(&self) -> usize {
        self.y_centered.len()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = self.y_centered.clone();
        for (col, b) in self.columns.iter().zip(beta) {
            if *b != 0.0 {
                for (ri, zi) in r.iter_mut().zip(col) {
                    *ri -= zi * b;
                }
            }
        }
        r
    }

    /// `(1/N)·Zᵀ·residual` for every column.
    pub fn correlations(&self, beta: &[f64]) -> Vec<f64> {
        let r = self.residual(beta);
        let n = self.n() as f64;
        self.columns.iter().map(|c| c.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n).collect()
    }

    pub fn objective(&self, beta: &[f64], alpha: f64) -> f64 {
        let r = self.residual(beta);
        let rss: f64 = r.iter().map(|v| v * v).sum();
        rss / (2.0 * self.n() as f64) + alpha * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Smallest alpha at which every coefficient is zero.
    pub fn alpha_max(&self) -> f64 {
        self.correlations(&vec![0.0; self.dim()]).into_iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn solve(&self, alpha: f64, cfg: &LassoConfig) -> Solution {
        let n = self.n() as f64;
        let d = self.dim();
        let mut beta = vec![0.0; d];
        let mut r = self.y_centered.clone();
        // Squared column norms over N: 1 for live columns, 0 for flat ones.
        let norms: Vec<f64> = self.columns.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / n).collect();
        let mut history = Vec::new();
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < cfg.max_sweeps {
            sweeps += 1;
            let mut max_delta = 0.0f64;
            for j in 0..d {
                if norms[j] == 0.0 {
                    continue;
                }
                let col = &self.columns[j];
                let rho = col.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n + norms[j] * beta[j];
                let new = soft_threshold(rho, alpha) / norms[j];
                let delta = new - beta[j];
                if delta != 0.0 {
                    for (ri, zi) in r.iter_mut().zip(col) {
                        *ri -= zi * delta;
                    }
                    beta[j] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            let rss: f64 = r.iter().map(|v| v * v).sum();
            history.push(rss / (2.0 * n) + alpha * beta.iter().map(|b| b.abs()).sum::<f64>());
            if max_delta < cfg.tol {
                converged = true;
                break;
            }
        }
        Solution { beta, sweeps, converged, history }
    }

    /// Largest violation of the optimality conditions at `beta`.
    pub fn kkt_violation(&self, beta: &[f64], alpha: f64) -> f64 {
        let g = self.correlations(beta);
        g.iter()
            .zip(beta)
            .zip(&self.columns)
            .filter(|(_, col)| col.iter().any(|v| *v != 0.0))
            .map(|((g, b), _)| {
                if *b == 0.0 {
                    (g.abs() - alpha).max(0.0)
                } else {
                    (g - alpha * b.signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    fn to_model(&self, sol: &Solution, alpha: f64, names: &[String]) -> LassoModel {
        let coefficients: Vec<f64> = sol
            .beta
            .iter()
            .zip(&self.scaling.sd)
            .map(|(b, sd)| if *sd > 0.0 { b / sd } else { 0.0 })
            .collect();
        let intercept = self.y_mean
            - coefficients.iter().zip(&self.scaling.mean).map(|(b, m)| b * m).sum::<f64>();
        LassoModel {
            coefficients,
            intercept,
            alpha,
            feature_names: names.to_vec(),
            standardization: self.scaling.clone(),
            standardized_coefficients: sol.beta.clone(),
            sweeps: sol.sweeps,
        }
    }
}

fn default_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// Fits at one alpha. `NotConverged` carries the last iterate.
pub fn lasso_fit(
    x: &[Vec<f64>],
    y: &[f64],
    names: Option<&[String]>,
    alpha: f64,
    cfg: &LassoConfig,
) -> Result<LassoModel> {
    if !(alpha >= 0.0) {
        return Err(Error::Invalid(format!("alpha {alpha} must be >= 0")));
    }
    let problem = StandardizedProblem::new(x, y)?;
    let names = match names {
        Some(n) if n.len() != problem.dim() => {
            return Err(Error::ShapeMismatch(format!("{} names for {} features", n.len(), problem.dim())))
        }
        Some(n) => n.to_vec(),
        None => default_names(problem.dim()),
    };
    let sol = problem.solve(alpha, cfg);
    let model = problem.to_model(&sol, alpha, &names);
    if sol.converged {
        Ok(model)
    } else {
        Err(Error::NotConverged { sweeps: sol.sweeps, best: Box::new(model) })
    }
}

/// `count` log-spaced values from alpha_max down to alpha_max·1e-4.
pub fn default_alpha_grid(x: &[Vec<f64>], y: &[f64], count: usize) -> Result<Vec<f64>> {
    let amax = StandardizedProblem::new(x, y)?.alpha_max();
    if amax == 0.0 || count == 0 {
        return Ok(vec![amax.max(f64::MIN_POSITIVE)]);
    }
    if count == 1 {
        return Ok(vec![amax]);
    }
    let step = (1e-4f64).ln() / (count - 1) as f64;
    Ok((0..count).map(|i| amax * (step * i as f64).exp()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_alpha: f64,
    /// `(alpha, mean validation MSE)` in descending alpha order.
    pub path: Vec<(f64, f64)>,
    pub model: LassoModel,
}

/// Selects alpha by k-fold validation MSE (ties go to the larger alpha) and
/// refits on all rows.
pub fn lasso_cv(
    x: &[Vec<f64>],
    y: &[f64],
    names: Option<&[String]>,
    alpha_grid: &[f64],
    k: usize,
    seed: u64,
    cfg: &LassoConfig,
) -> Result<CvResult> {
    if alpha_grid.is_empty() {
        return Err(Error::EmptyInput("alpha grid"));
    }
    if alpha_grid.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Invalid("alpha grid values must be positive".into()));
    }
    if k < 2 {
        return Err(Error::Invalid(format!("k = {k}; need at least 2 folds")));
    }
    if x.len() < k {
        return Err(Error::TooFewItems { needed: k, got: x.len() });
    }
    let mut grid = alpha_grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();

    let folds = shuffled_partition(x.len(), k, seed);
    let splits: Vec<(Vec<usize>, &Vec<usize>)> = folds
        .iter()
        .enumerate()
        .map(|(f, val)| {
            let train = folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
            (train, val)
        })
        .collect();

    let path: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&alpha| {
            let mut total = 0.0;
            for (train, val) in &splits {
                let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
                let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                let model = lasso_fit(&xt, &yt, None, alpha, cfg)?;
                let mse = val.iter().map(|&i| (model.predict_row(&x[i]) - y[i]).powi(2)).sum::<f64>()
                    / val.len() as f64;
                total += mse;
            }
            Ok((alpha, total / splits.len() as f64))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = path[0];
    for &(alpha, mse) in &path[1..] {
        if mse < best.1 - 1e-12 * best.1.abs().max(1e-300) {
            best = (alpha, mse);
        }
    }
    let model = lasso_fit(x, y, names, best.0, cfg)?;
    Ok(CvResult { best_alpha: best.0, path, model })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_abs_coefficient: f64,
    /// Sign of the mean signed coefficient: -1, 0 or 1.
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub ranked: Vec<FeatureImportance>,
}

/// Averages absolute coefficients across fold models and ranks features.
pub fn importance(models: &[LassoModel]) -> Result<ImportanceReport> {
    let Some(first) = models.first() else {
        return Err(Error::EmptyInput("no models"));
    };
    if models.iter().any(|m| m.feature_names != first.feature_names) {
        return Err(Error::NameMismatch);
    }
    let k = models.len() as f64;
    let mut ranked: Vec<FeatureImportance> = first
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mean_abs = models.iter().map(|m| m.coefficients[j].abs()).sum::<f64>() / k;
            let mean = models.iter().map(|m| m.coefficients[j]).sum::<f64>() / k;
            let sign = if mean.abs() <= 1e-15 * mean_abs.max(1.0) { 0 } else { mean.signum() as i8 };
            FeatureImportance { feature: name.clone(), mean_abs_coefficient: mean_abs, sign }
        })
        .collect();
    ranked.sort_by(|a, b| b.mean_abs_coefficient.total_cmp(&a.mean_abs_coefficient));
    Ok(ImportanceReport { ranked })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Columns with zero mean, unit population variance, mutually orthogonal.
    fn hadamard_design() -> Vec<Vec<f64>> {
        vec![
            vec![1.0, 1.0, 1.0],
            vec![1.0, -1.0, -1.0],
            vec![-1.0, 1.0, -1.0],
            vec![-1.0, -1.0, 1.0],
        ]
    }

    #[test]
    fn null_model_above_alpha_max() {
        let x = hadamard_design();
        let y = [1.0, 2.0, 0.5, -1.0];
        let amax = StandardizedProblem::new(&x, &y).unwrap().alpha_max();
        let m = lasso_fit(&x, &y, None, amax * 1.0001, &LassoConfig::default()).unwrap();
        assert!(m.coefficients.iter().all(|b| *b == 0.0));
        assert!((m.intercept - 0.625).abs() < 1e-12);
    }

    #[test]
    fn soft_thresholding_on_orthonormal_design() {
        let x = hadamard_design();
        let y = [1.0, 2.0, 0.5, -1.0];
        let ols: Vec<f64> = (0..3).map(|j| x.iter().zip(&y).map(|(r, v)| r[j] * v).sum::<f64>() / 4.0).collect();
        let alpha = 0.3;
        let m = lasso_fit(&x, &y, None, alpha, &LassoConfig::default()).unwrap();
        for j in 0..3 {
            let expected = ols[j].signum() * (ols[j].abs() - alpha).max(0.0);
            assert!((m.coefficients[j] - expected).abs() < 1e-8, "{j}: {} vs {expected}", m.coefficients[j]);
        }
    }

    #[test]
    fn single_value_grid() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i % 5) as f64]).collect();
        let y: Vec<f64> = (0..12).map(|i| i as f64 * 0.5).collect();
        let cv = lasso_cv(&x, &y, None, &[0.05], 3, 1, &LassoConfig::default()).unwrap();
        assert_eq!(cv.best_alpha, 0.05);
    }

    #[test]
    fn not_converged_reports_best() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i as f64).sin(), (i % 3) as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).cos()).collect();
        let cfg = LassoConfig { tol: 1e-15, max_sweeps: 1 };
        match lasso_fit(&x, &y, None, 1e-4, &cfg) {
            Err(Error::NotConverged { sweeps: 1, best }) => assert_eq!(best.coefficients.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite() {
        let x = vec![vec![1.0], vec![f64::NAN]];
        assert!(matches!(lasso_fit(&x, &[0.0, 1.0], None, 0.1, &LassoConfig::default()), Err(Error::NonFiniteInput(_))));
    }

    fn model(coefs: Vec<f64>) -> LassoModel {
        let d = coefs.len();
        LassoModel {
            coefficients: coefs.clone(),
            intercept: 0.0,
            alpha: 0.1,
            feature_names: default_names(d),
            standardization: ZScore { mean: vec![0.0; d], sd: vec![1.0; d] },
            standardized_coefficients: coefs,
            sweeps: 1,
        }
    }

    #[test]
    fn importance_examples() {
        let r = importance(&[model(vec![0.5, -2.0, 0.0])]).unwrap();
        let names: Vec<&str> = r.ranked.iter().map(|f| f.feature.as_str()).collect();
        assert_eq!(names, ["x1", "x0", "x2"]);
        assert_eq!(r.ranked[2].mean_abs_coefficient, 0.0);
        assert_eq!(r.ranked[0].sign, -1);

        let r = importance(&[model(vec![1.0, 0.0]), model(vec![-1.0, 0.0])]).unwrap();
        assert_eq!(r.ranked[0].feature, "x0");
        assert_eq!(r.ranked[0].mean_abs_coefficient, 1.0);
        assert_eq!(r.ranked[0].sign, 0);

        let mut other = model(vec![1.0, 0.0]);
        other.feature_names[1] = "zz".into();
        assert!(matches!(importance(&[model(vec![1.0, 0.0]), other]), Err(Error::NameMismatch)));
    }
}
