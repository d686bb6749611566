//! Cross-validation orchestration, synthetic studies and corpus reports.

pub mod analysis;
pub mod bench;
pub mod describe;
pub mod eval;
pub mod folds;
pub mod gold;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::mean_sd;

pub use analysis::{analyze, Analysis};
pub use bench::{TransferBenchmark, TransferOutcome};
pub use describe::{describe, Description};
pub use eval::{
    evaluate_with, fit_lasso, fit_network, fit_pair, items_from_golds, predict_item, prepare_items, run_eval, EvalConfig, EvalEcho, EvalItem,
    EvalOutput, EvalReport, EvalTask, FeatureSet, ItemScore, Learner, ModelKind, Prediction, Predictor, Summary, Target,
};
pub use folds::{make_folds, shuffled_partition, FoldPlan};
pub use gold::{agreement_table, build_golds, resample_records, AgreementTable};
pub use synth::{synthesize, SynthConfig, SynthDataset};

/// Per-item CCC differences between two evaluated models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub model: ModelKind,
    pub baseline: ModelKind,
    pub items: usize,
    pub mean_ccc_gain: f64,
    pub sd_ccc_gain: f64,
    pub mean_rmse_change: f64,
    /// Items where `model` has the higher CCC.
    pub wins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: Vec<EvalReport>,
    pub differences: Vec<PairedDifference>,
}

/// Side-by-side summary of reports that share a fold plan; each later
/// report is paired with every earlier one item by item.
pub fn compare(reports: Vec<EvalReport>) -> Result<Comparison> {
    let mut differences = Vec::new();
    for (j, later) in reports.iter().enumerate() {
        for earlier in &reports[..j] {
            let keys = |r: &EvalReport| r.rows.iter().map(|x| (x.fold, x.media_id.clone())).collect::<Vec<_>>();
            if keys(later) != keys(earlier) {
                return Err(Error::Invalid(format!(
                    "{} and {} were not evaluated on the same folds",
                    later.config.model, earlier.config.model
                )));
            }
            let gains: Vec<f64> = later.rows.iter().zip(&earlier.rows).map(|(a, b)| a.ccc - b.ccc).collect();
            let rmse: Vec<f64> = later.rows.iter().zip(&earlier.rows).map(|(a, b)| a.rmse - b.rmse).collect();
            let (mean_ccc_gain, sd_ccc_gain) = mean_sd(&gains);
            differences.push(PairedDifference {
                model: later.config.model,
                baseline: earlier.config.model,
                items: gains.len(),
                mean_ccc_gain,
                sd_ccc_gain,
                mean_rmse_change: mean_sd(&rmse).0,
                wins: gains.iter().filter(|g| **g > 0.0).count(),
            });
        }
    }
    Ok(Comparison { reports, differences })
}
