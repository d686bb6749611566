//! Synthetic transfer benchmark: unimodal donors are trained on
//! isolated-modality ratings of one set of items, then early fusion, late
//! fusion and the transferred model are cross-validated on the audiovisual
//! ratings of a disjoint set.

use serde::{Deserialize, Serialize};

use super::eval::{fit_network, prepare_items, run_eval, EvalConfig, EvalItem, EvalTask, FeatureSet, ModelKind, Target};
use super::folds::make_folds;
use super::synth::{synthesize, SynthConfig};
use crate::error::Result;
use crate::neural::{Architecture, TrainConfig};
use crate::preprocess::ResampleConfig;
use crate::record::{Dimension, Modality};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferBenchmark {
    pub donor_items: usize,
    pub eval_items: usize,
    pub folds: usize,
    pub dimension: Dimension,
    pub feature_noise_sd: f64,
    pub eval: EvalConfig,
}

impl Default for TransferBenchmark {
    fn default() -> Self {
        TransferBenchmark {
            donor_items: 60,
            eval_items: 20,
            folds: 5,
            dimension: Dimension::Arousal,
            feature_noise_sd: 0.5,
            eval: EvalConfig {
                hidden: 16,
                head_hidden: 16,
                train: TrainConfig { learning_rate: 1e-3, batch_size: 32, max_epochs: 15, patience: 5, seed: 0 },
                ..EvalConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferOutcome {
    pub seed: u64,
    pub a1_ccc: f64,
    pub a2_ccc: f64,
    pub pair_ccc: f64,
}

impl TransferBenchmark {
    pub fn run(&self, seed: u64) -> Result<TransferOutcome> {
        let mut sc = SynthConfig { n_media: self.donor_items + self.eval_items, seed, ..SynthConfig::default() };
        sc.audio.noise_sd = self.feature_noise_sd;
        sc.visual.noise_sd = self.feature_noise_sd;
        let data = synthesize(&sc)?;
        let is_donor = |id: &str| id < format!("s{:03}", self.donor_items).as_str();
        let (donor_recs, eval_recs): (Vec<_>, Vec<_>) =
            data.records.iter().cloned().partition(|r| is_donor(&r.media_id));

        let mut cfg = self.eval.clone();
        cfg.seed = seed;
        cfg.train.seed = seed;
        let rc = ResampleConfig::default();
        let dim = self.dimension;
        let donor = |modality, arch, salt: u64| -> Result<_> {
            let items = prepare_items(&donor_recs, &data.audio, &data.visual, modality, dim, &rc)?;
            let refs: Vec<&EvalItem> = items.iter().collect();
            fit_network(&refs, arch, Target::Main, &cfg, seed ^ salt)
        };
        let audio_donor = donor(Modality::Music, Architecture::UnimodalAudio, 11)?;
        let visual_donor = donor(Modality::Visual, Architecture::UnimodalVisual, 12)?;

        let items = prepare_items(&eval_recs, &data.audio, &data.visual, Modality::Audiovisual, dim, &rc)?;
        let ids: Vec<String> = items.iter().map(|i| i.media_id.clone()).collect();
        let plan = make_folds(&ids, self.folds, seed)?;
        let score = |model| -> Result<f64> {
            let task = EvalTask {
                modality: Modality::Audiovisual,
                dimension: dim,
                feature_set: FeatureSet::Audiovisual,
                model,
                donors: Some((audio_donor.clone(), visual_donor.clone())),
            };
            Ok(run_eval(&items, &task, &plan, &cfg)?.report.ccc.mean)
        };
        Ok(TransferOutcome {
            seed,
            a1_ccc: score(ModelKind::A1)?,
            a2_ccc: score(ModelKind::A2)?,
            pair_ccc: score(ModelKind::Pair)?,
        })
    }
}
