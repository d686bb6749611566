//! Sequence regressors: a from-scratch two-layer LSTM block, unimodal and
//! fused (early, late, transferred) architectures, Adam training, and
//! checkpoint files.

pub mod adam;
pub mod lstm;
pub mod network;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::preprocess::ZScore;

pub use adam::Adam;
pub use lstm::{LstmBlock, LstmLayer};
pub use network::{build_a1, build_a2, Architecture, Example, ModelSpec, Params, Regressor};
pub use train::{fine_tune, init_rng, train, TrainConfig, TrainOutcome};

pub const CHECKPOINT_FORMAT: &str = "muvi-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A network together with the input standardization it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub network: Regressor,
    /// One set of statistics per block input.
    pub normalization: Vec<ZScore>,
    pub seed: u64,
}

impl TrainedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.network.spec
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let ck = Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, model: model.clone() };
    // Parameters are written at full precision so a reload is bit-exact.
    let mut s = serde_json::to_string(&ck)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(Error::Invalid(format!(
            "{}: unsupported checkpoint {} v{}",
            path.display(),
            ck.format,
            ck.version
        )));
    }
    ck.model.network.spec.validate()?;
    Ok(ck.model)
}

/// Builds a late-fusion model whose LSTM blocks are copies of the donors'
/// blocks; the head is freshly initialized from `seed`. Input statistics are
/// inherited from the donors so the copied blocks see inputs on the scale
/// they were trained on. `expected_dims` are the audio and visual widths the
/// caller will feed.
pub fn build_pair(
    audio_donor: &TrainedModel,
    visual_donor: &TrainedModel,
    expected_dims: (usize, usize),
    head_hidden: usize,
    seed: u64,
) -> Result<TrainedModel> {
    let (a, v) = (audio_donor.spec(), visual_donor.spec());
    if a.architecture != Architecture::UnimodalAudio || v.architecture != Architecture::UnimodalVisual {
        return Err(Error::ShapeMismatch(format!(
            "donors must be unimodal audio and visual models, got {:?} and {:?}",
            a.architecture, v.architecture
        )));
    }
    if a.hidden != v.hidden {
        return Err(Error::ShapeMismatch(format!("donor hidden sizes differ: {} vs {}", a.hidden, v.hidden)));
    }
    if a.seq_len != v.seq_len {
        return Err(Error::ShapeMismatch(format!("donor sequence lengths differ: {} vs {}", a.seq_len, v.seq_len)));
    }
    if (a.input_dims[0], v.input_dims[0]) != expected_dims {
        return Err(Error::ShapeMismatch(format!(
            "donor input widths ({}, {}) do not match features ({}, {})",
            a.input_dims[0], v.input_dims[0], expected_dims.0, expected_dims.1
        )));
    }
    let spec = ModelSpec {
        architecture: Architecture::Pair,
        input_dims: vec![a.input_dims[0], v.input_dims[0]],
        seq_len: a.seq_len,
        hidden: a.hidden,
        head_hidden,
        dropout: a.dropout,
    };
    spec.validate()?;
    let mut rng = init_rng(seed);
    let head = Regressor::head_layers(&spec, |i, o, act| network::Dense::init(i, o, act, &mut rng));
    let blocks = vec![audio_donor.network.params.blocks[0].clone(), visual_donor.network.params.blocks[0].clone()];
    let normalization = vec![audio_donor.normalization[0].clone(), visual_donor.normalization[0].clone()];
    Ok(TrainedModel { network: Regressor { spec, params: Params { blocks, head } }, normalization, seed })
}
