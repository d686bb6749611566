//! Cross-validated evaluation over media items.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{shuffled_partition, FoldPlan};
use super::gold::build_golds;
use crate::error::{Error, Result};
use crate::lasso::{default_alpha_grid, lasso_cv, LassoConfig, LassoModel};
use crate::metrics::{metric_pair, mean_sd};
use crate::neural::{
    build_pair, fine_tune, train, Architecture, Example, ModelSpec, Regressor, TrainConfig, TrainedModel,
};
use crate::preprocess::{ResampleConfig, ZScore};
use crate::record::{AnnotationRecord, Channel, Dimension, FeatureMatrix, GoldStandard, Modality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Audio,
    Visual,
    Audiovisual,
}

impl FeatureSet {
    pub fn channels(self) -> Vec<Channel> {
        match self {
            FeatureSet::Audio => vec![Channel::Audio],
            FeatureSet::Visual => vec![Channel::Visual],
            FeatureSet::Audiovisual => vec![Channel::Audio, Channel::Visual],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Audio => "audio",
            FeatureSet::Visual => "visual",
            FeatureSet::Audiovisual => "audiovisual",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "audio" => Ok(FeatureSet::Audio),
            "visual" => Ok(FeatureSet::Visual),
            "audiovisual" | "both" => Ok(FeatureSet::Audiovisual),
            _ => Err(Error::Invalid(format!("unknown feature set {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lasso,
    Unimodal,
    A1,
    A2,
    Pair,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lasso => "lasso",
            ModelKind::Unimodal => "unimodal",
            ModelKind::A1 => "a1",
            ModelKind::A2 => "a2",
            ModelKind::Pair => "pair",
        }
    }

    /// Network architecture for this kind and feature set.
    pub fn architecture(self, feature_set: FeatureSet) -> Result<Option<Architecture>> {
        Ok(match (self, feature_set) {
            (ModelKind::Lasso, _) => None,
            (ModelKind::Unimodal, FeatureSet::Audio) => Some(Architecture::UnimodalAudio),
            (ModelKind::Unimodal, FeatureSet::Visual) => Some(Architecture::UnimodalVisual),
            (ModelKind::Unimodal, FeatureSet::Audiovisual) => {
                return Err(Error::Invalid("unimodal models take the audio or visual feature set".into()))
            }
            (ModelKind::A1, _) => Some(Architecture::A1),
            (ModelKind::A2, _) => Some(Architecture::A2),
            (ModelKind::Pair, _) => Some(Architecture::Pair),
        })
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" => Ok(ModelKind::Lasso),
            "unimodal" => Ok(ModelKind::Unimodal),
            "a1" => Ok(ModelKind::A1),
            "a2" => Ok(ModelKind::A2),
            "pair" => Ok(ModelKind::Pair),
            _ => Err(Error::Invalid(format!("unknown model kind {s:?}"))),
        }
    }
}

/// One media item ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub media_id: String,
    pub audio: Option<FeatureMatrix>,
    pub visual: Option<FeatureMatrix>,
    pub gold: GoldStandard,
    /// Music-only and visual-only golds for the same dimension, used to
    /// train transfer donors.
    pub isolated: Option<(GoldStandard, GoldStandard)>,
}

impl EvalItem {
    fn channel(&self, c: Channel) -> Result<&FeatureMatrix> {
        match c {
            Channel::Audio => self.audio.as_ref(),
            Channel::Visual => self.visual.as_ref(),
        }
        .ok_or_else(|| Error::Invalid(format!("{}: no {c} features", self.media_id)))
    }

    /// Steps shared by the gold and every requested channel.
    fn steps(&self, channels: &[Channel]) -> Result<usize> {
        let mut n = self.gold.values.len();
        for c in channels {
            n = n.min(self.channel(*c)?.len());
        }
        Ok(n)
    }

    /// Rows for one block: the channels' features concatenated in order.
    fn rows(&self, channels: &[Channel], n: usize) -> Result<Vec<Vec<f64>>> {
        let mats = channels.iter().map(|c| self.channel(*c)).collect::<Result<Vec<_>>>()?;
        Ok((0..n).map(|k| mats.iter().flat_map(|m| m.values[k].iter().copied()).collect()).collect())
    }

    fn feature_names(&self, channels: &[Channel]) -> Result<Vec<String>> {
        let mut names = Vec::new();
        for c in channels {
            names.extend(self.channel(*c)?.feature_names.iter().cloned());
        }
        Ok(names)
    }
}

/// Joins gold standards built from `records` with feature matrices.
pub fn prepare_items(
    records: &[AnnotationRecord],
    audio: &[FeatureMatrix],
    visual: &[FeatureMatrix],
    modality: Modality,
    dimension: Dimension,
    resample: &ResampleConfig,
) -> Result<Vec<EvalItem>> {
    let golds: Vec<GoldStandard> = build_golds(records, resample)?.into_values().map(|r| r.gold).collect();
    items_from_golds(&golds, audio, visual, modality, dimension)
}

/// One item per gold in (`modality`, `dimension`), with the music-only and
/// visual-only golds of the same item attached when present. A missing
/// feature matrix is left as `None` and reported when a model needs it.
pub fn items_from_golds(
    golds: &[GoldStandard],
    audio: &[FeatureMatrix],
    visual: &[FeatureMatrix],
    modality: Modality,
    dimension: Dimension,
) -> Result<Vec<EvalItem>> {
    let by_id = |mats: &[FeatureMatrix], id: &str| mats.iter().find(|m| m.media_id == id).cloned();
    let mut items = Vec::new();
    for g in golds.iter().filter(|g| g.modality == modality && g.dimension == dimension) {
        let iso = |m: Modality| {
            golds.iter().find(|k| k.media_id == g.media_id && k.modality == m && k.dimension == dimension).cloned()
        };
        items.push(EvalItem {
            media_id: g.media_id.clone(),
            audio: by_id(audio, &g.media_id),
            visual: by_id(visual, &g.media_id),
            gold: g.clone(),
            isolated: iso(Modality::Music).zip(iso(Modality::Visual)),
        });
    }
    if items.is_empty() {
        return Err(Error::EmptyInput("no items annotated in the requested modality"));
    }
    items.sort_by(|a, b| a.media_id.cmp(&b.media_id));
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub seq_len: usize,
    pub hidden: usize,
    pub head_hidden: usize,
    pub dropout: f64,
    pub train: TrainConfig,
    /// Share of each fold's training items held back for early stopping.
    pub validation_fraction: f64,
    pub lasso: LassoConfig,
    pub lasso_alphas: usize,
    pub lasso_folds: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seq_len: 4,
            hidden: 256,
            head_hidden: 256,
            dropout: 0.2,
            train: TrainConfig::default(),
            validation_fraction: 0.2,
            lasso: LassoConfig::default(),
            lasso_alphas: 50,
            lasso_folds: 5,
            seed: 0,
        }
    }
}

/// Predictions for steps `first..first + values.len()` of an item.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub first: usize,
    pub values: Vec<f64>,
}

pub trait Predictor: Send + Sync {
    fn predict(&self, item: &EvalItem) -> Result<Prediction>;

    fn lasso_model(&self) -> Option<&LassoModel> {
        None
    }

    fn network(&self) -> Option<&TrainedModel> {
        None
    }
}

/// Produces one predictor per fold from that fold's training items.
pub trait Learner: Sync {
    fn fit(&self, fold: usize, train: &[&EvalItem]) -> Result<Box<dyn Predictor>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEcho {
    pub modality: Modality,
    pub dimension: Dimension,
    pub feature_set: FeatureSet,
    pub model: ModelKind,
    pub seed: u64,
    pub folds: usize,
    pub settings: Option<EvalConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub fold: usize,
    pub media_id: String,
    pub steps: usize,
    pub rmse: f64,
    pub ccc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let (mean, sd) = mean_sd(values);
        Summary { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalEcho,
    /// Ordered by fold, then media id.
    pub rows: Vec<ItemScore>,
    pub rmse: Summary,
    pub ccc: Summary,
}

impl EvalReport {
    pub fn from_rows(config: EvalEcho, mut rows: Vec<ItemScore>) -> EvalReport {
        rows.sort_by(|a, b| (a.fold, &a.media_id).cmp(&(b.fold, &b.media_id)));
        let rmse = Summary::of(&rows.iter().map(|r| r.rmse).collect::<Vec<_>>());
        let ccc = Summary::of(&rows.iter().map(|r| r.ccc).collect::<Vec<_>>());
        EvalReport { config, rows, rmse, ccc }
    }
}

pub struct EvalOutput {
    pub report: EvalReport,
    /// One fitted predictor per fold, in fold order.
    pub predictors: Vec<Box<dyn Predictor>>,
}

fn in_fold(fold: usize, media_id: &str) -> impl FnOnce(Error) -> Error + '_ {
    move |e| Error::InFold { fold, media_id: media_id.to_string(), source: Box::new(e) }
}

fn score(fold: usize, item: &EvalItem, p: &Prediction) -> Result<ItemScore> {
    let end = p.first + p.values.len();
    let truth = item.gold.values.get(p.first..end).ok_or_else(|| {
        Error::ShapeMismatch(format!("prediction covers {}..{end} of {} steps", p.first, item.gold.values.len()))
    })?;
    let m = metric_pair(&p.values, truth)?;
    Ok(ItemScore { fold, media_id: item.media_id.clone(), steps: truth.len(), rmse: m.rmse, ccc: m.ccc })
}

/// Fits `learner` on each fold's training items and scores the held-out
/// items. Folds run in parallel; rows are assembled in (fold, media) order.
pub fn evaluate_with(items: &[EvalItem], plan: &FoldPlan, learner: &dyn Learner, config: EvalEcho) -> Result<EvalOutput> {
    let index: BTreeMap<&str, &EvalItem> = items.iter().map(|i| (i.media_id.as_str(), i)).collect();
    if index.len() != items.len() {
        return Err(Error::Invalid("duplicate media ids among evaluation items".into()));
    }
    for id in plan.folds.iter().flatten() {
        if !index.contains_key(id.as_str()) {
            return Err(Error::Invalid(format!("fold plan names unknown media {id}")));
        }
    }
    let per_fold: Vec<(Vec<ItemScore>, Box<dyn Predictor>)> = (0..plan.folds.len())
        .into_par_iter()
        .map(|fold| {
            let train_items: Vec<&EvalItem> = plan.train_ids(fold).iter().map(|id| index[id.as_str()]).collect();
            let predictor = learner.fit(fold, &train_items).map_err(in_fold(fold, "(training)"))?;
            let mut rows = Vec::with_capacity(plan.folds[fold].len());
            for id in &plan.folds[fold] {
                let item = index[id.as_str()];
                let p = predictor.predict(item).map_err(in_fold(fold, id))?;
                rows.push(score(fold, item, &p).map_err(in_fold(fold, id))?);
            }
            Ok((rows, predictor))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut predictors = Vec::new();
    for (r, p) in per_fold {
        rows.extend(r);
        predictors.push(p);
    }
    Ok(EvalOutput { report: EvalReport::from_rows(config, rows), predictors })
}

/// What `run_eval` should evaluate.
#[derive(Debug, Clone)]
pub struct EvalTask {
    pub modality: Modality,
    pub dimension: Dimension,
    pub feature_set: FeatureSet,
    pub model: ModelKind,
    /// Pretrained (audio, visual) donors for transfer; when absent they are
    /// trained per fold on the training items' isolated-modality golds.
    pub donors: Option<(TrainedModel, TrainedModel)>,
}

pub fn run_eval(items: &[EvalItem], task: &EvalTask, plan: &FoldPlan, cfg: &EvalConfig) -> Result<EvalOutput> {
    let echo = EvalEcho {
        modality: task.modality,
        dimension: task.dimension,
        feature_set: task.feature_set,
        model: task.model,
        seed: cfg.seed,
        folds: plan.folds.len(),
        settings: Some(cfg.clone()),
    };
    match task.model.architecture(task.feature_set)? {
        None => evaluate_with(items, plan, &LassoLearner { feature_set: task.feature_set, cfg: cfg.clone() }, echo),
        Some(architecture) => {
            let learner = NetworkLearner { architecture, cfg: cfg.clone(), donors: task.donors.clone() };
            evaluate_with(items, plan, &learner, echo)
        }
    }
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct LassoLearner {
    feature_set: FeatureSet,
    cfg: EvalConfig,
}

struct LassoPredictor {
    channels: Vec<Channel>,
    model: LassoModel,
}

/// Cross-validates alpha on every step of `items` and refits on all of them.
pub fn fit_lasso(items: &[&EvalItem], feature_set: FeatureSet, cfg: &EvalConfig, seed: u64) -> Result<LassoModel> {
    let channels = feature_set.channels();
    let first = items.first().ok_or(Error::EmptyInput("no training items"))?;
    let names = first.feature_names(&channels)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for item in items {
        let n = item.steps(&channels)?;
        x.extend(item.rows(&channels, n)?);
        y.extend_from_slice(&item.gold.values[..n]);
    }
    let grid = default_alpha_grid(&x, &y, cfg.lasso_alphas)?;
    Ok(lasso_cv(&x, &y, Some(&names), &grid, cfg.lasso_folds, seed, &cfg.lasso)?.model)
}

impl Learner for LassoLearner {
    fn fit(&self, fold: usize, train: &[&EvalItem]) -> Result<Box<dyn Predictor>> {
        let model = fit_lasso(train, self.feature_set, &self.cfg, fold_seed(self.cfg.seed, fold))?;
        Ok(Box::new(LassoPredictor { channels: self.feature_set.channels(), model }))
    }
}

impl Predictor for LassoPredictor {
    fn predict(&self, item: &EvalItem) -> Result<Prediction> {
        let n = item.steps(&self.channels)?;
        Ok(Prediction { first: 0, values: self.model.predict(&item.rows(&self.channels, n)?) })
    }

    fn lasso_model(&self) -> Option<&LassoModel> {
        Some(&self.model)
    }
}

/// Which gold a network is trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Main,
    /// Music-only gold (audio donor).
    IsolatedMusic,
    /// Visual-only gold (visual donor).
    IsolatedVisual,
}

fn target_of(item: &EvalItem, target: Target) -> Result<&GoldStandard> {
    match target {
        Target::Main => Ok(&item.gold),
        Target::IsolatedMusic | Target::IsolatedVisual => {
            let (m, v) = item
                .isolated
                .as_ref()
                .ok_or_else(|| Error::Invalid(format!("{}: no isolated-modality golds for donor training", item.media_id)))?;
            Ok(if target == Target::IsolatedMusic { m } else { v })
        }
    }
}

/// Block rows for every block, normalized with `norms`.
fn block_rows(item: &EvalItem, architecture: Architecture, norms: &[ZScore], n: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    architecture
        .block_channels()
        .iter()
        .zip(norms)
        .map(|(chs, z)| Ok(item.rows(chs, n)?.iter().map(|r| z.apply_row(r)).collect()))
        .collect()
}

fn steps_for(item: &EvalItem, architecture: Architecture, target: &GoldStandard) -> Result<usize> {
    let chs: Vec<Channel> = architecture.block_channels().concat();
    Ok(item.steps(&chs)?.min(target.values.len()))
}

fn examples(
    items: &[&EvalItem],
    architecture: Architecture,
    norms: &[ZScore],
    seq_len: usize,
    target: Target,
) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for item in items {
        let gold = target_of(item, target)?;
        let n = steps_for(item, architecture, gold)?;
        let rows = block_rows(item, architecture, norms, n)?;
        for k in seq_len..n {
            out.push(Example { inputs: rows.iter().map(|b| b[k - seq_len..k].to_vec()).collect(), target: gold.values[k] });
        }
    }
    Ok(out)
}

/// Input statistics per block, fitted on `items` only.
fn fit_norms(items: &[&EvalItem], architecture: Architecture) -> Result<Vec<ZScore>> {
    architecture
        .block_channels()
        .iter()
        .map(|chs| {
            let mut rows = Vec::new();
            for item in items {
                rows.extend(item.rows(chs, item.steps(chs)?)?);
            }
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            ZScore::fit_rows(&refs)
        })
        .collect()
}

/// Splits training items into a fitting part and an early-stopping part.
pub fn validation_split<'a>(items: &[&'a EvalItem], fraction: f64, seed: u64) -> (Vec<&'a EvalItem>, Vec<&'a EvalItem>) {
    let n = items.len();
    let n_val = if n < 2 || fraction <= 0.0 { 0 } else { ((n as f64 * fraction).round() as usize).clamp(1, n - 1) };
    let mut order = shuffled_partition(n, 1, seed).remove(0);
    let val_idx: Vec<usize> = order.drain(..n_val).collect();
    let mut val: Vec<usize> = val_idx;
    val.sort_unstable();
    order.sort_unstable();
    (order.iter().map(|&i| items[i]).collect(), val.iter().map(|&i| items[i]).collect())
}

fn spec_for(architecture: Architecture, input_dims: Vec<usize>, cfg: &EvalConfig) -> Result<ModelSpec> {
    let spec = ModelSpec {
        architecture,
        input_dims,
        seq_len: cfg.seq_len,
        hidden: cfg.hidden,
        head_hidden: cfg.head_hidden,
        dropout: cfg.dropout,
    };
    spec.validate()?;
    Ok(spec)
}

/// Trains a from-scratch network on `items` against `target`, holding back
/// part of them for early stopping.
pub fn fit_network(
    items: &[&EvalItem],
    architecture: Architecture,
    target: Target,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<TrainedModel> {
    if architecture == Architecture::Pair {
        return Err(Error::Invalid("transfer models are built from donors".into()));
    }
    let (fit_items, val_items) = validation_split(items, cfg.validation_fraction, seed);
    let norms = fit_norms(&fit_items, architecture)?;
    let spec = spec_for(architecture, norms.iter().map(ZScore::dim).collect(), cfg)?;
    let train_set = examples(&fit_items, architecture, &norms, cfg.seq_len, target)?;
    let val_set = examples(&val_items, architecture, &norms, cfg.seq_len, target)?;
    let tcfg = TrainConfig { seed, ..cfg.train.clone() };
    let out = train(&spec, &tcfg, &train_set, &val_set)?;
    Ok(TrainedModel { network: out.model, normalization: norms, seed })
}

/// Builds a transfer model from `donors` and fine-tunes it on `items`.
pub fn fit_pair(items: &[&EvalItem], donors: (&TrainedModel, &TrainedModel), cfg: &EvalConfig, seed: u64) -> Result<TrainedModel> {
    let first = items.first().ok_or(Error::EmptyInput("no training items"))?;
    let dims = (first.channel(Channel::Audio)?.dim(), first.channel(Channel::Visual)?.dim());
    let mut model = build_pair(donors.0, donors.1, dims, cfg.head_hidden, seed)?;
    if model.spec().dropout != cfg.dropout {
        model.network.spec.dropout = cfg.dropout;
    }
    let (fit_items, val_items) = validation_split(items, cfg.validation_fraction, seed);
    let arch = Architecture::Pair;
    let train_set = examples(&fit_items, arch, &model.normalization, model.spec().seq_len, Target::Main)?;
    let val_set = examples(&val_items, arch, &model.normalization, model.spec().seq_len, Target::Main)?;
    let tcfg = TrainConfig { seed, ..cfg.train.clone() };
    let out = fine_tune(model.network, &tcfg, &train_set, &val_set)?;
    model.network = out.model;
    Ok(model)
}

struct NetworkLearner {
    architecture: Architecture,
    cfg: EvalConfig,
    donors: Option<(TrainedModel, TrainedModel)>,
}

impl Learner for NetworkLearner {
    fn fit(&self, fold: usize, train: &[&EvalItem]) -> Result<Box<dyn Predictor>> {
        let seed = fold_seed(self.cfg.seed, fold);
        let model = if self.architecture == Architecture::Pair {
            match &self.donors {
                Some((a, v)) => fit_pair(train, (a, v), &self.cfg, seed)?,
                None => {
                    let a = fit_network(train, Architecture::UnimodalAudio, Target::IsolatedMusic, &self.cfg, seed ^ 1)?;
                    let v = fit_network(train, Architecture::UnimodalVisual, Target::IsolatedVisual, &self.cfg, seed ^ 2)?;
                    fit_pair(train, (&a, &v), &self.cfg, seed)?
                }
            }
        } else {
            fit_network(train, self.architecture, Target::Main, &self.cfg, seed)?
        };
        Ok(Box::new(NetworkPredictor { model }))
    }
}

pub struct NetworkPredictor {
    pub model: TrainedModel,
}

/// Stepwise predictions from a trained network for steps `seq_len..n`.
pub fn predict_item(model: &TrainedModel, item: &EvalItem) -> Result<Prediction> {
    let arch = model.spec().architecture;
    let seq_len = model.spec().seq_len;
    let n = steps_for(item, arch, &item.gold)?;
    let rows = block_rows(item, arch, &model.normalization, n)?;
    let net: &Regressor = &model.network;
    let values = (seq_len..n)
        .map(|k| {
            let inputs: Vec<Vec<Vec<f64>>> = rows.iter().map(|b| b[k - seq_len..k].to_vec()).collect();
            net.predict(&inputs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prediction { first: seq_len.min(n), values })
}

impl Predictor for NetworkPredictor {
    fn predict(&self, item: &EvalItem) -> Result<Prediction> {
        predict_item(&self.model, item)
    }

    fn network(&self) -> Option<&TrainedModel> {
        Some(&self.model)
    }
}
