use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use muvi_core::harness::{
    agreement_table, analyze, build_golds, compare, describe, fit_lasso, fit_network, fit_pair, items_from_golds,
    make_folds, prepare_items, resample_records, run_eval, synthesize, EvalConfig, EvalItem, EvalTask, FeatureSet,
    ModelKind, SynthConfig, Target,
};
use muvi_core::io::{
    annotations_to_string, canonical_json, features_to_string, gold_to_string, read_annotations, read_features,
    read_gold, write_atomic,
};
use muvi_core::lasso::importance;
use muvi_core::neural::{load_checkpoint, save_checkpoint, TrainConfig, TrainedModel};
use muvi_core::preprocess::ResampleConfig;
use muvi_core::record::{AnnotationRecord, Channel, Dimension, Modality};
use muvi_core::stats::label_cooccurrence;
use muvi_core::Error;

use crate::{ArchArg, FeatureSetArg, Command, CompareCmd, CorpusCmd, EvalCmd, ModelOpts, ResampleCmd, SynthCmd, TrainCmd};

pub enum Failure {
    Usage(String),
    Invalid(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Invalid(Error::Io(e))
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

pub const SEED_ENV: &str = "MUVI_SEED";

/// `MUVI_SEED` wins over the flag when set.
fn resolve_seed(flag: u64) -> Outcome<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Failure::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    subcommand: &'a str,
    config: &'a C,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: Option<u64>,
    version: &'static str,
}

/// Collects outputs for one run and writes them, then the manifest.
struct Run<'a> {
    subcommand: &'a str,
    out: &'a Path,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
    seed: Option<u64>,
}

impl<'a> Run<'a> {
    fn new(subcommand: &'a str, out: &'a Path) -> Self {
        Run { subcommand, out, inputs: Vec::new(), outputs: Vec::new(), seed: None }
    }

    fn text(&mut self, name: &str, body: &str) -> Outcome {
        write_atomic(&self.out.join(name), body.as_bytes())?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Outcome {
        let body = canonical_json(value)?;
        self.text(name, &body)
    }

    fn finish<C: Serialize>(self, config: &C) -> Outcome {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            config,
            inputs: self.inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: self.outputs,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
        };
        write_atomic(&self.out.join("manifest.json"), canonical_json(&manifest)?.as_bytes())?;
        Ok(())
    }
}

fn annotations_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join("annotations.jsonl")
    } else {
        input.to_path_buf()
    }
}

fn data_dir(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.to_path_buf()
    } else {
        input.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

fn load_records(input: &Path, run: &mut Run<'_>) -> Outcome<Vec<AnnotationRecord>> {
    let path = annotations_path(input);
    let records = read_annotations(&path).map_err(|e| match e {
        Error::Io(io) => Error::Invalid(format!("{}: {io}", path.display())),
        other => other,
    })?;
    run.inputs.push(path);
    if records.is_empty() {
        return Err(Error::EmptyInput("no annotation records").into());
    }
    Ok(records)
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Resample(c) => resample_cmd(&c),
        Command::Gold(c) => gold_cmd(&c),
        Command::Agreement(c) => corpus_cmd(&c, "agreement", |r, cfg| Ok(serde_json::to_value(agreement_table(r, cfg)?)?)),
        Command::Describe(c) => corpus_cmd(&c, "describe", |r, cfg| Ok(serde_json::to_value(describe(r, cfg)?)?)),
        Command::Labelstats(c) => corpus_cmd(&c, "labelstats", |r, _| labelstats(r)),
        Command::Analyze(c) => corpus_cmd(&c, "analysis", |r, cfg| Ok(serde_json::to_value(analyze(r, cfg)?)?)),
        Command::Train(c) => train_cmd(&c),
        Command::Eval(c) => eval_cmd(&c),
        Command::Compare(c) => compare_cmd(&c),
        Command::Synth(c) => synth_cmd(&c),
    }
}

fn resample_cmd(c: &ResampleCmd) -> Outcome {
    let mut run = Run::new("resample", &c.io.out);
    let records = load_records(&c.io.input, &mut run)?;
    let cfg = c.resample.config();
    let seqs = resample_records(&records, &cfg)?;
    let out: Vec<AnnotationRecord> = records
        .into_iter()
        .zip(seqs)
        .map(|(mut r, s)| {
            r.samples = s.to_samples();
            r
        })
        .collect();
    run.text("annotations.jsonl", &annotations_to_string(&out)?)?;
    run.finish(c)
}

#[derive(Serialize)]
struct EweSummary {
    media_id: String,
    modality: Modality,
    dimension: Dimension,
    weights: BTreeMap<String, f64>,
    raw_weights: BTreeMap<String, f64>,
    excluded: Vec<String>,
    fallback_mean: bool,
}

fn gold_cmd(c: &CorpusCmd) -> Outcome {
    let mut run = Run::new("gold", &c.io.out);
    let records = load_records(&c.io.input, &mut run)?;
    let golds = build_golds(&records, &c.resample.config())?;
    let list: Vec<_> = golds.values().map(|r| r.gold.clone()).collect();
    let summary: Vec<EweSummary> = golds
        .into_values()
        .map(|r| EweSummary {
            media_id: r.gold.media_id,
            modality: r.gold.modality,
            dimension: r.gold.dimension,
            weights: r.gold.annotator_weights,
            raw_weights: r.raw_weights,
            excluded: r.excluded.into_iter().collect(),
            fallback_mean: r.fallback_mean,
        })
        .collect();
    run.text("gold.csv", &gold_to_string(&list))?;
    run.json("ewe.json", &summary)?;
    run.finish(c)
}

fn corpus_cmd(
    c: &CorpusCmd,
    name: &str,
    f: impl Fn(&[AnnotationRecord], &ResampleConfig) -> muvi_core::Result<serde_json::Value>,
) -> Outcome {
    let mut run = Run::new(name, &c.io.out);
    let records = load_records(&c.io.input, &mut run)?;
    let value = f(&records, &c.resample.config())?;
    run.json(&format!("{name}.json"), &value)?;
    run.finish(c)
}

#[derive(Serialize)]
struct LabelPair {
    a: String,
    b: String,
    r: f64,
}

fn labelstats(records: &[AnnotationRecord]) -> muvi_core::Result<serde_json::Value> {
    let corr = label_cooccurrence(records)?;
    let mut pairs = Vec::new();
    for i in 0..corr.labels.len() {
        for j in i + 1..corr.labels.len() {
            if let Some(r) = corr.matrix[i][j] {
                pairs.push(LabelPair { a: corr.labels[i].clone(), b: corr.labels[j].clone(), r });
            }
        }
    }
    pairs.sort_by(|x, y| y.r.abs().total_cmp(&x.r.abs()).then_with(|| (&x.a, &x.b).cmp(&(&y.a, &y.b))));
    Ok(serde_json::json!({ "correlation": corr, "pairs_by_strength": pairs }))
}

fn eval_config(m: &ModelOpts, seed: u64) -> EvalConfig {
    EvalConfig {
        seq_len: m.seq_len,
        hidden: m.hidden,
        head_hidden: m.head_hidden,
        dropout: m.dropout,
        train: TrainConfig {
            learning_rate: m.lr,
            batch_size: m.batch_size,
            max_epochs: m.epochs,
            patience: m.patience,
            seed,
        },
        validation_fraction: m.validation_fraction,
        seed,
        ..EvalConfig::default()
    }
}

fn load_items(m: &ModelOpts, run: &mut Run<'_>) -> Outcome<Vec<EvalItem>> {
    let dir = data_dir(&m.input);
    let mut features = |given: &Option<PathBuf>, default: &str, channel| -> Outcome<Vec<_>> {
        let path = given.clone().unwrap_or_else(|| dir.join(default));
        if given.is_none() && !path.exists() {
            return Ok(Vec::new());
        }
        let mats = read_features(&path, channel)?;
        run.inputs.push(path);
        Ok(mats)
    };
    let audio = features(&m.audio_features, "audio_features.csv", Channel::Audio)?;
    let visual = features(&m.visual_features, "visual_features.csv", Channel::Visual)?;
    let (modality, dimension) = (m.modality.into(), m.dimension.into());
    let items = match &m.gold {
        Some(path) => {
            let golds = read_gold(path)?;
            run.inputs.push(path.clone());
            items_from_golds(&golds, &audio, &visual, modality, dimension)?
        }
        None => {
            let records = load_records(&m.input, run)?;
            prepare_items(&records, &audio, &visual, modality, dimension, &m.resample.config())?
        }
    };
    Ok(items)
}

fn check_model(m: &ModelOpts, arch: ArchArg) -> Outcome {
    if arch == ArchArg::Unimodal && matches!(m.feature_set, FeatureSetArg::Audiovisual) {
        return Err(Failure::Usage("--arch unimodal needs --feature-set audio or visual".into()));
    }
    if m.seq_len == 0 || m.hidden == 0 || m.head_hidden == 0 {
        return Err(Failure::Usage("--seq-len, --hidden and --head-hidden must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&m.dropout) {
        return Err(Failure::Usage("--dropout must lie in [0, 1)".into()));
    }
    Ok(())
}

fn load_donors(audio: &Path, visual: &Path, run: &mut Run<'_>) -> Outcome<(TrainedModel, TrainedModel)> {
    let a = load_checkpoint(audio)?;
    let v = load_checkpoint(visual)?;
    run.inputs.push(audio.to_path_buf());
    run.inputs.push(visual.to_path_buf());
    Ok((a, v))
}

fn train_cmd(c: &TrainCmd) -> Outcome {
    check_model(&c.model, c.arch)?;
    let seed = resolve_seed(c.model.seed)?;
    let mut run = Run::new("train", &c.out);
    run.seed = Some(seed);
    let items = load_items(&c.model, &mut run)?;
    let refs: Vec<&EvalItem> = items.iter().collect();
    let cfg = eval_config(&c.model, seed);
    let kind: ModelKind = c.arch.into();
    let feature_set: FeatureSet = c.model.feature_set.into();
    match kind.architecture(feature_set)? {
        None => {
            let model = fit_lasso(&refs, feature_set, &cfg, seed)?;
            run.json("lasso.json", &model)?;
        }
        Some(arch) => {
            let model = if kind == ModelKind::Pair {
                let (a, v) = load_donors(
                    c.donor_audio.as_deref().expect("required by clap"),
                    c.donor_visual.as_deref().expect("required by clap"),
                    &mut run,
                )?;
                fit_pair(&refs, (&a, &v), &cfg, seed)?
            } else {
                fit_network(&refs, arch, Target::Main, &cfg, seed)?
            };
            save_checkpoint(&model, &c.out.join("model.json"))?;
            run.outputs.push("model.json".into());
        }
    }
    run.finish(c)
}

fn eval_cmd(c: &EvalCmd) -> Outcome {
    check_model(&c.model, c.arch)?;
    let seed = resolve_seed(c.model.seed)?;
    let mut run = Run::new("eval", &c.out);
    run.seed = Some(seed);
    let items = load_items(&c.model, &mut run)?;
    let donors = match (&c.donor_audio, &c.donor_visual) {
        (Some(a), Some(v)) if c.arch == ArchArg::Pair => Some(load_donors(a, v, &mut run)?),
        _ => None,
    };
    let ids: Vec<String> = items.iter().map(|i| i.media_id.clone()).collect();
    let plan = make_folds(&ids, c.folds, seed)?;
    let task = EvalTask {
        modality: c.model.modality.into(),
        dimension: c.model.dimension.into(),
        feature_set: c.model.feature_set.into(),
        model: c.arch.into(),
        donors,
    };
    let out = run_eval(&items, &task, &plan, &eval_config(&c.model, seed))?;
    run.json("report.json", &out.report)?;
    run.json("folds.json", &plan)?;
    if c.arch == ArchArg::Lasso {
        let models: Vec<_> = out.predictors.iter().filter_map(|p| p.lasso_model().cloned()).collect();
        run.json("importance.json", &importance(&models)?)?;
    }
    run.finish(c)
}

fn compare_cmd(c: &CompareCmd) -> Outcome {
    check_model(&c.model, ArchArg::A2)?;
    let seed = resolve_seed(c.model.seed)?;
    let mut run = Run::new("compare", &c.out);
    run.seed = Some(seed);
    let items = load_items(&c.model, &mut run)?;
    let donors = load_donors(&c.donor_audio, &c.donor_visual, &mut run)?;
    let ids: Vec<String> = items.iter().map(|i| i.media_id.clone()).collect();
    let plan = make_folds(&ids, c.folds, seed)?;
    let cfg = eval_config(&c.model, seed);
    let mut reports = Vec::new();
    for model in [ModelKind::A1, ModelKind::A2, ModelKind::Pair] {
        let task = EvalTask {
            modality: c.model.modality.into(),
            dimension: c.model.dimension.into(),
            feature_set: FeatureSet::Audiovisual,
            model,
            donors: Some(donors.clone()),
        };
        reports.push(run_eval(&items, &task, &plan, &cfg)?.report);
    }
    run.json("compare.json", &compare(reports)?)?;
    run.finish(c)
}

#[derive(Serialize)]
struct SynthSummary<'a> {
    config: &'a SynthConfig,
    adversaries: Vec<String>,
}

fn synth_cmd(c: &SynthCmd) -> Outcome {
    let seed = resolve_seed(c.seed)?;
    let mut cfg = SynthConfig { n_media: c.media, duration: c.duration, seed, ..SynthConfig::default() };
    cfg.annotators.count = c.annotators;
    cfg.annotators.adversaries = c.adversaries;
    cfg.annotators.noise_sd = c.annotator_noise;
    cfg.annotators.bias_sd = c.annotator_bias;
    cfg.annotators.max_lag = c.max_lag;
    cfg.annotators.jitter_sd = c.jitter;
    cfg.audio.noise_sd = c.feature_noise;
    cfg.visual.noise_sd = c.feature_noise;
    if let Err(e) = cfg.validate() {
        return Err(Failure::Usage(e.to_string()));
    }
    let data = synthesize(&cfg)?;
    let mut run = Run::new("synth", &c.out);
    run.seed = Some(seed);
    run.text("annotations.jsonl", &annotations_to_string(&data.records)?)?;
    run.text("audio_features.csv", &features_to_string(&data.audio)?)?;
    run.text("visual_features.csv", &features_to_string(&data.visual)?)?;
    run.text("latent.csv", &gold_to_string(&data.latent))?;
    run.json("synth.json", &SynthSummary { config: &cfg, adversaries: data.adversaries.into_iter().collect() })?;
    run.finish(c)
}
