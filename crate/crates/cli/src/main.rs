mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use muvi_core::harness::{FeatureSet, ModelKind};
use muvi_core::preprocess::ResampleMethod;
use muvi_core::record::{Dimension, Modality};

const SCHEMAS: &str = "\
Input directory layout (--in DIR):
  annotations.jsonl     one JSON object per line: participant_id, media_id,
                        modality (music|visual|audiovisual), overlay_mode
                        (overlaid|side|na), samples [[t, arousal, valence], ...]
                        with t in seconds strictly increasing and values in
                        [-1, 1], familiar (bool), gems_labels (GEMS terms),
                        profile {gender, years_musical_training, age?}
  audio_features.csv    media_id,t,<feature names...>; t on the 0.5 s grid
  visual_features.csv   same layout for visual features
  gold.csv              media_id,modality,dimension,t,value (written by `gold`)
--in may also name an annotations.jsonl file directly.

Outputs are canonical JSON (sorted keys, floats rounded to 12 decimals) or
CSV, written through a temporary file and renamed into place. Every run
writes manifest.json next to its outputs.

Exit status: 0 success, 1 invalid input or failed computation, 2 usage error.
MUVI_SEED, when set, overrides --seed.";

#[derive(Parser, Debug)]
#[command(name = "muvi", version, about = "Continuous emotion annotation analysis and modelling", after_long_help = SCHEMAS)]
struct Cli {
    /// Worker threads for parallel folds and fits [default: logical cores]
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resample annotations onto the 2 Hz grid (output is valid annotations.jsonl)
    Resample(ResampleCmd),
    /// Build EWE gold standards per (media, modality, dimension)
    Gold(CorpusCmd),
    /// Leave-one-out inter-rater agreement table
    Agreement(CorpusCmd),
    /// Descriptive statistics: affect means, label counts, familiarity
    Describe(CorpusCmd),
    /// Pearson correlations between GEMS label selections
    Labelstats(CorpusCmd),
    /// Statistical battery: normality, overlay and modality effects, label contingency tests
    Analyze(CorpusCmd),
    /// Train one model on every item and save it
    Train(TrainCmd),
    /// Cross-validated evaluation of one model
    Eval(EvalCmd),
    /// Cross-validated A1, A2 and PAIR side by side
    Compare(CompareCmd),
    /// Generate a synthetic study with known ground truth
    Synth(SynthCmd),
}

#[derive(Args, Debug, Serialize)]
struct InOut {
    /// Input directory or annotations.jsonl file
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Linear,
    HoldLast,
}

#[derive(Args, Debug, Serialize)]
struct ResampleOpts {
    /// Grid interval in seconds
    #[arg(long, default_value_t = 0.5)]
    interval: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Linear)]
    method: MethodArg,
    /// Put grid points before the first sample at the origin instead of the first value
    #[arg(long)]
    no_backfill: bool,
}

impl ResampleOpts {
    fn config(&self) -> muvi_core::preprocess::ResampleConfig {
        muvi_core::preprocess::ResampleConfig {
            target_interval: self.interval,
            method: match self.method {
                MethodArg::Linear => ResampleMethod::Linear,
                MethodArg::HoldLast => ResampleMethod::HoldLast,
            },
            backfill: !self.no_backfill,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct ResampleCmd {
    #[command(flatten)]
    io: InOut,
    #[command(flatten)]
    resample: ResampleOpts,
}

#[derive(Args, Debug, Serialize)]
struct CorpusCmd {
    #[command(flatten)]
    io: InOut,
    #[command(flatten)]
    resample: ResampleOpts,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModalityArg {
    Music,
    Visual,
    Audiovisual,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::Music => Modality::Music,
            ModalityArg::Visual => Modality::Visual,
            ModalityArg::Audiovisual => Modality::Audiovisual,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DimensionArg {
    Arousal,
    Valence,
}

impl From<DimensionArg> for Dimension {
    fn from(d: DimensionArg) -> Self {
        match d {
            DimensionArg::Arousal => Dimension::Arousal,
            DimensionArg::Valence => Dimension::Valence,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FeatureSetArg {
    Audio,
    Visual,
    Audiovisual,
}

impl From<FeatureSetArg> for FeatureSet {
    fn from(f: FeatureSetArg) -> Self {
        match f {
            FeatureSetArg::Audio => FeatureSet::Audio,
            FeatureSetArg::Visual => FeatureSet::Visual,
            FeatureSetArg::Audiovisual => FeatureSet::Audiovisual,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ArchArg {
    Lasso,
    Unimodal,
    A1,
    A2,
    Pair,
}

impl From<ArchArg> for ModelKind {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Lasso => ModelKind::Lasso,
            ArchArg::Unimodal => ModelKind::Unimodal,
            ArchArg::A1 => ModelKind::A1,
            ArchArg::A2 => ModelKind::A2,
            ArchArg::Pair => ModelKind::Pair,
        }
    }
}

/// Data selection and hyperparameters shared by train, eval and compare.
#[derive(Args, Debug, Serialize)]
struct ModelOpts {
    /// Input directory with annotations and feature files
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// Precomputed gold.csv; built from the annotations when omitted
    #[arg(long, value_name = "FILE")]
    gold: Option<PathBuf>,
    /// Audio features [default: <in>/audio_features.csv]
    #[arg(long, value_name = "FILE")]
    audio_features: Option<PathBuf>,
    /// Visual features [default: <in>/visual_features.csv]
    #[arg(long, value_name = "FILE")]
    visual_features: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModalityArg::Audiovisual)]
    modality: ModalityArg,
    #[arg(long, value_enum, default_value_t = DimensionArg::Arousal)]
    dimension: DimensionArg,
    /// Features for lasso and unimodal models; fusion models always use both
    #[arg(long, value_enum, default_value_t = FeatureSetArg::Audiovisual)]
    feature_set: FeatureSetArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    seq_len: usize,
    /// LSTM hidden units per layer
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    /// Hidden units in the late-fusion head
    #[arg(long, default_value_t = 256)]
    head_hidden: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.2)]
    dropout: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    /// Epochs without validation improvement before stopping
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Share of training items held back for early stopping
    #[arg(long, default_value_t = 0.2)]
    validation_fraction: f64,
    #[command(flatten)]
    resample: ResampleOpts,
}

#[derive(Args, Debug, Serialize)]
struct TrainCmd {
    #[command(flatten)]
    model: ModelOpts,
    #[arg(long, value_enum, default_value_t = ArchArg::Unimodal)]
    arch: ArchArg,
    /// Audio donor checkpoint (required for --arch pair)
    #[arg(long, value_name = "FILE", required_if_eq("arch", "pair"))]
    donor_audio: Option<PathBuf>,
    /// Visual donor checkpoint (required for --arch pair)
    #[arg(long, value_name = "FILE", required_if_eq("arch", "pair"))]
    donor_visual: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalCmd {
    #[command(flatten)]
    model: ModelOpts,
    #[arg(long, value_enum, default_value_t = ArchArg::Lasso)]
    arch: ArchArg,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Audio donor checkpoint (required for --arch pair)
    #[arg(long, value_name = "FILE", required_if_eq("arch", "pair"))]
    donor_audio: Option<PathBuf>,
    /// Visual donor checkpoint (required for --arch pair)
    #[arg(long, value_name = "FILE", required_if_eq("arch", "pair"))]
    donor_visual: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CompareCmd {
    #[command(flatten)]
    model: ModelOpts,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, value_name = "FILE")]
    donor_audio: PathBuf,
    #[arg(long, value_name = "FILE")]
    donor_visual: PathBuf,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SynthCmd {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of media items
    #[arg(long, default_value_t = 20)]
    media: usize,
    /// Seconds per item
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Annotators per (media, modality), adversaries included
    #[arg(long, default_value_t = 6)]
    annotators: usize,
    #[arg(long, default_value_t = 1)]
    adversaries: usize,
    #[arg(long, default_value_t = 0.1)]
    annotator_noise: f64,
    #[arg(long, default_value_t = 0.05)]
    annotator_bias: f64,
    /// Largest annotator lag in grid steps
    #[arg(long, default_value_t = 2)]
    max_lag: usize,
    /// Timestamp jitter sd in seconds
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Feature noise sd relative to each feature's scale
    #[arg(long, default_value_t = 0.1)]
    feature_noise: f64,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(commands::Failure::Invalid(e)) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(1)
        }
    }
}
