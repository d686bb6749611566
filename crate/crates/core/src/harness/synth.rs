//! Synthetic annotation studies with a known ground truth.
//!
//! Each media item carries four smooth latent traces: an audio-driven and a
//! visual-driven trajectory for each of arousal and valence. Music-only
//! annotators perceive the audio-driven pair, visual-only annotators the
//! visual-driven pair, and audiovisual annotators a per-dimension blend.
//! Audio features are mostly images of audio-driven arousal and visual
//! features mostly images of visual-driven valence.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gems::{Category, GemsLabel};
use crate::preprocess::grid_len;
use crate::record::{
    AnnotationRecord, AnnotatorProfile, Channel, Dimension, FeatureMatrix, Gender, GoldStandard, Modality, OverlayMode,
    Sample, GRID_INTERVAL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentParams {
    pub components: usize,
    pub min_period: f64,
    pub max_period: f64,
    /// Gain applied to the summed sinusoids before `tanh`.
    pub amplitude: f64,
}

impl Default for LatentParams {
    fn default() -> Self {
        LatentParams { components: 3, min_period: 8.0, max_period: 30.0, amplitude: 1.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Features driven by the channel's latents.
    pub informative: usize,
    /// Smooth features unrelated to any latent.
    pub distractors: usize,
    /// Noise sd relative to each feature's scale.
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorParams {
    /// Annotators per (media, modality), adversaries included.
    pub count: usize,
    pub adversaries: usize,
    pub bias_sd: f64,
    pub noise_sd: f64,
    /// Each annotator lags the latent by a fixed 0..=max_lag grid steps.
    pub max_lag: usize,
    /// Sd of the timestamp jitter around the 2 Hz grid, in seconds.
    pub jitter_sd: f64,
}

impl Default for AnnotatorParams {
    fn default() -> Self {
        AnnotatorParams { count: 6, adversaries: 1, bias_sd: 0.05, noise_sd: 0.1, max_lag: 2, jitter_sd: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_media: usize,
    /// Seconds per item.
    pub duration: f64,
    pub latent: LatentParams,
    pub audio: ChannelParams,
    pub visual: ChannelParams,
    /// Share of the audio-driven latent in what audiovisual annotators
    /// perceive, for arousal and valence.
    pub audiovisual_audio_share: [f64; 2],
    pub annotators: AnnotatorParams,
    pub modalities: Vec<Modality>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_media: 20,
            duration: 60.0,
            latent: LatentParams::default(),
            audio: ChannelParams { informative: 8, distractors: 2, noise_sd: 0.1 },
            visual: ChannelParams { informative: 6, distractors: 2, noise_sd: 0.1 },
            audiovisual_audio_share: [0.7, 0.3],
            annotators: AnnotatorParams::default(),
            modalities: Modality::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("synth config: {m}")));
        if self.n_media == 0 {
            return bad("n_media must be >= 1");
        }
        if !(self.duration >= GRID_INTERVAL) {
            return bad("duration must cover at least one grid step");
        }
        let l = &self.latent;
        if l.components == 0 || !(l.min_period > 0.0 && l.max_period >= l.min_period) || !(l.amplitude >= 0.0) {
            return bad("latent needs >= 1 component, 0 < min_period <= max_period and amplitude >= 0");
        }
        for c in [&self.audio, &self.visual] {
            if c.informative + c.distractors == 0 || !(c.noise_sd >= 0.0) {
                return bad("each channel needs >= 1 feature and noise_sd >= 0");
            }
        }
        if self.audiovisual_audio_share.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return bad("audiovisual_audio_share must lie in [0, 1]");
        }
        let a = &self.annotators;
        if a.count == 0 || a.adversaries > a.count {
            return bad("need >= 1 annotator and adversaries <= count");
        }
        if !(a.bias_sd >= 0.0 && a.noise_sd >= 0.0 && a.jitter_sd >= 0.0) {
            return bad("annotator sds must be >= 0");
        }
        if self.modalities.is_empty() {
            return bad("no modalities");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub records: Vec<AnnotationRecord>,
    pub audio: Vec<FeatureMatrix>,
    pub visual: Vec<FeatureMatrix>,
    /// Noise-free perceived trace per (media, modality, dimension), on the grid.
    pub latent: Vec<GoldStandard>,
    pub adversaries: BTreeSet<String>,
}

impl SynthDataset {
    pub fn latent_for(&self, media_id: &str, modality: Modality, dimension: Dimension) -> Option<&GoldStandard> {
        self.latent.iter().find(|g| g.media_id == media_id && g.modality == modality && g.dimension == dimension)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone)]
struct Wave {
    components: Vec<(f64, f64, f64)>,
    offset: f64,
    gain: f64,
}

impl Wave {
    fn draw(rng: &mut impl Rng, p: &LatentParams) -> Wave {
        let components = (0..p.components)
            .map(|_| {
                let period = rng.random_range(p.min_period..=p.max_period);
                let phase = rng.random_range(0.0..2.0 * PI);
                let weight = rng.random_range(0.5..1.0);
                (2.0 * PI / period, phase, weight)
            })
            .collect::<Vec<_>>();
        let total: f64 = components.iter().map(|c| c.2).sum();
        let components = components.into_iter().map(|(w, p, a)| (w, p, a / total)).collect();
        Wave { components, offset: rng.random_range(-0.4..0.4), gain: p.amplitude }
    }

    fn at(&self, t: f64) -> f64 {
        let s: f64 = self.components.iter().map(|(w, p, a)| a * (w * t + p).sin()).sum();
        (self.gain * (s + self.offset)).tanh()
    }
}

/// Per-item latents indexed `[channel][dimension]`.
struct ItemLatents([[Wave; 2]; 2]);

impl ItemLatents {
    fn perceived(&self, modality: Modality, dimension: Dimension, share: [f64; 2], t: f64) -> f64 {
        let d = dimension as usize;
        let (a, v) = (self.0[0][d].at(t), self.0[1][d].at(t));
        match modality {
            Modality::Music => a,
            Modality::Visual => v,
            Modality::Audiovisual => share[d] * a + (1.0 - share[d]) * v,
        }
    }
}

/// Coefficients of one informative feature.
#[derive(Debug, Clone)]
struct FeatureMap {
    primary: f64,
    secondary: f64,
    curvature: f64,
    offset: f64,
    scale: f64,
}

struct ChannelMaps {
    informative: Vec<FeatureMap>,
    distractor_scale: Vec<f64>,
}

fn draw_maps(rng: &mut impl Rng, p: &ChannelParams) -> ChannelMaps {
    let informative = (0..p.informative)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            FeatureMap {
                primary: sign * rng.random_range(0.5..1.5),
                secondary: rng.random_range(-0.5..0.5),
                curvature: rng.random_range(-0.3..0.3),
                offset: rng.random_range(-1.0..1.0),
                scale: 10f64.powf(rng.random_range(-1.0..1.0)),
            }
        })
        .collect();
    let distractor_scale = (0..p.distractors).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
    ChannelMaps { informative, distractor_scale }
}

fn feature_matrix(
    media_id: &str,
    channel: Channel,
    maps: &ChannelMaps,
    params: &ChannelParams,
    latents: &[Wave; 2],
    primary: Dimension,
    lat: &LatentParams,
    n: usize,
    rng: &mut impl Rng,
) -> FeatureMatrix {
    let p = primary as usize;
    let distractors: Vec<Wave> = maps.distractor_scale.iter().map(|_| Wave::draw(rng, lat)).collect();
    let noise = Normal::new(0.0, params.noise_sd).expect("sd checked");
    let timestamps: Vec<f64> = (0..n).map(|k| k as f64 * GRID_INTERVAL).collect();
    let values = timestamps
        .iter()
        .map(|&t| {
            let (lp, ls) = (latents[p].at(t), latents[1 - p].at(t));
            let mut row: Vec<f64> = maps
                .informative
                .iter()
                .map(|m| {
                    let clean = m.primary * lp + m.secondary * ls + m.curvature * lp * lp + m.offset;
                    m.scale * (clean + noise.sample(rng))
                })
                .collect();
            row.extend(distractors.iter().zip(&maps.distractor_scale).map(|(w, s)| s * (w.at(t) + noise.sample(rng))));
            row
        })
        .collect();
    let prefix = channel.as_str();
    let mut feature_names: Vec<String> = (0..maps.informative.len()).map(|j| format!("{prefix}_f{j:02}")).collect();
    feature_names.extend((0..maps.distractor_scale.len()).map(|j| format!("{prefix}_d{j:02}")));
    FeatureMatrix { media_id: media_id.to_string(), channel, timestamps, values, feature_names }
}

/// Mean (arousal, valence) anchor of each GEMS category.
fn prototype(c: Category) -> (f64, f64) {
    match c {
        Category::Wonder => (0.3, 0.5),
        Category::Transcendence => (0.0, 0.3),
        Category::Peacefulness => (-0.6, 0.4),
        Category::Tenderness => (-0.3, 0.5),
        Category::Nostalgia => (-0.3, 0.1),
        Category::Power => (0.7, 0.2),
        Category::JoyfulActivation => (0.6, 0.7),
        Category::Sadness => (-0.5, -0.6),
        Category::Tension => (0.6, -0.6),
    }
}

fn draw_labels(rng: &mut impl Rng, arousal: f64, valence: f64) -> Vec<GemsLabel> {
    let count = rng.random_range(1..=6);
    let weights: Vec<f64> = GemsLabel::all()
        .map(|l| {
            let (a, v) = prototype(l.category());
            (-((a - arousal).powi(2) + (v - valence).powi(2)) / 0.5).exp()
        })
        .collect();
    let mut chosen = Vec::with_capacity(count);
    let mut w = weights;
    for _ in 0..count {
        let total: f64 = w.iter().sum();
        let mut u = rng.random_range(0.0..total);
        let mut pick = w.len() - 1;
        for (i, wi) in w.iter().enumerate() {
            if u < *wi {
                pick = i;
                break;
            }
            u -= wi;
        }
        w[pick] = 0.0;
        chosen.push(GemsLabel::from_index(pick).expect("index in range"));
    }
    chosen.sort();
    chosen
}

struct Annotator {
    id: String,
    adversary: bool,
    bias: f64,
    lag: usize,
    profile: AnnotatorProfile,
}

fn draw_annotators(rng: &mut impl Rng, modality: Modality, p: &AnnotatorParams) -> Vec<Annotator> {
    let bias = Normal::new(0.0, p.bias_sd).expect("sd checked");
    (0..p.count)
        .map(|i| {
            let gender = if rng.random_bool(0.5) { Gender::Female } else { Gender::Male };
            Annotator {
                id: format!("{}-p{i:02}", modality.as_str()),
                adversary: i >= p.count - p.adversaries,
                bias: bias.sample(rng),
                lag: rng.random_range(0..=p.max_lag),
                profile: AnnotatorProfile {
                    gender,
                    years_musical_training: rng.random_range(0..=15),
                    age: Some(rng.random_range(18..=40)),
                },
            }
        })
        .collect()
}

/// Sample times on the 2 Hz grid, interior points jittered; the first and
/// last points stay on the grid so every record spans the full item.
fn sample_times(rng: &mut impl Rng, n: usize, jitter_sd: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..n).map(|k| k as f64 * GRID_INTERVAL).collect();
    if jitter_sd > 0.0 && n > 2 {
        let jitter = Normal::new(0.0, jitter_sd).expect("sd checked");
        let limit = 0.45 * GRID_INTERVAL;
        for t in ts[1..n - 1].iter_mut() {
            *t += jitter.sample(rng).clamp(-limit, limit);
        }
    }
    ts
}

/// Generates a full study: features for both channels, one record per
/// (media, modality, annotator) and the noise-free perceived traces.
pub fn synthesize(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let n = grid_len(cfg.duration, GRID_INTERVAL);
    let mut global = stream(cfg.seed, 0);
    let audio_maps = draw_maps(&mut global, &cfg.audio);
    let visual_maps = draw_maps(&mut global, &cfg.visual);
    let panels: Vec<(Modality, Vec<Annotator>)> = cfg
        .modalities
        .iter()
        .map(|&m| (m, draw_annotators(&mut global, m, &cfg.annotators)))
        .collect();
    let adversaries = panels.iter().flat_map(|(_, p)| p.iter().filter(|a| a.adversary).map(|a| a.id.clone())).collect();

    let mut out = SynthDataset { records: Vec::new(), audio: Vec::new(), visual: Vec::new(), latent: Vec::new(), adversaries };
    let noise = Normal::new(0.0, cfg.annotators.noise_sd).expect("sd checked");
    for item in 0..cfg.n_media {
        // Items draw from their own stream so adding items leaves earlier ones unchanged.
        let mut rng = stream(cfg.seed, 1 + item as u64);
        let media_id = format!("s{item:03}");
        let draw2 = |rng: &mut ChaCha8Rng| [Wave::draw(rng, &cfg.latent), Wave::draw(rng, &cfg.latent)];
        let a = draw2(&mut rng);
        let v = draw2(&mut rng);
        let latents = ItemLatents([a, v]);
        let lat = &cfg.latent;
        out.audio.push(feature_matrix(
            &media_id, Channel::Audio, &audio_maps, &cfg.audio, &latents.0[0], Dimension::Arousal, lat, n, &mut rng,
        ));
        out.visual.push(feature_matrix(
            &media_id, Channel::Visual, &visual_maps, &cfg.visual, &latents.0[1], Dimension::Valence, lat, n, &mut rng,
        ));

        let share = cfg.audiovisual_audio_share;
        for (modality, panel) in &panels {
            let timestamps: Vec<f64> = (0..n).map(|k| k as f64 * GRID_INTERVAL).collect();
            for dimension in Dimension::ALL {
                let values = timestamps.iter().map(|&t| latents.perceived(*modality, dimension, share, t)).collect();
                out.latent.push(GoldStandard {
                    media_id: media_id.clone(),
                    modality: *modality,
                    dimension,
                    timestamps: timestamps.clone(),
                    values,
                    annotator_weights: Default::default(),
                });
            }
            let mean_of = |d| {
                timestamps.iter().map(|&t| latents.perceived(*modality, d, share, t)).sum::<f64>() / n as f64
            };
            let (mean_a, mean_v) = (mean_of(Dimension::Arousal), mean_of(Dimension::Valence));
            for (slot, ann) in panel.iter().enumerate() {
                let sign = if ann.adversary { -1.0 } else { 1.0 };
                let lag = ann.lag as f64 * GRID_INTERVAL;
                let samples = sample_times(&mut rng, n, cfg.annotators.jitter_sd)
                    .into_iter()
                    .map(|t| {
                        let mut seen = |d| {
                            let x = sign * latents.perceived(*modality, d, share, t - lag) + ann.bias + noise.sample(&mut rng);
                            x.clamp(-1.0, 1.0)
                        };
                        let a = seen(Dimension::Arousal);
                        Sample::new(t, a, seen(Dimension::Valence))
                    })
                    .collect();
                let overlay_mode = match (modality, slot % 2) {
                    (Modality::Music, _) => OverlayMode::NotApplicable,
                    (_, 0) => OverlayMode::Overlaid,
                    _ => OverlayMode::SideBySide,
                };
                out.records.push(AnnotationRecord {
                    participant_id: ann.id.clone(),
                    media_id: media_id.clone(),
                    modality: *modality,
                    overlay_mode,
                    samples,
                    familiar: rng.random_bool(0.3),
                    gems_labels: draw_labels(&mut rng, sign * mean_a, sign * mean_v),
                    profile: ann.profile.clone(),
                });
            }
        }
    }
    Ok(out)
}
