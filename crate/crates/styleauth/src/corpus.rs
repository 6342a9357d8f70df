//! Corpus ingestion: WAV files, manifests, train/test splits, and the
//! synthetic styled-speech generator used for desk-scale experiments.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CANONICAL_RATE_HZ: u32 = 16_000;

/// Mono PCM audio, samples normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioClip {
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum_sq: f64 = self.samples.iter().map(|s| s * s).sum();
        (sum_sq / self.samples.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gender::Male => write!(f, "male"),
            Gender::Female => write!(f, "female"),
        }
    }
}

impl FromStr for Gender {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            other => Err(format!("unknown gender {other:?}")),
        }
    }
}

/// The ten speaking styles. `Sad` has no trained model: it appears only in
/// test sets as an open-set imposter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleLabel {
    Neutral,
    Shouted,
    Slow,
    Loud,
    Soft,
    Fast,
    Angry,
    Happy,
    Fearful,
    Sad,
}

/// The nine styles with trained models, in table row order.
pub const MODEL_STYLES: [StyleLabel; 9] = [
    StyleLabel::Neutral,
    StyleLabel::Shouted,
    StyleLabel::Slow,
    StyleLabel::Loud,
    StyleLabel::Soft,
    StyleLabel::Fast,
    StyleLabel::Angry,
    StyleLabel::Happy,
    StyleLabel::Fearful,
];

pub const ALL_STYLES: [StyleLabel; 10] = [
    StyleLabel::Neutral,
    StyleLabel::Shouted,
    StyleLabel::Slow,
    StyleLabel::Loud,
    StyleLabel::Soft,
    StyleLabel::Fast,
    StyleLabel::Angry,
    StyleLabel::Happy,
    StyleLabel::Fearful,
    StyleLabel::Sad,
];

impl StyleLabel {
    pub fn is_open_set(self) -> bool {
        self == StyleLabel::Sad
    }
}

impl fmt::Display for StyleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StyleLabel::Neutral => "neutral",
            StyleLabel::Shouted => "shouted",
            StyleLabel::Slow => "slow",
            StyleLabel::Loud => "loud",
            StyleLabel::Soft => "soft",
            StyleLabel::Fast => "fast",
            StyleLabel::Angry => "angry",
            StyleLabel::Happy => "happy",
            StyleLabel::Fearful => "fearful",
            StyleLabel::Sad => "sad",
        };
        write!(f, "{s}")
    }
}

impl FromStr for StyleLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "neutral" => Ok(StyleLabel::Neutral),
            "shouted" => Ok(StyleLabel::Shouted),
            "slow" => Ok(StyleLabel::Slow),
            "loud" => Ok(StyleLabel::Loud),
            "soft" => Ok(StyleLabel::Soft),
            "fast" => Ok(StyleLabel::Fast),
            "angry" => Ok(StyleLabel::Angry),
            "happy" => Ok(StyleLabel::Happy),
            "fearful" => Ok(StyleLabel::Fearful),
            "sad" => Ok(StyleLabel::Sad),
            other => Err(format!("unknown style {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UtteranceMeta {
    pub speaker_id: String,
    pub gender: Gender,
    pub sentence_id: u8,
    pub style: StyleLabel,
    pub token_index: u8,
}

impl UtteranceMeta {
    pub fn key(&self) -> UttKey {
        UttKey {
            speaker_id: self.speaker_id.clone(),
            sentence_id: self.sentence_id,
            style: self.style,
            token_index: self.token_index,
        }
    }
}

/// Unique identifier of one recorded token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UttKey {
    pub speaker_id: String,
    pub sentence_id: u8,
    pub style: StyleLabel,
    pub token_index: u8,
}

impl fmt::Display for UttKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.speaker_id, self.sentence_id, self.style, self.token_index
        )
    }
}

/// One model identity: speaker + sentence + style (no token).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelKey {
    pub speaker_id: String,
    pub sentence_id: u8,
    pub style: StyleLabel,
}

impl fmt::Display for ModelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.speaker_id, self.sentence_id, self.style)
    }
}

impl UttKey {
    pub fn model_key(&self) -> ModelKey {
        ModelKey {
            speaker_id: self.speaker_id.clone(),
            sentence_id: self.sentence_id,
            style: self.style,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub meta: UtteranceMeta,
    pub path: String,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn push(&mut self, meta: UtteranceMeta, path: String) -> Result<()> {
        let key = meta.key();
        if self.entries.iter().any(|e| e.meta.key() == key) {
            return Err(Error::DuplicateUtterance(key.to_string()));
        }
        self.entries.push(ManifestEntry { meta, path });
        Ok(())
    }

    pub fn lookup(&self, key: &UttKey) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| &e.meta.key() == key)
    }

    pub fn speakers(&self) -> Vec<(String, Gender)> {
        let mut out: Vec<(String, Gender)> = Vec::new();
        for e in &self.entries {
            let pair = (e.meta.speaker_id.clone(), e.meta.gender);
            if !out.contains(&pair) {
                out.push(pair);
            }
        }
        out.sort();
        out
    }

    /// Header: `speaker,gender,sentence,style,token,path`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("speaker,gender,sentence,style,token,path\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.meta.speaker_id,
                e.meta.gender,
                e.meta.sentence_id,
                e.meta.style,
                e.meta.token_index,
                e.path
            ));
        }
        fs::write(path, s).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_csv(path: &Path) -> Result<CorpusManifest> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest = CorpusManifest::default();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line.trim() != "speaker,gender,sentence,style,token,path" {
                    return Err(Error::ManifestParse {
                        line: 1,
                        msg: format!("unexpected header {line:?}"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parse = |msg: String| Error::ManifestParse { line: i + 1, msg };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(parse(format!("expected 6 fields, found {}", fields.len())));
            }
            let gender = Gender::from_str(fields[1]).map_err(&parse)?;
            let sentence_id: u8 = fields[2]
                .parse()
                .map_err(|e| parse(format!("bad sentence id: {e}")))?;
            let style = StyleLabel::from_str(fields[3]).map_err(&parse)?;
            let token_index: u8 = fields[4]
                .parse()
                .map_err(|e| parse(format!("bad token index: {e}")))?;
            if !(1..=8).contains(&sentence_id) {
                return Err(parse(format!("sentence id {sentence_id} out of 1..8")));
            }
            if !(1..=9).contains(&token_index) {
                return Err(parse(format!("token index {token_index} out of 1..9")));
            }
            manifest.push(
                UtteranceMeta {
                    speaker_id: fields[0].to_string(),
                    gender,
                    sentence_id,
                    style,
                    token_index,
                },
                fields[5].to_string(),
            )?;
        }
        Ok(manifest)
    }
}

/// Resolves an utterance key to audio. Backed by WAV files on disk or by
/// the deterministic synthetic generator.
pub trait ClipSource: Sync {
    fn load(&self, key: &UttKey) -> Result<AudioClip>;
}

/// Reads clips from the WAV paths recorded in a manifest, relative to a base
/// directory.
pub struct DiskSource {
    pub manifest: CorpusManifest,
    pub base_dir: PathBuf,
}

impl ClipSource for DiskSource {
    fn load(&self, key: &UttKey) -> Result<AudioClip> {
        let entry = self
            .manifest
            .lookup(key)
            .ok_or_else(|| Error::UnknownClaim(key.to_string()))?;
        read_wav(&self.base_dir.join(&entry.path))
    }
}

/// Generates clips on demand from the synthetic style model; no disk access.
pub struct SynthSource {
    pub manifest: CorpusManifest,
    pub master_seed: u64,
}

impl ClipSource for SynthSource {
    fn load(&self, key: &UttKey) -> Result<AudioClip> {
        let entry = self
            .manifest
            .lookup(key)
            .ok_or_else(|| Error::UnknownClaim(key.to_string()))?;
        let meta = &entry.meta;
        Ok(synth_clip(
            meta.style,
            meta.sentence_id,
            meta.gender,
            utterance_seed(self.master_seed, &meta.speaker_id, meta.sentence_id, meta.style, meta.token_index),
            meta.token_index,
        ))
    }
}

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------

fn read_u32_le(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn read_u16_le(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

/// Reads a RIFF/WAVE file holding 16-bit signed mono PCM. Samples are scaled
/// by 1/32768; the rate comes from the header.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let mut file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_wav(&bytes)
}

pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedWav("missing RIFF/WAVE magic".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32_le(&bytes[pos + 4..pos + 8]) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(Error::MalformedWav(format!(
                "chunk {:?} overruns file",
                String::from_utf8_lossy(id)
            )));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::MalformedWav("fmt chunk too small".into()));
                }
                fmt = Some((
                    read_u16_le(&body[0..2]),
                    read_u16_le(&body[2..4]),
                    read_u32_le(&body[4..8]),
                    read_u16_le(&body[14..16]),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_end + (size & 1);
    }
    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| Error::MalformedWav("missing fmt chunk".into()))?;
    if format != 1 {
        return Err(Error::UnsupportedWav(format!(
            "non-PCM format code {format}"
        )));
    }
    if channels != 1 {
        return Err(Error::UnsupportedWav(format!(
            "unsupported channel count {channels}"
        )));
    }
    if bits != 16 {
        return Err(Error::UnsupportedWav(format!("unsupported bit depth {bits}")));
    }
    if rate == 0 {
        return Err(Error::MalformedWav("zero sample rate".into()));
    }
    let data = data.ok_or_else(|| Error::MalformedWav("missing data chunk".into()))?;
    let n = data.len() / 2;
    if n == 0 {
        return Err(Error::MalformedWav("empty data chunk".into()));
    }
    let samples: Vec<f64> = (0..n)
        .map(|i| i16::from_le_bytes([data[2 * i], data[2 * i + 1]]) as f64 / 32768.0)
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate_hz: rate,
    })
}

/// Writes a clip as 16-bit signed mono PCM. Samples are clamped to [-1, 1].
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let n = clip.samples.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate_hz * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Train/test splits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct DataSplit {
    pub train: Vec<UttKey>,
    pub test: Vec<UttKey>,
}

/// Per (speaker, sentence, style) group: tokens 1-5 train (non-sad only),
/// tokens 6-9 test. Tokens 1-5 of the sad style are left unused. Every group
/// present must carry all 9 tokens.
pub fn split_train_test(manifest: &CorpusManifest) -> Result<DataSplit> {
    let mut groups: BTreeMap<ModelKey, Vec<u8>> = BTreeMap::new();
    for e in &manifest.entries {
        groups
            .entry(e.meta.key().model_key())
            .or_default()
            .push(e.meta.token_index);
    }
    let mut split = DataSplit::default();
    for (key, tokens) in &groups {
        if tokens.len() != 9 {
            return Err(Error::IncompleteGroup {
                group: key.to_string(),
                found: tokens.len(),
            });
        }
        for &t in tokens {
            let utt = UttKey {
                speaker_id: key.speaker_id.clone(),
                sentence_id: key.sentence_id,
                style: key.style,
                token_index: t,
            };
            if t <= 5 {
                if !key.style.is_open_set() {
                    split.train.push(utt);
                }
            } else {
                split.test.push(utt);
            }
        }
    }
    split.train.sort();
    split.test.sort();
    Ok(split)
}

/// Per-model training lists, keyed by the model identity.
#[derive(Debug, Clone, Default)]
pub struct TrainingPlan {
    pub per_model: BTreeMap<ModelKey, Vec<UttKey>>,
}

/// Each model trains on its own tokens 1-5.
pub fn single_speaker_plan(split: &DataSplit) -> TrainingPlan {
    let mut plan = TrainingPlan::default();
    for key in &split.train {
        plan.per_model
            .entry(key.model_key())
            .or_default()
            .push(key.clone());
    }
    plan
}

/// Multi-speaker training: each model's list additionally receives token 1
/// of every other speaker for the same (sentence, style). Test utterances
/// never enter training (only tokens 1-5 are drawn on).
pub fn multi_speaker_plan(split: &DataSplit, manifest: &CorpusManifest) -> TrainingPlan {
    let mut plan = single_speaker_plan(split);
    let speakers = manifest.speakers();
    for (model, list) in plan.per_model.iter_mut() {
        for (other, _) in &speakers {
            if other == &model.speaker_id {
                continue;
            }
            let donor = UttKey {
                speaker_id: other.clone(),
                sentence_id: model.sentence_id,
                style: model.style,
                token_index: 1,
            };
            if manifest.lookup(&donor).is_some() {
                list.push(donor);
            }
        }
        list.sort();
    }
    plan
}

// ---------------------------------------------------------------------------
// Synthetic styled-speech generator
// ---------------------------------------------------------------------------

/// Per-style synthesis parameters, relative to neutral. The jitter knobs
/// control how consistent tokens of a style are with each other: `jitter`
/// perturbs F0 per token (prosody-visible), `spectral_jitter` perturbs
/// formants per token (acoustic-only). Durations are scripted rather than
/// random: segment and pause lengths are whole multiples of the analysis
/// hop, and the `*_hops` knobs move the final segment by whole hops per the
/// recording protocol (see [`synth_clip`]). `session_drift` models the
/// recording-session effect: tokens produced in the second (test) session
/// carry a small systematic formant shift, and `session_hops` shortens them
/// (articulation-rate settling between sessions).
#[derive(Debug, Clone, Copy)]
pub struct StyleParams {
    pub f0_mul: f64,
    pub gain_mul: f64,
    pub dur_mul: f64,
    /// Per-token and intra-token random F0 deviation (relative).
    pub jitter: f64,
    /// Relative F0 rise from utterance start to end (happy).
    pub contour_rise: f64,
    /// Tremor modulation rate in Hz (0 = none).
    pub tremor_hz: f64,
    /// Per-token random perturbation of formant frequencies (relative std).
    pub spectral_jitter: f64,
    /// Per-token random scaling of overall loudness (relative).
    pub gain_jitter: f64,
    /// Systematic relative formant shift in the second recording session.
    pub session_drift: f64,
    /// Scripted tempo spread of the elicitation protocol: the first and last
    /// repetition of each session lengthen/shorten the final segment by this
    /// many hops.
    pub tempo_hops: i32,
    /// Extra final-segment shortening (hops) of the emphatic enrollment
    /// repetition, for effort-coupled styles.
    pub emph_hops: i32,
    /// Final-segment shortening (hops) of every second-session production,
    /// larger for styles that are hard to reproduce consistently.
    pub session_hops: i32,
    /// When set, one per-token effort draw drives F0 and loudness together
    /// instead of independent draws.
    pub effort_coupled: bool,
}

const NEUTRAL_PARAMS: StyleParams = StyleParams {
    f0_mul: 1.0,
    gain_mul: 1.0,
    dur_mul: 1.0,
    jitter: 0.001,
    contour_rise: 0.0,
    tremor_hz: 0.0,
    spectral_jitter: 0.0001,
    gain_jitter: 0.08,
    session_drift: 0.0,
    tempo_hops: 2,
    emph_hops: 0,
    session_hops: 0,
    effort_coupled: false,
};

pub fn style_params(style: StyleLabel) -> StyleParams {
    let n = NEUTRAL_PARAMS;
    match style {
        StyleLabel::Neutral => n,
        StyleLabel::Shouted => StyleParams {
            f0_mul: 1.8,
            gain_mul: 2.5,
            jitter: 0.0,
            spectral_jitter: 0.0008,
            gain_jitter: 0.25,
            tempo_hops: 0,
            emph_hops: 4,
            session_hops: 4,
            effort_coupled: true,
            ..n
        },
        StyleLabel::Slow => StyleParams {
            dur_mul: 1.6,
            jitter: 0.0,
            spectral_jitter: 0.0008,
            gain_jitter: 0.3,
            tempo_hops: 0,
            emph_hops: 4,
            session_hops: 4,
            effort_coupled: true,
            ..n
        },
        StyleLabel::Loud => StyleParams {
            f0_mul: 1.3,
            gain_mul: 2.0,
            jitter: 0.002,
            session_drift: 0.001,
            session_hops: 1,
            ..n
        },
        StyleLabel::Soft => StyleParams {
            f0_mul: 0.9,
            gain_mul: 0.4,
            jitter: 0.002,
            session_drift: 0.001,
            session_hops: 1,
            ..n
        },
        StyleLabel::Fast => StyleParams {
            dur_mul: 0.6,
            jitter: 0.0,
            spectral_jitter: 0.0008,
            gain_jitter: 0.3,
            tempo_hops: 0,
            emph_hops: 4,
            session_hops: 4,
            effort_coupled: true,
            ..n
        },
        StyleLabel::Angry => StyleParams {
            f0_mul: 1.5,
            gain_mul: 2.2,
            jitter: 0.004,
            session_drift: 0.0012,
            session_hops: 1,
            ..n
        },
        StyleLabel::Happy => StyleParams {
            f0_mul: 1.4,
            contour_rise: 0.25,
            jitter: 0.002,
            session_drift: 0.001,
            session_hops: 1,
            ..n
        },
        StyleLabel::Fearful => StyleParams {
            f0_mul: 1.3,
            tremor_hz: 6.0,
            jitter: 0.002,
            session_drift: 0.001,
            session_hops: 1,
            ..n
        },
        StyleLabel::Sad => StyleParams {
            f0_mul: 0.85,
            gain_mul: 0.7,
            dur_mul: 1.3,
            jitter: 0.002,
            session_drift: 0.001,
            session_hops: 1,
            ..n
        },
    }
}

pub fn base_f0_hz(gender: Gender) -> f64 {
    match gender {
        Gender::Male => 120.0,
        Gender::Female => 210.0,
    }
}

// Vowel formant targets (F1, F2, F3) in Hz.
const VOWELS: [[f64; 3]; 5] = [
    [800.0, 1200.0, 2500.0], // a
    [500.0, 1900.0, 2600.0], // e
    [300.0, 2300.0, 3000.0], // i
    [500.0, 900.0, 2400.0],  // o
    [320.0, 800.0, 2200.0],  // u
];

const FORMANT_BW: [f64; 3] = [90.0, 120.0, 180.0];

fn sentence_vowels(sentence_id: u8) -> Vec<usize> {
    // Three distinct vowels per sentence so segment structure is uniform
    // across the corpus; the vowel triple rotates with the sentence id.
    (0..3)
        .map(|k| (sentence_id as usize * 7 + k * 2) % VOWELS.len())
        .collect()
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a per-utterance seed from the corpus master seed and metadata.
pub fn utterance_seed(
    master_seed: u64,
    speaker_id: &str,
    sentence_id: u8,
    style: StyleLabel,
    token_index: u8,
) -> u64 {
    let mut h = splitmix64(master_seed);
    for b in speaker_id.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    h = splitmix64(h ^ (sentence_id as u64) << 8);
    h = splitmix64(h ^ (style as u64) << 16);
    splitmix64(h ^ (token_index as u64) << 24)
}

/// Deterministic styled clip, male voice, first enrollment token. See
/// [`synth_clip`] for the full form with gender and token-index control.
pub fn synth_style_clip(style: StyleLabel, sentence_id: u8, seed: u64) -> AudioClip {
    synth_clip(style, sentence_id, Gender::Male, seed, 1)
}

/// Harmonic vowel-sequence signal whose F0 contour, amplitude, and duration
/// follow the style parameter table. Pure function of its arguments.
/// `token_index` encodes the recording protocol: tokens 1-5 come from the
/// enrollment session (whose last repetition is deliberately emphatic for
/// effort-coupled styles), tokens 6+ from a later session that carries the
/// style's systematic formant drift.
pub fn synth_clip(
    style: StyleLabel,
    sentence_id: u8,
    gender: Gender,
    seed: u64,
    token_index: u8,
) -> AudioClip {
    let params = style_params(style);
    let rate = CANONICAL_RATE_HZ as f64;
    let second_session = token_index > 5;
    // Token randomness (seeded per utterance) carries only the style's
    // jitter knobs; everything structural about the sentence (harmonic
    // phases) is a pure function of (sentence, gender) so tokens of a
    // consistent style stay acoustically consistent.
    let mut rng = ChaCha8Rng::seed_from_u64(
        splitmix64(seed ^ (style as u64) << 32 ^ (sentence_id as u64) << 40 ^ (gender as u64) << 48),
    );
    let mut struct_rng = ChaCha8Rng::seed_from_u64(splitmix64(
        0x7a11_0000 ^ (sentence_id as u64) << 8 ^ gender as u64,
    ));

    let vowels = sentence_vowels(sentence_id);
    let n_seg = vowels.len();
    // Per-token "effort": styles that are hard to reproduce consistently
    // move F0 and loudness together from one draw. Enrollment (first
    // session) elicits tokens across a deliberately varied effort range;
    // second-session productions sit closer to the speaker's habitual
    // setting.
    let gauss = |rng: &mut ChaCha8Rng| -> f64 {
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        ((-2.0 * u1.ln()).sqrt() * u2.cos()).clamp(-2.5, 2.5)
    };
    // Second-session productions are calmer: the speaker has settled into
    // the task, so token-to-token wobble (effort, tempo, F0, formants)
    // shrinks relative to the enrollment session.
    let calm = if second_session { 0.3 } else { 1.0 };
    let effort = if params.effort_coupled {
        // Enrollment protocol: repetitions 1-4 near the habitual setting,
        // repetition 5 produced emphatically; later-session tokens cluster
        // around the habitual setting.
        let noise = 0.02 * calm * gauss(&mut rng);
        if !second_session && token_index == 5 { 2.2 + noise } else { noise }
    } else {
        let _ = gauss(&mut rng);
        calm * rng.gen_range(-1.0..1.0)
    };
    let gain_draw = if params.effort_coupled { effort } else { rng.gen_range(-1.0..1.0) };
    let f0_base =
        base_f0_hz(gender) * params.f0_mul * (1.0 + params.jitter * effort);
    let gain = 0.02 * params.gain_mul * (1.0 + params.gain_jitter * gain_draw);

    // Segment and pause lengths are whole multiples of the analysis hop
    // (7 ms), so scripted tempo differences between tokens shift the later
    // frames by whole frame counts instead of re-phasing every analysis
    // window against the waveform.
    const HOP_SAMPLES: usize = 112;
    let base_hops = (0.15 * params.dur_mul * rate / HOP_SAMPLES as f64).round() as i32;
    let pause_len =
        ((0.030 * params.dur_mul * rate / HOP_SAMPLES as f64).round() as usize).max(1) * HOP_SAMPLES;
    let mut samples: Vec<f64> = Vec::new();
    let mut total_dur_frac = 0.0;
    // Tempo protocol: the first repetition of each session lengthens the
    // final segment, the last one shortens it, the middle repetitions stay
    // at the base length. This keeps the per-model training spread scripted
    // and uniform instead of leaving it to a 5-sample draw. The emphatic
    // enrollment repetition runs extra fast, and all second-session
    // productions are shortened by the style's session settling.
    let tempo: i32 = match token_index {
        1 | 6 => 1,
        5 | 9 => -1,
        _ => 0,
    };
    let mut last_extra = tempo * params.tempo_hops;
    if params.effort_coupled && !second_session && token_index == 5 {
        last_extra -= params.emph_hops;
    }
    if second_session {
        last_extra -= params.session_hops;
    }
    let seg_lens: Vec<usize> = (0..n_seg)
        .map(|i| {
            let hops = if i + 1 == n_seg { base_hops + last_extra } else { base_hops };
            hops.max(4) as usize * HOP_SAMPLES
        })
        .collect();
    let utterance_secs: f64 =
        (seg_lens.iter().sum::<usize>() + pause_len * (n_seg - 1)) as f64 / rate;

    for (seg, &vowel) in vowels.iter().enumerate() {
        if seg > 0 {
            samples.extend(std::iter::repeat(0.0).take(pause_len));
            total_dur_frac += pause_len as f64 / rate / utterance_secs;
        }
        let seg_len = seg_lens[seg];
        // Per-token formant perturbation (spectral-consistency knob) plus
        // the systematic shift of the second recording session.
        let session_mul = if second_session { 1.0 + params.session_drift } else { 1.0 };
        let formants: Vec<f64> = VOWELS[vowel]
            .iter()
            .map(|&f| f * session_mul * (1.0 + params.spectral_jitter * calm * rng.gen_range(-1.0..1.0f64)))
            .collect();
        // Sentence-structural F0 declination: each segment sits at a fixed
        // small offset from the token's base F0, identical in every token of
        // the sentence.
        let seg_f0 = f0_base * (1.0 + 0.001 * struct_rng.gen_range(-1.0..1.0));
        let n_harm = ((rate / 2.0 - 200.0) / seg_f0).floor().min(40.0).max(3.0) as usize;
        // Formant envelope sampled at harmonic frequencies, unit-power.
        // `factor` scales all formant targets; the coarticulation glide
        // below sweeps it across each segment.
        let amps_at = |factor: f64| -> Vec<f64> {
            let mut amps: Vec<f64> = (1..=n_harm)
                .map(|h| {
                    let f = h as f64 * seg_f0;
                    let mut a = 0.0;
                    for (k, &fk) in formants.iter().enumerate() {
                        let d = (f - fk * factor) / FORMANT_BW[k];
                        a += 1.0 / (1.0 + d * d);
                    }
                    a / (1.0 + f / 1500.0)
                })
                .collect();
            let power: f64 = amps.iter().map(|a| a * a).sum();
            let norm = power.sqrt().max(1e-12);
            for a in amps.iter_mut() {
                *a /= norm;
            }
            amps
        };
        let phases: Vec<f64> = (0..n_harm)
            .map(|_| struct_rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();

        // Slow F0 wobble, piecewise linear over 10 ms blocks. Structural:
        // the intonation micro-contour is part of the sentence, so every
        // token of the sentence carries the same wobble.
        let block = (0.010 * rate) as usize;
        let n_blocks = seg_len / block + 2;
        let wobble: Vec<f64> = (0..n_blocks)
            .map(|_| params.jitter * struct_rng.gen_range(-1.0..1.0))
            .collect();

        // Coarticulation glide: formants sweep +/-10% across the segment,
        // the same way in every token of the sentence. Recomputed per 20 ms
        // block.
        const GLIDE: f64 = 0.0;
        let glide_block = (0.020 * rate) as usize;
        let ramp = (0.004 * rate) as usize;
        let mut phase = 0.0f64;
        let mut amps = amps_at(1.0 - GLIDE);
        for n in 0..seg_len {
            if n % glide_block == 0 {
                let seg_frac = n as f64 / seg_len.max(1) as f64;
                amps = amps_at(1.0 - GLIDE + 2.0 * GLIDE * seg_frac);
            }
            let t_global = total_dur_frac + (n as f64 / rate) / utterance_secs;
            let bi = n / block;
            let frac = (n % block) as f64 / block as f64;
            let wob = wobble[bi] * (1.0 - frac) + wobble[bi + 1] * frac;
            let tremor = if params.tremor_hz > 0.0 {
                0.03 * (std::f64::consts::TAU * params.tremor_hz * (samples.len() as f64 / rate)).sin()
            } else {
                0.0
            };
            let f0_t = seg_f0 * (1.0 + params.contour_rise * t_global + wob + tremor);
            phase += std::f64::consts::TAU * f0_t / rate;
            let mut v = 0.0;
            for h in 0..n_harm {
                v += amps[h] * ((h + 1) as f64 * phase + phases[h]).sin();
            }
            let env = if n < ramp {
                n as f64 / ramp as f64
            } else if n + ramp > seg_len {
                (seg_len - n) as f64 / ramp as f64
            } else {
                1.0
            };
            samples.push((gain * env * v).clamp(-1.0, 1.0));
        }
        total_dur_frac += seg_len as f64 / rate / utterance_secs;
    }

    // Low-level noise floor so no frame is exactly silent; scaled with gain
    // so the spectral balance is the same at every loudness. The noise
    // waveform itself is structural (a fixed room tone per sentence and
    // voice), so pause frames are as repeatable as voiced ones.
    let mut noise_rng = ChaCha8Rng::seed_from_u64(splitmix64(
        0x2007_0000 ^ (sentence_id as u64) << 8 ^ gender as u64,
    ));
    let noise = 0.0001 * gain;
    for s in samples.iter_mut() {
        *s = (*s + noise * noise_rng.gen_range(-1.0..1.0f64)).clamp(-1.0, 1.0);
    }

    AudioClip {
        samples,
        sample_rate_hz: CANONICAL_RATE_HZ,
    }
}

/// Builds an in-memory manifest for a synthetic corpus: `n_speakers`
/// (alternating male/female), 8 sentences, all 10 styles, 9 tokens each.
/// Paths follow `<speaker>/<style>_s<sentence>_t<token>.wav`.
pub fn synth_manifest(n_speakers: usize) -> CorpusManifest {
    let mut manifest = CorpusManifest::default();
    for sp in 0..n_speakers {
        let gender = if sp % 2 == 0 { Gender::Male } else { Gender::Female };
        let speaker_id = match gender {
            Gender::Male => format!("m{:02}", sp / 2 + 1),
            Gender::Female => format!("f{:02}", sp / 2 + 1),
        };
        for sentence_id in 1..=8u8 {
            for style in ALL_STYLES {
                for token_index in 1..=9u8 {
                    let meta = UtteranceMeta {
                        speaker_id: speaker_id.clone(),
                        gender,
                        sentence_id,
                        style,
                        token_index,
                    };
                    let path = format!(
                        "{speaker_id}/{style}_s{sentence_id}_t{token_index}.wav"
                    );
                    manifest.push(meta, path).expect("synthetic keys are unique");
                }
            }
        }
    }
    manifest
}

/// Writes a full synthetic corpus (WAVs + manifest.csv) under `out_dir`.
pub fn generate_corpus(out_dir: &Path, n_speakers: usize, master_seed: u64) -> Result<CorpusManifest> {
    let manifest = synth_manifest(n_speakers);
    for e in &manifest.entries {
        let path = out_dir.join(&e.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        let clip = synth_clip(
            e.meta.style,
            e.meta.sentence_id,
            e.meta.gender,
            utterance_seed(
                master_seed,
                &e.meta.speaker_id,
                e.meta.sentence_id,
                e.meta.style,
                e.meta.token_index,
            ),
            e.meta.token_index,
        );
        write_wav(&path, &clip)?;
    }
    manifest.write_csv(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_and_scaling() {
        let clip = AudioClip {
            samples: vec![-1.0, 0.0, 32767.0 / 32768.0, 0.5],
            sample_rate_hz: 16_000,
        };
        let dir = std::env::temp_dir().join("styleauth_wav_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.wav");
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate_hz, 16_000);
        assert_eq!(back.samples.len(), 4);
        // -1.0 encodes to -32767 under symmetric clamping, not -32768.
        assert!((back.samples[0] + 32767.0 / 32768.0).abs() < 1e-12);
        assert_eq!(back.samples[1], 0.0);
    }

    #[test]
    fn wav_extreme_sample_values() {
        // Hand-built file: -32768 maps to -1.0, +32767 to +32767/32768.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&40u32.to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&(-32768i16).to_le_bytes());
        bytes.extend_from_slice(&32767i16.to_le_bytes());
        let clip = parse_wav(&bytes).unwrap();
        assert_eq!(clip.samples[0], -1.0);
        assert_eq!(clip.samples[1], 32767.0 / 32768.0);
    }

    #[test]
    fn wav_rejects_stereo() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&40u32.to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&64000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 4]);
        match parse_wav(&bytes) {
            Err(Error::UnsupportedWav(msg)) => assert!(msg.contains("channel count")),
            other => panic!("expected unsupported-channel error, got {other:?}"),
        }
    }

    #[test]
    fn wav_rejects_garbage() {
        assert!(matches!(parse_wav(b"not a wav"), Err(Error::MalformedWav(_))));
    }

    #[test]
    fn full_size_split_counts() {
        let manifest = synth_manifest(20);
        let split = split_train_test(&manifest).unwrap();
        assert_eq!(split.train.len(), 7200);
        assert_eq!(split.test.len(), 6400);
    }

    #[test]
    fn single_group_split() {
        let mut manifest = CorpusManifest::default();
        for token_index in 1..=9u8 {
            manifest
                .push(
                    UtteranceMeta {
                        speaker_id: "m01".into(),
                        gender: Gender::Male,
                        sentence_id: 1,
                        style: StyleLabel::Neutral,
                        token_index,
                    },
                    format!("t{token_index}.wav"),
                )
                .unwrap();
        }
        let split = split_train_test(&manifest).unwrap();
        assert_eq!(split.train.len(), 5);
        assert_eq!(split.test.len(), 4);
        assert!(split.train.iter().all(|k| k.token_index <= 5));
        assert!(split.test.iter().all(|k| k.token_index >= 6));
    }

    #[test]
    fn split_is_partition_and_sad_excluded_from_train() {
        let manifest = synth_manifest(2);
        let split = split_train_test(&manifest).unwrap();
        for k in &split.train {
            assert_ne!(k.style, StyleLabel::Sad);
            assert!(!split.test.contains(k));
        }
        // Every token lands in exactly one of train / test / unused-sad-train.
        for e in &manifest.entries {
            let key = e.meta.key();
            let in_train = split.train.contains(&key);
            let in_test = split.test.contains(&key);
            let sad_unused = key.style == StyleLabel::Sad && key.token_index <= 5;
            assert_eq!(
                in_train as u8 + in_test as u8 + sad_unused as u8,
                1,
                "key {key} not in exactly one bucket"
            );
        }
    }

    #[test]
    fn incomplete_group_names_offender() {
        let mut manifest = CorpusManifest::default();
        for token_index in 1..=8u8 {
            manifest
                .push(
                    UtteranceMeta {
                        speaker_id: "m01".into(),
                        gender: Gender::Male,
                        sentence_id: 2,
                        style: StyleLabel::Loud,
                        token_index,
                    },
                    "x.wav".into(),
                )
                .unwrap();
        }
        match split_train_test(&manifest) {
            Err(Error::IncompleteGroup { group, found }) => {
                assert_eq!(group, "m01:2:loud");
                assert_eq!(found, 8);
            }
            other => panic!("expected IncompleteGroup, got {other:?}"),
        }
    }

    #[test]
    fn multispeaker_plan_growth() {
        let manifest = synth_manifest(20);
        let split = split_train_test(&manifest).unwrap();
        let plan = multi_speaker_plan(&split, &manifest);
        for (model, list) in &plan.per_model {
            assert_eq!(list.len(), 24, "model {model}");
        }
        // No test utterance enters training.
        let test: std::collections::BTreeSet<_> = split.test.iter().collect();
        for list in plan.per_model.values() {
            for k in list {
                assert!(!test.contains(k));
            }
        }
    }

    #[test]
    fn multispeaker_plan_two_speakers() {
        let manifest = synth_manifest(2);
        let split = split_train_test(&manifest).unwrap();
        let plan = multi_speaker_plan(&split, &manifest);
        for list in plan.per_model.values() {
            assert_eq!(list.len(), 6);
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_style_clip(StyleLabel::Neutral, 1, 42);
        let b = synth_style_clip(StyleLabel::Neutral, 1, 42);
        assert_eq!(a, b);
        let c = synth_style_clip(StyleLabel::Neutral, 1, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn shouted_rms_at_least_twice_neutral() {
        let shouted = synth_style_clip(StyleLabel::Shouted, 1, 42);
        let neutral = synth_style_clip(StyleLabel::Neutral, 1, 42);
        assert!(
            shouted.rms() >= 2.0 * neutral.rms(),
            "shouted rms {} vs neutral rms {}",
            shouted.rms(),
            neutral.rms()
        );
    }

    #[test]
    fn slow_longer_than_fast() {
        let slow = synth_style_clip(StyleLabel::Slow, 1, 42);
        let fast = synth_style_clip(StyleLabel::Fast, 1, 42);
        assert!(slow.samples.len() as f64 >= 1.5 * fast.samples.len() as f64);
    }

    #[test]
    fn manifest_csv_round_trip() {
        let manifest = synth_manifest(2);
        let dir = std::env::temp_dir().join("styleauth_manifest_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("manifest.csv");
        manifest.write_csv(&path).unwrap();
        let back = CorpusManifest::read_csv(&path).unwrap();
        assert_eq!(back.entries.len(), manifest.entries.len());
        assert_eq!(back.entries[0].meta, manifest.entries[0].meta);
        assert_eq!(back.entries.last().unwrap().path, manifest.entries.last().unwrap().path);
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let mut manifest = CorpusManifest::default();
        let meta = UtteranceMeta {
            speaker_id: "m01".into(),
            gender: Gender::Male,
            sentence_id: 1,
            style: StyleLabel::Neutral,
            token_index: 1,
        };
        manifest.push(meta.clone(), "a.wav".into()).unwrap();
        assert!(matches!(
            manifest.push(meta, "b.wav".into()),
            Err(Error::DuplicateUtterance(_))
        ));
    }
}
