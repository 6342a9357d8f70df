//! Suprasegmental front end: fundamental frequency, intensity, and duration
//! observed at segment rate.
//!
//! F0 uses its own 32 ms analysis windows (512 samples at 16 kHz) hopped on
//! the acoustic frame grid, so the 50 Hz lag of 320 samples fits. Voicing is
//! decided by the normalized autocorrelation peak against a threshold.

use std::ops::Range;

use crate::corpus::AudioClip;
use crate::error::{Error, Result};
use crate::frontend::FrontendConfig;

#[derive(Debug, Clone, Copy)]
pub struct ProsodyConfig {
    pub f0_window: usize,
    pub voicing_threshold: f64,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
}

impl Default for ProsodyConfig {
    fn default() -> Self {
        ProsodyConfig {
            f0_window: 512,
            voicing_threshold: 0.3,
            f0_min_hz: 50.0,
            f0_max_hz: 500.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FrameProsody {
    pub f0_hz: f64,
    pub energy_db: f64,
    pub voiced: bool,
}

/// Segment-level prosodic observation: voicing fraction, mean F0 over voiced
/// frames (0 if none), mean energy in dB, and log duration in frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProsodicVector {
    pub voicing_fraction: f64,
    pub mean_f0_hz: f64,
    pub mean_energy_db: f64,
    pub log_duration: f64,
}

pub const PROSODIC_DIM: usize = 4;

impl ProsodicVector {
    pub fn as_array(&self) -> [f64; PROSODIC_DIM] {
        [
            self.voicing_fraction,
            self.mean_f0_hz,
            self.mean_energy_db,
            self.log_duration,
        ]
    }
}

#[derive(Debug, Clone, Default)]
pub struct ProsodicSequence {
    pub vectors: Vec<ProsodicVector>,
}

pub const ENERGY_FLOOR_DB: f64 = -120.0;

/// 20 log10(RMS), floored at -120 dB.
pub fn frame_energy_db(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return ENERGY_FLOOR_DB;
    }
    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt();
    if rms <= 0.0 {
        return ENERGY_FLOOR_DB;
    }
    (20.0 * rms.log10()).max(ENERGY_FLOOR_DB)
}

/// Normalized autocorrelation over one analysis window at lag `tau`:
/// sum x[n] x[n+tau] / sqrt(sum x[n]^2 * sum x[n+tau]^2).
fn normalized_autocorr(x: &[f64], tau: usize) -> f64 {
    let n = x.len() - tau;
    let mut num = 0.0;
    let mut e0 = 0.0;
    let mut e1 = 0.0;
    for i in 0..n {
        num += x[i] * x[i + tau];
        e0 += x[i] * x[i];
        e1 += x[i + tau] * x[i + tau];
    }
    let denom = (e0 * e1).sqrt();
    if denom <= 0.0 {
        0.0
    } else {
        num / denom
    }
}

/// Autocorrelation-peak F0 estimate. Returns 0.0 for unvoiced windows.
///
/// Among local maxima within 90% of the strongest peak, the smallest lag is
/// taken (a pure tone correlates equally at every period multiple), then the
/// lag is refined by parabolic interpolation.
pub fn estimate_f0(window: &[f64], rate_hz: u32, config: &ProsodyConfig) -> f64 {
    let rate = rate_hz as f64;
    let lag_min = (rate / config.f0_max_hz).floor().max(2.0) as usize;
    let lag_max = ((rate / config.f0_min_hz).ceil() as usize).min(window.len().saturating_sub(8));
    if lag_max <= lag_min + 1 {
        return 0.0;
    }
    let corr: Vec<f64> = (lag_min..=lag_max)
        .map(|tau| normalized_autocorr(window, tau))
        .collect();
    let best = corr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if best < config.voicing_threshold {
        return 0.0;
    }
    // Smallest-lag local maximum close to the global best.
    let mut pick: Option<usize> = None;
    for i in 1..corr.len() - 1 {
        if corr[i] >= corr[i - 1] && corr[i] >= corr[i + 1] && corr[i] >= 0.9 * best {
            pick = Some(i);
            break;
        }
    }
    let i = match pick {
        Some(i) => i,
        None => return 0.0,
    };
    let (y0, y1, y2) = (corr[i - 1], corr[i], corr[i + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let offset = if denom.abs() > 1e-12 {
        (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let lag = (lag_min + i) as f64 + offset;
    let f0 = rate / lag;
    f0.clamp(config.f0_min_hz, config.f0_max_hz)
}

/// Per-frame prosody on the acoustic frame grid. The F0 window starts at the
/// frame start and is pulled back at the clip tail so it always fits.
pub fn frame_prosody(
    clip: &AudioClip,
    frame_start: usize,
    frontend: &FrontendConfig,
    config: &ProsodyConfig,
) -> FrameProsody {
    let len = clip.samples.len();
    let f0_win = config.f0_window.min(len);
    let start = frame_start.min(len - f0_win);
    let window = &clip.samples[start..start + f0_win];
    let f0_hz = estimate_f0(window, clip.sample_rate_hz, config);
    let frame_len = frontend.frame_len().min(len - frame_start.min(len));
    let energy_db = frame_energy_db(&clip.samples[frame_start..frame_start + frame_len]);
    FrameProsody {
        f0_hz,
        energy_db,
        voiced: f0_hz > 0.0,
    }
}

/// Frame-level prosody for a whole clip, computed once and shared across
/// every segmentation of the same clip.
#[derive(Debug, Clone, Default)]
pub struct ClipProsody {
    pub frames: Vec<FrameProsody>,
}

pub fn clip_prosody(
    clip: &AudioClip,
    frame_times: &[usize],
    frontend: &FrontendConfig,
    config: &ProsodyConfig,
) -> ClipProsody {
    ClipProsody {
        frames: frame_times
            .iter()
            .map(|&t| frame_prosody(clip, t, frontend, config))
            .collect(),
    }
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn aggregate_segment(frames: impl Iterator<Item = FrameProsody>, count: usize) -> ProsodicVector {
    let mut voiced_f0: Vec<f64> = Vec::new();
    let mut voiced_energy: Vec<f64> = Vec::new();
    let mut all_energy: Vec<f64> = Vec::new();
    for p in frames {
        if p.voiced {
            voiced_f0.push(p.f0_hz);
            voiced_energy.push(p.energy_db);
        }
        all_energy.push(p.energy_db);
    }
    let voiced = voiced_f0.len();
    // Segment F0 and intensity are medians over voiced frames: robust both
    // to per-frame tracking slips and to small shifts of the segment
    // boundaries, which add or drop low-energy edge or pause frames.
    let f0 = if voiced > 0 { median(&mut voiced_f0) } else { 0.0 };
    let energy = if voiced > 0 {
        median(&mut voiced_energy)
    } else {
        median(&mut all_energy)
    };
    ProsodicVector {
        voicing_fraction: voiced as f64 / count as f64,
        mean_f0_hz: f0,
        mean_energy_db: energy,
        log_duration: (count as f64).ln(),
    }
}

/// One prosodic vector per segment over precomputed frame prosody.
pub fn vectors_from_frames(
    frames: &[FrameProsody],
    segments: &[Range<usize>],
) -> Result<ProsodicSequence> {
    let mut vectors = Vec::with_capacity(segments.len());
    for (si, seg) in segments.iter().enumerate() {
        if seg.is_empty() {
            return Err(Error::EmptySegment(si));
        }
        vectors.push(aggregate_segment(
            frames[seg.clone()].iter().copied(),
            seg.len(),
        ));
    }
    Ok(ProsodicSequence { vectors })
}

/// One prosodic vector per segment. Segments are frame-index ranges over the
/// acoustic frame grid (`frame_times` from the observation sequence).
pub fn build_prosodic_sequence(
    clip: &AudioClip,
    frame_times: &[usize],
    segments: &[Range<usize>],
    frontend: &FrontendConfig,
    config: &ProsodyConfig,
) -> Result<ProsodicSequence> {
    let mut vectors = Vec::with_capacity(segments.len());
    for (si, seg) in segments.iter().enumerate() {
        if seg.is_empty() {
            return Err(Error::EmptySegment(si));
        }
        vectors.push(aggregate_segment(
            seg.clone()
                .map(|fi| frame_prosody(clip, frame_times[fi], frontend, config)),
            seg.len(),
        ));
    }
    Ok(ProsodicSequence { vectors })
}

/// Debug dump: `seg_index,voicing,f0,energy_db,log_dur` per line.
pub fn format_prosody_dump(seq: &ProsodicSequence) -> String {
    let mut out = String::from("seg_index,voicing,f0,energy_db,log_dur\n");
    for (i, v) in seq.vectors.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.4},{:.2},{:.2},{:.4}\n",
            i, v.voicing_fraction, v.mean_f0_hz, v.mean_energy_db, v.log_duration
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, n: usize, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (std::f64::consts::TAU * freq * i as f64 / 16_000.0).sin())
            .collect()
    }

    #[test]
    fn f0_pure_sine_100hz() {
        let cfg = ProsodyConfig::default();
        let f0 = estimate_f0(&sine(100.0, 512, 0.5), 16_000, &cfg);
        assert!((99.0..=101.0).contains(&f0), "f0 = {f0}");
    }

    #[test]
    fn f0_accuracy_across_range() {
        let cfg = ProsodyConfig::default();
        let mut f = 60.0;
        while f <= 400.0 {
            let est = estimate_f0(&sine(f, 512, 0.5), 16_000, &cfg);
            assert!((est - f).abs() <= 1.0, "f = {f}, est = {est}");
            f += 7.3;
        }
    }

    #[test]
    fn f0_zero_window_unvoiced() {
        let cfg = ProsodyConfig::default();
        assert_eq!(estimate_f0(&vec![0.0; 512], 16_000, &cfg), 0.0);
    }

    #[test]
    fn f0_white_noise_mostly_unvoiced() {
        let cfg = ProsodyConfig::default();
        let mut unvoiced = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise: Vec<f64> = (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if estimate_f0(&noise, 16_000, &cfg) == 0.0 {
                unvoiced += 1;
            }
        }
        assert!(unvoiced >= 90, "unvoiced in {unvoiced}/100 trials");
    }

    #[test]
    fn energy_values() {
        assert!((frame_energy_db(&[1.0; 256]) - 0.0).abs() < 1e-12);
        let db = frame_energy_db(&sine(250.0, 256, 1.0));
        assert!((db + 3.01).abs() < 0.05, "sine energy {db}");
        assert_eq!(frame_energy_db(&[0.0; 256]), ENERGY_FLOOR_DB);
    }

    #[test]
    fn prosodic_sequence_voiced_segment() {
        // Amplitude 1.0 so RMS is 1/sqrt(2): about -3.01 dB.
        let clip = AudioClip {
            samples: sine(100.0, 4000, 1.0),
            sample_rate_hz: 16_000,
        };
        let fe = FrontendConfig::default();
        let pc = ProsodyConfig::default();
        let frame_times: Vec<usize> = (0..10).map(|i| i * fe.hop()).collect();
        let seq = build_prosodic_sequence(&clip, &frame_times, &[0..10], &fe, &pc).unwrap();
        let v = seq.vectors[0];
        assert_eq!(v.voicing_fraction, 1.0);
        assert!((v.mean_f0_hz - 100.0).abs() < 1.0);
        assert!((v.mean_energy_db + 3.01).abs() < 0.1);
        assert!((v.log_duration - (10f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn prosodic_sequence_unvoiced_sentinel() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let clip = AudioClip {
            samples: (0..4000).map(|_| rng.gen_range(-0.1..0.1)).collect(),
            sample_rate_hz: 16_000,
        };
        let fe = FrontendConfig::default();
        let pc = ProsodyConfig::default();
        let frame_times: Vec<usize> = (0..8).map(|i| i * fe.hop()).collect();
        let seq = build_prosodic_sequence(&clip, &frame_times, &[0..8], &fe, &pc).unwrap();
        let v = seq.vectors[0];
        if v.voicing_fraction == 0.0 {
            assert_eq!(v.mean_f0_hz, 0.0);
        }
        assert!(v.mean_energy_db < 0.0);
    }

    #[test]
    fn prosodic_sequence_two_segments_ordered() {
        let clip = AudioClip {
            samples: sine(150.0, 6000, 0.5),
            sample_rate_hz: 16_000,
        };
        let fe = FrontendConfig::default();
        let pc = ProsodyConfig::default();
        let frame_times: Vec<usize> = (0..20).map(|i| i * fe.hop()).collect();
        let seq =
            build_prosodic_sequence(&clip, &frame_times, &[0..12, 12..20], &fe, &pc).unwrap();
        assert_eq!(seq.vectors.len(), 2);
        assert!((seq.vectors[0].log_duration - (12f64).ln()).abs() < 1e-12);
        assert!((seq.vectors[1].log_duration - (8f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_segment_errors() {
        let clip = AudioClip {
            samples: sine(150.0, 4000, 0.5),
            sample_rate_hz: 16_000,
        };
        let fe = FrontendConfig::default();
        let pc = ProsodyConfig::default();
        let frame_times: Vec<usize> = (0..10).map(|i| i * fe.hop()).collect();
        assert!(matches!(
            build_prosodic_sequence(&clip, &frame_times, &[3..3], &fe, &pc),
            Err(Error::EmptySegment(0))
        ));
    }

    #[test]
    fn gain_invariance() {
        // Constant gain leaves f0 and duration unchanged and shifts energy
        // by exactly 20 log10(gain).
        let base = sine(120.0, 6000, 0.25);
        let gain = 2.0;
        let scaled: Vec<f64> = base.iter().map(|s| s * gain).collect();
        let fe = FrontendConfig::default();
        let pc = ProsodyConfig::default();
        let frame_times: Vec<usize> = (0..16).map(|i| i * fe.hop()).collect();
        let a = build_prosodic_sequence(
            &AudioClip { samples: base, sample_rate_hz: 16_000 },
            &frame_times,
            &[0..16],
            &fe,
            &pc,
        )
        .unwrap();
        let b = build_prosodic_sequence(
            &AudioClip { samples: scaled, sample_rate_hz: 16_000 },
            &frame_times,
            &[0..16],
            &fe,
            &pc,
        )
        .unwrap();
        let (va, vb) = (a.vectors[0], b.vectors[0]);
        assert_eq!(va.voicing_fraction, vb.voicing_fraction);
        assert!((va.mean_f0_hz - vb.mean_f0_hz).abs() < 1e-9);
        assert!((va.log_duration - vb.log_duration).abs() < 1e-12);
        assert!((vb.mean_energy_db - va.mean_energy_db - 20.0 * gain.log10()).abs() < 1e-9);
    }
}
