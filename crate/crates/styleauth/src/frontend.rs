//! Acoustic front end: 16 ms frames with 9 ms overlap, Hamming window,
//! 16th-order LPC by the autocorrelation method, and the cepstral recursion
//! producing 16-dim LPCC observation vectors.
//!
//! Predictor sign convention: A(z) = 1 - sum_k a_k z^-k, so the predictor is
//! x_hat[n] = sum_k a_k x[n-k] and the normal equations read R a = r with
//! positive right-hand side. Both conventions appear in the literature; this
//! one is fixed here and assumed by the cepstral recursion below.

use crate::corpus::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct FrontendConfig {
    pub sample_rate_hz: u32,
    pub frame_ms: u32,
    pub overlap_ms: u32,
    pub lpc_order: usize,
    pub n_ceps: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            sample_rate_hz: 16_000,
            frame_ms: 16,
            overlap_ms: 9,
            lpc_order: 16,
            n_ceps: 16,
        }
    }
}

impl FrontendConfig {
    pub fn frame_len(&self) -> usize {
        (self.sample_rate_hz * self.frame_ms / 1000) as usize
    }

    pub fn hop(&self) -> usize {
        (self.sample_rate_hz * (self.frame_ms - self.overlap_ms) / 1000) as usize
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub samples: Vec<f64>,
    pub start_index: usize,
}

#[derive(Debug, Clone)]
pub struct LpcVector {
    pub a: Vec<f64>,
    pub gain_sq: f64,
}

#[derive(Debug, Clone)]
pub struct LpccVector {
    pub c: Vec<f64>,
}

/// Per-frame LPCC vectors plus the start sample of each frame. Frames that
/// failed the energy guard are skipped; `skipped` counts them.
#[derive(Debug, Clone)]
pub struct ObservationSequence {
    pub vectors: Vec<Vec<f64>>,
    pub frame_times: Vec<usize>,
    pub skipped: usize,
}

impl ObservationSequence {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Frame count is floor((L - frame_len)/hop) + 1; the trailing partial frame
/// is dropped.
pub fn frame_signal(clip: &AudioClip, config: &FrontendConfig) -> Result<Vec<Frame>> {
    let frame_len = config.frame_len();
    let hop = config.hop();
    let len = clip.samples.len();
    if len < frame_len {
        return Err(Error::UtteranceTooShort {
            samples: len,
            needed: frame_len,
        });
    }
    let count = (len - frame_len) / hop + 1;
    Ok((0..count)
        .map(|i| {
            let start = i * hop;
            Frame {
                samples: clip.samples[start..start + frame_len].to_vec(),
                start_index: start,
            }
        })
        .collect())
}

/// w[n] = 0.54 - 0.46 cos(2 pi n / (L-1)).
pub fn apply_hamming(frame: &Frame) -> Frame {
    let len = frame.samples.len();
    let samples = frame
        .samples
        .iter()
        .enumerate()
        .map(|(n, &x)| {
            let w = if len > 1 {
                0.54 - 0.46 * (std::f64::consts::TAU * n as f64 / (len - 1) as f64).cos()
            } else {
                1.0
            };
            x * w
        })
        .collect();
    Frame {
        samples,
        start_index: frame.start_index,
    }
}

/// r[k] = sum_n x[n] x[n+k], k = 0..=order.
pub fn autocorrelate(samples: &[f64], order: usize) -> Vec<f64> {
    let len = samples.len();
    (0..=order)
        .map(|k| {
            let mut sum = 0.0;
            for n in 0..len.saturating_sub(k) {
                sum += samples[n] * samples[n + k];
            }
            sum
        })
        .collect()
}

/// Levinson-Durbin recursion solving the Yule-Walker equations for the
/// predictor coefficients. Returns the coefficients and the final prediction
/// error energy.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcVector> {
    if r.len() < order + 1 {
        return Err(Error::DegenerateFrame);
    }
    if !(r[0] > 0.0) || !r[0].is_finite() {
        return Err(Error::DegenerateFrame);
    }
    let mut a = vec![0.0f64; order + 1]; // a[1..=order]; a[0] unused
    let mut err = r[0];
    for i in 1..=order {
        let mut acc = r[i];
        for j in 1..i {
            acc -= a[j] * r[i - j];
        }
        if err <= 0.0 || !acc.is_finite() {
            return Err(Error::DegenerateFrame);
        }
        let k = acc / err;
        // Update a[1..=i] in place using the reflected previous coefficients.
        let prev = a.clone();
        a[i] = k;
        for j in 1..i {
            a[j] = prev[j] - k * prev[i - j];
        }
        err *= 1.0 - k * k;
        if !err.is_finite() {
            return Err(Error::DegenerateFrame);
        }
    }
    Ok(LpcVector {
        a: a[1..].to_vec(),
        gain_sq: err,
    })
}

/// Cepstral recursion for the minimum-phase spectrum 1/A(z):
/// c_n = a_n + sum_{k=1}^{n-1} (k/n) c_k a_{n-k}, extended with
/// c_n = sum_{k=n-p}^{n-1} (k/n) c_k a_{n-k} for n > p when more cepstral
/// terms than predictor coefficients are requested.
pub fn lpc_to_lpcc(lpc: &LpcVector, n_ceps: usize) -> LpccVector {
    let p = lpc.a.len();
    let mut c = vec![0.0f64; n_ceps + 1]; // c[1..=n_ceps]
    for n in 1..=n_ceps {
        let mut acc = if n <= p { lpc.a[n - 1] } else { 0.0 };
        let k_lo = n.saturating_sub(p).max(1);
        for k in k_lo..n {
            acc += (k as f64 / n as f64) * c[k] * lpc.a[n - k - 1];
        }
        c[n] = acc;
    }
    LpccVector { c: c[1..].to_vec() }
}

/// Full pipeline: frame, window, autocorrelate, LPC, LPCC. Degenerate frames
/// (zero or non-finite energy) are skipped and counted.
pub fn extract_observations(clip: &AudioClip, config: &FrontendConfig) -> Result<ObservationSequence> {
    let frames = frame_signal(clip, config)?;
    let mut vectors = Vec::with_capacity(frames.len());
    let mut frame_times = Vec::with_capacity(frames.len());
    let mut skipped = 0usize;
    for frame in &frames {
        let windowed = apply_hamming(frame);
        let r = autocorrelate(&windowed.samples, config.lpc_order);
        match levinson_durbin(&r, config.lpc_order) {
            Ok(lpc) => {
                let lpcc = lpc_to_lpcc(&lpc, config.n_ceps);
                if lpcc.c.iter().all(|v| v.is_finite()) {
                    vectors.push(lpcc.c);
                    frame_times.push(frame.start_index);
                } else {
                    skipped += 1;
                }
            }
            Err(Error::DegenerateFrame) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if vectors.is_empty() {
        return Err(Error::NoUsableFrames { skipped });
    }
    Ok(ObservationSequence {
        vectors,
        frame_times,
        skipped,
    })
}

/// Debug dump: one line per frame, start sample then 16 floats.
pub fn format_feature_dump(obs: &ObservationSequence) -> String {
    let mut out = String::new();
    for (t, v) in obs.frame_times.iter().zip(&obs.vectors) {
        out.push_str(&t.to_string());
        for x in v {
            out.push(' ');
            out.push_str(&format!("{x:.6}"));
        }
        out.push('\n');
    }
    out
}
