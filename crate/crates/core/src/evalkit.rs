//! Degradation (noise at a set SNR, room impulse responses) and objective
//! metrics, plus magnitude-only signal reconstruction.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::{self, RealSpectrogram, SpectralDomain, Spectrogram, StftGeometry};

pub const SEG_SNR_MIN_DB: f64 = -10.0;
pub const SEG_SNR_MAX_DB: f64 = 35.0;

/// Frames this far below the loudest frame are treated as inactive / silent.
pub const ACTIVITY_RANGE_DB: f64 = 40.0;

/// Block length used when locating the active region of a signal.
pub const ACTIVITY_BLOCK: usize = 256;

fn block_energies(x: &[f64], block: usize) -> Vec<f64> {
    x.chunks(block).map(|c| c.iter().map(|v| v * v).sum()).collect()
}

/// Per-sample mask of the blocks within [`ACTIVITY_RANGE_DB`] of the loudest one.
pub fn active_mask(x: &[f64]) -> Vec<bool> {
    let energies = block_energies(x, ACTIVITY_BLOCK);
    let peak = energies.iter().cloned().fold(0.0, f64::max);
    let threshold = peak * 10f64.powf(-ACTIVITY_RANGE_DB / 10.0);
    let mut mask = Vec::with_capacity(x.len());
    for (chunk, e) in x.chunks(ACTIVITY_BLOCK).zip(&energies) {
        let active = peak > 0.0 && *e >= threshold;
        mask.extend(std::iter::repeat_n(active, chunk.len()));
    }
    mask
}

fn masked_power(x: &[f64], mask: &[bool]) -> f64 {
    let (sum, n) = x
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Signal-to-noise ratio of `clean` against `noise` over the active region of `clean`.
pub fn active_snr_db(clean: &[f64], noise: &[f64]) -> Result<f64> {
    if clean.len() != noise.len() {
        return Err(Error::ShapeMismatch {
            expected: (clean.len(), 1),
            got: (noise.len(), 1),
        });
    }
    let mask = active_mask(clean);
    Ok(10.0 * (masked_power(clean, &mask) / masked_power(noise, &mask)).log10())
}

/// `clean` plus `noise` scaled to `snr_db` over the active region of `clean`.
///
/// The noise is read cyclically from an offset drawn from `seed`. An infinite
/// `snr_db` returns `clean` unchanged.
pub fn add_noise_at_snr(clean: &[f64], noise: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if snr_db == f64::INFINITY {
        return Ok(clean.to_vec());
    }
    if !snr_db.is_finite() {
        return Err(Error::param("snr_db", format!("must be finite or +inf, got {snr_db}")));
    }
    if noise.is_empty() {
        return Err(Error::param("noise", "zero power"));
    }
    let offset = ChaCha8Rng::seed_from_u64(seed).random_range(0..noise.len());
    let segment: Vec<f64> = (0..clean.len()).map(|i| noise[(offset + i) % noise.len()]).collect();
    let mask = active_mask(clean);
    let p_clean = masked_power(clean, &mask);
    let p_noise = masked_power(&segment, &mask);
    if !(p_clean > 0.0) {
        return Err(Error::param("clean", "zero power"));
    }
    if !(p_noise > 0.0) {
        return Err(Error::param("noise", "zero power over the active region"));
    }
    let scale = (p_clean / p_noise * 10f64.powf(-snr_db / 10.0)).sqrt();
    Ok(clean.iter().zip(&segment).map(|(c, n)| c + scale * n).collect())
}

/// Kernels up to this length are convolved directly.
const DIRECT_CONV_MAX: usize = 64;

/// Full linear convolution; direct for short kernels, FFT otherwise.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let (long, short) = if x.len() >= h.len() { (x, h) } else { (h, x) };
    if short.len() <= DIRECT_CONV_MAX {
        let mut y = vec![0.0; out_len];
        for (k, &c) in short.iter().enumerate() {
            for (yi, &v) in y[k..].iter_mut().zip(long) {
                *yi += c * v;
            }
        }
        return y;
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |v: &[f64]| {
        let mut buf: Vec<Complex64> = v.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        buf.resize(n, Complex64::new(0.0, 0.0));
        buf
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a[..out_len].iter().map(|c| c.re / n as f64).collect()
}

/// Reverberation (full convolution) followed by noise mixing at `snr_db`
/// relative to the reverberant signal.
pub fn degrade(clean: &[f64], rir: Option<&[f64]>, noise: Option<&[f64]>, snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if rir.is_none() && noise.is_none() {
        return Err(Error::param("degrade", "needs a room impulse response or a noise signal"));
    }
    let reverberant = match rir {
        Some([]) => return Err(Error::param("rir", "empty")),
        Some(h) => convolve(clean, h),
        None => clean.to_vec(),
    };
    match noise {
        Some(n) => add_noise_at_snr(&reverberant, n, snr_db, seed),
        None => Ok(reverberant),
    }
}

/// Mean over non-overlapping frames of the clamped per-frame SNR; frames where
/// the reference is silent are skipped.
pub fn seg_snr(reference: &[f64], test: &[f64], frame_len: usize) -> Result<f64> {
    let frames = seg_snr_frames(reference, test, frame_len)?;
    Ok(frames.iter().sum::<f64>() / frames.len() as f64)
}

/// Per-frame clamped SNRs of the frames that count towards [`seg_snr`].
pub fn seg_snr_frames(reference: &[f64], test: &[f64], frame_len: usize) -> Result<Vec<f64>> {
    if reference.len() != test.len() {
        return Err(Error::ShapeMismatch {
            expected: (reference.len(), 1),
            got: (test.len(), 1),
        });
    }
    if frame_len == 0 {
        return Err(Error::param("frame_len", "must be positive"));
    }
    let n_frames = reference.len() / frame_len;
    let energy = |r: std::ops::Range<usize>| reference[r].iter().map(|v| v * v).sum::<f64>();
    let peak = (0..n_frames)
        .map(|f| energy(f * frame_len..(f + 1) * frame_len))
        .fold(0.0, f64::max);
    let threshold = peak * 10f64.powf(-ACTIVITY_RANGE_DB / 10.0);
    let values: Vec<f64> = (0..n_frames)
        .filter_map(|f| {
            let r = f * frame_len..(f + 1) * frame_len;
            let signal = energy(r.clone());
            if peak <= 0.0 || signal < threshold {
                return None;
            }
            let err: f64 = reference[r.clone()].iter().zip(&test[r]).map(|(a, b)| (a - b) * (a - b)).sum();
            let snr = if err > 0.0 {
                10.0 * (signal / err).log10()
            } else {
                SEG_SNR_MAX_DB
            };
            Some(snr.clamp(SEG_SNR_MIN_DB, SEG_SNR_MAX_DB))
        })
        .collect();
    if values.is_empty() {
        return Err(Error::param("reference", "all frames silent"));
    }
    Ok(values)
}

/// Log-spectral distance in dB between two log-power spectrograms.
pub fn lsd(reference: &RealSpectrogram, test: &RealSpectrogram) -> Result<f64> {
    for s in [reference, test] {
        if s.domain != SpectralDomain::LogPower {
            return Err(Error::param("domain", "log-spectral distance needs log-power spectrograms"));
        }
    }
    lsd_values(reference.values.view(), test.values.view())
}

/// [`lsd`] on raw `T x K` natural-log power matrices.
pub fn lsd_values(reference: ArrayView2<f64>, test: ArrayView2<f64>) -> Result<f64> {
    if reference.dim() != test.dim() {
        return Err(Error::ShapeMismatch {
            expected: reference.dim(),
            got: test.dim(),
        });
    }
    let (n_frames, n_bins) = reference.dim();
    if n_frames == 0 || n_bins == 0 {
        return Err(Error::param("spectrogram", "empty"));
    }
    let to_db = 10.0 / std::f64::consts::LN_10;
    let total: f64 = reference
        .rows()
        .into_iter()
        .zip(test.rows())
        .map(|(r, t)| {
            let ms = r.iter().zip(t).map(|(a, b)| (to_db * (a - b)).powi(2)).sum::<f64>() / n_bins as f64;
            ms.sqrt()
        })
        .sum();
    Ok(total / n_frames as f64)
}

/// Log-spectral distance between two time signals of equal length.
pub fn signal_lsd(reference: &[f64], test: &[f64], geometry: &StftGeometry) -> Result<f64> {
    let a = stft::to_domain(&stft::analyze(reference, geometry)?, SpectralDomain::LogPower);
    let b = stft::to_domain(&stft::analyze(test, geometry)?, SpectralDomain::LogPower);
    lsd(&a, &b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReconstruction {
    pub signal: Vec<f64>,
    /// Distance between the magnitude-constrained spectrogram and its
    /// re-analysis, one entry per iteration.
    pub consistency_errors: Vec<f64>,
}

/// Alternates between imposing `target_mag` and taking the phase of the
/// re-analysed inverse transform. `init_phase` defaults to zero.
pub fn iterative_phase_reconstruct(
    target_mag: ArrayView2<f64>,
    init_phase: Option<ArrayView2<f64>>,
    geometry: &StftGeometry,
    iterations: usize,
) -> Result<PhaseReconstruction> {
    if iterations == 0 {
        return Err(Error::param("iterations", "must be at least 1"));
    }
    geometry.check_cola()?;
    let (n_frames, n_bins) = target_mag.dim();
    if n_bins != geometry.n_bins() || n_frames == 0 {
        return Err(Error::ShapeMismatch {
            expected: (n_frames.max(1), geometry.n_bins()),
            got: target_mag.dim(),
        });
    }
    let mut phase: Array2<f64> = match init_phase {
        Some(p) if p.dim() != target_mag.dim() => {
            return Err(Error::ShapeMismatch {
                expected: target_mag.dim(),
                got: p.dim(),
            })
        }
        Some(p) => p.to_owned(),
        None => Array2::zeros(target_mag.dim()),
    };
    // Interior bins stand for a conjugate pair in the two-sided spectrum.
    let bin_weight = |k: usize| if k == 0 || k + 1 == n_bins { 1.0 } else { 2.0 };
    let mut errors = Vec::with_capacity(iterations);
    let mut signal = Vec::new();
    for _ in 0..iterations {
        let mut frames = Array2::zeros(target_mag.dim());
        frames.zip_mut_with(&target_mag, |c: &mut Complex64, &m| *c = Complex64::new(m, 0.0));
        frames.zip_mut_with(&phase, |c, &p| *c *= Complex64::from_polar(1.0, p));
        let imposed = Spectrogram::from_frames(frames, *geometry)?;
        signal = stft::synthesize(&imposed)?;
        let again = stft::analyze(&signal, geometry)?;
        let mut err = 0.0f64;
        for ((t, k), c) in again.frames().indexed_iter() {
            err += bin_weight(k) * (imposed.frames()[[t, k]] - c).norm_sqr();
        }
        errors.push(err.sqrt());
        phase = again.frames().mapv(|c| c.arg());
    }
    Ok(PhaseReconstruction {
        signal,
        consistency_errors: errors,
    })
}

/// Band-limited sawtooth at 120 Hz with +-10 % vibrato at 2 Hz, fully
/// amplitude-modulated at 4 Hz, peak around 0.5.
pub fn speech_like(sample_rate_hz: u32, duration_s: f64) -> Vec<f64> {
    let sr = f64::from(sample_rate_hz);
    let (f0, depth, vibrato, syllable) = (120.0, 0.1, 2.0, 4.0);
    let n_harm = ((0.45 * sr) / (f0 * (1.0 + depth))).floor().max(1.0) as usize;
    let len = (duration_s * sr).round() as usize;
    (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            // integral of f0 * (1 + depth * sin(2 pi vibrato t))
            let phase = 2.0 * PI * f0 * (t + depth * (1.0 - (2.0 * PI * vibrato * t).cos()) / (2.0 * PI * vibrato));
            let env = 0.5 - 0.5 * (2.0 * PI * syllable * t).cos();
            let saw: f64 = (1..=n_harm).map(|h| (h as f64 * phase).sin() / h as f64).sum();
            0.3 * env * saw
        })
        .collect()
}

/// Seeded white Gaussian noise with unit variance.
pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub file: String,
    pub method: String,
    pub seg_snr_db: f64,
    pub lsd_db: f64,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_frame_seg_snr_db: Option<Vec<f64>>,
}

impl MetricReport {
    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metric report is always serialisable")
    }
}
