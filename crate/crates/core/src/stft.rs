//! Short-time Fourier analysis/synthesis and spectral-domain helpers.
//!
//! Frames are one-sided (`K = N/2 + 1` bins) and stored row-major as a
//! `T x K` matrix. Synthesis is weighted overlap-add normalised by the summed
//! analysis*synthesis window product, which makes it the least-squares inverse
//! when both windows are equal.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power floor applied before taking logarithms.
pub const LOG_POWER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Hamming analysis window with rectangular synthesis.
    Hamming,
    /// Square-root Hann for both analysis and synthesis.
    SqrtHann,
    /// Rectangular analysis and synthesis. Mostly useful in tests.
    Rectangular,
}

impl WindowKind {
    pub fn analysis(self, n: usize) -> Vec<f64> {
        let nf = n as f64;
        (0..n)
            .map(|i| {
                let c = (2.0 * PI * i as f64 / nf).cos();
                match self {
                    WindowKind::Hamming => 0.54 - 0.46 * c,
                    WindowKind::SqrtHann => (0.5 - 0.5 * c).max(0.0).sqrt(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }

    pub fn synthesis(self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Hamming | WindowKind::Rectangular => vec![1.0; n],
            WindowKind::SqrtHann => WindowKind::SqrtHann.analysis(n),
        }
    }
}

/// Frame geometry shared by every spectrogram derived from one analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftGeometry {
    pub frame_len: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub sample_rate_hz: u32,
}

impl StftGeometry {
    pub fn new(frame_len: usize, hop: usize, window: WindowKind, sample_rate_hz: u32) -> Result<Self> {
        if frame_len < 2 || !frame_len.is_multiple_of(2) {
            return Err(Error::param("frame_len", format!("must be even and >= 2, got {frame_len}")));
        }
        if hop == 0 || hop > frame_len {
            return Err(Error::param("hop", format!("must be in 1..={frame_len}, got {hop}")));
        }
        if sample_rate_hz == 0 {
            return Err(Error::param("sample_rate_hz", "must be positive"));
        }
        Ok(Self {
            frame_len,
            hop,
            window,
            sample_rate_hz,
        })
    }

    /// Geometry from millisecond durations, rounding to whole samples.
    pub fn from_ms(sample_rate_hz: u32, frame_ms: f64, hop_ms: f64, window: WindowKind) -> Result<Self> {
        let to_samples = |ms: f64| (ms * sample_rate_hz as f64 / 1000.0).round() as usize;
        let mut n = to_samples(frame_ms);
        n += n % 2;
        Self::new(n, to_samples(hop_ms), window, sample_rate_hz)
    }

    /// 20 ms sqrt-Hann frames with 50% overlap.
    pub fn speech_default(sample_rate_hz: u32) -> Self {
        Self::from_ms(sample_rate_hz, 20.0, 10.0, WindowKind::SqrtHann)
            .expect("20/10 ms geometry is valid for any positive rate")
    }

    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / self.sample_rate_hz as f64
    }

    pub fn n_frames(&self, signal_len: usize) -> usize {
        if signal_len < self.frame_len {
            0
        } else {
            (signal_len - self.frame_len) / self.hop + 1
        }
    }

    pub fn synthesized_len(&self, n_frames: usize) -> usize {
        if n_frames == 0 {
            0
        } else {
            (n_frames - 1) * self.hop + self.frame_len
        }
    }

    /// Sample range covered by the full `frame_len / hop` frame overlap.
    pub fn interior(&self, n_frames: usize) -> std::ops::Range<usize> {
        let start = self.frame_len - self.hop;
        let end = (n_frames * self.hop).max(start);
        start..end
    }

    /// Checks that the analysis*synthesis window product overlap-adds to a constant.
    pub fn check_cola(&self) -> Result<f64> {
        let wa = self.window.analysis(self.frame_len);
        let ws = self.window.synthesis(self.frame_len);
        let sums: Vec<f64> = (0..self.hop)
            .map(|r| {
                (r..self.frame_len)
                    .step_by(self.hop)
                    .map(|i| wa[i] * ws[i])
                    .sum::<f64>()
            })
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        if max <= 0.0 || (max - min) > 1e-9 * max {
            return Err(Error::ReconstructionCondition);
        }
        Ok(max)
    }
}

/// Complex one-sided STFT.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: Array2<Complex64>,
    geometry: StftGeometry,
    /// Zero samples prepended before analysis (see [`analyze_padded`]).
    offset: usize,
    /// Length of the signal this spectrogram was computed from, before padding.
    signal_len: usize,
}

impl Spectrogram {
    pub fn from_frames(frames: Array2<Complex64>, geometry: StftGeometry) -> Result<Self> {
        if frames.ncols() != geometry.n_bins() {
            return Err(Error::ShapeMismatch {
                expected: (frames.nrows(), geometry.n_bins()),
                got: frames.dim(),
            });
        }
        let signal_len = geometry.synthesized_len(frames.nrows());
        Ok(Self {
            frames,
            geometry,
            offset: 0,
            signal_len,
        })
    }

    pub fn frames(&self) -> &Array2<Complex64> {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.frames
    }

    pub fn into_frames(self) -> Array2<Complex64> {
        self.frames
    }

    pub fn geometry(&self) -> &StftGeometry {
        &self.geometry
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// Same geometry and alignment, new coefficients.
    pub fn with_frames(&self, frames: Array2<Complex64>) -> Result<Self> {
        if frames.dim() != self.frames.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.frames.dim(),
                got: frames.dim(),
            });
        }
        Ok(Self {
            frames,
            geometry: self.geometry,
            offset: self.offset,
            signal_len: self.signal_len,
        })
    }

    /// Frames `range` as a new spectrogram (alignment metadata is reset).
    pub fn slice_frames(&self, range: std::ops::Range<usize>) -> Self {
        let frames = self.frames.slice(ndarray::s![range, ..]).to_owned();
        let signal_len = self.geometry.synthesized_len(frames.nrows());
        Self {
            frames,
            geometry: self.geometry,
            offset: 0,
            signal_len,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralDomain {
    Amplitude,
    Power,
    LogPower,
}

/// Real-valued spectrogram in one of the amplitude, power or log-power domains.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSpectrogram {
    pub values: Array2<f64>,
    pub domain: SpectralDomain,
    pub geometry: StftGeometry,
}

struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }
}

/// Frames `signal` and returns `floor((len - N) / R) + 1` one-sided spectra.
pub fn analyze(signal: &[f64], geometry: &StftGeometry) -> Result<Spectrogram> {
    let n = geometry.frame_len;
    if signal.len() < n {
        return Err(Error::InputTooShort {
            needed: n,
            got: signal.len(),
        });
    }
    let n_frames = geometry.n_frames(signal.len());
    let k = geometry.n_bins();
    let window = geometry.window.analysis(n);
    let fft = FftPair::new(n);
    let mut buf = vec![Complex64::default(); n];
    let mut frames = Array2::zeros((n_frames, k));
    for (t, mut row) in frames.rows_mut().into_iter().enumerate() {
        let start = t * geometry.hop;
        for ((b, &x), &w) in buf.iter_mut().zip(&signal[start..start + n]).zip(&window) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.forward.process(&mut buf);
        for (dst, src) in row.iter_mut().zip(&buf[..k]) {
            *dst = *src;
        }
    }
    Ok(Spectrogram {
        frames,
        geometry: *geometry,
        offset: 0,
        signal_len: signal.len(),
    })
}

/// Zero-pads `signal` so that every original sample lies in the fully
/// overlapped interior, then analyses it. Use [`synthesize_aligned`] to get
/// back a signal of the original length.
pub fn analyze_padded(signal: &[f64], geometry: &StftGeometry) -> Result<Spectrogram> {
    if signal.is_empty() {
        return Err(Error::InputTooShort { needed: 1, got: 0 });
    }
    let n = geometry.frame_len;
    let r = geometry.hop;
    let offset = n - r;
    let n_frames = (offset + signal.len()).div_ceil(r).max(1);
    let total = geometry.synthesized_len(n_frames);
    let mut padded = vec![0.0; total];
    padded[offset..offset + signal.len()].copy_from_slice(signal);
    let mut spec = analyze(&padded, geometry)?;
    spec.offset = offset;
    spec.signal_len = signal.len();
    Ok(spec)
}

/// Weighted overlap-add; output length is `(T - 1) * R + N`.
pub fn synthesize(spec: &Spectrogram) -> Result<Vec<f64>> {
    let g = spec.geometry;
    g.check_cola()?;
    let n = g.frame_len;
    let k = g.n_bins();
    let out_len = g.synthesized_len(spec.n_frames());
    let wa = g.window.analysis(n);
    let ws = g.window.synthesis(n);
    let fft = FftPair::new(n);
    let mut out = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let mut buf = vec![Complex64::default(); n];
    let scale = 1.0 / n as f64;
    for (t, row) in spec.frames.rows().into_iter().enumerate() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < k { row[i] } else { row[n - i].conj() };
        }
        // DC and Nyquist must be real for a real-valued frame.
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        fft.inverse.process(&mut buf);
        let start = t * g.hop;
        for i in 0..n {
            out[start + i] += buf[i].re * scale * ws[i];
            norm[start + i] += wa[i] * ws[i];
        }
    }
    let max_norm = norm.iter().cloned().fold(0.0, f64::max);
    let tiny = 1e-12 * max_norm;
    for (o, &w) in out.iter_mut().zip(&norm) {
        *o = if w > tiny { *o / w } else { 0.0 };
    }
    Ok(out)
}

/// Synthesizes and undoes the padding added by [`analyze_padded`].
pub fn synthesize_aligned(spec: &Spectrogram) -> Result<Vec<f64>> {
    let full = synthesize(spec)?;
    let start = spec.offset.min(full.len());
    let end = (spec.offset + spec.signal_len).min(full.len());
    let mut out = full[start..end].to_vec();
    out.resize(spec.signal_len, 0.0);
    Ok(out)
}

pub fn to_domain(spec: &Spectrogram, domain: SpectralDomain) -> RealSpectrogram {
    let values = spec.frames.mapv(|c| match domain {
        SpectralDomain::Amplitude => c.norm(),
        SpectralDomain::Power => c.norm_sqr(),
        SpectralDomain::LogPower => c.norm_sqr().max(LOG_POWER_FLOOR).ln(),
    });
    RealSpectrogram {
        values,
        domain,
        geometry: spec.geometry,
    }
}

/// Scales every coefficient by a real non-negative gain; phase is untouched.
pub fn apply_gain(spec: &Spectrogram, gains: &Array2<f64>) -> Result<Spectrogram> {
    if gains.dim() != spec.frames.dim() {
        return Err(Error::ShapeMismatch {
            expected: spec.frames.dim(),
            got: gains.dim(),
        });
    }
    if let Some(bad) = gains.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(Error::param("gains", format!("must be finite and >= 0, found {bad}")));
    }
    let mut frames = spec.frames.clone();
    frames.zip_mut_with(gains, |c, &g| *c *= g);
    spec.with_frames(frames)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular Mel band responses over the one-sided STFT bins.
#[derive(Debug, Clone, PartialEq)]
pub struct MelMap {
    /// `M x K`, each row peaking at 1.
    pub weights: Array2<f64>,
    pub centers_hz: Vec<f64>,
}

impl MelMap {
    pub fn n_bands(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }
}

/// Builds `n_mel` triangles with centres uniformly spaced in Mel between 0 Hz
/// and Nyquist. Neighbouring triangles meet at each other's centres, so every
/// bin is covered.
pub fn mel_matrix(n_bins: usize, n_mel: usize, sample_rate_hz: u32) -> Result<MelMap> {
    if n_mel < 2 || n_mel >= n_bins {
        return Err(Error::param(
            "n_mel",
            format!("must satisfy 2 <= n_mel < n_bins ({n_bins}), got {n_mel}"),
        ));
    }
    let nyquist = sample_rate_hz as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let mut centers_hz: Vec<f64> = (0..n_mel)
        .map(|m| mel_to_hz(mel_max * m as f64 / (n_mel - 1) as f64))
        .collect();
    centers_hz[0] = 0.0;
    centers_hz[n_mel - 1] = nyquist;
    let bin_hz = |k: usize| k as f64 * nyquist / (n_bins - 1) as f64;
    let mut weights = Array2::zeros((n_mel, n_bins));
    for m in 0..n_mel {
        let c = centers_hz[m];
        let lo = if m > 0 { centers_hz[m - 1] } else { c };
        let hi = if m + 1 < n_mel { centers_hz[m + 1] } else { c };
        for k in 0..n_bins {
            let f = bin_hz(k);
            let w = if f < c && c > lo {
                (f - lo) / (c - lo)
            } else if f > c && hi > c {
                (hi - f) / (hi - c)
            } else if (f - c).abs() < 1e-9 {
                1.0
            } else {
                0.0
            };
            weights[[m, k]] = w.max(0.0);
        }
        let peak = weights.row(m).iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            weights.row_mut(m).mapv_inplace(|w| w / peak);
        } else {
            // Band narrower than the bin spacing: pin it to the nearest bin.
            let nearest = ((c / nyquist) * (n_bins - 1) as f64).round() as usize;
            weights[[m, nearest.min(n_bins - 1)]] = 1.0;
        }
    }
    Ok(MelMap { weights, centers_hz })
}

/// Per-bin gains as the weight-normalised average of the band gains.
pub fn band_gain_interpolate(mel_gains: &[f64], map: &MelMap) -> Result<Vec<f64>> {
    if mel_gains.len() != map.n_bands() {
        return Err(Error::ShapeMismatch {
            expected: (map.n_bands(), 1),
            got: (mel_gains.len(), 1),
        });
    }
    if mel_gains.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::param("mel_gains", "must be >= 0"));
    }
    Ok((0..map.n_bins())
        .map(|k| {
            let col = map.weights.column(k);
            let den: f64 = col.sum();
            let num: f64 = col.iter().zip(mel_gains).map(|(w, g)| w * g).sum();
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect())
}
