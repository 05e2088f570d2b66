//! Room impulse responses, late-reverberation suppression and weighted
//! prediction error (WPE) dereverberation.

use std::f64::consts::LN_10;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gainrules::{self, MinStatsConfig, NoisePsd};
use crate::stft::{self, SpectralDomain, Spectrogram, StftGeometry};

/// Span counted as direct path when measuring the direct-to-reverberant ratio.
pub const DIRECT_PATH_S: f64 = 0.002;

/// Default boundary between early and late reverberation.
pub const DEFAULT_LATE_BOUNDARY_S: f64 = 0.05;

/// Amplitude decay rate of an exponential envelope that loses 60 dB of energy in `t60_s`.
pub fn decay_rate(t60_s: f64) -> f64 {
    3.0 * LN_10 / t60_s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RirParams {
    pub t60_s: f64,
    pub drr_db: f64,
    pub sample_rate_hz: u32,
    pub length_s: f64,
    pub seed: u64,
}

impl RirParams {
    /// A response long enough to hold the full 60 dB decay.
    pub fn new(t60_s: f64, drr_db: f64, sample_rate_hz: u32, seed: u64) -> Self {
        Self {
            t60_s,
            drr_db,
            sample_rate_hz,
            length_s: 1.2 * t60_s,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t60_s > 0.0 && self.t60_s.is_finite()) {
            return Err(Error::param("t60_s", format!("must be > 0, got {}", self.t60_s)));
        }
        if !self.drr_db.is_finite() {
            return Err(Error::param("drr_db", "must be finite"));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::param("sample_rate_hz", "must be positive"));
        }
        if !(self.length_s >= self.t60_s / 2.0) {
            return Err(Error::param(
                "length_s",
                format!("must be at least t60_s / 2 = {}, got {}", self.t60_s / 2.0, self.length_s),
            ));
        }
        Ok(())
    }

    fn direct_samples(&self) -> usize {
        ((DIRECT_PATH_S * f64::from(self.sample_rate_hz)).round() as usize).max(1)
    }
}

/// Direct impulse at sample 0 followed by exponentially decaying Gaussian noise,
/// with the impulse scaled to give the requested direct-to-reverberant ratio.
pub fn synth_rir(params: &RirParams) -> Result<Vec<f64>> {
    params.validate()?;
    let sr = f64::from(params.sample_rate_hz);
    let len = ((params.length_s * sr).round() as usize).max(2);
    let zeta = decay_rate(params.t60_s);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut h: Vec<f64> = (0..len)
        .map(|i| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * (-zeta * i as f64 / sr).exp()
        })
        .collect();
    let nd = params.direct_samples().min(len - 1);
    let energy = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    let reverberant = energy(&h[nd..]);
    let target_direct = reverberant * 10f64.powf(params.drr_db / 10.0);
    let mut early = energy(&h[1..nd]);
    if early > target_direct {
        // very low DRR: the early tail alone would exceed the direct budget
        h[1..nd].iter_mut().for_each(|v| *v = 0.0);
        early = 0.0;
    }
    h[0] = (target_direct - early).sqrt();
    Ok(h)
}

/// Direct-to-reverberant ratio in dB, splitting at [`DIRECT_PATH_S`].
pub fn measure_drr_db(h: &[f64], sample_rate_hz: u32) -> f64 {
    let nd = ((DIRECT_PATH_S * f64::from(sample_rate_hz)).round() as usize).clamp(1, h.len());
    let energy = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    10.0 * (energy(&h[..nd]) / energy(&h[nd..])).log10()
}

/// Power factor between reverberation at `tl_s` and its source.
pub fn late_decay_factor(t60_s: f64, tl_s: f64) -> f64 {
    if t60_s.is_infinite() {
        return 1.0;
    }
    (-2.0 * decay_rate(t60_s) * tl_s).exp()
}

/// Late reverberant spectral variance of one bin: the power `tl_s` earlier,
/// attenuated by the reverberant decay over that span.
pub fn lrsv_estimate(rev_power_track: &[f64], t60_s: f64, tl_s: f64, frame_hop_s: f64) -> Result<Vec<f64>> {
    if !(t60_s > 0.0) {
        return Err(Error::param("t60_s", format!("must be > 0, got {t60_s}")));
    }
    if !(frame_hop_s > 0.0 && tl_s >= frame_hop_s) {
        return Err(Error::param("tl_s", format!("must be at least the frame hop {frame_hop_s}, got {tl_s}")));
    }
    let delay = (tl_s / frame_hop_s).round() as usize;
    if delay >= rev_power_track.len() {
        return Err(Error::TrackTooShort {
            needed: delay + 1,
            got: rev_power_track.len(),
        });
    }
    let factor = late_decay_factor(t60_s, tl_s);
    Ok((0..rev_power_track.len())
        .map(|t| if t < delay { 0.0 } else { factor * rev_power_track[t - delay] })
        .collect())
}

/// Subtractive gain treating late reverberation and noise as independent
/// additive components.
pub fn late_suppression_gain(noisy_power: f64, lambda_late: f64, lambda_noise: f64, g_min: f64) -> f64 {
    let g = (noisy_power - lambda_late - lambda_noise) / noisy_power.max(gainrules::POWER_FLOOR);
    g.clamp(g_min, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrsvConfig {
    pub t60_s: f64,
    pub late_boundary_s: f64,
    pub g_min: f64,
    /// Also subtract a minimum-statistics noise estimate.
    pub with_noise: bool,
}

impl LrsvConfig {
    pub fn new(t60_s: f64) -> Self {
        Self {
            t60_s,
            late_boundary_s: DEFAULT_LATE_BOUNDARY_S,
            g_min: gainrules::default_gain_floor(),
            with_noise: false,
        }
    }
}

/// Late-reverberation (and optionally noise) suppression gains for a spectrogram.
pub fn lrsv_gains(spec: &Spectrogram, cfg: &LrsvConfig) -> Result<Array2<f64>> {
    let g = spec.geometry();
    let power = stft::to_domain(spec, SpectralDomain::Power).values;
    let (n_frames, n_bins) = power.dim();
    let mut late = Array2::zeros((n_frames, n_bins));
    for k in 0..n_bins {
        let track = power.column(k).to_vec();
        let est = lrsv_estimate(&track, cfg.t60_s, cfg.late_boundary_s, g.hop_seconds())?;
        late.column_mut(k).assign(&ndarray::ArrayView1::from(&est));
    }
    let mut noise = Array2::zeros((n_frames, n_bins));
    if cfg.with_noise {
        let mut tracker = NoisePsd::new(n_bins, MinStatsConfig::for_geometry(g));
        for (t, row) in power.rows().into_iter().enumerate() {
            let lambda = tracker.update(&row.to_vec())?;
            noise.row_mut(t).assign(&ndarray::ArrayView1::from(lambda));
        }
    }
    Ok(Array2::from_shape_fn((n_frames, n_bins), |(t, k)| {
        late_suppression_gain(power[[t, k]], late[[t, k]], noise[[t, k]], cfg.g_min)
    }))
}

pub fn enhance_utterance_lrsv(signal: &[f64], geometry: &StftGeometry, cfg: &LrsvConfig) -> Result<Vec<f64>> {
    let spec = stft::analyze_padded(signal, geometry)?;
    let gains = lrsv_gains(&spec, cfg)?;
    stft::synthesize_aligned(&stft::apply_gain(&spec, &gains)?)
}

// ---------------------------------------------------------------------------
// WPE
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WpeConfig {
    /// Prediction delay in frames.
    pub delay: usize,
    /// Number of prediction taps; zero disables prediction.
    pub taps: usize,
    pub iterations: usize,
    /// Ridge added to the normal equations, relative to their mean diagonal.
    pub eps: f64,
    pub var_floor: f64,
    /// Block length for block-wise processing.
    pub block_s: Option<f64>,
}

impl Default for WpeConfig {
    fn default() -> Self {
        Self {
            delay: 3,
            taps: 40,
            iterations: 3,
            eps: 1e-8,
            var_floor: 1e-10,
            block_s: None,
        }
    }
}

impl WpeConfig {
    fn validate(&self) -> Result<()> {
        if self.delay == 0 {
            return Err(Error::param("delay", "must be at least 1 frame"));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be at least 1"));
        }
        if !(self.eps > 0.0) || !(self.var_floor > 0.0) {
            return Err(Error::param("eps/var_floor", "must be > 0"));
        }
        if let Some(b) = self.block_s {
            if !(b > 0.0) {
                return Err(Error::param("block_s", format!("must be > 0, got {b}")));
            }
        }
        Ok(())
    }

    /// Fewest frames a batch solve accepts.
    pub fn min_frames(&self) -> usize {
        self.delay + self.taps + 1
    }
}

/// Dereverberated spectrogram plus the per-bin prediction filters (`K x taps`);
/// tap `i` acts on the frame `delay + i` frames back.
#[derive(Debug, Clone, PartialEq)]
pub struct WpeOutput {
    pub spec: Spectrogram,
    pub filters: Array2<Complex64>,
}

fn tap_vector(y: &[Complex64], t: usize, cfg: &WpeConfig) -> DVector<Complex64> {
    DVector::from_fn(cfg.taps, |i, _| {
        let back = cfg.delay + i;
        if t >= back {
            y[t - back]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

fn wpe_bin(y: &[Complex64], cfg: &WpeConfig) -> (Vec<Complex64>, DVector<Complex64>) {
    let taps: Vec<DVector<Complex64>> = (0..y.len()).map(|t| tap_vector(y, t, cfg)).collect();
    let mut d = y.to_vec();
    let mut g = DVector::zeros(cfg.taps);
    let flat = (y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64).max(cfg.var_floor);
    for iteration in 0..cfg.iterations {
        let mut r = DMatrix::<Complex64>::zeros(cfg.taps, cfg.taps);
        let mut p = DVector::<Complex64>::zeros(cfg.taps);
        for (t, x) in taps.iter().enumerate() {
            // The first pass is plain least squares; weighting by the raw
            // observation power lets a few quiet frames dominate the fit.
            let lambda = if iteration == 0 { flat } else { d[t].norm_sqr().max(cfg.var_floor) };
            let w = 1.0 / lambda;
            // R += w x x^H (lower triangle), p += w x y*
            for j in 0..cfg.taps {
                let xj = x[j].conj() * w;
                for i in j..cfg.taps {
                    r[(i, j)] += x[i] * xj;
                }
                p[j] += x[j] * (y[t].conj() * w);
            }
        }
        for j in 0..cfg.taps {
            for i in (j + 1)..cfg.taps {
                r[(j, i)] = r[(i, j)].conj();
            }
        }
        let ridge = cfg.eps * (r.trace().re / cfg.taps as f64).max(f64::MIN_POSITIVE);
        for i in 0..cfg.taps {
            r[(i, i)] += Complex64::new(ridge, 0.0);
        }
        g = match r.clone().cholesky() {
            Some(c) => c.solve(&p),
            None => r.lu().solve(&p).unwrap_or_else(|| DVector::zeros(cfg.taps)),
        };
        for (t, x) in taps.iter().enumerate() {
            d[t] = y[t] - g.dotc(x);
        }
    }
    (d, g)
}

/// Batch WPE over the whole spectrogram, one independent filter per bin.
pub fn wpe_filter(spec: &Spectrogram, cfg: &WpeConfig) -> Result<WpeOutput> {
    cfg.validate()?;
    let (n_frames, n_bins) = spec.frames().dim();
    if cfg.taps == 0 {
        return Ok(WpeOutput {
            spec: spec.clone(),
            filters: Array2::zeros((n_bins, 0)),
        });
    }
    if n_frames < cfg.min_frames() {
        return Err(Error::WpeTooShort {
            frames: n_frames,
            needed: cfg.min_frames(),
        });
    }
    let mut out = spec.frames().to_owned();
    let mut filters = Array2::zeros((n_bins, cfg.taps));
    for k in 0..n_bins {
        let y = spec.frames().column(k).to_vec();
        let (d, g) = wpe_bin(&y, cfg);
        out.column_mut(k).assign(&ndarray::ArrayView1::from(&d));
        filters.row_mut(k).assign(&ndarray::ArrayView1::from(g.as_slice()));
    }
    Ok(WpeOutput {
        spec: spec.with_frames(out)?,
        filters,
    })
}

pub fn wpe_batch(spec: &Spectrogram, cfg: &WpeConfig) -> Result<Spectrogram> {
    Ok(wpe_filter(spec, cfg)?.spec)
}

/// Batch WPE on consecutive non-overlapping blocks of `cfg.block_s` seconds,
/// re-estimating the filters per block. A trailing block too short for the
/// taps is passed through unchanged.
pub fn wpe_block(spec: &Spectrogram, cfg: &WpeConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let block_s = cfg
        .block_s
        .ok_or_else(|| Error::param("block_s", "block-wise WPE needs a block length"))?;
    let n_frames = spec.n_frames();
    let block = ((block_s / spec.geometry().hop_seconds()).round() as usize).max(1);
    if n_frames <= block {
        return wpe_batch(spec, cfg);
    }
    if cfg.taps > 0 && block < cfg.min_frames() {
        return Err(Error::WpeTooShort {
            frames: block,
            needed: cfg.min_frames(),
        });
    }
    let mut out = spec.frames().to_owned();
    let mut start = 0;
    while start < n_frames {
        let end = (start + block).min(n_frames);
        if end - start >= cfg.min_frames() {
            let part = wpe_batch(&spec.slice_frames(start..end), cfg)?;
            out.slice_mut(ndarray::s![start..end, ..]).assign(part.frames());
        }
        start = end;
    }
    spec.with_frames(out)
}

/// Batch or block WPE, depending on `cfg.block_s`.
pub fn wpe(spec: &Spectrogram, cfg: &WpeConfig) -> Result<Spectrogram> {
    match cfg.block_s {
        Some(_) => wpe_block(spec, cfg),
        None => wpe_batch(spec, cfg),
    }
}

pub fn enhance_utterance_wpe(signal: &[f64], geometry: &StftGeometry, cfg: &WpeConfig) -> Result<Vec<f64>> {
    let spec = stft::analyze_padded(signal, geometry)?;
    stft::synthesize_aligned(&wpe(&spec, cfg)?)
}
