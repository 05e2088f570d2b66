//! Single-frame spectral gain rules and the noise PSD tracker they share.

use std::collections::VecDeque;
use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::{self, Spectrogram, StftGeometry};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub const POWER_FLOOR: f64 = 1e-12;

/// -25 dB amplitude floor shared by the gain rules.
pub fn default_gain_floor() -> f64 {
    10f64.powf(-25.0 / 20.0)
}

/// A priori (`xi`) and a posteriori (`zeta_post`) SNRs, both linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrPair {
    pub xi: f64,
    pub zeta_post: f64,
}

impl SnrPair {
    pub fn new(xi: f64, zeta_post: f64) -> Result<Self> {
        if !(xi.is_finite() && xi >= 0.0) {
            return Err(Error::param("xi", format!("must be finite and >= 0, got {xi}")));
        }
        if !(zeta_post.is_finite() && zeta_post > 0.0) {
            return Err(Error::param("zeta_post", format!("must be finite and > 0, got {zeta_post}")));
        }
        Ok(Self { xi, zeta_post })
    }

    /// `nu = xi * zeta / (1 + xi)`
    pub fn nu(&self) -> f64 {
        self.xi * self.zeta_post / (1.0 + self.xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMethod {
    #[serde(rename = "specsub")]
    SpectralSubtraction,
    Mmse,
    #[serde(rename = "logmmse")]
    LogMmse,
}

impl GainMethod {
    /// Upper clamp applied when the rule drives an enhancement.
    pub fn max_gain(self) -> f64 {
        match self {
            GainMethod::Mmse => 2.0,
            GainMethod::SpectralSubtraction | GainMethod::LogMmse => 1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Noise PSD tracking (minimum statistics)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinStatsConfig {
    /// Length of the minimum search, in frames.
    pub window_frames: usize,
    pub bias: f64,
    pub smoothing: f64,
    pub floor: f64,
}

impl MinStatsConfig {
    /// 1.5 s search window for the given frame hop.
    pub fn for_geometry(geometry: &StftGeometry) -> Self {
        Self {
            window_frames: ((1.5 / geometry.hop_seconds()).round() as usize).max(1),
            bias: 1.5,
            smoothing: 0.85,
            floor: POWER_FLOOR,
        }
    }
}

/// Per-bin noise power estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePsd {
    pub lambda: Vec<f64>,
    pub update_count: usize,
    config: MinStatsConfig,
    smoothed: Vec<f64>,
    history: VecDeque<Vec<f64>>,
}

impl NoisePsd {
    pub fn new(n_bins: usize, config: MinStatsConfig) -> Self {
        Self {
            lambda: vec![config.floor; n_bins],
            update_count: 0,
            config,
            smoothed: vec![0.0; n_bins],
            history: VecDeque::with_capacity(config.window_frames),
        }
    }

    /// Recursive smoothing of the periodogram, minimum over the search window,
    /// then bias compensation.
    pub fn update(&mut self, noisy_power: &[f64]) -> Result<&[f64]> {
        if noisy_power.len() != self.lambda.len() {
            return Err(Error::ShapeMismatch {
                expected: (self.lambda.len(), 1),
                got: (noisy_power.len(), 1),
            });
        }
        let a = self.config.smoothing;
        if self.update_count == 0 {
            self.smoothed.copy_from_slice(noisy_power);
        } else {
            for (s, &p) in self.smoothed.iter_mut().zip(noisy_power) {
                *s = a * *s + (1.0 - a) * p;
            }
        }
        if self.history.len() == self.config.window_frames {
            self.history.pop_front();
        }
        self.history.push_back(self.smoothed.clone());
        for (k, lambda) in self.lambda.iter_mut().enumerate() {
            let min = self
                .history
                .iter()
                .map(|frame| frame[k])
                .fold(f64::INFINITY, f64::min);
            *lambda = (self.config.bias * min).max(self.config.floor);
        }
        self.update_count += 1;
        Ok(&self.lambda)
    }
}

/// Decision-directed a priori SNR estimate.
pub fn dd_apriori_snr(prev_clean_power: f64, noisy_power: f64, lambda: f64, a_dd: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", format!("must be > 0, got {lambda}")));
    }
    if !(0.0..=1.0).contains(&a_dd) {
        return Err(Error::param("a_dd", format!("must be in [0, 1], got {a_dd}")));
    }
    Ok(a_dd * (prev_clean_power / lambda) + (1.0 - a_dd) * (noisy_power / lambda - 1.0).max(0.0))
}

pub fn spectral_subtract_gain(noisy_power: f64, lambda: f64, oversubtraction: f64, g_min: f64) -> f64 {
    let residual = (noisy_power - oversubtraction * lambda).max(0.0);
    (residual / noisy_power.max(POWER_FLOOR)).sqrt().clamp(g_min, 1.0)
}

fn check_finite(snr: &SnrPair) -> Result<()> {
    SnrPair::new(snr.xi, snr.zeta_post).map(|_| ())
}

/// Short-time spectral amplitude MMSE gain (unclamped).
pub fn mmse_gain(snr: SnrPair) -> Result<f64> {
    check_finite(&snr)?;
    let nu = snr.nu();
    if nu == 0.0 {
        return Ok(0.0);
    }
    let half = 0.5 * nu;
    // exp(-nu/2) [(1 + nu) I0(nu/2) + nu I1(nu/2)] with exponentially scaled Bessels
    let hyper = (1.0 + nu) * bessel_i0e(half) + nu * bessel_i1e(half);
    Ok(0.5 * PI.sqrt() * nu.sqrt() / snr.zeta_post * hyper)
}

/// Log-spectral amplitude MMSE gain (unclamped).
pub fn logmmse_gain(snr: SnrPair) -> Result<f64> {
    check_finite(&snr)?;
    let nu = snr.nu();
    if nu == 0.0 {
        return Ok(0.0);
    }
    Ok(snr.xi / (1.0 + snr.xi) * (0.5 * exp_integral_e1(nu)).exp())
}

/// Switch point (in Bessel argument) between power series and Hankel expansion.
const BESSEL_SERIES_LIMIT: f64 = 20.0;

/// `exp(-x) I0(x)` for `x >= 0`.
pub fn bessel_i0e(x: f64) -> f64 {
    if x < BESSEL_SERIES_LIMIT {
        bessel_series(x, 0) * (-x).exp()
    } else {
        bessel_asymptotic_scaled(x, 0)
    }
}

/// `exp(-x) I1(x)` for `x >= 0`.
pub fn bessel_i1e(x: f64) -> f64 {
    if x < BESSEL_SERIES_LIMIT {
        bessel_series(x, 1) * (-x).exp()
    } else {
        bessel_asymptotic_scaled(x, 1)
    }
}

fn bessel_series(x: f64, order: u32) -> f64 {
    let q = 0.25 * x * x;
    let mut term = (0.5 * x).powi(order as i32);
    let mut sum = term;
    for k in 1..500 {
        let kf = k as f64;
        term *= q / (kf * (kf + order as f64));
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn bessel_asymptotic_scaled(x: f64, order: u32) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

/// Exponential integral `E1(x)` for `x > 0`: power series below 1, continued
/// fraction above.
pub fn exp_integral_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x < 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= -x / kf;
            let contrib = term / kf;
            sum += contrib;
            if contrib.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // modified Lentz evaluation of the continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

// ---------------------------------------------------------------------------
// Whole-utterance baseline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub method: GainMethod,
    pub a_dd: f64,
    pub g_min: f64,
    /// Lower bound on the a priori SNR.
    pub xi_min: f64,
    pub oversubtraction: f64,
}

impl BaselineConfig {
    pub fn new(method: GainMethod) -> Self {
        Self {
            method,
            a_dd: 0.98,
            g_min: default_gain_floor(),
            xi_min: 10f64.powf(-25.0 / 10.0),
            oversubtraction: 4.0,
        }
    }
}

/// Per-cell gains and the noise PSD estimate that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineGains {
    pub gains: Array2<f64>,
    pub noise_psd: Array2<f64>,
}

pub fn baseline_gains(spec: &Spectrogram, config: &BaselineConfig) -> Result<BaselineGains> {
    let power = stft::to_domain(spec, stft::SpectralDomain::Power).values;
    let (n_frames, n_bins) = power.dim();
    let mut tracker = NoisePsd::new(n_bins, MinStatsConfig::for_geometry(spec.geometry()));
    let mut gains = Array2::zeros((n_frames, n_bins));
    let mut noise_psd = Array2::zeros((n_frames, n_bins));
    let mut prev_clean = vec![0.0; n_bins];
    let g_max = config.method.max_gain();
    for t in 0..n_frames {
        let frame = power.row(t).to_vec();
        let lambda = tracker.update(&frame)?.to_vec();
        for k in 0..n_bins {
            let p = frame[k];
            let g = match config.method {
                GainMethod::SpectralSubtraction => {
                    spectral_subtract_gain(p, lambda[k], config.oversubtraction, config.g_min)
                }
                GainMethod::Mmse | GainMethod::LogMmse => {
                    let xi = dd_apriori_snr(prev_clean[k], p, lambda[k], config.a_dd)?.max(config.xi_min);
                    let zeta = (p / lambda[k]).max(1e-6);
                    let snr = SnrPair::new(xi, zeta)?;
                    let raw = if config.method == GainMethod::Mmse {
                        mmse_gain(snr)?
                    } else {
                        logmmse_gain(snr)?
                    };
                    raw.clamp(config.g_min, g_max)
                }
            };
            prev_clean[k] = g * g * p;
            gains[[t, k]] = g;
            noise_psd[[t, k]] = lambda[k];
        }
    }
    Ok(BaselineGains { gains, noise_psd })
}

/// analyze -> track noise -> per-cell gain -> synthesize; output has the input length.
pub fn enhance_utterance_baseline(
    signal: &[f64],
    geometry: &StftGeometry,
    config: &BaselineConfig,
) -> Result<Vec<f64>> {
    let spec = stft::analyze_padded(signal, geometry)?;
    let BaselineGains { gains, .. } = baseline_gains(&spec, config)?;
    stft::synthesize_aligned(&stft::apply_gain(&spec, &gains)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    /// Posterior expectation of `f(A)` for a complex Gaussian speech coefficient
    /// with variance `xi` observed in unit-variance complex Gaussian noise at
    /// magnitude `sqrt(zeta)`, by brute-force integration over amplitude and phase.
    fn posterior_expectation(xi: f64, zeta: f64, f: impl Fn(f64) -> f64) -> f64 {
        let r = zeta.sqrt();
        let a_max = r + 12.0 * (1.0 + xi.sqrt());
        let na = 6000;
        let nth = 256;
        let ha = a_max / na as f64;
        let (mut num, mut den) = (0.0, 0.0);
        // Exponents are shifted by their max to avoid underflow.
        let mut shift = f64::NEG_INFINITY;
        let log_kernel = |a: f64, th: f64| {
            let d2 = r * r + a * a - 2.0 * r * a * th.cos();
            -a * a / xi - d2
        };
        for i in 0..=na {
            let a = i as f64 * ha;
            shift = shift.max(log_kernel(a, 0.0));
        }
        for i in 0..=na {
            let a = i as f64 * ha;
            let simpson = if i == 0 || i == na {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let mut inner = 0.0;
            for j in 0..nth {
                let th = 2.0 * PI * j as f64 / nth as f64;
                inner += (log_kernel(a, th) - shift).exp();
            }
            let w = simpson * a * inner;
            den += w;
            if a > 0.0 {
                num += w * f(a);
            }
        }
        num / den
    }

    fn oracle_mmse(xi: f64, zeta: f64) -> f64 {
        posterior_expectation(xi, zeta, |a| a) / zeta.sqrt()
    }

    fn oracle_logmmse(xi: f64, zeta: f64) -> f64 {
        posterior_expectation(xi, zeta, f64::ln).exp() / zeta.sqrt()
    }

    #[test]
    fn gains_match_quadrature_at_reference_point() {
        let snr = SnrPair::new(1.0, 2.0).unwrap();
        let (g, o) = (mmse_gain(snr).unwrap(), oracle_mmse(1.0, 2.0));
        assert!(((g - o) / o).abs() < 1e-3, "mmse {g} vs {o}");
        let (g, o) = (logmmse_gain(snr).unwrap(), oracle_logmmse(1.0, 2.0));
        assert!(((g - o) / o).abs() < 1e-3, "logmmse {g} vs {o}");
    }

    #[test]
    fn high_snr_limits() {
        // a posteriori SNR consistent with the a priori one
        let g = mmse_gain(SnrPair::new(1e6, 1e6 + 1.0).unwrap()).unwrap();
        assert!((g - 1.0).abs() < 1e-3, "{g}");
        let snr = SnrPair::new(1.0, 1e4).unwrap();
        assert!((logmmse_gain(snr).unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn mmse_monotone_in_xi() {
        for &zeta in &[0.5, 1.0, 2.0, 10.0] {
            let mut prev = 0.0;
            for i in 0..=400 {
                let xi = 0.01 * 10f64.powf(4.0 * i as f64 / 400.0);
                let g = mmse_gain(SnrPair::new(xi, zeta).unwrap()).unwrap();
                assert!(g >= prev - 1e-12, "xi {xi} zeta {zeta}");
                prev = g;
            }
        }
    }

    #[test]
    fn logmmse_below_mmse_on_grid() {
        for i in 0..=20 {
            for j in 0..=20 {
                let xi = 0.1 * 100f64.powf(i as f64 / 20.0);
                let zeta = 0.1 * 100f64.powf(j as f64 / 20.0);
                let snr = SnrPair::new(xi, zeta).unwrap();
                assert!(logmmse_gain(snr).unwrap() <= mmse_gain(snr).unwrap());
            }
        }
    }

    #[test]
    fn invalid_snr_rejected() {
        assert!(mmse_gain(SnrPair { xi: f64::NAN, zeta_post: 1.0 }).is_err());
        assert!(logmmse_gain(SnrPair { xi: 1.0, zeta_post: 0.0 }).is_err());
        assert!(SnrPair::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn special_functions_against_known_values() {
        // Values from standard tables.
        assert!((exp_integral_e1(0.5) - 0.559_773_594_776_160_8).abs() < 1e-14);
        assert!((exp_integral_e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-14);
        assert!((exp_integral_e1(5.0) - 0.001_148_295_591_275_325_7).abs() < 1e-16);
        assert!((bessel_i0e(1.0) - 0.465_759_607_593_640_6).abs() < 1e-14);
        assert!((bessel_i1e(1.0) - 0.207_910_415_349_708_5).abs() < 1e-14);
        // continuity across the series/asymptotic switch
        // both branches agree at the switch point
        for order in [0, 1] {
            let x = BESSEL_SERIES_LIMIT;
            let series = bessel_series(x, order) * (-x).exp();
            assert!((series - bessel_asymptotic_scaled(x, order)).abs() < 1e-14);
        }
    }

    #[test]
    fn decision_directed_examples() {
        assert_eq!(dd_apriori_snr(0.0, 4.0, 1.0, 0.0).unwrap(), 3.0);
        assert_eq!(dd_apriori_snr(2.0, 100.0, 1.0, 1.0).unwrap(), 2.0);
        assert_eq!(dd_apriori_snr(5.0, 0.5, 1.0, 0.0).unwrap(), 0.0);
        assert!(dd_apriori_snr(1.0, 1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn spectral_subtraction_examples() {
        assert!((spectral_subtract_gain(4.0, 1.0, 1.0, 0.0) - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(spectral_subtract_gain(4.0, 0.0, 1.0, 0.0), 1.0);
        assert_eq!(spectral_subtract_gain(2.0, 1.0, 2.0, 0.1), 0.1);
    }

    #[test]
    fn tracker_converges_on_white_noise() {
        let geometry = StftGeometry::speech_default(16000);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let x: Vec<f64> = (0..16000 * 3).map(|_| normal.sample(&mut rng)).collect();
        let spec = stft::analyze(&x, &geometry).unwrap();
        let power = stft::to_domain(&spec, stft::SpectralDomain::Power).values;
        let mut psd = NoisePsd::new(161, MinStatsConfig::for_geometry(&geometry));
        for row in power.rows() {
            psd.update(&row.to_vec()).unwrap();
        }
        // E|X_k|^2 = sigma^2 * sum(w^2) = sigma^2 * N/2 for the sqrt-Hann window
        let truth = 0.01 * 160.0;
        let bins = 5..155;
        let mean = psd.lambda[bins.clone()].iter().sum::<f64>() / bins.len() as f64;
        let db = 10.0 * (mean / truth).log10();
        assert!(db.abs() < 3.0, "band-average {db} dB");
        for k in bins {
            let db = 10.0 * (psd.lambda[k] / truth).log10();
            assert!(db.abs() < 6.0, "bin {k}: {db} dB");
        }
    }

    #[test]
    fn tracker_floor_and_scaling() {
        let cfg = MinStatsConfig {
            window_frames: 10,
            bias: 1.5,
            smoothing: 0.85,
            floor: 1e-12,
        };
        let mut psd = NoisePsd::new(3, cfg);
        for _ in 0..20 {
            psd.update(&[0.0; 3]).unwrap();
        }
        assert!(psd.lambda.iter().all(|l| *l == 1e-12));

        let frames: Vec<Vec<f64>> = (0..40).map(|i| vec![1.0 + (i % 7) as f64, 2.0, 0.5 * i as f64 + 1.0]).collect();
        let mut a = NoisePsd::new(3, cfg);
        let mut b = NoisePsd::new(3, cfg);
        for f in &frames {
            a.update(f).unwrap();
            b.update(&f.iter().map(|v| 2.0 * v).collect::<Vec<_>>()).unwrap();
        }
        for (x, y) in a.lambda.iter().zip(&b.lambda) {
            assert!((2.0 * x - y).abs() < 1e-12 * y);
        }
        assert!(a.update(&[1.0]).is_err());
    }

    fn speechlike(len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| {
                let t = i as f64 / 16000.0;
                let env = 0.5 - 0.5 * (2.0 * PI * 4.0 * t).cos();
                env * (1..30).map(|h| (2.0 * PI * 150.0 * h as f64 * t).sin() / h as f64).sum::<f64>() * 0.2
            })
            .collect()
    }

    #[test]
    fn clean_input_passes_through() {
        // Leading digital silence drives the tracker to its floor; the speech
        // that follows is inside the same minimum-search window.
        let geometry = StftGeometry::speech_default(16000);
        let mut x = vec![0.0; 16000 * 2];
        x.extend(speechlike(16000));
        for method in [GainMethod::SpectralSubtraction, GainMethod::Mmse, GainMethod::LogMmse] {
            let y = enhance_utterance_baseline(&x, &geometry, &BaselineConfig::new(method)).unwrap();
            assert_eq!(y.len(), x.len());
            let start = 32000;
            let frames = (x.len() - start) / 320;
            let mut total = 0.0;
            let mut count = 0;
            for f in 0..frames {
                let r = start + f * 320..start + (f + 1) * 320;
                let s: f64 = x[r.clone()].iter().map(|v| v * v).sum();
                let e: f64 = x[r.clone()].iter().zip(&y[r]).map(|(a, b)| (a - b).powi(2)).sum();
                if s > 1e-6 {
                    total += (10.0 * (s / e.max(1e-300)).log10()).clamp(-10.0, 35.0);
                    count += 1;
                }
            }
            let seg = total / count as f64;
            assert!(seg >= 30.0, "{method:?}: {seg} dB");
        }
    }

    #[test]
    fn stationary_noise_is_suppressed() {
        let geometry = StftGeometry::speech_default(16000);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(0.0, 0.05).unwrap();
        let x: Vec<f64> = (0..16000 * 4).map(|_| normal.sample(&mut rng)).collect();
        for method in [GainMethod::SpectralSubtraction, GainMethod::Mmse, GainMethod::LogMmse] {
            let y = enhance_utterance_baseline(&x, &geometry, &BaselineConfig::new(method)).unwrap();
            let tail = 16000 * 2..x.len();
            let ein: f64 = x[tail.clone()].iter().map(|v| v * v).sum();
            let eout: f64 = y[tail].iter().map(|v| v * v).sum();
            assert!(eout <= 0.1 * ein, "{method:?}: ratio {}", eout / ein);
        }
    }

    proptest! {
        #[test]
        fn dd_is_convex_combination(prev in 0.0f64..10.0, p in 0.0f64..10.0, lambda in 0.01f64..5.0, a in 0.01f64..0.99) {
            let xi = dd_apriori_snr(prev, p, lambda, a).unwrap();
            let t1 = prev / lambda;
            let t2 = (p / lambda - 1.0).max(0.0);
            prop_assert!(xi >= t1.min(t2) - 1e-12 && xi <= t1.max(t2) + 1e-12);
        }

        #[test]
        fn gains_are_scale_free(xi in 0.01f64..50.0, zeta in 0.01f64..50.0, scale in 0.001f64..1000.0) {
            // Same SNRs reached through different absolute powers.
            let lambda = scale;
            let p = zeta * lambda;
            let a = SnrPair::new(xi, p / lambda).unwrap();
            let b = SnrPair::new(xi, zeta).unwrap();
            prop_assert!((mmse_gain(a).unwrap() - mmse_gain(b).unwrap()).abs() <= 1e-12 * mmse_gain(b).unwrap());
            prop_assert!((logmmse_gain(a).unwrap() - logmmse_gain(b).unwrap()).abs() <= 1e-12 * logmmse_gain(b).unwrap());
        }

        #[test]
        fn specsub_gain_in_range(p in 0.0f64..10.0, lambda in 0.0f64..10.0, beta in 1.0f64..4.0, gmin in 0.0f64..0.5) {
            let g = spectral_subtract_gain(p, lambda, beta, gmin);
            prop_assert!(g >= gmin && g <= 1.0);
        }
    }
}
