//! Modulation-domain Kalman filtering of per-bin spectral trajectories.
//!
//! Each frequency bin carries a small Gaussian state: the current and previous
//! spectral value (plus, for the inter+intra variant, a third component holding
//! the spectral prediction from the next-lower bin). Prediction uses an AR model
//! fitted per modulation frame; the update is either the linear amplitude-domain
//! one (speech and noise amplitudes add) or a sigma-point update under the
//! log-power observation model
//!
//! ```text
//! y = x + ln(1 + exp(n - x) + 2 * alpha * exp((n - x) / 2))
//! ```
//!
//! where `alpha` is the cosine of the speech/noise phase difference.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::armodel::{build_modulation_frames, fit_ar, ArModel};
use crate::error::{Error, Result};
use crate::gainrules::{self, BaselineConfig, GainMethod, EULER_GAMMA};
use crate::stft::{self, SpectralDomain, StftGeometry, LOG_POWER_FLOOR};

/// Smallest eigenvalue a repaired covariance may have.
pub const PSD_EIGEN_FLOOR: f64 = 1e-10;

/// Added to `1 - presence` before inverting it in the noise update.
const PRESENCE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateDomain {
    Amplitude,
    LogPower,
}

/// Gaussian state for one frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct KfState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub domain: StateDomain,
}

impl KfState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, domain: StateDomain) -> Result<Self> {
        let d = mean.len();
        if !(d == 2 || d == 3) {
            return Err(Error::StateDimension { expected: 2, got: d });
        }
        if cov.shape() != (d, d) {
            return Err(Error::ShapeMismatch {
                expected: (d, d),
                got: cov.shape(),
            });
        }
        Ok(Self { mean, cov, domain })
    }

    /// All components at `level` with independent variance `var`.
    pub fn flat(dim: usize, level: f64, var: f64, domain: StateDomain) -> Result<Self> {
        Self::new(
            DVector::from_element(dim, level),
            DMatrix::from_diagonal_element(dim, dim, var),
            domain,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn leading_mean(&self) -> f64 {
        self.mean[0]
    }

    pub fn leading_var(&self) -> f64 {
        self.cov[(0, 0)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseModel {
    /// Phase factor in `[-1, 1]`.
    Alpha(f64),
    /// Soft-maximum sharpness, `> 0`.
    Gamma(f64),
}

/// Log-power measurement model plus additive observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    pub phase: PhaseModel,
    pub obs_noise_var: f64,
}

impl ObservationModel {
    pub fn alpha(alpha: f64, obs_noise_var: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&alpha) {
            return Err(Error::param("alpha", format!("out of range [-1, 1]: {alpha}")));
        }
        Self::checked(PhaseModel::Alpha(alpha), obs_noise_var)
    }

    pub fn gamma(gamma: f64, obs_noise_var: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param("gamma", format!("must be > 0, got {gamma}")));
        }
        Self::checked(PhaseModel::Gamma(gamma), obs_noise_var)
    }

    fn checked(phase: PhaseModel, obs_noise_var: f64) -> Result<Self> {
        if !(obs_noise_var >= 0.0) {
            return Err(Error::param("obs_noise_var", format!("must be >= 0, got {obs_noise_var}")));
        }
        Ok(Self { phase, obs_noise_var })
    }

    /// Noise-free noisy log-power for speech `x` and noise `n`.
    pub fn predict(&self, x: f64, n: f64) -> Result<f64> {
        match self.phase {
            PhaseModel::Alpha(a) => observation_fn(x, n, a),
            PhaseModel::Gamma(g) => observation_fn_gamma(x, n, g),
        }
    }

    /// Like [`predict`](Self::predict) but floors an invalid log argument
    /// instead of failing; used inside the sigma-point update.
    fn predict_floored(&self, x: f64, n: f64) -> f64 {
        match self.phase {
            PhaseModel::Alpha(a) => {
                let (base, rel) = alpha_terms(x, n, a);
                base + (1.0 + rel).max(LOG_POWER_FLOOR).ln()
            }
            PhaseModel::Gamma(g) => observation_fn_gamma(x, n, g).unwrap_or(x.max(n)),
        }
    }
}

/// Returns `(m, r)` with `y = m + ln(1 + r)`, expanded around the larger of
/// `x` and `n` so the exponentials never overflow.
fn alpha_terms(x: f64, n: f64, alpha: f64) -> (f64, f64) {
    let (hi, lo) = if n <= x { (x, n) } else { (n, x) };
    let d = lo - hi;
    (hi, d.exp() + 2.0 * alpha * (0.5 * d).exp())
}

pub fn observation_fn(x: f64, n: f64, alpha: f64) -> Result<f64> {
    let (base, rel) = alpha_terms(x, n, alpha);
    let arg = 1.0 + rel;
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(Error::InvalidPhaseConfiguration(arg));
    }
    Ok(base + rel.ln_1p())
}

pub fn observation_fn_gamma(x: f64, n: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::param("gamma", format!("must be > 0, got {gamma}")));
    }
    let d = gamma * (n - x);
    // softplus(d) / gamma, evaluated without overflow
    let softplus = if d > 0.0 { d + (-d).exp().ln_1p() } else { d.exp().ln_1p() };
    Ok(x + softplus / gamma)
}

fn companion_terms(model: &ArModel) -> Result<(f64, f64)> {
    match model.coeffs.as_slice() {
        [] => Ok((0.0, 0.0)),
        [a1] => Ok((*a1, 0.0)),
        [a1, a2] => Ok((*a1, *a2)),
        other => Err(Error::StateDimension {
            expected: 2,
            got: other.len(),
        }),
    }
}

/// Temporal prediction with the AR companion matrix acting on the first two
/// components (the third, if present, is carried unchanged).
pub fn kf_predict_inter(state: &KfState, model: &ArModel) -> Result<KfState> {
    let (a1, a2) = companion_terms(model)?;
    if !(model.residual_var >= 0.0) {
        return Err(Error::param("residual_var", "must be >= 0"));
    }
    let d = state.dim();
    let mu = model.mean;
    let m = &state.mean;
    let p = &state.cov;

    let mut mean = m.clone();
    mean[0] = mu + (a1 * (m[0] - mu) + a2 * (m[1] - mu));
    mean[1] = m[0];

    // F P, rows 0 and 1 only; row 2 is unchanged.
    let mut fp = p.clone();
    for l in 0..d {
        fp[(0, l)] = a1 * p[(0, l)] + a2 * p[(1, l)];
        fp[(1, l)] = p[(0, l)];
    }
    // (F P) F^T, columns 0 and 1 only.
    let mut cov = fp.clone();
    for i in 0..d {
        cov[(i, 0)] = a1 * fp[(i, 0)] + a2 * fp[(i, 1)];
        cov[(i, 1)] = fp[(i, 0)];
    }
    cov[(0, 0)] += model.residual_var;
    Ok(KfState {
        mean,
        cov,
        domain: state.domain,
    })
}

/// Spectral (intra-frame) AR(1) predictor across neighbouring bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntraPredictor {
    pub coeff: f64,
    pub residual_var: f64,
    /// Convex weight of the spectral prediction in the blended speech mean.
    pub weight: f64,
}

/// Posterior of the next-lower bin in the current frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBin {
    pub mean: f64,
    pub var: f64,
    /// Level the lower bin's fluctuations are measured around.
    pub offset: f64,
}

/// Sets the third state component to the spectral prediction from the lower
/// bin and blends it into the speech mean with weight `intra.weight`. The
/// leading variance is that of the two-component mixture, so disagreement
/// between the temporal and spectral predictions widens the prior.
pub fn kf_predict_intra(
    state: &KfState,
    lower: LowerBin,
    own_offset: f64,
    intra: &IntraPredictor,
) -> Result<KfState> {
    if state.dim() != 3 {
        return Err(Error::StateDimension {
            expected: 3,
            got: state.dim(),
        });
    }
    if !(0.0..=1.0).contains(&intra.weight) {
        return Err(Error::param("weight", format!("must be in [0, 1], got {}", intra.weight)));
    }
    let w = intra.weight;
    let mut mean = state.mean.clone();
    let mut cov = state.cov.clone();
    mean[2] = intra.coeff * (lower.mean - lower.offset);
    cov[(2, 2)] = intra.coeff * intra.coeff * lower.var + intra.residual_var;
    cov[(0, 2)] = 0.0;
    cov[(1, 2)] = 0.0;
    cov[(2, 0)] = 0.0;
    cov[(2, 1)] = 0.0;

    // Two-component mixture of the temporal and spectral predictions,
    // collapsed to its first two moments.
    let p = cov.clone();
    let temporal = mean[0];
    let spectral = own_offset + mean[2];
    let spread = temporal - spectral;
    mean[0] = (1.0 - w) * temporal + w * spectral;
    cov[(0, 0)] = (1.0 - w) * p[(0, 0)] + w * p[(2, 2)] + w * (1.0 - w) * spread * spread;
    for j in 1..3 {
        let v = (1.0 - w) * p[(0, j)] + w * p[(2, j)];
        cov[(0, j)] = v;
        cov[(j, 0)] = v;
    }
    Ok(KfState {
        mean,
        cov,
        domain: state.domain,
    })
}

/// Symmetrises `cov` and lifts negative eigenvalues to [`PSD_EIGEN_FLOOR`].
pub fn repair_psd(cov: &mut DMatrix<f64>) {
    let d = cov.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(PSD_EIGEN_FLOOR));
    let v = &eig.eigenvectors;
    *cov = v * DMatrix::from_diagonal(&clamped) * v.transpose();
}

/// Applies a scalar observation of the leading component whose innovation has
/// covariance `cross_lead` with the leading state entry; the other entries are
/// updated through their regression on the leading one.
fn scalar_update(state: &KfState, innovation: f64, innovation_var: f64, cross_lead: f64) -> KfState {
    let d = state.dim();
    let p00 = state.cov[(0, 0)];
    let cross: Vec<f64> = (0..d)
        .map(|j| {
            if j == 0 {
                cross_lead
            } else if p00 > 0.0 {
                state.cov[(j, 0)] / p00 * cross_lead
            } else {
                0.0
            }
        })
        .collect();
    let mut mean = state.mean.clone();
    let mut cov = state.cov.clone();
    for i in 0..d {
        mean[i] += cross[i] / innovation_var * innovation;
        for j in 0..d {
            cov[(i, j)] -= cross[i] * cross[j] / innovation_var;
        }
    }
    repair_psd(&mut cov);
    KfState {
        mean,
        cov,
        domain: state.domain,
    }
}

/// Linear update for `y = x + n` in the amplitude domain.
pub fn kf_update_linear(state: &KfState, y_amp: f64, noise_amp_mean: f64, noise_amp_var: f64) -> Result<KfState> {
    if state.domain != StateDomain::Amplitude {
        return Err(Error::param("state.domain", "linear update needs an amplitude-domain state"));
    }
    if noise_amp_var < 0.0 || state.leading_var() < 0.0 {
        return Err(Error::param("variance", "negative variance in linear update"));
    }
    let p00 = state.leading_var();
    let s = p00 + noise_amp_var;
    if !s.is_finite() || s <= 0.0 {
        return Ok(state.clone());
    }
    Ok(scalar_update(state, y_amp - state.leading_mean() - noise_amp_mean, s, p00))
}

/// Per-bin noise log-power estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseState {
    pub mean: f64,
    pub var: f64,
    /// Random-walk variance added per frame.
    pub process_var_q: f64,
}

/// Speech and noise posteriors from one joint log-power update.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPowerUpdate {
    pub state: KfState,
    pub noise: NoiseState,
}

/// Passes of statistical linearisation in [`kf_update_logpower`].
pub const SLR_ITERATIONS: usize = 8;

/// Sigma-point linear regression of the observation function over a joint
/// Gaussian on `(x, n)`: returns `(a, b, omega)` with
/// `h(z) ~= a . z + b + e`, `var(e) = omega`.
fn sigma_point_regression(mean: Vector2<f64>, cov: Matrix2<f64>, obs: &ObservationModel) -> (Vector2<f64>, f64, f64) {
    // 2d + 1 points with lambda + d = 3
    const SCALE: f64 = 3.0;
    const W0: f64 = 1.0 / 3.0;
    const WI: f64 = 1.0 / 6.0;
    let eig = SymmetricEigen::new(cov);
    let mut points = vec![(mean, W0)];
    for j in 0..2 {
        let dir = eig.eigenvectors.column(j) * (SCALE * eig.eigenvalues[j].max(0.0)).sqrt();
        points.push((mean + dir, WI));
        points.push((mean - dir, WI));
    }
    let ys: Vec<f64> = points.iter().map(|(z, _)| obs.predict_floored(z[0], z[1])).collect();
    let y_hat: f64 = points.iter().zip(&ys).map(|(p, y)| p.1 * y).sum();
    let mut cross = Vector2::zeros();
    let mut pyy = 0.0;
    for ((z, w), y) in points.iter().zip(&ys) {
        cross += (z - mean) * (w * (y - y_hat));
        pyy += w * (y - y_hat) * (y - y_hat);
    }
    // a = P^+ C, inverting only the directions the points actually spread in
    let top = eig.eigenvalues.max().max(0.0);
    let mut a = Vector2::zeros();
    for j in 0..2 {
        let l = eig.eigenvalues[j];
        if l > 1e-12 * top && l > 0.0 {
            let v = eig.eigenvectors.column(j);
            a += v * (v.dot(&cross) / l);
        }
    }
    let omega = (pyy - (cov * a).dot(&a)).max(0.0);
    (a, y_hat - a.dot(&mean), omega)
}

/// Sigma-point update of the speech state and the noise on one noisy log-power
/// observation. Speech and noise enter as independent Gaussians. The
/// observation function is linearised statistically over the current joint
/// posterior and the update re-run from the prior, repeated
/// [`SLR_ITERATIONS`] times; the first pass is the plain unscented update.
/// The speech-noise cross-covariance created by the update is not carried
/// forward.
pub fn kf_update_logpower(
    state: &KfState,
    y_lp: f64,
    noise: &NoiseState,
    obs: &ObservationModel,
) -> Result<LogPowerUpdate> {
    if state.domain != StateDomain::LogPower {
        return Err(Error::param("state.domain", "log-power update needs a log-power state"));
    }
    if !obs.obs_noise_var.is_finite() {
        return Ok(LogPowerUpdate {
            state: state.clone(),
            noise: *noise,
        });
    }
    let prior_mean = Vector2::new(state.leading_mean(), noise.mean);
    let prior_cov = Matrix2::new(state.leading_var().max(0.0), 0.0, 0.0, noise.var.max(0.0));
    let (mut mean, mut cov) = (prior_mean, prior_cov);
    let mut fit = (Vector2::zeros(), 0.0, 0.0);
    for _ in 0..SLR_ITERATIONS {
        fit = sigma_point_regression(mean, cov, obs);
        let (a, b, omega) = fit;
        let gain_num = prior_cov * a;
        let s = a.dot(&gain_num) + omega + obs.obs_noise_var;
        if !(s > 0.0) {
            break;
        }
        let next = prior_mean + gain_num * ((y_lp - a.dot(&prior_mean) - b) / s);
        cov = prior_cov - gain_num * gain_num.transpose() / s;
        let settled = (next - mean).amax() < 1e-10;
        mean = next;
        if settled {
            break;
        }
    }
    let (a, b, omega) = fit;
    let (px, pn) = (prior_cov[(0, 0)], prior_cov[(1, 1)]);
    let s = a[0] * a[0] * px + a[1] * a[1] * pn + omega + obs.obs_noise_var;
    if !(s > 0.0) {
        return Ok(LogPowerUpdate {
            state: state.clone(),
            noise: *noise,
        });
    }
    let innovation = y_lp - a.dot(&prior_mean) - b;
    let updated = scalar_update(state, innovation, s, a[0] * px);
    let noise = NoiseState {
        mean: noise.mean + a[1] * pn / s * innovation,
        var: (pn - a[1] * a[1] * pn * pn / s).max(0.0),
        process_var_q: noise.process_var_q,
    };
    Ok(LogPowerUpdate { state: updated, noise })
}

/// Probability that speech dominates a log-power observation, as a logistic
/// function of its excess over the noise level (midpoint 3 nats, slope 1/2 per nat).
pub fn speech_presence(y_lp: f64, noise_mean: f64) -> f64 {
    1.0 / (1.0 + (-0.5 * (y_lp - noise_mean - 3.0)).exp())
}

/// Random-walk prediction followed by a presence-gated scalar update.
pub fn noise_track_update(noise: &NoiseState, y_lp: f64, speech_presence_prob: f64, obs_var: f64) -> NoiseState {
    let spp = speech_presence_prob.clamp(0.0, 1.0);
    let prior_var = noise.var + noise.process_var_q;
    let r = obs_var / (1.0 - spp + PRESENCE_EPS);
    let gain = prior_var / (prior_var + r);
    NoiseState {
        mean: noise.mean + gain * (y_lp - noise.mean),
        var: (1.0 - gain) * prior_var,
        process_var_q: noise.process_var_q,
    }
}

/// Shape and scale of the Gamma distribution with the given mean and variance.
pub fn gamma_moment_match(mean: f64, var: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && var > 0.0) {
        return Err(Error::param("mean/var", format!("must both be > 0, got {mean}, {var}")));
    }
    Ok((mean * mean / var, var / mean))
}

// ---------------------------------------------------------------------------
// Trajectory enhancement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModKfConfig {
    pub ar_order: usize,
    /// Modulation frame length, in STFT frames.
    pub mod_len: usize,
    pub mod_hop: usize,
    pub observation: ObservationModel,
    /// Lower bound on the fitted AR residual variance.
    pub min_residual_var: f64,
    pub initial_var: f64,
    /// Noise-level random walk variance per frame.
    pub noise_q: f64,
    /// Spread of the instantaneous noise log-power around the tracked level.
    pub noise_inst_var: f64,
    pub track_noise: bool,
    /// Weight of the intra-frame prediction; `None` runs the 2-state filter.
    pub intra_weight: Option<f64>,
    pub g_min: f64,
}

impl Default for ModKfConfig {
    fn default() -> Self {
        Self {
            ar_order: 2,
            mod_len: 16,
            mod_hop: 4,
            observation: ObservationModel {
                phase: PhaseModel::Alpha(0.0),
                obs_noise_var: 0.5,
            },
            min_residual_var: 1e-4,
            initial_var: 4.0,
            noise_q: 1e-3,
            // variance of ln of an exponential variate
            noise_inst_var: PI * PI / 6.0,
            track_noise: true,
            intra_weight: None,
            g_min: gainrules::default_gain_floor(),
        }
    }
}

impl ModKfConfig {
    fn validate(&self) -> Result<()> {
        if self.ar_order > 2 {
            return Err(Error::param("ar_order", "at most 2 (two temporal state components)"));
        }
        if self.mod_len < 2 * self.ar_order + 1 {
            return Err(Error::param("mod_len", "must be at least 2 * ar_order + 1"));
        }
        if self.mod_hop == 0 {
            return Err(Error::param("mod_hop", "must be positive"));
        }
        if let Some(w) = self.intra_weight {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::param("intra_weight", "must be in [0, 1]"));
            }
        }
        Ok(())
    }

    fn state_dim(&self) -> usize {
        if self.intra_weight.is_some() {
            3
        } else {
            2
        }
    }

    /// Index of the modulation frame whose AR model drives frame `t`: the most
    /// recent window that ends at or before `t`.
    fn model_index(&self, t: usize, n_models: usize) -> usize {
        if t + 1 < self.mod_len {
            0
        } else {
            ((t + 1 - self.mod_len) / self.mod_hop).min(n_models - 1)
        }
    }
}

fn fit_models(source: &[f64], bin: usize, cfg: &ModKfConfig) -> Result<Vec<ArModel>> {
    build_modulation_frames(source, bin, cfg.mod_len, cfg.mod_hop)?
        .iter()
        .map(|frame| {
            let mut model = fit_ar(&frame.samples, cfg.ar_order)?;
            model.residual_var = model.residual_var.max(cfg.min_residual_var);
            Ok(model)
        })
        .collect()
}

/// Posterior means and leading variances, `T x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackEstimates {
    pub means: Array2<f64>,
    pub vars: Array2<f64>,
}

/// Where the noise log-power prior of each update comes from.
#[derive(Debug, Clone, Copy)]
pub enum NoiseInput<'a> {
    /// Per-bin starting states, advanced by the presence-gated tracker when
    /// `track_noise` is set.
    Tracked(&'a [NoiseState]),
    /// Externally estimated mean noise log-power per cell (`T x K`).
    Levels(ArrayView2<'a, f64>),
}

/// Log-power Kalman filtering of every bin of a `T x K` noisy log-power matrix.
///
/// AR models are refitted per modulation frame on `ar_source` (normally a
/// pre-cleaned version of `noisy`). With an intra weight set, bins are visited
/// in ascending order within each frame so the lower bin's posterior is
/// available to the spectral predictor.
pub fn enhance_log_power(
    noisy: ArrayView2<f64>,
    ar_source: ArrayView2<f64>,
    noise: NoiseInput,
    cfg: &ModKfConfig,
) -> Result<TrackEstimates> {
    cfg.validate()?;
    let (n_frames, n_bins) = noisy.dim();
    if ar_source.dim() != noisy.dim() {
        return Err(Error::ShapeMismatch {
            expected: noisy.dim(),
            got: ar_source.dim(),
        });
    }
    let mut noises = match noise {
        NoiseInput::Tracked(init) if init.len() != n_bins => {
            return Err(Error::ShapeMismatch {
                expected: (n_bins, 1),
                got: (init.len(), 1),
            })
        }
        NoiseInput::Tracked(init) => init.to_vec(),
        NoiseInput::Levels(levels) if levels.dim() != noisy.dim() => {
            return Err(Error::ShapeMismatch {
                expected: noisy.dim(),
                got: levels.dim(),
            })
        }
        NoiseInput::Levels(_) => Vec::new(),
    };
    if n_frames < cfg.mod_len {
        return Err(Error::TrackTooShort {
            needed: cfg.mod_len,
            got: n_frames,
        });
    }
    let models: Vec<Vec<ArModel>> = (0..n_bins)
        .map(|k| fit_models(&ar_source.column(k).to_vec(), k, cfg))
        .collect::<Result<_>>()?;
    let n_models = models[0].len();
    let dim = cfg.state_dim();
    let mut states: Vec<KfState> = models
        .iter()
        .map(|m| KfState::flat(dim, m[0].mean, cfg.initial_var, StateDomain::LogPower))
        .collect::<Result<_>>()?;
    let mut means = Array2::zeros((n_frames, n_bins));
    let mut vars = Array2::zeros((n_frames, n_bins));

    for t in 0..n_frames {
        let j = cfg.model_index(t, n_models);
        let intra = match cfg.intra_weight {
            Some(weight) => Some(fit_intra(ar_source.row(t).as_slice(), &models, j, weight, cfg)?),
            None => None,
        };
        let mut lower: Option<LowerBin> = None;
        for k in 0..n_bins {
            let model = &models[k][j];
            let mut state = if t == 0 {
                states[k].clone()
            } else {
                kf_predict_inter(&states[k], model)?
            };
            if let (Some(intra), Some(lower)) = (intra.as_ref(), lower) {
                state = kf_predict_intra(&state, lower, model.mean, intra)?;
            }
            let y = noisy[[t, k]];
            let noise_prior = match noise {
                NoiseInput::Tracked(_) => NoiseState {
                    mean: noises[k].mean,
                    var: noises[k].var + noises[k].process_var_q + cfg.noise_inst_var,
                    process_var_q: noises[k].process_var_q,
                },
                NoiseInput::Levels(levels) => NoiseState {
                    mean: levels[[t, k]],
                    var: cfg.noise_inst_var,
                    process_var_q: 0.0,
                },
            };
            let update = kf_update_logpower(&state, y, &noise_prior, &cfg.observation)?;
            state = update.state;
            if cfg.track_noise && !noises.is_empty() {
                let spp = speech_presence(y, noises[k].mean);
                // the level absorbs the jointly updated instantaneous noise
                noises[k] = noise_track_update(&noises[k], update.noise.mean, spp, cfg.noise_inst_var);
            }
            means[[t, k]] = state.leading_mean();
            vars[[t, k]] = state.leading_var();
            lower = Some(LowerBin {
                mean: state.leading_mean(),
                var: state.leading_var(),
                offset: model.mean,
            });
            states[k] = state;
        }
    }
    Ok(TrackEstimates { means, vars })
}

/// AR(1) across bins of the frame's deviations from the per-bin model means.
fn fit_intra(frame: Option<&[f64]>, models: &[Vec<ArModel>], j: usize, weight: f64, cfg: &ModKfConfig) -> Result<IntraPredictor> {
    let frame: Vec<f64> = match frame {
        Some(f) => f.to_vec(),
        None => return Err(Error::param("ar_source", "must be in standard layout")),
    };
    let dev: Vec<f64> = frame.iter().zip(models).map(|(v, m)| v - m[j].mean).collect();
    let (coeff, residual_var) = if dev.len() >= 3 {
        let m = fit_ar(&dev, 1)?;
        (m.coeffs[0], m.residual_var.max(cfg.min_residual_var))
    } else {
        (0.0, cfg.initial_var)
    };
    Ok(IntraPredictor {
        coeff,
        residual_var,
        weight,
    })
}

/// Filters a single bin's noisy log-power trajectory, fitting the AR models on
/// the trajectory itself. Returns posterior means and variances per frame.
pub fn enhance_track(noisy_lp_track: &[f64], noise: NoiseState, cfg: &ModKfConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg = ModKfConfig {
        intra_weight: None,
        ..*cfg
    };
    let view = ArrayView2::from_shape((noisy_lp_track.len(), 1), noisy_lp_track)
        .map_err(|_| Error::param("noisy_lp_track", "not contiguous"))?;
    let est = enhance_log_power(view, view, NoiseInput::Tracked(&[noise]), &cfg)?;
    Ok((est.means.column(0).to_vec(), est.vars.column(0).to_vec()))
}

/// Amplitude-domain filtering with the linear update. `noise_power` holds the
/// per-cell noise power estimate; the noise amplitude is taken as Rayleigh
/// with that power.
pub fn enhance_amplitude(
    noisy_amp: ArrayView2<f64>,
    ar_source: ArrayView2<f64>,
    noise_power: ArrayView2<f64>,
    cfg: &ModKfConfig,
) -> Result<TrackEstimates> {
    cfg.validate()?;
    let (n_frames, n_bins) = noisy_amp.dim();
    if ar_source.dim() != noisy_amp.dim() || noise_power.dim() != noisy_amp.dim() {
        return Err(Error::ShapeMismatch {
            expected: noisy_amp.dim(),
            got: ar_source.dim(),
        });
    }
    if n_frames < cfg.mod_len {
        return Err(Error::TrackTooShort {
            needed: cfg.mod_len,
            got: n_frames,
        });
    }
    let mut means = Array2::zeros((n_frames, n_bins));
    let mut vars = Array2::zeros((n_frames, n_bins));
    for k in 0..n_bins {
        let models = fit_models(&ar_source.column(k).to_vec(), k, cfg)?;
        let spread = models[0].residual_var.max(cfg.min_residual_var);
        let mut state = KfState::flat(2, models[0].mean, 4.0 * spread, StateDomain::Amplitude)?;
        for t in 0..n_frames {
            let model = &models[cfg.model_index(t, models.len())];
            if t > 0 {
                state = kf_predict_inter(&state, model)?;
            }
            let lambda = noise_power[[t, k]];
            let n_mean = 0.5 * (PI * lambda).sqrt();
            let n_var = (1.0 - PI / 4.0) * lambda;
            state = kf_update_linear(&state, noisy_amp[[t, k]], n_mean, n_var)?;
            means[[t, k]] = state.leading_mean();
            vars[[t, k]] = state.leading_var();
        }
    }
    Ok(TrackEstimates { means, vars })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModKfVariant {
    /// Amplitude domain, linear update.
    Linear,
    /// Log-power domain, sigma-point update.
    LogPower,
    /// Log-power domain with the extra intra-frame state.
    InterIntra,
}

/// Default blend weight of the intra-frame prediction.
pub const DEFAULT_INTRA_WEIGHT: f64 = 0.3;

/// Full utterance: STFT, Log-MMSE pre-cleaning (for AR fitting and noise
/// initialisation), per-bin Kalman filtering, gain, inverse STFT.
pub fn enhance_utterance_modkf(
    signal: &[f64],
    geometry: &StftGeometry,
    variant: ModKfVariant,
    cfg: &ModKfConfig,
) -> Result<Vec<f64>> {
    let spec = stft::analyze_padded(signal, geometry)?;
    let gains = modkf_gains(&spec, variant, cfg)?;
    stft::synthesize_aligned(&stft::apply_gain(&spec, &gains)?)
}

/// Real-valued time-frequency gains from the Kalman posterior.
pub fn modkf_gains(spec: &stft::Spectrogram, variant: ModKfVariant, cfg: &ModKfConfig) -> Result<Array2<f64>> {
    let baseline = gainrules::baseline_gains(spec, &BaselineConfig::new(GainMethod::LogMmse))?;
    let power = stft::to_domain(spec, SpectralDomain::Power).values;
    let g_min = cfg.g_min;
    match variant {
        ModKfVariant::Linear => {
            let amp = power.mapv(f64::sqrt);
            let pre = &amp * &baseline.gains;
            let est = enhance_amplitude(amp.view(), pre.view(), baseline.noise_psd.view(), cfg)?;
            let mut gains = est.means;
            gains.zip_mut_with(&amp, |g, &a| {
                *g = if a > 0.0 { (*g / a).clamp(g_min, 1.0) } else { g_min };
            });
            Ok(gains)
        }
        ModKfVariant::LogPower | ModKfVariant::InterIntra => {
            let y = power.mapv(|p| p.max(LOG_POWER_FLOOR).ln());
            let mut pre = power.clone();
            pre.zip_mut_with(&baseline.gains, |p, &g| *p = (g * g * *p).max(LOG_POWER_FLOOR).ln());
            let noise_init: Vec<NoiseState> = baseline
                .noise_psd
                .row(0)
                .iter()
                .map(|&lambda| NoiseState {
                    // E[ln |N|^2] for exponentially distributed noise power
                    mean: lambda.max(LOG_POWER_FLOOR).ln() - EULER_GAMMA,
                    var: 1.0,
                    process_var_q: cfg.noise_q,
                })
                .collect();
            let cfg = ModKfConfig {
                intra_weight: match variant {
                    ModKfVariant::InterIntra => Some(cfg.intra_weight.unwrap_or(DEFAULT_INTRA_WEIGHT)),
                    _ => None,
                },
                ..*cfg
            };
            let est = enhance_log_power(y.view(), pre.view(), NoiseInput::Tracked(&noise_init), &cfg)?;
            let mut gains = est.means;
            gains.zip_mut_with(&y, |g, &yl| *g = (0.5 * (*g - yl)).exp().clamp(g_min, 1.0));
            Ok(gains)
        }
    }
}
