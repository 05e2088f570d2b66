//! Modulation frames and low-order autoregressive fits of spectral trajectories.

use crate::error::{Error, Result};

/// Reflection coefficients are clamped to this magnitude to keep the predictor stable.
pub const MAX_REFLECTION: f64 = 0.998;

/// A window of one frequency bin's trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationFrame {
    pub samples: Vec<f64>,
    pub bin_index: usize,
    pub start_frame: usize,
}

/// `x[t] - mean = sum_i coeffs[i] * (x[t-1-i] - mean) + e[t]`, `var(e) = residual_var`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub coeffs: Vec<f64>,
    pub residual_var: f64,
    /// Level the fluctuations are measured around; zero unless fitted with [`fit_ar`].
    pub mean: f64,
}

impl ArModel {
    pub fn new(coeffs: Vec<f64>, residual_var: f64) -> Self {
        Self {
            coeffs,
            residual_var,
            mean: 0.0,
        }
    }

    /// A model with no temporal correlation.
    pub fn white(order: usize, residual_var: f64, mean: f64) -> Self {
        Self {
            coeffs: vec![0.0; order],
            residual_var,
            mean,
        }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }
}

pub fn build_modulation_frames(
    track: &[f64],
    bin_index: usize,
    mod_len: usize,
    mod_hop: usize,
) -> Result<Vec<ModulationFrame>> {
    if mod_len == 0 || mod_hop == 0 {
        return Err(Error::param("mod_len/mod_hop", "must be positive"));
    }
    if track.len() < mod_len {
        return Err(Error::TrackTooShort {
            needed: mod_len,
            got: track.len(),
        });
    }
    Ok((0..=(track.len() - mod_len) / mod_hop)
        .map(|i| {
            let start = i * mod_hop;
            ModulationFrame {
                samples: track[start..start + mod_len].to_vec(),
                bin_index,
                start_frame: start,
            }
        })
        .collect())
}

/// Biased autocorrelation of the mean-removed frame, lags `0..=max_lag`.
pub fn autocorrelation(frame: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = frame.len();
    if max_lag >= n {
        return Err(Error::param(
            "max_lag",
            format!("must be smaller than the frame length {n}, got {max_lag}"),
        ));
    }
    let mean = frame.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = frame.iter().map(|x| x - mean).collect();
    Ok((0..=max_lag)
        .map(|lag| {
            centered[lag..]
                .iter()
                .zip(&centered)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect())
}

/// Solves the Yule-Walker equations by the Levinson-Durbin recursion.
pub fn levinson_durbin(acf: &[f64], order: usize) -> Result<ArModel> {
    if acf.len() <= order {
        return Err(Error::param(
            "acf",
            format!("need {} lags for order {order}, got {}", order + 1, acf.len()),
        ));
    }
    if !(acf[0] > 0.0) {
        return Err(Error::DegenerateAutocorrelation(acf[0]));
    }
    let mut a = vec![0.0; order];
    let mut prev = vec![0.0; order];
    let mut err = acf[0];
    for i in 0..order {
        let acc: f64 = (0..i).map(|j| a[j] * acf[i - j]).sum();
        let k = ((acf[i + 1] - acc) / err).clamp(-MAX_REFLECTION, MAX_REFLECTION);
        prev[..i].copy_from_slice(&a[..i]);
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
    }
    Ok(ArModel::new(a, err.max(0.0)))
}

/// Mean-removed AR fit of a frame. A flat frame yields a white model with
/// zero residual variance around its level.
pub fn fit_ar(frame: &[f64], order: usize) -> Result<ArModel> {
    let acf = autocorrelation(frame, order)?;
    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    let scale = 1.0 + mean * mean;
    let mut model = if acf[0] <= 1e-14 * scale {
        ArModel::white(order, 0.0, 0.0)
    } else {
        levinson_durbin(&acf, order)?
    };
    model.mean = mean;
    Ok(model)
}
