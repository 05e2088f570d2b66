//! Stage orchestration: degrade, enhance (denoise then dereverberate), score.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use modkal_core::dereverb::{self, LrsvConfig, RirParams, WpeConfig};
use modkal_core::evalkit::{self, MetricReport};
use modkal_core::gainrules::{self, BaselineConfig, GainMethod};
use modkal_core::modkf::{self, ModKfConfig, ModKfVariant, ObservationModel};
use modkal_core::{StftGeometry, WindowKind};
use sha2::{Digest, Sha256};

use crate::config::{Derev, Method, Mode, RunConfig};
use crate::wav::{check_rate, read_wav, write_wav};
use crate::CliError;

/// Runs every stage the mode asks for, writes the output WAV and metrics, and
/// returns the metric records. Files created by a failed run are removed.
/// Metrics go to `cfg.metrics` when set, else to `stdout`.
pub fn run_pipeline(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<Vec<MetricReport>, CliError> {
    let mut created = Vec::new();
    let result = run_stages(cfg, stdout, &mut created);
    if result.is_err() {
        for path in created {
            let _ = fs::remove_file(path);
        }
    }
    result
}

fn run_stages(
    cfg: &RunConfig,
    stdout: &mut dyn Write,
    created: &mut Vec<PathBuf>,
) -> Result<Vec<MetricReport>, CliError> {
    let (input, sr) = read_wav(&cfg.input)?;
    check_rate(&cfg.input, sr)?;
    let geometry = StftGeometry::from_ms(sr, cfg.frame_ms, cfg.hop_ms, WindowKind::SqrtHann)?;
    let hash = config_hash(cfg)?;

    let (output, scored) = match cfg.mode {
        Mode::Degrade => (Some(degrade(&input, sr, cfg)?), None),
        Mode::Enhance => {
            let enhanced = enhance(&input, &geometry, cfg)?;
            let scored = match &cfg.reference {
                Some(path) => Some((read_reference(path, sr)?, enhanced.clone())),
                None => None,
            };
            (Some(enhanced), scored)
        }
        Mode::Eval => {
            let path = cfg.reference.as_ref().expect("validated: eval has a reference");
            (None, Some((read_reference(path, sr)?, input.clone())))
        }
        Mode::Pipeline => {
            let degraded = degrade(&input, sr, cfg)?;
            let enhanced = enhance(&degraded, &geometry, cfg)?;
            (Some(enhanced.clone()), Some((input.clone(), enhanced)))
        }
    };

    let reports = match scored {
        Some((reference, test)) => vec![score(cfg, &geometry, &reference, &test, hash)?],
        None => Vec::new(),
    };

    if let (Some(signal), Some(path)) = (&output, &cfg.output) {
        created.push(path.clone());
        write_wav(path, signal, sr)?;
    }
    if !reports.is_empty() {
        let mut text = String::new();
        for r in &reports {
            text.push_str(&r.to_json_line());
            text.push('\n');
        }
        match &cfg.metrics {
            Some(path) => {
                created.push(path.clone());
                fs::write(path, text).map_err(|e| io_error(path, e))?;
            }
            None => stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Runtime(format!("writing metrics: {e}")))?,
        }
    }
    Ok(reports)
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn read_reference(path: &Path, sr: u32) -> Result<Vec<f64>, CliError> {
    let (x, rate) = read_wav(path)?;
    if rate != sr {
        return Err(CliError::Runtime(format!(
            "{}: sample rate {rate} Hz differs from input ({sr} Hz)",
            path.display()
        )));
    }
    Ok(x)
}

/// SHA-256 of the canonical settings followed by the digests of every input
/// file, hex encoded.
pub fn config_hash(cfg: &RunConfig) -> Result<String, CliError> {
    let mut h = Sha256::new();
    h.update(cfg.canonical().as_bytes());
    for path in [Some(&cfg.input), cfg.reference.as_ref(), cfg.noise.as_ref()]
        .into_iter()
        .flatten()
    {
        let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
        h.update(Sha256::digest(&bytes));
    }
    Ok(hex::encode(h.finalize()))
}

/// Reverberation and/or additive noise. Seeds for the RIR, the generated
/// noise and the noise offset are derived from the run seed.
pub fn degrade(clean: &[f64], sr: u32, cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let seed = cfg
        .seed
        .ok_or_else(|| CliError::Usage("seed is required for degradation".into()))?;
    let rir = match cfg.t60_s {
        Some(t60) => Some(dereverb::synth_rir(&RirParams::new(t60, cfg.drr_db, sr, seed))?),
        None => None,
    };
    let wet_len = clean.len() + rir.as_ref().map_or(0, |h| h.len().saturating_sub(1));
    let noise = match (cfg.snr_db, &cfg.noise) {
        (None, _) => None,
        (Some(_), Some(path)) => {
            let n = read_reference(path, sr)?;
            if n.is_empty() {
                return Err(CliError::Runtime(format!("{}: empty noise file", path.display())));
            }
            Some(n)
        }
        (Some(_), None) => Some(evalkit::white_noise(wet_len, seed.wrapping_add(1))),
    };
    let snr = cfg.snr_db.unwrap_or(f64::INFINITY);
    Ok(evalkit::degrade(
        clean,
        rir.as_deref(),
        noise.as_deref(),
        snr,
        seed.wrapping_add(2),
    )?)
}

/// Denoising followed by the configured dereverberation.
pub fn enhance(noisy: &[f64], geometry: &StftGeometry, cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let denoised = denoise(noisy, geometry, cfg)?;
    let out = match cfg.derev {
        Derev::None => denoised,
        Derev::Lrsv => {
            let t60 = cfg.t60_s.ok_or_else(|| CliError::Usage("derev=lrsv needs t60".into()))?;
            dereverb::enhance_utterance_lrsv(&denoised, geometry, &LrsvConfig::new(t60))?
        }
        Derev::Wpe => dereverb::enhance_utterance_wpe(&denoised, geometry, &WpeConfig::default())?,
        Derev::WpeBlock => dereverb::enhance_utterance_wpe(
            &denoised,
            geometry,
            &WpeConfig {
                block_s: Some(cfg.block_s),
                ..WpeConfig::default()
            },
        )?,
    };
    Ok(out)
}

fn denoise(noisy: &[f64], geometry: &StftGeometry, cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let baseline = |m| gainrules::enhance_utterance_baseline(noisy, geometry, &BaselineConfig::new(m));
    let out = match cfg.method {
        Method::Specsub => baseline(GainMethod::SpectralSubtraction)?,
        Method::Mmse => baseline(GainMethod::Mmse)?,
        Method::Logmmse => baseline(GainMethod::LogMmse)?,
        Method::ModkfLin => modkf::enhance_utterance_modkf(noisy, geometry, ModKfVariant::Linear, &modkf_config(cfg)?)?,
        Method::ModkfLog => modkf::enhance_utterance_modkf(noisy, geometry, ModKfVariant::LogPower, &modkf_config(cfg)?)?,
        Method::Modkf3d => {
            modkf::enhance_utterance_modkf(noisy, geometry, ModKfVariant::InterIntra, &modkf_config(cfg)?)?
        }
    };
    Ok(out)
}

fn modkf_config(cfg: &RunConfig) -> Result<ModKfConfig, CliError> {
    let mut kf = ModKfConfig::default();
    let var = kf.observation.obs_noise_var;
    if let Some(g) = cfg.gamma_param {
        kf.observation = ObservationModel::gamma(g, var)?;
    } else if let Some(a) = cfg.alpha {
        kf.observation = ObservationModel::alpha(a, var)?;
    }
    Ok(kf)
}

/// Label used in metric records, e.g. `logmmse+wpe`.
pub fn method_label(cfg: &RunConfig) -> String {
    match (cfg.mode, cfg.derev) {
        (Mode::Eval, _) => "unprocessed".to_string(),
        (_, Derev::None) => cfg.method.to_string(),
        (_, d) => format!("{}+{}", cfg.method, d),
    }
}

fn score(
    cfg: &RunConfig,
    geometry: &StftGeometry,
    reference: &[f64],
    test: &[f64],
    config_hash: String,
) -> Result<MetricReport, CliError> {
    // Degradation keeps the direct path at t = 0, so the shared prefix is aligned.
    let n = reference.len().min(test.len());
    let (reference, test) = (&reference[..n], &test[..n]);
    Ok(MetricReport {
        file: cfg.input.display().to_string(),
        method: method_label(cfg),
        seg_snr_db: evalkit::seg_snr(reference, test, geometry.frame_len)?,
        lsd_db: evalkit::signal_lsd(reference, test, geometry)?,
        config_hash,
        per_frame_seg_snr_db: None,
    })
}
