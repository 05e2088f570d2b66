//! Mono WAV input (PCM16 or float32) and float32 output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::CliError;

/// Sample rates the pipeline accepts.
pub const SUPPORTED_RATES: [u32; 2] = [8000, 16000];

const PCM16_SCALE: f64 = 32768.0;

/// Reads a mono WAV file. PCM16 samples are divided by 32768.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32), CliError> {
    let ctx = |e: hound::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut reader = WavReader::open(path).map_err(ctx)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(CliError::Runtime(format!(
            "{}: mono required, file has {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / PCM16_SCALE))
            .collect::<Result<Vec<_>, _>>()
            .map_err(ctx)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<Vec<_>, _>>()
            .map_err(ctx)?,
        (fmt, bits) => {
            return Err(CliError::Runtime(format!(
                "{}: unsupported sample format {fmt:?} with {bits} bits (PCM16 or float32 required)",
                path.display()
            )))
        }
    };
    Ok((samples, spec.sample_rate))
}

/// Writes a mono float32 WAV file.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate_hz: u32) -> Result<(), CliError> {
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(CliError::Runtime(format!("non-finite output sample at index {i}")));
    }
    let ctx = |e: hound::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let spec = WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(ctx)?;
    for &s in samples {
        writer.write_sample(s as f32).map_err(ctx)?;
    }
    writer.finalize().map_err(ctx)
}

pub fn check_rate(path: &Path, sample_rate_hz: u32) -> Result<(), CliError> {
    if SUPPORTED_RATES.contains(&sample_rate_hz) {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{}: sample rate {sample_rate_hz} Hz not supported (8000 or 16000)",
            path.display()
        )))
    }
}
