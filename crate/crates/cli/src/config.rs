//! Run configuration: command-line flags layered over an optional
//! `key=value` file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;

use crate::CliError;

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "MODKAL_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Degrade,
    Enhance,
    Eval,
    Pipeline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Specsub,
    Mmse,
    Logmmse,
    ModkfLin,
    ModkfLog,
    Modkf3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derev {
    None,
    Lrsv,
    Wpe,
    WpeBlock,
}

macro_rules! named_enum {
    ($ty:ident, $what:literal, { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub const NAMES: &'static [&'static str] = &[$($name),+];

            pub fn name(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }

        impl FromStr for $ty {
            type Err = CliError;
            fn from_str(s: &str) -> Result<Self, CliError> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(CliError::Usage(format!(
                        "invalid {} `{}` (expected one of: {})",
                        $what, other, Self::NAMES.join(", ")
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(Mode, "mode", {
    Degrade => "degrade",
    Enhance => "enhance",
    Eval => "eval",
    Pipeline => "pipeline",
});

named_enum!(Method, "method", {
    Specsub => "specsub",
    Mmse => "mmse",
    Logmmse => "logmmse",
    ModkfLin => "modkf_lin",
    ModkfLog => "modkf_log",
    Modkf3d => "modkf_3d",
});

named_enum!(Derev, "derev", {
    None => "none",
    Lrsv => "lrsv",
    Wpe => "wpe",
    WpeBlock => "wpe_block",
});

impl Method {
    /// Methods whose observation model takes a phase parameter.
    pub fn uses_phase_model(self) -> bool {
        matches!(self, Method::ModkfLog | Method::Modkf3d)
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub method: Method,
    pub derev: Derev,
    /// Reverberation time used for RIR synthesis and LRSV.
    pub t60_s: Option<f64>,
    pub drr_db: f64,
    /// Mixing SNR for the degrade stage; `None` means no additive noise.
    pub snr_db: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma_param: Option<f64>,
    pub seed: Option<u64>,
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Block length for `wpe_block`.
    pub block_s: f64,
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub noise: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
}

impl RunConfig {
    fn with_paths(mode: Mode, input: PathBuf, output: Option<PathBuf>) -> Self {
        Self {
            mode,
            method: Method::Logmmse,
            derev: Derev::None,
            t60_s: None,
            drr_db: 0.0,
            snr_db: None,
            alpha: None,
            gamma_param: None,
            seed: None,
            frame_ms: 20.0,
            hop_ms: 10.0,
            block_s: 0.5,
            input,
            output,
            reference: None,
            noise: None,
            metrics: None,
        }
    }

    /// Whether this run adds reverberation and/or noise.
    pub fn degrades(&self) -> bool {
        matches!(self.mode, Mode::Degrade | Mode::Pipeline)
    }

    /// Canonical text of every setting that affects the outputs; paths are
    /// excluded so a hash of this text identifies the processing alone.
    pub fn canonical(&self) -> String {
        fn opt<T: fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "-".to_string(), |x| x.to_string())
        }
        format!(
            "mode={}\nmethod={}\nderev={}\nt60={}\ndrr={}\nsnr={}\nalpha={}\ngamma={}\nseed={}\nframe_ms={}\nhop_ms={}\nblock_s={}\n",
            self.mode,
            self.method,
            self.derev,
            opt(&self.t60_s),
            self.drr_db,
            opt(&self.snr_db),
            opt(&self.alpha),
            opt(&self.gamma_param),
            opt(&self.seed),
            self.frame_ms,
            self.hop_ms,
            self.block_s,
        )
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "method" => self.method = value.parse()?,
            "derev" => self.derev = value.parse()?,
            "t60" => self.t60_s = Some(number(key, value)?),
            "drr" => self.drr_db = number(key, value)?,
            "snr" => self.snr_db = Some(number(key, value)?),
            "alpha" => self.alpha = Some(number(key, value)?),
            "gamma" => self.gamma_param = Some(number(key, value)?),
            "seed" => {
                self.seed = Some(
                    value
                        .parse()
                        .map_err(|_| CliError::Usage(format!("seed must be a non-negative integer, got `{value}`")))?,
                )
            }
            "frame_ms" => self.frame_ms = number(key, value)?,
            "hop_ms" => self.hop_ms = number(key, value)?,
            "block_s" => self.block_s = number(key, value)?,
            "reference" => self.reference = Some(PathBuf::from(value)),
            "noise" => self.noise = Some(PathBuf::from(value)),
            "metrics" => self.metrics = Some(PathBuf::from(value)),
            other => return Err(CliError::Usage(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Cross-field checks.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if let Some(a) = self.alpha {
            if !(-1.0..=1.0).contains(&a) {
                return usage(format!("alpha out of range [-1,1]: {a}"));
            }
        }
        if let Some(g) = self.gamma_param {
            if !(g > 0.0 && g.is_finite()) {
                return usage(format!("gamma must be positive, got {g}"));
            }
            if self.alpha.is_some() {
                return usage("alpha and gamma select different observation models; give only one".into());
            }
        }
        if (self.alpha.is_some() || self.gamma_param.is_some()) && !self.method.uses_phase_model() {
            return usage(format!(
                "alpha/gamma apply only to modkf_log and modkf_3d, not {}",
                self.method
            ));
        }
        if !(self.frame_ms > 0.0 && self.hop_ms > 0.0 && self.hop_ms <= self.frame_ms) {
            return usage(format!(
                "need 0 < hop_ms <= frame_ms, got frame_ms={} hop_ms={}",
                self.frame_ms, self.hop_ms
            ));
        }
        if let Some(t) = self.t60_s {
            if !(t > 0.0 && t.is_finite()) {
                return usage(format!("t60 must be positive, got {t}"));
            }
        }
        if !self.drr_db.is_finite() {
            return usage("drr must be finite".into());
        }
        if let Some(s) = self.snr_db {
            if s.is_nan() || s == f64::NEG_INFINITY {
                return usage(format!("snr must be a number or inf, got {s}"));
            }
        }
        if self.derev == Derev::Lrsv && self.t60_s.is_none() && self.mode != Mode::Degrade {
            return usage("derev=lrsv needs t60".into());
        }
        if self.derev == Derev::WpeBlock && !(self.block_s > 0.0 && self.block_s.is_finite()) {
            return usage(format!("block_s must be positive, got {}", self.block_s));
        }
        if self.degrades() {
            if self.t60_s.is_none() && self.snr_db.is_none() && self.noise.is_none() {
                return usage(format!("{} mode needs t60 and/or snr", self.mode));
            }
            if self.noise.is_some() && self.snr_db.is_none() {
                return usage("a noise file needs snr".into());
            }
            if self.seed.is_none() {
                return usage("seed is required for degradation".into());
            }
        }
        if self.mode == Mode::Eval && self.reference.is_none() {
            return usage("eval mode needs --reference".into());
        }
        if self.mode != Mode::Eval && self.output.is_none() {
            return usage(format!("{} mode needs an output path", self.mode));
        }
        Ok(())
    }
}

fn number(key: &str, value: &str) -> Result<f64, CliError> {
    value
        .parse::<f64>()
        .map_err(|_| CliError::Usage(format!("{key} must be a number, got `{value}`")))
}

/// Parses the body of a configuration file into ordered key/value pairs.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config line {}: expected key=value, got `{line}`",
                lineno + 1
            )));
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

#[derive(Parser, Debug)]
#[command(
    name = "modkal",
    version,
    about = "Degrade, enhance and score single-channel speech",
    allow_negative_numbers = true
)]
struct Args {
    /// degrade | enhance | eval | pipeline
    mode: String,
    /// Input WAV (clean speech for degrade/pipeline, the signal to score for eval)
    input: Option<PathBuf>,
    /// Output WAV (not used by eval)
    output: Option<PathBuf>,
    /// key=value configuration file; defaults to $MODKAL_CONFIG
    #[arg(long)]
    config: Option<PathBuf>,
    /// specsub | mmse | logmmse | modkf_lin | modkf_log | modkf_3d
    #[arg(long)]
    method: Option<String>,
    /// none | lrsv | wpe | wpe_block
    #[arg(long)]
    derev: Option<String>,
    /// Reverberation time in seconds
    #[arg(long)]
    t60: Option<String>,
    /// Direct-to-reverberant ratio in dB
    #[arg(long)]
    drr: Option<String>,
    /// Mixing SNR in dB
    #[arg(long)]
    snr: Option<String>,
    /// Phase factor of the log-power observation model, in [-1, 1]
    #[arg(long)]
    alpha: Option<String>,
    /// Soft-maximum observation model sharpness (> 0)
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "frame_ms", alias = "frame-ms")]
    frame_ms: Option<String>,
    #[arg(long = "hop_ms", alias = "hop-ms")]
    hop_ms: Option<String>,
    /// Block length in seconds for wpe_block
    #[arg(long = "block_s", alias = "block-s")]
    block_s: Option<String>,
    /// Clean reference WAV for scoring
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Noise WAV mixed in by degrade (white noise otherwise)
    #[arg(long)]
    noise: Option<PathBuf>,
    /// Write metrics here instead of stdout
    #[arg(long)]
    metrics: Option<PathBuf>,
}

impl Args {
    fn flag_pairs(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.to_string_lossy().into_owned());
        [
            ("method", self.method.clone()),
            ("derev", self.derev.clone()),
            ("t60", self.t60.clone()),
            ("drr", self.drr.clone()),
            ("snr", self.snr.clone()),
            ("alpha", self.alpha.clone()),
            ("gamma", self.gamma.clone()),
            ("seed", self.seed.clone()),
            ("frame_ms", self.frame_ms.clone()),
            ("hop_ms", self.hop_ms.clone()),
            ("block_s", self.block_s.clone()),
            ("reference", path(&self.reference)),
            ("noise", path(&self.noise)),
            ("metrics", path(&self.metrics)),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

/// Builds a [`RunConfig`] from `argv` (program name first). The config file is
/// `--config` if given, else `default_config`.
pub fn parse_config<I, S>(argv: I, default_config: Option<&Path>) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::Info(e.to_string())
        }
        _ => CliError::Usage(e.to_string().trim_end().to_string()),
    })?;

    let mode: Mode = args.mode.parse()?;
    let input = args
        .input
        .clone()
        .ok_or_else(|| CliError::Usage("missing input path".into()))?;
    let mut cfg = RunConfig::with_paths(mode, input, args.output.clone());

    let file = args.config.as_deref().or(default_config);
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        for (k, v) in parse_config_text(&text)? {
            cfg.set(&k, &v)?;
        }
    }
    for (k, v) in args.flag_pairs() {
        cfg.set(k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        parse_config(std::iter::once("modkal").chain(args.iter().copied()), None)
    }

    #[test]
    fn minimal_enhance() {
        let cfg = parse(&["enhance", "--method", "logmmse", "--snr", "5", "--seed", "7", "in.wav", "out.wav"]).unwrap();
        assert_eq!(cfg.method, Method::Logmmse);
        assert_eq!(cfg.snr_db, Some(5.0));
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.output.as_deref(), Some(Path::new("out.wav")));
    }

    #[test]
    fn enum_names_round_trip() {
        for name in Method::NAMES {
            assert_eq!(name.parse::<Method>().unwrap().name(), *name);
        }
        for name in Derev::NAMES {
            assert_eq!(name.parse::<Derev>().unwrap().name(), *name);
        }
        assert!("wiener".parse::<Method>().is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let pairs = parse_config_text("# header\n\nsnr = 3 # trailing\nmethod=mmse\n").unwrap();
        assert_eq!(
            pairs,
            vec![("snr".into(), "3".into()), ("method".into(), "mmse".into())]
        );
        assert!(parse_config_text("snr 3").is_err());
    }

    #[test]
    fn negative_values_parse() {
        let cfg = parse(&["enhance", "--method", "modkf_log", "--alpha", "-0.5", "a.wav", "b.wav"]).unwrap();
        assert_eq!(cfg.alpha, Some(-0.5));
    }

    #[test]
    fn combinations() {
        assert!(parse(&["enhance", "--alpha", "0.5", "a.wav", "b.wav"]).is_err());
        assert!(parse(&["enhance", "--derev", "lrsv", "a.wav", "b.wav"]).is_err());
        assert!(parse(&["pipeline", "--snr", "5", "a.wav", "b.wav"]).is_err());
        assert!(parse(&["pipeline", "--seed", "1", "a.wav", "b.wav"]).is_err());
        assert!(parse(&["eval", "a.wav"]).is_err());
        assert!(parse(&["eval", "--reference", "r.wav", "a.wav"]).is_ok());
        assert!(parse(&["enhance", "a.wav"]).is_err());
        assert!(parse(&["enhance", "--method", "modkf_3d", "--alpha", "0.2", "--gamma", "2", "a", "b"]).is_err());
    }

    #[test]
    fn canonical_text_ignores_paths() {
        let a = parse(&["enhance", "a.wav", "b.wav"]).unwrap();
        let b = parse(&["enhance", "c.wav", "d.wav"]).unwrap();
        let c = parse(&["enhance", "--hop_ms", "5", "a.wav", "b.wav"]).unwrap();
        assert_eq!(a.canonical(), b.canonical());
        assert_ne!(a.canonical(), c.canonical());
    }
}
