use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use modkal_cli::{parse_config, read_wav, run_cli, write_wav, CliError};
use modkal_core::evalkit::speech_like;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str], env_config: Option<&Path>) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("modkal").chain(args.iter().copied());
    let code = run_cli(argv, env_config.map(|p| p.as_os_str().to_owned()), &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn speech_file(dir: &TempDir, name: &str, seconds: f64) -> PathBuf {
    let path = dir.path().join(name);
    write_wav(&path, &speech_like(16_000, seconds), 16_000).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pcm16_full_scale_scaling() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("pcm.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    for v in [32767i16, -32768, 0, 1] {
        w.write_sample(v).unwrap();
    }
    w.finalize().unwrap();
    let (x, sr) = read_wav(&path).unwrap();
    assert_eq!(sr, 16_000);
    assert_eq!(x, vec![32767.0 / 32768.0, -1.0, 0.0, 1.0 / 32768.0]);
}

#[test]
fn float32_round_trip_is_exact() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("f.wav");
    let x: Vec<f64> = (0..1000).map(|i| f64::from(((i as f32) * 0.37).sin() * 0.9)).collect();
    write_wav(&path, &x, 8000).unwrap();
    let (y, sr) = read_wav(&path).unwrap();
    assert_eq!(sr, 8000);
    assert_eq!(x, y);
}

#[test]
fn stereo_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("st.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    for _ in 0..8 {
        w.write_sample(0i16).unwrap();
    }
    w.finalize().unwrap();
    let err = read_wav(&path).unwrap_err();
    assert!(err.to_string().contains("mono required"), "{err}");
}

#[test]
fn unsupported_rate_is_runtime_error() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.wav");
    write_wav(&input, &vec![0.1; 44_100], 44_100).unwrap();
    let out = dir.path().join("out.wav");
    let r = run(&["enhance", s(&input), s(&out)], None);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("44100"), "{}", r.stderr);
    assert!(!out.exists());
}

#[test]
fn pipeline_writes_wav_and_metrics() {
    let dir = TempDir::new().unwrap();
    let input = speech_file(&dir, "clean.wav", 1.0);
    let out = dir.path().join("out.wav");
    let r = run(
        &["pipeline", "--method", "logmmse", "--derev", "none", "--snr", "5", "--seed", "1", s(&input), s(&out)],
        None,
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (y, sr) = read_wav(&out).unwrap();
    assert_eq!(sr, 16_000);
    assert_eq!(y.len(), 16_000);
    let line = r.stdout.lines().next().expect("one metrics line");
    assert_eq!(r.stdout.lines().count(), 1);
    for field in ["\"file\"", "\"method\":\"logmmse\"", "\"seg_snr_db\"", "\"lsd_db\"", "\"config_hash\""] {
        assert!(line.contains(field), "{line}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let input = speech_file(&dir, "clean.wav", 1.0);
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("out{i}.wav"));
        let metrics = dir.path().join(format!("m{i}.jsonl"));
        let r = run(
            &[
                "pipeline", "--method", "modkf_log", "--derev", "lrsv", "--t60", "0.4", "--snr", "10", "--seed", "9",
                "--metrics", s(&metrics), s(&input), s(&out),
            ],
            None,
        );
        assert_eq!(r.code, 0, "{}", r.stderr);
        assert!(r.stdout.is_empty());
        outputs.push((fs::read(&out).unwrap(), fs::read(&metrics).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_changes_output() {
    let dir = TempDir::new().unwrap();
    let input = speech_file(&dir, "clean.wav", 0.5);
    let mut wavs = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(format!("d{seed}.wav"));
        let r = run(&["degrade", "--snr", "0", "--seed", seed, s(&input), s(&out)], None);
        assert_eq!(r.code, 0, "{}", r.stderr);
        wavs.push(fs::read(&out).unwrap());
    }
    assert_ne!(wavs[0], wavs[1]);
}

#[test]
fn degrade_with_reverb_extends_signal() {
    let dir = TempDir::new().unwrap();
    let input = speech_file(&dir, "clean.wav", 0.5);
    let out = dir.path().join("rev.wav");
    let r = run(&["degrade", "--t60", "0.3", "--drr", "3", "--seed", "4", s(&input), s(&out)], None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (y, _) = read_wav(&out).unwrap();
    assert!(y.len() > 8000);
    assert!(r.stdout.is_empty());
}

#[test]
fn short_input_with_wpe_fails_cleanly() {
    let dir = TempDir::new().unwrap();
    let input = speech_file(&dir, "short.wav", 0.4);
    let out = dir.path().join("out.wav");
    let metrics = dir.path().join("m.jsonl");
    let r = run(
        &["enhance", "--derev", "wpe", "--reference", s(&input), "--metrics", s(&metrics), s(&input), s(&out)],
        None,
    );
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("utterance too short for WPE taps"), "{}", r.stderr);
    assert!(!out.exists());
    assert!(!metrics.exists());
}

#[test]
fn eval_identical_signals() {
    let dir = TempDir::new().unwrap();
    let input = speech_file(&dir, "a.wav", 0.5);
    let r = run(&["eval", "--reference", s(&input), s(&input)], None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("\"seg_snr_db\":35.0"), "{}", r.stdout);
    assert!(r.stdout.contains("\"lsd_db\":0.0"), "{}", r.stdout);
    assert!(r.stdout.contains("\"method\":\"unprocessed\""), "{}", r.stdout);
}

#[test]
fn config_hash_tracks_settings() {
    let dir = TempDir::new().unwrap();
    let input = speech_file(&dir, "a.wav", 0.5);
    let hash_of = |extra: &[&str]| {
        let mut args = vec!["eval", "--reference", s(&input)];
        args.extend_from_slice(extra);
        args.push(s(&input));
        let r = run(&args, None);
        assert_eq!(r.code, 0, "{}", r.stderr);
        let i = r.stdout.find("\"config_hash\":\"").unwrap() + 15;
        r.stdout[i..i + 64].to_string()
    };
    assert_eq!(hash_of(&[]), hash_of(&[]));
    assert_ne!(hash_of(&[]), hash_of(&["--hop_ms", "5"]));
}

#[test]
fn config_file_alpha_out_of_range() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# run settings\nmethod = modkf_log\nalpha=1.5\n").unwrap();
    let r = run(&["enhance", "--config", s(&cfg), "in.wav", "out.wav"], None);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("alpha out of range [-1,1]"), "{}", r.stderr);
}

#[test]
fn flags_override_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "snr=0\nseed=3\n").unwrap();
    let c = parse_config(["modkal", "pipeline", "--snr", "10", "in.wav", "out.wav"], Some(&cfg)).unwrap();
    assert_eq!(c.snr_db, Some(10.0));
    assert_eq!(c.seed, Some(3));
}

#[test]
fn env_config_is_default_and_flag_config_wins() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "colour=blue\n").unwrap();
    let good = dir.path().join("good.cfg");
    fs::write(&good, "method=mmse\n").unwrap();

    let r = run(&["enhance", "in.wav", "out.wav"], Some(&bad));
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("unknown configuration key `colour`"), "{}", r.stderr);

    let c = parse_config(["modkal", "enhance", "--config", s(&good), "a", "b"], Some(&bad)).unwrap();
    assert_eq!(c.method.name(), "mmse");
}

#[test]
fn usage_errors() {
    for args in [
        &["enhance"][..],
        &["denoise", "a.wav", "b.wav"],
        &["enhance", "--method", "wiener", "a.wav", "b.wav"],
        &["enhance", "--bogus", "1", "a.wav", "b.wav"],
        &["pipeline", "--snr", "5", "a.wav", "b.wav"],
    ] {
        let r = run(args, None);
        assert_eq!(r.code, 2, "{args:?}: {}", r.stderr);
    }
    assert!(matches!(
        parse_config(["modkal", "enhance"], None),
        Err(CliError::Usage(m)) if m.contains("missing input path")
    ));
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_modkal");
    let dir = TempDir::new().unwrap();
    let usage = Command::new(exe).arg("enhance").env_remove("MODKAL_CONFIG").output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
    let missing = dir.path().join("nope.wav");
    let runtime = Command::new(exe)
        .args(["enhance", s(&missing), s(&dir.path().join("o.wav"))])
        .env_remove("MODKAL_CONFIG")
        .output()
        .unwrap();
    assert_eq!(runtime.status.code(), Some(3));
    let help = Command::new(exe).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("pipeline"));
}
