use modkal_core::dereverb::{self, LrsvConfig, RirParams, WpeConfig};
use modkal_core::evalkit::{self, active_snr_db, add_noise_at_snr, degrade, seg_snr, signal_lsd, speech_like, white_noise};
use modkal_core::gainrules::{self, default_gain_floor, BaselineConfig, GainMethod};
use modkal_core::modkf::{self, ModKfConfig, ModKfVariant};
use modkal_core::{stft, StftGeometry};
use proptest::prelude::*;

const SR: u32 = 16_000;

fn noisy(seconds: f64, snr_db: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let clean = speech_like(SR, seconds);
    let noise = white_noise(clean.len(), seed);
    let mixed = add_noise_at_snr(&clean, &noise, snr_db, seed + 1).unwrap();
    (clean, mixed)
}

#[test]
fn every_enhancer_preserves_length() {
    let g = StftGeometry::speech_default(SR);
    let (_, x) = noisy(1.3, 5.0, 3);
    let mut outputs = Vec::new();
    for m in [GainMethod::SpectralSubtraction, GainMethod::Mmse, GainMethod::LogMmse] {
        outputs.push(gainrules::enhance_utterance_baseline(&x, &g, &BaselineConfig::new(m)).unwrap());
    }
    for v in [ModKfVariant::Linear, ModKfVariant::LogPower, ModKfVariant::InterIntra] {
        outputs.push(modkf::enhance_utterance_modkf(&x, &g, v, &ModKfConfig::default()).unwrap());
    }
    outputs.push(dereverb::enhance_utterance_lrsv(&x, &g, &LrsvConfig::new(0.5)).unwrap());
    outputs.push(dereverb::enhance_utterance_wpe(&x, &g, &WpeConfig::default()).unwrap());
    for out in outputs {
        assert_eq!(out.len(), x.len());
        assert!(out.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn gains_stay_in_documented_range() {
    let g = StftGeometry::speech_default(SR);
    let (_, x) = noisy(1.0, 0.0, 5);
    let spec = stft::analyze_padded(&x, &g).unwrap();
    let floor = default_gain_floor();
    for (m, g_max) in [(GainMethod::SpectralSubtraction, 1.0), (GainMethod::Mmse, 2.0), (GainMethod::LogMmse, 1.0)] {
        let gains = gainrules::baseline_gains(&spec, &BaselineConfig::new(m)).unwrap().gains;
        assert!(gains.iter().all(|&v| v >= floor - 1e-15 && v <= g_max), "{m:?}");
    }
    for v in [ModKfVariant::Linear, ModKfVariant::LogPower, ModKfVariant::InterIntra] {
        let gains = modkf::modkf_gains(&spec, v, &ModKfConfig::default()).unwrap();
        assert!(gains.iter().all(|&x| x >= floor - 1e-15 && x <= 1.0), "{v:?}");
    }
}

#[test]
fn reverberate_then_suppress() {
    let g = StftGeometry::speech_default(SR);
    let dry = speech_like(SR, 3.0);
    let h = dereverb::synth_rir(&RirParams::new(0.6, -2.0, SR, 21)).unwrap();
    let wet = degrade(&dry, Some(&h), None, f64::INFINITY, 0).unwrap();
    assert_eq!(wet.len(), dry.len() + h.len() - 1);
    let wet = &wet[..dry.len()];
    for out in [
        dereverb::enhance_utterance_lrsv(wet, &g, &LrsvConfig::new(0.6)).unwrap(),
        dereverb::enhance_utterance_wpe(wet, &g, &WpeConfig::default()).unwrap(),
    ] {
        assert!(signal_lsd(&dry, &out, &g).unwrap() < signal_lsd(&dry, wet, &g).unwrap());
    }
}

#[test]
fn unit_impulse_degrade_is_identity() {
    let x = speech_like(SR, 0.2);
    assert_eq!(degrade(&x, Some(&[1.0]), None, 0.0, 1).unwrap(), x);
}

#[test]
fn metric_report_is_one_json_line() {
    let (clean, x) = noisy(0.5, 5.0, 8);
    let g = StftGeometry::speech_default(SR);
    let report = evalkit::MetricReport {
        file: "a.wav".into(),
        method: "logmmse".into(),
        seg_snr_db: seg_snr(&clean, &x, g.frame_len).unwrap(),
        lsd_db: signal_lsd(&clean, &x, &g).unwrap(),
        config_hash: "00".into(),
        per_frame_seg_snr_db: None,
    };
    let line = report.to_json_line();
    assert!(!line.contains('\n'));
    for key in ["file", "method", "seg_snr_db", "lsd_db", "config_hash"] {
        assert!(line.contains(&format!("\"{key}\"")));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mixing_hits_requested_snr(snr in -10.0f64..30.0, seed in 0u64..1000) {
        let clean = speech_like(8000, 0.5);
        let noise = white_noise(3000, seed);
        let mixed = add_noise_at_snr(&clean, &noise, snr, seed).unwrap();
        let residual: Vec<f64> = mixed.iter().zip(&clean).map(|(m, c)| m - c).collect();
        prop_assert!((active_snr_db(&clean, &residual).unwrap() - snr).abs() < 0.01);
    }

    #[test]
    fn enhancers_are_deterministic(seed in 0u64..50) {
        let g = StftGeometry::speech_default(8000);
        let clean = speech_like(8000, 0.6);
        let x = add_noise_at_snr(&clean, &white_noise(clean.len(), seed), 5.0, seed).unwrap();
        let run = || modkf::enhance_utterance_modkf(&x, &g, ModKfVariant::InterIntra, &ModKfConfig::default()).unwrap();
        prop_assert_eq!(run(), run());
    }
}
