use proptest::prelude::*;
use whisker_core::experiments::config::ExperimentConfig;
use whisker_core::experiments::suite;
use whisker_core::signal::{
    analytic_butterworth_bandpass, compensate, detect_break, BandPassFilter, ContactMonitor, SampleFrame, Thresholds,
    NOMINAL_RATE_HZ,
};

/// Three presses into a cylinder with a decaying 26 Hz ring after each release.
const RINGING_PRESSES: &str = "
[signal]
ring = { amplitude = 8.0, frequency_hz = 26.0, decay = 0.08 }
[trials]
kind = \"scripted\"
count = 1
object = { kind = \"circle\", center = [0.03, -0.016], radius = 0.015 }
trajectory = \"0: 0, 0, 0; 0.5: 0.002, -0.003, 0.02; 1: 0, 0, 0; 1.5: -0.002, -0.003, -0.02; 2: 0, 0, 0; 2.5: 0, -0.0035, 0; 3: 0, 0, 0; 3.5: 0, 0, 0\"
";

fn ringing_trial() -> (Vec<f64>, Vec<bool>, Thresholds) {
    let cfg = ExperimentConfig::from_toml_str(RINGING_PRESSES).unwrap();
    let cal = suite::calibrate(&cfg).unwrap();
    let t = suite::generate_trials(&cfg).unwrap().remove(0);
    let th = suite::thresholds(&cfg, &cal.models);
    let sig = t.record.samples.iter().map(|s| s.signal).collect();
    let truth = t.record.samples.iter().map(|s| s.contact).collect();
    (sig, truth, th)
}

fn releases(truth: &[bool]) -> Vec<usize> {
    (1..truth.len()).filter(|&k| truth[k - 1] && !truth[k]).collect()
}

#[test]
fn ringing_release_gives_one_break_per_contact() {
    let (sig, truth, th) = ringing_trial();
    let rel = releases(&truth);
    assert_eq!(rel.len(), 3);
    let mut m = ContactMonitor::new(th, Some(BandPassFilter::ringing_detector()));
    let (mut makes, mut breaks) = (Vec::new(), Vec::new());
    for (k, &x) in sig.iter().enumerate() {
        let o = m.step(x);
        if o.made {
            makes.push(k);
        }
        if o.broke.is_some() {
            breaks.push(k);
        }
    }
    assert_eq!(makes.len(), 3, "makes at {makes:?}");
    assert_eq!(breaks.len(), 3, "breaks at {breaks:?}");
    for (b, r) in breaks.iter().zip(&rel) {
        let late = *b as f64 - *r as f64;
        assert!((-5.0..=25.0).contains(&late), "break at {b}, release at {r}");
    }
    let bp = detect_break(&sig, NOMINAL_RATE_HZ, &BandPassFilter::ringing_detector(), &th).unwrap();
    assert_eq!(bp, breaks);
}

#[test]
fn threshold_alone_merges_ringing_presses() {
    // the ring keeps crossing the exit threshold, so the quiet exit never
    // completes before the next press
    let (sig, _, th) = ringing_trial();
    let mut m = ContactMonitor::new(th, None);
    let makes = sig.iter().filter(|&&x| m.step(x).made).count();
    assert!(makes < 3, "{makes} makes");
}

#[test]
fn band_pass_edges_and_stopband() {
    let f = BandPassFilter::ringing_detector();
    let (lo, hi) = f.passband();
    let edge = std::f64::consts::FRAC_1_SQRT_2;
    for hz in [lo, hi] {
        assert!((f.frequency_response(hz) / edge - 1.0).abs() < 0.05);
    }
    assert!(20.0 * f.frequency_response(5.0).log10() <= -40.0);
    assert!(f.max_pole_radius() < 1.0);
    for hz in [1.0, 5.0, 15.0, 20.0, 26.0, 32.0, 60.0, 120.0] {
        let a = analytic_butterworth_bandpass(f.order(), lo, hi, f.sample_rate(), hz);
        assert!((f.frequency_response(hz) - a).abs() < 1e-9, "{hz} Hz");
    }
}

#[test]
fn common_mode_drift_is_removed() {
    let frame = |k: usize, with_ref: bool| {
        let t = k as f64 / NOMINAL_RATE_HZ;
        let drift = 0.4 * (0.7 * t).sin() + 0.1 * t;
        let press = if t > 1.0 { 10.0 } else { 0.0 };
        SampleFrame {
            timestamp: t,
            channels: vec![[3.0 + press + drift, -2.0 + drift, 0.5 + drift]],
            reference: with_ref.then_some([1.0 + drift, 1.0 + drift, 1.0 + drift]),
        }
    };
    let frames: Vec<SampleFrame> = (0..500).map(|k| frame(k, true)).collect();
    let c = compensate(&frames).unwrap();
    assert!(!c.reference_missing);
    let rest = c.channels[0][50];
    let pressed = c.channels[0][400];
    assert!((pressed[0] - rest[0] - 10.0).abs() < 1e-9);
    assert!((pressed[1] - rest[1]).abs() < 1e-9);
    let mut dropped = frames.clone();
    dropped[300] = frame(300, false);
    assert!(compensate(&dropped).unwrap().reference_missing);
}

proptest! {
    #[test]
    fn quiet_noise_never_makes_contact(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let th = Thresholds::from_max_signal(32.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = ContactMonitor::new(th, Some(BandPassFilter::ringing_detector()));
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-0.9 * th.hi..0.9 * th.hi);
            prop_assert!(!m.step(x).made);
        }
    }
}
