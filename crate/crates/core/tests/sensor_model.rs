mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use whisker_core::beam_oracle::{SolverConfig, WhiskerSpec};
use whisker_core::experiments::generate::{synthesize_calibration, CalibrationGrid, NoiseSpec};
use whisker_core::experiments::suite::{self, Calibration};
use whisker_core::kinematics::ContactState;
use whisker_core::sensor_model::{
    fit, load_model, model_to_string, parse_model, save_model, CalibrationSet, ModelError, PolynomialModel, Side,
};

use common::{CURVED, STRAIGHT};

fn straight() -> &'static Calibration {
    static CAL: OnceLock<Calibration> = OnceLock::new();
    CAL.get_or_init(|| suite::calibrate(&common::config(STRAIGHT)).unwrap())
}

fn curved() -> &'static Calibration {
    static CAL: OnceLock<Calibration> = OnceLock::new();
    CAL.get_or_init(|| suite::calibrate(&common::config(CURVED)).unwrap())
}

fn model(cal: &Calibration, side: Side) -> &PolynomialModel {
    cal.models.models().iter().find(|m| m.side == side).unwrap()
}

fn r_squared(m: &PolynomialModel, set: &CalibrationSet) -> f64 {
    let n = set.samples.len() as f64;
    let mean = set.samples.iter().map(|s| s.signal).sum::<f64>() / n;
    let ss_tot: f64 = set.samples.iter().map(|s| (s.signal - mean).powi(2)).sum();
    let ss_res: f64 = set.samples.iter().map(|s| (s.signal - m.value(s.position)).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

#[test]
fn calibration_fits_explain_the_oracle() {
    for cal in [straight(), curved()] {
        assert_eq!(cal.sets.len(), cal.models.models().len());
        for (set, m) in cal.sets.iter().zip(cal.models.models()) {
            assert_eq!(set.side, m.side);
            assert_eq!(m.degree, 5);
            assert_eq!(m.stats.n_samples, set.samples.len());
            assert!(m.stats.r_squared >= 0.99, "{:?}: R² {}", m.side, m.stats.r_squared);
            let r2 = r_squared(m, set);
            assert!((r2 - m.stats.r_squared).abs() < 1e-12, "reported {} recomputed {r2}", m.stats.r_squared);
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    for cal in [straight(), curved()] {
        for (k, m) in cal.models.models().iter().enumerate() {
            let worst = common::worst_gradient_error(m, 1000, 11 + k as u64);
            assert!(worst < 1e-4, "{:?}: {worst}", m.side);
        }
    }
}

fn held_out(spec: &WhiskerSpec, grid: CalibrationGrid) -> Vec<CalibrationSet> {
    synthesize_calibration(spec, SolverConfig::default(), &grid, &NoiseSpec::default(), 99).unwrap()
}

fn check_held_out(cal: &Calibration, sets: &[CalibrationSet]) {
    for set in sets {
        let m = model(cal, set.side);
        let inside: Vec<_> = set.samples.iter().filter(|s| !m.evaluate(s.position).extrapolated).collect();
        assert!(inside.len() > 100);
        let ok = inside
            .iter()
            .filter(|s| (m.value(s.position) - s.signal).abs() <= 3.0 * m.stats.rmse)
            .count();
        let frac = ok as f64 / inside.len() as f64;
        assert!(frac >= 0.99, "{:?}: {:.4} of {} held-out points within 3×RMSE", set.side, frac, inside.len());
    }
}

#[test]
fn held_out_straight_presses_are_predicted() {
    let deg = std::f64::consts::PI / 180.0;
    let grid = CalibrationGrid {
        radius: [0.009, 0.051, 0.002],
        angle: [0.75 * deg, 16.75 * deg, 0.5 * deg],
        ..CalibrationGrid::default()
    };
    check_held_out(straight(), &held_out(&WhiskerSpec::straight_nitinol(), grid));
}

#[test]
fn held_out_curved_presses_are_predicted() {
    let grid = CalibrationGrid {
        arc_angle: [0.3, 2.5, 0.1],
        offset: [0.00075, 0.00575, 0.0005],
        ..CalibrationGrid::default()
    };
    check_held_out(curved(), &held_out(&WhiskerSpec::curved_nitinol(), grid));
}

#[test]
fn straight_sides_are_mirror_images() {
    let cal = straight();
    let (left, right) = (model(cal, Side::Left), model(cal, Side::Right));
    let tol = left.stats.rmse + right.stats.rmse;
    let mut worst = 0.0f64;
    for s in &cal.sets.iter().find(|s| s.side == Side::Left).unwrap().samples {
        let p = s.position;
        let mirrored = ContactState::new(p.px, -p.py);
        worst = worst.max((left.value(p) + right.value(mirrored)).abs());
    }
    assert!(worst <= tol, "worst asymmetry {worst} vs {tol}");
}

#[test]
fn save_load_is_bitwise() {
    use rand::{Rng, SeedableRng};
    let dir = std::env::temp_dir().join(format!("whisker-model-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for m in straight().models.models().iter().chain(curved().models.models()) {
        let path = dir.join(format!("{}.txt", m.side.as_str()));
        save_model(m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(&back, m);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (c, h) = (m.scaling.center, m.scaling.half_range);
        for _ in 0..100 {
            let p = ContactState::new(
                c[0] + h[0] * rng.random_range(-1.2..1.2),
                c[1] + h[1] * rng.random_range(-1.2..1.2),
            );
            assert_eq!(back.value(p).to_bits(), m.value(p).to_bits());
        }
    }
    std::fs::remove_dir_all(&dir).ok();
}

const FIXTURE: &str = include_str!("fixtures/model_straight_left.txt");

#[test]
fn shipped_model_reproduces_its_probe() {
    let m = parse_model(FIXTURE).unwrap();
    assert_eq!(m.side, Side::Left);
    assert_eq!(m.degree, 5);
    let probe = m.probe.expect("fixture has a probe");
    assert_eq!(m.value(probe.position), probe.value);
    assert!(!m.evaluate(probe.position).extrapolated);
}

#[test]
fn shipped_model_matches_a_fresh_calibration() {
    let fixture = parse_model(FIXTURE).unwrap();
    let fresh = model(straight(), Side::Left);
    assert_eq!(model_to_string(fresh), FIXTURE);
    assert_eq!(&fixture, fresh);
}

#[test]
fn wrong_coefficient_count_is_a_parse_error() {
    let mut lines: Vec<&str> = FIXTURE.lines().collect();
    lines.pop();
    match parse_model(&lines.join("\n")) {
        Err(ModelError::Parse { field, message, .. }) => {
            assert_eq!(field, "coefficients");
            assert!(message.contains("expected 21"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    let bad = FIXTURE.replace("side = left", "side = up");
    match parse_model(&bad) {
        Err(ModelError::Parse { line, field, .. }) => assert_eq!((line, field.as_str()), (3, "side")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn underdetermined_fit_is_rejected() {
    let set = straight().sets[0].clone();
    let few = CalibrationSet {
        samples: set.samples[..20].to_vec(),
        side: set.side,
    };
    assert!(matches!(fit(&few, 5), Err(ModelError::TooFewSamples { needed: 21, got: 20, .. })));
}

#[test]
fn collinear_samples_are_rank_deficient() {
    let set = straight().sets[0].clone();
    let mut line = set.clone();
    for s in &mut line.samples {
        s.position.py = 0.001;
    }
    assert!(matches!(fit(&line, 5), Err(ModelError::RankDeficient { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signal_grows_with_deflection(s in 0.015f64..0.045, d in 0.0008f64..0.003) {
        let m = model(straight(), Side::Left);
        let near = ContactState::new(s, d);
        let deeper = ContactState::new(s, d + 0.001);
        prop_assert!(m.value(deeper) > m.value(near));
    }
}
