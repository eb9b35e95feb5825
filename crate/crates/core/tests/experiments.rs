mod common;

use std::sync::OnceLock;

use nalgebra::Vector2;
use whisker_core::beam_oracle::ObjectContour;
use whisker_core::estimators::{init_belief, Method};
use whisker_core::experiments::config::ExperimentConfig;
use whisker_core::experiments::report::{emit_plotdata, read_jsonl_report, render_report, PLOT_HEADER};
use whisker_core::experiments::run::{
    fixed_hint, run_estimator, AggregateMetrics, EstimatePoint, MetricsReport, TrialMetrics,
};
use whisker_core::experiments::suite::{self, PreparedTrial};
use whisker_core::experiments::{ExperimentError, ReportFormat, TrialRecord};
use whisker_core::kinematics::{world_point, ContactState};

use common::{Suite, CONTOUR, STRAIGHT};

fn straight() -> &'static Suite {
    static S: OnceLock<Suite> = OnceLock::new();
    S.get_or_init(|| Suite::new(common::config(STRAIGHT)))
}

fn contour() -> &'static Suite {
    static S: OnceLock<Suite> = OnceLock::new();
    S.get_or_init(|| Suite::new(common::config(CONTOUR)))
}

/// Three presses into a cylinder below the whisker, releasing in between.
fn presses() -> &'static Suite {
    static S: OnceLock<Suite> = OnceLock::new();
    S.get_or_init(|| {
        Suite::new(common::config(
            "[trials]\nkind = \"scripted\"\ncount = 1\n\
             object = { kind = \"circle\", center = [0.03, -0.016], radius = 0.015 }\n\
             trajectory = \"0: 0, 0, 0; 0.5: 0.002, -0.003, 0.02; 1: 0, 0, 0; \
             1.5: -0.002, -0.003, -0.02; 2: 0, 0, 0; 2.5: 0, -0.0035, 0; 3: 0, 0, 0\"\n",
        ))
    })
}

fn csv_lines(text: &str) -> Vec<&str> {
    text.lines().collect()
}

#[test]
fn pin_trials_last_fifteen_seconds() {
    for t in &straight().trials {
        assert_eq!(t.record.len(), 3750);
        assert!(t.record.is_synthetic());
        assert!(t.record.samples.iter().all(|s| s.ground_truth.is_some()));
        for s in &t.record.samples {
            assert_eq!(s.contact, s.ground_truth.unwrap().is_finite());
        }
        let dt = t.record.samples[1].t - t.record.samples[0].t;
        assert!((dt - 0.004).abs() < 1e-12);
    }
}

#[test]
fn trial_csv_round_trips_bit_exactly() {
    let rec = &straight().trials[0].record;
    let text = rec.to_csv_string();
    let back = TrialRecord::read_csv(text.as_bytes()).unwrap();
    assert!(back.gaps.is_empty());
    assert_eq!(back.record.to_csv_string(), text);
    for (a, b) in rec.samples.iter().zip(&back.record.samples) {
        assert_eq!(a.t.to_bits(), b.t.to_bits());
        assert_eq!(a.signal.to_bits(), b.signal.to_bits());
        assert_eq!(a.base, b.base);
        let (ga, gb) = (a.ground_truth.unwrap(), b.ground_truth.unwrap());
        assert_eq!(ga.px.to_bits(), gb.px.to_bits());
        assert_eq!(ga.py.to_bits(), gb.py.to_bits());
    }
}

#[test]
fn shuffled_rows_fail_validation() {
    let text = straight().trials[0].record.to_csv_string();
    let mut lines = csv_lines(&text);
    lines.swap(100, 101);
    match TrialRecord::read_csv(lines.join("\n").as_bytes()) {
        // line 101 of the data now precedes line 100
        Err(ExperimentError::NonIncreasingTime { row }) => assert_eq!(row, 102),
        other => panic!("{other:?}"),
    }
}

#[test]
fn timestamp_gap_is_flagged_not_rejected() {
    let text = straight().trials[0].record.to_csv_string();
    let mut lines = csv_lines(&text);
    // 25 missing samples: a 104 ms gap
    lines.drain(201..226);
    let log = TrialRecord::read_csv(lines.join("\n").as_bytes()).unwrap();
    assert_eq!(log.gaps, vec![200]);
    assert_eq!(log.record.len(), 3750 - 25);
}

#[test]
fn malformed_rows_name_row_and_column() {
    let good = "t,bx,by,btheta,sig,gt_px,gt_py,contact\n0,0,0,0,1.5,,,0\n";
    assert!(TrialRecord::read_csv(good.as_bytes()).is_ok());
    let cases = [
        ("0,0,0,0,abc,,,0", 2, "sig"),
        ("0,0,0,0,1,0.03,,1", 2, "gt_px"),
        ("0,0,0,0,1,,,2", 2, "contact"),
        ("0,0,inf,0,1,,,0", 2, "by"),
        ("0,0,0,0,1,,", 2, "*"),
    ];
    for (row, want_row, want_col) in cases {
        let text = format!("t,bx,by,btheta,sig,gt_px,gt_py,contact\n{row}\n");
        match TrialRecord::read_csv(text.as_bytes()) {
            Err(ExperimentError::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (want_row, want_col)),
            other => panic!("{text}: {other:?}"),
        }
    }
    let header = "t,x,y,theta,sig,gt_px,gt_py,contact\n";
    assert!(matches!(
        TrialRecord::read_csv(header.as_bytes()),
        Err(ExperimentError::Parse { row: 1, .. })
    ));
}

#[test]
fn generation_is_deterministic_per_seed() {
    let cfg = common::config("[trials]\ncount = 2\n");
    let a = suite::generate_trials(&cfg).unwrap();
    let b = suite::generate_trials(&cfg).unwrap();
    assert_eq!(a[0].record.to_csv_string(), b[0].record.to_csv_string());
    assert_eq!(a[1].record.to_csv_string(), b[1].record.to_csv_string());
    assert_ne!(a[0].record.to_csv_string(), a[1].record.to_csv_string());
    assert_eq!(a[0].record.to_csv_string(), straight().trials[0].record.to_csv_string());
}

#[test]
fn sweep_ground_truth_lies_on_the_cylinder() {
    let s = contour();
    let mut checked = 0;
    for t in s.trials.iter().filter(|t| t.label.starts_with("cylinder")) {
        let c = t.contour.as_ref().unwrap();
        assert!(matches!(c, ObjectContour::Circle { .. }));
        for smp in &t.record.samples {
            let Some(g) = smp.ground_truth.filter(|g| g.is_finite()) else { continue };
            let w = world_point(smp.base, g);
            assert!(c.distance_to_boundary(w) < 1e-9, "{:e}", c.distance_to_boundary(w));
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn wide_cylinder_is_traced_within_a_millimetre() {
    let s = contour();
    let (r, _) = s.run(Method::Ukf);
    let t = r.trials.iter().find(|t| t.label == "cylinder100").unwrap();
    assert!(t.contour_mean.unwrap() < 1.0, "{:?}", t.contour_mean);
}

#[test]
fn rectangle_estimates_stay_on_one_corner() {
    let s = contour();
    let (r, _) = s.run(Method::Ukf);
    let t = r.trials.iter().find(|t| t.label == "rectangle").unwrap();
    assert!(t.corner_fraction.unwrap() >= 0.95, "{:?}", t.corner_fraction);
}

/// Signal replaced by the sensor model at ground truth and no noise: the
/// measurements are exactly what the filter expects.
#[test]
fn consistent_measurements_and_exact_prior_track_closely() {
    let s = straight();
    let mut cfg = s.cfg.clone();
    cfg.run.init_offset = 0.0;
    let models = &s.cal.models;
    let t = &s.trials[0];
    let mut rec = t.record.clone();
    // the pin stays on one side for the whole trial
    let model = &models.models()[models.select(rec.samples.iter().map(|s| s.signal).sum())];
    for smp in &mut rec.samples {
        smp.signal = match smp.ground_truth.filter(|g| g.is_finite()) {
            Some(g) => model.value(g),
            None => 0.0,
        };
    }
    let rc = suite::run_config(&cfg, Method::Ukf, models, t.seed, false);
    let run = run_estimator(&rec, models, &rc, None, 0, "consistent").unwrap();
    let mean = run.metrics.mean_error.unwrap();
    assert!(mean < 0.05, "mean error {mean} mm");
}

#[test]
fn pooled_metrics_match_raw_estimates() {
    let s = straight();
    let (report, runs) = s.run(Method::Ukf);
    let errs: Vec<f64> = runs.iter().flat_map(|r| r.estimates.iter().filter_map(|e| e.error)).collect();
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    let max = errs.iter().copied().fold(0.0, f64::max);
    let min = errs.iter().copied().fold(f64::INFINITY, f64::min);
    let a = &report.aggregate;
    assert_eq!(a.samples, errs.len());
    for (got, want) in [(a.mean_error, mean), (a.std_error, std), (a.max_error, max), (a.min_error, min)] {
        let got = got.unwrap();
        assert!((got - want * 1e3).abs() <= 1e-9 * got.abs().max(1.0), "{got} vs {}", want * 1e3);
    }
    for (t, r) in report.trials.iter().zip(&runs) {
        let (lo, mid, hi) = (t.min_error.unwrap(), t.mean_error.unwrap(), t.max_error.unwrap());
        assert!(0.0 <= lo && lo <= mid && mid <= hi);
        for e in &r.estimates {
            if let (Some(g), Some(err)) = (e.truth, e.error) {
                assert_eq!(err, g.distance(&e.estimate));
            }
        }
    }
}

fn init_hint(cfg: &ExperimentConfig, models_side: whisker_core::sensor_model::Side, truth: Option<ContactState>) -> ContactState {
    match truth {
        Some(g) => ContactState::new(g.px + cfg.run.init_offset, g.py),
        None => fixed_hint(&cfg.spec(), models_side, cfg.run.init_offset),
    }
}

/// The first estimate of each contact equals a fresh `init_belief`.
fn check_reinit(s: &Suite, t: &PreparedTrial, method: Method) -> usize {
    let rc = suite::run_config(&s.cfg, method, &s.cal.models, t.seed, false);
    let run = run_estimator(&t.record, &s.cal.models, &rc, None, 0, "reinit").unwrap();
    let mut starts = 0;
    for (k, e) in run.estimates.iter().enumerate() {
        if k > 0 && run.estimates[k - 1].index + 1 == e.index {
            continue;
        }
        let smp = &t.record.samples[e.index];
        let side = s.cal.models.models()[s.cal.models.select(smp.signal)].side;
        let truth = smp.ground_truth.filter(|g| smp.contact && g.is_finite());
        let hint = init_hint(&s.cfg, side, truth);
        let (belief, _) = init_belief(method, &rc.filter, hint, rc.spec.workspace_radius());
        assert_eq!(e.estimate, belief.estimate(), "{} at sample {}", method.as_str(), e.index);
        starts += 1;
    }
    assert_eq!(starts, run.metrics.inits);
    starts
}

#[test]
fn every_contact_starts_from_init_belief() {
    let s = presses();
    let t = &s.trials[0];
    for m in Method::ALL {
        assert!(check_reinit(s, t, m) >= 3);
    }
    check_reinit(straight(), &straight().trials[0], Method::Pf);
}

fn estimate(i: usize) -> EstimatePoint {
    let t = i as f64 * 0.004;
    EstimatePoint {
        index: i,
        t,
        estimate: ContactState::new(0.03, 0.001),
        world: [0.03 + t, 0.001],
        truth: None,
        truth_world: None,
        error: None,
        scored: true,
    }
}

#[test]
fn plot_data_downsamples_by_ceiling_division() {
    let estimates: Vec<EstimatePoint> = (0..3750).map(estimate).collect();
    let mut buf = Vec::new();
    emit_plotdata(&estimates, 20, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines = csv_lines(&text);
    assert_eq!(lines[0], PLOT_HEADER);
    assert_eq!(lines.len() - 1, 188);
    assert_eq!(lines[2], "0.08,0.11,0.001,,");
}

#[test]
fn empty_plot_data_is_header_only() {
    let mut buf = Vec::new();
    emit_plotdata(&[], 20, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), format!("{PLOT_HEADER}\n"));
}

fn known_report() -> MetricsReport {
    let trial = |i: usize, mean: f64, conv: f64| TrialMetrics {
        trial: i,
        label: "pin".into(),
        method: Method::Ukf,
        samples: 3600 + i,
        mean_error: Some(mean),
        std_error: Some(0.25),
        max_error: Some(5.125),
        min_error: Some(0.0125),
        convergence_time: Some(conv),
        contour_mean: None,
        contour_std: None,
        corner_fraction: None,
        inits: 1,
        breaks: 0,
        step_ms_mean: None,
        step_ms_max: None,
    };
    MetricsReport {
        trials: vec![trial(0, 0.5, 0.42), trial(1, 0.75, 0.5)],
        aggregate: AggregateMetrics {
            method: Method::Ukf,
            trials: 2,
            samples: 7201,
            mean_error: Some(0.625),
            std_error: Some(0.3),
            max_error: Some(5.125),
            min_error: Some(0.0125),
            converged: 2,
            convergence_mean: Some(0.46),
            convergence_max: Some(0.5),
            contour_mean: None,
            contour_std: None,
            corner_fraction: None,
            step_ms_mean: None,
            step_ms_max: None,
        },
    }
}

#[test]
fn table_matches_golden_file() {
    let golden = include_str!("fixtures/report_table.txt");
    assert_eq!(render_report(&known_report(), ReportFormat::Table), golden);
}

#[test]
fn csv_and_jsonl_are_stable() {
    let r = known_report();
    let csv = render_report(&r, ReportFormat::Csv);
    assert_eq!(
        csv_lines(&csv)[1],
        "0,pin,ukf,3600,0.5000,0.2500,5.1250,0.0125,0.4200,,,"
    );
    let jsonl = render_report(&r, ReportFormat::Jsonl);
    assert_eq!(jsonl.lines().count(), 3);
    assert_eq!(read_jsonl_report(jsonl.as_bytes()).unwrap(), r);
    let broken = jsonl.lines().take(2).collect::<Vec<_>>().join("\n");
    assert!(matches!(read_jsonl_report(broken.as_bytes()), Err(ExperimentError::Parse { .. })));
}

#[test]
fn scripted_trial_follows_the_config() {
    let trials = suite::generate_trials(&presses().cfg).unwrap();
    assert_eq!(trials.len(), 1);
    let rec = &trials[0].record;
    assert_eq!(rec.len(), 750);
    let contacts = rec.samples.windows(2).filter(|w| w[1].contact && !w[0].contact).count();
    assert_eq!(contacts, 3);
    let c = trials[0].contour.as_ref().unwrap();
    for s in rec.samples.iter().filter(|s| s.contact) {
        let w = world_point(s.base, s.ground_truth.unwrap());
        assert!(c.distance_to_boundary(Vector2::new(w.x, w.y)) < 1e-9);
    }
}

#[test]
fn config_round_trips_and_rejects_unknown_keys() {
    let cfg = common::config("[whisker]\npreset = \"curved\"\n[filter]\nparticle_count = 500\n[run]\ninit = \"fixed\"\n");
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
    assert!(matches!(
        ExperimentConfig::from_toml_str("[filter]\nparticles = 10\n"),
        Err(ExperimentError::Toml(_))
    ));
    assert!(ExperimentConfig::from_toml_str("[filter]\nfading_alpha = 0.5\n").is_err());
}
