mod common;

use std::sync::OnceLock;

use whisker_core::estimators::{Belief, FilterConfig, Method, Tracker};
use whisker_core::experiments::run::MetricsReport;
use whisker_core::experiments::suite;
use whisker_core::kinematics::{ContactState, TimeStep};
use whisker_core::signal::NOMINAL_RATE_HZ;

use common::{Suite, STRAIGHT};

fn straight() -> &'static Suite {
    static S: OnceLock<Suite> = OnceLock::new();
    S.get_or_init(|| Suite::new(common::config(STRAIGHT)))
}

fn report(method: Method) -> &'static MetricsReport {
    static R: OnceLock<Vec<MetricsReport>> = OnceLock::new();
    let all = R.get_or_init(|| Method::ALL.iter().map(|&m| straight().run(m).0).collect());
    &all[Method::ALL.iter().position(|&m| m == method).unwrap()]
}

fn per_trial(r: &MetricsReport) -> Vec<f64> {
    r.trials.iter().map(|t| t.mean_error.unwrap()).collect()
}

#[test]
fn ukf_is_at_least_as_accurate_as_ekf() {
    let (u, e) = (report(Method::Ukf), report(Method::Ekf));
    assert!(u.aggregate.mean_error.unwrap() <= e.aggregate.mean_error.unwrap());
    let wins = per_trial(u).iter().zip(per_trial(e)).filter(|(a, b)| **a <= *b).count();
    assert!(wins * 2 > u.trials.len(), "ukf better on {wins} of {} trials", u.trials.len());
}

#[test]
fn baseline_is_worse_than_ukf_on_every_trial() {
    for (u, b) in per_trial(report(Method::Ukf)).iter().zip(per_trial(report(Method::Baseline))) {
        assert!(b > *u, "baseline {b} vs ukf {u}");
    }
}

#[test]
fn gaussian_filters_converge_on_every_trial() {
    for m in [Method::Ekf, Method::Ukf] {
        for t in &report(m).trials {
            let c = t.convergence_time.unwrap_or(f64::INFINITY);
            assert!(c <= 0.7, "{} trial {}: {c} s", m.as_str(), t.trial);
        }
    }
}

#[test]
#[ignore = "known failure: the pinned PF noise settings bias the weighted mean (about 3.8 mm)"]
fn pf_mean_error_within_2_mm() {
    let e = report(Method::Pf).aggregate.mean_error.unwrap();
    assert!(e <= 2.0, "pf mean error {e} mm");
}

#[test]
fn more_particles_do_not_hurt() {
    let s = straight();
    let mut cfg = s.cfg.clone();
    cfg.filter.particle_count = Some(4000);
    let trials = &s.trials[..3];
    let (many, _) = suite::run_suite(&cfg, Method::Pf, trials, &s.cal.models, false).unwrap();
    let (few, _) = suite::run_suite(&s.cfg, Method::Pf, trials, &s.cal.models, false).unwrap();
    let (m, f) = (many.aggregate.mean_error.unwrap(), few.aggregate.mean_error.unwrap());
    assert!(m <= 1.2 * f, "N=4000 {m} mm vs N=1000 {f} mm");
}

/// Steps a tracker over the first contact of trial 0 by hand, checking the
/// belief invariants after every step.
fn check_invariants(method: Method) {
    let s = straight();
    let rec = &s.trials[0].record;
    let start = rec.samples.iter().position(|x| x.contact).unwrap();
    let truth = rec.samples[start].ground_truth.unwrap();
    let model = &s.cal.models.models()[s.cal.models.select(rec.samples[start].signal)];
    let cfg = FilterConfig {
        rng_seed: 5,
        ..s.cfg.filter_config(method, 5)
    };
    let hint = ContactState::new(truth.px + 0.005, truth.py);
    let (mut tr, _) = Tracker::new(method, cfg, s.cfg.spec(), hint).unwrap();
    let twists = rec.twists().unwrap();
    let mut k = start + 1;
    while k < rec.len() && rec.samples[k].contact {
        let dt = TimeStep::new(rec.samples[k].t - rec.samples[k - 1].t).unwrap();
        tr.step(twists[k], dt, rec.samples[k].signal, model).unwrap();
        match tr.belief() {
            Belief::Gaussian(g) => {
                assert_eq!(g.cov[(0, 1)], g.cov[(1, 0)], "step {k}");
                let eig = g.cov.symmetric_eigenvalues();
                assert!(eig.min() >= -1e-12, "step {k}: eigenvalues {eig:?}");
            }
            Belief::Particles(p) => {
                assert_eq!(p.particles.len(), cfg.particle_count);
                let sum: f64 = p.weights.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "step {k}: weight sum {sum}");
                assert!(p.weights.iter().all(|w| *w >= 0.0));
            }
            Belief::Point(_) => {}
        }
        assert!(tr.estimate().is_finite());
        k += 1;
    }
    assert!(k - start > 500, "contact too short to exercise the filter");
}

#[test]
fn ekf_covariance_stays_psd() {
    check_invariants(Method::Ekf);
}

#[test]
fn ukf_covariance_stays_psd() {
    check_invariants(Method::Ukf);
}

#[test]
fn pf_weights_stay_normalized() {
    check_invariants(Method::Pf);
}

#[test]
fn every_method_repeats_bit_for_bit() {
    let s = straight();
    for m in Method::ALL {
        let a = s.run_one(m, 1);
        let b = s.run_one(m, 1);
        assert_eq!(a.estimates.len(), b.estimates.len());
        for (x, y) in a.estimates.iter().zip(&b.estimates) {
            assert_eq!(x.estimate.px.to_bits(), y.estimate.px.to_bits(), "{}", m.as_str());
            assert_eq!(x.estimate.py.to_bits(), y.estimate.py.to_bits(), "{}", m.as_str());
        }
    }
}

/// The UKF against exact Bayes on a lattice. Right after initialization the
/// posterior is broad and bent, and the two means can differ by over a
/// millimetre; once it has concentrated they agree closely. This checks the
/// settled half of a one-second window.
#[test]
fn ukf_tracks_grid_posterior_once_settled() {
    let s = straight();
    let steps = NOMINAL_RATE_HZ as usize;
    for t in &s.trials[..3] {
        let c = common::compare_with_grid(&s.cfg, &s.cal.models, &t.record, t.seed, steps, 1e-4);
        assert!(c.edge_mass < 1e-9, "trial {}: lattice too small ({:e})", t.index, c.edge_mass);
        let mut late = c.gaps[steps / 2..].to_vec();
        late.sort_by(f64::total_cmp);
        let median = late[late.len() / 2];
        assert!(median < 3e-4, "trial {}: settled median gap {:.3} mm", t.index, median * 1e3);
    }
}
