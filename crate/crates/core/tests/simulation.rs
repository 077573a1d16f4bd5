use std::path::Path;

use bearing_forge::control::ControlMode;
use bearing_forge::scenario::{self, ScenarioConfig};
use bearing_forge::sim::{self, min_pairwise_distance, xi_oracle};
use bearing_forge::{linalg, Error};

fn fixture(name: &str) -> ScenarioConfig {
    scenario::load_scenario(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)).unwrap()
}

fn feedback_only(perturbation: f64) -> ScenarioConfig {
    let mut cfg = fixture("square_known.json");
    cfg.controller.mode = ControlMode::FeedbackOnly;
    cfg.disturbances.clear();
    for a in cfg.agents.iter_mut().filter(|a| a.id > 2) {
        let desired = a.desired.clone().unwrap();
        a.position = Some(vec![desired[0] + perturbation, desired[1] - 0.5 * perturbation]);
    }
    cfg
}

#[test]
fn step_halving_changes_terminal_state_little() {
    let sim = fixture("square_known.json").build().unwrap();
    let a = sim.integrate_with(1e-3, 10.0, usize::MAX).unwrap();
    let b = sim.integrate_with(5e-4, 10.0, usize::MAX).unwrap();
    let change = (&a.last().state.x - &b.last().state.x).norm();
    assert!(change < 1e-8, "{change:e}");
}

#[test]
fn feedback_only_small_perturbation_decays() {
    let sim = feedback_only(1e-4).build().unwrap();
    let traj = sim.integrate().unwrap();
    let m = sim::metrics(&traj);
    assert!(m.terminal_err_p < 1e-6, "{:e}", m.terminal_err_p);
    // the envelope (peak over consecutive 10 s windows) shrinks
    let peak = |lo: f64| {
        traj.samples
            .iter()
            .filter(|s| s.state.t >= lo && s.state.t < lo + 10.0)
            .map(|s| s.metrics.err_p)
            .fold(0.0f64, f64::max)
    };
    for k in 0..4 {
        let w = 10.0 * k as f64;
        assert!(peak(w + 10.0) < peak(w), "window {w}");
    }
}

#[test]
fn fitted_rate_tracks_spectral_abscissa() {
    let sim = fixture("square_known.json").build().unwrap();
    let abscissa = linalg::spectral_abscissa(&sim.a_sigma().unwrap());
    let rate = sim::metrics(&sim.integrate().unwrap()).decay_rate.unwrap();
    assert!((rate - abscissa).abs() <= 0.2 * abscissa.abs(), "{rate} vs {abscissa}");
}

#[test]
fn pinned_trajectory_has_undefined_rate() {
    let sim = feedback_only(0.0).build().unwrap();
    let mut traj = sim.integrate_with(1e-3, 1.0, 100).unwrap();
    for s in &mut traj.samples {
        s.metrics.err_p = 0.0;
        s.metrics.err_v = 0.0;
    }
    let m = sim::metrics(&traj);
    assert_eq!(m.terminal_err_p, 0.0);
    assert_eq!(m.decay_rate, None);
    assert!(!m.decay_rate_defined);
    let json = serde_json::to_value(&m).unwrap();
    assert!(json["decay_rate"].is_null());
}

#[test]
fn recorded_min_distance_is_brute_force_minimum() {
    let sim = fixture("square_known.json").build().unwrap();
    let traj = sim.integrate_with(1e-3, 5.0, 50).unwrap();
    for s in &traj.samples {
        let p = sim.positions(&s.state.x);
        let mut best = f64::INFINITY;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    best = best.min(((p[2 * i] - p[2 * j]).powi(2) + (p[2 * i + 1] - p[2 * j + 1]).powi(2)).sqrt());
                }
            }
        }
        assert_eq!(s.metrics.min_dist, best);
        assert_eq!(min_pairwise_distance(&p, 2).0, best);
    }
}

#[test]
fn constant_disturbance_xi_decays_like_exp_minus_t() {
    let mut cfg = fixture("square_known.json");
    for d in &mut cfg.disturbances {
        d.terms.clear();
    }
    let sim = cfg.build().unwrap();
    let traj = sim.integrate_with(1e-3, 5.0, 100).unwrap();
    let xi0 = sim.xi(&traj.first().state.x);
    assert!(xi0.norm() > 0.1);
    for s in &traj.samples {
        let expected = &xi0 * (-s.state.t).exp();
        assert!((sim.xi(&s.state.x) - expected).amax() < 1e-10);
    }
    assert!(xi_oracle(&traj, &sim) < 1e-10);
}

#[test]
fn divergence_is_reported() {
    let mut cfg = fixture("square_known.json");
    cfg.controller.kappa_p = 1e6;
    cfg.controller.kappa_v = 1e3;
    cfg.integration.h = 0.1;
    cfg.integration.t_final = 500.0;
    let err = cfg.build().unwrap().integrate().unwrap_err();
    assert!(matches!(err, Error::NonFiniteState { .. }), "{err:?}");
}
