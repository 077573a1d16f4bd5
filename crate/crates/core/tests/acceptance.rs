//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bearing_forge::control::ControlMode;
use bearing_forge::disturbance::{build_canonical, DisturbanceSpec, SinusoidTerm};
use bearing_forge::graph::{
    build_bearing_laplacian, projector, stack, unit_bearing, BearingSet, Localizer, SensingGraph, DEFAULT_SEPARATION,
};
use bearing_forge::internal_model::{choose_mn, compute_e, solve_sylvester};
use bearing_forge::scenario::{self, Overrides, ScenarioConfig, ScenarioError};
use bearing_forge::sim::{self, lyapunov_monitor, xi_oracle};
use bearing_forge::{linalg, Error};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn fixture(name: &str) -> ScenarioConfig {
    scenario::load_scenario(fixture_path(name)).expect("bundled fixture loads")
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
}

fn within(limit_s: u64, elapsed: Duration) -> (bool, String) {
    (elapsed < Duration::from_secs(limit_s), format!("{:.2}s/{}s", elapsed.as_secs_f64(), limit_s))
}

fn bearing_algebra() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_proj, mut worst_sym, mut worst_psd, mut worst_null) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let d = rng.random_range(2..=3);
        let n = rng.random_range(3..=8);
        let n_l = rng.random_range(1..n);
        let positions: Vec<_> = (0..n).map(|_| random_point(&mut rng, d)).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.6) {
                    edges.push((i + 1, j + 1));
                }
            }
        }
        let graph = SensingGraph::new(n, d, n_l, &edges).unwrap();
        let bearings = BearingSet::from_positions(&graph, &positions, DEFAULT_SEPARATION).unwrap();
        for (i, j) in graph.edges() {
            let g = unit_bearing(&positions[i], &positions[j], DEFAULT_SEPARATION).unwrap();
            let p = projector(&g).unwrap();
            worst_proj = worst_proj
                .max((&p * &p - &p).amax())
                .max((&p - p.transpose()).amax())
                .max((&p * &g).amax());
        }
        let lap = build_bearing_laplacian(&graph, &bearings).unwrap();
        worst_sym = worst_sym.max((&lap.full - lap.full.transpose()).amax());
        worst_psd = worst_psd.min(linalg::symmetric_extremes(&lap.full).0);
        let v = random_point(&mut rng, d);
        let ones = stack(&vec![v; n]);
        worst_null = worst_null.max((&lap.full * ones).norm());
    }
    let (fast, time) = within(5, start.elapsed());
    let pass = worst_proj <= 1e-12 && worst_sym <= 1e-12 && worst_psd >= -1e-10 && worst_null <= 1e-10 && fast;
    outcome(
        pass,
        format!(
            "1000 cases: projector {worst_proj:.1e}, symmetry {worst_sym:.1e}, lambda_min {worst_psd:.1e}, null-space {worst_null:.1e}, {time}"
        ),
    )
}

fn localization() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let d = rng.random_range(2..=3);
        let n = rng.random_range(4..=8);
        let n_l = rng.random_range(2..=3.min(n - 1));
        let positions: Vec<_> = (0..n).map(|_| random_point(&mut rng, d)).collect();
        let edges: Vec<_> = (1..=n).flat_map(|i| (i + 1..=n).map(move |j| (i, j))).collect();
        let graph = SensingGraph::new(n, d, n_l, &edges).unwrap();
        let bearings = BearingSet::from_positions(&graph, &positions, DEFAULT_SEPARATION).unwrap();
        let lap = build_bearing_laplacian(&graph, &bearings).unwrap();
        let loc = Localizer::new(&lap).unwrap();
        let pf = loc.follower_positions(&stack(&positions[..n_l])).unwrap();
        worst = worst.max((pf - stack(&positions[n_l..])).amax());
    }
    let graph = SensingGraph::new(3, 2, 2, &[(3, 1), (3, 2)]).unwrap();
    let line = [DVector::from_column_slice(&[0.0, 0.0]), DVector::from_column_slice(&[2.0, 0.0]), DVector::from_column_slice(&[1.0, 0.0])];
    let bearings = BearingSet::from_positions(&graph, &line, DEFAULT_SEPARATION).unwrap();
    let collinear = Localizer::new(&build_bearing_laplacian(&graph, &bearings).unwrap());
    let rejected = matches!(collinear, Err(Error::NotLocalizable { .. }));
    let (fast, time) = within(5, start.elapsed());
    outcome(
        worst <= 1e-8 && rejected && fast,
        format!("200 formations: max recovery error {worst:.1e}, collinear rejected = {rejected}, {time}"),
    )
}

fn internal_models() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples_per_order = 50;
    let (mut res_fail, mut sing_fail, mut et_fail, mut m_fail) = (0, 0, 0, 0);
    let mut worst_sigma = f64::INFINITY;
    let mut singular_by_order = [0usize; 5];
    for (r, singular) in singular_by_order.iter_mut().enumerate() {
        let (m, n) = choose_mn::<f64>(r);
        if !(linalg::spectral_abscissa(&m) < 0.0 && linalg::is_controllable(&m, &n, 1e-9)) {
            m_fail += 1;
        }
        for _ in 0..samples_per_order {
            let mut freqs: Vec<f64> = Vec::with_capacity(r);
            while freqs.len() < r {
                // (0, 10]
                let w = 10.0 - rng.random_range(0.0..10.0);
                if freqs.iter().all(|&o| (o - w).abs() > 1e-6) {
                    freqs.push(w);
                }
            }
            let terms = freqs
                .iter()
                .map(|&w| SinusoidTerm { frequency: w, amplitudes: DVector::from_element(1, 1.0), phases: DVector::zeros(1) })
                .collect();
            let spec = DisturbanceSpec::new(DVector::from_element(1, 1.0), terms).unwrap();
            let exo = build_canonical(&spec).unwrap();
            match solve_sylvester(&exo.phi, &m, &n, &exo.psi) {
                Ok(t) => {
                    worst_sigma = worst_sigma.min(linalg::min_singular_value(&t));
                    let residual = (&t * &exo.phi - &m * &t - &n * &exo.psi).norm();
                    if residual > 1e-10 * (1.0 + t.norm()) {
                        res_fail += 1;
                    }
                    match compute_e(&t, &exo.psi) {
                        Ok(e) if (&e * &t - &exo.psi).norm() <= 1e-9 => {}
                        _ => et_fail += 1,
                    }
                }
                Err(Error::SingularT { sigma_min }) => {
                    worst_sigma = worst_sigma.min(sigma_min);
                    sing_fail += 1;
                    *singular += 1;
                }
                Err(_) => res_fail += 1,
            }
        }
    }
    let (fast, time) = within(5, start.elapsed());
    let total = 5 * samples_per_order;
    outcome(
        res_fail + sing_fail + et_fail + m_fail == 0 && fast,
        format!(
            "{total} samples: residual fails {res_fail}, sigma_min(T) <= 1e-10 in {sing_fail} (by r = 0..4: {singular_by_order:?}, worst {worst_sigma:.1e}), ||ET - Psi|| fails {et_fail}, M/N fails {m_fail}, {time}"
        ),
    )
}

fn known_frequencies() -> Outcome {
    let start = Instant::now();
    let sim = fixture("square_known.json").build().unwrap();
    let abscissa = linalg::spectral_abscissa(&sim.a_sigma().unwrap());
    let traj = sim.integrate().unwrap();
    let m = sim::metrics(&traj);
    let a = abscissa < 0.0;
    let b = m.terminal_err_p <= 1e-6 * m.initial_err_p.max(1.0) && m.terminal_err_v <= 1e-6 * m.initial_err_v.max(1.0);
    let rate = m.decay_rate.unwrap_or(f64::NAN);
    let c = (rate - abscissa).abs() <= 0.2 * abscissa.abs();
    let (fast, time) = within(30, start.elapsed());
    outcome(
        a && b && c && fast,
        format!(
            "(a) abscissa {abscissa:.4} {}; (b) ||p~(50)|| {:.2e}, ||v~(50)|| {:.2e} vs 1e-6 {}; (c) fitted rate {rate:.4} {}; {time}",
            verdict(a),
            m.terminal_err_p,
            m.terminal_err_v,
            verdict(b),
            verdict(c)
        ),
    )
}

fn xi_dynamics() -> Outcome {
    let start = Instant::now();
    let mut cfg = fixture("square_known.json");
    cfg.integration.t_final = 20.0;
    cfg.integration.record_every = 10;
    let sim = cfg.build().unwrap();
    let traj = sim.integrate().unwrap();
    let dev = xi_oracle(&traj, &sim);
    let xi0 = sim.xi(&traj.first().state.x).norm();
    let (fast, time) = within(10, start.elapsed());
    outcome(dev <= 1e-6 && fast, format!("max deviation {dev:.2e} over [0, 20] (||xi(0)|| = {xi0:.2}), {time}"))
}

fn unknown_frequencies() -> Outcome {
    let start = Instant::now();
    let mut cfg = fixture("square_adaptive.json");
    cfg.integration.record_every = 1;
    let sim = cfg.build().unwrap();
    let margin = sim.gains.kappa_v * sim.laplacian.ff_lambda_min();
    let theta0_zero = sim.theta_hat(&sim.initial_state().x).iter().all(|&x| x == 0.0);
    let traj = sim.integrate().unwrap();
    let m = sim::metrics(&traj);
    let a = m.max_abs_state.is_finite() && m.max_abs_state < 1e6;
    let b = m.terminal_err_p <= 1e-3 && m.terminal_err_v <= 1e-3;
    let cert = sim.certificate().unwrap();
    let report = lyapunov_monitor(&traj, &sim, &cert).unwrap();
    let c = report.non_increasing && (cert.gamma - 1.01 * cert.gamma_sigma).abs() <= 1e-12 * cert.gamma;
    let (fast, time) = within(120, start.elapsed());
    outcome(
        a && b && c && margin > 1.0 && theta0_zero && fast,
        format!(
            "kappa_v*lambda_min = {margin:.3}; (a) sup|x| {:.3} {}; (b) ||p~(200)|| {:.2e}, ||v~(200)|| {:.2e} {}; (c) V {:.3e} -> {:.3e} over {} steps, worst excess {:.1e} {}; {time}",
            m.max_abs_state,
            verdict(a),
            m.terminal_err_p,
            m.terminal_err_v,
            verdict(b),
            report.values[0],
            report.values.last().unwrap(),
            traj.steps,
            report.worst_excess,
            verdict(c)
        ),
    )
}

fn adaptive_known_consistency() -> Outcome {
    let mut cfg = fixture("square_adaptive.json");
    cfg.integration.t_final = 50.0;
    cfg.controller.mode = ControlMode::Known;
    let known = cfg.build().unwrap();
    let truth = known.theta_true();
    cfg.controller.mode = ControlMode::Adaptive;
    cfg.controller.freeze_adaptation = true;
    let mut offset = 0;
    for (f, id) in known.followers.iter().zip([3u32, 4]) {
        let k = f.parameterization.k();
        cfg.controller.theta_hat0.insert(id, truth.rows(offset, k).iter().copied().collect());
        offset += k;
    }
    let frozen = cfg.build().unwrap();
    let xa = known.integrate().unwrap().last().state.x.clone();
    let xb = frozen.integrate().unwrap().last().state.x.clone();
    let dev = (known.positions(&xa) - frozen.positions(&xb))
        .amax()
        .max((known.velocities(&xa) - frozen.velocities(&xb)).amax())
        .max((known.xi(&xa) - frozen.xi(&xb)).amax());
    outcome(dev <= 1e-9, format!("terminal deviation {dev:.2e} at t = 50"))
}

fn rejected_at_load(cfg: &ScenarioConfig, dir: &Path, name: &str, needle: &str) -> bool {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(cfg).unwrap()).unwrap();
    match scenario::load_scenario(&path) {
        Err(ScenarioError::Validation { field, check }) => field == "controller" && check.contains(needle),
        _ => false,
    }
}

fn gain_gates() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let base = fixture("square_adaptive.json");
    let lambda_min = base.build().unwrap().laplacian.ff_lambda_min();
    let mut checked = 0;
    let mut ok = true;
    for kv in [0.1, 1.0, 3.0, 1.0 / lambda_min] {
        let mut cfg = base.clone();
        cfg.controller.kappa_v = kv;
        ok &= rejected_at_load(&cfg, dir.path(), &format!("kv{checked}.json"), "kappa_v·lambda_min(B_ff)");
        checked += 1;
    }
    let mut zero = fixture("square_known.json");
    zero.disturbances.clear();
    for (mode, base) in [(ControlMode::Known, &base), (ControlMode::Adaptive, &base), (ControlMode::FeedbackOnly, &zero)] {
        for kp in [0.0, -1.0] {
            let mut cfg = base.clone();
            cfg.controller.mode = mode;
            cfg.controller.kappa_p = kp;
            ok &= rejected_at_load(&cfg, dir.path(), &format!("kp{checked}.json"), "kappa_p");
            checked += 1;
        }
    }
    outcome(ok, format!("{checked} invalid configurations rejected at load = {ok}"))
}

fn terminal_state(cfg: &ScenarioConfig, h: f64, t_final: f64) -> DVector<f64> {
    let sim = cfg.build().unwrap();
    sim.integrate_with(h, t_final, usize::MAX).unwrap().last().state.x.clone()
}

fn determinism_and_order() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = fixture("square_known.json");
    let run = |dir: &Path| {
        let o = Overrides { t_final: Some(5.0), out: Some(dir.to_path_buf()), ..Default::default() };
        scenario::run(&cfg, &o).unwrap();
        std::fs::read(dir.join("trajectory.csv")).unwrap()
    };
    let identical = run(a.path()) == run(b.path());
    let t_final = 5.0;
    let x1 = terminal_state(&cfg, 0.04, t_final);
    let x2 = terminal_state(&cfg, 0.02, t_final);
    let x3 = terminal_state(&cfg, 0.01, t_final);
    let ratio = (&x1 - &x2).norm() / (&x2 - &x3).norm();
    let ordered = (8.0..=32.0).contains(&ratio);
    outcome(
        identical && ordered,
        format!("byte-identical CSV = {identical}; step-halving ratio {ratio:.2} (h = 0.04/0.02/0.01)"),
    )
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 9] = [
        ("1 bearing algebra", bearing_algebra),
        ("2 localization", localization),
        ("3 internal-model synthesis", internal_models),
        ("4 known-frequency convergence", known_frequencies),
        ("5 xi dynamics", xi_dynamics),
        ("6 unknown-frequency convergence", unknown_frequencies),
        ("7 adaptive/known consistency", adaptive_known_consistency),
        ("8 gain gates", gain_gates),
        ("9 determinism and integrator order", determinism_and_order),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let result = check();
        println!("criterion {name}: {} ({})", if result.pass { "PASS" } else { "FAIL" }, result.detail);
        if !result.pass {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: {} failing: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
