use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bearing-forge")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn short_run(scenario: &str, out: &Path, extra: &[&str]) -> Output {
    let path = fixture(scenario);
    let mut args = vec!["run", path.to_str().unwrap(), "--t-final", "2", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    forge(&args)
}

#[test]
fn validate_accepts_bundled_fixtures() {
    for name in ["square_known.json", "square_adaptive.json"] {
        let o = forge(&["validate", fixture(name).to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).starts_with("ok: 4 agents, 2 leaders"));
    }
}

#[test]
fn validation_failures_exit_2() {
    for name in ["collinear.json", "duplicate_frequency.json"] {
        let o = forge(&["validate", fixture(name).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{name}");
    }
    let o = forge(&["run", fixture("square_adaptive.json").to_str().unwrap(), "--kappa-v", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("adaptive gain condition"));
}

#[test]
fn missing_file_exits_5() {
    assert_eq!(forge(&["validate", "/nonexistent/scenario.json"]).status.code(), Some(5));
}

#[test]
fn collision_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("square_known.json")).unwrap();
    let text = text.replacen("\"position\": [\n        1.2,\n        0.85\n      ]", "\"position\": [1.0, 0.0005]", 1);
    assert!(text.contains("0.0005"));
    let path = dir.path().join("crash.json");
    std::fs::write(&path, text).unwrap();
    let o = forge(&["run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(short_run("square_known.json", a.path(), &[]).status.success());
    assert!(short_run("square_known.json", b.path(), &[]).status.success());
    for file in ["trajectory.csv", "metrics.json", "oracles.json"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file}");
    }
}

#[test]
fn metrics_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    assert!(short_run("square_known.json", dir.path(), &[]).status.success());
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let last: Vec<&str> = lines.last().unwrap().split(',').collect();
    let col = |name: &str| -> f64 { last[header.iter().position(|h| *h == name).unwrap()].parse().unwrap() };
    let t = col("t");
    // targets translate with the leaders at v_c = (0.5, 0)
    let targets = [("3", [1.0 + 0.5 * t, 1.0]), ("4", [0.5 * t, 1.0])];
    let mut sq = 0.0;
    for (id, target) in targets {
        for (a, want) in target.iter().enumerate() {
            sq += (col(&format!("p_{id}_{a}")) - want).powi(2);
        }
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    let terminal = metrics["terminal_err_p"].as_f64().unwrap();
    assert!((terminal - col("err_p_norm")).abs() <= 1e-12);
    assert!((terminal - sq.sqrt()).abs() <= 1e-12, "{terminal} vs {}", sq.sqrt());
    assert_eq!(last[header.len() - 1], "");
}

#[test]
fn adaptive_run_reports_monitor() {
    let dir = tempfile::tempdir().unwrap();
    let o = short_run("square_adaptive.json", dir.path(), &["--oracles"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("V non-increasing = true"));
    let oracles: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("oracles.json")).unwrap()).unwrap();
    assert_eq!(oracles["lyapunov"]["non_increasing"], true);
    assert!(oracles["spectral_abscissa"].as_f64().unwrap() < 0.0);
}

#[test]
fn localize_prints_targets() {
    let o = forge(&["localize", fixture("square_known.json").to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "3 1.000000000000 1.000000000000\n4 0.000000000000 1.000000000000\n");
}

#[test]
fn spectrum_is_stable() {
    let o = forge(&["spectrum", fixture("square_known.json").to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    // 2 n_f d + n_f (2r+1) d = 8 + 12
    assert_eq!(text.lines().count(), 20);
    let max_re = text
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max_re < 0.0);
}

#[test]
fn mode_override_parses() {
    let dir = tempfile::tempdir().unwrap();
    let o = short_run("square_adaptive.json", dir.path(), &["--mode", "known"]);
    assert!(o.status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["mode"], "known");
    assert_eq!(forge(&["validate", "x.json", "--mode", "bogus"]).status.code(), Some(2));
}
