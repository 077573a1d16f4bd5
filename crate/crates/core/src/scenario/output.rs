use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Overrides, ScenarioConfig, ScenarioError};
use crate::control::ControlMode;
use crate::linalg;
use crate::sim::{self, lyapunov_monitor, xi_oracle, LyapunovReport, MetricsSummary, Simulation, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSummary {
    pub non_increasing: bool,
    pub worst_excess: f64,
    pub v_initial: f64,
    pub v_final: f64,
    pub gamma: f64,
    pub gamma_sigma: f64,
    pub lambda_min_q: f64,
    pub lyapunov_residual: f64,
    pub near_singular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub spectral_abscissa: f64,
    /// `[re, im]` pairs sorted by real part, then imaginary part.
    pub a_sigma_eigenvalues: Vec<[f64; 2]>,
    pub xi_max_deviation: f64,
    pub lyapunov: Option<LyapunovSummary>,
}

#[derive(Debug, Clone, Serialize)]
struct MetricsFile<'a> {
    scenario: &'a str,
    mode: ControlMode,
    h: f64,
    steps: usize,
    #[serde(flatten)]
    summary: &'a MetricsSummary<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub metrics: MetricsSummary<f64>,
    pub oracles: Option<OracleReport>,
    pub trajectory_path: PathBuf,
    pub metrics_path: PathBuf,
    pub oracles_path: Option<PathBuf>,
}

/// Sorted `A_σ` eigenvalues as `[re, im]`.
pub fn sorted_eigenvalues(sim: &Simulation<f64>) -> Result<Vec<[f64; 2]>, ScenarioError> {
    let a = sim.a_sigma().map_err(ScenarioError::Sim)?;
    let mut ev: Vec<[f64; 2]> = linalg::eigenvalues(&a).into_iter().map(|z| [z.re, z.im]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(ev)
}

fn oracle_report(
    sim: &Simulation<f64>,
    traj: &Trajectory<f64>,
) -> Result<(OracleReport, Option<LyapunovReport<f64>>), ScenarioError> {
    let a_sigma_eigenvalues = sorted_eigenvalues(sim)?;
    let spectral_abscissa = a_sigma_eigenvalues.iter().map(|z| z[0]).fold(f64::NEG_INFINITY, f64::max);
    let (lyapunov, monitor) = if sim.mode == ControlMode::Adaptive {
        let cert = sim.certificate().map_err(ScenarioError::Sim)?;
        let report = lyapunov_monitor(traj, sim, &cert).map_err(ScenarioError::Sim)?;
        let summary = LyapunovSummary {
            non_increasing: report.non_increasing,
            worst_excess: report.worst_excess,
            v_initial: report.values[0],
            v_final: *report.values.last().expect("at least one sample"),
            gamma: cert.gamma,
            gamma_sigma: cert.gamma_sigma,
            lambda_min_q: cert.lambda_min_q,
            lyapunov_residual: cert.lyapunov_residual,
            near_singular: cert.near_singular,
        };
        (Some(summary), Some(report))
    } else {
        (None, None)
    };
    let report = OracleReport { spectral_abscissa, a_sigma_eigenvalues, xi_max_deviation: xi_oracle(traj, sim), lyapunov };
    Ok((report, monitor))
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes one row per recorded sample. `v_values` fills the `V` column.
pub fn write_trajectory_csv(
    path: &Path,
    sim: &Simulation<f64>,
    traj: &Trajectory<f64>,
    v_values: Option<&[f64]>,
) -> Result<(), ScenarioError> {
    let d = sim.dim();
    let labels = sim.graph.labels();
    let mut header = vec!["t".to_string()];
    for id in labels {
        header.extend((0..d).map(|a| format!("p_{id}_{a}")));
        header.extend((0..d).map(|a| format!("v_{id}_{a}")));
    }
    for f in &sim.followers {
        header.push(format!("err_p_norm_{}", f.label));
    }
    header.extend(["err_p_norm", "err_v_norm", "min_dist", "V"].map(String::from));

    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(err) => ScenarioError::io(path, err),
        other => ScenarioError::io(path, std::io::Error::other(format!("{other:?}"))),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(&header).map_err(io)?;
    for (k, s) in traj.samples.iter().enumerate() {
        let p = sim.positions(&s.state.x);
        let v = sim.velocities(&s.state.x);
        let mut row = vec![fmt(s.state.t)];
        for i in 0..labels.len() {
            row.extend((0..d).map(|a| fmt(p[i * d + a])));
            row.extend((0..d).map(|a| fmt(v[i * d + a])));
        }
        row.extend(s.metrics.err_p_followers.iter().map(|&e| fmt(e)));
        row.push(fmt(s.metrics.err_p));
        row.push(fmt(s.metrics.err_v));
        row.push(fmt(s.metrics.min_dist));
        row.push(v_values.map(|vs| fmt(vs[k])).unwrap_or_default());
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| ScenarioError::io(path, e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), ScenarioError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| ScenarioError::io(path, e))
}

/// Validates, integrates and writes `trajectory.csv`, `metrics.json` and,
/// when enabled, `oracles.json` into the output directory.
pub fn run(config: &ScenarioConfig, overrides: &Overrides) -> Result<RunReport, ScenarioError> {
    let cfg = config.with_overrides(overrides);
    let sim = cfg.build()?;
    let traj = sim.integrate().map_err(ScenarioError::Sim)?;
    let metrics = sim::metrics(&traj);
    let (oracles, monitor) = if cfg.output.oracles {
        let (r, m) = oracle_report(&sim, &traj)?;
        (Some(r), m)
    } else {
        (None, None)
    };

    let dir = &cfg.output.directory;
    fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
    let trajectory_path = dir.join("trajectory.csv");
    write_trajectory_csv(&trajectory_path, &sim, &traj, monitor.as_ref().map(|m| m.values.as_slice()))?;
    let metrics_path = dir.join("metrics.json");
    let file = MetricsFile { scenario: &cfg.name, mode: cfg.controller.mode, h: traj.h, steps: traj.steps, summary: &metrics };
    write_json(&metrics_path, &file)?;
    let oracles_path = match &oracles {
        Some(r) => {
            let p = dir.join("oracles.json");
            write_json(&p, r)?;
            Some(p)
        }
        None => None,
    };
    Ok(RunReport { metrics, oracles, trajectory_path, metrics_path, oracles_path })
}
