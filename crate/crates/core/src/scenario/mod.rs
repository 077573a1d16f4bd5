//! JSON scenario files: loading, validation, and batch runs that write the
//! trajectory CSV plus metrics and oracle reports.
//!
//! Agents are addressed by their integer `id` in the file. Internally leaders
//! come first, then followers, each sorted by id.

mod output;

pub use output::{run, sorted_eigenvalues, write_trajectory_csv, LyapunovSummary, OracleReport, RunReport};

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ControlMode;
use crate::disturbance::{build_canonical, DisturbanceSpec, SinusoidTerm};
use crate::error::Error;
use crate::graph::{build_bearing_laplacian, BearingSet, Localizer, SensingGraph, DEFAULT_SEPARATION};
use crate::internal_model::InternalModel;
use crate::sim::{EtaInit, IntegrationOptions, Simulation, SimulationConfig, DEFAULT_COLLISION_THRESHOLD, DEFAULT_STEP};

/// Two bearings for the same edge must agree to this tolerance.
pub const BEARING_AGREEMENT: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("validation failed for `{field}`: {check}")]
    Validation { field: String, check: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(Error),
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, err: Error) -> Self {
        Self::Validation { field: field.into(), check: format!("{}: {err}", err.name()) }
    }

    fn check(field: impl Into<String>, check: impl Into<String>) -> Self {
        Self::Validation { field: field.into(), check: check.into() }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    /// 0 ok, 2 parse/validation, 3 collision, 4 divergence, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse { .. } | Self::Validation { .. } => 2,
            Self::Sim(Error::CollisionDetected { .. }) => 3,
            Self::Sim(Error::NonFiniteState { .. }) => 4,
            Self::Sim(_) => 2,
            Self::Io { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: u32,
    /// Desired position; bearings are derived from these when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired: Option<Vec<f64>>,
    /// Initial position; defaults to `desired`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Vec<f64>>,
    /// Initial velocity; followers default to zero, leaders always use `leader_velocity`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
}

/// `g` is the bearing of the edge, `(p_from - p_to) / ‖p_from - p_to‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BearingConfig {
    pub from: u32,
    pub to: u32,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub omega: f64,
    pub amplitude: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub agent: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaPolicy {
    #[default]
    FeedforwardZero,
    Zero,
    XiZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaConfig {
    Policy(EtaPolicy),
    /// Explicit `η_i(0)` keyed by follower id.
    Values(BTreeMap<u32, Vec<f64>>),
}

impl Default for EtaConfig {
    fn default() -> Self {
        Self::Policy(EtaPolicy::default())
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: ControlMode,
    pub kappa_p: f64,
    pub kappa_v: f64,
    /// `Λ_i = adaptation_rate · I`.
    #[serde(default = "one")]
    pub adaptation_rate: f64,
    /// `θ̂_i(0)` keyed by follower id; missing followers start at zero.
    #[serde(default)]
    pub theta_hat0: BTreeMap<u32, Vec<f64>>,
    #[serde(default)]
    pub eta0: EtaConfig,
    #[serde(default)]
    pub freeze_adaptation: bool,
}

fn default_h() -> f64 {
    DEFAULT_STEP
}

fn default_record_every() -> usize {
    100
}

fn default_collision() -> f64 {
    DEFAULT_COLLISION_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    #[serde(default = "default_h")]
    pub h: f64,
    pub t_final: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_collision")]
    pub collision_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub directory: PathBuf,
    /// Write `oracles.json` (and the `V` column in adaptive mode).
    #[serde(default = "yes")]
    pub oracles: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: default_out(), oracles: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub agents: Vec<AgentConfig>,
    pub leaders: Vec<u32>,
    pub edges: Vec<[u32; 2]>,
    #[serde(default)]
    pub bearings: Vec<BearingConfig>,
    pub leader_velocity: Vec<f64>,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceConfig>,
    pub controller: ControllerConfig,
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Command-line overrides applied on top of a loaded scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub kappa_p: Option<f64>,
    pub kappa_v: Option<f64>,
    pub t_final: Option<f64>,
    pub h: Option<f64>,
    pub mode: Option<ControlMode>,
    pub out: Option<PathBuf>,
    pub oracles: Option<bool>,
}

/// Parses a scenario from JSON text without validating it.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Parse { line: e.line(), column: e.column(), msg: e.to_string() })
}

/// Reads, parses and fully validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    let cfg = parse_scenario(&text)?;
    cfg.build()?;
    Ok(cfg)
}

fn vector(field: &str, xs: &[f64], d: usize) -> Result<DVector<f64>, ScenarioError> {
    if xs.len() != d {
        return Err(ScenarioError::check(field, format!("expected {d} components, got {}", xs.len())));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(ScenarioError::check(field, "values must be finite"));
    }
    Ok(DVector::from_column_slice(xs))
}

impl ScenarioConfig {
    pub fn with_overrides(&self, o: &Overrides) -> Self {
        let mut cfg = self.clone();
        if let Some(v) = o.kappa_p {
            cfg.controller.kappa_p = v;
        }
        if let Some(v) = o.kappa_v {
            cfg.controller.kappa_v = v;
        }
        if let Some(v) = o.t_final {
            cfg.integration.t_final = v;
        }
        if let Some(v) = o.h {
            cfg.integration.h = v;
        }
        if let Some(v) = o.mode {
            cfg.controller.mode = v;
        }
        if let Some(v) = &o.out {
            cfg.output.directory = v.clone();
        }
        if let Some(v) = o.oracles {
            cfg.output.oracles = v;
        }
        cfg
    }

    pub fn dim(&self) -> usize {
        self.leader_velocity.len()
    }

    /// Agent ids in internal order: leaders then followers, each ascending.
    pub fn ordered_ids(&self) -> Vec<u32> {
        let leaders: BTreeSet<u32> = self.leaders.iter().copied().collect();
        let mut ids: Vec<u32> = leaders.iter().copied().collect();
        let mut followers: Vec<u32> = self.agents.iter().map(|a| a.id).filter(|id| !leaders.contains(id)).collect();
        followers.sort_unstable();
        ids.extend(followers);
        ids
    }

    /// Validates the whole scenario and assembles the closed loop.
    pub fn build(&self) -> Result<Simulation<f64>, ScenarioError> {
        let d = self.dim();
        let mut seen = BTreeSet::new();
        for (k, a) in self.agents.iter().enumerate() {
            if !seen.insert(a.id) {
                return Err(ScenarioError::check(format!("agents[{k}].id"), format!("duplicate agent id {}", a.id)));
            }
        }
        for (k, id) in self.leaders.iter().enumerate() {
            if !seen.contains(id) {
                return Err(ScenarioError::check(format!("leaders[{k}]"), format!("unknown agent id {id}")));
            }
        }
        if self.leaders.iter().collect::<BTreeSet<_>>().len() != self.leaders.len() {
            return Err(ScenarioError::check("leaders", "leader ids must be distinct"));
        }
        let ids = self.ordered_ids();
        let index: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let by_id: BTreeMap<u32, &AgentConfig> = self.agents.iter().map(|a| (a.id, a)).collect();
        let n_l = self.leaders.len();

        let mut edges = Vec::with_capacity(self.edges.len());
        for (k, [a, b]) in self.edges.iter().enumerate() {
            let (Some(&i), Some(&j)) = (index.get(a), index.get(b)) else {
                return Err(ScenarioError::check(format!("edges[{k}]"), format!("edge ({a}, {b}) references an unknown agent")));
            };
            edges.push((i, j));
        }
        let graph = SensingGraph::with_labels(ids.clone(), d, n_l, &edges).map_err(|e| ScenarioError::invalid("edges", e))?;
        let leader_velocity = vector("leader_velocity", &self.leader_velocity, d)?;

        let bearings = self.bearing_set(&graph, &index, &by_id)?;
        let laplacian = build_bearing_laplacian(&graph, &bearings).map_err(|e| ScenarioError::invalid("bearings", e))?;
        Localizer::new(&laplacian).map_err(|e| ScenarioError::invalid("geometry", e))?;

        let mut leader_positions = Vec::with_capacity(n_l);
        let mut follower_positions = Vec::new();
        let mut follower_velocities = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            let a = by_id[id];
            let field = format!("agents[id={id}]");
            let p = match (&a.position, &a.desired) {
                (Some(p), _) => vector(&format!("{field}.position"), p, d)?,
                (None, Some(p)) => vector(&format!("{field}.desired"), p, d)?,
                (None, None) => return Err(ScenarioError::check(format!("{field}.position"), "needs a position or desired position")),
            };
            if i < n_l {
                if let Some(v) = &a.velocity {
                    let v = vector(&format!("{field}.velocity"), v, d)?;
                    if (&v - &leader_velocity).norm() > 1e-12 {
                        return Err(ScenarioError::check(
                            format!("{field}.velocity"),
                            "leaders move at leader_velocity",
                        ));
                    }
                }
                leader_positions.push(p);
            } else {
                let v = match &a.velocity {
                    Some(v) => vector(&format!("{field}.velocity"), v, d)?,
                    None => DVector::zeros(d),
                };
                follower_positions.push(p);
                follower_velocities.push(v);
            }
        }

        let n_f = ids.len() - n_l;
        let mut disturbances = vec![None; n_f];
        for (k, dc) in self.disturbances.iter().enumerate() {
            let field = format!("disturbances[{k}]");
            let slot = match index.get(&dc.agent) {
                Some(&i) if i >= n_l => i - n_l,
                Some(_) => return Err(ScenarioError::check(format!("{field}.agent"), format!("agent {} is a leader", dc.agent))),
                None => return Err(ScenarioError::check(format!("{field}.agent"), format!("unknown agent id {}", dc.agent))),
            };
            if disturbances[slot].is_some() {
                return Err(ScenarioError::check(format!("{field}.agent"), format!("second disturbance for agent {}", dc.agent)));
            }
            let offset = match &dc.offset {
                Some(c) => vector(&format!("{field}.offset"), c, d)?,
                None => DVector::zeros(d),
            };
            let mut terms = Vec::with_capacity(dc.terms.len());
            for (j, t) in dc.terms.iter().enumerate() {
                let tf = format!("{field}.terms[{j}]");
                let phases = match &t.phase {
                    Some(ph) => vector(&format!("{tf}.phase"), ph, d)?,
                    None => DVector::zeros(d),
                };
                terms.push(SinusoidTerm {
                    frequency: t.omega,
                    amplitudes: vector(&format!("{tf}.amplitude"), &t.amplitude, d)?,
                    phases,
                });
            }
            let spec = DisturbanceSpec::new(offset, terms).map_err(|e| ScenarioError::invalid(&field, e))?;
            let exo = build_canonical(&spec).map_err(|e| ScenarioError::invalid(&field, e))?;
            InternalModel::synthesize(&exo).map_err(|e| ScenarioError::invalid(&field, e))?;
            disturbances[slot] = Some(spec);
        }
        let disturbances: Vec<_> = disturbances.into_iter().map(|s| s.unwrap_or_else(|| DisturbanceSpec::zero(d))).collect();

        let c = &self.controller;
        let follower_index = |id: &u32, field: &str| match index.get(id) {
            Some(&i) if i >= n_l => Ok(i - n_l),
            _ => Err(ScenarioError::check(field, format!("{id} is not a follower"))),
        };
        let mut theta_hat0 = vec![None; n_f];
        for (id, th) in &c.theta_hat0 {
            let field = format!("controller.theta_hat0.{id}");
            let k = follower_index(id, &field)?;
            let len = 2 * disturbances[k].order() + 1;
            theta_hat0[k] = Some(vector(&field, th, len)?);
        }
        let eta_init = match &c.eta0 {
            EtaConfig::Policy(EtaPolicy::FeedforwardZero) => EtaInit::FeedforwardZero,
            EtaConfig::Policy(EtaPolicy::Zero) => EtaInit::Zero,
            EtaConfig::Policy(EtaPolicy::XiZero) => EtaInit::XiZero,
            EtaConfig::Values(map) => {
                let mut values = vec![None; n_f];
                for (id, eta) in map {
                    let field = format!("controller.eta0.{id}");
                    let k = follower_index(id, &field)?;
                    values[k] = Some(vector(&field, eta, (2 * disturbances[k].order() + 1) * d)?);
                }
                let mut out = Vec::with_capacity(n_f);
                for (k, v) in values.into_iter().enumerate() {
                    out.push(v.ok_or_else(|| {
                        ScenarioError::check("controller.eta0", format!("missing follower {}", ids[n_l + k]))
                    })?);
                }
                EtaInit::Explicit(out)
            }
        };
        let i = &self.integration;
        if !(i.h > 0.0) || !i.h.is_finite() {
            return Err(ScenarioError::check("integration.h", format!("h = {} must be positive", i.h)));
        }
        if !(i.t_final > 0.0) || !i.t_final.is_finite() {
            return Err(ScenarioError::check("integration.t_final", format!("t_final = {} must be positive", i.t_final)));
        }
        if i.record_every == 0 {
            return Err(ScenarioError::check("integration.record_every", "must be at least 1"));
        }
        if !(i.collision_threshold >= 0.0) {
            return Err(ScenarioError::check("integration.collision_threshold", "must be non-negative"));
        }
        if !(c.adaptation_rate > 0.0) {
            return Err(ScenarioError::check("controller.adaptation_rate", "must be positive"));
        }

        let cfg = SimulationConfig {
            graph,
            bearings,
            leader_positions,
            leader_velocity,
            follower_positions,
            follower_velocities,
            disturbances,
            mode: c.mode,
            kappa_p: c.kappa_p,
            kappa_v: c.kappa_v,
            lambda: None,
            adaptation_rate: c.adaptation_rate,
            theta_hat0,
            eta_init,
            freeze_adaptation: c.freeze_adaptation,
            options: IntegrationOptions {
                h: i.h,
                t_final: i.t_final,
                record_every: i.record_every,
                collision_threshold: i.collision_threshold,
            },
        };
        Simulation::new(cfg).map_err(|e| {
            let field = match e {
                Error::GainConditionViolated(_) => "controller",
                _ => "scenario",
            };
            ScenarioError::invalid(field, e)
        })
    }

    fn bearing_set(
        &self,
        graph: &SensingGraph,
        index: &BTreeMap<u32, usize>,
        by_id: &BTreeMap<u32, &AgentConfig>,
    ) -> Result<BearingSet<f64>, ScenarioError> {
        let d = graph.dim();
        let mut set = BearingSet::new(d);
        let all_desired = by_id.values().all(|a| a.desired.is_some());
        if all_desired {
            let desired = graph
                .labels()
                .iter()
                .map(|id| vector(&format!("agents[id={id}].desired"), by_id[id].desired.as_ref().expect("checked"), d))
                .collect::<Result<Vec<_>, _>>()?;
            set = BearingSet::from_positions(graph, &desired, DEFAULT_SEPARATION)
                .map_err(|e| ScenarioError::invalid("agents.desired", e))?;
        }
        for (k, b) in self.bearings.iter().enumerate() {
            let field = format!("bearings[{k}]");
            let (Some(&i), Some(&j)) = (index.get(&b.from), index.get(&b.to)) else {
                return Err(ScenarioError::check(&field, format!("unknown agent in ({}, {})", b.from, b.to)));
            };
            if !graph.has_edge(i, j) {
                return Err(ScenarioError::check(&field, format!("({}, {}) is not an edge", b.from, b.to)));
            }
            let g = vector(&format!("{field}.g"), &b.g, d)?;
            if let Some(existing) = set.get(i, j) {
                if (existing - &g).norm() > BEARING_AGREEMENT {
                    return Err(ScenarioError::check(&field, "disagrees with the bearing of the desired positions"));
                }
                continue;
            }
            set.insert(i, j, g).map_err(|e| ScenarioError::invalid(&field, e))?;
        }
        for (i, j) in graph.edges() {
            if set.get(i, j).is_none() {
                return Err(ScenarioError::invalid("bearings", Error::MissingBearing(graph.label(i), graph.label(j))));
            }
        }
        Ok(set)
    }
}
