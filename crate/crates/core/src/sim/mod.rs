//! Closed-loop assembly and fixed-step integration.
//!
//! The state vector stacks the leader positions first, then for every follower
//! `(p_i, v_i, η_i, θ̂_i, ϑ_i)`. Leaders move kinematically at the common
//! velocity `v_c`; their positions are reset to the exact `p_l(0) + v_c t`
//! after each step so the target formation carries no integration drift.

mod metrics;
mod oracles;
mod rk4;

pub use metrics::{fit_decay_rate, metrics, min_pairwise_distance, MetricsSummary};
pub use oracles::{
    assemble_a_sigma, build_certificate, lyapunov_monitor, xi_oracle, LyapunovCertificate, LyapunovReport,
};
pub use rk4::Rk4;

use nalgebra::{DMatrix, DVector};

use crate::control::{
    self, compensator_offset, ControlMode, ControllerGains, NeighborProjectors,
};
use crate::disturbance::{build_canonical, CanonicalExosystem, DisturbanceSpec};
use crate::error::{Error, Result};
use crate::graph::{build_bearing_laplacian, stack, BearingLaplacian, BearingSet, Localizer, SensingGraph};
use crate::internal_model::{build_parameterization, AdaptiveParameterization, InternalModel};
use crate::linalg;
use crate::scalar::Real;

/// Default RK4 step in seconds.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Default minimum allowed inter-agent distance.
pub const DEFAULT_COLLISION_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationOptions<T: Real> {
    pub h: T,
    pub t_final: T,
    pub record_every: usize,
    pub collision_threshold: T,
}

impl<T: Real> Default for IntegrationOptions<T> {
    fn default() -> Self {
        Self {
            h: T::lit(DEFAULT_STEP),
            t_final: T::lit(10.0),
            record_every: 100,
            collision_threshold: T::lit(DEFAULT_COLLISION_THRESHOLD),
        }
    }
}

/// How `η_i(0)` is chosen.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum EtaInit<T: Real> {
    /// `η(0) = (N ⊗ I) v(0)`: the feedforward term starts at zero.
    #[default]
    FeedforwardZero,
    Zero,
    /// `η(0) = (N ⊗ I) v(0) - (T ⊗ I) ϑ(0)`, i.e. `ξ(0) = 0`. Uses the true exosystem.
    XiZero,
    /// Explicit per-follower values.
    Explicit(Vec<DVector<T>>),
}

/// Everything needed to assemble a closed loop. Follower-indexed vectors are
/// in follower order (internal agents `n_l..n`).
#[derive(Debug, Clone)]
pub struct SimulationConfig<T: Real> {
    pub graph: SensingGraph,
    pub bearings: BearingSet<T>,
    pub leader_positions: Vec<DVector<T>>,
    pub leader_velocity: DVector<T>,
    pub follower_positions: Vec<DVector<T>>,
    pub follower_velocities: Vec<DVector<T>>,
    pub disturbances: Vec<DisturbanceSpec<T>>,
    pub mode: ControlMode,
    pub kappa_p: T,
    pub kappa_v: T,
    /// `Λ_i`; `None` means identity scaled by `adaptation_rate`.
    pub lambda: Option<Vec<DMatrix<T>>>,
    pub adaptation_rate: T,
    pub theta_hat0: Vec<Option<DVector<T>>>,
    pub eta_init: EtaInit<T>,
    /// Keep `θ̂` at its initial value (the update law is switched off).
    pub freeze_adaptation: bool,
    pub options: IntegrationOptions<T>,
}

/// Per-follower data: controller-visible pieces plus the simulator's ground truth.
#[derive(Debug, Clone)]
pub struct FollowerSetup<T: Real> {
    pub agent: usize,
    pub label: u32,
    pub neighbors: NeighborProjectors<T>,
    pub disturbance: DisturbanceSpec<T>,
    pub exosystem: CanonicalExosystem<T>,
    /// Model synthesized with the true frequencies.
    pub model: InternalModel<T>,
    /// Parameterization carrying `θ(σ)` as ground truth.
    pub parameterization: AdaptiveParameterization<T>,
    pub lambda: DMatrix<T>,
}

/// Offsets of one follower's sub-states in the flat state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FollowerSlots {
    pub p: usize,
    pub v: usize,
    pub eta: usize,
    pub eta_len: usize,
    pub theta: usize,
    pub theta_len: usize,
    pub exo: usize,
    pub exo_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    pub dim: usize,
    pub n_leaders: usize,
    pub followers: Vec<FollowerSlots>,
    pub len: usize,
}

/// Snapshot of the full closed-loop state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T: Real> {
    pub t: T,
    pub x: DVector<T>,
}

/// Error measures evaluated at a recorded sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMetrics<T: Real> {
    pub err_p: T,
    pub err_v: T,
    pub err_p_followers: Vec<T>,
    pub min_dist: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T: Real> {
    pub state: SimState<T>,
    pub metrics: SampleMetrics<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub samples: Vec<Sample<T>>,
    pub h: T,
    pub steps: usize,
}

impl<T: Real> Trajectory<T> {
    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        self.samples.iter().map(|s| s.state.t)
    }

    pub fn last(&self) -> &Sample<T> {
        self.samples.last().expect("trajectory always holds the initial sample")
    }

    pub fn first(&self) -> &Sample<T> {
        &self.samples[0]
    }
}

/// A validated closed loop ready to integrate.
#[derive(Debug, Clone)]
pub struct Simulation<T: Real> {
    pub graph: SensingGraph,
    pub bearings: BearingSet<T>,
    pub laplacian: BearingLaplacian<T>,
    pub localizer: Localizer<T>,
    pub leader_positions0: DVector<T>,
    pub leader_velocity: DVector<T>,
    pub followers: Vec<FollowerSetup<T>>,
    pub mode: ControlMode,
    pub gains: ControllerGains<T>,
    pub freeze_adaptation: bool,
    pub options: IntegrationOptions<T>,
    pub layout: StateLayout,
    initial: DVector<T>,
}

fn check_vec<T: Real>(v: &DVector<T>, d: usize, what: &str) -> Result<()> {
    if v.len() != d {
        return Err(Error::DimensionMismatch(format!("{what} has length {}, expected {d}", v.len())));
    }
    Ok(())
}

impl<T: Real> Simulation<T> {
    pub fn new(cfg: SimulationConfig<T>) -> Result<Self> {
        let graph = cfg.graph;
        let (d, nl, nf) = (graph.dim(), graph.n_leaders(), graph.n_followers());
        let counts = [
            ("leader positions", cfg.leader_positions.len(), nl),
            ("follower positions", cfg.follower_positions.len(), nf),
            ("follower velocities", cfg.follower_velocities.len(), nf),
            ("disturbances", cfg.disturbances.len(), nf),
            ("theta_hat0", cfg.theta_hat0.len(), nf),
        ];
        for (what, got, want) in counts {
            if got != want {
                return Err(Error::DimensionMismatch(format!("{got} {what}, expected {want}")));
            }
        }
        check_vec(&cfg.leader_velocity, d, "leader velocity")?;
        for p in cfg.leader_positions.iter().chain(&cfg.follower_positions).chain(&cfg.follower_velocities) {
            check_vec(p, d, "agent vector")?;
        }

        let laplacian = build_bearing_laplacian(&graph, &cfg.bearings)?;
        let localizer = Localizer::new(&laplacian)?;

        let lambda = match cfg.lambda {
            Some(l) => l,
            None => cfg
                .disturbances
                .iter()
                .map(|s| {
                    let k = 2 * s.order() + 1;
                    DMatrix::identity(k, k) * cfg.adaptation_rate
                })
                .collect(),
        };
        if lambda.len() != nf {
            return Err(Error::DimensionMismatch(format!("{} adaptation gains for {nf} followers", lambda.len())));
        }
        let gains = ControllerGains { kappa_p: cfg.kappa_p, kappa_v: cfg.kappa_v, lambda };
        control::validate_gains(&gains, &laplacian.ff, cfg.mode)?;

        let mut followers = Vec::with_capacity(nf);
        let mut slots = Vec::with_capacity(nf);
        let mut offset = nl * d;
        for (k, spec) in cfg.disturbances.into_iter().enumerate() {
            let agent = nl + k;
            if spec.dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "disturbance of follower {} has dimension {}",
                    graph.label(agent),
                    spec.dim()
                )));
            }
            if cfg.mode == ControlMode::FeedbackOnly && !(spec.is_zero() && spec.order() == 0) {
                return Err(Error::GainConditionViolated(format!(
                    "feedback_only mode requires a zero disturbance on follower {}",
                    graph.label(agent)
                )));
            }
            let neighbors = NeighborProjectors::new(&graph, &cfg.bearings, agent)?;
            let exosystem = build_canonical(&spec)?;
            let model = InternalModel::synthesize(&exosystem)?;
            let parameterization = build_parameterization(spec.order(), Some(&model.e))?;
            let q = exosystem.size();
            let k_len = parameterization.k();
            if gains.lambda[k].shape() != (k_len, k_len) {
                return Err(Error::DimensionMismatch(format!(
                    "adaptation gain of follower {} is {:?}, expected {k_len}x{k_len}",
                    graph.label(agent),
                    gains.lambda[k].shape()
                )));
            }
            slots.push(FollowerSlots {
                p: offset,
                v: offset + d,
                eta: offset + 2 * d,
                eta_len: q * d,
                theta: offset + 2 * d + q * d,
                theta_len: k_len,
                exo: offset + 2 * d + q * d + k_len,
                exo_len: q * d,
            });
            offset += 2 * d + 2 * q * d + k_len;
            followers.push(FollowerSetup {
                agent,
                label: graph.label(agent),
                neighbors,
                lambda: gains.lambda[k].clone(),
                disturbance: spec,
                exosystem,
                model,
                parameterization,
            });
        }
        let layout = StateLayout { dim: d, n_leaders: nl, followers: slots, len: offset };

        let leader_positions0 = stack(&cfg.leader_positions);
        let mut x = DVector::zeros(layout.len);
        x.rows_mut(0, nl * d).copy_from(&leader_positions0);
        for (k, (f, s)) in followers.iter().zip(&layout.followers).enumerate() {
            let p0 = &cfg.follower_positions[k];
            let v0 = &cfg.follower_velocities[k];
            x.rows_mut(s.p, d).copy_from(p0);
            x.rows_mut(s.v, d).copy_from(v0);
            x.rows_mut(s.exo, s.exo_len).copy_from(&f.exosystem.theta0);
            let ff = linalg::kron_eye_mul(f.model.n(), v0, d);
            let eta0 = match &cfg.eta_init {
                EtaInit::FeedforwardZero => ff,
                EtaInit::Zero => DVector::zeros(s.eta_len),
                EtaInit::XiZero => ff - linalg::kron_eye_mul(&f.model.t, &f.exosystem.theta0, d),
                EtaInit::Explicit(values) => {
                    let e = values.get(k).ok_or_else(|| {
                        Error::DimensionMismatch(format!("no explicit eta(0) for follower {}", f.label))
                    })?;
                    check_vec(e, s.eta_len, "eta(0)")?;
                    e.clone()
                }
            };
            x.rows_mut(s.eta, s.eta_len).copy_from(&eta0);
            if let Some(th) = &cfg.theta_hat0[k] {
                check_vec(th, s.theta_len, "theta_hat(0)")?;
                x.rows_mut(s.theta, s.theta_len).copy_from(th);
            }
        }
        if !(cfg.options.h > T::zero()) || !(cfg.options.t_final > T::zero()) || cfg.options.record_every == 0 {
            return Err(Error::DimensionMismatch(
                "integration needs h > 0, t_final > 0 and record_every >= 1".into(),
            ));
        }

        Ok(Self {
            graph,
            bearings: cfg.bearings,
            laplacian,
            localizer,
            leader_positions0,
            leader_velocity: cfg.leader_velocity,
            followers,
            mode: cfg.mode,
            gains,
            freeze_adaptation: cfg.freeze_adaptation,
            options: cfg.options,
            layout,
            initial: x,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn initial_state(&self) -> SimState<T> {
        SimState { t: T::zero(), x: self.initial.clone() }
    }

    /// Exact stacked leader positions `p_l(0) + 1 ⊗ v_c t`.
    pub fn leader_positions_at(&self, t: T) -> DVector<T> {
        let d = self.dim();
        DVector::from_fn(self.leader_positions0.len(), |k, _| {
            self.leader_positions0[k] + self.leader_velocity[k % d] * t
        })
    }

    /// Stacked positions of all agents (`n d`).
    pub fn positions(&self, x: &DVector<T>) -> DVector<T> {
        let d = self.dim();
        let nl = self.layout.n_leaders * d;
        let mut p = DVector::zeros(self.graph.n() * d);
        p.rows_mut(0, nl).copy_from(&x.rows(0, nl));
        for (k, s) in self.layout.followers.iter().enumerate() {
            p.rows_mut(nl + k * d, d).copy_from(&x.rows(s.p, d));
        }
        p
    }

    /// Stacked velocities of all agents; leaders move at `v_c`.
    pub fn velocities(&self, x: &DVector<T>) -> DVector<T> {
        let d = self.dim();
        let nl = self.layout.n_leaders;
        let mut v = DVector::zeros(self.graph.n() * d);
        for i in 0..nl {
            v.rows_mut(i * d, d).copy_from(&self.leader_velocity);
        }
        for (k, s) in self.layout.followers.iter().enumerate() {
            v.rows_mut((nl + k) * d, d).copy_from(&x.rows(s.v, d));
        }
        v
    }

    pub fn follower_positions(&self, x: &DVector<T>) -> DVector<T> {
        self.gather(x, |s| s.p, self.dim())
    }

    pub fn follower_velocities(&self, x: &DVector<T>) -> DVector<T> {
        self.gather(x, |s| s.v, self.dim())
    }

    fn gather(&self, x: &DVector<T>, start: impl Fn(&FollowerSlots) -> usize, len: usize) -> DVector<T> {
        let parts: Vec<_> = self.layout.followers.iter().map(|s| x.rows(start(s), len).into_owned()).collect();
        stack(&parts)
    }

    /// `(p_f*(t), v_f*)` for the leaders' positions at time `t`.
    pub fn target(&self, t: T) -> Result<(DVector<T>, DVector<T>)> {
        let pf = self.localizer.follower_positions(&self.leader_positions_at(t))?;
        let vf = self.localizer.follower_velocities(&self.leader_velocity)?;
        Ok((pf, vf))
    }

    /// Stacked `ξ_f`, `ξ_i = η_i + (T_i ⊗ I) ϑ_i - (N_i ⊗ I) v_i`.
    pub fn xi(&self, x: &DVector<T>) -> DVector<T> {
        let d = self.dim();
        let parts: Vec<_> = self
            .followers
            .iter()
            .zip(&self.layout.followers)
            .map(|(f, s)| {
                let eta = x.rows(s.eta, s.eta_len).into_owned();
                let v = x.rows(s.v, d).into_owned();
                let exo = x.rows(s.exo, s.exo_len).into_owned();
                compensator_offset(&eta, &v, &f.model.compensator) + linalg::kron_eye_mul(&f.model.t, &exo, d)
            })
            .collect();
        stack(&parts)
    }

    /// Stacked `θ̂_f`.
    pub fn theta_hat(&self, x: &DVector<T>) -> DVector<T> {
        let parts: Vec<_> = self.layout.followers.iter().map(|s| x.rows(s.theta, s.theta_len).into_owned()).collect();
        stack(&parts)
    }

    /// Stacked ground-truth `θ_f(σ_f)`.
    pub fn theta_true(&self) -> DVector<T> {
        let parts: Vec<_> = self
            .followers
            .iter()
            .map(|f| f.parameterization.theta_true.clone().expect("simulator keeps ground truth"))
            .collect();
        stack(&parts)
    }

    /// Control input of follower `k` (follower order) at state `x`.
    pub fn control_input(&self, k: usize, x: &DVector<T>, p_all: &DVector<T>, v_all: &DVector<T>) -> Result<DVector<T>> {
        let f = &self.followers[k];
        let s = &self.layout.followers[k];
        let d = self.dim();
        let sp = f.neighbors.apply(p_all);
        let sv = f.neighbors.apply(v_all);
        let v = x.rows(s.v, d).into_owned();
        let eta = x.rows(s.eta, s.eta_len).into_owned();
        match self.mode {
            ControlMode::Known => control::control_known(&sp, &sv, &eta, &v, &f.model, &self.gains),
            ControlMode::Adaptive => {
                let th = x.rows(s.theta, s.theta_len).into_owned();
                control::control_adaptive(&sp, &sv, &eta, &v, &f.model.compensator, &f.parameterization, &th, &self.gains)
            }
            ControlMode::FeedbackOnly => Ok(control::control_feedback(&sp, &sv, &self.gains)),
        }
    }

    /// Time derivative of the full closed-loop state.
    pub fn rhs(&self, state: &SimState<T>) -> Result<DVector<T>> {
        let mut out = DVector::zeros(self.layout.len);
        self.rhs_into(&state.x, &mut out)?;
        Ok(out)
    }

    fn rhs_into(&self, x: &DVector<T>, out: &mut DVector<T>) -> Result<()> {
        let d = self.dim();
        let p_all = self.positions(x);
        let v_all = self.velocities(x);
        for i in 0..self.layout.n_leaders {
            out.rows_mut(i * d, d).copy_from(&self.leader_velocity);
        }
        for (k, (f, s)) in self.followers.iter().zip(&self.layout.followers).enumerate() {
            let u = self.control_input(k, x, &p_all, &v_all)?;
            let v = x.rows(s.v, d).into_owned();
            let eta = x.rows(s.eta, s.eta_len).into_owned();
            let exo = x.rows(s.exo, s.exo_len).into_owned();
            let dist = f.exosystem.output(&exo);

            out.rows_mut(s.p, d).copy_from(&v);
            out.rows_mut(s.v, d).copy_from(&(&u + &dist));
            out.rows_mut(s.eta, s.eta_len)
                .copy_from(&control::eta_dot(&eta, &u, &v, &f.model.compensator));
            let theta_dot = if self.mode == ControlMode::Adaptive && !self.freeze_adaptation {
                let sp = f.neighbors.apply(&p_all);
                let sv = f.neighbors.apply(&v_all);
                let rho = control::regressor(&eta, &v, &f.model.compensator, &f.parameterization)?;
                control::theta_hat_dot(&rho, &sp, &sv, &f.lambda)
            } else {
                DVector::zeros(s.theta_len)
            };
            out.rows_mut(s.theta, s.theta_len).copy_from(&theta_dot);
            out.rows_mut(s.exo, s.exo_len)
                .copy_from(&linalg::kron_eye_mul(&f.exosystem.phi, &exo, d));
        }
        Ok(())
    }

    /// Per-sample error measures.
    pub fn sample_metrics(&self, state: &SimState<T>) -> Result<SampleMetrics<T>> {
        let d = self.dim();
        let (pf_star, vf_star) = self.target(state.t)?;
        let ep = self.follower_positions(&state.x) - pf_star;
        let ev = self.follower_velocities(&state.x) - vf_star;
        let err_p_followers = (0..self.followers.len()).map(|k| ep.rows(k * d, d).norm()).collect();
        let (min_dist, _, _) = min_pairwise_distance(&self.positions(&state.x), d);
        Ok(SampleMetrics { err_p: ep.norm(), err_v: ev.norm(), err_p_followers, min_dist })
    }

    fn check_state(&self, t: T, x: &DVector<T>) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: t.as_f64() });
        }
        let (dist, a, b) = min_pairwise_distance(&self.positions(x), self.dim());
        if dist < self.options.collision_threshold {
            return Err(Error::CollisionDetected {
                t: t.as_f64(),
                a: self.graph.label(a),
                b: self.graph.label(b),
                distance: dist.as_f64(),
            });
        }
        Ok(())
    }

    /// Integrates with the configured options.
    pub fn integrate(&self) -> Result<Trajectory<T>> {
        self.integrate_with(self.options.h, self.options.t_final, self.options.record_every)
    }

    /// Fixed-step RK4 from the initial state to `t_final`.
    ///
    /// Steps land on `k h`; if `h` does not divide `t_final` the last step is
    /// shortened. Samples are recorded every `record_every` steps and at the end.
    pub fn integrate_with(&self, h: T, t_final: T, record_every: usize) -> Result<Trajectory<T>> {
        if !(h > T::zero()) || !(t_final > T::zero()) || record_every == 0 {
            return Err(Error::DimensionMismatch("integration needs h > 0, t_final > 0, record_every >= 1".into()));
        }
        let ratio = t_final / h;
        let nearest = ratio.round();
        let steps = if (ratio - nearest).abs() <= T::lit(1e-9) * ratio {
            nearest
        } else {
            ratio.ceil()
        };
        let steps = steps.to_usize().unwrap_or(usize::MAX).max(1);
        let nl = self.layout.n_leaders * self.dim();

        let mut state = self.initial_state();
        self.check_state(state.t, &state.x)?;
        let mut samples = vec![Sample { metrics: self.sample_metrics(&state)?, state: state.clone() }];
        let mut rk = Rk4::new(self.layout.len);
        for k in 1..=steps {
            let t_next = if k == steps { t_final } else { h * T::lit(k as f64) };
            let dt = t_next - state.t;
            rk.step(&mut state.x, dt, |x, dx| self.rhs_into(x, dx))?;
            state.t = t_next;
            state.x.rows_mut(0, nl).copy_from(&self.leader_positions_at(t_next));
            self.check_state(state.t, &state.x)?;
            if k % record_every == 0 || k == steps {
                samples.push(Sample { metrics: self.sample_metrics(&state)?, state: state.clone() });
            }
        }
        Ok(Trajectory { samples, h, steps })
    }

    /// `A_σ` for the true internal models of all followers.
    pub fn a_sigma(&self) -> Result<DMatrix<T>> {
        let e: Vec<_> = self.followers.iter().map(|f| f.model.e.clone()).collect();
        let m: Vec<_> = self.followers.iter().map(|f| f.model.m().clone()).collect();
        assemble_a_sigma(&self.laplacian.ff, &e, &m, &self.gains)
    }

    /// `M_f = blockdiag(M_i ⊗ I_d)`.
    pub fn m_f(&self) -> DMatrix<T> {
        let blocks: Vec<_> = self.followers.iter().map(|f| linalg::kron_eye(f.model.m(), self.dim())).collect();
        linalg::block_diag(&blocks)
    }

    /// `E_f = blockdiag(E_i ⊗ I_d)` with the true `E_i`.
    pub fn e_f(&self) -> DMatrix<T> {
        let blocks: Vec<_> = self.followers.iter().map(|f| linalg::kron_eye(&f.model.e, self.dim())).collect();
        linalg::block_diag(&blocks)
    }

    /// `Λ_f = blockdiag(Λ_i)`.
    pub fn lambda_f(&self) -> DMatrix<T> {
        linalg::block_diag(&self.gains.lambda)
    }

    /// Lyapunov certificate for this loop's gains and true models.
    pub fn certificate(&self) -> Result<LyapunovCertificate<T>> {
        build_certificate(&self.laplacian.ff, &self.gains, &self.followers.iter().map(|f| f.model.m().clone()).collect::<Vec<_>>(), &self.e_f())
    }
}
