//! Distributed bearing-based control laws.
//!
//! Each follower only sees its own state `(p_i, v_i, η_i, θ̂_i)` and the
//! projected neighbor sums `s_p = Σ_j P_{g*_ij}(p_i - p_j)` and
//! `s_v = Σ_j P_{g*_ij}(v_i - v_j)`. Nothing in this module takes global state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{projector, BearingSet, SensingGraph};
use crate::internal_model::{AdaptiveParameterization, Compensator, InternalModel};
use crate::linalg;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Internal model with the true frequencies.
    Known,
    /// Internal model with an adaptive estimate of `E`.
    Adaptive,
    /// Pure bearing feedback, `u = -κ_p s_p - κ_v s_v`.
    FeedbackOnly,
}

impl std::fmt::Display for ControlMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControlMode::Known => "known",
            ControlMode::Adaptive => "adaptive",
            ControlMode::FeedbackOnly => "feedback_only",
        })
    }
}

impl std::str::FromStr for ControlMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "known" => Ok(ControlMode::Known),
            "adaptive" => Ok(ControlMode::Adaptive),
            "feedback_only" | "feedback-only" => Ok(ControlMode::FeedbackOnly),
            other => Err(format!("unknown control mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains<T: Real> {
    pub kappa_p: T,
    pub kappa_v: T,
    /// Per-follower adaptation gains `Λ_i`; only read in adaptive mode.
    pub lambda: Vec<DMatrix<T>>,
}

/// Compensator and estimator state of one follower.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerControllerState<T: Real> {
    pub eta: DVector<T>,
    pub theta_hat: DVector<T>,
}

/// Neighbor list of a follower with the desired-bearing projectors precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborProjectors<T: Real> {
    pub agent: usize,
    pub dim: usize,
    pub terms: Vec<(usize, DMatrix<T>)>,
}

impl<T: Real> NeighborProjectors<T> {
    pub fn new(graph: &SensingGraph, bearings: &BearingSet<T>, agent: usize) -> Result<Self> {
        if graph.degree(agent) == 0 {
            return Err(Error::IsolatedFollower(graph.label(agent)));
        }
        let terms = graph
            .neighbors(agent)
            .map(|j| {
                let g = bearings
                    .get(agent, j)
                    .ok_or(Error::MissingBearing(graph.label(agent), graph.label(j)))?;
                Ok((j, projector(g)?))
            })
            .collect::<Result<_>>()?;
        Ok(Self { agent, dim: graph.dim(), terms })
    }

    /// `Σ_j P_{g*_ij}(x_i - x_j)` for a stacked per-agent vector `x`.
    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        let d = self.dim;
        let xi = x.rows(self.agent * d, d);
        let mut out = DVector::zeros(d);
        for (j, p) in &self.terms {
            let diff = xi - x.rows(j * d, d);
            out.gemv(T::one(), p, &diff, T::one());
        }
        out
    }
}

/// Projected position and velocity errors `(s_p, s_v)` of agent `i`.
pub fn projected_errors<T: Real>(
    graph: &SensingGraph,
    bearings: &BearingSet<T>,
    i: usize,
    positions: &DVector<T>,
    velocities: &DVector<T>,
) -> Result<(DVector<T>, DVector<T>)> {
    let ops = NeighborProjectors::new(graph, bearings, i)?;
    let expected = graph.n() * graph.dim();
    if positions.len() != expected || velocities.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "stacked state has length {}/{}, expected {expected}",
            positions.len(),
            velocities.len()
        )));
    }
    Ok((ops.apply(positions), ops.apply(velocities)))
}

/// `η - (N ⊗ I_d) v`.
pub fn compensator_offset<T: Real>(eta: &DVector<T>, v: &DVector<T>, comp: &Compensator<T>) -> DVector<T> {
    eta - linalg::kron_eye_mul(&comp.n, v, v.len())
}

fn feedback<T: Real>(s_p: &DVector<T>, s_v: &DVector<T>, gains: &ControllerGains<T>) -> DVector<T> {
    -(s_p * gains.kappa_p) - s_v * gains.kappa_v
}

fn check_dims<T: Real>(eta: &DVector<T>, v: &DVector<T>, comp: &Compensator<T>) -> Result<()> {
    if eta.len() != comp.size() * v.len() {
        return Err(Error::DimensionMismatch(format!(
            "eta has length {}, expected {}",
            eta.len(),
            comp.size() * v.len()
        )));
    }
    Ok(())
}

/// Known-frequency law `u = (E ⊗ I)(η - (N ⊗ I)v) - κ_p s_p - κ_v s_v`.
pub fn control_known<T: Real>(
    s_p: &DVector<T>,
    s_v: &DVector<T>,
    eta: &DVector<T>,
    v: &DVector<T>,
    model: &InternalModel<T>,
    gains: &ControllerGains<T>,
) -> Result<DVector<T>> {
    check_dims(eta, v, &model.compensator)?;
    let z = compensator_offset(eta, v, &model.compensator);
    Ok(linalg::kron_eye_mul(&model.e, &z, v.len()) + feedback(s_p, s_v, gains))
}

/// Adaptive law: as [`control_known`] with `E` replaced by `Ê = E° + Σ E^j θ̂^j`.
#[allow(clippy::too_many_arguments)]
pub fn control_adaptive<T: Real>(
    s_p: &DVector<T>,
    s_v: &DVector<T>,
    eta: &DVector<T>,
    v: &DVector<T>,
    comp: &Compensator<T>,
    param: &AdaptiveParameterization<T>,
    theta_hat: &DVector<T>,
    gains: &ControllerGains<T>,
) -> Result<DVector<T>> {
    check_dims(eta, v, comp)?;
    if theta_hat.len() != param.k() {
        return Err(Error::DimensionMismatch(format!(
            "theta_hat has length {}, expected {}",
            theta_hat.len(),
            param.k()
        )));
    }
    let z = compensator_offset(eta, v, comp);
    let e_hat = param.estimate(theta_hat);
    Ok(linalg::kron_eye_mul(&e_hat, &z, v.len()) + feedback(s_p, s_v, gains))
}

/// Feedback-only baseline `u = -κ_p s_p - κ_v s_v`.
pub fn control_feedback<T: Real>(s_p: &DVector<T>, s_v: &DVector<T>, gains: &ControllerGains<T>) -> DVector<T> {
    feedback(s_p, s_v, gains)
}

/// Regressor `ρ` (d × k): column `j` is `(E^j ⊗ I)(η - (N ⊗ I)v)`.
pub fn regressor<T: Real>(
    eta: &DVector<T>,
    v: &DVector<T>,
    comp: &Compensator<T>,
    param: &AdaptiveParameterization<T>,
) -> Result<DMatrix<T>> {
    check_dims(eta, v, comp)?;
    let d = v.len();
    let z = compensator_offset(eta, v, comp);
    let mut rho = DMatrix::zeros(d, param.k());
    for (j, basis) in param.basis.iter().enumerate() {
        rho.set_column(j, &linalg::kron_eye_mul(basis, &z, d));
    }
    Ok(rho)
}

/// Parameter update `θ̂̇ = -Λ ρᵀ (s_p + s_v)`.
pub fn theta_hat_dot<T: Real>(rho: &DMatrix<T>, s_p: &DVector<T>, s_v: &DVector<T>, lambda: &DMatrix<T>) -> DVector<T> {
    -(lambda * (rho.transpose() * (s_p + s_v)))
}

/// Compensator `η̇ = (M ⊗ I)η + (N ⊗ I)u - (MN ⊗ I)v`.
pub fn eta_dot<T: Real>(eta: &DVector<T>, u: &DVector<T>, v: &DVector<T>, comp: &Compensator<T>) -> DVector<T> {
    let d = v.len();
    let mn = &comp.m * &comp.n;
    linalg::kron_eye_mul(&comp.m, eta, d) + linalg::kron_eye_mul(&comp.n, u, d) - linalg::kron_eye_mul(&mn, v, d)
}

/// Checks the gain hypotheses of the selected mode against `B_ff`.
///
/// All modes need `κ_p, κ_v > 0`. Adaptive mode also needs
/// `κ_v λ_min(B_ff) > 1` and every `Λ_i` symmetric positive definite.
pub fn validate_gains<T: Real>(gains: &ControllerGains<T>, b_ff: &DMatrix<T>, mode: ControlMode) -> Result<()> {
    if !(gains.kappa_p > T::zero()) {
        return Err(Error::GainConditionViolated(format!("kappa_p = {} must be > 0", gains.kappa_p)));
    }
    if !(gains.kappa_v > T::zero()) {
        return Err(Error::GainConditionViolated(format!("kappa_v = {} must be > 0", gains.kappa_v)));
    }
    if mode != ControlMode::Adaptive {
        return Ok(());
    }
    let lambda_min = linalg::symmetric_extremes(b_ff).0;
    check_adaptive_margin(gains.kappa_v, lambda_min)?;
    for (i, l) in gains.lambda.iter().enumerate() {
        let symmetric = (l - l.transpose()).norm() <= T::lit(1e-12) * (T::one() + l.norm());
        if !symmetric || !linalg::is_positive_definite(l) {
            return Err(Error::GainConditionViolated(format!(
                "adaptation gain of follower #{} is not symmetric positive definite",
                i + 1
            )));
        }
    }
    Ok(())
}

/// `κ_v · λ_min(B_ff) > 1`.
pub fn check_adaptive_margin<T: Real>(kappa_v: T, lambda_min: T) -> Result<()> {
    let product = kappa_v * lambda_min;
    if product > T::one() {
        Ok(())
    } else {
        Err(Error::GainConditionViolated(format!(
            "adaptive gain condition: kappa_v·lambda_min(B_ff) = {}·{} = {} <= 1",
            kappa_v, lambda_min, product
        )))
    }
}
