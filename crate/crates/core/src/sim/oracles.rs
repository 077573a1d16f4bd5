//! Checks derived from the stability analysis: the compact closed-loop matrix,
//! the exact `ξ` dynamics and the Lyapunov function of the adaptive loop.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{Simulation, Trajectory};
use crate::control::ControllerGains;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

/// `λ_min(Q_c)` below this is reported as near-singular.
pub const NEAR_SINGULAR_Q: f64 = 1e-6;
/// Margin factor applied to `γ_σ`.
pub const GAMMA_MARGIN: f64 = 1.01;
/// Per-step slack allowed in the monotonicity check, relative to `1 + V`.
pub const MONITOR_SLACK: f64 = 1e-8;

fn check_blocks<T: Real>(b_ff: &DMatrix<T>, n_f: usize) -> Result<usize> {
    if !b_ff.is_square() || n_f == 0 || !b_ff.nrows().is_multiple_of(n_f) {
        return Err(Error::DimensionMismatch(format!(
            "B_ff is {:?} for {n_f} followers",
            b_ff.shape()
        )));
    }
    Ok(b_ff.nrows() / n_f)
}

/// `[0, I, 0; -κ_p B_ff, -κ_v B_ff, E_f; 0, 0, M_f]`.
pub fn assemble_a_sigma<T: Real>(
    b_ff: &DMatrix<T>,
    e_blocks: &[DMatrix<T>],
    m_blocks: &[DMatrix<T>],
    gains: &ControllerGains<T>,
) -> Result<DMatrix<T>> {
    let n_f = e_blocks.len();
    if m_blocks.len() != n_f {
        return Err(Error::DimensionMismatch(format!("{n_f} E blocks but {} M blocks", m_blocks.len())));
    }
    let d = check_blocks(b_ff, n_f)?;
    for (e, m) in e_blocks.iter().zip(m_blocks) {
        if !m.is_square() || e.shape() != (1, m.nrows()) {
            return Err(Error::DimensionMismatch(format!("E {:?} with M {:?}", e.shape(), m.shape())));
        }
    }
    let e_f = linalg::block_diag(&e_blocks.iter().map(|e| linalg::kron_eye(e, d)).collect::<Vec<_>>());
    let m_f = linalg::block_diag(&m_blocks.iter().map(|m| linalg::kron_eye(m, d)).collect::<Vec<_>>());
    let nd = b_ff.nrows();
    let q = m_f.nrows();
    let mut a = DMatrix::zeros(2 * nd + q, 2 * nd + q);
    a.view_mut((0, nd), (nd, nd)).fill_with_identity();
    a.view_mut((nd, 0), (nd, nd)).copy_from(&(b_ff * -gains.kappa_p));
    a.view_mut((nd, nd), (nd, nd)).copy_from(&(b_ff * -gains.kappa_v));
    a.view_mut((nd, 2 * nd), (nd, q)).copy_from(&e_f);
    a.view_mut((2 * nd, 2 * nd), (q, q)).copy_from(&m_f);
    Ok(a)
}

/// Largest deviation of the recorded `ξ_f(t)` from `blockdiag(e^{M_i t} ⊗ I) ξ_f(0)`.
pub fn xi_oracle<T: Real>(traj: &Trajectory<T>, sim: &Simulation<T>) -> T {
    let d = sim.dim();
    let xi0 = sim.xi(&traj.first().state.x);
    let mut worst = T::zero();
    for sample in &traj.samples {
        let t = sample.state.t;
        let xi = sim.xi(&sample.state.x);
        let mut offset = 0;
        for f in &sim.followers {
            let len = f.model.compensator.size() * d;
            let flow = (f.model.m() * t).exp();
            let expected = linalg::kron_eye_mul(&flow, &xi0.rows(offset, len).into_owned(), d);
            let dev = (xi.rows(offset, len) - expected).norm();
            worst = worst.max(dev);
            offset += len;
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate<T: Real> {
    pub q_c: DMatrix<T>,
    pub p_c: DMatrix<T>,
    pub g_c: DMatrix<T>,
    pub gamma_sigma: T,
    pub gamma: T,
    pub lambda_min_q: T,
    /// `‖A_cᵀ P_c + P_c A_c + Q_c‖`.
    pub lyapunov_residual: T,
    pub near_singular: bool,
}

/// Builds `Q_c`, `P_c`, `G_c` and `γ` for the adaptive closed loop.
pub fn build_certificate<T: Real>(
    b_ff: &DMatrix<T>,
    gains: &ControllerGains<T>,
    m_blocks: &[DMatrix<T>],
    e_f: &DMatrix<T>,
) -> Result<LyapunovCertificate<T>> {
    let d = check_blocks(b_ff, m_blocks.len())?;
    let nd = b_ff.nrows();
    let q_len: usize = m_blocks.iter().map(|m| m.nrows() * d).sum();
    if e_f.shape() != (nd, q_len) {
        return Err(Error::DimensionMismatch(format!("E_f is {:?}, expected ({nd}, {q_len})", e_f.shape())));
    }
    let (kp, kv) = (gains.kappa_p, gains.kappa_v);
    let b2 = b_ff * b_ff;

    let mut q_c = DMatrix::zeros(2 * nd, 2 * nd);
    q_c.view_mut((0, 0), (nd, nd)).copy_from(&(&b2 * (kp + kp)));
    q_c.view_mut((nd, nd), (nd, nd)).copy_from(&((&b2 * kv - b_ff) * T::lit(2.0)));

    let mut p_c = DMatrix::zeros(2 * nd, 2 * nd);
    p_c.view_mut((0, 0), (nd, nd)).copy_from(&(&b2 * (kp + kv)));
    p_c.view_mut((0, nd), (nd, nd)).copy_from(b_ff);
    p_c.view_mut((nd, 0), (nd, nd)).copy_from(b_ff);
    p_c.view_mut((nd, nd), (nd, nd)).copy_from(b_ff);

    let mut g_blocks = Vec::with_capacity(m_blocks.len());
    for m in m_blocks {
        let eye = DMatrix::identity(m.nrows(), m.nrows());
        let g = linalg::solve_lyapunov(m, &eye)
            .ok_or_else(|| Error::CertificateFailed("G M + Mᵀ G = -I has no unique solution".into()))?;
        g_blocks.push(linalg::kron_eye(&g, d));
    }
    let g_c = linalg::block_diag(&g_blocks);

    for (name, mat) in [("Q_c", &q_c), ("P_c", &p_c), ("G_c", &g_c)] {
        if !linalg::is_positive_definite(mat) {
            return Err(Error::CertificateFailed(format!("{name} is not positive definite")));
        }
    }

    let mut a_c = DMatrix::zeros(2 * nd, 2 * nd);
    a_c.view_mut((0, nd), (nd, nd)).fill_with_identity();
    a_c.view_mut((nd, 0), (nd, nd)).copy_from(&(b_ff * -kp));
    a_c.view_mut((nd, nd), (nd, nd)).copy_from(&(b_ff * -kv));
    let lyapunov_residual = (a_c.transpose() * &p_c + &p_c * &a_c + &q_c).norm();

    // P_c B_c = [B_ff; B_ff]
    let mut pb = DMatrix::zeros(2 * nd, nd);
    pb.view_mut((0, 0), (nd, nd)).copy_from(b_ff);
    pb.view_mut((nd, 0), (nd, nd)).copy_from(b_ff);
    let w = pb * e_f;
    let w_norm2 = linalg::symmetric_extremes(&(&w * w.transpose())).1;
    let lambda_min_q = linalg::symmetric_extremes(&q_c).0;
    let gamma_sigma = w_norm2 / lambda_min_q;
    Ok(LyapunovCertificate {
        q_c,
        p_c,
        g_c,
        gamma_sigma,
        gamma: gamma_sigma * T::lit(GAMMA_MARGIN),
        lambda_min_q,
        lyapunov_residual,
        near_singular: lambda_min_q < T::lit(NEAR_SINGULAR_Q),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport<T: Real> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    pub non_increasing: bool,
    /// Largest `V_{k+1} - V_k - slack_k` seen (negative when the check passes).
    pub worst_excess: T,
}

/// Evaluates `V = x̃ᵀ P_c x̃ + γ ξᵀ G_c ξ + θ̃ᵀ Λ⁻¹ θ̃` at every sample.
///
/// Consecutive samples `m` steps apart may rise by at most
/// `m · 1e-8 · (1 + V)`.
pub fn lyapunov_monitor<T: Real>(
    traj: &Trajectory<T>,
    sim: &Simulation<T>,
    cert: &LyapunovCertificate<T>,
) -> Result<LyapunovReport<T>> {
    let lambda_inv = sim
        .lambda_f()
        .try_inverse()
        .ok_or_else(|| Error::CertificateFailed("adaptation gain is singular".into()))?;
    let theta = sim.theta_true();
    let mut times = Vec::with_capacity(traj.samples.len());
    let mut values = Vec::with_capacity(traj.samples.len());
    for sample in &traj.samples {
        let x = &sample.state.x;
        let (pf, vf) = sim.target(sample.state.t)?;
        let ep = sim.follower_positions(x) - pf;
        let ev = sim.follower_velocities(x) - vf;
        let mut xt = DVector::zeros(ep.len() + ev.len());
        xt.rows_mut(0, ep.len()).copy_from(&ep);
        xt.rows_mut(ep.len(), ev.len()).copy_from(&ev);
        let xi = sim.xi(x);
        let th = &theta - sim.theta_hat(x);
        let v = xt.dot(&(&cert.p_c * &xt)) + cert.gamma * xi.dot(&(&cert.g_c * &xi)) + th.dot(&(&lambda_inv * &th));
        times.push(sample.state.t);
        values.push(v);
    }
    let mut worst = T::min_value().unwrap_or_else(|| -T::one());
    let mut non_increasing = true;
    for k in 1..values.len() {
        let steps = ((times[k] - times[k - 1]) / traj.h).ceil().max(T::one());
        let slack = steps * T::lit(MONITOR_SLACK) * (T::one() + values[k - 1].abs());
        let excess = values[k] - values[k - 1] - slack;
        worst = worst.max(excess);
        if excess > T::zero() || !values[k].is_finite() {
            non_increasing = false;
        }
    }
    if values.len() < 2 {
        worst = T::zero();
    }
    Ok(LyapunovReport { times, values, non_increasing, worst_excess: worst })
}
