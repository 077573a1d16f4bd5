use nalgebra::DVector;
use serde::Serialize;

use super::Trajectory;
use crate::scalar::Real;

/// Minimum distance over all agent pairs, with the (0-based) pair attaining it.
pub fn min_pairwise_distance<T: Real>(positions: &DVector<T>, dim: usize) -> (T, usize, usize) {
    let n = positions.len() / dim;
    let mut best = (None::<T>, 0, 0);
    for i in 0..n {
        for j in i + 1..n {
            let dist = (positions.rows(i * dim, dim) - positions.rows(j * dim, dim)).norm();
            if best.0.is_none_or(|b| dist < b) {
                best = (Some(dist), i, j);
            }
        }
    }
    (best.0.unwrap_or_else(T::zero), best.1, best.2)
}

/// Least-squares slope of `ln(value)` against time.
///
/// Non-positive or non-finite values are skipped; `None` when fewer than two
/// usable points remain or the times are all equal.
pub fn fit_decay_rate<T: Real>(times: &[T], values: &[T]) -> Option<T> {
    let pts: Vec<(T, T)> = times
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > T::zero() && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = T::lit(pts.len() as f64);
    let mean_t = pts.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let mean_y = pts.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for &(t, y) in &pts {
        sxy += (t - mean_t) * (y - mean_y);
        sxx += (t - mean_t) * (t - mean_t);
    }
    if sxx <= T::zero() {
        return None;
    }
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary<T: Real> {
    pub samples: usize,
    pub t_final: T,
    pub initial_err_p: T,
    pub initial_err_v: T,
    pub terminal_err_p: T,
    pub terminal_err_v: T,
    /// Fitted slope of `ln ‖(p̃_f, ṽ_f)‖` over the final half of the run.
    pub decay_rate: Option<T>,
    pub decay_rate_defined: bool,
    pub min_distance: T,
    pub min_distance_time: T,
    pub max_abs_state: T,
}

/// Summarizes a recorded trajectory.
pub fn metrics<T: Real>(traj: &Trajectory<T>) -> MetricsSummary<T> {
    let first = traj.first();
    let last = traj.last();
    let t_end = last.state.t;
    let half = t_end * T::lit(0.5);
    let (times, norms): (Vec<T>, Vec<T>) = traj
        .samples
        .iter()
        .filter(|s| s.state.t >= half)
        .map(|s| (s.state.t, s.metrics.err_p.hypot(s.metrics.err_v)))
        .unzip();
    let decay_rate = fit_decay_rate(&times, &norms);
    let (mut min_distance, mut min_distance_time) = (first.metrics.min_dist, first.state.t);
    let mut max_abs_state = T::zero();
    for s in &traj.samples {
        if s.metrics.min_dist < min_distance {
            min_distance = s.metrics.min_dist;
            min_distance_time = s.state.t;
        }
        max_abs_state = s.state.x.iter().fold(max_abs_state, |m, &v| m.max(v.abs()));
    }
    MetricsSummary {
        samples: traj.samples.len(),
        t_final: t_end,
        initial_err_p: first.metrics.err_p,
        initial_err_v: first.metrics.err_v,
        terminal_err_p: last.metrics.err_p,
        terminal_err_v: last.metrics.err_v,
        decay_rate_defined: decay_rate.is_some(),
        decay_rate,
        min_distance,
        min_distance_time,
        max_abs_state,
    }
}
