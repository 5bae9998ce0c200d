//! Position-indexed feedback mapping onto a stored optimal trajectory.
//!
//! Given the observed longitudinal position, find the trajectory time whose
//! reference position matches it and return the trajectory's speed and control
//! there. Observations beyond the window clamp to the nearer endpoint.

use crate::ocp::CubicTrajectory;
use thiserror::Error;

/// Residual tolerance of the position inversion [m].
const POSITION_TOL: f64 = 1e-9;
/// Iteration cap for the safeguarded Newton/bisection search.
const MAX_ITERS: usize = 100;

#[derive(Debug, Error)]
pub enum ReferenceError {
    /// The reference position is not monotone over the window (the speed
    /// polynomial changes sign), so inversion is ambiguous. Carries every
    /// in-window time whose position matches the observation.
    #[error("position profile is not monotone over the window; candidate times: {roots:?}")]
    Ambiguous { roots: Vec<f64> },
}

/// Reference quantities at the mapped trajectory time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub t_ref: f64,
    pub v_ref: f64,
    pub u_ref: f64,
    /// True when the observation fell outside the reference position range and
    /// the sample was clamped to a window endpoint.
    pub clamped: bool,
}

/// Map an observed position onto the trajectory.
pub fn map_position(traj: &CubicTrajectory, x_obs: f64) -> Result<ReferenceSample, ReferenceError> {
    if let Some(roots) = speed_sign_change(traj) {
        return Err(ReferenceError::Ambiguous { roots: position_roots(traj, x_obs, roots) });
    }
    let x_start = traj.eval(traj.t0).x;
    let x_end = traj.eval(traj.tf).x;
    let (x_min, x_max) = if x_start <= x_end { (x_start, x_end) } else { (x_end, x_start) };

    if x_obs < x_min || x_obs > x_max {
        let t_ref = if (x_obs - x_start).abs() <= (x_obs - x_end).abs() { traj.t0 } else { traj.tf };
        return Ok(sample_at(traj, t_ref, true));
    }
    Ok(sample_at(traj, invert_monotone(traj, x_obs), false))
}

fn sample_at(traj: &CubicTrajectory, t_ref: f64, clamped: bool) -> ReferenceSample {
    let s = traj.eval(t_ref);
    ReferenceSample { t_ref, v_ref: s.v, u_ref: s.u, clamped }
}

/// Does v*(τ) = a τ²/2 + b τ + c change sign strictly inside the window?
/// Returns the interior odd-multiplicity roots (in absolute time) when it
/// does.
fn speed_sign_change(traj: &CubicTrajectory) -> Option<Vec<f64>> {
    let (a, b, c) = (traj.a, traj.b, traj.c);
    let interior = |t: f64| t > traj.t0 + 1e-12 && t < traj.tf - 1e-12;
    if a == 0.0 {
        if b == 0.0 {
            return None; // constant speed: no sign change
        }
        let root = traj.t0 + -c / b;
        return interior(root).then(|| vec![root]);
    }
    let disc = b * b - 2.0 * a * c;
    if disc <= 0.0 {
        return None; // no real roots or a tangency (even multiplicity)
    }
    let sq = disc.sqrt();
    let mut roots: Vec<f64> = [traj.t0 + (-b - sq) / a, traj.t0 + (-b + sq) / a]
        .into_iter()
        .filter(|&t| interior(t))
        .collect();
    roots.sort_by(f64::total_cmp);
    (!roots.is_empty()).then_some(roots)
}

/// All window times where x*(t) = x_obs, given the interior speed roots that
/// partition the window into monotone pieces.
fn position_roots(traj: &CubicTrajectory, x_obs: f64, speed_roots: Vec<f64>) -> Vec<f64> {
    let mut knots = vec![traj.t0];
    knots.extend(speed_roots);
    knots.push(traj.tf);
    let mut out = Vec::new();
    for pair in knots.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let p_lo = traj.eval(lo).x - x_obs;
        let p_hi = traj.eval(hi).x - x_obs;
        if p_lo == 0.0 {
            out.push(lo);
            continue;
        }
        if p_lo * p_hi <= 0.0 {
            out.push(bisect(traj, x_obs, lo, hi));
        }
    }
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    out
}

fn bisect(traj: &CubicTrajectory, x_obs: f64, mut lo: f64, mut hi: f64) -> f64 {
    let sign_lo = (traj.eval(lo).x - x_obs).signum();
    for _ in 0..MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        let p = traj.eval(mid).x - x_obs;
        if p.abs() <= POSITION_TOL {
            return mid;
        }
        if p.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Safeguarded Newton on x*(t) - x_obs over a monotone window: Newton steps
/// that stay inside the bracket, bisection otherwise.
fn invert_monotone(traj: &CubicTrajectory, x_obs: f64) -> f64 {
    let (mut lo, mut hi) = (traj.t0, traj.tf);
    let increasing = traj.eval(hi).x >= traj.eval(lo).x;
    let mut t = 0.5 * (lo + hi);
    for _ in 0..MAX_ITERS {
        let s = traj.eval(t);
        let p = s.x - x_obs;
        if p.abs() <= POSITION_TOL {
            return t;
        }
        if (p > 0.0) == increasing {
            hi = t;
        } else {
            lo = t;
        }
        let newton = if s.v != 0.0 { t - p / s.v } else { f64::NAN };
        t = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    t
}
