//! Closed-form minimum-energy trajectory between boundary states.
//!
//! For cost 1/2 ∫ u² dt with double-integrator longitudinal dynamics the
//! optimal control is affine in time and the states are polynomial. In
//! shifted time τ = t - t0 (kept internally for conditioning at large
//! absolute times):
//!
//! ```text
//!   u*(τ) = a τ + b
//!   v*(τ) = a τ²/2 + b τ + c
//!   x*(τ) = a τ³/6 + b τ²/2 + c τ + d
//! ```
//!
//! The costates are lambda_x = a and lambda_v = -(a τ + b), so u = -lambda_v
//! holds by construction. The four constants come from the boundary conditions
//! at t0 and tf.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OcpError {
    #[error("degenerate time window: tf ({tf}) must exceed t0 ({t0})")]
    DegenerateWindow { t0: f64, tf: f64 },
    #[error("boundary values must be finite")]
    NonFinite,
}

/// Boundary states of one planning problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    pub t0: f64,
    pub tf: f64,
    pub x0: f64,
    pub xf: f64,
    pub v0: f64,
    pub vf: f64,
}

/// The optimal cubic: integration constants in shifted time τ = t - t0 plus
/// the absolute window. Shifted storage avoids the catastrophic cancellation
/// an absolute-time monomial basis suffers when t0 is far from zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicTrajectory {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub t0: f64,
    pub tf: f64,
}

/// Position, speed and control sampled from a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub x: f64,
    pub v: f64,
    pub u: f64,
    /// True when t fell outside [t0, tf] (extrapolated values).
    pub extrapolated: bool,
}

/// Solve the 4x4 boundary system for (a, b, c, d) in shifted time, by
/// Gaussian elimination with partial pivoting.
pub fn solve_unconstrained(bc: &BoundarySpec) -> Result<CubicTrajectory, OcpError> {
    for val in [bc.t0, bc.tf, bc.x0, bc.xf, bc.v0, bc.vf] {
        if !val.is_finite() {
            return Err(OcpError::NonFinite);
        }
    }
    if bc.tf <= bc.t0 {
        return Err(OcpError::DegenerateWindow { t0: bc.t0, tf: bc.tf });
    }
    let tt = bc.tf - bc.t0;
    // Rows: v(0), x(0), v(T), x(T) over unknowns (a', b', c', d') in shifted time.
    let mut m = [
        [0.0, 0.0, 1.0, 0.0, bc.v0],
        [0.0, 0.0, 0.0, 1.0, bc.x0],
        [0.5 * tt * tt, tt, 1.0, 0.0, bc.vf],
        [tt * tt * tt / 6.0, 0.5 * tt * tt, tt, 1.0, bc.xf],
    ];
    solve_4x4(&mut m);
    let (a, b, c, d) = (m[0][4], m[1][4], m[2][4], m[3][4]);
    Ok(CubicTrajectory { a, b, c, d, t0: bc.t0, tf: bc.tf })
}

/// In-place Gaussian elimination with partial pivoting on a 4x5 augmented
/// system; back-substituted solution lands in column 4.
fn solve_4x4(m: &mut [[f64; 5]; 4]) {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for row in (col + 1)..4 {
            let factor = m[row][col] / m[col][col];
            for k in col..5 {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    for col in (0..4).rev() {
        let mut rhs = m[col][4];
        for k in (col + 1)..4 {
            rhs -= m[col][k] * m[k][4];
        }
        m[col][4] = rhs / m[col][col];
    }
}

impl CubicTrajectory {
    /// Sample (x, v, u) at absolute time t; values outside the window are
    /// extrapolated and flagged rather than rejected (the reference mapper
    /// clamps).
    pub fn eval(&self, t: f64) -> TrajectorySample {
        let tau = t - self.t0;
        let x = ((self.a / 6.0 * tau + self.b / 2.0) * tau + self.c) * tau + self.d;
        let v = (self.a / 2.0 * tau + self.b) * tau + self.c;
        let u = self.a * tau + self.b;
        TrajectorySample { x, v, u, extrapolated: t < self.t0 || t > self.tf }
    }

    /// 1/2 ∫ u² over the window, in closed form, with u(0) = b.
    pub fn energy_cost(&self) -> f64 {
        let tt = self.tf - self.t0;
        let u0 = self.b;
        0.5 * (self.a * self.a * tt * tt * tt / 3.0 + self.a * u0 * tt * tt + u0 * u0 * tt)
    }
}
