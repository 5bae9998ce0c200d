//! Control-affine vehicle model with additive disturbance.
//!
//! State is (x, y, theta, v); inputs are longitudinal acceleration u and a
//! steering command phi. The model is the kinematic single-track form
//!
//! ```text
//!   x'     = v cos(theta) + d_x w
//!   y'     = v sin(theta) + d_y w
//!   theta' = (v / l_w) phi
//!   v'     = u + d_v w
//! ```
//!
//! where w is a disturbance vector confined to a polytope { w : A w <= b } and
//! d routes its components onto the (x', y', v') channels per configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// State dimension: (x, y, theta, v).
pub const STATE_DIM: usize = 4;

/// Default wheelbase l_w [m].
pub const DEFAULT_WHEELBASE: f64 = 2.5;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("disturbance vector has {got} components, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("integration produced a non-finite state: {0:?}")]
    NonFinite(VehicleState),
    #[error("disturbance box is invalid: {0}")]
    BadBox(String),
}

/// Pose and speed of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Longitudinal position [m].
    pub x: f64,
    /// Lateral position [m].
    pub y: f64,
    /// Heading relative to the road axis [rad].
    pub theta: f64,
    /// Speed [m/s].
    pub v: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self { x, y, theta, v }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() && self.v.is_finite()
    }
}

/// Longitudinal acceleration and steering command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Acceleration u [m/s^2].
    pub accel: f64,
    /// Steering command phi [rad].
    pub steer: f64,
}

impl ControlInput {
    pub fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }

    pub const ZERO: ControlInput = ControlInput { accel: 0.0, steer: 0.0 };
}

/// Which state derivative a disturbance component acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceChannel {
    /// Additive on x' (longitudinal position rate).
    LonRate,
    /// Additive on y' (lateral position rate).
    LatRate,
    /// Additive on v' (acceleration).
    SpeedRate,
}

impl DisturbanceChannel {
    /// Row of the state derivative this channel feeds.
    pub fn state_row(self) -> usize {
        match self {
            DisturbanceChannel::LonRate => 0,
            DisturbanceChannel::LatRate => 1,
            DisturbanceChannel::SpeedRate => 3,
        }
    }
}

/// Polytopic disturbance set { w : A w <= b }.
///
/// Construction is restricted to axis-aligned boxes (the class the rest of the
/// pipeline can enumerate and dualize exactly); A and b are stored in the
/// general row form consumed by the LP-duality embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbancePolytope {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DisturbancePolytope {
    /// Box `lo <= w <= hi`. Must be bounded, nonempty and contain w = 0.
    pub fn from_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, DynamicsError> {
        if lo.len() != hi.len() {
            return Err(DynamicsError::BadBox(format!(
                "lower bound has {} components, upper has {}",
                lo.len(),
                hi.len()
            )));
        }
        for k in 0..lo.len() {
            if !lo[k].is_finite() || !hi[k].is_finite() {
                return Err(DynamicsError::BadBox(format!("component {k} is not finite")));
            }
            if lo[k] > hi[k] {
                return Err(DynamicsError::BadBox(format!(
                    "component {k} is empty: lo={} > hi={}",
                    lo[k], hi[k]
                )));
            }
            if lo[k] > 0.0 || hi[k] < 0.0 {
                return Err(DynamicsError::BadBox(format!(
                    "component {k} must contain zero: [{}, {}]",
                    lo[k], hi[k]
                )));
            }
        }
        // Rows: w_k <= hi_k for all k, then -w_k <= -lo_k.
        let m = lo.len();
        let mut a = Vec::with_capacity(2 * m);
        let mut b = Vec::with_capacity(2 * m);
        for k in 0..m {
            let mut row = vec![0.0; m];
            row[k] = 1.0;
            a.push(row);
            b.push(hi[k]);
        }
        for k in 0..m {
            let mut row = vec![0.0; m];
            row[k] = -1.0;
            a.push(row);
            b.push(-lo[k]);
        }
        Ok(Self { a, b, lo, hi })
    }

    /// The singleton set {0} in `dim` components.
    pub fn zero(dim: usize) -> Self {
        Self::from_box(vec![0.0; dim], vec![0.0; dim]).expect("zero box is always valid")
    }

    /// Disturbance dimension m_w.
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Number of defining rows m_c.
    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn lower(&self) -> &[f64] {
        &self.lo
    }

    pub fn upper(&self) -> &[f64] {
        &self.hi
    }

    /// All 2^m box vertices, in lexicographic lo/hi order.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let m = self.dim();
        let mut out = Vec::with_capacity(1 << m);
        for mask in 0..(1u32 << m) {
            let v = (0..m)
                .map(|k| if mask & (1 << k) != 0 { self.hi[k] } else { self.lo[k] })
                .collect();
            out.push(v);
        }
        out
    }
}

/// Drift/input/disturbance decomposition of the dynamics at one state:
/// derivative = f + g (u, phi) + d w.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDecomposition {
    /// Drift f over (x, y, theta, v).
    pub f: [f64; STATE_DIM],
    /// Input matrix columns for u and phi.
    pub g: [[f64; 2]; STATE_DIM],
    /// Disturbance matrix, one column per disturbance component.
    pub d: Vec<[f64; STATE_DIM]>,
}

impl AffineDecomposition {
    /// Lie derivative of a scalar with gradient `grad` along the drift field.
    pub fn lie_f(&self, grad: &[f64; STATE_DIM]) -> f64 {
        dot4(grad, &self.f)
    }

    /// Lie derivative along the two input columns: coefficients on (u, phi).
    pub fn lie_g(&self, grad: &[f64; STATE_DIM]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for col in 0..2 {
            for row in 0..STATE_DIM {
                out[col] += grad[row] * self.g[row][col];
            }
        }
        out
    }

    /// Lie derivative along the disturbance columns (length m_w).
    pub fn lie_d(&self, grad: &[f64; STATE_DIM]) -> Vec<f64> {
        self.d
            .iter()
            .map(|col| dot4(grad, col))
            .collect()
    }
}

fn dot4(a: &[f64; STATE_DIM], b: &[f64; STATE_DIM]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Model parameters shared by every vehicle in a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleModel {
    /// Wheelbase l_w [m].
    pub wheelbase: f64,
    /// Disturbance routing, one channel per disturbance component.
    pub channels: Vec<DisturbanceChannel>,
}

impl VehicleModel {
    pub fn new(wheelbase: f64, channels: Vec<DisturbanceChannel>) -> Self {
        Self { wheelbase, channels }
    }

    /// Default model: l_w = 2.5 m, one disturbance channel on v'.
    pub fn default_single_speed_channel() -> Self {
        Self::new(DEFAULT_WHEELBASE, vec![DisturbanceChannel::SpeedRate])
    }

    /// State derivative (x', y', theta', v') under control c and disturbance w.
    pub fn derivative(
        &self,
        s: &VehicleState,
        c: &ControlInput,
        w: &[f64],
    ) -> Result<[f64; STATE_DIM], DynamicsError> {
        if w.len() != self.channels.len() {
            return Err(DynamicsError::DimensionMismatch {
                expected: self.channels.len(),
                got: w.len(),
            });
        }
        let mut ds = [
            s.v * s.theta.cos(),
            s.v * s.theta.sin(),
            s.v / self.wheelbase * c.steer,
            c.accel,
        ];
        for (k, ch) in self.channels.iter().enumerate() {
            ds[ch.state_row()] += w[k];
        }
        Ok(ds)
    }

    /// Classical RK4 advance over dt with (c, w) held constant; the resulting
    /// speed is clamped at zero from below.
    pub fn step(
        &self,
        s: &VehicleState,
        c: &ControlInput,
        w: &[f64],
        dt: f64,
    ) -> Result<VehicleState, DynamicsError> {
        let k1 = self.derivative(s, c, w)?;
        let k2 = self.derivative(&offset(s, &k1, dt / 2.0), c, w)?;
        let k3 = self.derivative(&offset(s, &k2, dt / 2.0), c, w)?;
        let k4 = self.derivative(&offset(s, &k3, dt), c, w)?;
        let mut next = *s;
        let sixth = dt / 6.0;
        next.x += sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        next.y += sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        next.theta += sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]);
        next.v += sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]);
        if next.v < 0.0 {
            next.v = 0.0;
        }
        if !next.is_finite() {
            return Err(DynamicsError::NonFinite(next));
        }
        Ok(next)
    }

    /// f/g/d decomposition at state s (derivative = f + g (u,phi) + d w).
    pub fn affine_at(&self, s: &VehicleState) -> AffineDecomposition {
        let f = [s.v * s.theta.cos(), s.v * s.theta.sin(), 0.0, 0.0];
        let g = [
            [0.0, 0.0],
            [0.0, 0.0],
            [0.0, s.v / self.wheelbase],
            [1.0, 0.0],
        ];
        let d = self
            .channels
            .iter()
            .map(|ch| {
                let mut col = [0.0; STATE_DIM];
                col[ch.state_row()] = 1.0;
                col
            })
            .collect();
        AffineDecomposition { f, g, d }
    }
}

fn offset(s: &VehicleState, ds: &[f64; STATE_DIM], h: f64) -> VehicleState {
    VehicleState {
        x: s.x + h * ds[0],
        y: s.y + h * ds[1],
        theta: s.theta + h * ds[2],
        v: s.v + h * ds[3],
    }
}
