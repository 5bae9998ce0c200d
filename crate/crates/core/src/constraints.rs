//! CLF/CBF values and their linear constraint rows over the controller's
//! decision vector, including the fixed-time gain schedule, the merging
//! reaction-time ramp, and the LP-duality embedding of polytopic disturbances.
//!
//! Every row is linear in the decision variables: state-dependent scalars
//! (Lyapunov/barrier values, Lie derivatives, gain powers) are folded into
//! coefficients and right-hand sides at build time.

use crate::dynamics::{AffineDecomposition, DisturbancePolytope, VehicleState, STATE_DIM};
use std::f64::consts::PI;

/// Constraint families; doubles as the key for per-family decision variables
/// (relaxation gains, tracking slacks, dual vectors).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConstraintKind {
    /// Fixed-time convergence to the terminal position (goal CLF).
    GoalPos,
    /// Reference-speed tracking CLF.
    SpeedRef,
    /// Heading-regulation CLF.
    Heading,
    /// Lateral-position tracking CLF.
    LateralPos,
    /// Gap to the immediately preceding same-lane vehicle (CBF).
    PrecedingGap,
    /// Safe-merging gap to the adjacent-lane vehicle (CBF).
    MergingGap,
    /// Minimum-speed CBF.
    SpeedFloor,
    /// Maximum-speed CBF.
    SpeedCeil,
}

impl ConstraintKind {
    pub const fn tag(self) -> &'static str {
        match self {
            ConstraintKind::GoalPos => "goal_pos",
            ConstraintKind::SpeedRef => "speed_ref",
            ConstraintKind::Heading => "heading",
            ConstraintKind::LateralPos => "lateral_pos",
            ConstraintKind::PrecedingGap => "preceding_gap",
            ConstraintKind::MergingGap => "merging_gap",
            ConstraintKind::SpeedFloor => "speed_floor",
            ConstraintKind::SpeedCeil => "speed_ceil",
        }
    }

    /// Sign restriction of this family's dual vector: CLF rows embed a
    /// supremum (dual >= 0), CBF rows an infimum (dual <= 0).
    pub const fn dual_sign(self) -> DualSign {
        match self {
            ConstraintKind::GoalPos
            | ConstraintKind::SpeedRef
            | ConstraintKind::Heading
            | ConstraintKind::LateralPos => DualSign::NonNegative,
            ConstraintKind::PrecedingGap
            | ConstraintKind::MergingGap
            | ConstraintKind::SpeedFloor
            | ConstraintKind::SpeedCeil => DualSign::NonPositive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualSign {
    NonNegative,
    NonPositive,
}

/// One decision variable of the per-step QP.
///
/// The `Ord` derive fixes the canonical decision-vector ordering:
/// controls, then relaxation gains, then tracking slacks, then duals,
/// then auxiliary test variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarId {
    /// Deviation u - u_ref of the longitudinal acceleration.
    ControlAccel,
    /// Steering command phi.
    ControlSteer,
    /// Relaxation gain delta of one CLF/CBF row.
    Delta(ConstraintKind),
    /// Nonnegative tracking slack e of one soft CLF row.
    Slack(ConstraintKind),
    /// Component of one family's dual vector.
    Dual(ConstraintKind, u8),
    /// Free auxiliary variable (tests and oracles).
    Aux(u16),
}

impl VarId {
    pub fn label(self) -> String {
        match self {
            VarId::ControlAccel => "du".to_string(),
            VarId::ControlSteer => "phi".to_string(),
            VarId::Delta(k) => format!("delta_{}", k.tag()),
            VarId::Slack(k) => format!("e_{}", k.tag()),
            VarId::Dual(k, i) => format!("dual_{}_{}", k.tag(), i),
            VarId::Aux(i) => format!("aux_{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

/// One linear constraint over decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    /// Sparse coefficients, kept sorted by variable id.
    pub coeffs: Vec<(VarId, f64)>,
    pub rhs: f64,
    pub sense: RowSense,
    pub tag: String,
}

impl ConstraintRow {
    pub fn new(tag: impl Into<String>, sense: RowSense, rhs: f64) -> Self {
        Self { coeffs: Vec::new(), rhs, sense, tag: tag.into() }
    }

    /// Add (or accumulate onto) a coefficient, keeping the sorted order.
    pub fn push(&mut self, var: VarId, coeff: f64) {
        match self.coeffs.binary_search_by(|(v, _)| v.cmp(&var)) {
            Ok(i) => self.coeffs[i].1 += coeff,
            Err(i) => self.coeffs.insert(i, (var, coeff)),
        }
    }

    pub fn coeff(&self, var: VarId) -> f64 {
        self.coeffs
            .binary_search_by(|(v, _)| v.cmp(&var))
            .map(|i| self.coeffs[i].1)
            .unwrap_or(0.0)
    }
}

/// Parameters of the fixed-time convergence schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FxTParams {
    /// Exponent parameter mu > 1.
    pub mu: f64,
    /// Floor on the remaining-time horizon [s].
    pub t_min: f64,
    /// Goal-CLF gain p1 [1/s].
    pub p1: f64,
}

impl Default for FxTParams {
    fn default() -> Self {
        Self { mu: 5.0, t_min: 0.1, p1: 2.0 }
    }
}

/// Gains of the fixed-time goal row at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FxTGains {
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub t_ud: f64,
}

/// Gain schedule: T_ud = max(T_min, tf_star - t), alpha_1 = alpha_2 =
/// mu*pi/(2 T_ud), gamma_1 = 1 + 1/mu, gamma_2 = 1 - 1/mu. The floor keeps the
/// gains finite past the deadline.
pub fn fxt_gains(p: &FxTParams, t: f64, tf_star: f64) -> FxTGains {
    let t_ud = p.t_min.max(tf_star - t);
    let alpha = p.mu * PI / (2.0 * t_ud);
    FxTGains {
        alpha1: alpha,
        alpha2: alpha,
        gamma1: 1.0 + 1.0 / p.mu,
        gamma2: 1.0 - 1.0 / p.mu,
        t_ud,
    }
}

/// Goal CLF V = p1 (x - x_f)^2 + 2 v cos(theta) (x - x_f).
///
/// The linear term makes {V <= 0} a goal set entered shortly before x_f on the
/// approach; V may therefore be negative.
pub fn goal_clf(s: &VehicleState, x_f: f64, p1: f64) -> f64 {
    let dx = s.x - x_f;
    p1 * dx * dx + 2.0 * s.v * s.theta.cos() * dx
}

/// Analytic state gradient of [`goal_clf`].
pub fn goal_clf_gradient(s: &VehicleState, x_f: f64, p1: f64) -> [f64; STATE_DIM] {
    let dx = s.x - x_f;
    [
        2.0 * p1 * dx + 2.0 * s.v * s.theta.cos(),
        0.0,
        -2.0 * s.v * s.theta.sin() * dx,
        2.0 * s.theta.cos() * dx,
    ]
}

/// Fixed-time goal row plus its dual-equality rows.
///
/// Main row (<=):  L_gV (u,phi) - V delta_goal + b'lambda
///                   <= -L_fV - alpha1 max(0,V)^gamma1 - alpha2 max(0,V)^gamma2
///
/// The relaxation gain enters with coefficient -V so that, with
/// delta in [0, delta_max], growing delta loosens the row when V > 0; this is
/// what lets the controller stay feasible far from the goal, where the
/// alpha-powers exceed any bounded control authority.
pub fn build_fxt_row(
    s: &VehicleState,
    x_f: f64,
    p: &FxTParams,
    dynamics: &AffineDecomposition,
    w: &DisturbancePolytope,
    t: f64,
    tf_star: f64,
) -> Vec<ConstraintRow> {
    let v_goal = goal_clf(s, x_f, p.p1);
    let grad = goal_clf_gradient(s, x_f, p.p1);
    let lf = dynamics.lie_f(&grad);
    let lg = dynamics.lie_g(&grad);
    let ld = dynamics.lie_d(&grad);
    let gains = fxt_gains(p, t, tf_star);
    let forcing = gains.alpha1 * v_goal.max(0.0).powf(gains.gamma1)
        + gains.alpha2 * v_goal.max(0.0).powf(gains.gamma2);

    let dual = dualize(DualDirection::Sup, &ld, w, ConstraintKind::GoalPos);
    let mut row = ConstraintRow::new(ConstraintKind::GoalPos.tag(), RowSense::Le, -lf - forcing);
    row.push(VarId::ControlAccel, lg[0]);
    row.push(VarId::ControlSteer, lg[1]);
    row.push(VarId::Delta(ConstraintKind::GoalPos), -v_goal);
    for (var, coeff) in dual.value_coeffs {
        row.push(var, coeff);
    }
    let mut rows = vec![row];
    rows.extend(dual.equality_rows);
    rows
}

/// Per-row rates and bounds of the soft/relaxed constraint set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintGains {
    /// CLF decrease rate for reference-speed tracking [1/s].
    pub eps_speed_ref: f64,
    /// CLF decrease rate for heading regulation [1/s].
    pub eps_heading: f64,
    /// CLF decrease rate for lateral-position tracking [1/s].
    pub eps_lateral: f64,
    /// Upper bound on every relaxation gain delta. Two sizing constraints
    /// meet here: the goal row needs the cap to exceed
    /// alpha1·V^(gamma1-1) + alpha2·V^(gamma2-1) along the approach, while
    /// the barrier rows need delta_max·dt <= 1 or a sampled-data step can
    /// legally overshoot a barrier below zero. When both row families are
    /// live in one scenario, shrink the goal gain p1 until the goal row fits
    /// under the barrier-safe cap; raise the cap instead only when no
    /// barrier can bind.
    pub delta_max: f64,
}

impl Default for ConstraintGains {
    fn default() -> Self {
        Self { eps_speed_ref: 1.0, eps_heading: 1.0, eps_lateral: 1.0, delta_max: 10.0 }
    }
}

/// Tracking targets of the soft CLF rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftReferences {
    pub v_ref: f64,
    pub y_des: f64,
}

/// Soft CLF values: ((v - v_ref)^2, theta^2, (y - y_des)^2).
pub fn soft_clf_values(s: &VehicleState, v_ref: f64, y_des: f64) -> (f64, f64, f64) {
    let dv = s.v - v_ref;
    let dy = s.y - y_des;
    (dv * dv, s.theta * s.theta, dy * dy)
}

/// Analytic state gradients of the three soft CLFs, in the order of
/// [`soft_clf_values`].
pub fn soft_clf_gradients(s: &VehicleState, v_ref: f64, y_des: f64) -> [[f64; STATE_DIM]; 3] {
    [
        [0.0, 0.0, 0.0, 2.0 * (s.v - v_ref)],
        [0.0, 0.0, 2.0 * s.theta, 0.0],
        [0.0, 2.0 * (s.y - y_des), 0.0, 0.0],
    ]
}

/// Soft CLF rows, one per objective, each with slack e_j >= 0:
///
///   L_gV_j (u,phi) - e_j + b'lambda_j <= -L_fV_j - eps_j V_j
pub fn build_soft_rows(
    s: &VehicleState,
    refs: &SoftReferences,
    gains: &ConstraintGains,
    dynamics: &AffineDecomposition,
    w: &DisturbancePolytope,
) -> Vec<ConstraintRow> {
    let (v_speed, v_heading, v_lateral) = soft_clf_values(s, refs.v_ref, refs.y_des);
    let grads = soft_clf_gradients(s, refs.v_ref, refs.y_des);
    let entries: [(ConstraintKind, f64, f64, [f64; STATE_DIM]); 3] = [
        (ConstraintKind::SpeedRef, v_speed, gains.eps_speed_ref, grads[0]),
        (ConstraintKind::Heading, v_heading, gains.eps_heading, grads[1]),
        (ConstraintKind::LateralPos, v_lateral, gains.eps_lateral, grads[2]),
    ];
    let mut rows = Vec::new();
    for (kind, value, eps, grad) in entries {
        let lf = dynamics.lie_f(&grad);
        let lg = dynamics.lie_g(&grad);
        let ld = dynamics.lie_d(&grad);
        let dual = dualize(DualDirection::Sup, &ld, w, kind);
        let mut row = ConstraintRow::new(kind.tag(), RowSense::Le, -lf - eps * value);
        row.push(VarId::ControlAccel, lg[0]);
        row.push(VarId::ControlSteer, lg[1]);
        row.push(VarId::Slack(kind), -1.0);
        for (var, coeff) in dual.value_coeffs {
            row.push(var, coeff);
        }
        rows.push(row);
        rows.extend(dual.equality_rows);
    }
    rows
}

/// Geometry of one merging pair, frozen at maneuver start t0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergingGeometry {
    /// Distance from the ego's t0 position to the lane-change terminal
    /// position [m].
    pub l_i: f64,
    /// Distance from the adjacent vehicle's t0 position to the same terminal
    /// position [m].
    pub l_ia: f64,
    /// Ego speed at t0 [m/s].
    pub v0: f64,
    /// Steady-state reaction time phi [s].
    pub phi_rt: f64,
    /// Standstill margin epsilon [m].
    pub eps: f64,
}

impl MergingGeometry {
    /// Initial reaction-time offset K = (L_ia - L_i + eps) / v0 [s].
    pub fn offset(&self) -> f64 {
        (self.l_ia - self.l_i + self.eps) / self.v0
    }

    /// Slope of the reaction-time ramp [s/m].
    pub fn slope(&self) -> f64 {
        (self.phi_rt + self.offset()) / self.l_i
    }
}

/// Position-dependent reaction time Phi(progress) = (phi + K) progress / L_i - K
/// with progress = x_i(t) - x_i(t0).
///
/// Evaluating on progress (rather than absolute position) makes Phi(0) cancel
/// the initial gap exactly — the merging barrier starts at zero — and
/// Phi(L_i) = phi restores the full reaction time at maneuver completion.
pub fn phi_reaction(geom: &MergingGeometry, progress: f64) -> f64 {
    (geom.phi_rt + geom.offset()) * progress / geom.l_i - geom.offset()
}

/// Speed/acceleration envelope and headway parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyParams {
    /// Reaction time phi of the rear-gap barrier [s].
    pub phi_rt: f64,
    /// Standstill margin epsilon [m].
    pub eps: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self { phi_rt: 0.6, eps: 2.0, v_min: 0.0, v_max: 35.0, u_min: -5.0, u_max: 5.0 }
    }
}

/// Positions of the vehicles a barrier references.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NeighborPositions {
    /// x of the immediately preceding same-lane vehicle, if any.
    pub preceding: Option<f64>,
    /// x of the adjacent-lane vehicle of the merging pair, if any.
    pub adjacent: Option<f64>,
}

/// Neighbor positions plus their known longitudinal rates (exogenous terms of
/// the barrier derivatives).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NeighborKinematics {
    pub preceding: Option<NeighborMotion>,
    pub adjacent: Option<NeighborMotion>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborMotion {
    pub x: f64,
    /// Current x-rate of the neighbor [m/s].
    pub rate: f64,
}

/// Barrier values at one state. Absent neighbors yield `None` (their rows are
/// omitted rather than built from infinite positions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfValues {
    pub h_xp: Option<f64>,
    pub h_m: Option<f64>,
    pub h_vmin: f64,
    pub h_vmax: f64,
}

/// Evaluate the four barriers:
/// h_xp = x_prec - x - phi v - eps, h_m = x_adj - x - Phi(progress) v - eps,
/// h_vmin = v - v_min, h_vmax = v_max - v.
pub fn cbf_values(
    s: &VehicleState,
    neighbors: &NeighborPositions,
    geom: Option<&MergingGeometry>,
    params: &SafetyParams,
    progress: f64,
) -> CbfValues {
    let h_xp = neighbors.preceding.map(|xp| xp - s.x - params.phi_rt * s.v - params.eps);
    let h_m = match (neighbors.adjacent, geom) {
        (Some(xa), Some(g)) => Some(xa - s.x - phi_reaction(g, progress) * s.v - g.eps),
        _ => None,
    };
    CbfValues {
        h_xp,
        h_m,
        h_vmin: s.v - params.v_min,
        h_vmax: params.v_max - s.v,
    }
}

/// Ego-state gradient of the rear-gap barrier.
pub fn preceding_gap_gradient(params: &SafetyParams) -> [f64; STATE_DIM] {
    [-1.0, 0.0, 0.0, -params.phi_rt]
}

/// Ego-state gradient of the merging barrier; the ramp's position dependence
/// contributes -Phi'(progress) v to the x component.
pub fn merging_gap_gradient(
    s: &VehicleState,
    geom: &MergingGeometry,
    progress: f64,
) -> [f64; STATE_DIM] {
    [-1.0 - geom.slope() * s.v, 0.0, 0.0, -phi_reaction(geom, progress)]
}

/// CBF rows, one per available barrier, each with relaxation gain delta_j:
///
///   L_gh_j (u,phi) + h_j delta_j + b'mu_j >= -L_fh_j - (neighbor rate)
///
/// b'mu_j sits on the constrained side so the QP drives it up to the
/// infimum of the disturbance term (weak duality caps it there): the row
/// then guarantees hdot >= -delta_j h_j under the worst admissible
/// disturbance. With the opposite sign the dual would be free to loosen
/// the row without bound at regularization-only cost.
pub fn build_cbf_rows(
    s: &VehicleState,
    neighbors: &NeighborKinematics,
    geom: Option<&MergingGeometry>,
    params: &SafetyParams,
    dynamics: &AffineDecomposition,
    w: &DisturbancePolytope,
    progress: f64,
) -> Vec<ConstraintRow> {
    let positions = NeighborPositions {
        preceding: neighbors.preceding.map(|n| n.x),
        adjacent: neighbors.adjacent.map(|n| n.x),
    };
    let values = cbf_values(s, &positions, geom, params, progress);

    struct Barrier {
        kind: ConstraintKind,
        h: f64,
        grad: [f64; STATE_DIM],
        exo_rate: f64,
    }
    let mut barriers = Vec::with_capacity(4);
    if let (Some(h), Some(n)) = (values.h_xp, neighbors.preceding) {
        barriers.push(Barrier {
            kind: ConstraintKind::PrecedingGap,
            h,
            grad: preceding_gap_gradient(params),
            exo_rate: n.rate,
        });
    }
    if let (Some(h), Some(n), Some(g)) = (values.h_m, neighbors.adjacent, geom) {
        barriers.push(Barrier {
            kind: ConstraintKind::MergingGap,
            h,
            grad: merging_gap_gradient(s, g, progress),
            exo_rate: n.rate,
        });
    }
    barriers.push(Barrier {
        kind: ConstraintKind::SpeedFloor,
        h: values.h_vmin,
        grad: [0.0, 0.0, 0.0, 1.0],
        exo_rate: 0.0,
    });
    barriers.push(Barrier {
        kind: ConstraintKind::SpeedCeil,
        h: values.h_vmax,
        grad: [0.0, 0.0, 0.0, -1.0],
        exo_rate: 0.0,
    });

    let mut rows = Vec::new();
    for barrier in barriers {
        let lf = dynamics.lie_f(&barrier.grad);
        let lg = dynamics.lie_g(&barrier.grad);
        let ld = dynamics.lie_d(&barrier.grad);
        let dual = dualize(DualDirection::Inf, &ld, w, barrier.kind);
        let mut row =
            ConstraintRow::new(barrier.kind.tag(), RowSense::Ge, -lf - barrier.exo_rate);
        row.push(VarId::ControlAccel, lg[0]);
        row.push(VarId::ControlSteer, lg[1]);
        row.push(VarId::Delta(barrier.kind), barrier.h);
        for (var, coeff) in dual.value_coeffs {
            row.push(var, coeff);
        }
        rows.push(row);
        rows.extend(dual.equality_rows);
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualDirection {
    Sup,
    Inf,
}

/// Dual-LP embedding of a worst-case disturbance term.
#[derive(Debug, Clone, PartialEq)]
pub struct DualizedTerm {
    /// Rows A' dual = c pinning the dual vector to the gradient.
    pub equality_rows: Vec<ConstraintRow>,
    /// Sign restriction of the dual vector (a variable bound, not a row).
    pub sign: DualSign,
    /// The value term b' dual as (variable, coefficient) pairs, to be embedded
    /// in the parent row by the caller.
    pub value_coeffs: Vec<(VarId, f64)>,
}

/// Replace sup/inf over { w : A w <= b } of c·w by its LP dual:
/// sup -> min b'lambda over A'lambda = c, lambda >= 0;
/// inf -> max b'mu over A'mu = c, mu <= 0.
///
/// The enclosing QP carries the dual as near-costless variables, so the value
/// term settles at the true supremum/infimum along the equality manifold.
/// Boundedness of W is a construction invariant of [`DisturbancePolytope`],
/// which keeps both duals feasible for every gradient c.
pub fn dualize(
    direction: DualDirection,
    c: &[f64],
    w: &DisturbancePolytope,
    kind: ConstraintKind,
) -> DualizedTerm {
    debug_assert_eq!(c.len(), w.dim(), "gradient length must match disturbance dimension");
    let expected = match direction {
        DualDirection::Sup => DualSign::NonNegative,
        DualDirection::Inf => DualSign::NonPositive,
    };
    debug_assert_eq!(kind.dual_sign(), expected, "dual sign must match the direction");

    let mut equality_rows = Vec::with_capacity(w.dim());
    for i in 0..w.dim() {
        let mut row =
            ConstraintRow::new(format!("dual_{}_{}", kind.tag(), i), RowSense::Eq, c[i]);
        for k in 0..w.rows() {
            let coeff = w.a()[k][i];
            if coeff != 0.0 {
                row.push(VarId::Dual(kind, k as u8), coeff);
            }
        }
        equality_rows.push(row);
    }
    let value_coeffs = w
        .b()
        .iter()
        .enumerate()
        .map(|(k, &bk)| (VarId::Dual(kind, k as u8), bk))
        .collect();
    DualizedTerm { equality_rows, sign: expected, value_coeffs }
}
