//! Closed-loop multi-vehicle simulation: per-step controller pipeline for
//! each controlled vehicle, scripted rollout for uncontrolled ones,
//! disturbance realization, lane-change event logic, logging, and auditing.
//!
//! Determinism: vehicles are processed in configuration order, random draws
//! come from a counter-based generator seeded per run, and every QP tie-break
//! is index-ordered — identical configurations and seeds reproduce logs
//! bitwise.

use crate::constraints::{
    build_cbf_rows, build_fxt_row, build_soft_rows, cbf_values, goal_clf, phi_reaction,
    soft_clf_values, ConstraintGains, ConstraintRow, FxTParams, MergingGeometry,
    NeighborKinematics, NeighborMotion, NeighborPositions, SafetyParams, SoftReferences, VarId,
};
use crate::dynamics::{
    ControlInput, DisturbancePolytope, DynamicsError, VehicleModel, VehicleState,
};
use crate::ocp::{solve_unconstrained, BoundarySpec, CubicTrajectory, OcpError};
use crate::qp::{assemble, ControlBounds, QpError, QpStatus, QpWeights};
use crate::reference::{map_position, ReferenceError, ReferenceSample};
use crate::scenario::{DisturbancePolicy, GoalConfig, Role, ScenarioConfig, ScenarioError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("vehicle {id}: reference trajectory: {source}")]
    Trajectory { id: String, source: OcpError },
    #[error("vehicle {id}: merge geometry: {message}")]
    Geometry { id: String, message: String },
    #[error("vehicle {id} at t={time}: reference mapping: {source}")]
    Reference { id: String, time: f64, source: ReferenceError },
    #[error("vehicle {id} at t={time}: step problem assembly: {source}")]
    Assembly { id: String, time: f64, source: QpError },
    #[error("vehicle {id} at t={time}: integration: {source}")]
    Dynamics { id: String, time: f64, source: DynamicsError },
}

/// Per-step outcome of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    /// Controller solved to optimality; its control was applied.
    Optimal,
    /// Step problem infeasible; fallback braking applied.
    Infeasible,
    /// Solver gave up; fallback braking applied.
    MaxIter,
    /// Scripted vehicle, no controller.
    Uncontrolled,
}

impl StepStatus {
    pub fn token(self) -> &'static str {
        match self {
            StepStatus::Optimal => "optimal",
            StepStatus::Infeasible => "infeasible",
            StepStatus::MaxIter => "max_iter",
            StepStatus::Uncontrolled => "none",
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, StepStatus::Infeasible | StepStatus::MaxIter)
    }
}

/// Everything the controller decided for one vehicle at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub control: ControlInput,
    pub status: StepStatus,
    pub reference: ReferenceSample,
    pub h_xp: Option<f64>,
    pub h_m: Option<f64>,
    pub h_vmin: f64,
    pub h_vmax: f64,
    /// Goal Lyapunov value (present whenever the vehicle has a goal).
    pub v_goal: Option<f64>,
    pub v_speed: f64,
    pub v_heading: f64,
    pub v_lateral: f64,
    /// Merging reaction-time coefficient at the current progress.
    pub phi_ramp: Option<f64>,
    /// Tracking slacks (speed, heading, lateral) at the optimum; zero on
    /// fallback.
    pub slacks: [f64; 3],
    /// Full problem dump, kept only for failed solves.
    pub dump: Option<String>,
}

/// One vehicle at one grid instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    /// Index into [`SimLog::ids`].
    pub vehicle: usize,
    pub state: VehicleState,
    /// Control applied over [time, time + dt).
    pub control: ControlInput,
    pub status: StepStatus,
    pub reference: Option<ReferenceSample>,
    pub h_xp: Option<f64>,
    pub h_m: Option<f64>,
    pub h_vmin: Option<f64>,
    pub h_vmax: Option<f64>,
    pub v_goal: Option<f64>,
    pub phi_ramp: Option<f64>,
    /// Disturbance realized over the step (zeros for uncontrolled vehicles).
    pub disturbance: Vec<f64>,
}

/// Problem dump of one failed controller solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureDump {
    pub time: f64,
    pub vehicle: usize,
    pub dump: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub scenario: String,
    pub dt: f64,
    pub ids: Vec<String>,
    pub roles: Vec<Role>,
    pub goals: Vec<Option<GoalConfig>>,
    /// Number of disturbance channels (w columns in the CSV).
    pub channel_count: usize,
    pub records: Vec<StepRecord>,
    /// Lane-change trigger time, if the gap ever cleared.
    pub trigger_time: Option<f64>,
    /// Populated when the run stopped early; the log is partial.
    pub abort: Option<String>,
    pub failures: Vec<FailureDump>,
}

/// Aggregate safety/convergence audit of one log.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyReport {
    pub min_h_xp: Option<f64>,
    pub min_h_m: Option<f64>,
    pub min_h_vmin: Option<f64>,
    pub min_h_vmax: Option<f64>,
    pub vehicles: Vec<VehicleAudit>,
    pub qp_failures: usize,
    pub trigger_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleAudit {
    pub id: String,
    /// |x(tf) - xf| at the grid point nearest the goal time.
    pub terminal_position_error: Option<f64>,
    pub terminal_speed_error: Option<f64>,
    /// Trapezoidal 1/2 integral of u^2 over the log.
    pub energy: f64,
    pub qp_failures: usize,
}

/// Run-time switches that do not belong in the scenario file.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed_override: Option<u64>,
    pub policy_override: Option<DisturbancePolicy>,
    /// Drop the worst-case disturbance terms from the constraint rows while
    /// still applying the disturbance to the plant — the deliberately
    /// non-robust variant used to demonstrate what the robustification buys.
    pub ablate_robustness: bool,
}

struct VehicleRuntime {
    trajectory: Option<CubicTrajectory>,
    geometry: Option<MergingGeometry>,
    merge_ahead: Option<usize>,
    /// Initial longitudinal position (progress origin).
    x0: f64,
    home_lane_center: f64,
}

/// Closed-loop simulation state; step it manually or drain with
/// [`Simulation::run_to_end`].
pub struct Simulation {
    cfg: ScenarioConfig,
    model: VehicleModel,
    fxt: FxTParams,
    safety: SafetyParams,
    gains: ConstraintGains,
    weights: QpWeights,
    bounds: ControlBounds,
    /// Disturbance box used for realization.
    w_real: DisturbancePolytope,
    /// Disturbance box used in constraint rows (zeroed under ablation).
    w_rows: DisturbancePolytope,
    policy: DisturbancePolicy,
    rng: ChaCha8Rng,
    runtimes: Vec<VehicleRuntime>,
    states: Vec<VehicleState>,
    time: f64,
    step_index: usize,
    n_steps: usize,
    trigger_time: Option<f64>,
    records: Vec<StepRecord>,
    failures: Vec<FailureDump>,
    abort: Option<String>,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Self, SimError> {
        cfg.validate()?;
        let model = VehicleModel::new(cfg.wheelbase, cfg.disturbance.channels.clone());
        let w_real = cfg.disturbance_box()?;
        let w_rows = if opts.ablate_robustness {
            DisturbancePolytope::zero(w_real.dim())
        } else {
            w_real.clone()
        };
        let safety = cfg.safety_params();
        let merge_point = cfg.ego_index().and_then(|e| cfg.vehicles[e].goal).map(|g| g.xf);

        let mut runtimes = Vec::with_capacity(cfg.vehicles.len());
        for v in &cfg.vehicles {
            let trajectory = match &v.goal {
                Some(goal) => Some(
                    solve_unconstrained(&BoundarySpec {
                        t0: 0.0,
                        tf: goal.tf,
                        x0: v.x,
                        xf: goal.xf,
                        v0: v.v,
                        vf: goal.vf,
                    })
                    .map_err(|source| SimError::Trajectory { id: v.id.clone(), source })?,
                ),
                None => None,
            };
            let (geometry, merge_ahead) = match &v.merge_ahead {
                Some(partner_id) => {
                    let point = merge_point.expect("validated: merge_ahead requires ego goal");
                    let partner = cfg
                        .vehicles
                        .iter()
                        .position(|o| &o.id == partner_id)
                        .expect("validated: partner exists");
                    let l_i = point - v.x;
                    if l_i <= 0.0 {
                        return Err(SimError::Geometry {
                            id: v.id.clone(),
                            message: format!(
                                "merge point {point} must lie ahead of initial position {}",
                                v.x
                            ),
                        });
                    }
                    let geom = MergingGeometry {
                        l_i,
                        l_ia: point - cfg.vehicles[partner].x,
                        v0: v.v,
                        phi_rt: safety.phi_rt,
                        eps: safety.eps,
                    };
                    (Some(geom), Some(partner))
                }
                None => (None, None),
            };
            runtimes.push(VehicleRuntime {
                trajectory,
                geometry,
                merge_ahead,
                x0: v.x,
                home_lane_center: cfg.lane_center(v.lane),
            });
        }

        let last_tf = cfg
            .vehicles
            .iter()
            .filter_map(|v| v.goal.map(|g| g.tf))
            .fold(0.0f64, f64::max);
        let n_steps = ((last_tf + cfg.extra_time) / cfg.dt).round() as usize;
        let seed = opts.seed_override.unwrap_or(cfg.disturbance.seed);
        let states = cfg.vehicles.iter().map(|v| v.initial_state()).collect();

        Ok(Self {
            model,
            fxt: cfg.fxt_params(),
            safety,
            gains: cfg.constraint_gains(),
            weights: cfg.qp_weights(),
            bounds: cfg.control_bounds(),
            w_real,
            w_rows,
            policy: opts.policy_override.unwrap_or(cfg.disturbance.policy),
            rng: ChaCha8Rng::seed_from_u64(seed),
            runtimes,
            states,
            time: 0.0,
            step_index: 0,
            n_steps,
            trigger_time: None,
            records: Vec::new(),
            failures: Vec::new(),
            abort: None,
            cfg: cfg.clone(),
        })
    }

    pub fn states(&self) -> &[VehicleState] {
        &self.states
    }

    fn lane_of(&self, i: usize) -> i32 {
        (self.states[i].y / self.cfg.lane_width).round() as i32
    }

    /// Nearest vehicle strictly ahead in the same (rounded) lane.
    fn preceding_of(&self, i: usize) -> Option<usize> {
        let lane = self.lane_of(i);
        let x = self.states[i].x;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.states.len() {
            if j == i || self.lane_of(j) != lane {
                continue;
            }
            let dx = self.states[j].x - x;
            if dx > 0.0 && best.map_or(true, |(_, b)| dx < b) {
                best = Some((j, dx));
            }
        }
        best.map(|(j, _)| j)
    }

    fn longitudinal_rate(&self, j: usize) -> f64 {
        self.states[j].v * self.states[j].theta.cos()
    }

    /// Dual-clearance lane-change condition: the ego's merging barrier is
    /// nonnegative and the target-gap follower could already stand behind the
    /// ego at full reaction-time headway.
    fn trigger_condition(&self) -> bool {
        let Some(e) = self.cfg.ego_index() else { return false };
        let Some(geom) = self.runtimes[e].geometry.as_ref() else { return false };
        let Some(partner) = self.runtimes[e].merge_ahead else { return false };
        let ego = &self.states[e];
        let values = cbf_values(
            ego,
            &NeighborPositions { preceding: None, adjacent: Some(self.states[partner].x) },
            Some(geom),
            &self.safety,
            ego.x - self.runtimes[e].x0,
        );
        let Some(h_m) = values.h_m else { return false };
        if h_m < 0.0 {
            return false;
        }
        let ego_id = &self.cfg.vehicles[e].id;
        let follower = self
            .cfg
            .vehicles
            .iter()
            .position(|v| v.role == Role::GapFollower && v.merge_ahead.as_ref() == Some(ego_id));
        match follower {
            None => true,
            Some(f) => {
                let s = &self.states[f];
                ego.x - s.x - self.safety.phi_rt * s.v - self.safety.eps >= 0.0
            }
        }
    }

    /// Lateral target of vehicle i: home lane center, or the ego's target
    /// lane center once the trigger has latched.
    fn y_des(&self, i: usize) -> f64 {
        let spec = &self.cfg.vehicles[i];
        if spec.role == Role::Ego && self.trigger_time.is_some() {
            if let Some(target) = spec.target_lane {
                return self.cfg.lane_center(target);
            }
        }
        self.runtimes[i].home_lane_center
    }

    /// Build and solve the step problem for controlled vehicle i against the
    /// current world snapshot. Read-only; does not advance the clock.
    pub fn controller_step(&self, i: usize) -> Result<ControlDecision, SimError> {
        let spec = &self.cfg.vehicles[i];
        let state = &self.states[i];
        let runtime = &self.runtimes[i];
        let id = || spec.id.clone();
        let traj = runtime
            .trajectory
            .as_ref()
            .expect("controller_step requires a controlled vehicle with a goal");
        let reference = map_position(traj, state.x)
            .map_err(|source| SimError::Reference { id: id(), time: self.time, source })?;

        let dynamics = self.model.affine_at(state);
        let goal = spec.goal.expect("controlled vehicles carry goals");
        let v_goal = goal_clf(state, goal.xf, self.fxt.p1);

        let mut rows: Vec<ConstraintRow> = Vec::new();
        // The goal row runs while the deadline is ahead and the state is
        // outside the goal set {V <= 0}; inside it, the forcing terms vanish
        // and the crossing dynamics would make the row spuriously infeasible.
        if self.time < goal.tf && v_goal > 0.0 {
            rows.extend(build_fxt_row(
                state,
                goal.xf,
                &self.fxt,
                &dynamics,
                &self.w_rows,
                self.time,
                goal.tf,
            ));
        }
        let refs = SoftReferences { v_ref: reference.v_ref, y_des: self.y_des(i) };
        rows.extend(build_soft_rows(state, &refs, &self.gains, &dynamics, &self.w_rows));

        let progress = state.x - runtime.x0;
        let neighbors = NeighborKinematics {
            preceding: self.preceding_of(i).map(|j| NeighborMotion {
                x: self.states[j].x,
                rate: self.longitudinal_rate(j),
            }),
            adjacent: runtime.merge_ahead.map(|j| NeighborMotion {
                x: self.states[j].x,
                rate: self.longitudinal_rate(j),
            }),
        };
        rows.extend(build_cbf_rows(
            state,
            &neighbors,
            runtime.geometry.as_ref(),
            &self.safety,
            &dynamics,
            &self.w_rows,
            progress,
        ));

        let problem = assemble(
            &rows,
            reference.u_ref,
            &self.bounds,
            &self.weights,
            self.gains.delta_max,
        )
        .map_err(|source| SimError::Assembly { id: id(), time: self.time, source })?;
        let sol = problem.solve();

        let positions = NeighborPositions {
            preceding: neighbors.preceding.map(|n| n.x),
            adjacent: neighbors.adjacent.map(|n| n.x),
        };
        let values =
            cbf_values(state, &positions, runtime.geometry.as_ref(), &self.safety, progress);
        let (v_speed, v_heading, v_lateral) = soft_clf_values(state, refs.v_ref, refs.y_des);

        let (control, status, slacks, dump) = match sol.status {
            QpStatus::Optimal => {
                let du = sol.value(VarId::ControlAccel).unwrap_or(0.0);
                let steer = sol.value(VarId::ControlSteer).unwrap_or(0.0);
                let slack = |kind| sol.value(VarId::Slack(kind)).unwrap_or(0.0);
                use crate::constraints::ConstraintKind::*;
                (
                    ControlInput::new(reference.u_ref + du, steer),
                    StepStatus::Optimal,
                    [slack(SpeedRef), slack(Heading), slack(LateralPos)],
                    None,
                )
            }
            QpStatus::Infeasible | QpStatus::MaxIter => {
                let status = if sol.status == QpStatus::Infeasible {
                    StepStatus::Infeasible
                } else {
                    StepStatus::MaxIter
                };
                (
                    ControlInput::new(self.bounds.u_min, 0.0),
                    status,
                    [0.0; 3],
                    Some(problem.debug_dump(&sol)),
                )
            }
        };

        Ok(ControlDecision {
            control,
            status,
            reference,
            h_xp: values.h_xp,
            h_m: values.h_m,
            h_vmin: values.h_vmin,
            h_vmax: values.h_vmax,
            v_goal: Some(v_goal),
            v_speed,
            v_heading,
            v_lateral,
            phi_ramp: runtime.geometry.as_ref().map(|g| phi_reaction(g, progress)),
            slacks,
            dump,
        })
    }

    /// Disturbance realization for this step, one vector per vehicle
    /// (zeros for uncontrolled vehicles).
    fn realize_disturbance(&mut self) -> Vec<Vec<f64>> {
        let dim = self.w_real.dim();
        let zeros = vec![0.0; dim];
        let mut out = vec![zeros.clone(); self.cfg.vehicles.len()];
        match self.policy {
            DisturbancePolicy::Zero => {}
            DisturbancePolicy::Random => {
                for (i, v) in self.cfg.vehicles.iter().enumerate() {
                    if !v.is_controlled() {
                        continue;
                    }
                    for c in 0..dim {
                        out[i][c] =
                            self.rng.gen_range(self.w_real.lower()[c]..=self.w_real.upper()[c]);
                    }
                }
            }
            DisturbancePolicy::WorstCorner => {
                // Attack the controlled vehicle with the tightest rear gap:
                // pick the box corner minimizing the disturbance term of its
                // barrier derivative, and apply it to every controlled
                // vehicle.
                let mut tightest: Option<(f64, usize)> = None;
                for i in 0..self.cfg.vehicles.len() {
                    if !self.cfg.vehicles[i].is_controlled() {
                        continue;
                    }
                    if let Some(j) = self.preceding_of(i) {
                        let s = &self.states[i];
                        let h =
                            self.states[j].x - s.x - self.safety.phi_rt * s.v - self.safety.eps;
                        if tightest.map_or(true, |(best, _)| h < best) {
                            tightest = Some((h, i));
                        }
                    }
                }
                if tightest.is_some() {
                    let grad = crate::constraints::preceding_gap_gradient(&self.safety);
                    let mut corner = vec![0.0; dim];
                    for (c, ch) in self.model.channels.iter().enumerate() {
                        let ld = grad[ch.state_row()];
                        corner[c] = if ld > 0.0 {
                            self.w_real.lower()[c]
                        } else if ld < 0.0 {
                            self.w_real.upper()[c]
                        } else {
                            0.0
                        };
                    }
                    for (i, v) in self.cfg.vehicles.iter().enumerate() {
                        if v.is_controlled() {
                            out[i] = corner.clone();
                        }
                    }
                }
            }
        }
        out
    }

    /// Decide all controls at the current instant, log the step, and (unless
    /// this was the final grid point) integrate to the next one. Returns false
    /// when the run is over or aborted.
    pub fn advance(&mut self) -> bool {
        if self.abort.is_some() || self.step_index > self.n_steps {
            return false;
        }
        if self.trigger_time.is_none() && self.trigger_condition() {
            self.trigger_time = Some(self.time);
        }
        let disturbance = self.realize_disturbance();

        let mut controls: Vec<ControlInput> = Vec::with_capacity(self.cfg.vehicles.len());
        for i in 0..self.cfg.vehicles.len() {
            let spec = &self.cfg.vehicles[i];
            if spec.is_controlled() {
                match self.controller_step(i) {
                    Ok(decision) => {
                        if let Some(dump) = &decision.dump {
                            self.failures.push(FailureDump {
                                time: self.time,
                                vehicle: i,
                                dump: dump.clone(),
                            });
                        }
                        self.records.push(StepRecord {
                            time: self.time,
                            vehicle: i,
                            state: self.states[i],
                            control: decision.control,
                            status: decision.status,
                            reference: Some(decision.reference),
                            h_xp: decision.h_xp,
                            h_m: decision.h_m,
                            h_vmin: Some(decision.h_vmin),
                            h_vmax: Some(decision.h_vmax),
                            v_goal: decision.v_goal,
                            phi_ramp: decision.phi_ramp,
                            disturbance: disturbance[i].clone(),
                        });
                        controls.push(decision.control);
                    }
                    Err(err) => {
                        self.abort = Some(err.to_string());
                        return false;
                    }
                }
            } else {
                let accel = spec.profile.map_or(0.0, |p| p.accel_at(self.time));
                let control = ControlInput::new(accel, 0.0);
                self.records.push(StepRecord {
                    time: self.time,
                    vehicle: i,
                    state: self.states[i],
                    control,
                    status: StepStatus::Uncontrolled,
                    reference: None,
                    h_xp: None,
                    h_m: None,
                    h_vmin: None,
                    h_vmax: None,
                    v_goal: None,
                    phi_ramp: None,
                    disturbance: disturbance[i].clone(),
                });
                controls.push(control);
            }
        }

        if self.step_index == self.n_steps {
            self.step_index += 1;
            return false;
        }
        for i in 0..self.states.len() {
            let w = if self.cfg.vehicles[i].is_controlled() {
                disturbance[i].clone()
            } else {
                vec![0.0; self.w_real.dim()]
            };
            match self.model.step(&self.states[i], &controls[i], &w, self.cfg.dt) {
                Ok(next) => self.states[i] = next,
                Err(source) => {
                    self.abort = Some(
                        SimError::Dynamics {
                            id: self.cfg.vehicles[i].id.clone(),
                            time: self.time,
                            source,
                        }
                        .to_string(),
                    );
                    return false;
                }
            }
        }
        self.step_index += 1;
        self.time = self.step_index as f64 * self.cfg.dt;
        true
    }

    pub fn run_to_end(mut self) -> SimLog {
        while self.advance() {}
        self.into_log()
    }

    pub fn into_log(self) -> SimLog {
        SimLog {
            scenario: self.cfg.name.clone(),
            dt: self.cfg.dt,
            ids: self.cfg.vehicles.iter().map(|v| v.id.clone()).collect(),
            roles: self.cfg.vehicles.iter().map(|v| v.role).collect(),
            goals: self.cfg.vehicles.iter().map(|v| v.goal).collect(),
            channel_count: self.w_real.dim(),
            records: self.records,
            trigger_time: self.trigger_time,
            abort: self.abort,
            failures: self.failures,
        }
    }
}

/// Run a scenario to completion. Setup errors are returned; errors during the
/// run stop it early and are recorded in [`SimLog::abort`] with the partial
/// log preserved.
pub fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<SimLog, SimError> {
    Ok(Simulation::new(cfg, opts)?.run_to_end())
}

/// Derive the safety/convergence report from a log.
pub fn audit(log: &SimLog) -> SafetyReport {
    let fold_min = |acc: Option<f64>, v: Option<f64>| match (acc, v) {
        (None, v) => v,
        (acc, None) => acc,
        (Some(a), Some(b)) => Some(a.min(b)),
    };
    let mut min_h_xp = None;
    let mut min_h_m = None;
    let mut min_h_vmin = None;
    let mut min_h_vmax = None;
    for r in &log.records {
        if r.status == StepStatus::Uncontrolled {
            continue;
        }
        min_h_xp = fold_min(min_h_xp, r.h_xp);
        min_h_m = fold_min(min_h_m, r.h_m);
        min_h_vmin = fold_min(min_h_vmin, r.h_vmin);
        min_h_vmax = fold_min(min_h_vmax, r.h_vmax);
    }

    let mut vehicles = Vec::new();
    let mut total_failures = 0usize;
    for (i, id) in log.ids.iter().enumerate() {
        if log.roles[i] == Role::Uncontrolled {
            continue;
        }
        let records: Vec<&StepRecord> =
            log.records.iter().filter(|r| r.vehicle == i).collect();
        let qp_failures = records.iter().filter(|r| r.status.is_failure()).count();
        total_failures += qp_failures;

        // Trapezoidal 1/2 integral of u^2 on the uniform grid.
        let mut energy = 0.0;
        for pair in records.windows(2) {
            let u0 = pair[0].control.accel;
            let u1 = pair[1].control.accel;
            energy += 0.25 * (u0 * u0 + u1 * u1) * log.dt;
        }

        let (terminal_position_error, terminal_speed_error) = match log.goals[i] {
            Some(goal) => {
                let k = (goal.tf / log.dt).round() as usize;
                match records.iter().find(|r| (r.time / log.dt).round() as usize == k) {
                    Some(r) => {
                        (Some((r.state.x - goal.xf).abs()), Some((r.state.v - goal.vf).abs()))
                    }
                    None => (None, None),
                }
            }
            None => (None, None),
        };
        vehicles.push(VehicleAudit {
            id: id.clone(),
            terminal_position_error,
            terminal_speed_error,
            energy,
            qp_failures,
        });
    }

    SafetyReport {
        min_h_xp,
        min_h_m,
        min_h_vmin,
        min_h_vmax,
        vehicles,
        qp_failures: total_failures,
        trigger_time: log.trigger_time,
    }
}

/// Render a log as CSV with a frozen column set:
/// `time,id,x,y,theta,v,u,phi,h_xp,h_m,h_vmin,h_vmax,V_xf,qp_status,w0..`.
/// Floats use the shortest round-trip representation; absent values are empty.
pub fn write_csv(log: &SimLog) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    out.push_str("time,id,x,y,theta,v,u,phi,h_xp,h_m,h_vmin,h_vmax,V_xf,qp_status");
    for c in 0..log.channel_count {
        let _ = write!(out, ",w{c}");
    }
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &log.records {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.time,
            log.ids[r.vehicle],
            r.state.x,
            r.state.y,
            r.state.theta,
            r.state.v,
            r.control.accel,
            r.control.steer
        );
        let _ = write!(
            out,
            ",{},{},{},{},{},{}",
            opt(r.h_xp),
            opt(r.h_m),
            opt(r.h_vmin),
            opt(r.h_vmax),
            opt(r.v_goal),
            r.status.token()
        );
        for c in 0..log.channel_count {
            let _ = write!(out, ",{}", r.disturbance.get(c).copied().unwrap_or(0.0));
        }
        out.push('\n');
    }
    out
}
