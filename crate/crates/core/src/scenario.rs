//! Scenario configuration: TOML schema, validation, and canonical
//! serialization.
//!
//! A scenario file fully determines a simulation: vehicles with roles and
//! terminal goals, the disturbance model and policy, controller gains and
//! weights, and the time grid. Serialization is canonical — parsing a
//! canonically formatted file and re-serializing it reproduces the bytes —
//! so golden configs and `validate --echo` round-trips are byte-stable.

use crate::constraints::{ConstraintGains, FxTParams, SafetyParams};
use crate::dynamics::{DisturbanceChannel, DisturbancePolytope, DynamicsError, VehicleState};
use crate::qp::{ControlBounds, QpWeights};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid disturbance box: {0}")]
    Disturbance(#[from] DynamicsError),
}

/// How each controlled vehicle participates in the maneuver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// The lane-changing vehicle: tracks a terminal goal, watches the target
    /// gap, and switches its lateral target once the gap clears.
    Ego,
    /// Controlled vehicle following its own reference; no merging row.
    Cooperative,
    /// Controlled vehicle that will end up immediately behind the ego in the
    /// target lane; carries a merging row against the ego.
    GapFollower,
    /// Scripted vehicle: fixed acceleration profile, no controller.
    Uncontrolled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbancePolicy {
    /// w = 0 every step.
    Zero,
    /// Uniform per-step, per-vehicle draw inside the box.
    Random,
    /// Per-step box corner chosen to attack the tightest rear-gap barrier.
    WorstCorner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub policy: DisturbancePolicy,
    pub channels: Vec<DisturbanceChannel>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub seed: u64,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            policy: DisturbancePolicy::Zero,
            channels: vec![DisturbanceChannel::SpeedRate],
            lower: vec![0.0],
            upper: vec![0.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FxtConfig {
    pub mu: f64,
    pub t_min: f64,
    pub p1: f64,
}

impl Default for FxtConfig {
    fn default() -> Self {
        Self { mu: 5.0, t_min: 0.1, p1: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyConfig {
    /// Reaction time of the rear-gap barrier [s].
    pub reaction_time: f64,
    /// Standstill margin [m].
    pub margin: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self { reaction_time: 0.6, margin: 2.0, v_min: 0.0, v_max: 35.0, u_min: -5.0, u_max: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub steer_limit: f64,
    pub eps_speed_ref: f64,
    pub eps_heading: f64,
    pub eps_lateral: f64,
    pub delta_max: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            steer_limit: 0.6,
            eps_speed_ref: 1.0,
            eps_heading: 1.0,
            eps_lateral: 1.0,
            delta_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub accel: f64,
    pub steer: f64,
    pub delta: f64,
    pub slack: f64,
    pub dual_reg: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        let w = QpWeights::default();
        Self { accel: w.accel, steer: w.steer, delta: w.delta, slack: w.slack, dual_reg: w.dual_reg }
    }
}

/// Terminal goal of a controlled vehicle: reach position `xf` at speed `vf`
/// by time `tf` (seconds from simulation start).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalConfig {
    pub tf: f64,
    pub xf: f64,
    pub vf: f64,
}

/// Piecewise-constant acceleration schedule of an uncontrolled vehicle:
/// `accel` on [from, until), zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub accel: f64,
    #[serde(default)]
    pub from: f64,
    #[serde(default = "default_until")]
    pub until: f64,
}

fn default_until() -> f64 {
    f64::INFINITY
}

impl ProfileConfig {
    pub fn accel_at(&self, t: f64) -> f64 {
        if t >= self.from && t < self.until {
            self.accel
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: String,
    pub role: Role,
    /// Starting lane index (lane k is centered at k * lane_width).
    pub lane: i32,
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
    pub v: f64,
    /// Ego only: lane to move into once the gap clears.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_lane: Option<i32>,
    /// Ego / gap follower: id of the vehicle this one must slot in behind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_ahead: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileConfig>,
}

impl VehicleSpec {
    pub fn initial_state(&self) -> VehicleState {
        VehicleState::new(self.x, self.y, self.theta, self.v)
    }

    pub fn is_controlled(&self) -> bool {
        self.role != Role::Uncontrolled
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub dt: f64,
    /// Simulation continues this long past the latest goal time [s].
    #[serde(default)]
    pub extra_time: f64,
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
    #[serde(default = "default_wheelbase")]
    pub wheelbase: f64,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
    #[serde(default)]
    pub fxt: FxtConfig,
    #[serde(default)]
    pub safety: SafetyConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    pub vehicles: Vec<VehicleSpec>,
}

fn default_lane_width() -> f64 {
    3.5
}

fn default_wheelbase() -> f64 {
    2.5
}

/// Parse and validate a scenario from TOML text.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let cfg: ScenarioConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical TOML serialization (field order fixed, options omitted when
/// absent). `parse_scenario(canonical_toml(c))` reproduces `c`, and
/// serializing again reproduces the bytes.
pub fn canonical_toml(cfg: &ScenarioConfig) -> Result<String, ScenarioError> {
    Ok(toml::to_string_pretty(cfg)?)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::Invalid(msg));
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.extra_time < 0.0 {
            return bad(format!("extra_time must be nonnegative, got {}", self.extra_time));
        }
        if !(self.lane_width > 0.0) {
            return bad(format!("lane_width must be positive, got {}", self.lane_width));
        }
        if self.vehicles.is_empty() {
            return bad("vehicles: at least one vehicle is required".into());
        }
        let d = &self.disturbance;
        if d.lower.len() != d.channels.len() || d.upper.len() != d.channels.len() {
            return bad(format!(
                "disturbance: channels/lower/upper lengths differ ({}/{}/{})",
                d.channels.len(),
                d.lower.len(),
                d.upper.len()
            ));
        }
        // Construct the box so `validate` rejects everything `run` would
        // (reversed or non-finite bounds, box not containing zero).
        self.disturbance_box()?;

        let mut ego_count = 0usize;
        for (i, v) in self.vehicles.iter().enumerate() {
            let key = |field: &str| format!("vehicles[{i}] ({}): {field}", v.id);
            if v.id.is_empty() {
                return bad(format!("vehicles[{i}]: id must be nonempty"));
            }
            if self.vehicles.iter().filter(|o| o.id == v.id).count() > 1 {
                return bad(format!("vehicles[{i}]: duplicate id '{}'", v.id));
            }
            if !v.initial_state().is_finite() {
                return bad(key("initial state must be finite"));
            }
            if v.v < 0.0 {
                return bad(key("v must be nonnegative"));
            }
            match v.role {
                Role::Ego => {
                    ego_count += 1;
                    if v.goal.is_none() {
                        return bad(key("goal is required for role 'ego'"));
                    }
                    if v.target_lane.is_none() {
                        return bad(key("target_lane is required for role 'ego'"));
                    }
                }
                Role::Cooperative | Role::GapFollower => {
                    if v.goal.is_none() {
                        return bad(key("goal is required for controlled vehicles"));
                    }
                    if v.target_lane.is_some() {
                        return bad(key("target_lane is only valid for role 'ego'"));
                    }
                    if v.role == Role::GapFollower && v.merge_ahead.is_none() {
                        return bad(key("merge_ahead is required for role 'gap_follower'"));
                    }
                }
                Role::Uncontrolled => {
                    if v.goal.is_some() {
                        return bad(key("goal is not allowed for role 'uncontrolled'"));
                    }
                    if v.merge_ahead.is_some() || v.target_lane.is_some() {
                        return bad(key("merge/lane-change fields require a controlled role"));
                    }
                }
            }
            if let Some(goal) = &v.goal {
                if !(goal.tf > 0.0) {
                    return bad(key("goal.tf must be positive"));
                }
                if !goal.tf.is_finite() || !goal.xf.is_finite() || !goal.vf.is_finite() {
                    return bad(key("goal values must be finite"));
                }
            }
            if let Some(partner) = &v.merge_ahead {
                if partner == &v.id {
                    return bad(key("merge_ahead must reference another vehicle"));
                }
                if !self.vehicles.iter().any(|o| &o.id == partner) {
                    return bad(key(&format!("merge_ahead references unknown id '{partner}'")));
                }
                if !(v.v > 0.0) {
                    return bad(key("merging vehicles need strictly positive initial speed"));
                }
            }
            if v.profile.is_some() && v.role != Role::Uncontrolled {
                return bad(key("profile is only valid for role 'uncontrolled'"));
            }
        }
        if ego_count > 1 {
            return bad(format!("exactly one ego allowed, found {ego_count}"));
        }
        if self.vehicles.iter().any(|v| v.merge_ahead.is_some()) && ego_count == 0 {
            return bad("merge_ahead requires an ego vehicle (its goal fixes the merge point)".into());
        }
        Ok(())
    }

    pub fn fxt_params(&self) -> FxTParams {
        FxTParams { mu: self.fxt.mu, t_min: self.fxt.t_min, p1: self.fxt.p1 }
    }

    pub fn safety_params(&self) -> SafetyParams {
        SafetyParams {
            phi_rt: self.safety.reaction_time,
            eps: self.safety.margin,
            v_min: self.safety.v_min,
            v_max: self.safety.v_max,
            u_min: self.safety.u_min,
            u_max: self.safety.u_max,
        }
    }

    pub fn constraint_gains(&self) -> ConstraintGains {
        ConstraintGains {
            eps_speed_ref: self.control.eps_speed_ref,
            eps_heading: self.control.eps_heading,
            eps_lateral: self.control.eps_lateral,
            delta_max: self.control.delta_max,
        }
    }

    pub fn qp_weights(&self) -> QpWeights {
        QpWeights {
            accel: self.weights.accel,
            steer: self.weights.steer,
            delta: self.weights.delta,
            slack: self.weights.slack,
            dual_reg: self.weights.dual_reg,
        }
    }

    pub fn control_bounds(&self) -> ControlBounds {
        ControlBounds {
            u_min: self.safety.u_min,
            u_max: self.safety.u_max,
            steer_limit: self.control.steer_limit,
        }
    }

    pub fn disturbance_box(&self) -> Result<DisturbancePolytope, ScenarioError> {
        Ok(DisturbancePolytope::from_box(
            self.disturbance.lower.clone(),
            self.disturbance.upper.clone(),
        )?)
    }

    pub fn lane_center(&self, lane: i32) -> f64 {
        lane as f64 * self.lane_width
    }

    pub fn ego_index(&self) -> Option<usize> {
        self.vehicles.iter().position(|v| v.role == Role::Ego)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_scenario() -> ScenarioConfig {
        ScenarioConfig {
            name: "unit".into(),
            dt: 0.1,
            extra_time: 0.0,
            lane_width: 3.5,
            wheelbase: 2.5,
            disturbance: DisturbanceConfig::default(),
            fxt: FxtConfig::default(),
            safety: SafetyConfig::default(),
            control: ControlConfig::default(),
            weights: WeightsConfig::default(),
            vehicles: vec![VehicleSpec {
                id: "A".into(),
                role: Role::Cooperative,
                lane: 0,
                x: 0.0,
                y: 0.0,
                theta: 0.0,
                v: 20.0,
                target_lane: None,
                merge_ahead: None,
                goal: Some(GoalConfig { tf: 10.0, xf: 250.0, vf: 25.0 }),
                profile: None,
            }],
        }
    }

    #[test]
    fn canonical_round_trip_is_byte_stable() {
        let cfg = minimal_scenario();
        let once = canonical_toml(&cfg).unwrap();
        let parsed = parse_scenario(&once).unwrap();
        assert_eq!(parsed, cfg);
        let twice = canonical_toml(&parsed).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let text = r#"
name = "tiny"
dt = 0.1

[[vehicles]]
id = "U"
role = "uncontrolled"
lane = 0
x = 50.0
v = 15.0
"#;
        let cfg = parse_scenario(text).unwrap();
        assert_eq!(cfg.lane_width, 3.5);
        assert_eq!(cfg.safety.v_max, 35.0);
        assert_eq!(cfg.fxt.mu, 5.0);
        assert_eq!(cfg.fxt.p1, 2.0);
        assert_eq!(cfg.fxt.t_min, 0.1);
        assert_eq!(cfg.control.delta_max, 10.0);
        assert_eq!(cfg.weights.delta, 2.0);
        assert_eq!(cfg.weights.dual_reg, QpWeights::default().dual_reg);
        assert_eq!(cfg.disturbance.policy, DisturbancePolicy::Zero);
        assert_eq!(cfg.vehicles[0].y, 0.0);
        assert_eq!(cfg.vehicles[0].theta, 0.0);
    }

    #[test]
    fn unknown_keys_are_named_in_errors() {
        let text = r#"
name = "bad"
dt = 0.1
max_speed = 40.0

[[vehicles]]
id = "A"
role = "uncontrolled"
lane = 0
x = 0.0
v = 10.0
"#;
        let err = parse_scenario(text).unwrap_err();
        assert!(err.to_string().contains("max_speed"), "{err}");
    }

    #[test]
    fn validation_rejects_inconsistent_configs() {
        let mut cfg = minimal_scenario();
        cfg.vehicles.push(cfg.vehicles[0].clone());
        assert!(matches!(cfg.validate(), Err(ScenarioError::Invalid(m)) if m.contains("duplicate")));

        let mut cfg = minimal_scenario();
        cfg.vehicles[0].role = Role::Ego;
        cfg.vehicles[0].target_lane = None;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("target_lane"), "{err}");

        let mut cfg = minimal_scenario();
        cfg.vehicles[0].merge_ahead = Some("ghost".into());
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");

        let mut cfg = minimal_scenario();
        cfg.disturbance.lower = vec![];
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("lengths"), "{err}");

        let mut cfg = minimal_scenario();
        cfg.disturbance.lower = vec![1.0];
        cfg.disturbance.upper = vec![-1.0];
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("empty"), "{err}");

        let mut cfg = minimal_scenario();
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn uncontrolled_profile_schedule() {
        let p = ProfileConfig { accel: -1.0, from: 2.0, until: 5.0 };
        assert_eq!(p.accel_at(0.0), 0.0);
        assert_eq!(p.accel_at(2.0), -1.0);
        assert_eq!(p.accel_at(4.999), -1.0);
        assert_eq!(p.accel_at(5.0), 0.0);
        let forever = ProfileConfig { accel: 0.5, from: 0.0, until: f64::INFINITY };
        assert_eq!(forever.accel_at(1e9), 0.5);
    }

    #[test]
    fn infinite_until_round_trips_through_toml() {
        let mut cfg = minimal_scenario();
        cfg.vehicles.push(VehicleSpec {
            id: "U".into(),
            role: Role::Uncontrolled,
            lane: 0,
            x: 100.0,
            y: 0.0,
            theta: 0.0,
            v: 15.0,
            target_lane: None,
            merge_ahead: None,
            goal: None,
            profile: Some(ProfileConfig { accel: -0.5, from: 1.0, until: f64::INFINITY }),
        });
        let text = canonical_toml(&cfg).unwrap();
        let parsed = parse_scenario(&text).unwrap();
        assert_eq!(parsed, cfg);
    }
}
