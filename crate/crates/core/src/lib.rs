//! Cooperative lane-change control library: closed-form minimum-energy reference
//! trajectories, a fixed-time CLF/CBF quadratic-program controller robust to
//! polytopic disturbances, and a deterministic multi-vehicle simulator.
//!
//! Module layout mirrors the control pipeline:
//! - [`dynamics`]: kinematic single-track model, disturbance sets, RK4 stepping
//! - [`ocp`]: closed-form energy-optimal trajectory between boundary states
//! - [`reference`]: position-indexed feedback mapping onto the stored trajectory
//! - [`constraints`]: CLF/CBF rows with LP-duality disturbance embedding
//! - [`qp`]: dense active-set solver, assembly, KKT verification, test oracles
//! - [`scenario`]: configuration document parsing and validation
//! - [`simulator`]: closed-loop multi-vehicle execution, logging, auditing

pub mod constraints;
pub mod dynamics;
pub mod ocp;
pub mod qp;
pub mod reference;
pub mod scenario;
pub mod simulator;
