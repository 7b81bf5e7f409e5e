//! Sliding-mode control of serial manipulators.
//!
//! The crate models a revolute DH arm (kinematics and rigid-body dynamics),
//! implements a model-based sliding-mode controller with a tanh switching term
//! alongside non-model-based SMC and PID baselines, and provides the
//! closed-loop harness, tracking/smoothness metrics and PSO gain tuning used to
//! compare them.

pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod kinematics;
pub mod metrics;
pub mod model;
pub mod trajectory;
pub mod tuning;

pub use error::{Error, Result};
pub use model::RobotModel;
