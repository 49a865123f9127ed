//! Real-time 2D motion planning among static and moving obstacles.
//!
//! Pipeline: obstacle tracking ([`tracking`]) feeds motion predictions to a
//! homotopy-aware seed generator ([`homotopy`]); each seed is optimized as a
//! timed trajectory ([`optimizer`]) and the planner ([`planner`]) keeps the
//! cheapest feasible candidate. [`costmap`] provides the inflated local grid
//! and the time-indexed collision check.

pub mod costmap;
pub mod homotopy;
pub mod model;
pub mod optimizer;
pub mod planner;
pub mod tracking;

pub use model::{KinodynamicLimits, MotionModel, ObstacleState, TimedState, Trajectory, Vec2};
