//! Geometric and kinematic domain types shared by every planner stage.
//!
//! The vehicle is a point that traverses a sequence of timed states; obstacles
//! are points with a circular safety margin and a polynomial motion model.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two points closer than this are treated as coincident by the curvature code.
pub const DEGENERATE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("trajectory needs at least 2 states, got {0}")]
    TooShort(usize),
    #[error("state {index}: dt must be > 0 on non-terminal states (got {dt})")]
    BadInterval { index: usize, dt: f64 },
    #[error("terminal state must have dt = 0 (got {0})")]
    TerminalInterval(f64),
    #[error("{field} must be > 0 (got {value})")]
    NonPositive { field: &'static str, value: f64 },
    #[error("{model:?} obstacle must have zero {field}")]
    ModelMismatch {
        model: MotionModel,
        field: &'static str,
    },
}

/// Planar vector in meters (or m/s, m/s² depending on context).
///
/// Serialized as a two-element array `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, other: Vec2, s: f64) -> Vec2 {
        self + (other - self) * s
    }

    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2 { x, y }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, rhs: Vec2) -> Vec2 {
        rhs * self
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// One sample of a trajectory. `dt` is the duration to the next state and is
/// zero on the terminal state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedState {
    pub position: Vec2,
    pub heading: f64,
    pub dt: f64,
}

/// Ordered timed states from start to goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    states: Vec<TimedState>,
}

impl Trajectory {
    /// Builds a trajectory from positions and the `n - 1` intervals between
    /// them. Headings are derived from the outgoing segment; the terminal
    /// heading copies its predecessor.
    pub fn from_positions(positions: &[Vec2], intervals: &[f64]) -> Result<Self, ModelError> {
        let n = positions.len();
        if n < 2 {
            return Err(ModelError::TooShort(n));
        }
        assert_eq!(
            intervals.len(),
            n - 1,
            "need one interval per segment ({} positions, {} intervals)",
            n,
            intervals.len()
        );
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        for (index, &dt) in intervals.iter().enumerate() {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(ModelError::BadInterval { index, dt });
            }
        }
        let mut states = Vec::with_capacity(n);
        let mut heading = 0.0;
        for i in 0..n {
            if i + 1 < n {
                let d = positions[i + 1] - positions[i];
                // Coincident points keep the previous heading.
                if d.norm() > DEGENERATE_EPS {
                    heading = d.y.atan2(d.x);
                    if heading == -std::f64::consts::PI {
                        heading = std::f64::consts::PI;
                    }
                }
            }
            states.push(TimedState {
                position: positions[i],
                heading,
                dt: intervals.get(i).copied().unwrap_or(0.0),
            });
        }
        Ok(Self { states })
    }

    /// Validating constructor for externally supplied states.
    pub fn from_states(states: Vec<TimedState>) -> Result<Self, ModelError> {
        let n = states.len();
        if n < 2 {
            return Err(ModelError::TooShort(n));
        }
        for (index, s) in states.iter().enumerate() {
            if !s.position.is_finite() || !s.heading.is_finite() {
                return Err(ModelError::NonFinite);
            }
            if index + 1 < n && !(s.dt > 0.0 && s.dt.is_finite()) {
                return Err(ModelError::BadInterval { index, dt: s.dt });
            }
        }
        let last = states[n - 1].dt;
        if last != 0.0 {
            return Err(ModelError::TerminalInterval(last));
        }
        Ok(Self { states })
    }

    pub fn states(&self) -> &[TimedState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    /// Always false; a trajectory holds at least two states.
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn start(&self) -> Vec2 {
        self.states[0].position
    }

    pub fn goal(&self) -> Vec2 {
        self.states[self.states.len() - 1].position
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.states.iter().map(|s| s.position).collect()
    }

    /// The `n - 1` segment durations.
    pub fn intervals(&self) -> Vec<f64> {
        self.states[..self.states.len() - 1]
            .iter()
            .map(|s| s.dt)
            .collect()
    }

    pub fn total_time(&self) -> f64 {
        self.states.iter().map(|s| s.dt).sum()
    }

    /// Time offset of every state from the start.
    pub fn timestamps(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.states
            .iter()
            .map(|s| {
                let here = t;
                t += s.dt;
                here
            })
            .collect()
    }

    /// Position at time `t` from the start, linearly interpolated inside a
    /// segment and clamped to the endpoints outside `[0, total_time]`.
    pub fn position_at(&self, t: f64) -> Vec2 {
        if t <= 0.0 {
            return self.start();
        }
        let mut elapsed = 0.0;
        for w in self.states.windows(2) {
            let dt = w[0].dt;
            if t <= elapsed + dt {
                return w[0].position.lerp(w[1].position, (t - elapsed) / dt);
            }
            elapsed += dt;
        }
        self.goal()
    }
}

/// Motion hypothesis attached to an obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionModel {
    Static,
    ConstVelocity,
    ConstAcceleration,
}

/// A point obstacle with a circular safety margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    pub safety_radius: f64,
    pub model: MotionModel,
}

impl ObstacleState {
    pub fn fixed(position: Vec2, safety_radius: f64) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
            acceleration: Vec2::ZERO,
            safety_radius,
            model: MotionModel::Static,
        }
    }

    pub fn constant_velocity(position: Vec2, velocity: Vec2, safety_radius: f64) -> Self {
        Self {
            position,
            velocity,
            acceleration: Vec2::ZERO,
            safety_radius,
            model: MotionModel::ConstVelocity,
        }
    }

    pub fn constant_acceleration(
        position: Vec2,
        velocity: Vec2,
        acceleration: Vec2,
        safety_radius: f64,
    ) -> Self {
        Self {
            position,
            velocity,
            acceleration,
            safety_radius,
            model: MotionModel::ConstAcceleration,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.position.is_finite()
            && self.velocity.is_finite()
            && self.acceleration.is_finite())
        {
            return Err(ModelError::NonFinite);
        }
        if !(self.safety_radius > 0.0 && self.safety_radius.is_finite()) {
            return Err(ModelError::NonPositive {
                field: "safety_radius",
                value: self.safety_radius,
            });
        }
        match self.model {
            MotionModel::Static if self.velocity != Vec2::ZERO => Err(ModelError::ModelMismatch {
                model: self.model,
                field: "velocity",
            }),
            MotionModel::Static | MotionModel::ConstVelocity if self.acceleration != Vec2::ZERO => {
                Err(ModelError::ModelMismatch {
                    model: self.model,
                    field: "acceleration",
                })
            }
            _ => Ok(()),
        }
    }

    /// Velocity and acceleration with the terms the model excludes zeroed.
    pub fn effective_dynamics(&self) -> (Vec2, Vec2) {
        match self.model {
            MotionModel::Static => (Vec2::ZERO, Vec2::ZERO),
            MotionModel::ConstVelocity => (self.velocity, Vec2::ZERO),
            MotionModel::ConstAcceleration => (self.velocity, self.acceleration),
        }
    }
}

/// Vehicle speed and acceleration limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinodynamicLimits {
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for KinodynamicLimits {
    fn default() -> Self {
        Self {
            v_max: 0.5,
            a_max: 0.5,
        }
    }
}

impl KinodynamicLimits {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (field, value) in [("v_max", self.v_max), ("a_max", self.a_max)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::NonPositive { field, value });
            }
        }
        Ok(())
    }
}

/// Sum of Euclidean distances between consecutive positions.
pub fn arc_length(traj: &Trajectory) -> f64 {
    polyline_length(&traj.positions())
}

pub fn polyline_length(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Signed Menger curvature of three points; positive for a left turn.
/// Returns 0 when any two points are within [`DEGENERATE_EPS`].
pub fn menger_curvature(prev: Vec2, here: Vec2, next: Vec2) -> f64 {
    let u = here - prev;
    let w = next - here;
    let s = next - prev;
    let (lu, lw, ls) = (u.norm(), w.norm(), s.norm());
    if lu < DEGENERATE_EPS || lw < DEGENERATE_EPS || ls < DEGENERATE_EPS {
        return 0.0;
    }
    2.0 * u.cross(w) / (lu * lw * ls)
}

/// Curvature at interior state `i` (`1 <= i <= n - 2`).
pub fn curvature_at(traj: &Trajectory, i: usize) -> f64 {
    let s = traj.states();
    assert!(
        i >= 1 && i + 1 < s.len(),
        "curvature_at needs an interior index, got {i} of {}",
        s.len()
    );
    menger_curvature(s[i - 1].position, s[i].position, s[i + 1].position)
}

/// Curvature at every state of a polyline, zero at both endpoints.
pub fn polyline_curvatures(points: &[Vec2]) -> Vec<f64> {
    let n = points.len();
    let mut k = vec![0.0; n];
    for i in 1..n.saturating_sub(1) {
        k[i] = menger_curvature(points[i - 1], points[i], points[i + 1]);
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn straight(points: &[Vec2]) -> Trajectory {
        Trajectory::from_positions(points, &vec![1.0; points.len() - 1]).unwrap()
    }

    #[test]
    fn arc_length_of_straight_segment() {
        let t = straight(&[Vec2::new(-4.0, 0.0), Vec2::new(4.0, 0.0)]);
        assert_eq!(arc_length(&t), 8.0);
    }

    #[test]
    fn coincident_points_add_nothing() {
        let a = Vec2::new(1.0, 1.0);
        let t = straight(&[Vec2::ZERO, a, a, Vec2::new(2.0, 1.0)]);
        assert!((arc_length(&t) - (2f64.sqrt() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn arc_length_of_bent_polyline() {
        let t = straight(&[
            Vec2::new(-4.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(4.0, 0.0),
        ]);
        // 2 * sqrt(4^2 + 1^2)
        assert!((arc_length(&t) - 2.0 * 17f64.sqrt()).abs() < 1e-12);
        assert!((arc_length(&t) - 8.2462).abs() < 1e-4);
    }

    #[test]
    fn collinear_curvature_is_zero() {
        let t = straight(&[Vec2::ZERO, Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0)]);
        assert_eq!(curvature_at(&t, 1), 0.0);
    }

    #[test]
    fn unit_circle_curvature() {
        // Circumscribed-circle oracle: any three points on the unit circle
        // define that circle, so |k| = 1 / R = 1.
        for &step in &[0.01, 0.05, 0.2] {
            let pts: Vec<Vec2> = (0..3)
                .map(|k| Vec2::new((0.3 + k as f64 * step).cos(), (0.3 + k as f64 * step).sin()))
                .collect();
            let k = menger_curvature(pts[0], pts[1], pts[2]);
            assert!((k - 1.0).abs() < 1e-3, "step {step}: {k}");
        }
    }

    #[test]
    fn mirrored_bend_flips_sign() {
        let left = menger_curvature(Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.5));
        let right = menger_curvature(Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(2.0, -0.5));
        assert!(left > 0.0);
        assert_eq!(left, -right);
    }

    #[test]
    fn degenerate_curvature_is_zero() {
        let p = Vec2::new(1.0, 2.0);
        assert_eq!(
            menger_curvature(p, p + Vec2::new(1e-10, 0.0), Vec2::new(5.0, 0.0)),
            0.0
        );
        assert_eq!(menger_curvature(p, Vec2::new(5.0, 0.0), p), 0.0);
    }

    #[test]
    fn headings_follow_outgoing_segment() {
        let t = straight(&[Vec2::ZERO, Vec2::new(0.0, 1.0), Vec2::new(-1.0, 1.0)]);
        let h: Vec<f64> = t.states().iter().map(|s| s.heading).collect();
        assert!((h[0] - PI / 2.0).abs() < 1e-15);
        assert!((h[1] - PI).abs() < 1e-15);
        assert_eq!(h[2], h[1]);
    }

    #[test]
    fn interval_validation() {
        let pts = [Vec2::ZERO, Vec2::new(1.0, 0.0)];
        assert!(matches!(
            Trajectory::from_positions(&pts, &[0.0]),
            Err(ModelError::BadInterval { index: 0, .. })
        ));
        assert!(matches!(
            Trajectory::from_positions(&pts[..1], &[]),
            Err(ModelError::TooShort(1))
        ));
        let mut states = straight(&pts).states().to_vec();
        states[1].dt = 0.5;
        assert!(matches!(
            Trajectory::from_states(states),
            Err(ModelError::TerminalInterval(_))
        ));
    }

    #[test]
    fn obstacle_model_invariants() {
        let mut o = ObstacleState::fixed(Vec2::ZERO, 0.5);
        assert!(o.validate().is_ok());
        o.velocity = Vec2::new(0.1, 0.0);
        assert!(matches!(
            o.validate(),
            Err(ModelError::ModelMismatch {
                field: "velocity",
                ..
            })
        ));
        let mut cv = ObstacleState::constant_velocity(Vec2::ZERO, Vec2::new(0.2, 0.3), 0.5);
        assert!(cv.validate().is_ok());
        cv.acceleration = Vec2::new(0.0, 0.01);
        assert!(cv.validate().is_err());
        assert!(ObstacleState::fixed(Vec2::ZERO, 0.0).validate().is_err());
    }

    #[test]
    fn position_at_interpolates() {
        let t = Trajectory::from_positions(
            &[Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)],
            &[1.0, 2.0],
        )
        .unwrap();
        assert_eq!(t.position_at(-1.0), Vec2::ZERO);
        assert_eq!(t.position_at(0.5), Vec2::new(0.5, 0.0));
        assert_eq!(t.position_at(2.0), Vec2::new(1.0, 0.5));
        assert_eq!(t.position_at(10.0), Vec2::new(1.0, 1.0));
    }

    fn arb_points() -> impl Strategy<Value = Vec<Vec2>> {
        prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 3..12)
            .prop_map(|v| v.into_iter().map(|(x, y)| Vec2::new(x, y)).collect())
    }

    proptest! {
        #[test]
        fn arc_length_rigid_invariance(
            pts in arb_points(),
            angle in -PI..PI,
            dx in -50.0..50.0f64,
            dy in -50.0..50.0f64,
        ) {
            let moved: Vec<Vec2> = pts.iter().map(|p| p.rotated(angle) + Vec2::new(dx, dy)).collect();
            let a = arc_length(&straight(&pts));
            let b = arc_length(&straight(&moved));
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            prop_assert!(a + 1e-12 >= pts[0].distance(pts[pts.len() - 1]));
        }

        #[test]
        fn curvature_rigid_invariance(
            pts in arb_points(),
            angle in -PI..PI,
            dx in -50.0..50.0f64,
            dy in -50.0..50.0f64,
        ) {
            let moved: Vec<Vec2> = pts.iter().map(|p| p.rotated(angle) + Vec2::new(dx, dy)).collect();
            let reflected: Vec<Vec2> = pts.iter().map(|p| Vec2::new(p.x, -p.y)).collect();
            let (a, b, c) = (straight(&pts), straight(&moved), straight(&reflected));
            for i in 1..pts.len() - 1 {
                let k = curvature_at(&a, i);
                prop_assert!((k - curvature_at(&b, i)).abs() <= 1e-6 * k.abs().max(1.0));
                prop_assert_eq!(k, -curvature_at(&c, i));
            }
        }

        #[test]
        fn total_time_is_sum_of_intervals(dts in prop::collection::vec(0.01..5.0f64, 1..30)) {
            let pts: Vec<Vec2> = (0..=dts.len()).map(|i| Vec2::new(i as f64, 0.0)).collect();
            let t = Trajectory::from_positions(&pts, &dts).unwrap();
            let expected: f64 = t.states().iter().map(|s| s.dt).sum();
            prop_assert_eq!(t.total_time(), expected);
        }
    }
}
