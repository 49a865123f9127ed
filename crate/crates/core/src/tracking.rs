//! Obstacle motion prediction and constant-acceleration Kalman tracking.
//!
//! A single 6-state filter `[px, py, vx, vy, ax, ay]` driven by white-jerk
//! process noise covers the static, constant-velocity and constant-acceleration
//! regimes; the regime is recovered afterwards by thresholding the velocity and
//! acceleration estimates.

use nalgebra::{Matrix2, Matrix2x6, Matrix6, Matrix6x2, Vector2, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MotionModel, ObstacleState, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("prediction time must be >= 0 (got {0})")]
    NegativeTime(f64),
    #[error("predict step must be > 0 (got {0})")]
    NonPositiveStep(f64),
    #[error("detection at t={detection} is older than the track (last update t={track})")]
    StaleDetection { detection: f64, track: f64 },
    #[error("detection for obstacle {detection} applied to track {track}")]
    WrongObstacle { detection: u32, track: u32 },
    #[error("track {0} has too few updates to classify")]
    Unclassified(u32),
    #[error("innovation covariance is singular")]
    Singular,
}

/// Filter tuning and classification thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig {
    /// White-jerk spectral density, m²/s⁵.
    pub process_noise: f64,
    pub sigma_v0: f64,
    pub sigma_a0: f64,
    /// Floor on the measurement standard deviation so `R` stays invertible.
    pub sigma_z_min: f64,
    pub v_eps: f64,
    pub a_eps: f64,
    /// Updates (including the initializing detection) required before classification.
    pub min_updates: usize,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            process_noise: 0.01,
            sigma_v0: 1.0,
            sigma_a0: 0.5,
            sigma_z_min: 1e-3,
            v_eps: 0.05,
            a_eps: 0.005,
            min_updates: 10,
        }
    }
}

/// A simulated position observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub obstacle_id: u32,
    pub position: Vec2,
    pub timestamp: f64,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    pub obstacle_id: u32,
    pub state: Vector6<f64>,
    pub covariance: Matrix6<f64>,
    pub last_update: f64,
    pub updates: usize,
}

impl KalmanTrack {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.state[2], self.state[3])
    }

    pub fn acceleration(&self) -> Vec2 {
        Vec2::new(self.state[4], self.state[5])
    }
}

/// Position of `obs` after `t` seconds under its own motion model.
pub fn predict_position(obs: &ObstacleState, t: f64) -> Result<Vec2, TrackingError> {
    if !(t >= 0.0) {
        return Err(TrackingError::NegativeTime(t));
    }
    Ok(propagate_position(obs, t))
}

/// Unchecked form of [`predict_position`] for hot loops that already hold `t >= 0`.
#[inline]
pub fn propagate_position(obs: &ObstacleState, t: f64) -> Vec2 {
    match obs.model {
        MotionModel::Static => obs.position,
        MotionModel::ConstVelocity => obs.position + obs.velocity * t,
        MotionModel::ConstAcceleration => {
            obs.position + obs.velocity * t + obs.acceleration * (0.5 * t * t)
        }
    }
}

/// Time derivative of [`propagate_position`].
#[inline]
pub fn propagate_velocity(obs: &ObstacleState, t: f64) -> Vec2 {
    match obs.model {
        MotionModel::Static => Vec2::ZERO,
        MotionModel::ConstVelocity => obs.velocity,
        MotionModel::ConstAcceleration => obs.velocity + obs.acceleration * t,
    }
}

/// Full state of `obs` advanced by `t` seconds, keeping its model.
pub fn advance_obstacle(obs: &ObstacleState, t: f64) -> ObstacleState {
    ObstacleState {
        position: propagate_position(obs, t),
        velocity: propagate_velocity(obs, t),
        ..*obs
    }
}

fn measurement_sigma(det: &Detection, cfg: &KalmanConfig) -> f64 {
    det.noise_std.max(cfg.sigma_z_min)
}

pub fn kf_init(det: &Detection, cfg: &KalmanConfig) -> KalmanTrack {
    let sp = measurement_sigma(det, cfg);
    let diag = Vector6::new(
        sp * sp,
        sp * sp,
        cfg.sigma_v0 * cfg.sigma_v0,
        cfg.sigma_v0 * cfg.sigma_v0,
        cfg.sigma_a0 * cfg.sigma_a0,
        cfg.sigma_a0 * cfg.sigma_a0,
    );
    KalmanTrack {
        obstacle_id: det.obstacle_id,
        state: Vector6::new(det.position.x, det.position.y, 0.0, 0.0, 0.0, 0.0),
        covariance: Matrix6::from_diagonal(&diag),
        last_update: det.timestamp,
        updates: 1,
    }
}

fn transition(dt: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    let half = 0.5 * dt * dt;
    for axis in 0..2 {
        f[(axis, 2 + axis)] = dt;
        f[(axis, 4 + axis)] = half;
        f[(2 + axis, 4 + axis)] = dt;
    }
    f
}

/// Discretized white-jerk process noise for one step of length `dt`.
fn process_noise(dt: f64, q: f64) -> Matrix6<f64> {
    let (d2, d3) = (dt * dt, dt * dt * dt);
    let (d4, d5) = (d3 * dt, d3 * d2);
    // Per-axis block over (position, velocity, acceleration).
    let block = [
        [d5 / 20.0, d4 / 8.0, d3 / 6.0],
        [d4 / 8.0, d3 / 3.0, d2 / 2.0],
        [d3 / 6.0, d2 / 2.0, dt],
    ];
    let mut m = Matrix6::zeros();
    for axis in 0..2 {
        for (r, row) in block.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                m[(2 * r + axis, 2 * c + axis)] = q * v;
            }
        }
    }
    m
}

fn symmetrize(p: &mut Matrix6<f64>) {
    *p = (*p + p.transpose()) * 0.5;
}

pub fn kf_predict(
    track: &KalmanTrack,
    dt: f64,
    cfg: &KalmanConfig,
) -> Result<KalmanTrack, TrackingError> {
    if !(dt > 0.0) {
        return Err(TrackingError::NonPositiveStep(dt));
    }
    let f = transition(dt);
    let mut covariance =
        f * track.covariance * f.transpose() + process_noise(dt, cfg.process_noise);
    symmetrize(&mut covariance);
    Ok(KalmanTrack {
        state: f * track.state,
        covariance,
        last_update: track.last_update + dt,
        ..track.clone()
    })
}

/// Measurement update with a position detection. A detection newer than the
/// track first predicts the track forward to the detection time.
pub fn kf_update(
    track: &KalmanTrack,
    det: &Detection,
    cfg: &KalmanConfig,
) -> Result<KalmanTrack, TrackingError> {
    if det.obstacle_id != track.obstacle_id {
        return Err(TrackingError::WrongObstacle {
            detection: det.obstacle_id,
            track: track.obstacle_id,
        });
    }
    if det.timestamp < track.last_update {
        return Err(TrackingError::StaleDetection {
            detection: det.timestamp,
            track: track.last_update,
        });
    }
    let prior = if det.timestamp > track.last_update {
        let mut p = kf_predict(track, det.timestamp - track.last_update, cfg)?;
        p.last_update = det.timestamp;
        p
    } else {
        track.clone()
    };

    let mut h = Matrix2x6::zeros();
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    let sz = measurement_sigma(det, cfg);
    let r = Matrix2::identity() * (sz * sz);

    let p = &prior.covariance;
    let s = h * p * h.transpose() + r;
    let s_inv = s.try_inverse().ok_or(TrackingError::Singular)?;
    let gain: Matrix6x2<f64> = p * h.transpose() * s_inv;
    let innovation = Vector2::new(det.position.x, det.position.y) - h * prior.state;

    let state = prior.state + gain * innovation;
    // Joseph form keeps the posterior symmetric positive semidefinite.
    let ikh = Matrix6::identity() - gain * h;
    let mut covariance = ikh * p * ikh.transpose() + gain * r * gain.transpose();
    symmetrize(&mut covariance);

    Ok(KalmanTrack {
        state,
        covariance,
        last_update: det.timestamp,
        updates: prior.updates + 1,
        ..prior
    })
}

/// Motion regime implied by the current estimates, or `None` while the track
/// has fewer than `cfg.min_updates` updates.
pub fn classify_motion(track: &KalmanTrack, cfg: &KalmanConfig) -> Option<MotionModel> {
    if track.updates < cfg.min_updates {
        return None;
    }
    let slow = track.velocity().norm() < cfg.v_eps;
    let steady = track.acceleration().norm() < cfg.a_eps;
    Some(match (slow, steady) {
        (true, true) => MotionModel::Static,
        (_, true) => MotionModel::ConstVelocity,
        _ => MotionModel::ConstAcceleration,
    })
}

/// Copy of `track` with the velocity and acceleration estimates zeroed when
/// they are statistically indistinguishable from zero: squared Mahalanobis
/// norm under the track covariance below `chi2` (2 degrees of freedom).
pub fn suppress_insignificant(track: &KalmanTrack, chi2: f64) -> KalmanTrack {
    let mut out = track.clone();
    for base in [4, 2] {
        let x = Vector2::new(track.state[base], track.state[base + 1]);
        let block: Matrix2<f64> = track.covariance.fixed_view::<2, 2>(base, base).into_owned();
        let significant = block
            .try_inverse()
            .map(|inv| (x.transpose() * inv * x)[(0, 0)] >= chi2)
            .unwrap_or(true);
        if !significant {
            out.state[base] = 0.0;
            out.state[base + 1] = 0.0;
        }
    }
    out
}

pub fn track_to_obstacle(
    track: &KalmanTrack,
    safety_radius: f64,
    cfg: &KalmanConfig,
) -> Result<ObstacleState, TrackingError> {
    let model =
        classify_motion(track, cfg).ok_or(TrackingError::Unclassified(track.obstacle_id))?;
    let position = track.position();
    Ok(match model {
        MotionModel::Static => ObstacleState::fixed(position, safety_radius),
        MotionModel::ConstVelocity => {
            ObstacleState::constant_velocity(position, track.velocity(), safety_radius)
        }
        MotionModel::ConstAcceleration => ObstacleState::constant_acceleration(
            position,
            track.velocity(),
            track.acceleration(),
            safety_radius,
        ),
    })
}
