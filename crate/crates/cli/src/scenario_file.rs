//! On-disk scenario format.
//!
//! Only `start` and `goal` are required; everything else falls back to the
//! planner defaults. Unknown keys are rejected at every level.

use std::fs;
use std::path::Path;

use kinoplan_core::optimizer::{CostWeights, DensityParams};
use kinoplan_core::planner::Scenario;
use kinoplan_core::{KinodynamicLimits, MotionModel, ObstacleState, Vec2};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub start: Vec2,
    pub goal: Vec2,
    #[serde(default)]
    pub obstacles: Vec<ObstacleFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_noise_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_duration_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleFile {
    pub position: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceleration: Option<Vec2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<MotionModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsFile {
    pub v_max: Option<f64>,
    pub a_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub w_time: Option<f64>,
    pub w_obstacle: Option<f64>,
    pub w_smooth: Option<f64>,
    pub w_vel: Option<f64>,
    pub w_acc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityFile {
    pub d_min: Option<f64>,
    pub d_max: Option<f64>,
    pub d_max_bend: Option<f64>,
    pub kappa_thresh: Option<f64>,
}

/// Hz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesFile {
    pub detection: Option<f64>,
    pub replan: Option<f64>,
}

impl ObstacleFile {
    fn to_state(&self) -> ObstacleState {
        ObstacleState {
            position: self.position,
            velocity: self.velocity.unwrap_or(Vec2::ZERO),
            acceleration: self.acceleration.unwrap_or(Vec2::ZERO),
            safety_radius: self
                .safety_radius
                .unwrap_or(Scenario::DEFAULT_SAFETY_RADIUS),
            model: self.model.unwrap_or(MotionModel::Static),
        }
    }

    fn from_state(o: &ObstacleState) -> Self {
        Self {
            position: o.position,
            velocity: Some(o.velocity),
            acceleration: Some(o.acceleration),
            safety_radius: Some(o.safety_radius),
            model: Some(o.model),
        }
    }
}

impl ScenarioFile {
    /// Applies defaults. The result is not validated.
    pub fn to_scenario(&self) -> Scenario {
        let mut sc = Scenario::new(
            self.start,
            self.goal,
            self.obstacles.iter().map(ObstacleFile::to_state).collect(),
        );
        if let Some(l) = self.limits {
            let d = KinodynamicLimits::default();
            sc.limits = KinodynamicLimits {
                v_max: l.v_max.unwrap_or(d.v_max),
                a_max: l.a_max.unwrap_or(d.a_max),
            };
        }
        if let Some(w) = self.weights {
            let d = CostWeights::default();
            sc.weights = CostWeights {
                w_time: w.w_time.unwrap_or(d.w_time),
                w_obstacle: w.w_obstacle.unwrap_or(d.w_obstacle),
                w_smooth: w.w_smooth.unwrap_or(d.w_smooth),
                w_vel: w.w_vel.unwrap_or(d.w_vel),
                w_acc: w.w_acc.unwrap_or(d.w_acc),
            };
        }
        if let Some(p) = self.density {
            let d = DensityParams::default();
            sc.density = DensityParams {
                d_min: p.d_min.unwrap_or(d.d_min),
                d_max: p.d_max.unwrap_or(d.d_max),
                d_max_bend: p.d_max_bend.unwrap_or(d.d_max_bend),
                kappa_thresh: p.kappa_thresh.unwrap_or(d.kappa_thresh),
            };
        }
        if let Some(k) = self.max_classes {
            sc.max_classes = k;
        }
        if let Some(m) = self.margin {
            sc.margin = m;
        }
        if let Some(r) = self.rates {
            sc.detection_rate = r.detection.unwrap_or(sc.detection_rate);
            sc.replan_rate = r.replan.unwrap_or(sc.replan_rate);
        }
        if let Some(s) = self.detection_noise_std {
            sc.detection_noise_std = s;
        }
        if let Some(s) = self.sim_duration_max {
            sc.sim_duration_max = s;
        }
        sc
    }

    /// Fully explicit file for `sc`.
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            start: sc.start,
            goal: sc.goal,
            obstacles: sc.obstacles.iter().map(ObstacleFile::from_state).collect(),
            limits: Some(LimitsFile {
                v_max: Some(sc.limits.v_max),
                a_max: Some(sc.limits.a_max),
            }),
            weights: Some(WeightsFile {
                w_time: Some(sc.weights.w_time),
                w_obstacle: Some(sc.weights.w_obstacle),
                w_smooth: Some(sc.weights.w_smooth),
                w_vel: Some(sc.weights.w_vel),
                w_acc: Some(sc.weights.w_acc),
            }),
            density: Some(DensityFile {
                d_min: Some(sc.density.d_min),
                d_max: Some(sc.density.d_max),
                d_max_bend: Some(sc.density.d_max_bend),
                kappa_thresh: Some(sc.density.kappa_thresh),
            }),
            max_classes: Some(sc.max_classes),
            margin: Some(sc.margin),
            rates: Some(RatesFile {
                detection: Some(sc.detection_rate),
                replan: Some(sc.replan_rate),
            }),
            detection_noise_std: Some(sc.detection_noise_std),
            sim_duration_max: Some(sc.sim_duration_max),
        }
    }
}

/// Parses and validates scenario JSON. `origin` labels error messages.
pub fn parse_scenario_str(text: &str, origin: &Path) -> Result<Scenario, CliError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|source| CliError::Json {
        path: origin.to_path_buf(),
        source,
    })?;
    let sc = file.to_scenario();
    sc.validate().map_err(|source| CliError::Invalid {
        path: origin.to_path_buf(),
        source,
    })?;
    Ok(sc)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario_str(&text, path)
}

pub fn write_scenario(sc: &Scenario) -> String {
    let mut s = serde_json::to_string_pretty(&ScenarioFile::from_scenario(sc))
        .expect("scenario serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use kinoplan_core::model::ModelError;
    use kinoplan_core::planner::ScenarioError;

    fn parse(text: &str) -> Result<Scenario, CliError> {
        parse_scenario_str(text, Path::new("test.json"))
    }

    #[test]
    fn minimal_file_takes_defaults() {
        let sc = parse(r#"{"start": [0, 0], "goal": [1, 0]}"#).unwrap();
        assert_eq!(
            sc,
            Scenario::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), vec![])
        );
    }

    #[test]
    fn partial_sections_fill_in() {
        let sc = parse(
            r#"{"start": [0, 0], "goal": [1, 0], "limits": {"v_max": 1.5},
                "rates": {"replan": 2}, "obstacles": [{"position": [3, 4]}]}"#,
        )
        .unwrap();
        assert_eq!(sc.limits.v_max, 1.5);
        assert_eq!(sc.limits.a_max, KinodynamicLimits::default().a_max);
        assert_eq!(sc.replan_rate, 2.0);
        assert_eq!(sc.detection_rate, Scenario::DEFAULT_DETECTION_RATE);
        assert_eq!(
            sc.obstacles[0],
            ObstacleState::fixed(Vec2::new(3.0, 4.0), 0.5)
        );
    }

    #[test]
    fn missing_goal_is_named() {
        let err = parse(r#"{"start": [0, 0]}"#).unwrap_err().to_string();
        assert!(err.contains("goal"), "{err}");
    }

    #[test]
    fn unknown_key_is_named_with_line() {
        let err = parse("{\"start\": [0, 0],\n \"goal\": [1, 0],\n \"speed\": 3}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("speed") && err.contains("line 3"), "{err}");
        let err = parse(r#"{"start": [0, 0], "goal": [1, 0], "rates": {"detect": 3}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("detect"), "{err}");
    }

    #[test]
    fn static_obstacle_with_velocity_rejected() {
        let err = parse(
            r#"{"start": [0, 0], "goal": [1, 0],
                "obstacles": [{"position": [3, 4], "velocity": [0.1, 0]}]}"#,
        )
        .unwrap_err();
        match &err {
            CliError::Invalid {
                source:
                    ScenarioError::Obstacle {
                        index: 0,
                        source: ModelError::ModelMismatch { field, .. },
                    },
                ..
            } => assert_eq!(*field, "velocity"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("velocity"));
    }

    #[test]
    fn invariant_violations_are_named() {
        let err = parse(r#"{"start": [1, 0], "goal": [1, 0]}"#).unwrap_err();
        assert!(matches!(
            err,
            CliError::Invalid {
                source: ScenarioError::StartIsGoal,
                ..
            }
        ));
        let err = parse(r#"{"start": [0, 0], "goal": [1, 0], "rates": {"replan": 0}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("replan_rate"), "{err}");
        let err = parse(r#"{"start": [0, 0], "goal": [1, 0], "max_classes": 0}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("max_classes"), "{err}");
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse("{\"start\": [0, 0],\n \"goal\": [1, }")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
