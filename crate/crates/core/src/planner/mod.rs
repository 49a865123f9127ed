//! Planning pipeline: seed enumeration, parallel candidate optimization,
//! feasibility checking and min-cost selection, plus the closed-loop
//! simulator in [`simulate_run`].

mod extended;
mod sim;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::min_segment_clearance;
use crate::homotopy::{enumerate_seed_paths, HomotopySignature, RoadmapParams, SeedPath};
use crate::model::{KinodynamicLimits, ModelError, ObstacleState, Trajectory, Vec2};
use crate::optimizer::{
    optimize_candidate, CostWeights, DensityParams, DescentSettings, OptimizerConfig,
};
use crate::tracking::KalmanConfig;

pub use sim::{simulate_run, ObstacleRecord, SimStatus, SimSummary, SimTrace, TickRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("start and goal coincide")]
    StartIsGoal,
    #[error("max_classes must be >= 1")]
    NoClasses,
    #[error("{field} must be > 0 (got {value})")]
    NonPositive { field: &'static str, value: f64 },
    #[error("{field} must be finite and >= 0 (got {value})")]
    Negative { field: &'static str, value: f64 },
    #[error("weights must be non-negative with at least one positive")]
    BadWeights,
    #[error("density bounds must satisfy 0 < d_min < d_max_bend <= d_max")]
    BadDensity,
    #[error("obstacle {index}: {source}")]
    Obstacle { index: usize, source: ModelError },
    #[error("limits: {0}")]
    Limits(ModelError),
    #[error("{field} is not finite")]
    NonFinite { field: &'static str },
}

/// Problem definition shared by single-shot planning and simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub start: Vec2,
    pub goal: Vec2,
    pub obstacles: Vec<ObstacleState>,
    pub limits: KinodynamicLimits,
    pub weights: CostWeights,
    pub density: DensityParams,
    pub max_classes: usize,
    /// Extra clearance demanded by seed enumeration and the feasibility check.
    pub margin: f64,
    /// Hz.
    pub detection_rate: f64,
    pub detection_noise_std: f64,
    /// Hz.
    pub replan_rate: f64,
    pub sim_duration_max: f64,
}

impl Scenario {
    pub const DEFAULT_MAX_CLASSES: usize = 5;
    pub const DEFAULT_SAFETY_RADIUS: f64 = 0.5;
    pub const DEFAULT_DETECTION_RATE: f64 = 10.0;
    pub const DEFAULT_DETECTION_NOISE: f64 = 0.01;
    pub const DEFAULT_REPLAN_RATE: f64 = 4.0;
    pub const DEFAULT_SIM_DURATION: f64 = 60.0;

    /// A scenario with every tunable at its default.
    pub fn new(start: Vec2, goal: Vec2, obstacles: Vec<ObstacleState>) -> Self {
        Self {
            start,
            goal,
            obstacles,
            limits: KinodynamicLimits::default(),
            weights: CostWeights::default(),
            density: DensityParams::default(),
            max_classes: Self::DEFAULT_MAX_CLASSES,
            margin: 0.0,
            detection_rate: Self::DEFAULT_DETECTION_RATE,
            detection_noise_std: Self::DEFAULT_DETECTION_NOISE,
            replan_rate: Self::DEFAULT_REPLAN_RATE,
            sim_duration_max: Self::DEFAULT_SIM_DURATION,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !self.start.is_finite() {
            return Err(ScenarioError::NonFinite { field: "start" });
        }
        if !self.goal.is_finite() {
            return Err(ScenarioError::NonFinite { field: "goal" });
        }
        if self.start == self.goal {
            return Err(ScenarioError::StartIsGoal);
        }
        if self.max_classes == 0 {
            return Err(ScenarioError::NoClasses);
        }
        for (index, o) in self.obstacles.iter().enumerate() {
            o.validate()
                .map_err(|source| ScenarioError::Obstacle { index, source })?;
        }
        self.limits.validate().map_err(ScenarioError::Limits)?;
        if !self.weights.is_valid() {
            return Err(ScenarioError::BadWeights);
        }
        if !self.density.is_valid() {
            return Err(ScenarioError::BadDensity);
        }
        for (field, value) in [
            ("detection_rate", self.detection_rate),
            ("replan_rate", self.replan_rate),
            ("sim_duration_max", self.sim_duration_max),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ScenarioError::NonPositive { field, value });
            }
        }
        for (field, value) in [
            ("margin", self.margin),
            ("detection_noise_std", self.detection_noise_std),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ScenarioError::Negative { field, value });
            }
        }
        Ok(())
    }

    pub fn optimizer_config(&self, descent: DescentSettings) -> OptimizerConfig {
        OptimizerConfig {
            weights: self.weights,
            limits: self.limits,
            density: self.density,
            descent,
        }
    }
}

/// Planner knobs that are not part of the problem definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub descent: DescentSettings,
    pub roadmap: RoadmapParams,
    pub kalman: KalmanConfig,
    /// Velocity and acceleration estimates whose squared Mahalanobis norm is
    /// below this are treated as zero before classification.
    pub significance_chi2: f64,
    /// Simulation ends as reached once the vehicle is this close to the goal.
    pub goal_tolerance: f64,
    /// Worker threads for candidate optimization; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl PlannerConfig {
    /// Jerk spectral density used by the simulator's trackers. Lower than the
    /// filter's own default: with centimetre detection noise the default lets
    /// the acceleration estimate wander enough to misclassify static
    /// obstacles, and long-horizon predictions drift by metres.
    pub const TRACKING_PROCESS_NOISE: f64 = 1e-4;
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            descent: DescentSettings::default(),
            roadmap: RoadmapParams::default(),
            kalman: KalmanConfig {
                process_noise: Self::TRACKING_PROCESS_NOISE,
                ..KalmanConfig::default()
            },
            significance_chi2: 25.0,
            goal_tolerance: 0.1,
            threads: None,
        }
    }
}

/// Outcome of one optimized candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub signature: HomotopySignature,
    #[serde(with = "extended")]
    pub final_cost: f64,
    pub signature_preserved: bool,
    pub feasible: bool,
    pub state_count: usize,
    #[serde(with = "extended")]
    pub eta: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Smallest clearance beyond the safety radius along the timeline.
    #[serde(with = "extended")]
    pub min_clearance: f64,
    /// Set when optimization aborted; the candidate is then infeasible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CandidateSummary {
    pub fn selectable(&self) -> bool {
        self.feasible && self.signature_preserved
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub chosen: Trajectory,
    pub chosen_index: usize,
    pub candidates: Vec<CandidateSummary>,
    /// Wall-clock milliseconds for the whole planning call.
    pub plan_time: f64,
    pub eta: f64,
    pub state_count: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanFailure {
    #[error("start is inside an obstacle's safety circle")]
    StartBlocked,
    #[error("goal is inside an obstacle's safety circle")]
    GoalBlocked,
    #[error("no collision-free seed path exists")]
    NoPath,
    #[error("all {} candidates are infeasible or changed class", candidates.len())]
    AllInfeasible { candidates: Vec<CandidateSummary> },
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("cannot build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Index of the cheapest selectable candidate; ties go to fewer states, then
/// the lower index. `None` when nothing is selectable.
pub fn select_best(candidates: &[CandidateSummary]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.selectable())
        .min_by(|(ia, a), (ib, b)| {
            a.final_cost
                .total_cmp(&b.final_cost)
                .then(a.state_count.cmp(&b.state_count))
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
}

/// Smallest `distance - safety_radius` along the trajectory's own timeline.
pub fn trajectory_clearance(traj: &Trajectory, obstacles: &[ObstacleState]) -> f64 {
    let states = traj.states();
    let mut t = 0.0;
    let mut worst = f64::INFINITY;
    for w in states.windows(2) {
        let t_next = t + w[0].dt;
        worst = worst.min(min_segment_clearance(
            obstacles,
            w[0].position,
            w[1].position,
            t,
            t_next,
        ));
        t = t_next;
    }
    worst
}

pub struct Planner {
    scenario: Scenario,
    config: PlannerConfig,
    pool: Option<rayon::ThreadPool>,
}

impl Planner {
    pub fn new(scenario: Scenario, config: PlannerConfig) -> Result<Self, PlannerError> {
        scenario.validate()?;
        let pool = match config.threads {
            Some(n) if n > 1 => Some(rayon::ThreadPoolBuilder::new().num_threads(n).build()?),
            _ => None,
        };
        Ok(Self {
            scenario,
            config,
            pool,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    /// Plans from `start` to the scenario goal. `obstacles` describe the
    /// world at the planning epoch; all predictions are relative to it.
    pub fn plan_once(
        &self,
        start: Vec2,
        obstacles: &[ObstacleState],
    ) -> Result<PlanResult, PlanFailure> {
        let clock = Instant::now();
        let sc = &self.scenario;
        let blocked = |p: Vec2| {
            obstacles
                .iter()
                .any(|o| p.distance(o.position) <= o.safety_radius + sc.margin)
        };
        if blocked(start) {
            return Err(PlanFailure::StartBlocked);
        }
        if blocked(sc.goal) {
            return Err(PlanFailure::GoalBlocked);
        }
        let seeds = enumerate_seed_paths(
            start,
            sc.goal,
            obstacles,
            sc.max_classes,
            sc.margin,
            &self.config.roadmap,
        );
        if seeds.is_empty() {
            return Err(PlanFailure::NoPath);
        }

        let opt = sc.optimizer_config(self.config.descent);
        let evaluate = |seed: &SeedPath| self.evaluate(seed, obstacles, &opt);
        let results: Vec<(Option<Trajectory>, CandidateSummary)> =
            match (&self.pool, self.config.threads) {
                (Some(pool), _) => pool.install(|| seeds.par_iter().map(evaluate).collect()),
                (None, Some(_)) => seeds.iter().map(evaluate).collect(),
                (None, None) => seeds.par_iter().map(evaluate).collect(),
            };
        let (trajectories, candidates): (Vec<_>, Vec<_>) = results.into_iter().unzip();

        let Some(chosen_index) = select_best(&candidates) else {
            return Err(PlanFailure::AllInfeasible { candidates });
        };
        let chosen = trajectories
            .into_iter()
            .nth(chosen_index)
            .flatten()
            .expect("selectable candidates carry a trajectory");
        log::debug!(
            "chose candidate {chosen_index} of {} (cost {:.4})",
            candidates.len(),
            candidates[chosen_index].final_cost
        );
        Ok(PlanResult {
            eta: chosen.total_time(),
            state_count: chosen.len(),
            chosen,
            chosen_index,
            candidates,
            plan_time: clock.elapsed().as_secs_f64() * 1e3,
        })
    }

    fn evaluate(
        &self,
        seed: &SeedPath,
        obstacles: &[ObstacleState],
        opt: &OptimizerConfig,
    ) -> (Option<Trajectory>, CandidateSummary) {
        match optimize_candidate(seed, obstacles, opt) {
            Ok((traj, report)) => {
                let min_clearance = trajectory_clearance(&traj, obstacles);
                let summary = CandidateSummary {
                    signature: seed.signature.clone(),
                    final_cost: report.final_cost,
                    signature_preserved: report.signature_preserved,
                    feasible: min_clearance > self.scenario.margin,
                    state_count: traj.len(),
                    eta: traj.total_time(),
                    iterations: report.iterations,
                    converged: report.converged,
                    min_clearance,
                    error: None,
                };
                (Some(traj), summary)
            }
            Err(e) => {
                log::warn!("candidate optimization aborted: {e}");
                let summary = CandidateSummary {
                    signature: seed.signature.clone(),
                    final_cost: f64::INFINITY,
                    signature_preserved: false,
                    feasible: false,
                    state_count: 0,
                    eta: f64::INFINITY,
                    iterations: 0,
                    converged: false,
                    min_clearance: f64::NEG_INFINITY,
                    error: Some(e.to_string()),
                };
                (None, summary)
            }
        }
    }
}

/// Single-shot plan from the scenario start against its own obstacle states.
pub fn plan_once(scenario: &Scenario, config: &PlannerConfig) -> Result<PlanResult, PlanFailure> {
    let planner = Planner::new(scenario.clone(), *config).map_err(|e| {
        log::error!("{e}");
        PlanFailure::NoPath
    })?;
    planner.plan_once(scenario.start, &scenario.obstacles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(cost: f64, states: usize, feasible: bool) -> CandidateSummary {
        CandidateSummary {
            signature: HomotopySignature { windings: vec![] },
            final_cost: cost,
            signature_preserved: true,
            feasible,
            state_count: states,
            eta: 0.0,
            iterations: 0,
            converged: true,
            min_clearance: 1.0,
            error: None,
        }
    }

    fn three_in_line() -> Scenario {
        let obstacles = [(-2.0, 0.0), (2.0, 0.0), (0.0, 0.0)]
            .into_iter()
            .map(|(x, y)| ObstacleState::fixed(Vec2::new(x, y), 0.5))
            .collect();
        Scenario::new(Vec2::new(-4.0, 0.0), Vec2::new(4.0, 0.0), obstacles)
    }

    fn single_threaded() -> PlannerConfig {
        PlannerConfig {
            threads: Some(1),
            ..PlannerConfig::default()
        }
    }

    #[test]
    fn select_best_argmin() {
        let c: Vec<_> = [5.0, 2.0, 9.0]
            .iter()
            .map(|&x| summary(x, 10, true))
            .collect();
        assert_eq!(select_best(&c), Some(1));
    }

    #[test]
    fn select_best_breaks_ties_by_state_count() {
        let c = [summary(2.0, 40, true), summary(2.0, 30, true)];
        assert_eq!(select_best(&c), Some(1));
        let c = [summary(2.0, 30, true), summary(2.0, 30, true)];
        assert_eq!(select_best(&c), Some(0));
    }

    #[test]
    fn select_best_skips_infeasible() {
        let c = [summary(1.0, 10, false), summary(10.0, 10, true)];
        assert_eq!(select_best(&c), Some(1));
        let mut flipped = summary(0.5, 10, true);
        flipped.signature_preserved = false;
        assert_eq!(select_best(&[flipped]), None);
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn select_best_prefers_lower_of_two_feasible() {
        let c = [summary(3.0, 10, true), summary(2.5, 10, true)];
        assert_eq!(select_best(&c), Some(1));
    }

    #[test]
    fn empty_world_yields_straight_line() {
        let sc = Scenario::new(Vec2::new(-4.0, 0.0), Vec2::new(4.0, 0.0), vec![]);
        let plan = plan_once(&sc, &single_threaded()).unwrap();
        assert_eq!(plan.candidates.len(), 1);
        assert!(plan.chosen.positions().iter().all(|p| p.y.abs() < 1e-9));
        assert_eq!(plan.eta, plan.chosen.total_time());
        assert_eq!(plan.state_count, plan.chosen.len());
    }

    #[test]
    fn three_in_line_plan_is_clear_at_every_sample() {
        let sc = three_in_line();
        let plan = plan_once(&sc, &single_threaded()).unwrap();
        assert_eq!(plan.candidates.len(), 5);
        // Dense oracle: 1 ms sampling of the chosen trajectory.
        let total = plan.chosen.total_time();
        let steps = (total * 1000.0).ceil() as usize;
        for k in 0..=steps {
            let p = plan.chosen.position_at(total * k as f64 / steps as f64);
            for o in &sc.obstacles {
                assert!(
                    p.distance(o.position) >= o.safety_radius,
                    "{p:?} hits {o:?}"
                );
            }
        }
        let best = plan.candidates[plan.chosen_index].final_cost;
        for c in plan.candidates.iter().filter(|c| c.selectable()) {
            assert!(c.final_cost >= best);
        }
    }

    #[test]
    fn one_class_still_plans_three_in_line() {
        let mut sc = three_in_line();
        sc.max_classes = 1;
        let plan = plan_once(&sc, &single_threaded()).unwrap();
        assert_eq!(plan.candidates.len(), 1);
        assert!(trajectory_clearance(&plan.chosen, &sc.obstacles) > 0.0);
    }

    #[test]
    fn blocked_goal_fails() {
        let mut sc = three_in_line();
        sc.obstacles
            .push(ObstacleState::fixed(Vec2::new(4.2, 0.0), 0.5));
        assert_eq!(
            plan_once(&sc, &single_threaded()).unwrap_err(),
            PlanFailure::GoalBlocked
        );
        let mut sc = three_in_line();
        sc.obstacles
            .push(ObstacleState::fixed(Vec2::new(-4.0, 0.3), 0.5));
        assert_eq!(
            plan_once(&sc, &single_threaded()).unwrap_err(),
            PlanFailure::StartBlocked
        );
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let sc = three_in_line();
        let a = plan_once(&sc, &single_threaded()).unwrap();
        let pooled = PlannerConfig {
            threads: Some(3),
            ..PlannerConfig::default()
        };
        let b = plan_once(&sc, &pooled).unwrap();
        assert_eq!(a.chosen, b.chosen);
        assert_eq!(a.candidates, b.candidates);
    }

    #[test]
    fn scenario_validation() {
        let mut sc = three_in_line();
        assert!(sc.validate().is_ok());
        sc.goal = sc.start;
        assert_eq!(sc.validate(), Err(ScenarioError::StartIsGoal));
        let mut sc = three_in_line();
        sc.max_classes = 0;
        assert_eq!(sc.validate(), Err(ScenarioError::NoClasses));
        let mut sc = three_in_line();
        sc.replan_rate = 0.0;
        assert!(matches!(
            sc.validate(),
            Err(ScenarioError::NonPositive {
                field: "replan_rate",
                ..
            })
        ));
    }
}
