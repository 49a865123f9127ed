use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{PlanFailure, Planner, PlannerConfig, PlannerError, Scenario};
use crate::model::{ObstacleState, Vec2};
use crate::tracking::{
    advance_obstacle, kf_init, kf_predict, kf_update, propagate_position, suppress_insignificant,
    track_to_obstacle, Detection, KalmanTrack,
};

/// Vehicle motion inside a tick is collision-checked at this time step, s.
const SUBSTEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimStatus {
    Reached,
    Timeout,
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleRecord {
    pub id: u32,
    pub truth: ObstacleState,
    /// What the planner saw this tick.
    pub estimate: ObstacleState,
    /// False while the track is too young to classify; the estimate is then
    /// treated as static.
    pub classified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub time: f64,
    pub vehicle: Vec2,
    pub obstacles: Vec<ObstacleRecord>,
    /// Index of the plan driving the vehicle from this tick, counted from 0.
    pub plan_id: Option<usize>,
    /// Milliseconds spent planning this tick.
    pub plan_time: Option<f64>,
    pub plan_eta: Option<f64>,
    pub candidates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub status: SimStatus,
    /// Arrival time at the goal; absent unless reached.
    pub eta: Option<f64>,
    /// States in the first plan.
    pub state_count: usize,
    /// Duration of the first plan.
    pub initial_eta: Option<f64>,
    pub plan_time_mean: f64,
    pub plan_time_p95: f64,
    /// Smallest distance minus safety radius against true obstacle states.
    #[serde(with = "super::extended")]
    pub min_clearance: f64,
    pub replans: usize,
    pub path_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub ticks: Vec<TickRecord>,
    pub summary: SimSummary,
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn clearance(p: Vec2, obstacles: &[ObstacleState], t: f64) -> f64 {
    obstacles
        .iter()
        .map(|o| p.distance(propagate_position(o, t)) - o.safety_radius)
        .fold(f64::INFINITY, f64::min)
}

struct Tracker {
    tracks: Vec<Option<KalmanTrack>>,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    noise_std: f64,
    period: f64,
    next: u64,
}

impl Tracker {
    fn new(count: usize, noise_std: f64, rate: f64, seed: u64) -> Self {
        Self {
            tracks: vec![None; count],
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise: Normal::new(0.0, noise_std).expect("noise std validated"),
            noise_std,
            period: 1.0 / rate,
            next: 0,
        }
    }

    /// Feeds every detection due at or before `t`.
    fn observe_until(&mut self, truth: &[ObstacleState], t: f64, planner: &Planner) {
        let cfg = &planner.config().kalman;
        loop {
            let stamp = self.next as f64 * self.period;
            if stamp > t + 1e-9 {
                break;
            }
            for (i, obs) in truth.iter().enumerate() {
                let jitter = Vec2::new(
                    self.noise.sample(&mut self.rng),
                    self.noise.sample(&mut self.rng),
                );
                let det = Detection {
                    obstacle_id: i as u32,
                    position: propagate_position(obs, stamp) + jitter,
                    timestamp: stamp,
                    noise_std: self.noise_std,
                };
                let slot = &mut self.tracks[i];
                *slot = Some(match slot.take() {
                    None => kf_init(&det, cfg),
                    Some(track) => kf_update(&track, &det, cfg).unwrap_or(track),
                });
            }
            self.next += 1;
        }
    }

    fn estimates(&self, radii: &[f64], t: f64, planner: &Planner) -> Vec<(ObstacleState, bool)> {
        let cfg = &planner.config().kalman;
        self.tracks
            .iter()
            .zip(radii)
            .map(|(track, &r)| {
                let track = track.as_ref().expect("every obstacle is detected at t = 0");
                let now = if t > track.last_update {
                    kf_predict(track, t - track.last_update, cfg).unwrap_or_else(|_| track.clone())
                } else {
                    track.clone()
                };
                let now = suppress_insignificant(&now, planner.config().significance_chi2);
                match track_to_obstacle(&now, r, cfg) {
                    Ok(o) => (o, true),
                    Err(_) => (ObstacleState::fixed(now.position(), r), false),
                }
            })
            .collect()
    }
}

/// Closed-loop run: obstacles move under their true models, the planner sees
/// only Kalman estimates built from noisy detections, and the vehicle follows
/// each new plan for one replanning period.
pub fn simulate_run(
    scenario: &Scenario,
    config: &PlannerConfig,
    seed: u64,
) -> Result<SimTrace, PlannerError> {
    let planner = Planner::new(scenario.clone(), *config)?;
    Ok(planner.simulate(seed))
}

impl Planner {
    pub fn simulate(&self, seed: u64) -> SimTrace {
        let sc = self.scenario();
        let tol = self.config().goal_tolerance;
        let tick = 1.0 / sc.replan_rate;
        let truth0 = &sc.obstacles;
        let radii: Vec<f64> = truth0.iter().map(|o| o.safety_radius).collect();
        let mut tracker = Tracker::new(
            truth0.len(),
            sc.detection_noise_std,
            sc.detection_rate,
            seed,
        );

        let mut ticks = Vec::new();
        let mut plan_times = Vec::new();
        let mut vehicle = sc.start;
        let mut min_clear = clearance(vehicle, truth0, 0.0);
        let mut status = if min_clear < 0.0 {
            Some(SimStatus::Collision)
        } else {
            None
        };
        let mut eta = None;
        let mut state_count = 0;
        let mut initial_eta = None;
        let mut path_length = 0.0;
        let mut step = 0u64;

        while status.is_none() {
            let t = step as f64 * tick;
            if t >= sc.sim_duration_max {
                status = Some(SimStatus::Timeout);
                break;
            }
            tracker.observe_until(truth0, t, self);
            let seen = tracker.estimates(&radii, t, self);
            let estimates: Vec<ObstacleState> = seen.iter().map(|(o, _)| *o).collect();
            let mut record = TickRecord {
                time: t,
                vehicle,
                obstacles: truth0
                    .iter()
                    .zip(&seen)
                    .enumerate()
                    .map(|(id, (o, (est, classified)))| ObstacleRecord {
                        id: id as u32,
                        truth: advance_obstacle(o, t),
                        estimate: *est,
                        classified: *classified,
                    })
                    .collect(),
                plan_id: None,
                plan_time: None,
                plan_eta: None,
                candidates: 0,
                failure: None,
            };

            let plan = match self.plan_once(vehicle, &estimates) {
                Ok(plan) => plan,
                Err(failure) => {
                    log::warn!("plan failed at t={t:.2}: {failure}");
                    if let PlanFailure::AllInfeasible { candidates } = &failure {
                        record.candidates = candidates.len();
                    }
                    record.failure = Some(failure.to_string());
                    ticks.push(record);
                    status = Some(SimStatus::Timeout);
                    break;
                }
            };
            if plan_times.is_empty() {
                state_count = plan.state_count;
                initial_eta = Some(plan.eta);
            }
            record.plan_id = Some(plan_times.len());
            record.plan_time = Some(plan.plan_time);
            record.plan_eta = Some(plan.eta);
            record.candidates = plan.candidates.len();
            plan_times.push(plan.plan_time);
            ticks.push(record);

            let substeps = (tick / SUBSTEP).ceil().max(1.0) as usize;
            for k in 1..=substeps {
                let tau = tick * k as f64 / substeps as f64;
                let p = plan.chosen.position_at(tau);
                path_length += vehicle.distance(p);
                vehicle = p;
                let c = clearance(p, truth0, t + tau);
                min_clear = min_clear.min(c);
                if c < 0.0 {
                    status = Some(SimStatus::Collision);
                    break;
                }
                if p.distance(sc.goal) <= tol {
                    eta = Some(t + plan.eta);
                    status = Some(SimStatus::Reached);
                    break;
                }
            }
            step += 1;
        }

        let mut sorted = plan_times.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = if plan_times.is_empty() {
            0.0
        } else {
            plan_times.iter().sum::<f64>() / plan_times.len() as f64
        };
        SimTrace {
            ticks,
            summary: SimSummary {
                status: status.expect("loop exits with a status"),
                eta,
                state_count,
                initial_eta,
                plan_time_mean: mean,
                plan_time_p95: nearest_rank(&sorted, 0.95),
                min_clearance: min_clear,
                replans: plan_times.len(),
                path_length,
            },
        }
    }
}
