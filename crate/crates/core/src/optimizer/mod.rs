//! Timed-trajectory optimization for a single homotopy candidate.
//!
//! Each outer round re-weights the objective (obstacle weight grows
//! geometrically), runs projected gradient descent with a backtracking line
//! search over interior positions and all segment durations, then re-spaces
//! the states with [`adapt_density`].

mod cost;
mod density;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homotopy::{signatures_equivalent, winding_signature, SeedPath};
use crate::model::{KinodynamicLimits, ObstacleState, Trajectory, Vec2};

pub use cost::{cost_gradient, total_cost, CostGradient, CostTerms, CostWeights, Objective};
pub use density::{adapt_density, trajectory_density, DensityError, DensityParams, DensityReport};

/// Bounds on the Barzilai-Borwein trial step.
const MIN_STEP: f64 = 1e-8;
const MAX_STEP: f64 = 1e3;

static DESCENT_VIOLATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of accepted line-search steps, process-wide, that raised the cost.
/// Must stay zero.
pub fn descent_violations() -> usize {
    DESCENT_VIOLATIONS.load(Ordering::Relaxed)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("cost became non-finite during descent (outer round {round}, iteration {iteration})")]
    NonFiniteCost { round: usize, iteration: usize },
    #[error("seed path needs at least two waypoints")]
    DegenerateSeed,
}

/// Descent and scheduling knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentSettings {
    /// Clearance buffer added to every safety radius in the obstacle term.
    pub clearance_buffer: f64,
    /// Per-round growth of the obstacle weight.
    pub growth: f64,
    /// The obstacle weight never exceeds `cap_factor` times its base value.
    pub cap_factor: f64,
    pub outer_rounds: usize,
    pub max_inner_iterations: usize,
    /// Inner loop stops once an iteration lowers the cost by less than this
    /// fraction.
    pub relative_tolerance: f64,
    pub dt_min: f64,
    pub armijo: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for DescentSettings {
    fn default() -> Self {
        Self {
            clearance_buffer: 0.05,
            growth: 2.0,
            cap_factor: 16.0,
            outer_rounds: 5,
            max_inner_iterations: 100,
            relative_tolerance: 1e-4,
            dt_min: 0.01,
            armijo: 1e-4,
            initial_step: 0.01,
            max_backtracks: 30,
        }
    }
}

/// Everything `optimize_candidate` needs apart from the seed and obstacles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub weights: CostWeights,
    pub limits: KinodynamicLimits,
    pub density: DensityParams,
    pub descent: DescentSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    /// Cost under the base (unscaled) weights.
    pub final_cost: f64,
    /// Descent iterations over all rounds; each takes up to one step on the
    /// positions and one on the durations.
    pub iterations: usize,
    /// The last inner loop met the relative tolerance.
    pub converged: bool,
    pub signature_preserved: bool,
    pub outer_rounds: usize,
}

/// Obstacle weight scaled by `growth^outer_iter`, capped at `cap_factor`
/// times the base; other weights unchanged.
pub fn dynamic_weights(
    base: &CostWeights,
    outer_iter: usize,
    growth: f64,
    cap_factor: f64,
) -> CostWeights {
    let exponent = i32::try_from(outer_iter).unwrap_or(i32::MAX);
    let factor = growth.powi(exponent).min(cap_factor);
    CostWeights {
        w_obstacle: base.w_obstacle * factor,
        ..*base
    }
}

/// Raises any segment duration that would exceed `v_max`.
pub fn enforce_speed_limit(traj: &Trajectory, v_max: f64) -> Trajectory {
    let pos = traj.positions();
    let dts: Vec<f64> = traj
        .intervals()
        .iter()
        .enumerate()
        .map(|(i, &dt)| dt.max(pos[i].distance(pos[i + 1]) / v_max))
        .collect();
    Trajectory::from_positions(&pos, &dts).expect("durations only grow")
}

/// Resamples the seed polyline at no more than `spacing`, keeping every
/// waypoint, with durations sized for `speed`.
pub fn initial_trajectory(
    waypoints: &[Vec2],
    spacing: f64,
    speed: f64,
    dt_min: f64,
) -> Option<Trajectory> {
    if waypoints.len() < 2 {
        return None;
    }
    let mut pos = vec![waypoints[0]];
    let mut dts = Vec::new();
    for w in waypoints.windows(2) {
        let len = w[0].distance(w[1]);
        let pieces = ((len / spacing).ceil() as usize).max(1);
        for k in 1..=pieces {
            pos.push(if k == pieces {
                w[1]
            } else {
                w[0].lerp(w[1], k as f64 / pieces as f64)
            });
            dts.push((len / pieces as f64 / speed).max(dt_min));
        }
    }
    Trajectory::from_positions(&pos, &dts).ok()
}

struct Descent<'a> {
    objective: Objective<'a>,
    settings: &'a DescentSettings,
}

struct InnerOutcome {
    iterations: usize,
    converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Positions,
    Durations,
}

/// Independent step sizes for the position and duration blocks, which are
/// scaled very differently.
#[derive(Debug, Clone, Copy)]
struct StepSizes {
    positions: f64,
    durations: f64,
}

impl StepSizes {
    fn get(&mut self, block: Block) -> &mut f64 {
        match block {
            Block::Positions => &mut self.positions,
            Block::Durations => &mut self.durations,
        }
    }
}

struct Scratch {
    gpos: Vec<Vec2>,
    gdt: Vec<f64>,
    trial_pos: Vec<Vec2>,
    trial_dts: Vec<f64>,
}

impl Descent<'_> {
    /// One projected-gradient step on `block` with Armijo backtracking.
    /// Returns the new cost, or `None` if no step size decreases the cost.
    fn block_step(
        &self,
        block: Block,
        pos: &mut [Vec2],
        dts: &mut [f64],
        cost: f64,
        step: &mut f64,
        w: &mut Scratch,
        round: usize,
        iteration: usize,
    ) -> Result<Option<f64>, OptimizeError> {
        let s = self.settings;
        let n = pos.len();
        w.trial_pos.copy_from_slice(pos);
        w.trial_dts.copy_from_slice(dts);
        for _ in 0..s.max_backtracks {
            let mut decrease = 0.0;
            match block {
                Block::Positions => {
                    for i in 1..n - 1 {
                        w.trial_pos[i] = pos[i] - w.gpos[i] * *step;
                        decrease += w.gpos[i].norm_squared() * *step;
                    }
                }
                Block::Durations => {
                    for j in 0..n - 1 {
                        w.trial_dts[j] = (dts[j] - w.gdt[j] * *step).max(s.dt_min);
                        decrease += w.gdt[j] * (dts[j] - w.trial_dts[j]);
                    }
                }
            }
            if decrease <= 0.0 {
                return Ok(None);
            }
            let trial = self.objective.cost(&w.trial_pos, &w.trial_dts);
            if !trial.is_finite() {
                return Err(OptimizeError::NonFiniteCost { round, iteration });
            }
            if trial <= cost - s.armijo * decrease {
                if trial > cost {
                    DESCENT_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
                    debug_assert!(trial <= cost, "accepted step raised cost {cost} -> {trial}");
                }
                pos.copy_from_slice(&w.trial_pos);
                dts.copy_from_slice(&w.trial_dts);
                *step *= 2.0;
                return Ok(Some(trial));
            }
            *step *= 0.5;
        }
        Ok(None)
    }

    /// Projected gradient descent alternating between the position and
    /// duration blocks; updates `pos` and `dts` in place.
    fn run(
        &self,
        pos: &mut [Vec2],
        dts: &mut [f64],
        steps: &mut StepSizes,
        round: usize,
    ) -> Result<InnerOutcome, OptimizeError> {
        let s = self.settings;
        let n = pos.len();
        let mut w = Scratch {
            gpos: vec![Vec2::ZERO; n],
            gdt: vec![0.0; n - 1],
            trial_pos: pos.to_vec(),
            trial_dts: dts.to_vec(),
        };
        let mut cost = self
            .objective
            .cost_and_gradient(pos, dts, &mut w.gpos, &mut w.gdt);
        if !cost.is_finite() {
            return Err(OptimizeError::NonFiniteCost {
                round,
                iteration: 0,
            });
        }
        let mut iterations = 0;
        for iteration in 1..=s.max_inner_iterations {
            let previous = cost;
            let mut moved = false;
            for block in [Block::Positions, Block::Durations] {
                let (old_pos, old_gpos) = (pos.to_vec(), w.gpos.clone());
                let (old_dts, old_gdt) = (dts.to_vec(), w.gdt.clone());
                if let Some(new_cost) = self.block_step(
                    block,
                    pos,
                    dts,
                    cost,
                    steps.get(block),
                    &mut w,
                    round,
                    iteration,
                )? {
                    moved = true;
                    cost = self
                        .objective
                        .cost_and_gradient(pos, dts, &mut w.gpos, &mut w.gdt);
                    debug_assert!((cost - new_cost).abs() <= 1e-9 * cost.abs().max(1.0));
                    // Barzilai-Borwein estimate for the next trial step.
                    let (ss, sy) = match block {
                        Block::Positions => (1..n - 1).fold((0.0, 0.0), |(ss, sy), i| {
                            let d = pos[i] - old_pos[i];
                            (ss + d.norm_squared(), sy + d.dot(w.gpos[i] - old_gpos[i]))
                        }),
                        Block::Durations => (0..n - 1).fold((0.0, 0.0), |(ss, sy), j| {
                            let d = dts[j] - old_dts[j];
                            (ss + d * d, sy + d * (w.gdt[j] - old_gdt[j]))
                        }),
                    };
                    if sy > 0.0 && ss > 0.0 {
                        *steps.get(block) = (ss / sy).clamp(MIN_STEP, MAX_STEP);
                    }
                }
            }
            if !moved {
                // No descent direction left at any step size: stationary.
                return Ok(InnerOutcome {
                    iterations,
                    converged: true,
                });
            }
            iterations += 1;
            if previous - cost <= s.relative_tolerance * previous.abs().max(f64::MIN_POSITIVE) {
                return Ok(InnerOutcome {
                    iterations,
                    converged: true,
                });
            }
        }
        Ok(InnerOutcome {
            iterations,
            converged: false,
        })
    }
}

/// Optimizes one seed path into a timed trajectory.
///
/// Returns the trajectory and a report whose `signature_preserved` says
/// whether the result still winds around every obstacle (at its current
/// position) the same way as the seed.
pub fn optimize_candidate(
    seed: &SeedPath,
    obstacles: &[ObstacleState],
    config: &OptimizerConfig,
) -> Result<(Trajectory, OptimizeReport), OptimizeError> {
    let s = &config.descent;
    let initial = initial_trajectory(
        &seed.waypoints,
        config.density.d_max,
        0.5 * config.limits.v_max,
        s.dt_min,
    )
    .ok_or(OptimizeError::DegenerateSeed)?;
    let mut pos = initial.positions();
    let mut dts = initial.intervals();
    density::adapt_density_in_place(&mut pos, &mut dts, &config.density);

    let mut steps = StepSizes {
        positions: s.initial_step,
        durations: s.initial_step,
    };
    let mut iterations = 0;
    let mut converged = false;
    let mut rounds = 0;
    for round in 0..s.outer_rounds.max(1) {
        rounds = round + 1;
        let objective = Objective {
            obstacles,
            weights: dynamic_weights(&config.weights, round, s.growth, s.cap_factor),
            limits: config.limits,
            buffer: s.clearance_buffer,
        };
        let outcome = Descent {
            objective,
            settings: s,
        }
        .run(&mut pos, &mut dts, &mut steps, round)?;
        iterations += outcome.iterations;
        converged = outcome.converged;
        let respaced = density::adapt_density_in_place(&mut pos, &mut dts, &config.density);
        // Further rounds only raise the obstacle weight; with no violation
        // left and nothing re-spaced they cannot change the result.
        let violation = objective.terms(&pos, &dts).obstacle;
        if converged && !respaced && violation == 0.0 {
            break;
        }
    }

    let raw = Trajectory::from_positions(&pos, &dts).expect("descent keeps durations >= dt_min");
    let traj = enforce_speed_limit(&raw, config.limits.v_max);

    let centers: Vec<Vec2> = obstacles.iter().map(|o| o.position).collect();
    let signature_preserved = winding_signature(&traj.positions(), &centers)
        .ok()
        .and_then(|sig| signatures_equivalent(&sig, &seed.signature).ok())
        .unwrap_or(false);
    let final_cost = total_cost(
        &traj,
        obstacles,
        &config.weights,
        &config.limits,
        s.clearance_buffer,
    );
    if !final_cost.is_finite() {
        return Err(OptimizeError::NonFiniteCost {
            round: rounds,
            iteration: iterations,
        });
    }
    Ok((
        traj,
        OptimizeReport {
            final_cost,
            iterations,
            converged,
            signature_preserved,
            outer_rounds: rounds,
        },
    ))
}
