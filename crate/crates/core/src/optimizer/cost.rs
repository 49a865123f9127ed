//! Multi-term trajectory objective and its analytic gradient.
//!
//! Decision variables are the interior positions and every segment duration.
//! With `t_i` the cumulative time of state `i`:
//!
//! ```text
//! J = w_time  * sum dt
//!   + w_obs   * sum_i sum_obs hinge(r + eps - |p_i - c(t_i)|)^2
//!   + w_smooth* sum_i k_i^2 * (|p_i - p_{i-1}| + |p_{i+1} - p_i|) / 2
//!   + w_vel   * sum_i hinge(|v_i| - v_max)^2
//!   + w_acc   * sum_i hinge(|a_i| - a_max)^2
//! ```
//!
//! where `v_i = (p_{i+1} - p_i) / dt_i`, `a_i = (v_i - v_{i-1}) / ((dt_{i-1} + dt_i) / 2)`
//! and `k_i` is the Menger curvature at interior state `i`.

use serde::{Deserialize, Serialize};

use crate::model::{KinodynamicLimits, ObstacleState, Trajectory, Vec2, DEGENERATE_EPS};
use crate::tracking::{propagate_position, propagate_velocity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_time: f64,
    pub w_obstacle: f64,
    pub w_smooth: f64,
    pub w_vel: f64,
    pub w_acc: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_time: 1.0,
            w_obstacle: 10.0,
            w_smooth: 0.5,
            w_vel: 5.0,
            w_acc: 5.0,
        }
    }
}

impl CostWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.w_time,
            self.w_obstacle,
            self.w_smooth,
            self.w_vel,
            self.w_acc,
        ]
    }

    pub fn is_valid(&self) -> bool {
        let w = self.as_array();
        w.iter().all(|x| *x >= 0.0 && x.is_finite()) && w.iter().any(|x| *x > 0.0)
    }
}

/// Per-term breakdown of [`total_cost`], already weighted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTerms {
    pub time: f64,
    pub obstacle: f64,
    pub smooth: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

impl CostTerms {
    pub fn total(&self) -> f64 {
        self.time + self.obstacle + self.smooth + self.velocity + self.acceleration
    }
}

/// Everything the objective needs besides the trajectory itself.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub obstacles: &'a [ObstacleState],
    pub weights: CostWeights,
    pub limits: KinodynamicLimits,
    /// Clearance buffer added to each safety radius.
    pub buffer: f64,
}

#[inline]
fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

impl Objective<'_> {
    pub fn terms(&self, pos: &[Vec2], dts: &[f64]) -> CostTerms {
        let n = pos.len();
        debug_assert_eq!(dts.len() + 1, n);
        let w = &self.weights;
        let mut terms = CostTerms {
            time: w.w_time * dts.iter().sum::<f64>(),
            ..CostTerms::default()
        };

        if w.w_obstacle > 0.0 && !self.obstacles.is_empty() {
            let mut t = 0.0;
            let mut acc = 0.0;
            for i in 0..n {
                for obs in self.obstacles {
                    let reach = obs.safety_radius + self.buffer;
                    let d2 = (pos[i] - propagate_position(obs, t)).norm_squared();
                    if d2 < reach * reach {
                        let h = hinge(reach - d2.sqrt());
                        acc += h * h;
                    }
                }
                if i + 1 < n {
                    t += dts[i];
                }
            }
            terms.obstacle = w.w_obstacle * acc;
        }

        if w.w_smooth > 0.0 {
            let mut acc = 0.0;
            for i in 1..n.saturating_sub(1) {
                let u = pos[i] - pos[i - 1];
                let v = pos[i + 1] - pos[i];
                let (lu, lv, ls) = (u.norm(), v.norm(), (u + v).norm());
                if lu < DEGENERATE_EPS || lv < DEGENERATE_EPS || ls < DEGENERATE_EPS {
                    continue;
                }
                let k = 2.0 * u.cross(v) / (lu * lv * ls);
                acc += k * k * 0.5 * (lu + lv);
            }
            terms.smooth = w.w_smooth * acc;
        }

        if w.w_vel > 0.0 || w.w_acc > 0.0 {
            let mut vel_acc = 0.0;
            let mut acc_acc = 0.0;
            let mut prev_v: Option<Vec2> = None;
            for i in 0..n - 1 {
                let v = (pos[i + 1] - pos[i]) * (1.0 / dts[i]);
                let h = hinge(v.norm() - self.limits.v_max);
                vel_acc += h * h;
                if let Some(pv) = prev_v {
                    let tau = 0.5 * (dts[i - 1] + dts[i]);
                    let a = (v - pv) * (1.0 / tau);
                    let h = hinge(a.norm() - self.limits.a_max);
                    acc_acc += h * h;
                }
                prev_v = Some(v);
            }
            terms.velocity = w.w_vel * vel_acc;
            terms.acceleration = w.w_acc * acc_acc;
        }
        terms
    }

    pub fn cost(&self, pos: &[Vec2], dts: &[f64]) -> f64 {
        self.terms(pos, dts).total()
    }

    /// Cost plus its gradient. Endpoint position gradients are zeroed since
    /// the endpoints are fixed. `gpos` and `gdt` are overwritten.
    pub fn cost_and_gradient(
        &self,
        pos: &[Vec2],
        dts: &[f64],
        gpos: &mut [Vec2],
        gdt: &mut [f64],
    ) -> f64 {
        let n = pos.len();
        debug_assert_eq!(dts.len() + 1, n);
        debug_assert_eq!(gpos.len(), n);
        debug_assert_eq!(gdt.len(), n - 1);
        let w = &self.weights;
        gpos.fill(Vec2::ZERO);
        gdt.fill(w.w_time);
        let mut cost = w.w_time * dts.iter().sum::<f64>();

        // Obstacle clearance, time-indexed. d cost / d t_i flows back to every
        // dt_j with j < i through a suffix sum.
        if w.w_obstacle > 0.0 && !self.obstacles.is_empty() {
            let mut gtime = vec![0.0; n];
            let mut t = 0.0;
            for i in 0..n {
                for obs in self.obstacles {
                    let c = propagate_position(obs, t);
                    let diff = pos[i] - c;
                    let reach = obs.safety_radius + self.buffer;
                    let d2 = diff.norm_squared();
                    if d2 >= reach * reach {
                        continue;
                    }
                    let d = d2.sqrt();
                    let h = reach - d;
                    cost += w.w_obstacle * h * h;
                    if d > 0.0 {
                        let dir = diff * (1.0 / d);
                        let g = 2.0 * w.w_obstacle * h;
                        gpos[i] -= dir * g;
                        gtime[i] += g * dir.dot(propagate_velocity(obs, t));
                    }
                }
                if i + 1 < n {
                    t += dts[i];
                }
            }
            let mut suffix = 0.0;
            for j in (0..n - 1).rev() {
                suffix += gtime[j + 1];
                gdt[j] += suffix;
            }
        }

        if w.w_smooth > 0.0 {
            for i in 1..n.saturating_sub(1) {
                let u = pos[i] - pos[i - 1];
                let v = pos[i + 1] - pos[i];
                let s = u + v;
                let (lu, lv, ls) = (u.norm(), v.norm(), s.norm());
                if lu < DEGENERATE_EPS || lv < DEGENERATE_EPS || ls < DEGENERATE_EPS {
                    continue;
                }
                let scale = 2.0 / (lu * lv * ls);
                let k = scale * u.cross(v);
                let len = 0.5 * (lu + lv);
                cost += w.w_smooth * k * k * len;
                let dk_du = Vec2::new(v.y, -v.x) * scale
                    - (u * (1.0 / (lu * lu)) + s * (1.0 / (ls * ls))) * k;
                let dk_dv = Vec2::new(-u.y, u.x) * scale
                    - (v * (1.0 / (lv * lv)) + s * (1.0 / (ls * ls))) * k;
                let df_du = (dk_du * (2.0 * k * len) + u * (k * k * 0.5 / lu)) * w.w_smooth;
                let df_dv = (dk_dv * (2.0 * k * len) + v * (k * k * 0.5 / lv)) * w.w_smooth;
                gpos[i - 1] -= df_du;
                gpos[i] += df_du - df_dv;
                gpos[i + 1] += df_dv;
            }
        }

        if w.w_vel > 0.0 || w.w_acc > 0.0 {
            let vels: Vec<Vec2> = (0..n - 1)
                .map(|i| (pos[i + 1] - pos[i]) * (1.0 / dts[i]))
                .collect();
            // d cost / d v_i, pushed to positions and dts at the end.
            let mut gvel = vec![Vec2::ZERO; n - 1];
            for (i, v) in vels.iter().enumerate() {
                let speed = v.norm();
                let h = speed - self.limits.v_max;
                if h > 0.0 && w.w_vel > 0.0 {
                    cost += w.w_vel * h * h;
                    gvel[i] += *v * (2.0 * w.w_vel * h / speed);
                }
            }
            if w.w_acc > 0.0 {
                for i in 1..n - 1 {
                    let tau = 0.5 * (dts[i - 1] + dts[i]);
                    let a = (vels[i] - vels[i - 1]) * (1.0 / tau);
                    let mag = a.norm();
                    let h = mag - self.limits.a_max;
                    if h <= 0.0 {
                        continue;
                    }
                    cost += w.w_acc * h * h;
                    let ga = a * (2.0 * w.w_acc * h / mag);
                    gvel[i] += ga * (1.0 / tau);
                    gvel[i - 1] -= ga * (1.0 / tau);
                    let gtau = -ga.dot(a) / tau;
                    gdt[i - 1] += 0.5 * gtau;
                    gdt[i] += 0.5 * gtau;
                }
            }
            for i in 0..n - 1 {
                let g = gvel[i];
                if g == Vec2::ZERO {
                    continue;
                }
                let inv = 1.0 / dts[i];
                gpos[i + 1] += g * inv;
                gpos[i] -= g * inv;
                gdt[i] -= g.dot(vels[i]) * inv;
            }
        }

        gpos[0] = Vec2::ZERO;
        gpos[n - 1] = Vec2::ZERO;
        cost
    }
}

/// Objective value of `traj`.
pub fn total_cost(
    traj: &Trajectory,
    obstacles: &[ObstacleState],
    weights: &CostWeights,
    limits: &KinodynamicLimits,
    buffer: f64,
) -> f64 {
    Objective {
        obstacles,
        weights: *weights,
        limits: *limits,
        buffer,
    }
    .cost(&traj.positions(), &traj.intervals())
}

/// Gradient of [`total_cost`] with respect to every position (zero at the
/// fixed endpoints) and every segment duration.
#[derive(Debug, Clone, PartialEq)]
pub struct CostGradient {
    pub positions: Vec<Vec2>,
    pub intervals: Vec<f64>,
}

pub fn cost_gradient(
    traj: &Trajectory,
    obstacles: &[ObstacleState],
    weights: &CostWeights,
    limits: &KinodynamicLimits,
    buffer: f64,
) -> CostGradient {
    let pos = traj.positions();
    let dts = traj.intervals();
    let mut positions = vec![Vec2::ZERO; pos.len()];
    let mut intervals = vec![0.0; dts.len()];
    Objective {
        obstacles,
        weights: *weights,
        limits: *limits,
        buffer,
    }
    .cost_and_gradient(&pos, &dts, &mut positions, &mut intervals);
    CostGradient {
        positions,
        intervals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MotionModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const BUFFER: f64 = 0.05;

    /// Straight-line re-implementation of the objective, one term at a time,
    /// sharing no code with [`Objective`].
    fn oracle_cost(
        p: &[(f64, f64)],
        dt: &[f64],
        obs: &[ObstacleState],
        w: &CostWeights,
        lim: &KinodynamicLimits,
    ) -> f64 {
        let n = p.len();
        let dist =
            |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        let mut j = w.w_time * dt.iter().sum::<f64>();
        let mut time = 0.0;
        for i in 0..n {
            for o in obs {
                let (vx, vy, ax, ay) = match o.model {
                    MotionModel::Static => (0.0, 0.0, 0.0, 0.0),
                    MotionModel::ConstVelocity => (o.velocity.x, o.velocity.y, 0.0, 0.0),
                    MotionModel::ConstAcceleration => (
                        o.velocity.x,
                        o.velocity.y,
                        o.acceleration.x,
                        o.acceleration.y,
                    ),
                };
                let c = (
                    o.position.x + vx * time + 0.5 * ax * time * time,
                    o.position.y + vy * time + 0.5 * ay * time * time,
                );
                let viol = (o.safety_radius + BUFFER - dist(p[i], c)).max(0.0);
                j += w.w_obstacle * viol * viol;
            }
            if i < n - 1 {
                time += dt[i];
            }
        }
        for i in 1..n - 1 {
            let (a, b, c) = (
                dist(p[i - 1], p[i]),
                dist(p[i], p[i + 1]),
                dist(p[i - 1], p[i + 1]),
            );
            if a < 1e-9 || b < 1e-9 || c < 1e-9 {
                continue;
            }
            let area2 = (p[i].0 - p[i - 1].0) * (p[i + 1].1 - p[i - 1].1)
                - (p[i].1 - p[i - 1].1) * (p[i + 1].0 - p[i - 1].0);
            let k = 2.0 * area2 / (a * b * c);
            j += w.w_smooth * k * k * (a + b) / 2.0;
        }
        let vel = |i: usize| ((p[i + 1].0 - p[i].0) / dt[i], (p[i + 1].1 - p[i].1) / dt[i]);
        for i in 0..n - 1 {
            let v = vel(i);
            let viol = ((v.0 * v.0 + v.1 * v.1).sqrt() - lim.v_max).max(0.0);
            j += w.w_vel * viol * viol;
        }
        for i in 1..n - 1 {
            let (v0, v1) = (vel(i - 1), vel(i));
            let tau = (dt[i - 1] + dt[i]) / 2.0;
            let a = ((v1.0 - v0.0) / tau, (v1.1 - v0.1) / tau);
            let viol = ((a.0 * a.0 + a.1 * a.1).sqrt() - lim.a_max).max(0.0);
            j += w.w_acc * viol * viol;
        }
        j
    }

    fn random_case(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec2>, Vec<f64>, Vec<ObstacleState>) {
        let mut pos = Vec::with_capacity(n);
        for i in 0..n {
            let x = -3.0 + 6.0 * i as f64 / (n - 1) as f64 + rng.random_range(-0.15..0.15);
            pos.push(Vec2::new(x, rng.random_range(-0.6..0.6)));
        }
        let dts = (0..n - 1).map(|_| rng.random_range(0.1..0.8)).collect();
        let mut obs = Vec::new();
        for k in 0..3 {
            let p = Vec2::new(rng.random_range(-2.5..2.5), rng.random_range(-0.5..0.5));
            let v = Vec2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            let a = Vec2::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
            let r = rng.random_range(0.3..0.7);
            obs.push(match k {
                0 => ObstacleState::fixed(p, r),
                1 => ObstacleState::constant_velocity(p, v, r),
                _ => ObstacleState::constant_acceleration(p, v, a, r),
            });
        }
        (pos, dts, obs)
    }

    #[test]
    fn idle_straight_trajectory_costs_only_time() {
        let lim = KinodynamicLimits::default();
        let w = CostWeights::default();
        // 8 m at v_max / 2 = 32 s.
        let t = Trajectory::from_positions(&[Vec2::new(-4.0, 0.0), Vec2::new(4.0, 0.0)], &[32.0])
            .unwrap();
        assert_eq!(total_cost(&t, &[], &w, &lim, BUFFER), w.w_time * 32.0);
    }

    #[test]
    fn state_on_obstacle_center_pays_full_violation() {
        let lim = KinodynamicLimits::default();
        let w = CostWeights {
            w_time: 0.0,
            w_smooth: 0.0,
            w_vel: 0.0,
            w_acc: 0.0,
            ..CostWeights::default()
        };
        let obs = [ObstacleState::fixed(Vec2::new(1.0, 0.0), 0.5)];
        let t = Trajectory::from_positions(
            &[
                Vec2::new(-4.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(4.0, 0.0),
            ],
            &[1.0, 1.0],
        )
        .unwrap();
        let expected = w.w_obstacle * (0.5f64 + BUFFER).powi(2);
        assert!((total_cost(&t, &obs, &w, &lim, BUFFER) - expected).abs() < 1e-12);
        // No direction to push in: the gradient there is zero.
        let g = cost_gradient(&t, &obs, &w, &lim, BUFFER);
        assert_eq!(g.positions[1], Vec2::ZERO);
    }

    #[test]
    fn cost_matches_independent_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lim = KinodynamicLimits::default();
        let w = CostWeights::default();
        for _ in 0..50 {
            let (pos, dts, obs) = random_case(&mut rng, 10);
            let t = Trajectory::from_positions(&pos, &dts).unwrap();
            let pts: Vec<(f64, f64)> = pos.iter().map(|p| (p.x, p.y)).collect();
            let expected = oracle_cost(&pts, &dts, &obs, &w, &lim);
            let got = total_cost(&t, &obs, &w, &lim, BUFFER);
            assert!(
                (got - expected).abs() <= 1e-9 * expected.abs().max(1.0),
                "{got} vs {expected}"
            );
        }
    }

    #[test]
    fn straight_constant_speed_gradient() {
        let lim = KinodynamicLimits::default();
        let w = CostWeights::default();
        let pos: Vec<Vec2> = (0..9).map(|i| Vec2::new(i as f64 * 0.25, 0.0)).collect();
        let t = Trajectory::from_positions(&pos, &[1.0; 8]).unwrap();
        let g = cost_gradient(&t, &[], &w, &lim, BUFFER);
        assert!(g.positions.iter().all(|p| *p == Vec2::ZERO));
        assert!(g.intervals.iter().all(|&d| d == w.w_time));
    }

    #[test]
    fn endpoint_gradients_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (pos, dts, obs) = random_case(&mut rng, 8);
        let t = Trajectory::from_positions(&pos, &dts).unwrap();
        let g = cost_gradient(
            &t,
            &obs,
            &CostWeights::default(),
            &KinodynamicLimits::default(),
            BUFFER,
        );
        assert_eq!(g.positions[0], Vec2::ZERO);
        assert_eq!(g.positions[7], Vec2::ZERO);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let lim = KinodynamicLimits {
            v_max: 0.5,
            a_max: 0.5,
        };
        let w = CostWeights::default();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let (pos, dts, obs) = random_case(&mut rng, 15);
            let obj = Objective {
                obstacles: &obs,
                weights: w,
                limits: lim,
                buffer: BUFFER,
            };
            let mut gp = vec![Vec2::ZERO; pos.len()];
            let mut gd = vec![0.0; dts.len()];
            obj.cost_and_gradient(&pos, &dts, &mut gp, &mut gd);
            for i in 1..pos.len() - 1 {
                for axis in 0..2 {
                    let bump = |s: f64| {
                        let mut p = pos.clone();
                        if axis == 0 {
                            p[i].x += s
                        } else {
                            p[i].y += s
                        }
                        obj.cost(&p, &dts)
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    let an = if axis == 0 { gp[i].x } else { gp[i].y };
                    worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1.0));
                }
            }
            for j in 0..dts.len() {
                let bump = |s: f64| {
                    let mut d = dts.clone();
                    d[j] += s;
                    obj.cost(&pos, &d)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                worst = worst.max((fd - gd[j]).abs() / gd[j].abs().max(fd.abs()).max(1.0));
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn gradient_call_agrees_with_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (pos, dts, obs) = random_case(&mut rng, 12);
        let obj = Objective {
            obstacles: &obs,
            weights: CostWeights::default(),
            limits: KinodynamicLimits::default(),
            buffer: BUFFER,
        };
        let mut gp = vec![Vec2::ZERO; pos.len()];
        let mut gd = vec![0.0; dts.len()];
        let c = obj.cost_and_gradient(&pos, &dts, &mut gp, &mut gd);
        assert!((c - obj.cost(&pos, &dts)).abs() <= 1e-12 * c.abs().max(1.0));
    }
}
