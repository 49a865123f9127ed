//! Curvature-adaptive state spacing and the trajectory-density metric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{arc_length, polyline_curvatures, Trajectory, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    /// States closer than this are merged away outside bends.
    pub d_min: f64,
    /// Maximum spacing on straight stretches.
    pub d_max: f64,
    /// Maximum spacing next to a bend.
    pub d_max_bend: f64,
    /// |curvature| above this marks a state as part of a bend.
    pub kappa_thresh: f64,
}

impl Default for DensityParams {
    fn default() -> Self {
        Self {
            d_min: 0.05,
            d_max: 0.3,
            d_max_bend: 0.1,
            kappa_thresh: 0.5,
        }
    }
}

impl DensityParams {
    pub fn is_valid(&self) -> bool {
        self.d_min > 0.0
            && self.d_min < self.d_max_bend
            && self.d_max_bend <= self.d_max
            && self.d_max.is_finite()
            && self.kappa_thresh >= 0.0
    }

    fn is_bend(&self, kappa: f64) -> bool {
        kappa.abs() > self.kappa_thresh
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("trajectory has zero arc length")]
    ZeroLength,
}

/// States per meter over the whole trajectory and within bend / straight
/// regions. A region with no segments reports `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub aggregate: f64,
    pub bend: Option<f64>,
    pub straight: Option<f64>,
}

/// Whether segment `i` (between states `i` and `i + 1`) lies in a bend.
fn bend_segment(curv: &[f64], i: usize, params: &DensityParams) -> bool {
    params.is_bend(curv[i]) || params.is_bend(curv[i + 1])
}

pub fn trajectory_density(
    traj: &Trajectory,
    params: &DensityParams,
) -> Result<DensityReport, DensityError> {
    let length = arc_length(traj);
    if !(length > 0.0) {
        return Err(DensityError::ZeroLength);
    }
    let pos = traj.positions();
    let curv = polyline_curvatures(&pos);
    let (mut bend, mut straight) = ((0usize, 0.0), (0usize, 0.0));
    for i in 0..pos.len() - 1 {
        let len = pos[i].distance(pos[i + 1]);
        if len <= 0.0 {
            continue;
        }
        let region = if bend_segment(&curv, i, params) {
            &mut bend
        } else {
            &mut straight
        };
        region.0 += 1;
        region.1 += len;
    }
    let mean = |(count, len): (usize, f64)| (count > 0).then(|| count as f64 / len);
    Ok(DensityReport {
        aggregate: traj.len() as f64 / length,
        bend: mean(bend),
        straight: mean(straight),
    })
}

/// Refines spacing where it is too coarse (tighter next to bends) and merges
/// states that are too close outside bends. Endpoints never move.
pub fn adapt_density(traj: &Trajectory, params: &DensityParams) -> Trajectory {
    let mut pos = traj.positions();
    let mut dts = traj.intervals();
    adapt_density_in_place(&mut pos, &mut dts, params);
    Trajectory::from_positions(&pos, &dts).expect("density adaptation keeps intervals positive")
}

/// Returns true if anything changed.
pub(crate) fn adapt_density_in_place(
    pos: &mut Vec<Vec2>,
    dts: &mut Vec<f64>,
    params: &DensityParams,
) -> bool {
    let total: f64 = pos.windows(2).map(|w| w[0].distance(w[1])).sum();
    // Enough passes for the state count to reach length / (d_min / 2) twice over.
    let max_passes = 64 + 4 * (total / params.d_min).ceil() as usize;
    let mut changed_any = false;
    for _ in 0..max_passes {
        let changed = refine(pos, dts, params) || coarsen(pos, dts, params);
        if !changed {
            return changed_any;
        }
        changed_any = true;
    }
    log::warn!("density adaptation hit its pass limit ({max_passes})");
    changed_any
}

fn refine(pos: &mut Vec<Vec2>, dts: &mut Vec<f64>, params: &DensityParams) -> bool {
    let curv = polyline_curvatures(pos);
    let n = pos.len();
    let split: Vec<bool> = (0..n - 1)
        .map(|i| {
            let limit = if bend_segment(&curv, i, params) {
                params.d_max_bend
            } else {
                params.d_max
            };
            pos[i].distance(pos[i + 1]) > limit
        })
        .collect();
    if !split.contains(&true) {
        return false;
    }
    let mut new_pos = Vec::with_capacity(2 * n);
    let mut new_dts = Vec::with_capacity(2 * n);
    for i in 0..n - 1 {
        new_pos.push(pos[i]);
        if split[i] {
            new_pos.push(pos[i].lerp(pos[i + 1], 0.5));
            new_dts.push(0.5 * dts[i]);
            new_dts.push(0.5 * dts[i]);
        } else {
            new_dts.push(dts[i]);
        }
    }
    new_pos.push(pos[n - 1]);
    *pos = new_pos;
    *dts = new_dts;
    true
}

fn coarsen(pos: &mut Vec<Vec2>, dts: &mut Vec<f64>, params: &DensityParams) -> bool {
    let n = pos.len();
    if n <= 2 {
        return false;
    }
    let curv = polyline_curvatures(pos);
    let seg = |i: usize| pos[i].distance(pos[i + 1]);
    let mut remove = vec![false; n];
    let mut i = 0;
    while i + 1 < n {
        if seg(i) < params.d_min && !bend_segment(&curv, i, params) {
            // Drop whichever endpoint is interior; between two interior
            // states, the one whose other neighbor segment is shorter.
            let victim = match (i == 0, i + 1 == n - 1) {
                (true, true) => None,
                (true, false) => Some(i + 1),
                (false, true) => Some(i),
                (false, false) => Some(if seg(i - 1) <= seg(i + 1) { i } else { i + 1 }),
            };
            if let Some(v) = victim {
                if !remove[v] && !(v > 0 && remove[v - 1]) {
                    remove[v] = true;
                    // Neighbors of a removed state are left for the next pass.
                    i = v + 2;
                    continue;
                }
            }
        }
        i += 1;
    }
    if !remove.contains(&true) {
        return false;
    }
    let mut new_pos = Vec::with_capacity(n);
    let mut new_dts: Vec<f64> = Vec::with_capacity(n);
    for k in 0..n {
        if remove[k] {
            // The removed state's outgoing interval merges into its predecessor's.
            *new_dts.last_mut().expect("state 0 is never removed") += dts[k];
            continue;
        }
        new_pos.push(pos[k]);
        if k + 1 < n {
            new_dts.push(dts[k]);
        }
    }
    *pos = new_pos;
    *dts = new_dts;
    true
}
