//! Local cost grid with exponential inflation, and the time-indexed segment
//! collision check used for seeding and feasibility.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ObstacleState, Vec2};
use crate::tracking::propagate_position;

/// Cost assigned at the outer edge of the inflation skirt.
pub const INFLATION_EDGE_COST: f64 = 0.01;
/// Maximum spatial step of [`segment_is_free`], meters.
pub const CHECK_STEP_M: f64 = 0.05;
/// Maximum temporal step of [`segment_is_free`], seconds.
pub const CHECK_STEP_S: f64 = 0.05;
/// Default grid resolution, m per cell.
pub const DEFAULT_RESOLUTION: f64 = 0.1;
/// Default padding around the scenario bounding box, m.
pub const DEFAULT_PADDING: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostmapError {
    #[error("resolution must be > 0 (got {0})")]
    BadResolution(f64),
    #[error("bounds are degenerate")]
    DegenerateBounds,
    #[error("inflation factor must be >= 1 (got {0})")]
    BadInflation(f64),
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    /// Smallest box containing `points`, grown by `padding` on every side.
    pub fn around(points: impl IntoIterator<Item = Vec2>, padding: f64) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut min, mut max) = (first, first);
        for p in it {
            min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
            max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
        }
        let pad = Vec2::new(padding, padding);
        Some(Self::new(min - pad, max + pad))
    }

    pub fn translated(self, by: Vec2) -> Self {
        Self::new(self.min + by, self.max + by)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.max.x > self.min.x && self.max.y > self.min.y)
            || !(self.min.is_finite() && self.max.is_finite())
    }
}

/// Shape of the cost skirt around each obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InflationParams {
    /// Inflation radius as a multiple of the obstacle's safety radius.
    pub radius_factor: f64,
}

impl Default for InflationParams {
    fn default() -> Self {
        Self { radius_factor: 2.0 }
    }
}

impl InflationParams {
    /// Cost at distance `d` from an obstacle center.
    ///
    /// 1 inside the safety radius, then `exp(-decay * (d - r))` with decay
    /// chosen so the cost reaches [`INFLATION_EDGE_COST`] at the inflation
    /// radius, and 0 beyond it.
    pub fn cost_at(&self, d: f64, safety_radius: f64) -> f64 {
        let inflation = safety_radius * self.radius_factor;
        if d <= safety_radius {
            1.0
        } else if d <= inflation {
            (-self.decay(safety_radius) * (d - safety_radius)).exp()
        } else {
            0.0
        }
    }

    pub fn decay(&self, safety_radius: f64) -> f64 {
        let band = safety_radius * (self.radius_factor - 1.0);
        if band > 0.0 {
            -INFLATION_EDGE_COST.ln() / band
        } else {
            f64::INFINITY
        }
    }
}

/// Row-major grid of costs in `[0, 1]`; 1 is lethal.
#[derive(Debug, Clone, PartialEq)]
pub struct CostGrid {
    pub origin: Vec2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<f64>,
}

impl CostGrid {
    pub fn cell(&self, ix: usize, iy: usize) -> f64 {
        self.cells[iy * self.width + ix]
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2 {
        self.origin
            + Vec2::new(
                (ix as f64 + 0.5) * self.resolution,
                (iy as f64 + 0.5) * self.resolution,
            )
    }

    /// Cell containing `p`, if inside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let local = (p - self.origin) * (1.0 / self.resolution);
        if local.x < 0.0 || local.y < 0.0 {
            return None;
        }
        let (ix, iy) = (local.x as usize, local.y as usize);
        (ix < self.width && iy < self.height).then_some((ix, iy))
    }

    pub fn extent(&self) -> Bounds {
        Bounds::new(
            self.origin,
            self.origin
                + Vec2::new(
                    self.width as f64 * self.resolution,
                    self.height as f64 * self.resolution,
                ),
        )
    }

    /// Binary PGM (P5) with costs scaled to 0..=255, top row first.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let mut row = Vec::with_capacity(self.width);
        for iy in (0..self.height).rev() {
            row.clear();
            row.extend((0..self.width).map(|ix| (self.cell(ix, iy) * 255.0).round() as u8));
            out.write_all(&row)?;
        }
        Ok(())
    }
}

/// Stamps every obstacle at its predicted position at time `t`.
pub fn build_costmap(
    obstacles: &[ObstacleState],
    t: f64,
    bounds: Bounds,
    resolution: f64,
    inflation: &InflationParams,
) -> Result<CostGrid, CostmapError> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(CostmapError::BadResolution(resolution));
    }
    if bounds.is_degenerate() {
        return Err(CostmapError::DegenerateBounds);
    }
    if !(inflation.radius_factor >= 1.0) {
        return Err(CostmapError::BadInflation(inflation.radius_factor));
    }
    let width = (((bounds.max.x - bounds.min.x) / resolution).ceil() as usize).max(1);
    let height = (((bounds.max.y - bounds.min.y) / resolution).ceil() as usize).max(1);
    let mut grid = CostGrid {
        origin: bounds.min,
        resolution,
        width,
        height,
        cells: vec![0.0; width * height],
    };
    for obs in obstacles {
        let center = propagate_position(obs, t.max(0.0));
        let reach = obs.safety_radius * inflation.radius_factor;
        // Only the cells whose centers can fall within reach; out-of-bounds
        // obstacles are clipped to the grid.
        let lo = (center - Vec2::new(reach, reach) - grid.origin) * (1.0 / resolution);
        let hi = (center + Vec2::new(reach, reach) - grid.origin) * (1.0 / resolution);
        let clamp = |v: f64, n: usize| v.floor().clamp(0.0, n as f64) as usize;
        let (x0, x1) = (clamp(lo.x, width), clamp(hi.x + 1.0, width));
        let (y0, y1) = (clamp(lo.y, height), clamp(hi.y + 1.0, height));
        for iy in y0..y1 {
            for ix in x0..x1 {
                let d = grid.cell_center(ix, iy).distance(center);
                let c = inflation.cost_at(d, obs.safety_radius);
                let cell = &mut grid.cells[iy * width + ix];
                *cell = cell.max(c);
            }
        }
    }
    Ok(grid)
}

/// Bilinear interpolation between cell centers. Points outside the grid
/// extent cost 0; inside the half-cell border the edge cells are held.
pub fn query_cost(grid: &CostGrid, p: Vec2) -> f64 {
    let ext = grid.extent();
    if p.x < ext.min.x || p.y < ext.min.y || p.x > ext.max.x || p.y > ext.max.y {
        return 0.0;
    }
    let fx = ((p.x - grid.origin.x) / grid.resolution - 0.5).clamp(0.0, (grid.width - 1) as f64);
    let fy = ((p.y - grid.origin.y) / grid.resolution - 0.5).clamp(0.0, (grid.height - 1) as f64);
    let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
    let (ix1, iy1) = ((ix + 1).min(grid.width - 1), (iy + 1).min(grid.height - 1));
    let (tx, ty) = (fx - ix as f64, fy - iy as f64);
    let bottom = grid.cell(ix, iy) * (1.0 - tx) + grid.cell(ix1, iy) * tx;
    let top = grid.cell(ix, iy1) * (1.0 - tx) + grid.cell(ix1, iy1) * tx;
    bottom * (1.0 - ty) + top * ty
}

/// True iff every sample along `a -> b` (traversed from `t_a` to `t_b`) stays
/// strictly farther than `safety_radius + margin` from every obstacle's
/// predicted position at the sample time.
pub fn segment_is_free(
    obstacles: &[ObstacleState],
    a: Vec2,
    b: Vec2,
    t_a: f64,
    t_b: f64,
    margin: f64,
) -> bool {
    min_segment_clearance(obstacles, a, b, t_a, t_b) > margin
}

/// Smallest `distance - safety_radius` over the samples of a segment.
/// `+inf` when there are no obstacles.
pub fn min_segment_clearance(
    obstacles: &[ObstacleState],
    a: Vec2,
    b: Vec2,
    t_a: f64,
    t_b: f64,
) -> f64 {
    debug_assert!(t_b >= t_a, "segment times reversed: {t_a} > {t_b}");
    if obstacles.is_empty() {
        return f64::INFINITY;
    }
    let duration = (t_b - t_a).max(0.0);
    let steps = ((a.distance(b) / CHECK_STEP_M).ceil())
        .max((duration / CHECK_STEP_S).ceil())
        .max(1.0) as usize;
    let n = steps as f64;
    let mut worst = f64::INFINITY;
    for i in 0..=steps {
        // Written so that a->b and b->a produce bit-identical sample sets.
        let (s, r) = (i as f64 / n, (steps - i) as f64 / n);
        let p = a * r + b * s;
        let t = t_a * r + t_b * s;
        for obs in obstacles {
            let c = propagate_position(obs, t.max(0.0));
            worst = worst.min(p.distance(c) - obs.safety_radius);
        }
    }
    worst
}
