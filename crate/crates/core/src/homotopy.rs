//! Homotopy classes of start-to-goal paths, identified by per-obstacle winding
//! angles, and enumeration of one short representative per class.
//!
//! The roadmap holds the start, the goal, and two detour points per obstacle
//! offset perpendicular to the start-goal line. Loop-free roadmap paths are
//! expanded best-first by length (straight-line distance to goal as the
//! heuristic), so complete paths come out in nondecreasing length and the
//! first path seen in each class is that class's shortest roadmap path.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::segment_is_free;
use crate::model::{polyline_length, ObstacleState, Vec2};

/// Waypoints closer than this to an obstacle center have no defined angle.
pub const CENTER_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomotopyError {
    #[error("waypoint {waypoint} coincides with obstacle {obstacle}")]
    WaypointOnObstacle { waypoint: usize, obstacle: usize },
    #[error("signature lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Accumulated signed angle around each obstacle, in obstacle order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HomotopySignature {
    pub windings: Vec<f64>,
}

impl HomotopySignature {
    pub fn len(&self) -> usize {
        self.windings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windings.is_empty()
    }

    pub fn equivalent(&self, other: &HomotopySignature) -> Result<bool, HomotopyError> {
        signatures_equivalent(self, other)
    }
}

/// A collision-free roadmap path representing one homotopy class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPath {
    pub waypoints: Vec<Vec2>,
    pub signature: HomotopySignature,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadmapParams {
    /// Detour offset as a multiple of the obstacle's safety radius.
    pub detour_factor: f64,
    /// Complete roadmap paths examined before giving up on finding more classes.
    pub path_budget: usize,
    /// Hard cap on partial-path expansions.
    pub expansion_budget: usize,
}

impl Default for RoadmapParams {
    fn default() -> Self {
        Self {
            detour_factor: 2.0,
            path_budget: 200,
            expansion_budget: 100_000,
        }
    }
}

/// Signed angle from `a` to `b` in `(-pi, pi]`.
fn signed_angle(a: Vec2, b: Vec2) -> f64 {
    let ang = a.cross(b).atan2(a.dot(b));
    if ang <= -PI {
        PI
    } else {
        ang
    }
}

/// Winding angle of the polyline `waypoints` around each of `centers`.
pub fn winding_signature(
    waypoints: &[Vec2],
    centers: &[Vec2],
) -> Result<HomotopySignature, HomotopyError> {
    let mut windings = Vec::with_capacity(centers.len());
    for (obstacle, &c) in centers.iter().enumerate() {
        if let Some(waypoint) = waypoints.iter().position(|p| p.distance(c) <= CENTER_EPS) {
            return Err(HomotopyError::WaypointOnObstacle { waypoint, obstacle });
        }
        let total = waypoints
            .windows(2)
            .map(|w| signed_angle(w[0] - c, w[1] - c))
            .sum();
        windings.push(total);
    }
    Ok(HomotopySignature { windings })
}

/// Two signatures are in the same class when no winding differs by pi or more.
pub fn signatures_equivalent(
    a: &HomotopySignature,
    b: &HomotopySignature,
) -> Result<bool, HomotopyError> {
    if a.len() != b.len() {
        return Err(HomotopyError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.windings
        .iter()
        .zip(&b.windings)
        .all(|(x, y)| (x - y).abs() < PI))
}

struct Partial {
    estimate: f64,
    length: f64,
    nodes: Vec<usize>,
    key: Vec<[f64; 2]>,
}

impl Partial {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.estimate.total_cmp(&other.estimate).then_with(|| {
            for (a, b) in self.key.iter().zip(&other.key) {
                let o = a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]));
                if o != Ordering::Equal {
                    return o;
                }
            }
            self.key.len().cmp(&other.key.len())
        })
    }
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key(other) == Ordering::Equal
    }
}

impl Eq for Partial {}

impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partial {
    // Reversed: BinaryHeap is a max-heap and we want the shortest first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.cmp_key(self)
    }
}

/// Roadmap nodes: start, goal, then the collision-free detour points.
pub fn roadmap_nodes(
    start: Vec2,
    goal: Vec2,
    obstacles: &[ObstacleState],
    margin: f64,
    params: &RoadmapParams,
) -> Vec<Vec2> {
    let normal = (goal - start)
        .normalized()
        .map(Vec2::perp)
        .unwrap_or(Vec2::new(0.0, 1.0));
    let mut nodes = vec![start, goal];
    for obs in obstacles {
        let offset = normal * (obs.safety_radius * params.detour_factor);
        for candidate in [obs.position + offset, obs.position - offset] {
            let clear = obstacles
                .iter()
                .all(|o| candidate.distance(o.position) > o.safety_radius + margin);
            if clear {
                nodes.push(candidate);
            }
        }
    }
    nodes
}

/// Up to `max_classes` collision-free seed paths in pairwise distinct
/// homotopy classes, shortest first. Obstacles are taken at their current
/// positions. Empty when the start or goal is blocked or no path exists.
pub fn enumerate_seed_paths(
    start: Vec2,
    goal: Vec2,
    obstacles: &[ObstacleState],
    max_classes: usize,
    margin: f64,
    params: &RoadmapParams,
) -> Vec<SeedPath> {
    if max_classes == 0 {
        return Vec::new();
    }
    let snapshot: Vec<ObstacleState> = obstacles
        .iter()
        .map(|o| ObstacleState::fixed(o.position, o.safety_radius))
        .collect();
    let centers: Vec<Vec2> = snapshot.iter().map(|o| o.position).collect();
    let point_free = |p: Vec2| {
        snapshot
            .iter()
            .all(|o| p.distance(o.position) > o.safety_radius + margin)
    };
    if !point_free(start) || !point_free(goal) {
        return Vec::new();
    }

    let nodes = roadmap_nodes(start, goal, &snapshot, margin, params);
    let n = nodes.len();
    let mut adjacency = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if segment_is_free(&snapshot, nodes[i], nodes[j], 0.0, 0.0, margin) {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
    }

    let heuristic = |i: usize| nodes[i].distance(goal);
    let mut heap = BinaryHeap::new();
    heap.push(Partial {
        estimate: heuristic(0),
        length: 0.0,
        nodes: vec![0],
        key: vec![start.into()],
    });

    let mut found: Vec<SeedPath> = Vec::new();
    let (mut complete, mut expansions) = (0usize, 0usize);
    while let Some(partial) = heap.pop() {
        expansions += 1;
        if expansions > params.expansion_budget {
            break;
        }
        let last = partial.nodes[partial.nodes.len() - 1];
        if last == 1 {
            complete += 1;
            let waypoints: Vec<Vec2> = partial.nodes.iter().map(|&i| nodes[i]).collect();
            // Roadmap nodes are never obstacle centers, so this cannot fail.
            let Ok(signature) = winding_signature(&waypoints, &centers) else {
                continue;
            };
            let novel = found
                .iter()
                .all(|s| !signatures_equivalent(&s.signature, &signature).unwrap_or(true));
            if novel {
                found.push(SeedPath {
                    length: polyline_length(&waypoints),
                    waypoints,
                    signature,
                });
                if found.len() == max_classes {
                    break;
                }
            }
            if complete >= params.path_budget {
                break;
            }
            continue;
        }
        for &next in &adjacency[last] {
            if partial.nodes.contains(&next) {
                continue;
            }
            let length = partial.length + nodes[last].distance(nodes[next]);
            let mut path = partial.nodes.clone();
            path.push(next);
            let mut key = partial.key.clone();
            key.push(nodes[next].into());
            heap.push(Partial {
                estimate: length + heuristic(next),
                length,
                nodes: path,
                key,
            });
        }
    }
    log::debug!(
        "seed enumeration: {} classes from {} complete paths, {} expansions",
        found.len(),
        complete,
        expansions
    );
    found
}
