//! Static SVG plots of plans and simulation traces.
//!
//! Output depends only on the input document: coordinates are printed with
//! three decimals and elements are emitted in a fixed order.

use std::fmt::Write as _;

use kinoplan_core::planner::SimTrace;
use kinoplan_core::tracking::propagate_position;
use kinoplan_core::{MotionModel, ObstacleState, Vec2};

use crate::output::{read_trace, PlanDocument};

/// Pixels per metre.
const SCALE: f64 = 100.0;
const PADDING: f64 = 0.5;
/// Seconds between ghost outlines in plan plots.
const GHOST_PERIOD: f64 = 2.0;
/// Ticks between ghost outlines in trace plots.
const GHOST_TICKS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum RenderInput {
    Plan(PlanDocument),
    Trace(SimTrace),
}

/// Sniffs the `type` tag of the first JSON value.
pub fn load_render_input(text: &str) -> Result<RenderInput, String> {
    let first = serde_json::Deserializer::from_str(text)
        .into_iter::<serde_json::Value>()
        .next()
        .ok_or("input is empty")?
        .map_err(|e| e.to_string())?;
    match first.get("type").and_then(|t| t.as_str()) {
        Some("plan") => serde_json::from_str(text)
            .map(RenderInput::Plan)
            .map_err(|e| e.to_string()),
        Some("tick" | "summary") => read_trace(text).map(RenderInput::Trace),
        Some(other) => Err(format!("unknown document type {other:?}")),
        None => Err("input is neither a plan nor a trace (no \"type\" key)".into()),
    }
}

struct Scene {
    start: Vec2,
    goal: Vec2,
    obstacles: Vec<ObstacleState>,
    ghosts: Vec<(Vec2, f64)>,
    path: Vec<Vec2>,
}

impl Scene {
    fn from_plan(doc: &PlanDocument) -> Self {
        let mut ghosts = Vec::new();
        let eta = doc.eta.max(0.0);
        for o in doc
            .obstacles
            .iter()
            .filter(|o| o.model != MotionModel::Static)
        {
            let mut k = 1;
            while k as f64 * GHOST_PERIOD <= eta {
                ghosts.push((
                    propagate_position(o, k as f64 * GHOST_PERIOD),
                    o.safety_radius,
                ));
                k += 1;
            }
        }
        Self {
            start: doc.start,
            goal: doc.goal,
            obstacles: doc.obstacles.clone(),
            ghosts,
            path: doc.trajectory.iter().map(|s| s.position).collect(),
        }
    }

    fn from_trace(trace: &SimTrace) -> Self {
        let obstacles: Vec<ObstacleState> = trace
            .ticks
            .first()
            .map(|t| t.obstacles.iter().map(|o| o.truth).collect())
            .unwrap_or_default();
        let mut ghosts = Vec::new();
        for (i, o) in obstacles.iter().enumerate() {
            for tick in trace.ticks.iter().skip(GHOST_TICKS).step_by(GHOST_TICKS) {
                let p = tick.obstacles[i].truth.position;
                if p != o.position {
                    ghosts.push((p, o.safety_radius));
                }
            }
        }
        let path: Vec<Vec2> = trace.ticks.iter().map(|t| t.vehicle).collect();
        Self {
            start: path.first().copied().unwrap_or(Vec2::ZERO),
            goal: path.last().copied().unwrap_or(Vec2::ZERO),
            obstacles,
            ghosts,
            path,
        }
    }

    fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut grow = |p: Vec2, r: f64| {
            lo = Vec2::new(lo.x.min(p.x - r), lo.y.min(p.y - r));
            hi = Vec2::new(hi.x.max(p.x + r), hi.y.max(p.y + r));
        };
        grow(self.start, 0.0);
        grow(self.goal, 0.0);
        for p in &self.path {
            grow(*p, 0.0);
        }
        for o in &self.obstacles {
            grow(o.position, o.safety_radius);
        }
        for (p, r) in &self.ghosts {
            grow(*p, *r);
        }
        let pad = Vec2::new(PADDING, PADDING);
        (lo - pad, hi + pad)
    }
}

fn num(v: f64) -> String {
    format!("{v:.3}")
}

pub fn render_svg(input: &RenderInput) -> String {
    let scene = match input {
        RenderInput::Plan(doc) => Scene::from_plan(doc),
        RenderInput::Trace(trace) => Scene::from_trace(trace),
    };
    let (lo, hi) = scene.bounds();
    let px = |p: Vec2| ((p.x - lo.x) * SCALE, (hi.y - p.y) * SCALE);
    let width = (hi.x - lo.x) * SCALE;
    let height = (hi.y - lo.y) * SCALE;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = num(width),
        h = num(height)
    );
    s.push_str(concat!(
        "<defs>\n",
        r##"<marker id="arrow" viewBox="0 0 10 10" refX="5" refY="5" markerWidth="5" markerHeight="5" orient="auto">"##,
        r##"<path d="M0,0 L10,5 L0,10 z" fill="#1f4e9c"/></marker>"##,
        "\n</defs>\n",
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");

    for (p, r) in &scene.ghosts {
        let (x, y) = px(*p);
        let _ = writeln!(
            s,
            r##"<circle class="ghost" cx="{}" cy="{}" r="{}" fill="none" stroke="#c0392b" stroke-opacity="0.3" stroke-dasharray="4 4"/>"##,
            num(x),
            num(y),
            num(r * SCALE)
        );
    }
    for o in &scene.obstacles {
        let (x, y) = px(o.position);
        let _ = writeln!(
            s,
            r##"<circle class="safety" cx="{}" cy="{}" r="{}" fill="#c0392b" fill-opacity="0.2" stroke="#c0392b" stroke-width="2"/>"##,
            num(x),
            num(y),
            num(o.safety_radius * SCALE)
        );
        let a = 6.0;
        let _ = writeln!(
            s,
            r##"<path class="center" d="M{} {} L{} {} M{} {} L{} {}" stroke="#c0392b" stroke-width="2"/>"##,
            num(x - a),
            num(y - a),
            num(x + a),
            num(y + a),
            num(x - a),
            num(y + a),
            num(x + a),
            num(y - a)
        );
    }

    let points: Vec<String> = scene
        .path
        .iter()
        .map(|p| {
            let (x, y) = px(*p);
            format!("{},{}", num(x), num(y))
        })
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline class="trajectory" points="{}" fill="none" stroke="#1f4e9c" stroke-width="2" marker-mid="url(#arrow)" marker-end="url(#arrow)"/>"##,
        points.join(" ")
    );

    for (class, p, colour) in [
        ("start", scene.start, "#27ae60"),
        ("goal", scene.goal, "#8e44ad"),
    ] {
        let (x, y) = px(p);
        let half = 7.0;
        let _ = writeln!(
            s,
            r#"<rect class="{class}" x="{}" y="{}" width="{}" height="{}" fill="{colour}"/>"#,
            num(x - half),
            num(y - half),
            num(2.0 * half),
            num(2.0 * half)
        );
    }
    s.push_str("</svg>\n");
    s
}
