//! Plan documents and newline-delimited simulation traces.

use std::io::{self, Write};

use kinoplan_core::planner::{
    CandidateSummary, PlanResult, Scenario, SimSummary, SimTrace, TickRecord,
};
use kinoplan_core::{ObstacleState, TimedState, Vec2};
use serde::{Deserialize, Serialize};

/// Single-shot plan as written by `kinoplan plan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "plan")]
pub struct PlanDocument {
    pub start: Vec2,
    pub goal: Vec2,
    pub obstacles: Vec<ObstacleState>,
    pub eta: f64,
    pub state_count: usize,
    /// Milliseconds; left out when timing is suppressed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_time: Option<f64>,
    pub chosen_index: usize,
    pub candidates: Vec<CandidateSummary>,
    pub trajectory: Vec<TimedState>,
}

impl PlanDocument {
    pub fn new(sc: &Scenario, plan: &PlanResult, timing: bool) -> Self {
        Self {
            start: sc.start,
            goal: sc.goal,
            obstacles: sc.obstacles.clone(),
            eta: plan.eta,
            state_count: plan.state_count,
            plan_time: timing.then_some(plan.plan_time),
            chosen_index: plan.chosen_index,
            candidates: plan.candidates.clone(),
            trajectory: plan.chosen.states().to_vec(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Tick(TickRecord),
    Summary(SimSummary),
}

pub fn write_trace<W: Write>(trace: &SimTrace, mut out: W) -> io::Result<()> {
    let lines = trace
        .ticks
        .iter()
        .cloned()
        .map(TraceLine::Tick)
        .chain(std::iter::once(TraceLine::Summary(trace.summary.clone())));
    for line in lines {
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads a trace back. The summary must be the last line.
pub fn read_trace(text: &str) -> Result<SimTrace, String> {
    let mut ticks = Vec::new();
    let mut summary = None;
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        if summary.is_some() {
            return Err(format!("line {}: record after the summary", i + 1));
        }
        match serde_json::from_str::<TraceLine>(raw).map_err(|e| format!("line {}: {e}", i + 1))? {
            TraceLine::Tick(t) => ticks.push(t),
            TraceLine::Summary(s) => summary = Some(s),
        }
    }
    let summary = summary.ok_or("trace has no summary line")?;
    Ok(SimTrace { ticks, summary })
}
