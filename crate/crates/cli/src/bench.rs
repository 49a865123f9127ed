use kinoplan_core::planner::{Planner, PlannerConfig, Scenario};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Wall-clock statistics over repeated single-shot plans, milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub min_ms: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    /// Every repetition chose a trajectory with bit-identical cost.
    pub costs_identical: bool,
    pub eta: f64,
    pub state_count: usize,
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn bench(
    sc: &Scenario,
    config: &PlannerConfig,
    repetitions: usize,
) -> Result<BenchReport, CliError> {
    if repetitions == 0 {
        return Err(CliError::Usage("repetitions must be >= 1".into()));
    }
    let planner = Planner::new(sc.clone(), *config)?;
    let mut times = Vec::with_capacity(repetitions);
    let mut costs = Vec::with_capacity(repetitions);
    let mut last = None;
    for _ in 0..repetitions {
        let plan = planner.plan_once(sc.start, &sc.obstacles)?;
        times.push(plan.plan_time);
        costs.push(plan.candidates[plan.chosen_index].final_cost.to_bits());
        last = Some(plan);
    }
    let last = last.expect("at least one repetition");
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchReport {
        repetitions,
        min_ms: sorted[0],
        mean_ms: times.iter().sum::<f64>() / repetitions as f64,
        p95_ms: nearest_rank(&sorted, 0.95),
        max_ms: sorted[repetitions - 1],
        costs_identical: costs.windows(2).all(|w| w[0] == w[1]),
        eta: last.eta,
        state_count: last.state_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use kinoplan_core::{ObstacleState, Vec2};

    fn scenario() -> Scenario {
        Scenario::new(
            Vec2::new(-2.0, 0.0),
            Vec2::new(2.0, 0.0),
            vec![ObstacleState::fixed(Vec2::new(0.0, 0.0), 0.5)],
        )
    }

    #[test]
    fn single_repetition_collapses_stats() {
        let r = bench(&scenario(), &PlannerConfig::default(), 1).unwrap();
        assert_eq!(r.min_ms, r.mean_ms);
        assert_eq!(r.max_ms, r.mean_ms);
        assert_eq!(r.p95_ms, r.mean_ms);
        assert!(r.costs_identical);
    }

    #[test]
    fn repeated_plans_are_pure() {
        let r = bench(&scenario(), &PlannerConfig::default(), 5).unwrap();
        assert!(r.costs_identical);
        assert!(r.min_ms <= r.mean_ms && r.mean_ms <= r.max_ms);
        assert!(r.p95_ms <= r.max_ms);
    }

    #[test]
    fn zero_repetitions_rejected() {
        assert!(matches!(
            bench(&scenario(), &PlannerConfig::default(), 0),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn blocked_goal_is_a_plan_failure() {
        let mut sc = scenario();
        sc.goal = Vec2::new(0.1, 0.0);
        let err = bench(&sc, &PlannerConfig::default(), 2).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
