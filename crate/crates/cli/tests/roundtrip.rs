use std::path::Path;

use kinoplan_cli::{parse_scenario_str, write_scenario};
use kinoplan_core::planner::Scenario;
use kinoplan_core::{ObstacleState, Vec2};
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    -50.0..50.0f64
}

fn vec2() -> impl Strategy<Value = Vec2> {
    (coord(), coord()).prop_map(|(x, y)| Vec2::new(x, y))
}

fn obstacle() -> impl Strategy<Value = ObstacleState> {
    (0u8..3, vec2(), vec2(), vec2(), 0.01..3.0f64).prop_map(|(kind, p, v, a, r)| match kind {
        0 => ObstacleState::fixed(p, r),
        1 => ObstacleState::constant_velocity(p, v, r),
        _ => ObstacleState::constant_acceleration(p, v, a, r),
    })
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (
        vec2(),
        vec2(),
        prop::collection::vec(obstacle(), 0..6),
        (0.1..5.0f64, 0.1..5.0f64, 1usize..9, 0.0..1.0f64),
        (0.5..50.0f64, 0.0..0.2f64, 0.5..20.0f64, 1.0..200.0f64),
        (0.0..10.0f64, 0.1..50.0f64),
    )
        .prop_filter("start differs from goal", |(s, g, ..)| s != g)
        .prop_map(
            |(start, goal, obstacles, (v, a, k, m), (det, noise, rep, dur), (wt, wo))| {
                let mut sc = Scenario::new(start, goal, obstacles);
                sc.limits.v_max = v;
                sc.limits.a_max = a;
                sc.max_classes = k;
                sc.margin = m;
                sc.detection_rate = det;
                sc.detection_noise_std = noise;
                sc.replan_rate = rep;
                sc.sim_duration_max = dur;
                sc.weights.w_time = wt;
                sc.weights.w_obstacle = wo;
                sc
            },
        )
}

proptest! {
    #[test]
    fn write_then_parse_is_identity(sc in scenario()) {
        let text = write_scenario(&sc);
        let back = parse_scenario_str(&text, Path::new("roundtrip.json")).unwrap();
        prop_assert_eq!(back, sc);
    }
}
