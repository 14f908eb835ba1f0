//! Compares the multiagent rollout planner against the cooperative A*
//! baseline over a small benchmark grid and prints the aggregate table.
//!
//! Ten episodes per point keep this quick; the full experiment battery
//! (50 seeds per point) runs through `wro bench`.

use warehouse_rollout::harness::bench::run_benchmark;
use warehouse_rollout::harness::config::{PlannerKind, ScenarioConfig};

fn main() {
    let base = ScenarioConfig::default();
    let planners = [PlannerKind::MaRollout, PlannerKind::CoopAStar];
    let m_grid = [8, 12, 16, 20];
    let report = run_benchmark(&base, &planners, &m_grid, 10).expect("benchmark");

    println!(
        "{:<12} {:>3} {:>9} {:>14} {:>12} {:>11}",
        "planner", "m", "success", "mean_cost", "decision_ms", "reshuffles"
    );
    for row in &report.aggregates {
        println!(
            "{:<12} {:>3} {:>6}/{:<2} {:>14.1} {:>12.3} {:>11.3}",
            row.planner.to_string(),
            row.m,
            row.successes,
            row.episodes,
            row.mean_cost,
            row.mean_decision_ms,
            row.mean_reshuffles
        );
    }
    println!(
        "\n(baseline cost averages cover its {} successful episodes only, the paper's convention)",
        report
            .aggregates
            .iter()
            .filter(|r| r.planner == PlannerKind::CoopAStar)
            .map(|r| r.cost_samples)
            .sum::<usize>()
    );
}
