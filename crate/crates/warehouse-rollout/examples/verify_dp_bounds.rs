//! Verifies the rollout performance bounds by exact dynamic programming
//! on a handful of tiny enumerable instances.
//!
//! For each instance the base policy is evaluated exactly, the rollout
//! policy is tabulated against it, and the three inequalities
//! `J_rollout <= Jtilde <= J_mu` and `J_rollout <= J_mu` are checked
//! pointwise over every state.

use warehouse_rollout::exactdp::{
    battery_instance, policy_eval_vi, rollout_policy_table, verify_bounds, DEFAULT_TOL,
};

fn main() {
    for seed in 0..5u64 {
        let problem = battery_instance(seed);
        let base = problem.mu1_table();
        let jmu = policy_eval_vi(&problem, &base, DEFAULT_TOL, 200_000).expect("convergence");
        let rollout = rollout_policy_table(&problem, &base, &jmu);
        let report = verify_bounds(&problem, &base, &rollout, DEFAULT_TOL).expect("convergence");

        // Largest improvement the rollout achieves over the base policy.
        let best_gain = report
            .jmu
            .iter()
            .zip(&report.jrollout)
            .map(|(mu, ro)| mu - ro)
            .fold(0.0f64, f64::max);
        println!(
            "seed {seed}: {}x{} map, {} agents, {} states -> {} violations, max improvement {best_gain:.1}",
            problem.map().height(),
            problem.map().width(),
            problem.num_agents(),
            problem.num_states(),
            report.violations.len(),
        );
        assert!(report.passed(), "bound violation on seed {seed}");
    }
    println!("all bounds hold");
}
