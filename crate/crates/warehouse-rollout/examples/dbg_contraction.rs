use warehouse_rollout::exactdp::{battery_instance, policy_operator};

fn main() {
    for seed in 0..20u64 {
        let problem = battery_instance(seed);
        let base = problem.mu1_table();
        let n = problem.num_states();
        let mut prev = vec![0.0f64; n];
        let mut curr = policy_operator(&problem, &base, &prev);
        let mut worst = (0.0f64, 0usize, 0usize);
        for k in 0..60 {
            let next = policy_operator(&problem, &base, &curr);
            let (mut dp, mut sp) = (0.0, 0);
            let (mut dc, mut sc) = (0.0, 0);
            for s in 0..n {
                let a = (prev[s] - curr[s]).abs();
                if a > dp {
                    dp = a;
                    sp = s;
                }
                let b = (curr[s] - next[s]).abs();
                if b > dc {
                    dc = b;
                    sc = s;
                }
            }
            if dp > 1e-12 {
                let r = dc / dp;
                if r > worst.0 {
                    worst = (r, k, sc);
                    if r > 0.9995 {
                        println!(
                            "seed {seed} iter {k}: ratio {r} dprev {dp} (state {sp}) dcurr {dc} (state {sc}) locals {:?}",
                            problem.decode(sc)
                        );
                    }
                }
            }
            prev = curr;
            curr = next;
        }
        println!("seed {seed}: m={} states={} worst ratio {} at iter {}", problem.num_agents(), n, worst.0, worst.1);
    }
}
