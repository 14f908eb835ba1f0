use warehouse_rollout::harness::config::{MapSource, ScenarioConfig};
use warehouse_rollout::harness::episode::run_episode;
use warehouse_rollout::harness::mapgen::MapGenParams;

fn main() {
    let mut worst_rel = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let mut failures = 0usize;
    for &m in &[8usize, 12, 16, 20] {
        for seed in 0..50u64 {
            let cfg = ScenarioConfig {
                map: MapSource::Generated(MapGenParams::default()),
                num_agents: m,
                num_goods: 60,
                seed,
                ..Default::default()
            };
            let r = run_episode(&cfg).unwrap();
            if !r.success {
                failures += 1;
                println!("m={m} seed={seed}: FAILED ({} stages)", r.stages);
                continue;
            }
            let mut ep_worst = f64::NEG_INFINITY;
            for (k, rec) in r.records.iter().enumerate() {
                if !rec.accepted {
                    continue;
                }
                let tail = r.realized_tail(k, cfg.params.alpha);
                let jt = rec.jtilde.unwrap();
                let scale = 1.0f64.max(tail.abs()).max(jt.abs());
                let rel = (tail - jt) / scale;
                ep_worst = ep_worst.max(rel);
                if rel > 1e-6 {
                    violations += 1;
                    println!("m={m} seed={seed} stage {k}: tail {tail:.3} > quote {jt:.3} (rel {rel:.2e})");
                }
            }
            worst_rel = worst_rel.max(ep_worst);
            println!("m={m} seed={seed}: ok stages={} worst_rel={ep_worst:.3e}", r.stages);
        }
    }
    println!("summary: failures={failures} violations={violations} worst_rel={worst_rel:.3e}");
}
