use warehouse_rollout::dynamics::{AgentStatus, GoodStatus};
use warehouse_rollout::harness::config::{MapSource, ScenarioConfig};
use warehouse_rollout::harness::episode::{build_scenario_map, run_episode};
use warehouse_rollout::harness::mapgen::MapGenParams;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = ScenarioConfig {
        map: MapSource::Generated(MapGenParams::default()),
        num_agents: 16,
        num_goods: 60,
        malfunction_q: 0.2,
        seed,
        ..Default::default()
    };
    let map = build_scenario_map(&cfg).unwrap();
    let w = map.width() as usize;
    let r = run_episode(&cfg).unwrap();
    println!(
        "success={} stages={} deliveries={} frozen={:?} onset={:?}",
        r.success, r.stages, r.deliveries, r.frozen_agents, r.malfunction_onset
    );
    let rc = |c: warehouse_rollout::CellIndex| (c.as_usize() / w, c.as_usize() % w);
    for (i, a) in r.final_state.agents.iter().enumerate() {
        println!(
            "agent {i}: pos={:?} target={:?} {:?} kind={:?} task={:?}",
            rc(a.position),
            rc(a.target),
            a.status,
            map.kind(a.position),
            a.task
        );
    }
    for (gi, g) in r.final_state.goods.iter().enumerate() {
        if g.status != GoodStatus::Delivered {
            println!("good {gi}: {:?} storage={:?} bay={:?}", g.status, rc(g.storage_cell), rc(g.delivery_cell));
        }
    }
    let live = r.final_state.agents.iter().filter(|a| a.status == AgentStatus::Active).count();
    println!("active agents at end: {live}");
}
