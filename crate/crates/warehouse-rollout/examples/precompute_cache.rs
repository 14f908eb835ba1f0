//! Precomputes all-targets distance fields for a generated map, saves
//! them to the binary cache format and loads them back.

use warehouse_rollout::harness::mapgen::{generate_map, MapGenParams};
use warehouse_rollout::pathcache::{load_cache, precompute_all, save_cache};

fn main() {
    let map = generate_map(&MapGenParams::default(), 0).expect("valid parameters");
    let cache = precompute_all(&map).expect("connected map");
    let bytes = save_cache(&cache, &map);
    println!(
        "{} distance fields over {} cells -> {} bytes on disk",
        cache.num_fields(),
        map.num_cells(),
        bytes.len()
    );

    let restored = load_cache(&bytes, &map).expect("round trip");
    assert_eq!(restored.num_fields(), cache.num_fields());
    assert_eq!(restored.fingerprint(), cache.fingerprint());
    println!("round trip ok, fingerprint {:#018x}", cache.fingerprint());

    // A sample greedy walk along one field's next_action pointers.
    let target = map.delivery_cells()[0];
    let field = cache.field(target).unwrap();
    let mut cell = map.storage_cells()[0];
    let mut hops = 0;
    while cell != target {
        let action = field.step_from(cell).expect("reachable");
        cell = map.apply_action(cell, action).expect("valid step");
        hops += 1;
    }
    println!(
        "greedy descent from first shelf to first bay: {hops} steps (field says {})",
        field.distance(map.storage_cells()[0])
    );
}
