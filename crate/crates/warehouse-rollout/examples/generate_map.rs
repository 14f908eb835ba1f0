//! Generates a seeded warehouse layout and prints it as a text grid.
//!
//! Usage: `cargo run --example generate_map [seed]`

use warehouse_rollout::gridmap::render_map;
use warehouse_rollout::harness::mapgen::{generate_map, MapGenParams};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let params = MapGenParams::default();
    let map = generate_map(&params, seed).expect("default parameters always fit");
    println!(
        "{}x{} map, {} storage cells, {} delivery bays (seed {seed}):\n",
        map.height(),
        map.width(),
        map.storage_cells().len(),
        map.delivery_cells().len()
    );
    print!("{}", render_map(&map));
}
