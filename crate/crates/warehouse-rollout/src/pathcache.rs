//! Offline precomputation of shortest-distance fields and greedy next-step
//! tables for every storage and delivery cell, with binary persistence.
//!
//! The transit graph is static: floor and delivery cells are traversable,
//! walls and storage cells are not, except that the target cell of a field
//! is always enterable. Unit edge costs make breadth-first search exact.

use std::collections::HashMap;

use crate::dynamics::Action;
use crate::gridmap::{CellIndex, CellKind, GridMap};

pub const UNREACHABLE: u32 = u32::MAX;
const MAGIC: &[u8; 5] = b"WRPC1";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("target cell {0} must be a storage or delivery cell")]
    BadTarget(CellIndex),
    #[error("target cell {0} is unreachable from every floor cell")]
    UnreachableTarget(CellIndex),
    #[error("cache fingerprint {found:#018x} does not match map fingerprint {expected:#018x}")]
    FingerprintMismatch { expected: u64, found: u64 },
    #[error("truncated or corrupt cache payload at byte {0}")]
    Corrupt(usize),
}

/// Shortest distances to one target cell, plus the first move of a shortest
/// path from every cell that has one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    pub target: CellIndex,
    /// Distance in steps to `target`, [`UNREACHABLE`] where no path exists.
    pub dist: Vec<u32>,
    /// First move of a shortest path toward `target`; `None` at the target
    /// and on unreachable cells. Ties broken by Up, Down, Left, Right.
    pub next_action: Vec<Option<Action>>,
}

impl DistanceField {
    #[inline]
    pub fn distance(&self, c: CellIndex) -> u32 {
        self.dist[c.as_usize()]
    }

    /// Distance as an Option, `None` where the target is unreachable.
    #[inline]
    pub fn reachable(&self, c: CellIndex) -> Option<u32> {
        match self.dist[c.as_usize()] {
            UNREACHABLE => None,
            d => Some(d),
        }
    }

    #[inline]
    pub fn step_from(&self, c: CellIndex) -> Option<Action> {
        self.next_action[c.as_usize()]
    }
}

/// One distance field per storage and delivery cell of a map.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCache {
    fingerprint: u64,
    fields: HashMap<CellIndex, DistanceField>,
}

fn traversable(map: &GridMap, c: CellIndex) -> bool {
    matches!(map.kind(c), CellKind::Floor | CellKind::Delivery)
}

/// BFS from `target` over the transit graph.
///
/// Cells that may start a path but not carry one through (storage cells,
/// where an agent can stand after a pickup) receive a distance and a next
/// action but are never expanded.
pub fn build_distance_field(map: &GridMap, target: CellIndex) -> Result<DistanceField, CacheError> {
    if !matches!(map.kind(target), CellKind::Storage | CellKind::Delivery) {
        return Err(CacheError::BadTarget(target));
    }
    let n = map.num_cells();
    let mut dist = vec![UNREACHABLE; n];
    let mut queue = std::collections::VecDeque::new();
    dist[target.as_usize()] = 0;
    queue.push_back(target);
    while let Some(v) = queue.pop_front() {
        for (_, u) in map.neighbors(v) {
            if dist[u.as_usize()] != UNREACHABLE {
                continue;
            }
            dist[u.as_usize()] = dist[v.as_usize()] + 1;
            if traversable(map, u) {
                queue.push_back(u);
            }
        }
    }
    if !map
        .cells()
        .any(|c| c != target && map.kind(c) == CellKind::Floor && dist[c.as_usize()] != UNREACHABLE)
    {
        return Err(CacheError::UnreachableTarget(target));
    }

    let mut next_action = vec![None; n];
    for c in map.cells() {
        let d = dist[c.as_usize()];
        if c == target || d == UNREACHABLE {
            continue;
        }
        for action in Action::MOVES {
            let Some(dest) = map.apply_action(c, action) else { continue };
            let enterable = dest == target || traversable(map, dest);
            if enterable && dist[dest.as_usize()] == d - 1 {
                next_action[c.as_usize()] = Some(action);
                break;
            }
        }
        debug_assert!(next_action[c.as_usize()].is_some());
    }
    Ok(DistanceField { target, dist, next_action })
}

/// Builds one field per storage and delivery cell.
pub fn precompute_all(map: &GridMap) -> Result<PathCache, CacheError> {
    let mut fields = HashMap::new();
    for target in map.cells() {
        if matches!(map.kind(target), CellKind::Storage | CellKind::Delivery) {
            fields.insert(target, build_distance_field(map, target)?);
        }
    }
    Ok(PathCache { fingerprint: map.fingerprint(), fields })
}

impl PathCache {
    pub fn empty(map: &GridMap) -> Self {
        PathCache { fingerprint: map.fingerprint(), fields: HashMap::new() }
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// All field targets, sorted for determinism.
    pub fn targets(&self) -> Vec<CellIndex> {
        let mut t: Vec<CellIndex> = self.fields.keys().copied().collect();
        t.sort();
        t
    }

    pub fn num_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn field(&self, target: CellIndex) -> Option<&DistanceField> {
        self.fields.get(&target)
    }

    pub fn insert(&mut self, field: DistanceField) {
        self.fields.insert(field.target, field);
    }

    /// Serialized size in bytes, reported by the `precompute` command.
    pub fn serialized_size(&self, map: &GridMap) -> usize {
        // header + per field: target + dist words + action bytes
        5 + 4 + 4 + 8 + 4 + self.num_fields() * (4 + 5 * map.num_cells())
    }
}

/// Little-endian binary encoding: header {magic "WRPC1", width, height,
/// fingerprint, field count}, then per field {target, dist words with
/// 0xFFFFFFFF for unreachable, next-action bytes with 255 for none}.
pub fn save_cache(cache: &PathCache, map: &GridMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(cache.serialized_size(map));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&map.width().to_le_bytes());
    out.extend_from_slice(&map.height().to_le_bytes());
    out.extend_from_slice(&cache.fingerprint.to_le_bytes());
    out.extend_from_slice(&(cache.fields.len() as u32).to_le_bytes());
    let mut targets: Vec<CellIndex> = cache.fields.keys().copied().collect();
    targets.sort_unstable();
    for t in targets {
        let f = &cache.fields[&t];
        out.extend_from_slice(&t.0.to_le_bytes());
        for &d in &f.dist {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &a in &f.next_action {
            out.push(a.map_or(255, Action::to_byte));
        }
    }
    out
}

pub fn load_cache(bytes: &[u8], map: &GridMap) -> Result<PathCache, CacheError> {
    struct Reader<'a> {
        bytes: &'a [u8],
        pos: usize,
    }
    impl<'a> Reader<'a> {
        fn take(&mut self, n: usize) -> Result<&'a [u8], CacheError> {
            if self.pos + n > self.bytes.len() {
                return Err(CacheError::Corrupt(self.pos));
            }
            let s = &self.bytes[self.pos..self.pos + n];
            self.pos += n;
            Ok(s)
        }
        fn u32(&mut self) -> Result<u32, CacheError> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }
        fn u64(&mut self) -> Result<u64, CacheError> {
            Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
    }

    let mut r = Reader { bytes, pos: 0 };
    if r.take(5)? != MAGIC {
        return Err(CacheError::Corrupt(0));
    }
    let width = r.u32()?;
    let height = r.u32()?;
    let fingerprint = r.u64()?;
    if fingerprint != map.fingerprint() || width != map.width() || height != map.height() {
        return Err(CacheError::FingerprintMismatch {
            expected: map.fingerprint(),
            found: fingerprint,
        });
    }
    let count = r.u32()? as usize;
    let cells = map.num_cells();
    let mut fields = HashMap::with_capacity(count);
    for _ in 0..count {
        let target = CellIndex(r.u32()?);
        if target.as_usize() >= cells {
            return Err(CacheError::Corrupt(r.pos));
        }
        let mut dist = Vec::with_capacity(cells);
        for _ in 0..cells {
            dist.push(r.u32()?);
        }
        let mut next_action = Vec::with_capacity(cells);
        for _ in 0..cells {
            let b = r.take(1)?[0];
            next_action.push(if b == 255 {
                None
            } else {
                Some(Action::from_byte(b).ok_or(CacheError::Corrupt(r.pos))?)
            });
        }
        fields.insert(target, DistanceField { target, dist, next_action });
    }
    if r.pos != bytes.len() {
        return Err(CacheError::Corrupt(r.pos));
    }
    Ok(PathCache { fingerprint, fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmap::parse_map;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn empty_grid_manhattan() {
        let map = parse_map("...\n...\n..D\n").unwrap();
        let f = build_distance_field(&map, map.index(2, 2)).unwrap();
        assert_eq!(f.distance(map.index(0, 0)), 4);
        assert_eq!(f.distance(map.index(2, 2)), 0);
        assert_eq!(f.step_from(map.index(2, 2)), None);
    }

    #[test]
    fn wall_with_gap() {
        let map = parse_map("...\n##.\nD..\n").unwrap();
        let f = build_distance_field(&map, map.index(2, 0)).unwrap();
        // (0,0) must route right, down through the gap, and back left.
        assert_eq!(f.distance(map.index(0, 0)), 6);
        assert_eq!(f.distance(map.index(0, 2)), 4);
    }

    #[test]
    fn storage_cells_not_transit() {
        // The direct lane to D is plugged by a storage cell; paths detour.
        let map = parse_map(".@D\n...\n").unwrap();
        let f = build_distance_field(&map, map.index(0, 2)).unwrap();
        assert_eq!(f.distance(map.index(0, 0)), 4);
        // But the storage cell itself gets a distance (agents stand there
        // after a pickup).
        assert_eq!(f.distance(map.index(0, 1)), 1);
        assert_eq!(f.step_from(map.index(0, 1)), Some(Action::Right));
    }

    #[test]
    fn own_target_storage_enterable() {
        let map = parse_map(".@.\n").unwrap();
        let f = build_distance_field(&map, map.index(0, 1)).unwrap();
        assert_eq!(f.distance(map.index(0, 0)), 1);
        assert_eq!(f.distance(map.index(0, 2)), 1);
    }

    #[test]
    fn unreachable_target_rejected() {
        let map = parse_map(".#D\n.##\n").unwrap();
        assert_eq!(
            build_distance_field(&map, map.index(0, 2)),
            Err(CacheError::UnreachableTarget(map.index(0, 2)))
        );
    }

    #[test]
    fn non_target_kind_rejected() {
        let map = parse_map("..D\n").unwrap();
        assert!(matches!(
            build_distance_field(&map, map.index(0, 0)),
            Err(CacheError::BadTarget(_))
        ));
    }

    #[test]
    fn bellman_consistency_and_greedy_descent() {
        let map = parse_map("......\n.##.#.\n.@...D\n.#.##.\n......\n").unwrap();
        for target in [map.index(2, 1), map.index(2, 5)] {
            let f = build_distance_field(&map, target).unwrap();
            for c in map.cells() {
                let d = f.distance(c);
                if d == UNREACHABLE || c == target {
                    continue;
                }
                // One-step Bellman equation on the transit graph.
                let best = Action::MOVES
                    .iter()
                    .filter_map(|&a| map.apply_action(c, a))
                    .filter(|&dest| dest == target || traversable(&map, dest))
                    .map(|dest| f.distance(dest))
                    .min()
                    .unwrap();
                assert_eq!(d, best + 1, "cell {c}");
                // Following next_action reaches the target in exactly d steps.
                let mut cur = c;
                let mut seen = std::collections::HashSet::new();
                for _ in 0..d {
                    assert!(seen.insert(cur));
                    cur = map.apply_action(cur, f.step_from(cur).unwrap()).unwrap();
                }
                assert_eq!(cur, target);
            }
        }
    }

    /// Independent oracle: Dijkstra with unit weights and min-relaxation,
    /// run backward from the target over reverse transit edges.
    fn dijkstra_oracle(map: &GridMap, target: CellIndex) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; map.num_cells()];
        dist[target.as_usize()] = 0;
        let mut heap = std::collections::BinaryHeap::new();
        heap.push(std::cmp::Reverse((0u32, target)));
        while let Some(std::cmp::Reverse((d, v))) = heap.pop() {
            if d > dist[v.as_usize()] {
                continue;
            }
            // A reverse edge v -> u stands for the legal move u -> v; v is
            // enterable for every popped node (the target or traversable).
            for (_, u) in map.neighbors(v) {
                if dist[u.as_usize()] > d + 1 {
                    dist[u.as_usize()] = d + 1;
                    // Storage cells may start a path but not carry one.
                    if traversable(map, u) {
                        heap.push(std::cmp::Reverse((d + 1, u)));
                    }
                }
            }
        }
        dist
    }

    #[test]
    fn matches_dijkstra_oracle_on_random_maps() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut tested = 0;
        while tested < 20 {
            let mut kinds = String::new();
            for r in 0..10 {
                for _ in 0..10 {
                    let roll: f64 = rng.random();
                    kinds.push(if roll < 0.2 {
                        '#'
                    } else if roll < 0.3 {
                        '@'
                    } else {
                        '.'
                    });
                }
                if r < 9 {
                    kinds.push('\n');
                }
            }
            let map = match parse_map(&kinds) {
                Ok(m) => m,
                Err(_) => continue,
            };
            let storages = map.storage_cells();
            if storages.is_empty() {
                continue;
            }
            let target = storages[rng.random_range(0..storages.len())];
            let Ok(f) = build_distance_field(&map, target) else { continue };
            assert_eq!(f.dist, dijkstra_oracle(&map, target), "map:\n{kinds}");
            tested += 1;
        }
    }

    #[test]
    fn precompute_counts_and_determinism() {
        let map = parse_map("D....\n.@.@.\n.....\nD....\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        assert_eq!(cache.num_fields(), 2 + 2);
        let again = precompute_all(&map).unwrap();
        assert_eq!(save_cache(&cache, &map), save_cache(&again, &map));
    }

    #[test]
    fn size_formula_matches_encoding() {
        let map = parse_map("D.@..\n.....\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        assert_eq!(save_cache(&cache, &map).len(), cache.serialized_size(&map));
    }

    #[test]
    fn save_load_roundtrip() {
        let map = parse_map("D....\n.@.@.\n.....\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let bytes = save_cache(&cache, &map);
        assert_eq!(load_cache(&bytes, &map).unwrap(), cache);

        let empty = PathCache::empty(&map);
        let bytes = save_cache(&empty, &map);
        assert_eq!(load_cache(&bytes, &map).unwrap(), empty);
    }

    #[test]
    fn load_rejects_wrong_map_and_corruption() {
        let map = parse_map("D.@\n...\n").unwrap();
        let other = parse_map("D@.\n...\n").unwrap();
        let bytes = save_cache(&precompute_all(&map).unwrap(), &map);
        assert!(matches!(
            load_cache(&bytes, &other),
            Err(CacheError::FingerprintMismatch { .. })
        ));
        assert!(matches!(
            load_cache(&bytes[..bytes.len() - 3], &map),
            Err(CacheError::Corrupt(_))
        ));
    }
}
