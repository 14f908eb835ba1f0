//! Cooperative A* baseline: fixed-priority space-time planning with a
//! reservation table, replanned whenever task assignments change.
//!
//! Edge conflicts are respected inside the planner (as the algorithm is
//! usually stated) even though the environment's collision detector
//! defaults to vertex-only; the planner is stricter than the judge.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use crate::dynamics::{Action, AgentStatus, WorldState};
use crate::gridmap::{CellIndex, CellKind, GridMap};
use crate::pathcache::PathCache;

/// Vertex and edge reservations over a bounded horizon, plus permanent
/// parking reservations from a path's final timestep onward.
pub struct ReservationTable {
    horizon: usize,
    vertices: HashSet<(CellIndex, u32)>,
    /// Directed traversal (from, to) during step `t -> t+1`, keyed by `t`.
    edges: HashSet<(CellIndex, CellIndex, u32)>,
    /// Cell -> first timestep from which it stays occupied.
    parked: HashMap<CellIndex, u32>,
}

impl ReservationTable {
    pub fn new(horizon: usize) -> Self {
        ReservationTable {
            horizon,
            vertices: HashSet::new(),
            edges: HashSet::new(),
            parked: HashMap::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn vertex_free(&self, cell: CellIndex, t: u32) -> bool {
        !self.vertices.contains(&(cell, t))
            && self.parked.get(&cell).is_none_or(|&from| t < from)
    }

    /// A move `from -> to` during step `t` conflicts with a reserved
    /// opposite traversal of the same edge.
    pub fn edge_free(&self, from: CellIndex, to: CellIndex, t: u32) -> bool {
        !self.edges.contains(&(to, from, t))
    }

    /// True when `cell` stays free from `t` through the horizon, so an
    /// arriving agent can park there.
    pub fn parking_free(&self, cell: CellIndex, t: u32) -> bool {
        if self.parked.contains_key(&cell) {
            // Two unbounded stays on one cell always overlap.
            return false;
        }
        (t..=self.horizon as u32).all(|tt| !self.vertices.contains(&(cell, tt)))
    }

    /// Reserves every (cell, t) of the path, its traversed edges, and the
    /// final cell from the path's last timestep onward.
    pub fn reserve_path(&mut self, path: &[CellIndex]) {
        self.reserve_transit(path);
        if let Some(&last) = path.last() {
            let from = (path.len() - 1) as u32;
            match self.parked.get_mut(&last) {
                Some(existing) => *existing = (*existing).min(from),
                None => {
                    self.parked.insert(last, from);
                }
            }
        }
    }

    /// Like `reserve_path` but for an agent that resolves its task on
    /// arrival and moves on: the final cell is held for `linger` extra
    /// timesteps instead of forever.
    pub fn reserve_path_leaving(&mut self, path: &[CellIndex], linger: u32) {
        self.reserve_transit(path);
        if let Some(&last) = path.last() {
            let arrival = (path.len() - 1) as u32;
            for t in arrival..=arrival.saturating_add(linger) {
                self.vertices.insert((last, t));
            }
        }
    }

    fn reserve_transit(&mut self, path: &[CellIndex]) {
        for (t, &cell) in path.iter().enumerate() {
            self.vertices.insert((cell, t as u32));
        }
        for (t, w) in path.windows(2).enumerate() {
            if w[0] != w[1] {
                self.edges.insert((w[0], w[1], t as u32));
            }
        }
    }
}

/// One agent's planned trajectory: `path[t]` is its cell at timestep `t`.
/// `complete` is false when planning failed and the agent just waits.
#[derive(Debug, Clone)]
pub struct AgentPlan {
    pub path: Vec<CellIndex>,
    pub complete: bool,
}

impl AgentPlan {
    /// Action to execute at timestep `t`, or None once the path is spent
    /// (the caller decides between parking and a greedy fallback).
    pub fn action_at(&self, t: usize, map: &GridMap) -> Option<Action> {
        let next = *self.path.get(t + 1)?;
        let here = self.path[t];
        Action::MOVES
            .iter()
            .copied()
            .find(|&a| map.apply_action(here, a) == Some(next))
            .or(Some(Action::Stay))
    }
}

/// Timesteps an arriving agent holds its target before the task resolves
/// and the ensuing replan routes it away. Delivery resolves one stage
/// after arrival and the replan lands the stage after that; one step of
/// slack covers the departure move.
pub const ARRIVAL_LINGER: u32 = 3;

/// Space-time A* for one agent against the current reservations. The
/// heuristic is the precomputed static distance (admissible and
/// consistent for unit step costs). On success the path's reservations,
/// including an `ARRIVAL_LINGER`-step hold on the target, are inserted
/// into the table. Several agents may therefore deliver to the same bay
/// within one plan, spaced by the linger window.
pub fn plan_agent(
    map: &GridMap,
    cache: &PathCache,
    start: CellIndex,
    target: CellIndex,
    table: &mut ReservationTable,
) -> Option<Vec<CellIndex>> {
    let field = cache.field(target)?;
    field.reachable(start)?;
    // Shelf cells carry finite field distances (they are enterable as
    // targets) but are not transit: only the agent's own target may be a
    // non-floor destination, or executed plans would cut through storage.
    let transit = |cell: CellIndex| {
        cell == target || matches!(map.kind(cell), CellKind::Floor | CellKind::Delivery)
    };

    let horizon = table.horizon as u32;
    // Reverse min-heap keyed by (f, t, cell) for deterministic expansion.
    let mut open: BinaryHeap<Reverse<(u32, u32, CellIndex)>> = BinaryHeap::new();
    let mut parent: HashMap<(CellIndex, u32), (CellIndex, u32)> = HashMap::new();
    let mut closed: HashSet<(CellIndex, u32)> = HashSet::new();
    open.push(Reverse((field.reachable(start).unwrap(), 0, start)));

    while let Some(Reverse((_, t, cell))) = open.pop() {
        if !closed.insert((cell, t)) {
            continue;
        }
        if cell == target
            && (t..=t + ARRIVAL_LINGER).all(|tt| table.vertex_free(cell, tt))
        {
            let mut path = vec![cell];
            let mut node = (cell, t);
            while let Some(&prev) = parent.get(&node) {
                path.push(prev.0);
                node = prev;
            }
            path.reverse();
            table.reserve_path_leaving(&path, ARRIVAL_LINGER);
            return Some(path);
        }
        if t == horizon {
            continue;
        }
        for action in Action::ALL {
            let next = match map.apply_action(cell, action) {
                Some(c) => c,
                None => continue,
            };
            if field.reachable(next).is_none() || !transit(next) {
                continue; // off the agent's transit graph
            }
            if !table.vertex_free(next, t + 1) || !table.edge_free(cell, next, t) {
                continue;
            }
            if closed.contains(&(next, t + 1)) {
                continue;
            }
            let f = t + 1 + field.reachable(next).unwrap();
            parent.entry((next, t + 1)).or_insert((cell, t));
            open.push(Reverse((f, t + 1, next)));
        }
    }
    None
}

/// Largest finite distance stored in the cache, a practical stand-in for
/// the map diameter when sizing the planning horizon.
pub fn map_diameter(map: &GridMap, cache: &PathCache) -> usize {
    let d = map
        .cells()
        .filter_map(|c| {
            cache
                .targets()
                .iter()
                .filter_map(|&t| cache.field(t).and_then(|f| f.reachable(c)))
                .max()
        })
        .max()
        .unwrap_or(0);
    if d == 0 {
        (map.width() + map.height()) as u32 as usize
    } else {
        d as usize
    }
}

/// Planning horizon `T = 2 * diameter + m`.
pub fn default_horizon(map: &GridMap, cache: &PathCache, num_agents: usize) -> usize {
    2 * map_diameter(map, cache) + num_agents
}

/// Parking next to a bay seals its approach just as badly as parking on
/// it, so an acceptable long-term spot keeps one cell of clearance.
fn clear_of_bays(map: &GridMap, cell: CellIndex) -> bool {
    Action::MOVES.iter().all(|&a| {
        map.apply_action(cell, a)
            .is_none_or(|n| map.kind(n) != CellKind::Delivery)
    })
}

/// Space-time BFS to the nearest plain floor cell where parking is free,
/// for clearing a parked robot off a delivery bay. Transit is restricted
/// to floor cells (plus the start), matching the moves an idle robot is
/// allowed to make.
fn plan_relocation(
    map: &GridMap,
    start: CellIndex,
    table: &ReservationTable,
    max_depth: u32,
) -> Option<Vec<CellIndex>> {
    let mut frontier = vec![start];
    let mut parent: HashMap<(CellIndex, u32), (CellIndex, u32)> = HashMap::new();
    let mut seen: HashSet<(CellIndex, u32)> = HashSet::new();
    for t in 0..max_depth {
        let mut next_frontier = Vec::new();
        for &cell in &frontier {
            for action in Action::MOVES {
                let Some(next) = map.apply_action(cell, action) else { continue };
                if map.kind(next) != CellKind::Floor
                    || !table.vertex_free(next, t + 1)
                    || !table.edge_free(cell, next, t)
                    || !seen.insert((next, t + 1))
                {
                    continue;
                }
                parent.insert((next, t + 1), (cell, t));
                if table.parking_free(next, t + 1) && clear_of_bays(map, next) {
                    let mut path = vec![next];
                    let mut node = (next, t + 1);
                    while let Some(&prev) = parent.get(&node) {
                        path.push(prev.0);
                        node = prev;
                    }
                    path.reverse();
                    return Some(path);
                }
                next_frontier.push(next);
            }
            // Waiting in place is allowed while a neighbour clears.
            if table.vertex_free(cell, t + 1) && seen.insert((cell, t + 1)) {
                parent.insert((cell, t + 1), (cell, t));
                next_frontier.push(cell);
            }
        }
        frontier = next_frontier;
    }
    None
}

/// Replans every agent in index (priority) order against a fresh table.
/// Stationary agents are reserved first so nobody routes through them;
/// parked robots left standing on a delivery bay are sent to the nearest
/// free floor cell so the bay stays usable; planning failures degrade to
/// wait-in-place.
pub fn replan_all(
    world: &WorldState,
    map: &GridMap,
    cache: &PathCache,
    horizon: usize,
) -> Vec<AgentPlan> {
    let m = world.agents.len();
    let mut table = ReservationTable::new(horizon);
    let relocating = |agent: &crate::dynamics::AgentState| {
        agent.status == AgentStatus::Parked
            && (map.kind(agent.position) != CellKind::Floor
                || !clear_of_bays(map, agent.position))
    };
    // Stationary agents are reserved before anyone plans, regardless of
    // priority: a moving agent must never route through a parked robot.
    for agent in &world.agents {
        let idle = agent.status != AgentStatus::Active || agent.position == agent.target;
        if !idle || relocating(agent) {
            continue;
        }
        let path = vec![agent.position];
        if agent.status == AgentStatus::Active {
            // Standing on its target: the task resolves within a step or
            // two and the ensuing replan moves the agent along, so the
            // cell is only held for the linger window.
            table.reserve_path_leaving(&path, ARRIVAL_LINGER);
        } else {
            table.reserve_path(&path);
        }
    }
    let mut plans: Vec<Option<AgentPlan>> = vec![None; m];
    // Bay-clearing relocations go next: they are short, rare, and must
    // not be pre-empted by a delivery plan crossing the bay.
    for (i, agent) in world.agents.iter().enumerate() {
        if !relocating(agent) {
            continue;
        }
        let depth = (map.width() + map.height()) as u32;
        let path = plan_relocation(map, agent.position, &table, depth)
            .unwrap_or_else(|| vec![agent.position]);
        table.reserve_path(&path);
        plans[i] = Some(AgentPlan { path, complete: true });
    }
    for (i, agent) in world.agents.iter().enumerate() {
        if plans[i].is_some() {
            continue;
        }
        let idle = agent.status != AgentStatus::Active || agent.position == agent.target;
        plans[i] = Some(if !idle {
            match plan_agent(map, cache, agent.position, agent.target, &mut table) {
                Some(path) => AgentPlan { path, complete: true },
                None => {
                    // Planning failed: hold in place and reserve the spot
                    // so later priorities at least avoid the stranded robot.
                    let path = vec![agent.position];
                    table.reserve_path_leaving(&path, ARRIVAL_LINGER);
                    AgentPlan { path, complete: false }
                }
            }
        } else {
            AgentPlan { path: vec![agent.position], complete: true }
        });
    }
    plans.into_iter().map(Option::unwrap).collect()
}
