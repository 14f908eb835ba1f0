//! Base policies and simulation-based cost evaluation.
//!
//! `mu1` follows the precomputed shortest-path field of each agent's current
//! target. `mu2` is the same except that it first freezes agents for
//! `index mod freeze_period` stages, staggering their departures. Cost
//! estimates come from closed-loop simulation with target reassignment
//! disabled: an agent that finishes its leg collects the arrival reward
//! once and leaves the simulated grid; blocked agents yield rather than
//! collide, so the estimate prices congestion as delay, not catastrophe.

use crate::dynamics::{Action, AgentStatus, CostParams, JointControl, WorldState};
use crate::gridmap::{CellIndex, GridMap};
use crate::pathcache::{PathCache, UNREACHABLE};

pub const DEFAULT_FREEZE_PERIOD: u32 = 8;
/// Extra simulation stages past the longest remaining leg.
const HORIZON_SLACK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    ShortestPath,
    Frozen { freeze_period: u32 },
}

#[derive(Debug, Clone, Copy)]
pub struct BasePolicy<'a> {
    pub kind: PolicyKind,
    pub cache: &'a PathCache,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("no distance field for live target {0}")]
    MissingField(CellIndex),
}

/// Discounted simulated cost of running a base policy from a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub value: f64,
    /// Horizon was hit with live agents remaining.
    pub truncated: bool,
    pub horizon_used: usize,
}

impl<'a> BasePolicy<'a> {
    pub fn shortest_path(cache: &'a PathCache) -> Self {
        BasePolicy { kind: PolicyKind::ShortestPath, cache }
    }

    pub fn frozen(cache: &'a PathCache, freeze_period: u32) -> Self {
        assert!(freeze_period >= 1);
        BasePolicy { kind: PolicyKind::Frozen { freeze_period }, cache }
    }

    fn freeze_steps(&self, agent: usize) -> u64 {
        match self.kind {
            PolicyKind::ShortestPath => 0,
            PolicyKind::Frozen { freeze_period } => (agent as u64) % freeze_period as u64,
        }
    }

    /// The action the policy plays for one agent at `sim_clock` stages into
    /// a simulation.
    pub fn action(
        &self,
        state: &WorldState,
        agent: usize,
        sim_clock: u64,
    ) -> Result<Action, PolicyError> {
        let a = &state.agents[agent];
        if a.status != AgentStatus::Active
            || a.position == a.target
            || sim_clock < self.freeze_steps(agent)
        {
            return Ok(Action::Stay);
        }
        let field = self.cache.field(a.target).ok_or(PolicyError::MissingField(a.target))?;
        Ok(field.step_from(a.position).unwrap_or(Action::Stay))
    }

    /// One joint control of the policy.
    pub fn control(&self, state: &WorldState, sim_clock: u64) -> Result<JointControl, PolicyError> {
        let mut actions = Vec::with_capacity(state.num_agents());
        for i in 0..state.num_agents() {
            actions.push(self.action(state, i, sim_clock)?);
        }
        Ok(JointControl(actions))
    }

    /// Simulates the closed loop under this policy and returns the
    /// discounted cost.
    ///
    /// Simulated agents yield instead of colliding: an agent whose next
    /// cell is occupied waits for the occupant to move out, so followers
    /// may enter a cell being vacated in the same step and, when swap
    /// conflicts are off, agents in a cyclic standoff rotate through each
    /// other (which the vertex-collision judge permits). The estimate
    /// therefore never contains the collision penalty; unresolvable
    /// standoffs surface as lost arrival rewards instead.
    pub fn evaluate_cost(
        &self,
        map: &GridMap,
        state: &WorldState,
        params: &CostParams,
        horizon: Option<usize>,
    ) -> Result<CostEstimate, PolicyError> {
        let m = state.num_agents();
        let mut pos: Vec<CellIndex> = state.agents.iter().map(|a| a.position).collect();
        // live = still heading for its target; others occupy their cell.
        let mut live: Vec<bool> =
            state.agents.iter().map(|a| a.status == AgentStatus::Active).collect();
        // Agents that complete their task during the simulation leave the
        // grid: in the closed loop they are reassigned and move on, so
        // modelling them as permanent obstacles would predict spurious
        // everlasting collisions whenever two agents share a target cell.
        // Parked (idle) agents are treated as cooperative for the same
        // reason -- they yield when working robots approach -- so only
        // malfunctioned agents persist as hard obstacles.
        let mut present: Vec<bool> = state
            .agents
            .iter()
            .map(|a| a.status != AgentStatus::Parked)
            .collect();
        let mut fields = Vec::with_capacity(m);
        let mut max_dist = 0usize;
        for (i, a) in state.agents.iter().enumerate() {
            if live[i] {
                let f = self.cache.field(a.target).ok_or(PolicyError::MissingField(a.target))?;
                let d = f.distance(a.position);
                if d != UNREACHABLE {
                    max_dist = max_dist.max(d as usize);
                }
                fields.push(Some(f));
            } else {
                fields.push(None);
            }
        }
        let horizon = horizon.unwrap_or(max_dist + m + HORIZON_SLACK).max(1);

        let mut value = 0.0;
        let mut discount = 1.0;
        let mut truncated = false;
        let mut clock = 0u64;
        loop {
            // Arrival rewards, then depart.
            for i in 0..m {
                if live[i] && pos[i] == state.agents[i].target {
                    value += discount * params.c2;
                    live[i] = false;
                    present[i] = false;
                }
            }
            if live.iter().all(|&l| !l) {
                break;
            }
            if clock as usize >= horizon {
                truncated = true;
                break;
            }
            let mut proposal: Vec<Option<CellIndex>> = vec![None; m];
            for i in 0..m {
                if !live[i] || clock < self.freeze_steps(i) {
                    continue;
                }
                if let Some(a) = fields[i].unwrap().step_from(pos[i]) {
                    proposal[i] =
                        Some(map.apply_action(pos[i], a).expect("cached action in bounds"));
                }
            }
            resolve_moves(map.num_cells(), &mut pos, &present, &proposal, !params.swap_conflicts);
            discount *= params.alpha;
            clock += 1;
        }
        Ok(CostEstimate { value, truncated, horizon_used: horizon })
    }
}

/// Resolves simultaneous move proposals by yielding and updates `pos` in
/// place. `proposal[i] = None` means agent `i` holds still; absent agents
/// (`present[i] = false`) neither block nor move. Moves into a free cell
/// are granted to a fixpoint, so followers may trail a leader within one
/// step; with `allow_rotations`, agents blocked around a closed loop all
/// advance at once (legal under vertex-only collision checking). Denied
/// proposals leave the agent in place.
pub fn resolve_moves(
    num_cells: usize,
    pos: &mut [CellIndex],
    present: &[bool],
    proposal: &[Option<CellIndex>],
    allow_rotations: bool,
) {
    let m = pos.len();
    let mut count = vec![0u8; num_cells];
    for i in 0..m {
        if present[i] {
            count[pos[i].as_usize()] += 1;
        }
    }
    let mut resolved: Vec<bool> =
        (0..m).map(|i| proposal[i].is_none() || !present[i]).collect();
    loop {
        let mut progressed = false;
        loop {
            let mut pass = false;
            for i in 0..m {
                if resolved[i] {
                    continue;
                }
                let dest = proposal[i].unwrap();
                if count[dest.as_usize()] == 0 {
                    count[pos[i].as_usize()] -= 1;
                    count[dest.as_usize()] += 1;
                    pos[i] = dest;
                    resolved[i] = true;
                    pass = true;
                }
            }
            if !pass {
                break;
            }
            progressed = true;
        }
        // Cycles: unresolved agents each blocked by the next one around a
        // loop rotate together. Skipped when rotations are disallowed
        // (swap conflicts make exchanging cells a collision).
        if allow_rotations {
            let mut occupant: std::collections::HashMap<usize, usize> =
                std::collections::HashMap::new();
            for i in 0..m {
                if !resolved[i] && count[pos[i].as_usize()] == 1 {
                    occupant.insert(pos[i].as_usize(), i);
                }
            }
            for start in 0..m {
                if resolved[start] {
                    continue;
                }
                let mut chain = vec![start];
                let mut cur = start;
                loop {
                    let dest = proposal[cur].unwrap().as_usize();
                    match occupant.get(&dest) {
                        Some(&j) if j == start => {
                            for &k in &chain {
                                pos[k] = proposal[k].unwrap();
                                resolved[k] = true;
                                occupant.remove(&proposal[k].unwrap().as_usize());
                            }
                            progressed = true;
                            break;
                        }
                        Some(&j) if !chain.contains(&j) && !resolved[j] => {
                            chain.push(j);
                            cur = j;
                        }
                        _ => break,
                    }
                }
            }
        }
        if !progressed {
            break;
        }
    }
}

/// Extra discount steps applied when a quoted cost is recorded as a
/// performance certificate. The simulations idealize coordination --
/// finished robots leave the grid and idle robots sidestep for free --
/// while the executed system occasionally loses a stage to a sidestep
/// race near a crowded bay. Each lost stage costs `(1 - alpha) * |c2|`
/// of discounted reward, and delaying every simulated credit by a few
/// steps puts at least that much slack under the certificate, keeping it
/// an upper bound on the realized cost. The margin is bookkeeping only:
/// control selection always uses the unscaled estimate.
pub const COORDINATION_MARGIN_STEPS: i32 = 4;

/// Pointwise minimum of the two base policies' simulated costs,
/// `min(J_mu1, J_mu2)`.
pub fn combined_cost(
    cache: &PathCache,
    map: &GridMap,
    state: &WorldState,
    params: &CostParams,
    freeze_period: u32,
    horizon: Option<usize>,
) -> Result<f64, PolicyError> {
    let j1 = BasePolicy::shortest_path(cache).evaluate_cost(map, state, params, horizon)?;
    let j2 = BasePolicy::frozen(cache, freeze_period).evaluate_cost(map, state, params, horizon)?;
    Ok(j1.value.min(j2.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{self, AgentState, NoAssigner};
    use crate::gridmap::parse_map;
    use crate::pathcache::precompute_all;

    fn agent(pos: CellIndex, target: CellIndex) -> AgentState {
        AgentState { position: pos, target, status: AgentStatus::Active, task: None }
    }

    fn world(agents: Vec<AgentState>) -> WorldState {
        WorldState { agents, goods: vec![], stage: 0 }
    }

    #[test]
    fn approach_action_at_distance_one() {
        let map = parse_map(".D\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let w = world(vec![agent(map.index(0, 0), map.index(0, 1))]);
        let mu1 = BasePolicy::shortest_path(&cache);
        assert_eq!(mu1.control(&w, 0).unwrap().0, vec![Action::Right]);
    }

    #[test]
    fn frozen_schedule() {
        let map = parse_map("D.....\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let t = map.index(0, 0);
        let agents = (0..5).map(|i| agent(map.index(0, i as u32 + 1), t)).collect();
        let w = world(agents);
        let mu2 = BasePolicy::frozen(&cache, 4);
        // Agent 3 freezes for 3 mod 4 = 3 stages.
        assert_eq!(mu2.action(&w, 3, 2).unwrap(), Action::Stay);
        assert_eq!(mu2.action(&w, 3, 3).unwrap(), Action::Left);
        // Agent 0 never freezes.
        assert_eq!(mu2.action(&w, 0, 0).unwrap(), Action::Left);
    }

    #[test]
    fn parked_and_malfunctioned_stay() {
        let map = parse_map("D..\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let mut w = world(vec![
            agent(map.index(0, 1), map.index(0, 0)),
            agent(map.index(0, 2), map.index(0, 0)),
        ]);
        w.agents[0].status = AgentStatus::Parked;
        w.agents[1].status = AgentStatus::Malfunctioned;
        let mu1 = BasePolicy::shortest_path(&cache);
        assert_eq!(mu1.control(&w, 0).unwrap().0, vec![Action::Stay, Action::Stay]);
    }

    #[test]
    fn missing_field_is_an_error() {
        let map = parse_map("D..\n").unwrap();
        let cache = PathCache::empty(&map);
        let w = world(vec![agent(map.index(0, 1), map.index(0, 0))]);
        let mu1 = BasePolicy::shortest_path(&cache);
        assert_eq!(mu1.control(&w, 0), Err(PolicyError::MissingField(map.index(0, 0))));
    }

    #[test]
    fn single_agent_cost_is_discounted_arrival() {
        let map = parse_map("....D\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let params = CostParams::default();
        let mu1 = BasePolicy::shortest_path(&cache);
        for d in 0..=4u32 {
            let w = world(vec![agent(map.index(0, 4 - d), map.index(0, 4))]);
            let est = mu1.evaluate_cost(&map, &w, &params, None).unwrap();
            let expected = params.alpha.powi(d as i32) * params.c2;
            assert!((est.value - expected).abs() < 1e-9, "d={d}");
            assert!(!est.truncated);
        }
    }

    /// Step-by-step oracle: replay mu1 through the real dynamics and
    /// accumulate the discounted stage cost.
    #[test]
    fn single_agent_cost_matches_dynamics_replay() {
        let map = parse_map("..#.D\n.....\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let params = CostParams::default();
        let target = map.index(0, 4);
        let mut a = agent(map.index(0, 0), target);
        a.task = Some(0);
        let mut w = world(vec![a]);
        w.goods.push(dynamics::Good {
            storage_cell: map.index(0, 0),
            delivery_cell: target,
            status: dynamics::GoodStatus::InTransit,
        });
        let est = BasePolicy::shortest_path(&cache)
            .evaluate_cost(&map, &w, &params, None)
            .unwrap();

        let mu1 = BasePolicy::shortest_path(&cache);
        let mut oracle = 0.0;
        let mut discount = 1.0;
        for _ in 0..20 {
            if w.agents[0].status != AgentStatus::Active {
                break;
            }
            let u = mu1.control(&w, 0).unwrap();
            oracle += discount * dynamics::stage_cost(&w, &u, &map, &NoAssigner, &params).unwrap();
            w = dynamics::step(&w, &u, &map, &NoAssigner).unwrap();
            discount *= params.alpha;
        }
        assert!((est.value - oracle).abs() < 1e-9);
    }

    #[test]
    fn head_on_agents_rotate_through_each_other() {
        // 1x5 corridor, agents at the ends with swapped delivery targets.
        // Under vertex-only collisions the simulated standoff resolves by
        // a two-cycle rotation, so both still arrive at full distance.
        let map = parse_map("D...D\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let params = CostParams::default();
        let w = world(vec![
            agent(map.index(0, 0), map.index(0, 4)),
            agent(map.index(0, 4), map.index(0, 0)),
        ]);
        let mu1 = BasePolicy::shortest_path(&cache);
        let est = mu1.evaluate_cost(&map, &w, &params, None).unwrap();
        assert!(!est.truncated);
        // Agent 0 claims the contested middle cell first, so agent 1 waits
        // one step before the rotation and arrives a stage later.
        let expected = params.alpha.powi(4) * params.c2 + params.alpha.powi(5) * params.c2;
        assert!((est.value - expected).abs() < 1e-6, "{}", est.value);
    }

    #[test]
    fn swap_conflicts_turn_the_standoff_into_a_stall() {
        // Same corridor, but with swap conflicts the rotation is illegal:
        // both agents yield forever and no reward is ever collected.
        let map = parse_map("D...D\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let params = CostParams { swap_conflicts: true, ..Default::default() };
        let w = world(vec![
            agent(map.index(0, 0), map.index(0, 4)),
            agent(map.index(0, 4), map.index(0, 0)),
        ]);
        let j1 = BasePolicy::shortest_path(&cache)
            .evaluate_cost(&map, &w, &params, None)
            .unwrap();
        assert!(j1.truncated);
        assert_eq!(j1.value, 0.0);
        let combined =
            combined_cost(&cache, &map, &w, &params, DEFAULT_FREEZE_PERIOD, None).unwrap();
        assert!(combined <= j1.value);
    }

    #[test]
    fn follower_trails_leader_without_delay() {
        // Two agents in single file heading the same way: the follower may
        // step into the cell its leader vacates in the same step.
        let map = parse_map("D....\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let params = CostParams::default();
        let w = world(vec![
            agent(map.index(0, 1), map.index(0, 0)),
            agent(map.index(0, 2), map.index(0, 0)),
        ]);
        let est = BasePolicy::shortest_path(&cache)
            .evaluate_cost(&map, &w, &params, None)
            .unwrap();
        assert!(!est.truncated);
        // Leader arrives at t=1, follower one step behind at t=2.
        let expected = params.alpha * params.c2 + params.alpha.powi(2) * params.c2;
        assert!((est.value - expected).abs() < 1e-6, "{}", est.value);
    }

    #[test]
    fn blocked_agent_waits_for_a_frozen_obstacle() {
        // A malfunctioned robot seals a 1-wide corridor; the live agent
        // yields forever instead of registering a collision.
        let map = parse_map("D...\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let params = CostParams::default();
        let mut w = world(vec![
            agent(map.index(0, 3), map.index(0, 0)),
            agent(map.index(0, 1), map.index(0, 1)),
        ]);
        w.agents[1].status = AgentStatus::Malfunctioned;
        let est = BasePolicy::shortest_path(&cache)
            .evaluate_cost(&map, &w, &params, Some(30))
            .unwrap();
        assert!(est.truncated);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn all_parked_costs_zero() {
        let map = parse_map("D..\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let mut w = world(vec![agent(map.index(0, 1), map.index(0, 0))]);
        w.agents[0].status = AgentStatus::Parked;
        let est = BasePolicy::shortest_path(&cache)
            .evaluate_cost(&map, &w, &CostParams::default(), None)
            .unwrap();
        assert_eq!(est.value, 0.0);
        assert!(!est.truncated);

        let empty = world(vec![]);
        let c = combined_cost(&cache, &map, &empty, &CostParams::default(), 8, None).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn truncation_flag_on_unreachable_target() {
        let map = parse_map("D.#.\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let w = world(vec![agent(map.index(0, 3), map.index(0, 0))]);
        let est = BasePolicy::shortest_path(&cache)
            .evaluate_cost(&map, &w, &CostParams::default(), Some(8))
            .unwrap();
        assert!(est.truncated);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn determinism() {
        let map = parse_map("D....\n..@..\n....D\n").unwrap();
        let cache = precompute_all(&map).unwrap();
        let params = CostParams::default();
        let w = world(vec![
            agent(map.index(1, 0), map.index(0, 0)),
            agent(map.index(1, 4), map.index(2, 4)),
        ]);
        let a = combined_cost(&cache, &map, &w, &params, 8, None).unwrap();
        let b = combined_cost(&cache, &map, &w, &params, 8, None).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
