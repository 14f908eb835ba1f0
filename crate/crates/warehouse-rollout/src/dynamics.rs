//! The optimal-control problem: state, per-agent control constraint sets,
//! the transition function, the stage cost and collision counting.
//!
//! Collisions are never prevented by the constraint sets; several agents may
//! legally occupy one cell in a successor state. Avoidance is incentivized
//! through a large collision penalty in the stage cost instead.

use crate::gridmap::{CellIndex, CellKind, GridMap};

/// One agent's action. `C = 5` candidates per agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    /// Fixed tie-breaking order used everywhere a deterministic scan is
    /// required.
    pub const ALL: [Action; 5] =
        [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];

    /// The four move actions, same order as [`Action::ALL`].
    pub const MOVES: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn to_byte(self) -> u8 {
        match self {
            Action::Up => 0,
            Action::Down => 1,
            Action::Left => 2,
            Action::Right => 3,
            Action::Stay => 4,
        }
    }

    pub fn from_byte(b: u8) -> Option<Action> {
        Action::ALL.get(b as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentStatus {
    Active,
    Malfunctioned,
    Parked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub position: CellIndex,
    pub target: CellIndex,
    pub status: AgentStatus,
    /// Index into `WorldState::goods` of the good this agent is assigned to
    /// or carrying, if any.
    pub task: Option<usize>,
}

impl AgentState {
    /// An active, untasked agent heading for `target`.
    pub fn active(position: CellIndex, target: CellIndex) -> Self {
        AgentState { position, target, status: AgentStatus::Active, task: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoodStatus {
    Waiting,
    Assigned,
    InTransit,
    Delivered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Good {
    pub storage_cell: CellIndex,
    pub delivery_cell: CellIndex,
    pub status: GoodStatus,
}

impl Good {
    /// Waiting and Assigned goods sit on their storage cell and act as
    /// obstacles; InTransit goods are carried, Delivered goods are gone.
    pub fn occupies_storage(&self) -> bool {
        matches!(self.status, GoodStatus::Waiting | GoodStatus::Assigned)
    }
}

/// Full system state at one stage: per-agent (position, target) pairs plus
/// the goods bookkeeping vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub agents: Vec<AgentState>,
    pub goods: Vec<Good>,
    pub stage: u64,
}

impl WorldState {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn all_delivered(&self) -> bool {
        self.goods.iter().all(|g| g.status == GoodStatus::Delivered)
    }
}

/// One action per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointControl(pub Vec<Action>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Discount factor in (0, 1).
    pub alpha: f64,
    /// Collision penalty (large positive).
    pub c1: f64,
    /// Arrival reward (negative).
    pub c2: f64,
    /// Count same-edge exchanges as collisions too. Off by default: the cost
    /// model treats a collision purely as co-occupancy.
    pub swap_conflicts: bool,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { alpha: 0.999, c1: 1e20, c2: -1e4, swap_conflicts: false }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("agent index {0} out of range")]
    BadAgent(usize),
    #[error("infeasible action {action:?} for agent {agent}")]
    Infeasible { agent: usize, action: Action },
}

/// Supplies the next good for an agent that just completed a delivery.
///
/// Must be a pure function of its inputs so that repeated candidate
/// evaluations of the same transition give identical results.
pub trait TargetAssigner {
    /// Index into `world.goods` of a Waiting good to assign to `agent`, or
    /// `None` when no goods remain.
    fn pick_good(&self, world: &WorldState, agent: usize) -> Option<usize>;
}

/// Assigner that never assigns; useful for frozen-task simulations and
/// enumerated instances.
pub struct NoAssigner;

impl TargetAssigner for NoAssigner {
    fn pick_good(&self, _world: &WorldState, _agent: usize) -> Option<usize> {
        None
    }
}

/// The control constraint set `U^i(x)` in the fixed action order.
///
/// Stay is always included. A move is included iff the destination is
/// in-bounds, not a wall, and not occupied by a good, except that an agent
/// may always move onto its own current target. The set depends only on the
/// agent's own (position, target) pair and the goods vector, never on other
/// agents' positions.
///
/// Malfunctioned agents are pinned to Stay. Parked (idle) agents keep the
/// full move set so that the planner can shoo them out of working agents'
/// way, but with Stay listed first: ties in the rollout minimization then
/// keep an undisturbed idle robot at rest instead of letting it drift.
pub fn feasible_controls(
    world: &WorldState,
    map: &GridMap,
    agent: usize,
) -> Result<Vec<Action>, DynamicsError> {
    let a = world.agents.get(agent).ok_or(DynamicsError::BadAgent(agent))?;
    if a.status == AgentStatus::Malfunctioned {
        return Ok(vec![Action::Stay]);
    }
    let mut out = Vec::with_capacity(5);
    if a.status == AgentStatus::Parked {
        out.push(Action::Stay);
    }
    for action in Action::MOVES {
        if let Some(dest) = map.apply_action(a.position, action) {
            if map.kind(dest) == CellKind::Wall {
                continue;
            }
            // Idle robots are confined to plain floor so they can never be
            // nudged onto a delivery bay or an empty shelf cell and seal it.
            if a.status == AgentStatus::Parked && map.kind(dest) != CellKind::Floor {
                continue;
            }
            let blocked = dest != a.target
                && world.goods.iter().any(|g| g.occupies_storage() && g.storage_cell == dest);
            if !blocked {
                out.push(action);
            }
        }
    }
    if a.status != AgentStatus::Parked {
        out.push(Action::Stay);
    }
    Ok(out)
}

/// One step of the system dynamics `f(x, u)`.
///
/// Target resolution uses the pre-move positions: an agent standing on its
/// storage target picks the good up (the cell is freed, the new target is the
/// good's delivery cell); an agent standing on its delivery target completes
/// the delivery and receives a fresh task from the assigner, or parks when
/// none remain. Positions then update by the action offsets. Co-occupancy in
/// the returned state is legal.
pub fn step(
    world: &WorldState,
    u: &JointControl,
    map: &GridMap,
    assigner: &dyn TargetAssigner,
) -> Result<WorldState, DynamicsError> {
    assert_eq!(u.0.len(), world.num_agents());
    let mut next = world.clone();

    for i in 0..world.num_agents() {
        let feasible = feasible_controls(world, map, i)?;
        if !feasible.contains(&u.0[i]) {
            return Err(DynamicsError::Infeasible { agent: i, action: u.0[i] });
        }
    }

    // Target resolution on pre-move positions.
    for i in 0..world.num_agents() {
        let (pos, target, status, task) = {
            let a = &world.agents[i];
            (a.position, a.target, a.status, a.task)
        };
        if status != AgentStatus::Active || pos != target {
            continue;
        }
        let Some(gi) = task else { continue };
        match world.goods[gi].status {
            GoodStatus::Assigned => {
                next.goods[gi].status = GoodStatus::InTransit;
                next.agents[i].target = world.goods[gi].delivery_cell;
            }
            GoodStatus::InTransit => {
                next.goods[gi].status = GoodStatus::Delivered;
                // Pick from the partially-updated state: two agents
                // delivering in the same stage must not draw the same
                // replacement good from the stale pool.
                match assigner.pick_good(&next, i) {
                    Some(ng) => {
                        debug_assert_eq!(world.goods[ng].status, GoodStatus::Waiting);
                        next.goods[ng].status = GoodStatus::Assigned;
                        next.agents[i].task = Some(ng);
                        next.agents[i].target = world.goods[ng].storage_cell;
                    }
                    None => {
                        next.agents[i].status = AgentStatus::Parked;
                        next.agents[i].task = None;
                    }
                }
            }
            _ => {}
        }
    }

    // Position update.
    for i in 0..world.num_agents() {
        let pos = world.agents[i].position;
        next.agents[i].position =
            map.apply_action(pos, u.0[i]).expect("feasible action stays in bounds");
    }

    next.stage = world.stage + 1;
    Ok(next)
}

/// Number of collisions in a state: per-cell excess occupancy,
/// `sum over cells of max(0, occupants - 1)`, counting every agent.
pub fn collision_count(world: &WorldState) -> usize {
    let mut cells: Vec<CellIndex> = world.agents.iter().map(|a| a.position).collect();
    cells.sort_unstable();
    let mut n = 0;
    let mut run = 1;
    for w in cells.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            n += run - 1;
            run = 1;
        }
    }
    if !cells.is_empty() {
        n += run - 1;
    }
    n
}

/// Number of agent pairs that exchanged cells between `prev` and `next`.
pub fn swap_count(prev: &WorldState, next: &WorldState) -> usize {
    let m = prev.num_agents();
    let mut n = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            if prev.agents[i].position == next.agents[j].position
                && prev.agents[j].position == next.agents[i].position
                && prev.agents[i].position != prev.agents[j].position
            {
                n += 1;
            }
        }
    }
    n
}

/// Collision count of the transition `prev -> next`, including swaps when
/// `swap_conflicts` is set.
pub fn transition_collisions(prev: &WorldState, next: &WorldState, swap_conflicts: bool) -> usize {
    let mut n = collision_count(next);
    if swap_conflicts {
        n += swap_count(prev, next);
    }
    n
}

/// Stage cost `g(x, u) = c1 * n(f(x, u)) + sum_i g2(p_i, t_i)`, where `g2`
/// contributes `c2` for every tasked Active agent sitting on its current
/// target (idle agents' positions coincide with their stale targets and
/// earn nothing).
pub fn stage_cost(
    world: &WorldState,
    u: &JointControl,
    map: &GridMap,
    assigner: &dyn TargetAssigner,
    params: &CostParams,
) -> Result<f64, DynamicsError> {
    let next = step(world, u, map, assigner)?;
    Ok(stage_cost_with_next(world, &next, params))
}

/// Same as [`stage_cost`] when the successor state is already available.
pub fn stage_cost_with_next(world: &WorldState, next: &WorldState, params: &CostParams) -> f64 {
    let n = transition_collisions(world, next, params.swap_conflicts) as f64;
    let arrivals = world
        .agents
        .iter()
        .filter(|a| {
            a.status == AgentStatus::Active && a.task.is_some() && a.position == a.target
        })
        .count() as f64;
    params.c1 * n + params.c2 * arrivals
}
