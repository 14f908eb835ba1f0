//! One-agent-at-a-time rollout, the good-control rule and the
//! random-reshuffling controller.
//!
//! The sequential minimization is generic over a [`RolloutModel`] so the same
//! engine drives both the warehouse problem (simulated base-policy costs)
//! and the enumerated instances used by the exact-DP checks (tabulated
//! costs).

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dynamics::{
    self, Action, AgentStatus, CostParams, JointControl, TargetAssigner, WorldState,
};
use crate::gridmap::{CellIndex, CellKind, GridMap};
use crate::pathcache::PathCache;
use crate::policies::{combined_cost, resolve_moves, BasePolicy};

fn manhattan(map: &GridMap, a: CellIndex, b: CellIndex) -> u32 {
    let w = map.width();
    let (ar, ac) = (a.as_usize() as u32 / w, a.as_usize() as u32 % w);
    let (br, bc) = (b.as_usize() as u32 / w, b.as_usize() as u32 % w);
    ar.abs_diff(br) + ac.abs_diff(bc)
}

/// Max agents for exact minimization over the full Cartesian product.
pub const STANDARD_ROLLOUT_MAX_AGENTS: usize = 6;

/// A problem on which agent-by-agent rollout can run.
pub trait RolloutModel {
    type State: Clone;

    fn num_agents(&self, state: &Self::State) -> usize;
    /// Per-agent constraint set in the fixed tie-breaking order.
    fn feasible_actions(&self, state: &Self::State, agent: usize) -> Vec<Action>;
    /// Provisional action of the base policy for a not-yet-decided agent.
    fn base_action(&self, state: &Self::State, agent: usize) -> Action;
    /// Provisional profile for the whole fleet. Models may return a
    /// deconflicted profile: if raw base actions collide with each other,
    /// the collision penalty lands in `g` for every candidate of whichever
    /// agent is minimized first and drowns out its comparison.
    fn base_profile(&self, state: &Self::State) -> Vec<Action> {
        (0..self.num_agents(state)).map(|i| self.base_action(state, i)).collect()
    }
    fn successor(&self, state: &Self::State, control: &JointControl) -> Self::State;
    fn stage_cost(&self, state: &Self::State, control: &JointControl, next: &Self::State) -> f64;
    /// Cost-to-go approximation evaluated at a successor state.
    fn cost_to_go(&self, state: &Self::State) -> f64;
    /// Collision count of the transition; the good rule demands zero.
    fn collisions(&self, state: &Self::State, next: &Self::State) -> usize;
    /// True when the control freezes the whole system with work left
    /// undone. A stalled control is collision-free yet worthless, so the
    /// reshuffling controller treats it like a bad control: the sequential
    /// minimization under a different order may unblock an agent that the
    /// current order never lets move out of another's way.
    fn stalled(&self, _state: &Self::State, _control: &JointControl) -> bool {
        false
    }
    fn alpha(&self) -> f64;
}

/// A permutation of the agent indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentOrder(Vec<usize>);

impl AgentOrder {
    pub fn new(perm: Vec<usize>) -> Self {
        let mut seen = vec![false; perm.len()];
        for &i in &perm {
            assert!(i < perm.len() && !seen[i], "not a permutation: {perm:?}");
            seen[i] = true;
        }
        AgentOrder(perm)
    }

    pub fn identity(m: usize) -> Self {
        AgentOrder((0..m).collect())
    }

    /// Uniform draw by Fisher-Yates on the supplied rng.
    pub fn random<R: Rng>(m: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(rng);
        AgentOrder(perm)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Outcome of one reshuffling-rollout decision.
#[derive(Debug, Clone)]
pub struct RolloutDecision {
    pub control: JointControl,
    /// `g(x, u) + alpha * Jbar(f(x, u))` for the returned control.
    pub value: f64,
    pub order_used: AgentOrder,
    pub reshuffles: usize,
    pub accepted_by_rule: bool,
    /// Candidate cost evaluations spent, at most `C * m * (reshuffles + 1)`.
    pub evaluations: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RolloutError {
    #[error("standard rollout refused: {0} agents exceed the enumeration guard of {max}",
            max = STANDARD_ROLLOUT_MAX_AGENTS)]
    TooManyAgents(usize),
}

/// One pass of the sequential minimization over the given agent order.
///
/// Already-decided agents keep their chosen actions, undecided agents use
/// the base policy's actions. Ties break toward the earlier action in the
/// fixed order. Returns the assembled control, the final minimal value and
/// the number of candidate evaluations spent.
pub fn multiagent_rollout_once<M: RolloutModel>(
    model: &M,
    state: &M::State,
    order: &AgentOrder,
) -> (JointControl, f64, usize) {
    let m = model.num_agents(state);
    assert_eq!(order.0.len(), m);
    let mut actions: Vec<Action> = model.base_profile(state);
    assert_eq!(actions.len(), m);
    let mut value = 0.0;
    let mut evals = 0;
    for &agent in &order.0 {
        let mut best: Option<(f64, Action)> = None;
        for cand in model.feasible_actions(state, agent) {
            actions[agent] = cand;
            let u = JointControl(actions.clone());
            let next = model.successor(state, &u);
            let v = model.stage_cost(state, &u, &next) + model.alpha() * model.cost_to_go(&next);
            evals += 1;
            if best.is_none_or(|(bv, _)| v < bv) {
                best = Some((v, cand));
            }
        }
        let (v, a) = best.expect("constraint set is nonempty");
        actions[agent] = a;
        value = v;
    }
    if m == 0 {
        value = model.stage_cost(state, &JointControl(vec![]), state);
    }
    (JointControl(actions), value, evals)
}

/// Exact minimization over the full Cartesian product `U(x)`, with
/// lexicographic tie-breaking. Guarded: refuses more than
/// [`STANDARD_ROLLOUT_MAX_AGENTS`] agents.
pub fn standard_rollout<M: RolloutModel>(
    model: &M,
    state: &M::State,
) -> Result<(JointControl, f64), RolloutError> {
    let m = model.num_agents(state);
    if m > STANDARD_ROLLOUT_MAX_AGENTS {
        return Err(RolloutError::TooManyAgents(m));
    }
    let sets: Vec<Vec<Action>> = (0..m).map(|i| model.feasible_actions(state, i)).collect();
    let mut cursor = vec![0usize; m];
    let mut best: Option<(f64, Vec<Action>)> = None;
    loop {
        let actions: Vec<Action> = (0..m).map(|i| sets[i][cursor[i]]).collect();
        let u = JointControl(actions.clone());
        let next = model.successor(state, &u);
        let v = model.stage_cost(state, &u, &next) + model.alpha() * model.cost_to_go(&next);
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, actions));
        }
        // Lexicographic advance, last agent fastest.
        let mut i = m;
        loop {
            if i == 0 {
                let (v, actions) = best.unwrap();
                return Ok((JointControl(actions), v));
            }
            i -= 1;
            cursor[i] += 1;
            if cursor[i] < sets[i].len() {
                break;
            }
            cursor[i] = 0;
        }
    }
}

/// The acceptance rule: a control is good iff it causes no immediate
/// collision, `g1(x, u) = 0`.
pub fn good_rule<M: RolloutModel>(model: &M, state: &M::State, control: &JointControl) -> bool {
    let next = model.successor(state, control);
    model.collisions(state, &next) == 0
}

/// Sequential minimization under `sigma`, redrawing the agent order
/// uniformly at random until the resulting control passes the good rule.
///
/// When `max_reshuffles` is exhausted the least-collisions candidate (ties
/// by value) is returned with `accepted_by_rule = false`. The order that
/// produced the returned control is the `sigma` for the next stage.
pub fn reshuffling_rollout<M: RolloutModel, R: Rng>(
    model: &M,
    state: &M::State,
    sigma: &AgentOrder,
    rng: &mut R,
    max_reshuffles: usize,
) -> RolloutDecision {
    let m = model.num_agents(state);
    let mut order = sigma.clone();
    let mut evaluations = 0;
    let mut fallback: Option<(usize, f64, JointControl, AgentOrder)> = None;
    for j in 0..=max_reshuffles {
        if j > 0 {
            order = AgentOrder::random(m, rng);
        }
        let (control, value, evals) = multiagent_rollout_once(model, state, &order);
        evaluations += evals;
        let next = model.successor(state, &control);
        let collisions = model.collisions(state, &next);
        if collisions == 0 && !model.stalled(state, &control) {
            debug_assert!(evaluations <= 5 * m * (j + 1));
            return RolloutDecision {
                control,
                value,
                order_used: order,
                reshuffles: j,
                accepted_by_rule: true,
                evaluations,
            };
        }
        let better = match &fallback {
            None => true,
            Some((fc, fv, _, _)) => collisions < *fc || (collisions == *fc && value < *fv),
        };
        if better {
            fallback = Some((collisions, value, control, order.clone()));
        }
    }
    let (_, value, control, order_used) = fallback.expect("at least one pass ran");
    RolloutDecision {
        control,
        value,
        order_used,
        reshuffles: max_reshuffles,
        accepted_by_rule: false,
        evaluations,
    }
}

/// `Jtilde(x) = g(x, u) + alpha * Jbar(f(x, u))` for a given control.
pub fn jtilde<M: RolloutModel>(model: &M, state: &M::State, control: &JointControl) -> f64 {
    let next = model.successor(state, control);
    model.stage_cost(state, control, &next) + model.alpha() * model.cost_to_go(&next)
}

/// The warehouse instantiation: dynamics for transitions, `mu1` for
/// provisional actions, and `min(J_mu1, J_mu2)` simulated costs as the
/// cost-to-go.
pub struct WarehouseModel<'a> {
    pub map: &'a GridMap,
    pub cache: &'a PathCache,
    pub assigner: &'a dyn TargetAssigner,
    pub params: CostParams,
    pub freeze_period: u32,
    /// Simulation horizon override; `None` derives one per evaluation.
    pub horizon: Option<usize>,
}

impl WarehouseModel<'_> {
    /// Which parked robots are in the way, and of whom. A working agent
    /// whose `mu1` step lands on a parked robot presses that robot; a
    /// pressed robot presses any parked robot sitting on its own escape
    /// cells, so pressure propagates through clusters of idle robots. The
    /// returned entry is the position the robot should move away from.
    fn pressure_sources(&self, state: &WorldState) -> Vec<Option<CellIndex>> {
        let m = state.num_agents();
        let mu1 = BasePolicy::shortest_path(self.cache);
        let mut source: Vec<Option<CellIndex>> = vec![None; m];
        let occupant: std::collections::HashMap<CellIndex, usize> = state
            .agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.status == AgentStatus::Parked)
            .map(|(i, a)| (a.position, i))
            .collect();
        let mut queue = std::collections::VecDeque::new();
        for (i, a) in state.agents.iter().enumerate() {
            if a.status != AgentStatus::Active {
                continue;
            }
            if a.position == a.target {
                // Resolving on its cell and about to step off: parked
                // robots on any departure cell are in the way.
                for (_, n) in self.map.neighbors(a.position) {
                    if let Some(&j) = occupant.get(&n) {
                        if source[j].is_none() {
                            source[j] = Some(a.position);
                            queue.push_back(j);
                        }
                    }
                }
                continue;
            }
            let act = mu1.action(state, i, 0).expect("distance field for every live target");
            if act == Action::Stay {
                continue;
            }
            let desired = self.map.apply_action(a.position, act).expect("cached step in bounds");
            if let Some(&j) = occupant.get(&desired) {
                if source[j].is_none() {
                    source[j] = Some(a.position);
                    queue.push_back(j);
                }
            }
        }
        // An idle robot camped next to a delivery bay is standing trouble
        // even before anyone is en route: a later malfunction or crowd can
        // seal its escape cells and lock the approach for good. Press it
        // away from the bay preemptively.
        for (i, a) in state.agents.iter().enumerate() {
            if a.status != AgentStatus::Parked || source[i].is_some() {
                continue;
            }
            let bay = self
                .map
                .neighbors(a.position)
                .into_iter()
                .map(|(_, n)| n)
                .find(|&n| self.map.kind(n) == CellKind::Delivery);
            if let Some(bay) = bay {
                source[i] = Some(bay);
                queue.push_back(i);
            }
        }
        while let Some(j) = queue.pop_front() {
            for (_, n) in self.map.neighbors(state.agents[j].position) {
                if let Some(&k) = occupant.get(&n) {
                    if source[k].is_none() {
                        source[k] = Some(state.agents[j].position);
                        queue.push_back(k);
                    }
                }
            }
        }
        source
    }

    /// Top-ranked sidestep destination of a pressed parked robot under the
    /// plain pressure ordering, ignoring the mutual-swap demotion applied
    /// in `feasible_actions` (which would recurse).
    fn raw_flee(&self, state: &WorldState, agent: usize, source: CellIndex) -> Option<CellIndex> {
        let pos = state.agents[agent].position;
        dynamics::feasible_controls(state, self.map, agent)
            .expect("valid agent index")
            .into_iter()
            .filter(|&act| act != Action::Stay)
            .filter_map(|act| self.map.apply_action(pos, act))
            .min_by_key(|&d| std::cmp::Reverse(manhattan(self.map, d, source)))
    }
}

impl RolloutModel for WarehouseModel<'_> {
    type State = WorldState;

    fn num_agents(&self, state: &WorldState) -> usize {
        state.num_agents()
    }

    fn feasible_actions(&self, state: &WorldState, agent: usize) -> Vec<Action> {
        let mut acts =
            dynamics::feasible_controls(state, self.map, agent).expect("valid agent index");
        // A parked robot under pressure offers its sidestep moves first and
        // Stay last. Its own position never enters the cost estimates, so
        // its candidates tie on value and the ordering alone decides:
        // without this bias the tie lands on Stay and an idle robot could
        // block a delivery approach forever.
        let a = &state.agents[agent];
        if a.status == AgentStatus::Parked {
            let sources = self.pressure_sources(state);
            if let Some(source) = sources[agent] {
                let occupant: std::collections::HashMap<CellIndex, usize> = state
                    .agents
                    .iter()
                    .enumerate()
                    .filter(|(j, o)| *j != agent && o.status == AgentStatus::Parked)
                    .map(|(j, o)| (o.position, j))
                    .collect();
                // A sidestep into the cell of a fellow pressed robot whose
                // own preferred sidestep is this robot's cell would swap two
                // interchangeable idle robots at identical cost, and the
                // pair oscillates forever. Rank such swaps below Stay;
                // same-direction chains through a vacating robot keep their
                // top rank.
                let mutual = |dest: CellIndex| {
                    occupant.get(&dest).is_some_and(|&j| {
                        sources[j].is_some_and(|src_j| {
                            self.raw_flee(state, j, src_j) == Some(a.position)
                        })
                    })
                };
                acts.sort_by_key(|&act| match self.map.apply_action(a.position, act) {
                    Some(dest) if act != Action::Stay => {
                        let tier = if mutual(dest) { 2 } else { 0 };
                        (tier, std::cmp::Reverse(manhattan(self.map, dest, source)))
                    }
                    _ => (1, std::cmp::Reverse(0)),
                });
            }
        }
        acts
    }

    fn base_action(&self, state: &WorldState, agent: usize) -> Action {
        BasePolicy::shortest_path(self.cache)
            .action(state, agent, 0)
            .expect("distance field for every live target")
    }

    /// Raw `mu1` proposals deconflicted by the same yielding resolution the
    /// simulations use, against the physical occupancy of every robot.
    /// Pressed parked robots propose their sidestep here as well, so a
    /// working agent can follow into the vacated cell in the same stage
    /// instead of losing a stage waiting for the sidestep to happen --
    /// matching the cost estimates, which do not see idle robots at all.
    fn base_profile(&self, state: &WorldState) -> Vec<Action> {
        let m = state.num_agents();
        let mu1 = BasePolicy::shortest_path(self.cache);
        let start: Vec<_> = state.agents.iter().map(|a| a.position).collect();
        let mut pos = start.clone();
        let proposal: Vec<_> = (0..m)
            .map(|i| {
                if state.agents[i].status == AgentStatus::Parked {
                    // First entry of the pressure-ordered candidates: the
                    // preferred sidestep under pressure, Stay otherwise.
                    return match self.feasible_actions(state, i).first() {
                        Some(&act) if act != Action::Stay => {
                            self.map.apply_action(start[i], act)
                        }
                        _ => None,
                    };
                }
                if state.agents[i].status == AgentStatus::Active
                    && state.agents[i].position == state.agents[i].target
                {
                    // Resolving its task this stage and stepping off the
                    // cell at the same time (candidates list moves before
                    // Stay); proposing the departure lets a waiting agent
                    // follow into the cell without losing a stage.
                    return self
                        .feasible_actions(state, i)
                        .into_iter()
                        .find(|&act| act != Action::Stay)
                        .map(|act| self.map.apply_action(start[i], act).expect("unit step"));
                }
                let act = mu1
                    .action(state, i, 0)
                    .expect("distance field for every live target");
                match act {
                    Action::Stay => None,
                    _ => self.map.apply_action(start[i], act),
                }
            })
            .collect();
        let present = vec![true; m];
        resolve_moves(
            self.map.num_cells(),
            &mut pos,
            &present,
            &proposal,
            !self.params.swap_conflicts,
        );
        (0..m)
            .map(|i| {
                if pos[i] == start[i] {
                    Action::Stay
                } else {
                    Action::MOVES
                        .iter()
                        .copied()
                        .find(|&a| self.map.apply_action(start[i], a) == Some(pos[i]))
                        .expect("resolved move is a unit step")
                }
            })
            .collect()
    }

    fn successor(&self, state: &WorldState, control: &JointControl) -> WorldState {
        dynamics::step(state, control, self.map, self.assigner).expect("feasible control")
    }

    fn stage_cost(&self, state: &WorldState, _control: &JointControl, next: &WorldState) -> f64 {
        dynamics::stage_cost_with_next(state, next, &self.params)
    }

    fn cost_to_go(&self, state: &WorldState) -> f64 {
        combined_cost(self.cache, self.map, state, &self.params, self.freeze_period, self.horizon)
            .expect("distance field for every live target")
    }

    fn collisions(&self, state: &WorldState, next: &WorldState) -> usize {
        dynamics::transition_collisions(state, next, self.params.swap_conflicts)
    }

    fn stalled(&self, state: &WorldState, control: &JointControl) -> bool {
        // All-stay while some agent still has a leg to travel is a
        // standoff, not a plan. An active agent already on its target is
        // excluded: its task resolves during the step even under Stay.
        control.0.iter().all(|&a| a == Action::Stay)
            && state
                .agents
                .iter()
                .any(|a| a.status == AgentStatus::Active && a.position != a.target)
    }

    fn alpha(&self) -> f64 {
        self.params.alpha
    }
}
