//! Exact dynamic programming on tiny enumerable instances: policy
//! evaluation by value iteration, optimal VI, and machine verification of
//! the rollout performance bounds.
//!
//! The enumerated model freezes targets (no reassignment): an agent that
//! reaches its target flips to an absorbing per-agent Done flag and keeps
//! occupying the target cell. Targets are distinct per agent, so the
//! absorbing states are collision-free.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{Action, CostParams, JointControl};
use crate::gridmap::{parse_map, CellIndex, CellKind, GridMap};
use crate::pathcache::{precompute_all, PathCache};
use crate::rollout::{multiagent_rollout_once, AgentOrder, RolloutModel};

/// Enumeration guard on the joint state count.
pub const MAX_STATES: usize = 200_000;
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum DpError {
    #[error("state space of {0} states exceeds the guard of {MAX_STATES}")]
    TooManyStates(usize),
    #[error("target {0} is not a storage or delivery cell")]
    BadTarget(CellIndex),
    #[error("value iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("Bellman residual {residual:e} at state {state} exceeds {limit:e}")]
    BellmanResidual { state: usize, residual: f64, limit: f64 },
    #[error(transparent)]
    Cache(#[from] crate::pathcache::CacheError),
}

/// A fully enumerable instance: a tiny map, fixed per-agent targets, no
/// goods. States are mixed-radix codes over per-agent local states.
pub struct EnumeratedProblem {
    map: GridMap,
    cache: PathCache,
    targets: Vec<CellIndex>,
    /// Non-wall cells, the per-agent position alphabet.
    cells: Vec<CellIndex>,
    /// Cell index -> slot in `cells`.
    slot: Vec<Option<usize>>,
    params: CostParams,
    /// Local states per agent: one per cell plus the Done state.
    radix: usize,
    num_states: usize,
}

/// Per-agent local view of a decoded state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalState {
    pub position: CellIndex,
    pub done: bool,
}

pub type ValueTable = Vec<f64>;
pub type PolicyTable = Vec<JointControl>;

impl EnumeratedProblem {
    pub fn enumerate(
        map: &GridMap,
        targets: Vec<CellIndex>,
        params: CostParams,
    ) -> Result<Self, DpError> {
        for &t in &targets {
            if !matches!(map.kind(t), CellKind::Storage | CellKind::Delivery) {
                return Err(DpError::BadTarget(t));
            }
        }
        let cache = precompute_all(map)?;
        let cells: Vec<CellIndex> =
            map.cells().filter(|&c| map.kind(c) != CellKind::Wall).collect();
        let mut slot = vec![None; map.num_cells()];
        for (i, &c) in cells.iter().enumerate() {
            slot[c.as_usize()] = Some(i);
        }
        let radix = cells.len() + 1;
        let mut num_states = 1usize;
        for _ in &targets {
            num_states = num_states
                .checked_mul(radix)
                .filter(|&n| n <= MAX_STATES)
                .ok_or(DpError::TooManyStates(usize::MAX))?;
        }
        if num_states > MAX_STATES {
            return Err(DpError::TooManyStates(num_states));
        }
        Ok(EnumeratedProblem {
            map: map.clone(),
            cache,
            targets,
            cells,
            slot,
            params,
            radix,
            num_states,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.targets.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn params(&self) -> &CostParams {
        self.params_ref()
    }

    fn params_ref(&self) -> &CostParams {
        &self.params
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn targets(&self) -> &[CellIndex] {
        &self.targets
    }

    pub fn decode(&self, state: usize) -> Vec<LocalState> {
        let mut s = state;
        let mut out = Vec::with_capacity(self.num_agents());
        for i in 0..self.num_agents() {
            let local = s % self.radix;
            s /= self.radix;
            out.push(if local == self.radix - 1 {
                LocalState { position: self.targets[i], done: true }
            } else {
                LocalState { position: self.cells[local], done: false }
            });
        }
        out
    }

    pub fn encode(&self, locals: &[LocalState]) -> usize {
        let mut state = 0usize;
        for (i, l) in locals.iter().enumerate().rev() {
            let local = if l.done {
                debug_assert_eq!(l.position, self.targets[i]);
                self.radix - 1
            } else {
                self.slot[l.position.as_usize()].expect("position on a non-wall cell")
            };
            state = state * self.radix + local;
        }
        state
    }

    /// Constraint set: Done or arrived agents hold still; everyone else may
    /// stay or move to any adjacent non-wall cell.
    pub fn feasible(&self, state: usize, agent: usize) -> Vec<Action> {
        let l = self.decode(state)[agent];
        if l.done || l.position == self.targets[agent] {
            return vec![Action::Stay];
        }
        let mut out: Vec<Action> =
            self.map.neighbors(l.position).iter().map(|&(a, _)| a).collect();
        out.push(Action::Stay);
        out
    }

    /// The deterministic transition. Arrived agents flip to Done; Done
    /// agents are absorbing at their targets.
    pub fn transition(&self, state: usize, control: &JointControl) -> usize {
        let mut locals = self.decode(state);
        for (i, l) in locals.iter_mut().enumerate() {
            if l.done {
                continue;
            }
            if l.position == self.targets[i] {
                l.done = true;
                continue;
            }
            l.position = self
                .map
                .apply_action(l.position, control.0[i])
                .expect("feasible action stays in bounds");
        }
        self.encode(&locals)
    }

    /// `g(x, u) = c1 * n(f(x, u)) + c2 * #arrivals(x)`.
    pub fn stage_cost(&self, state: usize, control: &JointControl) -> f64 {
        let locals = self.decode(state);
        let arrivals = locals
            .iter()
            .enumerate()
            .filter(|(i, l)| !l.done && l.position == self.targets[*i])
            .count();
        let next = self.decode(self.transition(state, control));
        let mut collisions = 0;
        for i in 0..next.len() {
            for j in (i + 1)..next.len() {
                if next[i].position == next[j].position {
                    collisions += 1;
                }
            }
        }
        self.params.c1 * collisions as f64 + self.params.c2 * arrivals as f64
    }

    /// Shortest-path base policy, tabulated: each agent follows the
    /// precomputed next action of its target's field, staying when Done,
    /// arrived, or off the reachable set.
    pub fn mu1_table(&self) -> PolicyTable {
        (0..self.num_states)
            .map(|s| {
                let locals = self.decode(s);
                let actions = locals
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        if l.done || l.position == self.targets[i] {
                            Action::Stay
                        } else {
                            self.cache
                                .field(self.targets[i])
                                .and_then(|f| f.step_from(l.position))
                                .unwrap_or(Action::Stay)
                        }
                    })
                    .collect();
                JointControl(actions)
            })
            .collect()
    }
}

/// One application of the policy's Bellman operator,
/// `(T_mu J)(x) = g(x, mu(x)) + alpha * J(f(x, mu(x)))`.
pub fn policy_operator(problem: &EnumeratedProblem, policy: &PolicyTable, table: &[f64]) -> ValueTable {
    (0..problem.num_states())
        .map(|s| {
            let u = &policy[s];
            problem.stage_cost(s, u) + problem.params.alpha * table[problem.transition(s, u)]
        })
        .collect()
}

fn rel_scale(a: f64, b: f64) -> f64 {
    1.0f64.max(a.abs()).max(b.abs())
}

/// Value iteration for a fixed policy from `J_0 = 0`, stopping when the
/// relative sup-norm change drops below `tol`. The converged table must
/// satisfy the Bellman equation to within `10 * tol`.
pub fn policy_eval_vi(
    problem: &EnumeratedProblem,
    policy: &PolicyTable,
    tol: f64,
    max_iter: usize,
) -> Result<ValueTable, DpError> {
    let mut table = vec![0.0; problem.num_states()];
    let mut converged = false;
    for _ in 0..max_iter {
        let next = policy_operator(problem, policy, &table);
        let change = table
            .iter()
            .zip(&next)
            .map(|(&a, &b)| (a - b).abs() / rel_scale(a, b))
            .fold(0.0f64, f64::max);
        table = next;
        if change < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(DpError::NoConvergence(max_iter));
    }
    let limit = 10.0 * tol;
    for s in 0..problem.num_states() {
        let u = &policy[s];
        let rhs = problem.stage_cost(s, u) + problem.params.alpha * table[problem.transition(s, u)];
        let residual = (table[s] - rhs).abs() / rel_scale(table[s], rhs);
        if residual >= limit {
            return Err(DpError::BellmanResidual { state: s, residual, limit });
        }
    }
    Ok(table)
}

/// Optimal value iteration over all feasible joint controls.
pub fn optimal_vi(
    problem: &EnumeratedProblem,
    tol: f64,
    max_iter: usize,
) -> Result<ValueTable, DpError> {
    let m = problem.num_agents();
    let mut table = vec![0.0; problem.num_states()];
    for _ in 0..max_iter {
        let mut next = vec![0.0; problem.num_states()];
        for s in 0..problem.num_states() {
            let sets: Vec<Vec<Action>> = (0..m).map(|i| problem.feasible(s, i)).collect();
            let mut cursor = vec![0usize; m];
            let mut best = f64::INFINITY;
            'controls: loop {
                let u = JointControl((0..m).map(|i| sets[i][cursor[i]]).collect());
                let v = problem.stage_cost(s, &u)
                    + problem.params.alpha * table[problem.transition(s, &u)];
                if v < best {
                    best = v;
                }
                let mut i = m;
                loop {
                    if i == 0 {
                        break 'controls;
                    }
                    i -= 1;
                    cursor[i] += 1;
                    if cursor[i] < sets[i].len() {
                        break;
                    }
                    cursor[i] = 0;
                }
            }
            next[s] = if m == 0 { 0.0 } else { best };
        }
        let change = table
            .iter()
            .zip(&next)
            .map(|(&a, &b)| (a - b).abs() / rel_scale(a, b))
            .fold(0.0f64, f64::max);
        table = next;
        if change < tol {
            return Ok(table);
        }
    }
    Err(DpError::NoConvergence(max_iter))
}

/// Adapter exposing an enumerated problem (with a tabulated cost-to-go) to
/// the rollout engine.
pub struct EnumModel<'a> {
    pub problem: &'a EnumeratedProblem,
    pub cost_table: &'a [f64],
    pub base: &'a PolicyTable,
}

impl RolloutModel for EnumModel<'_> {
    type State = usize;

    fn num_agents(&self, _: &usize) -> usize {
        self.problem.num_agents()
    }

    fn feasible_actions(&self, &state: &usize, agent: usize) -> Vec<Action> {
        self.problem.feasible(state, agent)
    }

    fn base_action(&self, &state: &usize, agent: usize) -> Action {
        self.base[state].0[agent]
    }

    fn successor(&self, &state: &usize, control: &JointControl) -> usize {
        self.problem.transition(state, control)
    }

    fn stage_cost(&self, &state: &usize, control: &JointControl, _next: &usize) -> f64 {
        self.problem.stage_cost(state, control)
    }

    fn cost_to_go(&self, &state: &usize) -> f64 {
        self.cost_table[state]
    }

    fn collisions(&self, _: &usize, &next: &usize) -> usize {
        let locals = self.problem.decode(next);
        let mut n = 0;
        for i in 0..locals.len() {
            for j in (i + 1)..locals.len() {
                if locals[i].position == locals[j].position {
                    n += 1;
                }
            }
        }
        n
    }

    fn alpha(&self) -> f64 {
        self.problem.params.alpha
    }
}

/// Tabulates the rollout policy by running the agent-by-agent minimization
/// at every state, with the exact `J_mu` table as the cost-to-go.
pub fn rollout_policy_table(
    problem: &EnumeratedProblem,
    base: &PolicyTable,
    jmu: &[f64],
) -> PolicyTable {
    let model = EnumModel { problem, cost_table: jmu, base };
    let order = AgentOrder::identity(problem.num_agents());
    (0..problem.num_states())
        .map(|s| multiagent_rollout_once(&model, &s, &order).0)
        .collect()
}

/// One violated inequality, with the offending state decoded.
#[derive(Debug, Clone)]
pub struct BoundViolation {
    pub state: usize,
    pub locals: Vec<LocalState>,
    pub inequality: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

/// Pointwise check of the rollout performance bounds over every enumerated
/// state: `J_rollout <= Jtilde`, `Jtilde <= J_mu` and `J_rollout <= J_mu`.
#[derive(Debug)]
pub struct BoundReport {
    pub jmu: ValueTable,
    pub jtilde: ValueTable,
    pub jrollout: ValueTable,
    pub violations: Vec<BoundViolation>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn verify_bounds(
    problem: &EnumeratedProblem,
    base: &PolicyTable,
    rollout: &PolicyTable,
    tol: f64,
) -> Result<BoundReport, DpError> {
    let jmu = policy_eval_vi(problem, base, tol, 200_000)?;
    let jrollout = policy_eval_vi(problem, rollout, tol, 200_000)?;
    let jtilde: ValueTable = (0..problem.num_states())
        .map(|s| {
            let u = &rollout[s];
            problem.stage_cost(s, u) + problem.params.alpha * jmu[problem.transition(s, u)]
        })
        .collect();

    let mut violations = Vec::new();
    let check = |name: &'static str, lhs: &[f64], rhs: &[f64], out: &mut Vec<BoundViolation>| {
        for s in 0..problem.num_states() {
            if lhs[s] > rhs[s] + tol * rel_scale(lhs[s], rhs[s]) {
                out.push(BoundViolation {
                    state: s,
                    locals: problem.decode(s),
                    inequality: name,
                    lhs: lhs[s],
                    rhs: rhs[s],
                });
            }
        }
    };
    check("J_rollout <= Jtilde", &jrollout, &jtilde, &mut violations);
    check("Jtilde <= J_mu", &jtilde, &jmu, &mut violations);
    check("J_rollout <= J_mu", &jrollout, &jmu, &mut violations);
    Ok(BoundReport { jmu, jtilde, jrollout, violations })
}

/// Seeded tiny instance for the verification battery: a map of at most
/// 3x4 cells with sparse walls and `m <= 3` delivery targets.
pub fn battery_instance(seed: u64) -> EnumeratedProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let (h, w) = *[(1usize, 4usize), (2, 3), (2, 4), (3, 3), (3, 4)]
            .iter()
            .nth(rng.random_range(0..5))
            .unwrap();
        let m = rng.random_range(1..=3usize.min(w * h / 2));
        let mut grid: Vec<Vec<char>> = vec![vec!['.'; w]; h];
        let n_walls = rng.random_range(0..=((w * h) / 5));
        for _ in 0..n_walls {
            grid[rng.random_range(0..h)][rng.random_range(0..w)] = '#';
        }
        let mut targets_rc = Vec::new();
        while targets_rc.len() < m {
            let rc = (rng.random_range(0..h), rng.random_range(0..w));
            if grid[rc.0][rc.1] == '.' && !targets_rc.contains(&rc) {
                grid[rc.0][rc.1] = 'D';
                targets_rc.push(rc);
            }
        }
        let text: String =
            grid.iter().map(|row| row.iter().collect::<String>() + "\n").collect();
        let map = parse_map(&text).unwrap();
        let targets: Vec<CellIndex> =
            targets_rc.iter().map(|&(r, c)| map.index(r as u32, c as u32)).collect();
        match EnumeratedProblem::enumerate(&map, targets, CostParams::default()) {
            Ok(p) => return p,
            Err(_) => continue, // unreachable target or similar; redraw
        }
    }
}
