//! Episode orchestration: initial state construction, the planner loop,
//! malfunction injection and per-stage metric recording.
//!
//! An episode ends when all goods are delivered (success), at the first
//! collision (failure), or at the stage cap (failure).

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coop_astar::{default_horizon, replan_all, AgentPlan};
use crate::dynamics::{
    self, Action, AgentState, AgentStatus, Good, GoodStatus, JointControl, WorldState,
};
use crate::gridmap::{parse_map, CellIndex, CellKind, GridMap};
use crate::harness::assign::{mix, SeededAssigner};
use crate::harness::config::{MapSource, PlannerKind, ScenarioConfig};
use crate::harness::mapgen::generate_map;
use crate::harness::HarnessError;
use crate::pathcache::{build_distance_field, precompute_all, PathCache};
use crate::policies::{combined_cost, BasePolicy, COORDINATION_MARGIN_STEPS};
use crate::rollout::{
    good_rule, reshuffling_rollout, standard_rollout, AgentOrder, RolloutModel, WarehouseModel,
};

const MAP_SALT: u64 = 0x6d61_7067; // distinct streams per purpose
const ASSIGN_SALT: u64 = 0x6173_6e67;
const EPISODE_SALT: u64 = 0x6570_6973;

/// Metrics of one planner decision and the stage it produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageRecord {
    pub stage: u64,
    /// Certified stage quote `g + alpha^(1+B) * Jbar(next)` of the chosen
    /// control, where `B` is the coordination margin (rollout planners only).
    pub jtilde: Option<f64>,
    /// Whether the good rule accepted the control.
    pub accepted: bool,
    pub reshuffles: usize,
    pub evaluations: usize,
    pub num_agents: usize,
    pub decision_ms: f64,
    pub stage_cost: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub success: bool,
    pub collided: bool,
    pub stages: u64,
    /// Discounted cumulative realized cost from the initial state.
    pub realized_cost: f64,
    pub deliveries: usize,
    pub records: Vec<StageRecord>,
    pub frozen_agents: Vec<usize>,
    pub malfunction_onset: Option<u64>,
    /// World state when the episode ended, for post-mortem inspection.
    pub final_state: WorldState,
}

impl EpisodeResult {
    pub fn mean_decision_ms(&self) -> f64 {
        mean(self.records.iter().map(|r| r.decision_ms))
    }

    pub fn mean_reshuffles(&self) -> f64 {
        mean(self.records.iter().map(|r| r.reshuffles as f64))
    }

    /// (reshuffle count, number of stages) pairs, ascending.
    pub fn reshuffle_histogram(&self) -> Vec<(usize, usize)> {
        let mut hist = std::collections::BTreeMap::new();
        for r in &self.records {
            *hist.entry(r.reshuffles).or_insert(0usize) += 1;
        }
        hist.into_iter().collect()
    }

    /// Realized discounted tail cost from the state at stage index `k`.
    pub fn realized_tail(&self, k: usize, alpha: f64) -> f64 {
        let mut tail = 0.0;
        let mut discount = 1.0;
        for r in &self.records[k..] {
            tail += discount * r.stage_cost;
            discount *= alpha;
        }
        tail
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in it {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Materializes the config's map source. Generated maps derive their seed
/// from the scenario seed under a fixed salt.
pub fn build_scenario_map(cfg: &ScenarioConfig) -> Result<GridMap, HarnessError> {
    match &cfg.map {
        MapSource::File(path) => Ok(parse_map(&std::fs::read_to_string(path)?)?),
        MapSource::Generated(params) => {
            Ok(generate_map(params, mix(&[cfg.seed, MAP_SALT]))?)
        }
    }
}

/// Seeded initial state: goods on distinct storage cells with uniformly
/// drawn delivery bays, agents on distinct floor cells, and one waiting
/// good assigned uniformly to each agent (agents beyond the pool park).
pub fn initial_world(
    map: &GridMap,
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> Result<WorldState, HarnessError> {
    let mut storage = map.storage_cells();
    let deliveries = map.delivery_cells();
    let floors: Vec<CellIndex> = map
        .cells()
        .filter(|&c| map.kind(c) == CellKind::Floor)
        .collect();
    if cfg.num_goods > storage.len() {
        return Err(HarnessError::Capacity {
            what: "storage cells",
            needed: cfg.num_goods,
            available: storage.len(),
        });
    }
    if deliveries.is_empty() {
        return Err(HarnessError::Capacity {
            what: "delivery cells",
            needed: 1,
            available: 0,
        });
    }
    if cfg.num_agents > floors.len() {
        return Err(HarnessError::Capacity {
            what: "floor cells",
            needed: cfg.num_agents,
            available: floors.len(),
        });
    }

    storage.shuffle(rng);
    let goods: Vec<Good> = storage
        .iter()
        .take(cfg.num_goods)
        .map(|&cell| Good {
            storage_cell: cell,
            delivery_cell: deliveries[rng.random_range(0..deliveries.len())],
            status: GoodStatus::Waiting,
        })
        .collect();

    let mut starts = floors.clone();
    starts.shuffle(rng);
    let mut world = WorldState {
        agents: starts
            .iter()
            .take(cfg.num_agents)
            .map(|&p| AgentState::active(p, p))
            .collect(),
        goods,
        stage: 0,
    };
    for i in 0..cfg.num_agents {
        let waiting: Vec<usize> = world
            .goods
            .iter()
            .enumerate()
            .filter(|(_, g)| g.status == GoodStatus::Waiting)
            .map(|(idx, _)| idx)
            .collect();
        match waiting.as_slice() {
            [] => world.agents[i].status = AgentStatus::Parked,
            pool => {
                let g = pool[rng.random_range(0..pool.len())];
                world.goods[g].status = GoodStatus::Assigned;
                world.agents[i].target = world.goods[g].storage_cell;
                world.agents[i].task = Some(g);
            }
        }
    }
    Ok(world)
}

/// Freezes up to `count` eligible agents (active ones standing on plain
/// floor, so no storage or delivery cell is sealed forever) and returns
/// their in-flight goods to the waiting pool.
fn apply_malfunction(
    world: &mut WorldState,
    count: usize,
    rng: &mut ChaCha8Rng,
    map: &GridMap,
) -> Vec<usize> {
    let mut eligible: Vec<usize> = (0..world.num_agents())
        .filter(|&i| {
            world.agents[i].status == AgentStatus::Active
                && map.kind(world.agents[i].position) == CellKind::Floor
        })
        .collect();
    eligible.shuffle(rng);
    let mut frozen = Vec::new();
    for &i in eligible.iter().take(count) {
        let agent = &mut world.agents[i];
        agent.status = AgentStatus::Malfunctioned;
        if let Some(g) = agent.task.take() {
            if world.goods[g].status != GoodStatus::Delivered {
                world.goods[g].status = GoodStatus::Waiting;
            }
        }
        frozen.push(i);
    }
    frozen.sort();
    frozen
}

/// Hands returned goods to parked agents: a parked agent re-activates when
/// the waiting pool is non-empty again (only possible after malfunctions).
fn reactivate_parked(world: &mut WorldState, assigner: &SeededAssigner) {
    use crate::dynamics::TargetAssigner;
    for i in 0..world.num_agents() {
        if world.agents[i].status != AgentStatus::Parked {
            continue;
        }
        if let Some(g) = assigner.pick_good(world, i) {
            world.goods[g].status = GoodStatus::Assigned;
            world.agents[i].status = AgentStatus::Active;
            world.agents[i].target = world.goods[g].storage_cell;
            world.agents[i].task = Some(g);
        }
    }
}

/// The map with malfunctioned robots' cells turned into walls. Base
/// policies planned on this map route around known frozen robots (their
/// indices, hence positions, are given).
fn blocked_map(map: &GridMap, blocked: &[CellIndex]) -> GridMap {
    let mut kinds: Vec<CellKind> = map.cells().map(|c| map.kind(c)).collect();
    for &c in blocked {
        kinds[c.as_usize()] = CellKind::Wall;
    }
    GridMap::new(map.width(), map.height(), kinds)
}

/// Full cache on the obstacle-adjusted map. A target sealed off by the
/// obstacles keeps its unobstructed field rather than failing the build.
fn cache_with_obstacles(
    map: &GridMap,
    blocked: &[CellIndex],
) -> Result<PathCache, HarnessError> {
    if blocked.is_empty() {
        return Ok(precompute_all(map)?);
    }
    let adjusted = blocked_map(map, blocked);
    let mut cache = PathCache::empty(map);
    for t in map.storage_cells().into_iter().chain(map.delivery_cells()) {
        match build_distance_field(&adjusted, t) {
            Ok(f) => cache.insert(f),
            Err(_) => cache.insert(build_distance_field(map, t)?),
        }
    }
    Ok(cache)
}

/// Distance fields for every target the planner could touch this stage,
/// built fresh (the no-precompute planner memoizes nothing across stages).
fn on_demand_cache(
    map: &GridMap,
    world: &WorldState,
    blocked: &[CellIndex],
) -> Result<PathCache, HarnessError> {
    let mut wanted: BTreeSet<CellIndex> = BTreeSet::new();
    for a in &world.agents {
        if a.status == AgentStatus::Active {
            wanted.insert(a.target);
        }
    }
    for g in &world.goods {
        if g.status != GoodStatus::Delivered {
            wanted.insert(g.storage_cell);
            wanted.insert(g.delivery_cell);
        }
    }
    let adjusted = if blocked.is_empty() {
        None
    } else {
        Some(blocked_map(map, blocked))
    };
    let mut cache = PathCache::empty(map);
    for t in wanted {
        if !matches!(map.kind(t), CellKind::Storage | CellKind::Delivery) {
            continue;
        }
        let field = match &adjusted {
            Some(bm) => build_distance_field(bm, t).or_else(|_| build_distance_field(map, t))?,
            None => build_distance_field(map, t)?,
        };
        cache.insert(field);
    }
    Ok(cache)
}

struct CoopPlanState {
    plans: Vec<AgentPlan>,
    start_stage: u64,
    snapshot: Vec<(CellIndex, AgentStatus)>,
}

pub fn run_episode(cfg: &ScenarioConfig) -> Result<EpisodeResult, HarnessError> {
    let map = build_scenario_map(cfg)?;
    run_episode_on(&map, cfg)
}

/// Runs one episode on an already-built map; the map seed in the config is
/// then ignored, which lets a benchmark share one map across episodes.
pub fn run_episode_on(map: &GridMap, cfg: &ScenarioConfig) -> Result<EpisodeResult, HarnessError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[cfg.seed, EPISODE_SALT]));
    let world = initial_world(map, cfg, &mut rng)?;
    run_from(map, cfg, world, &mut rng)
}

/// The planner loop from an explicit initial state.
pub fn run_from(
    map: &GridMap,
    cfg: &ScenarioConfig,
    mut world: WorldState,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeResult, HarnessError> {
    let m = cfg.num_agents;
    let mut cache = match cfg.planner {
        PlannerKind::MaRolloutNoPrecompute => None,
        _ => Some(precompute_all(map)?),
    };
    let assigner = SeededAssigner { seed: mix(&[cfg.seed, ASSIGN_SALT]) };

    let freeze_count = (cfg.malfunction_q * m as f64).floor() as usize;
    let malfunction_onset = if freeze_count > 0 {
        let expected =
            (map.width() + map.height()) as u64 * (cfg.num_goods as u64 / m as u64 + 1);
        let onset_max = cfg.malfunction_onset_max.unwrap_or((expected / 2).max(1));
        Some(rng.random_range(1..=onset_max.max(1)))
    } else {
        None
    };

    let mut sigma = AgentOrder::identity(m);
    let mut frozen_agents: Vec<usize> = Vec::new();
    let mut coop: Option<CoopPlanState> = None;
    let mut records: Vec<StageRecord> = Vec::new();
    let mut realized_cost = 0.0;
    let mut discount = 1.0;
    let mut success = false;
    let mut collided = false;

    loop {
        if world.all_delivered() {
            success = true;
            break;
        }
        if world.stage >= cfg.max_stages {
            break;
        }
        if malfunction_onset == Some(world.stage) && frozen_agents.is_empty() {
            frozen_agents = apply_malfunction(&mut world, freeze_count, rng, map);
            coop = None;
            // Re-plan around the now-known frozen robots.
            if cache.is_some() {
                let blocked: Vec<CellIndex> =
                    frozen_agents.iter().map(|&i| world.agents[i].position).collect();
                cache = Some(cache_with_obstacles(map, &blocked)?);
            }
        }
        if !frozen_agents.is_empty() {
            reactivate_parked(&mut world, &assigner);
        }

        let started = Instant::now();
        let (control, jtilde, accepted, reshuffles, evaluations) = match cfg.planner {
            PlannerKind::MaRollout | PlannerKind::MaRolloutNoPrecompute => {
                let fresh;
                let cache_ref = match &cache {
                    Some(c) => c,
                    None => {
                        let blocked: Vec<CellIndex> = frozen_agents
                            .iter()
                            .map(|&i| world.agents[i].position)
                            .collect();
                        fresh = on_demand_cache(map, &world, &blocked)?;
                        &fresh
                    }
                };
                let model = WarehouseModel {
                    map,
                    cache: cache_ref,
                    assigner: &assigner,
                    params: cfg.params,
                    freeze_period: cfg.freeze_period,
                    horizon: cfg.sim_horizon,
                };
                let d = reshuffling_rollout(&model, &world, &sigma, rng, cfg.max_reshuffles);
                sigma = d.order_used;
                (d.control, Some(d.value), d.accepted_by_rule, d.reshuffles, d.evaluations)
            }
            PlannerKind::StandardRollout => {
                let model = WarehouseModel {
                    map,
                    cache: cache.as_ref().unwrap(),
                    assigner: &assigner,
                    params: cfg.params,
                    freeze_period: cfg.freeze_period,
                    horizon: cfg.sim_horizon,
                };
                let (control, value) = standard_rollout(&model, &world)?;
                let accepted = good_rule(&model, &world, &control);
                let evals: usize = (0..m)
                    .map(|i| model.feasible_actions(&world, i).len())
                    .product();
                (control, Some(value), accepted, 0, evals)
            }
            PlannerKind::CoopAStar => {
                let cache = cache.as_ref().unwrap();
                let snapshot: Vec<(CellIndex, AgentStatus)> =
                    world.agents.iter().map(|a| (a.target, a.status)).collect();
                let stale = coop.as_ref().is_none_or(|c| c.snapshot != snapshot);
                if stale {
                    // Replan on any assignment or status change.
                    coop = Some(CoopPlanState {
                        plans: replan_all(&world, map, cache, default_horizon(map, cache, m)),
                        start_stage: world.stage,
                        snapshot,
                    });
                }
                let state = coop.as_ref().unwrap();
                let t = (world.stage - state.start_stage) as usize;
                let mu1 = BasePolicy::shortest_path(cache);
                let mut actions = Vec::with_capacity(m);
                for i in 0..m {
                    let planned = match state.plans[i].action_at(t, map) {
                        Some(a) => a,
                        // Plan spent: parked agents hold, failed plans
                        // fall back to greedy shortest-path following.
                        None if state.plans[i].complete => Action::Stay,
                        None => mu1.action(&world, i, 0)?,
                    };
                    let ok = dynamics::feasible_controls(&world, map, i)?.contains(&planned);
                    actions.push(if ok { planned } else { Action::Stay });
                }
                (JointControl(actions), None, true, 0, 0)
            }
        };
        let decision_ms = started.elapsed().as_secs_f64() * 1e3;

        let next = dynamics::step(&world, &control, map, &assigner)?;
        for &i in &frozen_agents {
            assert_eq!(
                next.agents[i].position, world.agents[i].position,
                "malfunctioned agent {i} moved"
            );
        }
        let stage_cost = dynamics::stage_cost_with_next(&world, &next, &cfg.params);
        let collisions = dynamics::transition_collisions(&world, &next, cfg.params.swap_conflicts);
        // Re-quote the recorded certificate from the state actually reached,
        // with the coordination margin folded in. Selection above ran on the
        // unscaled estimate; the margin only pads the recorded bound against
        // the occasional lost stage that the simulations cannot foresee.
        let jtilde = match jtilde {
            Some(_) => {
                let fresh;
                let cert_cache = match &cache {
                    Some(c) => c,
                    None => {
                        let blocked: Vec<CellIndex> =
                            frozen_agents.iter().map(|&i| world.agents[i].position).collect();
                        fresh = on_demand_cache(map, &next, &blocked)?;
                        &fresh
                    }
                };
                let jbar = combined_cost(
                    cert_cache,
                    map,
                    &next,
                    &cfg.params,
                    cfg.freeze_period,
                    cfg.sim_horizon,
                )?;
                Some(stage_cost + cfg.params.alpha.powi(1 + COORDINATION_MARGIN_STEPS) * jbar)
            }
            None => None,
        };
        records.push(StageRecord {
            stage: world.stage,
            jtilde,
            accepted,
            reshuffles,
            evaluations,
            num_agents: m,
            decision_ms,
            stage_cost,
        });
        realized_cost += discount * stage_cost;
        discount *= cfg.params.alpha;
        world = next;
        if collisions > 0 {
            collided = true;
            break;
        }
    }

    Ok(EpisodeResult {
        success: success && !collided,
        collided,
        stages: world.stage,
        realized_cost,
        deliveries: world
            .goods
            .iter()
            .filter(|g| g.status == GoodStatus::Delivered)
            .count(),
        records,
        frozen_agents,
        malfunction_onset,
        final_state: world,
    })
}
