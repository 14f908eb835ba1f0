//! Multiagent rollout with random reshuffling for warehouse robot path
//! planning.
//!
//! The crate models a grid warehouse in which `m` robots collaboratively
//! pick up goods from storage cells and carry them to delivery cells. The
//! planner of interest is one-agent-at-a-time rollout over a randomly
//! reshuffled agent order, guided by simulated base-policy costs. A
//! cooperative A* baseline, an exact value-iteration oracle on tiny
//! instances, and a benchmark harness round out the toolkit.
//!
//! Module map:
//! - [`gridmap`] — static warehouse geometry and map file parsing.
//! - [`dynamics`] — state, controls, transition function and stage cost.
//! - [`pathcache`] — precomputed shortest-distance fields with binary
//!   persistence.
//! - [`policies`] — base policies and simulation-based cost evaluation.
//! - [`rollout`] — sequential minimization, the good-control rule and the
//!   reshuffling controller.
//! - [`coop_astar`] — fixed-priority space-time A* with a reservation table.
//! - [`exactdp`] — exact DP on enumerable instances plus performance-bound
//!   verification.
//! - [`harness`] — map generation, episode orchestration, benchmarks, CLI
//!   plumbing.

pub mod coop_astar;
pub mod dynamics;
pub mod exactdp;
pub mod gridmap;
pub mod harness;
pub mod pathcache;
pub mod policies;
pub mod rollout;

pub use dynamics::{Action, AgentState, CostParams, Good, GoodStatus, JointControl, WorldState};
pub use gridmap::{CellIndex, CellKind, GridMap};
pub use pathcache::{DistanceField, PathCache};
