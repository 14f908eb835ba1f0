//! Experiment harness: scenario configuration, map generation, task
//! assignment, episode orchestration, benchmarking and CSV persistence.

pub mod assign;
pub mod bench;
pub mod config;
pub mod episode;
pub mod mapgen;

pub use assign::SeededAssigner;
pub use bench::{run_benchmark, AggregateRow, BenchPoint, BenchmarkReport};
pub use config::{parse_config, MapSource, PlannerKind, ScenarioConfig};
pub use episode::{run_episode, run_episode_on, EpisodeResult, StageRecord};
pub use mapgen::{generate_map, MapGenError, MapGenParams};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    MapGen(#[from] mapgen::MapGenError),
    #[error(transparent)]
    Map(#[from] crate::gridmap::MapError),
    #[error(transparent)]
    Cache(#[from] crate::pathcache::CacheError),
    #[error(transparent)]
    Policy(#[from] crate::policies::PolicyError),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error(transparent)]
    Rollout(#[from] crate::rollout::RolloutError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("scenario needs {needed} {what} but the map provides {available}")]
    Capacity {
        what: &'static str,
        needed: usize,
        available: usize,
    },
}
