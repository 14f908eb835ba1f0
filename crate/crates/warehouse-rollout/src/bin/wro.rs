//! Command-line front end: cache precomputation, single episodes,
//! benchmark grids, exact-DP bound verification and map generation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use warehouse_rollout::exactdp::{
    battery_instance, policy_eval_vi, rollout_policy_table, verify_bounds, DEFAULT_TOL,
};
use warehouse_rollout::gridmap::{parse_map, render_map};
use warehouse_rollout::harness::bench::{
    render_aggregate_csv, render_episode_csv, run_benchmark,
};
use warehouse_rollout::harness::config::{parse_config, PlannerKind, ScenarioConfig};
use warehouse_rollout::harness::episode::run_episode;
use warehouse_rollout::harness::mapgen::{generate_map, MapGenParams};
use warehouse_rollout::pathcache::{precompute_all, save_cache};

#[derive(Parser)]
#[command(name = "wro", about = "Warehouse robot path planning with multiagent rollout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Precompute all shortest-path distance fields for a map and write
    /// them as a binary cache file.
    Precompute {
        /// Map file (text grid: `.` floor, `#` wall, `@` storage, `D` bay).
        #[arg(long)]
        map: PathBuf,
        /// Output cache file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode from a key=value config file and write a per-stage
    /// CSV transcript.
    Run {
        /// Scenario config (flat key=value text).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the `seed` key of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-stage CSV output path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a benchmark grid of (planner, agent count) points and write
    /// per-episode and aggregate CSVs.
    Bench {
        /// Comma-separated agent counts, e.g. `8,12,16,20`.
        #[arg(long, default_value = "8,12,16,20")]
        grid: String,
        /// Comma-separated planner names.
        #[arg(long, default_value = "ma-rollout,coop-astar")]
        planners: String,
        /// Episodes per grid point.
        #[arg(long, default_value_t = 50)]
        episodes: u32,
        /// Optional base scenario config; defaults apply otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed for the episode seed stream.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for `episodes.csv` and `aggregates.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify the rollout performance bounds by exact dynamic programming
    /// on a battery of tiny instances; prints a pass/fail table.
    VerifyBounds {
        /// Battery name; only `default` exists.
        #[arg(long, default_value = "default")]
        battery: String,
    },
    /// Generate a warehouse map and write it as a text grid.
    GenMap {
        /// Comma-separated generator parameters, e.g.
        /// `width=29,height=15,corridor=2,block_w=3,block_h=1,delivery_bays=7`.
        #[arg(long, default_value = "")]
        params: String,
        /// Generator seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output map file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Precompute { map, out } => {
            let grid = parse_map(&std::fs::read_to_string(&map)?)?;
            let cache = precompute_all(&grid)?;
            let bytes = save_cache(&cache, &grid);
            std::fs::write(&out, &bytes)?;
            println!(
                "wrote {} ({} fields, {} bytes)",
                out.display(),
                cache.num_fields(),
                bytes.len()
            );
        }
        Command::Run { config, seed, csv } => {
            let mut cfg = parse_config(&std::fs::read_to_string(&config)?)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result = run_episode(&cfg)?;
            if let Some(path) = csv {
                std::fs::write(&path, stage_csv(&result)?)?;
            }
            println!(
                "planner={} agents={} seed={} success={} stages={} deliveries={} cost={} mean_decision_ms={:.3} mean_reshuffles={:.3}",
                cfg.planner,
                cfg.num_agents,
                cfg.seed,
                result.success,
                result.stages,
                result.deliveries,
                result.realized_cost,
                result.mean_decision_ms(),
                result.mean_reshuffles(),
            );
            if !result.success {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bench { grid, planners, episodes, config, seed, out } => {
            let m_grid = parse_list::<usize>("grid", &grid)?;
            let planner_list: Vec<PlannerKind> = planners
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<_, _>>()?;
            let mut base = match config {
                Some(path) => parse_config(&std::fs::read_to_string(&path)?)?,
                None => ScenarioConfig::default(),
            };
            if let Some(s) = seed {
                base.seed = s;
            }
            let report = run_benchmark(&base, &planner_list, &m_grid, episodes)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("episodes.csv"), render_episode_csv(&report.episodes)?)?;
            std::fs::write(
                out.join("aggregates.csv"),
                render_aggregate_csv(&report.aggregates)?,
            )?;
            for row in &report.aggregates {
                println!(
                    "{} m={}: success {}/{} mean_cost={:.1} mean_decision_ms={:.3} mean_reshuffles={:.3}",
                    row.planner,
                    row.m,
                    row.successes,
                    row.episodes,
                    row.mean_cost,
                    row.mean_decision_ms,
                    row.mean_reshuffles,
                );
            }
            println!("wrote {}", out.join("episodes.csv").display());
            println!("wrote {}", out.join("aggregates.csv").display());
        }
        Command::VerifyBounds { battery } => {
            if battery != "default" {
                return Err(format!("unknown battery `{battery}`").into());
            }
            let mut all_passed = true;
            println!(
                "{:<6} {:<8} {:<3} {:<8} {:<11} {}",
                "seed", "map", "m", "states", "violations", "result"
            );
            for seed in 0..20u64 {
                let problem = battery_instance(seed);
                let base = problem.mu1_table();
                let jmu = policy_eval_vi(&problem, &base, DEFAULT_TOL, 200_000)?;
                let rollout = rollout_policy_table(&problem, &base, &jmu);
                let report = verify_bounds(&problem, &base, &rollout, DEFAULT_TOL)?;
                let passed = report.passed();
                all_passed &= passed;
                println!(
                    "{:<6} {:<8} {:<3} {:<8} {:<11} {}",
                    seed,
                    format!("{}x{}", problem.map().height(), problem.map().width()),
                    problem.num_agents(),
                    problem.num_states(),
                    report.violations.len(),
                    if passed { "PASS" } else { "FAIL" },
                );
            }
            if !all_passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::GenMap { params, seed, out } => {
            let p = parse_mapgen_params(&params)?;
            let map = generate_map(&p, seed)?;
            std::fs::write(&out, render_map(&map))?;
            println!(
                "wrote {} ({}x{}, {} storage cells, {} delivery bays)",
                out.display(),
                map.height(),
                map.width(),
                map.storage_cells().len(),
                map.delivery_cells().len()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>, String> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| format!("bad {what} entry `{}`", s.trim()))
        })
        .collect()
}

fn parse_mapgen_params(text: &str) -> Result<MapGenParams, String> {
    let mut p = MapGenParams::default();
    for part in text.split(',').filter(|s| !s.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
        let (key, value) = (key.trim(), value.trim());
        let parsed: u32 = value
            .parse()
            .map_err(|_| format!("bad value `{value}` for `{key}`"))?;
        match key {
            "width" => p.width = parsed,
            "height" => p.height = parsed,
            "corridor" => p.corridor = parsed,
            "block_w" => p.block_w = parsed,
            "block_h" => p.block_h = parsed,
            "delivery_bays" => p.delivery_bays = parsed,
            _ => return Err(format!("unknown map parameter `{key}`")),
        }
    }
    Ok(p)
}

fn stage_csv(
    result: &warehouse_rollout::harness::episode::EpisodeResult,
) -> Result<String, Box<dyn std::error::Error>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "stage",
        "jtilde",
        "accepted",
        "reshuffles",
        "evaluations",
        "decision_ms",
        "stage_cost",
    ])?;
    for r in &result.records {
        w.write_record([
            r.stage.to_string(),
            r.jtilde.map(|v| v.to_string()).unwrap_or_default(),
            r.accepted.to_string(),
            r.reshuffles.to_string(),
            r.evaluations.to_string(),
            r.decision_ms.to_string(),
            r.stage_cost.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
