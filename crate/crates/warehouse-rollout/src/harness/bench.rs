//! Benchmark runner: a grid of (planner, agent count) points, many seeded
//! episodes per point, per-episode and aggregate CSV output.

use rayon::prelude::*;

use crate::harness::assign::mix;
use crate::harness::config::{PlannerKind, ScenarioConfig};
use crate::harness::episode::{build_scenario_map, run_episode_on, EpisodeResult};
use crate::harness::HarnessError;

#[derive(Debug, Clone)]
pub struct BenchPoint {
    pub planner: PlannerKind,
    pub m: usize,
    pub seed: u64,
    pub result: EpisodeResult,
}

#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub planner: PlannerKind,
    pub m: usize,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean realized cost over `cost_samples` episodes: successful ones
    /// for the cooperative A* baseline, all episodes for the rollout
    /// planners (the paper's averaging convention for each).
    pub mean_cost: f64,
    pub cost_samples: usize,
    pub mean_decision_ms: f64,
    pub mean_reshuffles: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub episodes: Vec<BenchPoint>,
    pub aggregates: Vec<AggregateRow>,
}

/// Per-episode seed split from the master seed; independent of execution
/// order, so parallelism never changes results.
pub fn episode_seed(master: u64, planner: PlannerKind, m: usize, index: u32) -> u64 {
    let p = PlannerKind::ALL.iter().position(|&x| x == planner).unwrap() as u64;
    mix(&[master, p, m as u64, index as u64])
}

/// Worker cap from the WRO_THREADS env var: `Some(0)` means serial,
/// `None` leaves the thread pool at its default size.
pub fn wro_threads() -> Option<usize> {
    std::env::var("WRO_THREADS").ok()?.trim().parse().ok()
}

/// Runs `episodes` seeded episodes for every (planner, m) grid point on
/// one shared map generated from the base config. Episode failures are
/// data, not errors; only infrastructure problems surface as `Err`.
pub fn run_benchmark(
    base: &ScenarioConfig,
    planners: &[PlannerKind],
    m_grid: &[usize],
    episodes: u32,
) -> Result<BenchmarkReport, HarnessError> {
    let map = build_scenario_map(base)?;
    let mut jobs: Vec<(PlannerKind, usize)> = Vec::new();
    for &planner in planners {
        for &m in m_grid {
            jobs.push((planner, m));
        }
    }
    let episode_jobs: Vec<(PlannerKind, usize, u64)> = jobs
        .iter()
        .flat_map(|&(planner, m)| {
            (0..episodes).map(move |i| (planner, m, episode_seed(base.seed, planner, m, i)))
        })
        .collect();

    let run_one = |&(planner, m, seed): &(PlannerKind, usize, u64)| {
        let cfg = ScenarioConfig {
            planner,
            num_agents: m,
            seed,
            ..base.clone()
        };
        run_episode_on(&map, &cfg).map(|result| BenchPoint { planner, m, seed, result })
    };

    let points: Result<Vec<BenchPoint>, HarnessError> = match wro_threads() {
        Some(0) => episode_jobs.iter().map(run_one).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(|| episode_jobs.par_iter().map(run_one).collect()),
        None => episode_jobs.par_iter().map(run_one).collect(),
    };
    let points = points?;

    let aggregates = jobs
        .iter()
        .map(|&(planner, m)| {
            let rows: Vec<&BenchPoint> = points
                .iter()
                .filter(|p| p.planner == planner && p.m == m)
                .collect();
            aggregate(planner, m, &rows)
        })
        .collect();
    Ok(BenchmarkReport { episodes: points, aggregates })
}

fn aggregate(planner: PlannerKind, m: usize, rows: &[&BenchPoint]) -> AggregateRow {
    let episodes = rows.len();
    let successes = rows.iter().filter(|p| p.result.success).count();
    let cost_rows: Vec<&&BenchPoint> = if planner == PlannerKind::CoopAStar {
        rows.iter().filter(|p| p.result.success).collect()
    } else {
        rows.iter().collect()
    };
    let mean = |vals: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = vals.collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    AggregateRow {
        planner,
        m,
        episodes,
        successes,
        success_rate: if episodes == 0 {
            0.0
        } else {
            successes as f64 / episodes as f64
        },
        mean_cost: mean(&mut cost_rows.iter().map(|p| p.result.realized_cost)),
        cost_samples: cost_rows.len(),
        mean_decision_ms: mean(&mut rows.iter().map(|p| p.result.mean_decision_ms())),
        mean_reshuffles: mean(&mut rows.iter().map(|p| p.result.mean_reshuffles())),
    }
}

pub fn render_episode_csv(points: &[BenchPoint]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "planner",
        "m",
        "seed",
        "success",
        "stages",
        "cost",
        "mean_decision_ms",
        "mean_reshuffles",
    ])?;
    for p in points {
        w.write_record([
            p.planner.to_string(),
            p.m.to_string(),
            p.seed.to_string(),
            p.result.success.to_string(),
            p.result.stages.to_string(),
            p.result.realized_cost.to_string(),
            p.result.mean_decision_ms().to_string(),
            p.result.mean_reshuffles().to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8"))
}

pub fn render_aggregate_csv(rows: &[AggregateRow]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "planner",
        "m",
        "episodes",
        "successes",
        "success_rate",
        "mean_cost",
        "cost_samples",
        "mean_decision_ms",
        "mean_reshuffles",
    ])?;
    for r in rows {
        w.write_record([
            r.planner.to_string(),
            r.m.to_string(),
            r.episodes.to_string(),
            r.successes.to_string(),
            r.success_rate.to_string(),
            r.mean_cost.to_string(),
            r.cost_samples.to_string(),
            r.mean_decision_ms.to_string(),
            r.mean_reshuffles.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8"))
}

/// Drops wall-clock columns from a CSV, leaving only the deterministic
/// fields; used when comparing outputs across runs.
pub fn strip_timing_columns(text: &str) -> String {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().expect("csv header").clone();
    let keep: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !h.contains("_ms"))
        .map(|(i, _)| i)
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let select = |rec: &csv::StringRecord| -> Vec<String> {
        keep.iter().map(|&i| rec[i].to_string()).collect()
    };
    w.write_record(select(&headers)).expect("write header");
    for rec in reader.records() {
        w.write_record(select(&rec.expect("csv record"))).expect("write row");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::MapSource;
    use crate::harness::mapgen::MapGenParams;

    fn tiny_base() -> ScenarioConfig {
        ScenarioConfig {
            map: MapSource::Generated(MapGenParams {
                width: 13,
                height: 9,
                corridor: 2,
                block_w: 3,
                block_h: 1,
                delivery_bays: 3,
                ..Default::default()
            }),
            num_goods: 4,
            seed: 77,
            ..Default::default()
        }
    }

    #[test]
    fn benchmark_is_deterministic_modulo_timing() {
        let base = tiny_base();
        let planners = [PlannerKind::MaRollout, PlannerKind::CoopAStar];
        let a = run_benchmark(&base, &planners, &[2, 3], 2).unwrap();
        let b = run_benchmark(&base, &planners, &[2, 3], 2).unwrap();
        let csv_a = strip_timing_columns(&render_episode_csv(&a.episodes).unwrap());
        let csv_b = strip_timing_columns(&render_episode_csv(&b.episodes).unwrap());
        assert_eq!(csv_a, csv_b);
        let agg_a = strip_timing_columns(&render_aggregate_csv(&a.aggregates).unwrap());
        let agg_b = strip_timing_columns(&render_aggregate_csv(&b.aggregates).unwrap());
        assert_eq!(agg_a, agg_b);
        assert_eq!(a.episodes.len(), 8);
        assert_eq!(a.aggregates.len(), 4);
    }

    #[test]
    fn episode_seeds_are_order_free() {
        let s1 = episode_seed(5, PlannerKind::MaRollout, 8, 0);
        let s2 = episode_seed(5, PlannerKind::MaRollout, 8, 1);
        let s3 = episode_seed(5, PlannerKind::CoopAStar, 8, 0);
        assert_ne!(s1, s2);
        assert_ne!(s1, s3);
    }

    #[test]
    fn csv_headers_and_shape() {
        let base = tiny_base();
        let report = run_benchmark(&base, &[PlannerKind::MaRollout], &[2], 1).unwrap();
        let text = render_episode_csv(&report.episodes).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "planner,m,seed,success,stages,cost,mean_decision_ms,mean_reshuffles"
        );
        assert_eq!(lines.count(), 1);
        let stripped = strip_timing_columns(&text);
        assert!(!stripped.contains("mean_decision_ms"));
        assert!(stripped.contains("mean_reshuffles"));
    }
}
