//! Flat key=value scenario configuration. Every field of
//! [`ScenarioConfig`] is nameable; unknown keys are rejected.

use std::fmt;
use std::str::FromStr;

use crate::dynamics::CostParams;
use crate::harness::mapgen::MapGenParams;
use crate::policies::DEFAULT_FREEZE_PERIOD;
use crate::rollout::STANDARD_ROLLOUT_MAX_AGENTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlannerKind {
    MaRollout,
    MaRolloutNoPrecompute,
    CoopAStar,
    StandardRollout,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [
        PlannerKind::MaRollout,
        PlannerKind::MaRolloutNoPrecompute,
        PlannerKind::CoopAStar,
        PlannerKind::StandardRollout,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlannerKind::MaRollout => "ma-rollout",
            PlannerKind::MaRolloutNoPrecompute => "ma-rollout-noprecompute",
            PlannerKind::CoopAStar => "coop-astar",
            PlannerKind::StandardRollout => "standard-rollout",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlannerKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        PlannerKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ConfigError::BadValue {
                key: "planner".into(),
                value: s.into(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapSource {
    File(String),
    Generated(MapGenParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub map: MapSource,
    pub num_agents: usize,
    pub num_goods: usize,
    pub seed: u64,
    pub planner: PlannerKind,
    pub params: CostParams,
    pub max_reshuffles: usize,
    /// Fraction of agents frozen mid-episode, in [0, 0.2].
    pub malfunction_q: f64,
    /// Latest onset stage; `None` derives one from the map scale.
    pub malfunction_onset_max: Option<u64>,
    pub freeze_period: u32,
    /// Stage cap; exceeding it ends the episode as a failure.
    pub max_stages: u64,
    /// Base-policy simulation horizon override.
    pub sim_horizon: Option<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            map: MapSource::Generated(MapGenParams::default()),
            num_agents: 8,
            num_goods: 60,
            seed: 0,
            planner: PlannerKind::MaRollout,
            params: CostParams::default(),
            max_reshuffles: 10,
            malfunction_q: 0.0,
            malfunction_onset_max: None,
            freeze_period: DEFAULT_FREEZE_PERIOD,
            max_stages: 5000,
            sim_horizon: None,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("line {0}: expected `key=value`")]
    MissingEquals(usize),
    #[error("bad value `{value}` for key `{key}`")]
    BadValue { key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
    })
}

/// Parses the flat key=value format. Lines starting with `#` and blank
/// lines are skipped; later keys override earlier ones; any unknown key
/// is an error. Map-generator keys and `map_file` are mutually exclusive,
/// with `map_file` winning only if no generator key appears.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::default();
    let mut gen = MapGenParams::default();
    let mut saw_gen_key = false;
    let mut map_file: Option<String> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::MissingEquals(lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "map_file" => map_file = Some(value.to_string()),
            "map_width" => {
                gen.width = parse_num(key, value)?;
                saw_gen_key = true;
            }
            "map_height" => {
                gen.height = parse_num(key, value)?;
                saw_gen_key = true;
            }
            "corridor" => {
                gen.corridor = parse_num(key, value)?;
                saw_gen_key = true;
            }
            "block_w" => {
                gen.block_w = parse_num(key, value)?;
                saw_gen_key = true;
            }
            "block_h" => {
                gen.block_h = parse_num(key, value)?;
                saw_gen_key = true;
            }
            "delivery_bays" => {
                gen.delivery_bays = parse_num(key, value)?;
                saw_gen_key = true;
            }
            "agents" => cfg.num_agents = parse_num(key, value)?,
            "goods" => cfg.num_goods = parse_num(key, value)?,
            "seed" => cfg.seed = parse_num(key, value)?,
            "planner" => cfg.planner = value.parse()?,
            "alpha" => cfg.params.alpha = parse_num(key, value)?,
            "c1" => cfg.params.c1 = parse_num(key, value)?,
            "c2" => cfg.params.c2 = parse_num(key, value)?,
            "swap_conflicts" => cfg.params.swap_conflicts = parse_num(key, value)?,
            "max_reshuffles" => cfg.max_reshuffles = parse_num(key, value)?,
            "malfunction_q" => cfg.malfunction_q = parse_num(key, value)?,
            "malfunction_onset_max" => {
                cfg.malfunction_onset_max = Some(parse_num(key, value)?)
            }
            "freeze_period" => cfg.freeze_period = parse_num(key, value)?,
            "max_stages" => cfg.max_stages = parse_num(key, value)?,
            "sim_horizon" => cfg.sim_horizon = Some(parse_num(key, value)?),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
    }

    if saw_gen_key && map_file.is_some() {
        return Err(ConfigError::Invalid(
            "map_file and map generator keys are mutually exclusive".into(),
        ));
    }
    cfg.map = match map_file {
        Some(f) => MapSource::File(f),
        None => MapSource::Generated(gen),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_agents < 1 {
            return Err(ConfigError::Invalid("agents must be >= 1".into()));
        }
        if self.num_goods < 1 {
            return Err(ConfigError::Invalid("goods must be >= 1".into()));
        }
        if !(0.0..=0.2).contains(&self.malfunction_q) {
            return Err(ConfigError::Invalid(
                "malfunction_q must lie in [0, 0.2]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.params.alpha) {
            return Err(ConfigError::Invalid("alpha must lie in [0, 1)".into()));
        }
        if self.freeze_period < 1 {
            return Err(ConfigError::Invalid("freeze_period must be >= 1".into()));
        }
        if self.planner == PlannerKind::StandardRollout
            && self.num_agents > STANDARD_ROLLOUT_MAX_AGENTS
        {
            return Err(ConfigError::Invalid(format!(
                "standard-rollout supports at most {STANDARD_ROLLOUT_MAX_AGENTS} agents"
            )));
        }
        Ok(())
    }

    /// Serializes back to the key=value format; `parse_config` of the
    /// output reproduces the config.
    pub fn render(&self) -> String {
        let mut out = String::new();
        match &self.map {
            MapSource::File(f) => out.push_str(&format!("map_file={f}\n")),
            MapSource::Generated(g) => {
                out.push_str(&format!(
                    "map_width={}\nmap_height={}\ncorridor={}\nblock_w={}\nblock_h={}\ndelivery_bays={}\n",
                    g.width, g.height, g.corridor, g.block_w, g.block_h, g.delivery_bays
                ));
            }
        }
        out.push_str(&format!(
            "agents={}\ngoods={}\nseed={}\nplanner={}\nalpha={}\nc1={}\nc2={}\nswap_conflicts={}\nmax_reshuffles={}\nmalfunction_q={}\n",
            self.num_agents,
            self.num_goods,
            self.seed,
            self.planner,
            self.params.alpha,
            self.params.c1,
            self.params.c2,
            self.params.swap_conflicts,
            self.max_reshuffles,
            self.malfunction_q,
        ));
        if let Some(v) = self.malfunction_onset_max {
            out.push_str(&format!("malfunction_onset_max={v}\n"));
        }
        out.push_str(&format!(
            "freeze_period={}\nmax_stages={}\n",
            self.freeze_period, self.max_stages
        ));
        if let Some(v) = self.sim_horizon {
            out.push_str(&format!("sim_horizon={v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ScenarioConfig::default();
        assert_eq!(parse_config(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn every_field_nameable() {
        let text = "\
# comment
map_width=21
map_height=11
corridor=2
block_w=3
block_h=1
delivery_bays=4
agents=5
goods=12
seed=42
planner=coop-astar
alpha=0.99
c1=1e18
c2=-5000
swap_conflicts=true
max_reshuffles=7
malfunction_q=0.1
malfunction_onset_max=30
freeze_period=4
max_stages=900
sim_horizon=250
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.num_agents, 5);
        assert_eq!(cfg.planner, PlannerKind::CoopAStar);
        assert_eq!(cfg.params.c2, -5000.0);
        assert!(cfg.params.swap_conflicts);
        assert_eq!(cfg.malfunction_onset_max, Some(30));
        assert_eq!(cfg.sim_horizon, Some(250));
        assert_eq!(parse_config(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        assert_eq!(
            parse_config("agnets=3\n"),
            Err(ConfigError::UnknownKey("agnets".into()))
        );
    }

    #[test]
    fn missing_equals_rejected() {
        assert_eq!(parse_config("agents\n"), Err(ConfigError::MissingEquals(1)));
    }

    #[test]
    fn q_out_of_range_rejected() {
        assert!(matches!(
            parse_config("malfunction_q=0.5\n"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn standard_rollout_agent_guard() {
        assert!(matches!(
            parse_config("planner=standard-rollout\nagents=7\n"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(parse_config("planner=standard-rollout\nagents=4\n").is_ok());
    }

    #[test]
    fn map_file_conflicts_with_generator_keys() {
        assert!(matches!(
            parse_config("map_file=a.map\nmap_width=9\n"),
            Err(ConfigError::Invalid(_))
        ));
        let cfg = parse_config("map_file=a.map\n").unwrap();
        assert_eq!(cfg.map, MapSource::File("a.map".into()));
    }
}
