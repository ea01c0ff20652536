//! Scenario configuration: one TOML document, every field defaulted, unknown
//! keys rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::AgentsConfig;
use crate::error::{Error, Result};
use crate::game::reward::CostModel;
use crate::game::EnvConfig;
use crate::knowledge::KbConfig;
use crate::planner::{PlannerConfig, PlannerMode};
use crate::radio::{Bandwidths, FrequencyGrid, LinkMode, RadioParams};
use crate::world::{MotionLimits, TrajectorySpec, Vec3, WorldBounds};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub bounds: WorldBounds,
    pub limits: MotionLimits,
    /// Steps per episode.
    pub episode_length: u64,
    /// Steps per `run` invocation.
    pub total_steps: u64,
    pub base_station: Vec3,
    pub ally_path: TrajectorySpec,
    /// Opponent patrol pattern, or `planned` to follow planner output.
    pub opponent_path: TrajectorySpec,
    /// Opponent start position in planned mode.
    pub opponent_start: Vec3,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            bounds: WorldBounds::default(),
            limits: MotionLimits::default(),
            episode_length: 1000,
            total_steps: 10_000,
            base_station: Vec3::new(750.0, 750.0, 0.0),
            ally_path: TrajectorySpec::Bezier {
                control_points: vec![
                    Vec3::new(100.0, 100.0, 300.0),
                    Vec3::new(500.0, 1400.0, 300.0),
                    Vec3::new(1000.0, 100.0, 300.0),
                    Vec3::new(1400.0, 1400.0, 300.0),
                ],
                round_trip: true,
            },
            opponent_path: TrajectorySpec::Triangle {
                vertices: [
                    Vec3::new(300.0, 300.0, 350.0),
                    Vec3::new(1200.0, 300.0, 350.0),
                    Vec3::new(750.0, 1200.0, 350.0),
                ],
            },
            opponent_start: Vec3::new(750.0, 750.0, 300.0),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.limits.validate()?;
        if self.episode_length == 0 {
            return Err(Error::config("world.episode_length", "must be at least 1"));
        }
        let traj = |field: &str, spec: &TrajectorySpec| {
            spec.validate(&self.bounds)
                .map_err(|e| Error::config(field, e.to_string()))
        };
        if !matches!(self.ally_path, TrajectorySpec::Bezier { .. }) {
            return Err(Error::config("world.ally_path.kind", "the ally flies a bezier path"));
        }
        traj("world.ally_path", &self.ally_path)?;
        if matches!(self.opponent_path, TrajectorySpec::Bezier { .. }) {
            return Err(Error::config(
                "world.opponent_path.kind",
                "expected triangle, circle, rectangle or planned",
            ));
        }
        traj("world.opponent_path", &self.opponent_path)?;
        if let Some(p) = self.opponent_path.perimeter() {
            if !(p > 0.0) {
                return Err(Error::config("world.opponent_path", "pattern has zero perimeter"));
            }
        }
        for (field, p) in [("world.base_station", self.base_station), ("world.opponent_start", self.opponent_start)] {
            if !(p.is_finite() && self.bounds.contains(p)) {
                return Err(Error::config(field, "must lie inside the arena"));
            }
        }
        Ok(())
    }

    pub fn planned_opponent(&self) -> bool {
        matches!(self.opponent_path, TrajectorySpec::Planned { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    /// dBm
    #[serde(rename = "P_base")]
    pub p_base_dbm: f64,
    /// dBm
    #[serde(rename = "P_opponent")]
    pub p_opponent_dbm: f64,
    /// dBm/Hz
    pub noise_density: f64,
    pub bandwidths: Bandwidths,
    pub link_mode: LinkMode,
    pub power_floor_dbm: f64,
    pub min_distance_m: f64,
    /// Fifteen channel centers in MHz, strictly increasing within [150, 250].
    pub grid: Vec<f64>,
    /// Seconds between opponent attempts to detect the ally frequency.
    pub detect_interval: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        let p = RadioParams::default();
        Self {
            p_base_dbm: p.p_base_dbm,
            p_opponent_dbm: p.p_opponent_dbm,
            noise_density: p.noise_density,
            bandwidths: p.bandwidths,
            link_mode: p.link_mode,
            power_floor_dbm: p.power_floor_dbm,
            min_distance_m: p.min_distance_m,
            grid: FrequencyGrid::default().points().to_vec(),
            detect_interval: 5.0,
        }
    }
}

impl RadioConfig {
    pub fn params(&self) -> RadioParams {
        RadioParams {
            p_base_dbm: self.p_base_dbm,
            p_opponent_dbm: self.p_opponent_dbm,
            noise_density: self.noise_density,
            bandwidths: self.bandwidths,
            link_mode: self.link_mode,
            power_floor_dbm: self.power_floor_dbm,
            min_distance_m: self.min_distance_m,
        }
    }

    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.grid.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.frequency_grid()?;
        if !self.p_base_dbm.is_finite() {
            return Err(Error::config("radio.P_base", "must be finite"));
        }
        if self.p_opponent_dbm.is_nan() || self.p_opponent_dbm == f64::INFINITY {
            return Err(Error::config("radio.P_opponent", "must be finite or -inf"));
        }
        if !self.noise_density.is_finite() {
            return Err(Error::config("radio.noise_density", "must be finite"));
        }
        let b = self.bandwidths;
        if !(b.narrow_mhz > 0.0 && b.spread_mhz >= b.narrow_mhz) {
            return Err(Error::config("radio.bandwidths", "need 0 < narrow_mhz <= spread_mhz"));
        }
        if !(self.min_distance_m > 0.0) {
            return Err(Error::config("radio.min_distance_m", "must be positive"));
        }
        if !(self.detect_interval.is_finite() && self.detect_interval > 0.0) {
            return Err(Error::config("radio.detect_interval", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub radio: RadioConfig,
    pub costs: CostModel,
    pub kb: KbConfig,
    pub planner: PlannerConfig,
    pub agents: AgentsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            world: WorldConfig::default(),
            radio: RadioConfig::default(),
            costs: CostModel::default(),
            kb: KbConfig::default(),
            planner: PlannerConfig::default(),
            agents: AgentsConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Loads `path` (or defaults when `None`) and applies `key=value` overrides.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str::<toml::Table>(&text).map_err(|e| Error::Parse(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for ov in overrides {
            apply_override(&mut doc, ov)?;
        }
        let cfg: Self = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// SHA-256 of the canonical TOML serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.radio.validate()?;
        self.costs.validate()?;
        self.kb.validate()?;
        self.planner.validate()?;
        self.agents.validate()?;
        if self.world.planned_opponent() && self.planner.mode == PlannerMode::Pattern {
            return Err(Error::config(
                "world.opponent_path",
                "a planned path needs planner.mode `llm` or `heuristic`",
            ));
        }
        Ok(())
    }

    /// Environment settings. A planner mode other than `pattern` replaces the
    /// opponent's pattern with planner-supplied waypoints.
    pub fn env_config(&self) -> EnvConfig {
        let mut world = self.world.clone();
        if self.planner.mode != PlannerMode::Pattern {
            world.opponent_path = TrajectorySpec::Planned { source: "planner".into() };
        }
        EnvConfig {
            world,
            radio: self.radio.clone(),
            costs: self.costs,
            kb: self.kb.clone(),
            jam_type_lock: self.agents.jam_type_lock,
        }
    }
}

/// Applies a dotted-path override such as `radio.P_base=45`. The value is
/// parsed as a TOML value when possible, otherwise taken as a string.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Argument(format!("override `{spec}` is not of the form key=value")))?;
    let path = path.trim();
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Argument(format!("override `{spec}` has an empty key")));
    }
    let value = parse_override_value(raw.trim());
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = doc;
    for key in parents {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(path, format!("`{key}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("parsed key is present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ScenarioConfig::default();
        let text = cfg.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml_string(), text);
    }

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(ScenarioConfig::from_toml_str("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioConfig::from_toml_str("[radio]\nP_bsae = 40\n").unwrap_err();
        assert!(err.to_string().contains("P_bsae"), "{err}");
        assert!(ScenarioConfig::from_toml_str("bogus = 1\n").is_err());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = ScenarioConfig::load_with_overrides(
            None,
            &[
                "radio.P_base=40".into(),
                "costs.H=3.5".into(),
                "kb.enabled=false".into(),
                "seed=7".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.radio.p_base_dbm, 40.0);
        assert_eq!(cfg.costs.hop_cost, 3.5);
        assert!(!cfg.kb.enabled);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = ScenarioConfig::load_with_overrides(None, &["costs.H=-1".into()]).unwrap_err();
        assert!(err.to_string().contains("costs.H"), "{err}");
        let err = ScenarioConfig::load_with_overrides(None, &["world.limits.max_speed=0".into()]).unwrap_err();
        assert!(err.to_string().contains("max_speed"), "{err}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
