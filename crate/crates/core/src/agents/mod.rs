//! Action policies: scripted baselines and MADDPG.

pub mod checkpoint;
pub mod maddpg;
pub mod nn;
pub mod scripted;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::JamKind;

pub use self::maddpg::{Maddpg, MaddpgConfig, Side};
pub use self::scripted::{AllyPolicy, FixedFrequencyAlly, KbAlly, OpponentPolicy, PursuitOpponent, RandomHopAlly, RouteOpponent};
pub use self::train::{rollout, train, Actors, Exploration, EpisodeStats, Rollout, Session, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllyKind {
    Fixed,
    RandomHop,
    Kb,
    Maddpg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpponentKind {
    /// Flies the patrol pattern, or the planner's path in planned mode.
    Route,
    Pursuit,
    Maddpg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsConfig {
    pub ally: AllyKind,
    pub opponent: OpponentKind,
    /// Hop probability of the random-hop ally.
    pub p_hop: f64,
    /// Restricts the opponent to one jamming type.
    pub jam_type_lock: Option<JamKind>,
    pub maddpg: MaddpgConfig,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        Self {
            ally: AllyKind::Kb,
            opponent: OpponentKind::Route,
            p_hop: 0.2,
            jam_type_lock: None,
            maddpg: MaddpgConfig::default(),
        }
    }
}

impl AgentsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_hop) {
            return Err(Error::config("agents.p_hop", "must lie in [0, 1]"));
        }
        self.maddpg.validate()
    }

    /// Scripted ally, or `None` when the ally is learned.
    pub fn scripted_ally(&self, seed: u64) -> Option<Box<dyn AllyPolicy>> {
        match self.ally {
            AllyKind::Fixed => Some(Box::new(FixedFrequencyAlly)),
            AllyKind::RandomHop => Some(Box::new(RandomHopAlly::new(self.p_hop, seed))),
            AllyKind::Kb => Some(Box::new(KbAlly::new(seed))),
            AllyKind::Maddpg => None,
        }
    }

    /// Scripted opponent, or `None` when the opponent is learned.
    pub fn scripted_opponent(&self, seed: u64) -> Option<Box<dyn OpponentPolicy>> {
        match self.opponent {
            OpponentKind::Route => Some(Box::new(RouteOpponent::new(seed, self.jam_type_lock))),
            OpponentKind::Pursuit => Some(Box::new(PursuitOpponent::new(seed, self.jam_type_lock))),
            OpponentKind::Maddpg => None,
        }
    }
}
