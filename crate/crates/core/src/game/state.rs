use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{FrequencyGrid, JamKind};
use crate::world::{Vec3, WorldBounds};

pub const STATE_DIM: usize = 15;
pub const ALLY_ACTION_DIM: usize = 3;
pub const OPPONENT_ACTION_DIM: usize = 6;
pub const JOINT_ACTION_DIM: usize = ALLY_ACTION_DIM + OPPONENT_ACTION_DIM;
/// Raw policy outputs live in `[-MAX_ACTION, MAX_ACTION]`.
pub const MAX_ACTION: f64 = 5.0;

pub type StateVec = [f64; STATE_DIM];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub p_ally: Vec3,
    pub p_opponent: Vec3,
    /// MHz
    pub f_ally: f64,
    /// Last ally frequency the opponent managed to detect.
    pub f_jam_detected: Option<f64>,
    pub jam_type: Option<JamKind>,
    pub spread: bool,
    /// Seconds of continuous spreading.
    pub t_spread: f64,
    /// dB
    pub snr_prev: f64,
    /// seconds
    pub sim_time: f64,
}

impl GameState {
    /// Fixed 15-component observation:
    /// `[p_ally/bounds (3), p_opponent/bounds (3), f_ally on grid span,
    ///   detected frequency on grid span or -1, jam one-hot (4), spread,
    ///   t_spread/100, SNR_prev/100]`.
    pub fn encode(&self, grid: &FrequencyGrid, bounds: &WorldBounds) -> StateVec {
        let mut v = [0.0; STATE_DIM];
        let scale = |p: Vec3| [p.x / bounds.x_max, p.y / bounds.y_max, p.z / bounds.z_max];
        v[0..3].copy_from_slice(&scale(self.p_ally));
        v[3..6].copy_from_slice(&scale(self.p_opponent));
        v[6] = grid.normalize(self.f_ally);
        v[7] = self.f_jam_detected.map_or(-1.0, |f| grid.normalize(f));
        if let Some(kind) = self.jam_type {
            v[8 + kind.index()] = 1.0;
        }
        v[12] = if self.spread { 1.0 } else { 0.0 };
        v[13] = self.t_spread / 100.0;
        v[14] = self.snr_prev / 100.0;
        v
    }
}

/// Raw `[-5, 5]` action component to `[0, 1]`.
pub fn to_unit(raw: f64) -> f64 {
    if raw.is_nan() {
        return 0.5;
    }
    (raw.clamp(-MAX_ACTION, MAX_ACTION) + MAX_ACTION) / (2.0 * MAX_ACTION)
}

/// `[0, 1]` to a raw action component.
pub fn from_unit(u: f64) -> f64 {
    u.clamp(0.0, 1.0) * 2.0 * MAX_ACTION - MAX_ACTION
}

fn check_arity(raw: &[f64], expected: usize) -> Result<()> {
    if raw.len() != expected {
        return Err(Error::Encoding { expected, got: raw.len() });
    }
    Ok(())
}

/// Ally decision, every component normalized to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllyAction {
    /// Hop when `> 0.5`.
    pub hopping: f64,
    /// Flip the spread state when `> 0.5`.
    pub spread_toggle: f64,
    /// Requested grid channel, `[0, 1]` across the grid indices.
    pub channel: f64,
}

impl AllyAction {
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        check_arity(raw, ALLY_ACTION_DIM)?;
        Ok(Self {
            hopping: to_unit(raw[0]),
            spread_toggle: to_unit(raw[1]),
            channel: to_unit(raw[2]),
        })
    }

    pub fn to_raw(&self) -> [f64; ALLY_ACTION_DIM] {
        [from_unit(self.hopping), from_unit(self.spread_toggle), from_unit(self.channel)]
    }

    pub fn hops(&self) -> bool {
        self.hopping > 0.5
    }

    pub fn toggles_spread(&self) -> bool {
        self.spread_toggle > 0.5
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpponentAction {
    /// `[0, 1]` split into four equal bins, one per jamming type.
    pub jam_type: f64,
    /// `[0, 1]` across the grid span; ignored while a detection is held.
    pub jam_freq: f64,
    /// Follow the patrol pattern or planned path when `> 0.5`, otherwise
    /// steer with `movement`.
    pub follow: f64,
    /// Raw steering components in `[-5, 5]`; `±5` is full speed on that axis.
    pub movement: Vec3,
}

impl OpponentAction {
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        check_arity(raw, OPPONENT_ACTION_DIM)?;
        let c = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(-MAX_ACTION, MAX_ACTION) };
        Ok(Self {
            jam_type: to_unit(raw[0]),
            jam_freq: to_unit(raw[1]),
            follow: to_unit(raw[2]),
            movement: Vec3::new(c(raw[3]), c(raw[4]), c(raw[5])),
        })
    }

    pub fn to_raw(&self) -> [f64; OPPONENT_ACTION_DIM] {
        [
            from_unit(self.jam_type),
            from_unit(self.jam_freq),
            from_unit(self.follow),
            self.movement.x,
            self.movement.y,
            self.movement.z,
        ]
    }

    pub fn follows_route(&self) -> bool {
        self.follow > 0.5
    }

    pub fn jam_kind(&self) -> JamKind {
        JamKind::from_unit(self.jam_type)
    }

    /// Unit value that selects `kind`.
    pub fn unit_for(kind: JamKind) -> f64 {
        (kind.index() as f64 + 0.5) / 4.0
    }
}

/// Splits a 9-component joint action into its ally and opponent parts.
pub fn split_joint(raw: &[f64]) -> Result<(AllyAction, OpponentAction)> {
    check_arity(raw, JOINT_ACTION_DIM)?;
    Ok((
        AllyAction::from_raw(&raw[..ALLY_ACTION_DIM])?,
        OpponentAction::from_raw(&raw[ALLY_ACTION_DIM..])?,
    ))
}
