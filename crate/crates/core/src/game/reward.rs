use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    /// Hopping cost.
    #[serde(rename = "H")]
    pub hop_cost: f64,
    /// SNR threshold in dB.
    #[serde(rename = "M")]
    pub snr_threshold_db: f64,
    /// Distance reward coefficient.
    #[serde(rename = "E")]
    pub distance_coef: f64,
    /// SNR-change coefficient.
    pub alpha: f64,
    /// meters
    pub proximity_radius: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            hop_cost: 2.0,
            snr_threshold_db: 8.0,
            distance_coef: 1.0,
            alpha: 0.5,
            proximity_radius: 30.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("costs.H", self.hop_cost >= 0.0),
            ("costs.E", self.distance_coef >= 0.0),
            ("costs.alpha", self.alpha >= 0.0),
            ("costs.proximity_radius", self.proximity_radius > 0.0),
            ("costs.M", self.snr_threshold_db.is_finite()),
        ];
        for (field, ok) in checks {
            if !ok {
                return Err(Error::config(field, "out of range"));
            }
        }
        Ok(())
    }
}

/// Cost of staying spread for `t` consecutive seconds (piecewise linear,
/// continuous, steeper the longer the ally stays spread).
pub fn spreading_cost(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("spreading duration {t} must be non-negative")));
    }
    Ok(if t <= 10.0 {
        0.5 * t
    } else if t <= 20.0 {
        5.0 + 1.0 * (t - 10.0)
    } else if t <= 40.0 {
        15.0 + 1.2 * (t - 20.0)
    } else {
        39.0 + 1.5 * (t - 40.0)
    })
}

/// `SNR - M - D(t) - H·[a_hopping > 0.5]`
pub fn ally_reward(snr_db: f64, cost: &CostModel, t_spread: f64, a_hopping: f64) -> f64 {
    let hop = if a_hopping > 0.5 { cost.hop_cost } else { 0.0 };
    // t_spread is produced by the environment and is never negative
    let spread = spreading_cost(t_spread.max(0.0)).unwrap_or(0.0);
    snr_db - cost.snr_threshold_db - spread - hop
}

/// Unit step, strict: `θ(0) = 0`.
pub fn unit_step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `E·θ(radius - ‖p_opp - p_ally‖) + α·ΔSNR`, where `ΔSNR` is the ally's
/// SNR degradation (previous minus current).
pub fn opponent_reward(p_opp: Vec3, p_ally: Vec3, delta_snr: f64, cost: &CostModel) -> f64 {
    let dist = p_opp.distance(p_ally);
    cost.distance_coef * unit_step(cost.proximity_radius - dist) + cost.alpha * delta_snr
}
