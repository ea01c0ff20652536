//! Anti-jamming expert knowledge base.
//!
//! The ally senses interference power in every grid channel, classifies the
//! jammer from the shape of the hot set, and picks a counter-measure: hop to
//! a channel the jammer does not touch, or spread when none is left.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{
    band_overlap_fraction, dbm_to_watts, watts_to_dbm, AllyChannel, FrequencyGrid, JamKind, JamWidths, JammingSpec,
    GRID_POINTS,
};

/// Interference power measured per probe frequency, ascending in frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumObservation {
    pub samples: Vec<(f64, f64)>,
}

impl SpectrumObservation {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::Argument("spectrum samples must be sorted by frequency".into()));
        }
        Ok(Self { samples })
    }

    /// Senses `jam` through a narrow ally channel centered on each grid point.
    /// Power is the in-band share of the jammer after `path_loss_db`.
    pub fn sense(jam: &JammingSpec, grid: &FrequencyGrid, channel_mhz: f64, path_loss_db: f64) -> Self {
        let samples = grid
            .points()
            .iter()
            .map(|&f| {
                let ch = AllyChannel { center: f, bandwidth: channel_mhz, spread: false };
                let overlap = band_overlap_fraction(jam, &ch);
                let p = if overlap > 0.0 {
                    watts_to_dbm(jam.k() * dbm_to_watts(jam.power_dbm) * overlap) - path_loss_db
                } else {
                    f64::NEG_INFINITY
                };
                (f, p)
            })
            .collect();
        Self { samples }
    }

    pub fn hot_indices(&self, threshold_dbm: f64) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, &(_, p))| p > threshold_dbm)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Identifies the jammer from which probe frequencies exceed `threshold_dbm`.
///
/// Rules, first match wins:
/// exactly one hot sample is a single tone; at least 80% hot is broadband;
/// three or more equally spaced, non-adjacent samples form a comb; a single
/// adjacent run of 2 to 4 samples is narrowband; a longer single run is
/// broadband; several separate runs totalling three or more samples are a comb.
pub fn classify_jamming(obs: &SpectrumObservation, threshold_dbm: f64) -> Result<Option<JamKind>> {
    let n = obs.samples.len();
    if n < GRID_POINTS {
        return Err(Error::InsufficientObservation { got: n, need: GRID_POINTS });
    }
    let hot = obs.hot_indices(threshold_dbm);
    let count = hot.len();
    if count == 0 {
        return Ok(None);
    }
    if count == 1 {
        return Ok(Some(JamKind::SingleTone));
    }
    if count as f64 >= 0.8 * n as f64 {
        return Ok(Some(JamKind::BroadbandBlocking));
    }
    let runs = hot.windows(2).filter(|w| w[1] != w[0] + 1).count() + 1;
    if count >= 3 && runs == count && equally_spaced(&hot.iter().map(|&i| obs.samples[i].0).collect::<Vec<_>>()) {
        return Ok(Some(JamKind::CombSpectrum));
    }
    if runs == 1 {
        return Ok(Some(if count <= 4 {
            JamKind::NarrowbandTargeted
        } else {
            JamKind::BroadbandBlocking
        }));
    }
    if count >= 3 {
        return Ok(Some(JamKind::CombSpectrum));
    }
    Ok(None)
}

fn equally_spaced(freqs: &[f64]) -> bool {
    let gaps: Vec<f64> = freqs.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
    var < 1e-6
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum CounterAction {
    /// Move to `target`; `despread` asks a spread ally to narrow first.
    Hop { target: f64, despread: bool },
    Spread,
    Despread,
    Stay,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CounterStrategy {
    pub action: CounterAction,
    pub rationale: Option<JamKind>,
}

impl CounterStrategy {
    pub fn hop_target(&self) -> Option<f64> {
        match self.action {
            CounterAction::Hop { target, .. } => Some(target),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopPreference {
    /// Seeded uniform draw among clean channels.
    UniformClean,
    /// Clean channel farthest from the jammer's center, ties to the lower frequency.
    MaxDistance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KbRule {
    pub preference: HopPreference,
    /// Extra margin (MHz) added around the jammer support when testing channels.
    pub guard_mhz: f64,
}

impl Default for KbRule {
    fn default() -> Self {
        Self { preference: HopPreference::UniformClean, guard_mhz: 0.0 }
    }
}

pub fn default_rules() -> BTreeMap<JamKind, KbRule> {
    JamKind::ALL
        .into_iter()
        .map(|k| {
            let preference = if k == JamKind::BroadbandBlocking {
                HopPreference::MaxDistance
            } else {
                HopPreference::UniformClean
            };
            (k, KbRule { preference, guard_mhz: 0.0 })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KbConfig {
    pub enabled: bool,
    /// Probe power above which a channel counts as jammed.
    pub detect_threshold_dbm: f64,
    pub history_len: usize,
    pub widths: JamWidths,
    pub rules: BTreeMap<JamKind, KbRule>,
}

impl Default for KbConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            detect_threshold_dbm: -110.0,
            history_len: 8,
            widths: JamWidths::default(),
            rules: default_rules(),
        }
    }
}

impl KbConfig {
    pub fn validate(&self) -> Result<()> {
        self.widths.validate()?;
        for kind in JamKind::ALL {
            match self.rules.get(&kind) {
                None => return Err(Error::config(format!("kb.rules.{kind}"), "missing rule")),
                Some(r) if !(r.guard_mhz >= 0.0) => {
                    return Err(Error::config(format!("kb.rules.{kind}.guard_mhz"), "must be non-negative"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct KnowledgeBase {
    rules: BTreeMap<JamKind, KbRule>,
    history: VecDeque<f64>,
    history_len: usize,
    narrow_mhz: f64,
    rng: ChaCha8Rng,
}

impl KnowledgeBase {
    pub fn new(cfg: &KbConfig, narrow_mhz: f64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            rules: cfg.rules.clone(),
            history: VecDeque::with_capacity(cfg.history_len),
            history_len: cfg.history_len,
            narrow_mhz,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn with_defaults(seed: u64) -> Self {
        Self::new(&KbConfig::default(), AllyChannel::NARROW_MHZ, seed).expect("default kb config is valid")
    }

    pub fn history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    /// Remembers a jammer center frequency seen by spectrum monitoring.
    pub fn record_jam_frequency(&mut self, f: f64) {
        if self.history_len == 0 {
            return;
        }
        if self.history.len() == self.history_len {
            self.history.pop_front();
        }
        self.history.push_back(f);
    }

    /// Grid points whose narrow channel has zero overlap with `jam`.
    pub fn clean_channels(&self, jam: &JammingSpec, grid: &FrequencyGrid) -> Vec<f64> {
        let guard = self.rules.get(&jam.kind()).map_or(0.0, |r| r.guard_mhz);
        grid.points()
            .iter()
            .copied()
            .filter(|&f| {
                let ch = AllyChannel { center: f, bandwidth: self.narrow_mhz + 2.0 * guard, spread: false };
                band_overlap_fraction(jam, &ch) == 0.0
            })
            .collect()
    }

    pub fn recommend(&mut self, jam: &JammingSpec, grid: &FrequencyGrid, ch: &AllyChannel) -> CounterStrategy {
        let kind = jam.kind();
        let clean = self.clean_channels(jam, grid);
        if clean.is_empty() {
            return CounterStrategy { action: CounterAction::Spread, rationale: Some(kind) };
        }
        let preference = self.rules.get(&kind).map_or(HopPreference::UniformClean, |r| r.preference);
        let target = match preference {
            HopPreference::MaxDistance => {
                let mid = jam.center();
                // strict comparison over ascending points keeps the lower one on ties
                clean
                    .iter()
                    .copied()
                    .fold(None::<f64>, |best, f| match best {
                        Some(b) if (f - mid).abs() <= (b - mid).abs() => Some(b),
                        _ => Some(f),
                    })
                    .expect("clean is non-empty")
            }
            HopPreference::UniformClean => {
                // avoid frequencies the opponent recently jammed when possible
                let fresh: Vec<f64> = clean
                    .iter()
                    .copied()
                    .filter(|f| !self.history.iter().any(|h| (h - f).abs() < 1e-9))
                    .collect();
                let pool = if fresh.is_empty() { &clean } else { &fresh };
                *pool.choose(&mut self.rng).expect("pool is non-empty")
            }
        };
        CounterStrategy {
            action: CounterAction::Hop { target, despread: ch.spread },
            rationale: Some(kind),
        }
    }

    /// Full sensing pipeline: classify from the observation, then recommend.
    /// Unknown jammers fall back to spreading; a quiet spectrum means stay.
    pub fn respond(
        &mut self,
        obs: &SpectrumObservation,
        threshold_dbm: f64,
        jam: &JammingSpec,
        grid: &FrequencyGrid,
        ch: &AllyChannel,
    ) -> Result<CounterStrategy> {
        if obs.hot_indices(threshold_dbm).is_empty() {
            return Ok(CounterStrategy { action: CounterAction::Stay, rationale: None });
        }
        match classify_jamming(obs, threshold_dbm)? {
            Some(_) => {
                self.record_jam_frequency(jam.center());
                Ok(self.recommend(jam, grid, ch))
            }
            None => Ok(CounterStrategy { action: CounterAction::Spread, rationale: None }),
        }
    }
}

/// Default-width jammer aimed at `target`, as the opponent would emit it.
pub fn default_jam(kind: JamKind, target: f64, power_dbm: f64) -> JammingSpec {
    JamWidths::default().spec_for(kind, target, power_dbm)
}
