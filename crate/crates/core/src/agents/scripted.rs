//! Hand-written baseline policies. Each reads the environment and emits a
//! raw action vector in `[-5, 5]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{Env, OpponentAction, ALLY_ACTION_DIM, MAX_ACTION, OPPONENT_ACTION_DIM};
use crate::radio::{band_overlap_fraction, AllyChannel, JamKind};
use crate::world::Vec3;

const ON: f64 = MAX_ACTION;
const OFF: f64 = -MAX_ACTION;

pub trait AllyPolicy: Send {
    fn act(&mut self, env: &Env) -> [f64; ALLY_ACTION_DIM];
}

pub trait OpponentPolicy: Send {
    fn act(&mut self, env: &Env) -> [f64; OPPONENT_ACTION_DIM];
}

fn unit_to_raw(u: f64) -> f64 {
    u.clamp(0.0, 1.0) * 2.0 * MAX_ACTION - MAX_ACTION
}

/// Never hops, never spreads.
#[derive(Clone, Debug, Default)]
pub struct FixedFrequencyAlly;

impl AllyPolicy for FixedFrequencyAlly {
    fn act(&mut self, _env: &Env) -> [f64; ALLY_ACTION_DIM] {
        [OFF, OFF, 0.0]
    }
}

/// Hops to a uniformly drawn channel with probability `p_hop` each tick.
#[derive(Clone, Debug)]
pub struct RandomHopAlly {
    pub p_hop: f64,
    rng: ChaCha8Rng,
}

impl RandomHopAlly {
    pub fn new(p_hop: f64, seed: u64) -> Self {
        Self { p_hop: p_hop.clamp(0.0, 1.0), rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl AllyPolicy for RandomHopAlly {
    fn act(&mut self, _env: &Env) -> [f64; ALLY_ACTION_DIM] {
        let hop = self.rng.random_bool(self.p_hop);
        let channel = unit_to_raw(self.rng.random::<f64>());
        [if hop { ON } else { OFF }, OFF, channel]
    }
}

/// Reacts to interference on its own channel. It hops when jammed and lets
/// the environment's knowledge base pick the target; it spreads only when
/// the knowledge base reports no clean channel and narrows again once one
/// reappears. Without a knowledge base it hops to a random channel and never
/// spreads.
#[derive(Clone, Debug)]
pub struct KbAlly {
    rng: ChaCha8Rng,
}

impl KbAlly {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl AllyPolicy for KbAlly {
    fn act(&mut self, env: &Env) -> [f64; ALLY_ACTION_DIM] {
        let channel = unit_to_raw(self.rng.random::<f64>());
        let state = env.state();
        let Some(jam) = env.current_jam() else {
            return [OFF, OFF, channel];
        };
        let narrow = AllyChannel::with_spread(state.f_ally, false, &env.config().radio.bandwidths);
        let jammed_here = band_overlap_fraction(jam, &narrow) > 0.0;
        let low_snr = state.snr_prev < env.config().costs.snr_threshold_db;
        let Some(kb) = env.knowledge_base() else {
            let hop = (jammed_here || low_snr) && !state.spread;
            return [if hop { ON } else { OFF }, OFF, channel];
        };
        let clean = !kb.clean_channels(jam, env.grid()).is_empty();
        let (hop, toggle) = match (state.spread, jammed_here, clean) {
            // narrow and jammed: hop if possible, otherwise spread
            (false, true, true) => (true, false),
            (false, true, false) => (false, true),
            (false, false, _) => (low_snr && clean, false),
            // spread: narrow again as soon as a clean channel exists
            (true, _, true) => (jammed_here, true),
            (true, _, false) => (false, false),
        };
        [if hop { ON } else { OFF }, if toggle { ON } else { OFF }, channel]
    }
}

/// Jam selection shared by the scripted opponents: a fresh random type (and
/// a random target for when nothing has been detected) at every detection
/// attempt.
#[derive(Clone, Debug)]
struct JamChooser {
    rng: ChaCha8Rng,
    kind: JamKind,
    freq_unit: f64,
    allowed: Vec<JamKind>,
}

impl JamChooser {
    fn new(seed: u64, allowed: Option<JamKind>) -> Self {
        let allowed = allowed.map_or_else(|| JamKind::ALL.to_vec(), |k| vec![k]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = allowed[rng.random_range(0..allowed.len())];
        let freq_unit = rng.random();
        Self { rng, kind, freq_unit, allowed }
    }

    fn choose(&mut self, env: &Env) -> (f64, f64) {
        let interval = env.config().radio.detect_interval;
        let t = env.state().sim_time;
        let n = (t / interval).round();
        if env.episode_steps() == 0 || (n >= 1.0 && (t - n * interval).abs() < 1e-9) {
            self.kind = self.allowed[self.rng.random_range(0..self.allowed.len())];
            self.freq_unit = self.rng.random();
        }
        (unit_to_raw(OpponentAction::unit_for(self.kind)), unit_to_raw(self.freq_unit))
    }
}

/// Flies the configured patrol pattern (or planned path) and jams.
#[derive(Clone, Debug)]
pub struct RouteOpponent {
    jam: JamChooser,
}

impl RouteOpponent {
    pub fn new(seed: u64, allowed: Option<JamKind>) -> Self {
        Self { jam: JamChooser::new(seed, allowed) }
    }
}

impl OpponentPolicy for RouteOpponent {
    fn act(&mut self, env: &Env) -> [f64; OPPONENT_ACTION_DIM] {
        let (kind, freq) = self.jam.choose(env);
        [kind, freq, ON, 0.0, 0.0, 0.0]
    }
}

/// Steers straight at the ally at full speed and jams.
#[derive(Clone, Debug)]
pub struct PursuitOpponent {
    jam: JamChooser,
}

impl PursuitOpponent {
    pub fn new(seed: u64, allowed: Option<JamKind>) -> Self {
        Self { jam: JamChooser::new(seed, allowed) }
    }
}

impl OpponentPolicy for PursuitOpponent {
    fn act(&mut self, env: &Env) -> [f64; OPPONENT_ACTION_DIM] {
        let (kind, freq) = self.jam.choose(env);
        let s = env.state();
        let d = s.p_ally - s.p_opponent;
        let dist = d.norm();
        let m = if dist > 0.0 { d * (MAX_ACTION / dist) } else { Vec3::new(0.0, 0.0, 0.0) };
        [kind, freq, OFF, m.x, m.y, m.z]
    }
}
