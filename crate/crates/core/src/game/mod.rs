//! The frequency-point game: one ally UAV talking to a base station, one
//! opponent UAV trying to jam it.

pub mod log;
pub mod replay;
pub mod reward;
pub mod state;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{RadioConfig, WorldConfig};
use crate::error::{Error, Result};
use crate::knowledge::{KbConfig, KnowledgeBase, SpectrumObservation};
use crate::radio::{
    band_overlap_fraction, AllyChannel, FrequencyGrid, JamKind, JammingSpec, LinkBudget, LinkGeometry, RadioParams,
};
use crate::world::{pattern_waypoint, step_motion, BezierPath, TrajectorySpec, Vec3};

pub use self::log::{DetectionOutcome, TickRecord, LOG_VERSION};
pub use self::replay::{ReplayBuffer, SharedReplayBuffer, TransitionRecord};
pub use self::reward::{ally_reward, opponent_reward, spreading_cost, CostModel};
pub use self::state::{
    split_joint, AllyAction, GameState, OpponentAction, StateVec, ALLY_ACTION_DIM, JOINT_ACTION_DIM, MAX_ACTION,
    OPPONENT_ACTION_DIM, STATE_DIM,
};

/// Everything the environment needs; a projection of the scenario config.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub world: WorldConfig,
    pub radio: RadioConfig,
    pub costs: CostModel,
    pub kb: KbConfig,
    /// Restricts the opponent to a single jamming type.
    pub jam_type_lock: Option<JamKind>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        crate::config::ScenarioConfig::default().env_config()
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.radio.validate()?;
        self.costs.validate()?;
        self.kb.validate()
    }
}

/// Detection schedule: attempts at multiples of `interval`; an attempt
/// succeeds only when the ally SNR is at least `threshold_db`, otherwise the
/// previous value is kept.
pub fn detect_center_frequency(
    previous: Option<f64>,
    f_ally: f64,
    snr_db: f64,
    sim_time: f64,
    interval: f64,
    threshold_db: f64,
) -> (Option<f64>, DetectionOutcome) {
    if !on_schedule(sim_time, interval) {
        return (previous, DetectionOutcome::OffSchedule);
    }
    if snr_db >= threshold_db {
        (Some(f_ally), DetectionOutcome::Detected)
    } else {
        (previous, DetectionOutcome::Failed)
    }
}

fn on_schedule(sim_time: f64, interval: f64) -> bool {
    let n = (sim_time / interval).round();
    n >= 1.0 && (sim_time - n * interval).abs() < 1e-9
}

#[derive(Clone, Debug)]
enum OpponentRoute {
    /// Arc length flown along a closed pattern.
    Pattern { spec: TrajectorySpec, s: f64 },
    /// Waypoints from the planner, one per tick; the last one is held.
    Planned { waypoints: Vec<Vec3>, next: usize },
}

/// Result of one environment tick.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: GameState,
    pub observation: StateVec,
    pub r_ally: f64,
    pub r_opponent: f64,
    pub done: bool,
    pub record: TickRecord,
}

/// Single-threaded game instance. Deterministic given its config and seed.
#[derive(Clone, Debug)]
pub struct Env {
    cfg: EnvConfig,
    params: RadioParams,
    grid: FrequencyGrid,
    ally_path: BezierPath,
    route: OpponentRoute,
    kb: Option<KnowledgeBase>,
    rng: ChaCha8Rng,
    state: GameState,
    ally_s: f64,
    jam: Option<JammingSpec>,
    budget: Option<LinkBudget>,
    tick: u64,
    episode: u64,
    episode_steps: u64,
}

impl Env {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let params = cfg.radio.params();
        let grid = cfg.radio.frequency_grid()?;
        let ally_path = BezierPath::from_spec(&cfg.world.ally_path)?;
        let route = match &cfg.world.opponent_path {
            TrajectorySpec::Planned { .. } => OpponentRoute::Planned { waypoints: Vec::new(), next: 0 },
            spec => OpponentRoute::Pattern { spec: spec.clone(), s: 0.0 },
        };
        let kb = if cfg.kb.enabled {
            Some(KnowledgeBase::new(&cfg.kb, params.bandwidths.narrow_mhz, seed ^ 0x6b62_5f73_6565_6400)?)
        } else {
            None
        };
        let placeholder = GameState {
            p_ally: ally_path.start(),
            p_opponent: cfg.world.opponent_start,
            f_ally: grid.points()[0],
            f_jam_detected: None,
            jam_type: None,
            spread: false,
            t_spread: 0.0,
            snr_prev: 0.0,
            sim_time: 0.0,
        };
        let mut env = Self {
            cfg,
            params,
            grid,
            ally_path,
            route,
            kb,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: placeholder,
            ally_s: 0.0,
            jam: None,
            budget: None,
            tick: 0,
            episode: 0,
            episode_steps: 0,
        };
        env.reset()?;
        Ok(env)
    }

    /// Starts a new episode. The knowledge base persists; a planned path is
    /// dropped so the next plan starts from the start position.
    pub fn reset(&mut self) -> Result<&GameState> {
        let p_opponent = match &mut self.route {
            OpponentRoute::Pattern { spec, s } => {
                *s = 0.0;
                pattern_waypoint(spec, 0.0)?
            }
            OpponentRoute::Planned { waypoints, next } => {
                waypoints.clear();
                *next = 0;
                self.cfg.world.opponent_start
            }
        };
        let idx = self.rng.random_range(0..self.grid.points().len());
        let f_ally = self.grid.points()[idx];
        self.ally_s = 0.0;
        self.jam = None;
        self.state = GameState {
            p_ally: self.ally_path.start(),
            p_opponent,
            f_ally,
            f_jam_detected: None,
            jam_type: None,
            spread: false,
            t_spread: 0.0,
            snr_prev: 0.0,
            sim_time: 0.0,
        };
        let baseline = self.evaluate(None)?;
        self.state.snr_prev = baseline.snr_db;
        self.budget = Some(baseline);
        self.episode += 1;
        self.episode_steps = 0;
        Ok(&self.state)
    }

    /// Replaces the opponent's planned waypoints; only used in planned mode.
    pub fn set_planned_path(&mut self, path: Vec<Vec3>) {
        if let OpponentRoute::Planned { waypoints, next } = &mut self.route {
            *waypoints = path;
            *next = 0;
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn observation(&self) -> StateVec {
        self.state.encode(&self.grid, &self.cfg.world.bounds)
    }

    /// Jammer emitted on the last tick.
    pub fn current_jam(&self) -> Option<&JammingSpec> {
        self.jam.as_ref()
    }

    pub fn last_budget(&self) -> Option<&LinkBudget> {
        self.budget.as_ref()
    }

    pub fn knowledge_base(&self) -> Option<&KnowledgeBase> {
        self.kb.as_ref()
    }

    pub fn ally_channel(&self) -> AllyChannel {
        AllyChannel::with_spread(self.state.f_ally, self.state.spread, &self.params.bandwidths)
    }

    pub fn planned_mode(&self) -> bool {
        matches!(self.route, OpponentRoute::Planned { .. })
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn episode_steps(&self) -> u64 {
        self.episode_steps
    }

    /// Steps a 9-component joint action (3 ally, then 6 opponent).
    pub fn step_raw(&mut self, joint: &[f64]) -> Result<StepOutcome> {
        let (a, o) = split_joint(joint)?;
        self.step(&a, &o)
    }

    pub fn step(&mut self, a: &AllyAction, o: &OpponentAction) -> Result<StepOutcome> {
        let dt = self.cfg.world.limits.dt;
        let step_len = self.cfg.world.limits.step_length();
        let bounds = self.cfg.world.bounds;

        // ally frequency management
        let hop = a.hops();
        if hop {
            let mut target = self.grid.points()[self.grid.index_from_unit(a.channel)];
            if let (Some(kb), Some(jam)) = (self.kb.as_mut(), self.jam.as_ref()) {
                let sensing_loss = self.budget.map_or(0.0, |b| b.l_opponent_db);
                let obs = SpectrumObservation::sense(jam, &self.grid, self.params.bandwidths.narrow_mhz, sensing_loss);
                let ch = AllyChannel::with_spread(self.state.f_ally, self.state.spread, &self.params.bandwidths);
                let strategy = kb.respond(&obs, self.cfg.kb.detect_threshold_dbm, jam, &self.grid, &ch)?;
                if let Some(t) = strategy.hop_target() {
                    target = t;
                }
            }
            self.state.f_ally = target;
        }
        if a.toggles_spread() {
            self.state.spread = !self.state.spread;
        }
        self.state.t_spread = if self.state.spread { self.state.t_spread + dt } else { 0.0 };

        // opponent jamming and motion
        let kind = self.cfg.jam_type_lock.unwrap_or_else(|| o.jam_kind());
        let target = self.state.f_jam_detected.unwrap_or_else(|| self.grid.freq_from_unit(o.jam_freq));
        let jam = self.cfg.kb.widths.spec_for(kind, target, self.params.p_opponent_dbm);
        let pos = self.state.p_opponent;
        let desired = if o.follows_route() {
            match &mut self.route {
                OpponentRoute::Pattern { spec, s } => {
                    *s += step_len;
                    pattern_waypoint(spec, *s)?
                }
                OpponentRoute::Planned { waypoints, next } => match waypoints.get(*next) {
                    Some(&w) => {
                        *next += 1;
                        w
                    }
                    None => waypoints.last().copied().unwrap_or(pos),
                },
            }
        } else {
            pos + o.movement * (step_len / MAX_ACTION)
        };
        self.state.p_opponent = step_motion(pos, desired, &self.cfg.world.limits, &bounds);
        self.state.jam_type = Some(kind);

        // ally flies its fixed path
        self.ally_s += step_len;
        self.state.p_ally = bounds.clamp(self.ally_path.position_at(self.ally_s));

        let budget = self.evaluate(Some(&jam))?;
        let snr = budget.snr_db;
        self.state.sim_time += dt;

        let (detected, event) = detect_center_frequency(
            self.state.f_jam_detected,
            self.state.f_ally,
            snr,
            self.state.sim_time,
            self.cfg.radio.detect_interval,
            self.cfg.costs.snr_threshold_db,
        );
        self.state.f_jam_detected = detected;

        let r_ally = ally_reward(snr, &self.cfg.costs, self.state.t_spread, a.hopping);
        let delta_snr = self.state.snr_prev - snr;
        let r_opponent = opponent_reward(self.state.p_opponent, self.state.p_ally, delta_snr, &self.cfg.costs);
        if !(r_ally.is_finite() && r_opponent.is_finite()) {
            return Err(Error::Domain(format!("non-finite reward at tick {}", self.tick + 1)));
        }
        self.state.snr_prev = snr;

        let overlap = band_overlap_fraction(&jam, &self.ally_channel());
        let (lo, hi) = jam.envelope();
        self.tick += 1;
        self.episode_steps += 1;
        let done = self.episode_steps >= self.cfg.world.episode_length;
        let record = TickRecord {
            v: LOG_VERSION,
            tick: self.tick,
            episode: self.episode,
            t: self.state.sim_time,
            p_ally: self.state.p_ally.to_array(),
            p_opp: self.state.p_opponent.to_array(),
            f_ally: self.state.f_ally,
            spread: self.state.spread,
            hop,
            jam_type: Some(kind),
            jam_band: Some([lo, hi]),
            overlap,
            snr,
            capacity: budget.capacity_bps,
            r_ally,
            r_opp: r_opponent,
            detected,
            detect_event: event,
        };
        self.jam = Some(jam);
        self.budget = Some(budget);
        Ok(StepOutcome {
            state: self.state.clone(),
            observation: self.observation(),
            r_ally,
            r_opponent,
            done,
            record,
        })
    }

    fn evaluate(&self, jam: Option<&JammingSpec>) -> Result<LinkBudget> {
        let geo = LinkGeometry {
            base_distance_m: self.state.p_ally.distance(self.cfg.world.base_station),
            opponent_distance_m: self.state.p_ally.distance(self.state.p_opponent),
        };
        LinkBudget::evaluate(&self.params, &self.ally_channel(), jam, geo)
    }
}
