//! Game loop shared by evaluation rollouts and MADDPG training.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::maddpg::{Maddpg, MaddpgConfig, Side};
use super::nn::Mlp;
use super::{AllyPolicy, OpponentPolicy};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::game::{
    Env, ReplayBuffer, SharedReplayBuffer, StepOutcome, TickRecord, TransitionRecord, ALLY_ACTION_DIM, MAX_ACTION,
    OPPONENT_ACTION_DIM,
};
use crate::planner::{Planner, PlannerDriver, PlannerStats};

const ALLY_SEED: u64 = 0xa11e;
const OPPONENT_SEED: u64 = 0x0bb0;
const PLANNER_SEED: u64 = 0x91a2;
const NOISE_SEED: u64 = 0x5eed;

/// Per-episode averages for learning curves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpisodeStats {
    pub episode: u64,
    pub steps: u64,
    pub mean_r_ally: f64,
    pub mean_r_opponent: f64,
    pub mean_snr: f64,
}

#[derive(Clone, Debug, Default)]
struct EpisodeAccumulator {
    steps: u64,
    r_ally: f64,
    r_opponent: f64,
    snr: f64,
}

impl EpisodeAccumulator {
    fn add(&mut self, out: &StepOutcome) {
        self.steps += 1;
        self.r_ally += out.r_ally;
        self.r_opponent += out.r_opponent;
        self.snr += out.record.snr;
    }

    fn finish(&mut self, episode: u64) -> Option<EpisodeStats> {
        if self.steps == 0 {
            return None;
        }
        let n = self.steps as f64;
        let stats = EpisodeStats {
            episode,
            steps: self.steps,
            mean_r_ally: self.r_ally / n,
            mean_r_opponent: self.r_opponent / n,
            mean_snr: self.snr / n,
        };
        *self = Self::default();
        Some(stats)
    }
}

/// One environment with its scripted policies and optional planner.
/// Learned sides act through the `Maddpg` passed to [`Session::step`].
pub struct Session {
    env: Env,
    ally: Option<Box<dyn AllyPolicy>>,
    opponent: Option<Box<dyn OpponentPolicy>>,
    planner: Option<PlannerDriver>,
    noise: ChaCha8Rng,
    acc: EpisodeAccumulator,
    curves: Vec<EpisodeStats>,
}

impl Session {
    /// In planned mode `planner` drives the opponent route; an offline
    /// heuristic planner is used when none is given.
    pub fn new(scenario: &ScenarioConfig, planner: Option<Planner>, seed: u64) -> Result<Self> {
        let env = Env::new(scenario.env_config(), seed)?;
        let planner = env.planned_mode().then(|| {
            PlannerDriver::new(planner.unwrap_or_else(|| Planner::offline(scenario.planner.clone(), seed ^ PLANNER_SEED)))
        });
        Ok(Self {
            env,
            ally: scenario.agents.scripted_ally(seed ^ ALLY_SEED),
            opponent: scenario.agents.scripted_opponent(seed ^ OPPONENT_SEED),
            planner,
            noise: ChaCha8Rng::seed_from_u64(seed ^ NOISE_SEED),
            acc: EpisodeAccumulator::default(),
            curves: Vec::new(),
        })
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn planner(&self) -> Option<&PlannerDriver> {
        self.planner.as_ref()
    }

    pub fn planner_stats(&self) -> Option<PlannerStats> {
        self.planner.as_ref().map(PlannerDriver::stats)
    }

    pub fn learned_ally(&self) -> bool {
        self.ally.is_none()
    }

    pub fn learned_opponent(&self) -> bool {
        self.opponent.is_none()
    }

    /// Completed episodes so far.
    pub fn curves(&self) -> &[EpisodeStats] {
        &self.curves
    }

    /// Closes the running episode (if it has any steps) and returns all curves.
    pub fn finish(mut self) -> Vec<EpisodeStats> {
        if let Some(s) = self.acc.finish(self.env.episode()) {
            self.curves.push(s);
        }
        self.curves
    }

    /// Advances one tick, with learned sides exploring per `explore`. The
    /// environment is reset automatically after the last tick of an episode.
    pub fn step(&mut self, actors: &Actors<'_>, explore: Exploration) -> Result<(TransitionRecord, StepOutcome)> {
        if let Some(p) = self.planner.as_mut() {
            if self.env.episode_steps() == 0 {
                p.replan(&mut self.env);
            }
        }
        let s = self.env.observation();
        let a_ally: [f64; ALLY_ACTION_DIM] = match self.ally.as_mut() {
            Some(p) => p.act(&self.env),
            None => learned_action(actors.ally, &s, explore, &mut self.noise)?,
        };
        let a_opponent: [f64; OPPONENT_ACTION_DIM] = match self.opponent.as_mut() {
            Some(p) => p.act(&self.env),
            None => learned_action(actors.opponent, &s, explore, &mut self.noise)?,
        };
        let joint: Vec<f64> = a_ally.iter().chain(a_opponent.iter()).copied().collect();
        let out = self.env.step_raw(&joint)?;
        if let Some(p) = self.planner.as_mut() {
            p.record(out.state.p_opponent, out.r_opponent);
        }
        self.acc.add(&out);
        let t = TransitionRecord {
            s,
            a_ally,
            a_opponent,
            r_ally: out.r_ally,
            r_opponent: out.r_opponent,
            s_next: out.observation,
        };
        if out.done {
            if let Some(stats) = self.acc.finish(self.env.episode()) {
                self.curves.push(stats);
            }
            self.env.reset()?;
        }
        Ok((t, out))
    }
}

/// How learned sides choose actions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exploration {
    /// Policy output plus componentwise Gaussian noise, clipped.
    Gaussian(f64),
    /// Uniform over the action box, ignoring the policy.
    Uniform,
}

impl Exploration {
    pub const GREEDY: Exploration = Exploration::Gaussian(0.0);

    /// Schedule for training step `i` of `steps`.
    pub fn at(cfg: &MaddpgConfig, i: u64, steps: u64) -> Self {
        if cfg.random_warmup && i < cfg.warmup as u64 {
            Exploration::Uniform
        } else {
            Exploration::Gaussian(cfg.sigma_at(i as f64 / steps as f64))
        }
    }
}

/// Actor networks for the learned sides.
#[derive(Clone, Copy, Debug, Default)]
pub struct Actors<'a> {
    pub ally: Option<&'a Mlp>,
    pub opponent: Option<&'a Mlp>,
}

impl<'a> Actors<'a> {
    pub fn from_maddpg(m: &'a Maddpg) -> Self {
        Self { ally: Some(&m.ally.actor), opponent: Some(&m.opponent.actor) }
    }
}

fn learned_action<const N: usize>(
    actor: Option<&Mlp>,
    s: &[f64],
    explore: Exploration,
    rng: &mut ChaCha8Rng,
) -> Result<[f64; N]> {
    let actor = actor.ok_or_else(|| Error::Argument("a learned agent needs trained networks".into()))?;
    let a = match explore {
        Exploration::Gaussian(sigma) => super::maddpg::act(actor, s, sigma, rng)?,
        Exploration::Uniform => (0..N).map(|_| rng.random_range(-MAX_ACTION..=MAX_ACTION)).collect(),
    };
    a.try_into()
        .map_err(|v: Vec<f64>| Error::Encoding { expected: N, got: v.len() })
}

/// Result of an evaluation rollout.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub records: Vec<TickRecord>,
    pub curves: Vec<EpisodeStats>,
    pub planner: Option<PlannerStats>,
}

/// Runs `steps` ticks without learning. Learned sides act greedily.
pub fn rollout(
    scenario: &ScenarioConfig,
    maddpg: Option<&Maddpg>,
    planner: Option<Planner>,
    steps: u64,
    seed: u64,
) -> Result<Rollout> {
    let mut session = Session::new(scenario, planner, seed)?;
    let actors = maddpg.map(Actors::from_maddpg).unwrap_or_default();
    let mut records = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let (_, out) = session.step(&actors, Exploration::GREEDY)?;
        records.push(out.record);
    }
    let planner = session.planner_stats();
    Ok(Rollout { records, curves: session.finish(), planner })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub maddpg: Maddpg,
    pub curves: Vec<EpisodeStats>,
    /// Gradient updates applied (one per learned agent per batch).
    pub updates: u64,
    /// Tick records of the main worker, when requested.
    pub records: Vec<TickRecord>,
    pub planner: Option<PlannerStats>,
}

/// Trains every agent configured as `maddpg` for `steps` environment ticks.
/// With one worker the result is a pure function of the scenario and seed.
pub fn train(
    scenario: &ScenarioConfig,
    planner: Option<Planner>,
    steps: u64,
    seed: u64,
    keep_records: bool,
) -> Result<TrainOutcome> {
    let mut session = Session::new(scenario, planner, seed)?;
    let (learn_ally, learn_opponent) = (session.learned_ally(), session.learned_opponent());
    if !learn_ally && !learn_opponent {
        return Err(Error::Argument("training needs at least one agent of kind `maddpg`".into()));
    }
    let cfg = scenario.agents.maddpg.clone();
    let mut maddpg = Maddpg::new(cfg.clone(), learn_ally, learn_opponent, seed)?;
    if cfg.workers > 1 {
        return train_parallel(scenario, session, maddpg, steps, seed, keep_records);
    }
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb0ff);
    let mut records = Vec::new();
    let mut updates = 0;
    for i in 0..steps {
        let (t, out) = session.step(&Actors::from_maddpg(&maddpg), Exploration::at(&cfg, i, steps))?;
        buffer.push(t);
        if keep_records {
            records.push(out.record);
        }
        if buffer.len() >= cfg.warmup.max(cfg.batch_size) {
            let batch = buffer.sample(cfg.batch_size, &mut sample_rng).expect("buffer holds a batch");
            updates += maddpg.update(&batch)?.len() as u64;
        }
    }
    let planner = session.planner_stats();
    Ok(TrainOutcome { maddpg, curves: session.finish(), updates, records, planner })
}

/// Extra workers collect transitions with periodically refreshed actor
/// snapshots into a shared buffer while the main worker also learns. Any
/// updates the main worker fell behind on are applied after collection.
fn train_parallel(
    scenario: &ScenarioConfig,
    mut session: Session,
    mut maddpg: Maddpg,
    steps: u64,
    seed: u64,
    keep_records: bool,
) -> Result<TrainOutcome> {
    let cfg = maddpg.config().clone();
    let buffer = SharedReplayBuffer::new(cfg.buffer_capacity);
    let snapshot = Arc::new(RwLock::new((maddpg.ally.actor.clone(), maddpg.opponent.actor.clone())));
    let taken = Arc::new(AtomicU64::new(0));
    let stop = Arc::new(AtomicBool::new(false));
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb0ff);
    let mut records = Vec::new();
    let mut updates = 0;

    let result = std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for w in 1..cfg.workers {
            let worker_seed = seed.wrapping_add(w as u64 * 0x9e37_79b9);
            let mut worker = Session::new(scenario, None, worker_seed)?;
            let (buffer, snapshot, taken, stop, cfg) = (buffer.clone(), snapshot.clone(), taken.clone(), stop.clone(), &cfg);
            handles.push(scope.spawn(move || -> Result<()> {
                while !stop.load(Ordering::Relaxed) {
                    let i = taken.fetch_add(1, Ordering::Relaxed);
                    if i >= steps {
                        break;
                    }
                    let (a, o) = snapshot.read().clone();
                    let actors = Actors { ally: Some(&a), opponent: Some(&o) };
                    let (t, _) = worker.step(&actors, Exploration::at(cfg, i, steps))?;
                    buffer.push(t);
                }
                Ok(())
            }));
        }
        let main = (|| -> Result<()> {
            loop {
                let i = taken.fetch_add(1, Ordering::Relaxed);
                if i >= steps {
                    return Ok(());
                }
                let (t, out) = session.step(&Actors::from_maddpg(&maddpg), Exploration::at(&cfg, i, steps))?;
                buffer.push(t);
                if keep_records {
                    records.push(out.record);
                }
                if buffer.len() >= cfg.warmup.max(cfg.batch_size) {
                    let batch = buffer.sample(cfg.batch_size, &mut sample_rng).expect("buffer holds a batch");
                    let refs: Vec<&TransitionRecord> = batch.iter().collect();
                    updates += maddpg.update(&refs)?.len() as u64;
                    *snapshot.write() = (maddpg.ally.actor.clone(), maddpg.opponent.actor.clone());
                }
            }
        })();
        stop.store(true, Ordering::Relaxed);
        for h in handles {
            h.join().map_err(|_| Error::Argument("rollout worker panicked".into()))??;
        }
        main
    });
    result?;
    // Match the serial update count: one batch per transition past warmup.
    let per_batch = u64::from(maddpg.learns(Side::Ally)) + u64::from(maddpg.learns(Side::Opponent));
    let warm = cfg.warmup.max(cfg.batch_size) as u64;
    let target = steps.saturating_sub(warm.saturating_sub(1)) * per_batch;
    while updates < target {
        let batch = buffer.sample(cfg.batch_size, &mut sample_rng).expect("buffer holds a batch");
        let refs: Vec<&TransitionRecord> = batch.iter().collect();
        updates += maddpg.update(&refs)?.len() as u64;
    }
    let planner = session.planner_stats();
    Ok(TrainOutcome { maddpg, curves: session.finish(), updates, records, planner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AllyKind, OpponentKind};

    fn small_scenario() -> ScenarioConfig {
        let mut s = ScenarioConfig::default();
        s.world.episode_length = 50;
        s.agents.ally = AllyKind::Maddpg;
        s.agents.maddpg.warmup = 20;
        s.agents.maddpg.batch_size = 8;
        s.agents.maddpg.hidden = vec![8];
        s
    }

    #[test]
    fn zero_steps_returns_initial_networks() {
        let s = small_scenario();
        let out = train(&s, None, 0, 7, false).unwrap();
        let fresh = Maddpg::new(s.agents.maddpg.clone(), true, false, 7).unwrap();
        assert_eq!(out.maddpg.networks(), fresh.networks());
        assert!(out.curves.is_empty());
        assert_eq!(out.updates, 0);
    }

    #[test]
    fn training_is_deterministic_and_counts_updates() {
        let s = small_scenario();
        let a = train(&s, None, 120, 3, true).unwrap();
        let b = train(&s, None, 120, 3, true).unwrap();
        assert_eq!(a.maddpg.networks(), b.maddpg.networks());
        assert_eq!(a.records, b.records);
        // updates start once 20 transitions are buffered, ally only
        assert_eq!(a.updates, 101);
        // two full episodes plus a partial one
        assert_eq!(a.curves.len(), 3);
        assert_eq!(a.curves.iter().map(|c| c.steps).sum::<u64>(), 120);
        assert!(a.maddpg.opponent.actor == Maddpg::new(s.agents.maddpg.clone(), true, false, 3).unwrap().opponent.actor);
    }

    #[test]
    fn training_without_learned_agents_is_an_error() {
        let mut s = small_scenario();
        s.agents.ally = AllyKind::Kb;
        s.agents.opponent = OpponentKind::Route;
        assert!(train(&s, None, 10, 0, false).is_err());
    }

    #[test]
    fn parallel_training_runs_the_step_budget() {
        let mut s = small_scenario();
        s.agents.maddpg.workers = 3;
        let out = train(&s, None, 200, 1, true).unwrap();
        // (200 - 20 + 1) batches for the ally alone
        assert_eq!(out.updates, 181);
        assert!(out.records.len() <= 200);
        assert!(out.maddpg.networks().iter().all(|n| n.params().iter().all(|p| p.is_finite())));
    }

    #[test]
    fn rollout_is_deterministic_and_planned_mode_replans() {
        let mut s = ScenarioConfig::default();
        s.world.episode_length = 30;
        s.planner.mode = crate::planner::PlannerMode::Heuristic;
        let a = rollout(&s, None, None, 70, 5).unwrap();
        let b = rollout(&s, None, None, 70, 5).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.curves.len(), 3);
        // one plan per episode
        assert_eq!(a.planner.unwrap().calls, 3);
    }
}
