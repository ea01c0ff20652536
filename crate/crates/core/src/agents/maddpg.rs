//! Multi-agent deep deterministic policy gradient with one centralized
//! critic per agent: each critic scores the global state and the joint
//! action, each actor sees only the state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::nn::{Adam, Mlp, OutputActivation};
use crate::error::{Error, Result};
use crate::game::{TransitionRecord, ALLY_ACTION_DIM, JOINT_ACTION_DIM, MAX_ACTION, OPPONENT_ACTION_DIM, STATE_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaddpgConfig {
    pub gamma: f64,
    pub total_steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    /// Exploration noise decays linearly from `sigma_start` to `sigma_end`.
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub tau: f64,
    pub hidden: Vec<usize>,
    /// Transitions collected before the first update.
    pub warmup: usize,
    /// Learned agents act uniformly at random during warmup.
    pub random_warmup: bool,
    /// Rewards are multiplied by this before entering the critic targets.
    pub reward_scale: f64,
    /// Rollout threads; more than one trades bit-determinism for throughput.
    pub workers: usize,
}

impl Default for MaddpgConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            total_steps: 100_000,
            batch_size: 32,
            learning_rate: 0.001,
            buffer_capacity: 1_000_000,
            sigma_start: 0.1,
            sigma_end: 0.01,
            tau: 0.005,
            hidden: vec![64, 64],
            warmup: 1000,
            random_warmup: true,
            reward_scale: 0.01,
            workers: 1,
        }
    }
}

impl MaddpgConfig {
    pub fn validate(&self) -> Result<()> {
        let f = |name: &str| format!("agents.maddpg.{name}");
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(f("gamma"), "must lie in (0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config(f("batch_size"), "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config(f("learning_rate"), "must be non-negative"));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::config(f("buffer_capacity"), "must hold at least one batch"));
        }
        if !(self.sigma_start >= 0.0 && self.sigma_end >= 0.0) {
            return Err(Error::config(f("sigma_start"), "noise scales must be non-negative"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(f("tau"), "must lie in (0, 1]"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config(f("hidden"), "needs at least one non-empty layer"));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(Error::config(f("reward_scale"), "must be positive"));
        }
        if self.workers == 0 {
            return Err(Error::config(f("workers"), "must be at least 1"));
        }
        Ok(())
    }

    /// Noise scale after `fraction` of training.
    pub fn sigma_at(&self, fraction: f64) -> f64 {
        let u = fraction.clamp(0.0, 1.0);
        self.sigma_start + (self.sigma_end - self.sigma_start) * u
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Ally,
    Opponent,
}

impl Side {
    pub fn action_dim(self) -> usize {
        match self {
            Side::Ally => ALLY_ACTION_DIM,
            Side::Opponent => OPPONENT_ACTION_DIM,
        }
    }

    /// Offset of this side's action inside the critic input.
    pub fn critic_offset(self) -> usize {
        match self {
            Side::Ally => STATE_DIM,
            Side::Opponent => STATE_DIM + ALLY_ACTION_DIM,
        }
    }
}

pub const CRITIC_INPUT_DIM: usize = STATE_DIM + JOINT_ACTION_DIM;

/// Critic input `[s, a_ally/5, a_opponent/5]`; actions enter at unit scale.
pub fn critic_input(s: &[f64], a_ally: &[f64], a_opp: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(CRITIC_INPUT_DIM);
    v.extend_from_slice(s);
    v.extend(a_ally.iter().map(|a| a / MAX_ACTION));
    v.extend(a_opp.iter().map(|a| a / MAX_ACTION));
    v
}

/// `π(s) + ε`, `ε ~ N(0, σ²)` per component, clipped to `[-5, 5]`.
pub fn act<R: Rng + ?Sized>(policy: &Mlp, state: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    if state.len() != policy.input_dim() {
        return Err(Error::Encoding { expected: policy.input_dim(), got: state.len() });
    }
    let mut a = policy.forward(state);
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
        for v in a.iter_mut() {
            *v += noise.sample(rng);
        }
    }
    for v in a.iter_mut() {
        *v = if v.is_nan() { 0.0 } else { v.clamp(-MAX_ACTION, MAX_ACTION) };
    }
    Ok(a)
}

/// Mean squared error of `critic(inputs)` against `targets` and its gradient.
pub fn critic_loss_and_grad(critic: &Mlp, inputs: &[Vec<f64>], targets: &[f64]) -> (f64, Vec<f64>) {
    let n = inputs.len() as f64;
    let mut grad = vec![0.0; critic.num_params()];
    let mut loss = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        let cache = critic.forward_cached(x);
        let err = cache.output()[0] - y;
        loss += err * err / n;
        critic.backward(&cache, &[2.0 * err / n], Some(&mut grad));
    }
    (loss, grad)
}

/// One Adam step on the critic's MSE; returns the pre-step loss.
pub fn critic_update(critic: &mut Mlp, opt: &mut Adam, inputs: &[Vec<f64>], targets: &[f64]) -> f64 {
    let (loss, grad) = critic_loss_and_grad(critic, inputs, targets);
    opt.step(critic.params_mut(), &grad);
    loss
}

/// Value of a critic and its gradient with respect to the critic input.
pub trait ActionCritic {
    fn value_and_input_grad(&self, input: &[f64]) -> (f64, Vec<f64>);
}

impl ActionCritic for Mlp {
    fn value_and_input_grad(&self, input: &[f64]) -> (f64, Vec<f64>) {
        let cache = self.forward_cached(input);
        let q = cache.output()[0];
        (q, self.backward(&cache, &[1.0], None))
    }
}

/// Builds the critic input for sample `i` around the actor's proposed action.
pub type InputAssembler<'a> = dyn Fn(usize, &[f64]) -> Vec<f64> + 'a;

/// Mean `Q(s, π(s), a_other)` over `states` and the gradient of `-mean Q`
/// with respect to the actor parameters. `offset` locates the actor's action
/// in the critic input and `input_scale` is `∂input/∂action`.
pub fn actor_objective_and_grad(
    actor: &Mlp,
    critic: &dyn ActionCritic,
    states: &[&[f64]],
    assemble: &InputAssembler<'_>,
    offset: usize,
    input_scale: f64,
) -> (f64, Vec<f64>) {
    let n = states.len() as f64;
    let dim = actor.output_dim();
    let mut grad = vec![0.0; actor.num_params()];
    let mut objective = 0.0;
    for (i, s) in states.iter().enumerate() {
        let cache = actor.forward_cached(s);
        let input = assemble(i, cache.output());
        let (q, dq) = critic.value_and_input_grad(&input);
        objective += q / n;
        let grad_out: Vec<f64> = dq[offset..offset + dim].iter().map(|g| -g * input_scale / n).collect();
        actor.backward(&cache, &grad_out, Some(&mut grad));
    }
    (objective, grad)
}

/// Actor, critic, their targets and optimizers for one agent.
#[derive(Clone, Debug)]
pub struct AgentNets {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl AgentNets {
    pub fn new<R: Rng + ?Sized>(side: Side, cfg: &MaddpgConfig, rng: &mut R) -> Self {
        let mut actor_sizes = vec![STATE_DIM];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(side.action_dim());
        let mut critic_sizes = vec![CRITIC_INPUT_DIM];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(&actor_sizes, OutputActivation::ScaledTanh(MAX_ACTION), rng);
        let critic = Mlp::new(&critic_sizes, OutputActivation::Linear, rng);
        Self::from_nets(actor, critic, cfg.learning_rate)
    }

    pub fn from_nets(actor: Mlp, critic: Mlp, lr: f64) -> Self {
        Self {
            actor_opt: Adam::new(actor.num_params(), lr),
            critic_opt: Adam::new(critic.num_params(), lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
        }
    }

    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        self.actor_target.soft_update_from(&self.actor, tau)?;
        self.critic_target.soft_update_from(&self.critic, tau)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

/// Both agents' networks. Agents that are not learned keep their networks
/// untouched; their logged actions stand in for target-policy actions.
#[derive(Clone, Debug)]
pub struct Maddpg {
    cfg: MaddpgConfig,
    pub ally: AgentNets,
    pub opponent: AgentNets,
    learn_ally: bool,
    learn_opponent: bool,
}

impl Maddpg {
    pub fn new(cfg: MaddpgConfig, learn_ally: bool, learn_opponent: bool, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ally = AgentNets::new(Side::Ally, &cfg, &mut rng);
        let opponent = AgentNets::new(Side::Opponent, &cfg, &mut rng);
        Ok(Self { cfg, ally, opponent, learn_ally, learn_opponent })
    }

    pub fn config(&self) -> &MaddpgConfig {
        &self.cfg
    }

    pub fn learns(&self, side: Side) -> bool {
        match side {
            Side::Ally => self.learn_ally,
            Side::Opponent => self.learn_opponent,
        }
    }

    pub fn nets(&self, side: Side) -> &AgentNets {
        match side {
            Side::Ally => &self.ally,
            Side::Opponent => &self.opponent,
        }
    }

    fn nets_mut(&mut self, side: Side) -> &mut AgentNets {
        match side {
            Side::Ally => &mut self.ally,
            Side::Opponent => &mut self.opponent,
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, side: Side, state: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
        act(&self.nets(side).actor, state, sigma, rng)
    }

    /// Next joint action from the target policies of learned agents; logged
    /// actions are used for agents that are not learned.
    fn target_next_actions(&self, t: &TransitionRecord) -> (Vec<f64>, Vec<f64>) {
        let a = if self.learn_ally { self.ally.actor_target.forward(&t.s_next) } else { t.a_ally.to_vec() };
        let o = if self.learn_opponent { self.opponent.actor_target.forward(&t.s_next) } else { t.a_opponent.to_vec() };
        (a, o)
    }

    /// Critic step, actor step and target blending for one learned agent.
    pub fn update_agent(&mut self, side: Side, batch: &[&TransitionRecord]) -> Result<UpdateStats> {
        let gamma = self.cfg.gamma;
        let scale = self.cfg.reward_scale;
        let tau = self.cfg.tau;
        let mut inputs = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for t in batch {
            let (na, no) = self.target_next_actions(t);
            let q_next = self.nets(side).critic_target.forward(&critic_input(&t.s_next, &na, &no))[0];
            let r = match side {
                Side::Ally => t.r_ally,
                Side::Opponent => t.r_opponent,
            };
            targets.push(r * scale + gamma * q_next);
            inputs.push(critic_input(&t.s, &t.a_ally, &t.a_opponent));
        }
        let nets = self.nets_mut(side);
        let critic_loss = critic_update(&mut nets.critic, &mut nets.critic_opt, &inputs, &targets);

        let states: Vec<&[f64]> = batch.iter().map(|t| &t.s[..]).collect();
        let assemble = |i: usize, a: &[f64]| match side {
            Side::Ally => critic_input(&batch[i].s, a, &batch[i].a_opponent),
            Side::Opponent => critic_input(&batch[i].s, &batch[i].a_ally, a),
        };
        let (actor_objective, grad) = actor_objective_and_grad(
            &nets.actor,
            &nets.critic,
            &states,
            &assemble,
            side.critic_offset(),
            1.0 / MAX_ACTION,
        );
        nets.actor_opt.step(nets.actor.params_mut(), &grad);
        nets.soft_update(tau)?;
        Ok(UpdateStats { critic_loss, actor_objective })
    }

    /// Updates every learned agent on the same batch.
    pub fn update(&mut self, batch: &[&TransitionRecord]) -> Result<Vec<(Side, UpdateStats)>> {
        let mut out = Vec::new();
        for side in [Side::Ally, Side::Opponent] {
            if self.learns(side) {
                out.push((side, self.update_agent(side, batch)?));
            }
        }
        Ok(out)
    }

    /// All eight networks in checkpoint order.
    pub fn networks(&self) -> [&Mlp; 8] {
        [
            &self.ally.actor,
            &self.ally.critic,
            &self.ally.actor_target,
            &self.ally.critic_target,
            &self.opponent.actor,
            &self.opponent.critic,
            &self.opponent.actor_target,
            &self.opponent.critic_target,
        ]
    }

    /// Rebuilds from checkpointed networks; optimizer state starts fresh.
    pub fn from_networks(
        cfg: MaddpgConfig,
        nets: Vec<Mlp>,
        learn_ally: bool,
        learn_opponent: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let reference = Self::new(cfg.clone(), learn_ally, learn_opponent, 0)?;
        if nets.len() != 8 {
            return Err(Error::Checkpoint(format!("expected 8 networks, found {}", nets.len())));
        }
        for (got, want) in nets.iter().zip(reference.networks()) {
            if got.sizes() != want.sizes() || got.output_activation() != want.output_activation() {
                return Err(Error::Layout(format!(
                    "checkpoint layout {:?} does not match configured {:?}",
                    got.sizes(),
                    want.sizes()
                )));
            }
        }
        let mut it = nets.into_iter();
        let mut take = || it.next().expect("length checked");
        let lr = cfg.learning_rate;
        let mut ally = AgentNets::from_nets(take(), take(), lr);
        ally.actor_target = take();
        ally.critic_target = take();
        let mut opponent = AgentNets::from_nets(take(), take(), lr);
        opponent.actor_target = take();
        opponent.critic_target = take();
        Ok(Self { cfg, ally, opponent, learn_ally, learn_opponent })
    }
}
