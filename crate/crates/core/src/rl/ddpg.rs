use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{check_batch, state_rows, Action, Experience, LinearSchedule};
use crate::error::{Error, Result};
use crate::neural::{
    adam_step, he_init, soft_update, Activation, AdamConfig, AdamState, Batch, Cache, LayerSpec, Mode, ParameterSet,
};

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgConfig {
    pub g_min: u32,
    pub g_max: u32,
    pub gamma: f64,
    pub tau: f64,
    /// Std of the Gaussian added to the actor output, over training episodes.
    pub sigma: LinearSchedule,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub replay_capacity: usize,
    /// L2 strength on every critic weight matrix.
    pub critic_l2: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            g_min: 5,
            g_max: 45,
            gamma: 0.99,
            tau: 0.005,
            sigma: LinearSchedule::new(0.5, 0.05, 100),
            batch_size: 64,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            replay_capacity: 50_000,
            critic_l2: 0.01,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.g_min < 1 || self.g_min > self.g_max {
            return Err(Error::Config("need 1 <= g_min <= g_max".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1)".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config("tau must lie in (0, 1]".into()));
        }
        if self.batch_size < 2 || self.replay_capacity < 1 {
            return Err(Error::Config("batch size must be at least 2 and replay capacity positive".into()));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) || !(self.critic_l2 >= 0.0) {
            return Err(Error::Config("learning rates must be positive and L2 non-negative".into()));
        }
        self.sigma.validate(0.0, f64::MAX, "sigma")
    }
}

/// `state -> 3w (BN, ELU) -> 3w (BN, ELU) -> 1 tanh`.
pub fn actor_specs(state_width: usize) -> Vec<LayerSpec> {
    let h = 3 * state_width;
    vec![
        LayerSpec::new(h, Activation::Elu).with_batch_norm(),
        LayerSpec::new(h, Activation::Elu).with_batch_norm(),
        LayerSpec::new(1, Activation::Tanh),
    ]
}

/// `[state, action] -> 3(w+1) (BN, ELU) -> 3(w+1) (BN, ELU) -> 1 linear`, L2 on all weights.
pub fn critic_specs(state_width: usize, l2: f64) -> Vec<LayerSpec> {
    let h = 3 * (state_width + 1);
    vec![
        LayerSpec::new(h, Activation::Elu).with_batch_norm().with_l2(l2),
        LayerSpec::new(h, Activation::Elu).with_batch_norm().with_l2(l2),
        LayerSpec::new(1, Activation::Linear).with_l2(l2),
    ]
}

/// Maps a normalized action to whole seconds, halves rounded up.
pub fn ddpg_duration(raw: f64, g_min: u32, g_max: u32) -> u32 {
    let raw = raw.clamp(-1.0, 1.0);
    let x = g_min as f64 + (raw + 1.0) / 2.0 * (g_max - g_min) as f64;
    (libm::floor(x + 0.5) as u32).clamp(g_min, g_max)
}

/// Noisy actor output clamped to `[-1, 1]` and the duration it maps to.
pub fn ddpg_act<R: Rng + ?Sized>(
    policy: &ParameterSet,
    state: &[f64],
    sigma: f64,
    g_min: u32,
    g_max: u32,
    rng: &mut R,
) -> Result<(f64, u32)> {
    let mut raw = policy.predict(state)?[0];
    if sigma > 0.0 {
        raw += Normal::new(0.0, sigma).map_err(|_| Error::Config("invalid sigma".into()))?.sample(rng);
    }
    let raw = raw.clamp(-1.0, 1.0);
    Ok((raw, ddpg_duration(raw, g_min, g_max)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdpgLosses {
    /// MSE plus the L2 penalty.
    pub critic: f64,
    /// `-mean Q(s, π(s))`.
    pub actor: f64,
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub actor: ParameterSet,
    pub critic: ParameterSet,
    pub actor_target: ParameterSet,
    pub critic_target: ParameterSet,
    pub cfg: DdpgConfig,
    actor_adam: AdamState,
    critic_adam: AdamState,
    updates: u64,
}

fn action_column(batch: &[&Experience]) -> Result<Batch> {
    let mut a = Vec::with_capacity(batch.len());
    for e in batch {
        match e.action {
            Action::Duration(x) if (-1.0..=1.0).contains(&x) => a.push(x),
            _ => return Err(Error::Config("DDPG experience needs a normalized duration action".into())),
        }
    }
    Batch::from_vec(batch.len(), 1, a)
}

impl DdpgAgent {
    pub fn build(state_width: usize, cfg: DdpgConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let actor = he_init(&actor_specs(state_width), state_width, seed)?;
        let critic = he_init(&critic_specs(state_width, cfg.critic_l2), state_width + 1, seed ^ 0x9e37_79b9_7f4a_7c15)?;
        let (at, ct) = (actor.clone(), critic.clone());
        Self::from_parts(actor, critic, at, ct, cfg, 0)
    }

    pub fn from_parts(
        actor: ParameterSet,
        critic: ParameterSet,
        actor_target: ParameterSet,
        critic_target: ParameterSet,
        cfg: DdpgConfig,
        updates: u64,
    ) -> Result<Self> {
        if !actor.same_shape(&actor_target) || !critic.same_shape(&critic_target) {
            return Err(Error::Shape("online and target networks differ".into()));
        }
        if critic.input_width() != actor.input_width() + 1 || actor.output_width() != 1 || critic.output_width() != 1 {
            return Err(Error::Shape("critic must take [state, action]".into()));
        }
        let actor_adam = AdamState::new(&actor, AdamConfig::new(cfg.actor_lr));
        let critic_adam = AdamState::new(&critic, AdamConfig::new(cfg.critic_lr));
        Ok(DdpgAgent { actor, critic, actor_target, critic_target, cfg, actor_adam, critic_adam, updates })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn state_width(&self) -> usize {
        self.actor.input_width()
    }

    /// Critic targets from the two target networks (running statistics).
    pub fn targets(&self, batch: &[&Experience]) -> Result<Vec<f64>> {
        let next = state_rows(batch, true);
        let (a_next, _) = self.actor_target.forward(&next, Mode::Infer)?;
        let (q_next, _) = self.critic_target.forward(&next.hcat(&a_next)?, Mode::Infer)?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, e)| if e.terminal { e.reward } else { e.reward + self.cfg.gamma * q_next.get(i, 0) })
            .collect())
    }

    /// Critic loss (MSE plus L2) and its gradient w.r.t. the critic parameters.
    pub fn critic_loss_and_gradient(&self, batch: &[&Experience]) -> Result<(f64, Vec<f64>, Cache)> {
        check_batch(batch, 2)?;
        let y = self.targets(batch)?;
        let input = state_rows(batch, false).hcat(&action_column(batch)?)?;
        let (q, cache) = self.critic.forward(&input, Mode::Train)?;
        let n = batch.len() as f64;
        let mut grad = Batch::zeros(batch.len(), 1);
        let mut loss = 0.0;
        for (i, &target) in y.iter().enumerate() {
            let err = q.get(i, 0) - target;
            loss += err * err / n;
            grad.set(i, 0, 2.0 * err / n);
        }
        let (g, _) = self.critic.backward(&cache, &grad)?;
        Ok((loss + self.critic.l2_penalty(), g, cache))
    }

    /// Actor loss `-mean Q(s, π(s))` and its gradient w.r.t. the actor parameters.
    ///
    /// The critic runs on its running statistics here. With batch statistics
    /// its first batch-norm layer subtracts the batch-mean action, so Q would
    /// ignore a shift shared by all actions and the actor could not learn the
    /// overall duration level.
    pub fn actor_loss_and_gradient(&self, batch: &[&Experience]) -> Result<(f64, Vec<f64>, Cache)> {
        check_batch(batch, 2)?;
        let states = state_rows(batch, false);
        let (a, actor_cache) = self.actor.forward(&states, Mode::Train)?;
        let (q, critic_cache) = self.critic.forward(&states.hcat(&a)?, Mode::Infer)?;
        let n = batch.len();
        let loss = -q.as_slice().iter().sum::<f64>() / n as f64;
        let upstream = Batch::from_vec(n, 1, vec![-1.0 / n as f64; n])?;
        let (_, d_input) = self.critic.backward(&critic_cache, &upstream)?;
        let d_action = Batch::from_vec(n, 1, d_input.column(self.state_width()))?;
        let (g, _) = self.actor.backward(&actor_cache, &d_action)?;
        Ok((loss, g, actor_cache))
    }

    /// Critic step, actor step against the updated critic, then soft target updates.
    pub fn train_batch(&mut self, batch: &[&Experience]) -> Result<DdpgLosses> {
        let (critic, g, cache) = self.critic_loss_and_gradient(batch)?;
        self.critic.commit_stats(&cache)?;
        adam_step(&mut self.critic, &g, &mut self.critic_adam)?;
        let (actor, g, cache) = self.actor_loss_and_gradient(batch)?;
        self.actor.commit_stats(&cache)?;
        adam_step(&mut self.actor, &g, &mut self.actor_adam)?;
        soft_update(&mut self.critic_target, &self.critic, self.cfg.tau)?;
        soft_update(&mut self.actor_target, &self.actor, self.cfg.tau)?;
        self.updates += 1;
        Ok(DdpgLosses { critic, actor })
    }
}
