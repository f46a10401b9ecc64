use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ddpg_act, dqn_act, Action, Experience};
use crate::error::Result;
use crate::neural::ParameterSet;
use crate::signal::{
    cycle_next_phase, intersection_occupied, observe, raw_reward, Controller, Decision, DecisionContext,
    RewardNormalizer, TrafficState,
};
use crate::sim::Indication;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Acyclic phase choice, each shown for `a_repeat` green seconds.
    Dqn { a_repeat: u32 },
    /// Cycle order skipping empty phases; the policy picks the green duration.
    Ddpg { g_min: u32, g_max: u32 },
}

/// Acts for one intersection with a read-only policy snapshot and records
/// decision-to-decision transitions.
#[derive(Debug, Clone)]
pub struct AgentController {
    intersection: usize,
    kind: PolicyKind,
    policy: Arc<ParameterSet>,
    exploration: f64,
    rng: ChaCha8Rng,
    normalizer: RewardNormalizer,
    learning: bool,
    pending: Option<(TrafficState, Action)>,
    out: Vec<Experience>,
    decisions: u64,
}

impl AgentController {
    pub fn new(intersection: usize, kind: PolicyKind, policy: Arc<ParameterSet>, seed: u64) -> Self {
        AgentController {
            intersection,
            kind,
            policy,
            exploration: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            normalizer: RewardNormalizer::default(),
            learning: false,
            pending: None,
            out: Vec::new(),
            decisions: 0,
        }
    }

    /// Collect experiences and adapt the reward scale.
    pub fn with_learning(mut self, learning: bool) -> Self {
        self.learning = learning;
        self
    }

    pub fn with_normalizer(mut self, normalizer: RewardNormalizer) -> Self {
        self.normalizer = normalizer;
        self
    }

    /// ε for DQN, σ for DDPG.
    pub fn set_exploration(&mut self, value: f64) {
        self.exploration = value.max(0.0);
    }

    pub fn exploration(&self) -> f64 {
        self.exploration
    }

    pub fn normalizer(&self) -> RewardNormalizer {
        self.normalizer
    }

    pub fn policy_version(&self) -> u64 {
        self.policy.version()
    }

    pub fn decisions(&self) -> u64 {
        self.decisions
    }

    /// Replaces the policy if `policy` is newer; returns whether it was applied.
    pub fn install(&mut self, policy: Arc<ParameterSet>) -> bool {
        if policy.version() > self.policy.version() {
            self.policy = policy;
            true
        } else {
            false
        }
    }

    fn emit(&mut self, next_state: TrafficState, reward: f64, terminal: bool) {
        if let Some((state, action)) = self.pending.take() {
            if self.learning {
                self.out.push(Experience {
                    state,
                    action,
                    reward,
                    next_state,
                    terminal,
                    intersection: self.intersection,
                });
            }
        }
    }
}

impl Controller for AgentController {
    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<Decision> {
        let signal = ctx.signal;
        if signal.current_green().is_some() && !signal.green_expired() {
            return Ok(Decision::Hold);
        }
        let occupied = intersection_occupied(ctx.sim, ctx.intersection);
        if !occupied && self.pending.is_none() && signal.current_green().is_none() {
            return Ok(Decision::Hold);
        }
        let raw = raw_reward(ctx.sim, ctx.intersection)?;
        let reward = if self.learning { self.normalizer.normalize(raw) } else { self.normalizer.apply(raw) };
        if !occupied {
            let rest = observe(ctx.sim, ctx.intersection, Indication::AllRed)?;
            self.emit(rest, reward, true);
            return Ok(Decision::AllRed);
        }
        let state = ctx.observe()?;
        self.emit(state.clone(), reward, false);
        let x = state.to_vec();
        self.decisions += 1;
        let (decision, action) = match self.kind {
            PolicyKind::Dqn { a_repeat } => {
                let phase = dqn_act(&self.policy, &x, self.exploration, &mut self.rng)?;
                (Decision::PhaseDuration { phase, seconds: a_repeat }, Action::Phase(phase))
            }
            PolicyKind::Ddpg { g_min, g_max } => {
                let phase = cycle_next_phase(ctx.sim, ctx.intersection, signal.last_green()).unwrap_or(0);
                let (raw, seconds) = ddpg_act(&self.policy, &x, self.exploration, g_min, g_max, &mut self.rng)?;
                (Decision::PhaseDuration { phase, seconds }, Action::Duration(raw))
            }
        };
        self.pending = Some((state, action));
        Ok(decision)
    }

    fn end_episode(&mut self) {
        self.pending = None;
    }

    fn drain_experiences(&mut self, out: &mut Vec<Experience>) {
        out.append(&mut self.out);
    }

    fn duration_bounds(&self) -> Option<(u32, u32)> {
        match self.kind {
            PolicyKind::Dqn { .. } => None,
            PolicyKind::Ddpg { g_min, g_max } => Some((g_min, g_max)),
        }
    }
}
