use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{check_batch, state_rows, Action, Experience, LinearSchedule};
use crate::error::{Error, Result};
use crate::neural::{adam_step, hard_update, he_init, Activation, AdamConfig, AdamState, Batch, LayerSpec, Mode, ParameterSet};

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    /// Green seconds each chosen phase is shown before the next decision.
    pub a_repeat: u32,
    pub gamma: f64,
    /// Exploration rate over training episodes.
    pub epsilon: LinearSchedule,
    /// Updates between hard target copies.
    pub target_sync: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub replay_capacity: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            a_repeat: 10,
            gamma: 0.99,
            epsilon: LinearSchedule::new(1.0, 0.05, 100),
            target_sync: 1000,
            batch_size: 64,
            learning_rate: 1e-4,
            replay_capacity: 50_000,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a_repeat < 1 {
            return Err(Error::Config("a_repeat must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1)".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if self.target_sync < 1 || self.replay_capacity < 1 {
            return Err(Error::Config("target sync and replay capacity must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.epsilon.validate(0.0, 1.0, "epsilon")
    }
}

/// Online and target Q networks for one intersection.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: ParameterSet,
    pub target: ParameterSet,
    pub cfg: DqnConfig,
    adam: AdamState,
    updates: u64,
}

/// `state -> 3w ELU -> 3w ELU -> |P| linear`.
pub fn q_network_specs(state_width: usize, num_phases: usize) -> Vec<LayerSpec> {
    let h = 3 * state_width;
    vec![
        LayerSpec::new(h, Activation::Elu),
        LayerSpec::new(h, Activation::Elu),
        LayerSpec::new(num_phases, Activation::Linear),
    ]
}

/// Index of the largest value, lowest index on ties.
pub fn greedy_phase(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy phase choice from the policy network.
pub fn dqn_act<R: Rng + ?Sized>(policy: &ParameterSet, state: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    let n = policy.output_width();
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..n));
    }
    Ok(greedy_phase(&policy.predict(state)?))
}

impl DqnAgent {
    pub fn build(state_width: usize, num_phases: usize, cfg: DqnConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if num_phases == 0 {
            return Err(Error::Shape("at least one phase".into()));
        }
        let online = he_init(&q_network_specs(state_width, num_phases), state_width, seed)?;
        let target = online.clone();
        Self::from_parts(online, target, cfg, 0)
    }

    pub fn from_parts(online: ParameterSet, target: ParameterSet, cfg: DqnConfig, updates: u64) -> Result<Self> {
        if !online.same_shape(&target) {
            return Err(Error::Shape("online and target Q networks differ".into()));
        }
        let adam = AdamState::new(&online, AdamConfig::new(cfg.learning_rate));
        Ok(DqnAgent { online, target, cfg, adam, updates })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn num_phases(&self) -> usize {
        self.online.output_width()
    }

    /// Bootstrapped targets; reads only the target network.
    pub fn targets(&self, batch: &[&Experience]) -> Result<Vec<f64>> {
        let (q_next, _) = self.target.forward(&state_rows(batch, true), Mode::Infer)?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, e)| {
                if e.terminal {
                    e.reward
                } else {
                    let row = q_next.row(i);
                    e.reward + self.cfg.gamma * row[greedy_phase(row)]
                }
            })
            .collect())
    }

    /// Mean squared TD error at the taken actions and its gradient w.r.t. the online parameters.
    pub fn loss_and_gradient(&self, batch: &[&Experience]) -> Result<(f64, Vec<f64>)> {
        check_batch(batch, 2)?;
        let y = self.targets(batch)?;
        let (q, cache) = self.online.forward(&state_rows(batch, false), Mode::Train)?;
        let n = batch.len() as f64;
        let mut grad = Batch::zeros(batch.len(), q.cols());
        let mut loss = 0.0;
        for (i, e) in batch.iter().enumerate() {
            let a = match e.action {
                Action::Phase(a) if a < q.cols() => a,
                _ => return Err(Error::Config("DQN experience needs a valid phase action".into())),
            };
            let err = q.get(i, a) - y[i];
            loss += err * err / n;
            grad.set(i, a, 2.0 * err / n);
        }
        let (g, _) = self.online.backward(&cache, &grad)?;
        Ok((loss, g))
    }

    /// One Adam step on the online network; copies it into the target every `target_sync` updates.
    pub fn train_batch(&mut self, batch: &[&Experience]) -> Result<f64> {
        let (loss, g) = self.loss_and_gradient(batch)?;
        adam_step(&mut self.online, &g, &mut self.adam)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.cfg.target_sync) {
            hard_update(&mut self.target, &self.online)?;
        }
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::TrafficState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(w: usize, v: f64, all_red: bool) -> TrafficState {
        let mut one_hot = vec![false; 3];
        one_hot[if all_red { 2 } else { 0 }] = true;
        TrafficState { densities: vec![v; w], queues: vec![v / 2.0; w], phase_one_hot: one_hot }
    }

    fn exp(a: usize, r: f64, terminal: bool, v: f64) -> Experience {
        Experience {
            state: state(4, v, false),
            action: Action::Phase(a),
            reward: r,
            next_state: state(4, if terminal { 0.0 } else { v + 0.1 }, terminal),
            terminal,
            intersection: 0,
        }
    }

    #[test]
    fn build_shapes() {
        let a = DqnAgent::build(11, 2, DqnConfig::default(), 1).unwrap();
        assert_eq!(a.online.specs()[0].width, 33);
        assert_eq!(a.online.specs()[1].width, 33);
        assert_eq!(a.online.output_width(), 2);
        let x = [0.3; 11];
        assert_eq!(a.online.predict(&x).unwrap(), a.target.predict(&x).unwrap());
        let b = DqnAgent::build(11, 2, DqnConfig::default(), 1).unwrap();
        assert_eq!(a.online, b.online);
    }

    #[test]
    fn greedy_and_uniform_acting() {
        assert_eq!(greedy_phase(&[0.1, 0.9]), 1);
        assert_eq!(greedy_phase(&[0.5, 0.5]), 0);
        let a = DqnAgent::build(11, 2, DqnConfig::default(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0u32; 2];
        for _ in 0..10_000 {
            counts[dqn_act(&a.online, &[0.0; 11], 1.0, &mut rng).unwrap()] += 1;
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 5000.0).powi(2) / 5000.0).sum();
        assert!(chi2 < 6.63, "chi2 {chi2}");
    }

    #[test]
    fn target_values() {
        let mut a = DqnAgent::build(11, 2, DqnConfig::default(), 1).unwrap();
        // target outputs [1, 2] everywhere
        a.target = ParameterSet::zeros(11, &q_network_specs(11, 2)).unwrap();
        a.target.bias_mut(2).copy_from_slice(&[1.0, 2.0]);
        let t = exp(0, -0.5, true, 0.4);
        let nt = exp(0, -0.5, false, 0.4);
        let y = a.targets(&[&t, &nt]).unwrap();
        assert_eq!(y[0], -0.5);
        assert!((y[1] - 1.48).abs() < 1e-12);
    }

    #[test]
    fn targets_ignore_online_parameters() {
        let a = DqnAgent::build(11, 2, DqnConfig::default(), 3).unwrap();
        let batch = [exp(0, -0.2, false, 0.2), exp(1, -0.7, false, 0.6)];
        let refs: Vec<&Experience> = batch.iter().collect();
        let before = a.targets(&refs).unwrap();
        let mut b = a.clone();
        b.online.params.iter_mut().for_each(|p| *p = 17.0);
        assert_eq!(b.targets(&refs).unwrap(), before);
    }

    #[test]
    fn gradient_only_through_taken_action() {
        let a = DqnAgent::build(11, 2, DqnConfig::default(), 3).unwrap();
        let batch = [exp(1, -0.2, false, 0.2), exp(1, -0.7, true, 0.6)];
        let refs: Vec<&Experience> = batch.iter().collect();
        let (_, g) = a.loss_and_gradient(&refs).unwrap();
        let specs = a.online.specs();
        let h = specs[1].width;
        // output layer weights/bias for phase 0 untouched
        let out_w_start = g.len() - (h * 2 + 2);
        assert!(g[out_w_start..out_w_start + h].iter().all(|&x| x == 0.0));
        assert_eq!(g[g.len() - 2], 0.0);
        assert_ne!(g[g.len() - 1], 0.0);
    }

    #[test]
    fn fixed_point_has_zero_loss() {
        let mut a = DqnAgent::build(11, 2, DqnConfig::default(), 3).unwrap();
        a.online = ParameterSet::zeros(11, &q_network_specs(11, 2)).unwrap();
        a.target = a.online.clone();
        let batch = [exp(0, 0.0, true, 0.2), exp(1, 0.0, false, 0.6)];
        let refs: Vec<&Experience> = batch.iter().collect();
        let (loss, g) = a.loss_and_gradient(&refs).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
        assert!(matches!(a.train_batch(&refs[..1]), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn hard_sync_every_interval() {
        let cfg = DqnConfig { target_sync: 3, learning_rate: 1e-2, ..DqnConfig::default() };
        let mut a = DqnAgent::build(11, 2, cfg, 3).unwrap();
        let batch = [exp(0, -0.3, false, 0.2), exp(1, -0.9, false, 0.6)];
        let refs: Vec<&Experience> = batch.iter().collect();
        let init = a.target.params.clone();
        a.train_batch(&refs).unwrap();
        a.train_batch(&refs).unwrap();
        assert_eq!(a.target.params, init);
        a.train_batch(&refs).unwrap();
        assert_eq!(a.target.params, a.online.params);
        assert_eq!(a.online.version(), 3);
    }
}
