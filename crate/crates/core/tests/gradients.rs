//! Analytic loss gradients of both agents against central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsc_core::neural::ParameterSet;
use tsc_core::rl::{Action, DdpgAgent, DdpgConfig, DqnAgent, DqnConfig, Experience};
use tsc_core::signal::TrafficState;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const DRAWS: usize = 100;
/// Below this magnitude differences are compared absolutely; central
/// differences at `H` carry about 1e-10 of rounding noise.
const FLOOR: f64 = 1e-5;

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(FLOOR))
        .fold(0.0, f64::max)
}

fn random_state(rng: &mut ChaCha8Rng, lanes: usize, phases: usize, all_red: bool) -> TrafficState {
    let mut one_hot = vec![false; phases + 1];
    one_hot[if all_red { phases } else { rng.random_range(0..phases) }] = true;
    TrafficState {
        densities: (0..lanes).map(|_| rng.random::<f64>()).collect(),
        queues: (0..lanes).map(|_| rng.random::<f64>()).collect(),
        phase_one_hot: one_hot,
    }
}

fn random_batch(
    rng: &mut ChaCha8Rng,
    sizes: std::ops::RangeInclusive<usize>,
    lanes: usize,
    phases: usize,
    action: impl Fn(&mut ChaCha8Rng) -> Action,
) -> Vec<Experience> {
    let n = rng.random_range(sizes);
    (0..n)
        .map(|_| {
            let terminal = rng.random_bool(0.25);
            Experience {
                state: random_state(rng, lanes, phases, false),
                action: action(rng),
                reward: -rng.random::<f64>(),
                next_state: random_state(rng, lanes, phases, terminal),
                terminal,
                intersection: 0,
            }
        })
        .collect()
}

/// Moves every parameter off its initial value so biases and batch-norm
/// affine terms take part.
fn jitter(ps: &mut ParameterSet, rng: &mut ChaCha8Rng) {
    for p in ps.params.iter_mut() {
        *p += 0.3 * (rng.random::<f64>() - 0.5);
    }
}

fn central_difference(ps: &mut ParameterSet, mut loss: impl FnMut(&ParameterSet) -> f64) -> Vec<f64> {
    (0..ps.params.len())
        .map(|k| {
            let x = ps.params[k];
            ps.params[k] = x + H;
            let up = loss(ps);
            ps.params[k] = x - H;
            let down = loss(ps);
            ps.params[k] = x;
            (up - down) / (2.0 * H)
        })
        .collect()
}

#[test]
fn dqn_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut worst: f64 = 0.0;
    for draw in 0..DRAWS {
        // state width 2L + P + 1 with hidden 3x that, all at most 16
        let phases = rng.random_range(1..=2);
        let lanes = 1;
        let width = 2 * lanes + phases + 1;
        let cfg = DqnConfig { gamma: rng.random_range(0.0..0.99), ..DqnConfig::default() };
        let mut agent = DqnAgent::build(width, phases, cfg, draw as u64).unwrap();
        jitter(&mut agent.online, &mut rng);
        jitter(&mut agent.target, &mut rng);
        let batch = random_batch(&mut rng, 2..=6, lanes, phases, |r| Action::Phase(r.random_range(0..phases)));
        let refs: Vec<&Experience> = batch.iter().collect();
        let (_, analytic) = agent.loss_and_gradient(&refs).unwrap();
        let mut probe = agent.clone();
        let mut online = probe.online.clone();
        let numeric = central_difference(&mut online, |ps| {
            probe.online = ps.clone();
            probe.loss_and_gradient(&refs).unwrap().0
        });
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    println!("dqn worst relative error {worst:.3e}");
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

fn ddpg_agent(rng: &mut ChaCha8Rng, draw: usize) -> (DdpgAgent, Vec<Experience>) {
    // state width 4, actor hidden 12, critic hidden 15
    let (lanes, phases) = (1, 1);
    let width = 2 * lanes + phases + 1;
    let cfg = DdpgConfig {
        gamma: rng.random_range(0.0..0.99),
        critic_l2: if draw.is_multiple_of(3) { 0.0 } else { rng.random_range(0.0..0.05) },
        ..DdpgConfig::default()
    };
    let mut agent = DdpgAgent::build(width, cfg, 1000 + draw as u64).unwrap();
    for ps in [&mut agent.actor, &mut agent.critic, &mut agent.actor_target, &mut agent.critic_target] {
        jitter(ps, rng);
    }
    // Batch norm over two nearly equal rows bends the loss on a sqrt(eps)
    // scale, where central differences at `H` lose accuracy; training
    // batches are far larger.
    let batch = random_batch(rng, 4..=16, lanes, phases, |r| Action::Duration(r.random_range(-1.0..=1.0)));
    (agent, batch)
}

#[test]
fn ddpg_critic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let mut worst: f64 = 0.0;
    for draw in 0..DRAWS {
        let (agent, batch) = ddpg_agent(&mut rng, draw);
        let refs: Vec<&Experience> = batch.iter().collect();
        let (_, analytic, _) = agent.critic_loss_and_gradient(&refs).unwrap();
        let mut probe = agent.clone();
        let mut critic = agent.critic.clone();
        let numeric = central_difference(&mut critic, |ps| {
            probe.critic = ps.clone();
            probe.critic_loss_and_gradient(&refs).unwrap().0
        });
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    println!("ddpg critic worst relative error {worst:.3e}");
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn ddpg_actor_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let mut worst: f64 = 0.0;
    for draw in 0..DRAWS {
        let (agent, batch) = ddpg_agent(&mut rng, draw);
        let refs: Vec<&Experience> = batch.iter().collect();
        let (_, analytic, _) = agent.actor_loss_and_gradient(&refs).unwrap();
        let mut probe = agent.clone();
        let mut actor = agent.actor.clone();
        let numeric = central_difference(&mut actor, |ps| {
            probe.actor = ps.clone();
            probe.actor_loss_and_gradient(&refs).unwrap().0
        });
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    println!("ddpg actor worst relative error {worst:.3e}");
    assert!(worst <= TOL, "worst relative error {worst:e}");
}
