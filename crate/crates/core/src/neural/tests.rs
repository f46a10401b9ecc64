use super::*;
use rand::Rng;

fn mlp(hidden: &[usize], out: usize, out_act: Activation, bn: bool) -> Vec<LayerSpec> {
    let mut specs: Vec<LayerSpec> = hidden
        .iter()
        .map(|&w| {
            let s = LayerSpec::new(w, Activation::Elu);
            if bn {
                s.with_batch_norm()
            } else {
                s
            }
        })
        .collect();
    specs.push(LayerSpec::new(out, out_act));
    specs
}

#[test]
fn he_variance_matches_two_over_fan_in() {
    let specs = [LayerSpec::new(1000, Activation::Linear)];
    let ps = he_init(&specs, 100, 7).unwrap();
    let w = ps.weights(0);
    assert_eq!(w.len(), 100_000);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w.len() as f64;
    assert!((var - 0.02).abs() <= 0.05 * 0.02, "variance {var}");
    assert!(ps.bias(0).iter().all(|&b| b == 0.0));
}

#[test]
fn he_init_is_deterministic_and_sets_batch_norm_identity() {
    let specs = mlp(&[6, 6], 2, Activation::Linear, true);
    let a = he_init(&specs, 4, 11).unwrap();
    let b = he_init(&specs, 4, 11).unwrap();
    assert_eq!(a, b);
    let (m, v) = a.running_stats(0).unwrap();
    assert!(m.iter().all(|&x| x == 0.0));
    assert!(v.iter().all(|&x| x == 1.0));
    assert_ne!(a, he_init(&specs, 4, 12).unwrap());
}

#[test]
fn zero_network_outputs_zero() {
    let specs = mlp(&[5], 2, Activation::Linear, false);
    let ps = ParameterSet::zeros(3, &specs).unwrap();
    assert_eq!(ps.predict(&[1.0, -4.0, 9.0]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn identity_linear_layer() {
    let mut ps = ParameterSet::zeros(2, &[LayerSpec::new(2, Activation::Linear)]).unwrap();
    ps.weights_mut(0).copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(ps.predict(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
}

#[test]
fn elu_values_and_continuity() {
    assert!((elu(-1.0) - (-0.632_120_558_828_557_7)).abs() < 1e-12);
    assert_eq!(elu(2.5), 2.5);
    assert_eq!(elu(0.0), 0.0);
    let y = elu(-1e-12);
    assert!((Activation::Elu.derivative(-1e-12, y) - 1.0).abs() < 1e-11);
    assert_eq!(Activation::Elu.derivative(0.0, 0.0), 1.0);
}

#[test]
fn width_mismatch_is_an_error() {
    let ps = ParameterSet::zeros(3, &[LayerSpec::new(1, Activation::Linear)]).unwrap();
    assert!(matches!(ps.predict(&[1.0]), Err(Error::Shape(_))));
    assert!(ParameterSet::zeros(3, &[LayerSpec::new(0, Activation::Linear)]).is_err());
}

#[test]
fn scalar_chain_rule() {
    let mut ps = ParameterSet::zeros(1, &[LayerSpec::new(1, Activation::Linear)]).unwrap();
    ps.weights_mut(0)[0] = 0.7;
    let (_, cache) = ps.forward(&Batch::row_vector(&[3.0]), Mode::Train).unwrap();
    let (g, dx) = ps.backward(&cache, &Batch::row_vector(&[1.0])).unwrap();
    assert_eq!(g[0], 3.0);
    assert_eq!(g[1], 1.0);
    assert_eq!(dx.as_slice(), &[0.7]);
}

#[test]
fn zero_upstream_gives_only_l2_gradient() {
    let specs = [LayerSpec::new(4, Activation::Elu).with_l2(0.01), LayerSpec::new(1, Activation::Linear)];
    let ps = he_init(&specs, 3, 5).unwrap();
    let x = Batch::from_rows(&[[0.1, 0.2, 0.3], [0.4, -0.5, 0.6]]).unwrap();
    let (_, cache) = ps.forward(&x, Mode::Train).unwrap();
    let (g, _) = ps.backward(&cache, &Batch::zeros(2, 1)).unwrap();
    let w0 = ps.weights(0);
    for (k, &gk) in g.iter().enumerate() {
        if k < w0.len() {
            assert!((gk - 0.01 * w0[k]).abs() < 1e-15);
        } else {
            assert_eq!(gk, 0.0);
        }
    }
}

#[test]
fn stale_cache_rejected() {
    let specs = mlp(&[3], 1, Activation::Linear, false);
    let mut ps = he_init(&specs, 2, 1).unwrap();
    let (_, cache) = ps.forward(&Batch::row_vector(&[1.0, 1.0]), Mode::Train).unwrap();
    ps.bump_version();
    assert!(matches!(ps.backward(&cache, &Batch::row_vector(&[1.0])), Err(Error::StaleCache)));
}

#[test]
fn batch_norm_train_needs_two_samples() {
    let specs = mlp(&[3], 1, Activation::Tanh, true);
    let ps = he_init(&specs, 2, 1).unwrap();
    let r = ps.forward(&Batch::row_vector(&[1.0, 1.0]), Mode::Train);
    assert!(matches!(r, Err(Error::InsufficientSamples { needed: 2, have: 1 })));
    assert!(ps.predict(&[1.0, 1.0]).is_ok());
}

#[test]
fn train_forward_updates_only_running_stats() {
    let specs = mlp(&[3], 1, Activation::Tanh, true);
    let mut ps = he_init(&specs, 2, 3).unwrap();
    let before = ps.clone();
    let x = Batch::from_rows(&[[1.0, 2.0], [-1.0, 0.5], [0.3, 0.3]]).unwrap();
    let a = ps.predict(&[0.2, 0.1]).unwrap();
    assert_eq!(a, ps.predict(&[0.2, 0.1]).unwrap());
    assert_eq!(ps, before);
    ps.forward_train(&x).unwrap();
    assert_eq!(ps.params, before.params);
    assert_ne!(ps.stats, before.stats);
    assert!(ps.running_stats(0).unwrap().1.iter().all(|&v| v >= 0.0));
}

/// Loss `Σ c ⊙ f(x) + Σ λ/2 ‖W‖²` in train mode.
fn probe_loss(ps: &ParameterSet, x: &Batch, c: &Batch) -> f64 {
    let (out, _) = ps.forward(x, Mode::Train).unwrap();
    out.as_slice().iter().zip(c.as_slice()).map(|(o, w)| o * w).sum::<f64>() + ps.l2_penalty()
}

/// Elementwise relative error. Magnitudes below `GRAD_FLOOR` are compared
/// against the floor: central differences at h = 1e-5 carry about 1e-10 of
/// rounding noise, so smaller entries cannot be resolved.
pub(crate) const GRAD_FLOOR: f64 = 1e-5;

pub(crate) fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(GRAD_FLOOR))
        .fold(0.0, f64::max)
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let acts = [Activation::Elu, Activation::Tanh, Activation::Linear];
    let mut worst: f64 = 0.0;
    for draw in 0..120 {
        let input = rng.random_range(1..=6);
        let depth = rng.random_range(1..=3);
        let bn = draw % 2 == 1;
        let mut specs = Vec::new();
        for d in 0..depth {
            let width = rng.random_range(1..=8);
            let last = d + 1 == depth;
            let mut s = LayerSpec::new(width, acts[rng.random_range(0..3)]);
            if bn && !last {
                s = s.with_batch_norm();
            }
            if rng.random_bool(0.5) {
                s = s.with_l2(0.01);
            }
            specs.push(s);
        }
        let mut ps = he_init(&specs, input, draw).unwrap();
        for p in ps.params.iter_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let n = rng.random_range(2..=5);
        let x = Batch::from_vec(n, input, (0..n * input).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap();
        let out_w = ps.output_width();
        let c = Batch::from_vec(n, out_w, (0..n * out_w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (_, cache) = ps.forward(&x, Mode::Train).unwrap();
        let (g, dx) = ps.backward(&cache, &c).unwrap();
        let h = 1e-5;
        let mut num_g = vec![0.0; ps.params.len()];
        for (k, slot) in num_g.iter_mut().enumerate() {
            let orig = ps.params[k];
            ps.params[k] = orig + h;
            let up = probe_loss(&ps, &x, &c);
            ps.params[k] = orig - h;
            let down = probe_loss(&ps, &x, &c);
            ps.params[k] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        worst = worst.max(relative_error(&g, &num_g));
        let mut num_dx = vec![0.0; x.as_slice().len()];
        for (k, slot) in num_dx.iter_mut().enumerate() {
            let mut xp = x.clone();
            xp.as_mut_slice()[k] += h;
            let mut xm = x.clone();
            xm.as_mut_slice()[k] -= h;
            *slot = (probe_loss(&ps, &xp, &c) - probe_loss(&ps, &xm, &c)) / (2.0 * h);
        }
        worst = worst.max(relative_error(dx.as_slice(), &num_dx));
    }
    std::eprintln!("worst relative error {worst:e}");
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let specs = mlp(&[3], 1, Activation::Linear, false);
    let mut ps = he_init(&specs, 2, 9).unwrap();
    let before = ps.params.clone();
    let mut st = AdamState::new(&ps, AdamConfig::new(1e-3));
    adam_step(&mut ps, &vec![0.0; before.len()], &mut st).unwrap();
    assert_eq!(ps.params, before);
    assert_eq!(ps.version(), 1);
    assert_eq!(st.step_count(), 1);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut ps = ParameterSet::zeros(1, &[LayerSpec::new(1, Activation::Linear)]).unwrap();
    let mut st = AdamState::new(&ps, AdamConfig::new(0.001));
    adam_step(&mut ps, &[0.37, -5.0], &mut st).unwrap();
    assert!((ps.params[0] + 0.001).abs() < 1e-8);
    assert!((ps.params[1] - 0.001).abs() < 1e-8);
    assert!(adam_step(&mut ps, &[1.0], &mut st).is_err());
}

#[test]
fn adam_is_deterministic() {
    let specs = mlp(&[3], 1, Activation::Linear, false);
    let run = || {
        let mut ps = he_init(&specs, 2, 9).unwrap();
        let mut st = AdamState::new(&ps, AdamConfig::new(1e-2));
        let g: Vec<f64> = (0..ps.params.len()).map(|k| k as f64 * 0.1 - 0.4).collect();
        adam_step(&mut ps, &g, &mut st).unwrap();
        adam_step(&mut ps, &g, &mut st).unwrap();
        (ps, st)
    };
    assert_eq!(run(), run());
}

#[test]
fn soft_update_endpoints_and_scalar() {
    let specs = mlp(&[3], 1, Activation::Linear, true);
    let online = he_init(&specs, 2, 1).unwrap();
    let fresh = he_init(&specs, 2, 2).unwrap();
    let mut t = fresh.clone();
    soft_update(&mut t, &online, 0.0).unwrap();
    assert_eq!(t.params, fresh.params);
    soft_update(&mut t, &online, 1.0).unwrap();
    assert_eq!(t.params, online.params);
    assert_eq!(t.stats, online.stats);

    let spec = [LayerSpec::new(1, Activation::Linear)];
    let mut a = ParameterSet::zeros(1, &spec).unwrap();
    let mut b = ParameterSet::zeros(1, &spec).unwrap();
    b.params[0] = 1.0;
    soft_update(&mut a, &b, 0.01).unwrap();
    assert!((a.params[0] - 0.01).abs() < 1e-15);
    assert!(soft_update(&mut a, &b, 1.5).is_err());
    let other = ParameterSet::zeros(2, &spec).unwrap();
    assert!(soft_update(&mut a, &other, 0.5).is_err());
}

#[test]
fn soft_update_contracts_geometrically() {
    let specs = mlp(&[4], 2, Activation::Tanh, true);
    let mut online = he_init(&specs, 3, 1).unwrap();
    online.stats.iter_mut().enumerate().for_each(|(k, s)| *s += k as f64 * 0.1);
    let start = he_init(&specs, 3, 2).unwrap();
    let mut t = start.clone();
    let tau = 0.05;
    for k in 1..=40 {
        soft_update(&mut t, &online, tau).unwrap();
        let f = libm::pow(1.0 - tau, k as f64);
        for (i, (tv, ov)) in t.params.iter().zip(&online.params).enumerate() {
            assert!(((tv - ov) - f * (start.params[i] - ov)).abs() < 1e-9);
        }
        for (i, (tv, ov)) in t.stats.iter().zip(&online.stats).enumerate() {
            assert!(((tv - ov) - f * (start.stats[i] - ov)).abs() < 1e-9);
        }
    }
}

#[test]
fn checkpoint_round_trips_bit_exact() {
    let specs = [
        LayerSpec::new(5, Activation::Elu).with_batch_norm(),
        LayerSpec::new(3, Activation::Tanh).with_l2(0.01),
        LayerSpec::new(1, Activation::Linear),
    ];
    let mut ps = he_init(&specs, 4, 77).unwrap();
    ps.params[3] = f64::MIN_POSITIVE;
    ps.params[4] = -0.0;
    ps.stats[1] = 1.0 / 3.0;
    ps.set_version(42);
    let mut buf = Vec::new();
    encode_parameters(&ps, &mut buf);
    let mut pos = 0;
    let back = decode_parameters(&buf, &mut pos).unwrap();
    assert_eq!(pos, buf.len());
    assert_eq!(back.version(), 42);
    assert_eq!(back.specs(), ps.specs());
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back.params), bits(&ps.params));
    assert_eq!(bits(&back.stats), bits(&ps.stats));

    let mut bad = buf.clone();
    bad[0] ^= 1;
    assert!(decode_parameters(&bad, &mut 0).is_err());
    assert!(decode_parameters(&buf[..buf.len() - 3], &mut 0).is_err());
}

