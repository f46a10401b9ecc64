use tsc_core::demand::DemandProfile;
use tsc_core::fixtures;
use tsc_core::net::NetworkModel;
use tsc_core::rl::AgentConfig;
use tsc_lab::fabric::{train, FabricConfig};
use tsc_lab::hp::ControllerSpec;
use tsc_lab::LabError;

fn short_demand(net: &NetworkModel, vph: f64, horizon: f64) -> DemandProfile {
    let lanes: Vec<_> = net.entry_lanes().map(|l| (l, vph)).collect();
    DemandProfile::constant(net, &lanes, horizon).unwrap()
}

fn agent(name: &str, hp: &str) -> AgentConfig {
    ControllerSpec::parse(name, hp).unwrap().agent_config().unwrap().clone()
}

#[test]
fn single_worker_training_is_bit_reproducible() {
    let net = fixtures::single();
    let demand = short_demand(&net, 300.0, 600.0);
    for name in ["dqn", "ddpg"] {
        let cfg = agent(name, "batch=8,replay=500");
        let fc = FabricConfig::new(&net, 1, 1, 3, 11, 600);
        let a = train(&net, &demand, &cfg, &fc).unwrap();
        let b = train(&net, &demand, &cfg, &fc).unwrap();
        assert!(a.stats.updates[0] > 0, "{name} trained");
        let bytes = |o: &tsc_lab::fabric::TrainOutcome| o.checkpoints.iter().map(|c| c.encode()).collect::<Vec<_>>();
        assert_eq!(bytes(&a), bytes(&b), "{name}");
        let other = train(&net, &demand, &cfg, &FabricConfig { base_seed: 12, ..fc.clone() }).unwrap();
        assert_ne!(bytes(&a), bytes(&other), "{name}: seed matters");
    }
}

#[test]
fn learners_only_see_their_intersections() {
    let net = fixtures::double();
    let demand = short_demand(&net, 200.0, 600.0);
    let cfg = agent("dqn", "batch=8,replay=500");
    let fc = FabricConfig::new(&net, 2, 2, 4, 3, 600);
    let out = train(&net, &demand, &cfg, &fc).unwrap();
    let s = &out.stats;
    assert_eq!(s.held, vec![vec![0], vec![1]]);
    assert_eq!(s.misrouted, 0);
    assert_eq!(s.emitted(), s.received_total());
    assert_eq!(s.episodes, 4);
    assert_eq!(out.checkpoints.iter().map(|c| c.intersection.as_str()).collect::<Vec<_>>(), ["A", "B"]);
    assert_eq!(s.version_regressions, 0);
    assert!(s.applied_updates > 0);
}

#[test]
fn one_learner_round_robins_its_intersections() {
    let net = fixtures::double();
    let demand = short_demand(&net, 250.0, 900.0);
    let cfg = agent("ddpg", "batch=8,replay=500");
    let fc = FabricConfig::new(&net, 2, 1, 2, 5, 900);
    let out = train(&net, &demand, &cfg, &fc).unwrap();
    assert_eq!(out.stats.held, vec![vec![0, 1]]);
    assert!(out.stats.max_round_robin_gap <= 1);
    let (a, b) = (out.stats.updates[0], out.stats.updates[1]);
    assert!(a > 0 && a.abs_diff(b) <= 1, "{a} vs {b}");
}

#[test]
fn no_training_before_the_replay_is_warm() {
    let net = fixtures::single();
    let demand = short_demand(&net, 100.0, 300.0);
    let cfg = agent("dqn", "batch=5000,replay=10000");
    let out = train(&net, &demand, &cfg, &FabricConfig::new(&net, 1, 1, 1, 0, 300)).unwrap();
    assert!(out.stats.emitted() > 0);
    assert_eq!(out.stats.updates, vec![0]);
    assert_eq!(out.stats.applied_updates, 0);
    assert!(out.log.is_empty());
}

#[test]
fn training_log_rows_follow_the_update_counts() {
    let net = fixtures::single();
    let demand = short_demand(&net, 300.0, 900.0);
    let cfg = agent("dqn", "batch=8,replay=500");
    let fc = FabricConfig { log_every: 10, ..FabricConfig::new(&net, 1, 1, 2, 0, 900) };
    let out = train(&net, &demand, &cfg, &fc).unwrap();
    assert_eq!(out.log.len() as u64, out.stats.updates[0] / 10);
    for (k, row) in out.log.iter().enumerate() {
        assert_eq!(row.updates, 10 * (k as u64 + 1));
        assert!(row.loss.is_finite() && row.mean_reward <= 0.0 && row.mean_reward >= -1.0);
    }
}

#[test]
fn periodic_checkpoints_land_on_disk() {
    let dir = std::env::temp_dir().join(format!("tsc-fabric-ckpt-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let net = fixtures::double();
    let demand = short_demand(&net, 250.0, 600.0);
    let cfg = agent("dqn", "batch=8,replay=500");
    let fc = FabricConfig { checkpoint_every: Some((20, dir.clone())), ..FabricConfig::new(&net, 1, 2, 2, 0, 600) };
    let out = train(&net, &demand, &cfg, &fc).unwrap();
    let files = std::fs::read_dir(&dir).unwrap().count();
    assert!(files > 2, "{files} files");
    let loaded = tsc_lab::io::load_checkpoints(&dir, &net, &cfg).unwrap();
    for (a, b) in loaded.iter().zip(&out.checkpoints) {
        assert_eq!(a.encode(), b.encode());
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn worker_failures_surface_as_errors() {
    let net = fixtures::single();
    let demand = short_demand(&net, 100.0, 300.0);
    let cfg = agent("dqn", "batch=8");
    // horizon past demand plus drain: every actor fails its first episode
    let err = train(&net, &demand, &cfg, &FabricConfig::new(&net, 2, 1, 4, 0, 100_000)).unwrap_err();
    assert!(matches!(err, LabError::Config(_)), "{err}");
    let err = train(&net, &demand, &cfg, &FabricConfig::new(&net, 1, 2, 4, 0, 300)).unwrap_err();
    assert!(err.to_string().contains("learner"), "{err}");
}
