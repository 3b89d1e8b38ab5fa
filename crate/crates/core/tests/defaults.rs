//! Default hyperparameters and sizing rules.

use tempograph_core::inductive::sage::SageConfig;
use tempograph_core::synth::{community_graph, CommunityGraphConfig};
use tempograph_core::walker::DEFAULT_WINDOW;
use tempograph_core::{pipeline, InductiveConfig, Mode, RunConfig, StartSampling, TrainConfig, Walker};

#[test]
fn model_defaults() {
    let t = TrainConfig::default();
    assert_eq!(t.components, 128);
    assert_eq!(t.window, Some(DEFAULT_WINDOW));
    assert_eq!(DEFAULT_WINDOW, 500);
    assert_eq!(t.clip_norm, 5.0);

    let i = InductiveConfig::default();
    assert_eq!(i.components, 128);
    assert_eq!(i.beta, 1e-5);
    assert_eq!(i.embed_dim, 128);
    assert_eq!(i.latent_dim, 128);
    assert_eq!(i.clusters, 300);
    assert_eq!(SageConfig::default().dim, 128);
}

#[test]
fn run_defaults_follow_the_source_graph() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.mode, Mode::Transductive);
    assert_eq!(cfg.resolved_target_edges(2561), 2561);
    assert_eq!(cfg.resolved_target_nodes(60), 60);
    for m in [10, 5_000, 20_000] {
        assert!((2..=5).contains(&cfg.resolved_gen_len(m)));
    }
    assert!((6..=10).contains(&cfg.resolved_gen_len(1_000_000)));
}

#[test]
fn epoch_walk_set_has_one_walk_per_edge() {
    let g = community_graph(&CommunityGraphConfig {
        nodes_per_community: 8,
        pairs_per_community: 15,
        cross_pairs: 3,
        ..CommunityGraphConfig::default()
    })
    .unwrap();
    let set = Walker::new(&g, 20, Some(500))
        .unwrap()
        .sample_walk_set(StartSampling::Epoch, 4)
        .unwrap();
    assert_eq!(set.walks.len(), g.num_edges());
    for (w, e) in set.walks.iter().zip(g.edges()) {
        assert_eq!((w.steps[0].node, w.steps[0].t), (e.v, e.t));
    }
}

#[test]
fn only_the_inductive_mode_changes_the_node_count() {
    let g = community_graph(&CommunityGraphConfig {
        nodes_per_community: 6,
        pairs_per_community: 10,
        cross_pairs: 2,
        ..CommunityGraphConfig::default()
    })
    .unwrap();
    let mut cfg = RunConfig {
        epochs: 1,
        node_dim: 4,
        time_dim: 4,
        hidden_dim: 4,
        output_dim: 4,
        components: 2,
        ..RunConfig::default()
    };
    let (trained, _) = pipeline::train(&g, &cfg).unwrap();
    cfg.target_nodes = g.num_nodes() + 3;
    assert!(pipeline::generate(&trained, &g, &cfg).is_err());
    cfg.target_nodes = 0;
    let (out, _) = pipeline::generate(&trained, &g, &cfg).unwrap();
    assert_eq!(out.graph.num_nodes(), g.num_nodes());
    assert!(out.graph.num_edges() <= g.num_edges());
}
