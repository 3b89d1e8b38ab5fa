//! Training, generation and checkpoint behaviour on small inputs.

use std::collections::BTreeMap;

use tempograph_core::seqmodel::ModelDims;
use tempograph_core::synth::{community_graph, CommunityGraphConfig};
use tempograph_core::train::OptimConfig;
use tempograph_core::{pipeline, Checkpoint, Mode, RunConfig, Trained, TransductiveModel, Walk, WalkStep};

fn small_graph() -> tempograph_core::TemporalGraph {
    community_graph(&CommunityGraphConfig {
        nodes_per_community: 8,
        pairs_per_community: 16,
        cross_pairs: 3,
        ..CommunityGraphConfig::default()
    })
    .unwrap()
}

fn small_config(mode: Mode) -> RunConfig {
    RunConfig {
        mode,
        seed: 7,
        epochs: 2,
        node_dim: 6,
        time_dim: 4,
        hidden_dim: 8,
        output_dim: 8,
        components: 2,
        embed_dim: 6,
        latent_dim: 4,
        clusters: 3,
        sage_epochs: 20,
        sage_boost_rounds: 1,
        wgan_iterations: 30,
        wgan_hidden: 8,
        wgan_noise_dim: 4,
        ..RunConfig::default()
    }
}

/// Argmax next-node accuracy over every transition of `walks`.
fn next_node_accuracy(m: &TransductiveModel, walks: &[Walk]) -> f64 {
    let (mut hit, mut total) = (0, 0);
    for w in walks {
        let mut state = m.zero_state();
        for pair in w.steps.windows(2) {
            let o = m.rnn_step(&mut state, pair[0].node, pair[0].t).unwrap();
            let p = m.node_probs(&o);
            let best = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
            hit += usize::from(best == pair[1].node);
            total += 1;
        }
    }
    hit as f64 / total as f64
}

#[test]
fn learns_a_cycle_on_an_integer_clock() {
    // Constant unit gaps: the sequence is fully determined by the current node.
    let n = 10;
    let walks: Vec<Walk> = (0..200)
        .map(|i| Walk {
            steps: (0..8).map(|k| WalkStep::new((i + k) % n, (i % 30 + k + 1) as f64)).collect(),
            ended: false,
        })
        .collect();
    let dims = ModelDims {
        num_nodes: n,
        node_dim: 8,
        time_dim: 4,
        hidden_dim: 16,
        output_dim: 16,
        components: 2,
    };
    let mut m = TransductiveModel::new(dims, 40.0, 1).unwrap();
    let before = next_node_accuracy(&m, &walks[..50]);
    let cfg = OptimConfig {
        lr: 1e-2,
        batch_size: 16,
        epochs: 30,
        ..OptimConfig::default()
    };
    let curve = m.train(&walks, &cfg).unwrap();
    assert!(curve.last().unwrap() < curve.epochs[0]);
    let after = next_node_accuracy(&m, &walks[..50]);
    assert!(after >= 0.8, "accuracy {before} -> {after}");
}

#[test]
fn training_does_not_depend_on_thread_count() {
    let g = small_graph();
    let cfg = small_config(Mode::Transductive);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| pipeline::train(&g, &cfg).unwrap().1)
    };
    assert_eq!(run(1).epochs, run(3).epochs);
}

#[test]
fn checkpoint_round_trip_reproduces_generation() {
    let g = small_graph();
    for mode in [Mode::Transductive, Mode::Inductive] {
        let cfg = small_config(mode);
        let (trained, _) = pipeline::train(&g, &cfg).unwrap();
        let bytes = trained.to_checkpoint(&BTreeMap::new()).to_bytes();
        let restored = Trained::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(restored.mode(), mode);
        let (a, _) = pipeline::generate(&trained, &g, &cfg).unwrap();
        let (b, _) = pipeline::generate(&restored, &g, &cfg).unwrap();
        assert_eq!(a.graph.edges(), b.graph.edges(), "{mode}");
        assert_eq!(a.provenance, b.provenance);
    }
}

#[test]
fn inductive_generation_uses_its_own_node_universe() {
    let g = small_graph();
    let mut cfg = small_config(Mode::Inductive);
    cfg.target_nodes = g.num_nodes() + 9;
    cfg.target_edges = 40;
    let (trained, _) = pipeline::train(&g, &cfg).unwrap();
    let (out, _) = pipeline::generate(&trained, &g, &cfg).unwrap();
    let n = out.graph.num_nodes();
    assert_eq!(n, g.num_nodes() + 9);
    assert!(out.graph.num_edges() <= 40);
    assert!(out.graph.edges().iter().all(|e| e.u < n && e.v < n && e.u != e.v));
    let grid = g.unique_timestamps();
    assert!(out.graph.edges().iter().all(|e| grid.contains(&e.t)));
}
