use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;

use tempograph_core::synth::{community_graph, CommunityGraphConfig};
use tempograph_core::walker::epoch_seeds;
use tempograph_core::{
    assemble, count_alpha, stats, AliasTable, SnapshotMode, StartSampling, TrainConfig,
    TransductiveModel, Walker,
};

fn alias(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(1);
    let weights: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
    c.bench_function("alias/build_500", |b| b.iter(|| AliasTable::from_weights(&weights).unwrap()));
    let table = AliasTable::from_weights(&weights).unwrap();
    c.bench_function("alias/draw", |b| b.iter(|| table.sample(&mut rng)));
}

fn walks(c: &mut Criterion) {
    let g = community_graph(&CommunityGraphConfig::default()).unwrap();
    let walker = Walker::new(&g, 20, Some(500)).unwrap();
    let mut seed = 0;
    c.bench_function("walker/epoch_walk_set", |b| {
        b.iter(|| {
            seed += 1;
            walker.sample_walk_set(StartSampling::Epoch, seed).unwrap()
        })
    });
}

fn generation(c: &mut Criterion) {
    let g = community_graph(&CommunityGraphConfig::default()).unwrap();
    let cfg = TrainConfig {
        node_dim: 32,
        time_dim: 16,
        hidden_dim: 64,
        output_dim: 64,
        components: 8,
        ..TrainConfig::default()
    };
    let model = TransductiveModel::new(cfg.dims(g.num_nodes()), g.t_max(), 0).unwrap();
    let seeds = epoch_seeds(&g);
    let grid = g.unique_timestamps();
    let mut group = c.benchmark_group("generation");
    group.sample_size(10);
    group.bench_function("walks_and_assembly", |b| {
        b.iter(|| {
            let walks = model.generate_walks(&seeds, 3, 5).unwrap();
            let alpha = count_alpha(&walks, g.t_max(), true).binned(&grid).unwrap();
            assemble(&alpha, g.num_edges(), g.num_nodes(), 9).unwrap()
        })
    });
    group.finish();
}

fn snapshot_stats(c: &mut Criterion) {
    let g = community_graph(&CommunityGraphConfig::default()).unwrap();
    let snaps = g.snapshots(SnapshotMode::Upto);
    let last = snaps.last().unwrap().1.clone();
    c.bench_function("metrics/stats_full_projection", |b| {
        b.iter_batched(|| last.clone(), |s| stats(&s), BatchSize::SmallInput)
    });
}

criterion_group!(kernels, alias, walks, generation, snapshot_stats);
criterion_main!(kernels);
