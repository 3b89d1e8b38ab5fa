//! Library routines checked against independent reference computations.

use std::collections::HashMap;

use approx::assert_relative_eq;
use proptest::prelude::*;
use statrs::distribution::{Continuous, LogNormal};

use tempograph_core::assembly::largest_remainder_quotas;
use tempograph_core::graph::Incidence;
use tempograph_core::walker::jump_distribution;
use tempograph_core::{
    count_alpha, stats, MixtureParams, StaticGraph, TemporalEdge, TemporalGraph, Walk, WalkStep,
    Walker,
};

fn walk_strategy() -> impl Strategy<Value = Walk> {
    prop::collection::vec((0usize..6, 0.01f64..3.0), 1..8).prop_map(|raw| {
        let mut t = 0.0;
        let steps = raw
            .into_iter()
            .map(|(v, gap)| {
                t += gap;
                WalkStep::new(v, t)
            })
            .collect();
        Walk { steps, ended: false }
    })
}

proptest! {
    #[test]
    fn jump_distribution_is_softmax_of_elapsed_time(
        t_cur in -100.0f64..100.0,
        gaps in prop::collection::vec(1e-3f64..40.0, 1..30),
    ) {
        let nbrs: Vec<Incidence> = gaps
            .iter()
            .enumerate()
            .map(|(i, g)| Incidence { neighbor: i, t: t_cur + g })
            .collect();
        let p = jump_distribution(t_cur, &nbrs).unwrap();
        // Reference: log-sum-exp over exp(t_cur - t_i).
        let logits: Vec<f64> = nbrs.iter().map(|n| t_cur - n.t).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for (pi, l) in p.iter().zip(&logits) {
            prop_assert!((pi - (l - m).exp() / z).abs() <= 1e-12);
        }
    }

    #[test]
    fn alpha_matches_naive_counter(walks in prop::collection::vec(walk_strategy(), 0..12), t_max in 1.0f64..20.0) {
        let alpha = count_alpha(&walks, t_max, true);
        let mut naive: HashMap<(usize, usize, u64), u64> = HashMap::new();
        let mut truncated = 0;
        for w in &walks {
            for e in w.transitions() {
                if e.t > t_max {
                    truncated += 1;
                } else if e.u != e.v {
                    *naive.entry((e.u.min(e.v), e.u.max(e.v), e.t.to_bits())).or_default() += 1;
                }
            }
        }
        prop_assert_eq!(alpha.len(), naive.len());
        prop_assert_eq!(alpha.truncated, truncated);
        for (&(u, v, t), &n) in &naive {
            prop_assert_eq!(alpha.get(u, v, f64::from_bits(t)), n);
        }
    }

    #[test]
    fn quotas_are_within_one_of_proportional_share(
        masses in prop::collection::vec(0u64..1000, 1..20),
        target in 0usize..5000,
    ) {
        let total: u64 = masses.iter().sum();
        let q = largest_remainder_quotas(&masses, target);
        if total == 0 {
            prop_assert!(q.iter().all(|&x| x == 0));
        } else {
            prop_assert_eq!(q.iter().sum::<usize>(), target);
            for (&m, &qi) in masses.iter().zip(&q) {
                let share = target as f64 * m as f64 / total as f64;
                prop_assert!((qi as f64 - share).abs() < 1.0);
            }
        }
    }

    #[test]
    fn sampled_walks_follow_later_edges(seed in 0u64..500) {
        let g = TemporalGraph::new(5, vec![
            TemporalEdge::new(0, 1, 1.0),
            TemporalEdge::new(1, 2, 2.0),
            TemporalEdge::new(1, 3, 2.0),
            TemporalEdge::new(2, 4, 3.0),
            TemporalEdge::new(3, 4, 5.0),
            TemporalEdge::new(4, 0, 6.0),
        ]).unwrap();
        let walker = Walker::new(&g, 6, None).unwrap();
        for w in walker.sample_walk_set(tempograph_core::StartSampling::Epoch, seed).unwrap().walks {
            prop_assert!(w.check_increasing().is_ok());
            for e in w.transitions() {
                let exists = g.edges().iter().any(|x| x.t == e.t && x.pair() == (e.u.min(e.v), e.u.max(e.v)));
                prop_assert!(exists, "step {:?} is not a graph edge", e);
            }
        }
    }
}

#[test]
fn mixture_density_matches_lognormal_components() {
    let p = MixtureParams::new(vec![-0.5, 0.7, 2.0], vec![0.3, 1.1, 0.6], vec![0.2, 0.5, 0.3]).unwrap();
    for &dt in &[1e-3, 0.05, 0.4, 1.0, 2.5, 9.0, 40.0] {
        let want: f64 = (0..3)
            .map(|c| p.phi[c] * LogNormal::new(p.mu[c], p.sigma[c]).unwrap().pdf(dt))
            .sum();
        assert_relative_eq!(p.log_prob(dt).unwrap(), want.ln(), max_relative = 1e-12);
    }
}

#[test]
fn triangle_with_pendant_statistics() {
    // 0-1-2 triangle with 3 hanging off node 2; values worked out by hand.
    let s = stats(&StaticGraph::from_pairs(4, [(0, 1), (1, 2), (0, 2), (2, 3)]));
    assert_relative_eq!(s.mean_degree, 2.0);
    assert_eq!(s.wedge_count, 5.0);
    assert_eq!(s.triangle_count, 1.0);
    assert_relative_eq!(s.global_cf, 0.6);
    assert_eq!(s.lcc_size, 4.0);
    assert_eq!(s.num_components, 1.0);
    // Node 2 carries both paths into node 3: raw 2, normalized by 3.
    assert_relative_eq!(s.mean_betweenness, 2.0 / 3.0 / 4.0, epsilon = 1e-12);
    assert_relative_eq!(s.mean_closeness, (0.75 + 0.75 + 1.0 + 0.6) / 4.0, epsilon = 1e-12);
    let ple = 1.0 + 4.0 / (4f64.ln() + 4f64.ln() + 6f64.ln() + 2f64.ln());
    assert_relative_eq!(s.ple, ple, epsilon = 1e-12);
    let red = -[2.0, 2.0, 3.0, 1.0]
        .iter()
        .map(|d: &f64| d / 8.0 * (d / 8.0).ln())
        .sum::<f64>()
        / 4f64.ln();
    assert_relative_eq!(s.red_entropy, red, epsilon = 1e-12);
}

#[test]
fn isolated_nodes_do_not_enter_statistics() {
    let a = stats(&StaticGraph::from_pairs(3, [(0, 1)]));
    let b = stats(&StaticGraph::from_pairs(50, [(0, 1)]));
    assert_eq!(a, b);
    assert_eq!(a.mean_degree, 1.0);
    assert_eq!(a.num_components, 1.0);
}
