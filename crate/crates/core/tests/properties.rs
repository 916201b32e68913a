mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermoforge_core::harness::{percentiles, rank, Scored, Scores};
use thermoforge_core::spatial::{kmeans, silhouette};
use thermoforge_core::ConfigGraph;

fn tree(n: usize, seed: u64) -> ConfigGraph {
    common::random_tree(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

proptest! {
    #[test]
    fn notation_round_trips(n in 1usize..=12, seed in any::<u64>()) {
        let g = tree(n, seed);
        let text = g.to_notation();
        let back = ConfigGraph::parse(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(back.to_notation(), text);
        prop_assert_eq!(g.edges().len(), n);
    }

    #[test]
    fn affine_flows_conserve_mass(n in 1usize..=10, seed in any::<u64>(), fracs in prop::collection::vec(0.0f64..1.0, 10)) {
        let g = tree(n, seed);
        let fm = thermoforge_core::FlowMap::new(&g, 0.4);
        let indep: Vec<f64> = (0..fm.n_independent()).map(|j| 0.4 * fracs[j % fracs.len()]).collect();
        prop_assert!(fm.conservation_residual(&indep) <= 1e-12);
        let eq = fm.edge_flow_values(&fm.equal_split(&g));
        prop_assert!(eq.iter().all(|q| *q > 0.0));
        let leaves: f64 = fm.branch_edges.iter().zip(&eq).filter(|((_, c), _)| g.is_leaf(*c)).map(|(_, q)| q).sum();
        prop_assert!((leaves - 0.4).abs() < 1e-12);
    }

    #[test]
    fn percentiles_count_strictly_lower(values in prop::collection::vec(1u32..60, 1..30)) {
        let t: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let got = percentiles(&t);
        for (i, p) in got.iter().enumerate() {
            let want = if t.len() == 1 {
                0.0
            } else {
                100.0 * t.iter().filter(|o| **o < t[i]).count() as f64 / (t.len() - 1) as f64
            };
            prop_assert_eq!(*p, want);
            prop_assert!((0.0..=100.0).contains(p));
        }
    }

    #[test]
    fn ranking_partitions_the_population(outcomes in prop::collection::vec(prop::option::of(1u32..50), 1..25)) {
        let scored: Vec<Scored> = outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| Scored {
                index: i,
                notation: format!("0 ({})", i + 1),
                outcome: match o {
                    Some(t) => Ok(Scores { t_end: *t as f64, objective: *t as f64, penalty: 0.0, status: "optimal".into() }),
                    None => Err("failed".into()),
                },
            })
            .collect();
        match rank(&scored) {
            Ok(r) => {
                let mut seen: Vec<usize> = r.entries.iter().map(|e| e.index).chain(r.failures.iter().map(|f| f.index)).collect();
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..scored.len()).collect::<Vec<_>>());
                prop_assert!(r.entries.windows(2).all(|w| w[0].t_end >= w[1].t_end));
                prop_assert!(r.entries.windows(2).all(|w| w[0].t_end > w[1].t_end || w[0].notation < w[1].notation));
            }
            Err(_) => prop_assert!(outcomes.iter().all(Option::is_none)),
        }
    }

    #[test]
    fn kmeans_assigns_each_point_to_its_nearest_centroid(
        pts in prop::collection::vec(prop::array::uniform3(-20.0f64..20.0), 2..25),
        k in 1usize..5,
        seed in any::<u64>(),
    ) {
        let k = k.min(pts.len());
        let km = kmeans(&pts, k, seed).unwrap();
        for (p, &a) in pts.iter().zip(&km.assignments) {
            let own = dist2(p, &km.centroids[a]);
            prop_assert!(km.centroids.iter().all(|c| own <= dist2(p, c) + 1e-9));
        }
        let s = silhouette(&pts, &km.assignments);
        prop_assert!((-1.0..=1.0).contains(&s));
    }
}
