mod common;

use common::*;
use dsbd_core::basis::PrototypeGraph;
use dsbd_core::gnn::{infer_graph, init_params, ModelConfig};
use dsbd_core::graphdata::{parse_jsonl, split_by_density, write_jsonl, DenseGraph, DensityCriterion, DomainDataset, SplitSpec};
use dsbd_core::optim::{clip_global_norm, global_norm};
use dsbd_core::structstats::{dirichlet_energy, moments};
use dsbd_core::Tensor;
use proptest::prelude::*;

fn adjacency_strategy(max_n: usize) -> impl Strategy<Value = Tensor> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(prop_oneof![Just(0.0), 0.0..=1.0f64], n * (n - 1) / 2).prop_map(move |w| {
            let mut a = Tensor::zeros(n, n);
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    a.set(i, j, w[k]);
                    a.set(j, i, w[k]);
                    k += 1;
                }
            }
            a
        })
    })
}

fn graph_strategy(max_n: usize, d: usize) -> impl Strategy<Value = (Tensor, Tensor)> {
    adjacency_strategy(max_n).prop_flat_map(move |a| {
        let n = a.rows();
        proptest::collection::vec(-2.0..2.0f64, n * d)
            .prop_map(move |x| (a.clone(), Tensor::from_vec(n, d, x).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moments_and_energy_are_permutation_invariant(((a, x), seed) in (graph_strategy(9, 3), any::<u64>())) {
        let mut r = rng(seed);
        let p = random_permutation(&mut r, a.rows());
        let (pa, px) = (permute_sym(&a, &p), permute_rows(&x, &p));
        let m0 = moments(&a).unwrap().to_array();
        let m1 = moments(&pa).unwrap().to_array();
        for (u, v) in m0.iter().zip(m1) {
            prop_assert!((u - v).abs() <= 1e-10 * u.abs().max(1.0));
        }
        let e0 = dirichlet_energy(&a, &x).unwrap();
        let e1 = dirichlet_energy(&pa, &px).unwrap();
        prop_assert!((e0 - e1).abs() <= 1e-10 * e0.abs().max(1.0));
    }

    #[test]
    fn gin_output_is_permutation_invariant(((a, x), perm_seed, seed) in (graph_strategy(7, 2), any::<u64>(), 0u64..50)) {
        let g = DenseGraph::new(a.clone(), x.clone(), None).unwrap();
        let p = random_permutation(&mut rng(perm_seed), a.rows());
        let pg = DenseGraph::new(permute_sym(&a, &p), permute_rows(&x, &p), None).unwrap();
        let params = init_params(&ModelConfig::new(2, 3), seed);
        let (l0, _) = infer_graph(&params, &g).unwrap();
        let (l1, _) = infer_graph(&params, &pg).unwrap();
        for (u, v) in l0.iter().zip(&l1) {
            prop_assert!((u - v).abs() <= 1e-8 * u.abs().max(1.0));
        }
    }

    #[test]
    fn energy_is_nonnegative((a, x) in graph_strategy(10, 3)) {
        prop_assert!(dirichlet_energy(&a, &x).unwrap() >= -1e-9);
    }

    #[test]
    fn moments_are_nonnegative_with_std_floor(a in adjacency_strategy(10)) {
        let m = moments(&a).unwrap();
        prop_assert!(m.deg_mean >= 0.0 && m.density >= 0.0 && m.tri >= 0.0);
        prop_assert!(m.deg_std >= 1e-8f64.sqrt() * (1.0 - 1e-12));
    }

    #[test]
    fn moments_are_continuous((a, seed) in (adjacency_strategy(8), any::<u64>())) {
        let mut r = rng(seed);
        let delta = 1e-6;
        let noise = random_adjacency(&mut r, a.rows(), 1.0, true);
        let b = a.zip_map(&noise, |u, v| u + delta * v);
        let m0 = moments(&a).unwrap().to_array();
        let m1 = moments(&b).unwrap().to_array();
        let n = a.rows() as f64;
        for (u, v) in m0.iter().zip(m1) {
            // each moment is Lipschitz with a constant polynomial in n
            prop_assert!((u - v).abs() <= 10.0 * n * n * delta, "{} {}", u, v);
        }
    }

    #[test]
    fn realization_is_always_feasible(logits in proptest::collection::vec(-60.0..60.0f64, 36), feats in proptest::collection::vec(-3.0..3.0f64, 12)) {
        let p = PrototypeGraph {
            label: 0,
            adj_logits: Tensor::from_vec(6, 6, logits).unwrap(),
            feat_params: Tensor::from_vec(6, 2, feats).unwrap(),
        };
        let g = p.realize().unwrap();
        let a = g.adjacency();
        for i in 0..6 {
            prop_assert_eq!(a.get(i, i), 0.0);
            for j in 0..6 {
                prop_assert_eq!(a.get(i, j), a.get(j, i));
                prop_assert!((0.0..=1.0).contains(&a.get(i, j)));
            }
        }
    }

    #[test]
    fn jsonl_round_trip_is_exact((a, x) in graph_strategy(8, 2), label in proptest::option::of(0usize..4)) {
        let g = DenseGraph::new(a, x, label).unwrap();
        let ds = DomainDataset::new("p", vec![g.clone(), g]).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&ds, &mut buf).unwrap();
        let back = parse_jsonl("p", std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back.graphs, ds.graphs);
    }

    #[test]
    fn split_partitions_the_dataset(sizes in proptest::collection::vec(2usize..30, 8..40), bins in 2usize..5) {
        let graphs: Vec<DenseGraph> = sizes
            .iter()
            .map(|&n| DenseGraph::new(Tensor::zeros(n, n), Tensor::ones(n, 1), Some(0)).unwrap())
            .collect();
        let ds = DomainDataset::new("s", graphs).unwrap();
        let spec = SplitSpec { criterion: DensityCriterion::NodeDensity, num_bins: bins };
        match split_by_density(&ds, &spec) {
            Ok(parts) => {
                prop_assert_eq!(parts.len(), bins);
                let total: usize = parts.iter().map(DomainDataset::len).sum();
                prop_assert_eq!(total, ds.len());
                let mut all: Vec<usize> = parts.iter().flat_map(|p| p.graphs.iter().map(DenseGraph::n)).collect();
                let mut orig = sizes.clone();
                all.sort_unstable();
                orig.sort_unstable();
                prop_assert_eq!(all, orig);
                for w in parts.windows(2) {
                    let hi = w[0].graphs.iter().map(DenseGraph::n).max().unwrap();
                    let lo = w[1].graphs.iter().map(DenseGraph::n).min().unwrap();
                    prop_assert!(hi < lo);
                }
            }
            Err(_) => {
                let mut distinct = sizes.clone();
                distinct.sort_unstable();
                distinct.dedup();
                prop_assert!(distinct.len() < bins);
            }
        }
    }

    #[test]
    fn clipping_bounds_the_global_norm(vals in proptest::collection::vec(-100.0..100.0f64, 1..30), max in 0.01..10.0f64) {
        let mut g = vec![Tensor::from_vec(1, vals.len(), vals).unwrap()];
        clip_global_norm(&mut g, max);
        prop_assert!(global_norm(&g) <= max + 1e-9);
    }
}

#[test]
fn triangle_oracle_ignores_node_order() {
    let mut r = rng(1);
    let a = random_adjacency(&mut r, 5, 0.5, false);
    let pa = permute_sym(&a, &[4, 2, 0, 1, 3]);
    assert_eq!(triangle_count(&a), triangle_count(&pa));
}
