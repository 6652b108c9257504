mod common;

use common::*;
use proptest::prelude::*;
use stagedtree::dag::{minimal_dag, staged_tree_of_dag, Dag};
use stagedtree::data::binarize_two_means;
use stagedtree::learning::{hc_dag, learn_k_parents, HcDagOptions, KParentsOptions};
use stagedtree::metrics::{normalized_hamming, partition_distance};
use stagedtree::scoring::{dof, score};
use stagedtree::simulation::{random_dag, random_k_parents_model, random_parameters, sample};
use stagedtree::{bhc, count_stages, is_k_parents, EventTree, Staging};

fn cards_strategy(max_p: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(2usize..=3, 1..=max_p)
}

/// A random staging of `tree`: each depth's labels drawn from a random
/// number of blocks.
fn staging_from(tree: &EventTree, raw: &[u64]) -> Staging {
    let mut it = raw.iter().copied().cycle();
    let assignments = (0..tree.p())
        .map(|d| {
            let w = tree.width(d) as u64;
            let blocks = it.next().unwrap() % w + 1;
            (0..w)
                .map(|_| (it.next().unwrap() % blocks) as u32)
                .collect()
        })
        .collect();
    Staging::new(tree, assignments).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stage_relabeling_is_canonical(cards in cards_strategy(4), raw in prop::collection::vec(any::<u64>(), 8..40), shift in 1u32..50) {
        let tree = EventTree::with_cardinalities(&cards).unwrap();
        let s = staging_from(&tree, &raw);
        let relabeled: Vec<Vec<u32>> = (0..tree.p())
            .map(|d| s.depth(d).iter().map(|&x| 1000 - x * shift).collect())
            .collect();
        prop_assert_eq!(Staging::new(&tree, relabeled).unwrap(), s);
    }

    #[test]
    fn stage_counts_sum_to_n(cards in cards_strategy(4), raw in prop::collection::vec(any::<u64>(), 8..40), seed in 0u64..1000, n in 1usize..300) {
        let tree = EventTree::with_cardinalities(&cards).unwrap();
        let s = staging_from(&tree, &raw);
        let m = random_parameters(&tree, &s, seed).unwrap();
        let data = sample(&m, n, seed + 1);
        let c = count_stages(&data, &tree, &s).unwrap();
        for d in 0..tree.p() {
            prop_assert_eq!(c.depth_total(d), n as u64);
        }
    }

    #[test]
    fn merging_adds_counts_and_drops_one_penalty(cards in cards_strategy(4), seed in 0u64..1000, pick in any::<u64>()) {
        let tree = EventTree::with_cardinalities(&cards).unwrap();
        let sat = Staging::saturated(&tree);
        let m = random_parameters(&tree, &sat, seed).unwrap();
        let data = sample(&m, 200, seed + 1);
        let candidates: Vec<usize> = (1..tree.p()).collect();
        prop_assume!(!candidates.is_empty());
        let d = candidates[pick as usize % candidates.len()];
        let w = tree.width(d);
        let (a, b) = ((pick >> 8) as usize % w, (pick >> 24) as usize % w);
        prop_assume!(a != b);
        let mut assignments: Vec<Vec<u32>> = (0..tree.p()).map(|i| sat.depth(i).to_vec()).collect();
        assignments[d][b] = assignments[d][a];
        let merged = Staging::new(&tree, assignments).unwrap();

        let before = count_stages(&data, &tree, &sat).unwrap();
        let after = count_stages(&data, &tree, &merged).unwrap();
        let sa = merged.stage_of(d, a);
        let expect: Vec<u64> = before.stage(d, a).iter().zip(before.stage(d, b)).map(|(x, y)| x + y).collect();
        prop_assert_eq!(after.stage(d, sa), &expect[..]);

        let c = tree.cardinality(d);
        prop_assert_eq!(dof(&tree, &sat) - dof(&tree, &merged), c - 1);
        let (s0, s1) = (score(&tree, &sat, &data).unwrap(), score(&tree, &merged, &data).unwrap());
        let penalty = (c - 1) as f64 * (data.n() as f64).ln();
        let ll_drop = s0.loglik - s1.loglik;
        prop_assert!(ll_drop >= -1e-9);
        prop_assert!(((s1.bic - s0.bic) - (2.0 * ll_drop - penalty)).abs() < 1e-8);
    }

    #[test]
    fn dag_round_trip(p in 1usize..=8, k in 0usize..=4, seed in any::<u64>()) {
        let tree = EventTree::binary(p).unwrap();
        let g = random_dag(p, k, seed);
        let s = staged_tree_of_dag(&g, &tree).unwrap();
        prop_assert_eq!(minimal_dag(&tree, &s), g);
    }

    #[test]
    fn coarser_staging_has_fewer_parents(cards in cards_strategy(5), raw in prop::collection::vec(any::<u64>(), 8..60)) {
        let tree = EventTree::with_cardinalities(&cards).unwrap();
        let fine = staging_from(&tree, &raw);
        // merge every depth's first two stages
        let coarse_assign: Vec<Vec<u32>> = (0..tree.p())
            .map(|d| fine.depth(d).iter().map(|&x| if x == 1 { 0 } else { x }).collect())
            .collect();
        let coarse = Staging::new(&tree, coarse_assign).unwrap();
        prop_assert!(coarse.is_coarsening_of(&fine));
        prop_assert!(minimal_dag(&tree, &coarse).is_subgraph_of(&minimal_dag(&tree, &fine)));
    }

    #[test]
    fn minimal_dag_contains_staging_and_is_tight(cards in cards_strategy(4), raw in prop::collection::vec(any::<u64>(), 8..60)) {
        let tree = EventTree::with_cardinalities(&cards).unwrap();
        let s = staging_from(&tree, &raw);
        let g = minimal_dag(&tree, &s);
        // the staging refines into T_G: equal parent configurations share a stage
        let tg = staged_tree_of_dag(&g, &tree).unwrap();
        prop_assert!(s.is_coarsening_of(&tg));
        // and each edge has a witness pair differing only in that coordinate
        for (i, j) in g.edges() {
            let witness = (0..tree.width(j)).any(|v| {
                let x = tree.prefix_of(j, v);
                (0..tree.cardinality(i)).any(|y| {
                    let mut z = x.clone();
                    z[i] = y;
                    s.stage_of(j, v) != s.stage_of(j, tree.vertex_of_prefix(&z))
                })
            });
            prop_assert!(witness);
        }
    }

    #[test]
    fn binarization_is_order_free_and_monotone(mut values in prop::collection::vec(-1e3f64..1e3, 2..40), perm_seed in any::<u64>()) {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(max > min);
        let (codes, cut) = binarize_two_means(&values).unwrap();
        for (&v, &c) in values.iter().zip(&codes) {
            prop_assert_eq!(c, (v > cut.lower_max) as u32);
        }
        let original: Vec<(f64, u32)> = values.iter().cloned().zip(codes).collect();
        let mut s = perm_seed;
        for i in (1..values.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            values.swap(i, (s >> 33) as usize % (i + 1));
        }
        let (shuffled, cut2) = binarize_two_means(&values).unwrap();
        prop_assert_eq!(cut, cut2);
        for (v, c) in values.iter().zip(shuffled) {
            let (_, expect) = original.iter().find(|(w, _)| w == v).unwrap();
            prop_assert_eq!(c, *expect);
        }
    }

    #[test]
    fn hamming_is_a_symmetric_label_free_distance(cards in cards_strategy(4), ra in prop::collection::vec(any::<u64>(), 8..40), rb in prop::collection::vec(any::<u64>(), 8..40)) {
        let tree = EventTree::with_cardinalities(&cards).unwrap();
        let (a, b) = (staging_from(&tree, &ra), staging_from(&tree, &rb));
        let ab = normalized_hamming(&tree, &a, &b).unwrap();
        prop_assert_eq!(ab, normalized_hamming(&tree, &b, &a).unwrap());
        prop_assert_eq!(normalized_hamming(&tree, &a, &a).unwrap(), 0.0);
        prop_assert_eq!(ab == 0.0, a == b);
    }

    #[test]
    fn partition_distance_matches_brute_force(a in prop::collection::vec(0u32..4, 1..=10), seed in any::<u64>()) {
        let b: Vec<u32> = a.iter().enumerate().map(|(i, _)| ((seed >> (2 * i)) & 3) as u32).collect();
        prop_assert_eq!(partition_distance(&a, &b), brute_partition_distance(&a, &b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bhc_only_coarsens_and_improves(p in 2usize..=5, k in 1usize..=3, seed in any::<u64>(), n in 50usize..1500, from_dag in any::<bool>()) {
        let sim = random_k_parents_model(p, k, &vec![2; p], 0.5, seed).unwrap();
        let data = sample(&sim.model, n, seed ^ 0xabcdef);
        let tree = sim.model.tree();
        let start = if from_dag {
            staged_tree_of_dag(&sim.dag, tree).unwrap()
        } else {
            Staging::saturated(tree)
        };
        let (out, trace) = bhc(tree, &start, &data).unwrap();
        prop_assert!(out.is_coarsening_of(&start));
        let mut prev = trace.initial_bic;
        for step in &trace.iterations {
            prop_assert!(step.bic < prev);
            prev = step.bic;
        }
        prop_assert!((trace.initial_bic - staging_bic(tree, &start, &data)).abs() < 1e-6);
        prop_assert!((trace.final_bic() - staging_bic(tree, &out, &data)).abs() < 1e-6);
    }

    #[test]
    fn k_parents_pipeline_guarantee(p in 2usize..=6, k in 1usize..=3, seed in any::<u64>(), n in 50usize..1000) {
        let sim = random_k_parents_model(p, 2, &vec![2; p], 0.5, seed).unwrap();
        let data = sample(&sim.model, n, seed.wrapping_add(1));
        let fit = learn_k_parents(&data, &KParentsOptions::new(k)).unwrap();
        prop_assert!(is_k_parents(fit.model.tree(), fit.model.staging(), k));
        prop_assert!(fit.score.bic <= fit.dag_score.bic + 1e-9);
        prop_assert!(fit.model.staging().is_coarsening_of(&fit.dag_staging));
    }

    #[test]
    fn hc_dag_respects_constraints(p in 2usize..=6, k in 1usize..=3, seed in any::<u64>(), leaf in 0usize..6) {
        let sim = random_k_parents_model(p, 3, &vec![2; p], 0.3, seed).unwrap();
        let data = sample(&sim.model, 500, seed.wrapping_add(7));
        let leaf = leaf % p;
        let name = data.schema()[leaf].name().to_string();
        let learned = hc_dag(&data, &HcDagOptions {
            max_parents: Some(k),
            order: None,
            forced_leaves: vec![name],
        }).unwrap();
        prop_assert!(learned.dag.max_in_degree() <= k);
        let t = learned.order.iter().position(|&c| c == leaf).unwrap();
        prop_assert!(learned.dag.edges().iter().all(|&(i, _)| i != t));
        // Dag enforces parents-before-children, so it is acyclic by construction
        prop_assert!(Dag::new(learned.dag.parent_sets().to_vec()).is_ok());
        let mut sorted = learned.order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..p).collect::<Vec<_>>());
    }
}
