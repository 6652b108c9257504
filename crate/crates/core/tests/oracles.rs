mod common;

use common::*;
use rand::Rng;
use stagedtree::dag::{bn_joint_of_dag, minimal_dag, parent_config, staged_tree_of_dag, Dag};
use stagedtree::data::binarize_two_means;
use stagedtree::learning::{hc_dag, learn_k_parents, HcDagOptions, KParentsOptions};
use stagedtree::metrics::normalized_hamming;
use stagedtree::scoring::{fit_mle, log_likelihood, score};
use stagedtree::simulation::{
    random_dag, random_k_parents_model, random_merge_staging, random_parameters, rng, sample,
    uniform_simplex,
};
use stagedtree::{bhc, count_stages, Dataset, EventTree, StagedTree, Staging};

#[test]
fn leaf_probabilities_sum_to_one() {
    let tree = EventTree::binary(3).unwrap();
    for seed in 0..5 {
        let m = random_parameters(&tree, &Staging::saturated(&tree), seed).unwrap();
        let total: f64 = outcomes(&tree)
            .iter()
            .map(|x| m.atomic_probability(x).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }
}

#[test]
fn atomic_probability_matches_explicit_walk() {
    let sim = random_k_parents_model(4, 2, &[2, 3, 2, 3], 0.5, 8).unwrap();
    let dist = sim.model.leaf_distribution();
    for (l, x) in outcomes(sim.model.tree()).iter().enumerate() {
        let p = sim.model.atomic_probability(x).unwrap();
        assert!((p - leaf_probability(&sim.model, x)).abs() < 1e-15);
        assert!((p - dist[l]).abs() < 1e-15);
    }
}

#[test]
fn two_means_matches_exhaustive_scan() {
    let values = [1.0, 2.0, 8.0, 9.0, 10.0];
    // oracle: every 2-colouring, cost = within-cluster sum of squares
    let mut best = (f64::INFINITY, 0u32);
    for mask in 1u32..(1 << values.len()) - 1 {
        let mut cost = 0.0;
        for side in 0..2 {
            let group: Vec<f64> = (0..values.len())
                .filter(|&i| (mask >> i & 1) == side)
                .map(|i| values[i])
                .collect();
            let mean = group.iter().sum::<f64>() / group.len() as f64;
            cost += group.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        }
        if cost < best.0 {
            best = (cost, mask);
        }
    }
    let mask = best.1;
    // orient so the cluster holding the minimum is 0
    let expect: Vec<u32> = (0..values.len())
        .map(|i| ((mask >> i & 1) != (mask & 1)) as u32)
        .collect();
    assert_eq!(expect, [0, 0, 1, 1, 1]);
    assert_eq!(binarize_two_means(&values).unwrap().0, expect);
}

#[test]
fn loglik_equals_sum_of_record_log_probabilities() {
    for seed in 0..5 {
        let sim = random_k_parents_model(5, 2, &[2, 3, 2, 2, 3], 0.5, seed).unwrap();
        let data = sample(&sim.model, 300, seed + 100);
        let tree = sim.model.tree();
        let staging = sim.model.staging();
        let fitted = fit_mle(tree, staging, &data, 0.0).unwrap();
        let direct: f64 = rows(&data)
            .iter()
            .map(|r| fitted.atomic_probability(r).unwrap().ln())
            .sum();
        let ll = log_likelihood(tree, staging, &data).unwrap();
        assert!((ll - direct).abs() < 1e-9, "{ll} vs {direct}");
    }
}

#[test]
fn saturated_loglik_is_contingency_loglik() {
    for p in 1..=4 {
        let tree = EventTree::binary(p).unwrap();
        let m = random_parameters(&tree, &Staging::saturated(&tree), p as u64).unwrap();
        let data = sample(&m, 500, 3);
        let ll = log_likelihood(&tree, &Staging::saturated(&tree), &data).unwrap();
        assert!((ll - contingency_loglik(&data)).abs() < 1e-9);
    }
}

#[test]
fn saturated_bic_equals_complete_dag_bic() {
    let tree = EventTree::with_cardinalities(&[2, 3, 2, 2]).unwrap();
    let m = random_parameters(&tree, &Staging::saturated(&tree), 4).unwrap();
    let data = sample(&m, 800, 5);
    let s = score(&tree, &Staging::saturated(&tree), &data).unwrap();
    let complete: Vec<Vec<usize>> = (0..4).map(|j| (0..j).collect()).collect();
    assert!((s.bic - bn_bic(&data, &complete)).abs() < 1e-8);
    // and every DAG's staged tree scores like the DAG itself
    let g = Dag::from_edges(4, &[(0, 2), (1, 3), (2, 3)]).unwrap();
    let s = score(&tree, &staged_tree_of_dag(&g, &tree).unwrap(), &data).unwrap();
    assert!((s.bic - bn_bic(&data, g.parent_sets())).abs() < 1e-8);
}

#[test]
fn bn_joint_matches_staged_tree_of_dag() {
    let mut r = rng(77);
    for trial in 0..20 {
        let p = r.random_range(1..=5);
        let cards: Vec<usize> = (0..p).map(|_| r.random_range(2..=3)).collect();
        let g = random_dag(p, 3, trial);
        let tables: Vec<Vec<Vec<f64>>> = (0..p)
            .map(|j| {
                let configs: usize = g.parents(j).iter().map(|&i| cards[i]).product();
                (0..configs)
                    .map(|_| uniform_simplex(&mut r, cards[j]))
                    .collect()
            })
            .collect();
        let joint = bn_joint_of_dag(&g, &cards, &tables).unwrap();
        let tree = EventTree::with_cardinalities(&cards).unwrap();
        let staging = staged_tree_of_dag(&g, &tree).unwrap();
        let params = (0..p)
            .map(|d| {
                staging
                    .members(d)
                    .iter()
                    .map(|vs| {
                        let prefix = tree.prefix_of(d, vs[0]);
                        let mut x = prefix.clone();
                        x.resize(p, 0);
                        tables[d][parent_config(g.parents(d), &cards, &x)].clone()
                    })
                    .collect()
            })
            .collect();
        let model = StagedTree::new(tree, staging, params).unwrap();
        for (a, b) in model.leaf_distribution().iter().zip(&joint) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn hand_tally_counts() {
    let tree = EventTree::binary(2).unwrap();
    let data = Dataset::new(
        binary_schema(2),
        &[vec![0, 0], vec![0, 0], vec![0, 0], vec![1, 1], vec![1, 1]],
    )
    .unwrap();
    let c = count_stages(&data, &tree, &Staging::independence(&tree)).unwrap();
    assert_eq!(c.stage(1, 0), [3, 2]);
}

#[test]
fn bhc_is_near_the_exhaustive_optimum() {
    let tree = EventTree::binary(3).unwrap();
    assert_eq!(set_partitions(2).len() * set_partitions(4).len(), 30);
    for seed in 0..5 {
        let m = random_parameters(&tree, &Staging::saturated(&tree), seed).unwrap();
        let data = sample(&m, 1000, seed + 50);
        let (best, best_bic) = exhaustive_best_staging(&tree, &data);
        let (found, _) = bhc(&tree, &Staging::saturated(&tree), &data).unwrap();
        let found_bic = staging_bic(&tree, &found, &data);
        assert!(found_bic >= best_bic - 1e-9);
        assert!((staging_bic(&tree, &best, &data) - best_bic).abs() < 1e-9);
    }
}

#[test]
fn hc_dag_finds_best_three_node_dag() {
    // strong chain X1 -> X2 -> X3
    let tree = EventTree::binary(3).unwrap();
    let g = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let staging = staged_tree_of_dag(&g, &tree).unwrap();
    let params = vec![
        vec![vec![0.4, 0.6]],
        vec![vec![0.9, 0.1], vec![0.15, 0.85]],
        vec![vec![0.8, 0.2], vec![0.1, 0.9]],
    ];
    let m = StagedTree::new(tree, staging, params).unwrap();
    let data = sample(&m, 5000, 21);
    let dags = all_three_node_dags();
    assert_eq!(dags.len(), 25);
    let best = dags
        .iter()
        .map(|ps| bn_bic(&data, ps))
        .fold(f64::INFINITY, f64::min);
    let learned = hc_dag(&data, &HcDagOptions::default()).unwrap();
    let mut parents = vec![Vec::new(); 3];
    for (t, &j) in learned.order.iter().enumerate() {
        parents[j] = learned
            .dag
            .parents(t)
            .iter()
            .map(|&i| learned.order[i])
            .collect();
    }
    assert!((bn_bic(&data, &parents) - best).abs() < 1e-6);
    assert_eq!(learned.dag.n_edges(), 2);
}

#[test]
fn independent_data_yields_independence_staging() {
    let tree = EventTree::binary(4).unwrap();
    let m = random_parameters(&tree, &Staging::independence(&tree), 5).unwrap();
    let data = sample(&m, 10_000, 6);
    let (oracle, _) = exhaustive_best_staging(&tree, &data);
    assert_eq!(oracle, Staging::independence(&tree));
    for k in 1..=3 {
        let fit = learn_k_parents(
            &data,
            &KParentsOptions {
                order: Some(vec![0, 1, 2, 3]),
                ..KParentsOptions::new(k)
            },
        )
        .unwrap();
        assert_eq!(fit.model.staging(), &oracle);
    }
}

#[test]
fn pipeline_recovers_better_than_its_starting_dag() {
    let (mut pipeline, mut dag_only) = (0.0, 0.0);
    for rep in 0..20 {
        let sim = random_k_parents_model(6, 2, &[2; 6], 0.5, 1000 + rep).unwrap();
        let data = sample(&sim.model, 10_000, 2000 + rep);
        let fit = learn_k_parents(
            &data,
            &KParentsOptions {
                order: Some((0..6).collect()),
                ..KParentsOptions::new(2)
            },
        )
        .unwrap();
        let tree = sim.model.tree();
        pipeline += normalized_hamming(tree, fit.model.staging(), sim.model.staging()).unwrap();
        dag_only += normalized_hamming(tree, &fit.dag_staging, sim.model.staging()).unwrap();
    }
    assert!(
        pipeline / 20.0 < dag_only / 20.0,
        "{pipeline} vs {dag_only}"
    );
}

#[test]
fn parent_counts_are_uniform() {
    let (p, k, draws) = (5usize, 2usize, 10_000usize);
    let mut freq = vec![vec![0usize; k + 1]; p];
    for seed in 0..draws as u64 {
        let g = random_dag(p, k, seed);
        for (j, row) in freq.iter_mut().enumerate() {
            row[g.parents(j).len()] += 1;
        }
    }
    for (j, row) in freq.iter().enumerate() {
        let m = k.min(j) + 1;
        let q = 1.0 / m as f64;
        let sigma = (draws as f64 * q * (1.0 - q)).sqrt();
        for (size, &count) in row.iter().enumerate() {
            if size < m {
                assert!((count as f64 - draws as f64 * q).abs() <= 3.0 * sigma.max(1.0));
            } else {
                assert_eq!(count, 0);
            }
        }
    }
}

#[test]
fn merged_stagings_stay_inside_the_dag() {
    for p in 1..=6 {
        let tree = EventTree::binary(p).unwrap();
        for seed in 0..20 {
            let g = random_dag(p, 3, seed);
            let s = staged_tree_of_dag(&g, &tree).unwrap();
            let merged = random_merge_staging(&tree, &s, 0.5, seed + 7).unwrap();
            assert!(minimal_dag(&tree, &merged).is_subgraph_of(&g));
        }
    }
}

#[test]
fn simplex_draws_are_symmetric() {
    let mut r = rng(3);
    let (draws, c) = (20_000, 3);
    let mut sums = vec![0.0; c];
    for _ in 0..draws {
        for (s, q) in sums.iter_mut().zip(uniform_simplex(&mut r, c)) {
            *s += q;
        }
    }
    // coordinate of a flat Dirichlet(1,1,1): mean 1/3, variance 1/18
    let sigma = (1.0 / 18.0 / draws as f64).sqrt();
    for s in sums {
        assert!((s / draws as f64 - 1.0 / 3.0).abs() < 3.0 * sigma);
    }
}

#[test]
fn sampled_frequencies_match_leaf_probabilities() {
    let tree = EventTree::binary(3).unwrap();
    let m = random_parameters(&tree, &Staging::saturated(&tree), 12).unwrap();
    let n = 50_000;
    let data = sample(&m, n, 13);
    let mut counts = [0usize; 8];
    for r in rows(&data) {
        counts[tree.vertex_of_prefix(&r)] += 1;
    }
    for (l, x) in outcomes(&tree).iter().enumerate() {
        let q = leaf_probability(&m, x);
        let sigma = (n as f64 * q * (1.0 - q)).sqrt();
        assert!((counts[l] as f64 - n as f64 * q).abs() <= 4.0 * sigma);
    }
}

#[test]
fn distinct_seeds_give_distinct_stagings() {
    let mut differ = 0;
    for pair in 0..100u64 {
        let a = random_k_parents_model(6, 2, &[2; 6], 0.5, 2 * pair).unwrap();
        let b = random_k_parents_model(6, 2, &[2; 6], 0.5, 2 * pair + 1).unwrap();
        if a.model.staging() != b.model.staging() {
            differ += 1;
        }
    }
    assert!(differ >= 95, "{differ}");
}

#[test]
fn mle_converges_to_generating_parameters() {
    for seed in 0..3 {
        let sim = random_k_parents_model(4, 2, &[2; 4], 0.5, seed).unwrap();
        let data = sample(&sim.model, 100_000, seed + 9);
        let fitted = fit_mle(sim.model.tree(), sim.model.staging(), &data, 0.0).unwrap();
        for d in 0..4 {
            for s in 0..sim.model.staging().n_stages(d) {
                for (a, b) in fitted
                    .stage_vector(d, s)
                    .iter()
                    .zip(sim.model.stage_vector(d, s))
                {
                    assert!((a - b).abs() < 0.02);
                }
            }
        }
    }
}

#[test]
fn hamming_matches_brute_force_on_small_depths() {
    let tree = EventTree::binary(4).unwrap();
    let mut r = rng(5);
    for _ in 0..50 {
        let draw = |r: &mut rand_chacha::ChaCha8Rng| {
            let a = (0..4)
                .map(|d| {
                    let m = r.random_range(1..=tree.width(d) as u32);
                    (0..tree.width(d)).map(|_| r.random_range(0..m)).collect()
                })
                .collect();
            Staging::new(&tree, a).unwrap()
        };
        let (a, b) = (draw(&mut r), draw(&mut r));
        let expect: f64 = (1..4)
            .map(|d| brute_partition_distance(a.depth(d), b.depth(d)) as f64 / tree.width(d) as f64)
            .sum();
        assert!((normalized_hamming(&tree, &a, &b).unwrap() - expect).abs() < 1e-12);
    }
}

#[test]
fn two_vertex_split_distance() {
    // recolouring brute force over the two depth-1 vertices
    let tree = EventTree::binary(2).unwrap();
    let a = Staging::new(&tree, vec![vec![0], vec![0, 0]]).unwrap();
    let b = Staging::new(&tree, vec![vec![0], vec![0, 1]]).unwrap();
    assert_eq!(brute_partition_distance(a.depth(1), b.depth(1)), 1);
    assert_eq!(normalized_hamming(&tree, &a, &b).unwrap(), 0.5);
}

#[test]
fn marginal_matches_brute_force_marginal() {
    for seed in 0..20 {
        let sim = random_k_parents_model(5, 2, &[2; 5], 0.5, seed).unwrap();
        let g = minimal_dag(sim.model.tree(), sim.model.staging());
        // keep the last variable plus its parents, closed upward
        let mut keep: Vec<usize> = vec![4];
        let mut frontier = vec![4];
        while let Some(j) = frontier.pop() {
            for &i in g.parents(j) {
                if !keep.contains(&i) {
                    keep.push(i);
                    frontier.push(i);
                }
            }
        }
        keep.sort_unstable();
        let sub = sim.model.marginal(&keep).unwrap();
        let full = sim.model.leaf_distribution();
        let mut brute = vec![0.0; sub.tree().n_leaves()];
        for (l, x) in outcomes(sim.model.tree()).iter().enumerate() {
            let kx: Vec<usize> = keep.iter().map(|&i| x[i]).collect();
            brute[sub.tree().vertex_of_prefix(&kx)] += full[l];
        }
        for (l, x) in outcomes(sub.tree()).iter().enumerate() {
            assert!((sub.atomic_probability(x).unwrap() - brute[l]).abs() < 1e-12);
        }
    }
}

#[test]
fn marginal_over_risk_and_its_parents() {
    // nine variables; R (last) depends on H and C only
    let names = ["H", "C", "V", "E", "P", "F", "M", "B", "R"];
    let vars: Vec<_> = names
        .iter()
        .map(|n| stagedtree::VariableSpec::with_cardinality(*n, 2).unwrap())
        .collect();
    let tree = EventTree::new(vars).unwrap();
    let g = Dag::from_edges(
        9,
        &[
            (0, 1),
            (1, 2),
            (0, 3),
            (2, 4),
            (3, 5),
            (4, 6),
            (5, 7),
            (6, 7),
            (0, 8),
            (1, 8),
        ],
    )
    .unwrap();
    let staging = staged_tree_of_dag(&g, &tree).unwrap();
    let merged = random_merge_staging(&tree, &staging, 0.3, 4).unwrap();
    let m = random_parameters(&tree, &merged, 4).unwrap();
    assert!(stagedtree::is_k_parents(&tree, m.staging(), 2));
    let sub = m.marginal(&[0, 1, 8]).unwrap();
    assert_eq!(sub.tree().n_leaves(), 8);
    assert_eq!(sub.tree().variable(2).name(), "R");
}
