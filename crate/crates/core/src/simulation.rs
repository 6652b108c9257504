//! Random k-parents staged trees and sequential sampling.
//!
//! All randomness comes from `ChaCha8Rng` seeded with a `u64`, so a seed and
//! a parameter set pin every output bit-for-bit across platforms.

use rand::seq::{index, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::dag::{self, Dag};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tree::{EventTree, StagedTree, Staging};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministic seed for a labelled sub-stream of `seed`.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    // splitmix64 finalizer over the folded labels
    let mut z = seed;
    for &l in labels {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(l);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// For each `j`, draws a parent count uniformly from `0..=min(k, j)` and
/// then a uniform subset of that size from the earlier variables.
pub fn random_dag(p: usize, k: usize, seed: u64) -> Dag {
    let mut rng = rng(seed);
    let parents = (0..p)
        .map(|j| {
            let m = rng.random_range(0..=k.min(j));
            let mut ps = index::sample(&mut rng, j, m).into_vec();
            ps.sort_unstable();
            ps
        })
        .collect();
    Dag::new(parents).expect("parents precede children by construction")
}

/// Randomly coarsens a staging. At each depth the stages are visited in a
/// random order; the first is kept and every later one is, with
/// probability `merge_prob`, merged into a uniformly chosen kept stage.
pub fn random_merge_staging(
    tree: &EventTree,
    staging: &Staging,
    merge_prob: f64,
    seed: u64,
) -> Result<Staging> {
    if !(0.0..=1.0).contains(&merge_prob) {
        return Err(Error::InvalidArgument(format!(
            "merge probability {merge_prob} outside [0, 1]"
        )));
    }
    if !staging.matches_tree(tree) {
        return Err(Error::SchemaMismatch(
            "staging does not match the event tree".to_string(),
        ));
    }
    let mut rng = rng(seed);
    let mut assignments = Vec::with_capacity(tree.p());
    for d in 0..tree.p() {
        let m = staging.n_stages(d);
        let mut visit: Vec<u32> = (0..m as u32).collect();
        visit.shuffle(&mut rng);
        let mut target: Vec<u32> = (0..m as u32).collect();
        let mut kept: Vec<u32> = Vec::with_capacity(m);
        for (t, &s) in visit.iter().enumerate() {
            if t > 0 && rng.random_bool(merge_prob) {
                target[s as usize] = kept[rng.random_range(0..kept.len())];
            } else {
                kept.push(s);
            }
        }
        assignments.push(
            staging
                .depth(d)
                .iter()
                .map(|&s| target[s as usize])
                .collect(),
        );
    }
    Staging::new(tree, assignments)
}

/// Draws a point uniformly from the probability simplex of dimension `c - 1`.
pub fn uniform_simplex<R: Rng + ?Sized>(rng: &mut R, c: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..c).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    let mut probs: Vec<f64> = draws.iter().map(|x| x / total).collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|q| *q /= sum);
    probs
}

/// Independent uniform-simplex distributions for every stage.
pub fn random_parameters(tree: &EventTree, staging: &Staging, seed: u64) -> Result<StagedTree> {
    let mut rng = rng(seed);
    let params = (0..tree.p())
        .map(|d| {
            (0..staging.n_stages(d))
                .map(|_| uniform_simplex(&mut rng, tree.cardinality(d)))
                .collect()
        })
        .collect();
    StagedTree::new(tree.clone(), staging.clone(), params)
}

fn draw<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (x, &q) in probs.iter().enumerate() {
        acc += q;
        if u < acc {
            return x;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    probs
        .iter()
        .rposition(|&q| q > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Sequential sampling: each record walks from the root to a leaf, drawing
/// every variable from the stage of the current vertex.
pub fn sample(model: &StagedTree, n: usize, seed: u64) -> Dataset {
    let tree = model.tree();
    let staging = model.staging();
    let mut rng = rng(seed);
    let mut codes = Vec::with_capacity(n * tree.p());
    for _ in 0..n {
        let mut v = 0;
        for d in 0..tree.p() {
            let x = draw(&mut rng, model.stage_vector(d, staging.stage_of(d, v)));
            codes.push(x as u32);
            v = tree.child(d, v, x);
        }
    }
    Dataset::from_codes(tree.variables().to_vec(), codes).expect("sampled codes are in range")
}

/// A generated model together with the DAG drawn in its first step.
#[derive(Clone, Debug)]
pub struct SimulatedModel {
    pub dag: Dag,
    pub model: StagedTree,
}

/// The four-step generator: random DAG, its staged tree, random stage
/// merges, uniform-simplex parameters.
pub fn random_k_parents_model(
    p: usize,
    k: usize,
    cards: &[usize],
    merge_prob: f64,
    seed: u64,
) -> Result<SimulatedModel> {
    if cards.len() != p {
        return Err(Error::InvalidArgument(format!(
            "{} cardinalities given for {p} variables",
            cards.len()
        )));
    }
    let mut master = rng(seed);
    let (dag_seed, merge_seed, param_seed) =
        (master.next_u64(), master.next_u64(), master.next_u64());
    let tree = EventTree::with_cardinalities(cards)?;
    let dag = random_dag(p, k, dag_seed);
    let staging = dag::staged_tree_of_dag(&dag, &tree)?;
    let merged = random_merge_staging(&tree, &staging, merge_prob, merge_seed)?;
    let model = random_parameters(&tree, &merged, param_seed)?;
    Ok(SimulatedModel { dag, model })
}
