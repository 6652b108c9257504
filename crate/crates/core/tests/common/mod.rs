//! Independent oracles shared by the integration tests. Nothing here calls
//! the code path it is used to check.

#![allow(dead_code)]

use std::collections::HashMap;

use stagedtree::{Dataset, EventTree, StagedTree, Staging, VariableSpec};

pub fn binary_schema(p: usize) -> Vec<VariableSpec> {
    (0..p)
        .map(|i| VariableSpec::with_cardinality(format!("X{}", i + 1), 2).unwrap())
        .collect()
}

/// All set partitions of `0..n` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, max: u32, n: usize, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for s in 0..=max + 1 {
            prefix.push(s);
            rec(prefix, max.max(s), n, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut prefix = vec![0];
    rec(&mut prefix, 0, n, &mut out);
    out
}

/// Smallest number of vertices to relabel in `a` so that it induces the
/// same partition as `b`, by trying every set of vertices to leave alone.
pub fn brute_partition_distance(a: &[u32], b: &[u32]) -> usize {
    let n = a.len();
    assert!(n <= 16);
    let mut best = n;
    for keep in 0u32..(1 << n) {
        let kept: Vec<usize> = (0..n).filter(|&v| keep >> v & 1 == 1).collect();
        let consistent = kept
            .iter()
            .all(|&u| kept.iter().all(|&w| (a[u] == a[w]) == (b[u] == b[w])));
        if consistent {
            best = best.min(n - kept.len());
        }
    }
    best
}

/// Records as usize rows.
pub fn rows(data: &Dataset) -> Vec<Vec<usize>> {
    data.records()
        .map(|r| r.iter().map(|&c| c as usize).collect())
        .collect()
}

fn xlogx_ratio(
    counts: &HashMap<Vec<usize>, f64>,
    totals: &HashMap<Vec<usize>, f64>,
    key_of: impl Fn(&Vec<usize>) -> Vec<usize>,
) -> f64 {
    counts
        .iter()
        .map(|(k, &c)| c * (c / totals[&key_of(k)]).ln())
        .sum()
}

/// Log-likelihood of the full contingency table, `sum_x n(x) ln(n(x)/n)`.
pub fn contingency_loglik(data: &Dataset) -> f64 {
    let mut counts: HashMap<Vec<usize>, f64> = HashMap::new();
    for r in rows(data) {
        *counts.entry(r).or_default() += 1.0;
    }
    let n = data.n() as f64;
    counts.values().map(|&c| c * (c / n).ln()).sum()
}

/// BIC of a Bayesian network given parent sets over column indices,
/// counting every parent configuration toward the free parameters.
pub fn bn_bic(data: &Dataset, parents: &[Vec<usize>]) -> f64 {
    let cards: Vec<usize> = data.schema().iter().map(|v| v.cardinality()).collect();
    let n = data.n() as f64;
    let rows = rows(data);
    let mut total = 0.0;
    for (j, ps) in parents.iter().enumerate() {
        let mut joint: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut marg: HashMap<Vec<usize>, f64> = HashMap::new();
        for r in &rows {
            let cfg: Vec<usize> = ps.iter().map(|&i| r[i]).collect();
            let mut key = cfg.clone();
            key.push(r[j]);
            *joint.entry(key).or_default() += 1.0;
            *marg.entry(cfg).or_default() += 1.0;
        }
        let ll = xlogx_ratio(&joint, &marg, |k| k[..k.len() - 1].to_vec());
        let configs: usize = ps.iter().map(|&i| cards[i]).product();
        total += -2.0 * ll + (configs * (cards[j] - 1)) as f64 * n.ln();
    }
    total
}

/// Every DAG on three labelled vertices (25 of them), as parent sets.
pub fn all_three_node_dags() -> Vec<Vec<Vec<usize>>> {
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let mut out = Vec::new();
    for code in 0..27 {
        let mut parents = vec![Vec::new(); 3];
        let mut c = code;
        for &(a, b) in &pairs {
            match c % 3 {
                1 => parents[b].push(a),
                2 => parents[a].push(b),
                _ => {}
            }
            c /= 3;
        }
        if is_acyclic(&parents) {
            out.push(parents);
        }
    }
    out
}

pub fn is_acyclic(parents: &[Vec<usize>]) -> bool {
    let p = parents.len();
    let mut done = vec![false; p];
    for _ in 0..p {
        match (0..p).find(|&j| !done[j] && parents[j].iter().all(|&i| done[i])) {
            Some(j) => done[j] = true,
            None => return false,
        }
    }
    true
}

/// Leaf probability by an explicit walk, independent of the library's
/// own evaluation routine.
pub fn leaf_probability(model: &StagedTree, x: &[usize]) -> f64 {
    let tree = model.tree();
    let mut prob = 1.0;
    for d in 0..tree.p() {
        let vertex = tree.vertex_of_prefix(&x[..d]);
        prob *= model.stage_vector(d, model.staging().stage_of(d, vertex))[x[d]];
    }
    prob
}

/// All outcomes of a tree in leaf-index order.
pub fn outcomes(tree: &EventTree) -> Vec<Vec<usize>> {
    (0..tree.n_leaves())
        .map(|l| tree.prefix_of(tree.p(), l))
        .collect()
}

/// BIC of a staging from first principles: per-stage counts gathered by
/// walking each record, then `-2 sum n ln(n/n_s) + stages (|X|-1) ln n`.
pub fn staging_bic(tree: &EventTree, staging: &Staging, data: &Dataset) -> f64 {
    let n = data.n() as f64;
    let mut ll = 0.0;
    let mut dof = 0usize;
    for d in 0..tree.p() {
        let c = tree.cardinality(d);
        let mut counts = vec![vec![0f64; c]; staging.n_stages(d)];
        for r in rows(data) {
            let v = tree.vertex_of_prefix(&r[..d]);
            counts[staging.stage_of(d, v)][r[d]] += 1.0;
        }
        for row in &counts {
            let tot: f64 = row.iter().sum();
            for &k in row {
                if k > 0.0 {
                    ll += k * (k / tot).ln();
                }
            }
        }
        dof += staging.n_stages(d) * (c - 1);
    }
    -2.0 * ll + dof as f64 * n.ln()
}

/// Per-depth exhaustive minimum of the staging BIC over all partitions of
/// the depth's vertices (the score decomposes over depths).
pub fn exhaustive_best_staging(tree: &EventTree, data: &Dataset) -> (Staging, f64) {
    let n = data.n() as f64;
    let mut assignments = Vec::new();
    let mut total = 0.0;
    for d in 0..tree.p() {
        let c = tree.cardinality(d);
        let mut vertex_counts = vec![vec![0f64; c]; tree.width(d)];
        for r in rows(data) {
            vertex_counts[tree.vertex_of_prefix(&r[..d])][r[d]] += 1.0;
        }
        let mut best: Option<(f64, Vec<u32>)> = None;
        for part in set_partitions(tree.width(d)) {
            let m = *part.iter().max().unwrap() as usize + 1;
            let mut counts = vec![vec![0f64; c]; m];
            for (v, &s) in part.iter().enumerate() {
                for x in 0..c {
                    counts[s as usize][x] += vertex_counts[v][x];
                }
            }
            let mut ll = 0.0;
            for row in &counts {
                let tot: f64 = row.iter().sum();
                for &k in row {
                    if k > 0.0 {
                        ll += k * (k / tot).ln();
                    }
                }
            }
            let bic = -2.0 * ll + (m * (c - 1)) as f64 * n.ln();
            if best.as_ref().is_none_or(|(b, _)| bic < *b) {
                best = Some((bic, part));
            }
        }
        let (bic, part) = best.unwrap();
        total += bic;
        assignments.push(part);
    }
    (Staging::new(tree, assignments).unwrap(), total)
}
