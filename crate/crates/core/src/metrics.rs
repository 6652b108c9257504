//! Distances between stagings of the same event tree.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tree::{EventTree, Staging};

/// Minimum-cost perfect assignment on a square matrix (Hungarian method
/// with potentials, O(n^3)). Returns `assignment[row] = column`.
pub fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual source column
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[matched[j] - 1] = j - 1;
    }
    assignment
}

/// Fewest vertices whose stage must change in `a` to reproduce the
/// partition `b`: the vertex count minus a maximum-weight matching of the
/// stage blocks, weighted by block intersection sizes.
pub fn partition_distance(a: &[u32], b: &[u32]) -> usize {
    assert_eq!(a.len(), b.len(), "partitions over different vertex sets");
    let ma = a.iter().max().map_or(0, |&s| s as usize + 1);
    let mb = b.iter().max().map_or(0, |&s| s as usize + 1);
    let size = ma.max(mb);
    let mut weight = vec![vec![0i64; size]; size];
    for (&x, &y) in a.iter().zip(b) {
        weight[x as usize][y as usize] += 1;
    }
    let cost: Vec<Vec<i64>> = weight
        .iter()
        .map(|row| row.iter().map(|&w| -w).collect())
        .collect();
    let assignment = min_cost_assignment(&cost);
    let matched: i64 = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| weight[r][c])
        .sum();
    a.len() - matched as usize
}

/// Sum over depths of the fraction of vertices that must be recoloured to
/// turn one staging into the other. Label-free and symmetric.
pub fn normalized_hamming(tree: &EventTree, a: &Staging, b: &Staging) -> Result<f64> {
    normalized_hamming_with(tree, a, b, Exec::default())
}

pub fn normalized_hamming_with(
    tree: &EventTree,
    a: &Staging,
    b: &Staging,
    exec: Exec,
) -> Result<f64> {
    if !a.matches_tree(tree) || !b.matches_tree(tree) {
        return Err(Error::SchemaMismatch(
            "stagings are not over the given event tree".to_string(),
        ));
    }
    // depth 0 always has a single stage
    let per_depth = exec.map_range(tree.p().saturating_sub(1), |i| {
        let d = i + 1;
        partition_distance(a.depth(d), b.depth(d)) as f64 / tree.width(d) as f64
    });
    Ok(per_depth.iter().sum())
}

/// The context intervention distance is defined elsewhere and not provided.
pub fn context_intervention_distance(_tree: &EventTree, _a: &Staging, _b: &Staging) -> Result<f64> {
    Err(Error::NotImplemented("context intervention distance"))
}
