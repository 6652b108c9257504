//! Conversions between DAGs and stagings in a fixed variable order.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tree::{EventTree, Staging};

/// A DAG whose vertices `0..p` are already in topological order: every
/// parent index is smaller than its child.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn new(mut parents: Vec<Vec<usize>>) -> Result<Self> {
        for (j, ps) in parents.iter_mut().enumerate() {
            ps.sort_unstable();
            if ps.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidDag(format!("duplicate parent of vertex {j}")));
            }
            if let Some(&i) = ps.iter().find(|&&i| i >= j) {
                return Err(Error::InvalidDag(format!(
                    "edge {i} -> {j} does not respect the topological order"
                )));
            }
        }
        Ok(Dag { parents })
    }

    pub fn empty(p: usize) -> Self {
        Dag {
            parents: vec![Vec::new(); p],
        }
    }

    pub fn complete(p: usize) -> Self {
        Dag {
            parents: (0..p).map(|j| (0..j).collect()).collect(),
        }
    }

    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut parents = vec![Vec::new(); p];
        for &(i, j) in edges {
            if j >= p {
                return Err(Error::InvalidDag(format!("vertex {j} out of range")));
            }
            parents[j].push(i);
        }
        Self::new(parents)
    }

    pub fn p(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, j: usize) -> &[usize] {
        &self.parents[j]
    }

    pub fn parent_sets(&self) -> &[Vec<usize>] {
        &self.parents
    }

    /// Edges `(parent, child)` sorted by child, then parent.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(j, ps)| ps.iter().map(move |&i| (i, j)))
            .collect()
    }

    pub fn n_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn max_in_degree(&self) -> usize {
        self.parents.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_subgraph_of(&self, other: &Dag) -> bool {
        self.p() == other.p()
            && self
                .parents
                .iter()
                .zip(&other.parents)
                .all(|(a, b)| a.iter().all(|i| b.contains(i)))
    }
}

/// Staging of the staged tree equivalent to `dag`: two vertices at depth
/// `j` share a stage iff they agree on the parents of variable `j`.
pub fn staged_tree_of_dag(dag: &Dag, tree: &EventTree) -> Result<Staging> {
    staged_tree_of_dag_with(dag, tree, Exec::default())
}

pub fn staged_tree_of_dag_with(dag: &Dag, tree: &EventTree, exec: Exec) -> Result<Staging> {
    if dag.p() != tree.p() {
        return Err(Error::SchemaMismatch(format!(
            "DAG has {} vertices, tree has {} variables",
            dag.p(),
            tree.p()
        )));
    }
    let assignments = exec.map_range(tree.p(), |j| {
        let coords: Vec<(usize, usize)> = dag
            .parents(j)
            .iter()
            .map(|&i| (tree.stride(j, i), tree.cardinality(i)))
            .collect();
        (0..tree.width(j))
            .map(|v| {
                coords.iter().fold(0usize, |acc, &(stride, card)| {
                    acc * card + (v / stride) % card
                }) as u32
            })
            .collect::<Vec<u32>>()
    });
    Staging::new(tree, assignments)
}

/// Minimal DAG, in the tree's variable order, whose BN model contains the
/// staged tree model: `i` is a parent of `j` iff some two depth-`j`
/// vertices differing only in coordinate `i` sit in different stages.
pub fn minimal_dag(tree: &EventTree, staging: &Staging) -> Dag {
    minimal_dag_with(tree, staging, Exec::default())
}

pub fn minimal_dag_with(tree: &EventTree, staging: &Staging, exec: Exec) -> Dag {
    let parents = exec.map_range(tree.p(), |j| {
        let stages = staging.depth(j);
        (0..j)
            .filter(|&i| varies_along(stages, tree.stride(j, i), tree.cardinality(i)))
            .collect()
    });
    Dag { parents }
}

/// Axis sweep: does the stage change when only the digit with the given
/// stride and radix changes?
fn varies_along(stages: &[u32], stride: usize, card: usize) -> bool {
    let block = stride * card;
    stages.chunks(block).any(|chunk| {
        let (base, rest) = chunk.split_at(stride);
        rest.chunks(stride).any(|other| other != base)
    })
}

pub fn is_k_parents(tree: &EventTree, staging: &Staging, k: usize) -> bool {
    minimal_dag(tree, staging).max_in_degree() <= k
}

/// Index of a parent configuration; the first parent is the most significant digit.
pub fn parent_config(parents: &[usize], cards: &[usize], x: &[usize]) -> usize {
    parents.iter().fold(0, |acc, &i| acc * cards[i] + x[i])
}

/// Joint distribution of a Bayesian network by direct factorization.
///
/// `tables[j][c]` is the distribution of `X_j` under parent configuration
/// `c` (see [`parent_config`]). The result is indexed like the leaves of
/// the event tree over `cards`.
pub fn bn_joint_of_dag(dag: &Dag, cards: &[usize], tables: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    if dag.p() != cards.len() || tables.len() != cards.len() {
        return Err(Error::SchemaMismatch(
            "DAG, cardinalities and tables disagree in size".to_string(),
        ));
    }
    for (j, table) in tables.iter().enumerate() {
        let configs: usize = dag.parents(j).iter().map(|&i| cards[i]).product();
        if table.len() != configs {
            return Err(Error::InvalidParams(format!(
                "table for vertex {j} has {} rows, expected {configs}",
                table.len()
            )));
        }
        for row in table {
            let sum: f64 = row.iter().sum();
            if row.len() != cards[j]
                || row.iter().any(|q| !(0.0..=1.0).contains(q))
                || (sum - 1.0).abs() > crate::tree::SIMPLEX_TOL
            {
                return Err(Error::InvalidParams(format!(
                    "table for vertex {j} is not row-stochastic"
                )));
            }
        }
    }
    let total: usize = cards.iter().product();
    let mut joint = Vec::with_capacity(total);
    let mut x = vec![0usize; cards.len()];
    for _ in 0..total {
        let prob = (0..cards.len())
            .map(|j| tables[j][parent_config(dag.parents(j), cards, &x)][x[j]])
            .product();
        joint.push(prob);
        // odometer, last coordinate fastest
        for j in (0..cards.len()).rev() {
            x[j] += 1;
            if x[j] < cards[j] {
                break;
            }
            x[j] = 0;
        }
    }
    Ok(joint)
}
