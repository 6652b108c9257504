//! Event trees, stagings and staged tree models.
//!
//! Vertices are never materialised. A depth-`d` vertex is the value prefix
//! `(x_0, .., x_{d-1})` and is addressed by its mixed-radix index with the
//! first variable most significant, so the children of vertex `v` at depth
//! `d` are `v * |X_d| + x_d`.

use std::collections::HashMap;

use crate::dag;
use crate::error::{Error, Result};

/// Tolerance on the sum of a stage probability vector.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariableSpec {
    name: String,
    levels: Vec<String>,
}

impl VariableSpec {
    pub fn new(name: impl Into<String>, levels: Vec<String>) -> Result<Self> {
        let name = name.into();
        if levels.len() < 2 {
            return Err(Error::TooFewLevels {
                name,
                count: levels.len(),
            });
        }
        for (i, level) in levels.iter().enumerate() {
            if levels[..i].contains(level) {
                return Err(Error::DuplicateLevel {
                    name,
                    level: level.clone(),
                });
            }
        }
        Ok(VariableSpec { name, levels })
    }

    /// A variable whose levels are labelled `0`, `1`, ... `cardinality - 1`.
    pub fn with_cardinality(name: impl Into<String>, cardinality: usize) -> Result<Self> {
        Self::new(name, (0..cardinality).map(|c| c.to_string()).collect())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn cardinality(&self) -> usize {
        self.levels.len()
    }

    pub fn code_of(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventTree {
    variables: Vec<VariableSpec>,
    cards: Vec<usize>,
    /// `widths[d]` is the number of depth-`d` vertices, `d = 0..=p`.
    widths: Vec<usize>,
}

impl EventTree {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::NoVariables);
        }
        let cards: Vec<usize> = variables.iter().map(|v| v.cardinality()).collect();
        let mut widths = Vec::with_capacity(cards.len() + 1);
        widths.push(1usize);
        for &c in &cards {
            let last = *widths.last().unwrap();
            let next = last.checked_mul(c).ok_or_else(|| {
                Error::InvalidStaging("event tree too large to index".to_string())
            })?;
            widths.push(next);
        }
        Ok(EventTree {
            variables,
            cards,
            widths,
        })
    }

    /// Tree over `cards.len()` variables named `X1, X2, ...` with numeric levels.
    pub fn with_cardinalities(cards: &[usize]) -> Result<Self> {
        let vars = cards
            .iter()
            .enumerate()
            .map(|(i, &c)| VariableSpec::with_cardinality(format!("X{}", i + 1), c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vars)
    }

    pub fn binary(p: usize) -> Result<Self> {
        Self::with_cardinalities(&vec![2; p])
    }

    pub fn p(&self) -> usize {
        self.cards.len()
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn variable(&self, i: usize) -> &VariableSpec {
        &self.variables[i]
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.cards[i]
    }

    /// Number of vertices at `depth` (`0..=p`; depth `p` holds the leaves).
    pub fn width(&self, depth: usize) -> usize {
        self.widths[depth]
    }

    pub fn n_leaves(&self) -> usize {
        self.widths[self.p()]
    }

    pub fn n_internal(&self) -> usize {
        self.widths[..self.p()].iter().sum()
    }

    /// Multiplier of coordinate `var` inside a depth-`depth` vertex index.
    pub fn stride(&self, depth: usize, var: usize) -> usize {
        debug_assert!(var < depth);
        self.cards[var + 1..depth].iter().product()
    }

    pub fn child(&self, depth: usize, vertex: usize, value: usize) -> usize {
        vertex * self.cards[depth] + value
    }

    pub fn coordinate(&self, depth: usize, vertex: usize, var: usize) -> usize {
        (vertex / self.stride(depth, var)) % self.cards[var]
    }

    pub fn vertex_of_prefix(&self, prefix: &[usize]) -> usize {
        prefix
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&x, &c)| acc * c + x)
    }

    pub fn prefix_of(&self, depth: usize, mut vertex: usize) -> Vec<usize> {
        let mut prefix = vec![0; depth];
        for j in (0..depth).rev() {
            prefix[j] = vertex % self.cards[j];
            vertex /= self.cards[j];
        }
        prefix
    }

    pub fn check_outcome(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.p() {
            return Err(Error::OutcomeLength {
                expected: self.p(),
                got: x.len(),
            });
        }
        for (i, &code) in x.iter().enumerate() {
            if code >= self.cards[i] {
                return Err(Error::CodeOutOfRange {
                    name: self.variables[i].name.clone(),
                    code,
                    cardinality: self.cards[i],
                });
            }
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }
}

/// Per-depth partition of the internal vertices into stages.
///
/// Stage identifiers are dense per depth and kept in first-occurrence order,
/// so two stagings describe the same partition iff they compare equal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Staging {
    assignments: Vec<Vec<u32>>,
    n_stages: Vec<usize>,
}

impl Staging {
    /// Builds a staging from arbitrary per-depth stage labels.
    pub fn new(tree: &EventTree, assignments: Vec<Vec<u32>>) -> Result<Self> {
        if assignments.len() != tree.p() {
            return Err(Error::InvalidStaging(format!(
                "expected {} depths, found {}",
                tree.p(),
                assignments.len()
            )));
        }
        for (d, a) in assignments.iter().enumerate() {
            if a.len() != tree.width(d) {
                return Err(Error::InvalidStaging(format!(
                    "depth {d} has {} vertices, assignment covers {}",
                    tree.width(d),
                    a.len()
                )));
            }
        }
        Ok(Self::canonical(assignments))
    }

    pub(crate) fn canonical(mut assignments: Vec<Vec<u32>>) -> Self {
        let mut n_stages = Vec::with_capacity(assignments.len());
        for a in assignments.iter_mut() {
            n_stages.push(relabel_first_occurrence(a));
        }
        Staging {
            assignments,
            n_stages,
        }
    }

    /// Every internal vertex in its own stage.
    pub fn saturated(tree: &EventTree) -> Self {
        let assignments = (0..tree.p())
            .map(|d| (0..tree.width(d) as u32).collect())
            .collect();
        Self::canonical(assignments)
    }

    /// One stage per depth: the mutual independence model.
    pub fn independence(tree: &EventTree) -> Self {
        let assignments = (0..tree.p()).map(|d| vec![0; tree.width(d)]).collect();
        Self::canonical(assignments)
    }

    pub fn p(&self) -> usize {
        self.assignments.len()
    }

    pub fn stage_of(&self, depth: usize, vertex: usize) -> usize {
        self.assignments[depth][vertex] as usize
    }

    pub fn depth(&self, depth: usize) -> &[u32] {
        &self.assignments[depth]
    }

    pub fn n_stages(&self, depth: usize) -> usize {
        self.n_stages[depth]
    }

    pub fn total_stages(&self) -> usize {
        self.n_stages.iter().sum()
    }

    /// Vertices of each stage at `depth`, in increasing vertex order.
    pub fn members(&self, depth: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_stages[depth]];
        for (v, &s) in self.assignments[depth].iter().enumerate() {
            out[s as usize].push(v);
        }
        out
    }

    pub fn matches_tree(&self, tree: &EventTree) -> bool {
        self.p() == tree.p()
            && self
                .assignments
                .iter()
                .enumerate()
                .all(|(d, a)| a.len() == tree.width(d))
    }

    /// True when every stage of `finer` lies inside a single stage of `self`.
    pub fn is_coarsening_of(&self, finer: &Staging) -> bool {
        if self.p() != finer.p() {
            return false;
        }
        (0..self.p()).all(|d| {
            let coarse = &self.assignments[d];
            let fine = &finer.assignments[d];
            if coarse.len() != fine.len() {
                return false;
            }
            let mut image = vec![u32::MAX; finer.n_stages[d]];
            coarse.iter().zip(fine).all(|(&c, &f)| {
                let slot = &mut image[f as usize];
                if *slot == u32::MAX {
                    *slot = c;
                }
                *slot == c
            })
        })
    }

    pub(crate) fn into_assignments(self) -> Vec<Vec<u32>> {
        self.assignments
    }
}

fn relabel_first_occurrence(a: &mut [u32]) -> usize {
    let mut map: HashMap<u32, u32> = HashMap::new();
    for s in a.iter_mut() {
        let next = map.len() as u32;
        *s = *map.entry(*s).or_insert(next);
    }
    map.len()
}

/// An event tree with a staging and one conditional distribution per stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StagedTree {
    tree: EventTree,
    staging: Staging,
    /// `params[d][s]` is the distribution of variable `d` in stage `s`.
    params: Vec<Vec<Vec<f64>>>,
}

impl StagedTree {
    pub fn new(tree: EventTree, staging: Staging, params: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if !staging.matches_tree(&tree) {
            return Err(Error::InvalidStaging(
                "staging does not match the event tree".to_string(),
            ));
        }
        if params.len() != tree.p() {
            return Err(Error::InvalidParams(format!(
                "expected parameters for {} depths, found {}",
                tree.p(),
                params.len()
            )));
        }
        for (d, stages) in params.iter().enumerate() {
            if stages.len() != staging.n_stages(d) {
                return Err(Error::InvalidParams(format!(
                    "depth {d} has {} stages but {} probability vectors",
                    staging.n_stages(d),
                    stages.len()
                )));
            }
            for (s, probs) in stages.iter().enumerate() {
                check_simplex(probs, tree.cardinality(d))
                    .map_err(|msg| Error::InvalidParams(format!("depth {d}, stage {s}: {msg}")))?;
            }
        }
        Ok(StagedTree {
            tree,
            staging,
            params,
        })
    }

    /// Every stage gets the uniform distribution over its child values.
    pub fn uniform(tree: EventTree, staging: Staging) -> Result<Self> {
        let params = (0..tree.p())
            .map(|d| {
                let c = tree.cardinality(d);
                vec![vec![1.0 / c as f64; c]; staging.n_stages(d)]
            })
            .collect();
        Self::new(tree, staging, params)
    }

    pub fn tree(&self) -> &EventTree {
        &self.tree
    }

    pub fn staging(&self) -> &Staging {
        &self.staging
    }

    pub fn params(&self) -> &[Vec<Vec<f64>>] {
        &self.params
    }

    pub fn stage_vector(&self, depth: usize, stage: usize) -> &[f64] {
        &self.params[depth][stage]
    }

    /// Probability of a full outcome: the product of the stage-vector
    /// entries along its root-to-leaf path.
    pub fn atomic_probability(&self, x: &[usize]) -> Result<f64> {
        self.tree.check_outcome(x)?;
        let mut vertex = 0;
        let mut prob = 1.0;
        for (d, &xd) in x.iter().enumerate() {
            let s = self.staging.stage_of(d, vertex);
            prob *= self.params[d][s][xd];
            vertex = self.tree.child(d, vertex, xd);
        }
        Ok(prob)
    }

    /// Joint distribution over all leaves, indexed by leaf vertex index.
    pub fn leaf_distribution(&self) -> Vec<f64> {
        let mut level = vec![1.0];
        for d in 0..self.tree.p() {
            let c = self.tree.cardinality(d);
            let mut next = Vec::with_capacity(level.len() * c);
            for (v, &mass) in level.iter().enumerate() {
                let probs = &self.params[d][self.staging.stage_of(d, v)];
                next.extend(probs.iter().map(|q| mass * q));
            }
            level = next;
        }
        level
    }

    /// Staged tree over the variables in `keep` (strictly increasing), with
    /// stagings and parameters inherited from this model.
    ///
    /// Every kept variable's staging may only depend on kept variables;
    /// under that condition the result is exactly the marginal model.
    pub fn marginal(&self, keep: &[usize]) -> Result<StagedTree> {
        let p = self.tree.p();
        if keep.is_empty() {
            return Err(Error::InvalidSelection("no variables kept".to_string()));
        }
        if keep.windows(2).any(|w| w[0] >= w[1]) || *keep.last().unwrap() >= p {
            return Err(Error::InvalidSelection(format!(
                "kept indices {keep:?} must be strictly increasing and below {p}"
            )));
        }
        let g = dag::minimal_dag(&self.tree, &self.staging);
        for &j in keep {
            if let Some(&dropped) = g.parents(j).iter().find(|i| !keep.contains(i)) {
                return Err(Error::MarginalDependsOnDropped {
                    variable: self.tree.variable(j).name().to_string(),
                    depends_on: self.tree.variable(dropped).name().to_string(),
                });
            }
        }

        let sub = EventTree::new(
            keep.iter()
                .map(|&j| self.tree.variable(j).clone())
                .collect(),
        )?;
        let mut assignments = Vec::with_capacity(keep.len());
        let mut params = Vec::with_capacity(keep.len());
        for (d, &j) in keep.iter().enumerate() {
            let strides: Vec<usize> = keep[..d].iter().map(|&i| self.tree.stride(j, i)).collect();
            let mut old_to_new: HashMap<usize, u32> = HashMap::new();
            let mut vectors = Vec::new();
            let mut assign = Vec::with_capacity(sub.width(d));
            for u in 0..sub.width(d) {
                let prefix = sub.prefix_of(d, u);
                let original: usize = prefix.iter().zip(&strides).map(|(x, s)| x * s).sum();
                let old = self.staging.stage_of(j, original);
                let id = *old_to_new.entry(old).or_insert_with(|| {
                    vectors.push(self.params[j][old].clone());
                    vectors.len() as u32 - 1
                });
                assign.push(id);
            }
            assignments.push(assign);
            params.push(vectors);
        }
        let staging = Staging::new(&sub, assignments)?;
        StagedTree::new(sub, staging, params)
    }
}

fn check_simplex(probs: &[f64], cardinality: usize) -> std::result::Result<(), String> {
    if probs.len() != cardinality {
        return Err(format!(
            "expected {cardinality} probabilities, found {}",
            probs.len()
        ));
    }
    if let Some(q) = probs.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(format!("probability {q} outside [0, 1]"));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(format!("probabilities sum to {sum}"));
    }
    Ok(())
}
