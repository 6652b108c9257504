//! Structure search: backward hill-climbing over stage merges, BIC
//! hill-climbing over DAGs, and the k-parents pipeline that chains them.

use std::cmp::Ordering;
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dag::{self, Dag};
use crate::data::{Dataset, VertexCounts};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::scoring::{self, counts_loglik, Score};
use crate::tree::{EventTree, StagedTree, Staging};

/// Smallest BIC decrease accepted as an improvement by both searches.
pub const MIN_IMPROVEMENT: f64 = 1e-9;

/// Saturated-start searches refuse trees with more leaves than this
/// (14 binary variables) unless explicitly forced.
pub const SATURATED_LEAF_LIMIT: u128 = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub depth: usize,
    /// Stage that absorbed the other (identifiers of the starting staging).
    pub kept: u32,
    pub absorbed: u32,
    pub bic: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub initial_bic: f64,
    pub iterations: Vec<MergeStep>,
    pub build_seconds: f64,
    pub search_seconds: f64,
}

impl SearchTrace {
    pub fn final_bic(&self) -> f64 {
        self.iterations
            .last()
            .map(|m| m.bic)
            .unwrap_or(self.initial_bic)
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    delta: f64,
    lo: u32,
    hi: u32,
}

impl Candidate {
    fn cmp(&self, other: &Candidate) -> Ordering {
        self.delta
            .total_cmp(&other.delta)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }

    fn partner(&self, x: u32) -> u32 {
        if self.lo == x {
            self.hi
        } else {
            self.lo
        }
    }
}

fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.cmp(&x) == Ordering::Less { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Stage statistics at one depth. Every live stage caches its best merge
/// partner, so a merge costs one pass over the live stages.
struct DepthSearch {
    card: usize,
    penalty: f64,
    counts: Vec<u64>,
    loglik: Vec<f64>,
    alive: Vec<bool>,
    best: Vec<Option<Candidate>>,
}

impl DepthSearch {
    fn new(card: usize, counts: Vec<u64>, ln_n: f64, exec: Exec) -> Self {
        let m = counts.len() / card;
        let loglik = counts.chunks(card).map(counts_loglik).collect();
        let mut search = DepthSearch {
            card,
            penalty: (card - 1) as f64 * ln_n,
            counts,
            loglik,
            alive: vec![true; m],
            best: vec![None; m],
        };
        let mut best = std::mem::take(&mut search.best);
        exec.for_each_mut(&mut best, |x, slot| *slot = search.best_partner(x as u32));
        search.best = best;
        search
    }

    fn stage(&self, s: u32) -> &[u64] {
        let s = s as usize;
        &self.counts[s * self.card..(s + 1) * self.card]
    }

    /// BIC change of merging stages `a` and `b`.
    fn delta(&self, a: u32, b: u32) -> Candidate {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let merged: Vec<u64> = self
            .stage(lo)
            .iter()
            .zip(self.stage(hi))
            .map(|(x, y)| x + y)
            .collect();
        let gain = counts_loglik(&merged) - self.loglik[lo as usize] - self.loglik[hi as usize];
        Candidate {
            delta: -2.0 * gain - self.penalty,
            lo,
            hi,
        }
    }

    fn best_partner(&self, x: u32) -> Option<Candidate> {
        if !self.alive[x as usize] {
            return None;
        }
        (0..self.alive.len() as u32)
            .filter(|&y| y != x && self.alive[y as usize])
            .fold(None, |acc, y| better(acc, Some(self.delta(x, y))))
    }

    fn best(&self) -> Option<Candidate> {
        self.best.iter().fold(None, |acc, &c| better(acc, c))
    }

    fn merge(&mut self, lo: u32, hi: u32, exec: Exec) {
        let c = self.card;
        for x in 0..c {
            self.counts[lo as usize * c + x] += self.counts[hi as usize * c + x];
        }
        self.loglik[lo as usize] = counts_loglik(self.stage(lo));
        self.alive[hi as usize] = false;
        let mut best = std::mem::take(&mut self.best);
        let this = &*self;
        exec.for_each_mut(&mut best, |x, slot| {
            let x = x as u32;
            if !this.alive[x as usize] {
                *slot = None;
                return;
            }
            let stale = match slot {
                None => true,
                Some(cand) => x == lo || cand.partner(x) == lo || cand.partner(x) == hi,
            };
            if stale {
                *slot = this.best_partner(x);
            } else {
                *slot = better(*slot, Some(this.delta(x, lo)));
            }
        });
        self.best = best;
    }
}

/// Backward hill-climbing: repeatedly applies the within-depth stage merge
/// with the largest BIC decrease until no merge decreases the BIC.
pub fn bhc(tree: &EventTree, initial: &Staging, data: &Dataset) -> Result<(Staging, SearchTrace)> {
    bhc_with(tree, initial, data, Exec::default())
}

pub fn bhc_with(
    tree: &EventTree,
    initial: &Staging,
    data: &Dataset,
    exec: Exec,
) -> Result<(Staging, SearchTrace)> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !initial.matches_tree(tree) {
        return Err(Error::SchemaMismatch(
            "staging does not match the event tree".to_string(),
        ));
    }
    let start = Instant::now();
    let counts = VertexCounts::with_exec(data, tree, exec)?.aggregate(initial);
    let build_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let n = data.n();
    let ln_n = (n as f64).ln();
    let initial_bic = scoring::score_of_counts(&counts).bic;
    let mut depths: Vec<DepthSearch> = (0..tree.p())
        .map(|d| {
            let c = tree.cardinality(d);
            let flat = (0..counts.n_stages(d))
                .flat_map(|s| counts.stage(d, s).iter().copied())
                .collect();
            DepthSearch::new(c, flat, ln_n, exec)
        })
        .collect();
    let mut depth_best: Vec<Option<Candidate>> = depths.iter().map(DepthSearch::best).collect();
    let mut parent: Vec<Vec<u32>> = (0..tree.p())
        .map(|d| (0..initial.n_stages(d) as u32).collect())
        .collect();

    let mut bic = initial_bic;
    let mut iterations = Vec::new();
    loop {
        let mut chosen: Option<(usize, Candidate)> = None;
        for (d, cand) in depth_best.iter().enumerate() {
            if let Some(c) = cand {
                if chosen.is_none_or(|(_, b)| c.delta < b.delta) {
                    chosen = Some((d, *c));
                }
            }
        }
        let Some((d, cand)) = chosen else { break };
        if cand.delta >= -MIN_IMPROVEMENT {
            break;
        }
        depths[d].merge(cand.lo, cand.hi, exec);
        depth_best[d] = depths[d].best();
        parent[d][cand.hi as usize] = cand.lo;
        bic += cand.delta;
        iterations.push(MergeStep {
            depth: d,
            kept: cand.lo,
            absorbed: cand.hi,
            bic,
        });
    }

    let assignments = initial
        .clone()
        .into_assignments()
        .into_iter()
        .zip(&parent)
        .map(|(a, par)| a.into_iter().map(|s| find_root(par, s)).collect())
        .collect();
    let staging = Staging::new(tree, assignments)?;
    Ok((
        staging,
        SearchTrace {
            initial_bic,
            iterations,
            build_seconds,
            search_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

fn find_root(parent: &[u32], mut s: u32) -> u32 {
    while parent[s as usize] != s {
        s = parent[s as usize];
    }
    s
}

/// Checks the saturated-tree size guard.
pub fn check_saturated_size(tree: &EventTree, force: bool) -> Result<()> {
    let leaves: u128 = tree.cards().iter().map(|&c| c as u128).product();
    if leaves > SATURATED_LEAF_LIMIT && !force {
        return Err(Error::SizeGuard {
            leaves,
            limit: SATURATED_LEAF_LIMIT,
        });
    }
    Ok(())
}

/// BHC started from the saturated staging (size-guarded).
pub fn bhc_saturated(data: &Dataset, force: bool, exec: Exec) -> Result<(StagedTree, SearchTrace)> {
    let start = Instant::now();
    let tree = data.event_tree()?;
    check_saturated_size(&tree, force)?;
    let initial = Staging::saturated(&tree);
    let build = start.elapsed().as_secs_f64();
    let (staging, mut trace) = bhc_with(&tree, &initial, data, exec)?;
    trace.build_seconds += build;
    let model = scoring::fit_mle(&tree, &staging, data, 0.0)?;
    Ok((model, trace))
}

/// BHC started from the staged tree of a known DAG over the data's column order.
pub fn bhc_from_dag(data: &Dataset, dag: &Dag, exec: Exec) -> Result<(StagedTree, SearchTrace)> {
    let start = Instant::now();
    let tree = data.event_tree()?;
    let initial = dag::staged_tree_of_dag_with(dag, &tree, exec)?;
    let build = start.elapsed().as_secs_f64();
    let (staging, mut trace) = bhc_with(&tree, &initial, data, exec)?;
    trace.build_seconds += build;
    let model = scoring::fit_mle(&tree, &staging, data, 0.0)?;
    Ok((model, trace))
}

#[derive(Clone, Debug, Default)]
pub struct HcDagOptions {
    /// In-degree cap; `None` leaves parents unbounded.
    pub max_parents: Option<usize>,
    /// Fixed variable order (column indices). When set only edges that
    /// respect it are proposed.
    pub order: Option<Vec<usize>>,
    /// Variables that must not have children.
    pub forced_leaves: Vec<String>,
}

/// A DAG together with the column order its vertex indices refer to:
/// vertex `t` is column `order[t]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LearnedDag {
    pub order: Vec<usize>,
    pub dag: Dag,
}

struct FamilyScorer<'a> {
    data: &'a Dataset,
    cards: Vec<usize>,
    ln_n: f64,
    cache: HashMap<(usize, Vec<usize>), f64>,
}

impl FamilyScorer<'_> {
    /// Decomposable BIC of variable `j` given `parents` (sorted).
    fn score(&mut self, j: usize, parents: &[usize]) -> f64 {
        if let Some(&s) = self.cache.get(&(j, parents.to_vec())) {
            return s;
        }
        let c = self.cards[j];
        let configs: usize = parents.iter().map(|&i| self.cards[i]).product();
        let mut loglik = 0.0;
        if configs.saturating_mul(c) <= 1 << 24 {
            let mut table = vec![0u64; configs * c];
            for rec in self.data.records() {
                let cfg = parents
                    .iter()
                    .fold(0usize, |acc, &i| acc * self.cards[i] + rec[i] as usize);
                table[cfg * c + rec[j] as usize] += 1;
            }
            loglik = table.chunks(c).map(counts_loglik).sum();
        } else {
            let mut table: HashMap<Vec<u32>, Vec<u64>> = HashMap::new();
            for rec in self.data.records() {
                let key = parents.iter().map(|&i| rec[i]).collect();
                table.entry(key).or_insert_with(|| vec![0; c])[rec[j] as usize] += 1;
            }
            for row in table.values() {
                loglik += counts_loglik(row);
            }
        }
        let score = -2.0 * loglik + (configs * (c - 1)) as f64 * self.ln_n;
        self.cache.insert((j, parents.to_vec()), score);
        score
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Move {
    Add(usize, usize),
    Delete(usize, usize),
    Reverse(usize, usize),
}

fn reaches(children: &[Vec<usize>], from: usize, to: usize, skip: Option<(usize, usize)>) -> bool {
    let mut stack = vec![from];
    let mut seen = vec![false; children.len()];
    while let Some(u) = stack.pop() {
        if u == to {
            return true;
        }
        if std::mem::replace(&mut seen[u], true) {
            continue;
        }
        for &w in &children[u] {
            if skip != Some((u, w)) {
                stack.push(w);
            }
        }
    }
    false
}

fn with(parents: &[usize], i: usize) -> Vec<usize> {
    let mut v = parents.to_vec();
    let pos = v.binary_search(&i).unwrap_err();
    v.insert(pos, i);
    v
}

fn without(parents: &[usize], i: usize) -> Vec<usize> {
    parents.iter().copied().filter(|&x| x != i).collect()
}

/// Greedy BIC hill-climbing over single-edge additions, deletions and
/// reversals, starting from the empty DAG.
pub fn hc_dag(data: &Dataset, options: &HcDagOptions) -> Result<LearnedDag> {
    let p = data.p();
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut leaf = vec![false; p];
    for name in &options.forced_leaves {
        let j = data
            .column_index(name)
            .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
        leaf[j] = true;
    }
    let position: Option<Vec<usize>> = match &options.order {
        Some(order) => {
            let mut pos = vec![usize::MAX; p];
            if order.len() != p {
                return Err(Error::InvalidArgument(format!(
                    "order has {} entries, dataset has {p} columns",
                    order.len()
                )));
            }
            for (t, &j) in order.iter().enumerate() {
                if j >= p || pos[j] != usize::MAX {
                    return Err(Error::InvalidArgument(format!(
                        "order {order:?} is not a permutation of 0..{p}"
                    )));
                }
                pos[j] = t;
            }
            Some(pos)
        }
        None => None,
    };
    let cap = options.max_parents.unwrap_or(usize::MAX);

    let mut scorer = FamilyScorer {
        data,
        cards: data.schema().iter().map(|v| v.cardinality()).collect(),
        ln_n: (data.n() as f64).ln(),
        cache: HashMap::new(),
    };
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); p];
    let mut family: Vec<f64> = (0..p).map(|j| scorer.score(j, &[])).collect();

    loop {
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); p];
        for (j, ps) in parents.iter().enumerate() {
            for &i in ps {
                children[i].push(j);
            }
        }
        let mut best: Option<(f64, Move)> = None;
        let mut consider = |delta: f64, mv: Move| {
            if best.is_none_or(|(b, _)| delta < b) {
                best = Some((delta, mv));
            }
        };
        for i in 0..p {
            for j in 0..p {
                if i == j {
                    continue;
                }
                if parents[j].contains(&i) {
                    let delta = scorer.score(j, &without(&parents[j], i)) - family[j];
                    consider(delta, Move::Delete(i, j));
                    let can_reverse = position.is_none()
                        && !leaf[j]
                        && parents[i].len() < cap
                        && !reaches(&children, i, j, Some((i, j)));
                    if can_reverse {
                        let delta = delta + scorer.score(i, &with(&parents[i], j)) - family[i];
                        consider(delta, Move::Reverse(i, j));
                    }
                } else if !parents[i].contains(&j)
                    && !leaf[i]
                    && parents[j].len() < cap
                    && position.as_ref().is_none_or(|pos| pos[i] < pos[j])
                    && !reaches(&children, j, i, None)
                {
                    let delta = scorer.score(j, &with(&parents[j], i)) - family[j];
                    consider(delta, Move::Add(i, j));
                }
            }
        }
        match best {
            Some((delta, mv)) if delta < -MIN_IMPROVEMENT => match mv {
                Move::Add(i, j) => {
                    parents[j] = with(&parents[j], i);
                    family[j] = scorer.score(j, &parents[j]);
                }
                Move::Delete(i, j) => {
                    parents[j] = without(&parents[j], i);
                    family[j] = scorer.score(j, &parents[j]);
                }
                Move::Reverse(i, j) => {
                    parents[j] = without(&parents[j], i);
                    parents[i] = with(&parents[i], j);
                    family[j] = scorer.score(j, &parents[j]);
                    family[i] = scorer.score(i, &parents[i]);
                }
            },
            _ => break,
        }
    }

    let order = match options.order.clone() {
        Some(order) => order,
        None => smallest_topological_order(&parents),
    };
    let mut pos = vec![0; p];
    for (t, &j) in order.iter().enumerate() {
        pos[j] = t;
    }
    let reindexed = order
        .iter()
        .map(|&j| parents[j].iter().map(|&i| pos[i]).collect())
        .collect();
    Ok(LearnedDag {
        order,
        dag: Dag::new(reindexed)?,
    })
}

/// Kahn's algorithm always taking the smallest available vertex.
fn smallest_topological_order(parents: &[Vec<usize>]) -> Vec<usize> {
    let p = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); p];
    for (j, ps) in parents.iter().enumerate() {
        for &i in ps {
            children[i].push(j);
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> =
        (0..p).filter(|&j| indegree[j] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(p);
    while let Some(Reverse(u)) = heap.pop() {
        order.push(u);
        for &w in &children[u] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                heap.push(Reverse(w));
            }
        }
    }
    order
}

#[derive(Clone, Debug)]
pub struct KParentsOptions {
    pub k: usize,
    pub forced_leaves: Vec<String>,
    pub order: Option<Vec<usize>>,
    pub exec: Exec,
}

impl KParentsOptions {
    pub fn new(k: usize) -> Self {
        KParentsOptions {
            k,
            forced_leaves: Vec::new(),
            order: None,
            exec: Exec::default(),
        }
    }
}

/// Output of [`learn_k_parents`]. The model, DAG and stagings all use the
/// variable order `order` (column indices of the input dataset).
#[derive(Clone, Debug)]
pub struct KParentsFit {
    pub order: Vec<usize>,
    pub dag: Dag,
    pub dag_staging: Staging,
    pub dag_score: Score,
    pub model: StagedTree,
    pub score: Score,
    pub trace: SearchTrace,
    pub dag_seconds: f64,
}

/// Learns a k-parents staged tree: a DAG with in-degree at most `k`, its
/// equivalent staged tree, then backward hill-climbing from there.
pub fn learn_k_parents(data: &Dataset, options: &KParentsOptions) -> Result<KParentsFit> {
    if options.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".to_string()));
    }
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let start = Instant::now();
    let learned = hc_dag(
        data,
        &HcDagOptions {
            max_parents: Some(options.k),
            order: options.order.clone(),
            forced_leaves: options.forced_leaves.clone(),
        },
    )?;
    let dag_seconds = start.elapsed().as_secs_f64();

    let ordered = data.select_columns(&learned.order)?;
    let start = Instant::now();
    let tree = ordered.event_tree()?;
    let dag_staging = dag::staged_tree_of_dag_with(&learned.dag, &tree, options.exec)?;
    let build = start.elapsed().as_secs_f64();
    let (staging, mut trace) = bhc_with(&tree, &dag_staging, &ordered, options.exec)?;
    trace.build_seconds += build;

    let dag_score = scoring::score(&tree, &dag_staging, &ordered)?;
    let model = scoring::fit_mle(&tree, &staging, &ordered, 0.0)?;
    let score = scoring::score(&tree, &staging, &ordered)?;
    Ok(KParentsFit {
        order: learned.order,
        dag: learned.dag,
        dag_staging,
        dag_score,
        model,
        score,
        trace,
        dag_seconds,
    })
}
