//! Simulation campaigns: learning-time and staging-recovery tables.

use std::time::Instant;

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::learning::{bhc_from_dag, bhc_saturated, learn_k_parents, KParentsOptions};
use crate::metrics::normalized_hamming_with;
use crate::simulation::{derive_seed, random_k_parents_model, sample, SimulatedModel};

/// Label of the k-parents search (BHC started from a DAG's staged tree).
pub const METHOD_KPARENTS: &str = "kparents";
/// BHC started from the saturated staging.
pub const METHOD_BHC: &str = "bhc";
/// BHC started from the staged tree of the learned DAG.
pub const METHOD_BHCDAG: &str = "bhcdag";
/// The staged tree of the learned DAG, without search.
pub const METHOD_DAG: &str = "dag";
pub const METHOD_SELF: &str = "self";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub method: String,
    pub p: usize,
    pub k: usize,
    pub rep: usize,
    pub build_seconds: f64,
    pub search_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TimingConfig {
    pub p_values: Vec<usize>,
    pub ks: Vec<usize>,
    pub n: usize,
    pub reps: usize,
    pub merge_prob: f64,
    pub seed: u64,
    /// Saturated-start rows are produced only up to this many variables.
    pub saturated_max_p: usize,
    pub timeout_seconds: f64,
    /// Run replicates concurrently instead of one after another.
    pub parallel_reps: bool,
    pub exec: Exec,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            p_values: (3..=20).collect(),
            ks: vec![2, 3, 4],
            n: 10_000,
            reps: 20,
            merge_prob: 0.5,
            seed: 1,
            saturated_max_p: 10,
            timeout_seconds: 120.0,
            parallel_reps: false,
            exec: Exec::default(),
        }
    }
}

fn simulate(
    p: usize,
    k: usize,
    n: usize,
    rep: usize,
    merge_prob: f64,
    seed: u64,
) -> Result<(SimulatedModel, Dataset)> {
    let sim = random_k_parents_model(
        p,
        k,
        &vec![2; p],
        merge_prob,
        derive_seed(seed, &[p as u64, k as u64, rep as u64]),
    )?;
    let data = sample(
        &sim.model,
        n,
        derive_seed(seed, &[p as u64, k as u64, n as u64, rep as u64, 1]),
    );
    Ok((sim, data))
}

fn time_replicate(
    cfg: &TimingConfig,
    p: usize,
    k: usize,
    rep: usize,
    exec: Exec,
) -> Result<Vec<TimingRow>> {
    let (sim, data) = simulate(p, k, cfg.n, rep, cfg.merge_prob, cfg.seed)?;
    let mut rows = Vec::with_capacity(2);
    let check = |build: f64, search: f64| {
        let total = build + search;
        if total > cfg.timeout_seconds {
            return Err(Error::Timeout {
                limit_seconds: cfg.timeout_seconds,
                elapsed_seconds: total,
            });
        }
        Ok(())
    };
    let (_, trace) = bhc_from_dag(&data, &sim.dag, exec)?;
    check(trace.build_seconds, trace.search_seconds)?;
    rows.push(TimingRow {
        method: METHOD_KPARENTS.to_string(),
        p,
        k,
        rep,
        build_seconds: trace.build_seconds,
        search_seconds: trace.search_seconds,
    });
    if p <= cfg.saturated_max_p {
        let (_, trace) = bhc_saturated(&data, false, exec)?;
        check(trace.build_seconds, trace.search_seconds)?;
        rows.push(TimingRow {
            method: METHOD_BHC.to_string(),
            p,
            k,
            rep,
            build_seconds: trace.build_seconds,
            search_seconds: trace.search_seconds,
        });
    }
    Ok(rows)
}

/// Build and search times of the k-parents search (started from the true
/// DAG) and, for small `p`, of saturated-start BHC. One warm-up replicate
/// is run first and discarded.
pub fn bench_time(cfg: &TimingConfig) -> Result<Vec<TimingRow>> {
    let mut jobs = Vec::new();
    for &k in &cfg.ks {
        for &p in &cfg.p_values {
            for rep in 0..cfg.reps {
                jobs.push((p, k, rep));
            }
        }
    }
    if let Some(&(p, k, _)) = jobs.first() {
        time_replicate(cfg, p, k, usize::MAX, cfg.exec)?;
    }
    let results = if cfg.parallel_reps {
        cfg.exec.map(&jobs, |&(p, k, rep)| {
            time_replicate(cfg, p, k, rep, Exec::Sequential)
        })
    } else {
        jobs.iter()
            .map(|&(p, k, rep)| time_replicate(cfg, p, k, rep, cfg.exec))
            .collect()
    };
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub method: String,
    pub p: usize,
    pub k: usize,
    pub n: usize,
    pub rep: usize,
    pub hamming: f64,
}

#[derive(Clone, Debug)]
pub struct RecoveryConfig {
    pub p_values: Vec<usize>,
    pub ks: Vec<usize>,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub merge_prob: f64,
    pub seed: u64,
    pub saturated_max_p: usize,
    /// Also emit a `self` row comparing the true model with itself.
    pub self_check: bool,
    pub exec: Exec,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            p_values: vec![6, 10, 20],
            ks: vec![2, 3, 4],
            ns: vec![100, 500, 1000, 5000, 10_000],
            reps: 20,
            merge_prob: 0.5,
            seed: 1,
            saturated_max_p: 10,
            self_check: false,
            exec: Exec::default(),
        }
    }
}

/// One replicate: simulate a k-parents model, sample `n` records, learn
/// with every method (DAG search in the true variable order) and measure
/// the normalized hamming distance to the true staging.
pub fn recovery_replicate(
    cfg: &RecoveryConfig,
    p: usize,
    k: usize,
    n: usize,
    rep: usize,
    exec: Exec,
) -> Result<Vec<RecoveryRow>> {
    let (sim, data) = simulate(p, k, n, rep, cfg.merge_prob, cfg.seed)?;
    let truth = sim.model.staging();
    let tree = sim.model.tree();
    let row = |method: &str, hamming: f64| RecoveryRow {
        method: method.to_string(),
        p,
        k,
        n,
        rep,
        hamming,
    };
    let mut rows = Vec::new();
    let fit = learn_k_parents(
        &data,
        &KParentsOptions {
            k,
            forced_leaves: Vec::new(),
            order: Some((0..p).collect()),
            exec,
        },
    )?;
    rows.push(row(
        METHOD_BHCDAG,
        normalized_hamming_with(tree, fit.model.staging(), truth, exec)?,
    ));
    rows.push(row(
        METHOD_DAG,
        normalized_hamming_with(tree, &fit.dag_staging, truth, exec)?,
    ));
    if p <= cfg.saturated_max_p {
        let (model, _) = bhc_saturated(&data, false, exec)?;
        rows.push(row(
            METHOD_BHC,
            normalized_hamming_with(tree, model.staging(), truth, exec)?,
        ));
    }
    if cfg.self_check {
        rows.push(row(
            METHOD_SELF,
            normalized_hamming_with(tree, truth, truth, exec)?,
        ));
    }
    Ok(rows)
}

/// Replicates are independent and run concurrently under a parallel policy.
pub fn bench_recovery(cfg: &RecoveryConfig) -> Result<Vec<RecoveryRow>> {
    let mut jobs = Vec::new();
    for &p in &cfg.p_values {
        for &k in &cfg.ks {
            for &n in &cfg.ns {
                for rep in 0..cfg.reps {
                    jobs.push((p, k, n, rep));
                }
            }
        }
    }
    let results = cfg.exec.map(&jobs, |&(p, k, n, rep)| {
        recovery_replicate(cfg, p, k, n, rep, Exec::Sequential)
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Mean hamming distance of `method` within one grid cell.
pub fn mean_hamming(
    rows: &[RecoveryRow],
    method: &str,
    p: usize,
    k: usize,
    n: usize,
) -> Option<f64> {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.p == p && r.k == k && r.n == n)
        .map(|r| r.hamming)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Writes rows as CSV with a header in field order.
pub fn write_rows<W: std::io::Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Seconds elapsed while running `f`.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
