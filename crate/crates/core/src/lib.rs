//! Staged tree models over categorical variables, with a fast structure
//! learner for the sparse k-parents class.
//!
//! A k-parents staged tree is one whose minimal DAG has in-degree at most
//! `k`. [`learning::learn_k_parents`] learns one by fitting a DAG with at
//! most `k` parents, converting it to its equivalent staged tree and
//! merging stages by backward hill-climbing on the BIC.
//!
//! Parallel inner loops use rayon behind the default `parallel` feature;
//! see [`Exec`].

pub mod dag;
pub mod data;
mod error;
mod exec;
pub mod experiments;
pub mod io;
pub mod learning;
pub mod metrics;
pub mod scoring;
pub mod simulation;
pub mod tree;

pub use dag::{bn_joint_of_dag, is_k_parents, minimal_dag, staged_tree_of_dag, Dag};
pub use data::{binarize_two_means, count_stages, read_csv, CsvOptions, Dataset, StageCounts};
pub use error::{Error, Result};
pub use exec::Exec;
pub use learning::{bhc, hc_dag, learn_k_parents, HcDagOptions, KParentsOptions, SearchTrace};
pub use metrics::normalized_hamming;
pub use scoring::{fit_mle, log_likelihood, score, Score};
pub use tree::{EventTree, StagedTree, Staging, VariableSpec};
