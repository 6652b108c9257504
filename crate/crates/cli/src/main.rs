use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use stagedtree::experiments::{self, RecoveryConfig, TimingConfig};
use stagedtree::learning::{bhc_saturated, KParentsOptions};
use stagedtree::{
    binarize_two_means, fit_mle, learn_k_parents, minimal_dag, normalized_hamming, read_csv, score,
    staged_tree_of_dag, CsvOptions, Dataset, Error, EventTree, Exec, StagedTree, VariableSpec,
};
use stagedtree::{io, simulation};

/// Learn, simulate and benchmark k-parents staged trees.
///
/// Set RAYON_NUM_THREADS to cap the number of worker threads.
#[derive(Parser)]
#[command(name = "stagedtree", version, about, long_about)]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CsvArgs {
    /// The CSV has no header row; columns are named 1, 2, ...
    #[arg(long)]
    no_header: bool,
    /// Level order of a column, as NAME=level1,level2,... (repeatable).
    #[arg(long = "levels", value_name = "NAME=L1,L2")]
    levels: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// DAG with at most k parents, its staged tree, then backward hill-climbing.
    Kparents,
    /// Backward hill-climbing from the saturated staging.
    BhcSaturated,
    /// Staged tree of the learned DAG, without stage merging.
    DagOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    /// DAG edge list (or adjacency JSON) to a staged tree model.
    Dag2tree,
    /// Staged tree model to its minimal DAG edge list.
    Tree2dag,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random k-parents staged tree.
    Simulate {
        #[arg(short)]
        p: usize,
        #[arg(short)]
        k: usize,
        /// Comma-separated cardinalities (default: all binary).
        #[arg(long, value_delimiter = ',')]
        cards: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        merge_prob: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the generating DAG as an edge list.
        #[arg(long)]
        dag_out: Option<PathBuf>,
    },
    /// Draw records from a model by sequential sampling.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a staged tree from a CSV dataset.
    Learn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Kparents)]
        mode: Mode,
        /// Maximum number of parents of the DAG search.
        #[arg(short, default_value_t = 2)]
        k: usize,
        /// Variable that may not have children in the DAG search (repeatable).
        #[arg(long = "forced-leaf")]
        forced_leaves: Vec<String>,
        /// Keep the column order instead of learning one.
        #[arg(long)]
        keep_order: bool,
        /// Override the saturated-tree size guard.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        score_out: Option<PathBuf>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[command(flatten)]
        csv: CsvArgs,
    },
    /// Print log-likelihood, free parameters and BIC of a model on data.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        csv: CsvArgs,
    },
    /// Convert between DAGs and staged trees.
    Convert {
        #[arg(value_enum)]
        direction: Direction,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// dag2tree: comma-separated cardinalities in the DAG's order.
        #[arg(long, value_delimiter = ',')]
        cards: Vec<usize>,
        /// dag2tree: take levels from this dataset and fit the parameters.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        csv: CsvArgs,
    },
    /// Normalized hamming distance between two models over the same tree.
    Dist { a: PathBuf, b: PathBuf },
    /// Write a Graphviz drawing of a model or a DAG.
    ExportDot {
        #[arg(long, conflicts_with = "dag", required_unless_present = "dag")]
        model: Option<PathBuf>,
        #[arg(long)]
        dag: Option<PathBuf>,
        /// With --model, draw its minimal DAG instead of the tree.
        #[arg(long, requires = "model")]
        minimal_dag: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Staged tree over a subset of variables.
    Marginal {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated variable names to keep.
        #[arg(long, value_delimiter = ',', required = true)]
        keep: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time k-parents search against saturated-start search.
    BenchTime {
        #[arg(long, default_value_t = 3)]
        p_min: usize,
        #[arg(long, default_value_t = 20)]
        p_max: usize,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        ks: Vec<usize>,
        #[arg(short, long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 0.5)]
        merge_prob: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Saturated-start rows are produced only up to this many variables.
        #[arg(long, default_value_t = 10)]
        saturated_max_p: usize,
        /// Per-replicate limit in seconds.
        #[arg(long, default_value_t = 120.0)]
        timeout: f64,
        /// Run replicates concurrently (timings then interfere).
        #[arg(long)]
        parallel_reps: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distance between true and learned stagings over a simulation grid.
    BenchRecovery {
        #[arg(long, value_delimiter = ',', default_value = "6,10,20")]
        ps: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "100,500,1000,5000,10000")]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 0.5)]
        merge_prob: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        saturated_max_p: usize,
        /// Add rows comparing each true model with itself.
        #[arg(long)]
        self_check: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-means binarization of numeric CSV columns.
    Binarize {
        #[arg(long)]
        data: PathBuf,
        /// Columns to binarize (default: all).
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(long, default_value = "low")]
        low: String,
        #[arg(long, default_value = "high")]
        high: String,
        #[arg(long)]
        out: PathBuf,
        /// Write the cut points as JSON.
        #[arg(long)]
        cuts_out: Option<PathBuf>,
    },
}

fn csv_options(args: &CsvArgs) -> Result<CsvOptions> {
    let mut declared_levels = HashMap::new();
    for spec in &args.levels {
        let (name, levels) = spec
            .split_once('=')
            .with_context(|| format!("--levels expects NAME=L1,L2, got {spec:?}"))?;
        declared_levels.insert(
            name.to_string(),
            levels.split(',').map(str::to_string).collect(),
        );
    }
    Ok(CsvOptions {
        has_header: !args.no_header,
        declared_levels,
    })
}

fn load_data(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    read_csv(path, options).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<StagedTree> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    io::model_from_json(&text).with_context(|| format!("parsing model {}", path.display()))
}

fn load_dag(path: &Path) -> Result<(Vec<String>, stagedtree::Dag)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = if text.trim_start().starts_with('{') {
        io::dag_from_json(&text)
    } else {
        io::dag_from_text(&text)
    };
    parsed.with_context(|| format!("parsing DAG {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

fn variable_names(tree: &EventTree) -> Vec<String> {
    tree.variables()
        .iter()
        .map(|v| v.name().to_string())
        .collect()
}

/// Reads `path` with the model's levels and reorders columns to its variables.
fn data_for_model(model: &StagedTree, path: &Path, args: &CsvArgs) -> Result<Dataset> {
    let mut options = csv_options(args)?;
    for v in model.tree().variables() {
        options
            .declared_levels
            .entry(v.name().to_string())
            .or_insert_with(|| v.levels().to_vec());
    }
    let data = load_data(path, &options)?;
    let order = model
        .tree()
        .variables()
        .iter()
        .map(|v| {
            data.column_index(v.name())
                .with_context(|| format!("data has no column {:?}", v.name()))
        })
        .collect::<Result<Vec<_>>>()?;
    let data = data.select_columns(&order)?;
    data.check_tree(model.tree())?;
    Ok(data)
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    match cli.command {
        Command::Simulate {
            p,
            k,
            cards,
            merge_prob,
            seed,
            out,
            dag_out,
        } => {
            let cards = if cards.is_empty() { vec![2; p] } else { cards };
            let sim = simulation::random_k_parents_model(p, k, &cards, merge_prob, seed)?;
            write(&out, io::model_to_json(&sim.model)?)?;
            if let Some(path) = dag_out {
                write(
                    &path,
                    io::dag_to_text(&variable_names(sim.model.tree()), &sim.dag),
                )?;
            }
        }
        Command::Sample {
            model,
            n,
            seed,
            out,
        } => {
            let model = load_model(&model)?;
            let data = simulation::sample(&model, n, seed);
            let file =
                fs::File::create(&out).with_context(|| format!("writing {}", out.display()))?;
            data.write_csv(file)?;
        }
        Command::Learn {
            data,
            mode,
            k,
            forced_leaves,
            keep_order,
            force,
            out,
            score_out,
            trace_out,
            csv,
        } => {
            let data = load_data(&data, &csv_options(&csv)?)?;
            let (model, score, trace) = match mode {
                Mode::Kparents | Mode::DagOnly => {
                    let options = KParentsOptions {
                        k,
                        forced_leaves,
                        order: keep_order.then(|| (0..data.p()).collect()),
                        exec,
                    };
                    let fit = learn_k_parents(&data, &options)?;
                    if let Mode::Kparents = mode {
                        let trace = json!({
                            "dag_seconds": fit.dag_seconds,
                            "dag_bic": fit.dag_score.bic,
                            "search": fit.trace,
                        });
                        (fit.model, fit.score, trace)
                    } else {
                        let ordered = data.select_columns(&fit.order)?;
                        let tree = ordered.event_tree()?;
                        let model = fit_mle(&tree, &fit.dag_staging, &ordered, 0.0)?;
                        let trace = json!({ "dag_seconds": fit.dag_seconds });
                        (model, fit.dag_score, trace)
                    }
                }
                Mode::BhcSaturated => {
                    let (model, trace) =
                        bhc_saturated(&data, force, exec).map_err(|e| match e {
                            Error::SizeGuard { .. } => anyhow::anyhow!("{e} (--force)"),
                            e => e.into(),
                        })?;
                    let score = score(model.tree(), model.staging(), &data)?;
                    (model, score, serde_json::to_value(&trace)?)
                }
            };
            write(&out, io::model_to_json(&model)?)?;
            if let Some(path) = score_out {
                write_json(&path, &score)?;
            }
            if let Some(path) = trace_out {
                write_json(&path, &trace)?;
            }
        }
        Command::Score { model, data, csv } => {
            let model = load_model(&model)?;
            let data = data_for_model(&model, &data, &csv)?;
            let s = score(model.tree(), model.staging(), &data)?;
            println!("{}", serde_json::to_string(&s)?);
        }
        Command::Convert {
            direction,
            input,
            out,
            cards,
            data,
            csv,
        } => match direction {
            Direction::Dag2tree => {
                let (names, dag) = load_dag(&input)?;
                let model = if let Some(path) = data {
                    let data = load_data(&path, &csv_options(&csv)?)?;
                    let order = names
                        .iter()
                        .map(|n| {
                            data.column_index(n)
                                .with_context(|| format!("data has no column {n:?}"))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let data = data.select_columns(&order)?;
                    let tree = data.event_tree()?;
                    let staging = staged_tree_of_dag(&dag, &tree)?;
                    fit_mle(&tree, &staging, &data, 0.0)?
                } else {
                    let cards = if cards.is_empty() {
                        vec![2; names.len()]
                    } else {
                        cards
                    };
                    if cards.len() != names.len() {
                        bail!(
                            "{} cardinalities given for {} variables",
                            cards.len(),
                            names.len()
                        );
                    }
                    let vars = names
                        .iter()
                        .zip(&cards)
                        .map(|(n, &c)| VariableSpec::with_cardinality(n.clone(), c))
                        .collect::<stagedtree::Result<Vec<_>>>()?;
                    let tree = EventTree::new(vars)?;
                    let staging = staged_tree_of_dag(&dag, &tree)?;
                    StagedTree::uniform(tree, staging)?
                };
                write(&out, io::model_to_json(&model)?)?;
            }
            Direction::Tree2dag => {
                let model = load_model(&input)?;
                let dag = minimal_dag(model.tree(), model.staging());
                write(&out, io::dag_to_text(&variable_names(model.tree()), &dag))?;
            }
        },
        Command::Dist { a, b } => {
            let (a, b) = (load_model(&a)?, load_model(&b)?);
            if a.tree() != b.tree() {
                bail!("models are over different event trees");
            }
            println!(
                "{}",
                normalized_hamming(a.tree(), a.staging(), b.staging())?
            );
        }
        Command::ExportDot {
            model,
            dag,
            minimal_dag: as_dag,
            out,
        } => {
            let dot = match (model, dag) {
                (Some(path), _) => {
                    let m = load_model(&path)?;
                    if as_dag {
                        io::dag_to_dot(
                            &variable_names(m.tree()),
                            &minimal_dag(m.tree(), m.staging()),
                        )
                    } else {
                        io::staging_to_dot(m.tree(), m.staging())
                    }
                }
                (None, Some(path)) => {
                    let (names, dag) = load_dag(&path)?;
                    io::dag_to_dot(&names, &dag)
                }
                (None, None) => unreachable!("clap requires one input"),
            };
            write(&out, dot)?;
        }
        Command::Marginal { model, keep, out } => {
            let model = load_model(&model)?;
            let mut idx = keep
                .iter()
                .map(|n| {
                    model
                        .tree()
                        .index_of(n)
                        .ok_or_else(|| Error::UnknownVariable(n.clone()))
                })
                .collect::<stagedtree::Result<Vec<_>>>()?;
            idx.sort_unstable();
            idx.dedup();
            write(&out, io::model_to_json(&model.marginal(&idx)?)?)?;
        }
        Command::BenchTime {
            p_min,
            p_max,
            ks,
            n,
            reps,
            merge_prob,
            seed,
            saturated_max_p,
            timeout,
            parallel_reps,
            out,
        } => {
            let cfg = TimingConfig {
                p_values: (p_min..=p_max).collect(),
                ks,
                n,
                reps,
                merge_prob,
                seed,
                saturated_max_p,
                timeout_seconds: timeout,
                parallel_reps,
                exec,
            };
            let rows = experiments::bench_time(&cfg)?;
            let file =
                fs::File::create(&out).with_context(|| format!("writing {}", out.display()))?;
            experiments::write_rows(file, &rows)?;
        }
        Command::BenchRecovery {
            ps,
            ks,
            ns,
            reps,
            merge_prob,
            seed,
            saturated_max_p,
            self_check,
            out,
        } => {
            let cfg = RecoveryConfig {
                p_values: ps,
                ks,
                ns,
                reps,
                merge_prob,
                seed,
                saturated_max_p,
                self_check,
                exec,
            };
            let rows = experiments::bench_recovery(&cfg)?;
            let file =
                fs::File::create(&out).with_context(|| format!("writing {}", out.display()))?;
            experiments::write_rows(file, &rows)?;
        }
        Command::Binarize {
            data,
            columns,
            low,
            high,
            out,
            cuts_out,
        } => binarize(&data, &columns, [&low, &high], &out, cuts_out.as_deref())?,
    }
    Ok(())
}

fn binarize(
    path: &Path,
    columns: &[String],
    labels: [&str; 2],
    out: &Path,
    cuts_out: Option<&Path>,
) -> Result<()> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut records: Vec<Vec<String>> = Vec::new();
    for r in rdr.records() {
        records.push(r?.iter().map(str::to_string).collect());
    }
    let targets: Vec<usize> = if columns.is_empty() {
        (0..header.len()).collect()
    } else {
        columns
            .iter()
            .map(|c| {
                header
                    .iter()
                    .position(|h| h == c)
                    .with_context(|| format!("no column {c:?}"))
            })
            .collect::<Result<_>>()?
    };
    let mut cuts = serde_json::Map::new();
    for &j in &targets {
        let values = records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[j].trim().parse::<f64>().with_context(|| {
                    format!(
                        "row {}, column {:?}: {:?} is not numeric",
                        i + 1,
                        header[j],
                        r[j]
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (codes, cut) =
            binarize_two_means(&values).with_context(|| format!("column {:?}", header[j]))?;
        for (r, c) in records.iter_mut().zip(codes) {
            r[j] = labels[c as usize].to_string();
        }
        cuts.insert(
            header[j].clone(),
            json!({ "lower_max": cut.lower_max, "upper_min": cut.upper_min, "midpoint": cut.midpoint() }),
        );
    }
    let mut w =
        csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
    w.write_record(&header)?;
    for r in &records {
        w.write_record(r)?;
    }
    w.flush()?;
    if let Some(p) = cuts_out {
        write_json(p, &cuts)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
