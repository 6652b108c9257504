//! File formats: model JSON, DAG edge lists and adjacency JSON, DOT.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dag::Dag;
use crate::error::{Error, Result};
use crate::tree::{EventTree, StagedTree, Staging, VariableSpec};

#[derive(Debug, Serialize, Deserialize)]
struct VariableRecord {
    name: String,
    levels: Vec<String>,
}

/// On-disk model: variables, per-depth stage identifiers indexed by vertex,
/// and one probability vector per stage identifier.
#[derive(Debug, Serialize, Deserialize)]
struct ModelRecord {
    variables: Vec<VariableRecord>,
    staging: Vec<Vec<String>>,
    params: BTreeMap<String, Vec<f64>>,
}

fn stage_id(depth: usize, stage: usize) -> String {
    format!("d{depth}s{stage}")
}

pub fn model_to_json(model: &StagedTree) -> Result<String> {
    let tree = model.tree();
    let staging = model.staging();
    let record = ModelRecord {
        variables: tree
            .variables()
            .iter()
            .map(|v| VariableRecord {
                name: v.name().to_string(),
                levels: v.levels().to_vec(),
            })
            .collect(),
        staging: (0..tree.p())
            .map(|d| {
                staging
                    .depth(d)
                    .iter()
                    .map(|&s| stage_id(d, s as usize))
                    .collect()
            })
            .collect(),
        params: (0..tree.p())
            .flat_map(|d| {
                (0..staging.n_stages(d))
                    .map(move |s| (stage_id(d, s), model.stage_vector(d, s).to_vec()))
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&record)?)
}

pub fn model_from_json(text: &str) -> Result<StagedTree> {
    let record: ModelRecord = serde_json::from_str(text)?;
    let variables = record
        .variables
        .into_iter()
        .map(|v| VariableSpec::new(v.name, v.levels))
        .collect::<Result<Vec<_>>>()?;
    let tree = EventTree::new(variables)?;
    if record.staging.len() != tree.p() {
        return Err(Error::InvalidStaging(format!(
            "expected {} depths, found {}",
            tree.p(),
            record.staging.len()
        )));
    }
    let mut owner: HashMap<&str, usize> = HashMap::new();
    let mut assignments = Vec::with_capacity(tree.p());
    let mut params = Vec::with_capacity(tree.p());
    for (d, ids) in record.staging.iter().enumerate() {
        let mut local: HashMap<&str, u32> = HashMap::new();
        let mut vectors = Vec::new();
        let mut assign = Vec::with_capacity(ids.len());
        for id in ids {
            let next = local.len() as u32;
            let s = *local.entry(id.as_str()).or_insert_with(|| {
                vectors.push(id.as_str());
                next
            });
            if *owner.entry(id.as_str()).or_insert(d) != d {
                return Err(Error::InvalidStaging(format!(
                    "stage `{id}` spans more than one depth"
                )));
            }
            assign.push(s);
        }
        let vectors =
            vectors
                .into_iter()
                .map(|id| {
                    record.params.get(id).cloned().ok_or_else(|| {
                        Error::InvalidParams(format!("no parameters for stage `{id}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
        assignments.push(assign);
        params.push(vectors);
    }
    if let Some(extra) = record
        .params
        .keys()
        .find(|k| !owner.contains_key(k.as_str()))
    {
        return Err(Error::InvalidParams(format!(
            "parameters for unknown stage `{extra}`"
        )));
    }
    // first-occurrence ids are already canonical, so params stay aligned
    let staging = Staging::new(&tree, assignments)?;
    StagedTree::new(tree, staging, params)
}

/// Edge list text: one `parent -> child` line per edge, preceded by one
/// line per variable so isolated vertices survive a round trip.
pub fn dag_to_text(names: &[String], dag: &Dag) -> String {
    let mut out = String::new();
    for name in names {
        let _ = writeln!(out, "{name}");
    }
    for (i, j) in dag.edges() {
        let _ = writeln!(out, "{} -> {}", names[i], names[j]);
    }
    out
}

/// Parses an edge list. Vertices are numbered by first appearance and then
/// re-indexed by the smallest topological order, which is returned along
/// with the names in that order.
pub fn dag_from_text(text: &str) -> Result<(Vec<String>, Dag)> {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut intern = |name: &str, names: &mut Vec<String>| -> Result<usize> {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Parse(format!("invalid variable name `{name}`")));
        }
        Ok(*index.entry(name.to_string()).or_insert_with(|| {
            names.push(name.to_string());
            names.len() - 1
        }))
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once("->") {
            Some((a, b)) => {
                let i = intern(a.trim(), &mut names)
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                let j = intern(b.trim(), &mut names)
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                edges.push((i, j));
            }
            None => {
                intern(line, &mut names)
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            }
        }
    }
    reindex(names, &edges)
}

#[derive(Debug, Serialize, Deserialize)]
struct AdjacencyRecord {
    variables: Vec<String>,
    parents: BTreeMap<String, Vec<String>>,
}

pub fn dag_to_json(names: &[String], dag: &Dag) -> Result<String> {
    let record = AdjacencyRecord {
        variables: names.to_vec(),
        parents: (0..dag.p())
            .map(|j| {
                (
                    names[j].clone(),
                    dag.parents(j).iter().map(|&i| names[i].clone()).collect(),
                )
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&record)?)
}

pub fn dag_from_json(text: &str) -> Result<(Vec<String>, Dag)> {
    let record: AdjacencyRecord = serde_json::from_str(text)?;
    let index: HashMap<&str, usize> = record
        .variables
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    if index.len() != record.variables.len() {
        return Err(Error::Parse("duplicate variable name".to_string()));
    }
    let lookup = |n: &str| {
        index
            .get(n)
            .copied()
            .ok_or_else(|| Error::UnknownVariable(n.to_string()))
    };
    let mut edges = Vec::new();
    for (child, parents) in &record.parents {
        let j = lookup(child)?;
        for parent in parents {
            edges.push((lookup(parent)?, j));
        }
    }
    reindex(record.variables.clone(), &edges)
}

fn reindex(names: Vec<String>, edges: &[(usize, usize)]) -> Result<(Vec<String>, Dag)> {
    let p = names.len();
    let mut parents = vec![Vec::new(); p];
    for &(i, j) in edges {
        if i == j {
            return Err(Error::InvalidDag(format!("self loop on `{}`", names[i])));
        }
        parents[j].push(i);
    }
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut order = Vec::with_capacity(p);
    let mut ready: std::collections::BTreeSet<usize> =
        (0..p).filter(|&j| indegree[j] == 0).collect();
    while let Some(u) = ready.pop_first() {
        order.push(u);
        for (w, ps) in parents.iter().enumerate() {
            for _ in ps.iter().filter(|&&i| i == u) {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    ready.insert(w);
                }
            }
        }
    }
    if order.len() != p {
        return Err(Error::InvalidDag("graph has a cycle".to_string()));
    }
    let mut pos = vec![0; p];
    for (t, &j) in order.iter().enumerate() {
        pos[j] = t;
    }
    let dag = Dag::new(
        order
            .iter()
            .map(|&j| parents[j].iter().map(|&i| pos[i]).collect())
            .collect(),
    )?;
    Ok((order.into_iter().map(|j| names[j].clone()).collect(), dag))
}

pub fn dag_to_dot(names: &[String], dag: &Dag) -> String {
    let mut out = String::from("digraph G {\n");
    for name in names {
        let _ = writeln!(out, "  \"{name}\";");
    }
    for (i, j) in dag.edges() {
        let _ = writeln!(out, "  \"{}\" -> \"{}\";", names[i], names[j]);
    }
    out.push_str("}\n");
    out
}

const PALETTE: [&str; 16] = [
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6",
    "#bcf60c", "#fabebe", "#008080", "#e6beff", "#9a6324", "#fffac8", "#800000", "#aaffc3",
];

/// Event tree drawing with each internal vertex filled by its stage colour.
/// Singleton stages are left white. Vertex `vN` is numbered breadth-first.
pub fn staging_to_dot(tree: &EventTree, staging: &Staging) -> String {
    let mut out = String::from("digraph stagedtree {\n  rankdir=LR;\n  node [style=filled];\n");
    let mut offset = 0;
    for d in 0..=tree.p() {
        let sizes = (d < tree.p()).then(|| {
            let mut sizes = vec![0usize; staging.n_stages(d)];
            staging
                .depth(d)
                .iter()
                .for_each(|&s| sizes[s as usize] += 1);
            sizes
        });
        let mut palette_slot = 0;
        let mut colour: HashMap<u32, &str> = HashMap::new();
        for v in 0..tree.width(d) {
            let id = offset + v;
            match &sizes {
                Some(sizes) => {
                    let s = staging.depth(d)[v];
                    let fill = if sizes[s as usize] == 1 {
                        "white"
                    } else {
                        colour.entry(s).or_insert_with(|| {
                            palette_slot += 1;
                            PALETTE[(palette_slot - 1) % PALETTE.len()]
                        })
                    };
                    let _ = writeln!(
                        out,
                        "  v{id} [label=\"v{id}\\n{}\", fillcolor=\"{fill}\"];",
                        stage_id(d, s as usize)
                    );
                }
                None => {
                    let _ = writeln!(
                        out,
                        "  v{id} [label=\"\", shape=point, fillcolor=\"black\"];"
                    );
                }
            }
        }
        if d > 0 {
            let parent_offset = offset - tree.width(d - 1);
            let var = tree.variable(d - 1);
            for v in 0..tree.width(d) {
                let c = tree.cardinality(d - 1);
                let _ = writeln!(
                    out,
                    "  v{} -> v{} [label=\"{}={}\"];",
                    parent_offset + v / c,
                    offset + v,
                    var.name(),
                    var.levels()[v % c]
                );
            }
        }
        offset += tree.width(d);
    }
    out.push_str("}\n");
    out
}
