//! Categorical datasets, CSV ingestion, sufficient statistics and the
//! two-level discretizer.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tree::{EventTree, Staging, VariableSpec};

/// Fully observed categorical records, stored row-major as level codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    schema: Vec<VariableSpec>,
    codes: Vec<u32>,
    n: usize,
}

impl Dataset {
    pub fn new(schema: Vec<VariableSpec>, rows: &[Vec<usize>]) -> Result<Self> {
        let p = schema.len();
        let mut codes = Vec::with_capacity(rows.len() * p);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::RaggedRow {
                    row: r,
                    expected: p,
                    found: row.len(),
                });
            }
            codes.extend(row.iter().map(|&c| c as u32));
        }
        Self::from_codes(schema, codes)
    }

    pub fn from_codes(schema: Vec<VariableSpec>, codes: Vec<u32>) -> Result<Self> {
        let p = schema.len();
        if p == 0 {
            return Err(Error::NoColumns);
        }
        if !codes.len().is_multiple_of(p) {
            return Err(Error::SchemaMismatch(format!(
                "{} codes do not fill rows of width {p}",
                codes.len()
            )));
        }
        for (k, &c) in codes.iter().enumerate() {
            let var = &schema[k % p];
            if c as usize >= var.cardinality() {
                return Err(Error::CodeOutOfRange {
                    name: var.name().to_string(),
                    code: c as usize,
                    cardinality: var.cardinality(),
                });
            }
        }
        let n = codes.len() / p;
        Ok(Dataset { schema, codes, n })
    }

    pub fn empty(schema: Vec<VariableSpec>) -> Self {
        Dataset {
            schema,
            codes: Vec::new(),
            n: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.schema.len()
    }

    pub fn schema(&self) -> &[VariableSpec] {
        &self.schema
    }

    pub fn record(&self, r: usize) -> &[u32] {
        let p = self.p();
        &self.codes[r * p..(r + 1) * p]
    }

    pub fn records(&self) -> impl Iterator<Item = &[u32]> {
        self.codes.chunks(self.p())
    }

    pub(crate) fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|v| v.name() == name)
    }

    /// New dataset whose column `t` is column `order[t]` of this one.
    pub fn select_columns(&self, order: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = order.iter().find(|&&j| j >= self.p()) {
            return Err(Error::InvalidSelection(format!(
                "column {bad} out of range"
            )));
        }
        let schema = order.iter().map(|&j| self.schema[j].clone()).collect();
        let mut codes = Vec::with_capacity(self.n * order.len());
        for rec in self.records() {
            codes.extend(order.iter().map(|&j| rec[j]));
        }
        Ok(Dataset {
            schema,
            codes,
            n: self.n,
        })
    }

    /// Event tree over this dataset's schema in column order.
    pub fn event_tree(&self) -> Result<EventTree> {
        EventTree::new(self.schema.clone())
    }

    pub fn check_tree(&self, tree: &EventTree) -> Result<()> {
        if tree.variables() != self.schema.as_slice() {
            return Err(Error::SchemaMismatch(
                "dataset columns and levels differ from the tree's variables".to_string(),
            ));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.schema.iter().map(|v| v.name()))?;
        for rec in self.records() {
            w.write_record(
                rec.iter()
                    .zip(&self.schema)
                    .map(|(&c, v)| v.levels()[c as usize].as_str()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Declared level order, keyed by column name (or 1-based index when
    /// there is no header).
    pub declared_levels: HashMap<String, Vec<String>>,
}

pub fn read_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv_from(file, options)
}

/// Parses a CSV table. Levels are taken from `declared_levels` where given,
/// otherwise inferred as the sorted distinct values of the column.
pub fn read_csv_from<R: Read>(reader: R, options: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .from_reader(reader);
    let mut names: Option<Vec<String>> = if options.has_header {
        Some(
            rdr.headers()?
                .iter()
                .map(|s| s.trim().to_string())
                .collect(),
        )
    } else {
        None
    };
    let mut cells: Vec<Vec<String>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let width = names.as_ref().map(Vec::len).unwrap_or(rec.len());
        if rec.len() != width {
            return Err(Error::RaggedRow {
                row: r + 1,
                expected: width,
                found: rec.len(),
            });
        }
        if names.is_none() {
            names = Some((1..=rec.len()).map(|i| i.to_string()).collect());
        }
        cells.push(rec.iter().map(|s| s.trim().to_string()).collect());
    }
    let names = names.unwrap_or_default();
    if names.is_empty() {
        return Err(Error::NoColumns);
    }
    for key in options.declared_levels.keys() {
        if !names.contains(key) {
            return Err(Error::UnknownVariable(key.clone()));
        }
    }

    let mut schema = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let levels = match options.declared_levels.get(name) {
            Some(levels) => levels.clone(),
            None => cells
                .iter()
                .map(|row| row[j].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        };
        schema.push(VariableSpec::new(name.clone(), levels)?);
    }

    let lookup: Vec<HashMap<&str, u32>> = schema
        .iter()
        .map(|v| {
            v.levels()
                .iter()
                .enumerate()
                .map(|(c, l)| (l.as_str(), c as u32))
                .collect()
        })
        .collect();
    let mut codes = Vec::with_capacity(cells.len() * names.len());
    for (r, row) in cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            match lookup[j].get(cell.as_str()) {
                Some(&c) => codes.push(c),
                None => {
                    return Err(Error::UnknownLevel {
                        row: r + 1,
                        column: names[j].clone(),
                        value: cell.clone(),
                    })
                }
            }
        }
    }
    Dataset::from_codes(schema, codes)
}

/// Per-vertex child-value counts at every depth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexCounts {
    cards: Vec<usize>,
    /// `counts[d][v * |X_d| + x]`.
    counts: Vec<Vec<u64>>,
    n: u64,
}

impl VertexCounts {
    pub fn new(data: &Dataset, tree: &EventTree) -> Result<Self> {
        Self::with_exec(data, tree, Exec::default())
    }

    /// One pass over the records. Parallel execution splits the records into
    /// chunks and sums the partial tables.
    pub fn with_exec(data: &Dataset, tree: &EventTree, exec: Exec) -> Result<Self> {
        data.check_tree(tree)?;
        let p = tree.p();
        let zero = || -> Vec<Vec<u64>> {
            (0..p)
                .map(|d| vec![0u64; tree.width(d) * tree.cardinality(d)])
                .collect()
        };
        let tally = |rows: &[u32], table: &mut Vec<Vec<u64>>| {
            for rec in rows.chunks(p) {
                let mut v = 0usize;
                for (d, &x) in rec.iter().enumerate() {
                    let c = tree.cardinality(d);
                    table[d][v * c + x as usize] += 1;
                    v = v * c + x as usize;
                }
            }
        };

        let chunks = exec.chunks().min(data.n().max(1));
        let counts = if chunks <= 1 {
            let mut table = zero();
            tally(data.codes(), &mut table);
            table
        } else {
            let rows_per = data.n().div_ceil(chunks);
            let slices: Vec<&[u32]> = data.codes().chunks(rows_per * p).collect();
            let partials = exec.map(&slices, |rows| {
                let mut table = zero();
                tally(rows, &mut table);
                table
            });
            let mut iter = partials.into_iter();
            let mut total = iter.next().unwrap_or_else(zero);
            for part in iter {
                for (acc, add) in total.iter_mut().zip(part) {
                    acc.iter_mut().zip(add).for_each(|(a, b)| *a += b);
                }
            }
            total
        };
        Ok(VertexCounts {
            cards: tree.cards().to_vec(),
            counts,
            n: data.n() as u64,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn depth(&self, d: usize) -> &[u64] {
        &self.counts[d]
    }

    pub fn vertex(&self, d: usize, v: usize) -> &[u64] {
        let c = self.cards[d];
        &self.counts[d][v * c..(v + 1) * c]
    }

    /// Sums vertex counts into the stages of `staging`.
    pub fn aggregate(&self, staging: &Staging) -> StageCounts {
        let counts = (0..self.cards.len())
            .map(|d| {
                let c = self.cards[d];
                let mut out = vec![0u64; staging.n_stages(d) * c];
                for (v, &s) in staging.depth(d).iter().enumerate() {
                    let s = s as usize;
                    for x in 0..c {
                        out[s * c + x] += self.counts[d][v * c + x];
                    }
                }
                out
            })
            .collect();
        StageCounts {
            cards: self.cards.clone(),
            counts,
            n: self.n,
        }
    }
}

/// Child-value counts per stage, the sufficient statistics of a staging.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageCounts {
    cards: Vec<usize>,
    /// `counts[d][s * |X_d| + x]`.
    counts: Vec<Vec<u64>>,
    n: u64,
}

impl StageCounts {
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p(&self) -> usize {
        self.cards.len()
    }

    pub fn cardinality(&self, d: usize) -> usize {
        self.cards[d]
    }

    pub fn n_stages(&self, d: usize) -> usize {
        self.counts[d].len() / self.cards[d]
    }

    pub fn stage(&self, d: usize, s: usize) -> &[u64] {
        let c = self.cards[d];
        &self.counts[d][s * c..(s + 1) * c]
    }

    pub fn depth_total(&self, d: usize) -> u64 {
        self.counts[d].iter().sum()
    }
}

pub fn count_stages(data: &Dataset, tree: &EventTree, staging: &Staging) -> Result<StageCounts> {
    if !staging.matches_tree(tree) {
        return Err(Error::SchemaMismatch(
            "staging does not match the event tree".to_string(),
        ));
    }
    Ok(VertexCounts::new(data, tree)?.aggregate(staging))
}

/// Where a two-means binarization split the values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cut {
    /// Largest value coded 0.
    pub lower_max: f64,
    /// Smallest value coded 1.
    pub upper_min: f64,
}

impl Cut {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower_max + self.upper_min)
    }
}

/// Exact one-dimensional 2-means: scans every cut between consecutive
/// distinct sorted values and keeps the one with the smallest
/// within-cluster sum of squares. The lower cluster is coded 0.
pub fn binarize_two_means(values: &[f64]) -> Result<(Vec<u32>, Cut)> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse("non-finite value in column".to_string()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() || sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::ConstantColumn);
    }
    let n = sorted.len();
    let mut prefix = vec![0.0; n + 1];
    let mut prefix_sq = vec![0.0; n + 1];
    for (i, &v) in sorted.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
        prefix_sq[i + 1] = prefix_sq[i] + v * v;
    }
    let sse = |lo: usize, hi: usize| {
        let m = (hi - lo) as f64;
        let s = prefix[hi] - prefix[lo];
        (prefix_sq[hi] - prefix_sq[lo]) - s * s / m
    };
    let mut best: Option<(f64, usize)> = None;
    for k in 1..n {
        if sorted[k - 1] == sorted[k] {
            continue;
        }
        let cost = sse(0, k) + sse(k, n);
        if best.is_none_or(|(b, _)| cost < b) {
            best = Some((cost, k));
        }
    }
    let (_, k) = best.expect("at least two distinct values");
    let cut = Cut {
        lower_max: sorted[k - 1],
        upper_min: sorted[k],
    };
    let codes = values
        .iter()
        .map(|&v| u32::from(v >= cut.upper_min))
        .collect();
    Ok((codes, cut))
}
