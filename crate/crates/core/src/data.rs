//! Grouped datasets and the relabelling and resampling actions on them.

use std::collections::HashMap;
use std::io::Read;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::RngStream;
use crate::{Error, Result};

/// `k ≥ 2` groups of real-valued observation rows sharing one dimension.
///
/// Rows are stored contiguously, group after group, in row-major order, so the
/// whole buffer is the stacked `n × d` matrix `Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedDataset {
    dim: usize,
    sizes: Vec<usize>,
    /// Row offset of each group; `offsets[k] == n`.
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl GroupedDataset {
    /// Builds a dataset from per-group flat row-major buffers.
    pub fn new(dim: usize, groups: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("response dimension must be positive".into()));
        }
        if groups.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 groups, got {}",
                groups.len()
            )));
        }
        let mut sizes = Vec::with_capacity(groups.len());
        for (i, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidDataset(format!("group {} is empty", i + 1)));
            }
            if g.len() % dim != 0 {
                return Err(Error::InvalidDataset(format!(
                    "group {} has {} values, not a multiple of dimension {dim}",
                    i + 1,
                    g.len()
                )));
            }
            sizes.push(g.len() / dim);
        }
        if groups.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite response value".into()));
        }
        let offsets = offsets_for(&sizes);
        Ok(GroupedDataset {
            dim,
            sizes,
            offsets,
            values: groups.concat(),
        })
    }

    /// Univariate dataset, one slice per group.
    pub fn univariate<G: AsRef<[f64]>>(groups: &[G]) -> Result<Self> {
        Self::new(1, groups.iter().map(|g| g.as_ref().to_vec()).collect())
    }

    /// Dataset from explicit rows, one list of rows per group.
    pub fn from_rows(groups: &[Vec<Vec<f64>>]) -> Result<Self> {
        let dim = groups
            .iter()
            .flatten()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidDataset("no rows".into()))?;
        let mut flat = Vec::with_capacity(groups.len());
        for (i, g) in groups.iter().enumerate() {
            if g.iter().any(|r| r.len() != dim) {
                return Err(Error::InvalidDataset(format!(
                    "group {} has a row whose length differs from {dim}",
                    i + 1
                )));
            }
            flat.push(g.concat());
        }
        Self::new(dim, flat)
    }

    /// Number of groups `k`.
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    /// Total number of rows `n`.
    pub fn n(&self) -> usize {
        self.offsets[self.sizes.len()]
    }

    /// Response dimension `d_P`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Group `i` as a flat row-major slice of `n_i × d` values.
    pub fn group(&self, i: usize) -> &[f64] {
        &self.values[self.offsets[i] * self.dim..self.offsets[i + 1] * self.dim]
    }

    pub(crate) fn group_mut(&mut self, i: usize) -> &mut [f64] {
        let (a, b) = (self.offsets[i] * self.dim, self.offsets[i + 1] * self.dim);
        &mut self.values[a..b]
    }

    /// Rows of group `i`.
    pub fn rows(&self, i: usize) -> std::slice::ChunksExact<'_, f64> {
        self.group(i).chunks_exact(self.dim)
    }

    /// Row `r` of the stacked matrix `Z`.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    /// The stacked matrix `Z`, row-major.
    pub fn stacked(&self) -> &[f64] {
        &self.values
    }

    /// Group label (0-based) of stacked row `r`.
    pub fn label_of_row(&self, r: usize) -> usize {
        self.offsets.partition_point(|&o| o <= r) - 1
    }

    /// The assignment that leaves the dataset unchanged.
    pub fn identity_assignment(&self) -> GroupAssignment {
        GroupAssignment {
            labels: block_labels(&self.sizes),
        }
    }

    /// A dataset of the same shape, for use as a reusable output buffer.
    pub(crate) fn same_shape(&self) -> GroupedDataset {
        self.clone()
    }

    pub(crate) fn same_shape_as(&self, other: &GroupedDataset) -> bool {
        self.dim == other.dim && self.sizes == other.sizes
    }
}

fn offsets_for(sizes: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for &s in sizes {
        acc += s;
        offsets.push(acc);
    }
    offsets
}

fn block_labels(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(i, &s)| std::iter::repeat_n(i, s))
        .collect()
}

/// Group membership for every stacked row, with the dataset's multiplicities.
///
/// Labels are 0-based group indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupAssignment {
    labels: Vec<usize>,
}

impl GroupAssignment {
    /// Validates that `labels` has exactly `sizes[i]` occurrences of each `i`.
    pub fn new(labels: Vec<usize>, sizes: &[usize]) -> Result<Self> {
        let n: usize = sizes.iter().sum();
        if labels.len() != n {
            return Err(Error::AssignmentShape(format!(
                "expected {n} labels, got {}",
                labels.len()
            )));
        }
        let mut counts = vec![0usize; sizes.len()];
        for &l in &labels {
            *counts.get_mut(l).ok_or_else(|| {
                Error::AssignmentShape(format!("label {l} out of range for {} groups", sizes.len()))
            })? += 1;
        }
        if counts != sizes {
            return Err(Error::AssignmentShape(format!(
                "label multiplicities {counts:?} differ from group sizes {sizes:?}"
            )));
        }
        Ok(GroupAssignment { labels })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Relabels the rows of `ds`: group `i` of the output holds, in stacked order,
/// the rows of `Z` that `a` labels `i`.
pub fn permute(ds: &GroupedDataset, a: &GroupAssignment) -> Result<GroupedDataset> {
    let mut out = ds.same_shape();
    permute_into(ds, a, &mut out)?;
    Ok(out)
}

/// [`permute`] writing into a buffer of the same shape as `ds`.
pub fn permute_into(
    ds: &GroupedDataset,
    a: &GroupAssignment,
    out: &mut GroupedDataset,
) -> Result<()> {
    if a.labels.len() != ds.n() {
        return Err(Error::AssignmentShape(format!(
            "assignment has {} labels for {} rows",
            a.labels.len(),
            ds.n()
        )));
    }
    if !out.same_shape_as(ds) {
        return Err(Error::AssignmentShape("output buffer shape differs from input".into()));
    }
    let d = ds.dim;
    let mut cursor: Vec<usize> = ds.offsets[..ds.k()].to_vec();
    for (r, &l) in a.labels.iter().enumerate() {
        let slot = cursor
            .get_mut(l)
            .ok_or_else(|| Error::AssignmentShape(format!("label {l} out of range")))?;
        if *slot >= ds.offsets[l + 1] {
            return Err(Error::AssignmentShape(format!(
                "label {l} occurs more than {} times",
                ds.sizes[l]
            )));
        }
        out.values[*slot * d..(*slot + 1) * d].copy_from_slice(ds.row(r));
        *slot += 1;
    }
    Ok(())
}

/// A uniformly random assignment with the dataset's group sizes
/// (Fisher–Yates on the block labels).
pub fn random_assignment(ds: &GroupedDataset, stream: &RngStream) -> GroupAssignment {
    let mut rng = stream.rng();
    shuffled_assignment(ds, &mut rng)
}

pub(crate) fn shuffled_assignment<R: Rng>(ds: &GroupedDataset, rng: &mut R) -> GroupAssignment {
    let mut labels = block_labels(&ds.sizes);
    labels.shuffle(rng);
    GroupAssignment { labels }
}

/// Within-group bootstrap: group `i` of the output is `n_i` rows drawn
/// uniformly with replacement from group `i` of `ds`.
pub fn bootstrap_resample(ds: &GroupedDataset, stream: &RngStream) -> GroupedDataset {
    let mut out = ds.same_shape();
    resample_into(ds, &mut stream.rng(), &mut out);
    out
}

pub(crate) fn resample_into<R: Rng>(ds: &GroupedDataset, rng: &mut R, out: &mut GroupedDataset) {
    debug_assert!(out.same_shape_as(ds));
    let d = ds.dim;
    for g in 0..ds.k() {
        let size = ds.sizes[g];
        let src = ds.group(g);
        let dst = out.group_mut(g);
        if d == 1 {
            for slot in dst.iter_mut() {
                *slot = src[rng.random_range(0..size)];
            }
        } else {
            for row in dst.chunks_exact_mut(d) {
                let j = rng.random_range(0..size);
                row.copy_from_slice(&src[j * d..(j + 1) * d]);
            }
        }
    }
}

/// A dataset read from CSV together with the original group labels, in group
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub labels: Vec<String>,
    pub dataset: GroupedDataset,
}

/// Reads `group,x1,...,xd` CSV with a header row. Groups are ordered by first
/// appearance of their label.
pub fn read_csv<R: Read>(reader: R) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv(format!("header row: {e}")))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::Csv(
            "header must name a group column followed by at least one response column".into(),
        ));
    }
    let dim = headers.len() - 1;
    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record.map_err(|e| Error::Csv(format!("line {line}: {e}")))?;
        if record.len() != dim + 1 {
            return Err(Error::Csv(format!(
                "line {line}: expected {} fields, found {}",
                dim + 1,
                record.len()
            )));
        }
        let label = record[0].to_string();
        if label.is_empty() {
            return Err(Error::Csv(format!("line {line}: empty group label")));
        }
        let g = *index.entry(label.clone()).or_insert_with(|| {
            order.push(label);
            groups.push(Vec::new());
            groups.len() - 1
        });
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Csv(format!(
                    "line {line}: column '{}' value '{field}' is not a number",
                    &headers[j + 1]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Csv(format!("line {line}: non-finite value '{field}'")));
            }
            groups[g].push(v);
        }
    }
    let dataset = GroupedDataset::new(dim, groups).map_err(|e| Error::Csv(e.to_string()))?;
    Ok(LabeledDataset {
        labels: order,
        dataset,
    })
}
