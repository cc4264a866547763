//! Domain types shared across the crate.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n x p` expression matrix: rows are genes, columns are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    experiment_id: String,
    gene_ids: Vec<String>,
    sample_ids: Vec<String>,
    /// Row-major, `n * p`.
    values: Vec<f64>,
}

impl ExpressionMatrix {
    pub fn new(
        experiment_id: impl Into<String>,
        gene_ids: Vec<String>,
        sample_ids: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let n = gene_ids.len();
        let p = sample_ids.len();
        if n == 0 || p == 0 {
            return Err(Error::Invalid(format!(
                "matrix must have at least one gene and one sample (got {n}x{p})"
            )));
        }
        if values.len() != n * p {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n}x{p} matrix",
                values.len()
            )));
        }
        if let Some(dup) = first_duplicate(&gene_ids) {
            return Err(Error::Invalid(format!("duplicate gene id `{dup}`")));
        }
        if let Some(dup) = first_duplicate(&sample_ids) {
            return Err(Error::Invalid(format!("duplicate sample id `{dup}`")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite value at row {}, column {}",
                pos / p + 1,
                pos % p + 1
            )));
        }
        Ok(Self {
            experiment_id: experiment_id.into(),
            gene_ids,
            sample_ids,
            values,
        })
    }

    /// Builds a matrix from row vectors with generated gene and sample ids.
    pub fn from_rows(experiment_id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let genes = (0..rows.len()).map(|i| format!("g{}", i + 1)).collect();
        let samples = (0..p).map(|j| format!("s{}", j + 1)).collect();
        Self::new(experiment_id, genes, samples, rows.concat())
    }

    pub fn experiment_id(&self) -> &str {
        &self.experiment_id
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// Number of genes (rows).
    pub fn n(&self) -> usize {
        self.gene_ids.len()
    }

    /// Number of samples (columns).
    pub fn p(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.p())
    }

    /// Returns a copy with new values of the same shape.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(
            self.experiment_id.clone(),
            self.gene_ids.clone(),
            self.sample_ids.clone(),
            values,
        )
    }

    /// Returns a copy with the given rows, in the given order.
    pub(crate) fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.p());
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        Self::new(
            self.experiment_id.clone(),
            rows.iter().map(|&i| self.gene_ids[i].clone()).collect(),
            self.sample_ids.clone(),
            values,
        )
    }
}

fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter()
        .find(|id| !seen.insert(id.as_str()))
        .map(String::as_str)
}

/// A partition of `n` items into `k` non-empty clusters.
///
/// Labels are zero-based and canonical: cluster `c` is the `c`-th cluster to
/// appear when scanning items in order. Two clusterings describing the same
/// partition therefore compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Clustering {
    assignment: Vec<usize>,
    k: usize,
}

impl Clustering {
    /// Canonicalizes an arbitrary labelling.
    pub fn from_labels<L: Eq + std::hash::Hash>(labels: &[L]) -> Self {
        let mut map: HashMap<&L, usize> = HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Self {
            assignment,
            k: map.len(),
        }
    }

    /// Builds a clustering from disjoint blocks covering `0..n`.
    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (c, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::EmptyCluster);
            }
            for &i in block {
                if i >= n {
                    return Err(Error::Invalid(format!("item {i} out of range for n = {n}")));
                }
                if labels[i] != usize::MAX {
                    return Err(Error::Invalid(format!("item {i} in more than one block")));
                }
                labels[i] = c;
            }
        }
        if let Some(i) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::Invalid(format!("item {i} not covered by any block")));
        }
        Ok(Self::from_labels(&labels))
    }

    /// Validates a one-based labelling with declared `k` (the on-disk form).
    pub fn from_one_based(labels: &[usize], k: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Invalid("clustering of zero items".into()));
        }
        let mut used = vec![false; k];
        for &l in labels {
            if l == 0 || l > k {
                return Err(Error::Invalid(format!("label {l} outside 1..={k}")));
            }
            used[l - 1] = true;
        }
        if let Some(c) = used.iter().position(|u| !u) {
            return Err(Error::Invalid(format!(
                "label {} declared but unused",
                c + 1
            )));
        }
        Ok(Self::from_labels(labels))
    }

    pub fn single(n: usize) -> Self {
        Self {
            assignment: vec![0; n],
            k: usize::from(n > 0),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            assignment: (0..n).collect(),
            k: n,
        }
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn label(&self, i: usize) -> usize {
        self.assignment[i]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.assignment.iter().map(|l| l + 1).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.assignment {
            sizes[l] += 1;
        }
        sizes
    }

    /// Member indices of each cluster, in label order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.k];
        for (i, &l) in self.assignment.iter().enumerate() {
            blocks[l].push(i);
        }
        blocks
    }
}

/// Normal-Gamma prior parameters and the partition prior concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub mu0: f64,
    pub rho0: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub eta0: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            mu0: 0.0,
            rho0: 1.0,
            alpha0: 1.0,
            beta0: 1.0,
            eta0: 1.0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("rho0", self.rho0),
            ("alpha0", self.alpha0),
            ("beta0", self.beta0),
            ("eta0", self.eta0),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.mu0.is_finite() {
            return Err(Error::Invalid(format!(
                "mu0 must be finite, got {}",
                self.mu0
            )));
        }
        Ok(())
    }
}

/// How a stored clustering was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub method: String,
    pub log_score: f64,
    pub seed: u64,
}

/// One stored experiment model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelIndexEntry {
    pub experiment_id: String,
    pub gene_ids: Vec<String>,
    pub clustering: Clustering,
    pub fit: FitMetadata,
}

impl ModelIndexEntry {
    pub fn new(
        experiment_id: impl Into<String>,
        gene_ids: Vec<String>,
        clustering: Clustering,
        fit: FitMetadata,
    ) -> Result<Self> {
        if clustering.n() != gene_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "clustering over {} items but {} gene ids",
                clustering.n(),
                gene_ids.len()
            )));
        }
        Ok(Self {
            experiment_id: experiment_id.into(),
            gene_ids,
            clustering,
            fit,
        })
    }
}

/// The database of stored experiment models.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelIndex {
    entries: Vec<ModelIndexEntry>,
}

impl ModelIndex {
    pub fn new(entries: Vec<ModelIndexEntry>) -> Result<Self> {
        let mut index = Self::default();
        for e in entries {
            index.push(e)?;
        }
        Ok(index)
    }

    pub fn push(&mut self, entry: ModelIndexEntry) -> Result<()> {
        if self.get(&entry.experiment_id).is_some() {
            return Err(Error::Invalid(format!(
                "duplicate experiment id `{}` in index",
                entry.experiment_id
            )));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[ModelIndexEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&ModelIndexEntry> {
        self.entries.iter().find(|e| e.experiment_id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.experiment_id.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Categorical experiment annotations of one label type.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub label_type: String,
    pub labels: BTreeMap<String, Option<String>>,
}

impl GroundTruth {
    pub fn new(label_type: impl Into<String>) -> Self {
        Self {
            label_type: label_type.into(),
            labels: BTreeMap::new(),
        }
    }

    /// Adds one experiment's value; a second value for the same experiment is rejected.
    pub fn insert(&mut self, id: impl Into<String>, value: Option<String>) -> Result<()> {
        let id = id.into();
        if self.labels.contains_key(&id) {
            return Err(Error::Invalid(format!(
                "experiment `{id}` has more than one `{}` value",
                self.label_type
            )));
        }
        self.labels.insert(id, value);
        Ok(())
    }

    pub fn value(&self, id: &str) -> Option<&str> {
        self.labels.get(id).and_then(|v| v.as_deref())
    }
}

/// Symmetric binary `M x M` relevance matrix over an ordered id list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevanceMatrix {
    ids: Vec<String>,
    cells: Vec<u8>,
}

impl RelevanceMatrix {
    pub fn from_fn(ids: Vec<String>, f: impl Fn(usize, usize) -> bool) -> Self {
        let m = ids.len();
        let mut cells = vec![0u8; m * m];
        for i in 0..m {
            for j in 0..m {
                cells[i * m + j] = u8::from(f(i, j));
            }
        }
        Self { ids, cells }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.len() + j] != 0
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Ids relevant to the experiment at row `i`.
    pub fn relevant_to(&self, i: usize) -> HashSet<&str> {
        (0..self.len())
            .filter(|&j| self.get(i, j))
            .map(|j| self.ids[j].as_str())
            .collect()
    }

    /// Number of experiments with at least one relevant partner.
    pub fn experiments_with_relevant(&self) -> usize {
        (0..self.len())
            .filter(|&i| (0..self.len()).any(|j| self.get(i, j)))
            .count()
    }
}

/// Pairwise relevance under one label type: both labelled, equal, and distinct experiments.
pub fn relevance_matrix(gt: &GroundTruth, ids: &[String]) -> Result<RelevanceMatrix> {
    let values = ids
        .iter()
        .map(|id| {
            gt.labels
                .get(id)
                .map(|v| v.as_deref())
                .ok_or_else(|| Error::UnknownExperiment(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RelevanceMatrix::from_fn(ids.to_vec(), |i, j| {
        i != j && matches!((values[i], values[j]), (Some(a), Some(b)) if a == b)
    }))
}
