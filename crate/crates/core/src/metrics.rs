//! Entropy, mutual information and the normalized information distance
//! between clusterings. All quantities are in nats.

use std::collections::{BTreeMap, HashMap};

use crate::data_model::Clustering;
use crate::error::{Error, Result};

/// Sparse co-occurrence counts of two clusterings over the same items.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    n: usize,
    cells: HashMap<(usize, usize), usize>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl ContingencyTable {
    pub fn new(s: &Clustering, t: &Clustering) -> Result<Self> {
        if s.n() != t.n() {
            return Err(Error::DimensionMismatch(format!(
                "clusterings over {} and {} items",
                s.n(),
                t.n()
            )));
        }
        let mut cells = HashMap::new();
        for (&a, &b) in s.assignment().iter().zip(t.assignment()) {
            *cells.entry((a, b)).or_insert(0) += 1;
        }
        Ok(Self {
            n: s.n(),
            cells,
            rows: s.sizes(),
            cols: t.sizes(),
        })
    }

    pub fn total(&self) -> usize {
        self.n
    }

    pub fn get(&self, c: usize, c2: usize) -> usize {
        self.cells.get(&(c, c2)).copied().unwrap_or(0)
    }

    pub fn row_sums(&self) -> &[usize] {
        &self.rows
    }

    pub fn col_sums(&self) -> &[usize] {
        &self.cols
    }

    /// Non-zero cells as `(row, col, count)`.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.cells.iter().map(|(&(a, b), &v)| (a, b, v))
    }
}

fn entropy_of_sizes(sizes: &[usize], n: usize) -> f64 {
    // Grouping equal sizes makes the uniform case exactly ln k.
    let mut by_size: BTreeMap<usize, usize> = BTreeMap::new();
    for &m in sizes.iter().filter(|&&m| m > 0) {
        *by_size.entry(m).or_insert(0) += 1;
    }
    let nf = n as f64;
    by_size
        .iter()
        .map(|(&m, &r)| ((r * m) as f64 / nf) * (nf / m as f64).ln())
        .sum()
}

pub fn entropy(s: &Clustering) -> f64 {
    if s.n() == 0 {
        return 0.0;
    }
    entropy_of_sizes(&s.sizes(), s.n())
}

/// Mutual information, clamped to `[0, min(H(S), H(S'))]`.
pub fn mutual_information(s: &Clustering, t: &Clustering) -> Result<f64> {
    let table = ContingencyTable::new(s, t)?;
    let n = table.total() as f64;
    let mut terms: Vec<f64> = table
        .nonzero()
        .map(|(a, b, v)| {
            let joint = v as f64;
            let indep = (table.rows[a] as u64 * table.cols[b] as u64) as f64;
            (joint / n) * (joint * n / indep).ln()
        })
        .collect();
    // Sorted summation keeps I(S, S') == I(S', S) bit for bit.
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    let bound = entropy_of_sizes(&table.rows, table.n).min(entropy_of_sizes(&table.cols, table.n));
    Ok(mi.clamp(0.0, bound))
}

/// Normalized information distance `1 - I / max(H, H')`, in `[0, 1]`.
///
/// Equal partitions are at distance exactly 0, which also covers the case of
/// two single-cluster partitions where both entropies vanish.
pub fn nid(s: &Clustering, t: &Clustering) -> Result<f64> {
    if s.n() != t.n() {
        return Err(Error::DimensionMismatch(format!(
            "clusterings over {} and {} items",
            s.n(),
            t.n()
        )));
    }
    if s == t {
        return Ok(0.0);
    }
    let h = entropy(s).max(entropy(t));
    if h == 0.0 {
        return Ok(0.0);
    }
    let mi = mutual_information(s, t)?;
    Ok((1.0 - mi / h).clamp(0.0, 1.0))
}
