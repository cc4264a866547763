//! Log-space evaluation of the Gaussian product partition model.
//!
//! The posterior over partitions is proportional to the product of per-cluster
//! marginal likelihoods (Normal-Gamma prior integrated out, columns
//! independent) times the Chinese-restaurant-process partition prior.

use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;

use crate::data_model::{Clustering, ExpressionMatrix, Hyperparameters};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-column count, mean and sum of squared deviations for one cluster.
///
/// Updated with Welford's recurrences so that adding or removing a single row
/// costs `O(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    count: usize,
    mean: Vec<f64>,
    ssd: Vec<f64>,
}

impl ClusterStats {
    pub fn empty(p: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; p],
            ssd: vec![0.0; p],
        }
    }

    pub fn from_rows<'a>(p: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut s = Self::empty(p);
        for r in rows {
            s.push(r);
        }
        s
    }

    /// Statistics of the listed rows of `d`.
    pub fn of_members(d: &ExpressionMatrix, members: &[usize]) -> Self {
        Self::from_rows(d.p(), members.iter().map(|&i| d.row(i)))
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn ssd(&self) -> &[f64] {
        &self.ssd
    }

    pub fn push(&mut self, row: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.ssd).zip(row) {
            let delta = x - *m;
            *m += delta / c;
            *s += delta * (x - *m);
        }
    }

    /// Removes a row previously pushed.
    pub fn remove(&mut self, row: &[f64]) {
        debug_assert!(self.count > 0);
        if self.count == 1 {
            *self = Self::empty(self.mean.len());
            return;
        }
        let c = self.count as f64;
        self.count -= 1;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.ssd).zip(row) {
            let old = *m;
            *m = (c * old - x) / (c - 1.0);
            *s = (*s - (x - old) * (x - *m)).max(0.0);
        }
    }

    /// Pooled statistics of two disjoint clusters.
    pub fn merged(&self, other: &Self) -> Self {
        if self.count == 0 {
            return other.clone();
        }
        if other.count == 0 {
            return self.clone();
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let mut out = Self::empty(self.mean.len());
        out.count = self.count + other.count;
        for j in 0..self.mean.len() {
            let delta = other.mean[j] - self.mean[j];
            out.mean[j] = self.mean[j] + delta * nb / n;
            out.ssd[j] = self.ssd[j] + other.ssd[j] + delta * delta * na * nb / n;
        }
        out
    }

    /// Log marginal likelihood of the cluster, summed over columns.
    pub fn log_marginal(&self, h: &Hyperparameters) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyCluster);
        }
        Ok(self.log_marginal_unchecked(h))
    }

    pub(crate) fn log_marginal_unchecked(&self, h: &Hyperparameters) -> f64 {
        let n = self.count as f64;
        let rho = h.rho0 + n;
        let alpha = h.alpha0 + 0.5 * n;
        let per_column_const = -0.5 * n * LN_2PI + 0.5 * (h.rho0.ln() - rho.ln()) + ln_gamma(alpha)
            - ln_gamma(h.alpha0)
            + h.alpha0 * h.beta0.ln();
        self.mean
            .iter()
            .zip(&self.ssd)
            .map(|(&m, &s)| {
                let dev = m - h.mu0;
                let beta = h.beta0 + 0.5 * s + n * h.rho0 * dev * dev / (2.0 * rho);
                per_column_const - alpha * beta.ln()
            })
            .sum()
    }
}

/// Log of the CRP partition prior.
pub fn log_crp_prior(s: &Clustering, eta0: f64) -> f64 {
    let numerator: f64 =
        s.k() as f64 * eta0.ln() + s.sizes().iter().map(|&m| ln_cluster_weight(m)).sum::<f64>();
    let denominator: f64 = (1..=s.n()).map(|i| (eta0 + i as f64 - 1.0).ln()).sum();
    numerator - denominator
}

/// `ln (m - 1)!`, the prior weight of a cluster of size `m >= 1`.
pub(crate) fn ln_cluster_weight(m: usize) -> f64 {
    ln_factorial(m as u64 - 1)
}

/// Change in the log prior when one cluster of size `from` loses an item to a
/// cluster of size `to` (`to == 0` opens a new cluster; `from == 1` closes one).
pub(crate) fn log_prior_move_delta(from: usize, to: usize, eta0: f64) -> f64 {
    let mut d = 0.0;
    // (m-1)! terms: leaving cluster shrinks from `from` to `from - 1`.
    if from == 1 {
        d -= eta0.ln();
    } else {
        d -= ((from - 1) as f64).ln();
    }
    if to == 0 {
        d += eta0.ln();
    } else {
        d += (to as f64).ln();
    }
    d
}

/// Log marginal likelihood of a cluster given its rows.
pub fn log_cluster_marginal(rows: &[&[f64]], h: &Hyperparameters) -> Result<f64> {
    let p = rows.first().ok_or(Error::EmptyCluster)?.len();
    if p == 0 {
        return Err(Error::Invalid("cluster rows have no columns".into()));
    }
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::DimensionMismatch("ragged cluster rows".into()));
    }
    ClusterStats::from_rows(p, rows.iter().copied()).log_marginal(h)
}

/// Sum of per-cluster log marginals of `d` under `s` (no prior term).
pub fn log_likelihood(d: &ExpressionMatrix, s: &Clustering, h: &Hyperparameters) -> Result<f64> {
    if s.n() != d.n() {
        return Err(Error::DimensionMismatch(format!(
            "clustering over {} items, matrix has {} rows",
            s.n(),
            d.n()
        )));
    }
    s.blocks()
        .iter()
        .map(|b| ClusterStats::of_members(d, b).log_marginal(h))
        .sum()
}

/// Unnormalized log posterior of a clustering: log likelihood plus log prior.
pub fn log_posterior_score(
    d: &ExpressionMatrix,
    s: &Clustering,
    h: &Hyperparameters,
) -> Result<f64> {
    Ok(log_likelihood(d, s, h)? + log_crp_prior(s, h.eta0))
}

/// Log marginal likelihood of query data under a stored clustering.
///
/// `query_genes` are the row ids of the stored clustering; the query rows must
/// already be aligned to them.
pub fn marginal_likelihood_of_query(
    query: &ExpressionMatrix,
    stored: &Clustering,
    stored_genes: &[String],
    h: &Hyperparameters,
) -> Result<f64> {
    if query.gene_ids() != stored_genes {
        let missing: Vec<String> = stored_genes
            .iter()
            .filter(|g| !query.gene_ids().contains(g))
            .cloned()
            .collect();
        if missing.is_empty() {
            return Err(Error::DimensionMismatch(
                "query rows are not aligned to the stored gene order".into(),
            ));
        }
        return Err(Error::MissingGenes(missing));
    }
    log_likelihood(query, stored, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h() -> Hyperparameters {
        Hyperparameters::default()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn prior_single_item_is_certain() {
        assert_eq!(log_crp_prior(&Clustering::single(1), 1.0), 0.0);
    }

    #[test]
    fn prior_two_items() {
        let half = 0.5f64.ln();
        assert!(close(
            log_crp_prior(&Clustering::single(2), 1.0),
            half,
            1e-15
        ));
        assert!(close(
            log_crp_prior(&Clustering::singletons(2), 1.0),
            half,
            1e-15
        ));
    }

    #[test]
    fn marginal_one_by_one_zero() {
        let m = log_cluster_marginal(&[&[0.0]], &h()).unwrap();
        assert!(close(m, 0.25f64.ln(), 1e-14), "{m}");
    }

    #[test]
    fn marginal_two_rows() {
        let m = log_cluster_marginal(&[&[1.0], &[-1.0]], &h()).unwrap();
        let expected = ((2.0 * std::f64::consts::PI).recip() * 3f64.sqrt().recip() * 0.25).ln();
        assert!(close(m, expected, 1e-14));
        assert!((m - -3.7734).abs() < 1e-4);
    }

    #[test]
    fn marginal_sums_over_columns() {
        let rows: [&[f64]; 3] = [&[0.3, -1.2, 2.0], &[0.1, 0.4, 1.1], &[-0.7, 0.9, 1.5]];
        let full = log_cluster_marginal(&rows, &h()).unwrap();
        let per_col: f64 = (0..3)
            .map(|j| {
                let col: Vec<[f64; 1]> = rows.iter().map(|r| [r[j]]).collect();
                let refs: Vec<&[f64]> = col.iter().map(|c| &c[..]).collect();
                log_cluster_marginal(&refs, &h()).unwrap()
            })
            .sum();
        assert!(close(full, per_col, 1e-13));
    }

    #[test]
    fn empty_cluster_rejected() {
        assert!(matches!(
            log_cluster_marginal(&[], &h()),
            Err(Error::EmptyCluster)
        ));
    }

    #[test]
    fn score_single_row_is_marginal() {
        let d = ExpressionMatrix::from_rows("e", &[vec![0.4, -0.2]]).unwrap();
        let s = Clustering::single(1);
        let m = log_cluster_marginal(&[d.row(0)], &h()).unwrap();
        assert_eq!(log_posterior_score(&d, &s, &h()).unwrap(), m);
    }

    #[test]
    fn identical_rows_prefer_coclustering() {
        let d = ExpressionMatrix::from_rows("e", &[vec![1.5, -0.3], vec![1.5, -0.3]]).unwrap();
        let together = log_posterior_score(&d, &Clustering::single(2), &h()).unwrap();
        let apart = log_posterior_score(&d, &Clustering::singletons(2), &h()).unwrap();
        assert!(together > apart);
    }

    #[test]
    fn dimension_mismatch() {
        let d = ExpressionMatrix::from_rows("e", &[vec![1.0]]).unwrap();
        assert!(log_posterior_score(&d, &Clustering::single(2), &h()).is_err());
    }

    #[test]
    fn query_likelihood_singletons_is_row_sum() {
        let d =
            ExpressionMatrix::from_rows("e", &[vec![1.0, 2.0], vec![-0.5, 0.0], vec![0.2, 0.1]])
                .unwrap();
        let s = Clustering::singletons(3);
        let total = marginal_likelihood_of_query(&d, &s, d.gene_ids(), &h()).unwrap();
        let rows: f64 = (0..3)
            .map(|i| log_cluster_marginal(&[d.row(i)], &h()).unwrap())
            .sum();
        assert!(close(total, rows, 1e-14));
    }

    #[test]
    fn query_likelihood_reports_missing_genes() {
        let d = ExpressionMatrix::from_rows("e", &[vec![1.0]]).unwrap();
        let genes = vec!["g1".to_string(), "zz".to_string()];
        let err =
            marginal_likelihood_of_query(&d, &Clustering::single(2), &genes, &h()).unwrap_err();
        assert!(matches!(err, Error::MissingGenes(g) if g == vec!["zz".to_string()]));
    }

    #[test]
    fn welford_remove_and_merge_match_rebuild() {
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|i| vec![i as f64 * 0.37 - 1.0, (i * i) as f64 * 0.1])
            .collect();
        let mut all = ClusterStats::from_rows(2, rows.iter().map(Vec::as_slice));
        all.remove(&rows[3]);
        let rebuilt = ClusterStats::from_rows(
            2,
            rows.iter()
                .enumerate()
                .filter(|(i, _)| *i != 3)
                .map(|(_, r)| r.as_slice()),
        );
        for j in 0..2 {
            assert!(close(all.mean()[j], rebuilt.mean()[j], 1e-12));
            assert!(close(all.ssd()[j], rebuilt.ssd()[j], 1e-12));
        }
        let a = ClusterStats::from_rows(2, rows[..3].iter().map(Vec::as_slice));
        let b = ClusterStats::from_rows(2, rows[3..].iter().map(Vec::as_slice));
        let whole = ClusterStats::from_rows(2, rows.iter().map(Vec::as_slice));
        let m = a.merged(&b);
        for j in 0..2 {
            assert!(close(m.mean()[j], whole.mean()[j], 1e-12));
            assert!(close(m.ssd()[j], whole.ssd()[j], 1e-12));
        }
    }

    #[test]
    fn prior_move_delta_matches_recompute() {
        let eta = 0.7;
        let before = Clustering::from_labels(&[0, 0, 0, 1, 1, 2]);
        // item 0 from cluster of 3 to cluster of 2
        let after = Clustering::from_labels(&[1, 0, 0, 1, 1, 2]);
        let d = log_crp_prior(&after, eta) - log_crp_prior(&before, eta);
        assert!(close(log_prior_move_delta(3, 2, eta), d, 1e-12));
        // singleton item 5 opens nothing, joins cluster of 3
        let after = Clustering::from_labels(&[0, 0, 0, 1, 1, 0]);
        let d = log_crp_prior(&after, eta) - log_crp_prior(&before, eta);
        assert!(close(log_prior_move_delta(1, 3, eta), d, 1e-12));
        // item 3 to a new cluster
        let after = Clustering::from_labels(&[0, 0, 0, 3, 1, 2]);
        let d = log_crp_prior(&after, eta) - log_crp_prior(&before, eta);
        assert!(close(log_prior_move_delta(2, 0, eta), d, 1e-12));
    }
}
