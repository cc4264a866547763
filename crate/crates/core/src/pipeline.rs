//! End-to-end steps shared by the command line and the evaluation suite:
//! gene selection, alignment and normalization, and per-experiment fitting.

use std::fmt;
use std::str::FromStr;

use crate::data_model::{
    Clustering, ExpressionMatrix, FitMetadata, Hyperparameters, ModelIndex, ModelIndexEntry,
};
use crate::error::{Error, Result};
use crate::io::{align, select_genes, zscore_normalize, GeneScores};
use crate::par;
use crate::search::{
    candidate_sweep, greedy_map_search, restricted_map_search, Heuristic, KRange, SearchConfig,
};

/// How each experiment's clustering is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMethod {
    /// Stochastic greedy search over all partitions.
    #[default]
    Greedy,
    /// Best PPM score among k-means and complete-linkage solutions for
    /// `k` in `2..=ceil(sqrt(n))`.
    Restricted,
    /// A single k-means solution at `k = ceil(sqrt(n) / 2)`.
    KMeansFixed,
}

impl FitMethod {
    pub fn name(self) -> &'static str {
        match self {
            FitMethod::Greedy => "greedy",
            FitMethod::Restricted => "restricted",
            FitMethod::KMeansFixed => "kmeans-fixed",
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(FitMethod::Greedy),
            "restricted" => Ok(FitMethod::Restricted),
            "kmeans-fixed" => Ok(FitMethod::KMeansFixed),
            other => Err(Error::Invalid(format!("unknown fit method `{other}`"))),
        }
    }
}

/// MAP (or restricted-space MAP) clustering of one normalized matrix.
pub fn fit_matrix(
    d: &ExpressionMatrix,
    method: FitMethod,
    h: &Hyperparameters,
    cfg: &SearchConfig,
) -> Result<(Clustering, f64)> {
    match method {
        FitMethod::Greedy => greedy_map_search(d, h, cfg),
        FitMethod::Restricted => {
            let c = candidate_sweep(
                d,
                &[Heuristic::KMeans, Heuristic::CompleteLinkage],
                &KRange::Default,
                cfg.seed,
            )?;
            restricted_map_search(d, &c, h)
        }
        FitMethod::KMeansFixed => {
            let c = candidate_sweep(d, &[Heuristic::KMeans], &KRange::Trivial, cfg.seed)?;
            restricted_map_search(d, &c, h)
        }
    }
}

/// Genes shared by every experiment, in the first experiment's order.
pub fn common_genes(matrices: &[ExpressionMatrix]) -> Vec<String> {
    let Some(first) = matrices.first() else {
        return Vec::new();
    };
    first
        .gene_ids()
        .iter()
        .filter(|g| matrices[1..].iter().all(|m| m.gene_ids().contains(g)))
        .cloned()
        .collect()
}

/// Chooses the shared gene list: the union of per-experiment top-`k` genes
/// when `top_k` is given (scores default to row variance of the normalized
/// data), otherwise every gene common to all experiments.
pub fn shared_genes(
    matrices: &[ExpressionMatrix],
    scores: &[Option<GeneScores>],
    top_k: Option<usize>,
) -> Result<Vec<String>> {
    let Some(k) = top_k else {
        return Ok(common_genes(matrices));
    };
    if !scores.is_empty() && scores.len() != matrices.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} score lists for {} experiments",
            scores.len(),
            matrices.len()
        )));
    }
    let normalized: Vec<ExpressionMatrix> = par::map(matrices, zscore_normalize);
    let pairs: Vec<(&ExpressionMatrix, Option<&GeneScores>)> = normalized
        .iter()
        .enumerate()
        .map(|(i, m)| (m, scores.get(i).and_then(Option::as_ref)))
        .collect();
    select_genes(&pairs, k)
}

/// Aligns to `genes` and z-scores the columns.
pub fn prepare(d: &ExpressionMatrix, genes: &[String]) -> Result<ExpressionMatrix> {
    Ok(zscore_normalize(&align(d, genes)?))
}

/// Fits every prepared matrix and assembles an index in input order.
pub fn fit_corpus(
    prepared: &[ExpressionMatrix],
    method: FitMethod,
    h: &Hyperparameters,
    cfg: &SearchConfig,
) -> Result<ModelIndex> {
    let fits = par::map(prepared, |d| fit_matrix(d, method, h, cfg));
    let mut index = ModelIndex::default();
    for (d, fit) in prepared.iter().zip(fits) {
        let (clustering, log_score) = fit?;
        index.push(ModelIndexEntry::new(
            d.experiment_id(),
            d.gene_ids().to_vec(),
            clustering,
            FitMetadata {
                method: method.name().to_string(),
                log_score,
                seed: cfg.seed,
            },
        )?)?;
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppm::log_posterior_score;

    fn matrix(id: &str, genes: &[&str], rows: &[[f64; 2]]) -> ExpressionMatrix {
        ExpressionMatrix::new(
            id,
            genes.iter().map(|s| s.to_string()).collect(),
            vec!["s1".into(), "s2".into()],
            rows.concat(),
        )
        .unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            FitMethod::Greedy,
            FitMethod::Restricted,
            FitMethod::KMeansFixed,
        ] {
            assert_eq!(m.name().parse::<FitMethod>().unwrap(), m);
        }
        assert!("mcmc".parse::<FitMethod>().is_err());
    }

    #[test]
    fn common_genes_keep_first_order() {
        let a = matrix("a", &["x", "y", "z"], &[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let b = matrix("b", &["z", "x"], &[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(common_genes(&[a, b]), vec!["x", "z"]);
    }

    #[test]
    fn every_method_scores_its_result() {
        let d = matrix(
            "a",
            &["g1", "g2", "g3", "g4", "g5"],
            &[
                [3.0, 3.1],
                [2.9, 3.0],
                [-3.0, -3.2],
                [-3.1, -2.9],
                [0.0, 0.1],
            ],
        );
        let d = prepare(&d, &common_genes(std::slice::from_ref(&d))).unwrap();
        let h = Hyperparameters::default();
        for m in [
            FitMethod::Greedy,
            FitMethod::Restricted,
            FitMethod::KMeansFixed,
        ] {
            let (c, s) = fit_matrix(&d, m, &h, &SearchConfig::default()).unwrap();
            assert_eq!(s, log_posterior_score(&d, &c, &h).unwrap(), "{m}");
        }
    }

    #[test]
    fn fit_corpus_preserves_order_and_metadata() {
        let a = matrix("a", &["g1", "g2"], &[[1.0, 0.0], [0.0, 1.0]]);
        let b = matrix("b", &["g1", "g2"], &[[1.0, 1.0], [0.5, 0.2]]);
        let prepared: Vec<_> = [a, b]
            .iter()
            .map(|m| prepare(m, &["g1".to_string(), "g2".to_string()]).unwrap())
            .collect();
        let cfg = SearchConfig {
            seed: 5,
            ..SearchConfig::default()
        };
        let idx = fit_corpus(
            &prepared,
            FitMethod::Greedy,
            &Hyperparameters::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(idx.ids(), vec!["a", "b"]);
        assert!(idx
            .entries()
            .iter()
            .all(|e| e.fit.seed == 5 && e.fit.method == "greedy"));
    }
}
