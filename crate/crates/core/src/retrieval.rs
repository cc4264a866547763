//! Ranking stored experiments against a query.

use std::collections::{BTreeMap, HashSet};

use crate::data_model::{Clustering, ExpressionMatrix, Hyperparameters, ModelIndex};
use crate::error::{Error, Result};
use crate::metrics::nid;
use crate::par;
use crate::ppm::marginal_likelihood_of_query;

/// Which direction of the score is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// Distances: smaller ranks first.
    Ascending,
    /// Likelihoods and correlations: larger ranks first.
    Descending,
}

/// Experiments ordered best-first, ties broken by id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    entries: Vec<(String, f64)>,
    polarity: Polarity,
}

impl RankedResult {
    pub fn new(mut entries: Vec<(String, f64)>, polarity: Polarity) -> Result<Self> {
        if let Some((id, s)) = entries.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::Invalid(format!("non-finite score {s} for `{id}`")));
        }
        let mut seen = HashSet::new();
        if let Some((id, _)) = entries.iter().find(|(id, _)| !seen.insert(id.clone())) {
            return Err(Error::Invalid(format!("duplicate id `{id}` in ranking")));
        }
        entries.sort_by(|(ia, a), (ib, b)| {
            let by_score = match polarity {
                Polarity::Ascending => a.total_cmp(b),
                Polarity::Descending => b.total_cmp(a),
            };
            by_score.then_with(|| ia.cmp(ib))
        });
        Ok(Self { entries, polarity })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids().any(|x| x == id)
    }

    /// The same ranking with one experiment removed.
    pub fn without(&self, id: &str) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|(x, _)| x != id)
                .cloned()
                .collect(),
            polarity: self.polarity,
        }
    }

    /// Keeps only entries whose id satisfies `keep`, preserving order.
    pub fn filtered(&self, keep: impl Fn(&str) -> bool) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|(x, _)| keep(x))
                .cloned()
                .collect(),
            polarity: self.polarity,
        }
    }
}

fn check_universe(genes: &[String], index: &ModelIndex) -> Result<()> {
    for e in index.entries() {
        if e.gene_ids != genes {
            let missing: Vec<String> = e
                .gene_ids
                .iter()
                .filter(|g| !genes.contains(g))
                .cloned()
                .collect();
            if missing.is_empty() {
                return Err(Error::DimensionMismatch(format!(
                    "entry `{}` uses a different gene order than the query",
                    e.experiment_id
                )));
            }
            return Err(Error::MissingGenes(missing));
        }
    }
    Ok(())
}

/// Ranks index entries by ascending NID to the query clustering.
pub fn model_distance_rank(
    query: &Clustering,
    query_genes: &[String],
    index: &ModelIndex,
) -> Result<RankedResult> {
    if query.n() != query_genes.len() {
        return Err(Error::DimensionMismatch(format!(
            "query clustering over {} items but {} gene ids",
            query.n(),
            query_genes.len()
        )));
    }
    check_universe(query_genes, index)?;
    let scores = par::map(index.entries(), |e| {
        nid(query, &e.clustering).map(|d| (e.experiment_id.clone(), d))
    });
    RankedResult::new(
        scores.into_iter().collect::<Result<_>>()?,
        Polarity::Ascending,
    )
}

/// Ranks index entries by descending log marginal likelihood of the query
/// data under each stored clustering (no prior term).
pub fn likelihood_rank(
    query_data: &ExpressionMatrix,
    index: &ModelIndex,
    h: &Hyperparameters,
) -> Result<RankedResult> {
    check_universe(query_data.gene_ids(), index)?;
    let scores = par::map(index.entries(), |e| {
        marginal_likelihood_of_query(query_data, &e.clustering, &e.gene_ids, h)
            .map(|s| (e.experiment_id.clone(), s))
    });
    RankedResult::new(
        scores.into_iter().collect::<Result<_>>()?,
        Polarity::Descending,
    )
}

/// Per-gene differential-expression p-values of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DEProfile {
    pub experiment_id: String,
    pub gene_ids: Vec<String>,
    pub p_values: Vec<f64>,
}

impl DEProfile {
    pub fn new(
        experiment_id: impl Into<String>,
        gene_ids: Vec<String>,
        p_values: Vec<f64>,
    ) -> Result<Self> {
        let experiment_id = experiment_id.into();
        if gene_ids.len() != p_values.len() {
            return Err(Error::DimensionMismatch(format!(
                "profile `{experiment_id}`: {} genes, {} p-values",
                gene_ids.len(),
                p_values.len()
            )));
        }
        if let Some(p) = p_values.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::Invalid(format!(
                "profile `{experiment_id}`: p-value {p} outside (0, 1]"
            )));
        }
        Ok(Self {
            experiment_id,
            gene_ids,
            p_values,
        })
    }

    /// Restricts the profile to `genes`, in that order.
    pub fn aligned(&self, genes: &[String]) -> Result<Self> {
        let pos: BTreeMap<&str, usize> = self
            .gene_ids
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();
        let missing: Vec<String> = genes
            .iter()
            .filter(|g| !pos.contains_key(g.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingGenes(missing));
        }
        Ok(Self {
            experiment_id: self.experiment_id.clone(),
            gene_ids: genes.to_vec(),
            p_values: genes
                .iter()
                .map(|g| self.p_values[pos[g.as_str()]])
                .collect(),
        })
    }
}

/// Pearson correlation; `None` when either vector has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks profiles by descending Pearson correlation of their p-value vectors
/// with the query's. A profile with the query's own id is skipped.
pub fn de_correlation_rank(query: &DEProfile, profiles: &[DEProfile]) -> Result<RankedResult> {
    let n = query.gene_ids.len();
    let corr_err = |id: &str, reason: &str| Error::Correlation {
        id: id.to_string(),
        reason: reason.to_string(),
    };
    if n < 2 {
        return Err(corr_err(&query.experiment_id, "fewer than 2 shared genes"));
    }
    let mut entries = Vec::with_capacity(profiles.len());
    for p in profiles
        .iter()
        .filter(|p| p.experiment_id != query.experiment_id)
    {
        if p.gene_ids != query.gene_ids {
            return Err(corr_err(
                &p.experiment_id,
                "gene list not aligned to the query",
            ));
        }
        let r = pearson(&query.p_values, &p.p_values).ok_or_else(|| {
            let who = if pearson(&query.p_values, &query.p_values).is_none() {
                &query.experiment_id
            } else {
                &p.experiment_id
            };
            corr_err(who, "zero variance")
        })?;
        entries.push((p.experiment_id.clone(), r));
    }
    RankedResult::new(entries, Polarity::Descending)
}

/// Keyword filter followed by distance ranking: experiments with mask value
/// `true` in distance order, the rest dropped.
pub fn combined_rank(
    mask: &BTreeMap<String, bool>,
    distances: &RankedResult,
) -> Result<RankedResult> {
    let ranked: HashSet<&str> = distances.ids().collect();
    let masked: HashSet<&str> = mask.keys().map(String::as_str).collect();
    if ranked != masked {
        let mut diff: Vec<String> = ranked
            .symmetric_difference(&masked)
            .map(|s| s.to_string())
            .collect();
        diff.sort();
        return Err(Error::Invalid(format!(
            "keyword mask and ranking cover different experiments: {}",
            diff.join(", ")
        )));
    }
    Ok(distances.filtered(|id| mask[id]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{FitMetadata, ModelIndexEntry};

    fn genes(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("g{}", i + 1)).collect()
    }

    fn index(entries: &[(&str, &[usize])]) -> ModelIndex {
        ModelIndex::new(
            entries
                .iter()
                .map(|(id, labels)| {
                    ModelIndexEntry::new(
                        *id,
                        genes(labels.len()),
                        Clustering::from_labels(labels),
                        FitMetadata {
                            method: "test".into(),
                            log_score: 0.0,
                            seed: 0,
                        },
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn clone_of_query_ranks_first() {
        let q = Clustering::from_labels(&[0, 0, 1, 1]);
        let idx = index(&[
            ("b", &[0, 1, 0, 1]),
            ("a", &[0, 1, 2, 3]),
            ("z", &[1, 1, 0, 0]),
        ]);
        let r = model_distance_rank(&q, &genes(4), &idx).unwrap();
        assert_eq!(r.entries()[0], ("z".to_string(), 0.0));
        assert_eq!(r.polarity(), Polarity::Ascending);
    }

    #[test]
    fn independent_entries_tie_lexicographically() {
        let q = Clustering::from_labels(&[0, 0, 1, 1]);
        let idx = index(&[
            ("c", &[0, 1, 0, 1]),
            ("a", &[0, 1, 1, 0]),
            ("b", &[1, 0, 1, 0]),
        ]);
        let r = model_distance_rank(&q, &genes(4), &idx).unwrap();
        let ids: Vec<&str> = r.ids().collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert!(r.entries().iter().all(|(_, d)| *d == 1.0));
    }

    #[test]
    fn three_entries_follow_pairwise_nid() {
        let q = Clustering::from_labels(&[0, 0, 0, 1, 1, 1]);
        let raw: [(&str, &[usize]); 3] = [
            ("e1", &[0, 0, 1, 1, 2, 2]),
            ("e2", &[0, 0, 0, 1, 1, 2]),
            ("e3", &[0, 1, 0, 1, 0, 1]),
        ];
        let idx = index(&raw);
        let r = model_distance_rank(&q, &genes(6), &idx).unwrap();
        let mut expected: Vec<(String, f64)> = raw
            .iter()
            .map(|(id, l)| {
                (
                    id.to_string(),
                    nid(&q, &Clustering::from_labels(l)).unwrap(),
                )
            })
            .collect();
        expected.sort_by(|a, b| a.1.total_cmp(&b.1));
        assert_eq!(r.entries(), expected.as_slice());
    }

    #[test]
    fn universe_mismatch_rejected() {
        let q = Clustering::single(3);
        let idx = index(&[("a", &[0, 0, 0])]);
        let other = vec!["x".to_string(), "g2".to_string(), "g3".to_string()];
        assert!(matches!(
            model_distance_rank(&q, &other, &idx),
            Err(Error::MissingGenes(g)) if g == vec!["g1".to_string()]
        ));
    }

    #[test]
    fn likelihood_prefers_planted_structure() {
        let rows = vec![
            vec![2.0, 2.1],
            vec![2.2, 1.9],
            vec![1.9, 2.0],
            vec![-2.0, -2.1],
            vec![-2.1, -1.9],
            vec![-1.9, -2.0],
        ];
        let d = ExpressionMatrix::from_rows("q", &rows).unwrap();
        let idx = index(&[
            ("planted", &[0, 0, 0, 1, 1, 1]),
            ("singletons", &[0, 1, 2, 3, 4, 5]),
        ]);
        let r = likelihood_rank(&d, &idx, &Hyperparameters::default()).unwrap();
        assert_eq!(r.ids().next(), Some("planted"));
        assert_eq!(r.polarity(), Polarity::Descending);
    }

    #[test]
    fn identical_entries_identical_scores() {
        let d = ExpressionMatrix::from_rows("q", &[vec![1.0], vec![0.5]]).unwrap();
        let idx = index(&[("b", &[0, 0]), ("a", &[0, 0])]);
        let r = likelihood_rank(&d, &idx, &Hyperparameters::default()).unwrap();
        assert_eq!(r.entries()[0].1, r.entries()[1].1);
        assert_eq!(r.ids().collect::<Vec<_>>(), vec!["a", "b"]);
    }

    fn profile(id: &str, p: &[f64]) -> DEProfile {
        DEProfile::new(id, genes(p.len()), p.to_vec()).unwrap()
    }

    #[test]
    fn pearson_examples() {
        let x = [0.1, 0.5, 0.9];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| 1.0 - 0.5 * v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        // cov = 0.28, sxx = 0.32, syy = 0.26
        let r = pearson(&x, &[0.2, 0.4, 0.9]).unwrap();
        assert!((r - 0.28 / (0.32f64 * 0.26).sqrt()).abs() < 1e-12);
        assert!((r - 0.970_725).abs() < 1e-5);
    }

    #[test]
    fn de_rank_orders_by_correlation() {
        let q = profile("q", &[0.1, 0.5, 0.9]);
        let ps = [
            profile("q", &[0.1, 0.5, 0.9]),
            profile("a", &[0.9, 0.5, 0.1]),
            profile("b", &[0.2, 0.4, 0.9]),
            profile("c", &[0.1, 0.5, 0.9]),
        ];
        let r = de_correlation_rank(&q, &ps).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), vec!["c", "b", "a"]);
    }

    #[test]
    fn de_rank_errors() {
        let q = profile("q", &[0.1, 0.5, 0.9]);
        let flat = profile("flat", &[0.3, 0.3, 0.3]);
        assert!(matches!(
            de_correlation_rank(&q, &[flat]),
            Err(Error::Correlation { id, .. }) if id == "flat"
        ));
        let short = profile("s", &[0.5]);
        assert!(de_correlation_rank(&short, &[]).is_err());
        assert!(DEProfile::new("x", genes(2), vec![0.0, 0.5]).is_err());
    }

    #[test]
    fn profile_alignment() {
        let p = profile("p", &[0.1, 0.2, 0.3]);
        let order = vec!["g3".to_string(), "g1".to_string()];
        assert_eq!(p.aligned(&order).unwrap().p_values, vec![0.3, 0.1]);
        assert!(p.aligned(&["zz".to_string()]).is_err());
    }

    fn distances() -> RankedResult {
        RankedResult::new(
            vec![
                ("a".into(), 0.4),
                ("b".into(), 0.1),
                ("c".into(), 0.9),
                ("d".into(), 0.2),
                ("e".into(), 0.3),
            ],
            Polarity::Ascending,
        )
        .unwrap()
    }

    fn mask(bits: &[(&str, bool)]) -> BTreeMap<String, bool> {
        bits.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn combined_rank_filters() {
        let d = distances();
        let all = mask(&[
            ("a", true),
            ("b", true),
            ("c", true),
            ("d", true),
            ("e", true),
        ]);
        assert_eq!(combined_rank(&all, &d).unwrap(), d);
        let none = mask(&[
            ("a", false),
            ("b", false),
            ("c", false),
            ("d", false),
            ("e", false),
        ]);
        assert!(combined_rank(&none, &d).unwrap().is_empty());
        let some = mask(&[
            ("a", true),
            ("b", false),
            ("c", true),
            ("d", false),
            ("e", true),
        ]);
        let r = combined_rank(&some, &d).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), vec!["e", "a", "c"]);
        let partial = mask(&[("a", true)]);
        assert!(combined_rank(&partial, &d).is_err());
    }

    #[test]
    fn ranked_result_rejects_bad_input() {
        assert!(RankedResult::new(vec![("a".into(), f64::NAN)], Polarity::Ascending).is_err());
        assert!(RankedResult::new(
            vec![("a".into(), 1.0), ("a".into(), 2.0)],
            Polarity::Ascending
        )
        .is_err());
    }
}
