//! Leave-one-out evaluation: precision-recall curves, average precision,
//! ground-truth combination, top-1 matching, and a synthetic corpus generator.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_model::{
    Clustering, ExpressionMatrix, GroundTruth, Hyperparameters, ModelIndex, RelevanceMatrix,
};
use crate::error::{Error, Result};
use crate::par;
use crate::retrieval::{
    de_correlation_rank, likelihood_rank, model_distance_rank, DEProfile, Polarity, RankedResult,
};

/// One ranking per query experiment.
pub type Rankings = Vec<(String, RankedResult)>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub cutoff: usize,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PRCurve {
    pub points: Vec<PrPoint>,
    /// Queries that contributed to the averages.
    pub query_count: usize,
    /// Queries without any relevant experiment.
    pub skipped: Vec<String>,
}

fn query_row(query: &str, ranking: &RankedResult, relevance: &RelevanceMatrix) -> Result<usize> {
    let row = relevance
        .position(query)
        .ok_or_else(|| Error::UnknownExperiment(query.to_string()))?;
    if ranking.contains(query) {
        return Err(Error::Invalid(format!(
            "ranking for `{query}` contains the query itself"
        )));
    }
    Ok(row)
}

/// Rank-cutoff precision-recall curve averaged over queries.
///
/// Each query's curve stops moving once its last relevant experiment has been
/// retrieved (or its ranking is exhausted); later cutoffs repeat that point.
/// Cutoffs run from 1 to `M - 1`.
pub fn pr_curve(
    rankings: &[(String, RankedResult)],
    relevance: &RelevanceMatrix,
) -> Result<PRCurve> {
    let m = relevance.len();
    let cutoffs = m.saturating_sub(1);
    let mut recall_sum = vec![0.0; cutoffs];
    let mut precision_sum = vec![0.0; cutoffs];
    let mut query_count = 0;
    let mut skipped = Vec::new();
    for (query, ranking) in rankings {
        let row = query_row(query, ranking, relevance)?;
        let relevant = relevance.relevant_to(row);
        if relevant.is_empty() {
            skipped.push(query.clone());
            continue;
        }
        query_count += 1;
        let mut hits = Vec::with_capacity(ranking.len());
        let mut h = 0usize;
        let mut last = ranking.len();
        for (pos, id) in ranking.ids().enumerate() {
            if relevant.contains(id) {
                h += 1;
                if h == relevant.len() {
                    last = pos + 1;
                }
            }
            hits.push(h);
        }
        let total = relevant.len() as f64;
        for r in 1..=cutoffs {
            let eff = r.min(last);
            if eff == 0 {
                continue;
            }
            let got = hits[eff - 1] as f64;
            recall_sum[r - 1] += got / total;
            precision_sum[r - 1] += got / eff as f64;
        }
    }
    let q = query_count.max(1) as f64;
    let points = (1..=cutoffs)
        .map(|r| PrPoint {
            cutoff: r,
            recall: recall_sum[r - 1] / q,
            precision: precision_sum[r - 1] / q,
        })
        .collect();
    Ok(PRCurve {
        points: if query_count == 0 { Vec::new() } else { points },
        query_count,
        skipped,
    })
}

/// Mean over relevant experiments of the precision at each one's rank.
/// Relevant experiments absent from the ranking contribute zero.
pub fn average_precision(ranking: &RankedResult, relevant: &HashSet<&str>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::Invalid(
            "average precision needs at least one relevant item".into(),
        ));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, id) in ranking.ids().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

pub fn mean_average_precision(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::Invalid(
            "mean average precision of zero queries".into(),
        ));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Average precision of every query that has at least one relevant experiment.
pub fn per_query_average_precision(
    rankings: &[(String, RankedResult)],
    relevance: &RelevanceMatrix,
) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (query, ranking) in rankings {
        let row = query_row(query, ranking, relevance)?;
        let relevant = relevance.relevant_to(row);
        if !relevant.is_empty() {
            out.push((query.clone(), average_precision(ranking, &relevant)?));
        }
    }
    Ok(out)
}

/// mAP over queries with at least one relevant experiment.
pub fn map_score(rankings: &[(String, RankedResult)], relevance: &RelevanceMatrix) -> Result<f64> {
    let aps: Vec<f64> = per_query_average_precision(rankings, relevance)?
        .into_iter()
        .map(|(_, ap)| ap)
        .collect();
    mean_average_precision(&aps)
}

/// Threshold rule applied to the summed relevance matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineMode {
    AtLeast,
    Exactly,
}

/// Relevance requiring `t` matching label types (`>= t` or `== t`).
pub fn combine_ground_truth(
    matrices: &[RelevanceMatrix],
    t: usize,
    mode: CombineMode,
) -> Result<RelevanceMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::Invalid("no relevance matrices to combine".into()))?;
    if t == 0 || t > matrices.len() {
        return Err(Error::Invalid(format!(
            "threshold t = {t} outside 1..={}",
            matrices.len()
        )));
    }
    if let Some(m) = matrices.iter().find(|m| m.ids() != first.ids()) {
        return Err(Error::DimensionMismatch(format!(
            "relevance matrices over {} and {} experiments (or different order)",
            first.len(),
            m.len()
        )));
    }
    Ok(RelevanceMatrix::from_fn(first.ids().to_vec(), |i, j| {
        let sum = matrices.iter().filter(|m| m.get(i, j)).count();
        match mode {
            CombineMode::AtLeast => sum >= t,
            CombineMode::Exactly => sum == t,
        }
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Top1Report {
    pub matched: usize,
    pub evaluated: usize,
    pub skipped: Vec<String>,
    /// Query id and its top-ranked experiment (if any).
    pub picks: Vec<(String, Option<String>)>,
}

impl Top1Report {
    pub fn fraction(&self) -> f64 {
        if self.evaluated == 0 {
            0.0
        } else {
            self.matched as f64 / self.evaluated as f64
        }
    }
}

/// Fraction of queries whose first retrieved experiment is relevant.
pub fn top1_match_eval(
    rankings: &[(String, RankedResult)],
    relevance: &RelevanceMatrix,
) -> Result<Top1Report> {
    let mut report = Top1Report {
        matched: 0,
        evaluated: 0,
        skipped: Vec::new(),
        picks: Vec::new(),
    };
    for (query, ranking) in rankings {
        let row = query_row(query, ranking, relevance)?;
        let relevant = relevance.relevant_to(row);
        if relevant.is_empty() {
            report.skipped.push(query.clone());
            continue;
        }
        report.evaluated += 1;
        let top = ranking.ids().next();
        if top.is_some_and(|id| relevant.contains(id)) {
            report.matched += 1;
        }
        report.picks.push((query.clone(), top.map(str::to_string)));
    }
    Ok(report)
}

/// Every index entry queried against the rest by clustering distance.
pub fn loo_model_distance(index: &ModelIndex) -> Result<Rankings> {
    let out = par::map(index.entries(), |e| {
        model_distance_rank(&e.clustering, &e.gene_ids, index)
            .map(|r| (e.experiment_id.clone(), r.without(&e.experiment_id)))
    });
    out.into_iter().collect()
}

/// Every experiment's data scored against the other experiments' clusterings.
/// `data` must hold one matrix per index entry, aligned to the index genes.
pub fn loo_likelihood(
    index: &ModelIndex,
    data: &[ExpressionMatrix],
    h: &Hyperparameters,
) -> Result<Rankings> {
    let by_id: BTreeMap<&str, &ExpressionMatrix> =
        data.iter().map(|d| (d.experiment_id(), d)).collect();
    let out = par::map(index.entries(), |e| {
        let d = by_id
            .get(e.experiment_id.as_str())
            .ok_or_else(|| Error::UnknownExperiment(e.experiment_id.clone()))?;
        likelihood_rank(d, index, h).map(|r| (e.experiment_id.clone(), r.without(&e.experiment_id)))
    });
    out.into_iter().collect()
}

/// Every DE profile correlated against the rest.
pub fn loo_de_correlation(profiles: &[DEProfile]) -> Result<Rankings> {
    let out = par::map(profiles, |p| {
        de_correlation_rank(p, profiles).map(|r| (p.experiment_id.clone(), r))
    });
    out.into_iter().collect()
}

/// Keyword-only retrieval: all experiments sharing the query's value of
/// `label_type`, unordered (ties resolved by id).
pub fn loo_keyword(ids: &[String], keyword: &GroundTruth) -> Rankings {
    ids.iter()
        .map(|q| {
            let value = keyword.value(q);
            let entries = ids
                .iter()
                .filter(|id| *id != q && value.is_some() && keyword.value(id) == value)
                .map(|id| (id.clone(), 0.0))
                .collect();
            let r =
                RankedResult::new(entries, Polarity::Ascending).expect("unique ids, finite scores");
            (q.clone(), r)
        })
        .collect()
}

/// Keyword filter followed by clustering-distance ordering for every query.
pub fn loo_combined(distance: &Rankings, keyword: &GroundTruth) -> Result<Rankings> {
    distance
        .iter()
        .map(|(q, r)| {
            let value = keyword.value(q);
            let mask: BTreeMap<String, bool> = r
                .ids()
                .map(|id| {
                    (
                        id.to_string(),
                        value.is_some() && keyword.value(id) == value,
                    )
                })
                .collect();
            crate::retrieval::combined_rank(&mask, r).map(|c| (q.clone(), c))
        })
        .collect()
}

/// A categorical annotation derived from the condition index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub label_type: String,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpusConfig {
    pub num_experiments: usize,
    pub num_conditions: usize,
    pub genes: usize,
    pub samples: usize,
    /// Clusters in each condition's base partition.
    pub clusters: usize,
    pub noise_sigma: f64,
    /// Standard deviation of the per cluster-column means.
    pub mean_spread: f64,
    /// Probability that a gene is reassigned to a random cluster in an experiment.
    pub perturbation: f64,
    /// Label types decoding the condition index in mixed radix; their level
    /// counts must multiply to `num_conditions`. Empty means a single
    /// `condition` label.
    pub factors: Vec<Factor>,
    pub seed: u64,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        Self {
            num_experiments: 30,
            num_conditions: 5,
            genes: 60,
            samples: 8,
            clusters: 6,
            noise_sigma: 1.0,
            mean_spread: 3.0,
            perturbation: 0.1,
            factors: Vec::new(),
            seed: 0,
        }
    }
}

impl SyntheticCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.num_conditions == 0 || self.num_conditions > self.num_experiments {
            return bad(format!(
                "need 1 <= num_conditions ({}) <= num_experiments ({})",
                self.num_conditions, self.num_experiments
            ));
        }
        if self.genes == 0 || self.samples == 0 {
            return bad("genes and samples must be positive".into());
        }
        if self.clusters == 0 || self.clusters > self.genes {
            return bad(format!("clusters must be in 1..={}", self.genes));
        }
        if !(0.0..=1.0).contains(&self.perturbation) {
            return bad(format!("perturbation {} outside [0, 1]", self.perturbation));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite())
            || !(self.mean_spread >= 0.0 && self.mean_spread.is_finite())
        {
            return bad("noise_sigma and mean_spread must be finite and non-negative".into());
        }
        if !self.factors.is_empty() {
            let product: usize = self.factors.iter().map(|f| f.levels).product();
            if product != self.num_conditions {
                return bad(format!(
                    "factor levels multiply to {product}, expected num_conditions = {}",
                    self.num_conditions
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub matrices: Vec<ExpressionMatrix>,
    pub ground_truths: Vec<GroundTruth>,
    pub conditions: Vec<usize>,
    /// The partition each experiment's data was drawn from.
    pub planted: Vec<Clustering>,
}

impl SyntheticCorpus {
    pub fn ids(&self) -> Vec<String> {
        self.matrices
            .iter()
            .map(|m| m.experiment_id().to_string())
            .collect()
    }

    pub fn ground_truth(&self, label_type: &str) -> Option<&GroundTruth> {
        self.ground_truths
            .iter()
            .find(|g| g.label_type == label_type)
    }
}

/// Corpus whose relatedness is planted at the partition level: experiments of
/// one condition perturb a shared base partition of the genes.
pub fn generate_synthetic_corpus(cfg: &SyntheticCorpusConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, p, k) = (cfg.genes, cfg.samples, cfg.clusters);
    let bases: Vec<Vec<usize>> = (0..cfg.num_conditions)
        .map(|_| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut labels = vec![0; n];
            for (pos, &i) in order.iter().enumerate() {
                labels[i] = if pos < k { pos } else { rng.random_range(0..k) };
            }
            labels
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Invalid(e.to_string()))?;
    let spread = Normal::new(0.0, cfg.mean_spread).map_err(|e| Error::Invalid(e.to_string()))?;
    let gene_ids: Vec<String> = (0..n).map(|i| format!("g{:04}", i + 1)).collect();
    let sample_ids: Vec<String> = (0..p).map(|j| format!("s{:02}", j + 1)).collect();
    let width = cfg.num_experiments.to_string().len().max(3);

    let mut matrices = Vec::with_capacity(cfg.num_experiments);
    let mut planted = Vec::with_capacity(cfg.num_experiments);
    let mut conditions = Vec::with_capacity(cfg.num_experiments);
    for e in 0..cfg.num_experiments {
        let c = e % cfg.num_conditions;
        let labels: Vec<usize> = bases[c]
            .iter()
            .map(|&l| {
                if rng.random::<f64>() < cfg.perturbation {
                    rng.random_range(0..k)
                } else {
                    l
                }
            })
            .collect();
        let means: Vec<f64> = (0..k * p).map(|_| spread.sample(&mut rng)).collect();
        let values: Vec<f64> = labels
            .iter()
            .flat_map(|&l| (0..p).map(move |j| l * p + j))
            .map(|idx| means[idx] + noise.sample(&mut rng))
            .collect();
        let id = format!("exp{:0width$}", e + 1);
        matrices.push(ExpressionMatrix::new(
            id,
            gene_ids.clone(),
            sample_ids.clone(),
            values,
        )?);
        planted.push(Clustering::from_labels(&labels));
        conditions.push(c);
    }

    let mut ground_truths = Vec::new();
    let mut condition_gt = GroundTruth::new("condition");
    for (m, &c) in matrices.iter().zip(&conditions) {
        condition_gt.insert(m.experiment_id(), Some(format!("c{}", c + 1)))?;
    }
    ground_truths.push(condition_gt);
    let mut radix = 1;
    for f in &cfg.factors {
        let mut gt = GroundTruth::new(f.label_type.clone());
        for (m, &c) in matrices.iter().zip(&conditions) {
            let level = (c / radix) % f.levels;
            gt.insert(m.experiment_id(), Some(format!("v{}", level + 1)))?;
        }
        radix *= f.levels;
        ground_truths.push(gt);
    }
    Ok(SyntheticCorpus {
        matrices,
        ground_truths,
        conditions,
        planted,
    })
}

/// `cutoff,recall,precision` rows.
pub fn pr_curve_csv(curve: &PRCurve) -> String {
    let mut out = String::from("cutoff,recall,precision\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{}", p.cutoff, p.recall, p.precision);
    }
    out
}

/// A standalone SVG plot of precision against recall for several curves.
pub fn pr_curves_svg(curves: &[(&str, &PRCurve)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const M: f64 = 50.0;
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    ];
    let x = |r: f64| M + r * (W - 2.0 * M);
    let y = |p: f64| H - M - p * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{} {} L{} {} L{} {}" fill="none" stroke="black"/>"#,
        x(0.0),
        y(1.0),
        x(0.0),
        y(0.0),
        x(1.0),
        y(0.0)
    );
    for t in 0..=5 {
        let v = t as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v:.1}</text>"#,
            x(v),
            y(0.0) + 14.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.1}</text>"#,
            x(0.0) - 4.0,
            y(v) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">recall</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">precision</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.recall), y(p.precision)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = M + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="11" fill="{color}" text-anchor="end">{}</text>"#,
            W - M,
            escape_xml(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
