//! File formats, normalization, gene selection and alignment.
//!
//! Matrix files are delimited text (tab or comma, detected from the header):
//! the header holds a corner label followed by sample ids, and every other
//! line holds a gene id followed by one number per sample. Label, gene-score
//! and DE-profile files are two-column TSV. The model index is JSON lines.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data_model::{
    Clustering, ExpressionMatrix, FitMetadata, GroundTruth, Hyperparameters, ModelIndex,
    ModelIndexEntry,
};
use crate::error::{Error, Result};
use crate::retrieval::DEProfile;
use crate::search::SearchConfig;

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Parses a delimited matrix; `name` is used for the experiment id and errors.
pub fn parse_matrix(text: &str, experiment_id: &str, name: &str) -> Result<ExpressionMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: name.to_string(),
        line,
        column,
        message,
    };
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, 1, "empty matrix file".into()))?;
    let delim = if header.contains('\t') { '\t' } else { ',' };
    let sample_ids: Vec<String> = header
        .split(delim)
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    let p = sample_ids.len();
    if p == 0 {
        return Err(parse_err(1, 1, "header has no sample columns".into()));
    }
    let mut seen = HashSet::new();
    for (j, s) in sample_ids.iter().enumerate() {
        if !seen.insert(s.as_str()) {
            return Err(parse_err(1, j + 2, format!("duplicate sample id `{s}`")));
        }
    }
    let mut gene_ids = Vec::new();
    let mut values = Vec::new();
    let mut genes_seen = HashSet::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split(delim).collect();
        if cells.len() != p + 1 {
            return Err(parse_err(
                lineno,
                cells.len().min(p + 1),
                format!("expected {} fields, found {}", p + 1, cells.len()),
            ));
        }
        let gene = cells[0].trim().to_string();
        if !genes_seen.insert(gene.clone()) {
            return Err(parse_err(lineno, 1, format!("duplicate gene id `{gene}`")));
        }
        for (j, cell) in cells[1..].iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    parse_err(lineno, j + 2, format!("not a finite number: `{cell}`"))
                })?;
            values.push(v);
        }
        gene_ids.push(gene);
    }
    ExpressionMatrix::new(experiment_id, gene_ids, sample_ids, values)
}

/// Loads a matrix file; the experiment id is the file stem.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<ExpressionMatrix> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_matrix_as(path, &id)
}

pub fn load_matrix_as(path: impl AsRef<Path>, experiment_id: &str) -> Result<ExpressionMatrix> {
    let path = path.as_ref();
    parse_matrix(&read_to_string(path)?, experiment_id, &display(path))
}

pub fn format_matrix(d: &ExpressionMatrix) -> String {
    let mut out = String::from("gene_id");
    for s in d.sample_ids() {
        out.push('\t');
        out.push_str(s);
    }
    out.push('\n');
    for (g, row) in d.gene_ids().iter().zip(d.rows()) {
        out.push_str(g);
        for v in row {
            // Shortest round-trip representation.
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    out
}

/// Writes a tab-separated matrix file.
pub fn save_matrix(path: impl AsRef<Path>, d: &ExpressionMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matrix(d)).map_err(|e| Error::io(path, e))
}

/// Centers every column and scales it to unit population variance.
/// Constant columns are centered only.
pub fn zscore_normalize(d: &ExpressionMatrix) -> ExpressionMatrix {
    let (n, p) = (d.n(), d.p());
    let mut values = d.values().to_vec();
    for j in 0..p {
        let mean = (0..n).map(|i| d.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (d.get(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        for i in 0..n {
            let centered = d.get(i, j) - mean;
            values[i * p + j] = if sd > 0.0 { centered / sd } else { centered };
        }
    }
    d.with_values(values).expect("same shape, finite values")
}

/// Rows of `d` reordered and subset to `genes`.
pub fn align(d: &ExpressionMatrix, genes: &[String]) -> Result<ExpressionMatrix> {
    let pos: HashMap<&str, usize> = d
        .gene_ids()
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let mut rows = Vec::with_capacity(genes.len());
    let mut missing = Vec::new();
    for g in genes {
        match pos.get(g.as_str()) {
            Some(&i) => rows.push(i),
            None => missing.push(g.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingGenes(missing));
    }
    d.select_rows(&rows)
}

/// Per-gene selection scores for one experiment.
pub type GeneScores = Vec<(String, f64)>;

/// Population variance of each row, used when no external scores exist.
pub fn row_variance_scores(d: &ExpressionMatrix) -> GeneScores {
    d.gene_ids()
        .iter()
        .zip(d.rows())
        .map(|(g, row)| {
            let m = row.iter().sum::<f64>() / row.len() as f64;
            let v = row.iter().map(|x| (x - m).powi(2)).sum::<f64>() / row.len() as f64;
            (g.clone(), v)
        })
        .collect()
}

/// Union over experiments of each experiment's `top_k` genes by descending
/// score (ties by gene id). Returned sorted by gene id.
pub fn select_genes(
    experiments: &[(&ExpressionMatrix, Option<&GeneScores>)],
    top_k: usize,
) -> Result<Vec<String>> {
    let mut union = BTreeSet::new();
    for (d, scores) in experiments {
        let owned;
        let scores = match scores {
            Some(s) => {
                let known: HashSet<&str> = d.gene_ids().iter().map(String::as_str).collect();
                let missing: Vec<String> = s
                    .iter()
                    .filter(|(g, _)| !known.contains(g.as_str()))
                    .map(|(g, _)| g.clone())
                    .collect();
                if !missing.is_empty() {
                    return Err(Error::MissingGenes(missing));
                }
                *s
            }
            None => {
                owned = row_variance_scores(d);
                &owned
            }
        };
        let mut ranked: Vec<&(String, f64)> = scores.iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        union.extend(ranked.into_iter().take(top_k).map(|(g, _)| g.clone()));
    }
    Ok(union.into_iter().collect())
}

fn two_column_rows<'a>(
    text: &'a str,
    header_key: &'a str,
) -> impl Iterator<Item = (usize, &'a str, &'a str)> + 'a {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .filter(move |(i, l)| !(*i == 0 && l.split('\t').next() == Some(header_key)))
        .map(|(i, l)| {
            let mut it = l.splitn(2, '\t');
            let a = it.next().unwrap_or("").trim();
            let b = it.next().unwrap_or("").trim();
            (i + 1, a, b)
        })
}

/// Label file: `experiment_id<TAB>value` per line, optional header, empty value = unlabelled.
pub fn load_labels(path: impl AsRef<Path>, label_type: &str) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut gt = GroundTruth::new(label_type);
    for (line, id, value) in two_column_rows(&text, "experiment_id") {
        let value = (!value.is_empty()).then(|| value.to_string());
        gt.insert(id, value).map_err(|e| Error::Line {
            path: display(path),
            line,
            message: e.to_string(),
        })?;
    }
    Ok(gt)
}

pub fn format_labels(gt: &GroundTruth) -> String {
    let mut out = String::from("experiment_id\tvalue\n");
    for (id, v) in &gt.labels {
        let _ = writeln!(out, "{id}\t{}", v.as_deref().unwrap_or(""));
    }
    out
}

fn parse_number_pairs(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = read_to_string(path)?;
    let mut seen = HashSet::new();
    two_column_rows(&text, "gene_id")
        .map(|(line, gene, v)| {
            let value: f64 = v.parse().map_err(|_| Error::Parse {
                path: display(path),
                line,
                column: 2,
                message: format!("not a number: `{v}`"),
            })?;
            if !seen.insert(gene.to_string()) {
                return Err(Error::Line {
                    path: display(path),
                    line,
                    message: format!("duplicate gene id `{gene}`"),
                });
            }
            Ok((gene.to_string(), value))
        })
        .collect()
}

/// Gene score file: `gene_id<TAB>score`.
pub fn load_gene_scores(path: impl AsRef<Path>) -> Result<GeneScores> {
    parse_number_pairs(path.as_ref())
}

/// DE profile file: `gene_id<TAB>p_value`.
pub fn load_de_profile(path: impl AsRef<Path>, experiment_id: &str) -> Result<DEProfile> {
    let pairs = parse_number_pairs(path.as_ref())?;
    let (genes, p) = pairs.into_iter().unzip();
    DEProfile::new(experiment_id, genes, p)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexRecord {
    experiment_id: String,
    gene_ids: Vec<String>,
    assignment: Vec<usize>,
    k: usize,
    log_score: f64,
    method: String,
    seed: u64,
}

pub fn write_index(mut w: impl Write, index: &ModelIndex) -> std::io::Result<()> {
    for e in index.entries() {
        let rec = IndexRecord {
            experiment_id: e.experiment_id.clone(),
            gene_ids: e.gene_ids.clone(),
            assignment: e.clustering.one_based(),
            k: e.clustering.k(),
            log_score: e.fit.log_score,
            method: e.fit.method.clone(),
            seed: e.fit.seed,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_index(r: impl BufRead, name: &str) -> Result<ModelIndex> {
    let mut index = ModelIndex::default();
    for (i, line) in r.lines().enumerate() {
        let line_err = |message: String| Error::Line {
            path: name.to_string(),
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| line_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: IndexRecord = serde_json::from_str(&line).map_err(|e| line_err(e.to_string()))?;
        let clustering = Clustering::from_one_based(&rec.assignment, rec.k)
            .map_err(|e| line_err(e.to_string()))?;
        let entry = ModelIndexEntry::new(
            rec.experiment_id,
            rec.gene_ids,
            clustering,
            FitMetadata {
                method: rec.method,
                log_score: rec.log_score,
                seed: rec.seed,
            },
        )
        .and_then(|e| index.push(e))
        .map_err(|e| line_err(e.to_string()));
        entry?;
    }
    Ok(index)
}

pub fn save_index(path: impl AsRef<Path>, index: &ModelIndex) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_index(BufWriter::new(f), index).map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<ModelIndex> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_index(BufReader::new(f), &display(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestExperiment {
    pub id: String,
    pub matrix: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub de_profile: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gene_scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLabels {
    pub label_type: String,
    pub path: PathBuf,
}

/// Corpus description (TOML). Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    #[serde(default)]
    pub experiments: Vec<ManifestExperiment>,
    #[serde(default)]
    pub labels: Vec<ManifestLabels>,
}

impl CorpusManifest {
    pub fn parse(text: &str, base: &Path, name: &str) -> Result<Self> {
        let mut m: Self =
            toml::from_str(text).map_err(|e| Error::Invalid(format!("{name}: {e}")))?;
        let mut ids = HashSet::new();
        for e in &mut m.experiments {
            if !ids.insert(e.id.clone()) {
                return Err(Error::Invalid(format!(
                    "{name}: duplicate experiment id `{}`",
                    e.id
                )));
            }
            e.matrix = base.join(&e.matrix);
            e.de_profile = e.de_profile.as_ref().map(|p| base.join(p));
            e.gene_scores = e.gene_scores.as_ref().map(|p| base.join(p));
        }
        for l in &mut m.labels {
            l.path = base.join(&l.path);
        }
        Ok(m)
    }

    /// Loads and checks that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let m = Self::parse(&read_to_string(path)?, base, &display(path))?;
        let files = m
            .experiments
            .iter()
            .flat_map(|e| {
                std::iter::once(&e.matrix)
                    .chain(e.de_profile.as_ref())
                    .chain(e.gene_scores.as_ref())
            })
            .chain(m.labels.iter().map(|l| &l.path));
        for f in files {
            if !f.is_file() {
                return Err(Error::io(
                    f.clone(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file not found"),
                ));
            }
        }
        Ok(m)
    }

    pub fn ids(&self) -> Vec<String> {
        self.experiments.iter().map(|e| e.id.clone()).collect()
    }

    pub fn load_ground_truths(&self) -> Result<BTreeMap<String, GroundTruth>> {
        self.labels
            .iter()
            .map(|l| Ok((l.label_type.clone(), load_labels(&l.path, &l.label_type)?)))
            .collect()
    }
}

/// Model and search settings as read from a flat TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub mu0: Option<f64>,
    pub rho0: Option<f64>,
    pub alpha0: Option<f64>,
    pub beta0: Option<f64>,
    pub eta0: Option<f64>,
    pub seed: Option<u64>,
    pub max_sweeps_without_improvement: Option<usize>,
    pub restarts: Option<usize>,
    pub operator_mix: Option<[f64; 3]>,
    pub max_sweeps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub hyper: Hyperparameters,
    pub search: SearchConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: RunConfigFile =
            toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))?;
        let mut c = Self::default();
        c.apply(&f);
        c.hyper.validate()?;
        c.search.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&read_to_string(path.as_ref())?)
    }

    /// Overrides every field present in `f`.
    pub fn apply(&mut self, f: &RunConfigFile) {
        let h = &mut self.hyper;
        let s = &mut self.search;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(h.mu0, f.mu0);
        set!(h.rho0, f.rho0);
        set!(h.alpha0, f.alpha0);
        set!(h.beta0, f.beta0);
        set!(h.eta0, f.eta0);
        set!(s.seed, f.seed);
        set!(
            s.max_sweeps_without_improvement,
            f.max_sweeps_without_improvement
        );
        set!(s.restarts, f.restarts);
        set!(s.operator_mix, f.operator_mix);
        set!(s.max_sweeps, f.max_sweeps);
    }
}
