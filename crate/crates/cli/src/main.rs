use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use modret::eval::{
    combine_ground_truth, generate_synthetic_corpus, loo_de_correlation, loo_likelihood,
    loo_model_distance, per_query_average_precision, pr_curve, pr_curve_csv, pr_curves_svg,
    top1_match_eval, CombineMode, Rankings, SyntheticCorpusConfig,
};
use modret::io::{
    format_labels, load_de_profile, load_gene_scores, load_index, load_matrix_as, save_index,
    save_matrix, CorpusManifest, RunConfig,
};
use modret::pipeline::{fit_corpus, fit_matrix, prepare, shared_genes, FitMethod};
use modret::retrieval::{
    combined_rank, de_correlation_rank, likelihood_rank, model_distance_rank, DEProfile,
    RankedResult,
};
use modret::search::brute_force_map;
use modret::{relevance_matrix, ExpressionMatrix, ModelIndex};

#[derive(Parser)]
#[command(
    name = "modret",
    version,
    about = "Model-based retrieval of gene expression experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize, select genes, cluster every experiment and write an index.
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "greedy")]
        method: FitMethod,
        #[arg(long)]
        seed: Option<u64>,
        /// Union of each experiment's top-K genes; all shared genes if omitted.
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        eta0: Option<f64>,
        /// TOML file with hyperparameter and search settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Rank the indexed experiments against a query.
    Query {
        #[arg(long)]
        index: PathBuf,
        /// Expression matrix, or a DE profile for `--scheme de`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "nid")]
        scheme: Scheme,
        /// Keep only experiments labelled TYPE=VALUE (combined scheme).
        #[arg(long)]
        keywords: Option<String>,
        /// Corpus manifest, needed for labels and DE profiles.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "greedy")]
        method: FitMethod,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-out evaluation against label ground truth.
    Eval {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated label types.
        #[arg(long, value_delimiter = ',', required = true)]
        labels: Vec<String>,
        /// Number of label types that must match.
        #[arg(long, default_value_t = 1)]
        t: usize,
        #[arg(long, value_enum, default_value = "at-least")]
        mode: Mode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate a synthetic corpus with a manifest.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Exhaustive MAP clustering of the first N genes of a matrix.
    Oracle {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Nid,
    Likelihood,
    De,
    Combined,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    AtLeast,
    Exactly,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg.push_str(": ");
                    msg.push_str(&c);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit {
            manifest,
            out,
            method,
            seed,
            top_k,
            eta0,
            config,
        } => {
            let mut cfg = run_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.search.seed = s;
            }
            if let Some(e) = eta0 {
                cfg.hyper.eta0 = e;
            }
            cfg.hyper.validate()?;
            fit(&manifest, &out, method, top_k, &cfg)
        }
        Command::Query {
            index,
            data,
            scheme,
            keywords,
            manifest,
            method,
            seed,
            config,
            out,
        } => {
            let mut cfg = run_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.search.seed = s;
            }
            let args = QueryArgs {
                scheme,
                keywords,
                manifest,
                method,
                cfg,
            };
            let ranking = query(&index, &data, &args)?;
            write(&out, &ranking_csv(&ranking))
        }
        Command::Eval {
            index,
            manifest,
            labels,
            t,
            mode,
            config,
            out_dir,
        } => {
            let cfg = run_config(config.as_deref())?;
            let mode = match mode {
                Mode::AtLeast => CombineMode::AtLeast,
                Mode::Exactly => CombineMode::Exactly,
            };
            evaluate(&index, &manifest, &labels, t, mode, &cfg, &out_dir)
        }
        Command::Synth { config, out_dir } => {
            let cfg: SyntheticCorpusConfig = match config {
                Some(p) => {
                    toml::from_str(&read(&p)?).with_context(|| format!("{}", p.display()))?
                }
                None => SyntheticCorpusConfig::default(),
            };
            synth(&cfg, &out_dir)
        }
        Command::Oracle { n, data, config } => {
            let cfg = run_config(config.as_deref())?;
            oracle(n, &data, &cfg)
        }
    }
}

fn run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_corpus(manifest: &CorpusManifest) -> Result<Vec<ExpressionMatrix>> {
    manifest
        .experiments
        .iter()
        .map(|e| Ok(load_matrix_as(&e.matrix, &e.id)?))
        .collect()
}

fn fit(
    manifest: &Path,
    out: &Path,
    method: FitMethod,
    top_k: Option<usize>,
    cfg: &RunConfig,
) -> Result<()> {
    let manifest = CorpusManifest::load(manifest)?;
    let matrices = load_corpus(&manifest)?;
    let scores = manifest
        .experiments
        .iter()
        .map(|e| e.gene_scores.as_ref().map(load_gene_scores).transpose())
        .collect::<modret::Result<Vec<_>>>()?;
    let genes = shared_genes(&matrices, &scores, top_k)?;
    if genes.is_empty() {
        bail!("no genes shared by all experiments");
    }
    let prepared = matrices
        .iter()
        .map(|m| prepare(m, &genes))
        .collect::<modret::Result<Vec<_>>>()?;
    let index = fit_corpus(&prepared, method, &cfg.hyper, &cfg.search)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_index(out, &index)?;
    eprintln!(
        "fitted {} experiments on {} genes",
        index.len(),
        genes.len()
    );
    Ok(())
}

struct QueryArgs {
    scheme: Scheme,
    keywords: Option<String>,
    manifest: Option<PathBuf>,
    method: FitMethod,
    cfg: RunConfig,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn index_genes(index: &ModelIndex) -> Result<Vec<String>> {
    match index.entries().first() {
        Some(e) => Ok(e.gene_ids.clone()),
        None => bail!("index is empty"),
    }
}

fn query(index_path: &Path, data: &Path, args: &QueryArgs) -> Result<RankedResult> {
    let id = stem(data);
    let need_manifest = || -> Result<CorpusManifest> {
        match &args.manifest {
            Some(m) => Ok(CorpusManifest::load(m)?),
            None => bail!("this scheme needs --manifest"),
        }
    };
    let ranking = match args.scheme {
        Scheme::Nid | Scheme::Combined => {
            let index = load_index(index_path)?;
            let genes = index_genes(&index)?;
            let d = prepare(&load_matrix_as(data, &id)?, &genes)?;
            let (clustering, _) = fit_matrix(&d, args.method, &args.cfg.hyper, &args.cfg.search)?;
            let distances = model_distance_rank(&clustering, &genes, &index)?.without(&id);
            match (&args.keywords, args.scheme) {
                (Some(kw), _) => {
                    let (label_type, value) = kw
                        .split_once('=')
                        .with_context(|| format!("--keywords expects TYPE=VALUE, got `{kw}`"))?;
                    let gts = need_manifest()?.load_ground_truths()?;
                    let gt = gts.get(label_type).with_context(|| {
                        format!("manifest has no labels of type `{label_type}`")
                    })?;
                    let mask: BTreeMap<String, bool> = distances
                        .ids()
                        .map(|i| (i.to_string(), gt.value(i) == Some(value)))
                        .collect();
                    combined_rank(&mask, &distances)?
                }
                (None, Scheme::Combined) => bail!("--scheme combined needs --keywords TYPE=VALUE"),
                (None, _) => distances,
            }
        }
        Scheme::Likelihood => {
            let index = load_index(index_path)?;
            let genes = index_genes(&index)?;
            let d = prepare(&load_matrix_as(data, &id)?, &genes)?;
            likelihood_rank(&d, &index, &args.cfg.hyper)?.without(&id)
        }
        Scheme::De => {
            let manifest = need_manifest()?;
            let mut profiles = de_profiles(&manifest)?;
            profiles.push(load_de_profile(data, &id)?);
            let mut profiles = align_profiles(profiles)?;
            let q = profiles.pop().expect("query profile");
            de_correlation_rank(&q, &profiles)?
        }
    };
    Ok(ranking)
}

fn de_profiles(manifest: &CorpusManifest) -> Result<Vec<DEProfile>> {
    manifest
        .experiments
        .iter()
        .map(|e| match &e.de_profile {
            Some(p) => Ok(load_de_profile(p, &e.id)?),
            None => bail!("experiment `{}` has no DE profile", e.id),
        })
        .collect()
}

/// Restricts every profile to the genes present in all of them.
fn align_profiles(profiles: Vec<DEProfile>) -> Result<Vec<DEProfile>> {
    let Some(first) = profiles.first() else {
        return Ok(profiles);
    };
    let sets: Vec<HashSet<&str>> = profiles
        .iter()
        .map(|p| p.gene_ids.iter().map(String::as_str).collect())
        .collect();
    let genes: Vec<String> = first
        .gene_ids
        .iter()
        .filter(|g| sets.iter().all(|s| s.contains(g.as_str())))
        .cloned()
        .collect();
    Ok(profiles
        .iter()
        .map(|p| p.aligned(&genes))
        .collect::<modret::Result<_>>()?)
}

fn ranking_csv(r: &RankedResult) -> String {
    let mut out = String::from("rank,id,score\n");
    for (i, (id, score)) in r.entries().iter().enumerate() {
        let _ = writeln!(out, "{},{id},{score}", i + 1);
    }
    out
}

fn evaluate(
    index_path: &Path,
    manifest_path: &Path,
    labels: &[String],
    t: usize,
    mode: CombineMode,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<()> {
    let index = load_index(index_path)?;
    let manifest = CorpusManifest::load(manifest_path)?;
    let ids = index.ids();
    let gts = manifest.load_ground_truths()?;
    let matrices = labels
        .iter()
        .map(|l| {
            let gt = gts
                .get(l)
                .with_context(|| format!("manifest has no labels of type `{l}`"))?;
            Ok(relevance_matrix(gt, &ids)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let relevance = combine_ground_truth(&matrices, t, mode)?;

    let mut schemes: Vec<(&str, Rankings)> = vec![("model-distance", loo_model_distance(&index)?)];
    let indexed: HashSet<&str> = ids.iter().map(String::as_str).collect();
    let genes = index_genes(&index)?;
    let corpus: Vec<_> = manifest
        .experiments
        .iter()
        .filter(|e| indexed.contains(e.id.as_str()))
        .collect();
    if corpus.len() == ids.len() {
        let prepared = corpus
            .iter()
            .map(|e| Ok(prepare(&load_matrix_as(&e.matrix, &e.id)?, &genes)?))
            .collect::<Result<Vec<_>>>()?;
        schemes.push(("likelihood", loo_likelihood(&index, &prepared, &cfg.hyper)?));
        if corpus.iter().all(|e| e.de_profile.is_some()) {
            let profiles = corpus
                .iter()
                .map(|e| Ok(load_de_profile(e.de_profile.as_ref().unwrap(), &e.id)?))
                .collect::<Result<Vec<_>>>()?;
            let profiles = align_profiles(profiles)?;
            schemes.push(("de", loo_de_correlation(&profiles)?));
        }
    } else {
        eprintln!(
            "manifest does not cover every indexed experiment; evaluating model distance only"
        );
    }

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut summary = String::from("scheme,map,top1_matched,top1_evaluated,queries_skipped\n");
    let mut ap_table = String::from("scheme,query,average_precision\n");
    let mut top1_table = String::from("scheme,query,top1,relevant\n");
    let mut curves = Vec::new();
    for (name, rankings) in &schemes {
        let curve = pr_curve(rankings, &relevance)?;
        write(
            &out_dir.join(format!("pr_{name}.csv")),
            &pr_curve_csv(&curve),
        )?;
        let aps = per_query_average_precision(rankings, &relevance)?;
        for (q, ap) in &aps {
            let _ = writeln!(ap_table, "{name},{q},{ap}");
        }
        let map = if aps.is_empty() {
            f64::NAN
        } else {
            aps.iter().map(|(_, a)| a).sum::<f64>() / aps.len() as f64
        };
        let top1 = top1_match_eval(rankings, &relevance)?;
        for (q, pick) in &top1.picks {
            let row = relevance.position(q).expect("query in relevance matrix");
            let hit = pick
                .as_deref()
                .is_some_and(|p| relevance.relevant_to(row).contains(p));
            let _ = writeln!(
                top1_table,
                "{name},{q},{},{hit}",
                pick.as_deref().unwrap_or("")
            );
        }
        let _ = writeln!(
            summary,
            "{name},{map},{},{},{}",
            top1.matched,
            top1.evaluated,
            curve.skipped.len()
        );
        println!(
            "{name}: mAP {map:.4}, top-1 {}/{}, {} queries without relevant experiments",
            top1.matched,
            top1.evaluated,
            curve.skipped.len()
        );
        curves.push((*name, curve));
    }
    write(&out_dir.join("summary.csv"), &summary)?;
    write(&out_dir.join("average_precision.csv"), &ap_table)?;
    write(&out_dir.join("top1.csv"), &top1_table)?;
    let refs: Vec<(&str, &_)> = curves.iter().map(|(n, c)| (*n, c)).collect();
    write(&out_dir.join("pr_curves.svg"), &pr_curves_svg(&refs))?;
    Ok(())
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn synth(cfg: &SyntheticCorpusConfig, out_dir: &Path) -> Result<()> {
    let corpus = generate_synthetic_corpus(cfg)?;
    fs::create_dir_all(out_dir.join("matrices"))?;
    fs::create_dir_all(out_dir.join("labels"))?;
    let mut manifest = String::new();
    for m in &corpus.matrices {
        let rel = format!("matrices/{}.tsv", m.experiment_id());
        save_matrix(out_dir.join(&rel), m)?;
        let _ = writeln!(
            manifest,
            "[[experiments]]\nid = \"{}\"\nmatrix = \"{rel}\"\n",
            m.experiment_id()
        );
    }
    for gt in &corpus.ground_truths {
        let rel = format!("labels/{}.tsv", file_safe(&gt.label_type));
        write(&out_dir.join(&rel), &format_labels(gt))?;
        let _ = writeln!(
            manifest,
            "[[labels]]\nlabel_type = {}\npath = \"{rel}\"\n",
            toml::Value::String(gt.label_type.clone())
        );
    }
    write(&out_dir.join("manifest.toml"), &manifest)?;
    eprintln!(
        "wrote {} experiments to {}",
        corpus.matrices.len(),
        out_dir.display()
    );
    Ok(())
}

fn oracle(n: usize, data: &Path, cfg: &RunConfig) -> Result<()> {
    let d = load_matrix_as(data, &stem(data))?;
    if n == 0 || n > d.n() {
        bail!("--n must be in 1..={}", d.n());
    }
    let genes = d.gene_ids()[..n].to_vec();
    let sub = modret::io::align(&d, &genes)?;
    let (clustering, score) = brute_force_map(&sub, &cfg.hyper)?;
    println!("log_score\t{score}");
    println!("k\t{}", clustering.k());
    for (g, c) in genes.iter().zip(clustering.one_based()) {
        println!("{g}\t{c}");
    }
    Ok(())
}
