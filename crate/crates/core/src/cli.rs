//! Command-line front end: `align`, `eval`, `selflearn`, `diag`, `bench`.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::align::ResidualForm;
use crate::embio::{load_dictionary, load_embeddings, save_dictionary, save_embeddings, Embedding, SeedDictionary};
use crate::error::Error;
use crate::factor::EigenMethod;
use crate::gram::{effective_lambda, filter_mask, filter_stats, gram, inner_product_histogram, Histogram};
use crate::pipeline::{align, AlignConfig, AlignmentResult, Method, RotationMode, StageTimings};
use crate::preprocess::{preprocess_pair, PreprocessMode};
use crate::retrieval::{evaluate, gold_sets, retrieve, Retrieval, RetrievalConfig};
use crate::selflearn::{augment_dictionary, AugmentationConfig};
use crate::solver::{FippConfig, Solver};
use crate::synthetic::{split_identity_pairs, synthetic_pair};

#[derive(Debug, Parser)]
#[command(name = "fipp", version, about = "Align word embeddings with Filtered Inner Product Projection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align a source embedding to a target embedding using a seed dictionary.
    Align(AlignArgs),
    /// Score translation retrieval against a test dictionary.
    Eval(EvalArgs),
    /// Augment a seed dictionary with high-confidence induced pairs.
    Selflearn(SelflearnArgs),
    /// Inner-product distributions and filter statistics, without aligning.
    Diag(DiagArgs),
    /// Time the alignment stages on synthetic data.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PreprocessKind {
    None,
    Isotropic,
    Iternorm,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long, value_enum, default_value = "isotropic")]
    pub preprocess: PreprocessKind,
    /// Principal components removed by isotropic preprocessing.
    #[arg(long, default_value_t = 1)]
    pub pca_k: usize,
    /// Rounds of iterative normalization.
    #[arg(long, default_value_t = 5)]
    pub in_iters: usize,
}

impl PreprocessArgs {
    fn mode(&self) -> PreprocessMode {
        match self.preprocess {
            PreprocessKind::None => PreprocessMode::None,
            PreprocessKind::Isotropic => PreprocessMode::Isotropic {
                components_removed: self.pca_k,
            },
            PreprocessKind::Iternorm => PreprocessMode::IterativeNorm {
                iterations: self.in_iters,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Fipp,
    Procrustes,
    Linear,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Eigen,
    Sgd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RotationArg {
    Weighted,
    Plain,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ResidualArg {
    Transfer,
    Literal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EigenArg {
    Auto,
    Dense,
    Power,
}

#[derive(Debug, Args)]
pub struct FippArgs {
    #[arg(long, value_enum, default_value = "fipp")]
    pub method: MethodArg,
    /// Inner products are kept when source and target differ by less than this.
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Use lambda as given instead of scaling it by c^2 / nnz.
    #[arg(long)]
    pub no_gamma: bool,
    #[arg(long, value_enum, default_value = "eigen")]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 5000)]
    pub sgd_epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub sgd_lr: f64,
    #[arg(long, value_enum, default_value = "auto")]
    pub eig_method: EigenArg,
    #[arg(long, value_enum, default_value = "weighted")]
    pub rotation: RotationArg,
    #[arg(long, default_value_t = 1e-6)]
    pub weight_floor: f64,
    /// Per-pair residual behind the rotation weights.
    #[arg(long, value_enum, default_value = "transfer")]
    pub residual: ResidualArg,
    /// Induced pairs added to the seed before aligning (0 disables).
    #[arg(long, default_value_t = 0)]
    pub self_learning: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl FippArgs {
    fn config(&self, preprocess: PreprocessMode) -> AlignConfig {
        AlignConfig {
            method: match self.method {
                MethodArg::Fipp => Method::Fipp,
                MethodArg::Procrustes => Method::Procrustes,
                MethodArg::Linear => Method::Linear,
            },
            preprocess,
            fipp: FippConfig {
                epsilon: self.eps,
                lambda: self.lambda,
                gamma_scaling: !self.no_gamma,
                solver: match self.solver {
                    SolverArg::Eigen => Solver::Eigen,
                    SolverArg::Sgd => Solver::Sgd,
                },
                eigen_method: match self.eig_method {
                    EigenArg::Auto => EigenMethod::Auto,
                    EigenArg::Dense => EigenMethod::Dense,
                    EigenArg::Power => EigenMethod::PowerIteration,
                },
                sgd_epochs: self.sgd_epochs,
                sgd_learning_rate: self.sgd_lr,
                rng_seed: self.seed,
            },
            rotation: match self.rotation {
                RotationArg::Weighted => RotationMode::Weighted,
                RotationArg::Plain => RotationMode::Plain,
                RotationArg::None => RotationMode::None,
            },
            weight_floor: self.weight_floor,
            residual: match self.residual {
                ResidualArg::Transfer => ResidualForm::Transfer,
                ResidualArg::Literal => ResidualForm::Literal,
            },
            self_learning: (self.self_learning > 0).then_some(AugmentationConfig {
                n_pairs: self.self_learning,
                exclude_seed: true,
            }),
        }
    }
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    #[arg(long)]
    pub train_dict: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Read at most this many words from each embedding.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Bins of the inner-product histograms.
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[command(flatten)]
    pub fipp: FippArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RetrievalArg {
    Nn,
    Csls,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Aligned source embedding.
    #[arg(long)]
    pub src: PathBuf,
    /// Target embedding in the same space.
    #[arg(long)]
    pub tgt: PathBuf,
    #[arg(long)]
    pub test_dict: PathBuf,
    #[arg(long, value_enum, default_value = "nn")]
    pub retrieval: RetrievalArg,
    #[arg(long, default_value_t = 10)]
    pub csls_k: usize,
    /// Ranking length; gold answers beyond it count as misses.
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    /// Rank every candidate, so no gold answer is ever cut off.
    #[arg(long)]
    pub exact_map: bool,
    #[arg(long)]
    pub limit: Option<usize>,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelflearnArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    #[arg(long)]
    pub train_dict: PathBuf,
    /// TSV of the added pairs with their similarity.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write seed plus additions as a plain two-column dictionary.
    #[arg(long)]
    pub full_dict: Option<PathBuf>,
    #[arg(long, default_value_t = 14_000)]
    pub n_pairs: usize,
    /// Allow additions that duplicate seed pairs.
    #[arg(long)]
    pub keep_seed_pairs: bool,
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    #[arg(long)]
    pub train_dict: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Words listed at each end of the filter ranking.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Seed dictionary size.
    #[arg(long, default_value_t = 1000)]
    pub c: usize,
    /// Embedding dimension (both sides).
    #[arg(long, default_value_t = 300)]
    pub d: usize,
    #[arg(long, default_value_t = 50_000)]
    pub vocab: usize,
    #[arg(long, default_value_t = 3)]
    pub runs: usize,
    /// Per-entry Gaussian noise added to the synthetic target.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A library error plus the flag or file it concerns.
#[derive(Debug)]
pub struct CliError {
    pub context: String,
    pub error: Error,
}

impl CliError {
    /// Exit status: 1 for numerical failures, 2 for bad input or configuration.
    pub fn exit_code(&self) -> u8 {
        if self.error.is_numerical() {
            1
        } else {
            2
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.context.is_empty() {
            write!(f, "{}", self.error)
        } else {
            write!(f, "{}: {}", self.context, self.error)
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        CliError {
            context: String::new(),
            error,
        }
    }
}

trait Context<T> {
    fn context(self, what: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for crate::error::Result<T> {
    fn context(self, what: &str) -> Result<T, CliError> {
        self.map_err(|error| CliError {
            context: what.to_string(),
            error,
        })
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Align(a) => run_align(&a),
        Command::Eval(a) => run_eval(&a),
        Command::Selflearn(a) => run_selflearn(&a),
        Command::Diag(a) => run_diag(&a),
        Command::Bench(a) => run_bench(&a),
    }
}

fn load_pair(src: &Path, tgt: &Path, limit: Option<usize>) -> CliResult<(Embedding, Embedding)> {
    let s = load_embeddings(src, limit).context("--src")?;
    let t = load_embeddings(tgt, limit).context("--tgt")?;
    info!("loaded {} x {} source, {} x {} target", s.len(), s.dim(), t.len(), t.dim());
    Ok((s, t))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).context("--out-dir")
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    write_text(path, &text)
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> CliResult<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let go = || -> std::io::Result<()> {
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{row}")?;
        }
        w.flush()
    };
    go().map_err(|e| Error::io(path, e).into())
}

fn histogram_rows(h: &Histogram) -> Vec<String> {
    h.counts
        .iter()
        .enumerate()
        .map(|(k, n)| format!("{},{},{}", h.edges[k], h.edges[k + 1], n))
        .collect()
}

fn write_histogram(path: &Path, rows: &DMatrix<f64>, bins: usize) -> CliResult<()> {
    let h = inner_product_histogram(&gram(rows), bins)?;
    write_csv(path, "lower,upper,count", histogram_rows(&h))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn timing_json(t: &StageTimings) -> Value {
    let mut v = serde_json::to_value(t).expect("timings serialize");
    v["total"] = json!(t.total().as_secs_f64());
    v
}

fn summary(values: &[f64]) -> Value {
    if values.is_empty() {
        return Value::Null;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    json!({ "min": min, "max": max, "mean": mean })
}

fn alignment_report(args: &AlignArgs, cfg: &AlignConfig, src: &Embedding, tgt: &Embedding, dict: &SeedDictionary, r: &AlignmentResult) -> Value {
    let fipp = r.fipp.as_ref().map(|s| {
        json!({
            "losses": s.losses,
            "mask_nnz": s.mask.nnz(),
            "mask_density": s.mask.nnz() as f64 / (s.mask.dim() * s.mask.dim()) as f64,
            "leading_eigenvalues": s.eigenvalues,
            "eigen_method": s.eigen_method,
            "eigen_iterations": s.eigen_iterations,
            "epochs_run": s.loss_trace.len().saturating_sub(1),
        })
    });
    let self_learning = r.augmentation.as_ref().map(|a| {
        json!({
            "added": a.added.len(),
            "collisions": a.collisions,
            "dictionary_size": a.dictionary.len(),
        })
    });
    let weights: Vec<f64> = r.weights.iter().copied().collect();
    json!({
        "config": cfg,
        "inputs": {
            "src": args.src,
            "tgt": args.tgt,
            "train_dict": args.train_dict,
            "limit": args.limit,
            "src_words": src.len(),
            "tgt_words": tgt.len(),
            "d1": src.dim(),
            "d2": tgt.dim(),
            "seed_pairs": dict.len(),
            "seed_skipped": dict.skipped(),
        },
        "fipp": fipp,
        "self_learning": self_learning,
        "ortho_deviation": r.ortho_deviation,
        "projection": {
            "condition": r.projection_condition,
            "rank": r.projection_rank,
        },
        "weights": summary(&weights),
        "rotation": matrix_rows(&r.rotation),
        "linear_map": r.linear_map.as_ref().map(matrix_rows),
    })
}

fn run_align(args: &AlignArgs) -> CliResult<()> {
    let (src, tgt) = load_pair(&args.src, &args.tgt, args.limit)?;
    let dict = load_dictionary(&args.train_dict, &src, &tgt).context("--train-dict")?;
    if dict.skipped() > 0 {
        log::warn!("{} training pairs skipped as out of vocabulary", dict.skipped());
    }
    let cfg = args.fipp.config(args.preprocess.mode());
    create_dir(&args.out_dir)?;

    let result = align(&src, &tgt, &dict, &cfg)?;
    let out = &args.out_dir;
    save_embeddings(&result.aligned_src, out.join("aligned_src.vec"))?;
    save_embeddings(&result.tgt, out.join("aligned_tgt.vec"))?;

    let mut report = alignment_report(args, &cfg, &src, &tgt, &dict, &result);
    report["timing"] = timing_json(&result.timings);
    write_json(&out.join("report.json"), &report)?;

    let (raw_s, raw_t) = dict.seed_rows(&src, &tgt);
    let (pre_s, pre_t) = dict.seed_rows(&result_src_preprocessed(&src, &tgt, &cfg)?, &result.tgt);
    write_histogram(&out.join("hist_src_raw.csv"), &raw_s, args.bins)?;
    write_histogram(&out.join("hist_tgt_raw.csv"), &raw_t, args.bins)?;
    write_histogram(&out.join("hist_src.csv"), &pre_s, args.bins)?;
    write_histogram(&out.join("hist_tgt.csv"), &pre_t, args.bins)?;

    if let Some(sol) = &result.fipp {
        let fractions = filter_stats(&sol.mask);
        let rows = result.dictionary.pairs().iter().zip(&fractions).map(|(&(s, t), f)| {
            format!("{},{},{}", src.vocab()[s], tgt.vocab()[t], f)
        });
        write_csv(&out.join("filter_stats.csv"), "src,tgt,fraction_filtered", rows)?;
        if !sol.loss_trace.is_empty() {
            let rows = sol.loss_trace.iter().enumerate().map(|(e, l)| format!("{e},{l}"));
            write_csv(&out.join("loss_trace.csv"), "epoch,loss", rows)?;
        }
    }
    if let Some(aug) = &result.augmentation {
        let pairs: Vec<(usize, usize)> = aug.added.iter().map(|p| (p.src, p.tgt)).collect();
        let sims: Vec<f64> = aug.added.iter().map(|p| p.similarity).collect();
        save_dictionary(&pairs, Some(&sims), &src, &tgt, out.join("self_learning.tsv"))?;
    }
    eprintln!(
        "aligned {} words into {} dimensions in {:.2}s; outputs in {}",
        result.aligned_src.len(),
        result.aligned_src.dim(),
        result.timings.total().as_secs_f64(),
        out.display()
    );
    Ok(())
}

/// Preprocessed source, for the "after" histograms. Cheap next to alignment.
fn result_src_preprocessed(src: &Embedding, tgt: &Embedding, cfg: &AlignConfig) -> CliResult<Embedding> {
    Ok(preprocess_pair(src, tgt, cfg.preprocess)?.0)
}

fn run_eval(args: &EvalArgs) -> CliResult<()> {
    let (src, tgt) = load_pair(&args.src, &args.tgt, args.limit)?;
    if src.dim() != tgt.dim() {
        return Err(Error::Shape(format!(
            "aligned source has dimension {}, target {}",
            src.dim(),
            tgt.dim()
        )))
        .context("--src");
    }
    let dict = load_dictionary(&args.test_dict, &src, &tgt).context("--test-dict")?;
    let gold = gold_sets(dict.pairs());
    let queries: Vec<usize> = gold.keys().copied().collect();
    let cfg = RetrievalConfig {
        method: match args.retrieval {
            RetrievalArg::Nn => Retrieval::Nn,
            RetrievalArg::Csls => Retrieval::Csls,
        },
        csls_k: args.csls_k,
        topk: if args.exact_map { tgt.len() } else { args.topk },
    };
    if cfg.topk == 0 {
        return Err(Error::InvalidArgument("ranking length must be at least 1".into())).context("--topk");
    }
    let rankings = retrieve(&src.rows(&queries), tgt.matrix(), &cfg)?;
    let report = evaluate(&queries, &rankings, &gold, &cfg)?;

    let per_query: Vec<Value> = report
        .per_query
        .iter()
        .map(|q| {
            json!({
                "query": src.vocab()[q.query],
                "best_gold_rank": q.best_gold_rank,
                "top1": rankings_top1(&rankings, &queries, q.query).map(|t| tgt.vocab()[t].clone()),
            })
        })
        .collect();
    let value = json!({
        "config": {
            "src": args.src,
            "tgt": args.tgt,
            "test_dict": args.test_dict,
            "retrieval": cfg.method,
            "csls_k": cfg.csls_k,
            "topk": cfg.topk,
            "exact_map": args.exact_map,
            "limit": args.limit,
        },
        "map": report.map,
        "p_at_1": report.p_at_1,
        "p_at_5": report.p_at_5,
        "n_queries": report.n_queries,
        "test_pairs_skipped": dict.skipped(),
        "retrieval": report.retrieval,
        "csls_k": report.csls_k,
        "topk": report.topk,
        "per_query": per_query,
    });
    match &args.out {
        Some(path) => write_json(path, &value).map_err(|mut e| {
            e.context = "--out".into();
            e
        })?,
        None => println!("{}", serde_json::to_string_pretty(&value).expect("JSON values always serialize")),
    }
    eprintln!(
        "MAP {:.4}  P@1 {:.4}  P@5 {:.4}  over {} queries",
        report.map, report.p_at_1, report.p_at_5, report.n_queries
    );
    Ok(())
}

fn rankings_top1(rankings: &[Vec<usize>], queries: &[usize], query: usize) -> Option<usize> {
    let k = queries.iter().position(|&q| q == query)?;
    rankings[k].first().copied()
}

fn run_selflearn(args: &SelflearnArgs) -> CliResult<()> {
    let (src, tgt) = load_pair(&args.src, &args.tgt, args.limit)?;
    let dict = load_dictionary(&args.train_dict, &src, &tgt).context("--train-dict")?;
    let (ps, pt) = preprocess_pair(&src, &tgt, args.preprocess.mode())?;
    let cfg = AugmentationConfig {
        n_pairs: args.n_pairs,
        exclude_seed: !args.keep_seed_pairs,
    };
    let aug = augment_dictionary(&ps, &pt, &dict, &cfg)?;
    let pairs: Vec<(usize, usize)> = aug.added.iter().map(|p| (p.src, p.tgt)).collect();
    let sims: Vec<f64> = aug.added.iter().map(|p| p.similarity).collect();
    save_dictionary(&pairs, Some(&sims), &src, &tgt, &args.out).context("--out")?;
    if let Some(path) = &args.full_dict {
        save_dictionary(aug.dictionary.pairs(), None, &src, &tgt, path).context("--full-dict")?;
    }
    eprintln!(
        "added {} pairs ({} share a target with an earlier addition); dictionary now {} pairs",
        aug.added.len(),
        aug.collisions,
        aug.dictionary.len()
    );
    Ok(())
}

fn run_diag(args: &DiagArgs) -> CliResult<()> {
    let (src, tgt) = load_pair(&args.src, &args.tgt, args.limit)?;
    let dict = load_dictionary(&args.train_dict, &src, &tgt).context("--train-dict")?;
    create_dir(&args.out_dir)?;
    let out = &args.out_dir;

    let (raw_s, raw_t) = dict.seed_rows(&src, &tgt);
    write_histogram(&out.join("hist_src_raw.csv"), &raw_s, args.bins)?;
    write_histogram(&out.join("hist_tgt_raw.csv"), &raw_t, args.bins)?;
    let (ps, pt) = preprocess_pair(&src, &tgt, args.preprocess.mode())?;
    let (xs, xt) = dict.seed_rows(&ps, &pt);
    write_histogram(&out.join("hist_src.csv"), &xs, args.bins)?;
    write_histogram(&out.join("hist_tgt.csv"), &xt, args.bins)?;

    let (gs, gt) = (gram(&xs), gram(&xt));
    let mask = filter_mask(&gs, &gt, args.eps).context("--eps")?;
    let fractions = filter_stats(&mask);
    let rows = dict.pairs().iter().zip(&fractions).map(|(&(s, t), f)| {
        format!("{},{},{}", src.vocab()[s], tgt.vocab()[t], f)
    });
    write_csv(&out.join("filter_stats.csv"), "src,tgt,fraction_filtered", rows)?;

    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| fractions[b].total_cmp(&fractions[a]).then(a.cmp(&b)));
    let named = |ix: &[usize]| -> Vec<Value> {
        ix.iter()
            .map(|&k| {
                let (s, t) = dict.pairs()[k];
                json!({ "src": src.vocab()[s], "tgt": tgt.vocab()[t], "fraction_filtered": fractions[k] })
            })
            .collect()
    };
    let top = args.top.min(order.len());
    let least: Vec<usize> = order.iter().rev().take(top).copied().collect();
    let c = mask.dim();
    let lambda_eff = effective_lambda(args.lambda, &mask, true).ok();
    let value = json!({
        "config": {
            "eps": args.eps,
            "lambda": args.lambda,
            "preprocess": args.preprocess.mode(),
            "bins": args.bins,
        },
        "seed_pairs": c,
        "seed_skipped": dict.skipped(),
        "mask_nnz": mask.nnz(),
        "mask_density": mask.nnz() as f64 / (c * c) as f64,
        "effective_lambda": lambda_eff,
        "most_filtered": named(&order[..top]),
        "least_filtered": named(&least),
    });
    write_json(&out.join("diag.json"), &value)?;
    eprintln!("filter keeps {} of {} inner products; outputs in {}", mask.nnz(), c * c, out.display());
    Ok(())
}

fn mean_std(xs: &[f64]) -> Value {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    json!({ "mean": mean, "std": var.sqrt() })
}

fn run_bench(args: &BenchArgs) -> CliResult<()> {
    if args.runs == 0 {
        return Err(Error::InvalidArgument("need at least one run".into())).context("--runs");
    }
    let start = Instant::now();
    let pair = synthetic_pair(args.vocab, args.d, args.d, args.noise, args.seed)?;
    let (train, _) = split_identity_pairs(args.vocab, args.c, 0, args.seed.wrapping_add(3)).context("--c")?;
    let dict = SeedDictionary::new(train, args.vocab, args.vocab)?;
    info!("synthetic data ready in {:.1}s", start.elapsed().as_secs_f64());

    let cfg = AlignConfig::default();
    let mut runs: Vec<StageTimings> = Vec::with_capacity(args.runs);
    for k in 0..args.runs {
        let r = align(&pair.src, &pair.tgt, &dict, &cfg)?;
        eprintln!("run {}: {:.2}s", k + 1, r.timings.total().as_secs_f64());
        runs.push(r.timings);
    }
    let stage = |f: fn(&StageTimings) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
    let value = json!({
        "config": {
            "c": args.c,
            "d": args.d,
            "vocab": args.vocab,
            "runs": args.runs,
            "noise": args.noise,
            "seed": args.seed,
            "align": cfg,
        },
        "machine": {
            "os": std::env::consts::OS,
            "arch": std::env::consts::ARCH,
            "available_parallelism": std::thread::available_parallelism().map(|n| n.get()).ok(),
            "rayon_threads": rayon::current_num_threads(),
        },
        "stages": {
            "preprocess": stage(|t| t.preprocess.as_secs_f64()),
            "gram": stage(|t| t.gram.as_secs_f64()),
            "gstar": stage(|t| t.gstar.as_secs_f64()),
            "factorization": stage(|t| t.factorization.as_secs_f64()),
            "rotation": stage(|t| t.rotation.as_secs_f64()),
            "projection": stage(|t| t.projection.as_secs_f64()),
            "total": stage(|t| t.total().as_secs_f64()),
        },
    });
    match &args.out {
        Some(path) => write_json(path, &value)?,
        None => println!("{}", serde_json::to_string_pretty(&value).expect("JSON values always serialize")),
    }
    Ok(())
}
