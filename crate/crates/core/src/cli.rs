//! Command-line front end for the `egnns` binary.
//!
//! Artifacts use the binary formats of their owning modules; vector files are
//! recognized by their `.fvecs`, `.bvecs` or `.ivecs` extension (anything else
//! is read as `.fvecs`).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bench::{
    brute_force_ranked, exact_ground_truth, run_benchmark, BenchArtifacts, BenchConfig, Method,
};
use crate::dataset::{
    load_ground_truth, read_vectors, write_ground_truth, write_vectors, VecFormat, VectorSet,
};
use crate::fileio::write_atomic;
use crate::graph::{build_graph, read_graph, write_graph, BuildParams, Neighbor};
use crate::ivf::{index_dataset, read_index, write_index, IvfSearcher, SeedBudget};
use crate::rvq::{read_model, train, write_model, DEFAULT_ITERS};
use crate::search::{egnns_search, gnns_search, random_seeds, SearchParams};
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 0x5EED_2016;

#[derive(Debug, Parser)]
#[command(name = "egnns", version, about = "kNN-graph nearest neighbor search")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Print progress details to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a kNN graph by repeated two-means partitioning.
    BuildGraph(BuildGraphArgs),
    /// Train a residue vector quantizer.
    TrainRvq(TrainRvqArgs),
    /// Build the inverted index from a trained model.
    BuildIndex(BuildIndexArgs),
    /// Answer queries with one of the search methods.
    Search(SearchArgs),
    /// Sweep the search methods and report recall against time.
    Bench(BenchArgs),
    /// Compute exact ground truth by brute force.
    ExactGt(ExactGtArgs),
    /// Convert a vector file between fvecs, bvecs and ivecs.
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Neighbors per node; 30 suits SIFT-like data, 50 GIST-like data.
    #[arg(long, default_value_t = 30)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub rounds: usize,
    #[arg(long, default_value_t = 50)]
    pub cluster_cap: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct TrainRvqArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated codebook sizes, one per stage.
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    pub stages: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    pub iters: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args, Clone)]
pub struct BudgetArgs {
    #[arg(long, default_value_t = 64)]
    pub l1_keep: usize,
    #[arg(long, default_value_t = 256)]
    pub keys_probed: usize,
    #[arg(long, default_value_t = 64)]
    pub max_seeds: usize,
}

impl BudgetArgs {
    fn budget(&self) -> SeedBudget {
        SeedBudget {
            l1_keep: self.l1_keep,
            keys_probed: self.keys_probed,
            max_seeds: self.max_seeds,
        }
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// exhaustive, gnns, egnns or ivf-egnns.
    #[arg(long, default_value = "ivf-egnns")]
    pub method: String,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, default_value_t = 8)]
    pub expand_width: usize,
    #[arg(long, default_value_t = 12)]
    pub iterations: usize,
    #[arg(long, default_value_t = 10)]
    pub result_size: usize,
    /// Random seeds per query for gnns and egnns.
    #[arg(long, default_value_t = 16)]
    pub seed_count: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// JSON-lines output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Comma-separated methods to run.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "exhaustive,gnns,egnns,ivf-egnns"
    )]
    pub method: Vec<String>,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub expand_width: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    pub iterations: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub result_size: usize,
    #[arg(long, default_value_t = 16)]
    pub seed_count: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// JSON-lines report; the table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExactGtArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub result_size: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses the process arguments, runs, and returns the exit status.
pub fn main() -> i32 {
    run_from(std::env::args_os())
}

/// Exit status: 0 on success, 1 on a failed command, 2 on bad usage.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(config: &RunConfig) -> Result<()> {
    let verbose = config.verbose > 0;
    match &config.command {
        Command::BuildGraph(a) => cmd_build_graph(a, verbose),
        Command::TrainRvq(a) => with_threads(a.threads, || cmd_train_rvq(a, verbose)),
        Command::BuildIndex(a) => with_threads(a.threads, || cmd_build_index(a, verbose)),
        Command::Search(a) => cmd_search(a, verbose),
        Command::Bench(a) => with_threads(1, || cmd_bench(a, verbose)),
        Command::ExactGt(a) => with_threads(a.threads, || cmd_exact_gt(a, verbose)),
        Command::Convert(a) => cmd_convert(a),
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
        .install(f)
}

fn format_of(path: &Path) -> VecFormat {
    VecFormat::from_path(path).unwrap_or(VecFormat::F32)
}

fn load(path: &Path) -> Result<VectorSet> {
    read_vectors(path, format_of(path))
}

fn log(verbose: bool, msg: impl AsRef<str>) {
    if verbose {
        eprintln!("{}", msg.as_ref());
    }
}

pub fn cmd_build_graph(a: &BuildGraphArgs, verbose: bool) -> Result<()> {
    let params = BuildParams {
        k: a.k,
        rounds: a.rounds,
        cluster_cap: a.cluster_cap,
        rng_seed: a.seed,
        threads: a.threads,
    };
    params.validate()?;
    let data = load(&a.data)?;
    if data.len() <= a.k {
        return Err(Error::invalid(format!(
            "k={} needs more than {} vectors",
            a.k,
            data.len()
        )));
    }
    log(
        verbose,
        format!(
            "building graph over {} vectors of dim {}",
            data.len(),
            data.dim()
        ),
    );
    let start = Instant::now();
    let graph = build_graph(&data, &params)?;
    let elapsed = start.elapsed();
    write_graph(&graph, &a.out)?;
    println!(
        "graph: n={} k={} rounds={} cluster_cap={} elapsed={:.2}s -> {}",
        graph.len(),
        graph.k(),
        a.rounds,
        a.cluster_cap,
        elapsed.as_secs_f64(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_train_rvq(a: &TrainRvqArgs, verbose: bool) -> Result<()> {
    if a.stages.is_empty() || a.stages.contains(&0) {
        return Err(Error::invalid("stage sizes must be positive"));
    }
    let data = load(&a.data)?;
    if let Some(&big) = a.stages.iter().find(|&&s| s > data.len()) {
        return Err(Error::invalid(format!(
            "stage size {big} exceeds the {} training vectors",
            data.len()
        )));
    }
    log(
        verbose,
        format!("training stages {:?} on {} vectors", a.stages, data.len()),
    );
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let model = train(&data, &a.stages, a.iters, &mut rng)?;
    let mse = crate::rvq::reconstruction_mse(&data, &model)?;
    write_model(&model, &a.out)?;
    println!(
        "model: m={} dim={} stages={:?} mse={mse:.6} elapsed={:.2}s -> {}",
        model.stages().len(),
        model.dim(),
        model.stage_sizes(),
        start.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_build_index(a: &BuildIndexArgs, verbose: bool) -> Result<()> {
    let model = read_model(&a.model)?;
    let data = load(&a.data)?;
    if !data.is_empty() && data.dim() != model.dim() {
        return Err(Error::invalid(format!(
            "{} has dimension {} but model {} has {}",
            a.data.display(),
            data.dim(),
            a.model.display(),
            model.dim()
        )));
    }
    log(verbose, format!("indexing {} vectors", data.len()));
    let index = index_dataset(&data, &model)?;
    write_index(&index, &a.out)?;
    println!(
        "index: n={} keys={} max_list={} -> {}",
        index.vector_count(),
        index.key_count(),
        index.max_list_len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct QueryResult<'a> {
    query: usize,
    ids: &'a [u32],
    distances: &'a [f32],
}

pub fn cmd_search(a: &SearchArgs, verbose: bool) -> Result<()> {
    let method: Method = a.method.parse()?;
    let params = SearchParams {
        iterations: a.iterations,
        expand_width: a.expand_width,
        result_size: a.result_size,
        seed_count: a.seed_count,
        max_evaluations: None,
    };
    params.validate()?;
    let budget = a.budget.budget();
    budget.validate()?;

    let data = load(&a.data)?;
    let queries = load(&a.queries)?;
    if a.result_size > data.len() {
        return Err(Error::invalid(format!(
            "result size {} exceeds the {} reference vectors",
            a.result_size,
            data.len()
        )));
    }
    let graph = match (method, &a.graph) {
        (Method::Exhaustive, _) => None,
        (_, Some(p)) => Some(read_graph(p)?),
        (_, None) => return Err(Error::MissingArtifact("kNN graph (--graph)".into())),
    };
    let ivf = if method == Method::IvfEgnns {
        let model = a
            .model
            .as_ref()
            .ok_or_else(|| Error::MissingArtifact("RVQ model (--model)".into()))?;
        let index = a
            .index
            .as_ref()
            .ok_or_else(|| Error::MissingArtifact("inverted index (--index)".into()))?;
        Some((read_model(model)?, read_index(index)?))
    } else {
        None
    };
    let searcher = match (&ivf, &graph) {
        (Some((model, index)), Some(graph)) => Some(IvfSearcher::new(model, index, graph, &data)?),
        _ => None,
    };
    if method != Method::Exhaustive && params.seed_count > data.len() {
        return Err(Error::invalid("seed count exceeds the reference set"));
    }

    eprintln!(
        "search: method={method} expand_width={} iterations={} result_size={} seed_count={} l1_keep={} keys_probed={} max_seeds={} seed={}",
        a.expand_width, a.iterations, a.result_size, a.seed_count,
        budget.l1_keep, budget.keys_probed, budget.max_seeds, a.seed
    );
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut out = String::new();
    let start = Instant::now();
    for (qi, q) in queries.rows().take(queries.len()).enumerate() {
        let ranked: Vec<Neighbor> = match method {
            Method::Exhaustive => brute_force_ranked(q, &data, a.result_size)?,
            Method::IvfEgnns => searcher
                .as_ref()
                .unwrap()
                .search(q, &budget, &params, &mut rng)?
                .entries()
                .to_vec(),
            Method::Gnns | Method::Egnns => {
                let seeds = random_seeds(data.len(), params.seed_count, &mut rng)?;
                let g = graph.as_ref().unwrap();
                let r = if method == Method::Gnns {
                    gnns_search(q, g, &data, &seeds, &params)?
                } else {
                    egnns_search(q, g, &data, &seeds, &params)?
                };
                r.entries().to_vec()
            }
        };
        let ids: Vec<u32> = ranked.iter().map(|n| n.id).collect();
        let distances: Vec<f32> = ranked.iter().map(|n| n.distance).collect();
        let line = serde_json::to_string(&QueryResult {
            query: qi,
            ids: &ids,
            distances: &distances,
        })
        .expect("results serialize");
        let _ = writeln!(out, "{line}");
    }
    log(
        verbose,
        format!(
            "{} queries in {:.2} ms",
            queries.len(),
            start.elapsed().as_secs_f64() * 1e3
        ),
    );
    match &a.out {
        Some(path) => write_atomic(path, out.as_bytes()),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

pub fn cmd_bench(a: &BenchArgs, verbose: bool) -> Result<()> {
    let methods = a
        .method
        .iter()
        .map(|m| m.parse())
        .collect::<Result<Vec<Method>>>()?;
    let config = BenchConfig {
        methods,
        expand_widths: a.expand_width.clone(),
        iterations: a.iterations.clone(),
        result_size: a.result_size,
        seed_count: a.seed_count,
        budget: a.budget.budget(),
        max_evaluations: None,
        rng_seed: a.seed,
    };
    let data = load(&a.data)?;
    let queries = load(&a.queries)?;
    let truth = load_ground_truth(&a.gt)?;
    let graph = a.graph.as_ref().map(read_graph).transpose()?;
    let model = a.model.as_ref().map(read_model).transpose()?;
    let index = a.index.as_ref().map(read_index).transpose()?;
    log(verbose, format!("benchmarking {} queries", queries.len()));
    let report = run_benchmark(
        &config,
        &BenchArtifacts {
            data: Some(&data),
            queries: Some(&queries),
            truth: Some(&truth),
            graph: graph.as_ref(),
            model: model.as_ref(),
            index: index.as_ref(),
        },
    )?;
    print!("{report}");
    if let Some(path) = &a.out {
        report.write_jsonl(path)?;
    }
    Ok(())
}

pub fn cmd_exact_gt(a: &ExactGtArgs, verbose: bool) -> Result<()> {
    let data = load(&a.data)?;
    let queries = load(&a.queries)?;
    if a.result_size < 1 || a.result_size > data.len() {
        return Err(Error::invalid(format!(
            "result size {} must lie in 1..={}",
            a.result_size,
            data.len()
        )));
    }
    log(
        verbose,
        format!("exact top-{} for {} queries", a.result_size, queries.len()),
    );
    let truth = exact_ground_truth(&queries, &data, a.result_size)?;
    write_ground_truth(&truth, &a.out)?;
    println!(
        "ground truth: queries={} r={} -> {}",
        truth.len(),
        a.result_size,
        a.out.display()
    );
    Ok(())
}

pub fn cmd_convert(a: &ConvertArgs) -> Result<()> {
    let set = load(&a.data)?;
    write_vectors(&set, &a.out, format_of(&a.out))?;
    println!(
        "converted {} vectors of dim {} -> {}",
        set.len(),
        set.dim(),
        a.out.display()
    );
    Ok(())
}
