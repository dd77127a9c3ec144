//! Brute-force oracle, recall metrics and the recall-versus-time harness.
//!
//! [`run_benchmark`] sweeps expansion width and iteration count for each
//! graph method and times every configuration over the whole query set on a
//! single thread. A GNNS row at sweep point `(p, t)` runs `p * t` single-node
//! iterations, so its expansion bound matches the E-GNNS row at the same point.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{l2, GroundTruth, VectorSet};
use crate::fileio::write_atomic;
use crate::graph::{KnnGraph, Neighbor};
use crate::ivf::{InvertedIndex, IvfSearcher, SeedBudget};
use crate::rvq::RvqModel;
use crate::search::{egnns_search, gnns_search, random_seeds, SearchParams};
use crate::{Error, Result};

/// Exact top-`r` neighbors of `query` with distances, ties by id.
pub fn brute_force_ranked(query: &[f32], data: &VectorSet, r: usize) -> Result<Vec<Neighbor>> {
    data.check_query(query)?;
    if r > data.len() {
        return Err(Error::invalid(format!(
            "asked for {r} neighbors among {} vectors",
            data.len()
        )));
    }
    let mut all: Vec<Neighbor> = data
        .rows()
        .enumerate()
        .map(|(i, x)| Neighbor::new(i as u32, l2(query, x)))
        .collect();
    if r == 0 {
        return Ok(Vec::new());
    }
    if r < all.len() {
        all.select_nth_unstable_by(r - 1, Neighbor::rank_cmp);
        all.truncate(r);
    }
    all.sort_unstable_by(Neighbor::rank_cmp);
    Ok(all)
}

/// Ids of the exact top-`r` neighbors of `query`.
pub fn brute_force_search(query: &[f32], data: &VectorSet, r: usize) -> Result<Vec<u32>> {
    Ok(brute_force_ranked(query, data, r)?
        .into_iter()
        .map(|n| n.id)
        .collect())
}

/// Exact top-`r` lists for every query.
pub fn exact_ground_truth(queries: &VectorSet, data: &VectorSet, r: usize) -> Result<GroundTruth> {
    let rows: Vec<&[f32]> = queries.rows().take(queries.len()).collect();
    let lists = rows
        .par_iter()
        .map(|q| brute_force_search(q, data, r))
        .collect::<Result<Vec<_>>>()?;
    GroundTruth::new(lists)
}

/// Fraction of the true top-`r` present in the returned top-`r`. Missing
/// result slots count as misses.
pub fn recall_at(result: &[u32], truth: &[u32], r: usize) -> Result<f64> {
    if r == 0 {
        return Err(Error::invalid("recall depth must be positive"));
    }
    if truth.len() < r {
        return Err(Error::invalid(format!(
            "ground truth holds {} ids, recall@{r} needs {r}",
            truth.len()
        )));
    }
    let truth = &truth[..r];
    let hits = result
        .iter()
        .take(r)
        .filter(|id| truth.contains(id))
        .count();
    Ok(hits as f64 / r as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exhaustive,
    Gnns,
    Egnns,
    IvfEgnns,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Exhaustive,
        Method::Gnns,
        Method::Egnns,
        Method::IvfEgnns,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Exhaustive => "exhaustive",
            Method::Gnns => "gnns",
            Method::Egnns => "egnns",
            Method::IvfEgnns => "ivf-egnns",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// Sweep definition for [`run_benchmark`].
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub expand_widths: Vec<usize>,
    pub iterations: Vec<usize>,
    /// R of recall@R and the result size of every search.
    pub result_size: usize,
    /// Random seeds per query for GNNS and E-GNNS (and IVF fallback).
    pub seed_count: usize,
    pub budget: SeedBudget,
    pub max_evaluations: Option<usize>,
    pub rng_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            expand_widths: vec![1, 2, 4, 8, 16],
            iterations: vec![2, 4, 8, 16],
            result_size: 10,
            seed_count: 16,
            budget: SeedBudget::default(),
            max_evaluations: None,
            rng_seed: 0x5EED_2016,
        }
    }
}

/// Prebuilt inputs. Only the artifacts a requested method needs must be set.
#[derive(Debug, Clone, Copy, Default)]
pub struct BenchArtifacts<'a> {
    pub data: Option<&'a VectorSet>,
    pub queries: Option<&'a VectorSet>,
    pub truth: Option<&'a GroundTruth>,
    pub graph: Option<&'a KnnGraph>,
    pub model: Option<&'a RvqModel>,
    pub index: Option<&'a InvertedIndex>,
}

fn require<'a, T>(item: Option<&'a T>, name: &str) -> Result<&'a T> {
    item.ok_or_else(|| Error::MissingArtifact(name.to_string()))
}

/// One measured configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: Method,
    /// Expansion width and iteration cap actually run; `None` for exhaustive.
    pub expand_width: Option<usize>,
    pub iterations: Option<usize>,
    pub queries: usize,
    pub total_ms: f64,
    pub mean_ms: f64,
    pub recall_at_1: f64,
    pub recall_at_r: f64,
    pub r: usize,
    pub mean_evaluations: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    /// Heap bytes of each loaded structure.
    pub memory: Vec<(String, usize)>,
}

impl BenchReport {
    pub fn for_method(&self, method: Method) -> impl Iterator<Item = &BenchRecord> {
        self.records.iter().filter(move |r| r.method == method)
    }

    /// One JSON object per record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_jsonl().as_bytes())
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<11} {:>5} {:>5} {:>11} {:>10} {:>7} {:>8} {:>9}",
            "method", "p", "iters", "total ms", "ms/query", "R@1", "R@R", "evals/q"
        )?;
        for r in &self.records {
            let opt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
            writeln!(
                f,
                "{:<11} {:>5} {:>5} {:>11.2} {:>10.4} {:>7.3} {:>8.3} {:>9.1}",
                r.method.name(),
                opt(r.expand_width),
                opt(r.iterations),
                r.total_ms,
                r.mean_ms,
                r.recall_at_1,
                r.recall_at_r,
                r.mean_evaluations
            )?;
        }
        for (name, bytes) in &self.memory {
            writeln!(f, "memory {name}: {bytes} bytes")?;
        }
        Ok(())
    }
}

/// Runs every requested method over the sweep; see the module docs.
pub fn run_benchmark(config: &BenchConfig, artifacts: &BenchArtifacts<'_>) -> Result<BenchReport> {
    let data = require(artifacts.data, "reference vectors")?;
    let queries = require(artifacts.queries, "query vectors")?;
    let truth = require(artifacts.truth, "ground truth")?;
    let r = config.result_size;
    if r < 1 || r > data.len() {
        return Err(Error::invalid(format!(
            "result size {r} must lie in 1..={}",
            data.len()
        )));
    }
    if truth.len() < queries.len() {
        return Err(Error::invalid(format!(
            "ground truth covers {} of {} queries",
            truth.len(),
            queries.len()
        )));
    }
    truth.validate_ids(data.len())?;
    if !queries.is_empty() {
        data.check_query(queries.row(0))?;
    }

    let mut report = BenchReport::default();
    report
        .memory
        .push(("reference vectors".into(), data.memory_bytes()));

    let graph_needed = config.methods.iter().any(|m| *m != Method::Exhaustive);
    let graph = if graph_needed {
        let g = require(artifacts.graph, "kNN graph")?;
        report.memory.push(("kNN graph".into(), g.memory_bytes()));
        Some(g)
    } else {
        None
    };
    let searcher = if config.methods.contains(&Method::IvfEgnns) {
        let model = require(artifacts.model, "RVQ model")?;
        let index = require(artifacts.index, "inverted index")?;
        report
            .memory
            .push(("RVQ model".into(), model.memory_bytes()));
        report
            .memory
            .push(("inverted index".into(), index.memory_bytes()));
        Some(IvfSearcher::new(model, index, graph.unwrap(), data)?)
    } else {
        None
    };

    for &method in &config.methods {
        if method == Method::Exhaustive {
            report
                .records
                .push(measure(method, None, None, queries, truth, r, |q, _| {
                    Ok((brute_force_search(q, data, r)?, data.len()))
                })?);
            continue;
        }
        let graph = graph.unwrap();
        for &p in &config.expand_widths {
            for &t in &config.iterations {
                let (width, iters) = match method {
                    Method::Gnns => (1, p * t),
                    _ => (p, t),
                };
                let params = SearchParams {
                    iterations: iters,
                    expand_width: width,
                    result_size: r,
                    seed_count: config.seed_count,
                    max_evaluations: config.max_evaluations,
                };
                let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
                let record = measure(
                    method,
                    Some(width),
                    Some(iters),
                    queries,
                    truth,
                    r,
                    |q, _| {
                        let ranked = match method {
                            Method::IvfEgnns => searcher.as_ref().unwrap().search(
                                q,
                                &config.budget,
                                &params,
                                &mut rng,
                            )?,
                            _ => {
                                let seeds = random_seeds(
                                    data.len(),
                                    config.seed_count.min(data.len()),
                                    &mut rng,
                                )?;
                                if method == Method::Gnns {
                                    gnns_search(q, graph, data, &seeds, &params)?
                                } else {
                                    egnns_search(q, graph, data, &seeds, &params)?
                                }
                            }
                        };
                        Ok((ranked.ids(), ranked.stats().evaluations))
                    },
                )?;
                report.records.push(record);
            }
        }
    }
    Ok(report)
}

fn measure(
    method: Method,
    expand_width: Option<usize>,
    iterations: Option<usize>,
    queries: &VectorSet,
    truth: &GroundTruth,
    r: usize,
    mut run: impl FnMut(&[f32], usize) -> Result<(Vec<u32>, usize)>,
) -> Result<BenchRecord> {
    let mut results = Vec::with_capacity(queries.len());
    let mut evaluations = 0usize;
    let start = Instant::now();
    for (i, q) in queries.rows().take(queries.len()).enumerate() {
        let (ids, evals) = run(q, i)?;
        evaluations += evals;
        results.push(ids);
    }
    let total_ms = start.elapsed().as_secs_f64() * 1e3;

    let n = queries.len().max(1) as f64;
    let mut r1 = 0.0;
    let mut rr = 0.0;
    for (i, ids) in results.iter().enumerate() {
        r1 += recall_at(ids, truth.query(i), 1)?;
        rr += recall_at(ids, truth.query(i), r)?;
    }
    Ok(BenchRecord {
        method,
        expand_width,
        iterations,
        queries: queries.len(),
        total_ms,
        mean_ms: total_ms / n,
        recall_at_1: r1 / n,
        recall_at_r: rr / n,
        r,
        mean_evaluations: evaluations as f64 / n,
    })
}
