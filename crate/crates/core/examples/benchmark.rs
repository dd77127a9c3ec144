//! Runs the recall-versus-time sweep for every method and prints the report
//! table and JSON lines.
//!
//! ```bash
//! cargo run --release -p egnns --example benchmark
//! ```

use egnns::bench::{exact_ground_truth, run_benchmark, BenchArtifacts, BenchConfig, Method};
use egnns::dataset::VectorSet;
use egnns::graph::{build_graph, BuildParams};
use egnns::ivf::index_dataset;
use egnns::rvq::train;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> egnns::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut uniform =
        |n: usize| VectorSet::new(24, (0..n * 24).map(|_| rng.random::<f32>()).collect());
    let data = uniform(10_000)?;
    let queries = uniform(200)?;

    let graph = build_graph(
        &data,
        &BuildParams {
            k: 20,
            ..Default::default()
        },
    )?;
    let model = train(&data, &[64, 64], 15, &mut ChaCha8Rng::seed_from_u64(7))?;
    let index = index_dataset(&data, &model)?;
    let truth = exact_ground_truth(&queries, &data, 10)?;

    let config = BenchConfig {
        expand_widths: vec![1, 4, 16],
        iterations: vec![2, 8],
        ..Default::default()
    };
    let report = run_benchmark(
        &config,
        &BenchArtifacts {
            data: Some(&data),
            queries: Some(&queries),
            truth: Some(&truth),
            graph: Some(&graph),
            model: Some(&model),
            index: Some(&index),
        },
    )?;
    print!("{report}");

    let best = report
        .for_method(Method::IvfEgnns)
        .max_by(|a, b| a.recall_at_r.total_cmp(&b.recall_at_r))
        .expect("ivf rows");
    println!(
        "\nbest ivf-egnns row as JSON:\n{}",
        serde_json::to_string_pretty(best).unwrap()
    );
    Ok(())
}
