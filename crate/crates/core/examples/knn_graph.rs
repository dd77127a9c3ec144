//! Builds an approximate kNN graph by repeated two-means partitioning and
//! tracks its recall against the exact graph round by round.
//!
//! ```bash
//! cargo run --release -p egnns --example knn_graph
//! ```

use std::time::Instant;

use egnns::dataset::VectorSet;
use egnns::graph::{
    build_graph, build_graph_rounds, exact_graph, graph_recall, partition, BuildParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> egnns::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = VectorSet::new(16, (0..5000 * 16).map(|_| rng.random::<f32>()).collect())?;

    let clusters = partition(&data, 50, &mut rng)?;
    let largest = clusters.iter().map(Vec::len).max().unwrap_or(0);
    println!(
        "one partition: {} clusters, largest {largest}",
        clusters.len()
    );

    let start = Instant::now();
    let exact = exact_graph(&data, 10)?;
    println!("exact 10-NN graph: {:.2}s", start.elapsed().as_secs_f64());

    let params = BuildParams {
        k: 10,
        rounds: 20,
        ..Default::default()
    };
    let start = Instant::now();
    let snapshots = build_graph_rounds(&data, &params)?;
    println!("20 rounds: {:.2}s", start.elapsed().as_secs_f64());
    for (round, graph) in snapshots.iter().enumerate() {
        if round == 0 || (round + 1) % 5 == 0 {
            println!(
                "  after {:>2} rounds: recall@10 {:.3}",
                round + 1,
                graph_recall(graph, &exact, 10)?
            );
        }
    }

    // threads only change how distances are computed; the graph is identical
    let parallel = build_graph(
        &data,
        &BuildParams {
            threads: 4,
            ..params.clone()
        },
    )?;
    let serial = build_graph(&data, &params)?;
    assert_eq!(parallel, serial);
    println!("4-thread build matches the single-thread build");
    Ok(())
}
