//! Compares single-node hill climbing (GNNS) with top-p expansion (E-GNNS)
//! from the same random seeds under a shared distance-evaluation cap.
//!
//! ```bash
//! cargo run --release -p egnns --example hill_climb
//! ```

use egnns::bench::{exact_ground_truth, recall_at};
use egnns::dataset::VectorSet;
use egnns::graph::exact_graph;
use egnns::search::{egnns_search, gnns_search, random_seeds, SearchParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> egnns::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut uniform =
        |n: usize| VectorSet::new(16, (0..n * 16).map(|_| rng.random::<f32>()).collect());
    let data = uniform(3000)?;
    let queries = uniform(200)?;
    let graph = exact_graph(&data, 10)?;
    let truth = exact_ground_truth(&queries, &data, 1)?;

    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>12}",
        "cap", "GNNS R@1", "evals", "E-GNNS R@1", "evals"
    );
    for cap in [100, 200, 400, 800] {
        let enhanced = SearchParams {
            iterations: 64,
            expand_width: 8,
            result_size: 1,
            seed_count: 16,
            max_evaluations: Some(cap),
        };
        let plain = SearchParams {
            expand_width: 1,
            iterations: 512,
            ..enhanced.clone()
        };

        let mut seed_rng = ChaCha8Rng::seed_from_u64(3);
        let (mut recall, mut evals) = ([0.0; 2], [0usize; 2]);
        for (i, q) in queries.rows().enumerate() {
            let seeds = random_seeds(data.len(), 16, &mut seed_rng)?;
            let runs = [
                gnns_search(q, &graph, &data, &seeds, &plain)?,
                egnns_search(q, &graph, &data, &seeds, &enhanced)?,
            ];
            for (j, run) in runs.iter().enumerate() {
                recall[j] += recall_at(&run.ids(), truth.query(i), 1)?;
                evals[j] += run.stats().evaluations;
            }
        }
        let n = queries.len() as f64;
        println!(
            "{cap:>6} {:>12.3} {:>12.1} {:>12.3} {:>12.1}",
            recall[0] / n,
            evals[0] as f64 / n,
            recall[1] / n,
            evals[1] as f64 / n
        );
    }
    Ok(())
}
