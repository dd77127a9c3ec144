//! Seeds E-GNNS from an inverted index over two-stage RVQ keys and compares it
//! with random seeding on clustered data.
//!
//! ```bash
//! cargo run --release -p egnns --example ivf_seeding
//! ```

use std::time::Instant;

use egnns::bench::{brute_force_search, exact_ground_truth, recall_at};
use egnns::dataset::VectorSet;
use egnns::graph::{build_graph, BuildParams};
use egnns::ivf::{cascade_shortlist, index_dataset, IvfSearcher, QueryTables, SeedBudget};
use egnns::rvq::train;
use egnns::search::{egnns_search, random_seeds, SearchParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const DIM: usize = 32;

fn mixture(centers: &[Vec<f32>], n: usize, rng: &mut ChaCha8Rng) -> egnns::Result<VectorSet> {
    let mut data = Vec::with_capacity(n * DIM);
    for _ in 0..n {
        let c = &centers[rng.random_range(0..centers.len())];
        data.extend(c.iter().map(|&m| m + rng.sample::<f32, _>(StandardNormal)));
    }
    VectorSet::new(DIM, data)
}

fn main() -> egnns::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let centers: Vec<Vec<f32>> = (0..64)
        .map(|_| (0..DIM).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect();
    let data = mixture(&centers, 20_000, &mut rng)?;
    let queries = mixture(&centers, 300, &mut rng)?;

    let start = Instant::now();
    let graph = build_graph(
        &data,
        &BuildParams {
            k: 10,
            ..Default::default()
        },
    )?;
    let model = train(&data, &[64, 64], 25, &mut rng)?;
    let index = index_dataset(&data, &model)?;
    println!(
        "built graph, model and index in {:.2}s: {} keys, longest list {}",
        start.elapsed().as_secs_f64(),
        index.key_count(),
        index.max_list_len()
    );

    let searcher = IvfSearcher::new(&model, &index, &graph, &data)?;
    let budget = SeedBudget {
        l1_keep: 8,
        keys_probed: 8,
        max_seeds: 32,
    };
    let qt = QueryTables::new(queries.row(0), &model)?;
    let shortlist = cascade_shortlist(&qt, searcher.cross_terms(), &index, &budget)?;
    println!(
        "query 0 probes keys {:?}",
        shortlist.iter().map(|k| k.key).collect::<Vec<_>>()
    );

    let truth = exact_ground_truth(&queries, &data, 1)?;
    let params = SearchParams {
        iterations: 16,
        expand_width: 4,
        result_size: 1,
        seed_count: 32,
        max_evaluations: Some(400),
    };
    let (mut ivf, mut random) = (0.0, 0.0);
    let start = Instant::now();
    for (i, q) in queries.rows().enumerate() {
        let found = searcher.search(q, &budget, &params, &mut rng)?;
        ivf += recall_at(&found.ids(), truth.query(i), 1)?;
    }
    let ivf_time = start.elapsed().as_secs_f64() / queries.len() as f64;
    for (i, q) in queries.rows().enumerate() {
        let seeds = random_seeds(data.len(), 32, &mut rng)?;
        let found = egnns_search(q, &graph, &data, &seeds, &params)?;
        random += recall_at(&found.ids(), truth.query(i), 1)?;
    }
    let start = Instant::now();
    for q in queries.rows() {
        std::hint::black_box(brute_force_search(q, &data, 1)?);
    }
    let brute_time = start.elapsed().as_secs_f64() / queries.len() as f64;

    let n = queries.len() as f64;
    println!("recall@1 with index seeds  {:.3}", ivf / n);
    println!("recall@1 with random seeds {:.3}", random / n);
    println!(
        "{:.1} us/query vs {:.1} us/query brute force",
        ivf_time * 1e6,
        brute_time * 1e6
    );
    Ok(())
}
