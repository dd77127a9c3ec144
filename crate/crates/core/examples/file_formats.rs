//! Writes and reads every on-disk format: fvecs/bvecs/ivecs vectors, ground
//! truth, kNN graph, RVQ model and inverted index.
//!
//! ```bash
//! cargo run --release -p egnns --example file_formats
//! ```

use egnns::bench::exact_ground_truth;
use egnns::dataset::{
    load_ground_truth, read_vectors, write_ground_truth, write_vectors, VecFormat, VectorSet,
};
use egnns::graph::{build_graph, read_graph, write_graph, BuildParams};
use egnns::ivf::{index_dataset, read_index, write_index};
use egnns::rvq::{read_model, train, write_model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> egnns::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = |name: &str| dir.path().join(name);
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // SIFT-style byte vectors
    let bytes: Vec<f32> = (0..2000 * 12)
        .map(|_| rng.random_range(0..=255u8) as f32)
        .collect();
    let data = VectorSet::new(12, bytes)?;
    for (name, format) in [
        ("base.bvecs", VecFormat::U8),
        ("base.fvecs", VecFormat::F32),
        ("base.ivecs", VecFormat::I32),
    ] {
        write_vectors(&data, path(name), format)?;
        let back = read_vectors(path(name), VecFormat::from_path(&path(name)).unwrap())?;
        assert_eq!(back, data);
        let size = std::fs::metadata(path(name)).map(|m| m.len()).unwrap_or(0);
        println!("{name}: {} x {} in {size} bytes", back.len(), back.dim());
    }

    let queries = data.select(&[3, 14, 159]);
    let truth = exact_ground_truth(&queries, &data, 5)?;
    write_ground_truth(&truth, path("gt.ivecs"))?;
    println!(
        "gt.ivecs: first query -> {:?}",
        load_ground_truth(path("gt.ivecs"))?.query(0)
    );

    let graph = build_graph(
        &data,
        &BuildParams {
            k: 8,
            ..Default::default()
        },
    )?;
    write_graph(&graph, path("base.knng"))?;
    assert_eq!(read_graph(path("base.knng"))?, graph);

    let model = train(&data, &[16, 16], 10, &mut rng)?;
    write_model(&model, path("base.rvq"))?;
    assert_eq!(read_model(path("base.rvq"))?, model);

    let index = index_dataset(&data, &model)?;
    write_index(&index, path("base.rvqi"))?;
    assert_eq!(read_index(path("base.rvqi"))?, index);
    println!("graph, model and index reloaded unchanged");

    // a truncated file is rejected with the byte offset of the problem
    let mut broken = std::fs::read(path("base.knng")).expect("graph bytes");
    broken.truncate(broken.len() - 3);
    std::fs::write(path("broken.knng"), broken).expect("write");
    println!(
        "truncated graph: {}",
        read_graph(path("broken.knng")).unwrap_err()
    );
    Ok(())
}
