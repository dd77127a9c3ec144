//! Trains a three-stage residual quantizer and shows how reconstruction error
//! falls with each additional stage.
//!
//! ```bash
//! cargo run --release -p egnns --example rvq_codebooks
//! ```

use egnns::dataset::{squared_l2, VectorSet};
use egnns::rvq::{decode, encode, encode_prefix, reconstruction_mse_prefix, train_with_codes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> egnns::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = VectorSet::new(16, (0..10_000 * 16).map(|_| rng.random::<f32>()).collect())?;

    let (model, codes) = train_with_codes(&data, &[64, 64, 64], 25, &mut rng)?;
    println!(
        "stages {:?}, {} bytes of codebooks",
        model.stage_sizes(),
        model.memory_bytes()
    );
    for stages in 1..=model.stages().len() {
        println!(
            "  first {stages} stage(s): mse {:.5}",
            reconstruction_mse_prefix(&data, &model, stages)?
        );
    }

    let x = data.row(0);
    let code = encode(x, &model)?;
    assert_eq!(code, codes[0]);
    let approx = decode(&code, &model)?;
    println!(
        "vector 0 -> code {:?}, squared error {:.5}",
        code.0,
        squared_l2(x, &approx)?
    );
    println!("two-stage prefix {:?}", encode_prefix(x, &model, 2)?.0);
    Ok(())
}
