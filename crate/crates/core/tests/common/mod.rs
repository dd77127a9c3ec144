#![allow(dead_code)]

use egnns::dataset::VectorSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

/// `n` vectors with components uniform in `[0, 1)`.
pub fn uniform(n: usize, dim: usize, seed: u64) -> VectorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VectorSet::new(dim, (0..n * dim).map(|_| rng.random::<f32>()).collect()).unwrap()
}

/// Isotropic Gaussian mixture: centers uniform in `[-spread, spread)^dim`,
/// unit standard deviation per component.
pub struct Mixture {
    centers: Vec<Vec<f32>>,
    noise: Normal<f32>,
}

impl Mixture {
    pub fn new(clusters: usize, dim: usize, spread: f32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = (0..clusters)
            .map(|_| {
                (0..dim)
                    .map(|_| rng.random_range(-spread..spread))
                    .collect()
            })
            .collect();
        Self {
            centers,
            noise: Normal::new(0.0, 1.0).unwrap(),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> VectorSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.centers[0].len();
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let c = &self.centers[rng.random_range(0..self.centers.len())];
            data.extend(c.iter().map(|&m| m + rng.sample(self.noise)));
        }
        VectorSet::new(dim, data).unwrap()
    }
}
