//! Approximate nearest neighbor search over a k-nearest-neighbor graph.
//!
//! The pipeline has three offline artifacts and one online procedure:
//!
//! * [`graph`]: a kNN graph built by repeatedly bisecting the reference set
//!   with two-means clustering and comparing every pair inside each small
//!   cluster.
//! * [`rvq`]: a multi-stage residue vector quantizer whose leading stage codes
//!   form an indexing key.
//! * [`ivf`]: an inverted index from composed RVQ keys to vector IDs, queried
//!   through precomputed inner-product tables with two-level pruning.
//! * [`search`]: hill-climbing over the graph, either the classic single-node
//!   expansion (GNNS) or the enhanced top-p expansion (E-GNNS), seeded at
//!   random or from the inverted index.
//!
//! [`bench`] holds the brute-force oracle and the recall-versus-time harness,
//! and [`cli`] the command-line front end shipped as the `egnns` binary.
//!
//! ```
//! use egnns::dataset::VectorSet;
//! use egnns::graph::{build_graph, BuildParams};
//! use egnns::search::{egnns_search, random_seeds, SearchParams};
//! use rand::SeedableRng;
//!
//! let data = VectorSet::from_rows(&[
//!     vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0],
//!     vec![5.0, 5.0], vec![6.0, 5.0], vec![5.0, 6.0],
//! ]).unwrap();
//! let graph = build_graph(&data, &BuildParams { k: 2, ..BuildParams::default() }).unwrap();
//!
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let seeds = random_seeds(data.len(), 2, &mut rng).unwrap();
//! let params = SearchParams { iterations: 4, expand_width: 2, result_size: 1, ..Default::default() };
//! let ranked = egnns_search(&[5.1, 5.1], &graph, &data, &seeds, &params).unwrap();
//! assert_eq!(ranked.entries()[0].id, 3);
//! ```

pub mod bench;
pub mod cli;
pub mod dataset;
mod error;
mod fileio;
pub mod graph;
pub mod ivf;
pub mod rvq;
pub mod search;

pub use error::{Error, Result};
