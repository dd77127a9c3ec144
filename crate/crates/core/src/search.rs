//! Hill-climbing nearest neighbor search over a [`KnnGraph`].
//!
//! Both procedures keep a bounded rank list of evaluated candidates. Each
//! iteration expands the graph lists of the best not-yet-expanded entries,
//! evaluates every neighbor seen for the first time, and merges the batch
//! into the rank list at the end of the iteration. [`gnns_search`] expands one
//! entry per iteration; [`egnns_search`] expands `expand_width` of them.

use std::cmp::Ordering;

use rand::Rng;

use crate::dataset::{l2, VectorSet};
use crate::graph::{KnnGraph, Neighbor};
use crate::{Error, Result};

/// Search knobs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchParams {
    /// Maximum expansion rounds.
    pub iterations: usize,
    /// Entries of the rank list expanded per round; 1 is plain GNNS.
    pub expand_width: usize,
    /// Entries returned.
    pub result_size: usize,
    /// Seeds to draw when seeding at random.
    pub seed_count: usize,
    /// Hard cap on distance evaluations per query, seeds included.
    pub max_evaluations: Option<usize>,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            iterations: 12,
            expand_width: 8,
            result_size: 10,
            seed_count: 16,
            max_evaluations: None,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if self.expand_width < 1 {
            return Err(Error::invalid("expand width must be at least 1"));
        }
        if self.result_size < 1 {
            return Err(Error::invalid("result size must be at least 1"));
        }
        if self.max_evaluations == Some(0) {
            return Err(Error::invalid("evaluation budget must be positive"));
        }
        Ok(())
    }

    /// Rank-list bound used by the search: room for two full expansion
    /// rounds, and never less than the result size.
    pub fn rank_capacity(&self, k: usize) -> usize {
        self.result_size.max(self.expand_width * k * 2)
    }
}

/// Work counters for one query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub evaluations: usize,
    pub iterations: usize,
}

/// Bounded candidate list sorted by `(distance, id)`, plus the ids expanded
/// so far.
#[derive(Debug, Clone, PartialEq)]
pub struct RankList {
    capacity: usize,
    entries: Vec<Neighbor>,
    expanded_flag: Vec<bool>,
    expanded: Vec<u32>,
    stats: SearchStats,
}

impl RankList {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: Vec::with_capacity(capacity + 1),
            expanded_flag: Vec::with_capacity(capacity + 1),
            expanded: Vec::new(),
            stats: SearchStats::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Neighbor] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<u32> {
        self.entries.iter().map(|n| n.id).collect()
    }

    pub fn best(&self) -> Option<Neighbor> {
        self.entries.first().copied()
    }

    /// Ids whose graph lists were expanded, in expansion order.
    pub fn expanded(&self) -> &[u32] {
        &self.expanded
    }

    pub fn stats(&self) -> SearchStats {
        self.stats
    }

    /// Inserts a candidate the caller knows is not yet present. Returns
    /// whether it was kept.
    fn insert(&mut self, entry: Neighbor) -> bool {
        if self.entries.len() >= self.capacity {
            match self.entries.last() {
                Some(worst) if entry.rank_cmp(worst) == Ordering::Less => {}
                _ => return false,
            }
        }
        let pos = self
            .entries
            .partition_point(|n| n.rank_cmp(&entry) == Ordering::Less);
        self.entries.insert(pos, entry);
        self.expanded_flag.insert(pos, false);
        self.entries.truncate(self.capacity);
        self.expanded_flag.truncate(self.capacity);
        true
    }

    fn truncate(&mut self, len: usize) {
        self.entries.truncate(len);
        self.expanded_flag.truncate(len);
    }
}

/// Bitset over node ids, one per query.
struct Visited {
    words: Vec<u64>,
}

impl Visited {
    fn new(n: usize) -> Self {
        Self {
            words: vec![0; n.div_ceil(64)],
        }
    }

    /// Marks `id`; returns true if it was not marked before.
    #[inline]
    fn insert(&mut self, id: u32) -> bool {
        let (w, b) = ((id / 64) as usize, id % 64);
        let fresh = self.words[w] & (1 << b) == 0;
        self.words[w] |= 1 << b;
        fresh
    }
}

/// Draws `count` distinct ids from `0..n` uniformly without replacement.
pub fn random_seeds<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Result<Vec<u32>> {
    if count < 1 || count > n {
        return Err(Error::invalid(format!(
            "seed count {count} must lie in 1..={n}"
        )));
    }
    if u32::try_from(n).is_err() {
        return Err(Error::invalid("vector count exceeds 32-bit ids"));
    }
    Ok(rand::seq::index::sample(rng, n, count)
        .into_iter()
        .map(|i| i as u32)
        .collect())
}

/// Enhanced hill climbing: each round expands the `expand_width` best
/// unexpanded entries of the rank list.
///
/// Stops after `params.iterations` rounds, when a round adds nothing to the
/// rank list, when no unexpanded entry remains, or when the evaluation budget
/// is spent. Returns the best `params.result_size` entries.
pub fn egnns_search(
    query: &[f32],
    graph: &KnnGraph,
    data: &VectorSet,
    seeds: &[u32],
    params: &SearchParams,
) -> Result<RankList> {
    params.validate()?;
    data.check_query(query)?;
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    if graph.len() != data.len() {
        return Err(Error::invalid(format!(
            "graph has {} nodes but the data set has {} vectors",
            graph.len(),
            data.len()
        )));
    }
    if let Some(bad) = seeds.iter().find(|&&s| s as usize >= data.len()) {
        return Err(Error::invalid(format!("seed {bad} out of range")));
    }

    let budget = params.max_evaluations.unwrap_or(usize::MAX);
    let mut rank = RankList::new(params.rank_capacity(graph.k()));
    let mut visited = Visited::new(data.len());

    for &s in seeds {
        if rank.stats.evaluations >= budget {
            break;
        }
        if visited.insert(s) {
            rank.stats.evaluations += 1;
            rank.insert(Neighbor::new(s, l2(query, data.row(s as usize))));
        }
    }

    let mut frontier = Vec::with_capacity(params.expand_width);
    let mut batch = Vec::new();
    while rank.stats.iterations < params.iterations {
        frontier.clear();
        for (pos, flag) in rank.expanded_flag.iter_mut().enumerate() {
            if frontier.len() == params.expand_width {
                break;
            }
            if !*flag {
                *flag = true;
                frontier.push(rank.entries[pos].id);
            }
        }
        if frontier.is_empty() {
            break;
        }
        rank.expanded.extend_from_slice(&frontier);

        batch.clear();
        let mut exhausted = false;
        'expand: for &node in &frontier {
            for nb in graph.neighbors(node as usize) {
                if rank.stats.evaluations >= budget {
                    exhausted = true;
                    break 'expand;
                }
                if visited.insert(nb.id) {
                    rank.stats.evaluations += 1;
                    batch.push(Neighbor::new(nb.id, l2(query, data.row(nb.id as usize))));
                }
            }
        }

        let mut added = 0;
        for &entry in &batch {
            added += rank.insert(entry) as usize;
        }
        rank.stats.iterations += 1;
        if added == 0 || exhausted {
            break;
        }
    }

    rank.truncate(params.result_size);
    Ok(rank)
}

/// Classic graph hill climbing: one expansion per round, always the best
/// unexpanded entry.
pub fn gnns_search(
    query: &[f32],
    graph: &KnnGraph,
    data: &VectorSet,
    seeds: &[u32],
    params: &SearchParams,
) -> Result<RankList> {
    let single = SearchParams {
        expand_width: 1,
        ..params.clone()
    };
    egnns_search(query, graph, data, seeds, &single)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::exact_graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, dim: usize, seed: u64) -> VectorSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorSet::new(dim, (0..n * dim).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    fn brute_force(q: &[f32], data: &VectorSet, r: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = (0..data.len())
            .map(|i| Neighbor::new(i as u32, l2(q, data.row(i))))
            .collect();
        all.sort_by(Neighbor::rank_cmp);
        all.truncate(r);
        all
    }

    #[test]
    fn random_seed_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut all = random_seeds(5, 5, &mut rng).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);

        let a = random_seeds(1000, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = random_seeds(1000, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);

        let many = random_seeds(10_000, 100, &mut rng).unwrap();
        let set: std::collections::HashSet<_> = many.iter().collect();
        assert_eq!(set.len(), 100);
        assert!(many.iter().all(|&i| i < 10_000));

        assert!(random_seeds(3, 4, &mut rng).is_err());
        assert!(random_seeds(3, 0, &mut rng).is_err());
    }

    #[test]
    fn seed_on_query_wins_immediately() {
        let data = uniform(300, 8, 2);
        let graph = exact_graph(&data, 6).unwrap();
        for iterations in [0, 1, 5] {
            let p = SearchParams {
                iterations,
                expand_width: 2,
                result_size: 3,
                ..Default::default()
            };
            let r = egnns_search(data.row(0), &graph, &data, &[17, 0, 250], &p).unwrap();
            assert_eq!(r.best(), Some(Neighbor::new(0, 0.0)));
            let r = gnns_search(data.row(0), &graph, &data, &[0], &p).unwrap();
            assert_eq!(r.best(), Some(Neighbor::new(0, 0.0)));
        }
    }

    #[test]
    fn exhaustive_seeding_equals_brute_force() {
        let data = uniform(400, 6, 3);
        let graph = exact_graph(&data, 5).unwrap();
        let all: Vec<u32> = (0..400).collect();
        let p = SearchParams {
            iterations: 0,
            expand_width: 1,
            result_size: 10,
            ..Default::default()
        };
        let queries = uniform(20, 6, 99);
        for q in queries.rows() {
            let r = egnns_search(q, &graph, &data, &all, &p).unwrap();
            assert_eq!(r.entries(), brute_force(q, &data, 10).as_slice());
            assert_eq!(r.stats().evaluations, 400);
        }
    }

    #[test]
    fn width_one_is_gnns() {
        let data = uniform(500, 8, 4);
        let graph = exact_graph(&data, 8).unwrap();
        let p = SearchParams {
            iterations: 30,
            expand_width: 1,
            result_size: 5,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for q in uniform(10, 8, 5).rows() {
            let seeds = random_seeds(500, 4, &mut rng).unwrap();
            let a = egnns_search(q, &graph, &data, &seeds, &p).unwrap();
            let b = gnns_search(
                q,
                &graph,
                &data,
                &seeds,
                &SearchParams {
                    expand_width: 7,
                    ..p.clone()
                },
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn work_bounds_and_monotone_best() {
        let data = uniform(800, 8, 6);
        let graph = exact_graph(&data, 10).unwrap();
        let q = uniform(1, 8, 7);
        let seeds = random_seeds(800, 8, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut prev = f32::INFINITY;
        for t in 0..10 {
            let p = SearchParams {
                iterations: t,
                expand_width: 3,
                result_size: 1,
                ..Default::default()
            };
            let r = egnns_search(q.row(0), &graph, &data, &seeds, &p).unwrap();
            let stats = r.stats();
            assert!(stats.iterations <= t);
            assert!(stats.evaluations <= seeds.len() + stats.iterations * 3 * graph.k());
            assert!(r.best().unwrap().distance <= prev);
            prev = r.best().unwrap().distance;
            // each expanded id is distinct
            let set: std::collections::HashSet<_> = r.expanded().iter().collect();
            assert_eq!(set.len(), r.expanded().len());
        }
    }

    #[test]
    fn evaluation_budget_is_respected() {
        let data = uniform(800, 8, 6);
        let graph = exact_graph(&data, 10).unwrap();
        let seeds: Vec<u32> = (0..20).collect();
        for budget in [1, 5, 20, 37, 150] {
            let p = SearchParams {
                iterations: 50,
                max_evaluations: Some(budget),
                ..Default::default()
            };
            let r = egnns_search(data.row(500), &graph, &data, &seeds, &p).unwrap();
            assert!(r.stats().evaluations <= budget);
        }
    }

    #[test]
    fn search_contract_errors() {
        let data = uniform(50, 4, 1);
        let graph = exact_graph(&data, 4).unwrap();
        let p = SearchParams::default();
        assert!(egnns_search(data.row(0), &graph, &data, &[], &p).is_err());
        assert!(egnns_search(&[0.0; 3], &graph, &data, &[1], &p).is_err());
        assert!(egnns_search(data.row(0), &graph, &data, &[50], &p).is_err());
        let zero = SearchParams {
            expand_width: 0,
            ..p.clone()
        };
        assert!(egnns_search(data.row(0), &graph, &data, &[1], &zero).is_err());
    }

    #[test]
    fn rank_list_is_sorted_and_unique() {
        let data = uniform(1000, 8, 8);
        let graph = exact_graph(&data, 10).unwrap();
        let p = SearchParams {
            result_size: 50,
            ..Default::default()
        };
        let seeds = random_seeds(1000, 16, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let r = egnns_search(uniform(1, 8, 1).row(0), &graph, &data, &seeds, &p).unwrap();
        assert!(r.len() <= 50);
        for w in r.entries().windows(2) {
            assert_eq!(w[0].rank_cmp(&w[1]), Ordering::Less);
        }
    }
}
