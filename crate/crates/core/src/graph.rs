//! Offline kNN-graph construction by repeated two-means bisection.
//!
//! Each round bisects the reference set recursively until every cluster holds
//! at most `cluster_cap` vectors, then compares every pair inside each cluster
//! and offers the pair to both neighbor lists. Rounds draw fresh random
//! initializations, so clusters differ from round to round and the lists
//! improve as rounds accumulate.

use std::cmp::Ordering;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{l2, VectorSet};
use crate::fileio::{put_f32, put_u32, read_all, to_u32, write_atomic, ByteReader};
use crate::{Error, Result};

const GRAPH_MAGIC: &[u8; 4] = b"KNNG";
const GRAPH_VERSION: u32 = 1;
/// Lloyd iterations allowed per bisection.
const TWO_MEANS_MAX_ITERS: usize = 20;
/// Clusters whose pair distances are computed together in parallel mode.
const PARALLEL_BATCH: usize = 2048;
/// Id written in place of a missing neighbor when a list is shorter than k.
const EMPTY_SLOT: u32 = u32::MAX;

/// One entry of a neighbor list; distances are squared Euclidean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub distance: f32,
}

impl Neighbor {
    pub fn new(id: u32, distance: f32) -> Self {
        Self { id, distance }
    }

    /// Total order used by every ranked list: distance, then id.
    #[inline]
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

/// Offers `(candidate, distance)` to a sorted list bounded at `k` entries.
///
/// Returns `true` when the list changed. A candidate already in the list is
/// ignored, which makes re-evaluating a pair harmless.
pub fn update_neighbor_list(
    list: &mut Vec<Neighbor>,
    k: usize,
    candidate: u32,
    distance: f32,
) -> bool {
    let entry = Neighbor::new(candidate, distance);
    if list.len() >= k {
        match list.last() {
            Some(worst) if entry.rank_cmp(worst) == Ordering::Less => {}
            _ => return false,
        }
    }
    if list.iter().any(|n| n.id == candidate) {
        return false;
    }
    let pos = list.partition_point(|n| n.rank_cmp(&entry) == Ordering::Less);
    list.insert(pos, entry);
    list.truncate(k);
    true
}

/// Directed kNN graph: for each node, up to `k` neighbors nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    k: usize,
    lists: Vec<Vec<Neighbor>>,
}

impl KnnGraph {
    pub fn with_capacity(n: usize, k: usize) -> Self {
        Self {
            k,
            lists: (0..n).map(|_| Vec::with_capacity(k)).collect(),
        }
    }

    /// Wraps prebuilt lists after checking the graph invariants.
    pub fn from_lists(k: usize, lists: Vec<Vec<Neighbor>>) -> Result<Self> {
        let g = Self { k, lists };
        g.validate()?;
        Ok(g)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    #[inline]
    pub fn neighbors(&self, node: usize) -> &[Neighbor] {
        &self.lists[node]
    }

    pub fn lists(&self) -> &[Vec<Neighbor>] {
        &self.lists
    }

    pub fn memory_bytes(&self) -> usize {
        self.lists.len() * self.k * std::mem::size_of::<Neighbor>()
    }

    /// Offers the pair to both endpoint lists.
    fn offer_pair(&mut self, a: u32, b: u32, distance: f32) {
        let k = self.k;
        update_neighbor_list(&mut self.lists[a as usize], k, b, distance);
        update_neighbor_list(&mut self.lists[b as usize], k, a, distance);
    }

    /// Checks ids in range, no self loops, no duplicates, sorted, at most k.
    pub fn validate(&self) -> Result<()> {
        let n = self.lists.len();
        for (node, list) in self.lists.iter().enumerate() {
            let bad = |what: &str| Err(Error::invalid(format!("node {node}: {what}")));
            if list.len() > self.k {
                return bad("list longer than k");
            }
            for (pos, nb) in list.iter().enumerate() {
                if nb.id as usize >= n {
                    return bad("neighbor id out of range");
                }
                if nb.id as usize == node {
                    return bad("list contains the node itself");
                }
                if !nb.distance.is_finite() {
                    return bad("non-finite distance");
                }
                if list[..pos].iter().any(|p| p.id == nb.id) {
                    return bad("duplicate neighbor");
                }
                if pos > 0 && list[pos - 1].rank_cmp(nb) != Ordering::Less {
                    return bad("list not sorted by (distance, id)");
                }
            }
        }
        Ok(())
    }
}

/// Construction parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildParams {
    /// Neighbors kept per node.
    pub k: usize,
    /// Independent partition rounds.
    pub rounds: usize,
    /// Maximum cluster size at which bisection stops.
    pub cluster_cap: usize,
    pub rng_seed: u64,
    /// Worker threads for pair-distance evaluation: 1 runs inline, 0 uses
    /// the global rayon pool. The output does not depend on this value.
    pub threads: usize,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            k: 30,
            rounds: 10,
            cluster_cap: 50,
            rng_seed: 0x5EED_2016,
            threads: 1,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.rounds < 1 {
            return Err(Error::invalid("rounds must be at least 1"));
        }
        if self.cluster_cap < 2 {
            return Err(Error::invalid("cluster cap must be at least 2"));
        }
        Ok(())
    }
}

/// Splits `members` into two non-empty groups with Lloyd-style two-means.
///
/// Centroids start at two distinct member vectors drawn uniformly. If every
/// member vector is identical, the members are dealt alternately to the two
/// sides instead.
pub fn two_means<R: Rng + ?Sized>(
    data: &VectorSet,
    members: &[u32],
    rng: &mut R,
) -> Result<(Vec<u32>, Vec<u32>)> {
    let m = members.len();
    if m < 2 {
        return Err(Error::invalid(format!(
            "two-means needs at least 2 members, got {m}"
        )));
    }
    let row = |i: usize| data.row(members[i] as usize);

    let a = rng.random_range(0..m);
    let mut b = rng.random_range(0..m - 1);
    if b >= a {
        b += 1;
    }
    if row(a) == row(b) {
        let differing: Vec<usize> = (0..m).filter(|&i| row(i) != row(a)).collect();
        if differing.is_empty() {
            return Ok(split_alternating(members));
        }
        b = differing[rng.random_range(0..differing.len())];
    }

    let dim = data.dim();
    let mut centroids = [row(a).to_vec(), row(b).to_vec()];
    // false = left, true = right
    let mut side = vec![false; m];
    for iter in 0..TWO_MEANS_MAX_ITERS {
        let mut changed = false;
        for (i, s) in side.iter_mut().enumerate() {
            let x = row(i);
            let right = l2(x, &centroids[1]) < l2(x, &centroids[0]);
            changed |= right != *s;
            *s = right;
        }
        if iter > 0 && !changed {
            break;
        }

        let right_count = side.iter().filter(|&&s| s).count();
        if right_count == 0 || right_count == m {
            // every point sits on one side; hand the farthest one to the other
            let full = right_count == m;
            let keep = &centroids[full as usize];
            let far = (0..m)
                .max_by(|&x, &y| {
                    l2(row(x), keep)
                        .total_cmp(&l2(row(y), keep))
                        .then(y.cmp(&x))
                })
                .unwrap();
            side[far] = !full;
        }

        let mut sums = [vec![0.0f64; dim], vec![0.0f64; dim]];
        let mut counts = [0usize; 2];
        for (i, &s) in side.iter().enumerate() {
            counts[s as usize] += 1;
            for (acc, &v) in sums[s as usize].iter_mut().zip(row(i)) {
                *acc += v as f64;
            }
        }
        for c in 0..2 {
            for (dst, &acc) in centroids[c].iter_mut().zip(&sums[c]) {
                *dst = (acc / counts[c] as f64) as f32;
            }
        }
    }

    let mut left = Vec::new();
    let mut right = Vec::new();
    for (i, &s) in side.iter().enumerate() {
        if s {
            right.push(members[i]);
        } else {
            left.push(members[i]);
        }
    }
    Ok((left, right))
}

fn split_alternating(members: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let left = members.iter().step_by(2).copied().collect();
    let right = members.iter().skip(1).step_by(2).copied().collect();
    (left, right)
}

/// Recursively bisects the whole set until every cluster has at most
/// `cluster_cap` members. Clusters are disjoint and cover every id.
pub fn partition<R: Rng + ?Sized>(
    data: &VectorSet,
    cluster_cap: usize,
    rng: &mut R,
) -> Result<Vec<Vec<u32>>> {
    if cluster_cap < 2 {
        return Err(Error::invalid("cluster cap must be at least 2"));
    }
    if data.is_empty() {
        return Err(Error::invalid("cannot partition an empty set"));
    }
    let n = to_u32(data.len(), "vector count")?;
    let mut done = Vec::new();
    let mut pending = vec![(0..n).collect::<Vec<u32>>()];
    while let Some(members) = pending.pop() {
        if members.len() <= cluster_cap {
            done.push(members);
            continue;
        }
        let (left, right) = two_means(data, &members, rng)?;
        pending.push(right);
        pending.push(left);
    }
    Ok(done)
}

/// Distances of every `(a, b)` pair with `a < b` positions in `cluster`,
/// in row-major upper-triangle order.
fn cluster_pair_distances(data: &VectorSet, cluster: &[u32]) -> Vec<f32> {
    let m = cluster.len();
    let mut out = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for (a, &i) in cluster.iter().enumerate() {
        let xi = data.row(i as usize);
        for &j in &cluster[a + 1..] {
            out.push(l2(xi, data.row(j as usize)));
        }
    }
    out
}

fn apply_cluster(graph: &mut KnnGraph, cluster: &[u32], distances: &[f32]) {
    let mut d = distances.iter();
    for (a, &i) in cluster.iter().enumerate() {
        for &j in &cluster[a + 1..] {
            graph.offer_pair(i, j, *d.next().unwrap());
        }
    }
}

fn refine(graph: &mut KnnGraph, data: &VectorSet, clusters: &[Vec<u32>], parallel: bool) {
    if !parallel {
        for cluster in clusters {
            let d = cluster_pair_distances(data, cluster);
            apply_cluster(graph, cluster, &d);
        }
        return;
    }
    // distances in parallel, updates in cluster order: same result as inline
    for batch in clusters.chunks(PARALLEL_BATCH) {
        let dists: Vec<Vec<f32>> = batch
            .par_iter()
            .map(|c| cluster_pair_distances(data, c))
            .collect();
        for (cluster, d) in batch.iter().zip(&dists) {
            apply_cluster(graph, cluster, d);
        }
    }
}

/// Completes any list left shorter than k with an exhaustive scan. Only
/// nodes that never shared a cluster with k others reach this path.
fn fill_short_lists(graph: &mut KnnGraph, data: &VectorSet) {
    let k = graph.k;
    for node in 0..graph.len() {
        if graph.lists[node].len() >= k {
            continue;
        }
        let x = data.row(node);
        for other in 0..data.len() {
            if other != node {
                let d = l2(x, data.row(other));
                update_neighbor_list(&mut graph.lists[node], k, other as u32, d);
            }
        }
    }
}

/// Runs `rounds` rounds of partition-and-compare starting from an empty
/// graph. Deterministic for a given `(data, params)`.
pub fn build_graph(data: &VectorSet, params: &BuildParams) -> Result<KnnGraph> {
    params.validate()?;
    let mut graph = KnnGraph::with_capacity(data.len(), params.k);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    refine_rounds(&mut graph, data, params, params.rounds, &mut rng)?;
    fill_short_lists(&mut graph, data);
    Ok(graph)
}

/// Like [`build_graph`], but hands back a snapshot after every round so the
/// effect of additional rounds can be inspected. Snapshots skip the final
/// short-list completion.
pub fn build_graph_rounds(data: &VectorSet, params: &BuildParams) -> Result<Vec<KnnGraph>> {
    params.validate()?;
    let mut graph = KnnGraph::with_capacity(data.len(), params.k);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut snapshots = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        refine_rounds(&mut graph, data, params, 1, &mut rng)?;
        snapshots.push(graph.clone());
    }
    Ok(snapshots)
}

fn refine_rounds(
    graph: &mut KnnGraph,
    data: &VectorSet,
    params: &BuildParams,
    rounds: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if data.len() <= params.k {
        return Err(Error::invalid(format!(
            "graph scale k={} needs more than {} vectors",
            params.k,
            data.len()
        )));
    }
    to_u32(data.len(), "vector count")?;
    let run = |graph: &mut KnnGraph, rng: &mut ChaCha8Rng| -> Result<()> {
        for _ in 0..rounds {
            let clusters = partition(data, params.cluster_cap, rng)?;
            refine(graph, data, &clusters, params.threads != 1);
        }
        Ok(())
    };
    if params.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(params.threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| run(graph, rng))
    } else {
        run(graph, rng)
    }
}

/// Exact kNN graph by exhaustive comparison.
pub fn exact_graph(data: &VectorSet, k: usize) -> Result<KnnGraph> {
    let n = data.len();
    if k < 1 || n <= k {
        return Err(Error::invalid(format!(
            "exact graph needs 1 <= k < n (k={k}, n={n})"
        )));
    }
    to_u32(n, "vector count")?;
    let lists = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = data.row(i);
            let mut all: Vec<Neighbor> = (0..n)
                .filter(|&j| j != i)
                .map(|j| Neighbor::new(j as u32, l2(x, data.row(j))))
                .collect();
            all.select_nth_unstable_by(k - 1, Neighbor::rank_cmp);
            all.truncate(k);
            all.sort_by(Neighbor::rank_cmp);
            all
        })
        .collect();
    Ok(KnnGraph { k, lists })
}

/// Mean overlap of each node's top-`at` list between `graph` and `exact`.
pub fn graph_recall(graph: &KnnGraph, exact: &KnnGraph, at: usize) -> Result<f64> {
    if graph.len() != exact.len() {
        return Err(Error::invalid(format!(
            "graph has {} nodes, reference has {}",
            graph.len(),
            exact.len()
        )));
    }
    if at < 1 || at > graph.k || at > exact.k {
        return Err(Error::invalid(format!(
            "recall depth {at} must lie in 1..={}",
            graph.k.min(exact.k)
        )));
    }
    if graph.is_empty() {
        return Ok(1.0);
    }
    let hits: usize = graph
        .lists
        .iter()
        .zip(&exact.lists)
        .map(|(g, e)| {
            let e = &e[..at.min(e.len())];
            g.iter()
                .take(at)
                .filter(|nb| e.iter().any(|t| t.id == nb.id))
                .count()
        })
        .sum();
    Ok(hits as f64 / (graph.len() * at) as f64)
}

/// Graph file: `KNNG`, version, n, k, then per node k `(id: i32, distance: f32)`
/// slots. Unused slots hold id -1.
pub fn write_graph(graph: &KnnGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::with_capacity(16 + graph.len() * graph.k * 8);
    out.extend_from_slice(GRAPH_MAGIC);
    put_u32(&mut out, GRAPH_VERSION);
    put_u32(&mut out, to_u32(graph.len(), "node count")?);
    put_u32(&mut out, to_u32(graph.k, "k")?);
    for list in &graph.lists {
        for slot in 0..graph.k {
            let nb = list
                .get(slot)
                .copied()
                .unwrap_or(Neighbor::new(EMPTY_SLOT, f32::INFINITY));
            put_u32(&mut out, nb.id);
            put_f32(&mut out, nb.distance);
        }
    }
    write_atomic(path.as_ref(), &out)
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<KnnGraph> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut r = ByteReader::new(path, &bytes);
    r.header(GRAPH_MAGIC, GRAPH_VERSION)?;
    let n = r.u32("node count")? as usize;
    let k = r.u32("k")? as usize;
    let mut lists = Vec::with_capacity(n);
    for _ in 0..n {
        let mut list = Vec::with_capacity(k);
        for _ in 0..k {
            let id = r.u32("neighbor id")?;
            let distance = r.f32("neighbor distance")?;
            if id != EMPTY_SLOT {
                list.push(Neighbor::new(id, distance));
            }
        }
        lists.push(list);
    }
    r.finish()?;
    KnnGraph::from_lists(k, lists).map_err(|e| Error::format(path, 16, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn uniform(n: usize, dim: usize, seed: u64) -> VectorSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorSet::new(dim, (0..n * dim).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn two_points_always_separate() {
        let data = VectorSet::from_rows(&[[0.0f32], [10.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (l, r) = two_means(&data, &[0, 1], &mut rng).unwrap();
        let mut sides = [l, r];
        sides.sort();
        assert_eq!(sides, [vec![0], vec![1]]);
    }

    #[test]
    fn two_means_recovers_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = rand_distr::Normal::new(0.0f32, 0.1).unwrap();
        let mut rows = Vec::new();
        for blob in 0..2 {
            for _ in 0..50 {
                let c = blob as f32 * 10.0;
                rows.push(vec![
                    c + rng.sample(normal),
                    rng.sample(normal),
                    rng.sample(normal),
                ]);
            }
        }
        let data = VectorSet::from_rows(&rows).unwrap();
        let members: Vec<u32> = (0..100).collect();
        let (l, r) = two_means(&data, &members, &mut rng).unwrap();
        let blob_of = |id: &u32| *id < 50;
        assert_eq!(l.len(), 50);
        assert!(l.iter().all(|i| blob_of(i) == blob_of(&l[0])));
        assert!(r.iter().all(|i| blob_of(i) == blob_of(&r[0])));
    }

    #[test]
    fn identical_vectors_split_evenly() {
        let data = VectorSet::from_rows(&[[1.0f32, 1.0]; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (l, r) = two_means(&data, &[0, 1, 2, 3], &mut rng).unwrap();
        assert_eq!(l, vec![0, 2]);
        assert_eq!(r, vec![1, 3]);
        assert!(two_means(&data, &[0], &mut rng).is_err());
    }

    #[test]
    fn partition_respects_cap_and_covers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let small = uniform(30, 4, 1);
        assert_eq!(partition(&small, 50, &mut rng).unwrap().len(), 1);
        let pair = uniform(2, 4, 1);
        assert_eq!(partition(&pair, 2, &mut rng).unwrap(), vec![vec![0, 1]]);

        let data = uniform(1000, 8, 2);
        let clusters = partition(&data, 50, &mut rng).unwrap();
        assert!(clusters.iter().all(|c| !c.is_empty() && c.len() <= 50));
        let mut all: Vec<u32> = clusters.concat();
        assert_eq!(all.len(), 1000);
        all.sort_unstable();
        assert!(all.iter().enumerate().all(|(i, &id)| i as u32 == id));
    }

    #[test]
    fn update_is_idempotent_and_evicts_worst() {
        let mut list = Vec::new();
        assert!(update_neighbor_list(&mut list, 3, 5, 2.0));
        assert!(!update_neighbor_list(&mut list, 3, 5, 2.0));
        assert_eq!(list, vec![Neighbor::new(5, 2.0)]);

        let mut full = vec![
            Neighbor::new(1, 0.5),
            Neighbor::new(4, 3.0),
            Neighbor::new(9, 4.0),
        ];
        assert!(update_neighbor_list(&mut full, 3, 2, 1.0));
        assert_eq!(full.iter().map(|n| n.id).collect::<Vec<_>>(), vec![1, 2, 4]);
        // equal distance, larger id than the worst: rejected
        assert!(!update_neighbor_list(&mut full, 3, 7, 3.0));
        assert!(update_neighbor_list(&mut full, 3, 3, 3.0));
        assert_eq!(full.last().unwrap().id, 3);
    }

    proptest! {
        #[test]
        fn update_matches_sort_and_truncate(
            k in 1usize..8,
            offers in prop::collection::vec((0u32..20, 0u8..6), 0..60),
        ) {
            let mut list = Vec::new();
            // an id keeps the distance of its first offer
            let mut first = std::collections::BTreeMap::new();
            for &(id, d) in &offers {
                let d = d as f32;
                let before = list.clone();
                let changed = update_neighbor_list(&mut list, k, id, d);
                prop_assert_eq!(changed, before != list);
                first.entry(id).or_insert(d);
            }
            // oracle: replay, since evicted ids may re-enter with a new distance
            let mut oracle: Vec<Neighbor> = Vec::new();
            for &(id, d) in &offers {
                let mut all = oracle.clone();
                if !all.iter().any(|n| n.id == id) {
                    all.push(Neighbor::new(id, d as f32));
                }
                all.sort_by(Neighbor::rank_cmp);
                all.truncate(k);
                oracle = all;
            }
            prop_assert_eq!(list, oracle);
        }
    }

    #[test]
    fn exact_graph_hand_checked() {
        let data = VectorSet::from_rows(&[[0.0f32], [1.0], [3.0]]).unwrap();
        let g = exact_graph(&data, 1).unwrap();
        let ids: Vec<u32> = g.lists().iter().map(|l| l[0].id).collect();
        assert_eq!(ids, vec![1, 0, 1]);

        let g = exact_graph(&data, 2).unwrap();
        assert_eq!(
            g.neighbors(0).iter().map(|n| n.id).collect::<Vec<_>>(),
            vec![1, 2]
        );
        assert!(exact_graph(&data, 3).is_err());
    }

    #[test]
    fn built_graph_is_close_to_exact() {
        let data = uniform(200, 8, 9);
        let params = BuildParams {
            k: 10,
            rounds: 10,
            cluster_cap: 50,
            ..Default::default()
        };
        let g = build_graph(&data, &params).unwrap();
        g.validate().unwrap();
        assert!(g.lists().iter().all(|l| l.len() == 10));
        let exact = exact_graph(&data, 10).unwrap();
        let recall = graph_recall(&g, &exact, 10).unwrap();
        assert!(recall >= 0.90, "recall {recall}");

        for (built, best) in g.lists().iter().zip(exact.lists()) {
            for (b, e) in built.iter().zip(best) {
                assert!(e.distance <= b.distance);
            }
        }
    }

    #[test]
    fn more_rounds_never_hurt() {
        let data = uniform(300, 8, 4);
        let params = BuildParams {
            k: 10,
            rounds: 10,
            cluster_cap: 30,
            ..Default::default()
        };
        let snaps = build_graph_rounds(&data, &params).unwrap();
        for pair in snaps.windows(2) {
            for (before, after) in pair[0].lists().iter().zip(pair[1].lists()) {
                assert!(after.len() >= before.len());
                for (a, b) in after.iter().zip(before) {
                    assert!(a.distance <= b.distance);
                }
            }
        }
        let exact = exact_graph(&data, 10).unwrap();
        let one = build_graph(
            &data,
            &BuildParams {
                rounds: 1,
                ..params.clone()
            },
        )
        .unwrap();
        let ten = build_graph(&data, &params).unwrap();
        assert!(graph_recall(&ten, &exact, 10).unwrap() >= graph_recall(&one, &exact, 10).unwrap());
    }

    #[test]
    fn identical_pair_lists_each_other_first() {
        let mut data = uniform(40, 4, 8).as_slice().to_vec();
        let first: Vec<f32> = data[..4].to_vec();
        data[4..8].copy_from_slice(&first);
        let data = VectorSet::new(4, data).unwrap();
        let params = BuildParams {
            k: 5,
            rounds: 1,
            cluster_cap: 40,
            ..Default::default()
        };
        let g = build_graph(&data, &params).unwrap();
        assert_eq!(g.neighbors(0)[0], Neighbor::new(1, 0.0));
        assert_eq!(g.neighbors(1)[0], Neighbor::new(0, 0.0));
    }

    #[test]
    fn build_is_deterministic_and_thread_independent() {
        let data = uniform(500, 6, 12);
        let params = BuildParams {
            k: 8,
            rounds: 3,
            cluster_cap: 40,
            ..Default::default()
        };
        let a = build_graph(&data, &params).unwrap();
        let b = build_graph(&data, &params).unwrap();
        let c = build_graph(
            &data,
            &BuildParams {
                threads: 4,
                ..params.clone()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn small_cap_still_fills_lists() {
        let data = uniform(60, 3, 2);
        let params = BuildParams {
            k: 10,
            rounds: 1,
            cluster_cap: 2,
            ..Default::default()
        };
        let g = build_graph(&data, &params).unwrap();
        assert!(g.lists().iter().all(|l| l.len() == 10));
        g.validate().unwrap();
    }

    #[test]
    fn build_rejects_bad_params() {
        let data = uniform(10, 2, 1);
        let p = |k, rounds, cap| BuildParams {
            k,
            rounds,
            cluster_cap: cap,
            ..Default::default()
        };
        assert!(build_graph(&data, &p(10, 1, 50)).is_err());
        assert!(build_graph(&data, &p(0, 1, 50)).is_err());
        assert!(build_graph(&data, &p(3, 0, 50)).is_err());
        assert!(build_graph(&data, &p(3, 1, 1)).is_err());
    }

    #[test]
    fn graph_recall_cases() {
        let data = uniform(50, 4, 3);
        let exact = exact_graph(&data, 5).unwrap();
        assert_eq!(graph_recall(&exact, &exact, 5).unwrap(), 1.0);

        let a = KnnGraph::from_lists(
            2,
            vec![
                vec![Neighbor::new(1, 1.0), Neighbor::new(2, 2.0)],
                vec![Neighbor::new(0, 1.0), Neighbor::new(2, 2.0)],
                vec![Neighbor::new(0, 1.0), Neighbor::new(1, 2.0)],
            ],
        )
        .unwrap();
        let b = KnnGraph::from_lists(
            2,
            vec![
                vec![Neighbor::new(1, 1.0), Neighbor::new(3, 2.0)],
                vec![Neighbor::new(3, 1.0), Neighbor::new(2, 2.0)],
                vec![Neighbor::new(3, 1.0), Neighbor::new(1, 2.0)],
            ],
        );
        // node 3 out of range for a 3-node graph
        assert!(b.is_err());

        let half = KnnGraph::from_lists(
            2,
            vec![
                vec![Neighbor::new(1, 1.0), Neighbor::new(3, 2.0)],
                vec![Neighbor::new(0, 1.0), Neighbor::new(3, 2.0)],
                vec![Neighbor::new(3, 1.0), Neighbor::new(1, 2.0)],
                vec![Neighbor::new(0, 1.0), Neighbor::new(1, 2.0)],
            ],
        )
        .unwrap();
        let other = KnnGraph::from_lists(
            2,
            vec![
                vec![Neighbor::new(1, 1.0), Neighbor::new(2, 2.0)],
                vec![Neighbor::new(2, 1.0), Neighbor::new(3, 2.0)],
                vec![Neighbor::new(0, 1.0), Neighbor::new(1, 2.0)],
                vec![Neighbor::new(2, 1.0), Neighbor::new(1, 2.0)],
            ],
        )
        .unwrap();
        assert_eq!(graph_recall(&half, &other, 2).unwrap(), 0.5);
        let disjoint = KnnGraph::from_lists(
            1,
            vec![
                vec![Neighbor::new(2, 1.0)],
                vec![Neighbor::new(2, 1.0)],
                vec![Neighbor::new(1, 1.0)],
            ],
        )
        .unwrap();
        let disjoint2 = KnnGraph::from_lists(
            1,
            vec![
                vec![Neighbor::new(1, 1.0)],
                vec![Neighbor::new(0, 1.0)],
                vec![Neighbor::new(0, 1.0)],
            ],
        )
        .unwrap();
        assert_eq!(graph_recall(&disjoint, &disjoint2, 1).unwrap(), 0.0);
        assert!(graph_recall(&a, &half, 1).is_err());
        assert!(graph_recall(&a, &a, 3).is_err());
    }

    #[test]
    fn graph_file_round_trip_and_corruption() {
        let data = uniform(40, 3, 6);
        let g = build_graph(
            &data,
            &BuildParams {
                k: 6,
                ..Default::default()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.knng");
        write_graph(&g, &path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, 16 + 40 * 6 * 8);
        assert_eq!(read_graph(&path).unwrap(), g);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_graph(&path), Err(Error::Format { .. })));
        std::fs::write(&path, b"NOPE\x01\0\0\0").unwrap();
        assert!(read_graph(&path).is_err());
    }
}
