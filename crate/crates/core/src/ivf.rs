//! Inverted index over composed RVQ codes, used to pick hill-climbing seeds.
//!
//! The leading two stage codes of a vector form its key `c1 * K2 + c2`. At
//! query time the squared distance from `q` to a key's representative
//! `w1[c1] + w2[c2]` is
//!
//! ```text
//! |q|² - 2 q·w1 - 2 q·w2 + |w1|² + 2 w1·w2 + |w2|²
//! ```
//!
//! and every term is a table lookup: `q·w` comes from [`QueryTables`], the
//! rest from the per-model [`CrossTermTable`]. Ranking is cascaded: first-stage
//! words are ordered by `|w1|² - 2 q·w1` and only keys whose first code
//! survives get a full distance.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{dot, VectorSet};
use crate::fileio::{put_u32, put_u64, read_all, to_u32, write_atomic, ByteReader};
use crate::graph::KnnGraph;
use crate::rvq::{encode_prefix, RvqCode, RvqModel};
use crate::search::{egnns_search, random_seeds, RankList, SearchParams};
use crate::{Error, Result};

const INDEX_MAGIC: &[u8; 4] = b"RVQI";
const INDEX_VERSION: u32 = 1;

/// Leading model stages that make up an indexing key.
pub const INDEX_STAGES: usize = 2;

/// Mixed-radix key of the first `stage_sizes.len()` entries of `code`.
pub fn compose_key(code: &[u32], stage_sizes: &[usize]) -> Result<u64> {
    if code.len() < stage_sizes.len() {
        return Err(Error::invalid(format!(
            "code has {} stages, key needs {}",
            code.len(),
            stage_sizes.len()
        )));
    }
    let mut key = 0u64;
    for (stage, (&c, &size)) in code.iter().zip(stage_sizes).enumerate() {
        if c as usize >= size {
            return Err(Error::invalid(format!(
                "stage {stage}: index {c} out of range for {size} words"
            )));
        }
        key = key
            .checked_mul(size as u64)
            .and_then(|k| k.checked_add(c as u64))
            .ok_or_else(|| Error::invalid("key space exceeds 64 bits"))?;
    }
    Ok(key)
}

/// Inverse of [`compose_key`].
pub fn decompose_key(mut key: u64, stage_sizes: &[usize]) -> Vec<u32> {
    let mut code = vec![0u32; stage_sizes.len()];
    for (slot, &size) in code.iter_mut().zip(stage_sizes).rev() {
        *slot = (key % size as u64) as u32;
        key /= size as u64;
    }
    code
}

/// Key → ascending vector IDs, non-empty lists only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvertedIndex {
    vector_count: usize,
    stage_sizes: Vec<usize>,
    lists: BTreeMap<u64, Vec<u32>>,
}

impl InvertedIndex {
    pub fn stage_sizes(&self) -> &[usize] {
        &self.stage_sizes
    }

    pub fn vector_count(&self) -> usize {
        self.vector_count
    }

    /// Number of non-empty lists.
    pub fn key_count(&self) -> usize {
        self.lists.len()
    }

    pub fn list(&self, key: u64) -> &[u32] {
        self.lists.get(&key).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[u32])> {
        self.lists.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn max_list_len(&self) -> usize {
        self.lists.values().map(Vec::len).max().unwrap_or(0)
    }

    pub fn memory_bytes(&self) -> usize {
        self.lists.values().map(|l| 4 * l.len() + 12).sum()
    }

    /// Non-empty keys whose first code is `c1` (two-stage indexes).
    fn keys_with_first(&self, c1: u32) -> impl Iterator<Item = u64> + '_ {
        let span = self.stage_sizes[1..].iter().product::<usize>() as u64;
        let start = c1 as u64 * span;
        self.lists.range(start..start + span).map(|(&k, _)| k)
    }

    /// Checks that the lists partition `0..vector_count` and that every
    /// key fits the key space.
    pub fn validate(&self) -> Result<()> {
        let space: u128 = self.stage_sizes.iter().map(|&s| s as u128).product();
        let mut seen = vec![false; self.vector_count];
        for (&key, list) in &self.lists {
            if key as u128 >= space {
                return Err(Error::invalid(format!(
                    "key {key} outside key space {space}"
                )));
            }
            if list.is_empty() {
                return Err(Error::invalid(format!("key {key} has an empty list")));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "key {key}: ids not strictly ascending"
                )));
            }
            for &id in list {
                match seen.get_mut(id as usize) {
                    Some(s) if !*s => *s = true,
                    Some(_) => return Err(Error::invalid(format!("id {id} listed twice"))),
                    None => return Err(Error::invalid(format!("id {id} out of range"))),
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("id {missing} is in no list")));
        }
        Ok(())
    }
}

/// Groups vector IDs by the key of their code. Vector `i` has `codes[i]`.
pub fn build_index(codes: &[RvqCode], stage_sizes: &[usize]) -> Result<InvertedIndex> {
    if stage_sizes.is_empty() || stage_sizes.contains(&0) {
        return Err(Error::invalid("index stage sizes must be positive"));
    }
    to_u32(codes.len(), "vector count")?;
    let mut lists: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    if let Some(first) = codes.first() {
        if let Some(bad) = codes.iter().position(|c| c.len() != first.len()) {
            return Err(Error::invalid(format!(
                "code {bad} has {} stages, code 0 has {}",
                codes[bad].len(),
                first.len()
            )));
        }
    }
    for (id, code) in codes.iter().enumerate() {
        let key = compose_key(code.as_slice(), stage_sizes)?;
        lists.entry(key).or_default().push(id as u32);
    }
    Ok(InvertedIndex {
        vector_count: codes.len(),
        stage_sizes: stage_sizes.to_vec(),
        lists,
    })
}

/// Encodes every row of `data` with the model's indexing stages and builds
/// the index.
pub fn index_dataset(data: &VectorSet, model: &RvqModel) -> Result<InvertedIndex> {
    let stages = model.stages().len().min(INDEX_STAGES);
    if !data.is_empty() && data.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: data.dim(),
        });
    }
    let rows: Vec<&[f32]> = data.rows().take(data.len()).collect();
    let codes = rows
        .par_iter()
        .map(|v| encode_prefix(v, model, stages))
        .collect::<Result<Vec<_>>>()?;
    build_index(&codes, &model.stage_sizes()[..stages])
}

/// Per-query inner products with every word of the two indexing stages.
#[derive(Debug, Clone)]
pub struct QueryTables {
    query_norm: f32,
    products: [Vec<f32>; 2],
}

impl QueryTables {
    pub fn new(query: &[f32], model: &RvqModel) -> Result<Self> {
        check_two_stages(model)?;
        if query.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                found: query.len(),
            });
        }
        let table = |s: usize| model.stages()[s].words().map(|w| dot(query, w)).collect();
        Ok(Self {
            query_norm: dot(query, query),
            products: [table(0), table(1)],
        })
    }

    /// `q·q`.
    pub fn query_norm(&self) -> f32 {
        self.query_norm
    }

    /// `q·w` for every word of indexing stage `stage` (0 or 1).
    pub fn products(&self, stage: usize) -> &[f32] {
        &self.products[stage]
    }
}

/// Query-independent terms: `w1·w2` for every word pair and `|w|²` per word.
#[derive(Debug, Clone)]
pub struct CrossTermTable {
    second_size: usize,
    cross: Vec<f32>,
    norms: [Vec<f32>; 2],
}

impl CrossTermTable {
    pub fn new(model: &RvqModel) -> Result<Self> {
        check_two_stages(model)?;
        let (first, second) = (&model.stages()[0], &model.stages()[1]);
        let cross = first
            .words()
            .flat_map(|a| second.words().map(move |b| dot(a, b)))
            .collect();
        let norms = |s: usize| model.stages()[s].words().map(|w| dot(w, w)).collect();
        Ok(Self {
            second_size: second.size(),
            cross,
            norms: [norms(0), norms(1)],
        })
    }

    #[inline]
    pub fn cross(&self, c1: u32, c2: u32) -> f32 {
        self.cross[c1 as usize * self.second_size + c2 as usize]
    }

    pub fn norms(&self, stage: usize) -> &[f32] {
        &self.norms[stage]
    }

    pub fn sizes(&self) -> (usize, usize) {
        (self.norms[0].len(), self.norms[1].len())
    }
}

fn check_two_stages(model: &RvqModel) -> Result<()> {
    if model.stages().len() < INDEX_STAGES {
        return Err(Error::invalid(format!(
            "key distances need at least {INDEX_STAGES} stages, model has {}",
            model.stages().len()
        )));
    }
    Ok(())
}

/// `|w1|² - 2 q·w1`: the part of the key distance owned by the first code.
#[inline]
fn first_order_score(qt: &QueryTables, ct: &CrossTermTable, c1: u32) -> f64 {
    ct.norms[0][c1 as usize] as f64 - 2.0 * qt.products[0][c1 as usize] as f64
}

/// Squared distance from the query to `w1[c1] + w2[c2]`, from lookups only.
#[inline]
pub fn key_distance(qt: &QueryTables, ct: &CrossTermTable, c1: u32, c2: u32) -> f32 {
    let c2u = c2 as usize;
    let second =
        ct.norms[1][c2u] as f64 - 2.0 * qt.products[1][c2u] as f64 + 2.0 * ct.cross(c1, c2) as f64;
    (qt.query_norm as f64 + first_order_score(qt, ct, c1) + second) as f32
}

/// Budget knobs for seed selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedBudget {
    /// First-stage words kept after the first-order ranking.
    pub l1_keep: usize,
    /// Inverted lists visited.
    pub keys_probed: usize,
    /// Seeds handed to the graph search.
    pub max_seeds: usize,
}

impl Default for SeedBudget {
    fn default() -> Self {
        Self {
            l1_keep: 64,
            keys_probed: 256,
            max_seeds: 64,
        }
    }
}

impl SeedBudget {
    pub fn validate(&self) -> Result<()> {
        if self.l1_keep < 1 || self.keys_probed < 1 || self.max_seeds < 1 {
            return Err(Error::invalid("seed budget values must be at least 1"));
        }
        Ok(())
    }
}

/// A key with its distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedKey {
    pub key: u64,
    pub distance: f32,
}

/// Two-level key ranking.
///
/// Keeps the `l1_keep` first-stage words with the best first-order score,
/// scores every non-empty key under them with [`key_distance`], and returns
/// up to `keys_probed` keys ascending by `(distance, key)`.
pub fn cascade_shortlist(
    qt: &QueryTables,
    ct: &CrossTermTable,
    index: &InvertedIndex,
    budget: &SeedBudget,
) -> Result<Vec<RankedKey>> {
    budget.validate()?;
    let (k1, k2) = ct.sizes();
    if index.stage_sizes() != [k1, k2] {
        return Err(Error::invalid(format!(
            "index stage sizes {:?} do not match the model's {:?}",
            index.stage_sizes(),
            [k1, k2]
        )));
    }

    let mut first: Vec<(f64, u32)> = (0..k1 as u32)
        .map(|c1| (first_order_score(qt, ct, c1), c1))
        .collect();
    let keep = budget.l1_keep.min(k1);
    if keep < k1 {
        first.select_nth_unstable_by(keep - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        first.truncate(keep);
    }

    let mut ranked: Vec<RankedKey> = Vec::new();
    for &(_, c1) in &first {
        for key in index.keys_with_first(c1) {
            let c2 = (key % k2 as u64) as u32;
            ranked.push(RankedKey {
                key,
                distance: key_distance(qt, ct, c1, c2),
            });
        }
    }
    let order =
        |a: &RankedKey, b: &RankedKey| a.distance.total_cmp(&b.distance).then(a.key.cmp(&b.key));
    if ranked.len() > budget.keys_probed {
        ranked.select_nth_unstable_by(budget.keys_probed - 1, order);
        ranked.truncate(budget.keys_probed);
    }
    ranked.sort_unstable_by(order);
    Ok(ranked)
}

/// Concatenates the lists of `keys` in rank order, capped at `max_seeds`.
pub fn collect_seeds(keys: &[RankedKey], index: &InvertedIndex, budget: &SeedBudget) -> Vec<u32> {
    let mut seeds = Vec::with_capacity(budget.max_seeds);
    for rk in keys {
        let list = index.list(rk.key);
        let room = budget.max_seeds - seeds.len();
        seeds.extend_from_slice(&list[..list.len().min(room)]);
        if seeds.len() == budget.max_seeds {
            break;
        }
    }
    seeds
}

/// Everything needed to answer queries with index-seeded E-GNNS.
#[derive(Debug)]
pub struct IvfSearcher<'a> {
    model: &'a RvqModel,
    cross: CrossTermTable,
    index: &'a InvertedIndex,
    graph: &'a KnnGraph,
    data: &'a VectorSet,
}

impl<'a> IvfSearcher<'a> {
    pub fn new(
        model: &'a RvqModel,
        index: &'a InvertedIndex,
        graph: &'a KnnGraph,
        data: &'a VectorSet,
    ) -> Result<Self> {
        if model.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                found: model.dim(),
            });
        }
        if index.vector_count() != data.len() || graph.len() != data.len() {
            return Err(Error::invalid(format!(
                "index ({}) and graph ({}) must cover the {} data vectors",
                index.vector_count(),
                graph.len(),
                data.len()
            )));
        }
        Ok(Self {
            model,
            cross: CrossTermTable::new(model)?,
            index,
            graph,
            data,
        })
    }

    pub fn cross_terms(&self) -> &CrossTermTable {
        &self.cross
    }

    /// Seeds for `query`, nearest keys first. Empty when every probed list
    /// is empty.
    pub fn seeds(&self, query: &[f32], budget: &SeedBudget) -> Result<Vec<u32>> {
        let qt = QueryTables::new(query, self.model)?;
        let keys = cascade_shortlist(&qt, &self.cross, self.index, budget)?;
        Ok(collect_seeds(&keys, self.index, budget))
    }

    /// Index-seeded E-GNNS. Falls back to `params.seed_count` random seeds
    /// drawn from `rng` when the index yields none.
    pub fn search<R: Rng + ?Sized>(
        &self,
        query: &[f32],
        budget: &SeedBudget,
        params: &SearchParams,
        rng: &mut R,
    ) -> Result<RankList> {
        let mut seeds = self.seeds(query, budget)?;
        if seeds.is_empty() {
            let count = params.seed_count.clamp(1, self.data.len().max(1));
            seeds = random_seeds(self.data.len(), count, rng)?;
        }
        egnns_search(query, self.graph, self.data, &seeds, params)
    }
}

/// Index file: `RVQI`, version, n, stage count, stage sizes, then per
/// non-empty key `(key: u64, len: u32, ids: u32 × len)` in ascending key order.
pub fn write_index(index: &InvertedIndex, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    put_u32(&mut out, INDEX_VERSION);
    put_u32(&mut out, to_u32(index.vector_count, "vector count")?);
    put_u32(&mut out, to_u32(index.stage_sizes.len(), "stage count")?);
    for &s in &index.stage_sizes {
        put_u32(&mut out, to_u32(s, "stage size")?);
    }
    for (&key, list) in &index.lists {
        put_u64(&mut out, key);
        put_u32(&mut out, to_u32(list.len(), "list length")?);
        for &id in list {
            put_u32(&mut out, id);
        }
    }
    write_atomic(path.as_ref(), &out)
}

pub fn read_index(path: impl AsRef<Path>) -> Result<InvertedIndex> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut r = ByteReader::new(path, &bytes);
    r.header(INDEX_MAGIC, INDEX_VERSION)?;
    let vector_count = r.u32("vector count")? as usize;
    let stages = r.u32("stage count")? as usize;
    let stage_sizes = (0..stages)
        .map(|_| r.u32("stage size").map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut lists = BTreeMap::new();
    while !r.is_empty() {
        let at = r.offset();
        let key = r.u64("key")?;
        let len = r.u32("list length")? as usize;
        let body = r.take(len.saturating_mul(4), "list ids")?;
        let ids = body
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if lists.insert(key, ids).is_some() {
            return Err(r.error(at, format!("key {key} appears twice")));
        }
    }
    let index = InvertedIndex {
        vector_count,
        stage_sizes,
        lists,
    };
    if index.stage_sizes.is_empty() && vector_count > 0 {
        return Err(Error::format(path, 12, "no indexing stages"));
    }
    index
        .validate()
        .map_err(|e| Error::format(path, 0, e.to_string()))?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::l2;
    use crate::rvq::{decode, encode, train, Codebook};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, dim: usize, seed: u64) -> VectorSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorSet::new(dim, (0..n * dim).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    fn model(data: &VectorSet, sizes: &[usize], seed: u64) -> RvqModel {
        train(data, sizes, 10, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn key_composition() {
        assert_eq!(compose_key(&[0, 0], &[256, 256]).unwrap(), 0);
        assert_eq!(compose_key(&[1, 0], &[256, 256]).unwrap(), 256);
        assert_eq!(
            compose_key(&[3, 7, 9], &[4, 8, 16]).unwrap(),
            (3 * 8 + 7) * 16 + 9
        );
        assert!(compose_key(&[256, 0], &[256, 256]).is_err());
        assert!(compose_key(&[1], &[256, 256]).is_err());
        // only the leading stages enter the key
        assert_eq!(compose_key(&[2, 5, 99], &[4, 8]).unwrap(), 21);

        let mut seen = vec![false; 1 << 16];
        for c1 in 0..256u32 {
            for c2 in 0..256u32 {
                let key = compose_key(&[c1, c2], &[256, 256]).unwrap();
                assert!(!seen[key as usize]);
                seen[key as usize] = true;
                assert_eq!(decompose_key(key, &[256, 256]), vec![c1, c2]);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn index_grouping() {
        let one = build_index(&[RvqCode(vec![3, 1])], &[4, 4]).unwrap();
        assert_eq!(one.iter().collect::<Vec<_>>(), vec![(13, &[0u32][..])]);

        let same = vec![RvqCode(vec![2, 2]); 9];
        let idx = build_index(&same, &[4, 4]).unwrap();
        assert_eq!(idx.key_count(), 1);
        assert_eq!(idx.list(10), &(0..9).collect::<Vec<u32>>()[..]);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let codes: Vec<RvqCode> = (0..500)
            .map(|_| RvqCode(vec![rng.random_range(0..8), rng.random_range(0..5)]))
            .collect();
        let idx = build_index(&codes, &[8, 5]).unwrap();
        idx.validate().unwrap();
        // naive grouping: scan all ids per key
        for key in 0..40u64 {
            let expected: Vec<u32> = (0..500u32)
                .filter(|&i| compose_key(codes[i as usize].as_slice(), &[8, 5]).unwrap() == key)
                .collect();
            assert_eq!(idx.list(key), expected.as_slice());
        }

        assert!(build_index(&[RvqCode(vec![1, 1]), RvqCode(vec![1])], &[4, 4]).is_err());
    }

    #[test]
    fn key_distance_matches_direct_computation() {
        let data = uniform(2000, 16, 3);
        let m = model(&data, &[32, 32], 4);
        let ct = CrossTermTable::new(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let q: Vec<f32> = (0..16).map(|_| rng.random_range(-1.0..2.0)).collect();
            let (c1, c2) = (rng.random_range(0..32u32), rng.random_range(0..32u32));
            let qt = QueryTables::new(&q, &m).unwrap();
            let rep = decode(&RvqCode(vec![c1, c2]), &m).unwrap();
            let direct = l2(&q, &rep);
            let table = key_distance(&qt, &ct, c1, c2);
            assert!(
                (table - direct).abs() <= 1e-4 * (1.0 + direct),
                "{table} vs {direct}"
            );

            // q on the representative itself
            let qt = QueryTables::new(&rep, &m).unwrap();
            assert!(key_distance(&qt, &ct, c1, c2).abs() <= 1e-4);

            // zero query gives the representative's squared norm
            let qt = QueryTables::new(&[0.0; 16], &m).unwrap();
            let norm = dot(&rep, &rep);
            assert!((key_distance(&qt, &ct, c1, c2) - norm).abs() <= 1e-4 * (1.0 + norm));
        }
    }

    #[test]
    fn unpruned_shortlist_is_exhaustive_ranking() {
        let data = uniform(3000, 8, 6);
        let m = model(&data, &[16, 16], 7);
        let idx = index_dataset(&data, &m).unwrap();
        let ct = CrossTermTable::new(&m).unwrap();
        let budget = SeedBudget {
            l1_keep: 16,
            keys_probed: idx.key_count(),
            max_seeds: 10,
        };
        for q in uniform(20, 8, 8).rows() {
            let qt = QueryTables::new(q, &m).unwrap();
            let got = cascade_shortlist(&qt, &ct, &idx, &budget).unwrap();
            let mut all: Vec<RankedKey> = idx
                .iter()
                .map(|(key, _)| {
                    let c = decompose_key(key, &[16, 16]);
                    RankedKey {
                        key,
                        distance: key_distance(&qt, &ct, c[0], c[1]),
                    }
                })
                .collect();
            all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.key.cmp(&b.key)));
            assert_eq!(got, all);
        }

        // a query sitting on a key representative ranks that key first
        let (key, _) = idx.iter().nth(5).unwrap();
        let rep = decode(&RvqCode(decompose_key(key, &[16, 16])), &m).unwrap();
        let qt = QueryTables::new(&rep, &m).unwrap();
        assert_eq!(
            cascade_shortlist(&qt, &ct, &idx, &budget).unwrap()[0].key,
            key
        );
    }

    #[test]
    fn pruned_shortlist_usually_keeps_the_best_key() {
        let data = uniform(20_000, 16, 11);
        let m = model(&data, &[256, 256], 12);
        let idx = index_dataset(&data, &m).unwrap();
        let ct = CrossTermTable::new(&m).unwrap();
        let pruned = SeedBudget {
            l1_keep: 32,
            keys_probed: 1,
            max_seeds: 1,
        };
        let open = SeedBudget {
            l1_keep: 256,
            keys_probed: 1,
            max_seeds: 1,
        };
        let queries = uniform(200, 16, 13);
        let agree = queries
            .rows()
            .filter(|q| {
                let qt = QueryTables::new(q, &m).unwrap();
                let a = cascade_shortlist(&qt, &ct, &idx, &pruned).unwrap();
                let b = cascade_shortlist(&qt, &ct, &idx, &open).unwrap();
                a[0] == b[0]
            })
            .count();
        assert!(agree >= 190, "{agree}/200");
    }

    #[test]
    fn seeds_follow_key_order() {
        let codes = vec![
            RvqCode(vec![0, 1]),
            RvqCode(vec![1, 0]),
            RvqCode(vec![0, 1]),
            RvqCode(vec![1, 1]),
        ];
        let idx = build_index(&codes, &[2, 2]).unwrap();
        let b = |max_seeds| SeedBudget {
            l1_keep: 2,
            keys_probed: 4,
            max_seeds,
        };
        let keys = [RankedKey {
            key: 1,
            distance: 0.0,
        }];
        assert_eq!(collect_seeds(&keys, &idx, &b(10)), vec![0, 2]);
        let keys = [
            RankedKey {
                key: 2,
                distance: 0.0,
            },
            RankedKey {
                key: 3,
                distance: 1.0,
            },
        ];
        assert_eq!(collect_seeds(&keys, &idx, &b(1)), vec![1]);
        assert_eq!(collect_seeds(&keys, &idx, &b(5)), vec![1, 3]);
        let missing = [RankedKey {
            key: 0,
            distance: 0.0,
        }];
        assert!(collect_seeds(&missing, &idx, &b(5)).is_empty());
    }

    #[test]
    fn searcher_finds_dataset_rows() {
        let data = uniform(3000, 8, 9);
        let m = model(&data, &[32, 32], 10);
        let idx = index_dataset(&data, &m).unwrap();
        let graph = crate::graph::exact_graph(&data, 10).unwrap();
        let s = IvfSearcher::new(&m, &idx, &graph, &data).unwrap();
        let budget = SeedBudget {
            l1_keep: 8,
            keys_probed: 16,
            max_seeds: 32,
        };
        let params = SearchParams {
            iterations: 8,
            expand_width: 4,
            result_size: 1,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hits = 0;
        for i in (0..3000).step_by(30) {
            let r = s.search(data.row(i), &budget, &params, &mut rng).unwrap();
            hits += (r.best().unwrap().id == i as u32) as usize;
        }
        assert!(hits >= 98, "{hits}/100");
    }

    #[test]
    fn index_records_reencoded_keys() {
        let data = uniform(1500, 6, 11);
        let m = model(&data, &[8, 8, 4], 12);
        let idx = index_dataset(&data, &m).unwrap();
        idx.validate().unwrap();
        assert_eq!(idx.stage_sizes(), &[8, 8]);
        for (key, ids) in idx.iter() {
            for &id in ids {
                let code = encode(data.row(id as usize), &m).unwrap();
                assert_eq!(compose_key(code.as_slice(), &[8, 8]).unwrap(), key);
            }
        }
    }

    #[test]
    fn one_stage_model_cannot_drive_key_distances() {
        let m = RvqModel::new(vec![Codebook::new(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap()]).unwrap();
        assert!(CrossTermTable::new(&m).is_err());
        assert!(QueryTables::new(&[0.0, 0.0], &m).is_err());
    }

    #[test]
    fn index_file_round_trip() {
        let data = uniform(700, 4, 13);
        let m = model(&data, &[8, 8], 14);
        let idx = index_dataset(&data, &m).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.rvqi");
        write_index(&idx, &path).unwrap();
        assert_eq!(read_index(&path).unwrap(), idx);

        let empty = index_dataset(&VectorSet::empty(4), &m).unwrap();
        write_index(&empty, &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 24);
        assert_eq!(read_index(&path).unwrap().key_count(), 0);

        std::fs::write(&path, b"RVQI\x01\0\0\0\x05\0\0\0").unwrap();
        assert!(read_index(&path).is_err());
    }
}
