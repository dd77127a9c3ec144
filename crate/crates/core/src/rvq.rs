//! Residue vector quantization.
//!
//! A model is an ordered list of codebooks. Stage `i` is trained with k-means
//! on what remains of each training vector after subtracting its nearest
//! words from stages `0..i`, and a vector is encoded greedily the same way.
//! Decoding sums the selected words.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{l2, VectorSet};
use crate::fileio::{put_f32, put_u32, read_all, to_u32, write_atomic, ByteReader};
use crate::{Error, Result};

const MODEL_MAGIC: &[u8; 4] = b"RVQM";
const MODEL_VERSION: u32 = 1;

/// Lloyd iterations per stage unless overridden.
pub const DEFAULT_ITERS: usize = 25;

/// `size()` words of `dim()` components, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dim: usize,
    words: Vec<f32>,
}

impl Codebook {
    pub fn new(dim: usize, words: Vec<f32>) -> Result<Self> {
        if dim == 0 || words.is_empty() || !words.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "codebook of {} scalars cannot hold words of dimension {dim}",
                words.len()
            )));
        }
        if words.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("codebook contains a non-finite value"));
        }
        Ok(Self { dim, words })
    }

    pub fn size(&self) -> usize {
        self.words.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn word(&self, i: usize) -> &[f32] {
        &self.words[i * self.dim..(i + 1) * self.dim]
    }

    pub fn words(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.words.chunks_exact(self.dim)
    }

    /// Index and squared distance of the word nearest `v`; ties go to the
    /// lower index.
    pub fn nearest(&self, v: &[f32]) -> (u32, f32) {
        let mut best = (0u32, f32::INFINITY);
        for (i, w) in self.words().enumerate() {
            let d = l2(v, w);
            if d < best.1 {
                best = (i as u32, d);
            }
        }
        best
    }
}

/// Per-stage word indices of one encoded vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RvqCode(pub Vec<u32>);

impl RvqCode {
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RvqModel {
    stages: Vec<Codebook>,
}

impl RvqModel {
    pub fn new(stages: Vec<Codebook>) -> Result<Self> {
        let Some(first) = stages.first() else {
            return Err(Error::invalid("a model needs at least one stage"));
        };
        if let Some(bad) = stages.iter().find(|s| s.dim != first.dim) {
            return Err(Error::DimensionMismatch {
                expected: first.dim,
                found: bad.dim,
            });
        }
        Ok(Self { stages })
    }

    pub fn dim(&self) -> usize {
        self.stages[0].dim
    }

    pub fn stages(&self) -> &[Codebook] {
        &self.stages
    }

    pub fn stage_sizes(&self) -> Vec<usize> {
        self.stages.iter().map(Codebook::size).collect()
    }

    pub fn memory_bytes(&self) -> usize {
        self.stages.iter().map(|s| s.words.len() * 4).sum()
    }
}

/// Result of one k-means run.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Nearest word of every input vector under the returned codebook.
    pub assignments: Vec<u32>,
    /// Sum of squared errors after each assignment pass, last one final.
    pub sse_history: Vec<f64>,
}

/// Lloyd k-means with D²-weighted seeding; see [`kmeans_fit`].
pub fn kmeans<R: Rng + ?Sized>(
    data: &VectorSet,
    k: usize,
    iters: usize,
    rng: &mut R,
) -> Result<Codebook> {
    Ok(kmeans_fit(data, k, iters, rng)?.codebook)
}

/// Lloyd k-means. Seeds with k-means++; a centroid left without members is
/// moved onto the point with the largest current quantization error.
pub fn kmeans_fit<R: Rng + ?Sized>(
    data: &VectorSet,
    k: usize,
    iters: usize,
    rng: &mut R,
) -> Result<KMeansFit> {
    let n = data.len();
    if k < 1 || n < k {
        return Err(Error::invalid(format!(
            "k-means needs 1 <= k <= n (k={k}, n={n})"
        )));
    }
    let dim = data.dim();
    let mut centroids = seed_plus_plus(data, k, rng);

    let mut assignments = vec![u32::MAX; n];
    let mut errors = vec![0.0f32; n];
    let mut sse_history = Vec::with_capacity(iters + 1);

    for iter in 0..iters {
        let changed = assign(data, &centroids, &mut assignments, &mut errors);
        sse_history.push(errors.iter().map(|&e| e as f64).sum());
        if iter > 0 && !changed {
            break;
        }

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c as usize] += 1;
            let acc = &mut sums[c as usize * dim..(c as usize + 1) * dim];
            for (a, &v) in acc.iter_mut().zip(data.row(i)) {
                *a += v as f64;
            }
        }

        let mut reseeded: Vec<usize> = Vec::new();
        for c in 0..k {
            let dst = &mut centroids[c * dim..(c + 1) * dim];
            if counts[c] > 0 {
                for (d, &s) in dst.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *d = (s / counts[c] as f64) as f32;
                }
                continue;
            }
            let worst = (0..n)
                .filter(|i| !reseeded.contains(i))
                .max_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(b.cmp(&a)));
            if let Some(p) = worst {
                reseeded.push(p);
                dst.copy_from_slice(data.row(p));
            }
        }
    }
    assign(data, &centroids, &mut assignments, &mut errors);
    sse_history.push(errors.iter().map(|&e| e as f64).sum());

    Ok(KMeansFit {
        codebook: Codebook::new(dim, centroids)?,
        assignments,
        sse_history,
    })
}

/// Nearest-centroid pass; returns whether any assignment changed.
fn assign(
    data: &VectorSet,
    centroids: &[f32],
    assignments: &mut [u32],
    errors: &mut [f32],
) -> bool {
    let dim = data.dim();
    let nearest = |x: &[f32]| {
        let mut best = (0u32, f32::INFINITY);
        for (c, w) in centroids.chunks_exact(dim).enumerate() {
            let d = l2(x, w);
            if d < best.1 {
                best = (c as u32, d);
            }
        }
        best
    };
    assignments
        .par_iter_mut()
        .zip(errors.par_iter_mut())
        .enumerate()
        .map(|(i, (a, e))| {
            let (c, d) = nearest(data.row(i));
            *e = d;
            let changed = *a != c;
            *a = c;
            changed
        })
        .reduce(|| false, |x, y| x || y)
}

fn seed_plus_plus<R: Rng + ?Sized>(data: &VectorSet, k: usize, rng: &mut R) -> Vec<f32> {
    let n = data.len();
    let dim = data.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    let mut chosen = vec![false; n];
    let mut min_d2 = vec![f64::INFINITY; n];

    let mut pick = rng.random_range(0..n);
    for _ in 0..k {
        chosen[pick] = true;
        let c = data.row(pick);
        centroids.extend_from_slice(c);
        for (i, m) in min_d2.iter_mut().enumerate() {
            *m = m.min(l2(data.row(i), c) as f64);
        }
        let total: f64 = min_d2.iter().sum();
        pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut p = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    p = i;
                    break;
                }
                target -= w;
            }
            // rounding can land on a zero-weight tail; fall back to the last positive
            if min_d2[p] == 0.0 {
                p = min_d2.iter().rposition(|&w| w > 0.0).unwrap();
            }
            p
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            if free.is_empty() {
                0
            } else {
                free[rng.random_range(0..free.len())]
            }
        };
    }
    centroids
}

#[inline]
fn subtract_word(residual: &mut [f32], word: &[f32]) {
    for (r, &w) in residual.iter_mut().zip(word) {
        *r -= w;
    }
}

/// Trains one codebook per entry of `stage_sizes`, each on the residues
/// left by the stages before it.
pub fn train<R: Rng + ?Sized>(
    data: &VectorSet,
    stage_sizes: &[usize],
    iters: usize,
    rng: &mut R,
) -> Result<RvqModel> {
    Ok(train_with_codes(data, stage_sizes, iters, rng)?.0)
}

/// [`train`], also returning each training vector's code as assigned in the
/// final k-means pass of every stage.
pub fn train_with_codes<R: Rng + ?Sized>(
    data: &VectorSet,
    stage_sizes: &[usize],
    iters: usize,
    rng: &mut R,
) -> Result<(RvqModel, Vec<RvqCode>)> {
    if stage_sizes.is_empty() {
        return Err(Error::invalid("at least one stage size is required"));
    }
    let max = *stage_sizes.iter().max().unwrap();
    if data.len() < max {
        return Err(Error::invalid(format!(
            "stage size {max} exceeds the {} training vectors",
            data.len()
        )));
    }
    let dim = data.dim();
    let mut residues = data.as_slice().to_vec();
    let mut codes = vec![RvqCode(Vec::with_capacity(stage_sizes.len())); data.len()];
    let mut stages = Vec::with_capacity(stage_sizes.len());
    for &k in stage_sizes {
        let current = VectorSet::new(dim, residues)?;
        let fit = kmeans_fit(&current, k, iters, rng)?;
        residues = current.as_slice().to_vec();
        for (i, (r, &c)) in residues
            .chunks_exact_mut(dim)
            .zip(&fit.assignments)
            .enumerate()
        {
            subtract_word(r, fit.codebook.word(c as usize));
            codes[i].0.push(c);
        }
        stages.push(fit.codebook);
    }
    Ok((RvqModel::new(stages)?, codes))
}

/// Greedy stage-by-stage encoding.
pub fn encode(v: &[f32], model: &RvqModel) -> Result<RvqCode> {
    encode_prefix(v, model, model.stages.len())
}

/// Encodes with only the first `stages` codebooks.
pub fn encode_prefix(v: &[f32], model: &RvqModel, stages: usize) -> Result<RvqCode> {
    if v.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: v.len(),
        });
    }
    let mut residual = v.to_vec();
    let mut code = Vec::with_capacity(stages);
    for book in model.stages.iter().take(stages) {
        let (c, _) = book.nearest(&residual);
        subtract_word(&mut residual, book.word(c as usize));
        code.push(c);
    }
    Ok(RvqCode(code))
}

/// Sums the selected words of the stages the code covers.
pub fn decode(code: &RvqCode, model: &RvqModel) -> Result<Vec<f32>> {
    if code.len() > model.stages.len() {
        return Err(Error::invalid(format!(
            "code has {} stages, model has {}",
            code.len(),
            model.stages.len()
        )));
    }
    let mut out = vec![0.0f32; model.dim()];
    for (stage, (&c, book)) in code.0.iter().zip(&model.stages).enumerate() {
        if c as usize >= book.size() {
            return Err(Error::invalid(format!(
                "stage {stage}: index {c} out of range for {} words",
                book.size()
            )));
        }
        for (o, &w) in out.iter_mut().zip(book.word(c as usize)) {
            *o += w;
        }
    }
    Ok(out)
}

/// Mean squared reconstruction error over `data` using all stages.
pub fn reconstruction_mse(data: &VectorSet, model: &RvqModel) -> Result<f64> {
    reconstruction_mse_prefix(data, model, model.stages.len())
}

/// Mean squared reconstruction error using the first `stages` stages.
pub fn reconstruction_mse_prefix(data: &VectorSet, model: &RvqModel, stages: usize) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    if data.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: data.dim(),
        });
    }
    let total: f64 = data
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|v| {
            let code = encode_prefix(v, model, stages).expect("dimension checked");
            let approx = decode(&code, model).expect("indices come from the model");
            l2(v, &approx) as f64
        })
        .sum();
    Ok(total / data.len() as f64)
}

/// Model file: `RVQM`, version, m, D, then per stage K and K·D floats.
pub fn write_model(model: &RvqModel, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut out, MODEL_VERSION);
    put_u32(&mut out, to_u32(model.stages.len(), "stage count")?);
    put_u32(&mut out, to_u32(model.dim(), "dimension")?);
    for book in &model.stages {
        put_u32(&mut out, to_u32(book.size(), "codebook size")?);
        for &w in &book.words {
            put_f32(&mut out, w);
        }
    }
    write_atomic(path.as_ref(), &out)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<RvqModel> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut r = ByteReader::new(path, &bytes);
    r.header(MODEL_MAGIC, MODEL_VERSION)?;
    let m = r.u32("stage count")? as usize;
    let dim = r.u32("dimension")? as usize;
    let mut stages = Vec::with_capacity(m);
    for _ in 0..m {
        let at = r.offset();
        let k = r.u32("codebook size")? as usize;
        let body = r.take(k.saturating_mul(dim).saturating_mul(4), "codebook words")?;
        let words = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        stages.push(Codebook::new(dim, words).map_err(|e| r.error(at, e.to_string()))?);
    }
    r.finish()?;
    RvqModel::new(stages).map_err(|e| Error::format(path, 8, e.to_string()))
}
