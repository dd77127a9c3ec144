//! Vector storage, distance kernels and the `fvecs`/`bvecs`/`ivecs` file formats.
//!
//! Every record in the three formats is a 4-byte little-endian dimension
//! followed by that many components (4-byte float, 1-byte unsigned or 4-byte
//! signed integer). Components are widened to `f32` on load.

use std::collections::HashSet;
use std::path::Path;

use crate::fileio::{read_all, write_atomic, ByteReader};
use crate::{Error, Result};

/// Squared Euclidean distance, accumulated left to right in `f32`.
pub fn squared_l2(a: &[f32], b: &[f32]) -> Result<f32> {
    check_dims(a, b)?;
    Ok(l2(a, b))
}

/// Dot product, accumulated left to right in `f32`.
pub fn inner_product(a: &[f32], b: &[f32]) -> Result<f32> {
    check_dims(a, b)?;
    Ok(dot(a, b))
}

fn check_dims(a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

// Unchecked kernels for hot loops where dimensions agree by construction.
#[inline]
pub(crate) fn l2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// A dense row-major matrix of `len()` vectors of `dim()` components.
///
/// A set with zero vectors may report `dim() == 0` when its dimensionality
/// is unknown (for example, after reading an empty file).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    dim: usize,
    data: Vec<f32>,
}

impl VectorSet {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 && !data.is_empty() {
            return Err(Error::invalid("dimension must be positive"));
        }
        if dim > 0 && !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} scalars do not divide into rows of {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite component in row {}",
                pos / dim
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Copies the listed rows into a new set, in the given order.
    pub fn select(&self, ids: &[u32]) -> Self {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            data.extend_from_slice(self.row(id as usize));
        }
        Self {
            dim: self.dim,
            data,
        }
    }

    /// Heap bytes held by the vector data.
    pub fn memory_bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<f32>()
    }

    pub(crate) fn check_query(&self, q: &[f32]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        Ok(())
    }
}

/// Component encoding of a vector file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecFormat {
    /// `.fvecs`: 32-bit floats.
    F32,
    /// `.bvecs`: unsigned bytes.
    U8,
    /// `.ivecs`: 32-bit signed integers.
    I32,
}

impl VecFormat {
    /// Guesses the format from a `.fvecs`, `.bvecs` or `.ivecs` extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "fvecs" => Some(VecFormat::F32),
            "bvecs" => Some(VecFormat::U8),
            "ivecs" => Some(VecFormat::I32),
            _ => None,
        }
    }

    fn component_size(self) -> usize {
        match self {
            VecFormat::U8 => 1,
            VecFormat::F32 | VecFormat::I32 => 4,
        }
    }
}

/// Walks `[dim][components]` records, checking that all share one dimension.
/// Returns the common dimension (0 for an empty file).
fn for_each_record<'a>(
    reader: &mut ByteReader<'a>,
    component_size: usize,
    mut f: impl FnMut(&'a [u8]),
) -> Result<usize> {
    let mut dim: Option<usize> = None;
    while !reader.is_empty() {
        let start = reader.offset();
        let d = reader.i32("record dimension")?;
        if d <= 0 {
            return Err(reader.error(start, format!("non-positive record dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(reader.error(
                    start,
                    format!("inconsistent dimension: record has {d}, expected {expected}"),
                ))
            }
            Some(_) => {}
        }
        f(reader.take(d * component_size, "record body")?);
    }
    Ok(dim.unwrap_or(0))
}

pub fn read_vectors(path: impl AsRef<Path>, format: VecFormat) -> Result<VectorSet> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut reader = ByteReader::new(path, &bytes);
    let mut data = Vec::new();
    let dim = for_each_record(&mut reader, format.component_size(), |body| match format {
        VecFormat::F32 => data.extend(
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
        ),
        VecFormat::U8 => data.extend(body.iter().map(|&b| b as f32)),
        VecFormat::I32 => data.extend(
            body.chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f32),
        ),
    })?;
    VectorSet::new(dim, data).map_err(|e| Error::format(path, 0, e.to_string()))
}

/// Writes `set` in the given format. Integer formats require every component
/// to be an exactly representable integer of the target width.
pub fn write_vectors(set: &VectorSet, path: impl AsRef<Path>, format: VecFormat) -> Result<()> {
    let path = path.as_ref();
    let record = 4 + set.dim() * format.component_size();
    let mut out = Vec::with_capacity(set.len() * record);
    for (i, row) in set.rows().enumerate() {
        out.extend_from_slice(&(set.dim() as i32).to_le_bytes());
        for &v in row {
            match format {
                VecFormat::F32 => out.extend_from_slice(&v.to_le_bytes()),
                VecFormat::U8 => {
                    if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                        return Err(Error::invalid(format!(
                            "row {i}: component {v} is not representable as u8"
                        )));
                    }
                    out.push(v as u8);
                }
                VecFormat::I32 => {
                    if v.fract() != 0.0 || !(-2_147_483_648.0..2_147_483_648.0).contains(&v) {
                        return Err(Error::invalid(format!(
                            "row {i}: component {v} is not representable as i32"
                        )));
                    }
                    out.extend_from_slice(&(v as i32).to_le_bytes());
                }
            }
        }
    }
    write_atomic(path, &out)
}

/// Per-query lists of true nearest neighbor IDs, nearest first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    neighbors: Vec<Vec<u32>>,
}

impl GroundTruth {
    pub fn new(neighbors: Vec<Vec<u32>>) -> Result<Self> {
        for (q, list) in neighbors.iter().enumerate() {
            let mut seen = HashSet::with_capacity(list.len());
            if let Some(dup) = list.iter().find(|id| !seen.insert(**id)) {
                return Err(Error::invalid(format!(
                    "query {q}: duplicate neighbor id {dup}"
                )));
            }
        }
        Ok(Self { neighbors })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn query(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.neighbors.iter().map(Vec::as_slice)
    }

    /// Checks that every ID addresses a reference set of `n` vectors.
    pub fn validate_ids(&self, n: usize) -> Result<()> {
        for (q, list) in self.neighbors.iter().enumerate() {
            if let Some(bad) = list.iter().find(|&&id| id as usize >= n) {
                return Err(Error::invalid(format!(
                    "query {q}: neighbor id {bad} out of range for {n} vectors"
                )));
            }
        }
        Ok(())
    }
}

/// Loads an `.ivecs` ground-truth file.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut reader = ByteReader::new(path, &bytes);
    let mut lists = Vec::new();
    let mut negative = None;
    for_each_record(&mut reader, 4, |body| {
        let list: Vec<u32> = body
            .chunks_exact(4)
            .map(|c| {
                let v = i32::from_le_bytes(c.try_into().unwrap());
                if v < 0 {
                    negative.get_or_insert((lists.len(), v));
                }
                v as u32
            })
            .collect();
        lists.push(list);
    })?;
    if let Some((q, v)) = negative {
        return Err(Error::format(
            path,
            0,
            format!("query {q}: negative id {v}"),
        ));
    }
    GroundTruth::new(lists).map_err(|e| Error::format(path, 0, e.to_string()))
}

pub fn write_ground_truth(truth: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    for list in &truth.neighbors {
        if list.is_empty() {
            return Err(Error::invalid("cannot store an empty ground-truth list"));
        }
        out.extend_from_slice(&(list.len() as i32).to_le_bytes());
        for &id in list {
            let id =
                i32::try_from(id).map_err(|_| Error::invalid(format!("id {id} exceeds i32")))?;
            out.extend_from_slice(&id.to_le_bytes());
        }
    }
    write_atomic(path.as_ref(), &out)
}
