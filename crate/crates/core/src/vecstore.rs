//! Exact flat inner-product index.
//!
//! Vectors live in one contiguous row-major `f32` buffer. Every query scores
//! every row, accumulating in `f64`, and keeps the `k` best under the order
//! (score descending, insertion order ascending).
//!
//! File layout, little-endian:
//!
//! ```text
//! "FRIX" | version u16 | dim u32 | count u64 | count*dim f32 | count * (len u32, utf8) | crc32 u32
//! ```
//! The CRC covers every byte before it.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingVector;

pub const MAGIC: &[u8; 4] = b"FRIX";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8;

/// Rows scored per block in batch search; sized to stay L2-resident.
const BLOCK_BYTES: usize = 128 * 1024;
/// Queries sharing one pass over a row block.
const QUERY_BLOCK: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VectorStoreError {
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("dimension mismatch: index has {expected}, vector has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("index file is truncated")]
    TruncatedFile,
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<String>,
    positions: HashMap<String, usize>,
    data: Vec<f32>,
}

/// Candidate ordered so that "greater" means "ranks earlier".
#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    row: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.row.cmp(&self.row))
    }
}

/// Bounded selection of the `k` best candidates. Rows must be offered in
/// increasing order, which lets equal scores lose to the incumbent.
struct TopK {
    k: usize,
    // Min-heap on rank order: the top is the current worst kept candidate.
    heap: BinaryHeap<std::cmp::Reverse<Candidate>>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, score: f64, row: usize) {
        if self.heap.len() < self.k {
            self.heap.push(std::cmp::Reverse(Candidate { score, row }));
        } else if let Some(worst) = self.heap.peek() {
            if score > worst.0.score {
                self.heap.pop();
                self.heap.push(std::cmp::Reverse(Candidate { score, row }));
            }
        }
    }

    fn into_sorted(self) -> Vec<Candidate> {
        let mut out: Vec<Candidate> = self.heap.into_iter().map(|r| r.0).collect();
        out.sort_unstable_by(|a, b| b.cmp(a));
        out
    }
}

/// Inner product with eight independent `f64` accumulators.
#[inline]
fn dot(query: &[f64], row: &[f32]) -> f64 {
    let mut acc = [0.0f64; 8];
    let q_chunks = query.chunks_exact(8);
    let r_chunks = row.chunks_exact(8);
    let (q_tail, r_tail) = (q_chunks.remainder(), r_chunks.remainder());
    for (q, r) in q_chunks.zip(r_chunks) {
        for j in 0..8 {
            acc[j] += q[j] * f64::from(r[j]);
        }
    }
    let mut sum = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (q, r) in q_tail.iter().zip(r_tail) {
        sum += q * f64::from(*r);
    }
    sum
}

impl VectorIndex {
    pub fn new(dim: usize) -> Result<Self, VectorStoreError> {
        if dim == 0 {
            return Err(VectorStoreError::ZeroDimension);
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            positions: HashMap::new(),
            data: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids in insertion order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Appends a vector, rounding it to `f32` storage.
    pub fn add(&mut self, id: &str, v: &EmbeddingVector) -> Result<(), VectorStoreError> {
        let row: Vec<f32> = v.values().iter().map(|&x| x as f32).collect();
        self.add_row(id, &row)
    }

    pub fn add_row(&mut self, id: &str, row: &[f32]) -> Result<(), VectorStoreError> {
        if row.len() != self.dim {
            return Err(VectorStoreError::DimensionMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        if self.positions.contains_key(id) {
            return Err(VectorStoreError::DuplicateId(id.to_string()));
        }
        self.positions.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.data.extend_from_slice(row);
        Ok(())
    }

    fn check_query(&self, q: &[f64], k: usize) -> Result<(), VectorStoreError> {
        if k == 0 {
            return Err(VectorStoreError::InvalidK);
        }
        if q.len() != self.dim {
            return Err(VectorStoreError::DimensionMismatch {
                expected: self.dim,
                got: q.len(),
            });
        }
        Ok(())
    }

    fn hits(&self, ranked: Vec<Candidate>) -> Vec<SearchHit> {
        ranked
            .into_iter()
            .enumerate()
            .map(|(i, c)| SearchHit {
                id: self.ids[c.row].clone(),
                score: c.score,
                rank: i + 1,
            })
            .collect()
    }

    /// Exact top-`k` by inner product. Returns `min(k, len)` hits; equal
    /// scores rank by insertion order.
    pub fn search_top_k(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<SearchHit>, VectorStoreError> {
        let q = query.values();
        self.check_query(q, k)?;
        let n = self.len();
        if k >= n {
            let mut all: Vec<Candidate> = (0..n)
                .map(|row| Candidate {
                    score: dot(q, self.row(row)),
                    row,
                })
                .collect();
            all.sort_unstable_by(|a, b| b.cmp(a));
            return Ok(self.hits(all));
        }
        let mut top = TopK::new(k);
        for (row, chunk) in self.data.chunks_exact(self.dim).enumerate() {
            top.offer(dot(q, chunk), row);
        }
        Ok(self.hits(top.into_sorted()))
    }

    /// Top-`k` for many queries, scoring blocks of rows against blocks of
    /// queries so each row block is read from cache once per query block.
    pub fn search_batch(
        &self,
        queries: &[EmbeddingVector],
        k: usize,
    ) -> Result<Vec<Vec<SearchHit>>, VectorStoreError> {
        for q in queries {
            self.check_query(q.values(), k)?;
        }
        let rows_per_block = (BLOCK_BYTES / (self.dim * 4)).max(1);
        let mut results = Vec::with_capacity(queries.len());
        for q_block in queries.chunks(QUERY_BLOCK) {
            let mut tops: Vec<TopK> = q_block
                .iter()
                .map(|_| TopK::new(k.min(self.len())))
                .collect();
            for (b, rows) in self.data.chunks(rows_per_block * self.dim).enumerate() {
                let first = b * rows_per_block;
                for (q, top) in q_block.iter().zip(tops.iter_mut()) {
                    for (offset, row) in rows.chunks_exact(self.dim).enumerate() {
                        top.offer(dot(q.values(), row), first + offset);
                    }
                }
            }
            results.extend(tops.into_iter().map(|t| self.hits(t.into_sorted())));
        }
        Ok(results)
    }

    /// Serialized size in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.data.len() * 4 + self.ids.iter().map(|s| 4 + s.len()).sum::<usize>() + 4
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.encoded_len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for id in &self.ids {
            buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    /// Writes the index and returns the number of bytes written.
    pub fn save<W: Write>(&self, mut sink: W) -> Result<u64, VectorStoreError> {
        let bytes = self.to_bytes();
        sink.write_all(&bytes)
            .and_then(|_| sink.flush())
            .map_err(|e| VectorStoreError::Io(e.to_string()))?;
        Ok(bytes.len() as u64)
    }

    pub fn load<R: Read>(mut source: R) -> Result<Self, VectorStoreError> {
        let mut bytes = Vec::new();
        source
            .read_to_end(&mut bytes)
            .map_err(|e: io::Error| VectorStoreError::Io(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VectorStoreError> {
        let corrupt = |m: &str| VectorStoreError::CorruptIndex(m.to_string());
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut cur = Cursor { bytes, pos: 0 };
        cur.take(4)?;
        let version = u16::from_le_bytes(cur.array()?);
        if version != FORMAT_VERSION {
            return Err(VectorStoreError::CorruptIndex(format!(
                "unsupported format version {version}"
            )));
        }
        let dim = u32::from_le_bytes(cur.array()?) as usize;
        let count = u64::from_le_bytes(cur.array()?);
        if dim == 0 {
            return Err(corrupt("zero dimension"));
        }
        let floats = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(dim))
            .ok_or_else(|| corrupt("vector count overflows"))?;
        let matrix_bytes = floats
            .checked_mul(4)
            .ok_or_else(|| corrupt("vector count overflows"))?;
        let raw = cur.take(matrix_bytes)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();

        let count = count as usize;
        let mut ids = Vec::with_capacity(count);
        let mut positions = HashMap::with_capacity(count);
        for i in 0..count {
            let len = u32::from_le_bytes(cur.array()?) as usize;
            let id = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| corrupt("id is not valid UTF-8"))?
                .to_string();
            if positions.insert(id.clone(), i).is_some() {
                return Err(VectorStoreError::CorruptIndex(format!(
                    "duplicate id {id:?}"
                )));
            }
            ids.push(id);
        }
        let body_end = cur.pos;
        let stored_crc = u32::from_le_bytes(cur.array()?);
        if cur.pos != bytes.len() {
            return Err(corrupt("trailing bytes after checksum"));
        }
        if crc32fast::hash(&bytes[..body_end]) != stored_crc {
            return Err(corrupt("checksum mismatch"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(corrupt("non-finite vector component"));
        }
        Ok(Self {
            dim,
            ids,
            positions,
            data,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VectorStoreError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(VectorStoreError::TruncatedFile)?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], VectorStoreError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}
