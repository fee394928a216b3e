//! Dense row-major `f32` tensors and the `RTN1` binary container.
//!
//! Layout of a container:
//!
//! ```text
//! "RTN1" | dtype: u8 (0 = f32) | rank: u8 | rank x u32 LE dims | LE payload
//! ```
//!
//! A rank-0 container holds a single scalar.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 4] = b"RTN1";
pub const DTYPE_F32: u8 = 0;
pub const MAX_RANK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "dims {dims:?} need {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, 0.0)
    }

    pub fn full(dims: &[usize], value: f32) -> Self {
        let n = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            dims: Vec::new(),
            data: vec![value],
        }
    }

    /// 2-D tensor from a row-major closure.
    pub fn from_fn2(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self {
            dims: vec![rows, cols],
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.dims[0]
    }

    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.dims[1]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn expect_matrix(&self, what: &str) -> Result<(usize, usize)> {
        if self.rank() != 2 {
            return Err(Error::Dimension(format!(
                "{what} must be a matrix, got dims {:?}",
                self.dims
            )));
        }
        Ok((self.dims[0], self.dims[1]))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sub-matrix copy of rows `r0..r1` and columns `c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Tensor {
        let cols = self.cols();
        let mut data = Vec::with_capacity((r1 - r0) * (c1 - c0));
        for i in r0..r1 {
            data.extend_from_slice(&self.data[i * cols + c0..i * cols + c1]);
        }
        Tensor {
            dims: vec![r1 - r0, c1 - c0],
            data,
        }
    }

    /// Writes `src` into this matrix with its top-left corner at `(r0, c0)`.
    pub fn write_block(&mut self, r0: usize, c0: usize, src: &Tensor) {
        let cols = self.cols();
        let (sr, sc) = (src.rows(), src.cols());
        for i in 0..sr {
            self.data[(r0 + i) * cols + c0..(r0 + i) * cols + c0 + sc]
                .copy_from_slice(src.row(i));
        }
    }

    /// Mean squared error against another tensor of the same shape, in f64.
    pub fn mse(&self, other: &Tensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "mse of {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        if self.data.is_empty() {
            return Ok(0.0);
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d = *a as f64 - *b as f64;
                d * d
            })
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Serializes into the `RTN1` container format.
    pub fn to_container_bytes(&self) -> Result<Vec<u8>> {
        if self.rank() > MAX_RANK {
            return Err(Error::Dimension(format!(
                "container supports rank <= {MAX_RANK}, got {}",
                self.rank()
            )));
        }
        let mut out = Vec::with_capacity(6 + 4 * self.rank() + 4 * self.len());
        out.extend_from_slice(CONTAINER_MAGIC);
        out.push(DTYPE_F32);
        out.push(self.rank() as u8);
        for &d in &self.dims {
            let d = u32::try_from(d)
                .map_err(|_| Error::Dimension(format!("dimension {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Parses an `RTN1` container. Errors carry the byte offset of the problem.
    pub fn from_container_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, reason: alloc::string::String| Error::Format { offset, reason };
        if bytes.len() < 4 || &bytes[..4] != CONTAINER_MAGIC {
            return Err(fail(0, "missing RTN1 magic".into()));
        }
        let dtype = *bytes.get(4).ok_or_else(|| fail(4, "missing dtype byte".into()))?;
        if dtype != DTYPE_F32 {
            return Err(fail(4, format!("unsupported dtype code {dtype}")));
        }
        let rank = *bytes.get(5).ok_or_else(|| fail(5, "missing rank byte".into()))? as usize;
        if rank > MAX_RANK {
            return Err(fail(5, format!("rank {rank} exceeds {MAX_RANK}")));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut offset = 6;
        for _ in 0..rank {
            let raw = bytes
                .get(offset..offset + 4)
                .ok_or_else(|| fail(offset, "truncated dims".into()))?;
            dims.push(u32::from_le_bytes(raw.try_into().unwrap()) as usize);
            offset += 4;
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fail(6, "element count overflows".into()))?;
        let payload = &bytes[offset..];
        let expected = count
            .checked_mul(4)
            .ok_or_else(|| fail(6, "payload size overflows".into()))?;
        if payload.len() != expected {
            return Err(fail(
                offset + payload.len().min(expected),
                format!("payload is {} bytes, expected {expected}", payload.len()),
            ));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor { dims, data })
    }
}

/// `out[m x n] = a[m x k] * b[k x n]`, all row-major.
pub(crate) fn matmul_into(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

pub(crate) fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0; m * n];
    matmul_into(a, b, &mut out, m, k, n);
    out
}
