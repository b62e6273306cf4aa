use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::model::{UnitVector, UNIT_TOL};
use crate::numeric::{norm, CompensatedSum};

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Seeded { master_seed: u64, stream_id: u64 },
    File { path: String, checksum: u64 },
    Derived(String),
}

/// `n` points on `S^{d-1}` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSample {
    d: usize,
    data: Vec<f64>,
    pub provenance: Provenance,
}

impl DirectionSample {
    /// Checks shape and that every row is a unit vector to within [`UNIT_TOL`].
    pub fn new(d: usize, data: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if d < 2 {
            return Err(invalid("dimension d must be at least 2"));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: data.len() % d,
            });
        }
        for (i, row) in data.chunks_exact(d).enumerate() {
            let n = norm(row);
            if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
                return Err(invalid(alloc::format!("row {i} has norm {n}")));
            }
        }
        Ok(Self { d, data, provenance })
    }

    /// Builds a sample whose rows are known to be unit vectors.
    pub(crate) fn from_trusted(d: usize, data: Vec<f64>, provenance: Provenance) -> Self {
        debug_assert_eq!(data.len() % d, 0);
        Self { d, data, provenance }
    }

    pub fn from_vectors(rows: &[UnitVector], provenance: Provenance) -> Result<Self> {
        let d = rows.first().map(|r| r.dim()).ok_or_else(|| invalid("empty sample"))?;
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.dim(),
                });
            }
            data.extend_from_slice(r.as_slice());
        }
        Ok(Self { d, data, provenance })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    /// Componentwise sample mean `X̄`.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = alloc::vec![CompensatedSum::new(); self.d];
        for row in self.rows() {
            for (a, v) in acc.iter_mut().zip(row) {
                a.add(*v);
            }
        }
        let n = self.len() as f64;
        acc.iter().map(|a| a.value() / n).collect()
    }

    /// Applies `f` to every row, e.g. a rotation or sign flip.
    pub fn map_rows(&self, mut f: impl FnMut(usize, &[f64], &mut [f64])) -> Self {
        let mut data = alloc::vec![0.0; self.data.len()];
        for (i, (src, dst)) in self.rows().zip(data.chunks_exact_mut(self.d)).enumerate() {
            f(i, src, dst);
        }
        Self {
            d: self.d,
            data,
            provenance: self.provenance.clone(),
        }
    }

    /// Rows `indices` as a new sample.
    pub fn select(&self, indices: &[usize], provenance: Provenance) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            d: self.d,
            data,
            provenance,
        }
    }
}
