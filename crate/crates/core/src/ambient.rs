//! Ambient space for uncertainty parameters.
//!
//! Symmetric `d x d` matrices are stored as flat coordinate vectors of length
//! `d(d+1)/2`: the diagonal first, then the strict upper triangle row by row,
//! each off-diagonal entry scaled by `sqrt(2)`. With that scaling the Euclidean
//! inner product of the coordinates equals the Frobenius inner product
//! `Tr(A^T B)`, so every piece of set geometry can work on plain vectors.

use std::f64::consts::SQRT_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Largest ambient dimension accepted anywhere in the crate.
pub const MAX_DIM: usize = 64;

/// A point of the ambient space (flat coordinates).
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AmbientPoint(Vec<f64>);

impl AmbientPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("ambient point must have positive dimension"));
        }
        if coords.len() > MAX_DIM {
            return Err(Error::Configuration(format!(
                "ambient dimension {} exceeds the supported maximum {MAX_DIM}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("ambient point coordinates".into()));
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    /// Builds a point without validation. Callers guarantee finiteness and size.
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty() && coords.len() <= MAX_DIM);
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn distance(&self, other: &AmbientPoint) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(distance(&self.0, &other.0))
    }

    pub fn scaled(&self, factor: f64) -> AmbientPoint {
        AmbientPoint(self.0.iter().map(|c| c * factor).collect())
    }
}

impl fmt::Debug for AmbientPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AmbientPoint{:?}", self.0)
    }
}

impl TryFrom<Vec<f64>> for AmbientPoint {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        AmbientPoint::new(coords)
    }
}

impl From<AmbientPoint> for Vec<f64> {
    fn from(p: AmbientPoint) -> Self {
        p.0
    }
}

/// Frobenius (equivalently Euclidean) inner product of two ambient points.
pub fn frobenius_inner(a: &AmbientPoint, b: &AmbientPoint) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(dot(&a.0, &b.0))
}

/// A real symmetric `d x d` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    d: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    /// Rejects input whose entries differ from their transpose (exact comparison).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::invalid("matrix must be at least 1x1"));
        }
        if packed_len(d) > MAX_DIM {
            return Err(Error::Configuration(format!(
                "symmetric {d}x{d} matrices embed in dimension {} > {MAX_DIM}",
                packed_len(d)
            )));
        }
        let mut entries = Vec::with_capacity(d * d);
        for row in rows {
            check_dim(d, row.len())?;
            entries.extend_from_slice(row);
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                if entries[i * d + j] != entries[j * d + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { d, entries })
    }

    pub fn identity(d: usize) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_rows(&rows)
    }

    /// The rank-one matrix `z^T z` for a row vector `z`.
    pub fn outer(z: &[f64]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = z
            .iter()
            .map(|zi| z.iter().map(|zj| zi * zj).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.d + j]
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.entries)
    }

    /// `Tr(self * other)`.
    pub fn trace_product(&self, other: &SymMatrix) -> Result<f64> {
        check_dim(self.d, other.d)?;
        Ok(dot(&self.entries, &other.entries))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.d).map(|r| r.to_vec()).collect()
    }
}

/// Length of the packed coordinate vector for `d x d` symmetric matrices.
pub fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Isometric embedding of a symmetric matrix into flat coordinates.
pub fn embed(m: &SymMatrix) -> AmbientPoint {
    let d = m.d;
    let mut coords = Vec::with_capacity(packed_len(d));
    coords.extend((0..d).map(|i| m.get(i, i)));
    for i in 0..d {
        for j in (i + 1)..d {
            coords.push(SQRT_2 * m.get(i, j));
        }
    }
    AmbientPoint::from_vec_unchecked(coords)
}

/// Inverse of [`embed`].
pub fn extract(p: &AmbientPoint) -> Result<SymMatrix> {
    let d = matrix_side(p.dim())
        .ok_or_else(|| Error::invalid(format!("dimension {} is not triangular", p.dim())))?;
    let mut rows = vec![vec![0.0; d]; d];
    for (i, row) in rows.iter_mut().enumerate() {
        row[i] = p.0[i];
    }
    let mut k = d;
    for i in 0..d {
        for j in (i + 1)..d {
            let v = p.0[k] / SQRT_2;
            rows[i][j] = v;
            rows[j][i] = v;
            k += 1;
        }
    }
    SymMatrix::from_rows(&rows)
}

/// Embedding of `z^T z` written directly into coordinates.
pub(crate) fn embed_outer(z: &[f64]) -> Vec<f64> {
    let d = z.len();
    let mut coords = Vec::with_capacity(packed_len(d));
    coords.extend(z.iter().map(|v| v * v));
    for i in 0..d {
        for j in (i + 1)..d {
            coords.push(SQRT_2 * z[i] * z[j]);
        }
    }
    coords
}

/// Side length `d` with `d(d+1)/2 == n`, if one exists.
pub fn matrix_side(n: usize) -> Option<usize> {
    (1..=n).find(|&d| packed_len(d) == n)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
