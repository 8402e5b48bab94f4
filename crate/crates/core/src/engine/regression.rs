//! Least-squares projection of cross-path samples on polynomial features of
//! the state at one time node.

use nalgebra::{DMatrix, QR};

use crate::error::{Error, Result};

/// Regressions with a worse-conditioned triangular factor are rejected.
pub const MAX_CONDITION: f64 = 1e12;
const MAX_BASIS: usize = 256;

/// All exponent vectors of total degree at most `degree` in `k` variables,
/// ordered by degree.
pub(crate) fn monomial_exponents(k: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; k]];
    let mut frontier = vec![vec![0u32; k]];
    for _ in 0..degree {
        let mut next: Vec<Vec<u32>> = Vec::new();
        for e in &frontier {
            // raise only coordinates at or after the last nonzero one, so each
            // multi-index is generated once
            let start = e.iter().rposition(|p| *p > 0).unwrap_or(0);
            for j in start..k {
                let mut f = e.clone();
                f[j] += 1;
                next.push(f);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub(crate) struct Regressor {
    basis: DMatrix<f64>,
    qr: QR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    r: DMatrix<f64>,
    pub condition: f64,
}

impl Regressor {
    /// Builds the standardized monomial design for `n` samples of a
    /// `dim`-dimensional feature stored row-wise in `features`.
    pub fn new(features: &[f64], n: usize, dim: usize, degree: usize, node: usize) -> Result<Self> {
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for j in 0..dim {
            let col: Vec<f64> = (0..n).map(|p| features[p * dim + j]).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            if sd > 1e-12 * m.abs().max(1.0) {
                cols.push(col.into_iter().map(|v| (v - m) / sd).collect());
            }
        }
        let exps = monomial_exponents(cols.len(), degree);
        if exps.len() > MAX_BASIS {
            return Err(Error::invalid(format!(
                "regression basis of {} functions is too large",
                exps.len()
            )));
        }
        let m = exps.len();
        if n < m {
            return Err(Error::RankDeficient {
                node,
                condition: f64::INFINITY,
            });
        }
        let basis = DMatrix::from_fn(n, m, |p, b| {
            exps[b]
                .iter()
                .zip(&cols)
                .map(|(e, c)| c[p].powi(*e as i32))
                .product::<f64>()
        });
        let qr = basis.clone().qr();
        let r = qr.r();
        let sv = r.clone().svd(false, false).singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        let condition = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::RankDeficient { node, condition });
        }
        Ok(Self {
            basis,
            qr,
            r,
            condition,
        })
    }

    /// Fitted values of each right-hand side, evaluated at the samples.
    ///
    /// Each column is fitted as an offset from its first sample, so constant
    /// columns and constant shifts come back exactly.
    pub fn fit(&self, rhs: &[&[f64]]) -> Vec<Vec<f64>> {
        let (n, m) = self.basis.shape();
        let offsets: Vec<f64> = rhs
            .iter()
            .map(|c| c.first().copied().unwrap_or(0.0))
            .collect();
        let mut b = DMatrix::from_fn(n, rhs.len(), |p, c| rhs[c][p] - offsets[c]);
        self.qr.q_tr_mul(&mut b);
        let top = b.rows(0, m).into_owned();
        let coef = self
            .r
            .solve_upper_triangular(&top)
            .expect("nonsingular factor");
        let fitted = &self.basis * coef;
        (0..rhs.len())
            .map(|c| fitted.column(c).iter().map(|v| v + offsets[c]).collect())
            .collect()
    }

    pub fn fit_one(&self, rhs: &[f64]) -> Vec<f64> {
        self.fit(&[rhs]).pop().unwrap()
    }
}
