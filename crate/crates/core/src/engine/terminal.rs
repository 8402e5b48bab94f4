use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `coef * prod_j x_j^powers[j]`; empty `powers` is a constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    #[serde(default)]
    pub powers: Vec<u32>,
}

/// Payoff `phi(X_T)`: a polynomial, optionally replaced by its positive part,
/// then optionally clamped to `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Terminal {
    pub terms: Vec<Monomial>,
    #[serde(default)]
    pub positive_part: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp: Option<(f64, f64)>,
}

impl Terminal {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![Monomial {
                coef: c,
                powers: vec![],
            }],
            positive_part: false,
            clamp: None,
        }
    }

    /// `x_j^power` for a state of dimension `dim`.
    pub fn power(dim: usize, j: usize, power: u32) -> Self {
        let mut powers = vec![0; dim];
        powers[j] = power;
        Self {
            terms: vec![Monomial { coef: 1.0, powers }],
            positive_part: false,
            clamp: None,
        }
    }

    pub fn linear(dim: usize, j: usize) -> Self {
        Self::power(dim, j, 1)
    }

    pub fn plus_constant(mut self, c: f64) -> Self {
        self.terms.push(Monomial {
            coef: c,
            powers: vec![],
        });
        self
    }

    pub fn positive(mut self) -> Self {
        self.positive_part = true;
        self
    }

    pub fn clamped(mut self, lower: f64, upper: f64) -> Self {
        self.clamp = Some((lower, upper));
        self
    }

    pub fn is_bounded(&self) -> bool {
        self.clamp.is_some()
    }

    pub fn validate(&self, dim_x: usize) -> Result<()> {
        for m in &self.terms {
            if !m.coef.is_finite() {
                return Err(Error::NonFinite("terminal coefficient".into()));
            }
            if !m.powers.is_empty() && m.powers.len() != dim_x {
                return Err(Error::DimensionMismatch {
                    expected: dim_x,
                    got: m.powers.len(),
                });
            }
        }
        if let Some((lo, hi)) = self.clamp {
            if !(lo <= hi) {
                return Err(Error::invalid(format!(
                    "clamp bounds [{lo}, {hi}] are empty"
                )));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut v: f64 = self
            .terms
            .iter()
            .map(|m| {
                m.coef
                    * m.powers
                        .iter()
                        .zip(x)
                        .map(|(p, xi)| xi.powi(*p as i32))
                        .product::<f64>()
            })
            .sum();
        if self.positive_part {
            v = v.max(0.0);
        }
        if let Some((lo, hi)) = self.clamp {
            v = v.clamp(lo, hi);
        }
        v
    }
}
