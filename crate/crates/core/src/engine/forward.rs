use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::dot;
use crate::error::{Error, Result};

/// Uniform time grid on `[t0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    #[serde(default)]
    pub t0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, horizon: f64, n_steps: usize) -> Result<Self> {
        let g = Self {
            t0,
            horizon,
            n_steps,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t0.is_finite() || !self.horizon.is_finite() {
            return Err(Error::NonFinite("time grid".into()));
        }
        if self.horizon <= self.t0 {
            return Err(Error::invalid(format!(
                "horizon {} must exceed start time {}",
                self.horizon, self.t0
            )));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps must be positive"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, node: usize) -> f64 {
        if node == self.n_steps {
            self.horizon
        } else {
            self.t0 + node as f64 * self.dt()
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }
}

/// Euler-discretized forward SDE `dX = b(X) dt + sigma(X) dB` with affine
/// coefficients.
///
/// `drift_linear[j][l]` multiplies `x_l` in the `j`-th drift component;
/// `sigma_linear[j][k][l]` multiplies `x_l` in volatility entry `(j, k)`.
/// Empty blocks are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSpec {
    pub x0: Vec<f64>,
    #[serde(default)]
    pub drift: Vec<f64>,
    #[serde(default)]
    pub drift_linear: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    #[serde(default)]
    pub sigma_linear: Vec<Vec<Vec<f64>>>,
}

impl SdeSpec {
    /// `X = x0 + B` for a `dim`-dimensional Brownian motion.
    pub fn brownian(dim: usize) -> Self {
        let sigma = (0..dim)
            .map(|j| (0..dim).map(|k| if j == k { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            x0: vec![0.0; dim],
            drift: vec![],
            drift_linear: vec![],
            sigma,
            sigma_linear: vec![],
        }
    }

    /// One-dimensional `dX = mu dt + vol dB`, `X_0 = x0`.
    pub fn scalar(x0: f64, mu: f64, vol: f64) -> Self {
        Self {
            x0: vec![x0],
            drift: vec![mu],
            drift_linear: vec![],
            sigma: vec![vec![vol]],
            sigma_linear: vec![],
        }
    }

    pub fn dim_x(&self) -> usize {
        self.x0.len()
    }

    pub fn dim_b(&self) -> usize {
        self.sigma.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let (dx, db) = (self.dim_x(), self.dim_b());
        if dx == 0 || db == 0 {
            return Err(Error::invalid(
                "state and noise dimensions must be positive",
            ));
        }
        if !self.drift.is_empty() && self.drift.len() != dx {
            return Err(Error::DimensionMismatch {
                expected: dx,
                got: self.drift.len(),
            });
        }
        if !self.drift_linear.is_empty()
            && (self.drift_linear.len() != dx || self.drift_linear.iter().any(|r| r.len() != dx))
        {
            return Err(Error::invalid(
                "drift_linear must be a dim_x by dim_x matrix",
            ));
        }
        if self.sigma.len() != dx || self.sigma.iter().any(|r| r.len() != db) {
            return Err(Error::invalid("sigma must be a dim_x by dim_b matrix"));
        }
        if !self.sigma_linear.is_empty()
            && (self.sigma_linear.len() != dx
                || self
                    .sigma_linear
                    .iter()
                    .any(|r| r.len() != db || r.iter().any(|c| c.len() != dx)))
        {
            return Err(Error::invalid(
                "sigma_linear must have shape dim_x by dim_b by dim_x",
            ));
        }
        let all = self
            .x0
            .iter()
            .chain(&self.drift)
            .chain(self.drift_linear.iter().flatten())
            .chain(self.sigma.iter().flatten())
            .chain(self.sigma_linear.iter().flatten().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sde coefficients".into()));
        }
        Ok(())
    }

    pub fn drift_at(&self, j: usize, x: &[f64]) -> f64 {
        let c = self.drift.get(j).copied().unwrap_or(0.0);
        match self.drift_linear.get(j) {
            Some(row) => c + dot(row, x),
            None => c,
        }
    }

    pub fn sigma_at(&self, j: usize, k: usize, x: &[f64]) -> f64 {
        let c = self.sigma[j][k];
        match self.sigma_linear.get(j) {
            Some(rows) => c + dot(&rows[k], x),
            None => c,
        }
    }

    /// Largest `|sigma|` of a scalar SDE over `[x_min, x_max]` (attained at an endpoint).
    pub fn scalar_sigma_max(&self, x_min: f64, x_max: f64) -> f64 {
        self.sigma_at(0, 0, &[x_min])
            .abs()
            .max(self.sigma_at(0, 0, &[x_max]).abs())
    }
}

/// Simulated Brownian increments and forward states, stored node-major:
/// state `j` of path `p` at node `i` sits at `(i * n_paths + p) * dim_x + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
    pub dim_x: usize,
    pub dim_b: usize,
    pub increments: Vec<f64>,
    pub states: Vec<f64>,
}

impl PathEnsemble {
    pub fn state(&self, node: usize, path: usize) -> &[f64] {
        let k = (node * self.n_paths + path) * self.dim_x;
        &self.states[k..k + self.dim_x]
    }

    pub fn increment(&self, step: usize, path: usize) -> &[f64] {
        let k = (step * self.n_paths + path) * self.dim_b;
        &self.increments[k..k + self.dim_b]
    }

    pub fn states_at(&self, node: usize) -> &[f64] {
        let w = self.n_paths * self.dim_x;
        &self.states[node * w..(node + 1) * w]
    }

    /// Coordinate `j` of the state at `node` across all paths.
    pub fn coordinate(&self, node: usize, j: usize) -> Vec<f64> {
        self.states_at(node)
            .chunks_exact(self.dim_x)
            .map(|s| s[j])
            .collect()
    }
}

/// Per-path generator: stream `path` of the ChaCha generator keyed by `seed`,
/// so draws do not depend on how paths are scheduled across threads.
fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Brownian increments of one path, step-major.
fn path_increments(seed: u64, path: usize, n_steps: usize, dim_b: usize, dt: f64) -> Vec<f64> {
    let mut rng = path_rng(seed, path);
    let sd = dt.sqrt();
    (0..n_steps * dim_b)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            sd * g
        })
        .collect::<Vec<f64>>()
}

pub fn simulate_forward(
    sde: &SdeSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    grid.validate()?;
    sde.validate()?;
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be at least 1"));
    }
    let (dx, db, n) = (sde.dim_x(), sde.dim_b(), grid.n_steps);
    let dt = grid.dt();
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let inc = path_increments(seed, p, n, db, dt);
            let mut xs = Vec::with_capacity((n + 1) * dx);
            xs.extend_from_slice(&sde.x0);
            for i in 0..n {
                let (prev, dbi) = (
                    xs[i * dx..(i + 1) * dx].to_vec(),
                    &inc[i * db..(i + 1) * db],
                );
                for j in 0..dx {
                    let mut v = prev[j] + sde.drift_at(j, &prev) * dt;
                    for (k, dw) in dbi.iter().enumerate() {
                        v += sde.sigma_at(j, k, &prev) * dw;
                    }
                    xs.push(v);
                }
            }
            (xs, inc)
        })
        .collect();
    let mut states = vec![0.0; (n + 1) * n_paths * dx];
    let mut increments = vec![0.0; n * n_paths * db];
    for (p, (xs, inc)) in per_path.iter().enumerate() {
        for i in 0..=n {
            let dst = (i * n_paths + p) * dx;
            states[dst..dst + dx].copy_from_slice(&xs[i * dx..(i + 1) * dx]);
        }
        for i in 0..n {
            let dst = (i * n_paths + p) * db;
            increments[dst..dst + db].copy_from_slice(&inc[i * db..(i + 1) * db]);
        }
    }
    Ok(PathEnsemble {
        grid: grid.clone(),
        n_paths,
        seed,
        dim_x: dx,
        dim_b: db,
        increments,
        states,
    })
}
