//! Drift-corrected Brownian motion, the pathwise quadratic-variation ODE and
//! empirical martingale checks under the generated expectation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drivers::DriverSpec;
use crate::engine::{
    simulate_forward, solve_backward, BackwardInput, PathEnsemble, Scenario, SdeSpec,
    SolverSettings, TimeGrid,
};
use crate::error::{check_dim, Error, Result};
use crate::stats;
use crate::uncertainty::UncertaintySet;

/// Ensemble of `b_{i+1} = b_i - F~(t_i, B_i, b_i, 1) dt + dB_i`, `b_0 = 0`,
/// stored node-major next to the driving Brownian paths.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaBmEnsemble {
    pub brownian: PathEnsemble,
    pub b_theta: Vec<f64>,
    /// Drift `F~` applied on each step, node-major over the first `n_steps` nodes.
    pub drift_record: Vec<f64>,
}

impl ThetaBmEnsemble {
    pub fn n_paths(&self) -> usize {
        self.brownian.n_paths
    }

    pub fn at(&self, node: usize) -> &[f64] {
        let n = self.n_paths();
        &self.b_theta[node * n..(node + 1) * n]
    }

    /// Path `p` as a per-node vector.
    pub fn path(&self, p: usize) -> Vec<f64> {
        (0..=self.brownian.grid.n_steps)
            .map(|i| self.at(i)[p])
            .collect()
    }

    /// Sum of squared increments of each path.
    pub fn realized_qv(&self) -> Vec<f64> {
        let n = self.n_paths();
        (0..n)
            .map(|p| {
                (0..self.brownian.grid.n_steps)
                    .map(|i| (self.at(i + 1)[p] - self.at(i)[p]).powi(2))
                    .sum()
            })
            .collect()
    }
}

pub fn simulate_theta_bm(
    driver: &DriverSpec,
    set: &UncertaintySet,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<ThetaBmEnsemble> {
    driver.validate(set, 1, 1)?;
    let brownian = simulate_forward(&SdeSpec::brownian(1), grid, n_paths, seed)?;
    let (n, steps, dt) = (n_paths, grid.n_steps, grid.dt());
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut b = Vec::with_capacity(steps + 1);
            let mut drift = Vec::with_capacity(steps);
            b.push(0.0);
            for i in 0..steps {
                let f =
                    driver.effective_value(set, grid.time(i), brownian.state(i, p), b[i], &[1.0]);
                drift.push(f);
                b.push(b[i] - f * dt + brownian.increment(i, p)[0]);
            }
            (b, drift)
        })
        .collect();
    let mut b_theta = vec![0.0; (steps + 1) * n];
    let mut drift_record = vec![0.0; steps * n];
    for (p, (b, d)) in per_path.iter().enumerate() {
        for (i, v) in b.iter().enumerate() {
            b_theta[i * n + p] = *v;
        }
        for (i, v) in d.iter().enumerate() {
            drift_record[i * n + p] = *v;
        }
    }
    if b_theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("theta Brownian motion".into()));
    }
    Ok(ThetaBmEnsemble {
        brownian,
        b_theta,
        drift_record,
    })
}

/// Quadratic variation of one frozen path, with `M = |B|^2 - qv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QvPath {
    pub qv: Vec<f64>,
    pub m_path: Vec<f64>,
    /// False when the integrand went negative somewhere, so `qv` decreased.
    pub monotone: bool,
}

/// Forward Euler for `qv' = d + F~(t, B, |B|^2 - qv, 2B)` along a fixed path.
/// `b_path` holds `d` coordinates per node.
pub fn integrate_theta_qv(
    driver: &DriverSpec,
    set: &UncertaintySet,
    grid: &TimeGrid,
    b_path: &[f64],
    d: usize,
) -> Result<QvPath> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    check_dim(grid.n_nodes() * d, b_path.len())?;
    driver.validate(set, d, d)?;
    Ok(integrate_qv_unchecked(driver, set, grid, b_path, d))
}

fn integrate_qv_unchecked(
    driver: &DriverSpec,
    set: &UncertaintySet,
    grid: &TimeGrid,
    b_path: &[f64],
    d: usize,
) -> QvPath {
    let dt = grid.dt();
    let mut qv = vec![0.0; grid.n_nodes()];
    let mut m_path = vec![0.0; grid.n_nodes()];
    let mut monotone = true;
    let mut z = vec![0.0; d];
    for i in 0..grid.n_nodes() {
        let b = &b_path[i * d..(i + 1) * d];
        let sq: f64 = b.iter().map(|v| v * v).sum();
        m_path[i] = sq - qv[i];
        if i == grid.n_steps {
            break;
        }
        for (zk, bk) in z.iter_mut().zip(b) {
            *zk = 2.0 * bk;
        }
        let rate = d as f64 + driver.effective_value(set, grid.time(i), b, sq - qv[i], &z);
        if rate < 0.0 {
            monotone = false;
        }
        qv[i + 1] = qv[i] + rate * dt;
    }
    QvPath {
        qv,
        m_path,
        monotone,
    }
}

/// Process whose martingale property is checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "snake_case")]
pub enum MartingaleProcess {
    ThetaBm,
    MQv,
    /// `<c, B_t>`.
    LinearBm {
        coefficients: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingaleReport {
    /// Cross-path mean of `|M_t - E_t[M_s]|`.
    pub residual: f64,
    pub stderr: f64,
    /// Mean of `F~(t, B_t, <c, B_t>, c)` for linear processes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub driver_value: Option<f64>,
}

impl MartingaleReport {
    pub fn within(&self, k: f64) -> bool {
        self.residual <= k * self.stderr
    }
}

/// Compares `M_t` with the conditional expectation of `M_s`, computed by a
/// backward solve on `[t0, s]` over standard Brownian paths of the
/// scenario's noise dimension. The scenario's forward dynamics and payoff
/// are not used.
pub fn verify_theta_martingale(
    base: &Scenario,
    process: &MartingaleProcess,
    t_index: usize,
    s_index: usize,
) -> Result<MartingaleReport> {
    let grid = &base.grid;
    grid.validate()?;
    if t_index >= s_index || s_index > grid.n_steps {
        return Err(Error::invalid(format!(
            "need t_index < s_index <= {}, got {t_index} and {s_index}",
            grid.n_steps
        )));
    }
    let d = base.sde.dim_b();
    base.driver.validate(&base.set, d, d)?;
    let ens = simulate_forward(&SdeSpec::brownian(d), grid, base.mc.n_paths, base.mc.seed)?;
    let n = ens.n_paths;
    let nodes = grid.n_nodes();

    let (values, features, dim_f): (Vec<f64>, Vec<f64>, usize) = match process {
        MartingaleProcess::ThetaBm => {
            check_dim(1, d)?;
            let tb = simulate_theta_bm(&base.driver, &base.set, grid, n, base.mc.seed)?;
            (tb.b_theta.clone(), tb.b_theta, 1)
        }
        MartingaleProcess::MQv => {
            let per_path: Vec<QvPath> = (0..n)
                .into_par_iter()
                .map(|p| {
                    let path: Vec<f64> =
                        (0..nodes).flat_map(|i| ens.state(i, p).to_vec()).collect();
                    integrate_qv_unchecked(&base.driver, &base.set, grid, &path, d)
                })
                .collect();
            let mut values = vec![0.0; nodes * n];
            let mut features = vec![0.0; nodes * n * (d + 1)];
            for (p, q) in per_path.iter().enumerate() {
                for i in 0..nodes {
                    values[i * n + p] = q.m_path[i];
                    let k = (i * n + p) * (d + 1);
                    features[k..k + d].copy_from_slice(ens.state(i, p));
                    features[k + d] = q.qv[i];
                }
            }
            (values, features, d + 1)
        }
        MartingaleProcess::LinearBm { coefficients } => {
            check_dim(d, coefficients.len())?;
            let values = ens
                .states
                .chunks_exact(d)
                .map(|b| crate::ambient::dot(coefficients, b))
                .collect();
            (values, ens.states.clone(), d)
        }
    };

    let input = BackwardInput {
        grid,
        n_paths: n,
        dim_x: d,
        dim_b: d,
        dim_f,
        states: &ens.states,
        features: &features,
        increments: &ens.increments,
    };
    let settings = SolverSettings {
        driver: &base.driver,
        set: &base.set,
        degree: base.mc.regression_degree,
        picard_iters: base.mc.picard_iters,
        record_adversary: false,
        y_bounds: None,
    };
    let m_s = &values[s_index * n..(s_index + 1) * n];
    let sol = solve_backward(&input, &settings, m_s, s_index)?;
    let m_t = &values[t_index * n..(t_index + 1) * n];
    let diffs: Vec<f64> = m_t
        .iter()
        .zip(sol.y_at(t_index))
        .map(|(a, b)| (a - b).abs())
        .collect();
    let dt = grid.dt();
    let increments: Vec<f64> = (0..n)
        .map(|p| {
            let drift: f64 = (t_index..s_index)
                .map(|i| sol.driver_values[i * n + p] * dt)
                .sum();
            m_s[p] + drift - m_t[p]
        })
        .collect();

    let driver_value = match process {
        MartingaleProcess::LinearBm { coefficients } => {
            let t = grid.time(t_index);
            let vals: Vec<f64> = (0..n)
                .map(|p| {
                    let b = ens.state(t_index, p);
                    base.driver.effective_value(
                        &base.set,
                        t,
                        b,
                        crate::ambient::dot(coefficients, b),
                        coefficients,
                    )
                })
                .collect();
            Some(stats::mean(&vals))
        }
        _ => None,
    };
    Ok(MartingaleReport {
        residual: stats::mean(&diffs),
        stderr: stats::std_error(&increments),
        driver_value,
    })
}
