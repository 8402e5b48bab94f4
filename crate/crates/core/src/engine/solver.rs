use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{simulate_forward, PathEnsemble, SdeSpec, TimeGrid};
use super::regression::Regressor;
use super::terminal::Terminal;
use crate::drivers::DriverSpec;
use crate::error::{Error, Result};
use crate::stats;
use crate::uncertainty::UncertaintySet;

/// Inner fixed-point passes stop once successive iterates agree to this level.
pub const PICARD_TOLERANCE: f64 = 1e-12;

fn default_degree() -> usize {
    3
}

fn default_picard() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McParams {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_degree")]
    pub regression_degree: usize,
    #[serde(default = "default_picard")]
    pub picard_iters: usize,
}

impl McParams {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            regression_degree: default_degree(),
            picard_iters: default_picard(),
        }
    }
}

/// Everything needed to solve one BSDE: dynamics, driver, uncertainty set,
/// payoff, grid and Monte Carlo settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub sde: SdeSpec,
    pub driver: DriverSpec,
    pub set: UncertaintySet,
    pub terminal: Terminal,
    pub grid: TimeGrid,
    pub mc: McParams,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.sde.validate()?;
        self.terminal.validate(self.sde.dim_x())?;
        self.driver
            .validate(&self.set, self.sde.dim_x(), self.sde.dim_b())?;
        if self.mc.n_paths == 0 {
            return Err(Error::invalid("n_paths must be at least 1"));
        }
        Ok(())
    }

    pub fn simulate(&self) -> Result<PathEnsemble> {
        simulate_forward(&self.sde, &self.grid, self.mc.n_paths, self.mc.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveDiagnostics {
    /// Condition number of the regression at each non-terminal node.
    pub condition_numbers: Vec<f64>,
    /// Smallest medial gap over all recorded query points (`None` = `+inf`).
    pub min_medial_gap: Option<f64>,
    pub degenerate_argmax: bool,
    pub unsound_for_existence: bool,
}

impl SolveDiagnostics {
    pub fn max_condition(&self) -> f64 {
        self.condition_numbers.iter().copied().fold(1.0, f64::max)
    }
}

/// Per path-node detail of the maximization, node-major like `Y`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AdversaryRecord {
    pub member_index: Vec<Option<usize>>,
    pub medial_gap: Vec<Option<f64>>,
    /// Projection query points, `dim_a` per entry; empty for drivers
    /// without a projection structure.
    pub query: Vec<f64>,
}

/// Solution triplet `(Y, Z, A)` on every path and node, stored node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BsdeSolution {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub dim_b: usize,
    pub dim_a: usize,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub a: Vec<f64>,
    pub y0: f64,
    pub y0_stderr: f64,
    /// Effective-driver values used at each non-terminal node.
    pub driver_values: Vec<f64>,
    pub regression_degree: usize,
    pub diagnostics: SolveDiagnostics,
    pub adversary: AdversaryRecord,
}

impl BsdeSolution {
    pub fn n_nodes(&self) -> usize {
        self.grid.n_steps + 1
    }

    pub fn y_at(&self, node: usize) -> &[f64] {
        &self.y[node * self.n_paths..(node + 1) * self.n_paths]
    }

    pub fn z_row(&self, node: usize, path: usize) -> &[f64] {
        let k = (node * self.n_paths + path) * self.dim_b;
        &self.z[k..k + self.dim_b]
    }

    pub fn a_row(&self, node: usize, path: usize) -> &[f64] {
        let k = (node * self.n_paths + path) * self.dim_a;
        &self.a[k..k + self.dim_a]
    }

    pub fn query_row(&self, node: usize, path: usize) -> Option<&[f64]> {
        if self.adversary.query.is_empty() {
            return None;
        }
        let k = (node * self.n_paths + path) * self.dim_a;
        Some(&self.adversary.query[k..k + self.dim_a])
    }
}

/// Cross-path mean of `Y` at `node`.
pub fn theta_expectation(solution: &BsdeSolution, node: usize) -> Result<f64> {
    if node >= solution.n_nodes() {
        return Err(Error::invalid(format!(
            "node {node} is outside a grid of {} nodes",
            solution.n_nodes()
        )));
    }
    Ok(stats::mean(solution.y_at(node)))
}

/// Path data the backward recursion runs on. The driver sees `states`; the
/// regression basis is built from `features`, which may carry extra
/// path-dependent coordinates.
pub(crate) struct BackwardInput<'a> {
    pub grid: &'a TimeGrid,
    pub n_paths: usize,
    pub dim_x: usize,
    pub dim_b: usize,
    pub dim_f: usize,
    pub states: &'a [f64],
    pub features: &'a [f64],
    pub increments: &'a [f64],
}

impl<'a> BackwardInput<'a> {
    pub fn from_ensemble(ens: &'a PathEnsemble) -> Self {
        Self {
            grid: &ens.grid,
            n_paths: ens.n_paths,
            dim_x: ens.dim_x,
            dim_b: ens.dim_b,
            dim_f: ens.dim_x,
            states: &ens.states,
            features: &ens.states,
            increments: &ens.increments,
        }
    }

    fn state(&self, node: usize, p: usize) -> &[f64] {
        let k = (node * self.n_paths + p) * self.dim_x;
        &self.states[k..k + self.dim_x]
    }

    fn features_at(&self, node: usize) -> &[f64] {
        let w = self.n_paths * self.dim_f;
        &self.features[node * w..(node + 1) * w]
    }

    fn increment(&self, step: usize, p: usize, k: usize) -> f64 {
        self.increments[(step * self.n_paths + p) * self.dim_b + k]
    }
}

pub(crate) struct SolverSettings<'a> {
    pub driver: &'a DriverSpec,
    pub set: &'a UncertaintySet,
    pub degree: usize,
    pub picard_iters: usize,
    pub record_adversary: bool,
    /// Truncation interval for `Y` estimates.
    pub y_bounds: Option<(f64, f64)>,
}

/// Backward recursion from `end` to node 0 with per-path terminal values.
pub(crate) fn solve_backward(
    input: &BackwardInput,
    settings: &SolverSettings,
    terminal: &[f64],
    end: usize,
) -> Result<BsdeSolution> {
    let (n, db) = (input.n_paths, input.dim_b);
    if terminal.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: terminal.len(),
        });
    }
    if end == 0 || end > input.grid.n_steps {
        return Err(Error::invalid(format!(
            "terminal node {end} is outside 1..={}",
            input.grid.n_steps
        )));
    }
    if let Some(i) = terminal.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("terminal value of path {i}")));
    }
    let dt = input.grid.dt();
    let (driver, set) = (settings.driver, settings.set);
    let mut y = vec![0.0; (end + 1) * n];
    let mut z = vec![0.0; (end + 1) * n * db];
    y[end * n..].copy_from_slice(terminal);
    let mut pathwise = terminal.to_vec();
    let mut conditions = vec![0.0; end];
    let mut driver_values = vec![0.0; end * n];

    for i in (0..end).rev() {
        let reg = Regressor::new(input.features_at(i), n, input.dim_f, settings.degree, i)?;
        conditions[i] = reg.condition;
        let y_next = &y[(i + 1) * n..(i + 2) * n];
        let ey = reg.fit_one(y_next);
        let resid: Vec<f64> = y_next.iter().zip(&ey).map(|(a, b)| a - b).collect();
        let cols: Vec<Vec<f64>> = (0..db)
            .map(|k| {
                (0..n)
                    .map(|p| resid[p] * input.increment(i, p, k) / dt)
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        let zf = reg.fit(&refs);
        let zi = &mut z[i * n * db..(i + 1) * n * db];
        for (k, col) in zf.iter().enumerate() {
            for (p, v) in col.iter().enumerate() {
                zi[p * db + k] = *v;
            }
        }
        let zi = &z[i * n * db..(i + 1) * n * db];
        let t = input.grid.time(i);
        let eval = |yv: &[f64]| -> Vec<f64> {
            (0..n)
                .into_par_iter()
                .map(|p| {
                    driver.effective_value(
                        set,
                        t,
                        input.state(i, p),
                        yv[p],
                        &zi[p * db..(p + 1) * db],
                    )
                })
                .collect()
        };
        let mut f = eval(&ey);
        let mut yi: Vec<f64> = ey.iter().zip(&f).map(|(e, fv)| e + dt * fv).collect();
        for _ in 0..settings.picard_iters {
            f = eval(&yi);
            let next: Vec<f64> = ey.iter().zip(&f).map(|(e, fv)| e + dt * fv).collect();
            let diff = next
                .iter()
                .zip(&yi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            yi = next;
            if diff <= PICARD_TOLERANCE {
                break;
            }
        }
        if let Some((lo, hi)) = settings.y_bounds {
            for v in yi.iter_mut() {
                *v = v.clamp(lo, hi);
            }
        }
        if let Some(p) = yi.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("Y at node {i}, path {p}")));
        }
        for (acc, fv) in pathwise.iter_mut().zip(&f) {
            *acc += dt * fv;
        }
        y[i * n..(i + 1) * n].copy_from_slice(&yi);
        driver_values[i * n..(i + 1) * n].copy_from_slice(&f);
    }
    // terminal Z: the regression of Y_T * dB / dt on the previous node's basis
    let (head, tail) = z.split_at_mut(end * n * db);
    tail.copy_from_slice(&head[(end - 1) * n * db..]);

    let grid = TimeGrid {
        t0: input.grid.t0,
        horizon: input.grid.time(end),
        n_steps: end,
    };
    let y0 = stats::mean(&y[..n]);
    let y0_stderr = stats::std_error(&pathwise);
    let (a, adversary, min_gap) = if settings.record_adversary {
        record_adversary(input, settings, &y, &z, end)
    } else {
        (vec![], AdversaryRecord::default(), None)
    };
    Ok(BsdeSolution {
        grid,
        n_paths: n,
        dim_b: db,
        dim_a: set.dim(),
        y,
        z,
        a,
        y0,
        y0_stderr,
        driver_values,
        regression_degree: settings.degree,
        diagnostics: SolveDiagnostics {
            condition_numbers: conditions,
            min_medial_gap: min_gap,
            degenerate_argmax: driver.degenerate_argmax(),
            unsound_for_existence: driver.unsound_for_existence(set),
        },
        adversary,
    })
}

fn record_adversary(
    input: &BackwardInput,
    settings: &SolverSettings,
    y: &[f64],
    z: &[f64],
    end: usize,
) -> (Vec<f64>, AdversaryRecord, Option<f64>) {
    let (n, db, da) = (input.n_paths, input.dim_b, settings.set.dim());
    let mut a = Vec::with_capacity((end + 1) * n * da);
    let mut rec = AdversaryRecord::default();
    let mut min_gap: Option<f64> = None;
    for i in 0..=end {
        let t = input.grid.time(i);
        let ms: Vec<_> = (0..n)
            .into_par_iter()
            .map(|p| {
                let k = (i * n + p) * db;
                settings.driver.argmax_record(
                    settings.set,
                    t,
                    input.state(i, p),
                    y[i * n + p],
                    &z[k..k + db],
                )
            })
            .collect();
        for m in ms {
            a.extend_from_slice(m.astar.coords());
            if let Some(q) = &m.query {
                rec.query.extend_from_slice(q);
            }
            if let Some(g) = m.medial_gap {
                min_gap = Some(min_gap.map_or(g, |cur| cur.min(g)));
            }
            rec.member_index.push(m.member_index);
            rec.medial_gap.push(m.medial_gap);
        }
    }
    (a, rec, min_gap)
}

fn settings(scenario: &Scenario) -> SolverSettings<'_> {
    SolverSettings {
        driver: &scenario.driver,
        set: &scenario.set,
        degree: scenario.mc.regression_degree,
        picard_iters: scenario.mc.picard_iters,
        record_adversary: true,
        y_bounds: a_priori_bounds(scenario),
    }
}

/// For a clamped payoff and a driver vanishing at `z = 0`, `Y` stays within
/// the clamp interval.
fn a_priori_bounds(scenario: &Scenario) -> Option<(f64, f64)> {
    if scenario.driver.vanishes_at_zero_z() {
        scenario.terminal.clamp
    } else {
        None
    }
}

fn check_ensemble(scenario: &Scenario, ens: &PathEnsemble) -> Result<()> {
    if ens.dim_x != scenario.sde.dim_x() || ens.dim_b != scenario.sde.dim_b() {
        return Err(Error::invalid(
            "path ensemble does not match the scenario dimensions",
        ));
    }
    Ok(())
}

/// Simulates the forward paths and solves the BSDE with terminal `phi(X_T)`.
pub fn solve_theta_bsde(scenario: &Scenario) -> Result<BsdeSolution> {
    scenario.validate()?;
    let ens = scenario.simulate()?;
    solve_on_paths(scenario, &ens)
}

/// Solves on given paths with terminal `phi(X_T)`.
pub fn solve_on_paths(scenario: &Scenario, ens: &PathEnsemble) -> Result<BsdeSolution> {
    scenario.validate()?;
    check_ensemble(scenario, ens)?;
    let n = ens.grid.n_steps;
    let terminal: Vec<f64> = (0..ens.n_paths)
        .map(|p| scenario.terminal.evaluate(ens.state(n, p)))
        .collect();
    solve_backward(
        &BackwardInput::from_ensemble(ens),
        &settings(scenario),
        &terminal,
        n,
    )
}

/// Solves on `[t0, t_end]` with explicit per-path values at node `end`.
pub fn solve_with_terminal(
    scenario: &Scenario,
    ens: &PathEnsemble,
    terminal: &[f64],
    end: usize,
) -> Result<BsdeSolution> {
    scenario.validate()?;
    check_ensemble(scenario, ens)?;
    solve_backward(
        &BackwardInput::from_ensemble(ens),
        &settings(scenario),
        terminal,
        end,
    )
}
