//! Dispatch from a scenario file to the matching solver or experiment, and
//! the artifact bundle it produces.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::{eos_demo, epsilon_sweep, write_paths_csv, write_sweep_csv};
use crate::config::{Kind, ScenarioConfig};
use crate::drivers::DriverSpec;
use crate::engine::{
    axiom_check, simulate_forward, solve_theta_bsde, BsdeSolution, Scenario, SdeSpec,
};
use crate::error::{Error, Result};
use crate::output::to_json_string;
use crate::pde::feynman_kac_compare;
use crate::stats;
use crate::theta_calc::{integrate_theta_qv, simulate_theta_bm, verify_theta_martingale};

/// Feasibility tolerance for recorded maximizers.
const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub paths_dump: bool,
}

/// One invariant evaluated on the run's output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value,
            limit,
        }
    }

    fn flag(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            passed: ok,
            value: if ok { 1.0 } else { 0.0 },
            limit: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub name: String,
    pub kind: Kind,
    pub seed: u64,
    pub y0: Option<f64>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Writes every artifact into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        self.artifacts
            .iter()
            .map(|a| {
                let path = dir.join(&a.file_name);
                fs::write(&path, &a.contents)?;
                Ok(path)
            })
            .collect()
    }
}

#[derive(Serialize)]
struct Versions {
    theta_bsde: &'static str,
}

#[derive(Serialize)]
struct Summary<'a> {
    name: &'a str,
    kind: Kind,
    passed: bool,
    seed: u64,
    versions: Versions,
    checks: &'a [Check],
    result: serde_json::Value,
    config: &'a ScenarioConfig,
}

#[derive(Serialize)]
struct SolveResult {
    y0: f64,
    y0_stderr: f64,
    regression_degree: usize,
    max_condition: f64,
    min_medial_gap: Option<f64>,
    degenerate_argmax: bool,
    unsound_for_existence: bool,
}

#[derive(Serialize)]
struct ThetaBmResult {
    mean_realized_qv: f64,
    realized_qv_stderr: f64,
    horizon: f64,
    relative_error: f64,
    identical_to_brownian: bool,
}

#[derive(Serialize)]
struct ThetaQvResult {
    dim: usize,
    mean_terminal_qv: f64,
    terminal_qv_stderr: f64,
    classical_terminal_qv: f64,
    max_classical_deviation: f64,
    monotone_fraction: f64,
}

struct Outcome {
    y0: Option<f64>,
    result: serde_json::Value,
    checks: Vec<Check>,
    extra: Vec<Artifact>,
    solution: Option<BsdeSolution>,
}

fn json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::invalid(format!("result serialization: {e}")))
}

fn csv_artifact(
    file_name: String,
    write: impl FnOnce(&mut Vec<u8>) -> io::Result<()>,
) -> Result<Artifact> {
    let mut contents = Vec::new();
    write(&mut contents).map_err(|e| Error::invalid(format!("writing {file_name}: {e}")))?;
    Ok(Artifact {
        file_name,
        contents,
    })
}

fn feasibility(scenario: &Scenario, sol: &BsdeSolution) -> Check {
    let worst = sol
        .a
        .chunks_exact(sol.dim_a)
        .map(|a| scenario.set.distance_to(a))
        .fold(0.0, f64::max);
    Check::at_most("maximizer_in_set", worst, FEASIBILITY_TOL)
}

fn is_zero_driver(d: &DriverSpec) -> bool {
    match d {
        DriverSpec::Zero => true,
        DriverSpec::Affine { alpha, beta, gamma } => {
            *alpha == 0.0 && *beta == 0.0 && gamma.iter().all(|g| *g == 0.0)
        }
        _ => false,
    }
}

/// Runs the scenario and returns the artifact bundle. Configuration problems
/// are reported as errors; failed invariants show up in the checks.
pub fn run_scenario(config: &ScenarioConfig, name: &str, opts: &RunOptions) -> Result<RunReport> {
    config.validate().map_err(|e| Error::Configuration(e.0))?;
    let scenario = config.scenario().map_err(|e| Error::Configuration(e.0))?;
    let out = dispatch(config, &scenario, name)?;
    let mut artifacts = Vec::new();
    let summary = Summary {
        name,
        kind: config.kind,
        passed: out.checks.iter().all(|c| c.passed),
        seed: config.mc.seed,
        versions: Versions {
            theta_bsde: env!("CARGO_PKG_VERSION"),
        },
        checks: &out.checks,
        result: out.result,
        config,
    };
    let text = to_json_string(&summary)
        .map_err(|e| Error::invalid(format!("summary serialization: {e}")))?;
    artifacts.push(Artifact {
        file_name: format!("{name}.summary.json"),
        contents: text.into_bytes(),
    });
    artifacts.extend(out.extra);
    if opts.paths_dump {
        if let Some(sol) = &out.solution {
            artifacts.push(csv_artifact(format!("{name}.paths.csv"), |w| {
                write_paths_csv(sol, w)
            })?);
        }
    }
    Ok(RunReport {
        name: name.into(),
        kind: config.kind,
        seed: config.mc.seed,
        y0: out.y0,
        checks: out.checks,
        artifacts,
    })
}

fn dispatch(config: &ScenarioConfig, scenario: &Scenario, name: &str) -> Result<Outcome> {
    let checks = &config.checks;
    match config.kind {
        Kind::Solve => {
            let sol = solve_theta_bsde(scenario)?;
            let result = json(&SolveResult {
                y0: sol.y0,
                y0_stderr: sol.y0_stderr,
                regression_degree: sol.regression_degree,
                max_condition: sol.diagnostics.max_condition(),
                min_medial_gap: sol.diagnostics.min_medial_gap,
                degenerate_argmax: sol.diagnostics.degenerate_argmax,
                unsound_for_existence: sol.diagnostics.unsound_for_existence,
            })?;
            let checks = vec![feasibility(scenario, &sol)];
            Ok(Outcome {
                y0: Some(sol.y0),
                result,
                checks,
                extra: vec![],
                solution: Some(sol),
            })
        }
        Kind::FkCheck => {
            let grid = config.pde_grid().map_err(|e| Error::Configuration(e.0))?;
            let (report, surface) = feynman_kac_compare(scenario, &grid)?;
            let limit = checks.fk_floor.max(3.0 * report.stderr);
            let check = Check::at_most("feynman_kac_agreement", report.abs_err, limit);
            let surface_csv =
                csv_artifact(format!("{name}.surface.csv"), |w| surface.write_csv(w))?;
            Ok(Outcome {
                y0: Some(report.y0_mc),
                result: json(&report)?,
                checks: vec![check],
                extra: vec![surface_csv],
                solution: None,
            })
        }
        Kind::EpsilonSweep => {
            let spec = config.sweep.as_ref().expect("validated");
            let r = epsilon_sweep(scenario, spec)?;
            let (lo, hi) = checks.slope_band;
            let mut list = vec![Check::flag("sup_y_err_monotone", r.monotone)];
            if r.epsilons.len() >= 2 {
                let slope_ok = r.fitted_slope >= lo && r.fitted_slope <= hi;
                list.push(Check {
                    name: "fitted_slope_in_band".into(),
                    passed: slope_ok,
                    value: r.fitted_slope,
                    limit: hi,
                });
            }
            list.push(Check::at_most(
                "reference_degree_stability",
                r.reference_degree_shift,
                3.0 * r.reference_y0_stderr,
            ));
            let sweep_csv = csv_artifact(format!("{name}.sweep.csv"), |w| write_sweep_csv(&r, w))?;
            Ok(Outcome {
                y0: Some(r.reference_y0),
                result: json(&r)?,
                checks: list,
                extra: vec![sweep_csv],
                solution: None,
            })
        }
        Kind::EosDemo => {
            let spec = config.eos.clone().unwrap_or_default();
            let (r, sol) = eos_demo(scenario, &spec)?;
            let total: f64 = r.member_occupancy.iter().sum();
            let list = vec![
                Check::at_most("occupancy_sums_to_one", (total - 1.0).abs(), 1e-12),
                Check::at_most(
                    "medial_hit_fraction",
                    r.medial_hit_fraction,
                    checks.max_hit_fraction,
                ),
                feasibility(scenario, &sol),
            ];
            Ok(Outcome {
                y0: Some(r.y0),
                result: json(&r)?,
                checks: list,
                extra: vec![],
                solution: Some(sol),
            })
        }
        Kind::ThetaBm => {
            let grid = &config.grid;
            let tb = simulate_theta_bm(
                &scenario.driver,
                &scenario.set,
                grid,
                config.mc.n_paths,
                config.mc.seed,
            )?;
            let qv = tb.realized_qv();
            let horizon = grid.horizon - grid.t0;
            let mean = stats::mean(&qv);
            let identical = (0..grid.n_nodes()).all(|i| {
                (0..tb.n_paths())
                    .all(|p| tb.at(i)[p].to_bits() == tb.brownian.state(i, p)[0].to_bits())
            });
            let rel = (mean - horizon).abs() / horizon;
            let mut list = vec![Check::at_most(
                "realized_qv_relative_error",
                rel,
                checks.qv_tolerance,
            )];
            if is_zero_driver(&scenario.driver) {
                list.push(Check::flag("identical_to_brownian", identical));
            }
            let result = json(&ThetaBmResult {
                mean_realized_qv: mean,
                realized_qv_stderr: if qv.len() > 1 {
                    stats::std_error(&qv)
                } else {
                    0.0
                },
                horizon,
                relative_error: rel,
                identical_to_brownian: identical,
            })?;
            Ok(Outcome {
                y0: None,
                result,
                checks: list,
                extra: vec![],
                solution: None,
            })
        }
        Kind::ThetaQv => {
            let d = config.qv.as_ref().map_or(1, |q| q.dim);
            let grid = &config.grid;
            let ens = simulate_forward(
                &SdeSpec::brownian(d),
                grid,
                config.mc.n_paths,
                config.mc.seed,
            )?;
            let nodes = grid.n_nodes();
            let paths = (0..ens.n_paths)
                .into_par_iter()
                .map(|p| {
                    let b: Vec<f64> = (0..nodes).flat_map(|i| ens.state(i, p).to_vec()).collect();
                    integrate_theta_qv(&scenario.driver, &scenario.set, grid, &b, d)
                })
                .collect::<Result<Vec<_>>>()?;
            let terminal: Vec<f64> = paths.iter().map(|q| q.qv[nodes - 1]).collect();
            let mut deviation = 0.0f64;
            for q in &paths {
                for (i, v) in q.qv.iter().enumerate() {
                    deviation = deviation.max((v - d as f64 * (grid.time(i) - grid.t0)).abs());
                }
            }
            let classical = d as f64 * (grid.horizon - grid.t0);
            let mut list = vec![Check::flag(
                "qv_finite",
                terminal.iter().all(|v| v.is_finite()),
            )];
            if is_zero_driver(&scenario.driver) {
                list.push(Check::at_most(
                    "classical_recovery",
                    deviation,
                    1e-12 * classical.max(1.0),
                ));
            }
            let result = json(&ThetaQvResult {
                dim: d,
                mean_terminal_qv: stats::mean(&terminal),
                terminal_qv_stderr: if terminal.len() > 1 {
                    stats::std_error(&terminal)
                } else {
                    0.0
                },
                classical_terminal_qv: classical,
                max_classical_deviation: deviation,
                monotone_fraction: paths.iter().filter(|q| q.monotone).count() as f64
                    / paths.len() as f64,
            })?;
            Ok(Outcome {
                y0: None,
                result,
                checks: list,
                extra: vec![],
                solution: None,
            })
        }
        Kind::AxiomCheck => {
            let axiom = config.axiom.as_ref().expect("validated");
            let r = axiom_check(scenario, axiom)?;
            let check = Check {
                name: format!("axiom_{}", r.axiom),
                passed: r.passed,
                value: r.discrepancy,
                limit: r.tolerance,
            };
            Ok(Outcome {
                y0: None,
                result: json(&r)?,
                checks: vec![check],
                extra: vec![],
                solution: None,
            })
        }
        Kind::MartingaleCheck => {
            let m = config.martingale.as_ref().expect("validated");
            let r = verify_theta_martingale(scenario, &m.process, m.t_index, m.s_index)?;
            let within = r.within(checks.martingale_k);
            let check = Check {
                name: if m.expect_martingale {
                    "martingale".into()
                } else {
                    "not_martingale".into()
                },
                passed: within == m.expect_martingale,
                value: r.residual,
                limit: checks.martingale_k * r.stderr,
            };
            Ok(Outcome {
                y0: None,
                result: json(&r)?,
                checks: vec![check],
                extra: vec![],
                solution: None,
            })
        }
    }
}
