//! Reproducible experiment runners: the regularization sweep towards the
//! G-expectation limit and the medial-axis statistics of the projection
//! adversary on a union of disjoint pieces.

mod run;

pub use run::{run_scenario, Artifact, Check, RunOptions, RunReport};

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientPoint;
use crate::drivers::DriverSpec;
use crate::engine::{solve_on_paths, BsdeSolution, PathEnsemble, Scenario};
use crate::error::{Error, Result};
use crate::output::format_float;
use crate::stats;
use crate::uncertainty::Shape;

/// Regularization parameters and centre of the penalty for [`epsilon_sweep`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub epsilons: Vec<f64>,
    /// Penalty centre; defaults to the projection of the bounding-box midpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<AmbientPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonSweepResult {
    pub epsilons: Vec<f64>,
    /// Sup over nodes of the cross-path RMS of `Y^eps - Y^ref`.
    pub sup_y_err: Vec<f64>,
    /// Delta-method standard error of each `sup_y_err` at its maximizing node.
    pub sup_y_err_stderr: Vec<f64>,
    /// Discrete `L^2(dt x P)` norm of `Z^eps - Z^ref`.
    pub z_err_l2: Vec<f64>,
    pub y0: Vec<f64>,
    pub fitted_slope: f64,
    pub a0: Vec<f64>,
    pub reference_y0: f64,
    pub reference_y0_stderr: f64,
    /// `|Y0|` change of the reference when the basis degree is raised by one.
    pub reference_degree_shift: f64,
    pub reference_stable: bool,
    /// Errors nonincreasing as `eps` decreases, up to one pooled stderr.
    pub monotone: bool,
}

/// Path-wise distance between two solutions on the same ensemble.
struct Discrepancy {
    sup_rms: f64,
    sup_rms_stderr: f64,
    z_l2: f64,
}

fn discrepancy(a: &BsdeSolution, b: &BsdeSolution) -> Discrepancy {
    let n = a.n_paths;
    let mut sup_rms = 0.0;
    let mut sup_rms_stderr = 0.0;
    for node in 0..a.n_nodes() {
        let sq: Vec<f64> = a
            .y_at(node)
            .iter()
            .zip(b.y_at(node))
            .map(|(u, v)| (u - v) * (u - v))
            .collect();
        let rms = stats::mean(&sq).sqrt();
        if rms > sup_rms {
            sup_rms = rms;
            sup_rms_stderr = if n > 1 {
                stats::std_error(&sq) / (2.0 * rms)
            } else {
                0.0
            };
        }
    }
    let dt = a.grid.dt();
    let steps = a.grid.n_steps;
    let zsq: f64 = a.z[..steps * n * a.dim_b]
        .iter()
        .zip(&b.z)
        .map(|(u, v)| (u - v) * (u - v))
        .sum();
    Discrepancy {
        sup_rms,
        sup_rms_stderr,
        z_l2: (zsq * dt / n as f64).sqrt(),
    }
}

fn check_epsilons(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::invalid("epsilon list is empty"));
    }
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::invalid("epsilons must be positive and finite"));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("epsilons must be strictly decreasing"));
    }
    Ok(())
}

fn default_anchor(base: &Scenario) -> Result<AmbientPoint> {
    let (lo, hi) = base.set.bounding_box();
    let mid = AmbientPoint::new(lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect())?;
    Ok(base.set.project(&mid)?.point)
}

fn solve_each(
    base: &Scenario,
    ens: &PathEnsemble,
    drivers: Vec<DriverSpec>,
) -> Result<Vec<BsdeSolution>> {
    drivers
        .into_par_iter()
        .map(|driver| {
            solve_on_paths(
                &Scenario {
                    driver,
                    ..base.clone()
                },
                ens,
            )
        })
        .collect()
}

/// Solves the `GLimit` reference and one `GRegularized` problem per `eps` on
/// common paths. The scenario's own driver is ignored.
pub fn epsilon_sweep(base: &Scenario, spec: &SweepSpec) -> Result<EpsilonSweepResult> {
    check_epsilons(&spec.epsilons)?;
    if !base.set.is_convex() {
        return Err(Error::invalid(
            "regularization sweep needs a convex uncertainty set",
        ));
    }
    if !base.terminal.is_bounded() {
        return Err(Error::invalid(
            "regularization sweep needs a clamped terminal payoff",
        ));
    }
    let a0 = match &spec.a0 {
        Some(p) => p.clone(),
        None => default_anchor(base)?,
    };
    let reference = Scenario {
        driver: DriverSpec::GLimit,
        ..base.clone()
    };
    reference.validate()?;
    let ens = reference.simulate()?;

    let mut drivers = vec![DriverSpec::GLimit];
    drivers.extend(spec.epsilons.iter().map(|&eps| DriverSpec::GRegularized {
        eps,
        a0: a0.clone(),
    }));
    let mut sols = solve_each(&reference, &ens, drivers)?;
    let ref_sol = sols.remove(0);

    let mut finer = reference.clone();
    finer.mc.regression_degree += 1;
    let finer_sol = solve_on_paths(&finer, &ens)?;
    let shift = (finer_sol.y0 - ref_sol.y0).abs();

    let errs: Vec<Discrepancy> = sols.iter().map(|s| discrepancy(s, &ref_sol)).collect();
    let sup_y_err: Vec<f64> = errs.iter().map(|e| e.sup_rms).collect();
    let sup_y_err_stderr: Vec<f64> = errs.iter().map(|e| e.sup_rms_stderr).collect();
    let monotone = (1..errs.len()).all(|k| {
        sup_y_err[k] <= sup_y_err[k - 1] + sup_y_err_stderr[k].hypot(sup_y_err_stderr[k - 1])
    });
    let fitted_slope = if spec.epsilons.len() >= 2 && sup_y_err.iter().all(|e| *e > 0.0) {
        stats::log_log_slope(&spec.epsilons, &sup_y_err)
    } else {
        f64::NAN
    };
    Ok(EpsilonSweepResult {
        epsilons: spec.epsilons.clone(),
        sup_y_err,
        sup_y_err_stderr,
        z_err_l2: errs.iter().map(|e| e.z_l2).collect(),
        y0: sols.iter().map(|s| s.y0).collect(),
        fitted_slope,
        a0: a0.into_coords(),
        reference_y0: ref_sol.y0,
        reference_y0_stderr: ref_sol.y0_stderr,
        reference_degree_shift: shift,
        reference_stable: shift <= 3.0 * ref_sol.y0_stderr,
        monotone,
    })
}

/// Writes `epsilon,sup_y_err,z_err_l2` rows.
pub fn write_sweep_csv<W: Write>(r: &EpsilonSweepResult, w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epsilon", "sup_y_err", "z_err_l2"])?;
    for k in 0..r.epsilons.len() {
        out.write_record([
            format_float(r.epsilons[k]),
            format_float(r.sup_y_err[k]),
            format_float(r.z_err_l2[k]),
        ])?;
    }
    out.flush()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EosSpec {
    /// Medial-gap threshold; by default twice the measured step of the query point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_threshold: Option<f64>,
    /// Optional regularization sweep, compared against its smallest member.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cauchy_epsilons: Vec<f64>,
    /// Independent solves pooled into the statistics; with more than one,
    /// standard errors are taken across replicas.
    #[serde(default = "one")]
    pub replicas: usize,
}

fn one() -> usize {
    1
}

impl Default for EosSpec {
    fn default() -> Self {
        Self {
            gap_threshold: None,
            cauchy_epsilons: vec![],
            replicas: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeStats {
    pub t: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Successive differences of regularized solutions against the smallest
/// `eps`, which stands in for the unregularized problem.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CauchySweep {
    pub label: String,
    pub reference_epsilon: f64,
    pub epsilons: Vec<f64>,
    pub sup_y_err: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EosDemoResult {
    /// Fraction of non-terminal `(path, node)` samples per set member.
    pub member_occupancy: Vec<f64>,
    /// Standard error of each occupancy: across replicas when there are
    /// several, otherwise across paths (which ignores regression noise).
    pub occupancy_stderr: Vec<f64>,
    /// `None` when every gap is the `+inf` sentinel.
    pub min_medial_gap: Option<f64>,
    pub medial_hit_fraction: f64,
    pub gap_threshold: f64,
    /// Sup over steps of the cross-path RMS increment of the query point.
    pub dx_equiv: f64,
    pub a_path_summary: Vec<NodeStats>,
    pub y0: f64,
    pub y0_stderr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cauchy: Option<CauchySweep>,
}

fn check_eos(base: &Scenario) -> Result<()> {
    if !matches!(base.driver, DriverSpec::RegularizedProjection { .. }) {
        let name = base.driver.name();
        return Err(Error::invalid(format!(
            "medial statistics need a regularized projection driver, got {name}"
        )));
    }
    let pieces = base.set.member_count();
    if pieces < 2
        || !matches!(
            base.set.shape(),
            Shape::Union { .. } | Shape::PointCloud { .. }
        )
    {
        return Err(Error::invalid(
            "medial statistics need a set with at least two members",
        ));
    }
    if !base.set.members_disjoint() {
        return Err(Error::invalid("set members must be disjoint"));
    }
    Ok(())
}

/// Solves the scenario and gathers occupancy and medial-gap statistics of
/// the projection query point. Returns the solution alongside.
pub fn eos_demo(base: &Scenario, spec: &EosSpec) -> Result<(EosDemoResult, BsdeSolution)> {
    check_eos(base)?;
    base.validate()?;
    if let Some(g) = spec.gap_threshold {
        if !(g.is_finite() && g >= 0.0) {
            return Err(Error::invalid(format!(
                "gap threshold must be nonnegative, got {g}"
            )));
        }
    }
    if spec.replicas == 0 {
        return Err(Error::invalid("replicas must be at least 1"));
    }
    if !spec.cauchy_epsilons.is_empty() {
        check_epsilons(&spec.cauchy_epsilons)?;
    }
    let runs: Vec<(PathEnsemble, BsdeSolution)> = (0..spec.replicas)
        .into_par_iter()
        .map(|r| {
            let mut sc = base.clone();
            if r > 0 {
                sc.mc.seed = derive_seed(base.mc.seed, r as u64);
            }
            let ens = sc.simulate()?;
            let sol = solve_on_paths(&sc, &ens)?;
            Ok((ens, sol))
        })
        .collect::<Result<_>>()?;
    let sols: Vec<&BsdeSolution> = runs.iter().map(|(_, s)| s).collect();
    let mut result = summarize_eos(&sols, base.set.member_count(), spec.gap_threshold)?;
    if !spec.cauchy_epsilons.is_empty() {
        result.cauchy = Some(cauchy_sweep(base, &runs[0].0, &spec.cauchy_epsilons)?);
    }
    let (_, first) = runs.into_iter().next().expect("at least one replica");
    Ok((result, first))
}

/// Seed of replica `r`, drawn from a stream of the base seed that path
/// simulation never uses.
pub fn derive_seed(seed: u64, r: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1 << 63) | r);
    rng.next_u64()
}

fn cauchy_sweep(base: &Scenario, ens: &PathEnsemble, epsilons: &[f64]) -> Result<CauchySweep> {
    let DriverSpec::RegularizedProjection { h, g, .. } = &base.driver else {
        unreachable!("checked by the caller")
    };
    let drivers = epsilons
        .iter()
        .map(|&eps| DriverSpec::RegularizedProjection {
            h: h.clone(),
            g: g.clone(),
            eps,
        })
        .collect();
    let sols = solve_each(base, ens, drivers)?;
    let (last, rest) = sols.split_last().expect("nonempty sweep");
    Ok(CauchySweep {
        label: "cauchy_style".into(),
        reference_epsilon: *epsilons.last().expect("nonempty sweep"),
        epsilons: epsilons[..rest.len()].to_vec(),
        sup_y_err: rest.iter().map(|s| discrepancy(s, last).sup_rms).collect(),
    })
}

fn summarize_eos(
    sols: &[&BsdeSolution],
    members: usize,
    threshold: Option<f64>,
) -> Result<EosDemoResult> {
    let first = sols[0];
    let (n, steps, da) = (first.n_paths, first.grid.n_steps, first.dim_a);
    if sols.iter().any(|s| s.adversary.query.is_empty()) {
        return Err(Error::invalid(
            "solution carries no projection query points",
        ));
    }

    // per replica and path: node counts in each member
    let mut per_replica = Vec::with_capacity(sols.len());
    for sol in sols {
        let mut counts = vec![vec![0usize; members]; n];
        for node in 0..steps {
            for (p, c) in counts.iter_mut().enumerate() {
                let m = sol.adversary.member_index[node * n + p]
                    .ok_or_else(|| Error::invalid("maximizer did not report a member index"))?;
                c[m] += 1;
            }
        }
        per_replica.push(counts);
    }
    let samples = (sols.len() * n * steps) as f64;
    let mut member_occupancy = Vec::with_capacity(members);
    let mut occupancy_stderr = Vec::with_capacity(members);
    for m in 0..members {
        let total: usize = per_replica.iter().flatten().map(|c| c[m]).sum();
        member_occupancy.push(total as f64 / samples);
        let units: Vec<f64> = if sols.len() > 1 {
            per_replica
                .iter()
                .map(|r| r.iter().map(|c| c[m]).sum::<usize>() as f64 / (n * steps) as f64)
                .collect()
        } else {
            per_replica[0]
                .iter()
                .map(|c| c[m] as f64 / steps as f64)
                .collect()
        };
        occupancy_stderr.push(if units.len() > 1 {
            stats::std_error(&units)
        } else {
            0.0
        });
    }

    let mut dx_equiv = 0.0f64;
    for sol in sols {
        for node in 0..steps.saturating_sub(1) {
            let mut acc = 0.0;
            for p in 0..n {
                let (k0, k1) = (
                    sol.query_row(node, p).unwrap(),
                    sol.query_row(node + 1, p).unwrap(),
                );
                acc += k0
                    .iter()
                    .zip(k1)
                    .map(|(u, v)| (u - v) * (u - v))
                    .sum::<f64>();
            }
            dx_equiv = dx_equiv.max((acc / n as f64).sqrt());
        }
    }
    let gap_threshold = threshold.unwrap_or(2.0 * dx_equiv);

    let gaps = || {
        sols.iter()
            .flat_map(|s| s.adversary.medial_gap[..steps * n].iter())
    };
    let min_medial_gap = gaps().flatten().copied().reduce(f64::min);
    let hits = gaps()
        .filter(|g| matches!(g, Some(v) if *v < gap_threshold))
        .count();

    let a_path_summary = (0..=steps)
        .map(|node| {
            let (mut mean, mut std) = (Vec::with_capacity(da), Vec::with_capacity(da));
            for j in 0..da {
                let col: Vec<f64> = sols
                    .iter()
                    .flat_map(|s| (0..n).map(move |p| s.a_row(node, p)[j]))
                    .collect();
                mean.push(stats::mean(&col));
                std.push(if col.len() > 1 {
                    stats::variance(&col).sqrt()
                } else {
                    0.0
                });
            }
            NodeStats {
                t: first.grid.time(node),
                mean,
                std,
            }
        })
        .collect();

    let y0s: Vec<f64> = sols.iter().map(|s| s.y0).collect();
    let (y0, y0_stderr) = if sols.len() > 1 {
        (stats::mean(&y0s), stats::std_error(&y0s))
    } else {
        (first.y0, first.y0_stderr)
    };
    Ok(EosDemoResult {
        member_occupancy,
        occupancy_stderr,
        min_medial_gap,
        medial_hit_fraction: hits as f64 / samples,
        gap_threshold,
        dx_equiv,
        a_path_summary,
        y0,
        y0_stderr,
        cauchy: None,
    })
}

/// Writes one row per path and node: `t,path_id,Y,Z_1..,A_1..`.
pub fn write_paths_csv<W: Write>(sol: &BsdeSolution, w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let da = if sol.a.is_empty() { 0 } else { sol.dim_a };
    let mut header = vec!["t".to_string(), "path_id".into(), "Y".into()];
    header.extend((1..=sol.dim_b).map(|k| format!("Z_{k}")));
    header.extend((1..=da).map(|k| format!("A_{k}")));
    out.write_record(&header)?;
    let times: Vec<String> = (0..sol.n_nodes())
        .map(|i| format_float(sol.grid.time(i)))
        .collect();
    let mut row = Vec::with_capacity(header.len());
    for p in 0..sol.n_paths {
        for (node, t) in times.iter().enumerate() {
            row.clear();
            row.push(t.clone());
            row.push(p.to_string());
            row.push(format_float(sol.y_at(node)[p]));
            row.extend(sol.z_row(node, p).iter().map(|v| format_float(*v)));
            if da > 0 {
                row.extend(sol.a_row(node, p).iter().map(|v| format_float(*v)));
            }
            out.write_record(&row)?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::StateFn;
    use crate::engine::{McParams, SdeSpec, Terminal, TimeGrid};
    use crate::uncertainty::UncertaintySet;

    fn sweep_base(set: UncertaintySet, n_paths: usize) -> Scenario {
        Scenario {
            sde: SdeSpec::brownian(1),
            driver: DriverSpec::GLimit,
            set,
            terminal: Terminal::power(1, 0, 2).clamped(0.0, 4.0),
            grid: TimeGrid::new(0.0, 1.0, 10).unwrap(),
            mc: McParams::new(n_paths, 11),
        }
    }

    fn pieces() -> UncertaintySet {
        UncertaintySet::union(vec![
            UncertaintySet::interval(-2.0, -1.0).unwrap(),
            UncertaintySet::interval(1.0, 2.0).unwrap(),
        ])
        .unwrap()
    }

    fn eos_base(set: UncertaintySet, g: StateFn, n_paths: usize, n_steps: usize) -> Scenario {
        Scenario {
            sde: SdeSpec::scalar(1.0, 0.0, 0.5),
            driver: DriverSpec::RegularizedProjection {
                h: StateFn::zero(1),
                g,
                eps: 0.1,
            },
            set,
            terminal: Terminal::linear(1, 0),
            grid: TimeGrid::new(0.0, 1.0, n_steps).unwrap(),
            mc: McParams::new(n_paths, 5),
        }
    }

    fn eos_g() -> StateFn {
        StateFn {
            cx: vec![vec![1.0]],
            cz: vec![vec![0.2]],
            ..StateFn::zero(1)
        }
    }

    #[test]
    fn sweep_rejects_bad_input() {
        let base = sweep_base(UncertaintySet::interval(1.0, 2.0).unwrap(), 200);
        let spec = |e: Vec<f64>| SweepSpec {
            epsilons: e,
            a0: None,
        };
        assert!(epsilon_sweep(&base, &spec(vec![0.1, 0.2])).is_err());
        assert!(epsilon_sweep(&base, &spec(vec![])).is_err());
        assert!(epsilon_sweep(&base, &spec(vec![0.5, -0.1])).is_err());
        let unbounded = Scenario {
            terminal: Terminal::power(1, 0, 2),
            ..base.clone()
        };
        assert!(epsilon_sweep(&unbounded, &spec(vec![0.5])).is_err());
        let nonconvex = sweep_base(pieces(), 200);
        assert!(epsilon_sweep(&nonconvex, &spec(vec![0.5])).is_err());
    }

    #[test]
    fn singleton_regularization_is_inert() {
        let p = AmbientPoint::new(vec![1.5]).unwrap();
        let base = sweep_base(UncertaintySet::point_cloud(vec![p]).unwrap(), 2000);
        let r = epsilon_sweep(
            &base,
            &SweepSpec {
                epsilons: vec![0.5, 0.25, 0.125],
                a0: None,
            },
        )
        .unwrap();
        assert_eq!(r.a0, vec![1.5]);
        for (e, se) in r.sup_y_err.iter().zip(&r.sup_y_err_stderr) {
            assert!(*e <= 3.0 * se.max(r.reference_y0_stderr), "err {e}");
            assert!(*e <= 1e-12);
        }
    }

    #[test]
    fn sweep_errors_shrink_with_eps() {
        let base = sweep_base(UncertaintySet::interval(1.0, 2.0).unwrap(), 4000);
        let eps = vec![0.5, 0.25, 0.125, 0.0625];
        let r = epsilon_sweep(
            &base,
            &SweepSpec {
                epsilons: eps.clone(),
                a0: None,
            },
        )
        .unwrap();
        assert_eq!(r.epsilons, eps);
        assert_eq!(r.a0, vec![1.5]);
        assert!(r.sup_y_err.iter().chain(&r.z_err_l2).all(|e| *e >= 0.0));
        assert!(r.monotone, "{:?}", r.sup_y_err);
        // The regularized driver sits below the limit, so Y^eps <= Y^ref at t0.
        assert!(r.y0.iter().all(|y| *y <= r.reference_y0 + 1e-12));
        let mut csv = Vec::new();
        write_sweep_csv(&r, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("epsilon,sup_y_err,z_err_l2\n5.0000000000000000e-1,"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn eos_rejects_single_member() {
        let base = eos_base(
            UncertaintySet::interval(1.0, 2.0).unwrap(),
            eos_g(),
            100,
            10,
        );
        assert!(eos_demo(&base, &EosSpec::default()).is_err());
        let zero = Scenario {
            driver: DriverSpec::Zero,
            ..eos_base(pieces(), eos_g(), 100, 10)
        };
        assert!(eos_demo(&zero, &EosSpec::default()).is_err());
    }

    #[test]
    fn constant_target_stays_in_one_member() {
        let base = eos_base(pieces(), StateFn::constant(vec![1.65]), 500, 20);
        let (r, _) = eos_demo(&base, &EosSpec::default()).unwrap();
        assert_eq!(r.member_occupancy, vec![0.0, 1.0]);
        assert_eq!(r.medial_hit_fraction, 0.0);
        assert_eq!(r.dx_equiv, 0.0);
        // |1.5 - (-1)| - |1.5 - 1.5|
        assert!((r.min_medial_gap.unwrap() - 2.5).abs() < 1e-12);
        assert!(r
            .a_path_summary
            .iter()
            .all(|s| (s.mean[0] - 1.5).abs() < 1e-12 && s.std[0] < 1e-12));
    }

    #[test]
    fn occupancy_follows_relabeling() {
        let base = eos_base(pieces(), eos_g(), 2000, 40);
        let (r, _) = eos_demo(&base, &EosSpec::default()).unwrap();
        assert!((r.member_occupancy.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!((0.0..=1.0).contains(&r.medial_hit_fraction));
        let swapped = UncertaintySet::union(vec![
            UncertaintySet::interval(1.0, 2.0).unwrap(),
            UncertaintySet::interval(-2.0, -1.0).unwrap(),
        ])
        .unwrap();
        let (s, _) = eos_demo(
            &Scenario {
                set: swapped,
                ..base
            },
            &EosSpec::default(),
        )
        .unwrap();
        assert_eq!(r.member_occupancy[0], s.member_occupancy[1]);
        assert_eq!(r.member_occupancy[1], s.member_occupancy[0]);
        assert_eq!(r.medial_hit_fraction, s.medial_hit_fraction);
    }

    #[test]
    fn symmetric_cloud_splits_evenly() {
        let pts = vec![
            AmbientPoint::new(vec![-1.0]).unwrap(),
            AmbientPoint::new(vec![1.0]).unwrap(),
        ];
        let mut base = eos_base(
            UncertaintySet::point_cloud(pts).unwrap(),
            StateFn::linear_in_z(1.0),
            2_000,
            50,
        );
        base.sde = SdeSpec::brownian(1);
        base.terminal = Terminal::power(1, 0, 2);
        let (r, _) = eos_demo(
            &base,
            &EosSpec {
                replicas: 32,
                ..EosSpec::default()
            },
        )
        .unwrap();
        let dev = (r.member_occupancy[0] - 0.5).abs();
        assert!(
            dev <= 3.0 * r.occupancy_stderr[0],
            "occupancy {:?} stderr {:?}",
            r.member_occupancy,
            r.occupancy_stderr
        );
    }

    #[test]
    fn cauchy_sweep_is_labelled() {
        let base = eos_base(pieces(), eos_g(), 500, 20);
        let spec = EosSpec {
            gap_threshold: Some(0.05),
            cauchy_epsilons: vec![0.4, 0.2, 0.1],
            replicas: 1,
        };
        let (r, _) = eos_demo(&base, &spec).unwrap();
        assert_eq!(r.gap_threshold, 0.05);
        let c = r.cauchy.unwrap();
        assert_eq!(c.label, "cauchy_style");
        assert_eq!(c.reference_epsilon, 0.1);
        assert_eq!(c.epsilons, vec![0.4, 0.2]);
        assert!(c.sup_y_err[0] >= c.sup_y_err[1]);
    }

    #[test]
    fn paths_csv_layout() {
        let base = eos_base(pieces(), eos_g(), 30, 4);
        let (_, sol) = eos_demo(&base, &EosSpec::default()).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&sol, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,path_id,Y,Z_1,A_1");
        assert_eq!(lines.len(), 1 + 30 * 5);
        assert!(lines[1].starts_with("0.0000000000000000e0,0,"));
    }
}
