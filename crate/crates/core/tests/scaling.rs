//! Monte Carlo rates across ensemble sizes.

use theta_bsde::drivers::{DriverSpec, StateFn};
use theta_bsde::engine::{solve_theta_bsde, McParams, Scenario, SdeSpec, Terminal, TimeGrid};
use theta_bsde::stats;
use theta_bsde::theta_calc::{verify_theta_martingale, MartingaleProcess};
use theta_bsde::uncertainty::UncertaintySet;

const SIZES: [usize; 3] = [1_000, 10_000, 100_000];

fn scenario(
    driver: DriverSpec,
    terminal: Terminal,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Scenario {
    Scenario {
        sde: SdeSpec::brownian(1),
        driver,
        set: UncertaintySet::interval(0.0, 1.0).unwrap(),
        terminal,
        grid: TimeGrid::new(0.0, 1.0, n_steps).unwrap(),
        mc: McParams::new(n_paths, seed),
    }
}

fn reg_proj() -> DriverSpec {
    DriverSpec::RegularizedProjection {
        h: StateFn::zero(1),
        g: StateFn::linear_in_z(1.0),
        eps: 0.5,
    }
}

#[test]
fn y0_variance_falls_like_inverse_paths() {
    const REPLICAS: u64 = 40;
    let mut variances = Vec::new();
    for n in SIZES {
        let y0: Vec<f64> = (0..REPLICAS)
            .map(|r| {
                solve_theta_bsde(&scenario(
                    reg_proj(),
                    Terminal::linear(1, 0).positive(),
                    10,
                    n,
                    1000 + r,
                ))
                .unwrap()
                .y0
            })
            .collect();
        variances.push(stats::variance(&y0));
    }
    let ns: Vec<f64> = SIZES.iter().map(|&n| n as f64).collect();
    let slope = stats::log_log_slope(&ns, &variances);
    assert!(
        (slope + 1.0).abs() <= 0.2,
        "slope {slope}, variances {variances:?}"
    );
}

#[test]
fn theta_bm_martingale_residual_shrinks_at_root_rate() {
    const REPLICAS: u64 = 12;
    let driver = DriverSpec::Affine {
        alpha: 0.7,
        beta: 0.0,
        gamma: vec![],
    };
    let mut residuals = Vec::new();
    for n in SIZES {
        let mut sum = 0.0;
        for r in 0..REPLICAS {
            let sc = scenario(driver.clone(), Terminal::constant(0.0), 10, n, 2000 + r);
            let rep = verify_theta_martingale(&sc, &MartingaleProcess::ThetaBm, 0, 10).unwrap();
            assert!(rep.within(4.0), "n={n} replica {r}: {rep:?}");
            sum += rep.residual;
        }
        residuals.push(sum / REPLICAS as f64);
    }
    let ns: Vec<f64> = SIZES.iter().map(|&n| n as f64).collect();
    let slope = stats::log_log_slope(&ns, &residuals);
    assert!(
        (slope + 0.5).abs() <= 0.2,
        "slope {slope}, residuals {residuals:?}"
    );
}
