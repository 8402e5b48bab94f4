//! Explicit finite differences for the scalar semilinear parabolic equation
//! `u_t + b u_x + sigma^2 u_xx / 2 + F~(t, x, u, u_x sigma) = 0`, `u(T) = phi`,
//! solved backward from the terminal time.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::drivers::DriverSpec;
use crate::engine::{solve_theta_bsde, Scenario, SdeSpec, Terminal, TimeGrid};
use crate::error::{check_dim, Error, Result};
use crate::output::format_float;
use crate::uncertainty::UncertaintySet;

/// Relative safety margin in the explicit stability bound.
pub const CFL_MARGIN: f64 = 0.1;
pub const MIN_NODES: usize = 8;

/// Space-time grid. `n_t` steps of size `dt` cover `[t0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub n_t: usize,
    pub t0: f64,
    pub horizon: f64,
}

/// Grid request as written in a configuration; missing fields take defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PdeGridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    pub n_x: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_t: Option<usize>,
}

impl PdeGrid {
    /// Checks the explicit stability bound `dt <= dx^2 / (sigma_max^2 (1 + margin))`.
    pub fn new(
        x_min: f64,
        x_max: f64,
        n_x: usize,
        n_t: usize,
        time: &TimeGrid,
        sigma_max: f64,
    ) -> Result<Self> {
        if n_x < MIN_NODES {
            return Err(Error::invalid(format!(
                "n_x must be at least {MIN_NODES}, got {n_x}"
            )));
        }
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::invalid(format!(
                "spatial domain [{x_min}, {x_max}] is empty"
            )));
        }
        if n_t == 0 {
            return Err(Error::invalid("n_t must be positive"));
        }
        time.validate()?;
        let g = Self {
            x_min,
            x_max,
            n_x,
            n_t,
            t0: time.t0,
            horizon: time.horizon,
        };
        let bound = g.dt_bound(sigma_max);
        if g.dt() > bound {
            return Err(Error::Cfl { dt: g.dt(), bound });
        }
        Ok(g)
    }

    /// Smallest number of time steps meeting the stability bound.
    pub fn with_auto_steps(
        x_min: f64,
        x_max: f64,
        n_x: usize,
        time: &TimeGrid,
        sigma_max: f64,
    ) -> Result<Self> {
        if n_x < MIN_NODES {
            return Err(Error::invalid(format!(
                "n_x must be at least {MIN_NODES}, got {n_x}"
            )));
        }
        let probe = Self {
            x_min,
            x_max,
            n_x,
            n_t: 1,
            t0: time.t0,
            horizon: time.horizon,
        };
        let bound = probe.dt_bound(sigma_max);
        let mut n_t = ((time.horizon - time.t0) / bound).ceil().max(1.0) as usize;
        // guard against the division landing a hair above the bound
        while (time.horizon - time.t0) / n_t as f64 > bound {
            n_t += 1;
        }
        Self::new(x_min, x_max, n_x, n_t, time, sigma_max)
    }

    /// Resolves a configured grid for a scalar SDE; the default domain is
    /// `x0 +- 6 sigma_max sqrt(T - t0)`.
    pub fn from_spec(spec: &PdeGridSpec, sde: &SdeSpec, time: &TimeGrid) -> Result<Self> {
        check_dim(1, sde.dim_x())?;
        check_dim(1, sde.dim_b())?;
        let x0 = sde.x0[0];
        let s0 = sde.sigma_at(0, 0, &[x0]).abs();
        let half = 6.0 * s0.max(1e-12) * (time.horizon - time.t0).sqrt();
        let x_min = spec.x_min.unwrap_or(x0 - half);
        let x_max = spec.x_max.unwrap_or(x0 + half);
        let sigma_max = sde.scalar_sigma_max(x_min, x_max);
        match spec.n_t {
            Some(n_t) => Self::new(x_min, x_max, spec.n_x, n_t, time, sigma_max),
            None => Self::with_auto_steps(x_min, x_max, spec.n_x, time, sigma_max),
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_x - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.t0) / self.n_t as f64
    }

    pub fn dt_bound(&self, sigma_max: f64) -> f64 {
        let dx = self.dx();
        if sigma_max == 0.0 {
            f64::INFINITY
        } else {
            dx * dx / (sigma_max * sigma_max * (1.0 + CFL_MARGIN))
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n_x - 1 {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        if j == self.n_t {
            self.horizon
        } else {
            self.t0 + j as f64 * self.dt()
        }
    }
}

/// Solution values on the grid, row `j` holding time `t(j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueSurface {
    pub grid: PdeGrid,
    pub u: Vec<f64>,
}

impl ValueSurface {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.u[j * self.grid.n_x..(j + 1) * self.grid.n_x]
    }

    /// Linear interpolation of row `j` at `x`, clamped to the domain.
    pub fn interpolate(&self, j: usize, x: f64) -> f64 {
        let g = &self.grid;
        let s = ((x - g.x_min) / g.dx()).clamp(0.0, (g.n_x - 1) as f64);
        let i = (s.floor() as usize).min(g.n_x - 2);
        let w = s - i as f64;
        let r = self.row(j);
        (1.0 - w) * r[i] + w * r[i + 1]
    }

    pub fn initial_value(&self, x: f64) -> f64 {
        self.interpolate(0, x)
    }

    /// Writes `t,x,u` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "x", "u"])?;
        for j in 0..=self.grid.n_t {
            let t = format_float(self.grid.t(j));
            for (i, u) in self.row(j).iter().enumerate() {
                out.write_record([t.as_str(), &format_float(self.grid.x(i)), &format_float(*u)])?;
            }
        }
        out.flush()
    }
}

pub fn solve_pde(
    driver: &DriverSpec,
    set: &UncertaintySet,
    sde: &SdeSpec,
    terminal: &Terminal,
    grid: &PdeGrid,
) -> Result<ValueSurface> {
    check_dim(1, sde.dim_x())?;
    check_dim(1, sde.dim_b())?;
    sde.validate()?;
    terminal.validate(1)?;
    driver.validate(set, 1, 1)?;
    let sigma_max = sde.scalar_sigma_max(grid.x_min, grid.x_max);
    let bound = grid.dt_bound(sigma_max);
    if grid.dt() > bound {
        return Err(Error::Cfl {
            dt: grid.dt(),
            bound,
        });
    }
    let (nx, nt, dx, dt) = (grid.n_x, grid.n_t, grid.dx(), grid.dt());
    let xs: Vec<f64> = (0..nx).map(|i| grid.x(i)).collect();
    let drift: Vec<f64> = xs.iter().map(|x| sde.drift_at(0, &[*x])).collect();
    let vol: Vec<f64> = xs.iter().map(|x| sde.sigma_at(0, 0, &[*x])).collect();
    let mut u = vec![0.0; (nt + 1) * nx];
    for (i, x) in xs.iter().enumerate() {
        u[nt * nx + i] = terminal.evaluate(&[*x]);
    }
    for j in (0..nt).rev() {
        let t = grid.t(j + 1);
        let (head, tail) = u.split_at_mut((j + 1) * nx);
        let next = &tail[..nx];
        let cur = &mut head[j * nx..];
        for i in 1..nx - 1 {
            let ux = (next[i + 1] - next[i - 1]) / (2.0 * dx);
            let uxx = (next[i + 1] - 2.0 * next[i] + next[i - 1]) / (dx * dx);
            let f = driver.effective_value(set, t, &[xs[i]], next[i], &[ux * vol[i]]);
            cur[i] = next[i] + dt * (drift[i] * ux + 0.5 * vol[i] * vol[i] * uxx + f);
        }
        cur[0] = 2.0 * cur[1] - cur[2];
        cur[nx - 1] = 2.0 * cur[nx - 2] - cur[nx - 3];
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::PdeBlowUp { step: j });
        }
    }
    Ok(ValueSurface {
        grid: grid.clone(),
        u,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeynmanKacReport {
    pub y0_mc: f64,
    pub u0: f64,
    pub abs_err: f64,
    pub stderr: f64,
}

impl FeynmanKacReport {
    /// Agreement within `max(floor, 3 stderr)`.
    pub fn agrees(&self, floor: f64) -> bool {
        self.abs_err <= floor.max(3.0 * self.stderr)
    }
}

/// Solves the same scalar problem by regression Monte Carlo and by finite
/// differences and compares the values at `(t0, x0)`.
pub fn feynman_kac_compare(
    scenario: &Scenario,
    grid: &PdeGrid,
) -> Result<(FeynmanKacReport, ValueSurface)> {
    let sol = solve_theta_bsde(scenario)?;
    let surface = solve_pde(
        &scenario.driver,
        &scenario.set,
        &scenario.sde,
        &scenario.terminal,
        grid,
    )?;
    let u0 = surface.initial_value(scenario.sde.x0[0]);
    let report = FeynmanKacReport {
        y0_mc: sol.y0,
        u0,
        abs_err: (sol.y0 - u0).abs(),
        stderr: sol.y0_stderr,
    };
    Ok((report, surface))
}
