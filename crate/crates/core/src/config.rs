//! Scenario files.
//!
//! A scenario is a TOML document (JSON is accepted when the text starts with
//! `{`). Top-level keys:
//!
//! | key | content |
//! |-----|---------|
//! | `name` | optional output prefix |
//! | `kind` | `solve`, `fk_check`, `epsilon_sweep`, `eos_demo`, `theta_bm`, `theta_qv`, `axiom_check`, `martingale_check` |
//! | `[set]` | `type = "box" \| "ball" \| "point_cloud" \| "union"` plus its fields |
//! | `[driver]` | `type = "zero" \| "affine" \| "projection" \| "regularized_projection" \| "g_regularized" \| "g_limit"` |
//! | `[sde]` | `x0`, `sigma`, optional `drift`, `drift_linear`, `sigma_linear`; defaults to a 1-d Brownian motion |
//! | `[terminal]` | `terms = [{ coef, powers }]`, optional `positive_part`, `clamp = [lo, hi]` |
//! | `[grid]` | `T`, `n_steps`, optional `t0` |
//! | `[mc]` | `n_paths`, `seed` (required), optional `regression_degree`, `picard_iters` |
//! | `[pde]` | `n_x`, optional `x_min`, `x_max`, `n_t` |
//! | `[sweep]`, `[eos]`, `[qv]`, `[axiom]`, `[martingale]` | per-kind settings |
//! | `[checks]` | acceptance thresholds for the run's invariants |
//!
//! ```toml
//! kind = "solve"
//! [set]
//! type = "box"
//! lower = [0.0]
//! upper = [1.0]
//! [driver]
//! type = "zero"
//! [terminal]
//! terms = [{ coef = 1.0, powers = [1] }]
//! [grid]
//! T = 1.0
//! n_steps = 10
//! [mc]
//! n_paths = 1000
//! seed = 7
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::drivers::DriverSpec;
use crate::engine::{Axiom, McParams, Scenario, SdeSpec, Terminal, TimeGrid};
use crate::experiments::{EosSpec, SweepSpec};
use crate::pde::{PdeGrid, PdeGridSpec};
use crate::theta_calc::MartingaleProcess;
use crate::uncertainty::{Shape, UncertaintySet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Solve,
    FkCheck,
    EpsilonSweep,
    EosDemo,
    ThetaBm,
    ThetaQv,
    AxiomCheck,
    MartingaleCheck,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Solve => "solve",
            Kind::FkCheck => "fk_check",
            Kind::EpsilonSweep => "epsilon_sweep",
            Kind::EosDemo => "eos_demo",
            Kind::ThetaBm => "theta_bm",
            Kind::ThetaQv => "theta_qv",
            Kind::AxiomCheck => "axiom_check",
            Kind::MartingaleCheck => "martingale_check",
        }
    }

    fn needs_terminal(self) -> bool {
        matches!(
            self,
            Kind::Solve | Kind::FkCheck | Kind::EpsilonSweep | Kind::EosDemo | Kind::AxiomCheck
        )
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QvSpec {
    /// Dimension of the Brownian motion.
    #[serde(default = "one")]
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSpec {
    #[serde(flatten)]
    pub process: MartingaleProcess,
    pub t_index: usize,
    pub s_index: usize,
    /// When false the run passes only if the martingale check fails.
    #[serde(default = "yes")]
    pub expect_martingale: bool,
}

/// Thresholds applied to the run's invariants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Checks {
    /// Absolute floor of the Monte Carlo vs PDE agreement band.
    pub fk_floor: f64,
    pub slope_band: (f64, f64),
    pub max_hit_fraction: f64,
    /// Relative tolerance on the realized quadratic variation.
    pub qv_tolerance: f64,
    /// Width of the martingale band in standard errors.
    pub martingale_k: f64,
}

impl Default for Checks {
    fn default() -> Self {
        Self {
            fk_floor: 0.02,
            slope_band: (0.4, 1.3),
            max_hit_fraction: 0.01,
            qv_tolerance: 0.05,
            martingale_k: 3.0,
        }
    }
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: Kind,
    pub set: Shape,
    pub driver: DriverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde: Option<SdeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Terminal>,
    pub grid: TimeGrid,
    pub mc: McParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeGridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eos: Option<EosSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qv: Option<QvSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axiom: Option<Axiom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub martingale: Option<MartingaleSpec>,
    #[serde(default)]
    pub checks: Checks,
}

/// Parse or validation failure, naming the first offending field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn fail<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

fn at(field: &str) -> impl Fn(crate::Error) -> ConfigError + '_ {
    move |e| ConfigError(format!("{field}: {e}"))
}

/// `line:column` (1-based) of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn field_error(path: &str, msg: &str) -> String {
    if let Some(rest) = msg.strip_prefix("missing field `") {
        let name = rest.split('`').next().unwrap_or(rest);
        return if path.is_empty() || path == "." {
            format!("{name} required")
        } else {
            format!("{path}.{name} required")
        };
    }
    if path.is_empty() || path == "." {
        msg.to_string()
    } else {
        format!("{path}: {msg}")
    }
}

/// Parses and validates a scenario.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let config: ScenarioConfig = if text.trim_start().starts_with('{') {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let inner = e.inner();
            let msg = field_error(&e.path().to_string(), &inner.to_string());
            ConfigError(msg)
        })?
    } else {
        let de = toml::Deserializer::parse(text).map_err(|e| toml_error(text, e))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let mut msg = field_error(&path, inner.message());
            if let Some(span) = inner.span() {
                let (l, c) = line_col(text, span.start);
                msg.push_str(&format!(" (line {l}, column {c})"));
            }
            ConfigError(msg)
        })?
    };
    config.validate()?;
    Ok(config)
}

fn toml_error(text: &str, e: toml::de::Error) -> ConfigError {
    let mut msg = format!("syntax error: {}", e.message());
    if let Some(span) = e.span() {
        let (l, c) = line_col(text, span.start);
        msg.push_str(&format!(" (line {l}, column {c})"));
    }
    ConfigError(msg)
}

fn check_shape(shape: &Shape, path: &str) -> Result<(), ConfigError> {
    match shape {
        Shape::Box { lower, upper } => {
            if lower.dim() != upper.dim() {
                return fail(format!(
                    "{path}.upper has {} coordinates, lower has {}",
                    upper.dim(),
                    lower.dim()
                ));
            }
            if let Some(i) = (0..lower.dim()).find(|&i| lower.coords()[i] > upper.coords()[i]) {
                return fail(format!("{path}.upper[{i}] is below {path}.lower[{i}]"));
            }
        }
        Shape::Ball { radius, .. } => {
            if !(radius.is_finite() && *radius > 0.0) {
                return fail(format!("{path}.radius must be positive, got {radius}"));
            }
        }
        Shape::PointCloud { points } => {
            if points.is_empty() {
                return fail(format!("{path}.points must not be empty"));
            }
            if let Some(i) = points.iter().position(|p| p.dim() != points[0].dim()) {
                return fail(format!("{path}.points[{i}] has a different dimension"));
            }
        }
        Shape::Union { members } => {
            if members.is_empty() {
                return fail(format!("{path}.members must not be empty"));
            }
            if let Some(i) = members.iter().position(|m| m.dim() != members[0].dim()) {
                return fail(format!("{path}.members[{i}] has a different dimension"));
            }
        }
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn sde(&self) -> SdeSpec {
        self.sde.clone().unwrap_or_else(|| SdeSpec::brownian(1))
    }

    pub fn uncertainty_set(&self) -> Result<UncertaintySet, ConfigError> {
        check_shape(&self.set, "set")?;
        UncertaintySet::from_shape(self.set.clone()).map_err(at("set"))
    }

    /// The solver scenario. Kinds without a payoff get a zero terminal.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        Ok(Scenario {
            sde: self.sde(),
            driver: self.driver.clone(),
            set: self.uncertainty_set()?,
            terminal: self
                .terminal
                .clone()
                .unwrap_or_else(|| Terminal::constant(0.0)),
            grid: self.grid.clone(),
            mc: self.mc.clone(),
        })
    }

    pub fn pde_grid(&self) -> Result<PdeGrid, ConfigError> {
        let spec = self.pde.clone().unwrap_or(PdeGridSpec {
            n_x: 201,
            ..Default::default()
        });
        PdeGrid::from_spec(&spec, &self.sde(), &self.grid).map_err(at("pde"))
    }

    /// Checks every field and cross-field dimension without simulating.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) {
                return fail("name must be a nonempty file stem");
            }
        }
        if self.mc.n_paths == 0 {
            return fail("mc.n_paths must be at least 1");
        }
        if self.grid.n_steps == 0 {
            return fail("grid.n_steps must be at least 1");
        }
        self.grid.validate().map_err(at("grid"))?;
        let set = self.uncertainty_set()?;
        let sde = self.sde();
        sde.validate().map_err(at("sde"))?;
        let (dx, db) = (sde.dim_x(), sde.dim_b());
        if self.kind.needs_terminal() && self.terminal.is_none() {
            return fail(format!("terminal required for kind {}", self.kind));
        }
        if let Some(t) = &self.terminal {
            t.validate(dx).map_err(at("terminal"))?;
        }
        let driver_dims = match self.kind {
            Kind::ThetaBm => (1, 1),
            Kind::ThetaQv => {
                let d = self.qv.as_ref().map_or(1, |q| q.dim);
                if d == 0 {
                    return fail("qv.dim must be positive");
                }
                (d, d)
            }
            Kind::MartingaleCheck => (db, db),
            _ => (dx, db),
        };
        self.driver
            .validate(&set, driver_dims.0, driver_dims.1)
            .map_err(at("driver"))?;
        let c = &self.checks;
        if !(c.fk_floor >= 0.0
            && c.max_hit_fraction >= 0.0
            && c.qv_tolerance >= 0.0
            && c.martingale_k > 0.0)
        {
            return fail("checks: thresholds must be nonnegative");
        }
        if !(c.slope_band.0 <= c.slope_band.1) {
            return fail("checks.slope_band must be an ordered pair");
        }
        self.validate_kind(&set, dx)
    }

    fn validate_kind(&self, set: &UncertaintySet, dx: usize) -> Result<(), ConfigError> {
        match self.kind {
            Kind::Solve | Kind::ThetaQv => Ok(()),
            Kind::FkCheck => {
                if dx != 1 || self.sde().dim_b() != 1 {
                    return fail("sde must be one-dimensional for fk_check");
                }
                self.pde_grid().map(|_| ())
            }
            Kind::EpsilonSweep => {
                let Some(sweep) = &self.sweep else {
                    return fail("sweep required for kind epsilon_sweep");
                };
                if !matches!(self.driver, DriverSpec::GLimit) {
                    return fail(
                        "driver.type must be g_limit for epsilon_sweep (the reference solve)",
                    );
                }
                if !set.is_convex() {
                    return fail("set must be convex for epsilon_sweep");
                }
                if !self.terminal.as_ref().is_some_and(Terminal::is_bounded) {
                    return fail("terminal.clamp required for epsilon_sweep");
                }
                if sweep.epsilons.is_empty() {
                    return fail("sweep.epsilons must not be empty");
                }
                if sweep.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                    return fail("sweep.epsilons must be positive");
                }
                if sweep.epsilons.windows(2).any(|w| w[1] >= w[0]) {
                    return fail("sweep.epsilons must be strictly decreasing");
                }
                if let Some(a0) = &sweep.a0 {
                    let probe = DriverSpec::GRegularized {
                        eps: sweep.epsilons[0],
                        a0: a0.clone(),
                    };
                    probe
                        .validate(set, dx, self.sde().dim_b())
                        .map_err(at("sweep.a0"))?;
                }
                Ok(())
            }
            Kind::EosDemo => {
                if !matches!(self.driver, DriverSpec::RegularizedProjection { .. }) {
                    return fail("driver.type must be regularized_projection for eos_demo");
                }
                if !matches!(self.set, Shape::Union { .. } | Shape::PointCloud { .. })
                    || set.member_count() < 2
                {
                    return fail("set must have at least two members for eos_demo");
                }
                if !set.members_disjoint() {
                    return fail("set.members must be disjoint");
                }
                let eos = self.eos.clone().unwrap_or_default();
                if eos.replicas == 0 {
                    return fail("eos.replicas must be at least 1");
                }
                if eos
                    .gap_threshold
                    .is_some_and(|g| !(g.is_finite() && g >= 0.0))
                {
                    return fail("eos.gap_threshold must be nonnegative");
                }
                if eos.cauchy_epsilons.windows(2).any(|w| w[1] >= w[0])
                    || eos
                        .cauchy_epsilons
                        .iter()
                        .any(|e| !(e.is_finite() && *e > 0.0))
                {
                    return fail("eos.cauchy_epsilons must be positive and strictly decreasing");
                }
                Ok(())
            }
            Kind::ThetaBm => Ok(()),
            Kind::AxiomCheck => {
                let Some(axiom) = &self.axiom else {
                    return fail("axiom required for kind axiom_check");
                };
                match axiom {
                    Axiom::Translation { .. } if !self.driver.is_y_independent() => {
                        fail("axiom: translation needs a driver that does not depend on y")
                    }
                    Axiom::Tower { s_index } if *s_index > self.grid.n_steps => fail(format!(
                        "axiom.s_index must not exceed grid.n_steps = {}",
                        self.grid.n_steps
                    )),
                    Axiom::Monotonicity { dominated } => {
                        dominated.validate(dx).map_err(at("axiom.dominated"))
                    }
                    _ => Ok(()),
                }
            }
            Kind::MartingaleCheck => {
                let Some(m) = &self.martingale else {
                    return fail("martingale required for kind martingale_check");
                };
                if m.t_index >= m.s_index {
                    return fail("martingale.s_index must exceed martingale.t_index");
                }
                if m.s_index > self.grid.n_steps {
                    return fail(format!(
                        "martingale.s_index must not exceed grid.n_steps = {}",
                        self.grid.n_steps
                    ));
                }
                let db = self.sde().dim_b();
                match &m.process {
                    MartingaleProcess::ThetaBm if db != 1 => {
                        fail("martingale: theta_bm needs a one-dimensional sde")
                    }
                    MartingaleProcess::LinearBm { coefficients } if coefficients.len() != db => {
                        fail(format!("martingale.coefficients must have {db} entries"))
                    }
                    _ => Ok(()),
                }
            }
        }
    }
}
