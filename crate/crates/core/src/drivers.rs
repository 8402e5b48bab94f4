//! Driver families `F(t, x, y, z, a)`, their maximizer maps and the
//! effective driver `max_a F`.
//!
//! Projection-type drivers reduce to a metric projection onto the uncertainty
//! set, so their maximizers are computed in closed form. [`GridOracle`] is an
//! independent brute-force search used to check those closed forms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ambient::{distance, dot, embed_outer, norm, packed_len, AmbientPoint};
use crate::error::{check_dim, Error, Result};
use crate::uncertainty::{Shape, UncertaintySet};

/// Affine map `(t, x, y, z) -> c0 + ct*t + Cx x + cy*y + Cz z`.
///
/// Empty `cx` / `cz` blocks stand for zero matrices of whatever width the
/// scenario uses; empty `ct` / `cy` stand for zero vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFn {
    pub c0: Vec<f64>,
    #[serde(default)]
    pub ct: Vec<f64>,
    #[serde(default)]
    pub cx: Vec<Vec<f64>>,
    #[serde(default)]
    pub cy: Vec<f64>,
    #[serde(default)]
    pub cz: Vec<Vec<f64>>,
}

impl StateFn {
    pub fn constant(c0: Vec<f64>) -> Self {
        Self {
            c0,
            ct: vec![],
            cx: vec![],
            cy: vec![],
            cz: vec![],
        }
    }

    pub fn zero(out_dim: usize) -> Self {
        Self::constant(vec![0.0; out_dim])
    }

    /// Scalar map `z -> slope * z` for a one-dimensional `z`.
    pub fn linear_in_z(slope: f64) -> Self {
        Self {
            cz: vec![vec![slope]],
            ..Self::constant(vec![0.0])
        }
    }

    pub fn out_dim(&self) -> usize {
        self.c0.len()
    }

    pub fn validate(&self, dim_x: usize, dim_z: usize) -> Result<()> {
        let n = self.out_dim();
        if n == 0 {
            return Err(Error::invalid(
                "state function must have a nonempty constant term",
            ));
        }
        for (name, v) in [("ct", &self.ct), ("cy", &self.cy)] {
            if !v.is_empty() && v.len() != n {
                return Err(Error::invalid(format!(
                    "{name} has length {}, expected {n}",
                    v.len()
                )));
            }
        }
        for (name, m, w) in [("cx", &self.cx, dim_x), ("cz", &self.cz, dim_z)] {
            if m.is_empty() {
                continue;
            }
            if m.len() != n {
                return Err(Error::invalid(format!(
                    "{name} has {} rows, expected {n}",
                    m.len()
                )));
            }
            if let Some(row) = m.iter().find(|r| r.len() != w) {
                return Err(Error::invalid(format!(
                    "{name} row has length {}, expected {w}",
                    row.len()
                )));
            }
        }
        let all = self
            .c0
            .iter()
            .chain(&self.ct)
            .chain(&self.cy)
            .chain(self.cx.iter().flatten())
            .chain(self.cz.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state function coefficients".into()));
        }
        Ok(())
    }

    pub fn eval_into(&self, t: f64, x: &[f64], y: f64, z: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mut v = self.c0[k];
            if !self.ct.is_empty() {
                v += self.ct[k] * t;
            }
            if !self.cx.is_empty() {
                v += dot(&self.cx[k], x);
            }
            if !self.cy.is_empty() {
                v += self.cy[k] * y;
            }
            if !self.cz.is_empty() {
                v += dot(&self.cz[k], z);
            }
            *o = v;
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim()];
        self.eval_into(t, x, y, z, &mut out);
        out
    }

    pub fn eval_scalar(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        let mut out = [0.0];
        self.eval_into(t, x, y, z, &mut out);
        out[0]
    }

    /// Lipschitz constant in `(y, z)` for the norm `|dy| + |dz|`.
    ///
    /// Uses the Frobenius norm of the `z` block, an upper bound on its
    /// operator norm (equal to it when the block has a single row).
    pub fn lipschitz_yz(&self) -> f64 {
        let cy = norm(&self.cy);
        let cz = self.cz.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        cy.max(cz)
    }

    /// Upper bound of `|f(t, x, y, z)|` over `|y| <= y_max`, `|z| <= z_max`.
    pub fn sup_norm(&self, t: f64, x: &[f64], y_max: f64, z_max: f64) -> f64 {
        let base = StateFn {
            cy: vec![],
            cz: vec![],
            ..self.clone()
        }
        .eval(t, x, 0.0, &[]);
        let cz = self.cz.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        norm(&base) + norm(&self.cy) * y_max + cz * z_max
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverSpec {
    Zero,
    /// `alpha + beta*y + <gamma, z>`, independent of `a`.
    Affine {
        alpha: f64,
        #[serde(default)]
        beta: f64,
        #[serde(default)]
        gamma: Vec<f64>,
    },
    /// `h - |a - G|^2 / 2`.
    Projection {
        h: StateFn,
        g: StateFn,
    },
    /// `h - |a - G|^2 / 2 - eps |a|^2 / 2`.
    RegularizedProjection {
        h: StateFn,
        g: StateFn,
        eps: f64,
    },
    /// `<a, z^T z> / 2 - eps |a - a0|^2 / 2`.
    GRegularized {
        eps: f64,
        a0: AmbientPoint,
    },
    /// `sup_a <a, z^T z> / 2`, evaluated directly.
    GLimit,
}

/// Outcome of the pointwise maximization over the uncertainty set.
#[derive(Clone, Debug, PartialEq)]
pub struct Maximizer {
    pub astar: AmbientPoint,
    pub value: f64,
    /// Point whose projection gives `astar` (projection-type drivers only).
    pub query: Option<Vec<f64>>,
    pub member_index: Option<usize>,
    /// Medial gap of `query`; `None` is the `+inf` sentinel.
    pub medial_gap: Option<f64>,
}

/// Lipschitz constants entering the effective-driver bound
/// `L = f_yz + f_a * a_map`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzConstants {
    pub f_yz: f64,
    pub f_a: f64,
    pub a_map: f64,
    /// False when the maximizer map is a projection onto a non-convex set, in
    /// which case `a_map` is not a valid global constant.
    pub a_map_valid: bool,
}

impl LipschitzConstants {
    pub fn bound(&self) -> f64 {
        self.f_yz + self.f_a * self.a_map
    }
}

/// Region of `(y, z)` space sampled by [`empirical_lipschitz`], at fixed `(t, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBox {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: (f64, f64),
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
}

impl SampleBox {
    fn y_max(&self) -> f64 {
        self.y.0.abs().max(self.y.1.abs())
    }

    fn z_max(&self) -> f64 {
        self.z_lower
            .iter()
            .zip(&self.z_upper)
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl DriverSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DriverSpec::Zero => "zero",
            DriverSpec::Affine { .. } => "affine",
            DriverSpec::Projection { .. } => "projection",
            DriverSpec::RegularizedProjection { .. } => "regularized_projection",
            DriverSpec::GRegularized { .. } => "g_regularized",
            DriverSpec::GLimit => "g_limit",
        }
    }

    /// Checks parameters and dimensions against a set and state/noise sizes.
    pub fn validate(&self, set: &UncertaintySet, dim_x: usize, dim_z: usize) -> Result<()> {
        match self {
            DriverSpec::Zero => Ok(()),
            DriverSpec::Affine { alpha, beta, gamma } => {
                if !alpha.is_finite() || !beta.is_finite() || gamma.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite("affine driver coefficients".into()));
                }
                if !gamma.is_empty() {
                    check_dim(dim_z, gamma.len())?;
                }
                Ok(())
            }
            DriverSpec::Projection { h, g } => validate_projection(h, g, set, dim_x, dim_z),
            DriverSpec::RegularizedProjection { h, g, eps } => {
                check_eps(*eps)?;
                validate_projection(h, g, set, dim_x, dim_z)
            }
            DriverSpec::GRegularized { eps, a0 } => {
                check_eps(*eps)?;
                check_dim(packed_len(dim_z), set.dim())?;
                check_dim(set.dim(), a0.dim())?;
                if !set.contains(a0, 1e-9)? {
                    return Err(Error::invalid(
                        "reference point a0 must lie in the uncertainty set",
                    ));
                }
                Ok(())
            }
            DriverSpec::GLimit => check_dim(packed_len(dim_z), set.dim()),
        }
    }

    /// True for drivers whose argmax is the whole set.
    pub fn degenerate_argmax(&self) -> bool {
        matches!(
            self,
            DriverSpec::Zero | DriverSpec::Affine { .. } | DriverSpec::GLimit
        )
    }

    /// Flags the unregularized projection driver on a non-convex set, where
    /// the maximizer map is not globally Lipschitz.
    pub fn unsound_for_existence(&self, set: &UncertaintySet) -> bool {
        matches!(self, DriverSpec::Projection { .. }) && !set.is_convex()
    }

    /// Whether the driver ignores its `y` argument.
    pub fn is_y_independent(&self) -> bool {
        match self {
            DriverSpec::Affine { beta, .. } => *beta == 0.0,
            DriverSpec::Projection { h, g } | DriverSpec::RegularizedProjection { h, g, .. } => {
                h.cy.iter().all(|c| *c == 0.0) && g.cy.iter().all(|c| *c == 0.0)
            }
            _ => true,
        }
    }

    /// Whether `F~(t, x, y, 0) = 0` everywhere, so a bounded payoff bounds `Y`
    /// by the same constants.
    pub fn vanishes_at_zero_z(&self) -> bool {
        matches!(
            self,
            DriverSpec::Zero | DriverSpec::GLimit | DriverSpec::GRegularized { .. }
        )
    }

    /// `F(t, x, y, z, a)`.
    pub fn evaluate(&self, t: f64, x: &[f64], y: f64, z: &[f64], a: &AmbientPoint) -> Result<f64> {
        match self {
            DriverSpec::GLimit => Err(Error::Unsupported(
                "g_limit has no a-dependence; use effective_driver".into(),
            )),
            DriverSpec::Projection { g, .. } | DriverSpec::RegularizedProjection { g, .. } => {
                check_dim(g.out_dim(), a.dim())?;
                Ok(self.evaluate_coords(t, x, y, z, a.coords()))
            }
            DriverSpec::GRegularized { a0, .. } => {
                check_dim(a0.dim(), a.dim())?;
                check_dim(packed_len(z.len()), a.dim())?;
                Ok(self.evaluate_coords(t, x, y, z, a.coords()))
            }
            _ => Ok(self.evaluate_coords(t, x, y, z, a.coords())),
        }
    }

    pub(crate) fn evaluate_coords(&self, t: f64, x: &[f64], y: f64, z: &[f64], a: &[f64]) -> f64 {
        match self {
            DriverSpec::Zero => 0.0,
            DriverSpec::Affine { alpha, beta, gamma } => {
                let lin = if gamma.is_empty() { 0.0 } else { dot(gamma, z) };
                alpha + beta * y + lin
            }
            DriverSpec::Projection { h, g } => {
                let gv = g.eval(t, x, y, z);
                h.eval_scalar(t, x, y, z) - 0.5 * distance(a, &gv).powi(2)
            }
            DriverSpec::RegularizedProjection { h, g, eps } => {
                let gv = g.eval(t, x, y, z);
                h.eval_scalar(t, x, y, z) - 0.5 * distance(a, &gv).powi(2) - 0.5 * eps * dot(a, a)
            }
            DriverSpec::GRegularized { eps, a0 } => {
                let c = embed_outer(z);
                0.5 * dot(a, &c) - 0.5 * eps * distance(a, a0.coords()).powi(2)
            }
            DriverSpec::GLimit => f64::NAN,
        }
    }

    /// Point whose projection onto the set is the maximizer.
    pub(crate) fn query_point(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> Option<Vec<f64>> {
        match self {
            DriverSpec::Projection { g, .. } => Some(g.eval(t, x, y, z)),
            DriverSpec::RegularizedProjection { g, eps, .. } => Some(
                g.eval(t, x, y, z)
                    .into_iter()
                    .map(|v| v / (1.0 + eps))
                    .collect(),
            ),
            DriverSpec::GRegularized { eps, a0 } => {
                let c = embed_outer(z);
                Some(
                    a0.coords()
                        .iter()
                        .zip(&c)
                        .map(|(a, ci)| a + ci / (2.0 * eps))
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// Closed-form maximizer of `a -> F(t, x, y, z, a)` over `set`.
    pub fn maximizer(
        &self,
        set: &UncertaintySet,
        t: f64,
        x: &[f64],
        y: f64,
        z: &[f64],
    ) -> Result<Maximizer> {
        if let DriverSpec::GLimit = self {
            return Err(Error::Unsupported(
                "g_limit has no unique maximizer; use effective_driver".into(),
            ));
        }
        match self.query_point(t, x, y, z) {
            Some(q) => {
                check_dim(set.dim(), q.len())?;
                let proj = set.project_coords(&q);
                let value = self.evaluate_coords(t, x, y, z, proj.point.coords());
                Ok(Maximizer {
                    value,
                    astar: proj.point,
                    query: Some(q),
                    member_index: proj.member_index,
                    medial_gap: proj.medial_gap,
                })
            }
            None => {
                let astar = set.anchor_point();
                let value = self.evaluate_coords(t, x, y, z, astar.coords());
                Ok(Maximizer {
                    astar,
                    value,
                    query: None,
                    member_index: None,
                    medial_gap: None,
                })
            }
        }
    }

    /// `max_a F(t, x, y, z, a)` and the maximizer (absent for `GLimit`).
    pub fn effective_driver(
        &self,
        set: &UncertaintySet,
        t: f64,
        x: &[f64],
        y: f64,
        z: &[f64],
    ) -> Result<(f64, Option<AmbientPoint>)> {
        match self {
            DriverSpec::GLimit => {
                check_dim(packed_len(z.len()), set.dim())?;
                Ok((self.effective_value(set, t, x, y, z), None))
            }
            _ => {
                let m = self.maximizer(set, t, x, y, z)?;
                Ok((m.value, Some(m.astar)))
            }
        }
    }

    /// Effective-driver value without dimension checks. Hot path of the solver.
    pub(crate) fn effective_value(
        &self,
        set: &UncertaintySet,
        t: f64,
        x: &[f64],
        y: f64,
        z: &[f64],
    ) -> f64 {
        match self {
            DriverSpec::Zero => 0.0,
            DriverSpec::Affine { .. } => self.evaluate_coords(t, x, y, z, &[]),
            DriverSpec::GLimit => {
                let c: Vec<f64> = embed_outer(z).into_iter().map(|v| 0.5 * v).collect();
                set.linear_max_coords(&c).0
            }
            _ => {
                let q = self
                    .query_point(t, x, y, z)
                    .expect("projection-type driver");
                let proj = set.project_coords(&q);
                self.evaluate_coords(t, x, y, z, proj.point.coords())
            }
        }
    }

    /// Element of the argmax used when recording the adversarial process.
    /// For `GLimit` this is the linear maximizer, one of possibly many.
    pub(crate) fn argmax_record(
        &self,
        set: &UncertaintySet,
        t: f64,
        x: &[f64],
        y: f64,
        z: &[f64],
    ) -> Maximizer {
        match self {
            DriverSpec::GLimit => {
                let c: Vec<f64> = embed_outer(z).into_iter().map(|v| 0.5 * v).collect();
                let (value, arg) = set.linear_max_coords(&c);
                Maximizer {
                    astar: AmbientPoint::from_vec_unchecked(arg),
                    value,
                    query: None,
                    member_index: None,
                    medial_gap: None,
                }
            }
            _ => self.maximizer(set, t, x, y, z).expect("validated driver"),
        }
    }

    /// Lipschitz constants of `F` over the sample box, assembled from the
    /// driver coefficients and the geometry of `set`.
    pub fn lipschitz_constants(
        &self,
        set: &UncertaintySet,
        sample: &SampleBox,
    ) -> Result<LipschitzConstants> {
        let r_u = set.max_norm();
        let (y_max, z_max) = (sample.y_max(), sample.z_max());
        let c = match self {
            DriverSpec::Zero => LipschitzConstants {
                f_yz: 0.0,
                f_a: 0.0,
                a_map: 0.0,
                a_map_valid: true,
            },
            DriverSpec::Affine { beta, gamma, .. } => LipschitzConstants {
                f_yz: beta.abs().max(norm(gamma)),
                f_a: 0.0,
                a_map: 0.0,
                a_map_valid: true,
            },
            DriverSpec::Projection { h, g } => {
                projection_constants(h, g, 0.0, set, sample, r_u, y_max, z_max)
            }
            DriverSpec::RegularizedProjection { h, g, eps } => {
                projection_constants(h, g, *eps, set, sample, r_u, y_max, z_max)
            }
            DriverSpec::GRegularized { eps, a0 } => LipschitzConstants {
                f_yz: r_u * z_max,
                f_a: 0.5 * z_max * z_max + eps * set.sup_sq_distance_from(a0.coords()).sqrt(),
                a_map: z_max / eps,
                a_map_valid: set.is_convex(),
            },
            DriverSpec::GLimit => {
                return Err(Error::Unsupported("g_limit has no maximizer map".into()));
            }
        };
        Ok(c)
    }
}

#[allow(clippy::too_many_arguments)]
fn projection_constants(
    h: &StateFn,
    g: &StateFn,
    eps: f64,
    set: &UncertaintySet,
    sample: &SampleBox,
    r_u: f64,
    y_max: f64,
    z_max: f64,
) -> LipschitzConstants {
    let l_g = g.lipschitz_yz();
    let s_g = g.sup_norm(sample.t, &sample.x, y_max, z_max);
    LipschitzConstants {
        f_yz: h.lipschitz_yz() + l_g * (r_u + s_g),
        f_a: (1.0 + eps) * r_u + s_g,
        a_map: l_g / (1.0 + eps),
        a_map_valid: set.is_convex(),
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("eps must be positive, got {eps}")))
    }
}

fn validate_projection(
    h: &StateFn,
    g: &StateFn,
    set: &UncertaintySet,
    dim_x: usize,
    dim_z: usize,
) -> Result<()> {
    h.validate(dim_x, dim_z)?;
    g.validate(dim_x, dim_z)?;
    check_dim(1, h.out_dim())?;
    check_dim(set.dim(), g.out_dim())
}

/// Largest observed ratio `|F~(p1) - F~(p2)| / (|dy| + |dz|)` over random pairs.
pub fn empirical_lipschitz(
    driver: &DriverSpec,
    set: &UncertaintySet,
    sample: &SampleBox,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    if let DriverSpec::GLimit = driver {
        return Err(Error::Unsupported(
            "g_limit has no closed-form maximizer".into(),
        ));
    }
    check_dim(sample.z_lower.len(), sample.z_upper.len())?;
    let widths: Vec<f64> = std::iter::once(sample.y.1 - sample.y.0)
        .chain(
            sample
                .z_lower
                .iter()
                .zip(&sample.z_upper)
                .map(|(l, u)| u - l),
        )
        .collect();
    if widths.iter().any(|w| *w < 0.0 || !w.is_finite()) || widths.iter().all(|w| *w == 0.0) {
        return Err(Error::invalid("sample box is degenerate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> (f64, Vec<f64>) {
        let y = sample.y.0 + (sample.y.1 - sample.y.0) * rng.random::<f64>();
        let z = sample
            .z_lower
            .iter()
            .zip(&sample.z_upper)
            .map(|(l, u)| l + (u - l) * rng.random::<f64>())
            .collect();
        (y, z)
    };
    let mut best = 0.0f64;
    for _ in 0..n_pairs {
        let (y1, z1) = draw(&mut rng);
        let (y2, z2) = draw(&mut rng);
        let den = (y1 - y2).abs() + distance(&z1, &z2);
        if den == 0.0 {
            continue;
        }
        let f1 = driver
            .effective_driver(set, sample.t, &sample.x, y1, &z1)?
            .0;
        let f2 = driver
            .effective_driver(set, sample.t, &sample.x, y2, &z2)?
            .0;
        best = best.max((f1 - f2).abs() / den);
    }
    Ok(best)
}

/// Brute-force maximizer over a grid covering the set's bounding box.
///
/// Grid points within `step` of the set count as feasible; point-cloud
/// elements are added exactly. The best grid point lying in the set is then
/// polished by a feasible random local search, which removes the
/// `sqrt(step)`-sized error a plain grid leaves on curved boundaries.
/// Building the grid once and reusing it across states keeps sweeps cheap.
pub struct GridOracle {
    set: UncertaintySet,
    dim: usize,
    step: f64,
    points: Vec<f64>,
    exact: Vec<bool>,
}

impl GridOracle {
    pub const MAX_DIM: usize = 3;
    const MAX_POINTS: usize = 50_000_000;
    const LOCAL_TRIALS: usize = 4000;
    const LOCAL_MIN_RADIUS: f64 = 1e-9;

    pub fn new(set: &UncertaintySet, step: f64) -> Result<Self> {
        if set.dim() > Self::MAX_DIM {
            return Err(Error::invalid(format!(
                "grid oracle supports ambient dimension <= {}, got {}",
                Self::MAX_DIM,
                set.dim()
            )));
        }
        if !(step > 0.0) {
            return Err(Error::invalid("grid step must be positive"));
        }
        let (lo, hi) = set.bounding_box();
        let counts: Vec<usize> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| ((h - l) / step).ceil() as usize + 1)
            .collect();
        let total = counts
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .unwrap_or(usize::MAX);
        if total > Self::MAX_POINTS {
            return Err(Error::invalid(format!(
                "grid of {total} points is too fine"
            )));
        }
        let dim = set.dim();
        let mut points = Vec::new();
        let mut exact = Vec::new();
        let mut x = vec![0.0; dim];
        for idx in 0..total {
            let mut rem = idx;
            for k in 0..dim {
                let i = rem % counts[k];
                rem /= counts[k];
                x[k] = if counts[k] == 1 {
                    lo[k]
                } else {
                    lo[k] + (hi[k] - lo[k]) * i as f64 / (counts[k] - 1) as f64
                };
            }
            let d = set.distance_to(&x);
            if d <= step {
                points.extend_from_slice(&x);
                exact.push(d == 0.0);
            }
        }
        let mut extra = Vec::new();
        collect_cloud_points(set, &mut extra);
        for p in extra {
            points.extend_from_slice(&p);
            exact.push(true);
        }
        Ok(Self {
            set: set.clone(),
            dim,
            step,
            points,
            exact,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.exact.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty()
    }

    /// Maximizes an arbitrary objective over the set.
    pub fn maximize(&self, mut objective: impl FnMut(&[f64]) -> f64) -> (AmbientPoint, f64) {
        let mut best_any = (0usize, f64::NEG_INFINITY);
        let mut best_exact: Option<(usize, f64)> = None;
        for (i, a) in self.points.chunks_exact(self.dim).enumerate() {
            let v = objective(a);
            if v > best_any.1 {
                best_any = (i, v);
            }
            if self.exact[i] && best_exact.is_none_or(|(_, b)| v > b) {
                best_exact = Some((i, v));
            }
        }
        let Some((i, v)) = best_exact else {
            let a = self.points[best_any.0 * self.dim..(best_any.0 + 1) * self.dim].to_vec();
            return (AmbientPoint::from_vec_unchecked(a), best_any.1);
        };
        let start = self.points[i * self.dim..(i + 1) * self.dim].to_vec();
        let (a, v) = self.polish(start, v, &mut objective);
        (AmbientPoint::from_vec_unchecked(a), v)
    }

    fn polish(
        &self,
        mut a: Vec<f64>,
        mut v: f64,
        objective: &mut impl FnMut(&[f64]) -> f64,
    ) -> (Vec<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut radius = 2.0 * self.step;
        let mut cand = vec![0.0; self.dim];
        while radius > Self::LOCAL_MIN_RADIUS {
            let mut improved: Option<(Vec<f64>, f64)> = None;
            for _ in 0..Self::LOCAL_TRIALS {
                for (c, ak) in cand.iter_mut().zip(&a) {
                    *c = ak + radius * rng.random_range(-1.0..=1.0);
                }
                if self.set.distance_to(&cand) > 0.0 {
                    continue;
                }
                let cv = objective(&cand);
                if cv > improved.as_ref().map_or(v, |(_, b)| *b) {
                    improved = Some((cand.clone(), cv));
                }
            }
            match improved {
                Some((p, pv)) => {
                    a = p;
                    v = pv;
                }
                None => radius *= 0.5,
            }
        }
        (a, v)
    }

    /// Maximizer of the driver at one state. `GLimit` maximizes the linear
    /// objective `<a, z^T z> / 2` directly.
    pub fn maximize_driver(
        &self,
        driver: &DriverSpec,
        t: f64,
        x: &[f64],
        y: f64,
        z: &[f64],
    ) -> (AmbientPoint, f64) {
        match driver {
            DriverSpec::GLimit => {
                let c = embed_outer(z);
                self.maximize(|a| 0.5 * dot(a, &c))
            }
            _ => self.maximize(|a| driver.evaluate_coords(t, x, y, z, a)),
        }
    }
}

fn collect_cloud_points(set: &UncertaintySet, out: &mut Vec<Vec<f64>>) {
    match set.shape() {
        Shape::PointCloud { points } => out.extend(points.iter().map(|p| p.coords().to_vec())),
        Shape::Union { members } => members.iter().for_each(|m| collect_cloud_points(m, out)),
        _ => {}
    }
}

/// One-shot grid oracle for the maximizer at a single state.
pub fn maximizer_oracle(
    driver: &DriverSpec,
    set: &UncertaintySet,
    t: f64,
    x: &[f64],
    y: f64,
    z: &[f64],
    grid_step: f64,
) -> Result<(AmbientPoint, f64)> {
    let oracle = GridOracle::new(set, grid_step)?;
    Ok(oracle.maximize_driver(driver, t, x, y, z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[f64]) -> AmbientPoint {
        AmbientPoint::new(c.to_vec()).unwrap()
    }

    fn reg_proj(eps: f64, g: StateFn) -> DriverSpec {
        DriverSpec::RegularizedProjection {
            h: StateFn::zero(1),
            g,
            eps,
        }
    }

    #[test]
    fn evaluate_examples() {
        let a = pt(&[0.7]);
        assert_eq!(
            DriverSpec::Zero
                .evaluate(0.3, &[1.0], 2.0, &[0.1], &a)
                .unwrap(),
            0.0
        );

        let proj = DriverSpec::Projection {
            h: StateFn::zero(1),
            g: StateFn::constant(vec![1.0]),
        };
        assert_eq!(
            proj.evaluate(0.0, &[0.0], 0.0, &[0.0], &pt(&[1.0]))
                .unwrap(),
            0.0
        );

        let greg = DriverSpec::GRegularized {
            eps: 1.0,
            a0: pt(&[0.0]),
        };
        assert!(
            (greg
                .evaluate(0.0, &[0.0], 0.0, &[2.0], &pt(&[1.0]))
                .unwrap()
                - 1.5)
                .abs()
                < 1e-15
        );

        assert!(matches!(
            DriverSpec::GLimit.evaluate(0.0, &[0.0], 0.0, &[1.0], &a),
            Err(Error::Unsupported(_))
        ));
        assert!(proj
            .evaluate(0.0, &[0.0], 0.0, &[0.0], &pt(&[1.0, 2.0]))
            .is_err());
    }

    #[test]
    fn maximizer_examples() {
        let unit = UncertaintySet::interval(0.0, 1.0).unwrap();
        let m = reg_proj(1.0, StateFn::constant(vec![1.0]))
            .maximizer(&unit, 0.0, &[0.0], 0.0, &[0.0])
            .unwrap();
        assert_eq!(m.astar.coords(), &[0.5]);

        let union = UncertaintySet::union(vec![
            UncertaintySet::interval(0.0, 1.0).unwrap(),
            UncertaintySet::interval(3.0, 4.0).unwrap(),
        ])
        .unwrap();
        let proj = DriverSpec::Projection {
            h: StateFn::zero(1),
            g: StateFn::constant(vec![3.6]),
        };
        let m = proj.maximizer(&union, 0.0, &[0.0], 0.0, &[0.0]).unwrap();
        assert_eq!(m.astar.coords(), &[3.6]);
        assert_eq!(m.member_index, Some(1));

        let greg = DriverSpec::GRegularized {
            eps: 1.0,
            a0: pt(&[0.0]),
        };
        let b02 = UncertaintySet::interval(0.0, 2.0).unwrap();
        let m = greg.maximizer(&b02, 0.0, &[0.0], 0.0, &[1.0]).unwrap();
        assert_eq!(m.astar.coords(), &[0.5]);

        assert!(DriverSpec::GLimit
            .maximizer(&b02, 0.0, &[0.0], 0.0, &[1.0])
            .is_err());
    }

    #[test]
    fn oracle_examples() {
        let unit = UncertaintySet::interval(0.0, 1.0).unwrap();
        let (_, v) =
            maximizer_oracle(&DriverSpec::Zero, &unit, 0.0, &[0.0], 0.0, &[0.0], 1e-3).unwrap();
        assert_eq!(v, 0.0);

        let d = reg_proj(1.0, StateFn::constant(vec![1.0]));
        let (a, _) = maximizer_oracle(&d, &unit, 0.0, &[0.0], 0.0, &[0.0], 1e-3).unwrap();
        assert!((a.coords()[0] - 0.5).abs() <= 2e-3);

        let greg = DriverSpec::GRegularized {
            eps: 1.0,
            a0: pt(&[0.0]),
        };
        let b02 = UncertaintySet::interval(0.0, 2.0).unwrap();
        let (a, _) = maximizer_oracle(&greg, &b02, 0.0, &[0.0], 0.0, &[1.0], 1e-3).unwrap();
        assert!((a.coords()[0] - 0.5).abs() <= 2e-3);

        let big = UncertaintySet::boxed(pt(&[0.0; 4]), pt(&[1.0; 4])).unwrap();
        assert!(GridOracle::new(&big, 0.1).is_err());
    }

    #[test]
    fn effective_driver_examples() {
        let b12 = UncertaintySet::interval(1.0, 2.0).unwrap();
        let (v, a) = DriverSpec::GLimit
            .effective_driver(&b12, 0.0, &[0.0], 0.0, &[3.0])
            .unwrap();
        assert_eq!(v, 9.0);
        assert!(a.is_none());

        let (v, a) = DriverSpec::Zero
            .effective_driver(&b12, 0.0, &[0.0], 0.0, &[3.0])
            .unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(a.unwrap().coords(), &[1.0]);

        let unit = UncertaintySet::interval(0.0, 1.0).unwrap();
        let d = reg_proj(1.0, StateFn::constant(vec![1.0]));
        let (v, _) = d.effective_driver(&unit, 0.0, &[0.0], 0.0, &[0.0]).unwrap();
        assert!((v + 0.25).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let unit = UncertaintySet::interval(0.0, 1.0).unwrap();
        assert!(reg_proj(0.0, StateFn::zero(1))
            .validate(&unit, 1, 1)
            .is_err());
        assert!(reg_proj(0.5, StateFn::zero(2))
            .validate(&unit, 1, 1)
            .is_err());
        let outside = DriverSpec::GRegularized {
            eps: 1.0,
            a0: pt(&[2.0]),
        };
        assert!(outside.validate(&unit, 1, 1).is_err());
        let wrong_z = DriverSpec::GLimit;
        assert!(wrong_z.validate(&unit, 1, 2).is_err());
        let tri = UncertaintySet::boxed(pt(&[0.0; 3]), pt(&[1.0; 3])).unwrap();
        assert!(DriverSpec::GLimit.validate(&tri, 1, 2).is_ok());
        let bad_h = DriverSpec::Projection {
            h: StateFn {
                cz: vec![vec![1.0, 2.0]],
                ..StateFn::zero(1)
            },
            g: StateFn::zero(1),
        };
        assert!(bad_h.validate(&unit, 1, 1).is_err());
    }

    #[test]
    fn flags() {
        let union = UncertaintySet::union(vec![
            UncertaintySet::interval(0.0, 1.0).unwrap(),
            UncertaintySet::interval(3.0, 4.0).unwrap(),
        ])
        .unwrap();
        let proj = DriverSpec::Projection {
            h: StateFn::zero(1),
            g: StateFn::linear_in_z(1.0),
        };
        assert!(proj.unsound_for_existence(&union));
        assert!(!reg_proj(0.1, StateFn::linear_in_z(1.0)).unsound_for_existence(&union));
        assert!(DriverSpec::Affine {
            alpha: 1.0,
            beta: 0.0,
            gamma: vec![]
        }
        .degenerate_argmax());
        assert!(!DriverSpec::Affine {
            alpha: 1.0,
            beta: 0.2,
            gamma: vec![]
        }
        .is_y_independent());
    }

    /// Closed forms agree with the grid oracle across random states.
    #[test]
    fn closed_form_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let union2d = UncertaintySet::union(vec![
            UncertaintySet::boxed(pt(&[0.0, 0.0]), pt(&[0.5, 0.5])).unwrap(),
            UncertaintySet::ball(pt(&[1.2, 0.4]), 0.3).unwrap(),
        ])
        .unwrap();
        let g2 = StateFn {
            c0: vec![0.4, 0.1],
            cx: vec![vec![0.5], vec![-0.2]],
            cy: vec![0.3, 0.0],
            cz: vec![vec![1.0], vec![0.5]],
            ..StateFn::zero(2)
        };
        let cases = vec![
            (
                reg_proj(0.5, StateFn::linear_in_z(1.0)),
                UncertaintySet::interval(0.0, 1.0).unwrap(),
            ),
            (
                DriverSpec::RegularizedProjection {
                    h: StateFn::zero(1),
                    g: g2,
                    eps: 0.25,
                },
                union2d,
            ),
            (
                DriverSpec::GRegularized {
                    eps: 0.5,
                    a0: pt(&[1.5]),
                },
                UncertaintySet::interval(1.0, 2.0).unwrap(),
            ),
        ];
        for (driver, set) in cases {
            let oracle = GridOracle::new(&set, 1e-3).unwrap();
            for _ in 0..50 {
                let (t, x, y, z) = (
                    rng.random::<f64>(),
                    [rng.random_range(-1.0..1.0)],
                    rng.random_range(-1.0..1.0),
                    [rng.random_range(-2.0..2.0)],
                );
                let m = driver.maximizer(&set, t, &x, y, &z).unwrap();
                let (a, v) = oracle.maximize_driver(&driver, t, &x, y, &z);
                let gap = m.medial_gap.unwrap_or(f64::INFINITY);
                if gap > 1e-2 {
                    assert!(
                        m.astar.distance(&a).unwrap() <= 2e-3,
                        "{:?} vs {:?}",
                        m.astar,
                        a
                    );
                }
                assert!(m.value >= v - 1e-9);
            }
        }
    }

    #[test]
    fn effective_value_dominates_random_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let set = UncertaintySet::union(vec![
            UncertaintySet::interval(-2.0, -1.0).unwrap(),
            UncertaintySet::interval(1.0, 2.0).unwrap(),
        ])
        .unwrap();
        let d = DriverSpec::RegularizedProjection {
            h: StateFn {
                cy: vec![0.2],
                ..StateFn::zero(1)
            },
            g: StateFn {
                cx: vec![vec![1.0]],
                cz: vec![vec![0.5]],
                ..StateFn::zero(1)
            },
            eps: 0.1,
        };
        for _ in 0..50 {
            let (x, y, z) = (
                [rng.random_range(-3.0..3.0)],
                rng.random_range(-1.0..1.0),
                [rng.random_range(-2.0..2.0)],
            );
            let (v, _) = d.effective_driver(&set, 0.0, &x, y, &z).unwrap();
            for _ in 0..100 {
                let a = set.sample(&mut rng);
                assert!(v >= d.evaluate(0.0, &x, y, &z, &a).unwrap() - 1e-12);
            }
        }
    }

    #[test]
    fn vanishing_regularization_recovers_projection_on_convex_set() {
        let set = UncertaintySet::interval(0.0, 1.0).unwrap();
        let g = StateFn {
            c0: vec![0.8],
            ..StateFn::zero(1)
        };
        let target = DriverSpec::Projection {
            h: StateFn::zero(1),
            g: g.clone(),
        }
        .maximizer(&set, 0.0, &[0.0], 0.0, &[0.0])
        .unwrap()
        .astar;
        let mut last = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let a = reg_proj(eps, g.clone())
                .maximizer(&set, 0.0, &[0.0], 0.0, &[0.0])
                .unwrap()
                .astar;
            let d = a.distance(&target).unwrap();
            assert!(d < last);
            last = d;
        }
        assert!(last <= 1e-2 * 1.0);
    }

    #[test]
    fn regularized_g_driver_sandwich() {
        let set = UncertaintySet::interval(1.0, 2.0).unwrap();
        let a0 = pt(&[1.0]);
        let c_u = set.sup_sq_distance_from(a0.coords());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for eps in [0.5, 0.1] {
            let d = DriverSpec::GRegularized {
                eps,
                a0: a0.clone(),
            };
            for _ in 0..200 {
                let z = [rng.random_range(-3.0..3.0)];
                let g = DriverSpec::GLimit
                    .effective_driver(&set, 0.0, &[0.0], 0.0, &z)
                    .unwrap()
                    .0;
                let f = d.effective_driver(&set, 0.0, &[0.0], 0.0, &z).unwrap().0;
                assert!(f <= g + 1e-12);
                assert!(f >= g - 0.5 * eps * c_u - 1e-12);
            }
        }
    }

    #[test]
    fn empirical_lipschitz_examples() {
        let set = UncertaintySet::interval(0.0, 1.0).unwrap();
        let sample = SampleBox {
            t: 0.0,
            x: vec![0.0],
            y: (-1.0, 1.0),
            z_lower: vec![-2.0],
            z_upper: vec![2.0],
        };
        assert_eq!(
            empirical_lipschitz(&DriverSpec::Zero, &set, &sample, 200, 1).unwrap(),
            0.0
        );

        let aff = DriverSpec::Affine {
            alpha: 0.0,
            beta: 0.7,
            gamma: vec![-0.4],
        };
        let est = empirical_lipschitz(&aff, &set, &sample, 2000, 1).unwrap();
        assert!(est <= 0.7 + 0.4 + 1e-12);
        assert!(est <= aff.lipschitz_constants(&set, &sample).unwrap().bound() + 1e-12);

        let flat = SampleBox {
            y: (0.0, 0.0),
            z_lower: vec![1.0],
            z_upper: vec![1.0],
            ..sample.clone()
        };
        assert!(empirical_lipschitz(&aff, &set, &flat, 10, 1).is_err());
        assert!(empirical_lipschitz(&DriverSpec::GLimit, &set, &sample, 10, 1).is_err());
    }

    #[test]
    fn maximizer_map_is_not_lipschitz_on_disjoint_union() {
        let union = UncertaintySet::union(vec![
            UncertaintySet::interval(-2.0, -1.0).unwrap(),
            UncertaintySet::interval(1.0, 2.0).unwrap(),
        ])
        .unwrap();
        let d = reg_proj(0.5, StateFn::linear_in_z(1.0));
        let sample = SampleBox {
            t: 0.0,
            x: vec![0.0],
            y: (0.0, 0.0),
            z_lower: vec![-1.0],
            z_upper: vec![1.0],
        };
        let c = d.lipschitz_constants(&union, &sample).unwrap();
        assert!(!c.a_map_valid);
        let a1 = d
            .maximizer(&union, 0.0, &[0.0], 0.0, &[-1e-6])
            .unwrap()
            .astar;
        let a2 = d
            .maximizer(&union, 0.0, &[0.0], 0.0, &[1e-6])
            .unwrap()
            .astar;
        assert!(a1.distance(&a2).unwrap() / 2e-6 > c.a_map * 1e5);
    }
}
