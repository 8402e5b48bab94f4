//! Compact uncertainty sets: boxes, balls, finite point clouds and finite unions.
//!
//! Every operation runs in the flat coordinates of [`crate::ambient`], so a
//! set of symmetric matrices and a set of plain parameter vectors share the
//! same code. Ties between equally distant candidates resolve to the lowest
//! member (or point) index, which keeps runs reproducible.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ambient::{distance, dot, norm, AmbientPoint};
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Box {
        lower: AmbientPoint,
        upper: AmbientPoint,
    },
    Ball {
        center: AmbientPoint,
        radius: f64,
    },
    PointCloud {
        points: Vec<AmbientPoint>,
    },
    Union {
        members: Vec<UncertaintySet>,
    },
}

/// A nonempty compact subset of the ambient space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Shape", into = "Shape")]
pub struct UncertaintySet {
    shape: Shape,
    dim: usize,
    /// Smallest distance between two union members (`None` unless a union).
    min_member_gap: Option<f64>,
}

impl TryFrom<Shape> for UncertaintySet {
    type Error = Error;

    fn try_from(shape: Shape) -> Result<Self> {
        UncertaintySet::from_shape(shape)
    }
}

impl From<UncertaintySet> for Shape {
    fn from(set: UncertaintySet) -> Self {
        set.shape
    }
}

/// Nearest point of a set together with medial-axis diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionResult {
    pub point: AmbientPoint,
    pub distance: f64,
    /// Index of the union member (or cloud point) that supplied `point`;
    /// `None` for single-piece sets.
    pub member_index: Option<usize>,
    /// Second-smallest candidate distance minus the smallest. `None` stands
    /// for the `+inf` sentinel of single-candidate sets.
    pub medial_gap: Option<f64>,
}

impl UncertaintySet {
    pub fn from_shape(shape: Shape) -> Result<Self> {
        match shape {
            Shape::Box { lower, upper } => Self::boxed(lower, upper),
            Shape::Ball { center, radius } => Self::ball(center, radius),
            Shape::PointCloud { points } => Self::point_cloud(points),
            Shape::Union { members } => Self::union(members),
        }
    }

    pub fn boxed(lower: AmbientPoint, upper: AmbientPoint) -> Result<Self> {
        check_dim(lower.dim(), upper.dim())?;
        if let Some(i) = (0..lower.dim()).find(|&i| lower.coords()[i] > upper.coords()[i]) {
            return Err(Error::invalid(format!(
                "box lower bound exceeds upper bound in coordinate {i}"
            )));
        }
        let dim = lower.dim();
        Ok(Self {
            shape: Shape::Box { lower, upper },
            dim,
            min_member_gap: None,
        })
    }

    pub fn ball(center: AmbientPoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        let dim = center.dim();
        Ok(Self {
            shape: Shape::Ball { center, radius },
            dim,
            min_member_gap: None,
        })
    }

    pub fn point_cloud(points: Vec<AmbientPoint>) -> Result<Self> {
        let dim = points
            .first()
            .ok_or_else(|| Error::invalid("point cloud must contain at least one point"))?
            .dim();
        for p in &points {
            check_dim(dim, p.dim())?;
        }
        Ok(Self {
            shape: Shape::PointCloud { points },
            dim,
            min_member_gap: None,
        })
    }

    pub fn union(members: Vec<UncertaintySet>) -> Result<Self> {
        let dim = members
            .first()
            .ok_or_else(|| Error::invalid("union must have at least one member"))?
            .dim;
        for m in &members {
            check_dim(dim, m.dim)?;
        }
        let mut gap = f64::INFINITY;
        for i in 0..members.len() {
            for j in (i + 1)..members.len() {
                gap = gap.min(set_distance(&members[i], &members[j]));
            }
        }
        let min_member_gap = if members.len() > 1 { Some(gap) } else { None };
        Ok(Self {
            shape: Shape::Union { members },
            dim,
            min_member_gap,
        })
    }

    /// Convenience constructor for 1-d intervals.
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::boxed(
            AmbientPoint::new(vec![lower])?,
            AmbientPoint::new(vec![upper])?,
        )
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn min_member_gap(&self) -> Option<f64> {
        self.min_member_gap
    }

    /// Whether union members are pairwise separated by a positive distance.
    pub fn members_disjoint(&self) -> bool {
        self.min_member_gap.is_none_or(|g| g > 0.0)
    }

    /// Number of pieces that `member_index` ranges over.
    pub fn member_count(&self) -> usize {
        match &self.shape {
            Shape::PointCloud { points } => points.len(),
            Shape::Union { members } => members.len(),
            _ => 1,
        }
    }

    /// Conservative convexity test: boxes, balls, singletons and unions
    /// whose pieces are all convex and identical or single.
    pub fn is_convex(&self) -> bool {
        match &self.shape {
            Shape::Box { .. } | Shape::Ball { .. } => true,
            Shape::PointCloud { points } => points.iter().all(|p| p == &points[0]),
            Shape::Union { members } => members.len() == 1 && members[0].is_convex(),
        }
    }

    pub fn project(&self, p: &AmbientPoint) -> Result<ProjectionResult> {
        check_dim(self.dim, p.dim())?;
        Ok(self.project_coords(p.coords()))
    }

    pub(crate) fn project_coords(&self, p: &[f64]) -> ProjectionResult {
        match &self.shape {
            Shape::Box { lower, upper } => {
                let point: Vec<f64> = p
                    .iter()
                    .zip(lower.coords().iter().zip(upper.coords()))
                    .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
                    .collect();
                single(p, point)
            }
            Shape::Ball { center, radius } => {
                let c = center.coords();
                let r = distance(p, c);
                let point = if r <= *radius {
                    p.to_vec()
                } else {
                    let s = radius / r;
                    c.iter().zip(p).map(|(ci, pi)| ci + s * (pi - ci)).collect()
                };
                single(p, point)
            }
            Shape::PointCloud { points } => {
                let (best, gap) = best_two(points.iter().map(|q| distance(p, q.coords())));
                let point = points[best].clone();
                ProjectionResult {
                    distance: distance(p, point.coords()),
                    point,
                    member_index: Some(best),
                    medial_gap: Some(gap),
                }
            }
            Shape::Union { members } => {
                let results: Vec<ProjectionResult> =
                    members.iter().map(|m| m.project_coords(p)).collect();
                let (best, gap) = best_two(results.iter().map(|r| r.distance));
                let inner_gap = results[best].medial_gap;
                let mut chosen = results.into_iter().nth(best).expect("nonempty union");
                chosen.member_index = Some(best);
                chosen.medial_gap = Some(match inner_gap {
                    Some(g) => g.min(gap),
                    None => gap,
                });
                if members.len() == 1 {
                    chosen.medial_gap = inner_gap;
                }
                chosen
            }
        }
    }

    pub fn contains(&self, p: &AmbientPoint, tol: f64) -> Result<bool> {
        check_dim(self.dim, p.dim())?;
        if tol < 0.0 {
            return Err(Error::invalid("containment tolerance must be nonnegative"));
        }
        Ok(self.distance_to(p.coords()) <= tol)
    }

    pub(crate) fn distance_to(&self, p: &[f64]) -> f64 {
        match &self.shape {
            Shape::Box { lower, upper } => p
                .iter()
                .zip(lower.coords().iter().zip(upper.coords()))
                .map(|(x, (lo, hi))| {
                    let g = (lo - x).max(x - hi).max(0.0);
                    g * g
                })
                .sum::<f64>()
                .sqrt(),
            Shape::Ball { center, radius } => (distance(p, center.coords()) - radius).max(0.0),
            Shape::PointCloud { points } => points
                .iter()
                .map(|q| distance(p, q.coords()))
                .fold(f64::INFINITY, f64::min),
            Shape::Union { members } => members
                .iter()
                .map(|m| m.distance_to(p))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Maximizes `a -> <a, c>` over the set.
    pub fn linear_max(&self, c: &AmbientPoint) -> Result<(f64, AmbientPoint)> {
        check_dim(self.dim, c.dim())?;
        let (value, arg) = self.linear_max_coords(c.coords());
        Ok((value, AmbientPoint::from_vec_unchecked(arg)))
    }

    pub(crate) fn linear_max_coords(&self, c: &[f64]) -> (f64, Vec<f64>) {
        match &self.shape {
            Shape::Box { lower, upper } => {
                let arg: Vec<f64> = c
                    .iter()
                    .zip(lower.coords().iter().zip(upper.coords()))
                    .map(|(ci, (lo, hi))| if *ci > 0.0 { *hi } else { *lo })
                    .collect();
                (dot(&arg, c), arg)
            }
            Shape::Ball { center, radius } => {
                let cn = norm(c);
                let arg: Vec<f64> = if cn > 0.0 {
                    center
                        .coords()
                        .iter()
                        .zip(c)
                        .map(|(m, ci)| m + radius * ci / cn)
                        .collect()
                } else {
                    center.coords().to_vec()
                };
                (dot(center.coords(), c) + radius * cn, arg)
            }
            Shape::PointCloud { points } => {
                let mut best = 0;
                let mut best_val = f64::NEG_INFINITY;
                for (i, q) in points.iter().enumerate() {
                    let v = dot(q.coords(), c);
                    if v > best_val {
                        best = i;
                        best_val = v;
                    }
                }
                (best_val, points[best].coords().to_vec())
            }
            Shape::Union { members } => {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for m in members {
                    let cand = m.linear_max_coords(c);
                    if best.as_ref().is_none_or(|b| cand.0 > b.0) {
                        best = Some(cand);
                    }
                }
                best.expect("nonempty union")
            }
        }
    }

    /// Gap between the best and second-best candidate distance; `None`
    /// (the `+inf` sentinel) for single-candidate sets.
    pub fn medial_gap(&self, p: &AmbientPoint) -> Result<Option<f64>> {
        Ok(self.project(p)?.medial_gap)
    }

    /// Componentwise bounding box `(lower, upper)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Box { lower, upper } => (lower.coords().to_vec(), upper.coords().to_vec()),
            Shape::Ball { center, radius } => (
                center.coords().iter().map(|c| c - radius).collect(),
                center.coords().iter().map(|c| c + radius).collect(),
            ),
            Shape::PointCloud { points } => hull_of(
                points
                    .iter()
                    .map(|p| (p.coords().to_vec(), p.coords().to_vec())),
            ),
            Shape::Union { members } => hull_of(members.iter().map(|m| m.bounding_box())),
        }
    }

    /// `sup_{a in U} |a - a0|^2`.
    pub fn sup_sq_distance_from(&self, a0: &[f64]) -> f64 {
        match &self.shape {
            Shape::Box { lower, upper } => a0
                .iter()
                .zip(lower.coords().iter().zip(upper.coords()))
                .map(|(x, (lo, hi))| ((lo - x) * (lo - x)).max((hi - x) * (hi - x)))
                .sum(),
            Shape::Ball { center, radius } => (distance(a0, center.coords()) + radius).powi(2),
            Shape::PointCloud { points } => points
                .iter()
                .map(|q| distance(a0, q.coords()).powi(2))
                .fold(0.0, f64::max),
            Shape::Union { members } => members
                .iter()
                .map(|m| m.sup_sq_distance_from(a0))
                .fold(0.0, f64::max),
        }
    }

    /// `sup_{a in U} |a|`.
    pub fn max_norm(&self) -> f64 {
        self.sup_sq_distance_from(&vec![0.0; self.dim]).sqrt()
    }

    /// A fixed, deterministic element used where every point is a maximizer.
    pub fn anchor_point(&self) -> AmbientPoint {
        match &self.shape {
            Shape::Box { lower, .. } => lower.clone(),
            Shape::Ball { center, .. } => center.clone(),
            Shape::PointCloud { points } => points[0].clone(),
            Shape::Union { members } => members[0].anchor_point(),
        }
    }

    /// Draws a random element. Balls use the Gaussian-direction method, unions
    /// pick a member uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AmbientPoint {
        let coords = match &self.shape {
            Shape::Box { lower, upper } => lower
                .coords()
                .iter()
                .zip(upper.coords())
                .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect(),
            Shape::Ball { center, radius } => {
                let dir: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(rng)).collect();
                let dn = norm(&dir).max(f64::MIN_POSITIVE);
                let r = radius * rng.random::<f64>().powf(1.0 / self.dim as f64);
                center
                    .coords()
                    .iter()
                    .zip(&dir)
                    .map(|(c, u)| c + r * u / dn)
                    .collect()
            }
            Shape::PointCloud { points } => {
                points[rng.random_range(0..points.len())].coords().to_vec()
            }
            Shape::Union { members } => {
                return members[rng.random_range(0..members.len())].sample(rng)
            }
        };
        AmbientPoint::from_vec_unchecked(coords)
    }
}

fn single(query: &[f64], point: Vec<f64>) -> ProjectionResult {
    ProjectionResult {
        distance: distance(query, &point),
        point: AmbientPoint::from_vec_unchecked(point),
        member_index: None,
        medial_gap: None,
    }
}

/// Index of the smallest value (first on ties) and the gap to the runner-up.
fn best_two(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best.1 || best.0 == usize::MAX {
            second = best.1;
            best = (i, v);
        } else if v < second {
            second = v;
        }
    }
    (best.0, second - best.1)
}

fn hull_of(boxes: impl Iterator<Item = (Vec<f64>, Vec<f64>)>) -> (Vec<f64>, Vec<f64>) {
    let mut acc: Option<(Vec<f64>, Vec<f64>)> = None;
    for (lo, hi) in boxes {
        acc = Some(match acc {
            None => (lo, hi),
            Some((alo, ahi)) => (
                alo.iter().zip(&lo).map(|(a, b)| a.min(*b)).collect(),
                ahi.iter().zip(&hi).map(|(a, b)| a.max(*b)).collect(),
            ),
        });
    }
    acc.expect("nonempty collection")
}

/// Distance between two sets. Exact for every pair of supported shapes.
fn set_distance(a: &UncertaintySet, b: &UncertaintySet) -> f64 {
    match (&a.shape, &b.shape) {
        (
            Shape::Box {
                lower: l1,
                upper: u1,
            },
            Shape::Box {
                lower: l2,
                upper: u2,
            },
        ) => (0..a.dim)
            .map(|i| {
                let g = (l2.coords()[i] - u1.coords()[i])
                    .max(l1.coords()[i] - u2.coords()[i])
                    .max(0.0);
                g * g
            })
            .sum::<f64>()
            .sqrt(),
        (Shape::Ball { center, radius }, _) => (b.distance_to(center.coords()) - radius).max(0.0),
        (_, Shape::Ball { .. }) => set_distance(b, a),
        (Shape::PointCloud { points }, _) => points
            .iter()
            .map(|p| b.distance_to(p.coords()))
            .fold(f64::INFINITY, f64::min),
        (_, Shape::PointCloud { .. }) => set_distance(b, a),
        (Shape::Union { members }, _) => members
            .iter()
            .map(|m| set_distance(m, b))
            .fold(f64::INFINITY, f64::min),
        (_, Shape::Union { .. }) => set_distance(b, a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(c: &[f64]) -> AmbientPoint {
        AmbientPoint::new(c.to_vec()).unwrap()
    }

    fn two_intervals() -> UncertaintySet {
        UncertaintySet::union(vec![
            UncertaintySet::interval(0.0, 1.0).unwrap(),
            UncertaintySet::interval(3.0, 4.0).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn box_projection_clamps() {
        let b = UncertaintySet::boxed(pt(&[0.0, 0.0]), pt(&[1.0, 1.0])).unwrap();
        let r = b.project(&pt(&[2.0, 0.5])).unwrap();
        assert_eq!(r.point.coords(), &[1.0, 0.5]);
        assert_eq!(r.distance, 1.0);
        assert_eq!(r.member_index, None);
        assert_eq!(r.medial_gap, None);
    }

    #[test]
    fn ball_projection_is_identity_inside() {
        let b = UncertaintySet::ball(pt(&[0.0, 0.0]), 1.0).unwrap();
        let r = b.project(&pt(&[0.3, -0.4])).unwrap();
        assert_eq!(r.point.coords(), &[0.3, -0.4]);
        assert_eq!(r.distance, 0.0);
    }

    #[test]
    fn union_projection_and_gap() {
        let u = two_intervals();
        let r = u.project(&pt(&[1.8])).unwrap();
        assert_eq!(r.point.coords(), &[1.0]);
        assert!((r.distance - 0.8).abs() < 1e-12);
        assert_eq!(r.member_index, Some(0));
        assert!((r.medial_gap.unwrap() - 0.4).abs() < 1e-12);

        let tie = u.project(&pt(&[2.0])).unwrap();
        assert_eq!(tie.point.coords(), &[1.0]);
        assert_eq!(tie.member_index, Some(0));
        assert_eq!(tie.medial_gap, Some(0.0));
    }

    #[test]
    fn contains_examples() {
        assert!(UncertaintySet::interval(0.0, 1.0)
            .unwrap()
            .contains(&pt(&[0.5]), 0.0)
            .unwrap());
        let ball = UncertaintySet::ball(pt(&[0.0]), 1.0).unwrap();
        assert!(ball.contains(&pt(&[1.0000001]), 1e-6).unwrap());
        let cloud = UncertaintySet::point_cloud(vec![pt(&[0.0]), pt(&[2.0])]).unwrap();
        assert!(!cloud.contains(&pt(&[1.0]), 0.5).unwrap());
    }

    #[test]
    fn linear_max_examples() {
        let (v, a) = UncertaintySet::interval(-1.0, 2.0)
            .unwrap()
            .linear_max(&pt(&[1.0]))
            .unwrap();
        assert_eq!((v, a.coords()[0]), (2.0, 2.0));

        let ball = UncertaintySet::ball(pt(&[1.0, 0.0]), 2.0).unwrap();
        let (v, a) = ball.linear_max(&pt(&[0.0, 1.0])).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
        assert_eq!(a.coords(), &[1.0, 2.0]);

        let u = UncertaintySet::union(vec![
            UncertaintySet::interval(0.0, 1.0).unwrap(),
            UncertaintySet::interval(3.0, 4.0).unwrap(),
        ])
        .unwrap();
        let (v, a) = u.linear_max(&pt(&[-1.0])).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(a.coords(), &[0.0]);
    }

    #[test]
    fn medial_gap_examples() {
        let u = two_intervals();
        assert_eq!(u.medial_gap(&pt(&[2.0])).unwrap(), Some(0.0));
        assert!((u.medial_gap(&pt(&[0.5])).unwrap().unwrap() - 2.5).abs() < 1e-12);
        let cloud = UncertaintySet::point_cloud(vec![pt(&[-1.0]), pt(&[1.0])]).unwrap();
        assert!((cloud.medial_gap(&pt(&[0.3])).unwrap().unwrap() - 0.6).abs() < 1e-12);
        let ball = UncertaintySet::ball(pt(&[0.0]), 1.0).unwrap();
        assert_eq!(ball.medial_gap(&pt(&[3.0])).unwrap(), None);
    }

    #[test]
    fn validation_errors() {
        assert!(UncertaintySet::ball(pt(&[0.0]), -1.0).is_err());
        assert!(UncertaintySet::boxed(pt(&[1.0]), pt(&[0.0])).is_err());
        assert!(UncertaintySet::union(vec![]).is_err());
        assert!(UncertaintySet::point_cloud(vec![]).is_err());
        let mixed = UncertaintySet::union(vec![
            UncertaintySet::interval(0.0, 1.0).unwrap(),
            UncertaintySet::ball(pt(&[0.0, 0.0]), 1.0).unwrap(),
        ]);
        assert!(matches!(mixed, Err(Error::DimensionMismatch { .. })));
        let b = UncertaintySet::interval(0.0, 1.0).unwrap();
        assert!(b.project(&pt(&[0.0, 0.0])).is_err());
        assert!(b.contains(&pt(&[0.0, 0.0]), 0.0).is_err());
        assert!(b.linear_max(&pt(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn member_gap_diagnostic() {
        assert_eq!(two_intervals().min_member_gap(), Some(2.0));
        let overlapping = UncertaintySet::union(vec![
            UncertaintySet::ball(pt(&[0.0, 0.0]), 1.0).unwrap(),
            UncertaintySet::boxed(pt(&[0.5, 0.5]), pt(&[2.0, 2.0])).unwrap(),
        ])
        .unwrap();
        assert_eq!(overlapping.min_member_gap(), Some(0.0));
        assert!(!overlapping.members_disjoint());
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let u = two_intervals();
        let json = serde_json::to_string(&u).unwrap();
        let back: UncertaintySet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, u);
        let bad = r#"{"type":"ball","center":[0.0],"radius":-1.0}"#;
        assert!(serde_json::from_str::<UncertaintySet>(bad).is_err());
    }

    fn fixtures() -> Vec<UncertaintySet> {
        vec![
            UncertaintySet::boxed(pt(&[0.0, -1.0]), pt(&[1.0, 2.0])).unwrap(),
            UncertaintySet::ball(pt(&[0.5, 0.5]), 0.75).unwrap(),
            UncertaintySet::point_cloud(vec![pt(&[0.0, 0.0]), pt(&[1.0, 1.0]), pt(&[-1.0, 0.5])])
                .unwrap(),
            UncertaintySet::union(vec![
                UncertaintySet::boxed(pt(&[0.0, 0.0]), pt(&[1.0, 1.0])).unwrap(),
                UncertaintySet::ball(pt(&[3.0, 0.5]), 0.5).unwrap(),
            ])
            .unwrap(),
        ]
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for set in fixtures() {
            for _ in 0..1000 {
                let q = pt(&[rng.random_range(-4.0..6.0), rng.random_range(-4.0..6.0)]);
                let first = set.project(&q).unwrap();
                assert!(set.contains(&first.point, 1e-9).unwrap());
                assert!((first.distance - q.distance(&first.point).unwrap()).abs() <= 1e-12);
                let again = set.project(&first.point).unwrap();
                assert!(again.distance <= 1e-9);
            }
        }
    }

    #[test]
    fn convex_projection_is_non_expansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for set in fixtures().into_iter().take(2) {
            for _ in 0..1000 {
                let p = pt(&[rng.random_range(-4.0..6.0), rng.random_range(-4.0..6.0)]);
                let q = pt(&[rng.random_range(-4.0..6.0), rng.random_range(-4.0..6.0)]);
                let d_proj = set
                    .project(&p)
                    .unwrap()
                    .point
                    .distance(&set.project(&q).unwrap().point)
                    .unwrap();
                assert!(d_proj <= p.distance(&q).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn disjoint_union_projection_expands_across_medial_axis() {
        let u = two_intervals();
        let (p, q) = (pt(&[1.99]), pt(&[2.01]));
        let d_proj = u
            .project(&p)
            .unwrap()
            .point
            .distance(&u.project(&q).unwrap().point)
            .unwrap();
        let d_query = p.distance(&q).unwrap();
        assert!(
            d_proj > d_query,
            "expected expansion: {d_proj} vs {d_query}"
        );
    }

    /// Exhaustive search over a grid of the bounding box (restricted to the set).
    fn grid_nearest(set: &UncertaintySet, q: &[f64], step: f64) -> f64 {
        let (lo, hi) = set.bounding_box();
        let n: Vec<usize> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| ((h - l) / step).round() as usize + 1)
            .collect();
        let mut best = f64::INFINITY;
        let total: usize = n.iter().product();
        let mut x = vec![0.0; lo.len()];
        for idx in 0..total {
            let mut rem = idx;
            for k in 0..lo.len() {
                x[k] = lo[k] + (rem % n[k]) as f64 * step;
                rem /= n[k];
            }
            if set.distance_to(&x) <= step {
                best = best.min(distance(q, &x));
            }
        }
        best
    }

    #[test]
    fn projection_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let sets = vec![
            UncertaintySet::interval(-0.5, 0.7).unwrap(),
            two_intervals(),
            UncertaintySet::ball(pt(&[0.2, -0.1]), 0.4).unwrap(),
            UncertaintySet::union(vec![
                UncertaintySet::boxed(pt(&[0.0, 0.0]), pt(&[0.3, 0.3])).unwrap(),
                UncertaintySet::ball(pt(&[0.8, 0.6]), 0.2).unwrap(),
            ])
            .unwrap(),
        ];
        for set in sets {
            for _ in 0..5 {
                let q: Vec<f64> = (0..set.dim())
                    .map(|_| rng.random_range(-1.0..2.0))
                    .collect();
                let exact = set.project_coords(&q).distance;
                let oracle = grid_nearest(&set, &q, 1e-3);
                assert!((exact - oracle).abs() <= 2e-3, "{exact} vs {oracle}");
            }
        }
    }

    #[test]
    fn linear_max_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let sets = vec![
            UncertaintySet::boxed(pt(&[0.0, -1.0]), pt(&[1.0, 0.5])).unwrap(),
            UncertaintySet::ball(pt(&[0.2, -0.1]), 0.4).unwrap(),
        ];
        for set in sets {
            let (lo, hi) = set.bounding_box();
            for _ in 0..5 {
                let c = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let (value, _) = set.linear_max_coords(&c);
                let n = 801;
                let mut best = f64::NEG_INFINITY;
                for i in 0..n {
                    for j in 0..n {
                        let x = [
                            lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64,
                            lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64,
                        ];
                        if set.distance_to(&x) <= 0.0 {
                            best = best.max(dot(&x, &c));
                        }
                    }
                }
                // The grid under-approximates the max by at most |c| * spacing.
                let slack = norm(&c) * (hi[0] - lo[0]).max(hi[1] - lo[1]) / (n - 1) as f64;
                assert!(best <= value + 1e-12);
                assert!(
                    value - best <= slack + 1e-6 * value.abs().max(1.0),
                    "{value} vs {best}"
                );
            }
        }
    }

    #[test]
    fn samples_lie_in_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for set in fixtures() {
            for _ in 0..200 {
                let a = set.sample(&mut rng);
                assert!(set.contains(&a, 1e-12).unwrap());
            }
        }
    }

    #[test]
    fn sup_sq_distance_examples() {
        let b = UncertaintySet::interval(1.0, 2.0).unwrap();
        assert_eq!(b.sup_sq_distance_from(&[1.0]), 1.0);
        let s = UncertaintySet::interval(1.5, 1.5).unwrap();
        assert_eq!(s.sup_sq_distance_from(&[1.5]), 0.0);
        assert!(s.is_convex());
        assert!(!two_intervals().is_convex());
    }
}
