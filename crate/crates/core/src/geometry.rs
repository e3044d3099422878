//! Site-space primitives: supports, δ-dilation, diameters and breach tests.
//!
//! Supports come in an analytic form (balls and dilations of a base set) and
//! an observational form (a point cloud of particle sites). Distances are
//! Euclidean in every dimension. All operations are generic over [`Scalar`],
//! so the analytic chain can be carried in exact rationals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Point clouds larger than this use a convex hull before the pairwise scan (d = 2).
pub const DEFAULT_HULL_THRESHOLD: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site<T> {
    pub coords: Vec<T>,
}

impl<T: Scalar> Site<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("site needs at least one coordinate"));
        }
        if !coords.iter().all(Scalar::is_finite_value) {
            return Err(Error::invalid("site coordinates must be finite"));
        }
        Ok(Site { coords })
    }

    pub fn origin(dim: usize) -> Self {
        Site { coords: vec![T::zero(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn distance_sq(&self, other: &Site<T>) -> T {
        self.coords
            .iter()
            .zip(&other.coords)
            .fold(T::zero(), |acc, (a, b)| {
                let d = a.clone() - b.clone();
                acc + d.clone() * d
            })
    }

    pub fn distance(&self, other: &Site<T>) -> T {
        self.distance_sq(other).root()
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Site<U> {
        Site { coords: self.coords.iter().map(f).collect() }
    }
}

/// Support of a measure on the site space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportSet<T> {
    Ball { center: Site<T>, radius: T },
    DilatedBase { base: Box<SupportSet<T>>, delta: T },
    PointCloud { points: Vec<Site<T>> },
}

/// A support reduced to its innermost set and the total dilation around it.
enum Core<'a, T> {
    Point(&'a Site<T>),
    Cloud(&'a [Site<T>]),
}

impl<T: Scalar> SupportSet<T> {
    pub fn ball(center: Site<T>, radius: T) -> Result<Self> {
        if radius < T::zero() {
            return Err(Error::invalid("ball radius must be nonnegative"));
        }
        Ok(SupportSet::Ball { center, radius })
    }

    /// Degenerate support `{s}`.
    pub fn point(center: Site<T>) -> Self {
        SupportSet::Ball { center, radius: T::zero() }
    }

    pub fn point_cloud(points: Vec<Site<T>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::invalid("point cloud must be nonempty"));
        };
        let dim = first.dim();
        if points.iter().any(|p| p.dim() != dim) {
            return Err(Error::invalid("point cloud mixes dimensions"));
        }
        Ok(SupportSet::PointCloud { points })
    }

    pub fn dim(&self) -> usize {
        match self.core() {
            (Core::Point(c), _) => c.dim(),
            (Core::Cloud(p), _) => p[0].dim(),
        }
    }

    fn core(&self) -> (Core<'_, T>, T) {
        match self {
            SupportSet::Ball { center, radius } => (Core::Point(center), radius.clone()),
            SupportSet::DilatedBase { base, delta } => {
                let (core, offset) = base.core();
                (core, offset + delta.clone())
            }
            SupportSet::PointCloud { points } => (Core::Cloud(points), T::zero()),
        }
    }

    /// Euclidean distance from `x` to the set (0 inside).
    pub fn distance_to(&self, x: &Site<T>) -> T {
        let (core, offset) = self.core();
        let raw = match core {
            Core::Point(c) => c.distance(x),
            Core::Cloud(points) => points
                .iter()
                .map(|p| p.distance_sq(x))
                .reduce(|a, b| if b < a { b } else { a })
                .expect("nonempty cloud")
                .root(),
        };
        T::max_of(raw - offset, T::zero())
    }

    /// Squared distance from `x` to the core, with the core's dilation offset.
    fn core_distance_sq(&self, x: &Site<T>) -> (T, T) {
        let (core, offset) = self.core();
        let d2 = match core {
            Core::Point(c) => c.distance_sq(x),
            Core::Cloud(points) => points
                .iter()
                .map(|p| p.distance_sq(x))
                .reduce(|a, b| if b < a { b } else { a })
                .expect("nonempty cloud"),
        };
        (d2, offset)
    }

    /// Whether `x` lies farther than `margin` from the set. Compares squared
    /// distances, so it is exact for rational scalars.
    pub fn farther_than(&self, x: &Site<T>, margin: &T) -> bool {
        let (d2, offset) = self.core_distance_sq(x);
        let reach = offset + margin.clone();
        d2 > reach.clone() * reach
    }

    /// Closed membership.
    pub fn contains(&self, x: &Site<T>) -> bool {
        !self.farther_than(x, &T::zero())
    }

    pub fn map<U>(&self, f: &impl Fn(&T) -> U) -> SupportSet<U> {
        match self {
            SupportSet::Ball { center, radius } => SupportSet::Ball { center: center.map(f), radius: f(radius) },
            SupportSet::DilatedBase { base, delta } => {
                SupportSet::DilatedBase { base: Box::new(base.map(f)), delta: f(delta) }
            }
            SupportSet::PointCloud { points } => {
                SupportSet::PointCloud { points: points.iter().map(|p| p.map(f)).collect() }
            }
        }
    }
}

/// Closed δ-neighbourhood `A^δ`.
pub fn dilate<T: Scalar>(set: &SupportSet<T>, delta: T) -> Result<SupportSet<T>> {
    if delta < T::zero() {
        return Err(Error::invalid("dilation radius must be nonnegative"));
    }
    if delta.is_zero() {
        return Ok(set.clone());
    }
    Ok(match set {
        SupportSet::Ball { center, radius } => SupportSet::Ball { center: center.clone(), radius: radius.clone() + delta },
        SupportSet::DilatedBase { base, delta: inner } => {
            SupportSet::DilatedBase { base: base.clone(), delta: inner.clone() + delta }
        }
        SupportSet::PointCloud { .. } => SupportSet::DilatedBase { base: Box::new(set.clone()), delta },
    })
}

pub fn diameter<T: Scalar>(set: &SupportSet<T>) -> T {
    diameter_with(set, DEFAULT_HULL_THRESHOLD)
}

/// Diameter, using a convex hull for planar clouds above `hull_threshold` points.
pub fn diameter_with<T: Scalar>(set: &SupportSet<T>, hull_threshold: usize) -> T {
    let (core, offset) = set.core();
    let two = T::one() + T::one();
    match core {
        Core::Point(_) => two * offset,
        Core::Cloud(points) => cloud_diameter(points, hull_threshold) + two * offset,
    }
}

/// Exact maximum pairwise distance of a point set.
pub fn cloud_diameter<T: Scalar>(points: &[Site<T>], hull_threshold: usize) -> T {
    if points.len() < 2 {
        return T::zero();
    }
    match points[0].dim() {
        1 => {
            let mut lo = points[0].coords[0].clone();
            let mut hi = lo.clone();
            for p in &points[1..] {
                let x = &p.coords[0];
                if *x < lo {
                    lo = x.clone();
                }
                if *x > hi {
                    hi = x.clone();
                }
            }
            hi - lo
        }
        2 if points.len() > hull_threshold => max_pairwise(&convex_hull(points)),
        _ => max_pairwise(points),
    }
}

fn max_pairwise<T: Scalar>(points: &[Site<T>]) -> T {
    let mut best = T::zero();
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let d = p.distance_sq(q);
            if d > best {
                best = d;
            }
        }
    }
    best.root()
}

fn cross<T: Scalar>(o: &Site<T>, a: &Site<T>, b: &Site<T>) -> T {
    let (ox, oy) = (&o.coords[0], &o.coords[1]);
    (a.coords[0].clone() - ox.clone()) * (b.coords[1].clone() - oy.clone())
        - (a.coords[1].clone() - oy.clone()) * (b.coords[0].clone() - ox.clone())
}

fn push_hull<'a, T: Scalar>(hull: &mut Vec<&'a Site<T>>, p: &'a Site<T>, floor: usize) {
    while hull.len() >= floor + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero() {
        hull.pop();
    }
    hull.push(p);
}

/// Andrew's monotone chain; returns hull vertices without collinear points.
pub fn convex_hull<T: Scalar>(points: &[Site<T>]) -> Vec<Site<T>> {
    let mut pts: Vec<&Site<T>> = points.iter().collect();
    pts.sort_by(|a, b| {
        a.coords[0]
            .partial_cmp(&b.coords[0])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.coords[1].partial_cmp(&b.coords[1]).unwrap_or(std::cmp::Ordering::Equal))
    });
    pts.dedup_by(|a, b| a == b);
    if pts.len() < 3 {
        return pts.into_iter().cloned().collect();
    }
    let mut hull: Vec<&Site<T>> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        push_hull(&mut hull, p, 0);
    }
    // The upper chain may not eat into the lower one.
    let floor = hull.len() - 1;
    for &p in pts.iter().rev().skip(1) {
        push_hull(&mut hull, p, floor);
    }
    hull.pop();
    hull.into_iter().cloned().collect()
}

/// Confidence level attached to a safety area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Level {
    pub fn new(alpha: f64, epsilon: Option<f64>) -> Result<Self> {
        let open_unit = |p: f64| p > 0.0 && p < 1.0;
        if !open_unit(alpha) || epsilon.is_some_and(|e| !open_unit(e)) {
            return Err(Error::invalid("levels must lie in (0, 1)"));
        }
        Ok(Level { alpha, epsilon })
    }
}

/// `K = (base^delta)^c`, never materialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyArea<T> {
    pub base: SupportSet<T>,
    pub delta: T,
    pub level: Level,
}

impl<T: Scalar> SafetyArea<T> {
    pub fn new(base: SupportSet<T>, delta: T, level: Level) -> Result<Self> {
        if delta < T::zero() {
            return Err(Error::invalid("safety margin must be nonnegative"));
        }
        Ok(SafetyArea { base, delta, level })
    }

    pub fn contains(&self, x: &Site<T>) -> bool {
        self.base.farther_than(x, &self.delta)
    }
}

/// Whether the next support reaches the safety area.
///
/// A point-cloud `next` is scanned point by point. Analytic supports sharing
/// the base's core compare total dilations; anything else falls back to the
/// diameter increment.
pub fn breach<T: Scalar>(area: &SafetyArea<T>, next: &SupportSet<T>) -> bool {
    if let SupportSet::PointCloud { points } = next {
        return points.iter().any(|p| area.contains(p));
    }
    let (base_core, base_offset) = area.base.core();
    let (next_core, next_offset) = next.core();
    let same_core = match (base_core, next_core) {
        (Core::Point(a), Core::Point(b)) => a == b,
        (Core::Cloud(a), Core::Cloud(b)) => a == b,
        _ => false,
    };
    if same_core {
        next_offset > base_offset + area.delta.clone()
    } else {
        let two = T::one() + T::one();
        diameter(next) > diameter(&area.base) + two * area.delta.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{exact, Exact};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn s2(x: f64, y: f64) -> Site<f64> {
        Site::new(vec![x, y]).unwrap()
    }

    fn ball(r: f64) -> SupportSet<f64> {
        SupportSet::ball(s2(0.0, 0.0), r).unwrap()
    }

    #[test]
    fn dilate_ball_grows_radius() {
        assert_eq!(dilate(&ball(1.0), 0.5).unwrap(), ball(1.5));
        assert_eq!(dilate(&ball(1.0), 0.0).unwrap(), ball(1.0));
        assert!(dilate(&ball(1.0), -0.1).is_err());
    }

    #[test]
    fn interval_endpoints_dilate_by_two_delta() {
        let cloud = SupportSet::point_cloud(vec![Site::new(vec![0.0]).unwrap(), Site::new(vec![2.0]).unwrap()]).unwrap();
        let grown = dilate(&cloud, 0.25).unwrap();
        assert!(matches!(grown, SupportSet::DilatedBase { .. }));
        assert_eq!(diameter(&grown), 2.5);
    }

    #[test]
    fn diameters() {
        assert_eq!(diameter(&ball(1.0)), 2.0);
        let cloud = SupportSet::point_cloud(vec![s2(0.0, 0.0), s2(3.0, 4.0)]).unwrap();
        assert_eq!(diameter(&cloud), 5.0);
        assert_eq!(diameter(&SupportSet::point(s2(1.0, 1.0))), 0.0);
        assert!(SupportSet::<f64>::point_cloud(vec![]).is_err());
    }

    #[test]
    fn diameter_identity_under_dilation() {
        let cloud = SupportSet::point_cloud(vec![s2(-1.0, 0.0), s2(1.0, 0.0)]).unwrap();
        assert_eq!(diameter(&cloud), 2.0);
        assert_eq!(diameter(&dilate(&cloud, 0.5).unwrap()), 3.0);
    }

    #[test]
    fn hull_diameter_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let pts: Vec<_> = (0..300).map(|_| s2(rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0))).collect();
            assert_eq!(cloud_diameter(&pts, 10), max_pairwise(&pts));
        }
    }

    #[test]
    fn exact_chain_is_exact() {
        let base: SupportSet<Exact> = SupportSet::point(Site { coords: vec![exact(0.0), exact(0.0)] });
        let s1 = dilate(&base, exact(0.1)).unwrap();
        let s2 = dilate(&s1, exact(0.2)).unwrap();
        let two = exact(2.0);
        assert_eq!((diameter(&s2) - diameter(&s1)) / two, exact(0.2));
    }

    #[test]
    fn breach_examples() {
        let area = SafetyArea::new(ball(1.0), 0.5, Level::new(0.05, None).unwrap()).unwrap();
        assert!(!breach(&area, &dilate(&ball(1.0), 0.4).unwrap()));
        assert!(breach(&area, &dilate(&ball(1.0), 0.6).unwrap()));
        assert!(!breach(&area, &dilate(&ball(1.0), 0.5).unwrap()));
    }

    #[test]
    fn safety_area_membership() {
        let area = SafetyArea::new(ball(1.0), 0.5, Level::new(0.05, None).unwrap()).unwrap();
        assert!(area.contains(&s2(1.6, 0.0)));
        assert!(!area.contains(&s2(1.4, 0.0)));
        let tight = SafetyArea::new(ball(1.0), 0.0, Level::new(0.05, None).unwrap()).unwrap();
        assert!(!tight.contains(&s2(1.0, 0.0)));
        assert!(tight.contains(&s2(1.0 + 1e-9, 0.0)));
    }

    #[test]
    fn json_shape() {
        let v = serde_json::to_value(dilate(&ball(1.0), 0.5).unwrap()).unwrap();
        assert_eq!(v["kind"], "ball");
        assert_eq!(v["radius"], 1.5);
        assert_eq!(v["center"], serde_json::json!([0.0, 0.0]));
        let cloud = SupportSet::point_cloud(vec![s2(0.0, 1.0)]).unwrap();
        let d = dilate(&cloud, 0.25).unwrap();
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["kind"], "dilated_base");
        assert_eq!(v["base"]["kind"], "point_cloud");
        let back: SupportSet<f64> = serde_json::from_value(v).unwrap();
        assert_eq!(back, d);
    }

    proptest! {
        #[test]
        fn dilation_is_monotone(d1 in 0.0f64..2.0, extra in 0.0f64..2.0, x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let a = SupportSet::point_cloud(vec![s2(0.0, 0.0), s2(1.0, 0.5)]).unwrap();
            let small = dilate(&a, d1).unwrap();
            let large = dilate(&a, d1 + extra).unwrap();
            let p = s2(x, y);
            prop_assert!(!small.contains(&p) || large.contains(&p));
        }

        #[test]
        fn ball_dilation_is_additive(r in 0.0f64..2.0, a in 0.0f64..1.0, b in 0.0f64..1.0, x in -5.0f64..5.0) {
            let twice = dilate(&dilate(&ball(r), a).unwrap(), b).unwrap();
            let once = dilate(&ball(r), a + b).unwrap();
            let p = s2(x, 0.3);
            let gap = (twice.distance_to(&p) - once.distance_to(&p)).abs();
            prop_assert!(gap < 1e-12);
        }

        #[test]
        fn breach_iff_radius_exceeds_margin(r in 0.0f64..3.0, delta in 0.0f64..3.0, base_r in 0.0f64..2.0) {
            let area = SafetyArea::new(ball(base_r), delta, Level::new(0.1, None).unwrap()).unwrap();
            let next = dilate(&area.base, r).unwrap();
            prop_assert_eq!(breach(&area, &next), r > delta);
        }
    }
}
