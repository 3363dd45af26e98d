//! Coordinate frames: WGS-84 fixes, the local tangent plane, and the
//! ego-relative annotation frame.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::AgentTrack;

/// Mean Earth radius used by the equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Largest latitude/longitude offset from the origin the projection accepts.
pub const MAX_PROJECTION_SPAN_DEG: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("point is {0:.4} deg from the projection origin (limit {MAX_PROJECTION_SPAN_DEG} deg)")]
    TooFarFromOrigin(f64),
    #[error("scenario has no keyframes")]
    EmptyScenario,
    #[error("margin must be finite and non-negative, got {0}")]
    InvalidMargin(f64),
}

/// Plain 2-vector used for positions, velocities and forces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

/// A position on the local tangent plane: x east, y north, meters.
pub type LocalPoint = Vec2;

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `angle` radians CCW from +x.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Angle of the vector, CCW from +x, in (-π, π].
    pub fn angle(self) -> f64 {
        normalize_angle(self.y.atan2(self.x))
    }

    /// Rotate CCW by `angle` radians.
    pub fn rotated(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    /// Scale down to `max_norm` if longer, keeping direction.
    pub fn clamp_norm(self, max_norm: f64) -> Self {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self * (max_norm / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wrap an angle into (-π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle % TAU;
    if a <= -PI {
        a += TAU;
    }
    if a > PI {
        a -= TAU;
    }
    a
}

/// Convert a compass bearing (degrees clockwise from north) into radians
/// counter-clockwise from east.
pub fn compass_to_heading(bearing_deg: f64) -> f64 {
    normalize_angle(PI / 2.0 - bearing_deg.to_radians())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let p = Self { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(GeoError::LatitudeOutOfRange(self.lat));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(GeoError::LongitudeOutOfRange(self.lon));
        }
        Ok(())
    }
}

/// Position plus heading (radians CCW from +x, normalized to (-π, π]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub position: LocalPoint,
    pub heading: f64,
}

impl Pose2D {
    pub fn new(position: LocalPoint, heading: f64) -> Self {
        Self {
            position,
            heading: normalize_angle(heading),
        }
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }

    /// Express a world point in this pose's frame: (longitudinal, lateral-left).
    pub fn to_local_frame(&self, world: LocalPoint) -> Vec2 {
        (world - self.position).rotated(-self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: GeoPoint,
    pub max: GeoPoint,
    pub margin: f64,
}

impl BoundingBox {
    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min.lat..=self.max.lat).contains(&p.lat)
            && (self.min.lon..=self.max.lon).contains(&p.lon)
    }
}

fn check_span(p: GeoPoint, origin: GeoPoint) -> Result<(), GeoError> {
    let span = (p.lat - origin.lat).abs().max((p.lon - origin.lon).abs());
    if span >= MAX_PROJECTION_SPAN_DEG {
        return Err(GeoError::TooFarFromOrigin(span));
    }
    Ok(())
}

/// Equirectangular projection of `p` onto the tangent plane at `origin`.
pub fn project_to_local(p: GeoPoint, origin: GeoPoint) -> Result<LocalPoint, GeoError> {
    p.validate()?;
    origin.validate()?;
    check_span(p, origin)?;
    let dlat = (p.lat - origin.lat).to_radians();
    let dlon = (p.lon - origin.lon).to_radians();
    Ok(Vec2::new(
        EARTH_RADIUS_M * dlon * origin.lat.to_radians().cos(),
        EARTH_RADIUS_M * dlat,
    ))
}

/// Exact inverse of [`project_to_local`].
pub fn local_to_geo(p: LocalPoint, origin: GeoPoint) -> GeoPoint {
    let lat = origin.lat + (p.y / EARTH_RADIUS_M).to_degrees();
    let lon = origin.lon + (p.x / (EARTH_RADIUS_M * origin.lat.to_radians().cos())).to_degrees();
    GeoPoint { lat, lon }
}

/// Map an annotation offset (forward, annotation-convention lateral) to the
/// world frame. The annotation lateral axis points opposite to the world's
/// left-hand lateral axis, so it is negated here and nowhere else.
pub fn ego_relative_to_world(rel_x: f64, rel_y: f64, ego: Pose2D) -> LocalPoint {
    ego.position + Vec2::new(rel_x, -rel_y).rotated(ego.heading)
}

/// Axis-aligned box around `points`, grown by `margin` meters on every side.
pub fn bounds_of_points<I>(points: I, margin: f64) -> Result<BoundingBox, GeoError>
where
    I: IntoIterator<Item = GeoPoint>,
{
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(GeoError::InvalidMargin(margin));
    }
    let mut iter = points.into_iter();
    let first = iter.next().ok_or(GeoError::EmptyScenario)?;
    let (mut min, mut max) = (first, first);
    for p in iter {
        min.lat = min.lat.min(p.lat);
        min.lon = min.lon.min(p.lon);
        max.lat = max.lat.max(p.lat);
        max.lon = max.lon.max(p.lon);
    }
    let mid_lat = 0.5 * (min.lat + max.lat);
    let dlat = (margin / EARTH_RADIUS_M).to_degrees();
    let dlon = (margin / (EARTH_RADIUS_M * mid_lat.to_radians().cos())).to_degrees();
    Ok(BoundingBox {
        min: GeoPoint {
            lat: min.lat - dlat,
            lon: min.lon - dlon,
        },
        max: GeoPoint {
            lat: max.lat + dlat,
            lon: max.lon + dlon,
        },
        margin,
    })
}

/// Geographic extent of every keyframe of every track.
pub fn compute_scenario_bounds(
    tracks: &[AgentTrack],
    origin: GeoPoint,
    margin: f64,
) -> Result<BoundingBox, GeoError> {
    let points = tracks
        .iter()
        .flat_map(|tr| tr.keyframes.iter())
        .map(|kf| local_to_geo(kf.pose.position, origin));
    bounds_of_points(points, margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const INDY: GeoPoint = GeoPoint {
        lat: 39.77,
        lon: -86.16,
    };

    #[test]
    fn origin_projects_to_zero() {
        assert_eq!(project_to_local(INDY, INDY).unwrap(), Vec2::ZERO);
    }

    #[test]
    fn northward_offset() {
        let p = GeoPoint::new(39.7709, -86.16).unwrap();
        let l = project_to_local(p, INDY).unwrap();
        // R * 9e-4 deg in radians
        let expected = 6_371_000.0 * 9e-4 * std::f64::consts::PI / 180.0;
        assert_abs_diff_eq!(l.x, 0.0);
        assert_abs_diff_eq!(l.y, expected, epsilon = 1e-6);
        assert_abs_diff_eq!(l.y, 100.1, epsilon = 0.05);
    }

    #[test]
    fn eastward_offset_at_equator() {
        let o = GeoPoint::new(0.0, 0.0).unwrap();
        let l = project_to_local(GeoPoint::new(0.0, 0.001).unwrap(), o).unwrap();
        assert_abs_diff_eq!(l.x, 111.194_926_6, epsilon = 1e-6);
        assert_abs_diff_eq!(l.y, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            project_to_local(GeoPoint { lat: 91.0, lon: 0.0 }, INDY),
            Err(GeoError::LatitudeOutOfRange(91.0))
        );
        assert!(matches!(
            project_to_local(GeoPoint { lat: 0.0, lon: -181.0 }, INDY),
            Err(GeoError::LongitudeOutOfRange(_))
        ));
        assert!(matches!(
            project_to_local(GeoPoint::new(41.0, -86.16).unwrap(), INDY),
            Err(GeoError::TooFarFromOrigin(_))
        ));
    }

    #[test]
    fn relative_transform_examples() {
        let at_origin = Pose2D::new(Vec2::ZERO, 0.0);
        assert_eq!(ego_relative_to_world(5.0, 0.0, at_origin), Vec2::new(5.0, 0.0));
        assert_eq!(ego_relative_to_world(0.0, 2.0, at_origin), Vec2::new(0.0, -2.0));

        let turned = Pose2D::new(Vec2::new(10.0, 10.0), PI / 2.0);
        let w = ego_relative_to_world(5.0, 0.0, turned);
        assert_abs_diff_eq!(w.x, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.y, 15.0, epsilon = 1e-12);
    }

    #[test]
    fn angle_normalization() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert_abs_diff_eq!(normalize_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(compass_to_heading(90.0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(compass_to_heading(0.0), PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn bounds_examples() {
        let a = GeoPoint::new(39.77, -86.16).unwrap();
        let b = GeoPoint::new(39.78, -86.15).unwrap();

        let single = bounds_of_points([a], 0.0).unwrap();
        assert_eq!(single.min, single.max);

        let pair = bounds_of_points([a, b], 0.0).unwrap();
        assert_eq!(pair.min, a);
        assert_eq!(pair.max, b);

        let grown = bounds_of_points([a, b], 50.0).unwrap();
        // 50 m expressed through the inverse projection at the box latitude
        let mid = GeoPoint {
            lat: 39.775,
            lon: -86.155,
        };
        let north = local_to_geo(Vec2::new(0.0, 50.0), mid);
        let east = local_to_geo(Vec2::new(50.0, 0.0), mid);
        assert_abs_diff_eq!(b.lat - a.lat + 2.0 * (north.lat - mid.lat), grown.max.lat - grown.min.lat, epsilon = 1e-12);
        assert_abs_diff_eq!(b.lon - a.lon + 2.0 * (east.lon - mid.lon), grown.max.lon - grown.min.lon, epsilon = 1e-12);
        let corner = project_to_local(grown.max, mid).unwrap() - project_to_local(b, mid).unwrap();
        assert_abs_diff_eq!(corner.y, 50.0, epsilon = 1e-6);

        assert_eq!(bounds_of_points(std::iter::empty(), 0.0), Err(GeoError::EmptyScenario));
    }

    proptest! {
        #[test]
        fn projection_round_trip(dlat in -0.0999..0.0999f64, dlon in -0.0999..0.0999f64) {
            let p = GeoPoint { lat: INDY.lat + dlat, lon: INDY.lon + dlon };
            let back = local_to_geo(project_to_local(p, INDY).unwrap(), INDY);
            prop_assert!((back.lat - p.lat).abs() < 1e-9);
            prop_assert!((back.lon - p.lon).abs() < 1e-9);
        }

        #[test]
        fn rotation_preserves_distance(rx in -50.0..50.0f64, ry in -50.0..50.0f64,
                                       px in -1e3..1e3f64, py in -1e3..1e3f64, h in -PI..PI) {
            let ego = Pose2D::new(Vec2::new(px, py), h);
            let w = ego_relative_to_world(rx, ry, ego);
            prop_assert!((w.distance(ego.position) - rx.hypot(ry)).abs() < 1e-9);
        }

        #[test]
        fn zero_heading_is_translation(rx in -50.0..50.0f64, px in -1e3..1e3f64, py in -1e3..1e3f64) {
            let ego = Pose2D::new(Vec2::new(px, py), 0.0);
            prop_assert_eq!(ego_relative_to_world(rx, 0.0, ego), Vec2::new(px + rx, py));
        }

        #[test]
        fn normalized_angles_in_range(a in -100.0..100.0f64) {
            let n = normalize_angle(a);
            prop_assert!(n > -PI && n <= PI);
            prop_assert!(((a - n) / TAU - ((a - n) / TAU).round()).abs() < 1e-9);
        }
    }
}
