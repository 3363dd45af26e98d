//! Keyframe resampling: natural cubic splines for position, shortest-arc
//! interpolation for heading, and arc-length bookkeeping.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{normalize_angle, LocalPoint, Pose2D, Vec2};
use crate::ingest::AgentTrack;

/// Default simulation step (20 Hz).
pub const DEFAULT_DT: f64 = 0.05;

/// Slack when counting grid steps that should land exactly on an endpoint.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajError {
    #[error("track `{id}` has {count} keyframe(s); at least 2 are required")]
    NotSimulable { id: String, count: usize },
    #[error("track `{id}`: keyframe times must strictly increase (index {index})")]
    NonIncreasing { id: String, index: usize },
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
}

/// One-dimensional natural cubic spline over strictly increasing knots.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivative at each knot; zero at both ends.
    second: Vec<f64>,
}

impl NaturalSpline {
    /// Caller guarantees `knots.len() == values.len() >= 2` and strictly
    /// increasing knots.
    pub fn new(knots: &[f64], values: &[f64]) -> Self {
        let n = knots.len();
        debug_assert!(n >= 2 && values.len() == n);
        let mut second = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations
            //   h[i-1] M[i-1] + 2 (h[i-1] + h[i]) M[i] + h[i] M[i+1] = rhs[i]
            let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for j in 0..m {
                let i = j + 1;
                diag[j] = 2.0 * (h[i - 1] + h[i]);
                rhs[j] = 6.0
                    * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
            }
            for j in 1..m {
                let w = h[j] / diag[j - 1];
                diag[j] -= w * h[j];
                rhs[j] -= w * rhs[j - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for j in (0..m - 1).rev() {
                second[j + 1] = (rhs[j] - h[j + 1] * second[j + 2]) / diag[j];
            }
        }
        Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            second,
        }
    }

    fn segment(&self, t: f64) -> usize {
        let idx = self.knots.partition_point(|k| *k <= t);
        idx.clamp(1, self.knots.len() - 1) - 1
    }

    /// Value at `t`, clamped to the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        let t = t.clamp(self.knots[0], self.knots[n - 1]);
        let i = self.segment(t);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }

    /// First derivative at `t`, clamped to the knot range.
    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.knots.len();
        let t = t.clamp(self.knots[0], self.knots[n - 1]);
        let i = self.segment(t);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        (self.values[i + 1] - self.values[i]) / h
            - (3.0 * a * a - 1.0) / 6.0 * h * self.second[i]
            + (3.0 * b * b - 1.0) / 6.0 * h * self.second[i + 1]
    }
}

/// Continuous-time view of a track: spline positions, SLERP headings.
#[derive(Debug, Clone)]
pub struct TrackSpline {
    pub agent_id: String,
    times: Vec<f64>,
    headings: Vec<f64>,
    x: NaturalSpline,
    y: NaturalSpline,
}

impl TrackSpline {
    pub fn new(track: &AgentTrack) -> Result<Self, TrajError> {
        if !track.is_simulable() {
            return Err(TrajError::NotSimulable {
                id: track.agent_id.clone(),
                count: track.keyframes.len(),
            });
        }
        if let Some(index) = track.keyframes.windows(2).position(|w| w[1].t.is_nan() || w[1].t <= w[0].t) {
            return Err(TrajError::NonIncreasing {
                id: track.agent_id.clone(),
                index: index + 1,
            });
        }
        let times: Vec<f64> = track.keyframes.iter().map(|k| k.t).collect();
        let xs: Vec<f64> = track.keyframes.iter().map(|k| k.pose.position.x).collect();
        let ys: Vec<f64> = track.keyframes.iter().map(|k| k.pose.position.y).collect();
        Ok(Self {
            agent_id: track.agent_id.clone(),
            headings: track.keyframes.iter().map(|k| k.pose.heading).collect(),
            x: NaturalSpline::new(&times, &xs),
            y: NaturalSpline::new(&times, &ys),
            times,
        })
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start() && t <= self.end()
    }

    pub fn position(&self, t: f64) -> LocalPoint {
        Vec2::new(self.x.eval(t), self.y.eval(t))
    }

    pub fn velocity(&self, t: f64) -> Vec2 {
        Vec2::new(self.x.derivative(t), self.y.derivative(t))
    }

    pub fn heading(&self, t: f64) -> f64 {
        let t = t.clamp(self.start(), self.end());
        let idx = self.times.partition_point(|k| *k <= t);
        let i = idx.clamp(1, self.times.len() - 1) - 1;
        let u = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        interp_heading(self.headings[i], self.headings[i + 1], u)
    }

    pub fn pose(&self, t: f64) -> Pose2D {
        Pose2D::new(self.position(t), self.heading(t))
    }

    /// `count` samples at `t0 + k·dt`.
    pub fn sample_grid(&self, t0: f64, dt: f64, count: usize) -> SampledTrajectory {
        let poses: Vec<Pose2D> = (0..count).map(|k| self.pose(t0 + k as f64 * dt)).collect();
        SampledTrajectory::from_poses(self.agent_id.clone(), t0, dt, poses)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledTrajectory {
    pub agent_id: String,
    pub t0: f64,
    pub dt: f64,
    pub poses: Vec<Pose2D>,
    /// Finite-difference speed magnitude per sample.
    pub speeds: Vec<f64>,
}

impl SampledTrajectory {
    fn from_poses(agent_id: String, t0: f64, dt: f64, poses: Vec<Pose2D>) -> Self {
        let n = poses.len();
        let speeds = (0..n)
            .map(|i| match (i.checked_sub(1), (i + 1 < n).then_some(i + 1)) {
                (_, Some(j)) => poses[j].position.distance(poses[i].position) / dt,
                (Some(j), None) => poses[i].position.distance(poses[j].position) / dt,
                (None, None) => 0.0,
            })
            .collect();
        Self {
            agent_id,
            t0,
            dt,
            poses,
            speeds,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn positions(&self) -> impl Iterator<Item = LocalPoint> + '_ {
        self.poses.iter().map(|p| p.position)
    }
}

/// Resample `track` at its first keyframe time plus multiples of `dt`, up to
/// the last keyframe time.
pub fn cubic_spline_resample(track: &AgentTrack, dt: f64) -> Result<SampledTrajectory, TrajError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TrajError::BadStep(dt));
    }
    let spline = TrackSpline::new(track)?;
    let steps = ((spline.end() - spline.start()) / dt + GRID_EPS).floor() as usize;
    Ok(spline.sample_grid(spline.start(), dt, steps + 1))
}

/// Constant-rate interpolation from `h0` to `h1` along the shorter arc. An
/// exact half-turn goes counter-clockwise.
pub fn interp_heading(h0: f64, h1: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return normalize_angle(h0);
    }
    if u >= 1.0 {
        return normalize_angle(h1);
    }
    let mut delta = normalize_angle(h1 - h0);
    if delta == -PI {
        delta = PI;
    }
    normalize_angle(h0 + u * delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathArcLength {
    pub cumulative: Vec<f64>,
    pub total_length: f64,
}

/// Cumulative chord lengths along the sampled positions.
pub fn arc_length(traj: &SampledTrajectory) -> PathArcLength {
    chord_lengths(&traj.positions().collect::<Vec<_>>())
}

fn chord_lengths(points: &[LocalPoint]) -> PathArcLength {
    let mut cumulative = Vec::with_capacity(points.len());
    let mut s = 0.0;
    if !points.is_empty() {
        cumulative.push(0.0);
    }
    for w in points.windows(2) {
        s += w[1].distance(w[0]);
        cumulative.push(s);
    }
    PathArcLength {
        cumulative,
        total_length: s,
    }
}

/// A polyline parameterized by arc length; poses lie on the polyline with
/// the heading of the segment they sit on.
#[derive(Debug, Clone)]
pub struct ArcPath {
    points: Vec<LocalPoint>,
    arc: PathArcLength,
    fallback_heading: f64,
}

impl ArcPath {
    pub fn new(traj: &SampledTrajectory) -> Self {
        let points: Vec<LocalPoint> = traj.positions().collect();
        let arc = chord_lengths(&points);
        Self {
            fallback_heading: traj.poses.first().map_or(0.0, |p| p.heading),
            points,
            arc,
        }
    }

    pub fn total_length(&self) -> f64 {
        self.arc.total_length
    }

    pub fn pose_at(&self, s: f64) -> Pose2D {
        let cum = &self.arc.cumulative;
        if self.points.len() < 2 || self.arc.total_length == 0.0 {
            return Pose2D::new(self.points[0], self.fallback_heading);
        }
        let s = s.clamp(0.0, self.arc.total_length);
        // first segment whose end reaches s and has non-zero length
        let mut i = cum.partition_point(|c| *c < s).clamp(1, cum.len() - 1) - 1;
        while cum[i + 1] - cum[i] == 0.0 && i + 2 < cum.len() {
            i += 1;
        }
        while cum[i + 1] - cum[i] == 0.0 && i > 0 {
            i -= 1;
        }
        let (a, b) = (self.points[i], self.points[i + 1]);
        let len = cum[i + 1] - cum[i];
        let u = ((s - cum[i]) / len).clamp(0.0, 1.0);
        Pose2D::new(a + (b - a) * u, (b - a).angle())
    }
}
