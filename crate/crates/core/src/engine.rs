//! Fixed-step closed-loop simulation of one ego vehicle and its riders.
//!
//! Each frame reads one snapshot of the world. Collision checks, ego control
//! and rider forces all use that snapshot, and the frame is recorded before
//! anything is integrated. The ego moves along its reconstructed path by arc
//! length. Only its speed is controlled.

use serde::{Deserialize, Serialize};

use crate::cap::{compute_command, in_corridor, select_threat, CapMode, CapState};
use crate::geo::{LocalPoint, Pose2D, Vec2};
use crate::ingest::{AgentKind, AgentTrack, Keyframe};
use crate::metrics::{classify_zone, ttc, TtcZone};
use crate::sfm::{destination_force, rider_forces, step_escooter, total_force, EscooterState, SfmForces};
use crate::traj::{ArcPath, TrackSpline};
use crate::variants::ScenarioSpec;

/// Grid spacing of the timing-shift search.
pub const SHIFT_RESOLUTION: f64 = 0.1;
/// Time step used to replay both agents inside the shift search.
pub const OVERLAP_EVAL_DT: f64 = 0.05;

const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EgoMode {
    /// Hold `speed` exactly along the reconstructed path.
    ConstantSpeedReplay { speed: f64 },
    CapControlled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScooterMode {
    KinematicReplay,
    /// Social-force dynamics using the scenario's rider profile.
    Sfm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentMode {
    pub ego: EgoMode,
    pub scooter: ScooterMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionGeometry {
    pub ego_length: f64,
    pub ego_width: f64,
    pub scooter_radius: f64,
}

impl Default for CollisionGeometry {
    fn default() -> Self {
        Self {
            ego_length: 4.5,
            ego_width: 1.8,
            scooter_radius: 0.4,
        }
    }
}

impl CollisionGeometry {
    /// Front-bumper midpoint, the point repulsion and gaps are measured from.
    pub fn influence_point(&self, ego: &Pose2D) -> LocalPoint {
        ego.position + ego.forward() * (0.5 * self.ego_length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CollisionStart,
    BrakeEnter,
    BrakeExit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub agent_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoSample {
    pub pose: Pose2D,
    pub path_s: f64,
    pub speed: f64,
    pub accel: f64,
    /// Planner mode; `None` when the ego is not planner-controlled.
    pub mode: Option<CapMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScooterSample {
    pub pos: LocalPoint,
    pub vel: Vec2,
    pub forces: SfmForces,
    /// Influence point to rider center, m.
    pub gap: f64,
    /// Infinite unless the rider is in the forward corridor.
    pub ttc: f64,
    pub zone: TtcZone,
    pub in_contact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub k: usize,
    pub t: f64,
    pub ego: EgoSample,
    /// One slot per entry of `SimTrace::scooter_ids`; `None` while inactive.
    pub scooters: Vec<Option<ScooterSample>>,
    /// Most severe zone over active riders.
    pub zone: TtcZone,
    /// Latched once the first collision happens.
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub name: String,
    pub dt: f64,
    pub scooter_ids: Vec<String>,
    pub frames: Vec<Frame>,
    pub events: Vec<Event>,
}

impl SimTrace {
    pub fn collided(&self) -> bool {
        self.frames.iter().any(|f| f.collided)
    }

    pub fn ego_speeds(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.ego.speed).collect()
    }

    pub fn collision_time(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == EventKind::CollisionStart)
            .map(|e| e.t)
    }

    /// Positions of one rider over the frames where it is active.
    pub fn scooter_path(&self, id: &str) -> Vec<(usize, LocalPoint)> {
        let Some(slot) = self.scooter_ids.iter().position(|s| s == id) else {
            return Vec::new();
        };
        self.frames
            .iter()
            .filter_map(|f| f.scooters[slot].map(|s| (f.k, s.pos)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid scenario: {}", .issues.iter().map(|(p, m)| format!("{p}: {m}")).collect::<Vec<_>>().join("; "))]
pub struct ValidationError {
    /// (field path, message)
    pub issues: Vec<(String, String)>,
}

/// Number of frames for `duration` at `dt`: `floor(duration / dt) + 1`.
pub fn frame_count(duration: f64, dt: f64) -> usize {
    (duration / dt + GRID_EPS).floor() as usize + 1
}

pub fn shift_timing(track: &AgentTrack, delta: f64) -> AgentTrack {
    AgentTrack {
        keyframes: track
            .keyframes
            .iter()
            .map(|k| Keyframe {
                t: k.t + delta,
                pose: k.pose,
            })
            .collect(),
        ..track.clone()
    }
}

/// Signed distance from `p` to the ego rectangle (negative inside).
fn rect_signed_distance(ego: &Pose2D, geom: &CollisionGeometry, p: LocalPoint) -> f64 {
    let local = ego.to_local_frame(p);
    let qx = local.x.abs() - 0.5 * geom.ego_length;
    let qy = local.y.abs() - 0.5 * geom.ego_width;
    Vec2::new(qx.max(0.0), qy.max(0.0)).norm() + qx.max(qy).min(0.0)
}

/// Whether the rider's disc touches the ego's oriented rectangle.
pub fn detect_collision(ego: &Pose2D, geom: &CollisionGeometry, scooter_pos: LocalPoint) -> bool {
    let local = ego.to_local_frame(scooter_pos);
    let dx = (local.x.abs() - 0.5 * geom.ego_length).max(0.0);
    let dy = (local.y.abs() - 0.5 * geom.ego_width).max(0.0);
    dx * dx + dy * dy <= geom.scooter_radius * geom.scooter_radius
}

/// Clearance between rider disc and ego rectangle; negative when overlapping.
pub fn clearance(ego: &Pose2D, geom: &CollisionGeometry, scooter_pos: LocalPoint) -> f64 {
    rect_signed_distance(ego, geom, scooter_pos) - geom.scooter_radius
}

/// Smallest clearance over the replay when the rider's timeline is shifted by
/// `delta`; `None` if the shifted timelines never overlap.
fn min_clearance(ego: &TrackSpline, scooter: &TrackSpline, geom: &CollisionGeometry, delta: f64) -> Option<f64> {
    let steps = ((ego.end() - ego.start()) / OVERLAP_EVAL_DT + GRID_EPS).floor() as usize;
    (0..=steps)
        .map(|k| ego.start() + k as f64 * OVERLAP_EVAL_DT)
        .filter(|t| scooter.contains(t - delta))
        .map(|t| clearance(&ego.pose(t), geom, scooter.position(t - delta)))
        .reduce(f64::min)
}

/// Timing shift on a 0.1 s grid over ±(longer track span) that brings the
/// two replayed agents closest. Ties go to the smallest |shift|, and the
/// positive shift wins between equal magnitudes.
pub fn induce_overlap(
    ego_track: &AgentTrack,
    scooter_track: &AgentTrack,
    geom: &CollisionGeometry,
) -> Result<f64, crate::traj::TrajError> {
    overlap_search(ego_track, scooter_track, geom).map(|(delta, _)| delta)
}

/// [`induce_overlap`] together with the clearance reached at that shift.
pub fn overlap_search(
    ego_track: &AgentTrack,
    scooter_track: &AgentTrack,
    geom: &CollisionGeometry,
) -> Result<(f64, f64), crate::traj::TrajError> {
    let ego = TrackSpline::new(ego_track)?;
    let scooter = TrackSpline::new(scooter_track)?;
    let span = (ego.end() - ego.start()).max(scooter.end() - scooter.start());
    let n = (span / SHIFT_RESOLUTION + GRID_EPS).floor() as i64;

    let per_second = (1.0 / SHIFT_RESOLUTION).round();
    let mut best = (0.0, f64::INFINITY);
    let order = std::iter::once(0).chain((1..=n).flat_map(|i| [i, -i]));
    for i in order {
        let delta = i as f64 / per_second;
        if let Some(c) = min_clearance(&ego, &scooter, geom, delta) {
            if c < best.1 {
                best = (delta, c);
            }
        }
    }
    Ok(best)
}

pub fn validate(spec: &ScenarioSpec) -> Result<(), ValidationError> {
    let mut issues = Vec::new();
    let mut push = |path: String, msg: String| issues.push((path, msg));
    if !(spec.dt > 0.0 && spec.dt.is_finite()) {
        push("dt".into(), format!("must be positive, got {}", spec.dt));
    }
    if !(spec.duration > 0.0 && spec.duration.is_finite()) {
        push("duration".into(), format!("must be positive, got {}", spec.duration));
    }
    if !spec.timing_shift.is_finite() {
        push("timing_shift".into(), "must be finite".into());
    }
    let egos: Vec<_> = spec.tracks.iter().filter(|t| t.kind == AgentKind::Ego).collect();
    if egos.len() != 1 {
        push("tracks".into(), format!("expected exactly one ego track, found {}", egos.len()));
    }
    for (i, tr) in spec.tracks.iter().enumerate() {
        if let Err(e) = TrackSpline::new(tr) {
            push(format!("tracks[{i}]"), e.to_string());
        }
    }
    if let EgoMode::ConstantSpeedReplay { speed } = spec.agent_modes.ego {
        if !(speed >= 0.0 && speed.is_finite()) {
            push("agent_modes.ego.speed".into(), format!("must be non-negative, got {speed}"));
        }
    }
    if !(spec.aggressive_force_scale >= 0.0 && spec.aggressive_force_scale.is_finite()) {
        push("aggressive_force_scale".into(), "must be non-negative".into());
    }
    if let Err(m) = spec.effective_rider_profile().validate() {
        push("rider_profile".into(), m);
    }
    if let Err(m) = spec.cap_config.validate() {
        push("cap_config".into(), m);
    }
    let g = &spec.geometry;
    for (name, v) in [
        ("ego_length", g.ego_length),
        ("ego_width", g.ego_width),
        ("scooter_radius", g.scooter_radius),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            push(format!("geometry.{name}"), format!("must be positive, got {v}"));
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(ValidationError { issues })
    }
}

struct Rider {
    id: String,
    spline: TrackSpline,
    destination: LocalPoint,
    /// First and last frame index covered by the (shifted) track.
    first: i64,
    last: i64,
    state: Option<EscooterState>,
}

impl Rider {
    fn covers(&self, k: usize) -> bool {
        (self.first..=self.last).contains(&(k as i64))
    }
}

/// Run one scenario to completion.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<SimTrace, ValidationError> {
    validate(spec)?;
    let dt = spec.dt;
    let n = frame_count(spec.duration, dt);
    let geom = spec.geometry;
    let profile = spec.effective_rider_profile();

    let ego_track = spec
        .tracks
        .iter()
        .find(|t| t.kind == AgentKind::Ego)
        .expect("validated");
    let ego_spline = TrackSpline::new(ego_track).expect("validated");
    let ego_steps = ((ego_spline.end() - ego_spline.start()) / dt + GRID_EPS).floor() as usize;
    let path = ArcPath::new(&ego_spline.sample_grid(ego_spline.start(), dt, ego_steps + 1));

    let mut riders: Vec<Rider> = spec
        .tracks
        .iter()
        .filter(|t| t.kind == AgentKind::Escooter)
        .map(|t| {
            let shifted = shift_timing(t, spec.timing_shift);
            let spline = TrackSpline::new(&shifted).expect("validated");
            Rider {
                id: t.agent_id.clone(),
                first: (spline.start() / dt - GRID_EPS).ceil() as i64,
                last: (spline.end() / dt + GRID_EPS).floor() as i64,
                destination: shifted.keyframes.last().expect("validated").pose.position,
                spline,
                state: None,
            }
        })
        .collect();

    let mut speed = match spec.agent_modes.ego {
        EgoMode::ConstantSpeedReplay { speed } => speed,
        EgoMode::CapControlled => spec.cap_config.v_des,
    };
    let cap_controlled = spec.agent_modes.ego == EgoMode::CapControlled;
    let mut path_s = 0.0;
    let mut cap_state = CapState::default();
    let mut collided = false;
    let mut frames = Vec::with_capacity(n);
    let mut events = Vec::new();

    for k in 0..n {
        let t = k as f64 * dt;
        let ego_pose = path.pose_at(path_s);
        let influence = Pose2D::new(geom.influence_point(&ego_pose), ego_pose.heading);

        // rider positions for this snapshot
        let mut observed: Vec<Option<EscooterState>> = Vec::with_capacity(riders.len());
        for r in riders.iter_mut() {
            let obs = match spec.agent_modes.scooter {
                ScooterMode::KinematicReplay => r.covers(k).then(|| EscooterState {
                    pos: r.spline.position(t),
                    vel: r.spline.velocity(t),
                }),
                ScooterMode::Sfm => {
                    if r.state.is_none() && r.covers(k) {
                        r.state = Some(EscooterState {
                            pos: r.spline.position(t),
                            vel: r.spline.velocity(t),
                        });
                    }
                    r.state
                }
            };
            observed.push(obs);
        }

        let contacts: Vec<bool> = observed
            .iter()
            .map(|o| o.is_some_and(|s| detect_collision(&ego_pose, &geom, s.pos)))
            .collect();
        if !collided {
            if let Some(i) = contacts.iter().position(|c| *c) {
                collided = true;
                speed = 0.0;
                events.push(Event {
                    t,
                    kind: EventKind::CollisionStart,
                    agent_id: Some(riders[i].id.clone()),
                });
            }
        }

        let mut accel = 0.0;
        if collided {
            speed = 0.0;
        } else if cap_controlled {
            let threat = select_threat(
                &influence,
                riders
                    .iter()
                    .zip(&observed)
                    .filter_map(|(r, o)| o.map(|s| (r.id.as_str(), s.pos))),
                &spec.cap_config,
            );
            let (cmd, next) =
                compute_command(cap_state, speed, threat.map(|(_, g)| g), &spec.cap_config, dt);
            if next.mode != cap_state.mode {
                events.push(Event {
                    t,
                    kind: match next.mode {
                        CapMode::Brake => EventKind::BrakeEnter,
                        CapMode::Cruise => EventKind::BrakeExit,
                    },
                    agent_id: threat.map(|(id, _)| id.to_string()),
                });
            }
            cap_state = next;
            accel = cmd.accel;
        }

        let fallback = -ego_pose.forward();
        let mut samples = Vec::with_capacity(riders.len());
        let mut frame_zone = TtcZone::Safe;
        let mut forces_now = Vec::with_capacity(riders.len());
        for ((r, obs), contact) in riders.iter().zip(&observed).zip(&contacts) {
            let Some(s) = obs else {
                samples.push(None);
                forces_now.push(None);
                continue;
            };
            let forces = match spec.agent_modes.scooter {
                ScooterMode::KinematicReplay => SfmForces::default(),
                ScooterMode::Sfm => {
                    // with sigma_des = 0 a rider sitting on its destination
                    // has no desired velocity
                    rider_forces(&profile, s, r.destination, Some(influence.position), fallback)
                        .unwrap_or_else(|_| {
                            total_force(&profile, destination_force(profile.k_des, Vec2::ZERO, s.vel), Vec2::ZERO)
                        })
                }
            };
            let gap = s.pos.distance(influence.position);
            let ttc_value = if in_corridor(&influence, s.pos, spec.cap_config.corridor_half_width) {
                ttc(gap, speed)
            } else {
                f64::INFINITY
            };
            let zone = classify_zone(ttc_value, *contact);
            frame_zone = frame_zone.max(zone);
            samples.push(Some(ScooterSample {
                pos: s.pos,
                vel: s.vel,
                forces,
                gap,
                ttc: ttc_value,
                zone,
                in_contact: *contact,
            }));
            forces_now.push(Some(forces));
        }

        frames.push(Frame {
            k,
            t,
            ego: EgoSample {
                pose: ego_pose,
                path_s,
                speed,
                accel,
                mode: cap_controlled.then_some(cap_state.mode),
            },
            scooters: samples,
            zone: frame_zone,
            collided,
        });

        // integrate to the next frame
        if !collided {
            if cap_controlled {
                speed = (speed + accel * dt).max(0.0);
            }
            path_s += speed * dt;
            let end = path.total_length();
            if path_s >= end {
                if path_s > end + 1e-6 * end.max(1.0) {
                    // end of the reconstructed route
                    speed = 0.0;
                }
                path_s = end;
            }
        }
        if spec.agent_modes.scooter == ScooterMode::Sfm {
            for (r, f) in riders.iter_mut().zip(&forces_now) {
                if let (Some(state), Some(f)) = (r.state, f) {
                    r.state = Some(step_escooter(state, f.f_total, profile.m_esc, profile.v_max, dt));
                }
            }
        }
    }

    Ok(SimTrace {
        name: spec.name.clone(),
        dt,
        scooter_ids: riders.into_iter().map(|r| r.id).collect(),
        frames,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn collision_examples() {
        let g = CollisionGeometry::default();
        let ego = Pose2D::new(Vec2::ZERO, 0.0);
        assert!(!detect_collision(&ego, &g, Vec2::new(50.0, 0.0)));
        assert!(detect_collision(&ego, &g, Vec2::ZERO));
        assert!(detect_collision(&ego, &g, Vec2::new(2.65, 0.0)));
        assert!(!detect_collision(&ego, &g, Vec2::new(2.66, 0.0)));
        // rotated ego: the long axis now points north
        let north = Pose2D::new(Vec2::ZERO, std::f64::consts::FRAC_PI_2);
        assert!(detect_collision(&north, &g, Vec2::new(0.0, 2.6)));
        assert!(!detect_collision(&north, &g, Vec2::new(2.6, 0.0)));
    }

    #[test]
    fn clearance_sign() {
        let g = CollisionGeometry::default();
        let ego = Pose2D::new(Vec2::ZERO, 0.0);
        assert_abs_diff_eq!(clearance(&ego, &g, Vec2::new(5.0, 0.0)), 5.0 - 2.25 - 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(clearance(&ego, &g, Vec2::ZERO), -0.9 - 0.4, epsilon = 1e-12);
    }

    #[test]
    fn frame_counts() {
        assert_eq!(frame_count(25.0, 0.05), 501);
        assert_eq!(frame_count(1.0, 0.3), 4);
        assert_eq!(frame_count(25.0, 0.0125), 2001);
    }

    #[test]
    fn shift_examples() {
        let tr = AgentTrack {
            agent_id: "a".into(),
            kind: AgentKind::Escooter,
            keyframes: (1..=5)
                .map(|t| Keyframe {
                    t: t as f64,
                    pose: Pose2D::new(Vec2::new(t as f64, 0.5), 0.0),
                })
                .collect(),
        };
        assert_eq!(shift_timing(&tr, 0.0), tr);
        let s = shift_timing(&tr, 2.0);
        let times: Vec<f64> = s.keyframes.iter().map(|k| k.t).collect();
        assert_eq!(times, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
        assert!(s.keyframes.iter().zip(&tr.keyframes).all(|(a, b)| a.pose == b.pose));
    }
}
