//! Log parsing, GPS/annotation synchronization, and track compilation.
//!
//! GPS CSV header: `t,lat,lon,heading,speed` (heading and speed may be empty;
//! heading is a compass bearing in degrees). Annotation CSV header:
//! `t,scooter_id,rel_x,rel_y` with offsets in the ego-relative annotation
//! frame. Times are decimal seconds from interaction start.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{
    compass_to_heading, ego_relative_to_world, project_to_local, GeoError, GeoPoint, Pose2D, Vec2,
};
use crate::traj::interp_heading;

pub const GPS_HEADER: [&str; 5] = ["t", "lat", "lon", "heading", "speed"];
pub const ANNOTATION_HEADER: [&str; 4] = ["t", "scooter_id", "rel_x", "rel_y"];

/// Half the 1 FPS annotation period.
pub const DEFAULT_SYNC_TOLERANCE: f64 = 0.5;

pub const EGO_ID: &str = "ego";

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: expected header `{expected}`, found `{found}`")]
    Header {
        line: u64,
        expected: String,
        found: String,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Field {
        line: u64,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: timestamp {t} does not increase (previous {prev})")]
    NonMonotonic { line: u64, t: f64, prev: f64 },
    #[error("line {line}: duplicate annotation for scooter `{id}` at t={t}")]
    Duplicate { line: u64, id: String, t: f64 },
    #[error("line {line}: {source}")]
    Csv {
        line: u64,
        #[source]
        source: csv::Error,
    },
    #[error("line {line}: {source}")]
    Geo {
        line: u64,
        #[source]
        source: GeoError,
    },
}

impl ParseError {
    pub fn line(&self) -> u64 {
        match self {
            ParseError::Header { line, .. }
            | ParseError::Field { line, .. }
            | ParseError::NonMonotonic { line, .. }
            | ParseError::Duplicate { line, .. }
            | ParseError::Csv { line, .. }
            | ParseError::Geo { line, .. } => *line,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SyncError {
    #[error("synchronization tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("no GPS records")]
    NoGps,
    #[error("annotations span [{ann_start}, {ann_end}] s but GPS covers [{gps_start}, {gps_end}] s")]
    NoOverlap {
        ann_start: f64,
        ann_end: f64,
        gps_start: f64,
        gps_end: f64,
    },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsRecord {
    pub t: f64,
    pub pos: GeoPoint,
    /// Compass bearing, degrees clockwise from north.
    pub heading: Option<f64>,
    pub speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub t: f64,
    pub scooter_id: String,
    /// Meters ahead of the ego reference point.
    pub rel_x: f64,
    /// Lateral offset in the annotation convention (not yet negated).
    pub rel_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionLog {
    pub gps: Vec<GpsRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub duration: f64,
}

impl InteractionLog {
    pub fn new(gps: Vec<GpsRecord>, annotations: Vec<AnnotationRecord>) -> Self {
        let times = gps
            .iter()
            .map(|g| g.t)
            .chain(annotations.iter().map(|a| a.t));
        let (lo, hi) = times.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            (lo.min(t), hi.max(t))
        });
        let duration = if lo.is_finite() { hi - lo } else { 0.0 };
        Self {
            gps,
            annotations,
            duration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Ego,
    Escooter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    pub pose: Pose2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub agent_id: String,
    pub kind: AgentKind,
    pub keyframes: Vec<Keyframe>,
}

impl AgentTrack {
    /// Spline resampling needs at least two keyframes.
    pub fn is_simulable(&self) -> bool {
        self.keyframes.len() >= 2
    }

    pub fn start_time(&self) -> Option<f64> {
        self.keyframes.first().map(|k| k.t)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.keyframes.last().map(|k| k.t)
    }
}

/// One annotation paired with the ego pose at the annotation timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncedFrame {
    pub t: f64,
    pub scooter_id: String,
    pub rel_x: f64,
    pub rel_y: f64,
    pub ego: Pose2D,
    /// Offset to the nearest GPS fix, always within the tolerance.
    pub gps_dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synchronized {
    /// First GPS fix; origin of the local tangent plane.
    pub origin: GeoPoint,
    /// Every GPS fix as an ego keyframe on the local plane.
    pub ego_keyframes: Vec<Keyframe>,
    pub frames: Vec<SyncedFrame>,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    pub tracks: Vec<AgentTrack>,
    pub warnings: Vec<String>,
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::None)
        .from_reader(source)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), ParseError> {
    let headers = rdr
        .headers()
        .map_err(|source| ParseError::Csv { line: 1, source })?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(ParseError::Header {
            line: 1,
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn parse_f64(raw: &str, line: u64, field: &'static str) -> Result<f64, ParseError> {
    let v: f64 = raw.parse().map_err(|_| ParseError::Field {
        line,
        field,
        message: format!("`{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(ParseError::Field {
            line,
            field,
            message: format!("`{raw}` is not finite"),
        });
    }
    Ok(v)
}

fn parse_opt_f64(raw: &str, line: u64, field: &'static str) -> Result<Option<f64>, ParseError> {
    if raw.is_empty() {
        Ok(None)
    } else {
        parse_f64(raw, line, field).map(Some)
    }
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

pub fn parse_gps<R: Read>(source: R) -> Result<Vec<GpsRecord>, ParseError> {
    let mut rdr = reader(source);
    check_header(&mut rdr, &GPS_HEADER)?;
    let mut out: Vec<GpsRecord> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| ParseError::Csv {
            line: source.position().map_or(0, |p| p.line()),
            source,
        })?;
        let line = record_line(&rec);
        let t = parse_f64(&rec[0], line, "t")?;
        let lat = parse_f64(&rec[1], line, "lat")?;
        let lon = parse_f64(&rec[2], line, "lon")?;
        let pos = GeoPoint::new(lat, lon).map_err(|source| ParseError::Geo { line, source })?;
        let heading = parse_opt_f64(&rec[3], line, "heading")?;
        let speed = parse_opt_f64(&rec[4], line, "speed")?;
        if let Some(s) = speed {
            if s < 0.0 {
                return Err(ParseError::Field {
                    line,
                    field: "speed",
                    message: format!("negative speed {s}"),
                });
            }
        }
        if let Some(prev) = out.last() {
            if t <= prev.t {
                return Err(ParseError::NonMonotonic { line, t, prev: prev.t });
            }
        }
        out.push(GpsRecord {
            t,
            pos,
            heading,
            speed,
        });
    }
    Ok(out)
}

pub fn parse_annotations<R: Read>(source: R) -> Result<Vec<AnnotationRecord>, ParseError> {
    let mut rdr = reader(source);
    check_header(&mut rdr, &ANNOTATION_HEADER)?;
    let mut out: Vec<AnnotationRecord> = Vec::new();
    // ids seen at the current timestamp
    let mut at_t: BTreeSet<String> = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| ParseError::Csv {
            line: source.position().map_or(0, |p| p.line()),
            source,
        })?;
        let line = record_line(&rec);
        let t = parse_f64(&rec[0], line, "t")?;
        let scooter_id = rec[1].to_string();
        if scooter_id.is_empty() {
            return Err(ParseError::Field {
                line,
                field: "scooter_id",
                message: "empty identifier".into(),
            });
        }
        let rel_x = parse_f64(&rec[2], line, "rel_x")?;
        let rel_y = parse_f64(&rec[3], line, "rel_y")?;
        match out.last() {
            Some(prev) if t < prev.t => {
                return Err(ParseError::NonMonotonic { line, t, prev: prev.t });
            }
            Some(prev) if t > prev.t => at_t.clear(),
            _ => {}
        }
        if !at_t.insert(scooter_id.clone()) {
            return Err(ParseError::Duplicate {
                line,
                id: scooter_id,
                t,
            });
        }
        out.push(AnnotationRecord {
            t,
            scooter_id,
            rel_x,
            rel_y,
        });
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_gps(records: &[GpsRecord]) -> String {
    let mut s = GPS_HEADER.join(",");
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.t,
            r.pos.lat,
            r.pos.lon,
            fmt_opt(r.heading),
            fmt_opt(r.speed)
        );
    }
    s
}

pub fn write_annotations(records: &[AnnotationRecord]) -> String {
    let mut s = ANNOTATION_HEADER.join(",");
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{},{},{},{}", r.t, r.scooter_id, r.rel_x, r.rel_y);
    }
    s
}

/// Ego keyframes on the local plane. Heading comes from the GPS bearing when
/// present, otherwise from the forward displacement to the next fix (the last
/// fix reuses the previous heading).
pub fn ego_keyframes(gps: &[GpsRecord], origin: GeoPoint) -> Result<Vec<Keyframe>, GeoError> {
    let positions = gps
        .iter()
        .map(|g| project_to_local(g.pos, origin))
        .collect::<Result<Vec<_>, _>>()?;
    let mut derived = vec![None; positions.len()];
    for i in 0..positions.len().saturating_sub(1) {
        let d = positions[i + 1] - positions[i];
        if d.norm() > 0.0 {
            derived[i] = Some(d.angle());
        }
    }
    // Backfill stationary or final fixes from the nearest earlier heading,
    // then any leading gap from the first known one.
    let mut last = None;
    for h in derived.iter_mut() {
        match h {
            Some(v) => last = Some(*v),
            None => *h = last,
        }
    }
    let first_known = derived.iter().flatten().next().copied().unwrap_or(0.0);
    Ok(gps
        .iter()
        .zip(positions)
        .zip(derived)
        .map(|((g, p), d)| {
            let heading = g
                .heading
                .map(compass_to_heading)
                .unwrap_or_else(|| d.unwrap_or(first_known));
            Keyframe {
                t: g.t,
                pose: Pose2D::new(p, heading),
            }
        })
        .collect())
}

fn ego_pose_at(keyframes: &[Keyframe], t: f64) -> Pose2D {
    let idx = keyframes.partition_point(|k| k.t <= t);
    if idx == 0 {
        return keyframes[0].pose;
    }
    if idx == keyframes.len() {
        return keyframes[idx - 1].pose;
    }
    let (a, b) = (&keyframes[idx - 1], &keyframes[idx]);
    let u = (t - a.t) / (b.t - a.t);
    let pos = a.pose.position + (b.pose.position - a.pose.position) * u;
    Pose2D::new(pos, interp_heading(a.pose.heading, b.pose.heading, u))
}

/// Pair each annotation with the nearest GPS fix, dropping pairs further
/// apart than `tolerance`. Surviving frames carry the ego pose interpolated
/// to the annotation time.
pub fn synchronize(
    gps: &[GpsRecord],
    ann: &[AnnotationRecord],
    tolerance: f64,
) -> Result<Synchronized, SyncError> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(SyncError::BadTolerance(tolerance));
    }
    let first = gps.first().ok_or(SyncError::NoGps)?;
    let last = gps.last().ok_or(SyncError::NoGps)?;
    let origin = first.pos;
    let ego = ego_keyframes(gps, origin)?;

    if let (Some(a0), Some(a1)) = (ann.first(), ann.last()) {
        if a1.t < first.t - tolerance || a0.t > last.t + tolerance {
            return Err(SyncError::NoOverlap {
                ann_start: a0.t,
                ann_end: a1.t,
                gps_start: first.t,
                gps_end: last.t,
            });
        }
    }

    let mut frames = Vec::with_capacity(ann.len());
    let mut dropped = 0;
    for a in ann {
        let idx = gps.partition_point(|g| g.t < a.t);
        let nearest = [idx.checked_sub(1), (idx < gps.len()).then_some(idx)]
            .into_iter()
            .flatten()
            .map(|i| (gps[i].t - a.t).abs())
            .fold(f64::INFINITY, f64::min);
        if nearest > tolerance {
            dropped += 1;
            continue;
        }
        frames.push(SyncedFrame {
            t: a.t,
            scooter_id: a.scooter_id.clone(),
            rel_x: a.rel_x,
            rel_y: a.rel_y,
            ego: ego_pose_at(&ego, a.t),
            gps_dt: nearest,
        });
    }
    if dropped > 0 {
        log::info!("synchronize: dropped {dropped} annotation(s) beyond {tolerance} s of a GPS fix");
    }
    Ok(Synchronized {
        origin,
        ego_keyframes: ego,
        frames,
        dropped,
    })
}

/// For each distinct frame timestamp, the scooters whose annotated span
/// (first to last annotation, inclusive) contains it.
pub fn active_agents(frames: &[SyncedFrame]) -> Vec<(f64, BTreeSet<String>)> {
    let mut spans: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for f in frames {
        let e = spans.entry(&f.scooter_id).or_insert((f.t, f.t));
        e.0 = e.0.min(f.t);
        e.1 = e.1.max(f.t);
    }
    let mut times: Vec<f64> = frames.iter().map(|f| f.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .into_iter()
        .map(|t| {
            let ids = spans
                .iter()
                .filter(|(_, (lo, hi))| *lo <= t && t <= *hi)
                .map(|(id, _)| id.to_string())
                .collect();
            (t, ids)
        })
        .collect()
}

/// Headings along a keyframe sequence from consecutive displacements; the
/// final keyframe (and any stationary one) reuses the previous heading.
fn displacement_headings(points: &[Vec2]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    let mut last = 0.0;
    for i in 0..points.len() {
        if let Some(next) = points.get(i + 1) {
            let d = *next - points[i];
            if d.norm() > 0.0 {
                last = d.angle();
            }
        }
        out.push(last);
    }
    // A leading stationary run takes the first real heading.
    if let Some(first_moving) = (0..points.len().saturating_sub(1))
        .find(|&i| (points[i + 1] - points[i]).norm() > 0.0)
    {
        let h = out[first_moving];
        out[..first_moving].iter_mut().for_each(|x| *x = h);
    }
    out
}

/// One ego track from every GPS fix plus one world-frame track per scooter.
pub fn build_tracks(sync: &Synchronized) -> TrackSet {
    let mut tracks = vec![AgentTrack {
        agent_id: EGO_ID.to_string(),
        kind: AgentKind::Ego,
        keyframes: sync.ego_keyframes.clone(),
    }];
    let mut warnings = Vec::new();

    let mut by_id: BTreeMap<&str, Vec<&SyncedFrame>> = BTreeMap::new();
    for f in &sync.frames {
        by_id.entry(&f.scooter_id).or_default().push(f);
    }
    for (id, frames) in by_id {
        let points: Vec<Vec2> = frames
            .iter()
            .map(|f| ego_relative_to_world(f.rel_x, f.rel_y, f.ego))
            .collect();
        let headings = displacement_headings(&points);
        let track = AgentTrack {
            agent_id: id.to_string(),
            kind: AgentKind::Escooter,
            keyframes: frames
                .iter()
                .zip(points)
                .zip(headings)
                .map(|((f, p), h)| Keyframe {
                    t: f.t,
                    pose: Pose2D::new(p, h),
                })
                .collect(),
        };
        if !track.is_simulable() {
            let msg = format!(
                "scooter `{id}` has {} keyframe(s); track kept but not simulable",
                track.keyframes.len()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        tracks.push(track);
    }
    TrackSet { tracks, warnings }
}
