//! Synthetic crossing encounter used by the examples and acceptance tests.
//!
//! The ego drives due east at the baseline speed for 25 s. One rider starts
//! 20 m ahead in the ego lane, rides slightly slower with a gentle surge, and
//! drifts across to the left between 10 s and 20 s. Both logs are sampled at
//! 1 Hz; the rider is annotated relative to the ego as a camera would see it.

use crate::geo::{local_to_geo, GeoPoint, Vec2};
use crate::ingest::{AnnotationRecord, GpsRecord};
use crate::variants::{BASELINE_SPEED, DEFAULT_DURATION};

pub const ORIGIN: GeoPoint = GeoPoint {
    lat: 39.77,
    lon: -86.16,
};
pub const SCOOTER_ID: &str = "s1";

const SCOOTER_X0: f64 = 20.0;
const SCOOTER_SPEED: f64 = 4.3;
const SURGE: f64 = 0.3;
const SURGE_PERIOD: f64 = 12.5;
const LANE_Y: f64 = -0.5;
const CROSS_WIDTH: f64 = 4.5;
const CROSS_START: f64 = 10.0;
const CROSS_TIME: f64 = 10.0;

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

pub fn ego_position(t: f64) -> Vec2 {
    Vec2::new(BASELINE_SPEED * t, 0.0)
}

pub fn scooter_position(t: f64) -> Vec2 {
    let w = std::f64::consts::TAU / SURGE_PERIOD;
    let x = SCOOTER_X0 + SCOOTER_SPEED * t + SURGE / w * (1.0 - (w * t).cos());
    let y = LANE_Y + CROSS_WIDTH * smoothstep((t - CROSS_START) / CROSS_TIME);
    Vec2::new(x, y)
}

fn sample_times() -> impl Iterator<Item = f64> {
    (0..=DEFAULT_DURATION as usize).map(|k| k as f64)
}

pub fn gps_records() -> Vec<GpsRecord> {
    sample_times()
        .map(|t| GpsRecord {
            t,
            pos: local_to_geo(ego_position(t), ORIGIN),
            heading: Some(90.0),
            speed: Some(BASELINE_SPEED),
        })
        .collect()
}

pub fn annotation_records() -> Vec<AnnotationRecord> {
    sample_times()
        .map(|t| {
            let d = scooter_position(t) - ego_position(t);
            AnnotationRecord {
                t,
                scooter_id: SCOOTER_ID.to_string(),
                rel_x: d.x,
                rel_y: -d.y,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rider_speed_in_nominal_band() {
        for k in 0..=250 {
            let t = k as f64 * 0.1;
            let v = (scooter_position(t + 1e-4) - scooter_position(t - 1e-4)).norm() / 2e-4;
            assert!((4.0..=4.8).contains(&v), "t={t}: {v}");
        }
    }

    #[test]
    fn logs_cover_duration() {
        assert_eq!(gps_records().len(), 26);
        assert_eq!(annotation_records().len(), 26);
        assert_eq!(gps_records()[0].pos, ORIGIN);
    }
}
